//! Column switching driven by an approximation of prefix complexity.
//!
//! The run reads one column of a pairing-encoded sum at a time. At stage
//! `s+1` it inspects the column it is currently reading, and if some prefix
//! of length `n <= s+1` has `K_{s+1}(prefix) < n - c_s` it advances the
//! pointer `n_s` (and the deficiency counter `c_s`), moving to the column
//! `pi(n_s + 1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::bitseq::{pair, unpair, BitSeq, BitSeqError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("alpha must be positive")]
    ZeroAlpha,
    #[error("need at least one stage")]
    ZeroStages,
    #[error("pi map {pi} needs {needs} alpha")]
    PiMismatch { pi: PiMap, needs: &'static str },
    #[error("unknown estimator {0:?} (expected lz78, test or length)")]
    UnknownEstimator(String),
    #[error("bad alpha {0:?}")]
    BadAlpha(String),
    #[error(transparent)]
    Index(#[from] BitSeqError),
}

/// A computable upper approximation of prefix complexity. `stage` is passed
/// so that estimators may improve over time; the switcher keeps a running
/// minimum either way.
pub trait Estimator {
    fn name(&self) -> &str;

    fn estimate(&self, prefix: &[bool], stage: u64) -> u64;

    /// Estimates for every prefix `bits[..n]`, `n = 0..=bits.len()`.
    fn estimate_prefixes(&self, bits: &[bool], stage: u64) -> Vec<u64> {
        (0..=bits.len()).map(|n| self.estimate(&bits[..n], stage)).collect()
    }
}

/// LZ78 phrase count `p`, scored as `ceil(p (log2 p + 1)) + 1`. A
/// compressibility proxy, not a prefix-free complexity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lz78;

/// Number of LZ78 phrases in the parse of `bits`, counting an unfinished
/// trailing phrase.
pub fn lz78_phrases(bits: &[bool]) -> u64 {
    *lz78_phrase_counts(bits).last().expect("nonempty")
}

fn lz78_phrase_counts(bits: &[bool]) -> Vec<u64> {
    // trie node -> children indexed by bit
    let mut trie: Vec<[Option<usize>; 2]> = vec![[None, None]];
    let mut counts = Vec::with_capacity(bits.len() + 1);
    counts.push(0);
    let mut complete = 0u64;
    let mut node = 0usize;
    for &b in bits {
        match trie[node][usize::from(b)] {
            Some(next) => node = next,
            None => {
                trie.push([None, None]);
                let fresh = trie.len() - 1;
                trie[node][usize::from(b)] = Some(fresh);
                complete += 1;
                node = 0;
            }
        }
        counts.push(complete + u64::from(node != 0));
    }
    counts
}

pub fn lz78_score(phrases: u64) -> u64 {
    if phrases == 0 {
        return 1;
    }
    let p = phrases as f64;
    (p * (p.log2() + 1.0)).ceil() as u64 + 1
}

impl Estimator for Lz78 {
    fn name(&self) -> &str {
        "lz78"
    }

    fn estimate(&self, prefix: &[bool], _stage: u64) -> u64 {
        lz78_score(lz78_phrases(prefix))
    }

    fn estimate_prefixes(&self, bits: &[bool], _stage: u64) -> Vec<u64> {
        lz78_phrase_counts(bits).into_iter().map(lz78_score).collect()
    }
}

/// Deterministic estimator for tests: `|s|` when at least a quarter of the
/// bits are ones, `floor(|s| / 2)` otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct DensityTest;

impl DensityTest {
    fn score(len: u64, ones: u64) -> u64 {
        if 4 * ones >= len {
            len
        } else {
            len / 2
        }
    }
}

impl Estimator for DensityTest {
    fn name(&self) -> &str {
        "test"
    }

    fn estimate(&self, prefix: &[bool], _stage: u64) -> u64 {
        let ones = prefix.iter().filter(|b| **b).count() as u64;
        Self::score(prefix.len() as u64, ones)
    }

    fn estimate_prefixes(&self, bits: &[bool], _stage: u64) -> Vec<u64> {
        let mut ones = 0;
        let mut out = vec![Self::score(0, 0)];
        for (i, b) in bits.iter().enumerate() {
            ones += u64::from(*b);
            out.push(Self::score(i as u64 + 1, ones));
        }
        out
    }
}

/// `estimate(s) = |s|`: never triggers.
#[derive(Debug, Clone, Copy, Default)]
pub struct Length;

impl Estimator for Length {
    fn name(&self) -> &str {
        "length"
    }

    fn estimate(&self, prefix: &[bool], _stage: u64) -> u64 {
        prefix.len() as u64
    }
}

pub fn builtin_estimator(name: &str) -> Result<Box<dyn Estimator>, SwitchError> {
    match name {
        "lz78" => Ok(Box::new(Lz78)),
        "test" => Ok(Box::new(DensityTest)),
        "length" => Ok(Box::new(Length)),
        other => Err(SwitchError::UnknownEstimator(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alpha {
    Finite(u64),
    Omega,
}

impl FromStr for Alpha {
    type Err = SwitchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omega" | "w" => Ok(Alpha::Omega),
            _ => match s.parse::<u64>() {
                Ok(0) => Err(SwitchError::ZeroAlpha),
                Ok(a) => Ok(Alpha::Finite(a)),
                Err(_) => Err(SwitchError::BadAlpha(s.to_string())),
            },
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Omega => f.write_str("omega"),
        }
    }
}

/// Schedules which column the pointer `n` selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PiMap {
    /// `n mod alpha`.
    ModAlpha,
    /// First coordinate of `unpair(n)`.
    UnpairFirst,
}

impl PiMap {
    pub fn default_for(alpha: Alpha) -> PiMap {
        match alpha {
            Alpha::Finite(_) => PiMap::ModAlpha,
            Alpha::Omega => PiMap::UnpairFirst,
        }
    }

    fn apply(self, alpha: Alpha, n: u64) -> u64 {
        match (self, alpha) {
            (PiMap::ModAlpha, Alpha::Finite(a)) => n % a,
            (PiMap::UnpairFirst, Alpha::Finite(a)) => unpair(n).0 % a,
            (PiMap::UnpairFirst, Alpha::Omega) | (PiMap::ModAlpha, Alpha::Omega) => unpair(n).0,
        }
    }
}

impl fmt::Display for PiMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PiMap::ModAlpha => "n mod alpha",
            PiMap::UnpairFirst => "unpair(n).0",
        })
    }
}

/// One stage of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub s: u64,
    pub n: u64,
    pub col: u64,
    pub c: u64,
    pub trig: bool,
    pub trig_n: Option<u64>,
    #[serde(serialize_with = "bit_as_int")]
    pub bit: bool,
}

fn bit_as_int<S: serde::Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwitchRun {
    pub output_bits: Vec<bool>,
    pub trace: Vec<StageRecord>,
    pub pi: PiMap,
    pub estimator: String,
}

impl SwitchRun {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec).expect("plain record"));
            out.push('\n');
        }
        out
    }

    pub fn triggers(&self) -> impl Iterator<Item = &StageRecord> {
        self.trace.iter().filter(|r| r.trig)
    }

    /// Column monitored when the stage's check ran (the column of the
    /// previous record).
    pub fn monitored(&self, s: usize) -> Option<u64> {
        s.checked_sub(1).map(|p| self.trace[p].col)
    }
}

/// Per-(column, length) running minimum of observed estimates.
#[derive(Debug, Clone, Default)]
pub struct RunningMin {
    table: BTreeMap<u64, Vec<u64>>,
}

impl RunningMin {
    pub fn observe(&mut self, column: u64, len: usize, value: u64) -> u64 {
        let row = self.table.entry(column).or_default();
        if row.len() <= len {
            row.resize(len + 1, u64::MAX);
        }
        row[len] = row[len].min(value);
        row[len]
    }

    pub fn get(&self, column: u64, len: usize) -> Option<u64> {
        self.table.get(&column).and_then(|r| r.get(len)).copied().filter(|v| *v != u64::MAX)
    }
}

struct ColumnCache<'a> {
    s: &'a BitSeq,
    bits: BTreeMap<u64, Vec<bool>>,
}

impl ColumnCache<'_> {
    fn prefix(&mut self, col: u64, len: usize) -> Result<&[bool], SwitchError> {
        let row = self.bits.entry(col).or_default();
        while row.len() < len {
            row.push(self.s.bit_at(pair(col, row.len() as u64)?));
        }
        Ok(&row[..len])
    }
}

pub fn run_switcher(
    s: &BitSeq,
    alpha: Alpha,
    est: &dyn Estimator,
    stages: u64,
    pi: PiMap,
) -> Result<SwitchRun, SwitchError> {
    if alpha == Alpha::Finite(0) {
        return Err(SwitchError::ZeroAlpha);
    }
    if stages == 0 {
        return Err(SwitchError::ZeroStages);
    }
    if pi == PiMap::ModAlpha && alpha == Alpha::Omega {
        return Err(SwitchError::PiMismatch { pi, needs: "a finite" });
    }

    let mut cache = ColumnCache { s, bits: BTreeMap::new() };
    let mut mins = RunningMin::default();
    let mut trace = Vec::with_capacity(stages as usize);
    let mut output = Vec::with_capacity(stages as usize);
    let (mut n, mut c) = (0u64, 0u64);

    for stage in 0..stages {
        let mut trig_n = None;
        if stage > 0 {
            let i = pi.apply(alpha, n);
            let prefix = cache.prefix(i, stage as usize)?;
            let estimates = est.estimate_prefixes(prefix, stage);
            for (len, value) in estimates.into_iter().enumerate() {
                let k = mins.observe(i, len, value);
                if len >= 1 && trig_n.is_none() && k.saturating_add(c) < len as u64 {
                    trig_n = Some(len as u64);
                }
            }
            if trig_n.is_some() {
                n += 1;
                c += 1;
            }
        }
        let col = pi.apply(alpha, n);
        let bit = s.bit_at(pair(col, stage)?);
        output.push(bit);
        trace.push(StageRecord { s: stage, n, col, c, trig: trig_n.is_some(), trig_n, bit });
    }

    Ok(SwitchRun { output_bits: output, trace, pi, estimator: est.name().to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitseq::direct_sum;
    use proptest::prelude::*;

    fn bits(s: &str) -> Vec<bool> {
        s.bytes().map(|b| b == b'1').collect()
    }

    #[test]
    fn lz78_examples() {
        assert_eq!(Lz78.estimate(&[], 0), 1);
        // 0 | 00 | 000 | 0000 | 00000 | 0
        assert_eq!(lz78_phrases(&[false; 16]), 6);
        assert_eq!(Lz78.estimate(&[false; 16], 0), 23);
        assert_eq!(lz78_phrases(&bits("1011010")), 5);
        let prng = BitSeq::prng(1).prefix(16);
        assert_eq!(lz78_phrases(&prng), 8);
        assert_eq!(Lz78.estimate(&prng, 0), 33);
        // zero prefixes dip below their length at 34 and stay below from 40 on
        assert_eq!(Lz78.estimate(&[false; 33], 0), 33);
        for n in (34..37).chain(40..2000) {
            assert!(Lz78.estimate(&vec![false; n], 0) < n as u64, "n={n}");
        }
    }

    #[test]
    fn lz78_batch_matches_single() {
        let seq = BitSeq::prng(9).prefix(200);
        let batch = Lz78.estimate_prefixes(&seq, 0);
        for n in 0..=seq.len() {
            assert_eq!(batch[n], Lz78.estimate(&seq[..n], 0));
        }
    }

    #[test]
    fn zero_column_then_periodic() {
        let s = direct_sum(vec![BitSeq::zeros(), BitSeq::periodic(vec![false, true])]);
        let run = run_switcher(&s, Alpha::Finite(2), &DensityTest, 64, PiMap::ModAlpha).unwrap();
        assert_eq!(run.trace.len(), 64);
        let trig: Vec<u64> = run.triggers().map(|r| r.s).collect();
        assert_eq!(trig, vec![1]);
        assert_eq!(run.trace[1].trig_n, Some(1));
        assert_eq!(run.trace[63].col, 1);
        assert_eq!(run.output_bits[48..], BitSeq::periodic(vec![false, true]).prefix(64)[48..]);
    }

    #[test]
    fn length_estimator_never_triggers() {
        let s = direct_sum(vec![BitSeq::zeros(), BitSeq::ones()]);
        let run = run_switcher(&s, Alpha::Finite(2), &Length, 50, PiMap::ModAlpha).unwrap();
        assert_eq!(run.triggers().count(), 0);
        assert!(run.output_bits.iter().all(|b| !b));
    }

    #[test]
    fn errors() {
        let s = BitSeq::zeros();
        assert_eq!(run_switcher(&s, Alpha::Finite(0), &Length, 5, PiMap::ModAlpha), Err(SwitchError::ZeroAlpha));
        assert_eq!(run_switcher(&s, Alpha::Finite(1), &Length, 0, PiMap::ModAlpha), Err(SwitchError::ZeroStages));
        assert!(run_switcher(&s, Alpha::Omega, &Length, 5, PiMap::ModAlpha).is_err());
        assert_eq!("0".parse::<Alpha>(), Err(SwitchError::ZeroAlpha));
        assert_eq!("omega".parse::<Alpha>(), Ok(Alpha::Omega));
        assert!(builtin_estimator("zip").is_err());
    }

    #[test]
    fn jsonl_keys_in_order() {
        let s = direct_sum(vec![BitSeq::zeros(), BitSeq::periodic(vec![false, true])]);
        let run = run_switcher(&s, Alpha::Finite(2), &DensityTest, 3, PiMap::ModAlpha).unwrap();
        let text = run.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"s":0,"n":0,"col":0,"c":0,"trig":false,"trig_n":null,"bit":0}"#);
        assert_eq!(lines[1], r#"{"s":1,"n":1,"col":1,"c":1,"trig":true,"trig_n":1,"bit":1}"#);
    }

    #[test]
    fn omega_reads_rule_columns() {
        let s = crate::bitseq::rule_sum(crate::bitseq::ColumnRule::PrngFamily { seed: 3 });
        let run = run_switcher(&s, Alpha::Omega, &Lz78, 300, PiMap::UnpairFirst).unwrap();
        for r in &run.trace {
            assert_eq!(r.col, unpair(r.n).0);
        }
    }

    struct Stagey;

    impl Estimator for Stagey {
        fn name(&self) -> &str {
            "stagey"
        }

        fn estimate(&self, prefix: &[bool], stage: u64) -> u64 {
            prefix.len() as u64 + (stage * 7919 + prefix.len() as u64) % 5
        }
    }

    #[test]
    fn running_min_non_increasing() {
        let mut mins = RunningMin::default();
        let prefix = [true, false, true];
        let mut last = u64::MAX;
        for stage in 0..40 {
            let k = mins.observe(0, 3, Stagey.estimate(&prefix, stage));
            assert!(k <= last);
            last = k;
        }
        assert_eq!(mins.get(0, 3), Some(3));
        assert_eq!(mins.get(1, 3), None);
    }

    struct Deficient(u64);

    impl Estimator for Deficient {
        fn name(&self) -> &str {
            "deficient"
        }

        fn estimate(&self, prefix: &[bool], _stage: u64) -> u64 {
            (prefix.len() as u64).saturating_sub(self.0)
        }
    }

    proptest! {
        #[test]
        fn trigger_step_coupling(seed in 0u64..500, alpha in 1u64..5, stages in 1u64..120) {
            let cols = (0..alpha).map(|i| if i % 2 == 0 { BitSeq::prng(seed + i) } else { BitSeq::zeros() }).collect();
            let s = direct_sum(cols);
            let run = run_switcher(&s, Alpha::Finite(alpha), &DensityTest, stages, PiMap::ModAlpha).unwrap();
            prop_assert_eq!(run.trace.len() as u64, stages);
            prop_assert!(!run.trace[0].trig);
            for w in run.trace.windows(2) {
                let step = w[1].n == w[0].n + 1;
                prop_assert_eq!(w[1].s, w[0].s + 1);
                prop_assert_eq!(w[1].trig, step);
                prop_assert_eq!(w[1].trig, w[1].c == w[0].c + 1);
                if !w[1].trig {
                    prop_assert_eq!((w[1].n, w[1].c), (w[0].n, w[0].c));
                }
            }
            for r in &run.trace {
                prop_assert_eq!(r.col, r.n % alpha);
                prop_assert_eq!(r.bit, s.bit_at(pair(r.col, r.s).unwrap()));
            }
        }

        #[test]
        fn mod_alpha_revisits_every_column(alpha in 1u64..8, start in 0u64..1000) {
            let seen: std::collections::BTreeSet<u64> = (start..start + alpha).map(|n| PiMap::ModAlpha.apply(Alpha::Finite(alpha), n)).collect();
            prop_assert_eq!(seen.len() as u64, alpha);
        }

        #[test]
        fn settling_under_bounded_deficiency(cap in 0u64..6, stages in 1u64..80) {
            let s = direct_sum(vec![BitSeq::zeros(), BitSeq::ones()]);
            let run = run_switcher(&s, Alpha::Finite(2), &Deficient(cap), stages, PiMap::ModAlpha).unwrap();
            prop_assert!(run.triggers().count() as u64 <= cap + 1);
        }
    }
}
