//! Finite tables of functions `f: N -> N`, the increasing selection `g`
//! built from an unbounded `f`, and open classes given as finite unions of
//! cylinder constraints, with exact dyadic measure.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitseq::BitSeq;

/// Most distinct coordinates `measure` will split on.
pub const COORDINATE_CAP: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqFunError {
    #[error("{count} distinct coordinates, above the cap {cap}")]
    CoordinateCap { count: usize, cap: usize },
    #[error("coordinate map is not strictly increasing at position {0}")]
    NotIncreasing(usize),
    #[error("coordinate {coord} is outside a map of length {len}")]
    CoordinateOutOfRange { coord: u64, len: usize },
    #[error("level {0} is above 64")]
    LevelTooLarge(u32),
    #[error("bad class file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqFun {
    pub table: Vec<u64>,
    pub unbounded_hint: bool,
}

impl SeqFun {
    pub fn new(table: Vec<u64>) -> Self {
        SeqFun { table, unbounded_hint: true }
    }

    pub fn at(&self, k: usize) -> Option<u64> {
        self.table.get(k).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GSequence {
    pub values: Vec<u64>,
    /// Index into the table of each value.
    pub positions: Vec<usize>,
    /// The table ran out before `count` values were found.
    pub truncated: bool,
}

/// `g(0) = f(0)`, `g(j+1) = f(k)` for the least `k` with `f(k) > g(j)`.
pub fn g_from_f(f: &SeqFun, count: usize) -> GSequence {
    let mut out = GSequence { values: Vec::new(), positions: Vec::new(), truncated: false };
    let mut k = 0usize;
    while out.values.len() < count {
        let last = out.values.last().copied();
        let next = (k..f.table.len()).find(|i| last.is_none_or(|g| f.table[*i] > g));
        match next {
            Some(i) => {
                out.values.push(f.table[i]);
                out.positions.push(i);
                k = i + 1;
            }
            None => {
                out.truncated = true;
                break;
            }
        }
    }
    out
}

/// Least `m` with `f(m) = value`.
pub fn f_inverse(f: &SeqFun, value: u64) -> Option<usize> {
    f.table.iter().position(|v| *v == value)
}

/// A cylinder: every sequence agreeing with the map. Serialized as an
/// object from decimal coordinates to 0/1 (booleans are accepted on input).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConstraintSet(pub BTreeMap<u64, bool>);

#[derive(Deserialize)]
#[serde(untagged)]
enum BitRepr {
    Bool(bool),
    Int(u8),
}

impl Serialize for ConstraintSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.0.iter().map(|(k, b)| (k.to_string(), u8::from(*b))))
    }
}

impl<'de> Deserialize<'de> for ConstraintSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<u64, BitRepr>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            let b = match v {
                BitRepr::Bool(b) => b,
                BitRepr::Int(0) => false,
                BitRepr::Int(1) => true,
                BitRepr::Int(x) => return Err(serde::de::Error::custom(format!("bit {x} at coordinate {k}"))),
            };
            out.insert(k, b);
        }
        Ok(ConstraintSet(out))
    }
}

impl ConstraintSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, bool)>) -> Self {
        ConstraintSet(pairs.into_iter().collect())
    }

    fn satisfied(&self, mut bit: impl FnMut(u64) -> Result<bool, SeqFunError>) -> Result<bool, SeqFunError> {
        for (k, b) in &self.0 {
            if bit(*k)? != *b {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A finite union of cylinders, tagged with the level `n` of a test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaLevel {
    pub level: u32,
    pub constraints: Vec<ConstraintSet>,
}

impl SigmaLevel {
    pub fn new(level: u32, constraints: Vec<ConstraintSet>) -> Self {
        SigmaLevel { level, constraints }
    }

    pub fn bound(&self) -> Result<Dyadic, SeqFunError> {
        if self.level > 64 {
            return Err(SeqFunError::LevelTooLarge(self.level));
        }
        Ok(Dyadic::new(1, self.level))
    }

    /// `measure <= 2^-level`.
    pub fn within_bound(&self) -> Result<bool, SeqFunError> {
        Ok(measure(self)? <= self.bound()?)
    }

    pub fn coordinates(&self) -> BTreeSet<u64> {
        self.constraints.iter().flat_map(|c| c.0.keys().copied()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, SeqFunError> {
        serde_json::from_str(text).map_err(|e| SeqFunError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// `num / 2^exp`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Dyadic {
    pub num: u64,
    pub exp: u32,
}

impl Dyadic {
    pub fn new(mut num: u64, mut exp: u32) -> Self {
        if num == 0 {
            return Dyadic { num: 0, exp: 0 };
        }
        while exp > 0 && num.is_multiple_of(2) {
            num /= 2;
            exp -= 1;
        }
        Dyadic { num, exp }
    }

    pub fn zero() -> Self {
        Dyadic::new(0, 0)
    }

    pub fn one() -> Self {
        Dyadic::new(1, 0)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exp.max(other.exp);
        let a = u128::from(self.num) << (e - self.exp);
        let b = u128::from(other.num) << (e - other.exp);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exp {
            0 => write!(f, "{}", self.num),
            e if e < 64 => write!(f, "{}/{}", self.num, 1u64 << e),
            e => write!(f, "{}/2^{e}", self.num),
        }
    }
}

/// Exact measure of the union, by splitting on one coordinate at a time.
pub fn measure(level: &SigmaLevel) -> Result<Dyadic, SeqFunError> {
    let coords: Vec<u64> = level.coordinates().into_iter().collect();
    if coords.len() > COORDINATE_CAP {
        return Err(SeqFunError::CoordinateCap { count: coords.len(), cap: COORDINATE_CAP });
    }
    let sets: Vec<&BTreeMap<u64, bool>> = level.constraints.iter().map(|c| &c.0).collect();
    let hits = count_models(&sets, &coords);
    Ok(Dyadic::new(hits, coords.len() as u32))
}

fn count_models(sets: &[&BTreeMap<u64, bool>], coords: &[u64]) -> u64 {
    if sets.is_empty() {
        return 0;
    }
    if sets.iter().any(|s| s.is_empty()) {
        return 1 << coords.len();
    }
    let (x, rest) = coords.split_first().expect("a live constraint mentions a coordinate");
    let mut total = 0;
    for b in [false, true] {
        let reduced: Vec<BTreeMap<u64, bool>> = sets
            .iter()
            .filter(|s| s.get(x).is_none_or(|v| *v == b))
            .map(|s| {
                let mut s = (*s).clone();
                s.remove(x);
                s
            })
            .collect();
        let refs: Vec<&BTreeMap<u64, bool>> = reduced.iter().collect();
        total += count_models(&refs, rest);
    }
    total
}

/// A bit source that may be partial.
pub trait Bits {
    fn bit(&self, i: u64) -> Result<bool, SeqFunError>;
}

impl Bits for BitSeq {
    fn bit(&self, i: u64) -> Result<bool, SeqFunError> {
        Ok(self.bit_at(i))
    }
}

/// `B ∘ h`: position `j` reads `B(h(j))`; positions past the table of `h`
/// are errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composed {
    pub inner: BitSeq,
    pub h: Vec<u64>,
}

impl Composed {
    pub fn new(inner: BitSeq, h: Vec<u64>) -> Self {
        Composed { inner, h }
    }
}

impl Bits for Composed {
    fn bit(&self, j: u64) -> Result<bool, SeqFunError> {
        let pos = usize::try_from(j).ok().and_then(|j| self.h.get(j));
        match pos {
            Some(i) => Ok(self.inner.bit_at(*i)),
            None => Err(SeqFunError::CoordinateOutOfRange { coord: j, len: self.h.len() }),
        }
    }
}

pub fn member(b: &dyn Bits, level: &SigmaLevel) -> Result<bool, SeqFunError> {
    for c in &level.constraints {
        if c.satisfied(|k| b.bit(k))? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `{B : B ∘ h ∈ U}` as a constraint union: coordinate `j` becomes `h(j)`.
pub fn pullback(u: &SigmaLevel, h: &[u64]) -> Result<SigmaLevel, SeqFunError> {
    if let Some(i) = h.windows(2).position(|w| w[0] >= w[1]) {
        return Err(SeqFunError::NotIncreasing(i + 1));
    }
    let mut out = Vec::with_capacity(u.constraints.len());
    for c in &u.constraints {
        let mut mapped = BTreeMap::new();
        for (j, b) in &c.0 {
            let target = usize::try_from(*j).ok().and_then(|j| h.get(j));
            match target {
                Some(t) => mapped.insert(*t, *b),
                None => return Err(SeqFunError::CoordinateOutOfRange { coord: *j, len: h.len() }),
            };
        }
        out.push(ConstraintSet(mapped));
    }
    Ok(SigmaLevel { level: u.level, constraints: out })
}

/// `f^inv ∘ g` on the first `count` values of `g`; `None` when the table
/// runs out.
pub fn selection_map(f: &SeqFun, count: usize) -> Option<Vec<u64>> {
    let g = g_from_f(f, count);
    if g.truncated {
        return None;
    }
    g.values.iter().map(|v| f_inverse(f, *v).map(|m| m as u64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cs(pairs: &[(u64, bool)]) -> ConstraintSet {
        ConstraintSet::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn g_examples() {
        let f = SeqFun::new(vec![3, 1, 5, 0, 7]);
        let g = g_from_f(&f, 3);
        assert_eq!(g.values, vec![3, 5, 7]);
        assert_eq!(g.positions, vec![0, 2, 4]);
        assert!(!g.truncated);
        let g = g_from_f(&f, 4);
        assert_eq!(g.values, vec![3, 5, 7]);
        assert!(g.truncated);
        let id = SeqFun::new((0..20).collect());
        assert_eq!(g_from_f(&id, 20).values, (0..20).collect::<Vec<_>>());
        assert!(g_from_f(&SeqFun::new(vec![]), 1).truncated);
    }

    #[test]
    fn f_inverse_examples() {
        let f = SeqFun::new(vec![3, 1, 5]);
        assert_eq!(f_inverse(&f, 5), Some(2));
        assert_eq!(f_inverse(&f, 4), None);
        assert_eq!(f_inverse(&SeqFun::new(vec![2, 2]), 2), Some(0));
    }

    #[test]
    fn pullback_examples() {
        let h = [0, 2, 4];
        let u = SigmaLevel::new(1, vec![cs(&[(0, true)])]);
        assert_eq!(pullback(&u, &h).unwrap().constraints, vec![cs(&[(0, true)])]);
        let u = SigmaLevel::new(2, vec![cs(&[(0, true), (1, false)])]);
        let v = pullback(&u, &h).unwrap();
        assert_eq!(v.constraints, vec![cs(&[(0, true), (2, false)])]);
        assert_eq!(v.level, 2);
        assert!(pullback(&SigmaLevel::new(0, vec![]), &h).unwrap().constraints.is_empty());
        assert_eq!(pullback(&u, &[0, 0]), Err(SeqFunError::NotIncreasing(1)));
        let far = SigmaLevel::new(0, vec![cs(&[(3, true)])]);
        assert_eq!(pullback(&far, &h), Err(SeqFunError::CoordinateOutOfRange { coord: 3, len: 3 }));
    }

    #[test]
    fn measure_examples() {
        let m = |c: Vec<ConstraintSet>| measure(&SigmaLevel::new(0, c)).unwrap();
        assert_eq!(m(vec![cs(&[(0, true)])]), Dyadic::new(1, 1));
        assert_eq!(m(vec![cs(&[(0, true)]), cs(&[(0, false)])]), Dyadic::one());
        assert_eq!(m(vec![cs(&[(0, true)]), cs(&[(1, true)])]), Dyadic::new(3, 2));
        assert_eq!(m(vec![]), Dyadic::zero());
        assert_eq!(m(vec![cs(&[])]), Dyadic::one());
        assert_eq!(Dyadic::new(3, 2).to_string(), "3/4");
        assert_eq!(Dyadic::new(4, 3).to_string(), "1/2");
        let wide = SigmaLevel::new(0, vec![ConstraintSet::from_pairs((0..25).map(|k| (k, true)))]);
        assert_eq!(measure(&wide), Err(SeqFunError::CoordinateCap { count: 25, cap: 24 }));
    }

    #[test]
    fn bound_check() {
        let u = SigmaLevel::new(2, vec![cs(&[(0, true), (1, true)])]);
        assert!(u.within_bound().unwrap());
        let u = SigmaLevel::new(2, vec![cs(&[(0, true)])]);
        assert!(!u.within_bound().unwrap());
        assert!(SigmaLevel::new(65, vec![]).bound().is_err());
    }

    #[test]
    fn member_examples() {
        let lvl = |c| SigmaLevel::new(0, vec![c]);
        assert!(member(&BitSeq::zeros(), &lvl(cs(&[(0, false)]))).unwrap());
        assert!(!member(&BitSeq::zeros(), &lvl(cs(&[(0, true)]))).unwrap());
        let p = BitSeq::periodic(vec![false, true]);
        assert!(member(&p, &lvl(cs(&[(0, false), (3, true)]))).unwrap());
    }

    #[test]
    fn composed_reads_through_h() {
        let c = Composed::new(BitSeq::support([2, 4]), vec![0, 2, 4]);
        assert_eq!(c.bit(1), Ok(true));
        assert_eq!(c.bit(0), Ok(false));
        assert!(c.bit(3).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"level":3,"constraints":[{"0":1,"5":0},{"2":1}]}"#;
        let u = SigmaLevel::from_json(text).unwrap();
        assert_eq!(u.constraints[0], cs(&[(0, true), (5, false)]));
        assert_eq!(u.to_json(), text);
        let bools = r#"{"level":3,"constraints":[{"0":true,"5":false},{"2":true}]}"#;
        assert_eq!(SigmaLevel::from_json(bools).unwrap(), u);
        assert!(SigmaLevel::from_json(r#"{"level":0,"constraints":[{"0":2}]}"#).is_err());
        assert!(SigmaLevel::from_json(r#"{"level":0,"constraints":[{"x":1}]}"#).is_err());
    }

    fn brute(level: &SigmaLevel) -> Dyadic {
        let coords: Vec<u64> = level.coordinates().into_iter().collect();
        let k = coords.len();
        let hits = (0..1u64 << k)
            .filter(|m| {
                level.constraints.iter().any(|c| {
                    c.0.iter().all(|(x, b)| {
                        let pos = coords.binary_search(x).unwrap();
                        (m >> pos & 1 == 1) == *b
                    })
                })
            })
            .count() as u64;
        Dyadic::new(hits, k as u32)
    }

    fn arb_level() -> impl Strategy<Value = SigmaLevel> {
        let set = prop::collection::btree_map(0u64..12, any::<bool>(), 0..5).prop_map(ConstraintSet);
        (0u32..4, prop::collection::vec(set, 0..7)).prop_map(|(l, c)| SigmaLevel::new(l, c))
    }

    proptest! {
        #[test]
        fn measure_matches_enumeration(u in arb_level()) {
            prop_assert_eq!(measure(&u).unwrap(), brute(&u));
        }

        #[test]
        fn pullback_preserves_measure_and_membership(
            u in arb_level(),
            gaps in prop::collection::vec(1u64..4, 12),
            seed in any::<u64>(),
        ) {
            let h: Vec<u64> = gaps.iter().scan(0u64, |acc, g| { *acc += g; Some(*acc) }).collect();
            let v = pullback(&u, &h).unwrap();
            prop_assert!(measure(&v).unwrap() <= measure(&u).unwrap());
            let b = BitSeq::prng(seed);
            prop_assert_eq!(member(&b, &v).unwrap(), member(&Composed::new(b, h), &u).unwrap());
        }

        #[test]
        fn g_is_increasing_within_range(table in prop::collection::vec(0u64..1000, 1..256)) {
            let f = SeqFun::new(table.clone());
            let g = g_from_f(&f, 64);
            prop_assert!(g.values.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(g.values.iter().all(|v| table.contains(v)));
            for v in &table {
                prop_assert_eq!(f.at(f_inverse(&f, *v).unwrap()), Some(*v));
            }
        }
    }
}
