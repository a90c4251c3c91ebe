//! Lazily evaluated infinite binary sequences and the coding operators on
//! them: parity join, pairing direct sums, joins along a decidable set,
//! column extraction and finite patches.
//!
//! A [`BitSeq`] is a descriptor; [`BitSeq::bit_at`] computes any bit on
//! demand. Descriptors share children through `Arc`, so cloning is cheap.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::formula::{Cursor, FormulaError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitSeqError {
    #[error("pairing overflow for <{0}, {1}>")]
    PairOverflow(u64, u64),
    #[error("parity encoding has only columns 0 and 1, got {0}")]
    ParityColumn(u64),
    #[error("bad sequence literal: {0}")]
    Literal(String),
}

/// Cantor pairing `<i, n> = (i + n)(i + n + 1) / 2 + n`.
pub fn pair(i: u64, n: u64) -> Result<u64, BitSeqError> {
    let s = i.checked_add(n).ok_or(BitSeqError::PairOverflow(i, n))?;
    let tri = if s % 2 == 0 {
        (s / 2).checked_mul(s + 1)
    } else {
        s.checked_mul(s.div_ceil(2))
    };
    tri.and_then(|t| t.checked_add(n)).ok_or(BitSeqError::PairOverflow(i, n))
}

/// Inverse of [`pair`].
pub fn unpair(k: u64) -> (u64, u64) {
    // largest w with w(w+1)/2 <= k
    let mut w = (((8.0 * k as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    let tri = |w: u64| u128::from(w) * u128::from(w + 1) / 2;
    while tri(w) > u128::from(k) {
        w -= 1;
    }
    while tri(w + 1) <= u128::from(k) {
        w += 1;
    }
    let n = k - tri(w) as u64;
    (w - n, n)
}

fn pair_or_panic(i: u64, n: u64) -> u64 {
    pair(i, n).unwrap_or_else(|e| panic!("{e}"))
}

/// SplitMix64 output number `index` for a generator seeded with `seed`,
/// computed directly from the counter.
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Decidable set of naturals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSet {
    Evens,
    Odds,
    FiniteSet { values: Vec<u64> },
    /// `{a*k + b : k >= 0}`; finite (just `{b}`) when `a == 0`.
    ArithmeticProgression { a: u64, b: u64 },
    RangeOfTable { values: Vec<u64> },
}

impl IndexSet {
    pub fn finite(values: impl IntoIterator<Item = u64>) -> Self {
        let mut values: Vec<u64> = values.into_iter().collect();
        values.sort_unstable();
        values.dedup();
        IndexSet::FiniteSet { values }
    }

    pub fn range_of_table(table: &[u64]) -> Self {
        let mut values = table.to_vec();
        values.sort_unstable();
        values.dedup();
        IndexSet::RangeOfTable { values }
    }

    pub fn contains(&self, m: u64) -> bool {
        match self {
            IndexSet::Evens => m.is_multiple_of(2),
            IndexSet::Odds => m % 2 == 1,
            IndexSet::FiniteSet { values } | IndexSet::RangeOfTable { values } => values.binary_search(&m).is_ok(),
            IndexSet::ArithmeticProgression { a: 0, b } => m == *b,
            IndexSet::ArithmeticProgression { a, b } => m >= *b && (m - b).is_multiple_of(*a),
        }
    }

    /// Number of elements strictly below `m`.
    pub fn rank(&self, m: u64) -> u64 {
        match self {
            IndexSet::Evens => m.div_ceil(2),
            IndexSet::Odds => m / 2,
            IndexSet::FiniteSet { values } | IndexSet::RangeOfTable { values } => {
                values.partition_point(|v| *v < m) as u64
            }
            IndexSet::ArithmeticProgression { a: 0, b } => u64::from(m > *b),
            IndexSet::ArithmeticProgression { a, b } => {
                if m <= *b {
                    0
                } else {
                    (m - b - 1) / a + 1
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(
            self,
            IndexSet::FiniteSet { .. } | IndexSet::RangeOfTable { .. } | IndexSet::ArithmeticProgression { a: 0, .. }
        )
    }

    /// Elements in increasing order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        match self {
            IndexSet::Evens => Box::new((0..).step_by(2)),
            IndexSet::Odds => Box::new((1..).step_by(2)),
            IndexSet::FiniteSet { values } | IndexSet::RangeOfTable { values } => Box::new(values.iter().copied()),
            IndexSet::ArithmeticProgression { a: 0, b } => Box::new(std::iter::once(*b)),
            IndexSet::ArithmeticProgression { a, b } => {
                let (a, b) = (*a, *b);
                Box::new((0..).map_while(move |k: u64| k.checked_mul(a).and_then(|x| x.checked_add(b))))
            }
        }
    }
}

/// How columns of a sum are laid out inside one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Parity,
    Pairing,
}

/// Column `i` of a rule-based infinite direct sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRule {
    /// Column `i` is `Prng(seed + i)`.
    PrngFamily { seed: u64 },
    /// Column `i` is `cols[i mod len]`.
    Cycle(Vec<BitSeq>),
}

impl ColumnRule {
    pub fn column(&self, i: u64) -> BitSeq {
        match self {
            ColumnRule::PrngFamily { seed } => BitSeq::prng(seed.wrapping_add(i)),
            ColumnRule::Cycle(cols) if cols.is_empty() => BitSeq::zeros(),
            ColumnRule::Cycle(cols) => cols[(i % cols.len() as u64) as usize].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    FiniteSupport(Vec<u64>),
    AllZeros,
    AllOnes,
    Periodic(Vec<bool>),
    Prng(u64),
    Join(BitSeq, BitSeq),
    DirectSum(Vec<BitSeq>),
    RuleSum(ColumnRule),
    JoinAlong(IndexSet, BitSeq, BitSeq),
    Column(BitSeq, u64, Encoding),
    SomeToMany(BitSeq),
    Patch(BitSeq, BTreeMap<u64, bool>),
}

/// An infinite binary sequence given by a generator descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSeq(Arc<Node>);

impl BitSeq {
    fn wrap(node: Node) -> Self {
        BitSeq(Arc::new(node))
    }

    pub fn zeros() -> Self {
        Self::wrap(Node::AllZeros)
    }

    pub fn ones() -> Self {
        Self::wrap(Node::AllOnes)
    }

    pub fn support(indices: impl IntoIterator<Item = u64>) -> Self {
        let mut v: Vec<u64> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self::wrap(Node::FiniteSupport(v))
    }

    /// Repeats `pattern` forever; an empty pattern reads as all zeros.
    pub fn periodic(pattern: Vec<bool>) -> Self {
        if pattern.is_empty() {
            return Self::zeros();
        }
        Self::wrap(Node::Periodic(pattern))
    }

    /// Stand-in for an arbitrary random real: bit `i` is the low bit of the
    /// `i`-th SplitMix64 output.
    pub fn prng(seed: u64) -> Self {
        Self::wrap(Node::Prng(seed))
    }

    pub fn bit_at(&self, i: u64) -> bool {
        match &*self.0 {
            Node::FiniteSupport(s) => s.binary_search(&i).is_ok(),
            Node::AllZeros => false,
            Node::AllOnes => true,
            Node::Periodic(p) => p[(i % p.len() as u64) as usize],
            Node::Prng(seed) => splitmix64(*seed, i) & 1 == 1,
            Node::Join(a, b) => {
                if i.is_multiple_of(2) {
                    a.bit_at(i / 2)
                } else {
                    b.bit_at(i / 2)
                }
            }
            Node::DirectSum(cols) => {
                let (c, n) = unpair(i);
                cols.get(c as usize).is_some_and(|s| s.bit_at(n))
            }
            Node::RuleSum(rule) => {
                let (c, n) = unpair(i);
                rule.column(c).bit_at(n)
            }
            Node::JoinAlong(z, off, on) => {
                let r = z.rank(i);
                if z.contains(i) {
                    on.bit_at(r)
                } else {
                    off.bit_at(i - r)
                }
            }
            Node::Column(s, c, Encoding::Parity) => s.bit_at(2 * i + c),
            Node::Column(s, c, Encoding::Pairing) => s.bit_at(pair_or_panic(*c, i)),
            Node::SomeToMany(b) => {
                let (outer, n) = unpair(i);
                let (col, _copy) = unpair(outer);
                b.bit_at(pair_or_panic(col, n))
            }
            Node::Patch(base, overrides) => match overrides.get(&i) {
                Some(b) => *b,
                None => base.bit_at(i),
            },
        }
    }

    pub fn prefix(&self, len: u64) -> Vec<bool> {
        (0..len).map(|i| self.bit_at(i)).collect()
    }

    /// Indices of set bits below `bound`.
    pub fn support_below(&self, bound: u64) -> Vec<u64> {
        (0..bound).filter(|i| self.bit_at(*i)).collect()
    }

    /// Overrides take precedence over this sequence at exactly their indices.
    pub fn patched(&self, overrides: BTreeMap<u64, bool>) -> BitSeq {
        if overrides.is_empty() {
            return self.clone();
        }
        Self::wrap(Node::Patch(self.clone(), overrides))
    }
}

/// `A ⊕ B`: `A` on even positions, `B` on odd positions.
pub fn join(a: &BitSeq, b: &BitSeq) -> BitSeq {
    BitSeq::wrap(Node::Join(a.clone(), b.clone()))
}

/// Pairing direct sum of finitely many columns; columns past the end read as
/// zeros.
pub fn direct_sum(cols: Vec<BitSeq>) -> BitSeq {
    if cols.is_empty() {
        return BitSeq::zeros();
    }
    BitSeq::wrap(Node::DirectSum(cols))
}

/// Pairing direct sum with infinitely many columns produced by a rule.
pub fn rule_sum(rule: ColumnRule) -> BitSeq {
    BitSeq::wrap(Node::RuleSum(rule))
}

/// The sequence whose restriction to `z` is `on_z` and whose restriction to
/// the complement of `z` is `off_z`.
pub fn join_along(z: &IndexSet, off_z: &BitSeq, on_z: &BitSeq) -> BitSeq {
    BitSeq::wrap(Node::JoinAlong(z.clone(), off_z.clone(), on_z.clone()))
}

pub fn column(s: &BitSeq, i: u64, encoding: Encoding) -> Result<BitSeq, BitSeqError> {
    if encoding == Encoding::Parity && i >= 2 {
        return Err(BitSeqError::ParityColumn(i));
    }
    Ok(BitSeq::wrap(Node::Column(s.clone(), i, encoding)))
}

/// Copies every column `i` of `b` into all columns `<i, j>` of the result.
/// Each output bit reads exactly one input bit.
pub fn some_to_many(b: &BitSeq) -> BitSeq {
    BitSeq::wrap(Node::SomeToMany(b.clone()))
}

/// Position of a global index inside a column layout, and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum Layout {
    /// Two columns on even and odd positions.
    Parity,
    /// `columns` pairing columns; bits of higher columns read as zero.
    Pairing { columns: u64 },
}

impl Layout {
    /// Parity for two columns, pairing otherwise.
    pub fn for_columns(columns: u64) -> Self {
        if columns == 2 {
            Layout::Parity
        } else {
            Layout::Pairing { columns }
        }
    }

    pub fn columns(&self) -> u64 {
        match self {
            Layout::Parity => 2,
            Layout::Pairing { columns } => *columns,
        }
    }

    /// `(column, position)` of a global index.
    pub fn locate(&self, index: u64) -> (u64, u64) {
        match self {
            Layout::Parity => (index % 2, index / 2),
            Layout::Pairing { .. } => unpair(index),
        }
    }

    pub fn index(&self, col: u64, pos: u64) -> u64 {
        match self {
            Layout::Parity => 2 * pos + col,
            Layout::Pairing { .. } => pair_or_panic(col, pos),
        }
    }

    pub fn assemble(&self, cols: Vec<BitSeq>) -> BitSeq {
        match self {
            Layout::Parity => join(&cols[0], &cols[1]),
            Layout::Pairing { .. } => direct_sum(cols),
        }
    }
}

impl fmt::Display for BitSeq {
    /// Sequence literal for the descriptors the literal grammar covers;
    /// other descriptors print a bracketed tag.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::AllZeros => f.write_str("zeros"),
            Node::AllOnes => f.write_str("ones"),
            Node::Periodic(p) => {
                f.write_str("periodic:")?;
                p.iter().try_for_each(|b| write!(f, "{}", u8::from(*b)))
            }
            Node::Prng(seed) => write!(f, "prng:{seed}"),
            Node::FiniteSupport(s) => {
                let items: Vec<String> = s.iter().map(u64::to_string).collect();
                write!(f, "support:{}", items.join(","))
            }
            Node::Join(a, b) => write!(f, "join({a},{b})"),
            Node::DirectSum(cols) => {
                let items: Vec<String> = cols.iter().map(BitSeq::to_string).collect();
                write!(f, "sum({})", items.join(";"))
            }
            Node::RuleSum(ColumnRule::PrngFamily { seed }) => write!(f, "<prng-family:{seed}>"),
            Node::RuleSum(ColumnRule::Cycle(cols)) => {
                let items: Vec<String> = cols.iter().map(BitSeq::to_string).collect();
                write!(f, "<cycle:{}>", items.join(";"))
            }
            Node::JoinAlong(z, a, b) => write!(f, "<join-along:{z:?}:{a}:{b}>"),
            Node::Column(s, c, e) => write!(f, "<column:{c}:{e:?}:{s}>"),
            Node::SomeToMany(b) => write!(f, "<some-to-many:{b}>"),
            Node::Patch(base, o) => write!(f, "<patch:{base}:{} overrides>", o.len()),
        }
    }
}

/// Parses a sequence literal:
///
/// ```text
/// seq := "zeros" | "ones" | "periodic:" bits | "prng:" nat
///      | "support:" nat ("," nat)* | "support:"
///      | "join(" seq "," seq ")" | "sum(" seq (";" seq)* ")" | "sum()"
/// ```
pub fn parse_seq(text: &str) -> Result<BitSeq, BitSeqError> {
    let mut cur = Cursor::new(text);
    let s = seq(&mut cur).map_err(lit_err)?;
    if !cur.at_end() {
        return Err(BitSeqError::Literal(format!("trailing input at byte {}", cur.pos())));
    }
    Ok(s)
}

fn lit_err(e: FormulaError) -> BitSeqError {
    BitSeqError::Literal(e.to_string())
}

fn seq(cur: &mut Cursor<'_>) -> Result<BitSeq, FormulaError> {
    if cur.eat("zeros") {
        Ok(BitSeq::zeros())
    } else if cur.eat("ones") {
        Ok(BitSeq::ones())
    } else if cur.eat("periodic:") {
        let mut bits = Vec::new();
        loop {
            if cur.eat("0") {
                bits.push(false);
            } else if cur.eat("1") {
                bits.push(true);
            } else {
                break;
            }
        }
        if bits.is_empty() {
            return Err(cur.error("periodic pattern needs at least one bit".into()));
        }
        Ok(BitSeq::periodic(bits))
    } else if cur.eat("prng:") {
        Ok(BitSeq::prng(cur.nat()?))
    } else if cur.eat("support:") {
        let mut idx = Vec::new();
        if matches!(cur.peek(), Some(b'0'..=b'9')) {
            idx.push(cur.nat()?);
            while matches!(cur.peek(), Some(b',')) {
                // a comma followed by a non-digit belongs to an enclosing join
                let save = cur.pos();
                cur.expect(",")?;
                if matches!(cur.peek(), Some(b'0'..=b'9')) {
                    idx.push(cur.nat()?);
                } else {
                    cur.set_pos(save);
                    break;
                }
            }
        }
        Ok(BitSeq::support(idx))
    } else if cur.eat("join(") {
        let a = seq(cur)?;
        cur.expect(",")?;
        let b = seq(cur)?;
        cur.expect(")")?;
        Ok(join(&a, &b))
    } else if cur.eat("sum(") {
        let mut cols = Vec::new();
        if !cur.eat(")") {
            cols.push(seq(cur)?);
            while cur.eat(";") {
                cols.push(seq(cur)?);
            }
            cur.expect(")")?;
        }
        Ok(direct_sum(cols))
    } else {
        Err(cur.error("unknown sequence literal".into()))
    }
}

/// Splits a comma-separated list of sequence literals, keeping commas that
/// belong to `support:` lists or sit inside parentheses.
pub fn split_seq_list(text: &str) -> Result<Vec<BitSeq>, BitSeqError> {
    let mut parts: Vec<String> = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for ch in text.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == ',' && depth == 0 {
            parts.push(std::mem::take(&mut current));
        } else {
            current.push(ch);
        }
    }
    parts.push(current);

    let mut merged: Vec<String> = Vec::new();
    for p in parts {
        let t = p.trim();
        let continues_support = merged.last().is_some_and(|last| {
            last.starts_with("support:") && !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
        });
        if continues_support {
            let last = merged.last_mut().expect("checked");
            last.push(',');
            last.push_str(t);
        } else {
            merged.push(t.to_string());
        }
    }
    merged.iter().map(|s| parse_seq(s)).collect()
}
