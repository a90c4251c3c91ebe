//! Truth-table reductions as computable formula families.
//!
//! A [`Reduction`] maps each input `n` to a [`Formula`] over oracle bit
//! indices. Families are written in a small template language whose atoms
//! are affine in `n`:
//!
//! ```text
//! # comment
//! bound=2
//! n==0: 1
//! case n%2==1: v(2*n) | v(2*n+1)
//! default: v(4*n) & v(4*n+2)
//! ```
//!
//! Explicit `n==k` rows win over `case` lines, which are tried in file
//! order, which win over `default`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bitseq::{unpair, BitSeq, IndexSet};
use crate::formula::{classify_formula, parse_expr, Cursor, Expr, Formula, FormulaError};

/// Largest least-common-multiple of case moduli checked for coverage.
const COVERAGE_LCM_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("line {line}: {source}")]
    Syntax { line: usize, source: FormulaError },
    #[error("line {line}: {msg}")]
    Directive { line: usize, msg: String },
    #[error("line {line}: negative affine coefficient")]
    NegativeCoefficient { line: usize },
    #[error("no case covers n ≡ {residue} (mod {modulus}) and there is no default")]
    UncoveredResidue { modulus: u64, residue: u64 },
    #[error("instance {n} has width {width}, above the declared bound {bound}")]
    BoundViolated { n: u64, width: usize, bound: usize },
    #[error("oracle index overflow in instance {n}")]
    Overflow { n: u64 },
}

/// Oracle index `a*n + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Affine {
    pub a: u64,
    pub b: u64,
}

impl Affine {
    pub fn at(&self, n: u64) -> Option<u64> {
        self.a.checked_mul(n).and_then(|x| x.checked_add(self.b))
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a, self.b) {
            (0, b) => write!(f, "{b}"),
            (1, 0) => f.write_str("n"),
            (1, b) => write!(f, "n+{b}"),
            (a, 0) => write!(f, "{a}*n"),
            (a, b) => write!(f, "{a}*n+{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Family {
    rows: BTreeMap<u64, Expr<Affine>>,
    cases: Vec<(u64, u64, Expr<Affine>)>,
    default: Option<Expr<Affine>>,
}

impl Family {
    fn template_for(&self, n: u64) -> &Expr<Affine> {
        if let Some(t) = self.rows.get(&n) {
            return t;
        }
        if let Some((_, _, t)) = self.cases.iter().find(|(m, r, _)| n % m == *r) {
            return t;
        }
        self.default.as_ref().expect("coverage checked at construction")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Kind {
    Family(Family),
    /// Instances of `inner` with the listed oracle bits replaced by 0.
    Hardcoded { inner: Reduction, zeroed: BTreeSet<u64> },
}

/// A truth-table reduction `n ↦ σ_n`, with an optional width bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    kind: Arc<Kind>,
    declared_bound: Option<usize>,
}

impl Reduction {
    pub fn parse(text: &str) -> Result<Self, ReductionError> {
        let mut bound = None;
        let mut family = Family { rows: BTreeMap::new(), cases: Vec::new(), default: None };

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let directive_err = |msg: &str| ReductionError::Directive { line, msg: msg.to_string() };

            if let Some(rest) = content.strip_prefix("bound=") {
                let c = rest.trim().parse::<usize>().map_err(|_| directive_err("bound must be a natural number"))?;
                bound = Some(c);
                continue;
            }
            let (head, body) = content.split_once(':').ok_or_else(|| directive_err("missing `:`"))?;
            let head: String = head.chars().filter(|c| !c.is_whitespace()).collect();
            let template = parse_template(body, line)?;

            if head == "default" {
                if family.default.is_some() {
                    return Err(directive_err("duplicate default"));
                }
                family.default = Some(template);
            } else if let Some(k) = head.strip_prefix("n==") {
                let k = k.parse::<u64>().map_err(|_| directive_err("row index must be a natural number"))?;
                if family.rows.insert(k, template).is_some() {
                    return Err(directive_err("duplicate row"));
                }
            } else if let Some(rest) = head.strip_prefix("casen%") {
                let (m, r) = rest.split_once("==").ok_or_else(|| directive_err("expected `case n%M==R`"))?;
                let m = m.parse::<u64>().map_err(|_| directive_err("bad modulus"))?;
                let r = r.parse::<u64>().map_err(|_| directive_err("bad residue"))?;
                if m == 0 || r >= m {
                    return Err(directive_err("residue must be below a positive modulus"));
                }
                family.cases.push((m, r, template));
            } else {
                return Err(directive_err("unknown directive"));
            }
        }

        if family.default.is_none() {
            check_coverage(&family.cases)?;
        }
        Ok(Reduction { kind: Arc::new(Kind::Family(family)), declared_bound: bound })
    }

    pub fn declared_bound(&self) -> Option<usize> {
        self.declared_bound
    }

    pub fn with_bound(&self, bound: Option<usize>) -> Reduction {
        Reduction { kind: self.kind.clone(), declared_bound: bound }
    }

    /// The formula for input `n`, with duplicate indices merged and
    /// constants folded.
    pub fn instantiate(&self, n: u64) -> Result<Formula, ReductionError> {
        let f = match &*self.kind {
            Kind::Family(fam) => {
                let expr = fam
                    .template_for(n)
                    .map_atoms(&mut |aff: &Affine| aff.at(n).ok_or(ReductionError::Overflow { n }))?;
                Formula::new(expr.simplify()).expect("simplify preserves arity")
            }
            Kind::Hardcoded { inner, zeroed } => {
                let base = inner.instantiate(n)?;
                let zeros: BTreeMap<u64, bool> =
                    base.vars().iter().filter(|v| zeroed.contains(v)).map(|v| (*v, false)).collect();
                base.substitute(&zeros)
            }
        };
        if let Some(bound) = self.declared_bound {
            if f.width() > bound {
                return Err(ReductionError::BoundViolated { n, width: f.width(), bound });
            }
        }
        Ok(f)
    }

    pub fn apply(&self, x: &BitSeq, n: u64) -> Result<bool, ReductionError> {
        Ok(self.instantiate(n)?.eval_with(|i| x.bit_at(i)))
    }

    /// Oracle bits queried on input `n`.
    pub fn query_set(&self, n: u64) -> Result<Vec<u64>, ReductionError> {
        Ok(self.instantiate(n)?.vars().to_vec())
    }

    /// Replaces every oracle bit in `h` by 0 in all instances.
    pub fn hardcode(&self, h: &BTreeSet<u64>) -> Reduction {
        Reduction {
            kind: Arc::new(Kind::Hardcoded { inner: self.clone(), zeroed: h.clone() }),
            declared_bound: self.declared_bound,
        }
    }
}

impl fmt::Display for Reduction {
    /// Template families print back in the template language.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.kind {
            Kind::Family(fam) => {
                if let Some(c) = self.declared_bound {
                    writeln!(f, "bound={c}")?;
                }
                for (k, t) in &fam.rows {
                    writeln!(f, "n=={k}: {t}")?;
                }
                for (m, r, t) in &fam.cases {
                    writeln!(f, "case n%{m}=={r}: {t}")?;
                }
                if let Some(t) = &fam.default {
                    writeln!(f, "default: {t}")?;
                }
                Ok(())
            }
            Kind::Hardcoded { inner, zeroed } => {
                let h: Vec<String> = zeroed.iter().map(u64::to_string).collect();
                writeln!(f, "# zeroed: {}", h.join(","))?;
                write!(f, "{inner}")
            }
        }
    }
}

fn parse_template(body: &str, line: usize) -> Result<Expr<Affine>, ReductionError> {
    let mut negative = false;
    let result = parse_expr(body, &mut |cur: &mut Cursor<'_>| {
        if cur.peek() == Some(b'-') {
            negative = true;
            return Err(cur.error("negative coefficient".into()));
        }
        let (aff, has_n) = if cur.eat("n") {
            (Affine { a: 1, b: 0 }, true)
        } else {
            let x = cur.nat()?;
            if cur.eat("*") {
                cur.expect("n")?;
                (Affine { a: x, b: 0 }, true)
            } else {
                (Affine { a: 0, b: x }, false)
            }
        };
        if cur.peek() == Some(b'-') {
            negative = true;
            return Err(cur.error("negative offset".into()));
        }
        if has_n && cur.eat("+") {
            return Ok(Affine { b: cur.nat()?, ..aff });
        }
        Ok(aff)
    });
    match result {
        Ok(e) => Ok(e),
        Err(_) if negative => Err(ReductionError::NegativeCoefficient { line }),
        Err(source) => Err(ReductionError::Syntax { line, source }),
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_coverage(cases: &[(u64, u64, Expr<Affine>)]) -> Result<(), ReductionError> {
    if cases.is_empty() {
        return Err(ReductionError::UncoveredResidue { modulus: 1, residue: 0 });
    }
    let mut lcm = 1u64;
    for (m, _, _) in cases {
        lcm = lcm / gcd(lcm, *m) * m;
        if lcm > COVERAGE_LCM_CAP {
            // coverage too expensive to certify: demand a default instead
            return Err(ReductionError::UncoveredResidue { modulus: lcm, residue: 0 });
        }
    }
    match (0..lcm).find(|r| !cases.iter().any(|(m, res, _)| r % m == *res)) {
        Some(residue) => Err(ReductionError::UncoveredResidue { modulus: lcm, residue }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QueryCensus {
    pub even: u64,
    pub odd: u64,
    /// Variable occurrences per pairing column.
    pub pairing: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReductionClassReport {
    pub horizon: u64,
    pub max_width: usize,
    pub all_positive: bool,
    pub all_linear: bool,
    pub all_conjunctive: bool,
    pub all_disjunctive: bool,
    pub all_many_one: bool,
    pub all_negation_only: bool,
    /// `None` if some instance is too wide for a truth table.
    pub all_monotone: Option<bool>,
    pub all_affine: Option<bool>,
    pub census: QueryCensus,
}

impl fmt::Display for ReductionClassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |o: Option<bool>| o.map_or("n/a".to_string(), |b| b.to_string());
        writeln!(f, "horizon={}", self.horizon)?;
        writeln!(f, "max_width={}", self.max_width)?;
        writeln!(f, "all_positive={}", self.all_positive)?;
        writeln!(f, "all_linear={}", self.all_linear)?;
        writeln!(f, "all_conjunctive={}", self.all_conjunctive)?;
        writeln!(f, "all_disjunctive={}", self.all_disjunctive)?;
        writeln!(f, "all_many_one={}", self.all_many_one)?;
        writeln!(f, "all_negation_only={}", self.all_negation_only)?;
        writeln!(f, "all_monotone={}", opt(self.all_monotone))?;
        writeln!(f, "all_affine={}", opt(self.all_affine))?;
        writeln!(f, "queries_even={} queries_odd={}", self.census.even, self.census.odd)?;
        let cols: Vec<String> = self.census.pairing.iter().map(|(c, k)| format!("{c}:{k}")).collect();
        write!(f, "queries_by_pairing_column={}", cols.join(","))
    }
}

fn and_opt(acc: Option<bool>, x: Option<bool>) -> Option<bool> {
    Some(acc? && x?)
}

pub fn classify_reduction(r: &Reduction, horizon: u64) -> Result<ReductionClassReport, ReductionError> {
    let mut rep = ReductionClassReport {
        horizon,
        max_width: 0,
        all_positive: true,
        all_linear: true,
        all_conjunctive: true,
        all_disjunctive: true,
        all_many_one: true,
        all_negation_only: true,
        all_monotone: Some(true),
        all_affine: Some(true),
        census: QueryCensus::default(),
    };
    for n in 0..horizon {
        let f = r.instantiate(n)?;
        let c = classify_formula(&f);
        rep.max_width = rep.max_width.max(c.width);
        rep.all_positive &= c.syntactically_positive;
        rep.all_linear &= c.syntactically_linear;
        rep.all_conjunctive &= c.conjunctive;
        rep.all_disjunctive &= c.disjunctive;
        rep.all_many_one &= c.many_one_shape;
        rep.all_negation_only &= c.negation_only;
        rep.all_monotone = and_opt(rep.all_monotone, c.semantically_monotone);
        rep.all_affine = and_opt(rep.all_affine, c.semantically_affine);
        for &q in f.vars() {
            if q % 2 == 0 {
                rep.census.even += 1;
            } else {
                rep.census.odd += 1;
            }
            *rep.census.pairing.entry(unpair(q).0).or_default() += 1;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyOutcome {
    pub selected: Vec<u64>,
    pub stalled: bool,
    /// Position in `selected` of the last element before the stall.
    pub stall_index: Option<usize>,
    /// Union of the selected query sets, present when stalled.
    pub h: Option<IndexSet>,
    /// Longest run of rejected candidates seen after any selection.
    pub window_used: u64,
}

impl GreedyOutcome {
    pub fn h_set(&self) -> BTreeSet<u64> {
        match &self.h {
            Some(set) => set.iter().collect(),
            None => BTreeSet::new(),
        }
    }
}

/// Greedy search for pairwise disjoint query sets: `n_0 = 0`, then each next
/// index is the least later `n` whose query set misses everything chosen so
/// far. Stalls when `window` consecutive candidates are all rejected.
pub fn greedy_disjoint(r: &Reduction, horizon: u64, window: u64) -> Result<GreedyOutcome, ReductionError> {
    let mut out = GreedyOutcome { selected: Vec::new(), stalled: false, stall_index: None, h: None, window_used: 0 };
    if horizon == 0 {
        return Ok(out);
    }
    let mut union: BTreeSet<u64> = r.query_set(0)?.into_iter().collect();
    out.selected.push(0);
    let mut gap = 0u64;
    for n in 1..horizon {
        let q = r.query_set(n)?;
        if q.iter().all(|x| !union.contains(x)) {
            union.extend(q);
            out.selected.push(n);
            gap = 0;
        } else {
            gap += 1;
            out.window_used = out.window_used.max(gap);
            if gap >= window {
                out.stalled = true;
                out.stall_index = Some(out.selected.len() - 1);
                out.h = Some(IndexSet::finite(union.iter().copied()));
                break;
            }
        }
    }
    Ok(out)
}
