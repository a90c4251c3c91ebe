//! Oracle constructions that defeat positive, linear and bounded
//! truth-table reductions on sums of sequences.
//!
//! Every attack takes a reduction, a column count and a horizon and returns
//! an [`AttackResult`]: an oracle in which one column carries the `Prng`
//! stand-in for a random real, the other columns are built by the attack,
//! and a [`Witness`] naming a computable set of inputs on which the
//! reduction's output is constant. [`verify_attack`] re-evaluates the
//! reduction on the oracle and checks both claims.
//!
//! "Infinitely many" cannot be decided on a prefix, so each case split uses
//! a census over `[0, horizon)`. The btt splits take a column when its
//! census set has an element at or past `horizon / 2`. The positive split
//! compares how many members each candidate witness set has in the second
//! half: the best column's "every clause hits it" set against the set of
//! inputs with a clause avoiding column 0. These two sets partition the
//! inputs for column 0, so the chosen witness has at least `horizon / 4`
//! members. Ties go to Case 1, to the least column and to value 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bitseq::{BitSeq, Layout};
use crate::formula::{cnf_clauses, find_control, ControlCertificate, FormulaError, WIDTH_CAP};
use crate::reduction::{classify_reduction, greedy_disjoint, Reduction, ReductionError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("reduction is not {class} (first offending input {n})")]
    NotInClass { class: &'static str, n: u64 },
    #[error("instance {n} has width {width}, above the bound {c}")]
    WidthExceeds { n: u64, width: usize, c: usize },
    #[error("need at least two columns, got {0}")]
    TooFewColumns(u64),
    #[error("btt bound must be at least 1")]
    ZeroBound,
    #[error("no case produced a nonempty witness below the horizon; census: {census:?}")]
    NoWitness { census: BTreeMap<String, u64> },
    #[error("greedy stall at input {n} was premature: the hardcoded instance keeps full width")]
    FalseStall { n: u64 },
    #[error("constructed oracle does not give the claimed value at input {n}")]
    ConstructionMismatch { n: u64 },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Computable properties of an input `n` relative to a reduction and a
/// column layout; used as witness filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CensusPredicate {
    /// Every CNF clause of the instance has a variable in the column.
    EveryClauseHitsColumn { column: u64 },
    /// Some CNF clause of the instance has no variable in the column.
    SomeClauseAvoidsColumn { column: u64 },
    /// The instance depends on a bit of the column that no earlier input
    /// queried.
    FreshQueryInColumn { column: u64 },
    /// The instance is the given constant function.
    ConstantInstance { value: bool },
    /// The instance is `x` (or `1 - x` when negated) for one bit `x` of the
    /// column.
    LiteralOnColumn { column: u64, negated: bool },
}

impl fmt::Display for CensusPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CensusPredicate::EveryClauseHitsColumn { column } => write!(f, "every-clause-hits-col{column}"),
            CensusPredicate::SomeClauseAvoidsColumn { column } => write!(f, "some-clause-avoids-col{column}"),
            CensusPredicate::FreshQueryInColumn { column } => write!(f, "fresh-query-in-col{column}"),
            CensusPredicate::ConstantInstance { value } => write!(f, "constant-{}", u8::from(*value)),
            CensusPredicate::LiteralOnColumn { column, negated: false } => write!(f, "identity-on-col{column}"),
            CensusPredicate::LiteralOnColumn { column, negated: true } => write!(f, "negation-on-col{column}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexRule {
    ArithmeticProgression { a: u64, b: u64 },
    /// `{n : n ≡ r (mod m) and predicate(n)}`.
    ResidueFilter { m: u64, r: u64, predicate: CensusPredicate },
    /// An explicit list produced by a named construction step. Only the part
    /// below the construction horizon is known.
    Enumerated { list: Vec<u64>, generator: String, finite_horizon: bool },
}

impl IndexRule {
    fn every(predicate: CensusPredicate) -> Self {
        IndexRule::ResidueFilter { m: 1, r: 0, predicate }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub index_rule: IndexRule,
    pub claimed_value: bool,
    pub sample: Vec<(u64, bool)>,
}

impl Witness {
    pub fn indices(&self) -> Vec<u64> {
        self.sample.iter().map(|(n, _)| *n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum CaseTaken {
    PositiveCase1 { column: u64 },
    PositiveCase2,
    LinearStage { column: u64 },
    /// No column receives fresh queries: the output is read off directly.
    LinearDegenerate,
    BttBaseConstant,
    BttBaseLiteral { column: u64 },
    BttHardcodeRecursion { depth: usize, then: Box<CaseTaken> },
    /// Some column's bits control infinitely many disjoint instances.
    BttControl { column: u64 },
    /// No column controls; the non-random columns force value 1.
    BttForcing,
}

impl CaseTaken {
    /// The case at the bottom of any hard-coding recursion.
    pub fn innermost(&self) -> &CaseTaken {
        match self {
            CaseTaken::BttHardcodeRecursion { then, .. } => then.innermost(),
            other => other,
        }
    }

    fn forbids_random_patches(&self) -> bool {
        matches!(self.innermost(), CaseTaken::LinearStage { .. } | CaseTaken::BttControl { .. })
            && !matches!(self, CaseTaken::BttHardcodeRecursion { .. })
    }
}

impl fmt::Display for CaseTaken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseTaken::PositiveCase1 { column } => write!(f, "positive-case-1(col={column})"),
            CaseTaken::PositiveCase2 => f.write_str("positive-case-2"),
            CaseTaken::LinearStage { column } => write!(f, "linear-stage(col={column})"),
            CaseTaken::LinearDegenerate => f.write_str("linear-degenerate"),
            CaseTaken::BttBaseConstant => f.write_str("btt-base-constant"),
            CaseTaken::BttBaseLiteral { column } => write!(f, "btt-base-literal(col={column})"),
            CaseTaken::BttHardcodeRecursion { depth, then } => write!(f, "btt-hardcode-recursion({depth})/{then}"),
            CaseTaken::BttControl { column } => write!(f, "btt-control-even(col={column})"),
            CaseTaken::BttForcing => f.write_str("btt-control-odd"),
        }
    }
}

/// One stage of the linear construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinearStage {
    pub n: u64,
    /// Least fresh bit of the chosen column queried by `n`.
    pub fresh_bit: u64,
    pub value_before: bool,
    pub patched: bool,
}

/// One level of the hard-coding recursion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecursionLevel {
    pub depth: usize,
    pub h: BTreeSet<u64>,
    pub max_width_before: usize,
    pub max_width_after: usize,
    /// The hard-coded reduction handed to the next level.
    pub hardcoded: Reduction,
    /// Oracle returned by the next level, before zeroing `h`.
    pub inner_oracle: BitSeq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackResult {
    pub oracle: BitSeq,
    pub layout: Layout,
    /// Columns before patching.
    pub columns: Vec<BitSeq>,
    pub patches: BTreeMap<u64, bool>,
    pub random_column: u64,
    pub seed: u64,
    pub oracle_description: Vec<String>,
    pub witness: Witness,
    pub case_taken: CaseTaken,
    pub census: BTreeMap<String, u64>,
    pub linear_trace: Vec<LinearStage>,
    pub recursion: Vec<RecursionLevel>,
    /// Selected inputs where forcing value 1 was impossible.
    pub skipped: Vec<u64>,
}

impl AttackResult {
    pub fn to_json(&self) -> Value {
        let pairs = |v: &mut dyn Iterator<Item = (u64, bool)>| -> Vec<Value> {
            v.map(|(i, b)| json!([i, u8::from(b)])).collect()
        };
        json!({
            "case": self.case_taken.to_string(),
            "random_column": self.random_column,
            "seed": self.seed,
            "layout": self.layout,
            "columns": self.columns.iter().map(BitSeq::to_string).collect::<Vec<_>>(),
            "patches": pairs(&mut self.patches.iter().map(|(i, b)| (*i, *b))),
            "witness": {
                "rule": self.witness.index_rule,
                "value": u8::from(self.witness.claimed_value),
                "sample": pairs(&mut self.witness.sample.iter().copied()),
            },
            "census": self.census,
            "skipped": self.skipped,
            "recursion": self.recursion.iter().map(|l| json!({
                "depth": l.depth,
                "h": l.h,
                "max_width_before": l.max_width_before,
                "max_width_after": l.max_width_after,
            })).collect::<Vec<_>>(),
            "oracle_description": self.oracle_description,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub checked: u64,
    pub mismatches: Vec<(u64, bool, bool)>,
    pub oracle_shape_ok: bool,
    pub passed: bool,
}

struct OracleDraft {
    layout: Layout,
    columns: Vec<BitSeq>,
    patches: BTreeMap<u64, bool>,
}

impl OracleDraft {
    /// All columns zero except `random_column`, which carries `Prng(seed)`.
    fn new(layout: Layout, random_column: u64, seed: u64) -> Self {
        let mut columns = vec![BitSeq::zeros(); layout.columns() as usize];
        columns[random_column as usize] = BitSeq::prng(seed);
        OracleDraft { layout, columns, patches: BTreeMap::new() }
    }

    fn build(&self) -> BitSeq {
        self.layout.assemble(self.columns.clone()).patched(self.patches.clone())
    }

    fn bit(&self, i: u64) -> bool {
        match self.patches.get(&i) {
            Some(b) => *b,
            None => {
                let (c, p) = self.layout.locate(i);
                self.columns.get(c as usize).is_some_and(|s| s.bit_at(p))
            }
        }
    }
}

fn live_column(layout: Layout, var: u64) -> Option<u64> {
    let (c, _) = layout.locate(var);
    (c < layout.columns()).then_some(c)
}

fn other_column(j: u64) -> u64 {
    if j == 0 {
        1
    } else {
        0
    }
}

fn check_columns(columns: u64) -> Result<Layout, AdversaryError> {
    if columns < 2 {
        return Err(AdversaryError::TooFewColumns(columns));
    }
    Ok(Layout::for_columns(columns))
}

/// Inputs below `horizon` satisfying `pred`.
pub fn predicate_members(
    r: &Reduction,
    layout: Layout,
    pred: CensusPredicate,
    horizon: u64,
) -> Result<Vec<u64>, AdversaryError> {
    let mut out = Vec::new();
    let mut queried: BTreeSet<u64> = BTreeSet::new();
    for n in 0..horizon {
        let f = r.instantiate(n)?;
        let hit = match pred {
            CensusPredicate::EveryClauseHitsColumn { column } => cnf_clauses(&f)?
                .iter()
                .all(|cl| cl.iter().any(|lit| live_column(layout, lit.var) == Some(column))),
            CensusPredicate::SomeClauseAvoidsColumn { column } => cnf_clauses(&f)?
                .iter()
                .any(|cl| cl.iter().all(|lit| live_column(layout, lit.var) != Some(column))),
            CensusPredicate::FreshQueryInColumn { column } => f
                .affine_support()
                .iter()
                .any(|v| !queried.contains(v) && live_column(layout, *v) == Some(column)),
            CensusPredicate::ConstantInstance { value } => single_var_shape(&f)? == Shape::Constant(value),
            CensusPredicate::LiteralOnColumn { column, negated } => {
                matches!(single_var_shape(&f)?, Shape::Literal { var, negated: neg }
                    if neg == negated && live_column(layout, var) == Some(column))
            }
        };
        if hit {
            out.push(n);
        }
        queried.extend(f.vars().iter().copied());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Constant(bool),
    Literal { var: u64, negated: bool },
    Wider,
}

fn single_var_shape(f: &crate::formula::Formula) -> Result<Shape, AdversaryError> {
    match f.width() {
        0 => Ok(Shape::Constant(f.eval_with(|_| false))),
        1 => {
            let var = f.vars()[0];
            let (lo, hi) = (f.eval_with(|_| false), f.eval_with(|_| true));
            Ok(match (lo, hi) {
                (a, b) if a == b => Shape::Constant(a),
                (false, true) => Shape::Literal { var, negated: false },
                _ => Shape::Literal { var, negated: true },
            })
        }
        _ => Ok(Shape::Wider),
    }
}

/// Evaluates `r` on the draft at every listed input and checks the claimed
/// value, producing the witness sample.
fn seal_witness(
    r: &Reduction,
    draft: &OracleDraft,
    rule: IndexRule,
    indices: &[u64],
    value: bool,
) -> Result<Witness, AdversaryError> {
    let mut sample = Vec::with_capacity(indices.len());
    for &n in indices {
        let got = r.instantiate(n)?.eval_with(|i| draft.bit(i));
        if got != value {
            return Err(AdversaryError::ConstructionMismatch { n });
        }
        sample.push((n, got));
    }
    Ok(Witness { index_rule: rule, claimed_value: value, sample })
}

fn finish(
    draft: OracleDraft,
    random_column: u64,
    seed: u64,
    witness: Witness,
    case_taken: CaseTaken,
    census: BTreeMap<String, u64>,
    description: Vec<String>,
) -> AttackResult {
    AttackResult {
        oracle: draft.build(),
        layout: draft.layout,
        columns: draft.columns,
        patches: draft.patches,
        random_column,
        seed,
        oracle_description: description,
        witness,
        case_taken,
        census,
        linear_trace: Vec::new(),
        recursion: Vec::new(),
        skipped: Vec::new(),
    }
}

/// Members at or past `horizon / 2`.
fn tail(set: &[u64], horizon: u64) -> u64 {
    set.iter().filter(|n| **n >= horizon / 2).count() as u64
}

fn past_midpoint(set: &[u64], horizon: u64) -> bool {
    set.last().is_some_and(|n| *n >= horizon / 2)
}

/// Attack on a positive reduction via the CNF column census.
pub fn attack_positive(r: &Reduction, columns: u64, horizon: u64, seed: u64) -> Result<AttackResult, AdversaryError> {
    let layout = check_columns(columns)?;
    let report = classify_reduction(r, horizon)?;
    if !report.all_positive {
        let n = (0..horizon)
            .find(|n| {
                r.instantiate(*n)
                    .map(|f| !crate::formula::classify_formula(&f).syntactically_positive)
                    .unwrap_or(true)
            })
            .unwrap_or(0);
        return Err(AdversaryError::NotInClass { class: "positive", n });
    }

    let mut census = BTreeMap::new();
    let mut hits: Vec<Vec<u64>> = Vec::new();
    for j in 0..columns {
        let w = predicate_members(r, layout, CensusPredicate::EveryClauseHitsColumn { column: j }, horizon)?;
        census.insert(format!("every_clause_hits_col{j}"), w.len() as u64);
        census.insert(format!("every_clause_hits_col{j}_tail"), tail(&w, horizon));
        hits.push(w);
    }
    let pred = CensusPredicate::SomeClauseAvoidsColumn { column: 0 };
    let avoid = predicate_members(r, layout, pred, horizon)?;
    census.insert("some_clause_avoids_col0".into(), avoid.len() as u64);
    census.insert("some_clause_avoids_col0_tail".into(), tail(&avoid, horizon));

    let best = (0..columns).max_by_key(|j| (tail(&hits[*j as usize], horizon), std::cmp::Reverse(*j)));
    if let Some(j) = best.filter(|j| {
        let t = tail(&hits[*j as usize], horizon);
        t > 0 && t >= tail(&avoid, horizon)
    }) {
        let k = other_column(j);
        let mut draft = OracleDraft::new(layout, k, seed);
        draft.columns[j as usize] = BitSeq::ones();
        let pred = CensusPredicate::EveryClauseHitsColumn { column: j };
        let witness = seal_witness(r, &draft, IndexRule::every(pred), &hits[j as usize], true)?;
        let description = vec![
            format!("census: column {j} meets every clause on {} of {horizon} inputs", hits[j as usize].len()),
            format!("column {j} = ones, column {k} = prng:{seed}, others zeros"),
            "every clause holds a true variable, so those instances evaluate to 1".to_string(),
        ];
        return Ok(finish(draft, k, seed, witness, CaseTaken::PositiveCase1 { column: j }, census, description));
    }

    if avoid.is_empty() {
        return Err(AdversaryError::NoWitness { census });
    }
    let draft = OracleDraft::new(layout, 0, seed);
    let witness = seal_witness(r, &draft, IndexRule::every(pred), &avoid, false)?;
    let description = vec![
        "census: no column meets every clause past the midpoint".to_string(),
        format!("column 0 = prng:{seed}, others zeros"),
        format!("{} inputs have a clause with no column-0 variable; that clause reads only zeros", avoid.len()),
    ];
    Ok(finish(draft, 0, seed, witness, CaseTaken::PositiveCase2, census, description))
}

/// Stage construction on a linear reduction: each input that depends on a
/// fresh bit of the chosen column gets that bit set to 1 exactly when its
/// current value is 0.
pub fn attack_linear(r: &Reduction, columns: u64, horizon: u64, seed: u64) -> Result<AttackResult, AdversaryError> {
    let layout = check_columns(columns)?;
    let mut fresh: Vec<Vec<(u64, u64)>> = vec![Vec::new(); columns as usize];
    let mut queried: BTreeSet<u64> = BTreeSet::new();
    for n in 0..horizon {
        let f = r.instantiate(n)?;
        if !crate::formula::classify_formula(&f).syntactically_linear {
            return Err(AdversaryError::NotInClass { class: "linear", n });
        }
        for j in 0..columns {
            let least = f
                .affine_support()
                .into_iter()
                .find(|v| !queried.contains(v) && live_column(layout, *v) == Some(j));
            if let Some(v) = least {
                fresh[j as usize].push((n, v));
            }
        }
        queried.extend(f.vars().iter().copied());
    }

    let mut census = BTreeMap::new();
    for (j, list) in fresh.iter().enumerate() {
        census.insert(format!("fresh_inputs_col{j}"), list.len() as u64);
    }
    let best = (0..columns).max_by_key(|j| (fresh[*j as usize].len(), std::cmp::Reverse(*j)));
    let j = match best {
        Some(j) if !fresh[j as usize].is_empty() => j,
        _ => return linear_degenerate(r, layout, horizon, seed, census),
    };

    let k = other_column(j);
    let mut draft = OracleDraft::new(layout, k, seed);
    let mut trace = Vec::new();
    for &(n, v) in &fresh[j as usize] {
        let before = r.instantiate(n)?.eval_with(|i| draft.bit(i));
        if !before {
            draft.patches.insert(v, true);
        }
        trace.push(LinearStage { n, fresh_bit: v, value_before: before, patched: !before });
    }
    let indices: Vec<u64> = fresh[j as usize].iter().map(|(n, _)| *n).collect();
    let pred = CensusPredicate::FreshQueryInColumn { column: j };
    let witness = seal_witness(r, &draft, IndexRule::every(pred), &indices, true)?;
    let patched = trace.iter().filter(|s| s.patched).count();
    let description = vec![
        format!("census: column {j} has fresh queried bits on {} of {horizon} inputs", indices.len()),
        format!("start: column {k} = prng:{seed}, others zeros"),
        format!("{patched} stages set their least fresh column-{j} bit to 1; the rest already output 1"),
    ];
    let mut res = finish(draft, k, seed, witness, CaseTaken::LinearStage { column: j }, census, description);
    res.linear_trace = trace;
    Ok(res)
}

fn linear_degenerate(
    r: &Reduction,
    layout: Layout,
    horizon: u64,
    seed: u64,
    census: BTreeMap<String, u64>,
) -> Result<AttackResult, AdversaryError> {
    let draft = OracleDraft::new(layout, 0, seed);
    let mut by_value: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for n in 0..horizon {
        let v = r.instantiate(n)?.eval_with(|i| draft.bit(i));
        by_value[usize::from(v)].push(n);
    }
    let value = by_value[1].len() > by_value[0].len();
    let indices = by_value[usize::from(value)].clone();
    if indices.is_empty() {
        return Err(AdversaryError::NoWitness { census });
    }
    let rule = IndexRule::Enumerated { list: indices.clone(), generator: "constant-output".into(), finite_horizon: true };
    let witness = seal_witness(r, &draft, rule, &indices, value)?;
    let description = vec![
        "no column receives fresh queries: the output is computable from finitely many bits".to_string(),
        format!("column 0 = prng:{seed}, others zeros; majority output {}", u8::from(value)),
    ];
    Ok(finish(draft, 0, seed, witness, CaseTaken::LinearDegenerate, census, description))
}

/// Induction on the width bound `c`.
pub fn attack_btt(
    r: &Reduction,
    c: usize,
    columns: u64,
    horizon: u64,
    window: u64,
    seed: u64,
) -> Result<AttackResult, AdversaryError> {
    let layout = check_columns(columns)?;
    btt_level(r, c, layout, horizon, window, seed, 1)
}

fn max_width(r: &Reduction, c: usize, horizon: u64) -> Result<usize, AdversaryError> {
    let mut max = 0;
    for n in 0..horizon {
        let w = match r.instantiate(n) {
            Ok(f) => f.width(),
            Err(ReductionError::BoundViolated { n, width, .. }) => {
                return Err(AdversaryError::WidthExceeds { n, width, c })
            }
            Err(e) => return Err(e.into()),
        };
        if w > c {
            return Err(AdversaryError::WidthExceeds { n, width: w, c });
        }
        max = max.max(w);
    }
    Ok(max)
}

fn btt_level(
    r: &Reduction,
    c: usize,
    layout: Layout,
    horizon: u64,
    window: u64,
    seed: u64,
    depth: usize,
) -> Result<AttackResult, AdversaryError> {
    if c == 0 {
        return Err(AdversaryError::ZeroBound);
    }
    if c > WIDTH_CAP {
        return Err(AdversaryError::Formula(FormulaError::WidthCap { width: c, cap: WIDTH_CAP }));
    }
    let width = max_width(r, c, horizon)?;
    if c == 1 {
        return btt_base(r, layout, horizon, seed);
    }

    let greedy = greedy_disjoint(r, horizon, window)?;
    if greedy.stalled {
        return btt_hardcode(r, c, layout, horizon, window, seed, depth, width, &greedy.h_set());
    }

    let selected = &greedy.selected;
    let mut census = BTreeMap::new();
    census.insert("greedy_selected".into(), selected.len() as u64);
    census.insert("greedy_window_used".into(), greedy.window_used);

    let instances: Vec<_> = selected.iter().map(|n| r.instantiate(*n)).collect::<Result<_, _>>()?;
    let mut controlled: Vec<Vec<(u64, ControlCertificate)>> = Vec::new();
    for j in 0..layout.columns() {
        let mut e_j = Vec::new();
        for (n, f) in selected.iter().zip(&instances) {
            let in_col: Vec<u64> = f.vars().iter().copied().filter(|v| live_column(layout, *v) == Some(j)).collect();
            if let Some(cert) = find_control(f, &in_col)? {
                e_j.push((*n, cert));
            }
        }
        census.insert(format!("controlled_by_col{j}"), e_j.len() as u64);
        controlled.push(e_j);
    }

    let control_col = (0..layout.columns()).find(|j| {
        let ns: Vec<u64> = controlled[*j as usize].iter().map(|(n, _)| *n).collect();
        past_midpoint(&ns, horizon)
    });
    if let Some(j) = control_col {
        let k = other_column(j);
        let mut draft = OracleDraft::new(layout, k, seed);
        let e_j = &controlled[j as usize];
        for (_, cert) in e_j {
            draft.patches.extend(cert.setting.iter());
        }
        let ones = e_j.iter().filter(|(_, c)| c.forced_value).count();
        let value = ones > e_j.len() - ones;
        let indices: Vec<u64> = e_j.iter().filter(|(_, c)| c.forced_value == value).map(|(n, _)| *n).collect();
        let rule = IndexRule::Enumerated { list: indices.clone(), generator: format!("greedy-control-col{j}"), finite_horizon: true };
        let witness = seal_witness(r, &draft, rule, &indices, value)?;
        let description = vec![
            format!("greedy found {} pairwise disjoint query sets", selected.len()),
            format!("column {j} bits control {} of them", e_j.len()),
            format!("column {k} = prng:{seed}; control settings written into column {j}, others zeros"),
            format!("{} controlled inputs are forced to {}", indices.len(), u8::from(value)),
        ];
        return Ok(finish(draft, k, seed, witness, CaseTaken::BttControl { column: j }, census, description));
    }

    // No column controls: column 0 random, force value 1 through the others.
    let mut draft = OracleDraft::new(layout, 0, seed);
    let mut forced = Vec::new();
    let mut skipped = Vec::new();
    for (n, f) in selected.iter().zip(&instances) {
        let free: Vec<u64> = f
            .vars()
            .iter()
            .copied()
            .filter(|v| matches!(live_column(layout, *v), Some(c) if c != 0))
            .collect();
        let fixed = |i: u64, draft: &OracleDraft| draft.bit(i);
        let k = free.len();
        let found = (0..1u64 << k).find(|m| {
            f.eval_with(|i| match free.binary_search(&i) {
                Ok(pos) => m >> (k - 1 - pos) & 1 == 1,
                Err(_) => fixed(i, &draft),
            })
        });
        match found {
            Some(m) => {
                for (pos, v) in free.iter().enumerate() {
                    draft.patches.insert(*v, m >> (k - 1 - pos) & 1 == 1);
                }
                forced.push(*n);
            }
            None => skipped.push(*n),
        }
    }
    census.insert("forced".into(), forced.len() as u64);
    census.insert("forcing_impossible".into(), skipped.len() as u64);
    if forced.is_empty() {
        return Err(AdversaryError::NoWitness { census });
    }
    let rule = IndexRule::Enumerated { list: forced.clone(), generator: "greedy-forcing".into(), finite_horizon: true };
    let witness = seal_witness(r, &draft, rule, &forced, true)?;
    let description = vec![
        format!("greedy found {} pairwise disjoint query sets; no column controls past the midpoint", selected.len()),
        format!("column 0 = prng:{seed}; bits of the other columns chosen to force value 1"),
        format!("forcing succeeded on {} inputs and was impossible on {}", forced.len(), skipped.len()),
    ];
    let mut res = finish(draft, 0, seed, witness, CaseTaken::BttForcing, census, description);
    res.skipped = skipped;
    Ok(res)
}

fn btt_base(r: &Reduction, layout: Layout, horizon: u64, seed: u64) -> Result<AttackResult, AdversaryError> {
    let mut census = BTreeMap::new();
    let mut constants: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for value in [false, true] {
        let set = predicate_members(r, layout, CensusPredicate::ConstantInstance { value }, horizon)?;
        census.insert(format!("constant_{}", u8::from(value)), set.len() as u64);
        constants[usize::from(value)] = set;
    }
    let mut all_constants: Vec<u64> = constants.concat();
    all_constants.sort_unstable();
    if past_midpoint(&all_constants, horizon) {
        let value = constants[1].len() > constants[0].len();
        let draft = OracleDraft::new(layout, 0, seed);
        let pred = CensusPredicate::ConstantInstance { value };
        let witness = seal_witness(r, &draft, IndexRule::every(pred), &constants[usize::from(value)], value)?;
        let description = vec![
            format!("{} constant instances reach past the midpoint", all_constants.len()),
            format!("column 0 = prng:{seed}, others zeros; majority constant {}", u8::from(value)),
        ];
        return Ok(finish(draft, 0, seed, witness, CaseTaken::BttBaseConstant, census, description));
    }

    let mut literal: Vec<[Vec<u64>; 2]> = Vec::new();
    for j in 0..layout.columns() {
        let mut pair: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for negated in [false, true] {
            let pred = CensusPredicate::LiteralOnColumn { column: j, negated };
            pair[usize::from(negated)] = predicate_members(r, layout, pred, horizon)?;
            census.insert(format!("{pred}"), pair[usize::from(negated)].len() as u64);
        }
        literal.push(pair);
    }
    let j = (0..layout.columns())
        .max_by_key(|j| {
            let p = &literal[*j as usize];
            (p[0].len() + p[1].len(), std::cmp::Reverse(*j))
        })
        .expect("at least two columns");
    let split = &literal[j as usize];
    if split[0].is_empty() && split[1].is_empty() {
        return Err(AdversaryError::NoWitness { census });
    }
    let negated = split[1].len() > split[0].len();
    let k = other_column(j);
    let draft = OracleDraft::new(layout, k, seed);
    let pred = CensusPredicate::LiteralOnColumn { column: j, negated };
    // a zero column makes identity instances read 0 and negations read 1
    let witness = seal_witness(r, &draft, IndexRule::every(pred), &split[usize::from(negated)], negated)?;
    let description = vec![
        format!("column {j} is queried by {} single-bit instances", split[0].len() + split[1].len()),
        format!("column {j} = zeros, column {k} = prng:{seed}"),
        format!("{} instances are {} and read a zero", split[usize::from(negated)].len(), if negated { "negations" } else { "identities" }),
    ];
    Ok(finish(draft, k, seed, witness, CaseTaken::BttBaseLiteral { column: j }, census, description))
}

#[allow(clippy::too_many_arguments)]
fn btt_hardcode(
    r: &Reduction,
    c: usize,
    layout: Layout,
    horizon: u64,
    window: u64,
    seed: u64,
    depth: usize,
    width_before: usize,
    h: &BTreeSet<u64>,
) -> Result<AttackResult, AdversaryError> {
    let hat = r.hardcode(h).with_bound(Some(c - 1));
    let mut width_after = 0;
    for n in 0..horizon {
        match hat.instantiate(n) {
            Ok(f) => width_after = width_after.max(f.width()),
            Err(ReductionError::BoundViolated { n, .. }) => return Err(AdversaryError::FalseStall { n }),
            Err(e) => return Err(e.into()),
        }
    }

    let inner = btt_level(&hat, c - 1, layout, horizon, window, seed, depth + 1)?;

    let mut draft = OracleDraft { layout, columns: inner.columns.clone(), patches: inner.patches.clone() };
    for &x in h {
        draft.patches.insert(x, false);
    }
    let indices = inner.witness.indices();
    let generator = match &inner.witness.index_rule {
        IndexRule::ResidueFilter { predicate, .. } => format!("hardcode({depth}):{predicate}"),
        IndexRule::Enumerated { generator, .. } => format!("hardcode({depth}):{generator}"),
        IndexRule::ArithmeticProgression { a, b } => format!("hardcode({depth}):ap({a},{b})"),
    };
    let rule = IndexRule::Enumerated { list: indices.clone(), generator, finite_horizon: true };
    let witness = seal_witness(r, &draft, rule, &indices, inner.witness.claimed_value)?;

    let hs: Vec<String> = h.iter().map(u64::to_string).collect();
    let mut description = vec![
        format!("greedy stalled; H = {{{}}} is hit by every later query set", hs.join(",")),
        format!("hard-coded H to 0: width {width_before} -> {width_after}, recursing with bound {}", c - 1),
    ];
    description.extend(inner.oracle_description.iter().map(|l| format!("  {l}")));
    description.push("final oracle = recursive oracle with H removed".to_string());

    let level = RecursionLevel {
        depth,
        h: h.clone(),
        max_width_before: width_before,
        max_width_after: width_after,
        hardcoded: hat,
        inner_oracle: inner.oracle.clone(),
    };
    let case = CaseTaken::BttHardcodeRecursion { depth, then: Box::new(inner.case_taken.clone()) };
    let mut census = inner.census.clone();
    census.insert(format!("hardcoded_bits_depth{depth}"), h.len() as u64);
    let mut res = finish(draft, inner.random_column, seed, witness, case, census, description);
    res.recursion = std::iter::once(level).chain(inner.recursion).collect();
    res.linear_trace = inner.linear_trace;
    res.skipped = inner.skipped;
    Ok(res)
}

/// Re-evaluates the reduction on the oracle at every witness input (sample
/// and rule members below `horizon`) and checks the random column.
pub fn verify_attack(r: &Reduction, res: &AttackResult, horizon: u64) -> VerificationReport {
    let mut indices: BTreeSet<u64> = res.witness.sample.iter().map(|(n, _)| *n).collect();
    let mut rule_ok = true;
    match &res.witness.index_rule {
        IndexRule::ArithmeticProgression { a, b } => {
            if *a > 0 {
                indices.extend((0..).map(|k| a * k + b).take_while(|n| *n < horizon));
            } else if *b < horizon {
                indices.insert(*b);
            }
        }
        IndexRule::ResidueFilter { m, r: res_r, predicate } => {
            match predicate_members(r, res.layout, *predicate, horizon) {
                Ok(members) => indices.extend(members.into_iter().filter(|n| *m > 0 && n % m == *res_r)),
                Err(_) => rule_ok = false,
            }
        }
        IndexRule::Enumerated { list, .. } => indices.extend(list.iter().copied().filter(|n| *n < horizon)),
    }

    let claimed = res.witness.claimed_value;
    let mut mismatches = Vec::new();
    for (n, bit) in &res.witness.sample {
        if *bit != claimed {
            mismatches.push((*n, claimed, *bit));
        }
    }
    for &n in &indices {
        match r.apply(&res.oracle, n) {
            Ok(got) if got == claimed => {}
            Ok(got) => mismatches.push((n, claimed, got)),
            Err(_) => mismatches.push((n, claimed, !claimed)),
        }
    }

    let prng = BitSeq::prng(res.seed);
    let k = res.random_column;
    let mut shape_ok = rule_ok && k < res.layout.columns();
    if shape_ok {
        for p in 0..horizon {
            let idx = res.layout.index(k, p);
            if res.patches.contains_key(&idx) {
                if res.case_taken.forbids_random_patches() {
                    shape_ok = false;
                    break;
                }
                continue;
            }
            if res.oracle.bit_at(idx) != prng.bit_at(p) {
                shape_ok = false;
                break;
            }
        }
    }

    let checked = indices.len() as u64;
    VerificationReport {
        checked,
        passed: mismatches.is_empty() && shape_ok && checked > 0,
        mismatches,
        oracle_shape_ok: shape_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn red(s: &str) -> Reduction {
        Reduction::parse(s).unwrap()
    }

    fn all(h: u64) -> Vec<u64> {
        (0..h).collect()
    }

    #[test]
    fn positive_case1_disjunction() {
        let r = red("default: v(2*n) | v(2*n+1)");
        let res = attack_positive(&r, 2, 128, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::PositiveCase1 { column: 0 });
        assert_eq!(res.random_column, 1);
        assert!(res.witness.claimed_value);
        assert_eq!(res.witness.indices(), all(128));
        assert!(verify_attack(&r, &res, 128).passed);
    }

    #[test]
    fn positive_case2_conjunction() {
        let r = red("default: v(2*n) & v(2*n+1)");
        let res = attack_positive(&r, 2, 128, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::PositiveCase2);
        assert_eq!(res.random_column, 0);
        assert!(!res.witness.claimed_value);
        assert_eq!(res.witness.indices(), all(128));
        assert!(verify_attack(&r, &res, 128).passed);
    }

    #[test]
    fn positive_constant() {
        let r = red("default: 1");
        let res = attack_positive(&r, 2, 64, 3).unwrap();
        assert!(matches!(res.case_taken, CaseTaken::PositiveCase1 { .. }));
        assert!(res.witness.claimed_value);
        assert_eq!(res.witness.indices(), all(64));
    }

    #[test]
    fn positive_rejects_negation() {
        let r = red("default: !v(n)");
        assert!(matches!(attack_positive(&r, 2, 16, 1), Err(AdversaryError::NotInClass { class: "positive", n: 0 })));
        assert_eq!(attack_positive(&red("default: 1"), 1, 16, 1).unwrap_err(), AdversaryError::TooFewColumns(1));
    }

    #[test]
    fn linear_xor() {
        let r = red("default: v(2*n) ^ v(2*n+1)");
        let res = attack_linear(&r, 2, 256, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::LinearStage { column: 0 });
        assert_eq!(res.witness.indices(), all(256));
        let rep = verify_attack(&r, &res, 256);
        assert!(rep.passed);
        assert_eq!(rep.checked, 256);
        // a patch exists exactly where the pre-patch value was 0
        for s in &res.linear_trace {
            assert_eq!(s.patched, !s.value_before);
            assert_eq!(res.patches.get(&s.fresh_bit) == Some(&true), s.patched);
        }
    }

    #[test]
    fn linear_odd_column() {
        let r = red("default: v(2*n+1)");
        let res = attack_linear(&r, 2, 64, 5).unwrap();
        assert_eq!(res.case_taken, CaseTaken::LinearStage { column: 1 });
        assert_eq!(res.random_column, 0);
        assert!(verify_attack(&r, &res, 64).passed);
    }

    #[test]
    fn linear_no_patch_when_already_one() {
        let r = red("default: 1 ^ v(2*n)");
        let res = attack_linear(&r, 2, 64, 5).unwrap();
        assert!(res.linear_trace.iter().all(|s| s.value_before && !s.patched));
        assert!(res.patches.is_empty());
    }

    #[test]
    fn linear_degenerate_constant() {
        let r = red("default: v(0) ^ 1");
        let res = attack_linear(&r, 2, 64, 1).unwrap();
        // only input 0 sees a fresh bit; it is still a stage construction
        assert_eq!(res.case_taken, CaseTaken::LinearStage { column: 0 });
        let r = red("default: 1");
        let res = attack_linear(&r, 2, 64, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::LinearDegenerate);
        assert!(verify_attack(&r, &res, 64).passed);
    }

    #[test]
    fn linear_rejects_and() {
        let r = red("default: v(n) & v(n+1)");
        assert!(matches!(attack_linear(&r, 2, 8, 1), Err(AdversaryError::NotInClass { class: "linear", .. })));
    }

    #[test]
    fn corrupted_oracle_fails_verification() {
        let r = red("default: v(2*n) ^ v(2*n+1)");
        let mut res = attack_linear(&r, 2, 256, 1).unwrap();
        let flipped = !res.oracle.bit_at(0);
        res.oracle = res.oracle.patched([(0, flipped)].into_iter().collect());
        let rep = verify_attack(&r, &res, 256);
        assert!(!rep.passed);
        assert_eq!(rep.mismatches.len(), 1);
        assert_eq!(rep.mismatches[0].0, 0);
        assert!(rep.oracle_shape_ok);
    }

    #[test]
    fn empty_witness_rejected() {
        let r = red("default: v(2*n) ^ v(2*n+1)");
        let mut res = attack_linear(&r, 2, 32, 1).unwrap();
        res.witness = Witness {
            index_rule: IndexRule::Enumerated { list: vec![], generator: "none".into(), finite_horizon: true },
            claimed_value: true,
            sample: vec![],
        };
        let rep = verify_attack(&r, &res, 32);
        assert!(!rep.passed);
        assert!(rep.oracle_shape_ok);
        assert_eq!(rep.checked, 0);
    }

    #[test]
    fn btt_base_negation() {
        let r = red("default: !v(2*n)");
        let res = attack_btt(&r, 1, 2, 128, 64, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::BttBaseLiteral { column: 0 });
        assert_eq!(res.random_column, 1);
        assert!(res.witness.claimed_value);
        assert_eq!(res.witness.indices(), all(128));
        assert!(verify_attack(&r, &res, 128).passed);
    }

    #[test]
    fn btt_base_constant() {
        let r = red("case n%3==0: v(n)\ndefault: 1");
        let res = attack_btt(&r, 1, 2, 90, 64, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::BttBaseConstant);
        assert_eq!(res.witness.indices().len(), 60);
        assert!(verify_attack(&r, &res, 90).passed);
    }

    #[test]
    fn btt_control_even() {
        let r = red("default: v(4*n) & v(4*n+2)");
        let res = attack_btt(&r, 2, 2, 128, 64, 1).unwrap();
        assert_eq!(res.case_taken, CaseTaken::BttControl { column: 0 });
        assert!(!res.witness.claimed_value);
        assert_eq!(res.witness.indices(), all(128));
        assert_eq!(res.patches.get(&4), Some(&false));
        assert!(res.patches.keys().all(|i| i % 2 == 0));
        assert!(verify_attack(&r, &res, 128).passed);
    }

    #[test]
    fn btt_hardcode_recursion() {
        let r = red("default: v(0) | v(2*n+1)");
        let res = attack_btt(&r, 2, 2, 256, 64, 1).unwrap();
        assert!(matches!(res.case_taken, CaseTaken::BttHardcodeRecursion { depth: 1, .. }));
        assert_eq!(res.recursion.len(), 1);
        assert_eq!(res.recursion[0].h, [0, 1].into_iter().collect());
        assert!(!res.oracle.bit_at(0));
        assert!(res.recursion[0].max_width_after < res.recursion[0].max_width_before);
        assert!(verify_attack(&r, &res, 256).passed);
    }

    #[test]
    fn btt_forcing() {
        // even bits never control x ^ y; the odd bit always forces 1
        let r = red("default: v(2*n) ^ v(2*n+1)");
        let res = attack_btt(&r, 2, 2, 128, 64, 7).unwrap();
        assert_eq!(res.case_taken, CaseTaken::BttForcing);
        assert_eq!(res.random_column, 0);
        assert!(res.witness.claimed_value);
        assert!(res.skipped.is_empty());
        assert!(verify_attack(&r, &res, 128).passed);
    }

    #[test]
    fn btt_width_checked() {
        let r = red("default: v(n) & v(n+1) & v(n+2)");
        assert!(matches!(attack_btt(&r, 2, 2, 16, 8, 1), Err(AdversaryError::WidthExceeds { n: 0, width: 3, c: 2 })));
        assert_eq!(attack_btt(&r, 0, 2, 16, 8, 1).unwrap_err(), AdversaryError::ZeroBound);
    }

    #[test]
    fn pairing_columns_supported() {
        let r = red("default: v(3*n) | v(3*n+1)");
        for cols in [3, 4] {
            let res = attack_positive(&r, cols, 128, 2).unwrap();
            assert!(verify_attack(&r, &res, 128).passed, "columns={cols}");
        }
    }

    #[test]
    fn json_shape() {
        let r = red("default: v(2*n) ^ v(2*n+1)");
        let res = attack_linear(&r, 2, 8, 1).unwrap();
        let j = res.to_json();
        assert_eq!(j["case"], "linear-stage(col=0)");
        assert_eq!(j["witness"]["value"], 1);
        assert!(j["patches"].as_array().unwrap().iter().all(|p| p[1] == 1));
        assert_eq!(j["witness"]["rule"]["kind"], "residue_filter");
    }
}
