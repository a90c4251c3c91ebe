//! Propositional formulas over natural-number-indexed variables.
//!
//! A [`Formula`] is an [`Expr`] whose atoms are concrete variable indices,
//! together with its sorted set of distinct variables. Everything that needs a
//! truth table (normal forms, semantic classification, control search) is
//! capped at [`WIDTH_CAP`] variables.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Largest width for which a formula is ever expanded into a truth table.
pub const WIDTH_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable index overflow at byte {pos}")]
    IndexOverflow { pos: usize },
    #[error("assignment has no value for variable v({0})")]
    MissingVariable(u64),
    #[error("formula width {width} exceeds the enumeration cap {cap}")]
    WidthCap { width: usize, cap: usize },
    #[error("v({0}) is not a variable of the formula")]
    NotAVariable(u64),
    #[error("{0} node needs at least two children")]
    Arity(&'static str),
}

/// Formula tree, generic over the atom type so the same parser and printer
/// serve both concrete formulas (`Expr<u64>`) and reduction templates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr<A> {
    Var(A),
    Const(bool),
    Not(Box<Expr<A>>),
    And(Vec<Expr<A>>),
    Or(Vec<Expr<A>>),
    Xor(Vec<Expr<A>>),
}

impl<A> Expr<A> {
    pub fn negate(child: Expr<A>) -> Self {
        Expr::Not(Box::new(child))
    }

    pub fn map_atoms<B, E>(&self, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Expr<B>, E> {
        Ok(match self {
            Expr::Var(a) => Expr::Var(f(a)?),
            Expr::Const(b) => Expr::Const(*b),
            Expr::Not(c) => Expr::negate(c.map_atoms(f)?),
            Expr::And(cs) => Expr::And(cs.iter().map(|c| c.map_atoms(f)).collect::<Result<_, _>>()?),
            Expr::Or(cs) => Expr::Or(cs.iter().map(|c| c.map_atoms(f)).collect::<Result<_, _>>()?),
            Expr::Xor(cs) => Expr::Xor(cs.iter().map(|c| c.map_atoms(f)).collect::<Result<_, _>>()?),
        })
    }

    pub fn atoms(&self) -> Vec<&A> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a A>) {
        match self {
            Expr::Var(a) => out.push(a),
            Expr::Const(_) => {}
            Expr::Not(c) => c.collect_atoms(out),
            Expr::And(cs) | Expr::Or(cs) | Expr::Xor(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
        }
    }

    fn check_arity(&self) -> Result<(), FormulaError> {
        match self {
            Expr::Var(_) | Expr::Const(_) => Ok(()),
            Expr::Not(c) => c.check_arity(),
            Expr::And(cs) | Expr::Or(cs) | Expr::Xor(cs) => {
                if cs.len() < 2 {
                    return Err(FormulaError::Arity(self.op_name()));
                }
                cs.iter().try_for_each(|c| c.check_arity())
            }
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Var(_) => "var",
            Expr::Const(_) => "const",
            Expr::Not(_) => "not",
            Expr::And(_) => "and",
            Expr::Or(_) => "or",
            Expr::Xor(_) => "xor",
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(_) => 1,
            Expr::Xor(_) => 2,
            Expr::And(_) => 3,
            Expr::Not(_) => 4,
            Expr::Var(_) | Expr::Const(_) => 5,
        }
    }
}

impl Expr<u64> {
    pub fn eval_with(&self, lookup: &mut impl FnMut(u64) -> bool) -> bool {
        match self {
            Expr::Var(i) => lookup(*i),
            Expr::Const(b) => *b,
            Expr::Not(c) => !c.eval_with(lookup),
            Expr::And(cs) => cs.iter().all(|c| c.eval_with(lookup)),
            Expr::Or(cs) => cs.iter().any(|c| c.eval_with(lookup)),
            Expr::Xor(cs) => cs.iter().fold(false, |acc, c| acc ^ c.eval_with(lookup)),
        }
    }

    /// Constant folding plus duplicate merging: repeated children of `&`/`|`
    /// collapse (idempotence), repeated pairs under `^` cancel. The result
    /// always satisfies the arity invariant.
    pub fn simplify(&self) -> Expr<u64> {
        match self {
            Expr::Var(_) | Expr::Const(_) => self.clone(),
            Expr::Not(c) => match c.simplify() {
                Expr::Const(b) => Expr::Const(!b),
                other => Expr::negate(other),
            },
            Expr::And(cs) => simplify_lattice(cs, true),
            Expr::Or(cs) => simplify_lattice(cs, false),
            Expr::Xor(cs) => {
                let mut parity = false;
                let mut kept: Vec<Expr<u64>> = Vec::new();
                for c in cs.iter().map(Expr::simplify) {
                    match c {
                        Expr::Const(b) => parity ^= b,
                        Expr::Xor(inner) => {
                            // a nested xor only survives simplification with
                            // its constant last; fold it into this level
                            for g in inner {
                                match g {
                                    Expr::Const(b) => parity ^= b,
                                    g => toggle(&mut kept, g),
                                }
                            }
                        }
                        other => toggle(&mut kept, other),
                    }
                }
                match (kept.len(), parity) {
                    (0, p) => Expr::Const(p),
                    (1, false) => kept.pop().unwrap(),
                    (_, p) => {
                        if p {
                            kept.push(Expr::Const(true));
                        }
                        Expr::Xor(kept)
                    }
                }
            }
        }
    }
}

fn toggle(kept: &mut Vec<Expr<u64>>, e: Expr<u64>) {
    if let Some(pos) = kept.iter().position(|k| *k == e) {
        kept.remove(pos);
    } else {
        kept.push(e);
    }
}

/// `is_and` selects the absorbing constant: false for `&`, true for `|`.
fn simplify_lattice(cs: &[Expr<u64>], is_and: bool) -> Expr<u64> {
    let absorbing = !is_and;
    let mut kept: Vec<Expr<u64>> = Vec::new();
    for c in cs.iter().map(Expr::simplify) {
        match c {
            Expr::Const(b) if b == absorbing => return Expr::Const(absorbing),
            Expr::Const(_) => {}
            other => {
                if !kept.contains(&other) {
                    kept.push(other);
                }
            }
        }
    }
    match kept.len() {
        0 => Expr::Const(!absorbing),
        1 => kept.pop().unwrap(),
        _ if is_and => Expr::And(kept),
        _ => Expr::Or(kept),
    }
}

impl<A: fmt::Display> fmt::Display for Expr<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(a) => write!(f, "v({a})"),
            Expr::Const(b) => write!(f, "{}", u8::from(*b)),
            Expr::Not(c) => {
                f.write_str("!")?;
                write_child(f, c, c.precedence() < 4)
            }
            Expr::And(cs) => write_nary(f, self, cs, " & "),
            Expr::Or(cs) => write_nary(f, self, cs, " | "),
            Expr::Xor(cs) => write_nary(f, self, cs, " ^ "),
        }
    }
}

fn write_nary<A: fmt::Display>(
    f: &mut fmt::Formatter<'_>,
    parent: &Expr<A>,
    cs: &[Expr<A>],
    sep: &str,
) -> fmt::Result {
    for (k, c) in cs.iter().enumerate() {
        if k > 0 {
            f.write_str(sep)?;
        }
        // equal precedence means the same operator: keep the nesting explicit
        write_child(f, c, c.precedence() <= parent.precedence())?;
    }
    Ok(())
}

fn write_child<A: fmt::Display>(f: &mut fmt::Formatter<'_>, c: &Expr<A>, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({c})")
    } else {
        write!(f, "{c}")
    }
}

/// Byte cursor shared by the formula, reduction and sequence parsers.
pub struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(text: &'a str) -> Self {
        Cursor { src: text.as_bytes(), pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn set_pos(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    pub fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    pub fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, token: &str) -> Result<(), FormulaError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    pub fn nat(&mut self) -> Result<u64, FormulaError> {
        self.skip_ws();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(d) = self.src.get(self.pos).filter(|b| b.is_ascii_digit()) {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(d - b'0')))
                .ok_or(FormulaError::IndexOverflow { pos: start })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected a natural number".into()));
        }
        Ok(value)
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    pub fn error(&self, msg: String) -> FormulaError {
        FormulaError::Syntax { pos: self.pos, msg }
    }
}

/// Parses a whole expression; `atom` reads the contents of `v( ... )`.
pub fn parse_expr<A>(
    text: &str,
    atom: &mut impl FnMut(&mut Cursor<'_>) -> Result<A, FormulaError>,
) -> Result<Expr<A>, FormulaError> {
    let mut cur = Cursor::new(text);
    let e = parse_or(&mut cur, atom)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input".into()));
    }
    Ok(e)
}

type AtomFn<'f, A> = dyn FnMut(&mut Cursor<'_>) -> Result<A, FormulaError> + 'f;

fn parse_or<A>(cur: &mut Cursor<'_>, atom: &mut AtomFn<'_, A>) -> Result<Expr<A>, FormulaError> {
    let mut items = vec![parse_xor(cur, atom)?];
    while cur.eat("|") {
        items.push(parse_xor(cur, atom)?);
    }
    Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::Or(items) })
}

fn parse_xor<A>(cur: &mut Cursor<'_>, atom: &mut AtomFn<'_, A>) -> Result<Expr<A>, FormulaError> {
    let mut items = vec![parse_and(cur, atom)?];
    while cur.eat("^") {
        items.push(parse_and(cur, atom)?);
    }
    Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::Xor(items) })
}

fn parse_and<A>(cur: &mut Cursor<'_>, atom: &mut AtomFn<'_, A>) -> Result<Expr<A>, FormulaError> {
    let mut items = vec![parse_unary(cur, atom)?];
    while cur.eat("&") {
        items.push(parse_unary(cur, atom)?);
    }
    Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::And(items) })
}

fn parse_unary<A>(cur: &mut Cursor<'_>, atom: &mut AtomFn<'_, A>) -> Result<Expr<A>, FormulaError> {
    if cur.eat("!") {
        return Ok(Expr::negate(parse_unary(cur, atom)?));
    }
    match cur.peek() {
        Some(b'(') => {
            cur.expect("(")?;
            let e = parse_or(cur, atom)?;
            cur.expect(")")?;
            Ok(e)
        }
        Some(b'v') => {
            cur.expect("v")?;
            cur.expect("(")?;
            let a = atom(cur)?;
            cur.expect(")")?;
            Ok(Expr::Var(a))
        }
        Some(b'0'..=b'9') => {
            let start = cur.pos();
            match cur.nat()? {
                0 => Ok(Expr::Const(false)),
                1 => Ok(Expr::Const(true)),
                _ => Err(FormulaError::Syntax { pos: start, msg: "constants are 0 or 1".into() }),
            }
        }
        Some(_) => Err(cur.error("expected `!`, `(`, `v(` or a constant".into())),
        None => Err(cur.error("unexpected end of input".into())),
    }
}

/// Partial map from variable index to bit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Assignment(BTreeMap<u64, bool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, var: u64, bit: bool) {
        self.0.insert(var, bit);
    }

    pub fn get(&self, var: u64) -> Option<bool> {
        self.0.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, bool)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

impl FromIterator<(u64, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (u64, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// A formula over concrete variable indices with its cached variable set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    root: Expr<u64>,
    vars: Vec<u64>,
}

impl Formula {
    pub fn new(root: Expr<u64>) -> Result<Self, FormulaError> {
        root.check_arity()?;
        let vars: BTreeSet<u64> = root.atoms().into_iter().copied().collect();
        Ok(Formula { root, vars: vars.into_iter().collect() })
    }

    pub fn constant(b: bool) -> Self {
        Formula { root: Expr::Const(b), vars: Vec::new() }
    }

    pub fn var(i: u64) -> Self {
        Formula { root: Expr::Var(i), vars: vec![i] }
    }

    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let root = parse_expr(text, &mut |c: &mut Cursor<'_>| c.nat())?;
        Formula::new(root)
    }

    pub fn root(&self) -> &Expr<u64> {
        &self.root
    }

    /// Sorted distinct variable indices.
    pub fn vars(&self) -> &[u64] {
        &self.vars
    }

    pub fn width(&self) -> usize {
        self.vars.len()
    }

    pub fn eval(&self, a: &Assignment) -> Result<bool, FormulaError> {
        if let Some(&missing) = self.vars.iter().find(|v| a.get(**v).is_none()) {
            return Err(FormulaError::MissingVariable(missing));
        }
        Ok(self.root.eval_with(&mut |i| a.get(i).unwrap_or(false)))
    }

    pub fn eval_with(&self, lookup: impl FnMut(u64) -> bool) -> bool {
        let mut lookup = lookup;
        self.root.eval_with(&mut lookup)
    }

    pub fn simplified(&self) -> Formula {
        Formula::new(self.root.simplify()).expect("simplify preserves arity")
    }

    /// Replace each listed variable by a constant, then constant-fold.
    pub fn substitute(&self, consts: &BTreeMap<u64, bool>) -> Formula {
        let replaced: Expr<u64> = map_vars(&self.root, &mut |i| match consts.get(&i) {
            Some(b) => Expr::Const(*b),
            None => Expr::Var(i),
        });
        Formula::new(replaced.simplify()).expect("simplify preserves arity")
    }

    /// Truth table indexed so that bit `k` of the row number is the value of
    /// `vars()[k]`.
    pub fn truth_table(&self) -> Result<Vec<bool>, FormulaError> {
        self.check_cap()?;
        let w = self.width();
        Ok((0..1usize << w)
            .map(|row| self.eval_with(|i| row >> self.position(i) & 1 == 1))
            .collect())
    }

    fn position(&self, var: u64) -> usize {
        self.vars.binary_search(&var).expect("variable of this formula")
    }

    fn check_cap(&self) -> Result<(), FormulaError> {
        if self.width() > WIDTH_CAP {
            Err(FormulaError::WidthCap { width: self.width(), cap: WIDTH_CAP })
        } else {
            Ok(())
        }
    }

    /// Essential variables of an affine formula: those whose single flip from
    /// the all-zero point changes the output. Exact for affine functions and
    /// needs no truth table.
    pub fn affine_support(&self) -> Vec<u64> {
        let base = self.eval_with(|_| false);
        self.vars
            .iter()
            .copied()
            .filter(|&v| self.eval_with(|i| i == v) != base)
            .collect()
    }
}

fn map_vars(e: &Expr<u64>, f: &mut impl FnMut(u64) -> Expr<u64>) -> Expr<u64> {
    match e {
        Expr::Var(i) => f(*i),
        Expr::Const(b) => Expr::Const(*b),
        Expr::Not(c) => Expr::negate(map_vars(c, f)),
        Expr::And(cs) => Expr::And(cs.iter().map(|c| map_vars(c, f)).collect()),
        Expr::Or(cs) => Expr::Or(cs.iter().map(|c| map_vars(c, f)).collect()),
        Expr::Xor(cs) => Expr::Xor(cs.iter().map(|c| map_vars(c, f)).collect()),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Literal {
    pub var: u64,
    pub negated: bool,
}

impl Literal {
    fn to_expr(self) -> Expr<u64> {
        if self.negated {
            Expr::negate(Expr::Var(self.var))
        } else {
            Expr::Var(self.var)
        }
    }
}

/// A disjunction of literals; the empty clause is false.
pub type Clause = Vec<Literal>;

/// Conjunctive normal form as the full set of prime implicates, each clause
/// sorted, clauses sorted. A constant-true formula has no clauses; a
/// constant-false formula has the single empty clause.
pub fn cnf_clauses(f: &Formula) -> Result<Vec<Clause>, FormulaError> {
    let table = f.truth_table()?;
    let w = f.width();
    let full: u32 = if w == 0 { 0 } else { (1u32 << w) - 1 };

    // Quine-McCluskey over the zero set: each maximal all-zero subcube is a
    // prime implicate.
    let mut level: BTreeSet<(u32, u32)> = table
        .iter()
        .enumerate()
        .filter(|(_, v)| !**v)
        .map(|(row, _)| (full, row as u32))
        .collect();
    let mut primes: BTreeSet<(u32, u32)> = BTreeSet::new();
    while !level.is_empty() {
        let lookup: HashSet<(u32, u32)> = level.iter().copied().collect();
        let mut next = BTreeSet::new();
        let mut merged = HashSet::new();
        for &(mask, val) in &level {
            for b in 0..w {
                let bit = 1u32 << b;
                if mask & bit == 0 {
                    continue;
                }
                if lookup.contains(&(mask, val ^ bit)) {
                    next.insert((mask & !bit, val & !bit));
                    merged.insert((mask, val));
                }
            }
        }
        primes.extend(level.iter().filter(|c| !merged.contains(c)));
        level = next;
    }

    let vars = f.vars();
    let mut clauses: Vec<Clause> = primes
        .into_iter()
        .map(|(mask, val)| {
            (0..w)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| Literal { var: vars[b], negated: val >> b & 1 == 1 })
                .collect()
        })
        .collect();
    clauses.sort();
    Ok(clauses)
}

pub fn to_cnf(f: &Formula) -> Result<Formula, FormulaError> {
    let clauses = cnf_clauses(f)?;
    let mut conj: Vec<Expr<u64>> = clauses
        .into_iter()
        .map(|clause| {
            let mut lits: Vec<Expr<u64>> = clause.into_iter().map(Literal::to_expr).collect();
            match lits.len() {
                0 => Expr::Const(false),
                1 => lits.pop().unwrap(),
                _ => Expr::Or(lits),
            }
        })
        .collect();
    let root = match conj.len() {
        0 => Expr::Const(true),
        1 => conj.pop().unwrap(),
        _ => Expr::And(conj),
    };
    Formula::new(root)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassReport {
    pub syntactically_positive: bool,
    pub syntactically_linear: bool,
    pub conjunctive: bool,
    pub disjunctive: bool,
    pub many_one_shape: bool,
    pub negation_only: bool,
    pub width: usize,
    /// `None` when the width exceeds [`WIDTH_CAP`].
    pub semantically_monotone: Option<bool>,
    pub semantically_affine: Option<bool>,
}

/// Connectives allowed by a syntactic class.
#[derive(Clone, Copy)]
struct Allowed {
    not: bool,
    and: bool,
    or: bool,
    xor: bool,
}

fn uses_only(e: &Expr<u64>, ok: Allowed) -> bool {
    match e {
        Expr::Var(_) | Expr::Const(_) => true,
        Expr::Not(c) => ok.not && uses_only(c, ok),
        Expr::And(cs) => ok.and && cs.iter().all(|c| uses_only(c, ok)),
        Expr::Or(cs) => ok.or && cs.iter().all(|c| uses_only(c, ok)),
        Expr::Xor(cs) => ok.xor && cs.iter().all(|c| uses_only(c, ok)),
    }
}

pub fn classify_formula(f: &Formula) -> ClassReport {
    let root = f.root();
    let none = Allowed { not: false, and: false, or: false, xor: false };
    let (monotone, affine) = match f.truth_table() {
        Ok(t) => (Some(is_monotone(&t, f.width())), Some(is_affine(&t, f.width()))),
        Err(_) => (None, None),
    };
    ClassReport {
        syntactically_positive: uses_only(root, Allowed { and: true, or: true, ..none }),
        syntactically_linear: uses_only(root, Allowed { xor: true, not: true, ..none }),
        conjunctive: uses_only(root, Allowed { and: true, ..none }),
        disjunctive: uses_only(root, Allowed { or: true, ..none }),
        many_one_shape: matches!(root, Expr::Var(_)),
        negation_only: uses_only(root, Allowed { not: true, ..none }),
        width: f.width(),
        semantically_monotone: monotone,
        semantically_affine: affine,
    }
}

fn is_monotone(table: &[bool], w: usize) -> bool {
    (0..table.len()).all(|row| {
        (0..w).all(|b| row >> b & 1 == 1 || table[row] <= table[row | 1 << b])
    })
}

/// Algebraic normal form degree at most one.
fn is_affine(table: &[bool], w: usize) -> bool {
    let mut anf = table.to_vec();
    for b in 0..w {
        for row in 0..anf.len() {
            if row >> b & 1 == 1 {
                anf[row] ^= anf[row ^ (1 << b)];
            }
        }
    }
    anf.iter().enumerate().all(|(mono, c)| !c || mono.count_ones() <= 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlCertificate {
    pub controlled_vars: Vec<u64>,
    pub setting: Assignment,
    pub forced_value: bool,
}

impl ControlCertificate {
    /// Re-checks the certificate over every completion of the free variables.
    pub fn holds_for(&self, f: &Formula) -> bool {
        let free: Vec<u64> = f
            .vars()
            .iter()
            .copied()
            .filter(|v| self.setting.get(*v).is_none())
            .collect();
        if free.len() > WIDTH_CAP {
            return false;
        }
        (0..1u64 << free.len()).all(|m| {
            let value = f.eval_with(|i| match self.setting.get(i) {
                Some(b) => b,
                None => {
                    let k = free.binary_search(&i).expect("free variable");
                    m >> k & 1 == 1
                }
            });
            value == self.forced_value
        })
    }
}

/// Searches settings of `controlled` in lexicographic order (first listed
/// variable most significant, 0 before 1) and returns the first one that
/// fixes the formula's value under every completion.
pub fn find_control(f: &Formula, controlled: &[u64]) -> Result<Option<ControlCertificate>, FormulaError> {
    let chosen: Vec<u64> = controlled.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if let Some(&bad) = chosen.iter().find(|v| f.vars().binary_search(v).is_err()) {
        return Err(FormulaError::NotAVariable(bad));
    }
    let table = f.truth_table()?;
    let positions: Vec<usize> = chosen.iter().map(|v| f.position(*v)).collect();
    let ctrl_mask: usize = positions.iter().map(|p| 1usize << p).sum();
    let k = chosen.len();

    for setting in 0..1usize << k {
        let mut fixed = 0usize;
        for (idx, p) in positions.iter().enumerate() {
            if setting >> (k - 1 - idx) & 1 == 1 {
                fixed |= 1 << p;
            }
        }
        let mut values = (0..table.len()).filter(|row| row & ctrl_mask == fixed).map(|row| table[row]);
        let first = values.next().expect("at least one completion");
        if values.all(|v| v == first) {
            let setting: Assignment = chosen
                .iter()
                .zip(&positions)
                .map(|(v, p)| (*v, fixed >> p & 1 == 1))
                .collect();
            return Ok(Some(ControlCertificate { controlled_vars: chosen, setting, forced_value: first }));
        }
    }
    Ok(None)
}
