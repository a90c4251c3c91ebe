use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use redlab::adversary::{attack_btt, attack_linear, attack_positive, verify_attack, IndexRule};
use redlab::bitseq::{column, direct_sum, join, join_along, pair, unpair, BitSeq, Encoding, IndexSet};
use redlab::formula::{classify_formula, find_control, Expr, Formula};
use redlab::reduction::{classify_reduction, greedy_disjoint, Reduction};

fn expr(depth: u32) -> BoxedStrategy<Expr<u64>> {
    let leaf = prop_oneof![9 => (0u64..8).prop_map(Expr::Var), 1 => any::<bool>().prop_map(Expr::Const)];
    leaf.prop_recursive(depth, 32, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Or),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Xor),
            inner.prop_map(Expr::negate),
        ]
    })
    .boxed()
}

fn positive_expr() -> BoxedStrategy<Expr<u64>> {
    (0u64..8)
        .prop_map(Expr::Var)
        .prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::And),
                prop::collection::vec(inner, 2..4).prop_map(Expr::Or),
            ]
        })
        .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(e in expr(4)) {
        let f = Formula::new(e).unwrap();
        let printed = f.to_string();
        let back = Formula::parse(&printed).unwrap();
        prop_assert_eq!(back.root(), f.root());
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn positive_implies_monotone(e in positive_expr()) {
        let c = classify_formula(&Formula::new(e).unwrap());
        prop_assert!(c.syntactically_positive);
        prop_assert_eq!(c.semantically_monotone, Some(true));
    }

    #[test]
    fn linear_implies_affine(e in expr(3)) {
        let c = classify_formula(&Formula::new(e).unwrap());
        if c.syntactically_linear {
            prop_assert_eq!(c.semantically_affine, Some(true));
        }
    }

    #[test]
    fn control_certificates_hold(e in expr(4), pick in prop::collection::vec(any::<bool>(), 8)) {
        let f = Formula::new(e).unwrap();
        let c: Vec<u64> = f.vars().iter().copied().zip(&pick).filter(|(_, p)| **p).map(|(v, _)| v).take(4).collect();
        match find_control(&f, &c).unwrap() {
            Some(cert) => prop_assert!(cert.holds_for(&f)),
            None => {
                let others: Vec<u64> = f.vars().iter().copied().filter(|v| !c.contains(v)).collect();
                for s in 0..1u64 << c.len() {
                    let fixed: BTreeMap<u64, bool> = c.iter().enumerate().map(|(i, v)| (*v, s >> i & 1 == 1)).collect();
                    let values: BTreeSet<bool> = (0..1u64 << others.len())
                        .map(|m| f.eval_with(|x| match fixed.get(&x) {
                            Some(b) => *b,
                            None => m >> others.iter().position(|o| *o == x).unwrap() & 1 == 1,
                        }))
                        .collect();
                    prop_assert_eq!(values.len(), 2);
                }
            }
        }
    }

    #[test]
    fn join_and_sum_columns(s in any::<u64>(), t in any::<u64>()) {
        let (a, b) = (BitSeq::prng(s), BitSeq::prng(t));
        let j = join(&a, &b);
        let c0 = column(&j, 0, Encoding::Parity).unwrap();
        let c1 = column(&j, 1, Encoding::Parity).unwrap();
        prop_assert_eq!(c0.prefix(512), a.prefix(512));
        prop_assert_eq!(c1.prefix(512), b.prefix(512));
        let cols: Vec<BitSeq> = (0..8).map(|i| BitSeq::prng(s ^ i)).collect();
        let sum = direct_sum(cols.clone());
        for (i, col) in cols.iter().enumerate() {
            for p in 0..8 {
                prop_assert_eq!(sum.bit_at(pair(i as u64, p).unwrap()), col.bit_at(p));
            }
        }
    }

    #[test]
    fn join_along_restrictions(s in any::<u64>(), t in any::<u64>()) {
        let (a, b) = (BitSeq::prng(s), BitSeq::prng(t));
        for z in [IndexSet::Evens, IndexSet::ArithmeticProgression { a: 3, b: 1 }] {
            let r = join_along(&z, &a, &b);
            let on: Vec<u64> = (0..768).filter(|m| z.contains(*m)).take(256).collect();
            let off: Vec<u64> = (0..1024).filter(|m| !z.contains(*m)).take(256).collect();
            for (k, m) in on.iter().enumerate() {
                prop_assert_eq!(r.bit_at(*m), b.bit_at(k as u64));
            }
            for (k, m) in off.iter().enumerate() {
                prop_assert_eq!(r.bit_at(*m), a.bit_at(k as u64));
            }
        }
    }
}

#[test]
fn pairing_bijective_below_2_16() {
    for k in 0..1u64 << 16 {
        let (i, n) = unpair(k);
        assert_eq!(pair(i, n).unwrap(), k);
    }
}

#[test]
fn prng_determinism() {
    assert_eq!(BitSeq::prng(77).prefix(100_000), BitSeq::prng(77).prefix(100_000));
}

fn template(atoms: &[(u64, u64)], op: &str, neg: &[bool]) -> String {
    let lits: Vec<String> = atoms
        .iter()
        .zip(neg)
        .map(|((a, b), n)| format!("{}v({a}*n+{b})", if *n { "!" } else { "" }))
        .collect();
    format!("default: {}", lits.join(op))
}

fn atoms(max: usize) -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((0u64..4, 0u64..8), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn greedy_disjoint_and_minimal(at in atoms(4), neg in prop::collection::vec(any::<bool>(), 4), window in 2u64..40) {
        let r = Reduction::parse(&template(&at, " & ", &neg)).unwrap();
        let g = greedy_disjoint(&r, 256, window).unwrap();
        let q = |n: u64| -> BTreeSet<u64> { r.query_set(n).unwrap().into_iter().collect() };
        let mut union = BTreeSet::new();
        for w in g.selected.windows(2) {
            union.extend(q(w[0]));
            prop_assert!(q(w[1]).is_disjoint(&union));
            for n in w[0] + 1..w[1] {
                prop_assert!(!q(n).is_disjoint(&union), "n={} skipped", n);
            }
        }
    }

    #[test]
    fn hardcode_equivalence(at in atoms(3), neg in prop::collection::vec(any::<bool>(), 3),
                            h in prop::collection::btree_set(0u64..64, 0..10), seed in any::<u64>()) {
        let r = Reduction::parse(&template(&at, " | ", &neg)).unwrap();
        let x = BitSeq::prng(seed).patched(h.iter().map(|i| (*i, false)).collect());
        let hat = r.hardcode(&h);
        for n in 0..128 {
            prop_assert_eq!(r.apply(&x, n).unwrap(), hat.apply(&x, n).unwrap());
        }
    }

    #[test]
    fn width_drops_after_stall(at in atoms(3), neg in prop::collection::vec(any::<bool>(), 3), window in 2u64..20) {
        let r = Reduction::parse(&template(&at, " & ", &neg)).unwrap();
        let g = greedy_disjoint(&r, 256, window).unwrap();
        if g.stalled {
            let h = g.h_set();
            let last = *g.selected.last().unwrap();
            let hits_all = (last + 1..256).all(|n| r.query_set(n).unwrap().iter().any(|x| h.contains(x)));
            if hits_all {
                let hat = r.hardcode(&h);
                for n in last + 1..256 {
                    let (d, e) = (r.instantiate(n).unwrap().width(), hat.instantiate(n).unwrap().width());
                    prop_assert!(e < d, "n={} e={} d={}", n, e, d);
                }
            }
        }
    }

    #[test]
    fn linear_single_flip(at in atoms(3), one in any::<bool>(), seed in any::<u64>()) {
        let mut text = template(&at, " ^ ", &[false; 3]);
        if one {
            text.push_str(" ^ 1");
        }
        let r = Reduction::parse(&text).unwrap();
        prop_assert!(classify_reduction(&r, 128).unwrap().all_linear);
        let x = BitSeq::prng(seed);
        for n in 0..128 {
            let base = r.apply(&x, n).unwrap();
            for q in r.query_set(n).unwrap() {
                let y = x.patched([(q, !x.bit_at(q))].into_iter().collect());
                prop_assert_ne!(r.apply(&y, n).unwrap(), base);
            }
        }
    }

    #[test]
    fn positive_attacks_verify(at in atoms(3), conj in any::<bool>(), columns in 2u64..5, seed in any::<u64>()) {
        let r = Reduction::parse(&template(&at, if conj { " & " } else { " | " }, &[false; 3])).unwrap();
        if let Ok(res) = attack_positive(&r, columns, 128, seed) {
            prop_assert!(verify_attack(&r, &res, 128).passed);
            check_rule(&res.witness.index_rule);
        }
    }

    #[test]
    fn linear_attacks_verify(at in atoms(3), one in any::<bool>(), columns in 2u64..5, seed in any::<u64>()) {
        let mut text = template(&at, " ^ ", &[false; 3]);
        if one {
            text.push_str(" ^ 1");
        }
        let r = Reduction::parse(&text).unwrap();
        let res = attack_linear(&r, columns, 128, seed).unwrap();
        prop_assert!(verify_attack(&r, &res, 128).passed);
        // flipping a fresh bit flips the output of its own stage
        for st in &res.linear_trace {
            let flipped = res.oracle.patched([(st.fresh_bit, !res.oracle.bit_at(st.fresh_bit))].into_iter().collect());
            prop_assert_ne!(r.apply(&flipped, st.n).unwrap(), r.apply(&res.oracle, st.n).unwrap());
        }
    }

    #[test]
    fn btt_attacks_verify(at in atoms(3), neg in prop::collection::vec(any::<bool>(), 3), op in 0usize..3, seed in any::<u64>()) {
        let ops = [" & ", " | ", " ^ "];
        let r = Reduction::parse(&template(&at, ops[op], &neg)).unwrap();
        let c = classify_reduction(&r, 128).unwrap().max_width.max(1);
        if let Ok(res) = attack_btt(&r, c, 2, 128, 16, seed) {
            prop_assert!(verify_attack(&r, &res, 128).passed, "{}", res.case_taken);
            prop_assert!(res.recursion.len() < c);
            for l in &res.recursion {
                prop_assert!(l.max_width_after < l.max_width_before);
            }
            check_rule(&res.witness.index_rule);
        }
    }
}

fn check_rule(rule: &IndexRule) {
    match rule {
        IndexRule::ArithmeticProgression { a, .. } => assert!(*a > 0),
        IndexRule::ResidueFilter { m, .. } => assert!(*m > 0),
        IndexRule::Enumerated { .. } => {}
    }
}
