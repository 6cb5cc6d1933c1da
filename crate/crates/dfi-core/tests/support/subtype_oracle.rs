use dfi_core::labels::{Label, LabelOrder};
use dfi_core::subtype::{holds, satisfiable, well_formed, SType, Sub};
use dfi_core::syntax::{Ty, TyEff};
use proptest::prelude::*;

fn order() -> LabelOrder {
    LabelOrder::new(&["Low", "High"]).unwrap()
}

/// Every well-formed ground type of depth at most `d`.
fn universe(o: &LabelOrder, d: usize) -> Vec<Ty> {
    if d == 0 {
        return vec![Ty::Unit];
    }
    let inner = universe(o, d - 1);
    let mut out = vec![Ty::Unit];
    for t in &inner {
        for s in o.all() {
            out.push(Ty::Obj(Box::new(TyEff::new(t.clone(), s))));
        }
        for p in o.all() {
            for e in o.all().filter(|e| o.leq(*e, p)) {
                out.push(Ty::Bin(p, Box::new(TyEff::new(t.clone(), e))));
            }
        }
    }
    out
}

fn label() -> impl Strategy<Value = Label> {
    (0u16..3).prop_map(Label)
}

fn leaf() -> impl Strategy<Value = SType> {
    prop_oneof![Just(SType::Unit), Just(SType::Var(0)), Just(SType::Var(1))]
}

fn stype() -> impl Strategy<Value = SType> {
    leaf().prop_recursive(2, 6, 1, |inner| {
        prop_oneof![
            2 => leaf(),
            1 => (inner.clone(), label()).prop_map(|(t, s)| SType::Obj(Box::new(t), s)),
            2 => (label(), inner, label()).prop_map(|(p, t, e)| SType::Bin(p, Box::new(t), e)),
        ]
    })
}

fn brute(subs: &[Sub], u: &[Ty], o: &LabelOrder) -> bool {
    u.iter().any(|a| u.iter().any(|b| holds(subs, &[(0, a.clone()), (1, b.clone())], o)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn agrees_with_exhaustive_assignment(subs in prop::collection::vec((stype(), stype()).prop_map(|(a, b)| Sub(a, b)), 1..4)) {
        let o = order();
        let u = universe(&o, 2);
        match satisfiable(&subs, &o) {
            Ok(w) => {
                let mut full = w.clone();
                for v in [0, 1] {
                    if !full.iter().any(|(x, _)| *x == v) {
                        full.push((v, Ty::Unit));
                    }
                }
                prop_assert!(full.iter().all(|(_, t)| well_formed(t, &o)));
                prop_assert!(holds(&subs, &full, &o), "witness {:?} fails", w);
            }
            Err(e) => prop_assert!(!brute(&subs, &u, &o), "solver says unsat ({}) but an assignment exists", e),
        }
    }
}
