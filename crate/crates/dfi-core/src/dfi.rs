//! Explicit flows, trusted objects and the runtime integrity monitor.

use crate::labels::{Label, LabelOrder};
use crate::machine::{Config, Entry, Event};
use crate::parser::show_mu;
use crate::syntax::{Mu, Ty, TyEff, Value, Var};
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorPolicy {
    /// Source names a watched store may be bound to.
    pub watch: BTreeSet<String>,
    pub threshold: Label,
    /// Also watch stores whose creation annotation and creator exceed the threshold.
    pub watch_created: bool,
}

impl MonitorPolicy {
    pub fn names<S: AsRef<str>>(names: &[S], threshold: Label) -> Self {
        MonitorPolicy {
            watch: names.iter().map(|s| s.as_ref().to_string()).collect(),
            threshold,
            watch_created: false,
        }
    }

    pub fn trusted(hypotheses: &[(Var, TyEff)], order: &LabelOrder, threshold: Label) -> Self {
        MonitorPolicy {
            watch: trusted_objects(hypotheses, order, threshold).into_iter().map(|v| v.name.to_string()).collect(),
            threshold,
            watch_created: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub store: String,
    pub names: Vec<String>,
    pub instance: String,
    pub threshold: String,
    /// Entries from the written instance down to the low source.
    pub witness: Vec<String>,
}

fn lookup<'a>(sigma: &'a [Arc<Entry>], x: &Var) -> Option<&'a Entry> {
    sigma.iter().rev().find(|e| e.x == *x).map(|e| e.as_ref())
}

/// The chain of entries witnessing that `x` flows from `l` or lower.
pub fn flow_witness(sigma: &[Arc<Entry>], order: &LabelOrder, x: &Var, l: Label) -> Option<Vec<Entry>> {
    let mut chain = Vec::new();
    let mut cur = x.clone();
    for _ in 0..=sigma.len() {
        let e = lookup(sigma, &cur)?;
        chain.push(e.clone());
        if order.leq(e.src, l) {
            return Some(chain);
        }
        match &e.mu {
            Mu::Value(Value::Var(y)) => cur = y.clone(),
            _ => return None,
        }
    }
    None
}

pub fn flows_from(sigma: &[Arc<Entry>], order: &LabelOrder, x: &Var, l: Label) -> bool {
    flow_witness(sigma, order, x, l).is_some()
}

pub fn trusted_objects(hypotheses: &[(Var, TyEff)], order: &LabelOrder, l: Label) -> BTreeSet<Var> {
    hypotheses
        .iter()
        .filter_map(|(x, t)| match &t.ty {
            Ty::Obj(c) if order.lt(l, order.meet(c.eff, t.eff)) => Some(x.clone()),
            _ => None,
        })
        .collect()
}

pub fn is_watched(cfg: &Config, store: &Var, policy: &MonitorPolicy) -> bool {
    let Some(rec) = cfg.stores.get(store) else { return false };
    let o = &cfg.order;
    rec.aliases.iter().any(|a| policy.watch.contains(a.as_ref()))
        || policy.watch.contains(&store.to_string())
        || (policy.watch_created && o.lt(policy.threshold, o.meet(rec.trust, rec.creator)))
}

/// Check the store touched by `ev` (a write, a creation, or a new alias).
pub fn monitor(ev: &Event, cfg: &Config, policy: &MonitorPolicy) -> Vec<Violation> {
    if !matches!(ev.rule, "write" | "new" | "evaluate") {
        return Vec::new();
    }
    let Some(store) = &ev.store else { return Vec::new() };
    if !is_watched(cfg, store, policy) {
        return Vec::new();
    }
    let rec = &cfg.stores[store];
    match flow_witness(&cfg.sigma, &cfg.order, &rec.content, policy.threshold) {
        None => Vec::new(),
        Some(chain) => vec![Violation {
            store: store.to_string(),
            names: rec.aliases.iter().map(|a| a.to_string()).collect(),
            instance: rec.content.to_string(),
            threshold: cfg.order.name(policy.threshold).to_string(),
            witness: chain
                .iter()
                .map(|e| format!("{}/{}@{}", e.x, show_mu(&e.mu, &cfg.order), cfg.order.name(e.src)))
                .collect(),
        }],
    }
}
