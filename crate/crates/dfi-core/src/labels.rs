//! Integrity labels: a finite total order with a materialized bottom.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label(pub u16);

impl Label {
    pub const BOT: Label = Label(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown label `{0}`")]
    Unknown(String),
    #[error("duplicate label `{0}`")]
    Duplicate(String),
    #[error("label index {0} out of range")]
    OutOfRange(usize),
    #[error("too many labels ({0}, at most 63)")]
    TooMany(usize),
}

/// Ascending order of label names. Index 0 is always `bot`.
///
/// A compromised order keeps all names but identifies every label at or
/// below the collapse point with `bot`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOrder {
    names: Vec<String>,
    collapse: u16,
}

pub const BOT_NAME: &str = "bot";

impl LabelOrder {
    pub fn new<S: AsRef<str>>(declared: &[S]) -> Result<Self, LabelError> {
        let mut names = vec![BOT_NAME.to_string()];
        for n in declared {
            let n = n.as_ref();
            if names.iter().any(|m| m == n) {
                return Err(LabelError::Duplicate(n.to_string()));
            }
            names.push(n.to_string());
        }
        if names.len() > 63 {
            return Err(LabelError::TooMany(names.len()));
        }
        Ok(LabelOrder { names, collapse: 0 })
    }

    /// `n` declared labels named `L1 < L2 < ...`.
    pub fn numbered(n: usize) -> Self {
        let names: Vec<String> = (1..=n).map(|i| format!("L{i}")).collect();
        LabelOrder::new(&names).expect("numbered labels are distinct")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bot(&self) -> Label {
        Label::BOT
    }

    pub fn top(&self) -> Label {
        Label((self.names.len() - 1) as u16)
    }

    pub fn declared(&self) -> &[String] {
        &self.names[1..]
    }

    pub fn lookup(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name).map(|i| Label(i as u16))
    }

    pub fn label(&self, name: &str) -> Result<Label, LabelError> {
        self.lookup(name).ok_or_else(|| LabelError::Unknown(name.to_string()))
    }

    pub fn check(&self, l: Label) -> Result<Label, LabelError> {
        if l.index() < self.names.len() {
            Ok(l)
        } else {
            Err(LabelError::OutOfRange(l.index()))
        }
    }

    pub fn name(&self, l: Label) -> &str {
        &self.names[l.index()]
    }

    pub fn collapse_point(&self) -> Label {
        Label(self.collapse)
    }

    fn rank(&self, l: Label) -> u16 {
        if l.0 <= self.collapse {
            0
        } else {
            l.0
        }
    }

    /// Canonical representative: collapsed labels become `bot`.
    pub fn canon(&self, l: Label) -> Label {
        Label(self.rank(l))
    }

    pub fn leq(&self, a: Label, b: Label) -> bool {
        self.rank(a) <= self.rank(b)
    }

    pub fn lt(&self, a: Label, b: Label) -> bool {
        self.rank(a) < self.rank(b)
    }

    pub fn same(&self, a: Label, b: Label) -> bool {
        self.rank(a) == self.rank(b)
    }

    pub fn meet(&self, a: Label, b: Label) -> Label {
        Label(self.rank(a).min(self.rank(b)))
    }

    pub fn join(&self, a: Label, b: Label) -> Label {
        Label(self.rank(a).max(self.rank(b)))
    }

    pub fn star(&self, l: Label) -> bool {
        self.rank(l) > 0
    }

    pub fn compromise(&self, c: Label) -> Result<LabelOrder, LabelError> {
        self.check(c)?;
        Ok(LabelOrder {
            names: self.names.clone(),
            collapse: self.collapse.max(c.0),
        })
    }

    /// All raw labels, ascending.
    pub fn all(&self) -> impl DoubleEndedIterator<Item = Label> + Clone {
        (0..self.names.len() as u16).map(Label)
    }

    /// Canonical labels only, ascending.
    pub fn distinct(&self) -> impl DoubleEndedIterator<Item = Label> + Clone {
        let c = self.collapse;
        (0..self.names.len() as u16)
            .filter(move |&i| i == 0 || i > c)
            .map(Label)
    }

    pub fn display(&self, l: Label) -> LabelDisplay<'_> {
        LabelDisplay(self, l)
    }
}

pub struct LabelDisplay<'a>(&'a LabelOrder, Label);

impl fmt::Display for LabelDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name(self.1))
    }
}

/// A set of labels as a bitmask over raw indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet(pub u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn full(order: &LabelOrder) -> Self {
        LabelSet(order.distinct().fold(0, |m, l| m | (1u64 << l.0)))
    }

    pub fn singleton(l: Label) -> Self {
        LabelSet(1u64 << l.0)
    }

    pub fn contains(self, l: Label) -> bool {
        self.0 & (1u64 << l.0) != 0
    }

    pub fn insert(&mut self, l: Label) {
        self.0 |= 1u64 << l.0;
    }

    pub fn remove(&mut self, l: Label) {
        self.0 &= !(1u64 << l.0);
    }

    pub fn union(self, o: LabelSet) -> LabelSet {
        LabelSet(self.0 | o.0)
    }

    pub fn inter(self, o: LabelSet) -> LabelSet {
        LabelSet(self.0 & o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn highest(self) -> Option<Label> {
        if self.0 == 0 {
            None
        } else {
            Some(Label(63 - self.0.leading_zeros() as u16))
        }
    }

    /// Members in descending order.
    pub fn descending(self) -> impl Iterator<Item = Label> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = 63 - m.leading_zeros() as u16;
                m &= !(1u64 << i);
                Some(Label(i))
            }
        })
    }
}
