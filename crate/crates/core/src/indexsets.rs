//! Multi-index lattices and downward-closed sets.
//!
//! A [`DownwardClosedSet`] describes a polynomial space through the exponents of
//! its tensor basis functions. Members are kept in lexicographic order so that
//! every traversal (and every tie-break built on top of one) is deterministic.
//! The admissible frontier is cached and updated on insertion, since the
//! adaptive algorithm queries it once per step.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A fixed-length tuple of non-negative integers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Box<[u32]>);

impl MultiIndex {
    pub fn new(entries: impl Into<Vec<u32>>) -> Self {
        MultiIndex(entries.into().into_boxed_slice())
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim].into_boxed_slice())
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        MultiIndex(e.into_boxed_slice())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().map(|&e| e as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b)
    }

    pub fn step_up(&self, axis: usize) -> MultiIndex {
        let mut e = self.0.to_vec();
        e[axis] += 1;
        MultiIndex::new(e)
    }

    pub fn step_down(&self, axis: usize) -> Option<MultiIndex> {
        if self.0[axis] == 0 {
            return None;
        }
        let mut e = self.0.to_vec();
        e[axis] -= 1;
        Some(MultiIndex::new(e))
    }

    /// Splits off the trailing coordinate: `(k, l)` for an adaptive space-level index.
    pub fn split_last(&self) -> (MultiIndex, u32) {
        let (last, head) = self.0.split_last().expect("non-empty multi-index");
        (MultiIndex::new(head.to_vec()), *last)
    }

    pub fn with_last(&self, last: u32) -> MultiIndex {
        let mut e = self.0.to_vec();
        e.push(last);
        MultiIndex::new(e)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let entries = trimmed
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("bad multi-index entry {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::Parse("empty multi-index".into()));
        }
        Ok(MultiIndex::new(entries))
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v)
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(v: [u32; N]) -> Self {
        MultiIndex::new(v.to_vec())
    }
}

/// A finite downward-closed subset of ℕ^d.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SetRepr", into = "SetRepr")]
pub struct DownwardClosedSet {
    dim: usize,
    members: BTreeSet<MultiIndex>,
    frontier: BTreeSet<MultiIndex>,
}

#[derive(Serialize, Deserialize)]
struct SetRepr {
    dim: usize,
    members: Vec<MultiIndex>,
}

impl TryFrom<SetRepr> for DownwardClosedSet {
    type Error = Error;

    fn try_from(r: SetRepr) -> Result<Self> {
        DownwardClosedSet::from_indices(r.dim, r.members)
    }
}

impl From<DownwardClosedSet> for SetRepr {
    fn from(s: DownwardClosedSet) -> Self {
        SetRepr {
            dim: s.dim,
            members: s.members.into_iter().collect(),
        }
    }
}

impl fmt::Debug for DownwardClosedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members.iter()).finish()
    }
}

impl DownwardClosedSet {
    pub fn empty(dim: usize) -> Self {
        let mut frontier = BTreeSet::new();
        frontier.insert(MultiIndex::zeros(dim));
        DownwardClosedSet {
            dim,
            members: BTreeSet::new(),
            frontier,
        }
    }

    /// Validates dimensions and closure.
    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = MultiIndex>) -> Result<Self> {
        let mut members = BTreeSet::new();
        for idx in indices {
            check_dim(dim, idx.dim())?;
            members.insert(idx);
        }
        if !closed(&members) {
            return Err(Error::NotDownwardClosed);
        }
        let frontier = compute_frontier(dim, &members);
        Ok(DownwardClosedSet {
            dim,
            members,
            frontier,
        })
    }

    pub fn total_degree(dim: usize, degree: u32) -> Self {
        total_degree_set(dim, degree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.members.contains(idx)
    }

    /// Members in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> + '_ {
        self.members.iter()
    }

    /// Indices that can be added individually while keeping the set downward closed.
    pub fn admissible(&self) -> &BTreeSet<MultiIndex> {
        &self.frontier
    }

    pub fn is_admissible(&self, idx: &MultiIndex) -> bool {
        self.frontier.contains(idx)
    }

    /// Adds an admissible index.
    pub fn insert(&mut self, idx: MultiIndex) -> Result<()> {
        check_dim(self.dim, idx.dim())?;
        if !self.frontier.remove(&idx) {
            return Err(Error::Precondition(format!("{idx:?} is not admissible")));
        }
        for axis in 0..self.dim {
            let up = idx.step_up(axis);
            if self.frontier.contains(&up) {
                continue;
            }
            let admissible = (0..self.dim).all(|j| match up.step_down(j) {
                Some(below) => below == idx || self.members.contains(&below),
                None => true,
            });
            if admissible {
                self.frontier.insert(up);
            }
        }
        self.members.insert(idx);
        Ok(())
    }

    /// Members of `self` that differ from `idx` by exactly one in a single coordinate.
    pub fn neighbors(&self, idx: &MultiIndex) -> Vec<MultiIndex> {
        neighbors(idx, self)
    }

    /// Largest exponent per coordinate (zero for an empty set).
    pub fn max_per_axis(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for m in &self.members {
            for (o, &e) in out.iter_mut().zip(m.entries()) {
                *o = (*o).max(e);
            }
        }
        out
    }

    /// One comma-separated tuple per line, lexicographic order.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for m in &self.members {
            s.push_str(&m.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_lines(dim: usize, text: &str) -> Result<Self> {
        let indices = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<MultiIndex>>>()?;
        Self::from_indices(dim, indices)
    }
}

fn closed(members: &BTreeSet<MultiIndex>) -> bool {
    // Checking immediate predecessors suffices: every q <= p is reached by unit steps down.
    members.iter().all(|p| {
        (0..p.dim()).all(|j| match p.step_down(j) {
            Some(q) => members.contains(&q),
            None => true,
        })
    })
}

fn compute_frontier(dim: usize, members: &BTreeSet<MultiIndex>) -> BTreeSet<MultiIndex> {
    let mut frontier = BTreeSet::new();
    if members.is_empty() {
        frontier.insert(MultiIndex::zeros(dim));
        return frontier;
    }
    for p in members {
        for axis in 0..dim {
            let up = p.step_up(axis);
            if members.contains(&up) {
                continue;
            }
            let ok = (0..dim).all(|j| match up.step_down(j) {
                Some(q) => members.contains(&q),
                None => true,
            });
            if ok {
                frontier.insert(up);
            }
        }
    }
    frontier
}

/// Whether `indices` is closed under the componentwise order.
pub fn is_downward_closed(indices: &[MultiIndex]) -> Result<bool> {
    let Some(first) = indices.first() else {
        return Ok(true);
    };
    let dim = first.dim();
    for idx in indices {
        check_dim(dim, idx.dim())?;
    }
    let members: BTreeSet<MultiIndex> = indices.iter().cloned().collect();
    Ok(closed(&members))
}

/// `{η ∈ ℕ^d : |η|₁ ≤ degree}`, of cardinality `binomial(degree + d, d)`.
pub fn total_degree_set(dim: usize, degree: u32) -> DownwardClosedSet {
    let mut members = BTreeSet::new();
    let mut current = vec![0u32; dim];
    fill_total_degree(&mut current, 0, degree, &mut members);
    let frontier = compute_frontier(dim, &members);
    DownwardClosedSet {
        dim,
        members,
        frontier,
    }
}

fn fill_total_degree(current: &mut Vec<u32>, axis: usize, budget: u32, out: &mut BTreeSet<MultiIndex>) {
    if axis == current.len() {
        out.insert(MultiIndex::new(current.clone()));
        return;
    }
    for e in 0..=budget {
        current[axis] = e;
        fill_total_degree(current, axis + 1, budget - e, out);
    }
    current[axis] = 0;
}

/// Exponents spanning the dyadic block `P_k`: the product over coordinates of
/// `[2^{k_j} − 1, 2^{k_j + 1} − 1)`, in lexicographic order.
pub fn block_indices(k: &MultiIndex) -> Vec<MultiIndex> {
    let ranges: Vec<(u32, u32)> = k
        .entries()
        .iter()
        .map(|&kj| ((1u32 << kj) - 1, (1u32 << (kj + 1)) - 1))
        .collect();
    let mut out = Vec::with_capacity(block_size(k));
    let mut current: Vec<u32> = ranges.iter().map(|r| r.0).collect();
    if ranges.is_empty() {
        return vec![MultiIndex::new(Vec::new())];
    }
    loop {
        out.push(MultiIndex::new(current.clone()));
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            current[axis] += 1;
            if current[axis] < ranges[axis].1 {
                break;
            }
            current[axis] = ranges[axis].0;
        }
    }
}

pub fn block_size(k: &MultiIndex) -> usize {
    k.entries().iter().map(|&kj| 1usize << kj).product()
}

/// Union of the dyadic blocks of every `k` in `blocks`.
pub fn block_union<'a>(blocks: impl IntoIterator<Item = &'a MultiIndex>) -> BTreeSet<MultiIndex> {
    let mut out = BTreeSet::new();
    for k in blocks {
        out.extend(block_indices(k));
    }
    out
}

/// Admissible frontier of an arbitrary index list.
pub fn admissible_set(indices: &[MultiIndex], dim: usize) -> Result<BTreeSet<MultiIndex>> {
    for idx in indices {
        check_dim(dim, idx.dim())?;
    }
    let members: BTreeSet<MultiIndex> = indices.iter().cloned().collect();
    if !closed(&members) {
        return Err(Error::NotDownwardClosed);
    }
    Ok(compute_frontier(dim, &members))
}

/// Members of `set` at unit distance from `idx` along a single coordinate.
pub fn neighbors(idx: &MultiIndex, set: &DownwardClosedSet) -> Vec<MultiIndex> {
    if idx.dim() != set.dim() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for axis in 0..idx.dim() {
        if let Some(down) = idx.step_down(axis) {
            if set.contains(&down) {
                out.push(down);
            }
        }
        let up = idx.step_up(axis);
        if set.contains(&up) {
            out.push(up);
        }
    }
    out.sort();
    out
}

pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn set(v: &[&[u32]]) -> Vec<MultiIndex> {
        v.iter().map(|e| mi(e)).collect()
    }

    #[test]
    fn downward_closed_examples() {
        assert!(is_downward_closed(&set(&[&[0, 0]])).unwrap());
        assert!(is_downward_closed(&set(&[&[0, 0], &[1, 0], &[0, 1], &[1, 1]])).unwrap());
        assert!(!is_downward_closed(&set(&[&[0, 0], &[2, 0]])).unwrap());
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let err = is_downward_closed(&set(&[&[0, 0], &[0]])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn total_degree_examples() {
        let s = total_degree_set(2, 2);
        let got: Vec<_> = s.iter().cloned().collect();
        let mut want = set(&[&[0, 0], &[1, 0], &[0, 1], &[2, 0], &[1, 1], &[0, 2]]);
        want.sort();
        assert_eq!(got, want);
        assert_eq!(total_degree_set(1, 0).len(), 1);
        assert_eq!(total_degree_set(6, 3).len(), 84);
    }

    #[test]
    fn total_degree_cardinality_matches_binomial() {
        for d in 1..=6u64 {
            for m in 0..=8u64 {
                assert_eq!(total_degree_set(d as usize, m as u32).len() as u64, binomial(m + d, d));
            }
        }
    }

    #[test]
    fn block_examples() {
        assert_eq!(block_indices(&mi(&[0])), set(&[&[0]]));
        assert_eq!(block_indices(&mi(&[1, 0])), set(&[&[1, 0], &[2, 0]]));
        assert_eq!(block_indices(&mi(&[2])), set(&[&[3], &[4], &[5], &[6]]));
        assert_eq!(block_size(&mi(&[2, 1])), 8);
    }

    #[test]
    fn admissible_examples() {
        let root = admissible_set(&set(&[&[0, 0]]), 2).unwrap();
        assert_eq!(root.into_iter().collect::<Vec<_>>(), set(&[&[0, 1], &[1, 0]]));

        let tri = admissible_set(&set(&[&[0, 0], &[1, 0], &[0, 1]]), 2).unwrap();
        assert_eq!(tri.into_iter().collect::<Vec<_>>(), set(&[&[0, 2], &[1, 1], &[2, 0]]));

        let err = admissible_set(&set(&[&[0, 0], &[2, 0]]), 2).unwrap_err();
        assert!(matches!(err, Error::NotDownwardClosed));
    }

    // d = 1 illustration: level 0 slice holds blocks k = 0, 1; level 1 holds k = 0..=2.
    // (V_1 = span{P_0..P_6}, V_0 = span{P_0..P_2}.)
    #[test]
    fn figure_configuration() {
        let members = set(&[&[0, 0], &[1, 0], &[2, 0], &[0, 1], &[1, 1]]);
        let s = DownwardClosedSet::from_indices(2, members).unwrap();
        let adm: Vec<_> = s.admissible().iter().cloned().collect();
        assert_eq!(adm, set(&[&[0, 2], &[2, 1], &[3, 0]]));
        assert_eq!(s.neighbors(&mi(&[2, 1])), set(&[&[1, 1], &[2, 0]]));
    }

    #[test]
    fn neighbor_examples() {
        let s = DownwardClosedSet::from_indices(2, set(&[&[0, 0]])).unwrap();
        assert_eq!(s.neighbors(&mi(&[1, 0])), set(&[&[0, 0]]));
        let s = DownwardClosedSet::from_indices(2, set(&[&[0, 0], &[1, 0], &[0, 1]])).unwrap();
        assert_eq!(s.neighbors(&mi(&[1, 1])), set(&[&[0, 1], &[1, 0]]));
    }

    #[test]
    fn insert_requires_admissibility() {
        let mut s = DownwardClosedSet::empty(2);
        assert!(s.insert(mi(&[1, 0])).is_err());
        s.insert(mi(&[0, 0])).unwrap();
        s.insert(mi(&[1, 0])).unwrap();
        assert!(s.insert(mi(&[1, 1])).is_err());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn lines_round_trip() {
        let s = total_degree_set(3, 2);
        let text = s.to_lines();
        assert!(text.starts_with("0,0,0\n"));
        assert_eq!(DownwardClosedSet::from_lines(3, &text).unwrap(), s);
    }

    #[test]
    fn serde_rejects_open_sets() {
        let bad = r#"{"dim":1,"members":[[0],[2]]}"#;
        assert!(serde_json::from_str::<DownwardClosedSet>(bad).is_err());
        let good = serde_json::to_string(&total_degree_set(2, 1)).unwrap();
        let back: DownwardClosedSet = serde_json::from_str(&good).unwrap();
        assert_eq!(back, total_degree_set(2, 1));
    }
}
