//! Exact greedy, level-wise regression tree growth with learned missing-value
//! directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{lookup, Dataset};
use super::objective::{leaf_weight, split_gain};

const INACTIVE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        weight: f64,
    },
    Split {
        feature: u32,
        /// Present values `x < threshold` go left.
        threshold: f64,
        missing_goes_left: bool,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Leaf weight reached by a column-sorted sparse row.
    pub fn predict(&self, row: &[(u32, f64)]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split { feature, threshold, missing_goes_left, left, right, .. } => {
                    let go_left = lookup(row, *feature).map_or(*missing_goes_left, |x| x < *threshold);
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Structural parameters of a single tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

/// Gradient statistics of a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub g: f64,
    pub h: f64,
    pub n: u32,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn minus(self, other: Stats) -> Stats {
        if self.n == other.n {
            return Stats::default();
        }
        Stats { g: self.g - other.g, h: self.h - other.h, n: self.n - other.n }
    }

    fn plus(self, other: Stats) -> Stats {
        Stats { g: self.g + other.g, h: self.h + other.h, n: self.n + other.n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: u32,
    pub threshold: f64,
    pub missing_goes_left: bool,
    pub gain: f64,
    pub left: Stats,
    pub right: Stats,
}

/// Split point between two consecutive distinct values.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m <= a || m > b {
        b
    } else {
        m
    }
}

struct Scanner<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    slot_of_row: &'a [u32],
    totals: &'a [Stats],
    params: TreeParams,
}

impl Scanner<'_> {
    fn consider(&self, best: &mut Option<SplitCandidate>, candidate: SplitCandidate) {
        let (l, r) = (candidate.left, candidate.right);
        let p = &self.params;
        if l.n == 0 || r.n == 0 || l.h < p.min_child_hessian || r.h < p.min_child_hessian {
            return;
        }
        let gain = split_gain(l.g, l.h, r.g, r.h, p.reg_lambda, p.gamma);
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            *best = Some(SplitCandidate { gain, ..candidate });
        }
    }

    /// Best split on one feature for every frontier node. Candidates are
    /// visited in a fixed order: present-vs-missing first, then each value
    /// boundary ascending with missing sent right and then left. Only a strictly
    /// larger gain replaces the incumbent.
    fn scan(&self, feature: u32, column: &[(u32, f64)]) -> Vec<Option<SplitCandidate>> {
        let k = self.totals.len();
        let mut present = vec![Stats::default(); k];
        for &(r, _) in column {
            let s = self.slot_of_row[r as usize];
            if s != INACTIVE {
                present[s as usize].add(self.grad[r as usize], self.hess[r as usize]);
            }
        }
        let missing: Vec<Stats> = self.totals.iter().zip(&present).map(|(t, p)| t.minus(*p)).collect();
        let mut best = vec![None; k];
        let mut run = vec![Stats::default(); k];
        let mut last: Vec<Option<f64>> = vec![None; k];
        for &(r, v) in column {
            let s = self.slot_of_row[r as usize];
            if s == INACTIVE {
                continue;
            }
            let s = s as usize;
            let miss = missing[s];
            match last[s] {
                None if miss.n > 0 => {
                    let c = SplitCandidate {
                        feature,
                        threshold: v,
                        missing_goes_left: true,
                        gain: 0.0,
                        left: miss,
                        right: present[s],
                    };
                    self.consider(&mut best[s], c);
                }
                Some(prev) if v > prev => {
                    let threshold = midpoint(prev, v);
                    let forward = SplitCandidate {
                        feature,
                        threshold,
                        missing_goes_left: false,
                        gain: 0.0,
                        left: run[s],
                        right: self.totals[s].minus(run[s]),
                    };
                    self.consider(&mut best[s], forward);
                    if miss.n > 0 {
                        let backward = SplitCandidate {
                            missing_goes_left: true,
                            left: run[s].plus(miss),
                            right: present[s].minus(run[s]),
                            ..forward
                        };
                        self.consider(&mut best[s], backward);
                    }
                }
                _ => {}
            }
            run[s].add(self.grad[r as usize], self.hess[r as usize]);
            last[s] = Some(v);
        }
        best
    }
}

fn totals_of(rows: &[u32], grad: &[f64], hess: &[f64]) -> Stats {
    let mut s = Stats::default();
    rows.iter().for_each(|&r| s.add(grad[r as usize], hess[r as usize]));
    s
}

/// Best split of the node made of `rows`, over `features` in the given order.
pub fn best_split(
    data: &Dataset,
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
    features: &[u32],
    params: TreeParams,
) -> Option<SplitCandidate> {
    let mut slot_of_row = vec![INACTIVE; data.n_rows()];
    rows.iter().for_each(|&r| slot_of_row[r as usize] = 0);
    let totals = [totals_of(rows, grad, hess)];
    let scanner = Scanner { grad, hess, slot_of_row: &slot_of_row, totals: &totals, params };
    reduce(features.iter().map(|&f| scanner.scan(f, data.column(f as usize))), 1).pop().flatten()
}

fn reduce(per_feature: impl IntoIterator<Item = Vec<Option<SplitCandidate>>>, k: usize) -> Vec<Option<SplitCandidate>> {
    let mut best: Vec<Option<SplitCandidate>> = vec![None; k];
    for candidates in per_feature {
        for (b, c) in best.iter_mut().zip(candidates) {
            if let Some(c) = c {
                if b.is_none_or(|b| c.gain > b.gain) {
                    *b = Some(c);
                }
            }
        }
    }
    best
}

/// A grown tree and the gain of each split it made.
#[derive(Debug, Clone, PartialEq)]
pub struct GrownTree {
    pub root: TreeNode,
    pub split_gains: Vec<(u32, f64)>,
}

struct BuildNode {
    stats: Stats,
    split: Option<(SplitCandidate, usize, usize)>,
}

/// Grow one tree on `rows` using only `features` (ascending column order).
/// Leaves hold `-G / (H + lambda)`; the learning rate is applied by the caller.
pub fn grow_tree(data: &Dataset, grad: &[f64], hess: &[f64], rows: &[u32], features: &[u32], params: TreeParams) -> GrownTree {
    let mut arena = vec![BuildNode { stats: totals_of(rows, grad, hess), split: None }];
    let mut slot_of_row = vec![INACTIVE; data.n_rows()];
    rows.iter().for_each(|&r| slot_of_row[r as usize] = 0);
    let mut frontier: Vec<usize> = if rows.is_empty() { Vec::new() } else { vec![0] };
    let mut split_gains = Vec::new();

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let totals: Vec<Stats> = frontier.iter().map(|&n| arena[n].stats).collect();
        let scanner = Scanner { grad, hess, slot_of_row: &slot_of_row, totals: &totals, params };
        let per_feature: Vec<Vec<Option<SplitCandidate>>> =
            features.par_iter().map(|&f| scanner.scan(f, data.column(f as usize))).collect();
        let best = reduce(per_feature, frontier.len());

        let mut next_frontier = Vec::new();
        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
        for (slot, candidate) in best.iter().enumerate() {
            let Some(c) = candidate else { continue };
            let left = arena.len();
            arena.push(BuildNode { stats: c.left, split: None });
            arena.push(BuildNode { stats: c.right, split: None });
            arena[frontier[slot]].split = Some((*c, left, left + 1));
            split_gains.push((c.feature, c.gain));
            child_slots[slot] = Some((next_frontier.len() as u32, next_frontier.len() as u32 + 1));
            next_frontier.push(left);
            next_frontier.push(left + 1);
        }
        for &r in rows {
            let s = slot_of_row[r as usize];
            if s == INACTIVE {
                continue;
            }
            slot_of_row[r as usize] = match (best[s as usize], child_slots[s as usize]) {
                (Some(c), Some((l, rt))) => {
                    let go_left = data.value(r as usize, c.feature).map_or(c.missing_goes_left, |x| x < c.threshold);
                    if go_left {
                        l
                    } else {
                        rt
                    }
                }
                _ => INACTIVE,
            };
        }
        frontier = next_frontier;
    }

    fn build(arena: &[BuildNode], id: usize, lambda: f64) -> TreeNode {
        match arena[id].split {
            None => TreeNode::Leaf { weight: leaf_weight(arena[id].stats.g, arena[id].stats.h, lambda) },
            Some((c, l, r)) => TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                missing_goes_left: c.missing_goes_left,
                gain: c.gain,
                left: Box::new(build(arena, l, lambda)),
                right: Box::new(build(arena, r, lambda)),
            },
        }
    }
    GrownTree { root: build(&arena, 0, params.reg_lambda), split_gains }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARAMS: TreeParams = TreeParams { max_depth: 3, reg_lambda: 1.0, gamma: 0.0, min_child_hessian: 0.0 };

    #[test]
    fn identical_values_give_a_leaf() {
        let ds = Dataset::from_dense(&[vec![Some(1.0)], vec![Some(1.0)], vec![Some(1.0)]]).unwrap();
        let t = grow_tree(&ds, &[1.0, -1.0, 2.0], &[1.0, 1.0, 1.0], &[0, 1, 2], &[0], PARAMS);
        assert_eq!(t.root, TreeNode::Leaf { weight: -0.5 });
    }

    #[test]
    fn separates_two_groups() {
        let ds = Dataset::from_dense(&[vec![Some(1.0)], vec![Some(2.0)], vec![Some(3.0)], vec![Some(4.0)]]).unwrap();
        let t = grow_tree(&ds, &[1.0, 1.0, -1.0, -1.0], &[1.0; 4], &[0, 1, 2, 3], &[0], PARAMS);
        let TreeNode::Split { threshold, .. } = t.root else { panic!("expected split") };
        assert_eq!(threshold, 2.5);
        assert_eq!(t.root.predict(&[(0, 1.0)]), -2.0 / 3.0);
        assert_eq!(t.root.predict(&[(0, 3.5)]), 2.0 / 3.0);
    }

    #[test]
    fn learns_missing_direction() {
        // Missing rows behave like the low group.
        let ds = Dataset::from_dense(&[vec![None], vec![Some(1.0)], vec![Some(5.0)], vec![Some(6.0)]]).unwrap();
        let t = grow_tree(&ds, &[2.0, 2.0, -2.0, -2.0], &[1.0; 4], &[0, 1, 2, 3], &[0], PARAMS);
        let TreeNode::Split { missing_goes_left, threshold, .. } = t.root else { panic!("expected split") };
        assert!(missing_goes_left);
        assert_eq!(threshold, 3.0);
        assert_eq!(t.root.predict(&[]), t.root.predict(&[(0, 1.0)]));
    }

    #[test]
    fn respects_depth_and_min_hessian() {
        let data: Vec<Vec<Option<f64>>> = (0..32).map(|i| vec![Some(f64::from(i))]).collect();
        let ds = Dataset::from_dense(&data).unwrap();
        let grad: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rows: Vec<u32> = (0..32).collect();
        let t = grow_tree(&ds, &grad, &[1.0; 32], &rows, &[0], PARAMS);
        assert!(t.root.depth() <= 3);
        let strict = TreeParams { min_child_hessian: 100.0, ..PARAMS };
        assert!(matches!(grow_tree(&ds, &grad, &[1.0; 32], &rows, &[0], strict).root, TreeNode::Leaf { .. }));
    }

    #[test]
    fn empty_node_is_zero_leaf() {
        let ds = Dataset::from_dense(&[vec![Some(1.0)]]).unwrap();
        assert_eq!(grow_tree(&ds, &[1.0], &[1.0], &[], &[0], PARAMS).root, TreeNode::Leaf { weight: 0.0 });
    }

    #[test]
    fn midpoint_stays_between_neighbours() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), b);
        assert!(midpoint(f64::MAX / 2.0, f64::MAX).is_finite());
    }
}
