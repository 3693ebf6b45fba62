//! Bagged CART regression trees.
//!
//! Splits maximize the reduction in squared error. Candidate thresholds are
//! midpoints between consecutive distinct values; ties in gain go to the
//! lowest feature index, then the lowest threshold.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;

use super::{Predict, PredictorHandle, PredictorKind};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` tries all of them.
    pub m_try: Option<usize>,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            m_try: None,
            max_depth: None,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.feature == LEAF {
                return node.value;
            }
            k = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug)]
pub struct BaggedTrees {
    n_features: usize,
    trees: Vec<Tree>,
}

impl BaggedTrees {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn predict_one(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }
}

impl Predict for BaggedTrees {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows
            .par_chunks(self.n_features * 256)
            .flat_map_iter(|block| {
                block
                    .chunks_exact(self.n_features)
                    .map(|row| self.predict_one(row))
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}

pub fn fit_bagged_trees(data: &FeatureMatrix, params: &TreeParams, seed: u64) -> Result<PredictorHandle> {
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    if params.min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }
    let n = data.n_rows();
    if n < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "{n} rows cannot hold two leaves of min_leaf={}",
            params.min_leaf
        )));
    }
    let p = data.n_cols();
    if p == 0 {
        return Err(Error::invalid("no predictor columns"));
    }
    let m_try = params.m_try.unwrap_or(p);
    if m_try == 0 || m_try > p {
        return Err(Error::invalid(format!("mtry must be in 1..={p}, got {m_try}")));
    }

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            TreeBuilder::new(data, rows, params, m_try).build(&mut rng)
        })
        .collect();

    let model = BaggedTrees { n_features: p, trees };
    Ok(PredictorHandle::new(PredictorKind::BaggedTrees, Arc::new(model))
        .with_meta("n_trees", params.n_trees)
        .with_meta("min_leaf", params.min_leaf)
        .with_meta("mtry", m_try)
        .with_meta("seed", seed))
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Number of samples going left.
    n_left: usize,
}

/// Grows one tree over a bootstrap sample. Every feature keeps its own
/// ordering of the sample, and each node owns the same `lo..hi` range in all
/// of them, so no sorting happens below the root.
struct TreeBuilder<'a> {
    data: &'a FeatureMatrix,
    params: &'a TreeParams,
    m_try: usize,
    /// Original row of each bootstrap sample.
    rows: Vec<usize>,
    y: Vec<f64>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn new(data: &'a FeatureMatrix, rows: Vec<usize>, params: &'a TreeParams, m_try: usize) -> Self {
        let y: Vec<f64> = rows.iter().map(|&r| data.response()[r]).collect();
        let order = (0..data.n_cols())
            .map(|j| {
                let col = data.column(j);
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| col[rows[a as usize]].total_cmp(&col[rows[b as usize]]));
                idx
            })
            .collect();
        let n = rows.len();
        Self {
            data,
            params,
            m_try,
            rows,
            y,
            order,
            goes_left: vec![false; n],
            scratch: Vec::with_capacity(n),
            nodes: Vec::new(),
        }
    }

    fn x(&self, feature: usize, sample: u32) -> f64 {
        self.data.column(feature)[self.rows[sample as usize]]
    }

    fn build(mut self, rng: &mut rng::Rng) -> Tree {
        let n = self.rows.len();
        self.grow(0, n, 0, rng);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut rng::Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let count = hi - lo;
        let sum: f64 = self.order[0][lo..hi].iter().map(|&s| self.y[s as usize]).sum();
        let mean = sum / count as f64;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: mean,
        });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || count < 2 * self.params.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(lo, hi, sum, rng) else {
            return id;
        };

        // Stable partition of every feature ordering around the split.
        for &s in &self.order[split.feature][lo..hi] {
            self.goes_left[s as usize] = false;
        }
        for &s in &self.order[split.feature][lo..lo + split.n_left] {
            self.goes_left[s as usize] = true;
        }
        for j in 0..self.order.len() {
            if j == split.feature {
                continue;
            }
            self.scratch.clear();
            let ord = &mut self.order[j];
            let mut w = lo;
            for k in lo..hi {
                let s = ord[k];
                if self.goes_left[s as usize] {
                    ord[w] = s;
                    w += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            ord[w..hi].copy_from_slice(&self.scratch);
        }

        let mid = lo + split.n_left;
        let left = self.grow(lo, mid, depth + 1, rng);
        let right = self.grow(mid, hi, depth + 1, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id
    }

    fn best_split(&self, lo: usize, hi: usize, sum: f64, rng: &mut rng::Rng) -> Option<Split> {
        let p = self.order.len();
        let count = hi - lo;
        let min_leaf = self.params.min_leaf;
        let features: Vec<usize> = if self.m_try < p {
            let mut f = sample(rng, p, self.m_try).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..p).collect()
        };

        let parent = sum * sum / count as f64;
        let mut best: Option<Split> = None;
        let mut best_gain = 0.0;
        for &j in &features {
            let ord = &self.order[j][lo..hi];
            let mut left_sum = 0.0;
            for k in 0..count - 1 {
                left_sum += self.y[ord[k] as usize];
                let n_left = k + 1;
                if n_left < min_leaf || count - n_left < min_leaf {
                    continue;
                }
                let a = self.x(j, ord[k]);
                let b = self.x(j, ord[k + 1]);
                if a == b {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain =
                    left_sum * left_sum / n_left as f64 + right_sum * right_sum / (count - n_left) as f64 - parent;
                // Strict comparison keeps the earliest (feature, threshold) on ties.
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(Split {
                        feature: j,
                        threshold: a + 0.5 * (b - a),
                        n_left,
                    });
                }
            }
        }
        // Round-off can produce tiny positive gains on constant responses.
        let scale = parent.abs().max(f64::MIN_POSITIVE);
        if best_gain <= 1e-12 * scale {
            return None;
        }
        best
    }
}
