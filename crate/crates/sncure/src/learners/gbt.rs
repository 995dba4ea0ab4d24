//! Gradient-boosted regression trees: squared-error loss, exact greedy
//! splits over sorted feature values, level-wise growth, no subsampling.
//! Feature orderings are computed once and reused across all rounds.

use super::Dataset;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl GbtParams {
    pub fn new(rounds: usize, learning_rate: f64) -> Self {
        Self {
            rounds,
            learning_rate,
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::InvalidConfig("gbt rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(
                "gbt learning rate must be in (0, 1]".into(),
            ));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("gbt depth must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for GbtParams {
    fn default() -> Self {
        Self::new(200, 0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    base: f64,
    learning_rate: f64,
    n_features: usize,
    trees: Vec<Vec<Node>>,
    round_losses: Vec<f64>,
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Weighted mean squared training error after each boosting round.
    pub fn round_losses(&self) -> &[f64] {
        &self.round_losses
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut out = self.base;
        for tree in &self.trees {
            let mut node = 0usize;
            loop {
                match tree[node] {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        node = if row[feature as usize] <= threshold {
                            left as usize
                        } else {
                            right as usize
                        };
                    }
                    Node::Leaf { value } => {
                        out += self.learning_rate * value;
                        break;
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    wr: f64,
    cnt: usize,
}

impl Stats {
    fn add(&mut self, w: f64, r: f64) {
        self.w += w;
        self.wr += w * r;
        if w > 0.0 {
            self.cnt += 1;
        }
    }
    fn score(&self) -> f64 {
        if self.w > 0.0 {
            self.wr * self.wr / self.w
        } else {
            0.0
        }
    }
}

struct ScanState {
    left: Stats,
    last_value: Option<f64>,
}

pub(super) fn fit_gbt(params: &GbtParams, data: &Dataset) -> Result<GbtModel> {
    params.validate()?;
    let n = data.n_rows();
    let p = data.n_cols();

    // one global sort per feature, ties broken by row index
    let sorted: Vec<Vec<u32>> = (0..p)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                data.row(a as usize)[f]
                    .total_cmp(&data.row(b as usize)[f])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let total_w: f64 = (0..n).map(|i| data.weight(i)).sum();
    let base = (0..n).map(|i| data.weight(i) * data.target(i)).sum::<f64>() / total_w;
    let mut resid: Vec<f64> = (0..n).map(|i| data.target(i) - base).collect();

    let mut trees = Vec::with_capacity(params.rounds);
    let mut round_losses = Vec::with_capacity(params.rounds);
    let mut node_of_row: Vec<u32> = vec![0; n];

    for _ in 0..params.rounds {
        let tree = grow_tree(params, data, &sorted, &resid, &mut node_of_row);
        // node_of_row now holds each row's final leaf
        let mut loss = 0.0;
        for i in 0..n {
            if let Node::Leaf { value } = tree[node_of_row[i] as usize] {
                resid[i] -= params.learning_rate * value;
            }
            loss += data.weight(i) * resid[i] * resid[i];
        }
        round_losses.push(loss / total_w);
        trees.push(tree);
    }

    Ok(GbtModel {
        base,
        learning_rate: params.learning_rate,
        n_features: p,
        trees,
        round_losses,
    })
}

fn grow_tree(
    params: &GbtParams,
    data: &Dataset,
    sorted: &[Vec<u32>],
    resid: &[f64],
    node_of_row: &mut [u32],
) -> Vec<Node> {
    let n = data.n_rows();
    let p = data.n_cols();

    node_of_row.fill(0);
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut frontier: Vec<u32> = vec![0];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        // slot lookup for this level
        let mut slot_of: Vec<i32> = vec![-1; nodes.len()];
        for (s, &nid) in frontier.iter().enumerate() {
            slot_of[nid as usize] = s as i32;
        }
        let n_slots = frontier.len();

        let mut totals = vec![Stats::default(); n_slots];
        for i in 0..n {
            let s = slot_of[node_of_row[i] as usize];
            if s >= 0 {
                totals[s as usize].add(data.weight(i), resid[i]);
            }
        }

        #[derive(Clone, Copy)]
        struct Best {
            gain: f64,
            feature: u32,
            threshold: f64,
        }
        let mut best = vec![
            Best {
                gain: 0.0,
                feature: 0,
                threshold: 0.0,
            };
            n_slots
        ];

        for f in 0..p {
            let mut states: Vec<ScanState> = (0..n_slots)
                .map(|_| ScanState {
                    left: Stats::default(),
                    last_value: None,
                })
                .collect();
            for &row in &sorted[f] {
                let i = row as usize;
                let s = slot_of[node_of_row[i] as usize];
                if s < 0 {
                    continue;
                }
                let s = s as usize;
                let v = data.row(i)[f];
                let st = &mut states[s];
                if let Some(prev) = st.last_value {
                    if v > prev {
                        let total = totals[s];
                        let left = st.left;
                        let right_w = total.w - left.w;
                        let right_cnt = total.cnt - left.cnt;
                        if left.cnt >= params.min_samples_leaf
                            && right_cnt >= params.min_samples_leaf
                            && left.w > 0.0
                            && right_w > 0.0
                        {
                            let right_wr = total.wr - left.wr;
                            let gain =
                                left.score() + right_wr * right_wr / right_w - total.score();
                            if gain.is_finite() && gain > best[s].gain {
                                let mid = 0.5 * (prev + v);
                                // keep rows counted left strictly left of the cut
                                let threshold = if mid > prev && mid < v { mid } else { prev };
                                best[s] = Best {
                                    gain,
                                    feature: f as u32,
                                    threshold,
                                };
                            }
                        }
                    }
                }
                st.left.add(data.weight(i), resid[i]);
                st.last_value = Some(v);
            }
        }

        // materialize splits; unsplit nodes become leaves
        let mut next_frontier = Vec::new();
        let mut split_happened = false;
        for (s, &nid) in frontier.iter().enumerate() {
            if best[s].gain > 0.0 {
                let left = nodes.len() as u32;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[nid as usize] = Node::Split {
                    feature: best[s].feature,
                    threshold: best[s].threshold,
                    left,
                    right: left + 1,
                };
                next_frontier.push(left);
                next_frontier.push(left + 1);
                split_happened = true;
            } else {
                let t = totals[s];
                nodes[nid as usize] = Node::Leaf {
                    value: if t.w > 0.0 { t.wr / t.w } else { 0.0 },
                };
            }
        }
        if !split_happened {
            return nodes;
        }
        for i in 0..n {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[node_of_row[i] as usize]
            {
                node_of_row[i] = if data.row(i)[feature as usize] <= threshold {
                    left
                } else {
                    right
                };
            }
        }
        frontier = next_frontier;
    }

    // nodes reaching max depth become leaves
    if !frontier.is_empty() {
        let mut slot_of: Vec<i32> = vec![-1; nodes.len()];
        for (s, &nid) in frontier.iter().enumerate() {
            slot_of[nid as usize] = s as i32;
        }
        let mut totals = vec![Stats::default(); frontier.len()];
        for i in 0..n {
            let s = slot_of[node_of_row[i] as usize];
            if s >= 0 {
                totals[s as usize].add(data.weight(i), resid[i]);
            }
        }
        for (s, &nid) in frontier.iter().enumerate() {
            let t = totals[s];
            nodes[nid as usize] = Node::Leaf {
                value: if t.w > 0.0 { t.wr / t.w } else { 0.0 },
            };
        }
    }
    nodes
}
