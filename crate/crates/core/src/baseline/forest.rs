use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tfidf::SparseVec;

/// Growth limits shared by all trees of a forest.
#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        positive: u32,
        total: u32,
    },
}

/// CART tree with Gini impurity; samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn value_at(x: &SparseVec, feature: u32) -> f64 {
    x.binary_search_by_key(&feature, |&(c, _)| c)
        .map(|i| x[i].1)
        .unwrap_or(0.0)
}

impl Tree {
    /// A leaf votes positive on a strict weighted majority.
    pub fn vote(&self, x: &SparseVec) -> bool {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value_at(x, feature) <= threshold { left } else { right } as usize;
                }
                Node::Leaf { positive, total } => return 2 * positive > total,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    /// Grows a tree on the multiset `samples` (indices into `rows`).
    pub fn grow(
        rows: &[SparseVec],
        labels: &[bool],
        n_features: usize,
        samples: Vec<u32>,
        params: TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mtry = ((n_features as f64).sqrt().floor() as usize).max(1);
        let mut nodes = vec![Node::Leaf { positive: 0, total: 0 }];
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((slot, samples, depth)) = stack.pop() {
            let total = samples.len() as u32;
            let positive = samples.iter().filter(|&&s| labels[s as usize]).count() as u32;
            let can_split = positive > 0
                && positive < total
                && params.max_depth.is_none_or(|d| depth < d)
                && samples.len() >= 2 * params.min_leaf;
            let split = if can_split {
                best_split(rows, labels, &samples, mtry, params.min_leaf, rng)
            } else {
                None
            };
            match split {
                None => nodes[slot] = Node::Leaf { positive, total },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<u32>, Vec<u32>) = samples
                        .iter()
                        .partition(|&&s| value_at(&rows[s as usize], feature) <= threshold);
                    let left = nodes.len() as u32;
                    nodes.push(Node::Leaf { positive: 0, total: 0 });
                    nodes.push(Node::Leaf { positive: 0, total: 0 });
                    nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left as usize + 1, r, depth + 1));
                    stack.push((left as usize, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}

/// Value groups of one feature inside a node: `(value, positives, negatives)`
/// sorted by value. `zeros` holds the label counts of the implicit zeros.
fn value_groups(entries: &[(f64, bool)], zeros: (u32, u32)) -> Vec<(f64, u32, u32)> {
    let mut vals: Vec<(f64, bool)> = entries.to_vec();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, u32, u32)> = Vec::new();
    let mut zero_done = zeros.0 + zeros.1 == 0;
    for (v, y) in vals {
        if !zero_done && v >= 0.0 {
            groups.push((0.0, zeros.0, zeros.1));
            zero_done = true;
        }
        if groups.last().is_none_or(|g| g.0 != v) {
            groups.push((v, 0, 0));
        }
        let g = groups.last_mut().unwrap();
        if y {
            g.1 += 1
        } else {
            g.2 += 1
        }
    }
    if !zero_done {
        groups.push((0.0, zeros.0, zeros.1));
    }
    groups
}

fn gini_weighted(pos: u32, neg: u32) -> f64 {
    let n = (pos + neg) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - (pos as f64 * pos as f64 + neg as f64 * neg as f64) / n
}

/// Picks `mtry` features at random among those not constant in the node and
/// returns the split with the lowest weighted Gini impurity. Ties keep the
/// lowest feature index, then the lowest threshold.
fn best_split(
    rows: &[SparseVec],
    labels: &[bool],
    samples: &[u32],
    mtry: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(u32, f64)> {
    let n = samples.len();
    let mut by_feature: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    let mut pos_total = 0u32;
    for &s in samples {
        let y = labels[s as usize];
        pos_total += y as u32;
        for &(f, v) in &rows[s as usize] {
            by_feature.entry(f).or_default().push((v, y));
        }
    }
    let mut candidates: Vec<u32> = by_feature
        .iter()
        .filter(|(_, e)| e.len() < n || e.iter().any(|&(v, _)| v != e[0].0))
        .map(|(&f, _)| f)
        .collect();
    let k = mtry.min(candidates.len());
    for i in 0..k {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
    }
    candidates.truncate(k);
    candidates.sort_unstable();

    let neg_total = n as u32 - pos_total;
    let mut best: Option<(f64, u32, f64)> = None;
    for f in candidates {
        let entries = &by_feature[&f];
        let zeros = (n - entries.len()) as u32;
        let zero_pos = pos_total - entries.iter().filter(|&&(_, y)| y).count() as u32;
        let groups = value_groups(entries, (zero_pos, zeros - zero_pos));
        let (mut lp, mut ln) = (0u32, 0u32);
        for w in groups.windows(2) {
            lp += w[0].1;
            ln += w[0].2;
            let nl = (lp + ln) as usize;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let score = gini_weighted(lp, ln) + gini_weighted(pos_total - lp, neg_total - ln);
            let mut threshold = 0.5 * (w[0].0 + w[1].0);
            if threshold >= w[1].0 {
                threshold = w[0].0;
            }
            if best.is_none_or(|(b, _, _)| score < b) {
                best = Some((score, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Bagged ensemble of trees for one binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryForest {
    pub trees: Vec<Tree>,
    /// Set when the training labels were all equal.
    pub constant: bool,
}

impl BinaryForest {
    /// Tree `t` draws from ChaCha8 stream `(stream << 32) | t` of `seed`, so
    /// forests on different streams are independent of each other.
    pub fn train(
        rows: &[SparseVec],
        labels: &[bool],
        n_features: usize,
        n_trees: usize,
        params: TreeParams,
        seed: u64,
        stream: u64,
    ) -> BinaryForest {
        let n = rows.len();
        let constant = labels.iter().all(|&y| y == labels[0]);
        let trees = (0..n_trees as u64)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((stream << 32) | t);
                let samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
                Tree::grow(rows, labels, n_features, samples, params, &mut rng)
            })
            .collect();
        BinaryForest { trees, constant }
    }

    pub fn votes(&self, x: &SparseVec) -> usize {
        self.trees.iter().filter(|t| t.vote(x)).count()
    }

    pub fn score(&self, x: &SparseVec) -> f64 {
        self.votes(x) as f64 / self.trees.len() as f64
    }
}
