//! CART classification trees with Gini impurity and a bagged forest over them.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::ExplainError;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// `None` means `round(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for RandomForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            features_per_split: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl RandomForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Row-major feature matrix with integer class targets.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub n_features: usize,
    pub x: &'a [f64],
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl TrainingSet<'_> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Weighted Gini decrease per feature, unnormalized.
    importances: Vec<f64>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn class_counts(data: &TrainingSet<'_>, rows: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; data.n_classes];
    rows.iter().for_each(|&r| counts[data.y[r]] += 1);
    counts
}

fn majority(counts: &[usize]) -> usize {
    // first maximum, so ties go to the lowest class
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity.
    impurity: f64,
}

struct Grower<'a, R> {
    data: TrainingSet<'a>,
    cfg: &'a RandomForestConfig,
    mtry: usize,
    n_root: usize,
    rng: R,
    tree: DecisionTree,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let counts = class_counts(&self.data, rows);
        let n = rows.len();
        let impurity = gini(&counts, n);
        let id = self.tree.nodes.len();
        self.tree.nodes.push(Node::Leaf(majority(&counts)));

        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        if impurity == 0.0 || !depth_ok || n < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(rows, &counts) else {
            return id;
        };
        let decrease = impurity - best.impurity;
        if decrease <= 0.0 {
            return id;
        }
        self.tree.importances[best.feature] += n as f64 / self.n_root as f64 * decrease;

        let data = self.data;
        rows.sort_by(|&a, &b| {
            data.value(a, best.feature)
                .total_cmp(&data.value(b, best.feature))
                .then(a.cmp(&b))
        });
        let cut = rows.partition_point(|&r| data.value(r, best.feature) <= best.threshold);
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.tree.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Examines features in random order until `mtry` non-constant ones have
    /// been scored.
    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let mut features: Vec<usize> = (0..self.data.n_features).collect();
        features.shuffle(&mut self.rng);
        let n = rows.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut scored = 0;
        let mut order = rows.to_vec();
        for f in features {
            if scored == self.mtry {
                break;
            }
            let data = self.data;
            order.sort_by(|&a, &b| data.value(a, f).total_cmp(&data.value(b, f)));
            if data.value(order[0], f) == data.value(order[n - 1], f) {
                continue;
            }
            scored += 1;
            let mut left = vec![0usize; data.n_classes];
            for i in 0..n - 1 {
                left[data.y[order[i]]] += 1;
                let (lo, hi) = (data.value(order[i], f), data.value(order[i + 1], f));
                let n_left = i + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                let imp = (n_left as f64 * gini(&left, n_left)
                    + (n - n_left) as f64 * gini(&right, n - n_left))
                    / n as f64;
                if best.as_ref().is_none_or(|b| imp < b.impurity) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }
}

impl DecisionTree {
    pub fn fit(
        data: TrainingSet<'_>,
        rows: &mut [usize],
        cfg: &RandomForestConfig,
        mtry: usize,
        seed: u64,
    ) -> Self {
        let mut g = Grower {
            data,
            cfg,
            mtry,
            n_root: rows.len(),
            rng: rng_from(seed),
            tree: DecisionTree {
                nodes: Vec::new(),
                importances: vec![0.0; data.n_features],
            },
        };
        g.grow(rows, 0);
        g.tree
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    n_classes: usize,
    n_features: usize,
}

impl RandomForest {
    pub fn fit(data: TrainingSet<'_>, cfg: &RandomForestConfig) -> Result<Self, ExplainError> {
        if cfg.n_trees == 0 {
            return Err(ExplainError::InvalidConfig("n_trees must be >= 1".into()));
        }
        if cfg.min_samples_leaf == 0 {
            return Err(ExplainError::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        let n = data.y.len();
        if n == 0 || data.x.len() != n * data.n_features {
            return Err(ExplainError::InvalidConfig("feature matrix shape mismatch".into()));
        }
        let mtry = cfg
            .features_per_split
            .unwrap_or_else(|| (data.n_features as f64).sqrt().round() as usize)
            .clamp(1, data.n_features.max(1));
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &[t as u64]);
                let mut rng = rng_from(seed);
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(data, &mut rows, cfg, mtry, derive_seed(seed, &[1]))
            })
            .collect();
        Ok(Self {
            trees,
            n_classes: data.n_classes,
            n_features: data.n_features,
        })
    }

    /// Majority vote; ties go to the lowest class.
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0; self.n_classes];
        self.trees.iter().for_each(|t| votes[t.predict(row)] += 1);
        majority(&votes)
    }

    /// Mean decrease in impurity per feature: each tree's importances are
    /// normalized to sum 1, then averaged over trees that split at all.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        let mut used = 0;
        for t in &self.trees {
            let total: f64 = t.importances.iter().sum();
            if total > 0.0 {
                used += 1;
                out.iter_mut()
                    .zip(&t.importances)
                    .for_each(|(o, v)| *o += v / total);
            }
        }
        if used > 0 {
            out.iter_mut().for_each(|o| *o /= used as f64);
        }
        out
    }
}
