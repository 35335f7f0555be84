//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown level by level with exact greedy splits: each feature is
//! presorted once, and every level makes one pass per feature over that
//! order, accumulating left-side sums per open node. Gains are compared with
//! a strict `>` while scanning features in index order, so the lowest feature
//! index (then the lowest threshold) wins ties.

use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionLoss {
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub shrinkage: f64,
    pub subsample_fraction: f64,
    pub rng_seed: u64,
    pub loss: RegressionLoss,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            num_trees: 300,
            max_depth: 4,
            min_samples_leaf: 20,
            shrinkage: 0.1,
            subsample_fraction: 0.8,
            rng_seed: 13,
            loss: RegressionLoss::SquaredError,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "meta: max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config("meta: shrinkage must be in (0, 1]".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Config("meta: subsample_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub num_features: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(num_features: usize) -> Self {
        FeatureMatrix {
            num_features,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.num_features);
        self.values.extend_from_slice(row);
    }

    pub fn num_rows(&self) -> usize {
        self.values.len().checked_div(self.num_features).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_features..(i + 1) * self.num_features]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn write_preorder<W: Write>(&self, i: usize, out: &mut W) -> std::io::Result<()> {
        match self.nodes[i] {
            Node::Leaf { value } => writeln!(out, "leaf {value}"),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                writeln!(out, "split {feature} {threshold}")?;
                self.write_preorder(left, out)?;
                self.write_preorder(right, out)
            }
        }
    }
}

/// Boosted ensemble: `clamp(base_score + shrinkage * Σ tree(x), 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_score: f64,
    pub shrinkage: f64,
    pub feature_spec: Vec<String>,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.shrinkage * sum
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_raw(x).clamp(0.0, 1.0)
    }

    /// Text layout, one token group per line:
    ///
    /// ```text
    /// recipro-gbdt v1
    /// base_score <x>
    /// shrinkage <x>
    /// features <n> <name_0> ... <name_{n-1}>
    /// trees <t>
    /// tree                       (then the tree's nodes in preorder)
    /// split <feature> <threshold>  (left subtree follows, then right)
    /// leaf <value>
    /// ```
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{GBDT_MAGIC}")?;
        writeln!(out, "base_score {}", self.base_score)?;
        writeln!(out, "shrinkage {}", self.shrinkage)?;
        writeln!(
            out,
            "features {} {}",
            self.feature_spec.len(),
            self.feature_spec.join(" ")
        )?;
        writeln!(out, "trees {}", self.trees.len())?;
        for t in &self.trees {
            writeln!(out, "tree")?;
            t.write_preorder(0, &mut out)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut cursor = Cursor {
            lines: &lines,
            pos: 0,
            source,
        };
        let magic = cursor.next_tokens()?;
        if magic.join(" ") != GBDT_MAGIC {
            return Err(cursor.err("unsupported model version"));
        }
        let base_score = cursor.tagged_number("base_score")?;
        let shrinkage = cursor.tagged_number("shrinkage")?;
        let feats = cursor.next_tokens()?;
        if feats.first() != Some(&"features") || feats.len() < 2 {
            return Err(cursor.err("expected `features`"));
        }
        let n: usize = feats[1].parse().map_err(|_| cursor.err("invalid feature count"))?;
        if feats.len() != n + 2 {
            return Err(cursor.err("feature count mismatch"));
        }
        let feature_spec: Vec<String> = feats[2..].iter().map(|s| s.to_string()).collect();
        let num_trees = cursor.tagged_number("trees")? as usize;
        let mut trees = Vec::with_capacity(num_trees);
        for _ in 0..num_trees {
            if cursor.next_tokens()? != ["tree"] {
                return Err(cursor.err("expected `tree`"));
            }
            let mut nodes = Vec::new();
            cursor.read_node(&mut nodes, n)?;
            trees.push(Tree { nodes });
        }
        Ok(GbdtModel {
            base_score,
            shrinkage,
            feature_spec,
            trees,
        })
    }
}

const GBDT_MAGIC: &str = "recipro-gbdt v1";

struct Cursor<'a> {
    lines: &'a [String],
    pos: usize,
    source: &'a str,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::parse(self.source, self.pos.max(1), msg)
    }

    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.source, self.pos + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(line.split_whitespace().collect())
    }

    fn tagged_number(&mut self, tag: &str) -> Result<f64> {
        let t = self.next_tokens()?;
        match t.as_slice() {
            [name, v] if *name == tag => v.parse().map_err(|_| self.err("invalid number")),
            _ => Err(self.err(&format!("expected `{tag}`"))),
        }
    }

    fn read_node(&mut self, nodes: &mut Vec<Node>, num_features: usize) -> Result<usize> {
        let t = self.next_tokens()?;
        let idx = nodes.len();
        match t.as_slice() {
            ["leaf", v] => {
                let value: f64 = v.parse().map_err(|_| self.err("invalid leaf value"))?;
                if !value.is_finite() {
                    return Err(self.err("non-finite leaf value"));
                }
                nodes.push(Node::Leaf { value });
            }
            ["split", f, thr] => {
                let feature: usize = f.parse().map_err(|_| self.err("invalid feature index"))?;
                if feature >= num_features {
                    return Err(self.err("feature index out of range"));
                }
                let threshold: f64 = thr.parse().map_err(|_| self.err("invalid threshold"))?;
                nodes.push(Node::Leaf { value: 0.0 });
                let left = self.read_node(nodes, num_features)?;
                let right = self.read_node(nodes, num_features)?;
                nodes[idx] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
            _ => return Err(self.err("expected `split` or `leaf`")),
        }
        Ok(idx)
    }
}

/// A fitted ensemble and the unclamped training MSE after each round
/// (index 0 is the constant model).
#[derive(Debug, Clone)]
pub struct GbdtFit {
    pub model: GbdtModel,
    pub mse_history: Vec<f64>,
}

const NO_NODE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct OpenNode {
    tree_index: usize,
    count: usize,
    sum: f64,
    depth: usize,
}

fn mse(targets: &[f64], pred: &[f64]) -> f64 {
    targets.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / targets.len() as f64
}

/// Fits boosted trees to `targets`. Identical targets give a zero-tree model.
pub fn train_gbdt(
    features: &FeatureMatrix,
    feature_spec: &[String],
    targets: &[f64],
    cfg: &GbdtConfig,
) -> Result<GbdtFit> {
    cfg.validate()?;
    let n = features.num_rows();
    let nf = features.num_features;
    if n == 0 || n != targets.len() {
        return Err(Error::DegenerateLabels(format!(
            "meta-model needs matching non-empty features and targets ({n} rows, {} targets)",
            targets.len()
        )));
    }
    if feature_spec.len() != nf {
        return Err(Error::Config("feature_spec length differs from feature count".into()));
    }
    if let Some(bad) = features.values.iter().chain(targets).find(|v| !v.is_finite()) {
        return Err(Error::DegenerateLabels(format!("non-finite training value {bad}")));
    }
    let constant = targets.iter().all(|&t| t == targets[0]);
    let base_score = if constant {
        targets[0]
    } else {
        targets.iter().sum::<f64>() / n as f64
    };
    let mut model = GbdtModel {
        base_score,
        shrinkage: cfg.shrinkage,
        feature_spec: feature_spec.to_vec(),
        trees: Vec::new(),
    };
    let mut pred = vec![base_score; n];
    let mut mse_history = vec![mse(targets, &pred)];
    if constant {
        return Ok(GbdtFit { model, mse_history });
    }

    // Presorted (value, row) columns.
    let columns: Vec<Vec<(f64, u32)>> = (0..nf)
        .map(|f| {
            let mut col: Vec<(f64, u32)> = (0..n).map(|i| (features.values[i * nf + f], i as u32)).collect();
            col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            col
        })
        .collect();

    let mut rng = seeded_rng(cfg.rng_seed);
    let sample_size = ((cfg.subsample_fraction * n as f64).floor() as usize).clamp(1, n);
    let mut pool: Vec<u32> = (0..n as u32).collect();
    let mut residual = vec![0.0; n];
    let mut node_of = vec![NO_NODE; n];

    for _ in 0..cfg.num_trees {
        for i in 0..n {
            residual[i] = targets[i] - pred[i];
        }
        node_of.fill(NO_NODE);
        if sample_size == n {
            node_of.fill(0);
        } else {
            for i in 0..sample_size {
                let k = rng.random_range(i..n);
                pool.swap(i, k);
                node_of[pool[i] as usize] = 0;
            }
        }
        let tree = grow_tree(features, &columns, &residual, &mut node_of, cfg);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.shrinkage * tree.predict(features.row(i));
        }
        model.trees.push(tree);
        mse_history.push(mse(targets, &pred));
    }
    Ok(GbdtFit { model, mse_history })
}

fn grow_tree(
    features: &FeatureMatrix,
    columns: &[Vec<(f64, u32)>],
    residual: &[f64],
    node_of: &mut [u32],
    cfg: &GbdtConfig,
) -> Tree {
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let (count, sum) = node_of
        .iter()
        .zip(residual)
        .filter(|(k, _)| **k == 0)
        .fold((0usize, 0.0), |(c, s), (_, r)| (c + 1, s + r));
    // Rows with `node_of == k` belong to `open[k]` on the current level.
    let mut open = vec![OpenNode {
        tree_index: 0,
        count,
        sum,
        depth: 0,
    }];

    while !open.is_empty() {
        let best = if open.iter().all(|o| o.depth >= cfg.max_depth) {
            vec![None; open.len()]
        } else {
            find_splits(columns, residual, node_of, &open, cfg)
        };
        let mut next_open = Vec::new();
        // (feature, threshold, left slot) of each split node
        let mut routes: Vec<Option<(usize, f64, u32)>> = vec![None; open.len()];
        for (k, node) in open.iter().enumerate() {
            match best[k] {
                Some(c) if node.depth < cfg.max_depth => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[node.tree_index] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    routes[k] = Some((c.feature, c.threshold, next_open.len() as u32));
                    for tree_index in [left, left + 1] {
                        next_open.push(OpenNode {
                            tree_index,
                            count: 0,
                            sum: 0.0,
                            depth: node.depth + 1,
                        });
                    }
                }
                _ => {
                    nodes[node.tree_index] = Node::Leaf {
                        value: node.sum / node.count as f64,
                    };
                }
            }
        }
        for (row, slot) in node_of.iter_mut().enumerate() {
            if *slot == NO_NODE {
                continue;
            }
            *slot = match routes[*slot as usize] {
                None => NO_NODE,
                Some((feature, threshold, left)) => {
                    let child = if features.row(row)[feature] <= threshold {
                        left
                    } else {
                        left + 1
                    };
                    let c = &mut next_open[child as usize];
                    c.count += 1;
                    c.sum += residual[row];
                    child
                }
            };
        }
        open = next_open;
    }
    Tree { nodes }
}

fn find_splits(
    columns: &[Vec<(f64, u32)>],
    residual: &[f64],
    node_of: &[u32],
    open: &[OpenNode],
    cfg: &GbdtConfig,
) -> Vec<Option<Candidate>> {
    let k = open.len();
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let mut left_count = vec![0usize; k];
    let mut left_sum = vec![0.0f64; k];
    let mut last_value = vec![f64::NAN; k];
    for (feature, col) in columns.iter().enumerate() {
        left_count.fill(0);
        left_sum.fill(0.0);
        last_value.fill(f64::NAN);
        for &(value, row) in col {
            let slot = node_of[row as usize];
            if slot == NO_NODE {
                continue;
            }
            let s = slot as usize;
            let node = &open[s];
            let lc = left_count[s];
            if lc >= cfg.min_samples_leaf && node.count - lc >= cfg.min_samples_leaf && value > last_value[s] {
                let ls = left_sum[s];
                let rs = node.sum - ls;
                let rc = node.count - lc;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - node.sum * node.sum / node.count as f64;
                if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                    let prev = last_value[s];
                    let mut threshold = prev + (value - prev) / 2.0;
                    if threshold >= value {
                        threshold = prev;
                    }
                    best[s] = Some(Candidate {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
            left_count[s] += 1;
            left_sum[s] += residual[row as usize];
            last_value[s] = value;
        }
    }
    best
}
