use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::linalg::Matrix;

/// Splits whose weighted impurity decrease does not exceed this are treated
/// as no improvement.
const MIN_DECREASE: f64 = 1e-12;
/// Decreases closer than this count as equal, so that splits with the same
/// exact decrease tie regardless of rounding.
const TIE_TOLERANCE: f64 = 1e-12;

/// `1 - Σ pₖ²` over the class counts.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    Ok(gini(class_counts.iter().map(|&c| c as f64), total as f64))
}

fn gini(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    1.0 - counts.map(|c| (c / total).powi(2)).sum::<f64>()
}

fn gini2(neg: f64, pos: f64) -> f64 {
    let n = neg + pos;
    gini([neg, pos].into_iter(), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    /// Rows with `x <= threshold` go left.
    pub threshold: f64,
    /// `G(node) - (n_l/n) G(left) - (n_r/n) G(right)`.
    pub impurity_decrease: f64,
}

/// Exhaustive CART split search over `candidate_columns` for the rows listed
/// in `rows` (repeats allowed, as in a bootstrap sample).
///
/// Thresholds are midpoints between consecutive distinct values. Columns are
/// scanned in ascending index order and thresholds in ascending order, and
/// only a decrease larger by more than `TIE_TOLERANCE` replaces the
/// incumbent, so ties go to the lower column and then the lower threshold.
pub fn best_split(
    matrix: &Matrix,
    labels: &[bool],
    rows: &[usize],
    candidate_columns: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let mut columns = candidate_columns.to_vec();
    columns.sort_unstable();
    columns.dedup();
    let mut scratch = Vec::with_capacity(rows.len());
    best_split_sorted(matrix, labels, rows, &columns, min_leaf.max(1), &mut scratch)
}

fn best_split_sorted(
    matrix: &Matrix,
    labels: &[bool],
    rows: &[usize],
    columns: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, bool)>,
) -> Option<Split> {
    let n = rows.len();
    if n < 2 || n < 2 * min_leaf {
        return None;
    }
    let pos = rows.iter().filter(|&&r| labels[r]).count() as f64;
    let total = n as f64;
    let parent = gini2(total - pos, pos);
    if parent <= 0.0 {
        return None;
    }
    let mut best: Option<Split> = None;
    for &col in columns {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (matrix.get(r, col), labels[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0.0;
        for i in 0..n - 1 {
            if scratch[i].1 {
                left_pos += 1.0;
            }
            let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let nl = n_left as f64;
            let nr = total - nl;
            let right_pos = pos - left_pos;
            let decrease =
                parent - (nl / total) * gini2(nl - left_pos, left_pos) - (nr / total) * gini2(nr - right_pos, right_pos);
            if decrease > MIN_DECREASE && best.is_none_or(|b| decrease > b.impurity_decrease + TIE_TOLERANCE) {
                let mid = 0.5 * (lo + hi);
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    column: col,
                    threshold,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Training rows (with bootstrap multiplicity) reaching the node.
        n_node: usize,
        impurity_decrease: f64,
    },
    Leaf {
        /// `[refused, granted]`
        counts: [usize; 2],
        probability: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// A binary CART classification tree stored as a node arena, root first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    /// Size of the sample the tree was grown on.
    pub n_training: usize,
}

impl DecisionTree {
    /// Grows a tree on `rows` of `matrix`. At each node the columns are
    /// shuffled and the first `mtry` searched; when none of them splits, the
    /// search continues through the remaining columns until one does.
    pub fn fit<R: Rng>(matrix: &Matrix, labels: &[bool], rows: &[usize], params: TreeParams, rng: &mut R) -> Self {
        let mut builder = Builder {
            matrix,
            labels,
            params,
            nodes: Vec::new(),
            columns: (0..matrix.ncols()).collect(),
            scratch: Vec::with_capacity(rows.len()),
        };
        let mut rows = rows.to_vec();
        builder.grow(&mut rows, 0, rng);
        DecisionTree {
            nodes: builder.nodes,
            n_training: rows.len(),
        }
    }

    pub fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Internal {
                    column,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*column] <= *threshold { *left } else { *right },
                leaf @ TreeNode::Leaf { .. } => return leaf,
            }
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self.leaf_for(row) {
            TreeNode::Leaf { probability, .. } => *probability,
            TreeNode::Internal { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Internal {
                column,
                n_node,
                impurity_decrease,
                ..
            } => Some((column, n_node, impurity_decrease)),
            TreeNode::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    matrix: &'a Matrix,
    labels: &'a [bool],
    params: TreeParams,
    nodes: Vec<TreeNode>,
    columns: Vec<usize>,
    scratch: Vec<(f64, bool)>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.labels[r]).count();
        self.nodes.push(TreeNode::Leaf {
            counts: [rows.len() - pos, pos],
            probability: pos as f64 / rows.len() as f64,
        });
        self.nodes.len() - 1
    }

    fn choose_split<R: Rng>(&mut self, rows: &[usize], rng: &mut R) -> Option<Split> {
        let p = self.columns.len();
        let mtry = self.params.mtry.clamp(1, p.max(1));
        if mtry >= p {
            let cols: Vec<usize> = (0..p).collect();
            return best_split_sorted(self.matrix, self.labels, rows, &cols, self.params.min_leaf, &mut self.scratch);
        }
        self.columns.shuffle(rng);
        let mut first: Vec<usize> = self.columns[..mtry].to_vec();
        first.sort_unstable();
        if let Some(s) = best_split_sorted(self.matrix, self.labels, rows, &first, self.params.min_leaf, &mut self.scratch)
        {
            return Some(s);
        }
        for i in mtry..p {
            let col = [self.columns[i]];
            if let Some(s) =
                best_split_sorted(self.matrix, self.labels, rows, &col, self.params.min_leaf, &mut self.scratch)
            {
                return Some(s);
            }
        }
        None
    }

    fn grow<R: Rng>(&mut self, rows: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let at_depth_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if at_depth_limit { None } else { self.choose_split(rows, rng) };
        let Some(split) = split else {
            return self.leaf(rows);
        };
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Internal {
            column: split.column,
            threshold: split.threshold,
            left: 0,
            right: 0,
            n_node: rows.len(),
            impurity_decrease: split.impurity_decrease,
        });
        let (m, col, t) = (self.matrix, split.column, split.threshold);
        rows.sort_by_key(|&r| m.get(r, col) > t);
        let n_left = rows.partition_point(|&r| m.get(r, col) <= t);
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let l = self.grow(left_rows, depth + 1, rng);
        let r = self.grow(right_rows, depth + 1, rng);
        if let TreeNode::Internal { left, right, .. } = &mut self.nodes[idx] {
            *left = l;
            *right = r;
        }
        idx
    }
}
