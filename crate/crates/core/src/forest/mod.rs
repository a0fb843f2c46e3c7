//! Random-forest grant classifier built from CART trees.
//!
//! Tree `i` draws its bootstrap sample and split candidates from a ChaCha
//! stream keyed by `(seed, i)`, so a fitted forest does not depend on how
//! the trees were scheduled across threads.

mod tree;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use tree::{best_split, gini_impurity, DecisionTree, Split, TreeNode, TreeParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("class counts are all zero")]
    EmptyNode,
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("labels contain a single class; the classifier needs both granted and refused cases")]
    SingleClass,
    #[error("mtry {mtry} exceeds the {columns} available columns")]
    MtryTooLarge { mtry: usize, columns: usize },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("row has {got} columns, model expects {expected}")]
    ColumnMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate columns per split; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, columns: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (columns as f64).sqrt().ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    /// Node-size-weighted count of splits on the feature.
    FrequencyWeighted,
    /// Node-size-weighted Gini decrease.
    MeanDecreaseImpurity,
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportanceMethod::FrequencyWeighted => "frequency_weighted",
            ImportanceMethod::MeanDecreaseImpurity => "mean_decrease_impurity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub score: f64,
    pub method: ImportanceMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTree>,
    pub config: ForestConfig,
    pub column_names: Vec<String>,
    /// Parent feature of each column; one-hot columns share their parent.
    pub column_features: Vec<String>,
    pub n_training: usize,
    pub oob_accuracy: Option<f64>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Fits `config.n_trees` trees in parallel.
///
/// `column_features` maps each column to the feature it encodes and is used
/// to aggregate importances; pass the column names for a plain matrix.
pub fn fit_forest(
    matrix: &Matrix,
    labels: &[bool],
    column_names: &[String],
    column_features: &[String],
    config: &ForestConfig,
) -> Result<RandomForestModel, ForestError> {
    let n = matrix.nrows();
    let p = matrix.ncols();
    if n == 0 || p == 0 {
        return Err(ForestError::EmptyMatrix);
    }
    if labels.len() != n {
        return Err(ForestError::LabelCount {
            rows: n,
            labels: labels.len(),
        });
    }
    if column_names.len() != p || column_features.len() != p {
        return Err(ForestError::InvalidConfig(format!(
            "{} column names / {} column features for {p} columns",
            column_names.len(),
            column_features.len()
        )));
    }
    if config.n_trees == 0 {
        return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
    }
    if config.min_leaf == 0 {
        return Err(ForestError::InvalidConfig("min_leaf must be at least 1".into()));
    }
    if config.max_depth == Some(0) {
        return Err(ForestError::InvalidConfig("max_depth must be positive".into()));
    }
    let mtry = config.resolved_mtry(p);
    if mtry > p {
        return Err(ForestError::MtryTooLarge { mtry, columns: p });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(ForestError::SingleClass);
    }
    let params = TreeParams {
        mtry,
        min_leaf: config.min_leaf,
        max_depth: config.max_depth,
    };

    let fitted: Vec<(DecisionTree, Vec<(usize, f64)>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree = DecisionTree::fit(matrix, labels, &rows, params, &mut rng);
            let oob = if config.bootstrap {
                let mut in_bag = vec![false; n];
                rows.iter().for_each(|&r| in_bag[r] = true);
                (0..n)
                    .filter(|&r| !in_bag[r])
                    .map(|r| (r, tree.predict_proba(matrix.row(r))))
                    .collect()
            } else {
                Vec::new()
            };
            (tree, oob)
        })
        .collect();

    let oob_accuracy = config.bootstrap.then(|| {
        let mut sum = vec![0.0; n];
        let mut votes = vec![0usize; n];
        for (_, oob) in &fitted {
            for &(r, p) in oob {
                sum[r] += p;
                votes[r] += 1;
            }
        }
        let (mut hit, mut seen) = (0usize, 0usize);
        for r in 0..n {
            if votes[r] > 0 {
                seen += 1;
                if (sum[r] / votes[r] as f64 >= 0.5) == labels[r] {
                    hit += 1;
                }
            }
        }
        if seen == 0 {
            0.0
        } else {
            hit as f64 / seen as f64
        }
    });

    Ok(RandomForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        config: config.clone(),
        column_names: column_names.to_vec(),
        column_features: column_features.to_vec(),
        n_training: n,
        oob_accuracy,
    })
}

impl RandomForestModel {
    fn check_row(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.column_names.len() {
            return Err(ForestError::ColumnMismatch {
                expected: self.column_names.len(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Mean over trees of the leaf grant frequency. Leaf values are summed in
    /// sorted order, so the result does not depend on tree order.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ForestError> {
        self.check_row(row)?;
        let mut leaves: Vec<f64> = self.trees.iter().map(|t| t.predict_proba(row)).collect();
        leaves.sort_by(f64::total_cmp);
        Ok((leaves.iter().sum::<f64>() / leaves.len() as f64).clamp(0.0, 1.0))
    }

    /// 1 when the grant probability reaches `threshold` (ties grant).
    pub fn predict_label(&self, row: &[f64], threshold: f64) -> Result<bool, ForestError> {
        Ok(self.predict_proba(row)? >= threshold)
    }

    /// Per-feature importance, one-hot columns summed under their parent
    /// feature, sorted by descending score then feature name.
    ///
    /// Each internal node contributes `n_node / n_training` (frequency
    /// weighted) or `n_node / n_training × impurity_decrease` (mean decrease
    /// impurity), averaged over trees. With `normalized = false` the
    /// contributions are raw `n_node` sums instead.
    pub fn importance(&self, method: ImportanceMethod, normalized: bool) -> Vec<ImportanceEntry> {
        let mut per_column = vec![0.0; self.column_names.len()];
        for tree in &self.trees {
            for (col, n_node, decrease) in tree.internal_nodes() {
                let weight = if normalized {
                    n_node as f64 / tree.n_training as f64
                } else {
                    n_node as f64
                };
                per_column[col] += match method {
                    ImportanceMethod::FrequencyWeighted => weight,
                    ImportanceMethod::MeanDecreaseImpurity => weight * decrease,
                };
            }
        }
        let mut by_feature: BTreeMap<&str, f64> = BTreeMap::new();
        for (col, score) in per_column.iter().enumerate() {
            *by_feature.entry(self.column_features[col].as_str()).or_insert(0.0) += score;
        }
        let n_trees = self.trees.len() as f64;
        let mut entries: Vec<ImportanceEntry> = by_feature
            .into_iter()
            .map(|(feature, score)| ImportanceEntry {
                feature: feature.to_string(),
                score: if normalized { score / n_trees } else { score },
                method,
            })
            .collect();
        sort_importances(&mut entries);
        entries
    }
}

pub(crate) fn sort_importances(entries: &mut [ImportanceEntry]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn single_full_tree_memorizes() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i * 7 % 13) as f64, (i * 5 % 11) as f64]).collect();
        let m = Matrix::from_rows(&rows);
        let y: Vec<bool> = rows.iter().map(|r| (r[0] * 3.0 + r[1]) as i64 % 3 == 0).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            mtry: Some(2),
            ..ForestConfig::default()
        };
        let model = fit_forest(&m, &y, &names(2), &names(2), &cfg).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(model.predict_label(r, 0.5).unwrap(), y[i]);
        }
        assert!(model.oob_accuracy.is_none());
    }

    #[test]
    fn stump_importance_is_one() {
        let m = Matrix::from_vec(4, 2, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
        let y = [false, false, true, true];
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            mtry: Some(2),
            ..ForestConfig::default()
        };
        let model = fit_forest(&m, &y, &names(2), &names(2), &cfg).unwrap();
        let imp = model.importance(ImportanceMethod::FrequencyWeighted, true);
        assert_eq!(imp[0].feature, "x0");
        assert_eq!(imp[0].score, 1.0);
        assert_eq!(imp[1].score, 0.0);
        let raw = model.importance(ImportanceMethod::FrequencyWeighted, false);
        assert_eq!(raw[0].score, 4.0);
        let mdi = model.importance(ImportanceMethod::MeanDecreaseImpurity, true);
        assert!((mdi[0].score - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_tree_average() {
        let leaf = |p: f64| DecisionTree {
            nodes: vec![TreeNode::Leaf {
                counts: [0, 0],
                probability: p,
            }],
            n_training: 1,
        };
        let model = RandomForestModel {
            trees: vec![leaf(1.0), leaf(0.0)],
            config: ForestConfig::default(),
            column_names: names(1),
            column_features: names(1),
            n_training: 1,
            oob_accuracy: None,
        };
        assert_eq!(model.predict_proba(&[0.0]).unwrap(), 0.5);
        assert!(model.predict_label(&[0.0], 0.5).unwrap());
        assert!(!model.predict_label(&[0.0], 0.7).unwrap());
        assert!(matches!(
            model.predict_proba(&[0.0, 1.0]),
            Err(ForestError::ColumnMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let m = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let cfg = ForestConfig::default();
        assert_eq!(
            fit_forest(&m, &[true; 3], &names(1), &names(1), &cfg),
            Err(ForestError::SingleClass)
        );
        let cfg = ForestConfig {
            mtry: Some(2),
            ..ForestConfig::default()
        };
        assert!(matches!(
            fit_forest(&m, &[true, false, true], &names(1), &names(1), &cfg),
            Err(ForestError::MtryTooLarge { .. })
        ));
    }
}
