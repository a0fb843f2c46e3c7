//! Extra-legal factor audit: rank the classifier's features, flag protected
//! ones near the top, and measure what excluding them costs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{train_test_split, Dataset, Role};
use crate::eval::{classification_report, regression_report, ClassificationReport, RegressionReport};
use crate::forest::{ImportanceEntry, ImportanceMethod};
use crate::hurdle::{train_hurdle, HurdleConfig, HurdleError, HurdleModel, GRANT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Extra-legal features ranked at or above this position are flagged.
    pub flag_rank_k: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub method: ImportanceMethod,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            flag_rank_k: 15,
            test_fraction: 0.2,
            split_seed: 0,
            method: ImportanceMethod::FrequencyWeighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImportance {
    /// 1-based.
    pub rank: usize,
    pub feature: String,
    pub score: f64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub feature: String,
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMetrics {
    pub classification: ClassificationReport,
    /// Combined prediction against the actual amount on the test split.
    pub regression: RegressionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDeltas {
    /// Clean minus baseline.
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub median_ae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub flag_rank_k: usize,
    pub method: ImportanceMethod,
    pub extra_legal_features: Vec<String>,
    /// The schema marks nothing extra-legal: only the ranking is reported.
    pub degenerate: bool,
    pub ranking: Vec<RankedImportance>,
    pub flagged: Vec<Flag>,
    pub baseline: AuditMetrics,
    pub clean: Option<AuditMetrics>,
    pub deltas: Option<AuditDeltas>,
    pub clean_features: Option<Vec<String>>,
}

/// The `top_n` highest-scoring entries, descending, ties by name.
pub fn importance_table(model: &HurdleModel, method: ImportanceMethod, top_n: usize) -> Vec<ImportanceEntry> {
    let mut entries = model.importance(method, true);
    entries.truncate(top_n);
    entries
}

fn metrics(model: &HurdleModel, test: &Dataset) -> Result<AuditMetrics, HurdleError> {
    let predictions = model.predict_dataset(test, None)?;
    let probabilities: Vec<f64> = predictions.iter().map(|p| p.grant_probability).collect();
    let adjusted: Vec<f64> = predictions.iter().map(|p| p.amount_adjusted).collect();
    Ok(AuditMetrics {
        classification: classification_report(&test.grant_labels(), &probabilities, GRANT_THRESHOLD)?,
        regression: regression_report(&test.amounts(), &adjusted)?,
    })
}

fn without(list: &Option<Vec<String>>, drop: &[String]) -> Option<Vec<String>> {
    list.as_ref()
        .map(|l| l.iter().filter(|n| !drop.contains(n)).cloned().collect())
}

/// Trains a baseline that may use extra-legal features and a clean model that
/// may not, both on the same training split, and compares them on the held
/// out split. `dataset` must already exclude monthly-payment cases.
pub fn run_audit(dataset: &Dataset, config: &HurdleConfig, audit: &AuditConfig) -> Result<AuditReport, HurdleError> {
    let schema = &dataset.schema;
    let extra = schema.extra_legal_features();
    let (train, test) = train_test_split(dataset, audit.test_fraction, audit.split_seed)?;

    let mut base_config = config.clone();
    base_config.excluded_features.retain(|n| !extra.contains(n));
    let baseline = train_hurdle(&train, &base_config)?;
    let baseline_metrics = metrics(&baseline, &test)?;
    let ranking: Vec<RankedImportance> = baseline
        .importance(audit.method, true)
        .into_iter()
        .enumerate()
        .map(|(i, e)| RankedImportance {
            rank: i + 1,
            role: schema.feature(&e.feature).map_or(Role::Legal, |f| f.role),
            feature: e.feature,
            score: e.score,
        })
        .collect();
    let flagged: Vec<Flag> = ranking
        .iter()
        .filter(|r| r.role == Role::ExtraLegal && r.rank <= audit.flag_rank_k)
        .map(|r| Flag {
            feature: r.feature.clone(),
            rank: r.rank,
            score: r.score,
        })
        .collect();

    if extra.is_empty() {
        return Ok(AuditReport {
            flag_rank_k: audit.flag_rank_k,
            method: audit.method,
            extra_legal_features: extra,
            degenerate: true,
            ranking,
            flagged,
            baseline: baseline_metrics,
            clean: None,
            deltas: None,
            clean_features: None,
        });
    }

    let mut clean_config = config.clone();
    for name in &extra {
        if !clean_config.excluded_features.contains(name) {
            clean_config.excluded_features.push(name.clone());
        }
    }
    clean_config.classifier_features = without(&clean_config.classifier_features, &extra);
    clean_config.regressor.features = without(&clean_config.regressor.features, &extra);
    let clean = train_hurdle(&train, &clean_config)?;
    debug_assert!(clean
        .summary
        .classifier_features
        .iter()
        .chain(&clean.summary.regressor_features)
        .all(|f| !extra.contains(f)));
    let clean_metrics = metrics(&clean, &test)?;
    let deltas = AuditDeltas {
        accuracy: clean_metrics.classification.accuracy - baseline_metrics.classification.accuracy,
        auc: clean_metrics
            .classification
            .auc
            .zip(baseline_metrics.classification.auc)
            .map(|(c, b)| c - b),
        median_ae: clean_metrics.regression.median_ae - baseline_metrics.regression.median_ae,
    };
    Ok(AuditReport {
        flag_rank_k: audit.flag_rank_k,
        method: audit.method,
        extra_legal_features: extra,
        degenerate: false,
        ranking,
        flagged,
        baseline: baseline_metrics,
        clean: Some(clean_metrics),
        deltas: Some(deltas),
        clean_features: Some(clean.summary.classifier_features.clone()),
    })
}

fn metrics_lines(out: &mut String, label: &str, m: &AuditMetrics) {
    let auc = m
        .classification
        .auc
        .map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"));
    let _ = writeln!(
        out,
        "  {label:<9} accuracy {:.4}  AUC {auc}  median AE {:.2}k€",
        m.classification.accuracy,
        m.regression.median_ae / 1000.0
    );
}

pub fn render_audit(report: &AuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Feature importance in the grant classifier ({})", report.method);
    let _ = writeln!(out, "{:>4}  {:<28}{:>10}  role", "rank", "feature", "score");
    for r in &report.ranking {
        let marker = if report.flagged.iter().any(|f| f.feature == r.feature) {
            "  <- flagged"
        } else {
            ""
        };
        let _ = writeln!(out, "{:>4}  {:<28}{:>10.4}  {}{marker}", r.rank, r.feature, r.score, r.role);
    }
    let _ = writeln!(out);
    if report.degenerate {
        let _ = writeln!(out, "The schema marks no feature as extra-legal; nothing to audit.");
        metrics_lines(&mut out, "model", &report.baseline);
        return out;
    }
    if report.flagged.is_empty() {
        let _ = writeln!(
            out,
            "No extra-legal feature among the top {} ({}).",
            report.flag_rank_k,
            report.extra_legal_features.join(", ")
        );
    } else {
        for f in &report.flagged {
            let _ = writeln!(out, "Flagged: {} at rank {} (score {:.4})", f.feature, f.rank, f.score);
        }
    }
    let _ = writeln!(out, "\nHeld-out performance");
    metrics_lines(&mut out, "baseline", &report.baseline);
    if let Some(clean) = &report.clean {
        metrics_lines(&mut out, "clean", clean);
    }
    if let Some(d) = &report.deltas {
        let auc = d.auc.map_or_else(|| "n/a".to_string(), |a| format!("{a:+.4}"));
        let _ = writeln!(
            out,
            "  delta     accuracy {:+.4}  AUC {auc}  median AE {:+.2}k€",
            d.accuracy,
            d.median_ae / 1000.0
        );
    }
    out
}
