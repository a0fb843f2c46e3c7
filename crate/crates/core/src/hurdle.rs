//! The two-part allowance model: a forest decides whether an allowance is
//! granted, a linear regression fitted on granted cases estimates how much,
//! and the prediction is their product.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{validate_cells, Cell, DataError, Dataset, DatasetSchema, Encoder};
use crate::forest::{fit_forest, ForestConfig, ForestError, ImportanceEntry, ImportanceMethod, RandomForestModel};
use crate::linalg::Matrix;
use crate::linreg::{fit_ols_named, stepwise_forward, FitDiagnostics, LinearModel, LinregError, StepwiseOptions, StepwiseTrace};
use crate::quantreg::{fit_quantile_named, QuantileModel, QuantregError, QuantregOptions};

pub const ARTIFACT_FORMAT: &str = "alimony-hurdle";
pub const ARTIFACT_VERSION: u32 = 1;
/// Probability at or above which the classifier grants.
pub const GRANT_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum HurdleError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Linreg(#[from] LinregError),
    #[error(transparent)]
    Quantreg(#[from] QuantregError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("{count} monthly-payment cases must be filtered out before training")]
    MonthlyPaymentsPresent { count: usize },
    #[error("excluded feature `{0}` also appears in a feature list")]
    ExcludedFeatureListed(String),
    #[error("no features left for the {0} after exclusions")]
    NoFeatures(&'static str),
    #[error("{found} granted cases with a positive amount; the regressor needs at least {needed}")]
    InsufficientGranted { found: usize, needed: usize },
    #[error("schema fingerprint {found} does not match the model's {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("not a model artifact: {0}")]
    ArtifactFormat(String),
    #[error("artifact version {found} is not supported (expected {expected})")]
    ArtifactVersion { found: u64, expected: u32 },
    #[error("corrupt model artifact: {0}")]
    ArtifactCorrupt(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationMode {
    /// `grant_label × amount`: zero when refused, the regression otherwise.
    #[default]
    Label,
    /// `grant_probability × amount`.
    Probability,
}

impl fmt::Display for CombinationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombinationMode::Label => "label",
            CombinationMode::Probability => "probability",
        })
    }
}

impl FromStr for CombinationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" => Ok(CombinationMode::Label),
            "probability" => Ok(CombinationMode::Probability),
            other => Err(format!("unknown combination mode `{other}` (expected label or probability)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    #[default]
    Ols,
    Quantile,
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressorKind::Ols => "ols",
            RegressorKind::Quantile => "quantile",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Selection {
    /// Forward selection over the encoded columns.
    Stepwise(StepwiseOptions),
    /// Every encoded column of the feature list.
    All,
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Stepwise(StepwiseOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    /// Quantile level; used by the quantile kind only.
    pub tau: f64,
    /// `None` means every schema feature not excluded.
    pub features: Option<Vec<String>>,
    pub selection: Selection,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kind: RegressorKind::Ols,
            tau: 0.5,
            features: None,
            selection: Selection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HurdleConfig {
    /// `None` means every schema feature not excluded.
    pub classifier_features: Option<Vec<String>>,
    pub regressor: RegressorConfig,
    pub combination_mode: CombinationMode,
    /// Removed from both submodels before anything is fitted.
    pub excluded_features: Vec<String>,
    pub forest: ForestConfig,
}

impl HurdleConfig {
    fn resolve(&self, schema: &DatasetSchema, explicit: &Option<Vec<String>>) -> Result<Vec<String>, HurdleError> {
        for name in &self.excluded_features {
            if schema.feature_index(name).is_none() {
                return Err(DataError::UnknownFeature(name.clone()).into());
            }
        }
        match explicit {
            Some(list) => {
                if let Some(bad) = list.iter().find(|n| self.excluded_features.contains(n)) {
                    return Err(HurdleError::ExcludedFeatureListed(bad.clone()));
                }
                Ok(list.clone())
            }
            None => Ok(schema
                .features
                .iter()
                .map(|f| f.name.clone())
                .filter(|n| !self.excluded_features.contains(n))
                .collect()),
        }
    }

    pub fn classifier_feature_list(&self, schema: &DatasetSchema) -> Result<Vec<String>, HurdleError> {
        self.resolve(schema, &self.classifier_features)
    }

    pub fn regressor_feature_list(&self, schema: &DatasetSchema) -> Result<Vec<String>, HurdleError> {
        self.resolve(schema, &self.regressor.features)
    }
}

/// Step 1: the grant classifier over its own encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrantClassifier {
    pub encoder: Encoder,
    pub forest: RandomForestModel,
}

impl GrantClassifier {
    pub fn probability(&self, values: &[Cell]) -> Result<f64, HurdleError> {
        Ok(self.forest.predict_proba(&self.encoder.encode_row(values))?)
    }

    pub fn importance(&self, method: ImportanceMethod, normalized: bool) -> Vec<ImportanceEntry> {
        self.forest.importance(method, normalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Ols(LinearModel),
    Quantile(QuantileModel),
}

impl Regressor {
    pub fn predict(&self, row: &[f64]) -> Result<f64, LinregError> {
        match self {
            Regressor::Ols(m) => m.predict(row),
            Regressor::Quantile(m) => m.predict(row),
        }
    }

    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        match self {
            Regressor::Ols(m) => m.coefficient_table(),
            Regressor::Quantile(m) => m.coefficient_table(),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Regressor::Ols(_) => None,
            Regressor::Quantile(m) => Some(m.tau),
        }
    }
}

/// Step 2: the amount regression. `columns` picks the regressors out of the
/// encoder's output, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmountRegressor {
    pub encoder: Encoder,
    pub columns: Vec<usize>,
    pub model: Regressor,
}

impl AmountRegressor {
    /// A regressor over `features` with known coefficients, one per encoded
    /// column in encoder order. Missing scalars impute to zero.
    pub fn from_model(schema: &DatasetSchema, features: &[String], model: Regressor) -> Result<Self, HurdleError> {
        let encoder = Encoder::fit_rows_coded(schema, std::iter::empty(), features, true)?;
        let expected = encoder.ncols();
        let got = model.coefficient_table().len() - 1;
        if got != expected {
            return Err(LinregError::ColumnMismatch { expected, got }.into());
        }
        Ok(Self {
            columns: (0..expected).collect(),
            encoder,
            model,
        })
    }

    pub fn row(&self, values: &[Cell]) -> Vec<f64> {
        let full = self.encoder.encode_row(values);
        self.columns.iter().map(|&j| full[j]).collect()
    }

    /// Unclipped regression output in euros.
    pub fn raw(&self, values: &[Cell]) -> Result<f64, HurdleError> {
        Ok(self.model.predict(&self.row(values))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_cases: usize,
    pub n_granted: usize,
    /// Granted cases with a positive amount: the regressor's population.
    pub n_regressor: usize,
    pub classifier_features: Vec<String>,
    pub classifier_columns: usize,
    pub regressor_features: Vec<String>,
    pub regressor_columns: Vec<String>,
    pub oob_accuracy: Option<f64>,
    pub stepwise: Option<StepwiseTrace>,
    /// Least-squares diagnostics of the selected columns on the regressor
    /// population, reported for either regressor kind.
    pub diagnostics: Option<FitDiagnostics>,
}

/// Negative values map to zero, flagged.
fn clip(raw: f64) -> (f64, bool) {
    if raw < 0.0 {
        (0.0, true)
    } else {
        (raw, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionBreakdown {
    pub grant_probability: f64,
    pub grant_label: bool,
    /// Regression output clipped below at zero.
    pub amount_raw: f64,
    pub amount_adjusted: f64,
    /// The regression output was negative.
    pub clipped: bool,
    pub mode: CombinationMode,
}

impl PredictionBreakdown {
    pub fn combine(grant_probability: f64, raw: f64, mode: CombinationMode) -> Self {
        let grant_label = grant_probability >= GRANT_THRESHOLD;
        let (amount_raw, clipped) = clip(raw);
        let amount_adjusted = match mode {
            CombinationMode::Label => {
                if grant_label {
                    amount_raw
                } else {
                    0.0
                }
            }
            CombinationMode::Probability => grant_probability * amount_raw,
        };
        Self {
            grant_probability,
            grant_label,
            amount_raw,
            amount_adjusted,
            clipped,
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleModel {
    pub schema: DatasetSchema,
    pub schema_fingerprint: String,
    pub config: HurdleConfig,
    pub classifier: GrantClassifier,
    pub regressor: AmountRegressor,
    pub summary: TrainingSummary,
}

/// Fits the grant classifier on every case in `dataset`.
pub fn train_classifier(dataset: &Dataset, config: &HurdleConfig) -> Result<GrantClassifier, HurdleError> {
    check_filtered(dataset)?;
    let features = config.classifier_feature_list(&dataset.schema)?;
    if features.is_empty() {
        return Err(HurdleError::NoFeatures("classifier"));
    }
    let encoder = Encoder::fit(dataset, &features)?;
    let matrix = encoder.transform(dataset);
    let forest = fit_forest(
        &matrix.rows,
        &dataset.grant_labels(),
        &matrix.column_names,
        &matrix.column_features,
        &config.forest,
    )?;
    Ok(GrantClassifier { encoder, forest })
}

pub struct RegressorFit {
    pub regressor: AmountRegressor,
    pub stepwise: Option<StepwiseTrace>,
    pub diagnostics: FitDiagnostics,
    pub n_population: usize,
}

/// Granted cases with a positive amount.
pub fn regressor_population(dataset: &Dataset) -> Dataset {
    dataset.filter(|r| r.grant && r.amount > 0.0)
}

/// Fits the amount regression on the granted, positive-amount cases of
/// `dataset`. Stepwise selection, when configured, always ranks candidates
/// by least squares; the chosen kind is then fitted on the selected columns.
pub fn train_regressor(dataset: &Dataset, config: &HurdleConfig) -> Result<RegressorFit, HurdleError> {
    check_filtered(dataset)?;
    let features = config.regressor_feature_list(&dataset.schema)?;
    if features.is_empty() {
        return Err(HurdleError::NoFeatures("regressor"));
    }
    let population = regressor_population(dataset);
    let encoder = Encoder::fit_reference_coded(&population, &features)?;
    let needed = match config.regressor.selection {
        Selection::Stepwise(_) => 3,
        Selection::All => encoder.ncols() + 2,
    };
    if population.len() < needed {
        return Err(HurdleError::InsufficientGranted {
            found: population.len(),
            needed,
        });
    }
    let matrix = encoder.transform(&population).rows;
    let y = population.amounts();
    let names = encoder.column_names().to_vec();

    let (columns, stepwise, diagnostics) = match &config.regressor.selection {
        Selection::Stepwise(options) => {
            let candidates: Vec<usize> = (0..names.len()).collect();
            let fit = stepwise_forward(&matrix, &y, &names, &candidates, options)?;
            (fit.trace.selected.clone(), Some(fit.trace), fit.diagnostics)
        }
        Selection::All => {
            let (_, d) = fit_ols_named(&matrix, &y, names.clone())?;
            ((0..names.len()).collect(), None, d)
        }
    };
    let selected = matrix.select_columns(&columns);
    let selected_names: Vec<String> = columns.iter().map(|&j| names[j].clone()).collect();
    let model = fit_kind(&selected, &y, selected_names, &config.regressor)?;
    Ok(RegressorFit {
        regressor: AmountRegressor { encoder, columns, model },
        stepwise,
        diagnostics,
        n_population: population.len(),
    })
}

fn fit_kind(x: &Matrix, y: &[f64], names: Vec<String>, config: &RegressorConfig) -> Result<Regressor, HurdleError> {
    Ok(match config.kind {
        RegressorKind::Ols => Regressor::Ols(fit_ols_named(x, y, names)?.0),
        RegressorKind::Quantile => Regressor::Quantile(fit_quantile_named(
            x,
            y,
            config.tau,
            names,
            &QuantregOptions::default(),
        )?),
    })
}

fn check_filtered(dataset: &Dataset) -> Result<(), HurdleError> {
    let count = dataset.records.iter().filter(|r| r.monthly_payment).count();
    if count > 0 {
        return Err(HurdleError::MonthlyPaymentsPresent { count });
    }
    Ok(())
}

/// Trains both submodels. `dataset` must already exclude monthly-payment
/// cases and contain both grant classes.
pub fn train_hurdle(dataset: &Dataset, config: &HurdleConfig) -> Result<HurdleModel, HurdleError> {
    let classifier = train_classifier(dataset, config)?;
    let fit = train_regressor(dataset, config)?;
    Ok(HurdleModel::assemble(dataset, config, classifier, fit))
}

impl HurdleModel {
    pub fn assemble(dataset: &Dataset, config: &HurdleConfig, classifier: GrantClassifier, fit: RegressorFit) -> Self {
        let summary = TrainingSummary {
            n_cases: dataset.len(),
            n_granted: dataset.records.iter().filter(|r| r.grant).count(),
            n_regressor: fit.n_population,
            classifier_features: classifier.encoder.feature_names(),
            classifier_columns: classifier.encoder.ncols(),
            regressor_features: fit.regressor.encoder.feature_names(),
            regressor_columns: fit
                .regressor
                .columns
                .iter()
                .map(|&j| fit.regressor.encoder.column_names()[j].clone())
                .collect(),
            oob_accuracy: classifier.forest.oob_accuracy,
            stepwise: fit.stepwise,
            diagnostics: Some(fit.diagnostics),
        };
        Self {
            schema_fingerprint: dataset.schema.fingerprint(),
            schema: dataset.schema.clone(),
            config: config.clone(),
            classifier,
            regressor: fit.regressor,
            summary,
        }
    }

    /// Swaps in an amount model with externally supplied coefficients. The
    /// selection trace and fit diagnostics no longer apply and are dropped.
    /// `regressor` must be built against this model's schema.
    pub fn with_regressor(mut self, regressor: AmountRegressor) -> Self {
        self.summary.regressor_features = regressor.encoder.feature_names();
        self.summary.regressor_columns = regressor
            .columns
            .iter()
            .map(|&j| regressor.encoder.column_names()[j].clone())
            .collect();
        self.summary.stepwise = None;
        self.summary.diagnostics = None;
        self.regressor = regressor;
        self
    }

    /// Predicts one case given schema-ordered cells. `mode` overrides the
    /// configured combination.
    pub fn predict_case(&self, values: &[Cell], mode: Option<CombinationMode>) -> Result<PredictionBreakdown, HurdleError> {
        validate_cells(values, &self.schema, 1)?;
        self.predict_unchecked(values, mode)
    }

    fn predict_unchecked(&self, values: &[Cell], mode: Option<CombinationMode>) -> Result<PredictionBreakdown, HurdleError> {
        let p = self.classifier.probability(values)?;
        let raw = self.regressor.raw(values)?;
        Ok(PredictionBreakdown::combine(p, raw, mode.unwrap_or(self.config.combination_mode)))
    }

    /// Predicts every case of `dataset`, whose schema must match the model's.
    pub fn predict_dataset(&self, dataset: &Dataset, mode: Option<CombinationMode>) -> Result<Vec<PredictionBreakdown>, HurdleError> {
        self.check_schema(&dataset.schema)?;
        dataset
            .records
            .iter()
            .map(|r| self.predict_unchecked(&r.values, mode))
            .collect()
    }

    pub fn check_schema(&self, schema: &DatasetSchema) -> Result<(), HurdleError> {
        let found = schema.fingerprint();
        if found != self.schema_fingerprint {
            return Err(HurdleError::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn importance(&self, method: ImportanceMethod, normalized: bool) -> Vec<ImportanceEntry> {
        self.classifier.importance(method, normalized)
    }

    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        self.regressor.model.coefficient_table()
    }

    /// SHA-256 of the exported artifact bytes.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_artifact_bytes()))
    }

    pub fn to_artifact_bytes(&self) -> Vec<u8> {
        let artifact = ArtifactRef {
            format: ARTIFACT_FORMAT,
            version: ARTIFACT_VERSION,
            schema_fingerprint: &self.schema_fingerprint,
            model: self,
        };
        let mut bytes = serde_json::to_vec(&artifact).expect("model serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_artifact_bytes(bytes: &[u8]) -> Result<Self, HurdleError> {
        let header: ArtifactHeader =
            serde_json::from_slice(bytes).map_err(|e| HurdleError::ArtifactCorrupt(e.to_string()))?;
        if header.format.as_deref() != Some(ARTIFACT_FORMAT) {
            return Err(HurdleError::ArtifactFormat(format!(
                "format field is {:?}, expected {ARTIFACT_FORMAT:?}",
                header.format
            )));
        }
        match header.version {
            Some(v) if v == u64::from(ARTIFACT_VERSION) => {}
            Some(found) => {
                return Err(HurdleError::ArtifactVersion {
                    found,
                    expected: ARTIFACT_VERSION,
                })
            }
            None => return Err(HurdleError::ArtifactCorrupt("missing version field".into())),
        }
        let artifact: ArtifactOwned =
            serde_json::from_slice(bytes).map_err(|e| HurdleError::ArtifactCorrupt(e.to_string()))?;
        let model = artifact.model;
        model.check_schema(&model.schema)?;
        if artifact.schema_fingerprint != model.schema_fingerprint {
            return Err(HurdleError::SchemaMismatch {
                expected: artifact.schema_fingerprint,
                found: model.schema_fingerprint,
            });
        }
        Ok(model)
    }
}

#[derive(Serialize)]
struct ArtifactRef<'a> {
    format: &'a str,
    version: u32,
    schema_fingerprint: &'a str,
    model: &'a HurdleModel,
}

#[derive(Deserialize)]
struct ArtifactHeader {
    format: Option<String>,
    version: Option<u64>,
}

#[derive(Deserialize)]
struct ArtifactOwned {
    schema_fingerprint: String,
    model: HurdleModel,
}

pub fn export_model(model: &HurdleModel, path: &Path) -> Result<(), HurdleError> {
    std::fs::write(path, model.to_artifact_bytes()).map_err(|source| HurdleError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn import_model(path: &Path) -> Result<HurdleModel, HurdleError> {
    let bytes = std::fs::read(path).map_err(|source| HurdleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    HurdleModel::from_artifact_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_mode_is_exact() {
        let refused = PredictionBreakdown::combine(0.3, 20000.0, CombinationMode::Label);
        assert!(!refused.grant_label);
        assert_eq!(refused.amount_adjusted.to_bits(), 0.0f64.to_bits());
        let granted = PredictionBreakdown::combine(0.5, 15000.0, CombinationMode::Label);
        assert!(granted.grant_label);
        assert_eq!(granted.amount_adjusted.to_bits(), 15000.0f64.to_bits());
    }

    #[test]
    fn probability_mode_scales() {
        let b = PredictionBreakdown::combine(0.8, 10000.0, CombinationMode::Probability);
        assert_eq!(b.amount_adjusted, 8000.0);
        assert!(b.grant_label);
    }

    #[test]
    fn negative_regression_is_clipped() {
        let b = PredictionBreakdown::combine(0.9, -250.0, CombinationMode::Label);
        assert!(b.clipped);
        assert_eq!(b.amount_raw, 0.0);
        assert_eq!(b.amount_adjusted, 0.0);
        let b = PredictionBreakdown::combine(0.9, 250.0, CombinationMode::Probability);
        assert!(!b.clipped);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("label".parse::<CombinationMode>().unwrap(), CombinationMode::Label);
        assert_eq!("probability".parse::<CombinationMode>().unwrap(), CombinationMode::Probability);
        assert!("both".parse::<CombinationMode>().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = HurdleConfig {
            regressor: RegressorConfig {
                kind: RegressorKind::Quantile,
                tau: 0.25,
                features: Some(vec!["salary_wife".into()]),
                selection: Selection::All,
            },
            excluded_features: vec!["seat_of_court".into()],
            ..HurdleConfig::default()
        };
        let text = toml::to_string(&config).unwrap();
        let back: HurdleConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
        let sparse: HurdleConfig = toml::from_str("[regressor]\nkind = \"quantile\"\n").unwrap();
        assert_eq!(sparse.regressor.kind, RegressorKind::Quantile);
        assert_eq!(sparse.regressor.tau, 0.5);
        assert_eq!(sparse.regressor.selection, Selection::default());
        let stepwise: HurdleConfig =
            toml::from_str("[regressor.selection]\nmethod = \"stepwise\"\nentry_p = 0.01\n").unwrap();
        assert!(matches!(stepwise.regressor.selection, Selection::Stepwise(o) if o.entry_p == 0.01));
    }
}
