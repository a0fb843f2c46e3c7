//! Case records, the schema sidecar, CSV ingestion, case filters, splitting,
//! encoding to a numeric design matrix and the synthetic case generator.

mod csv_io;
mod encode;
mod schema;
mod split;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_dataset, read_dataset, read_feature_rows, save_dataset, write_dataset};
pub(crate) use csv_io::parse_bool;
pub use encode::{encode, EncodedMatrix, Encoder};
pub use schema::{DatasetSchema, FeatureKind, FeatureSpec, Role, Unit, SCHEMA_VERSION};
pub use split::train_test_split;
pub use synthetic::{generate_synthetic, Distribution, SeatBias, SyntheticConfig, SyntheticFeature};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema sidecar does not parse: {0}")]
    SchemaParse(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("column `{0}` is not declared in the schema")]
    UnknownColumn(String),
    #[error("required column `{0}` is absent from the CSV header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot read `{value}` as {expected}")]
    TypeMismatch {
        row: usize,
        column: String,
        value: String,
        expected: String,
    },
    #[error("row {row}, column `{column}`: value is missing but the column does not allow missing values")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: alimony not granted but amount is {amount}")]
    AmountWithoutGrant { row: usize, amount: f64 },
    #[error("row {row}: {message}")]
    InvalidRecord { row: usize, message: String },
    #[error("feature subset is empty")]
    EmptyFeatureSubset,
    #[error("feature `{0}` is not in the schema")]
    UnknownFeature(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("grant class {class} has only {count} record(s); a stratified split needs at least 2")]
    SmallClass { class: bool, count: usize },
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthetic(String),
}

/// One non-missing cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Count(u64),
    Bool(bool),
    /// Index into the feature's level list.
    Level(u32),
}

impl Value {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Number(v) => v,
            Value::Count(c) => c as f64,
            Value::Bool(b) => f64::from(u8::from(b)),
            Value::Level(l) => f64::from(l),
        }
    }

    pub fn matches(&self, kind: &FeatureKind) -> bool {
        match (self, kind) {
            (Value::Number(v), FeatureKind::Numeric { .. }) => v.is_finite(),
            (Value::Count(_), FeatureKind::Count) => true,
            (Value::Bool(_), FeatureKind::Boolean) => true,
            (Value::Level(l), FeatureKind::Categorical { levels }) => (*l as usize) < levels.len(),
            _ => false,
        }
    }
}

pub type Cell = Option<Value>;

/// One codified decision. Amounts are euros, stored as `f64` whose decimal
/// rendering round-trips exactly through CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub values: Vec<Cell>,
    pub grant: bool,
    pub amount: f64,
    pub monthly_payment: bool,
    pub parties_agreed: bool,
}

impl CaseRecord {
    /// Checks the record against `schema`; `row` is only used in messages.
    pub fn validate(&self, schema: &DatasetSchema, row: usize) -> Result<(), DataError> {
        validate_cells(&self.values, schema, row)?;
        if !self.amount.is_finite() || self.amount < 0.0 {
            return Err(DataError::InvalidRecord {
                row,
                message: format!("amount {} must be a non-negative number of euros", self.amount),
            });
        }
        if !self.grant && self.amount > 0.0 {
            return Err(DataError::AmountWithoutGrant {
                row,
                amount: self.amount,
            });
        }
        Ok(())
    }
}

pub fn validate_cells(values: &[Cell], schema: &DatasetSchema, row: usize) -> Result<(), DataError> {
    if values.len() != schema.features.len() {
        return Err(DataError::InvalidRecord {
            row,
            message: format!(
                "{} cells for {} schema features",
                values.len(),
                schema.features.len()
            ),
        });
    }
    for (cell, spec) in values.iter().zip(&schema.features) {
        match cell {
            None if !spec.allow_missing => {
                return Err(DataError::MissingValue {
                    row,
                    column: spec.name.clone(),
                })
            }
            Some(v) if !v.matches(&spec.kind) => {
                return Err(DataError::TypeMismatch {
                    row,
                    column: spec.name.clone(),
                    value: format!("{v:?}"),
                    expected: kind_label(&spec.kind).into(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

pub(crate) fn kind_label(kind: &FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Numeric { .. } => "a finite number",
        FeatureKind::Count => "a non-negative integer",
        FeatureKind::Boolean => "a boolean",
        FeatureKind::Categorical { .. } => "one of the declared levels",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub records: Vec<CaseRecord>,
    /// Generating process, when the data is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<SyntheticConfig>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, records: Vec<CaseRecord>) -> Result<Self, DataError> {
        for (i, r) in records.iter().enumerate() {
            r.validate(&schema, i + 1)?;
        }
        Ok(Self {
            schema,
            records,
            ground_truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&CaseRecord) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn grant_labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.grant).collect()
    }

    pub fn amounts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.amount).collect()
    }
}

/// Which procedural situation to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    All,
    /// Offer equals demand.
    Agreed,
    /// Parties disagree on the principle or the amount.
    Contested,
}

impl Subset {
    pub fn admits(self, record: &CaseRecord) -> bool {
        match self {
            Subset::All => true,
            Subset::Agreed => record.parties_agreed,
            Subset::Contested => !record.parties_agreed,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::All => "all",
            Subset::Agreed => "agreed",
            Subset::Contested => "contested",
        })
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Subset::All),
            "agreed" => Ok(Subset::Agreed),
            "contested" => Ok(Subset::Contested),
            other => Err(format!("unknown subset `{other}` (expected all, agreed or contested)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub dataset: Dataset,
    pub removed_monthly: usize,
    pub removed_by_subset: usize,
}

/// Drops monthly-payment decisions (when asked) and keeps the requested
/// procedural subset. Never fails; the result may be empty.
pub fn filter_cases(dataset: &Dataset, exclude_monthly: bool, subset: Subset) -> FilterOutcome {
    let mut removed_monthly = 0;
    let mut removed_by_subset = 0;
    let filtered = dataset.filter(|r| {
        if exclude_monthly && r.monthly_payment {
            removed_monthly += 1;
            false
        } else if !subset.admits(r) {
            removed_by_subset += 1;
            false
        } else {
            true
        }
    });
    FilterOutcome {
        dataset: filtered,
        removed_monthly,
        removed_by_subset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![FeatureSpec::numeric("x", Unit::Euros)]).unwrap()
    }

    fn record(monthly: bool, agreed: bool) -> CaseRecord {
        CaseRecord {
            values: vec![Some(Value::Number(1.0))],
            grant: true,
            amount: 100.0,
            monthly_payment: monthly,
            parties_agreed: agreed,
        }
    }

    #[test]
    fn monthly_exclusion_counts() {
        let records = (0..10).map(|i| record(i < 2, i % 2 == 0)).collect();
        let ds = Dataset::new(schema(), records).unwrap();
        let out = filter_cases(&ds, true, Subset::All);
        assert_eq!(out.dataset.len(), 8);
        assert_eq!(out.removed_monthly, 2);
        assert_eq!(out.removed_by_subset, 0);
        let kept = filter_cases(&ds, false, Subset::All);
        assert_eq!(kept.dataset.len(), 10);
    }

    #[test]
    fn contested_on_all_agreed_is_empty() {
        let records = (0..5).map(|_| record(false, true)).collect();
        let ds = Dataset::new(schema(), records).unwrap();
        let out = filter_cases(&ds, true, Subset::Contested);
        assert!(out.dataset.is_empty());
        assert_eq!(out.removed_by_subset, 5);
    }

    #[test]
    fn amount_without_grant_is_rejected() {
        let mut r = record(false, false);
        r.grant = false;
        r.amount = 500.0;
        assert!(matches!(
            Dataset::new(schema(), vec![r]),
            Err(DataError::AmountWithoutGrant { row: 1, .. })
        ));
    }
}
