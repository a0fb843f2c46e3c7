use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

/// Sidecar format revision understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Euros,
    Months,
    Years,
    Unitless,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric { unit: Unit },
    Count,
    Boolean,
    Categorical { levels: Vec<String> },
}

/// Whether a variable belongs to the legal criteria a judge is supposed to
/// weigh, or is an extra-legal factor (court seat, ...) to be audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Legal,
    ExtraLegal,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Legal => "legal",
            Role::ExtraLegal => "extra_legal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub role: Role,
    #[serde(default)]
    pub allow_missing: bool,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, unit: Unit) -> Self {
        Self::new(name, FeatureKind::Numeric { unit })
    }

    pub fn count(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Count)
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Boolean)
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            name,
            FeatureKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        )
    }

    fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            role: Role::Legal,
            allow_missing: false,
        }
    }

    pub fn extra_legal(mut self) -> Self {
        self.role = Role::ExtraLegal;
        self
    }

    pub fn allow_missing(mut self) -> Self {
        self.allow_missing = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub schema_version: u32,
    pub target_grant: String,
    pub target_amount: String,
    pub flag_monthly_payment: String,
    pub flag_parties_agreed: String,
    pub features: Vec<FeatureSpec>,
}

impl DatasetSchema {
    /// Builds and validates a schema with the conventional outcome column names.
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, DataError> {
        let schema = Self {
            schema_version: SCHEMA_VERSION,
            target_grant: "granted".into(),
            target_amount: "amount".into(),
            flag_monthly_payment: "monthly_payment".into(),
            flag_parties_agreed: "parties_agreed".into(),
            features,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DataError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let invalid = |msg: String| Err(DataError::InvalidSchema(msg));
        let mut names = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return invalid("feature with empty name".into());
            }
            if !names.insert(f.name.as_str()) {
                return invalid(format!("duplicate feature name `{}`", f.name));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return invalid(format!("categorical `{}` has no levels", f.name));
                }
                let mut seen = HashSet::new();
                if let Some(dup) = levels.iter().find(|l| !seen.insert(l.as_str())) {
                    return invalid(format!("categorical `{}` repeats level `{dup}`", f.name));
                }
            }
        }
        let outcome = self.outcome_columns();
        let mut seen = HashSet::new();
        for col in outcome {
            if names.contains(col) {
                return invalid(format!("outcome column `{col}` is also listed as a feature"));
            }
            if !seen.insert(col) {
                return invalid(format!("outcome column `{col}` named twice"));
            }
        }
        if !self.features.iter().any(|f| f.role == Role::Legal) {
            return invalid("schema needs at least one legal feature".into());
        }
        Ok(())
    }

    pub fn outcome_columns(&self) -> [&str; 4] {
        [
            &self.target_grant,
            &self.target_amount,
            &self.flag_monthly_payment,
            &self.flag_parties_agreed,
        ]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn extra_legal_features(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.role == Role::ExtraLegal)
            .map(|f| f.name.clone())
            .collect()
    }

    /// SHA-256 over the canonical JSON rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes to toml")
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_toml()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl FromStr for DatasetSchema {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let schema: DatasetSchema =
            toml::from_str(s).map_err(|e| DataError::SchemaParse(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetSchema {
        DatasetSchema::new(vec![
            FeatureSpec::numeric("salary_wife", Unit::Euros).allow_missing(),
            FeatureSpec::categorical("seat", ["a", "b"]).extra_legal(),
        ])
        .unwrap()
    }

    #[test]
    fn toml_round_trip() {
        let schema = sample();
        let text = schema.to_toml();
        assert!(text.contains("schema_version = 1"));
        let back: DatasetSchema = text.parse().unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.fingerprint(), schema.fingerprint());
    }

    #[test]
    fn rejects_bad_schemas() {
        let dup = DatasetSchema::new(vec![
            FeatureSpec::count("x"),
            FeatureSpec::count("x"),
        ]);
        assert!(matches!(dup, Err(DataError::InvalidSchema(_))));

        let levels = DatasetSchema::new(vec![FeatureSpec::categorical("c", ["a", "a"])]);
        assert!(matches!(levels, Err(DataError::InvalidSchema(_))));

        let empty = DatasetSchema::new(vec![FeatureSpec::categorical("c", Vec::<String>::new())]);
        assert!(matches!(empty, Err(DataError::InvalidSchema(_))));

        let no_legal = DatasetSchema::new(vec![FeatureSpec::count("c").extra_legal()]);
        assert!(matches!(no_legal, Err(DataError::InvalidSchema(_))));

        let clash = DatasetSchema::new(vec![FeatureSpec::boolean("granted")]);
        assert!(matches!(clash, Err(DataError::InvalidSchema(_))));
    }

    #[test]
    fn version_is_checked() {
        let text = sample().to_toml().replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            text.parse::<DatasetSchema>(),
            Err(DataError::SchemaVersion { found: 7, .. })
        ));
    }
}
