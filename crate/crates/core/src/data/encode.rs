use serde::{Deserialize, Serialize};

use super::{Cell, DataError, Dataset, DatasetSchema, FeatureKind, Value};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Layout {
    /// Numeric, count or boolean: one pass-through column.
    Scalar { impute: f64 },
    /// `skip_first` drops the reference level so the group is not collinear
    /// with an intercept.
    OneHot {
        levels: usize,
        #[serde(default)]
        skip_first: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EncodedFeature {
    schema_index: usize,
    name: String,
    layout: Layout,
    missing_indicator: bool,
}

/// Column layout and imputation values learned from a training set.
///
/// Columns follow schema order whatever order the subset was given in.
/// Categoricals expand to one column per level (`name=level`). Features that
/// allow missing values get a trailing `name:missing` indicator; a missing
/// scalar is replaced by the training median, a missing categorical leaves
/// its one-hot group at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    features: Vec<EncodedFeature>,
    column_names: Vec<String>,
    column_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub column_names: Vec<String>,
    /// Parent feature of each column.
    pub column_features: Vec<String>,
    pub rows: Matrix,
    /// Position of each row's source record in the input dataset.
    pub row_index: Vec<usize>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl Encoder {
    pub fn fit(dataset: &Dataset, feature_subset: &[String]) -> Result<Self, DataError> {
        Self::fit_rows(
            &dataset.schema,
            dataset.records.iter().map(|r| r.values.as_slice()),
            feature_subset,
        )
    }

    /// As [`Encoder::fit`], dropping the first level of every categorical.
    pub fn fit_reference_coded(dataset: &Dataset, feature_subset: &[String]) -> Result<Self, DataError> {
        Self::fit_rows_coded(
            &dataset.schema,
            dataset.records.iter().map(|r| r.values.as_slice()),
            feature_subset,
            true,
        )
    }

    pub fn fit_rows<'a>(
        schema: &DatasetSchema,
        rows: impl Iterator<Item = &'a [Cell]> + Clone,
        feature_subset: &[String],
    ) -> Result<Self, DataError> {
        Self::fit_rows_coded(schema, rows, feature_subset, false)
    }

    pub fn fit_rows_coded<'a>(
        schema: &DatasetSchema,
        rows: impl Iterator<Item = &'a [Cell]> + Clone,
        feature_subset: &[String],
        reference_coding: bool,
    ) -> Result<Self, DataError> {
        if feature_subset.is_empty() {
            return Err(DataError::EmptyFeatureSubset);
        }
        if let Some(unknown) = feature_subset.iter().find(|n| schema.feature_index(n).is_none()) {
            return Err(DataError::UnknownFeature(unknown.clone()));
        }
        let mut features = Vec::new();
        let mut column_names = Vec::new();
        let mut column_features = Vec::new();
        for (idx, spec) in schema.features.iter().enumerate() {
            if !feature_subset.contains(&spec.name) {
                continue;
            }
            let layout = match &spec.kind {
                FeatureKind::Categorical { levels } => {
                    for l in levels.iter().skip(usize::from(reference_coding)) {
                        column_names.push(format!("{}={l}", spec.name));
                        column_features.push(spec.name.clone());
                    }
                    Layout::OneHot {
                        levels: levels.len(),
                        skip_first: reference_coding,
                    }
                }
                _ => {
                    let mut present: Vec<f64> = rows
                        .clone()
                        .filter_map(|r| r[idx].map(|v| v.as_f64()))
                        .collect();
                    column_names.push(spec.name.clone());
                    column_features.push(spec.name.clone());
                    Layout::Scalar {
                        impute: median(&mut present).unwrap_or(0.0),
                    }
                }
            };
            if spec.allow_missing {
                column_names.push(format!("{}:missing", spec.name));
                column_features.push(spec.name.clone());
            }
            features.push(EncodedFeature {
                schema_index: idx,
                name: spec.name.clone(),
                layout,
                missing_indicator: spec.allow_missing,
            });
        }
        Ok(Self {
            features,
            column_names,
            column_features,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_features(&self) -> &[String] {
        &self.column_features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn ncols(&self) -> usize {
        self.column_names.len()
    }

    /// Encodes one row of schema-ordered cells, appending to `out`.
    pub fn encode_into(&self, values: &[Cell], out: &mut Vec<f64>) {
        for f in &self.features {
            let cell = values[f.schema_index];
            match f.layout {
                Layout::Scalar { impute } => out.push(cell.map_or(impute, |v| v.as_f64())),
                Layout::OneHot { levels, skip_first } => {
                    let hot = match cell {
                        Some(Value::Level(l)) => Some(l as usize),
                        _ => None,
                    };
                    out.extend((usize::from(skip_first)..levels).map(|l| if hot == Some(l) { 1.0 } else { 0.0 }));
                }
            }
            if f.missing_indicator {
                out.push(if cell.is_none() { 1.0 } else { 0.0 });
            }
        }
    }

    pub fn encode_row(&self, values: &[Cell]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ncols());
        self.encode_into(values, &mut out);
        out
    }

    pub fn transform(&self, dataset: &Dataset) -> EncodedMatrix {
        let mut data = Vec::with_capacity(dataset.len() * self.ncols());
        for r in &dataset.records {
            self.encode_into(&r.values, &mut data);
        }
        EncodedMatrix {
            column_names: self.column_names.clone(),
            column_features: self.column_features.clone(),
            rows: Matrix::from_vec(dataset.len(), self.ncols(), data),
            row_index: (0..dataset.len()).collect(),
        }
    }
}

/// Fits an encoder on `dataset` and applies it to the same records.
pub fn encode(dataset: &Dataset, feature_subset: &[String]) -> Result<EncodedMatrix, DataError> {
    Ok(Encoder::fit(dataset, feature_subset)?.transform(dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CaseRecord, FeatureSpec, Unit};

    fn dataset(cells: Vec<Vec<Cell>>) -> Dataset {
        let schema = DatasetSchema::new(vec![
            FeatureSpec::numeric("income", Unit::Euros).allow_missing(),
            FeatureSpec::categorical("seat", ["a", "b", "c"]),
            FeatureSpec::boolean("employed"),
        ])
        .unwrap();
        let records = cells
            .into_iter()
            .map(|values| CaseRecord {
                values,
                grant: false,
                amount: 0.0,
                monthly_payment: false,
                parties_agreed: false,
            })
            .collect();
        Dataset::new(schema, records).unwrap()
    }

    fn rows() -> Vec<Vec<Cell>> {
        vec![
            vec![Some(Value::Number(1.0)), Some(Value::Level(0)), Some(Value::Bool(true))],
            vec![None, Some(Value::Level(2)), Some(Value::Bool(false))],
            vec![Some(Value::Number(3.0)), Some(Value::Level(1)), Some(Value::Bool(true))],
        ]
    }

    #[test]
    fn one_hot_groups_sum_to_one() {
        let ds = dataset(rows());
        let m = encode(&ds, &["seat".into()]).unwrap();
        assert_eq!(m.column_names, ["seat=a", "seat=b", "seat=c"]);
        for r in m.rows.rows() {
            assert_eq!(r.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn reference_coding_drops_first_level() {
        let ds = dataset(rows());
        let enc = Encoder::fit_reference_coded(&ds, &["seat".into()]).unwrap();
        assert_eq!(enc.column_names(), ["seat=b", "seat=c"]);
        let m = enc.transform(&ds);
        assert_eq!(m.rows.row(0), [0.0, 0.0]);
        assert_eq!(m.rows.row(1), [0.0, 1.0]);
        assert_eq!(m.rows.row(2), [1.0, 0.0]);
    }

    #[test]
    fn median_imputation_with_indicator() {
        let ds = dataset(rows());
        let m = encode(&ds, &["income".into()]).unwrap();
        assert_eq!(m.column_names, ["income", "income:missing"]);
        assert_eq!(m.rows.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.rows.column(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn boolean_is_single_column() {
        let ds = dataset(rows());
        let m = encode(&ds, &["employed".into()]).unwrap();
        assert_eq!(m.column_names, ["employed"]);
        assert_eq!(m.rows.column(0), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn column_order_follows_schema_and_ignores_record_order() {
        let ds = dataset(rows());
        let subset = vec!["employed".to_string(), "income".to_string()];
        let a = encode(&ds, &subset).unwrap();
        let mut reversed = rows();
        reversed.reverse();
        let b = encode(&dataset(reversed), &subset).unwrap();
        assert_eq!(a.column_names, b.column_names);
        assert_eq!(a.column_names, ["income", "income:missing", "employed"]);
        assert_eq!(
            Encoder::fit(&ds, &subset).unwrap(),
            Encoder::fit(&dataset({
                let mut r = rows();
                r.rotate_left(1);
                r
            }), &subset)
            .unwrap()
        );
    }

    #[test]
    fn empty_subset_is_an_error() {
        assert!(matches!(encode(&dataset(rows()), &[]), Err(DataError::EmptyFeatureSubset)));
        assert!(matches!(
            encode(&dataset(rows()), &["nope".into()]),
            Err(DataError::UnknownFeature(_))
        ));
    }
}
