use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{kind_label, CaseRecord, Cell, DataError, Dataset, DatasetSchema, FeatureKind, FeatureSpec, Value};

/// Reads `csv_path` against the schema sidecar at `schema_path`.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
    let schema = DatasetSchema::load(schema_path)?;
    let file = File::open(csv_path).map_err(|source| DataError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    read_dataset(file, schema)
}

pub fn save_dataset(dataset: &Dataset, csv_path: &Path) -> Result<(), DataError> {
    let file = File::create(csv_path).map_err(|source| DataError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    write_dataset(file, dataset)
}

enum Slot {
    Feature(usize),
    Grant,
    Amount,
    Monthly,
    Agreed,
}

fn header_slots(
    headers: &csv::StringRecord,
    schema: &DatasetSchema,
    require_outcomes: bool,
) -> Result<Vec<Slot>, DataError> {
    let mut slots = Vec::with_capacity(headers.len());
    let mut seen_features = vec![false; schema.features.len()];
    let mut seen_outcomes = [false; 4];
    for h in headers {
        let slot = if let Some(i) = schema.feature_index(h) {
            seen_features[i] = true;
            Slot::Feature(i)
        } else if let Some(o) = schema.outcome_columns().iter().position(|c| *c == h) {
            seen_outcomes[o] = true;
            [Slot::Grant, Slot::Amount, Slot::Monthly, Slot::Agreed]
                .into_iter()
                .nth(o)
                .expect("four outcome slots")
        } else {
            return Err(DataError::UnknownColumn(h.to_string()));
        };
        slots.push(slot);
    }
    if let Some(i) = seen_features.iter().position(|s| !s) {
        return Err(DataError::MissingColumn(schema.features[i].name.clone()));
    }
    if require_outcomes {
        if let Some(o) = seen_outcomes.iter().position(|s| !s) {
            return Err(DataError::MissingColumn(schema.outcome_columns()[o].to_string()));
        }
    }
    Ok(slots)
}

/// Parses a UTF-8, comma-separated file with a header row. Column order is
/// free; every schema column must be present and nothing else.
pub fn read_dataset<R: Read>(reader: R, schema: DatasetSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let slots = header_slots(rdr.headers()?, &schema, true)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let mut values: Vec<Cell> = vec![None; schema.features.len()];
        let (mut grant, mut amount, mut monthly, mut agreed) = (false, 0.0, false, false);
        for (text, slot) in row.iter().zip(&slots) {
            match *slot {
                Slot::Feature(f) => values[f] = parse_cell(text, &schema.features[f], line)?,
                Slot::Grant => grant = parse_flag(text, &schema.target_grant, line)?,
                Slot::Monthly => monthly = parse_flag(text, &schema.flag_monthly_payment, line)?,
                Slot::Agreed => agreed = parse_flag(text, &schema.flag_parties_agreed, line)?,
                Slot::Amount => amount = parse_amount(text, &schema.target_amount, line)?,
            }
        }
        let record = CaseRecord {
            values,
            grant,
            amount,
            monthly_payment: monthly,
            parties_agreed: agreed,
        };
        record.validate(&schema, line)?;
        records.push(record);
    }
    Ok(Dataset {
        schema,
        records,
        ground_truth: None,
    })
}

/// Reads feature cells only, for prediction inputs. Outcome columns may be
/// present and are ignored.
pub fn read_feature_rows<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Vec<Vec<Cell>>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let slots = header_slots(rdr.headers()?, schema, false)?;
    let mut rows = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let mut values: Vec<Cell> = vec![None; schema.features.len()];
        for (text, slot) in row.iter().zip(&slots) {
            if let Slot::Feature(f) = *slot {
                values[f] = parse_cell(text, &schema.features[f], i + 1)?;
            }
        }
        super::validate_cells(&values, schema, i + 1)?;
        rows.push(values);
    }
    Ok(rows)
}

pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DataError> {
    let schema = &dataset.schema;
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<&str> = schema
        .features
        .iter()
        .map(|f| f.name.as_str())
        .chain(schema.outcome_columns())
        .collect();
    wtr.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for r in &dataset.records {
        fields.clear();
        for (cell, spec) in r.values.iter().zip(&schema.features) {
            fields.push(render_cell(cell, spec));
        }
        fields.push(r.grant.to_string());
        fields.push(r.amount.to_string());
        fields.push(r.monthly_payment.to_string());
        fields.push(r.parties_agreed.to_string());
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|source| DataError::Io {
        path: "<csv writer>".into(),
        source,
    })
}

pub(crate) fn render_cell(cell: &Cell, spec: &FeatureSpec) -> String {
    match (cell, &spec.kind) {
        (None, _) => String::new(),
        (Some(Value::Level(l)), FeatureKind::Categorical { levels }) => levels[*l as usize].clone(),
        (Some(Value::Number(v)), _) => v.to_string(),
        (Some(Value::Count(c)), _) => c.to_string(),
        (Some(Value::Bool(b)), _) => b.to_string(),
        (Some(Value::Level(l)), _) => l.to_string(),
    }
}

fn mismatch(text: &str, column: &str, row: usize, expected: &str) -> DataError {
    DataError::TypeMismatch {
        row,
        column: column.to_string(),
        value: text.to_string(),
        expected: expected.to_string(),
    }
}

pub(crate) fn parse_bool(text: &str) -> Option<bool> {
    match text.trim() {
        "true" | "TRUE" | "True" | "1" => Some(true),
        "false" | "FALSE" | "False" | "0" => Some(false),
        _ => None,
    }
}

/// Parses one feature cell; the empty string is a missing value.
pub(crate) fn parse_cell(text: &str, spec: &FeatureSpec, row: usize) -> Result<Cell, DataError> {
    if text.is_empty() {
        return if spec.allow_missing {
            Ok(None)
        } else {
            Err(DataError::MissingValue {
                row,
                column: spec.name.clone(),
            })
        };
    }
    let bad = || mismatch(text, &spec.name, row, kind_label(&spec.kind));
    let value = match &spec.kind {
        FeatureKind::Numeric { .. } => {
            let v: f64 = text.trim().parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            Value::Number(v)
        }
        FeatureKind::Count => Value::Count(text.trim().parse().map_err(|_| bad())?),
        FeatureKind::Boolean => Value::Bool(parse_bool(text).ok_or_else(bad)?),
        FeatureKind::Categorical { levels } => {
            let l = levels.iter().position(|l| l == text).ok_or_else(bad)?;
            Value::Level(l as u32)
        }
    };
    Ok(Some(value))
}

fn parse_flag(text: &str, column: &str, row: usize) -> Result<bool, DataError> {
    if text.is_empty() {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    parse_bool(text).ok_or_else(|| mismatch(text, column, row, "a boolean"))
}

fn parse_amount(text: &str, column: &str, row: usize) -> Result<f64, DataError> {
    if text.is_empty() {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(mismatch(text, column, row, "a non-negative amount in euros")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Unit};

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            FeatureSpec::numeric("salary", Unit::Euros).allow_missing(),
            FeatureSpec::categorical("seat", ["north", "south"]).extra_legal(),
        ])
        .unwrap()
    }

    const HEADER: &str = "salary,seat,granted,amount,monthly_payment,parties_agreed\n";

    #[test]
    fn reads_three_rows_in_order() {
        let text = format!(
            "{HEADER}1500.5,north,true,12000,false,true\n,south,false,0,false,false\n2000,north,1,300.25,0,1\n"
        );
        let ds = read_dataset(text.as_bytes(), schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[0].values[0], Some(Value::Number(1500.5)));
        assert_eq!(ds.records[1].values[0], None);
        assert_eq!(ds.records[1].values[1], Some(Value::Level(1)));
        assert!(ds.records[2].grant && ds.records[2].parties_agreed);
        assert_eq!(ds.records[2].amount, 300.25);
    }

    #[test]
    fn text_in_euro_column_names_the_cell() {
        let text = format!("{HEADER}1500,north,true,lots,false,true\n");
        match read_dataset(text.as_bytes(), schema()) {
            Err(DataError::TypeMismatch { row, column, value, .. }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "amount", "lots"));
            }
            other => panic!("expected type mismatch, got {other:?}"),
        }
        let text = format!("{HEADER}abc,north,true,10,false,true\n");
        assert!(matches!(
            read_dataset(text.as_bytes(), schema()),
            Err(DataError::TypeMismatch { ref column, .. }) if column == "salary"
        ));
    }

    #[test]
    fn grant_false_with_amount_is_invalid() {
        let text = format!("{HEADER}1500,north,false,500,false,true\n");
        assert!(matches!(
            read_dataset(text.as_bytes(), schema()),
            Err(DataError::AmountWithoutGrant { row: 1, .. })
        ));
    }

    #[test]
    fn header_problems() {
        let text = "salary,seat,granted,amount,monthly_payment,parties_agreed,judge\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), schema()),
            Err(DataError::UnknownColumn(c)) if c == "judge"
        ));
        let text = "salary,granted,amount,monthly_payment,parties_agreed\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), schema()),
            Err(DataError::MissingColumn(c)) if c == "seat"
        ));
        let text = format!("{HEADER}1500,,true,10,false,true\n");
        assert!(matches!(
            read_dataset(text.as_bytes(), schema()),
            Err(DataError::MissingValue { ref column, .. }) if column == "seat"
        ));
    }

    #[test]
    fn feature_rows_ignore_outcomes() {
        let rows = read_feature_rows("seat,salary\nsouth,\n".as_bytes(), &schema()).unwrap();
        assert_eq!(rows, vec![vec![None, Some(Value::Level(1))]]);
    }
}
