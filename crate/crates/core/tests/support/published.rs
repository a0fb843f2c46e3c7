//! A hurdle model whose amount regression carries the published coefficient
//! table verbatim, behind a forest trained on synthetic cases.

#![allow(dead_code)]

use alimony_core::data::{filter_cases, generate_synthetic, Distribution, SeatBias, Subset, SyntheticConfig, SyntheticFeature, Unit};
use alimony_core::hurdle::{train_hurdle, AmountRegressor, HurdleConfig, HurdleModel, Regressor};
use alimony_core::linreg::LinearModel;
use serde::Deserialize;

#[derive(Deserialize)]
pub struct Published {
    pub intercept: f64,
    pub coefficients: Vec<PublishedRow>,
}

#[derive(Deserialize)]
pub struct PublishedRow {
    pub name: String,
    pub unit: Unit,
    pub estimate: f64,
}

pub fn published() -> Published {
    serde_json::from_str(include_str!("../fixtures/published_coefficients.json")).unwrap()
}

/// Synthetic cases over the published regressors plus a neutral seat.
pub fn cases(n_cases: usize, seed: u64) -> SyntheticConfig {
    let features = published()
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let distribution = match row.unit {
                Unit::Months => Distribution::Uniform { low: 0.0, high: 96.0, unit: Unit::Months },
                unit => Distribution::Normal { mean: 500.0, sd: 200.0, unit },
            };
            SyntheticFeature::new(&row.name, distribution).grant(if i % 2 == 0 { 0.004 } else { -0.004 })
        })
        .collect();
    SyntheticConfig {
        features,
        grant_intercept: 0.0,
        seat_bias: Some(SeatBias::neutral(4)),
        monthly_payment_cases: 0,
        ..SyntheticConfig::reference(n_cases, seed)
    }
}

/// The seat is excluded from both submodels.
pub fn published_model() -> HurdleModel {
    let table = published();
    let data = filter_cases(&generate_synthetic(&cases(400, 21)).unwrap(), true, Subset::All).dataset;
    let mut config = HurdleConfig::default();
    config.forest.n_trees = 40;
    config.forest.seed = 21;
    config.excluded_features = data.schema.extra_legal_features();
    let trained = train_hurdle(&data, &config).unwrap();
    let names: Vec<String> = table.coefficients.iter().map(|r| r.name.clone()).collect();
    let linear = LinearModel::new(table.intercept, table.coefficients.iter().map(|r| r.estimate).collect(), names.clone()).unwrap();
    let regressor = AmountRegressor::from_model(&trained.schema, &names, Regressor::Ols(linear)).unwrap();
    trained.with_regressor(regressor)
}
