//! Synthetic decisions with a known generating process.
//!
//! Grant is Bernoulli with probability `logistic(grant_intercept + Σ wᵢ·xᵢ +
//! seat grant shift)`. For granted cases the amount is `amount_intercept +
//! Σ aᵢ·xᵢ + seat amount shift + N(0, noise_sd)`, clipped at zero; refused
//! cases get zero. Everything is drawn from one seeded ChaCha stream.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use super::{CaseRecord, Cell, DataError, Dataset, DatasetSchema, FeatureSpec, Role, Unit, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum Distribution {
    Normal { mean: f64, sd: f64, unit: Unit },
    Uniform { low: f64, high: f64, unit: Unit },
    Poisson { mean: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFeature {
    pub name: String,
    #[serde(flatten)]
    pub distribution: Distribution,
    #[serde(default = "legal")]
    pub role: Role,
    #[serde(default)]
    pub grant_coefficient: f64,
    #[serde(default)]
    pub amount_coefficient: f64,
    /// Probability that the recorded cell is blanked. The generating process
    /// still uses the drawn value.
    #[serde(default)]
    pub missing_rate: f64,
}

fn legal() -> Role {
    Role::Legal
}

impl SyntheticFeature {
    pub fn new(name: impl Into<String>, distribution: Distribution) -> Self {
        Self {
            name: name.into(),
            distribution,
            role: Role::Legal,
            grant_coefficient: 0.0,
            amount_coefficient: 0.0,
            missing_rate: 0.0,
        }
    }

    pub fn grant(mut self, coefficient: f64) -> Self {
        self.grant_coefficient = coefficient;
        self
    }

    pub fn amount(mut self, coefficient: f64) -> Self {
        self.amount_coefficient = coefficient;
        self
    }

    pub fn missing(mut self, rate: f64) -> Self {
        self.missing_rate = rate;
        self
    }

    fn spec(&self) -> FeatureSpec {
        let spec = match self.distribution {
            Distribution::Normal { unit, .. } | Distribution::Uniform { unit, .. } => {
                FeatureSpec::numeric(&self.name, unit)
            }
            Distribution::Poisson { .. } => FeatureSpec::count(&self.name),
            Distribution::Bernoulli { .. } => FeatureSpec::boolean(&self.name),
        };
        let spec = if self.missing_rate > 0.0 { spec.allow_missing() } else { spec };
        match self.role {
            Role::Legal => spec,
            Role::ExtraLegal => spec.extra_legal(),
        }
    }
}

/// Court-seat effect: an extra-legal categorical appended after the other
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatBias {
    #[serde(default = "default_seat_name")]
    pub name: String,
    pub n_seats: usize,
    /// Added to the grant logit, one entry per seat.
    pub grant_shift: Vec<f64>,
    /// Added to the amount in euros, one entry per seat.
    pub amount_shift: Vec<f64>,
    /// When set, seats are assigned by rank of this feature (equal-size
    /// bins), making the seat redundant with it. Otherwise seats are uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follows: Option<String>,
}

fn default_seat_name() -> String {
    "seat_of_court".into()
}

impl SeatBias {
    /// A seat variable with no effect on either outcome.
    pub fn neutral(n_seats: usize) -> Self {
        Self {
            name: default_seat_name(),
            n_seats,
            grant_shift: vec![0.0; n_seats],
            amount_shift: vec![0.0; n_seats],
            follows: None,
        }
    }

    pub fn level_name(i: usize) -> String {
        format!("seat_{:02}", i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub features: Vec<SyntheticFeature>,
    #[serde(default)]
    pub grant_intercept: f64,
    #[serde(default)]
    pub amount_intercept: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seat_bias: Option<SeatBias>,
    /// Exact number of decisions flagged as monthly payments.
    #[serde(default)]
    pub monthly_payment_cases: usize,
    /// Probability that a case is flagged as agreed between the parties.
    #[serde(default)]
    pub agreed_fraction: f64,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SyntheticConfig {
    /// Eleven legal variables mirroring the kinds of information codified in
    /// divorce decisions (activity, salaries, family, requests and offers)
    /// plus a six-level court seat without any effect.
    pub fn reference(n_cases: usize, seed: u64) -> Self {
        let euros = |mean, sd| Distribution::Normal { mean, sd, unit: Unit::Euros };
        let features = vec![
            SyntheticFeature::new("wife_employed", Distribution::Bernoulli { p: 0.6 }).grant(-1.5),
            SyntheticFeature::new("husband_employed", Distribution::Bernoulli { p: 0.85 }).grant(0.8),
            SyntheticFeature::new("salary_husband", euros(3000.0, 1200.0)).grant(0.0015),
            SyntheticFeature::new("salary_wife", euros(1500.0, 700.0))
                .grant(-0.002)
                .amount(-7.86),
            SyntheticFeature::new(
                "marriage_years",
                Distribution::Uniform { low: 1.0, high: 40.0, unit: Unit::Years },
            )
            .grant(0.1),
            SyntheticFeature::new("children", Distribution::Poisson { mean: 1.6 }).grant(0.3),
            SyntheticFeature::new("capital_requested", euros(40000.0, 15000.0)).amount(0.35),
            SyntheticFeature::new("capital_offered", euros(20000.0, 8000.0)).amount(0.45),
            SyntheticFeature::new("pension_requested", euros(400.0, 150.0)).amount(20.0),
            SyntheticFeature::new("temporary_pension_offered", euros(300.0, 120.0)).amount(15.0),
            SyntheticFeature::new("other_income_wife", euros(200.0, 150.0)).missing(0.1),
        ];
        Self {
            n_cases,
            seed,
            features,
            grant_intercept: -3.3,
            amount_intercept: 3000.0,
            noise_sd: 3000.0,
            seat_bias: Some(SeatBias::neutral(6)),
            monthly_payment_cases: n_cases / 20,
            agreed_fraction: 0.55,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSynthetic(m));
        if self.n_cases == 0 {
            return bad("n_cases must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and non-negative, got {}", self.noise_sd));
        }
        if self.monthly_payment_cases > self.n_cases {
            return bad("more monthly-payment cases than cases".into());
        }
        if !(0.0..=1.0).contains(&self.agreed_fraction) {
            return bad("agreed_fraction must lie in [0, 1]".into());
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate feature `{}`", f.name));
            }
            if !(0.0..1.0).contains(&f.missing_rate) {
                return bad(format!("missing_rate of `{}` must lie in [0, 1)", f.name));
            }
            let ok = match f.distribution {
                Distribution::Normal { sd, .. } => sd >= 0.0 && sd.is_finite(),
                Distribution::Uniform { low, high, .. } => low < high,
                Distribution::Poisson { mean } => mean > 0.0 && mean.is_finite(),
                Distribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return bad(format!("invalid distribution parameters for `{}`", f.name));
            }
        }
        if let Some(seat) = &self.seat_bias {
            if seat.n_seats == 0 {
                return bad("seat_bias needs at least one seat".into());
            }
            if seat.grant_shift.len() != seat.n_seats || seat.amount_shift.len() != seat.n_seats {
                return bad("seat shifts need one entry per seat".into());
            }
            if names.contains(seat.name.as_str()) {
                return bad(format!("seat name `{}` clashes with a feature", seat.name));
            }
            if let Some(f) = &seat.follows {
                if !names.contains(f.as_str()) {
                    return bad(format!("seat follows unknown feature `{f}`"));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<DatasetSchema, DataError> {
        let mut specs: Vec<FeatureSpec> = self.features.iter().map(SyntheticFeature::spec).collect();
        if let Some(seat) = &self.seat_bias {
            specs.push(
                FeatureSpec::categorical(&seat.name, (0..seat.n_seats).map(SeatBias::level_name)).extra_legal(),
            );
        }
        DatasetSchema::new(specs)
    }

    fn linear_parts(&self, values: &[f64], seat: Option<usize>) -> (f64, f64) {
        let mut grant = self.grant_intercept;
        let mut amount = self.amount_intercept;
        for (f, x) in self.features.iter().zip(values) {
            grant += f.grant_coefficient * x;
            amount += f.amount_coefficient * x;
        }
        if let (Some(bias), Some(s)) = (&self.seat_bias, seat) {
            grant += bias.grant_shift[s];
            amount += bias.amount_shift[s];
        }
        (grant, amount)
    }

    fn unpack(&self, cells: &[Cell]) -> (Vec<f64>, Option<usize>) {
        let values = cells[..self.features.len()]
            .iter()
            .map(|c| c.map_or(f64::NAN, |v| v.as_f64()))
            .collect();
        let seat = self.seat_bias.as_ref().and_then(|_| match cells.get(self.features.len()) {
            Some(Some(Value::Level(l))) => Some(*l as usize),
            _ => None,
        });
        (values, seat)
    }

    /// True grant probability of a generated record. NaN when a cell the
    /// process depends on was blanked.
    pub fn grant_probability(&self, cells: &[Cell]) -> f64 {
        let (values, seat) = self.unpack(cells);
        logistic(self.linear_parts(&values, seat).0)
    }

    /// Noise-free amount for a granted record, before clipping.
    pub fn expected_amount(&self, cells: &[Cell]) -> f64 {
        let (values, seat) = self.unpack(cells);
        self.linear_parts(&values, seat).1
    }
}

fn draw(distribution: &Distribution, rng: &mut ChaCha8Rng) -> Value {
    match *distribution {
        Distribution::Normal { mean, sd, .. } => {
            Value::Number(rng.sample(Normal::new(mean, sd).expect("validated sd")))
        }
        Distribution::Uniform { low, high, .. } => {
            Value::Number(rng.sample(Uniform::new(low, high).expect("validated bounds")))
        }
        Distribution::Poisson { mean } => {
            Value::Count(rng.sample(Poisson::new(mean).expect("validated mean")) as u64)
        }
        Distribution::Bernoulli { p } => Value::Bool(rng.sample(Bernoulli::new(p).expect("validated p"))),
    }
}

/// Generates `config.n_cases` records; fully determined by the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let schema = config.schema()?;
    let n = config.n_cases;
    let p = config.features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut drawn: Vec<Vec<Value>> = Vec::with_capacity(n);
    let mut blank: Vec<Vec<bool>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(p);
        let mut miss = Vec::with_capacity(p);
        for f in &config.features {
            row.push(draw(&f.distribution, &mut rng));
            let u: f64 = rng.random();
            miss.push(u < f.missing_rate);
        }
        drawn.push(row);
        blank.push(miss);
    }

    let seats: Option<Vec<usize>> = config.seat_bias.as_ref().map(|bias| match &bias.follows {
        None => (0..n).map(|_| rng.random_range(0..bias.n_seats)).collect(),
        Some(name) => {
            let f = config.features.iter().position(|x| &x.name == name).expect("validated");
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| drawn[a][f].as_f64().total_cmp(&drawn[b][f].as_f64()).then(a.cmp(&b)));
            let mut seat = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                seat[i] = rank * bias.n_seats / n;
            }
            seat
        }
    });

    let noise = Normal::new(0.0, config.noise_sd).expect("validated noise_sd");
    let agreed = Bernoulli::new(config.agreed_fraction).expect("validated fraction");
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = drawn[i].iter().map(Value::as_f64).collect();
        let seat = seats.as_ref().map(|s| s[i]);
        let (logit, linear) = config.linear_parts(&x, seat);
        let u: f64 = rng.random();
        let grant = u < logistic(logit);
        let e = rng.sample(noise);
        let amount = if grant { (linear + e).max(0.0) } else { 0.0 };
        let mut values: Vec<Cell> = drawn[i]
            .iter()
            .zip(&blank[i])
            .map(|(v, &b)| if b { None } else { Some(*v) })
            .collect();
        if let Some(s) = seat {
            values.push(Some(Value::Level(s as u32)));
        }
        records.push(CaseRecord {
            values,
            grant,
            amount,
            monthly_payment: false,
            parties_agreed: rng.sample(agreed),
        });
    }
    for i in rand::seq::index::sample(&mut rng, n, config.monthly_payment_cases) {
        records[i].monthly_payment = true;
    }

    let mut dataset = Dataset::new(schema, records)?;
    dataset.ground_truth = Some(config.clone());
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{filter_cases, write_dataset, Subset};

    fn linear_config(seed: u64) -> SyntheticConfig {
        let euros = |mean, sd| Distribution::Normal { mean, sd, unit: Unit::Euros };
        SyntheticConfig {
            n_cases: 300,
            seed,
            features: vec![
                SyntheticFeature::new("a", euros(1000.0, 100.0)).grant(0.01).amount(3.0),
                SyntheticFeature::new("b", euros(500.0, 50.0)).amount(-2.0),
            ],
            grant_intercept: -10.0,
            amount_intercept: 5000.0,
            noise_sd: 0.0,
            seat_bias: None,
            monthly_payment_cases: 0,
            agreed_fraction: 0.5,
        }
    }

    #[test]
    fn noiseless_amounts_are_linear() {
        let cfg = linear_config(11);
        let ds = generate_synthetic(&cfg).unwrap();
        let mut granted = 0;
        for r in &ds.records {
            if r.grant {
                granted += 1;
                let a = r.values[0].unwrap().as_f64();
                let b = r.values[1].unwrap().as_f64();
                assert_eq!(r.amount, 5000.0 + 3.0 * a + -2.0 * b);
            } else {
                assert_eq!(r.amount, 0.0);
            }
        }
        assert!(granted > 50 && granted < 250);
        assert_eq!(ds.ground_truth.as_ref(), Some(&cfg));
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let bytes = |cfg: &SyntheticConfig| {
            let mut out = Vec::new();
            write_dataset(&mut out, &generate_synthetic(cfg).unwrap()).unwrap();
            out
        };
        let cfg = SyntheticConfig::reference(500, 42);
        assert_eq!(bytes(&cfg), bytes(&cfg));
        assert_ne!(bytes(&cfg), bytes(&SyntheticConfig::reference(500, 43)));
    }

    #[test]
    fn monthly_counts_are_exact() {
        let mut cfg = SyntheticConfig::reference(5453, 1);
        cfg.monthly_payment_cases = 280;
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.records.iter().filter(|r| r.monthly_payment).count(), 280);
        assert_eq!(filter_cases(&ds, true, Subset::All).dataset.len(), 5173);
    }

    #[test]
    fn seat_can_follow_a_feature() {
        let mut cfg = linear_config(3);
        cfg.seat_bias = Some(SeatBias {
            follows: Some("a".into()),
            ..SeatBias::neutral(3)
        });
        let ds = generate_synthetic(&cfg).unwrap();
        let mut pairs: Vec<(f64, u32)> = ds
            .records
            .iter()
            .map(|r| match (r.values[0], r.values[2]) {
                (Some(a), Some(Value::Level(s))) => (a.as_f64(), s),
                _ => unreachable!(),
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = linear_config(1);
        cfg.noise_sd = -1.0;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = linear_config(1);
        cfg.n_cases = 0;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = linear_config(1);
        cfg.seat_bias = Some(SeatBias {
            grant_shift: vec![1.0],
            ..SeatBias::neutral(2)
        });
        assert!(generate_synthetic(&cfg).is_err());
    }
}
