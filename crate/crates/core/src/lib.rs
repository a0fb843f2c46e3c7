//! Two-part prediction of compensatory allowances in divorce decisions.
//!
//! A random-forest classifier estimates whether an allowance is granted, a
//! linear (least squares or median) regression estimates its amount, and the
//! two are combined as `amount = grant × regression`. Around that model sit
//! the case-data layer, forward stepwise selection, an extra-legal factor
//! audit and the evaluation tables.

pub mod data;
pub mod linalg;
pub mod forest;
pub mod linreg;
pub mod quantreg;
pub mod hurdle;
pub mod eval;
pub mod audit;
pub mod api;
