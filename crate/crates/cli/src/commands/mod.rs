pub mod analyze;
pub mod characterize;
pub mod scenario;
pub mod simulate;
pub mod size;

use fjcap::model::ModelReport;

use crate::table::{num, Table};

/// A station would be driven at or past full utilization.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Saturated(pub String);

pub const REPORT_HEADER: [&str; 10] =
    ["p", "lambda", "s_server_s", "r_server_s", "u_server", "r_broker_s", "h_p", "r_lower_s", "r_upper_s", "r_upper_cached_s"];

pub fn report_row(table: &mut Table, r: &ModelReport<f64>, cached: Option<f64>) {
    table.push([
        r.p.to_string(),
        num(r.lambda),
        num(r.s_server),
        num(r.r_server),
        num(r.u_server),
        num(r.r_broker),
        num(r.h_p),
        num(r.r_lower),
        num(r.r_upper),
        cached.map(num).unwrap_or_default(),
    ]);
}
