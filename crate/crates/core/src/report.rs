//! Report payloads and text emitters shared by the CLI.

use serde::Serialize;

use crate::config::Diagnostic;
use crate::fingroup::IdentityCheck;
use crate::spectral::{MourreData, SpectralData};
use crate::threshold::{ExtReal, RhoProfile};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub schema_version: u32,
    pub command: String,
    #[serde(flatten)]
    pub data: SpectralData,
}

impl SpectralReport {
    pub fn new(command: &str, data: SpectralData) -> Self {
        SpectralReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_string(),
            data,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MourreReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub data: MourreData,
}

impl MourreReport {
    pub fn new(data: MourreData) -> Self {
        MourreReport {
            schema_version: REPORT_SCHEMA_VERSION,
            data,
        }
    }
}

/// One measured-but-not-asserted overlap between graded components.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentOverlap {
    pub left: String,
    pub right: String,
    pub rank_left: usize,
    pub rank_right: usize,
    pub rank_union: usize,
    /// dimension of the intersection of the two component spans
    pub overlap: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlgebraReport {
    pub schema_version: u32,
    pub cyclic_orders: Vec<u32>,
    pub rank_rel_tol: f64,
    pub pass: bool,
    pub checks: Vec<IdentityCheck>,
    /// graded components are not linearly independent on finite groups;
    /// their overlaps are reported, never asserted
    pub component_overlaps: Vec<ComponentOverlap>,
}

impl AlgebraReport {
    pub fn new(
        cyclic_orders: Vec<u32>,
        checks: Vec<IdentityCheck>,
        overlaps: Vec<(String, String, crate::fingroup::SpanDiag)>,
    ) -> Self {
        let component_overlaps = overlaps
            .into_iter()
            .map(|(left, right, d)| ComponentOverlap {
                left,
                right,
                rank_left: d.rank_left,
                rank_right: d.rank_right,
                rank_union: d.rank_union,
                overlap: d.rank_left + d.rank_right - d.rank_union,
            })
            .collect();
        AlgebraReport {
            schema_version: REPORT_SCHEMA_VERSION,
            cyclic_orders,
            rank_rel_tol: crate::fingroup::RANK_REL_TOL,
            pass: checks.iter().all(|c| c.pass),
            checks,
            component_overlaps,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

fn ext_cell(v: ExtReal) -> String {
    match v {
        ExtReal::PosInf => "inf".to_string(),
        ExtReal::NegInf => "-inf".to_string(),
        ExtReal::Finite(x) => format!("{x}"),
    }
}

/// CSV with columns `lambda,value` (`inf` for plus infinity).
pub fn rho_profile_csv(p: &RhoProfile) -> String {
    let mut out = String::from("lambda,value\n");
    for (l, v) in p.lambdas.iter().zip(&p.values) {
        out.push_str(&format!("{l},{}\n", ext_cell(*v)));
    }
    out
}

/// Two-column whitespace table, directly plottable.
pub fn rho_profile_gnuplot(p: &RhoProfile) -> String {
    let mut out = String::from("# lambda rho_hat\n");
    for (l, v) in p.lambdas.iter().zip(&p.values) {
        out.push_str(&format!("{l} {}\n", ext_cell(*v)));
    }
    out
}

pub fn eigenvalues_csv(label: &str, evs: &[f64]) -> String {
    let mut out = format!("index,{label}\n");
    for (i, e) in evs.iter().enumerate() {
        out.push_str(&format!("{i},{e}\n"));
    }
    out
}
