//! Eigenanalysis of assembled models: HVZ onsets, threshold sets, rho-hat
//! profiles, Mourre positivity and virial checks.
//!
//! "Essential spectrum" of a finite matrix is meaningless; what is
//! computed instead is the onset `tau` together with its validation
//! hooks: exact tensor-sum identities, grid-refinement trends, and
//! bound-state isolation below `tau`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::euclid::{build_laplacian, Assembled};
use crate::linalg;
use crate::threshold::{
    rho_hat_from_thresholds, rho_hat_recursive, threshold_union, ClosedPointSet, ExtReal,
    RhoProfile, RhoSource,
};

/// Eigendecomposition of a real symmetric matrix: ascending eigenvalues
/// and matching orthonormal eigenvector columns.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    linalg::eig_sym_checked(m)
}

/// HVZ onset: the minimum over atoms of the bottom of the subsystem
/// spectra, `+inf` when the lattice has no atoms (the vacuum model).
#[derive(Clone, Debug, serde::Serialize)]
pub struct HvzData {
    pub tau: f64,
    /// per-atom bottom of `H_{S/X}`
    pub per_atom: BTreeMap<String, f64>,
    /// per-atom bottom of the discrete kinetic block, a pure
    /// discretization artifact that should shrink with the box
    pub kinetic_floor: BTreeMap<String, f64>,
}

pub fn hvz_tau(asm: &Assembled) -> Result<HvzData> {
    let mut per_atom = BTreeMap::new();
    let mut kinetic_floor = BTreeMap::new();
    let mut tau = f64::INFINITY;
    for atom in asm.model.lattice.atoms() {
        let sub = asm.subsystem(&atom.id)?;
        let evs = sub.eigenvalues()?;
        let bottom = evs
            .first()
            .copied()
            .ok_or_else(|| Error::internal("empty subsystem spectrum"))?;
        per_atom.insert(atom.id.clone(), bottom);
        let lap = build_laplacian(asm.model.space(&atom.id)?, asm.grid(), asm.model.scheme);
        let floor = linalg::eigvals_sym(&lap)?.first().copied().unwrap_or(0.0);
        kinetic_floor.insert(atom.id.clone(), floor);
        tau = tau.min(bottom);
    }
    Ok(HvzData {
        tau,
        per_atom,
        kinetic_floor,
    })
}

/// Eigenvalues of the model strictly below its own onset minus `eps`: the
/// isolated bound states. A lattice without atoms has onset `+inf`, so
/// everything counts (this bottoms out the threshold recursion at the
/// vacuum quotient).
pub fn bound_states(asm: &Assembled, eps: f64) -> Result<Vec<f64>> {
    let cut = hvz_tau(asm)?.tau - eps;
    Ok(asm
        .eigenvalues()?
        .into_iter()
        .filter(|&e| e < cut)
        .collect())
}

/// Per-element eigenvalue sets `ev(H_{S/X})` for every `X` strictly above
/// the least element: the inputs of the threshold recursion.
pub fn subsystem_ev_map(asm: &Assembled, eps: f64) -> Result<BTreeMap<String, ClosedPointSet>> {
    Ok(subsystem_ev_map_flagged(asm, eps)?.0)
}

/// Same, plus the per-element count of near-onset eigenvalues that the
/// `eps` separation dropped (inside `[tau - eps, tau)`), so reports can
/// flag an `eps` wider than the spectral gap.
pub fn subsystem_ev_map_flagged(
    asm: &Assembled,
    eps: f64,
) -> Result<(BTreeMap<String, ClosedPointSet>, BTreeMap<String, usize>)> {
    let mut map = BTreeMap::new();
    let mut dropped = BTreeMap::new();
    for x in asm.model.lattice.strictly_positive() {
        let sub = asm.subsystem(&x.id)?;
        let tau = hvz_tau(&sub)?.tau;
        let evs = sub.eigenvalues()?;
        let kept: Vec<f64> = evs.iter().copied().filter(|&e| e < tau - eps).collect();
        let near = evs.iter().filter(|&&e| e >= tau - eps && e < tau).count();
        if near > 0 {
            dropped.insert(x.id.clone(), near);
        }
        map.insert(x.id.clone(), ClosedPointSet::from_unsorted(kept));
    }
    Ok((map, dropped))
}

/// The threshold set as the union of the subsystem bound-state sets.
pub fn threshold_set_numeric(asm: &Assembled, eps: f64) -> Result<ClosedPointSet> {
    let ev = subsystem_ev_map(asm, eps)?;
    threshold_union(&asm.model.lattice, &ev)
}

/// Rho-hat on a lambda grid computed along both routes (direct N-function
/// formula and the structural recursion) with their maximal discrepancy;
/// disagreement beyond 1e-9 indicates a bug and is an internal error.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RhoHatData {
    pub thresholds: ClosedPointSet,
    pub profile: RhoProfile,
    pub max_discrepancy: f64,
}

pub fn rho_hat_numeric(asm: &Assembled, lambdas: &[f64], eps: f64) -> Result<RhoHatData> {
    let ev = subsystem_ev_map(asm, eps)?;
    let tau = threshold_union(&asm.model.lattice, &ev)?;
    let mut values = Vec::with_capacity(lambdas.len());
    let mut worst: f64 = 0.0;
    for &lam in lambdas {
        let direct = rho_hat_from_thresholds(&tau, lam);
        let rec = rho_hat_recursive(&asm.model.lattice, &ev, lam)?;
        let d = match (direct, rec) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
            (a, b) if a == b => 0.0,
            _ => f64::INFINITY,
        };
        worst = worst.max(d);
        if d > 1e-9 {
            return Err(Error::internal(format!(
                "rho-hat routes disagree at lambda = {lam}: direct {direct:?}, recursive {rec:?}"
            )));
        }
        values.push(direct);
    }
    Ok(RhoHatData {
        thresholds: tau,
        profile: RhoProfile::new(lambdas.to_vec(), values, RhoSource::Direct),
        max_discrepancy: worst,
    })
}

/// Default lambda grid bracketing the threshold set.
pub fn default_lambda_grid(tau: &ClosedPointSet, points: usize) -> Vec<f64> {
    let (lo, hi) = match (tau.points().first(), tau.points().last()) {
        (Some(&a), Some(&b)) => (a - 1.0, b + 1.0),
        _ => (-1.0, 1.0),
    };
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Outcome of one Mourre positivity check.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MourreData {
    pub lambda: f64,
    pub delta: f64,
    pub subspace_dim: usize,
    /// compressed commutator bottom with the kinetic part taken through
    /// its analytic commutator identity
    pub min_compressed: Option<f64>,
    /// same compression of the raw matrix commutator; its diagonal
    /// vanishes on exact eigenvectors (virial), so it is reported for
    /// diagnosis, not positivity
    pub min_compressed_exact: Option<f64>,
    pub rho_hat_at_lambda: ExtReal,
    pub margin: f64,
    pub boundary_mass: f64,
    pub window_empty: bool,
    pub straddles_threshold: bool,
    /// min_compressed >= rho_hat - margin, when both are meaningful
    pub passes: Option<bool>,
}

/// Flags rows of the total space whose grid point touches the outermost
/// two cells of any axis.
fn boundary_mask(asm: &Assembled) -> Result<Vec<bool>> {
    let n = asm.grid().n;
    let off = asm.offsets();
    let mut mask = vec![false; asm.model.total_dim()];
    for e in asm.model.lattice.elements() {
        let k = asm.model.space(&e.id)?.dim();
        let dim = asm.model.space_dim(&e.id)?;
        for idx in 0..dim {
            let mut rest = idx;
            let mut touches = false;
            for _ in 0..k {
                let d = rest % n;
                rest /= n;
                if d <= 1 || d + 2 >= n {
                    touches = true;
                }
            }
            mask[off[&e.id] + idx] = touches;
        }
    }
    Ok(mask)
}

/// The commutator `[H, iD]` with the kinetic part replaced by its analytic
/// value (the kinetic block itself) and the interaction part commutated
/// exactly. On exact eigenvectors the raw matrix commutator vanishes by
/// the virial identity, so positivity lives in this split.
fn mourre_commutator(asm: &Assembled) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = asm.dense()?;
    let w = asm.w_dense()?;
    let kin = asm.kinetic_dense()?;
    let inter = &h - &kin;
    let analytic = &kin + (&inter * &w - &w * &inter);
    let exact = &h * &w - &w * &h;
    Ok((analytic, exact))
}

pub fn mourre_check(asm: &Assembled, lambda: f64, delta: f64, eps: f64) -> Result<MourreData> {
    let h = asm.dense()?;
    let (vals, vecs) = eig_sym(&h)?;
    let selected: Vec<usize> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - lambda).abs() <= delta)
        .map(|(i, _)| i)
        .collect();

    let tau = threshold_set_numeric(asm, eps)?;
    let rho = rho_hat_from_thresholds(&tau, lambda);
    let straddles = tau
        .points()
        .iter()
        .any(|&t| t >= lambda - delta && t <= lambda + delta);

    if selected.is_empty() {
        return Ok(MourreData {
            lambda,
            delta,
            subspace_dim: 0,
            min_compressed: None,
            min_compressed_exact: None,
            rho_hat_at_lambda: rho,
            margin: 0.0,
            boundary_mass: 0.0,
            window_empty: true,
            straddles_threshold: straddles,
            passes: None,
        });
    }

    let total = h.nrows();
    let mut v = DMatrix::zeros(total, selected.len());
    for (col, &i) in selected.iter().enumerate() {
        v.set_column(col, &vecs.column(i));
    }
    let (analytic, exact) = mourre_commutator(asm)?;
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) / 2.0;
    let c_analytic = sym(v.transpose() * &analytic * &v);
    let c_exact = sym(v.transpose() * &exact * &v);
    let min_analytic = linalg::eigvals_sym(&c_analytic)?[0];
    let min_exact = linalg::eigvals_sym(&c_exact)?[0];

    let mask = boundary_mask(asm)?;
    let mut bmass: f64 = 0.0;
    for col in 0..v.ncols() {
        let column = v.column(col);
        let m: f64 = column
            .iter()
            .zip(&mask)
            .filter(|(_, &b)| b)
            .map(|(x, _)| x * x)
            .sum();
        bmass = bmass.max(m);
    }
    let scale = vals.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let margin = match rho {
        ExtReal::Finite(r) => 0.25 * r.abs() + bmass * scale,
        _ => bmass * scale,
    };
    let passes = match rho {
        ExtReal::Finite(r) => Some(min_analytic >= r - margin),
        ExtReal::PosInf => Some(true),
        ExtReal::NegInf => None,
    };
    Ok(MourreData {
        lambda,
        delta,
        subspace_dim: selected.len(),
        min_compressed: Some(min_analytic),
        min_compressed_exact: Some(min_exact),
        rho_hat_at_lambda: rho,
        margin,
        boundary_mass: bmass,
        window_empty: false,
        straddles_threshold: straddles,
        passes,
    })
}

/// Virial residual of one bound state.
#[derive(Clone, Debug, serde::Serialize)]
pub struct VirialEntry {
    pub eigenvalue: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub boundary_mass: f64,
    pub skipped: bool,
}

/// For every eigenvector of `H` below the onset, the exact-commutator
/// expectation, which is zero up to eigensolver rounding. Boundary-heavy
/// states (mass above the cutoff) are listed as skipped.
pub fn virial_check(asm: &Assembled, eps: f64, boundary_cutoff: f64) -> Result<Vec<VirialEntry>> {
    let h = asm.dense()?;
    let w = asm.w_dense()?;
    let comm = &h * &w - &w * &h;
    let scale = h.norm() * w.norm();
    let (vals, vecs) = eig_sym(&h)?;
    let tau = hvz_tau(asm)?.tau;
    let mask = boundary_mask(asm)?;
    let mut out = Vec::new();
    for (i, &lam) in vals.iter().enumerate() {
        if lam >= tau - eps {
            continue;
        }
        let psi = vecs.column(i);
        let bmass: f64 = psi
            .iter()
            .zip(&mask)
            .filter(|(_, &b)| b)
            .map(|(x, _)| x * x)
            .sum();
        let r = (psi.transpose() * &comm * psi)[(0, 0)].abs();
        out.push(VirialEntry {
            eigenvalue: lam,
            residual_abs: r,
            residual_rel: if scale > 0.0 { r / scale } else { r },
            boundary_mass: bmass,
            skipped: bmass > boundary_cutoff,
        });
    }
    Ok(out)
}

/// Grid-refinement gate: drift of the lowest three eigenvalues when the
/// grid intervals double; eps defaults to ten times the absolute drift.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GateData {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub max_abs_drift: f64,
    pub max_rel_drift: f64,
}

pub fn refinement_gate(asm: &Assembled) -> Result<GateData> {
    let coarse_all = asm.eigenvalues()?;
    let fine_model = crate::euclid::assemble(asm.model.refined())?;
    let fine_all = fine_model.eigenvalues()?;
    let k = 3.min(coarse_all.len()).min(fine_all.len());
    let coarse: Vec<f64> = coarse_all.into_iter().take(k).collect();
    let fine: Vec<f64> = fine_all.into_iter().take(k).collect();
    let mut abs: f64 = 0.0;
    let mut rel: f64 = 0.0;
    for (a, b) in coarse.iter().zip(&fine) {
        let d = (a - b).abs();
        abs = abs.max(d);
        rel = rel.max(d / b.abs().max(1e-12));
    }
    Ok(GateData {
        coarse,
        fine,
        max_abs_drift: abs,
        max_rel_drift: rel,
    })
}

pub fn default_eps(gate: &GateData) -> f64 {
    (10.0 * gate.max_abs_drift).max(1e-12)
}

/// Everything the `spectrum`/`hvz`/`thresholds` commands report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SpectralData {
    pub gate: GateData,
    pub eps: f64,
    pub hvz: HvzData,
    pub thresholds: ClosedPointSet,
    pub subsystem_eigenvalues: BTreeMap<String, ClosedPointSet>,
    /// per-element count of near-onset states that the eps separation
    /// excluded; nonempty means eps is wider than some spectral gap
    pub near_threshold_dropped: BTreeMap<String, usize>,
    pub bound_states: Vec<f64>,
    pub bound_state_count: usize,
    pub rho: RhoHatData,
    pub relative_bound: Option<f64>,
}

pub fn compute_spectral(asm: &Assembled, eps_override: Option<f64>) -> Result<SpectralData> {
    let gate = refinement_gate(asm)?;
    let eps = eps_override.unwrap_or_else(|| default_eps(&gate));
    let hvz = hvz_tau(asm)?;
    let (ev, near_threshold_dropped) = subsystem_ev_map_flagged(asm, eps)?;
    let thresholds = threshold_union(&asm.model.lattice, &ev)?;
    let lambdas = default_lambda_grid(&thresholds, 1001);
    let rho = rho_hat_numeric(asm, &lambdas, eps)?;
    let bound = bound_states(asm, eps)?;
    let relative_bound = asm.relative_bound_diagnostic(1.0).ok();
    Ok(SpectralData {
        gate,
        eps,
        hvz,
        thresholds,
        subsystem_eigenvalues: ev,
        near_threshold_dropped,
        bound_state_count: bound.len(),
        bound_states: bound,
        rho,
        relative_bound,
    })
}
