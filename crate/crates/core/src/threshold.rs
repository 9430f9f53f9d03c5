//! The scalar threshold calculus: N-functions over finite closed point
//! sets, the extended-real rho functions, and the recursion that rebuilds
//! the best Mourre constant from subsystem eigenvalue sets.
//!
//! Everything here is finite: threshold sets are finite approximants of the
//! countable closed sets of the general theory, which is exact for the
//! models this crate builds (finitely many bound states of finite
//! matrices).

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::semilattice::Semilattice;

/// Absolute tolerance under which two threshold points are identified.
pub const POINT_DEDUP_TOL: f64 = 1e-12;

/// The extended real line with `-inf < r < +inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    fn rank(self) -> i8 {
        match self {
            ExtReal::NegInf => -1,
            ExtReal::Finite(_) => 0,
            ExtReal::PosInf => 1,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self.cmp_ext(other) == std::cmp::Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self.cmp_ext(other) == std::cmp::Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn cmp_ext(self, other: ExtReal) -> std::cmp::Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(&b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    /// `lambda - self` with saturating conventions: `lambda - (-inf) = +inf`
    /// and `lambda - (+inf) = -inf`.
    pub fn sub_from(self, lambda: f64) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::PosInf => ExtReal::NegInf,
            ExtReal::Finite(x) => ExtReal::Finite(lambda - x),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::PosInf => s.serialize_str("inf"),
            ExtReal::Finite(x) => s.serialize_f64(*x),
        }
    }
}

/// A finite sorted real set, the desk-scale stand-in for a closed real set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClosedPointSet {
    points: Vec<f64>,
}

impl ClosedPointSet {
    pub fn empty() -> Self {
        ClosedPointSet { points: Vec::new() }
    }

    /// Sorts and deduplicates (within [`POINT_DEDUP_TOL`]). NaNs are
    /// rejected because the set's order would be meaningless.
    pub fn from_unsorted(mut points: Vec<f64>) -> Self {
        assert!(points.iter().all(|x| !x.is_nan()), "NaN threshold point");
        points.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(points.len());
        for p in points {
            match out.last() {
                Some(&last) if (p - last).abs() <= POINT_DEDUP_TOL => {}
                _ => out.push(p),
            }
        }
        ClosedPointSet { points: out }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.points.first().copied()
    }

    /// Exact float membership.
    pub fn contains(&self, x: f64) -> bool {
        self.points.binary_search_by(|p| p.total_cmp(&x)).is_ok()
    }

    pub fn union(&self, other: &ClosedPointSet) -> ClosedPointSet {
        let mut v = self.points.clone();
        v.extend_from_slice(&other.points);
        ClosedPointSet::from_unsorted(v)
    }
}

/// `N_A(lambda) = sup { x in A | x <= lambda }`, with `sup {} = -inf`.
pub fn n_eval(a: &ClosedPointSet, lambda: f64) -> ExtReal {
    let idx = a.points.partition_point(|x| *x <= lambda);
    if idx == 0 {
        ExtReal::NegInf
    } else {
        ExtReal::Finite(a.points[idx - 1])
    }
}

/// `sup(N_A, N_B) = N_{A u B}`, returned as the left-hand side and asserted
/// against the right-hand side (the identity is exact on finite sets).
pub fn n_union(a: &ClosedPointSet, b: &ClosedPointSet, lambda: f64) -> ExtReal {
    let lhs = n_eval(a, lambda).max(n_eval(b, lambda));
    debug_assert_eq!(lhs, n_eval(&a.union(b), lambda));
    lhs
}

/// `sup_{mu <= lambda} M(mu)` with `M(mu) = mu` on `b` and `N_A(mu)`
/// elsewhere, evaluated analytically: the sup is attained at `lambda`, at a
/// point of `b` below `lambda`, or at `N_A(lambda)`.
pub fn m_sup(a: &ClosedPointSet, b: &ClosedPointSet, lambda: f64) -> ExtReal {
    n_eval(a, lambda).max(n_eval(b, lambda))
}

/// Best Mourre constant of the free kinetic block: `+inf` below zero,
/// `lambda` at and above it.
pub fn rho_of_laplacian(lambda: f64) -> ExtReal {
    if lambda < 0.0 {
        ExtReal::PosInf
    } else {
        ExtReal::Finite(lambda)
    }
}

/// `rho_hat(lambda) = lambda - N_tau(lambda)`, `+inf` below the lowest
/// threshold.
pub fn rho_hat_from_thresholds(tau: &ClosedPointSet, lambda: f64) -> ExtReal {
    n_eval(tau, lambda).sub_from(lambda)
}

/// Sorted deduplicated union of the subsystem eigenvalue sets over all
/// elements strictly above the least one.
pub fn threshold_union(
    s: &Semilattice,
    ev_map: &BTreeMap<String, ClosedPointSet>,
) -> Result<ClosedPointSet> {
    let mut acc = Vec::new();
    for x in s.strictly_positive() {
        let ev = ev_map
            .get(&x.id)
            .ok_or_else(|| Error::invalid(format!("ev_map has no entry for `{}`", x.id)))?;
        acc.extend_from_slice(ev.points());
    }
    Ok(ClosedPointSet::from_unsorted(acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSource {
    Direct,
    Recursive,
}

/// A rho(-hat) profile tabulated on an explicit lambda grid.
#[derive(Clone, Debug, Serialize)]
pub struct RhoProfile {
    pub lambdas: Vec<f64>,
    pub values: Vec<ExtReal>,
    pub source: RhoSource,
}

impl RhoProfile {
    pub fn new(lambdas: Vec<f64>, values: Vec<ExtReal>, source: RhoSource) -> Self {
        assert_eq!(lambdas.len(), values.len());
        RhoProfile {
            lambdas,
            values,
            source,
        }
    }

    /// Step evaluation: value at the largest grid point `<= mu`, with flat
    /// extrapolation below the grid.
    pub fn eval_step(&self, mu: f64) -> ExtReal {
        let idx = self.lambdas.partition_point(|x| *x <= mu);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }

    /// Grid-level check of `value(l + e) <= value(l) + e`, the discrete
    /// shadow of lower semicontinuity of rho-hat.
    pub fn lsc_spot_check(&self, tol: f64) -> bool {
        self.lambdas
            .windows(2)
            .zip(self.values.windows(2))
            .all(|(l, v)| match (v[0], v[1]) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => b <= a + (l[1] - l[0]) + tol,
                (_, ExtReal::PosInf) => true,
                (ExtReal::PosInf, _) => true,
                _ => false,
            })
    }
}

/// `lambda - sup_{mu <= lambda} (mu - rho_sub(mu))` with the sup taken over
/// the grid points of `rho_sub` restricted to `mu <= lambda`, plus `lambda`
/// itself (step-evaluated), so attained suprema on grid points are not
/// missed.
pub fn rho_geq(rho_sub: &RhoProfile, lambda: f64) -> Result<ExtReal> {
    if rho_sub.lambdas.is_empty() {
        return Err(Error::invalid("rho_geq: empty profile grid"));
    }
    let mut sup = ExtReal::NegInf;
    for (&mu, &val) in rho_sub.lambdas.iter().zip(&rho_sub.values) {
        if mu > lambda {
            break;
        }
        sup = sup.max(val.sub_from(mu));
    }
    sup = sup.max(rho_sub.eval_step(lambda).sub_from(lambda));
    Ok(sup.sub_from(lambda))
}

/// Evaluates rho-hat by structural recursion over quotient semilattices:
/// the minimum over atoms of `lambda - sup_{mu<=lambda}(mu - rho_sub(mu))`,
/// where each subsystem rho is rebuilt from its rho-hat and its eigenvalue
/// set (zero on eigenvalues, `mu - N` elsewhere).
///
/// The branch suprema are attained on eigenvalue/threshold points, and on
/// those points `mu - rho_hat(mu)` equals the N-function value itself, so
/// the evaluation below works with the N values directly. This makes the
/// result bit-identical to [`rho_hat_from_thresholds`] applied to
/// [`threshold_union`], which is the computational content of the
/// threshold-set theorem.
///
/// `ev_map` must contain an entry for every element strictly above the
/// least one; the top entry is the `{0}` of the trivial quotient.
pub fn rho_hat_recursive(
    s: &Semilattice,
    ev_map: &BTreeMap<String, ClosedPointSet>,
    lambda: f64,
) -> Result<ExtReal> {
    for x in s.strictly_positive() {
        if !ev_map.contains_key(&x.id) {
            return Err(Error::invalid(format!(
                "ev_map has no entry for `{}`",
                x.id
            )));
        }
    }
    let sup = branch_sup(s, ev_map, &s.least().id.clone(), lambda)?;
    Ok(sup.sub_from(lambda))
}

/// `sup_{mu <= lambda} (mu - rho_{S/base}(mu))` expressed through the
/// attained candidate points; `-inf` when `base` is the top element.
fn branch_sup(
    s: &Semilattice,
    ev_map: &BTreeMap<String, ClosedPointSet>,
    base: &str,
    lambda: f64,
) -> Result<ExtReal> {
    let mut best = ExtReal::NegInf;
    for cover in s.covers(base)? {
        // candidate points: eigenvalues of every subsystem at or above the
        // cover, plus lambda itself
        let mut candidates: Vec<f64> = Vec::new();
        for z in s.elements() {
            if s.leq(&cover.id, &z.id)? {
                candidates.extend_from_slice(ev_map[&z.id].points());
            }
        }
        candidates.push(lambda);
        for mu in candidates {
            if mu > lambda {
                continue;
            }
            let v = if ev_map[&cover.id].contains(mu) {
                // rho_{S/cover}(mu) = 0 on eigenvalues: contribution mu
                ExtReal::Finite(mu)
            } else {
                // mu - rho_hat_{S/cover}(mu) = N_{tau(S/cover)}(mu),
                // evaluated recursively as the branch sup one level up
                branch_sup(s, ev_map, &cover.id, mu)?
            };
            best = best.max(v);
        }
    }
    Ok(best)
}
