//! Discretized non-relativistic many-body Hamiltonians over a finite
//! semilattice of coordinate subspaces.
//!
//! Each subspace is a set of ambient axes carrying identical 1D grids, so
//! meets are axis intersections and every tensor factorization used by the
//! theory is exact at the matrix level. Blocks are materialized lazily:
//! anything that has to be densely eigensolved or stored is capped, while
//! separable diagonal blocks are handled through their 1D factors.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg;
use crate::semilattice::Semilattice;

/// Cap on any matrix dimension that is densely materialized or eigensolved.
pub const MAX_DENSE_DIM: usize = 4096;

/// Cap on the number of tensor-sum eigenvalue combinations generated for a
/// separable block.
const MAX_COMBINATIONS: usize = 1 << 24;

/// A coordinate subspace: a set of ambient axis labels (1-based).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoordSubspace {
    axes: BTreeSet<usize>,
}

impl CoordSubspace {
    pub fn new(axes: impl IntoIterator<Item = usize>) -> Self {
        CoordSubspace {
            axes: axes.into_iter().collect(),
        }
    }

    pub fn axes(&self) -> impl Iterator<Item = usize> + '_ {
        self.axes.iter().copied()
    }

    pub fn sorted_axes(&self) -> Vec<usize> {
        self.axes.iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn meet(&self, other: &CoordSubspace) -> CoordSubspace {
        CoordSubspace {
            axes: self.axes.intersection(&other.axes).copied().collect(),
        }
    }

    /// `self / other = self minus other`, the coordinate realization of the
    /// orthogonal quotient.
    pub fn minus(&self, other: &CoordSubspace) -> CoordSubspace {
        CoordSubspace {
            axes: self.axes.difference(&other.axes).copied().collect(),
        }
    }

    pub fn is_subspace_of(&self, other: &CoordSubspace) -> bool {
        self.axes.is_subset(&other.axes)
    }
}

/// Uniform per-axis grid on `[-L, L]` with `n` points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub half_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        let positive_box = half_length.is_finite() && half_length > 0.0;
        if n < 2 || !positive_box {
            return Err(Error::invalid(
                "grid needs n >= 2 and a positive half length",
            ));
        }
        Ok(GridSpec { n, half_length })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n)
            .map(|i| -self.half_length + h * i as f64)
            .collect()
    }

    /// Nested refinement: doubles the intervals, keeping the box.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            n: 2 * self.n - 1,
            half_length: self.half_length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticScheme {
    /// 3-point Dirichlet stencil per axis.
    Fd,
    /// DFT-diagonal |k|^2 on a periodic grid.
    Spectral,
}

/// Interaction potentials: diagonal sampled families and explicit tables.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    GaussianWell {
        depth: f64,
        width: f64,
        center: Vec<f64>,
    },
    CompactBump {
        height: f64,
        radius: f64,
        center: Vec<f64>,
    },
    /// Explicit kernel of the reduced operator `H(Y/Z) -> H(X/Z)`.
    Tabulated { entries: Vec<Vec<f64>> },
}

impl Potential {
    fn is_diagonal_family(&self) -> bool {
        !matches!(self, Potential::Tabulated { .. })
    }

    /// Samples the potential on the grid of the given axes (row-major over
    /// the sorted axis list). Only meaningful for the diagonal families.
    fn sample(&self, axes: &[usize], grid: &GridSpec) -> Result<Vec<f64>> {
        let pts = grid.points();
        let total = grid.n.pow(axes.len() as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let ds = digits(idx, axes.len(), grid.n);
            let xi: Vec<f64> = ds.iter().map(|&d| pts[d]).collect();
            out.push(self.eval(&xi)?);
        }
        Ok(out)
    }

    fn eval(&self, xi: &[f64]) -> Result<f64> {
        match self {
            Potential::GaussianWell {
                depth,
                width,
                center,
            } => {
                let r2 = radius_sq(xi, center)?;
                Ok(depth * (-r2 / (2.0 * width * width)).exp())
            }
            Potential::CompactBump {
                height,
                radius,
                center,
            } => {
                let r2 = radius_sq(xi, center)?;
                let t = r2 / (radius * radius);
                Ok(if t < 1.0 {
                    height * (1.0 - t) * (1.0 - t)
                } else {
                    0.0
                })
            }
            Potential::Tabulated { .. } => Err(Error::invalid(
                "tabulated potential has no pointwise values",
            )),
        }
    }
}

fn radius_sq(xi: &[f64], center: &[f64]) -> Result<f64> {
    if xi.len() != center.len() {
        return Err(Error::invalid(format!(
            "potential center has {} coordinates, target quotient has {}",
            center.len(),
            xi.len()
        )));
    }
    Ok(xi.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum())
}

/// One `1_Z (x) I^Z_{XY}` interaction term.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub x: String,
    pub y: String,
    pub z: String,
    pub potential: Potential,
}

/// Field coupling `theta` for a comparable pair `x` strictly above `y`
/// (or a constant shift when `x == y`).
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub x: String,
    pub y: String,
    pub theta: Theta,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Theta {
    Gaussian { amplitude: f64, width: f64 },
    Samples(Vec<f64>),
}

impl Theta {
    /// The named gaussian profile carries the quadrature weight `h^(d/2)`
    /// so its l2 norm tracks the square-integral of the profile and the
    /// coupling strength is stable under grid refinement. Raw samples are
    /// taken verbatim (the caller owns their normalization).
    fn sample(&self, axes: &[usize], grid: &GridSpec) -> Result<Vec<f64>> {
        let total = grid.n.pow(axes.len() as u32);
        match self {
            Theta::Gaussian { amplitude, width } => {
                let p = Potential::GaussianWell {
                    depth: *amplitude,
                    width: *width,
                    center: vec![0.0; axes.len()],
                };
                let w = grid.spacing().powf(axes.len() as f64 / 2.0);
                Ok(p.sample(axes, grid)?.into_iter().map(|v| v * w).collect())
            }
            Theta::Samples(v) => {
                if v.len() != total {
                    return Err(Error::invalid(format!(
                        "theta has {} samples, the quotient grid has {total}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// A declarative model: subspaces, grid, kinetic scheme, interactions and
/// couplings. The semilattice is derived from the axis sets.
#[derive(Clone, Debug)]
pub struct Model {
    pub lattice: Semilattice,
    spaces: BTreeMap<String, CoordSubspace>,
    pub grid: GridSpec,
    pub scheme: KineticScheme,
    pub interactions: Vec<Interaction>,
    pub couplings: Vec<Coupling>,
}

fn digits(idx: usize, ndigits: usize, base: usize) -> Vec<usize> {
    let mut d = vec![0usize; ndigits];
    let mut rest = idx;
    for k in (0..ndigits).rev() {
        d[k] = rest % base;
        rest /= base;
    }
    d
}

/// Splits a grid index of `space` into (index over `part` axes, index over
/// the remaining axes), both row-major over sorted axis lists.
fn split_index(space: &[usize], part: &[usize], idx: usize, n: usize) -> (usize, usize) {
    let ds = digits(idx, space.len(), n);
    let mut p = 0usize;
    let mut r = 0usize;
    for (axis, d) in space.iter().zip(&ds) {
        if part.binary_search(axis).is_ok() {
            p = p * n + d;
        } else {
            r = r * n + d;
        }
    }
    (p, r)
}

impl Model {
    pub fn new(
        spaces: BTreeMap<String, CoordSubspace>,
        grid: GridSpec,
        scheme: KineticScheme,
        interactions: Vec<Interaction>,
        couplings: Vec<Coupling>,
    ) -> Result<Self> {
        if spaces.is_empty() {
            return Err(Error::invalid("model needs at least one subspace"));
        }
        if !spaces.values().any(|s| s.dim() == 0) {
            return Err(Error::invalid(
                "the vacuum subspace (empty axis set) must be present",
            ));
        }
        let ids: Vec<&String> = spaces.keys().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                let m = spaces[*a].meet(&spaces[*b]);
                if !spaces.values().any(|s| *s == m) {
                    return Err(Error::invalid(format!(
                        "subspace family not closed under intersection: `{a}` and `{b}`"
                    )));
                }
            }
        }
        let elements: Vec<(String, usize)> =
            spaces.iter().map(|(id, s)| (id.clone(), s.dim())).collect();
        let by_id: Vec<&CoordSubspace> = {
            let mut sorted: Vec<(&String, &CoordSubspace)> = spaces.iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(b.0));
            sorted.into_iter().map(|(_, s)| s).collect()
        };
        let mut sorted_elements = elements.clone();
        sorted_elements.sort();
        let lattice = Semilattice::from_meet_fn(sorted_elements, |i, j| {
            let m = by_id[i].meet(by_id[j]);
            by_id.iter().position(|s| **s == m).expect("closed family")
        })?;

        let model = Model {
            lattice,
            spaces,
            grid,
            scheme,
            interactions,
            couplings,
        };
        for (k, int) in model.interactions.iter().enumerate() {
            model.validate_interaction(int).map_err(|e| {
                Error::invalid(format!(
                    "interaction #{k} ({} , {} ; {}): {e}",
                    int.x, int.y, int.z
                ))
            })?;
        }
        for (k, c) in model.couplings.iter().enumerate() {
            model
                .validate_coupling(c)
                .map_err(|e| Error::invalid(format!("coupling #{k} ({} > {}): {e}", c.x, c.y)))?;
        }
        Ok(model)
    }

    fn validate_interaction(&self, int: &Interaction) -> Result<()> {
        let sx = self.space(&int.x)?;
        let sy = self.space(&int.y)?;
        let sz = self.space(&int.z)?;
        if !sz.is_subspace_of(&sx.meet(sy)) {
            // the zero convention is represented by refusing the term outright
            return Err(Error::invalid("z is not contained in the meet of x and y"));
        }
        if int.x > int.y {
            return Err(Error::invalid(
                "configure the lexicographically ordered block; the adjoint is generated",
            ));
        }
        match &int.potential {
            Potential::Tabulated { entries } => {
                let rows = self.grid.n.pow(sx.minus(sz).dim() as u32);
                let cols = self.grid.n.pow(sy.minus(sz).dim() as u32);
                if entries.len() != rows || entries.iter().any(|r| r.len() != cols) {
                    return Err(Error::invalid(format!(
                        "tabulated kernel must be {rows} x {cols}"
                    )));
                }
                if int.x == int.y {
                    let symmetric = (0..rows)
                        .all(|i| (0..cols).all(|j| (entries[i][j] - entries[j][i]).abs() <= 1e-12));
                    if !symmetric {
                        return Err(Error::invalid(
                            "diagonal tabulated kernel must be symmetric",
                        ));
                    }
                }
            }
            p => {
                if int.x != int.y {
                    return Err(Error::invalid(
                        "sampled potentials are diagonal families; off-diagonal targets need a tabulated kernel",
                    ));
                }
                // reject malformed centers now rather than at sampling time
                p.sample(&sx.minus(sz).sorted_axes(), &self.grid)?;
            }
        }
        Ok(())
    }

    fn validate_coupling(&self, c: &Coupling) -> Result<()> {
        let sx = self.space(&c.x)?;
        let sy = self.space(&c.y)?;
        if c.x == c.y {
            match &c.theta {
                Theta::Samples(v) if v.len() == 1 => return Ok(()),
                _ => {
                    return Err(Error::invalid(
                        "a diagonal coupling is a constant shift: give one sample",
                    ))
                }
            }
        }
        if !sy.is_subspace_of(sx) || sx == sy {
            return Err(Error::invalid("coupled pair must be strictly comparable"));
        }
        c.theta.sample(&sx.minus(sy).sorted_axes(), &self.grid)?;
        Ok(())
    }

    pub fn space(&self, id: &str) -> Result<&CoordSubspace> {
        self.spaces
            .get(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn space_dim(&self, id: &str) -> Result<usize> {
        Ok(self.grid.n.pow(self.space(id)?.dim() as u32))
    }

    pub fn total_dim(&self) -> usize {
        self.spaces
            .values()
            .map(|s| self.grid.n.pow(s.dim() as u32))
            .sum()
    }

    pub fn ids(&self) -> Vec<String> {
        self.lattice
            .elements()
            .iter()
            .map(|e| e.id.clone())
            .collect()
    }

    /// Same model on a doubled grid.
    pub fn refined(&self) -> Model {
        Model {
            lattice: self.lattice.clone(),
            spaces: self.spaces.clone(),
            grid: self.grid.refined(),
            scheme: self.scheme,
            interactions: self.interactions.clone(),
            couplings: self.couplings.clone(),
        }
    }
}

/// 3-point Dirichlet Laplacian.
pub fn lap_1d_fd(n: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let s = 1.0 / (h * h);
    for i in 0..n {
        m[(i, i)] = 2.0 * s;
        if i + 1 < n {
            m[(i, i + 1)] = -s;
            m[(i + 1, i)] = -s;
        }
    }
    m
}

/// Periodic spectral Laplacian: real circulant with symbol |k|^2.
pub fn lap_1d_spectral(n: usize, h: f64) -> DMatrix<f64> {
    use std::f64::consts::TAU;
    let mut first_row = vec![0.0f64; n];
    for (j, fr) in first_row.iter_mut().enumerate() {
        let mut acc = 0.0;
        for kidx in 0..n {
            let ksigned = if kidx <= n / 2 {
                kidx as f64
            } else {
                kidx as f64 - n as f64
            };
            let k = TAU * ksigned / (n as f64 * h);
            acc += k * k * (TAU * (kidx as f64) * (j as f64) / n as f64).cos();
        }
        *fr = acc / n as f64;
    }
    DMatrix::from_fn(n, n, |i, j| first_row[(n + j - i) % n])
}

/// Positive Laplacian of a coordinate subspace as a Kronecker sum over its
/// axes; the zero-dimensional space gets the 1x1 zero.
pub fn build_laplacian(x: &CoordSubspace, grid: &GridSpec, scheme: KineticScheme) -> DMatrix<f64> {
    let k = x.dim();
    if k == 0 {
        return DMatrix::zeros(1, 1);
    }
    let n = grid.n;
    let lap = match scheme {
        KineticScheme::Fd => lap_1d_fd(n, grid.spacing()),
        KineticScheme::Spectral => lap_1d_spectral(n, grid.spacing()),
    };
    let mut total = DMatrix::zeros(n.pow(k as u32), n.pow(k as u32));
    for i in 0..k {
        total += linalg::kron_embed(&lap, n.pow(i as u32), n.pow((k - 1 - i) as u32));
    }
    total
}

/// 1D generator of dilations in its `i D` form: the real antisymmetric
/// `W = (QG + GQ)/4` with `G` the centered difference with Dirichlet ends.
/// The Hermitian generator itself is `D = -i W`.
pub fn dilation_w_1d(n: usize, grid: &GridSpec) -> DMatrix<f64> {
    let pts = grid.points();
    let h = grid.spacing();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            g[(i, i + 1)] = 1.0 / (2.0 * h);
            g[(i + 1, i)] = -1.0 / (2.0 * h);
        }
    }
    let q = DMatrix::from_diagonal(&DVector::from_vec(pts));
    (&q * &g + &g * &q) / 4.0
}

/// `i D` of a coordinate subspace (real antisymmetric), Kronecker-summed.
pub fn build_w(x: &CoordSubspace, grid: &GridSpec) -> DMatrix<f64> {
    let k = x.dim();
    if k == 0 {
        return DMatrix::zeros(1, 1);
    }
    let n = grid.n;
    let w1 = dilation_w_1d(n, grid);
    let mut total = DMatrix::zeros(n.pow(k as u32), n.pow(k as u32));
    for i in 0..k {
        total += linalg::kron_embed(&w1, n.pow(i as u32), n.pow((k - 1 - i) as u32));
    }
    total
}

/// The Hermitian dilation generator `D = -i W` (finite differences only).
pub fn dilation_generator(x: &CoordSubspace, grid: &GridSpec) -> DMatrix<Complex64> {
    build_w(x, grid).map(|w| Complex64::new(0.0, -w))
}

/// An assembled model with lazy, cap-checked block access.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub model: Model,
    cap: usize,
}

/// Builds the Hamiltonian `H = K + sum_Z I(Z)` behind a lazy block
/// interface, verifying Hermiticity on whatever can be materialized.
pub fn assemble(model: Model) -> Result<Assembled> {
    let asm = Assembled {
        model,
        cap: MAX_DENSE_DIM,
    };
    asm.check_hermiticity()?;
    Ok(asm)
}

impl Assembled {
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    fn check_hermiticity(&self) -> Result<()> {
        // off-diagonal blocks are generated with their adjoints; diagonal
        // sampled potentials are real diagonal. Verify densely when small.
        if self.model.total_dim() <= self.cap {
            let h = self.dense()?;
            let asym = (&h - h.transpose()).norm();
            let scale = h.norm().max(1.0);
            if asym > 1e-12 * scale {
                return Err(Error::internal(format!(
                    "assembled operator not symmetric: |H - H*| = {asym:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.model.grid
    }

    /// The raw block contribution of one interaction term: the embedded
    /// `1_Z (x) I^Z` on the `(x, y)` pair, in the standard grid ordering.
    pub fn interaction_block(&self, int: &Interaction) -> Result<DMatrix<f64>> {
        let grid = &self.model.grid;
        let sx = self.model.space(&int.x)?;
        let sy = self.model.space(&int.y)?;
        let sz = self.model.space(&int.z)?;
        let (dx, dy) = (self.model.space_dim(&int.x)?, self.model.space_dim(&int.y)?);
        let ax = sx.sorted_axes();
        let ay = sy.sorted_axes();
        let az = sz.sorted_axes();
        let mut b = DMatrix::zeros(dx, dy);
        match &int.potential {
            Potential::Tabulated { entries } => {
                for xi in 0..dx {
                    let (zx, rx) = split_index(&ax, &az, xi, grid.n);
                    for yi in 0..dy {
                        let (zy, ry) = split_index(&ay, &az, yi, grid.n);
                        if zx == zy {
                            b[(xi, yi)] = entries[rx][ry];
                        }
                    }
                }
            }
            p => {
                let v = p.sample(&sx.minus(sz).sorted_axes(), grid)?;
                for xi in 0..dx {
                    let (_, rx) = split_index(&ax, &az, xi, grid.n);
                    b[(xi, xi)] = v[rx];
                }
            }
        }
        Ok(b)
    }

    /// The raw creation block `a*(theta): H(y) -> H(x)` of one coupling,
    /// or the constant shift on a diagonal pair.
    pub fn coupling_block(&self, c: &Coupling) -> Result<DMatrix<f64>> {
        let grid = &self.model.grid;
        let sx = self.model.space(&c.x)?;
        let sy = self.model.space(&c.y)?;
        let (dx, dy) = (self.model.space_dim(&c.x)?, self.model.space_dim(&c.y)?);
        if c.x == c.y {
            let v = match &c.theta {
                Theta::Samples(v) => v[0],
                Theta::Gaussian { amplitude, .. } => *amplitude,
            };
            return Ok(DMatrix::identity(dx, dx) * v);
        }
        let theta = c.theta.sample(&sx.minus(sy).sorted_axes(), grid)?;
        let ax = sx.sorted_axes();
        let ay = sy.sorted_axes();
        let mut b = DMatrix::zeros(dx, dy);
        for xi in 0..dx {
            let (yp, rest) = split_index(&ax, &ay, xi, grid.n);
            b[(xi, yp)] = theta[rest];
        }
        Ok(b)
    }

    /// The kinetic block of one element: its (cap-checked) Laplacian.
    pub fn kinetic_block(&self, x: &str) -> Result<DMatrix<f64>> {
        let d = self.model.space_dim(x)?;
        if d > self.cap {
            return Err(Error::invalid(format!(
                "kinetic block {x} of size {d} exceeds the dense cap"
            )));
        }
        Ok(build_laplacian(
            self.model.space(x)?,
            &self.model.grid,
            self.model.scheme,
        ))
    }

    /// The block-diagonal kinetic part on the total space.
    pub fn kinetic_dense(&self) -> Result<DMatrix<f64>> {
        let total = self.model.total_dim();
        if total > self.cap {
            return Err(Error::invalid("total dimension exceeds the dense cap"));
        }
        let off = self.offsets();
        let mut k = DMatrix::zeros(total, total);
        for e in self.model.lattice.elements() {
            let b = self.kinetic_block(&e.id)?;
            k.view_mut((off[&e.id], off[&e.id]), (b.nrows(), b.ncols()))
                .copy_from(&b);
        }
        Ok(k)
    }

    /// Dense block `(x, y)` of `H`, cap-checked.
    pub fn block(&self, x: &str, y: &str) -> Result<DMatrix<f64>> {
        let (dx, dy) = (self.model.space_dim(x)?, self.model.space_dim(y)?);
        if dx > self.cap || dy > self.cap {
            return Err(Error::invalid(format!(
                "block ({x}, {y}) of size {dx} x {dy} exceeds the dense cap {}",
                self.cap
            )));
        }
        let mut b = DMatrix::zeros(dx, dy);
        if x == y {
            b += build_laplacian(self.model.space(x)?, &self.model.grid, self.model.scheme);
        }
        for int in &self.model.interactions {
            if int.x == x && int.y == y {
                b += self.interaction_block(int)?;
            } else if int.x == y && int.y == x && x != y {
                b += self.interaction_block(int)?.transpose();
            }
        }
        for c in &self.model.couplings {
            if c.x == x && c.y == y {
                b += self.coupling_block(c)?;
            } else if c.x == y && c.y == x && x != y {
                b += self.coupling_block(c)?.transpose();
            }
        }
        Ok(b)
    }

    /// The interaction component `I(z)` restricted to block `(x, y)`.
    pub fn component_block(&self, z: &str, x: &str, y: &str) -> Result<DMatrix<f64>> {
        let (dx, dy) = (self.model.space_dim(x)?, self.model.space_dim(y)?);
        if dx > self.cap || dy > self.cap {
            return Err(Error::invalid("component block exceeds the dense cap"));
        }
        let mut b = DMatrix::zeros(dx, dy);
        for int in &self.model.interactions {
            if int.z != z {
                continue;
            }
            if int.x == x && int.y == y {
                b += self.interaction_block(int)?;
            } else if int.x == y && int.y == x && x != y {
                b += self.interaction_block(int)?.transpose();
            }
        }
        for c in &self.model.couplings {
            // a field coupling on the pair (x, y) is graded by its lower
            // element
            if c.y != z {
                continue;
            }
            if c.x == x && c.y == y {
                b += self.coupling_block(c)?;
            } else if c.x == y && c.y == x && x != y {
                b += self.coupling_block(c)?.transpose();
            }
        }
        Ok(b)
    }

    /// Block offsets in lattice element order.
    pub fn offsets(&self) -> BTreeMap<String, usize> {
        let mut off = BTreeMap::new();
        let mut acc = 0usize;
        for e in self.model.lattice.elements() {
            off.insert(e.id.clone(), acc);
            acc += self.model.space_dim(&e.id).expect("bound space");
        }
        off
    }

    /// The whole Hamiltonian as one dense matrix, cap-checked.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let total = self.model.total_dim();
        if total > self.cap {
            return Err(Error::invalid(format!(
                "total dimension {total} exceeds the dense cap {}",
                self.cap
            )));
        }
        let off = self.offsets();
        let mut h = DMatrix::zeros(total, total);
        for xe in self.model.lattice.elements() {
            for ye in self.model.lattice.elements() {
                let b = self.block(&xe.id, &ye.id)?;
                h.view_mut((off[&xe.id], off[&ye.id]), (b.nrows(), b.ncols()))
                    .copy_from(&b);
            }
        }
        Ok(h)
    }

    /// The block-diagonal `i D` (real antisymmetric) on the total space.
    pub fn w_dense(&self) -> Result<DMatrix<f64>> {
        if self.model.scheme != KineticScheme::Fd {
            return Err(Error::invalid(
                "the dilation generator is built for the fd scheme only",
            ));
        }
        let total = self.model.total_dim();
        if total > self.cap {
            return Err(Error::invalid("total dimension exceeds the dense cap"));
        }
        let off = self.offsets();
        let mut w = DMatrix::zeros(total, total);
        for e in self.model.lattice.elements() {
            let b = build_w(self.model.space(&e.id)?, &self.model.grid);
            w.view_mut((off[&e.id], off[&e.id]), (b.nrows(), b.ncols()))
                .copy_from(&b);
        }
        Ok(w)
    }

    /// Restriction to the filter above `x`: keeps blocks `(X, Y)` with
    /// `X, Y >= x` and interaction components `I(Z)` with `Z >= x`.
    pub fn project_geq(&self, x: &str) -> Result<Assembled> {
        let lattice = self.model.lattice.filter_geq(x)?;
        let spaces: BTreeMap<String, CoordSubspace> = lattice
            .elements()
            .iter()
            .map(|e| {
                (
                    e.id.clone(),
                    self.model.space(&e.id).cloned().expect("bound"),
                )
            })
            .collect();
        let interactions = self
            .model
            .interactions
            .iter()
            .filter(|int| lattice.contains(&int.z))
            .cloned()
            .collect();
        let couplings = self
            .model
            .couplings
            .iter()
            .filter(|c| lattice.contains(&c.y))
            .cloned()
            .collect();
        // the restricted family is intersection-closed with least x, but its
        // vacuum is x itself; bypass Model::new's vacuum rule by rebuilding
        // spaces relative to nothing and reusing the filter lattice directly
        let model = Model {
            lattice,
            spaces,
            grid: self.model.grid,
            scheme: self.model.scheme,
            interactions,
            couplings,
        };
        Ok(Assembled {
            model,
            cap: self.cap,
        })
    }

    /// The quotient model `H_{S/x}`: same ids above `x`, axes of `x`
    /// removed everywhere, interactions with `Z >= x` kept unchanged.
    pub fn subsystem(&self, x: &str) -> Result<Assembled> {
        let sx = self.model.space(x)?.clone();
        let lattice = self.model.lattice.filter_geq_reduced(x)?;
        let spaces: BTreeMap<String, CoordSubspace> = lattice
            .elements()
            .iter()
            .map(|e| {
                let s = self.model.space(&e.id).expect("bound").minus(&sx);
                (e.id.clone(), s)
            })
            .collect();
        let interactions: Vec<Interaction> = self
            .model
            .interactions
            .iter()
            .filter(|int| lattice.contains(&int.z))
            .cloned()
            .collect();
        let couplings: Vec<Coupling> = self
            .model
            .couplings
            .iter()
            .filter(|c| lattice.contains(&c.y))
            .cloned()
            .collect();
        let model = Model {
            lattice,
            spaces,
            grid: self.model.grid,
            scheme: self.model.scheme,
            interactions,
            couplings,
        };
        Ok(Assembled {
            model,
            cap: self.cap,
        })
    }

    /// Residual of the exact tensor factorization
    /// `project_geq(H, x) = Lap_x (x) 1 + 1 (x) H_{S/x}` as matrices.
    pub fn nr_residual(&self, x: &str) -> Result<f64> {
        let projected = self.project_geq(x)?;
        let sub = self.subsystem(x)?;
        let lhs = projected.dense()?;

        let sx = self.model.space(x)?.clone();
        let lap_x = build_laplacian(&sx, &self.model.grid, self.model.scheme);
        let axl = sx.sorted_axes();
        let n = self.model.grid.n;

        let off = projected.offsets();
        let total = projected.model.total_dim();
        let mut rhs = DMatrix::zeros(total, total);
        for xe in projected.model.lattice.elements() {
            let axes_big = projected.model.space(&xe.id)?.sorted_axes();
            for ye in projected.model.lattice.elements() {
                let axes_big_y = projected.model.space(&ye.id)?.sorted_axes();
                let sub_block = sub.block(&xe.id, &ye.id)?;
                let (ox, oy) = (off[&xe.id], off[&ye.id]);
                let (dx, dy) = (
                    projected.model.space_dim(&xe.id)?,
                    projected.model.space_dim(&ye.id)?,
                );
                for a in 0..dx {
                    let (xp_a, rest_a) = split_index(&axes_big, &axl, a, n);
                    for b in 0..dy {
                        let (xp_b, rest_b) = split_index(&axes_big_y, &axl, b, n);
                        let mut v = 0.0;
                        if xp_a == xp_b {
                            v += sub_block[(rest_a, rest_b)];
                        }
                        if xe.id == ye.id && rest_a == rest_b {
                            v += lap_x[(xp_a, xp_b)];
                        }
                        rhs[(ox + a, oy + b)] = v;
                    }
                }
            }
        }
        Ok((lhs - rhs).norm())
    }

    /// Connected components of the block-coupling graph, each a sorted id
    /// list. Off-diagonal interactions and field couplings join blocks.
    pub fn coupling_components(&self) -> Vec<Vec<String>> {
        let ids = self.model.ids();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        let pos = |id: &str| ids.iter().position(|i| i == id).expect("known id");
        let join = |a: usize, b: usize, parent: &mut Vec<usize>| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        };
        for int in &self.model.interactions {
            if int.x != int.y {
                join(pos(&int.x), pos(&int.y), &mut parent);
            }
        }
        for c in &self.model.couplings {
            if c.x != c.y {
                join(pos(&c.x), pos(&c.y), &mut parent);
            }
        }
        let mut comps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            comps
                .entry(find(&mut parent, i))
                .or_default()
                .push(id.clone());
        }
        comps.into_values().collect()
    }

    /// Partition of the axes of diagonal block `x` into independent factor
    /// groups; `None` for a group means it cannot be separated further.
    fn axis_groups(&self, x: &str) -> Result<Vec<Vec<usize>>> {
        let sx = self.model.space(x)?;
        let axes = sx.sorted_axes();
        let mut parent: Vec<usize> = (0..axes.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for int in &self.model.interactions {
            if int.x != x || int.y != x {
                continue;
            }
            let sz = self.model.space(&int.z)?;
            let touched = sx.minus(sz).sorted_axes();
            if touched.len() <= 1 {
                continue;
            }
            let first = axes
                .iter()
                .position(|a| *a == touched[0])
                .expect("axis of x");
            for t in &touched[1..] {
                let k = axes.iter().position(|a| a == t).expect("axis of x");
                let (ra, rb) = (find(&mut parent, first), find(&mut parent, k));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &axis) in axes.iter().enumerate() {
            groups.entry(find(&mut parent, i)).or_default().push(axis);
        }
        Ok(groups.into_values().collect())
    }

    /// The dense 1-factor matrices of a separable diagonal block, plus the
    /// scalar shift collected from `Z = X` terms.
    pub fn block_factors(&self, x: &str) -> Result<(Vec<DMatrix<f64>>, f64)> {
        let sx = self.model.space(x)?.clone();
        let grid = self.model.grid;
        let mut shift = 0.0;
        for int in &self.model.interactions {
            if int.x == x && int.y == x && self.model.space(&int.z)? == &sx {
                match &int.potential {
                    Potential::Tabulated { entries } => shift += entries[0][0],
                    p => shift += p.eval(&[])?,
                }
            }
        }
        for c in &self.model.couplings {
            if c.x == x && c.y == x {
                shift += match &c.theta {
                    Theta::Samples(v) => v[0],
                    Theta::Gaussian { amplitude, .. } => *amplitude,
                };
            }
        }
        let mut factors = Vec::new();
        for group in self.axis_groups(x)? {
            let gdim = grid.n.pow(group.len() as u32);
            if gdim > self.cap {
                return Err(Error::invalid(format!(
                    "non-separable factor of block {x} has dimension {gdim} over the cap"
                )));
            }
            let gspace = CoordSubspace::new(group.iter().copied());
            let mut f = build_laplacian(&gspace, &grid, self.model.scheme);
            for int in &self.model.interactions {
                if int.x != x || int.y != x {
                    continue;
                }
                let sz = self.model.space(&int.z)?;
                let touched = sx.minus(sz).sorted_axes();
                if touched.is_empty() || !touched.iter().all(|t| group.contains(t)) {
                    continue;
                }
                let v = match &int.potential {
                    Potential::Tabulated { .. } => {
                        return Err(Error::invalid(
                            "tabulated diagonal kernels are not separable; use the dense path",
                        ))
                    }
                    p => p.sample(&touched, &grid)?,
                };
                for gi in 0..gdim {
                    let (ti, _) = split_index(&group, &touched, gi, grid.n);
                    f[(gi, gi)] += v[ti];
                }
            }
            factors.push(f);
        }
        Ok((factors, shift))
    }

    /// A diagonal block needs the dense route when a genuinely matrix-kind
    /// kernel sits on it or when its axes cannot be separated.
    fn block_needs_dense(&self, x: &str) -> Result<bool> {
        let has_tabulated_diag = self.model.interactions.iter().any(|int| {
            int.x == x && int.y == x && !int.potential.is_diagonal_family() && {
                let sz = self.model.space(&int.z).expect("known z");
                self.model.space(x).expect("known x").minus(sz).dim() > 0
            }
        });
        Ok(has_tabulated_diag || self.axis_groups(x)?.len() <= 1)
    }

    /// The largest dense eigensolve/materialization this model requires:
    /// coupled components count whole, separable blocks by their largest
    /// factor. This is what the config validator caps.
    pub fn dense_requirement(&self) -> Result<usize> {
        let mut worst = 1usize;
        for comp in self.coupling_components() {
            if comp.len() > 1 {
                let mut dim = 0usize;
                for id in &comp {
                    dim += self.model.space_dim(id)?;
                }
                worst = worst.max(dim);
            } else {
                let x = &comp[0];
                if self.block_needs_dense(x)? {
                    worst = worst.max(self.model.space_dim(x)?);
                } else {
                    for g in self.axis_groups(x)? {
                        worst = worst.max(self.model.grid.n.pow(g.len() as u32));
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Eigenvalues of the diagonal block `x` alone (no couplings), through
    /// the separable route when possible, densely otherwise.
    pub fn block_eigenvalues(&self, x: &str) -> Result<Vec<f64>> {
        let dim = self.model.space_dim(x)?;
        if self.block_needs_dense(x)? {
            if dim > self.cap {
                return Err(Error::invalid(format!(
                    "block {x} of dimension {dim} cannot be eigensolved densely"
                )));
            }
            return linalg::eigvals_sym(&self.block(x, x)?);
        }
        let (factors, shift) = self.block_factors(x)?;
        let per_factor: Vec<Vec<f64>> = factors
            .iter()
            .map(linalg::eigvals_sym)
            .collect::<Result<_>>()?;
        let count: usize = per_factor.iter().map(Vec::len).product();
        if count > MAX_COMBINATIONS {
            return Err(Error::invalid(
                "tensor-sum eigenvalue combination too large",
            ));
        }
        let mut sums = vec![shift];
        for evs in &per_factor {
            let mut next = Vec::with_capacity(sums.len() * evs.len());
            for s in &sums {
                for e in evs {
                    next.push(s + e);
                }
            }
            sums = next;
        }
        sums.sort_by(f64::total_cmp);
        Ok(sums)
    }

    /// All eigenvalues of `H`, sorted: coupled components are eigensolved
    /// densely (cap-checked), free diagonal blocks via their factors.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for comp in self.coupling_components() {
            if comp.len() == 1 {
                all.extend(self.block_eigenvalues(&comp[0])?);
                continue;
            }
            let dim: usize = comp
                .iter()
                .map(|id| self.model.space_dim(id))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum();
            if dim > self.cap {
                return Err(Error::invalid(format!(
                    "coupled component {{{}}} of dimension {dim} exceeds the dense cap",
                    comp.join(", ")
                )));
            }
            let mut hm = DMatrix::zeros(dim, dim);
            let mut off = BTreeMap::new();
            let mut acc = 0usize;
            for id in &comp {
                off.insert(id.clone(), acc);
                acc += self.model.space_dim(id)?;
            }
            for a in &comp {
                for b in &comp {
                    let blk = self.block(a, b)?;
                    hm.view_mut((off[a], off[b]), (blk.nrows(), blk.ncols()))
                        .copy_from(&blk);
                }
            }
            all.extend(linalg::eigvals_sym(&hm)?);
        }
        all.sort_by(f64::total_cmp);
        Ok(all)
    }

    /// Reports `max_Z |I(Z) u| / |(K + i a) u|` over seeded random states,
    /// the desk-scale shadow of the relative form bound bookkeeping.
    pub fn relative_bound_diagnostic(&self, a: f64) -> Result<f64> {
        let total = self.model.total_dim();
        if total > self.cap {
            return Err(Error::invalid(
                "relative-bound diagnostic needs the dense cap",
            ));
        }
        let off = self.offsets();
        let kin = self.kinetic_dense()?;
        let mut zs: Vec<String> = self
            .model
            .interactions
            .iter()
            .map(|i| i.z.clone())
            .chain(self.model.couplings.iter().map(|c| c.y.clone()))
            .collect();
        zs.sort();
        zs.dedup();
        let mut rng = StdRng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for z in &zs {
            let mut iz = DMatrix::zeros(total, total);
            for xe in self.model.lattice.elements() {
                for ye in self.model.lattice.elements() {
                    let b = self.component_block(z, &xe.id, &ye.id)?;
                    iz.view_mut((off[&xe.id], off[&ye.id]), (b.nrows(), b.ncols()))
                        .copy_from(&b);
                }
            }
            for _ in 0..20 {
                let u = DVector::from_fn(total, |_, _| rng.gen_range(-1.0..1.0));
                let num = (&iz * &u).norm();
                let ku = &kin * &u;
                let den = (ku.norm_squared() + a * a * u.norm_squared()).sqrt();
                worst = worst.max(num / den);
            }
        }
        Ok(worst)
    }
}
