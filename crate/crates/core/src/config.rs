//! Declarative model configuration: JSON ingestion and validation with
//! machine-readable diagnostics (a path into the config plus a reason).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::euclid::{
    Assembled, CoordSubspace, Coupling, GridSpec, Interaction, KineticScheme, Model, Potential,
    Theta, MAX_DENSE_DIM,
};
use crate::fingroup::{FinAbGroup, Subgroup, SubgroupBinding};
use crate::semilattice::Semilattice;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest group order accepted by the algebra verifier.
pub const MAX_GROUP_ORDER: usize = 36;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Diagnostic {
    pub path: String,
    pub reason: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Diagnostic {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    pub half_length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceConfig {
    pub id: String,
    pub axes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemilatticeConfig {
    pub elements: Vec<ElementConfig>,
    /// meet[i][j] = id of elements[i] /\ elements[j]
    pub meet: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementConfig {
    pub id: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
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
    Tabulated {
        entries: Vec<Vec<f64>>,
    },
}

impl PotentialConfig {
    fn build(&self) -> Potential {
        match self.clone() {
            PotentialConfig::GaussianWell {
                depth,
                width,
                center,
            } => Potential::GaussianWell {
                depth,
                width,
                center,
            },
            PotentialConfig::CompactBump {
                height,
                radius,
                center,
            } => Potential::CompactBump {
                height,
                radius,
                center,
            },
            PotentialConfig::Tabulated { entries } => Potential::Tabulated { entries },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteractionConfig {
    pub x: String,
    pub y: String,
    pub z: String,
    pub potential: PotentialConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaConfig {
    Gaussian { amplitude: f64, width: f64 },
    Samples { values: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub x: String,
    pub y: String,
    pub theta: ThetaConfig,
}

/// A Euclidean model: grid, subspaces, interactions, couplings, and an
/// optional explicit semilattice cross-checked against the axis sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub ambient_dim: usize,
    pub grid: GridConfig,
    #[serde(default = "default_scheme")]
    pub scheme: KineticScheme,
    pub subspaces: Vec<SubspaceConfig>,
    #[serde(default)]
    pub semilattice: Option<SemilatticeConfig>,
    #[serde(default)]
    pub interactions: Vec<InteractionConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
}

fn default_scheme() -> KineticScheme {
    KineticScheme::Fd
}

impl ModelConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }
}

fn check_explicit_semilattice(
    cfg: &SemilatticeConfig,
    derived: &Semilattice,
    diags: &mut Vec<Diagnostic>,
) {
    let elements: Vec<(String, usize)> =
        cfg.elements.iter().map(|e| (e.id.clone(), e.dim)).collect();
    let lat = match Semilattice::new(elements, cfg.meet.clone()) {
        Ok(l) => l,
        Err(e) => {
            diags.push(Diagnostic::new("semilattice.meet", e.to_string()));
            return;
        }
    };
    if lat.len() != derived.len() || lat.elements().iter().any(|e| !derived.contains(&e.id)) {
        diags.push(Diagnostic::new(
            "semilattice.elements",
            "element set differs from the subspace list",
        ));
        return;
    }
    for a in lat.elements() {
        let derived_dim = derived.element(&a.id).map(|e| e.dim).unwrap_or(usize::MAX);
        if derived_dim != a.dim {
            diags.push(Diagnostic::new(
                format!("semilattice.elements[{}].dim", a.id),
                "dimension disagrees with the subspace axis count",
            ));
        }
        for b in lat.elements() {
            let m1 = lat.meet(&a.id, &b.id).map(|e| e.id.clone()).ok();
            let m2 = derived.meet(&a.id, &b.id).map(|e| e.id.clone()).ok();
            if m1 != m2 {
                diags.push(Diagnostic::new(
                    format!("semilattice.meet[{}][{}]", a.id, b.id),
                    "table entry disagrees with the subspace intersection",
                ));
            }
        }
    }
}

/// Validates a model config; returns the assembled model or the full list
/// of diagnostics.
pub fn validate_model(cfg: &ModelConfig) -> std::result::Result<Assembled, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        diags.push(Diagnostic::new(
            "schema_version",
            format!("expected {SCHEMA_VERSION}"),
        ));
    }
    if cfg.ambient_dim == 0 {
        diags.push(Diagnostic::new("ambient_dim", "must be positive"));
    }
    if cfg.grid.n < 9 || cfg.grid.n.is_multiple_of(2) {
        diags.push(Diagnostic::new("grid.n", "must be odd and at least 9"));
    }
    let positive_box = cfg.grid.half_length.is_finite() && cfg.grid.half_length > 0.0;
    if !positive_box {
        diags.push(Diagnostic::new("grid.half_length", "must be positive"));
    }

    let mut spaces: BTreeMap<String, CoordSubspace> = BTreeMap::new();
    for (i, s) in cfg.subspaces.iter().enumerate() {
        if spaces.contains_key(&s.id) {
            diags.push(Diagnostic::new(
                format!("subspaces[{i}].id"),
                "duplicate id",
            ));
            continue;
        }
        let mut sorted = s.axes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s.axes.len() {
            diags.push(Diagnostic::new(
                format!("subspaces[{i}].axes"),
                "duplicate axis",
            ));
        }
        if s.axes.iter().any(|&a| a == 0 || a > cfg.ambient_dim) {
            diags.push(Diagnostic::new(
                format!("subspaces[{i}].axes"),
                format!("axes must lie in 1..={}", cfg.ambient_dim),
            ));
            continue;
        }
        spaces.insert(s.id.clone(), CoordSubspace::new(s.axes.iter().copied()));
    }
    if !spaces.values().any(|s| s.dim() == 0) {
        diags.push(Diagnostic::new(
            "subspaces",
            "the vacuum subspace (empty axis set) must be listed",
        ));
    }
    let keys: Vec<&String> = spaces.keys().collect();
    for (i, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(i + 1) {
            let m = spaces[*a].meet(&spaces[*b]);
            if !spaces.values().any(|s| *s == m) {
                diags.push(Diagnostic::new(
                    "subspaces",
                    format!("family not closed under intersection: `{a}` and `{b}`"),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let grid = match GridSpec::new(cfg.grid.n, cfg.grid.half_length) {
        Ok(g) => g,
        Err(e) => {
            diags.push(Diagnostic::new("grid", e.to_string()));
            return Err(diags);
        }
    };

    let interactions: Vec<Interaction> = cfg
        .interactions
        .iter()
        .map(|i| Interaction {
            x: i.x.clone(),
            y: i.y.clone(),
            z: i.z.clone(),
            potential: i.potential.build(),
        })
        .collect();
    let couplings: Vec<Coupling> = cfg
        .couplings
        .iter()
        .map(|c| Coupling {
            x: c.x.clone(),
            y: c.y.clone(),
            theta: match c.theta.clone() {
                ThetaConfig::Gaussian { amplitude, width } => Theta::Gaussian { amplitude, width },
                ThetaConfig::Samples { values } => Theta::Samples(values),
            },
        })
        .collect();

    // per-item admissibility, reported with paths
    for (k, int) in interactions.iter().enumerate() {
        for (field, id) in [("x", &int.x), ("y", &int.y), ("z", &int.z)] {
            if !spaces.contains_key(id) {
                diags.push(Diagnostic::new(
                    format!("interactions[{k}].{field}"),
                    format!("unknown subspace `{id}`"),
                ));
            }
        }
        if spaces.contains_key(&int.x) && spaces.contains_key(&int.y) && spaces.contains_key(&int.z)
        {
            let admissible = spaces[&int.z].is_subspace_of(&spaces[&int.x].meet(&spaces[&int.y]));
            if !admissible {
                diags.push(Diagnostic::new(
                    format!("interactions[{k}].z"),
                    "z is not contained in the meet of x and y",
                ));
            }
        }
    }
    for (k, c) in couplings.iter().enumerate() {
        for (field, id) in [("x", &c.x), ("y", &c.y)] {
            if !spaces.contains_key(id) {
                diags.push(Diagnostic::new(
                    format!("couplings[{k}].{field}"),
                    format!("unknown subspace `{id}`"),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    if let Some(slc) = &cfg.semilattice {
        // build the derived lattice first for the cross-check
        match Model::new(spaces.clone(), grid, cfg.scheme, vec![], vec![]) {
            Ok(m) => check_explicit_semilattice(slc, &m.lattice, &mut diags),
            Err(e) => diags.push(Diagnostic::new("subspaces", e.to_string())),
        }
        if !diags.is_empty() {
            return Err(diags);
        }
    }

    let model = match Model::new(spaces, grid, cfg.scheme, interactions, couplings) {
        Ok(m) => m,
        Err(e) => {
            diags.push(Diagnostic::new("model", e.to_string()));
            return Err(diags);
        }
    };
    let asm = match crate::euclid::assemble(model) {
        Ok(a) => a,
        Err(e) => {
            diags.push(Diagnostic::new("model", e.to_string()));
            return Err(diags);
        }
    };
    match asm.dense_requirement() {
        Ok(req) => {
            if req > MAX_DENSE_DIM {
                diags.push(Diagnostic::new(
                    "model",
                    format!(
                        "a dense eigensolve of dimension {req} would be required (cap {MAX_DENSE_DIM})"
                    ),
                ));
            }
        }
        Err(e) => diags.push(Diagnostic::new("model", e.to_string())),
    }
    if diags.is_empty() {
        Ok(asm)
    } else {
        Err(diags)
    }
}

/// A finite-group model for the algebra verifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupConfig {
    pub schema_version: u32,
    pub cyclic_orders: Vec<u32>,
    pub subgroups: Vec<SubgroupSpec>,
    #[serde(default)]
    pub semilattice: Option<SemilatticeConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub id: String,
    /// generators as coordinate tuples
    pub generators: Vec<Vec<u32>>,
}

impl GroupConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }
}

pub fn validate_group(cfg: &GroupConfig) -> std::result::Result<SubgroupBinding, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        diags.push(Diagnostic::new(
            "schema_version",
            format!("expected {SCHEMA_VERSION}"),
        ));
    }
    let group = match FinAbGroup::new(cfg.cyclic_orders.clone()) {
        Ok(g) => g,
        Err(e) => {
            diags.push(Diagnostic::new("cyclic_orders", e.to_string()));
            return Err(diags);
        }
    };
    if group.order() > MAX_GROUP_ORDER {
        diags.push(Diagnostic::new(
            "cyclic_orders",
            format!(
                "group order {} exceeds the cap {MAX_GROUP_ORDER}",
                group.order()
            ),
        ));
        return Err(diags);
    }
    let mut bound: BTreeMap<String, Subgroup> = BTreeMap::new();
    for (k, spec) in cfg.subgroups.iter().enumerate() {
        if bound.contains_key(&spec.id) {
            diags.push(Diagnostic::new(
                format!("subgroups[{k}].id"),
                "duplicate id",
            ));
            continue;
        }
        let mut gens = Vec::new();
        let mut ok = true;
        for (gi, coords) in spec.generators.iter().enumerate() {
            if coords.len() != cfg.cyclic_orders.len() {
                diags.push(Diagnostic::new(
                    format!("subgroups[{k}].generators[{gi}]"),
                    "coordinate count must match cyclic_orders",
                ));
                ok = false;
                continue;
            }
            gens.push(group.index(coords));
        }
        if !ok {
            continue;
        }
        match Subgroup::generated(group.clone(), &gens) {
            Ok(s) => {
                bound.insert(spec.id.clone(), s);
            }
            Err(e) => diags.push(Diagnostic::new(format!("subgroups[{k}]"), e.to_string())),
        }
    }
    if !bound.values().any(|s| s.len() == 1) {
        diags.push(Diagnostic::new(
            "subgroups",
            "the trivial subgroup must be listed",
        ));
    }
    let ids: Vec<&String> = bound.keys().collect();
    for (i, a) in ids.iter().enumerate() {
        for b in ids.iter().skip(i + 1) {
            let inter = bound[*a].intersect(&bound[*b]).expect("same parent");
            if !bound.values().any(|s| s.members() == inter.members()) {
                diags.push(Diagnostic::new(
                    "subgroups",
                    format!("family not closed under intersection: `{a}` and `{b}`"),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let elements: Vec<(String, usize)> =
        bound.iter().map(|(id, s)| (id.clone(), s.len())).collect();
    let by_id: Vec<&Subgroup> = bound.values().collect();
    let lattice = match Semilattice::from_meet_fn(elements, |i, j| {
        let inter = by_id[i].intersect(by_id[j]).expect("same parent");
        by_id
            .iter()
            .position(|s| s.members() == inter.members())
            .expect("closed family")
    }) {
        Ok(l) => l,
        Err(e) => {
            diags.push(Diagnostic::new("subgroups", e.to_string()));
            return Err(diags);
        }
    };
    if let Some(slc) = &cfg.semilattice {
        check_explicit_semilattice(slc, &lattice, &mut diags);
        if !diags.is_empty() {
            return Err(diags);
        }
    }
    match SubgroupBinding::new(lattice, bound) {
        Ok(b) => Ok(b),
        Err(e) => {
            diags.push(Diagnostic::new("subgroups", e.to_string()));
            Err(diags)
        }
    }
}
