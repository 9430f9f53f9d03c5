//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (run with `--nocapture` to see them).

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;

use slat_core::config::{validate_model, ModelConfig};
use slat_core::euclid::{
    assemble, CoordSubspace, Coupling, GridSpec, Interaction, KineticScheme, Model, Potential,
    Theta,
};
use slat_core::fingroup::{
    assemble_c, generation_check, run_identity_suite, span_eq, span_txy, FinAbGroup, OperatorSpan,
    Subgroup, SubgroupBinding, SuiteBudget,
};
use slat_core::semilattice::Semilattice;
use slat_core::spectral;
use slat_core::threshold::{
    m_sup, n_eval, rho_hat_from_thresholds, rho_hat_recursive, threshold_union, ClosedPointSet,
    ExtReal,
};

fn well(depth: f64, dims: usize) -> Potential {
    Potential::GaussianWell {
        depth,
        width: 1.0,
        center: vec![0.0; dims],
    }
}

fn axes_spaces() -> BTreeMap<String, CoordSubspace> {
    let mut m = BTreeMap::new();
    m.insert("O".to_string(), CoordSubspace::new([]));
    m.insert("X1".to_string(), CoordSubspace::new([1]));
    m.insert("X2".to_string(), CoordSubspace::new([2]));
    m.insert("X12".to_string(), CoordSubspace::new([1, 2]));
    m
}

/// The acceptance axes model: a 1D gaussian well on each axis factor.
fn wells_axes_model(n: usize, l: f64, d1: f64, d2: f64) -> Model {
    Model::new(
        axes_spaces(),
        GridSpec::new(n, l).unwrap(),
        KineticScheme::Fd,
        vec![
            Interaction {
                x: "X1".into(),
                y: "X1".into(),
                z: "O".into(),
                potential: well(d1, 1),
            },
            Interaction {
                x: "X12".into(),
                y: "X12".into(),
                z: "X2".into(),
                potential: well(d1, 1),
            },
            Interaction {
                x: "X2".into(),
                y: "X2".into(),
                z: "O".into(),
                potential: well(d2, 1),
            },
            Interaction {
                x: "X12".into(),
                y: "X12".into(),
                z: "X1".into(),
                potential: well(d2, 1),
            },
        ],
        vec![],
    )
    .unwrap()
}

fn ground_energy_1d(n: usize, l: f64, depth: f64) -> f64 {
    let g = GridSpec::new(n, l).unwrap();
    let mut h = slat_core::euclid::lap_1d_fd(n, g.spacing());
    for (i, &p) in g.points().iter().enumerate() {
        h[(i, i)] += depth * (-p * p / 2.0).exp();
    }
    spectral::eig_sym(&h).unwrap().0[0]
}

#[test]
fn acceptance_1_algebra_identity_suite() {
    let t0 = Instant::now();
    let exhaustive = SuiteBudget {
        max_pairs: usize::MAX,
        max_triples: usize::MAX,
        max_ef_per_triple: 4,
        max_morita_pairs: usize::MAX,
    };
    let subsampled = SuiteBudget {
        max_pairs: 10,
        max_triples: 16,
        max_ef_per_triple: 2,
        max_morita_pairs: 4,
    };
    let groups: Vec<(Vec<u32>, SuiteBudget)> = vec![
        (vec![2], exhaustive),
        (vec![3], exhaustive),
        (vec![4], exhaustive),
        (vec![6], exhaustive),
        (vec![2, 2], exhaustive),
        (vec![2, 4], exhaustive),
        (vec![3, 3], exhaustive),
        (vec![6, 6], subsampled),
    ];
    let mut total = 0usize;
    for (orders, budget) in &groups {
        let group = FinAbGroup::new(orders.clone()).unwrap();
        let checks = run_identity_suite(&group, budget).unwrap();
        for c in &checks {
            assert!(
                c.pass,
                "group {orders:?}: {} [{}] failed with ranks {:?}",
                c.name, c.context, c.diag
            );
        }
        total += checks.len();
    }
    println!(
        "ACCEPTANCE 1 PASS: algebra identity suite, {total} checks over {} groups, exact rank agreement, {:.1?}",
        groups.len(),
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 120, "criterion 1 runtime budget");
}

fn two_level_binding() -> SubgroupBinding {
    let g = FinAbGroup::new(vec![4]).unwrap();
    let full = Subgroup::full(g.clone());
    let two = Subgroup::generated(g.clone(), &[2]).unwrap();
    let o = Subgroup::trivial(g);
    let lattice = Semilattice::from_meet_fn(
        vec![
            ("O".to_string(), 1),
            ("X".to_string(), 4),
            ("Y".to_string(), 2),
        ],
        // sorted ids O, X, Y form the chain O < Y < X
        |i, j| match (i, j) {
            (0, _) | (_, 0) => 0,
            (2, _) | (_, 2) => 2,
            _ => 1,
        },
    )
    .unwrap();
    let mut groups = BTreeMap::new();
    groups.insert("O".to_string(), o);
    groups.insert("X".to_string(), full);
    groups.insert("Y".to_string(), two);
    SubgroupBinding::new(lattice, groups).unwrap()
}

#[test]
fn acceptance_2_pauli_fierz_generation() {
    let t0 = Instant::now();
    let binding = two_level_binding();
    let check = generation_check(&binding).unwrap();
    assert!(
        check.pass,
        "generated algebra differs from the assembled span: {:?}",
        check.diag
    );
    assert_eq!(check.diag.rank_left, check.diag.rank_right);
    println!(
        "ACCEPTANCE 2 PASS: Pauli-Fierz resolvents generate the assembled span, rank {} = {}, {:.1?}",
        check.diag.rank_left,
        check.diag.rank_right,
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 30, "criterion 2 runtime budget");
}

fn lattice_shapes() -> Vec<Semilattice> {
    let chain3 = Semilattice::from_meet_fn(
        vec![
            ("A0".to_string(), 0),
            ("A1".to_string(), 1),
            ("A2".to_string(), 2),
        ],
        |i, j| i.min(j),
    )
    .unwrap();
    let axes = Semilattice::from_meet_fn(
        vec![
            ("O".to_string(), 0),
            ("X1".to_string(), 1),
            ("X2".to_string(), 1),
            ("X12".to_string(), 2),
        ],
        |i, j| {
            if i == j {
                i
            } else if i == 3 {
                j
            } else if j == 3 {
                i
            } else {
                0
            }
        },
    )
    .unwrap();
    let cube: Semilattice = {
        let ids: Vec<(String, usize)> = (0..8u32)
            .map(|m| (format!("S{m}"), m.count_ones() as usize))
            .collect();
        Semilattice::from_meet_fn(ids, |i, j| i & j).unwrap()
    };
    vec![chain3, axes, cube]
}

#[test]
fn acceptance_3_threshold_identity_and_lemma() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let shapes = lattice_shapes();
    let mut maps_tested = 0usize;
    for shape in &shapes {
        for _ in 0..7 {
            // random eigenvalue sets per element above the least; the top
            // carries {0} plus optional extras
            let mut ev = BTreeMap::new();
            for x in shape.strictly_positive() {
                let k = rng.gen_range(0..=4);
                let mut pts: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..1.0)).collect();
                pts.push(0.0);
                ev.insert(x.id.clone(), ClosedPointSet::from_unsorted(pts));
            }
            let tau = threshold_union(shape, &ev).unwrap();
            for i in 0..1000 {
                let lam = -4.0 + 6.0 * i as f64 / 999.0;
                let rec = rho_hat_recursive(shape, &ev, lam).unwrap();
                let dir = rho_hat_from_thresholds(&tau, lam);
                match (rec, dir) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                        assert!((a - b).abs() <= 1e-12, "lambda {lam}: {a} vs {b}")
                    }
                    (a, b) => assert_eq!(a, b, "lambda {lam}"),
                }
            }
            maps_tested += 1;
        }
    }
    assert!(maps_tested >= 20);

    // the N-function lemma against grid brute force
    for _ in 0..500 {
        let na = rng.gen_range(0..=10);
        let nb = rng.gen_range(0..=10);
        let a = ClosedPointSet::from_unsorted((0..na).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let b = ClosedPointSet::from_unsorted((0..nb).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let lam = rng.gen_range(-6.0..6.0);
        let lo = a.min().into_iter().chain(b.min()).fold(lam, f64::min) - 1.0;
        let mut brute = ExtReal::NegInf;
        let mut mus: Vec<f64> = (0..10_000)
            .map(|i| lo + (lam - lo) * i as f64 / 9_999.0)
            .collect();
        mus.extend_from_slice(a.points());
        mus.extend_from_slice(b.points());
        for mu in mus {
            if mu > lam {
                continue;
            }
            let m = if b.contains(mu) {
                ExtReal::Finite(mu)
            } else {
                n_eval(&a, mu)
            };
            brute = brute.max(m);
        }
        let got = m_sup(&a, &b, lam);
        match (got, brute) {
            (ExtReal::Finite(x), ExtReal::Finite(y)) => assert!((x - y).abs() < 1e-9),
            (x, y) => assert_eq!(x, y),
        }
        assert_eq!(got, n_eval(&a.union(&b), lam));
    }
    println!(
        "ACCEPTANCE 3 PASS: rho-hat recursion = direct formula on {maps_tested} random models x 1000 lambdas (exact); 500 N-lemma instances vs grid brute force, {:.1?}",
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 10, "criterion 3 runtime budget");
}

#[test]
fn acceptance_4_tensor_factorization() {
    let t0 = Instant::now();
    // a family of non-relativistic test models, including field couplings
    let mut models: Vec<Model> = vec![wells_axes_model(21, 6.0, -2.0, -1.0)];
    {
        // coupled axes model: a creation coupling into the vacuum and one
        // between comparable blocks
        let g = GridSpec::new(9, 4.0).unwrap();
        let theta: Vec<f64> = g.points().iter().map(|x| 0.4 * (-x * x).exp()).collect();
        models.push(
            Model::new(
                axes_spaces(),
                g,
                KineticScheme::Fd,
                vec![Interaction {
                    x: "X1".into(),
                    y: "X1".into(),
                    z: "O".into(),
                    potential: well(-1.5, 1),
                }],
                vec![
                    Coupling {
                        x: "X1".into(),
                        y: "O".into(),
                        theta: Theta::Samples(theta.clone()),
                    },
                    Coupling {
                        x: "X12".into(),
                        y: "X2".into(),
                        theta: Theta::Samples(theta),
                    },
                ],
            )
            .unwrap(),
        );
    }
    {
        // three-axis cube model with wells on two axes
        let mut spaces = BTreeMap::new();
        for m in 0..8u32 {
            let axes: Vec<usize> = (0..3).filter(|b| m >> b & 1 == 1).map(|b| b + 1).collect();
            spaces.insert(format!("S{m}"), CoordSubspace::new(axes));
        }
        models.push(
            Model::new(
                spaces,
                GridSpec::new(7, 4.0).unwrap(),
                KineticScheme::Fd,
                vec![
                    Interaction {
                        x: "S1".into(),
                        y: "S1".into(),
                        z: "S0".into(),
                        potential: well(-2.0, 1),
                    },
                    Interaction {
                        x: "S3".into(),
                        y: "S3".into(),
                        z: "S2".into(),
                        potential: well(-2.0, 1),
                    },
                    Interaction {
                        x: "S5".into(),
                        y: "S5".into(),
                        z: "S4".into(),
                        potential: well(-2.0, 1),
                    },
                    Interaction {
                        x: "S7".into(),
                        y: "S7".into(),
                        z: "S6".into(),
                        potential: well(-2.0, 1),
                    },
                ],
                vec![],
            )
            .unwrap(),
        );
    }
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for model in models {
        let asm = assemble(model).unwrap();
        for e in asm.model.lattice.elements() {
            let r = asm.nr_residual(&e.id).unwrap();
            assert!(r < 1e-12, "residual {r:.3e} at {}", e.id);
            worst = worst.max(r);
            count += 1;
        }
    }
    println!(
        "ACCEPTANCE 4 PASS: tensor factorization residual < 1e-12 on {count} projections (worst {worst:.2e}), {:.1?}",
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 60, "criterion 4 runtime budget");
}

#[test]
fn acceptance_5_hvz_axes_model() {
    let t0 = Instant::now();
    let (n, l, d1, d2) = (201usize, 12.0, -2.0, -1.0);
    let asm = assemble(wells_axes_model(n, l, d1, d2)).unwrap();

    // grid-refinement gate first: lowest-3 drift under n -> 2n-1
    let gate = spectral::refinement_gate(&asm).unwrap();
    assert!(
        gate.max_rel_drift < 0.01,
        "refinement gate failed: {:.3e}",
        gate.max_rel_drift
    );
    let eps = spectral::default_eps(&gate);

    // tau against the independent 1D ground energies
    let hvz = spectral::hvz_tau(&asm).unwrap();
    let e1 = ground_energy_1d(n, l, d1);
    let e2 = ground_energy_1d(n, l, d2);
    let expected = e1.min(e2);
    let rel = (hvz.tau - expected).abs() / expected.abs();
    assert!(rel < 0.02, "tau {} vs 1D oracle {expected}", hvz.tau);

    // bound states below tau - eps: isolated, count stable under refinement
    let coarse = spectral::bound_states(&asm, eps).unwrap();
    assert!(!coarse.is_empty(), "expected bound states below tau");
    assert!(coarse.iter().all(|&e| e < hvz.tau - eps));
    let fine_asm = assemble(asm.model.refined()).unwrap();
    let fine = spectral::bound_states(&fine_asm, eps).unwrap();
    assert_eq!(
        coarse.len(),
        fine.len(),
        "bound-state count changed under refinement"
    );
    println!(
        "ACCEPTANCE 5 PASS: tau = {:.6} vs 1D oracle {:.6} (rel {:.2e}), gate drift {:.2e}, {} bound states stable under refinement, {:.1?}",
        hvz.tau,
        expected,
        rel,
        gate.max_rel_drift,
        coarse.len(),
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 300, "criterion 5 runtime budget");
}

#[test]
fn acceptance_6_mourre_and_virial() {
    let t0 = Instant::now();
    // free 1D model at lambda = 1
    let mut spaces = BTreeMap::new();
    spaces.insert("O".to_string(), CoordSubspace::new([]));
    spaces.insert("X".to_string(), CoordSubspace::new([1]));
    let free = Model::new(
        spaces.clone(),
        GridSpec::new(201, 12.0).unwrap(),
        KineticScheme::Fd,
        vec![],
        vec![],
    )
    .unwrap();
    let asm = assemble(free).unwrap();
    let m = spectral::mourre_check(&asm, 1.0, 0.1, 1e-6).unwrap();
    let min_c = m.min_compressed.expect("window not empty");
    assert!(
        (min_c - 1.0).abs() <= 0.25,
        "compressed commutator bottom {min_c} not within 25% of rho-hat 1"
    );

    // virial residuals on a well model with genuine bound states
    let welled = Model::new(
        spaces,
        GridSpec::new(201, 12.0).unwrap(),
        KineticScheme::Fd,
        vec![Interaction {
            x: "X".into(),
            y: "X".into(),
            z: "O".into(),
            potential: well(-3.0, 1),
        }],
        vec![],
    )
    .unwrap();
    let wasm = assemble(welled).unwrap();
    let entries = spectral::virial_check(&wasm, 1e-6, 1e-6).unwrap();
    assert!(!entries.is_empty());
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for e in &entries {
        assert!(
            e.residual_rel < 1e-6,
            "virial relative residual {}",
            e.residual_rel
        );
        worst_rel = worst_rel.max(e.residual_rel);
        worst_abs = worst_abs.max(e.residual_abs);
    }
    // rounding-level absolute identity for exact eigenvectors
    assert!(
        worst_abs < 1e-10 * wasm.dense().unwrap().norm() * wasm.w_dense().unwrap().norm(),
        "virial absolute residual {worst_abs:.3e}"
    );
    println!(
        "ACCEPTANCE 6 PASS: Mourre bottom {min_c:.4} within 25% of 1; virial residuals rel {:.2e} abs {:.2e} over {} bound states, {:.1?}",
        worst_rel,
        worst_abs,
        entries.len(),
        t0.elapsed()
    );
    assert!(t0.elapsed().as_secs() < 60, "criterion 6 runtime budget");
}

#[test]
fn acceptance_7_negative_controls() {
    let t0 = Instant::now();
    // corrupted span fixture must fail the identity checker
    let g = FinAbGroup::new(vec![4]).unwrap();
    let full = Subgroup::full(g.clone());
    let two = Subgroup::generated(g.clone(), &[2]).unwrap();
    let t = span_txy(&full, &two).unwrap();
    let mut corrupted = t.basis().to_vec();
    let mut bad = DMatrix::<Complex64>::zeros(4, 2);
    bad[(0, 0)] = Complex64::ONE;
    corrupted.push(bad);
    let corrupted = OperatorSpan::from_basis(4, 2, corrupted);
    let (ok, diag) = span_eq(&t, &corrupted).unwrap();
    assert!(!ok, "corrupted span slipped through");
    assert!(diag.rank_union > diag.rank_left);

    // and the assembled-algebra checker flags a corrupted component too
    let binding = two_level_binding();
    let asm = assemble_c(&binding).unwrap();
    let block = &asm.blocks[&("X".to_string(), "Y".to_string())];
    let mut spoiled = block.basis().to_vec();
    spoiled.pop();
    let spoiled = OperatorSpan::from_basis(4, 2, spoiled);
    let (ok, _) = span_eq(block, &spoiled).unwrap();
    assert!(!ok);

    // config with z not below x n y is rejected at validation
    let cfg_json = serde_json::json!({
        "schema_version": 1,
        "ambient_dim": 2,
        "grid": {"n": 9, "half_length": 4.0},
        "subspaces": [
            {"id": "O", "axes": []},
            {"id": "X1", "axes": [1]},
            {"id": "X2", "axes": [2]},
            {"id": "X12", "axes": [1, 2]}
        ],
        "interactions": [
            {"x": "X1", "y": "X1", "z": "X2",
             "potential": {"kind": "gaussian_well", "depth": -1.0, "width": 1.0, "center": [0.0]}}
        ]
    })
    .to_string();
    let cfg = ModelConfig::from_json(&cfg_json).unwrap();
    let diags = validate_model(&cfg).unwrap_err();
    assert!(diags.iter().any(|d| d.path == "interactions[0].z"));
    println!(
        "ACCEPTANCE 7 PASS: corrupted spans flagged by the rank triple; inadmissible config rejected at validation, {:.1?}",
        t0.elapsed()
    );
}
