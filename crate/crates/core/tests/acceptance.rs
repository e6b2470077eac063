//! End-to-end acceptance checks on the two reference configurations:
//! R1 = 1D, 32 cells, 4 blocks, 2 layers; R2 = 2D, 16 cells, 2×2 blocks, 1 layer.
//!
//! Each criterion prints one line straight to stderr, so the verdicts show up
//! even when the harness captures output.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schwarz_lab::cli::{run_experiment, ExperimentConfig};
use schwarz_lab::decomposition::OverlapDecomposition;
use schwarz_lab::diagnostics::*;
use schwarz_lab::fem::StructuredGrid;
use schwarz_lab::linalg::{KrylovMethod, SpdFactor};
use schwarz_lab::operators::{build_form, LocalSolverBundle, MethodKind};
use schwarz_lab::spaces::{
    oblique_project, operator_norm, orth_project, planar_sweep, subspace_angles, wielandt_gap, InnerProduct, IpLabel,
    Subspace,
};

const SWEEP: [f64; 4] = [0.5, 0.1, 0.02, 0.004];

struct Config {
    name: &'static str,
    bundle: LocalSolverBundle,
    model: DenseModel,
    constants: ConstantsReport,
}

fn config(name: &'static str, dim: usize, cells: usize, blocks: usize, layers: usize) -> Config {
    let grid = StructuredGrid::new(dim, cells).unwrap();
    let od = OverlapDecomposition::new(&grid, blocks, layers).unwrap();
    let bundle = LocalSolverBundle::new(&grid, &od).unwrap();
    let model = DenseModel::new(&bundle).unwrap();
    let constants = measure_with_model(&bundle, &model, &SWEEP).unwrap();
    Config {
        name,
        bundle,
        model,
        constants,
    }
}

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn all(parts: Vec<Verdict>) -> Verdict {
    let ok = parts.iter().all(|p| p.is_ok());
    let text: Vec<String> = parts.into_iter().map(|p| p.unwrap_or_else(|e| format!("FAILED {e}"))).collect();
    check(ok, text.join("; "))
}

fn wiring(c: &Config) -> Verdict {
    let m = &c.model;
    let b_hat = c.bundle.b_form().gram();
    let rhs = m.restriction.transpose() * &b_hat * &m.selector;
    let transpose = c.bundle.solve_global_matrix(&rhs).unwrap();
    let diff = (&transpose - &m.e).amax();
    check(diff <= 1e-9, format!("{} max |A⁻¹RᵀB − ΣE| = {diff:.2e}", c.name))
}

fn lions(c: &Config) -> Verdict {
    let s = spectrum(MethodKind::As, &c.bundle).unwrap();
    let k = &c.constants;
    let (lo, hi) = (s.lambda_min.unwrap(), s.lambda_max.unwrap());
    let real = s.eigenvalues.iter().all(|z| z.im == 0.0 && z.re > 0.0);
    let ok = real
        && lo >= 1.0 / (k.c_e * k.c_e) - 1e-8
        && hi <= k.rho_mu + 1e-8
        && k.norm_e * k.norm_e <= k.rho_mu * (1.0 + 1e-8)
        && k.rho_mu <= k.nu as f64 + 1e-8;
    check(
        ok,
        format!(
            "{} λ_min {lo:.6} ≥ 1/C_E² {:.6}, λ_max {hi:.6} ≤ ρ {:.6}, ‖E‖² {:.6} ≤ ρ ≤ ν = {}",
            c.name,
            1.0 / (k.c_e * k.c_e),
            k.rho_mu,
            k.norm_e * k.norm_e,
            k.nu
        ),
    )
}

fn random_basis(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Subspace {
    Subspace::new(DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

fn random_ip(rng: &mut ChaCha8Rng, n: usize) -> InnerProduct {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    InnerProduct::new(m.transpose() * &m + DMatrix::identity(n, n), IpLabel::B).unwrap()
}

fn angle_identities() -> Verdict {
    let mut worst = [0.0_f64; 3];
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=20);
        let ip = if seed % 2 == 0 { InnerProduct::euclidean(n) } else { random_ip(&mut rng, n) };
        let p = rng.random_range(1..n);
        let x = random_basis(&mut rng, n, p);

        // a complement of X: sin θ(X, Y)·‖Q(X, Y)‖ = 1
        let y = random_basis(&mut rng, n, n - p);
        let q = oblique_project(&x, &y).unwrap();
        let sin = subspace_angles(&x, &y, &ip).unwrap().theta_min.sin();
        worst[0] = worst[0].max((sin * operator_norm(&q, &ip, &ip, None).unwrap() - 1.0).abs());

        let q_dim = rng.random_range(1..n);
        let y = random_basis(&mut rng, n, q_dim);
        let theta = subspace_angles(&x, &y, &ip).unwrap().theta_min;
        let big = subspace_angles(&x, &y.complement(&ip).unwrap(), &ip).unwrap().theta_max;
        worst[1] = worst[1].max((theta + big - FRAC_PI_2).abs());

        let pp = orth_project(&x, &ip).unwrap() * orth_project(&y, &ip).unwrap();
        worst[2] = worst[2].max((operator_norm(&pp, &ip, &ip, None).unwrap() - theta.cos()).abs());
    }
    check(
        worst.iter().all(|&w| w <= 1e-8),
        format!(
            "200 pairs, worst |sinθ‖Q‖−1| {:.1e}, |θ+Θ⊥−π/2| {:.1e}, |‖Π_XΠ_Y‖−cosθ| {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn projection_lemma(c: &Config) -> Verdict {
    let k = &c.constants;
    let inv = 1.0 / k.norm_q_e;
    let ok = k.q_e_idempotency <= 1e-10
        && (k.cos_theta_e_hat_et - inv).abs() <= 1e-8
        && inv >= 1.0 / (k.c_e * k.norm_e) - 1e-8;
    check(
        ok,
        format!(
            "{} |Q_E²−Q_E| {:.1e}, cosΘ {:.10} = 1/‖Q_E‖ {:.10} ≥ 1/(‖Ê‖‖E‖) {:.10}",
            c.name,
            k.q_e_idempotency,
            k.cos_theta_e_hat_et,
            inv,
            1.0 / (k.c_e * k.norm_e)
        ),
    )
}

fn right_inverse(c: &Config) -> Verdict {
    let m = &c.model;
    let ff = &m.f * &m.f_hat;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v = DVector::from_fn(m.dim_h(), |_, _| rng.random_range(-1.0..1.0));
        worst = worst.max(m.a.norm(&(&ff * &v - &v)) / m.a.norm(&v));
    }
    let norm_f = c.constants.norm_f;
    check(
        worst <= 1e-10 && norm_f <= 1.0 + 1e-8,
        format!("{} max ‖F(η∘v)−v‖_a/‖v‖_a {worst:.1e}, ‖F‖ {norm_f:.12}", c.name),
    )
}

fn r_constants(c: &Config) -> Verdict {
    let k = &c.constants;
    let sqrt_nu = (k.nu as f64).sqrt();
    let r0 = k.forms.iter().map(|f| (f.r0 - 1.0).abs()).fold(0.0, f64::max);
    let r1 = k.forms.iter().map(|f| f.r1).fold(0.0, f64::max);
    check(
        k.forms.len() == SWEEP.len() && r0 <= 1e-10 && r1 <= sqrt_nu + 1e-8,
        format!("{} max |r₀−1| {r0:.1e}, max r₁ {r1:.6} ≤ √ν {sqrt_nu:.6}", c.name),
    )
}

fn central(c: &Config) -> Verdict {
    let mut parts = Vec::new();
    for &eps in &SWEEP {
        let kappa = spectrum(MethodKind::FepsT(eps), &c.bundle).unwrap().kappa_aa;
        let bound = central_bound(&c.constants, eps);
        parts.push(check(kappa <= bound * (1.0 + 1e-8), format!("ε={eps}: {kappa:.4} ≤ {bound:.4}")));
    }
    let kappa = spectrum(MethodKind::FeT, &c.bundle).unwrap().kappa_aa;
    let bound = central_bound(&c.constants, 0.0);
    parts.push(check(kappa <= bound * (1.0 + 1e-8), format!("ε→0: {kappa:.4} ≤ {bound:.4}")));
    all(parts).map(|d| format!("{} {d}", c.name)).map_err(|d| format!("{} {d}", c.name))
}

fn positivity(c: &Config) -> Verdict {
    let eps = SWEEP.iter().copied().fold(f64::INFINITY, f64::min);
    let p = positivity_with_model(&c.bundle, &c.model, eps).unwrap();
    check(
        p.min_field_of_values >= -POSITIVITY_TOL,
        format!(
            "{} ε={eps}: min c_ε(Π_(G,b)Ru,Ru)/c_ε(Ru,Ru) {:.6e}; a-field of values of FE^(T,b) {:.6e}",
            c.name, p.min_field_of_values, p.min_field_of_values_limit
        ),
    )
}

fn wielandt(c: &Config) -> Verdict {
    let b = InnerProduct::new(c.bundle.b_form().gram(), IpLabel::B).unwrap();
    let cm = build_form(c.bundle.grid(), c.bundle.decomposition(), Some(0.1)).unwrap().gram();
    let ce = InnerProduct::new(cm, IpLabel::CEps).unwrap();
    let w = wielandt_gap(&b, &ce, 200, 11).unwrap();
    let mut parts = vec![check(
        w.worst_ratio <= w.bound + 1e-10,
        format!("{} (c_0.1, b): {:.6} ≤ {:.6}", c.name, w.worst_ratio, w.bound),
    )];

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut margin = f64::INFINITY;
    for i in 0..20 {
        let n = rng.random_range(2..=12);
        let (b, c) = (random_ip(&mut rng, n), random_ip(&mut rng, n));
        let w = wielandt_gap(&b, &c, 500, i).unwrap();
        margin = margin.min(w.bound + 1e-10 - w.worst_ratio);
    }
    parts.push(check(margin >= 0.0, format!("20 random pairs, min margin {margin:.2e}")));

    let (m, big_m) = (1.0, 4.0);
    let id = DMatrix::<f64>::identity(2, 2);
    let cm = DMatrix::from_diagonal(&DVector::from_vec(vec![m, big_m]));
    let e1 = DVector::from_vec(vec![1.0, 0.0]);
    let e2 = DVector::from_vec(vec![0.0, 1.0]);
    let (r, _) = planar_sweep(&SpdFactor::new(&id).unwrap(), &id, &cm, &e1, &e2);
    let bound = ((big_m - m) / (big_m + m)).powi(2);
    parts.push(check((r - bound).abs() <= 1e-8, format!("planar case {r:.12} vs {bound:.12}")));
    all(parts)
}

fn solvers(c: &Config) -> Verdict {
    let s = spectrum(MethodKind::As, &c.bundle).unwrap();
    let mut methods = MethodKind::BASE.to_vec();
    methods.extend(SWEEP.iter().map(|&e| MethodKind::FepsT(e)));
    let runs = solver_table(&c.bundle, &methods, 1e-10, 1000, s.kappa_spectral).unwrap();
    let worst = runs.iter().map(|r| r.row.error_a).fold(0.0, f64::max);
    let converged = runs.iter().all(|r| r.row.converged);
    let cg = runs.iter().find(|r| r.row.solver == KrylovMethod::Cg).unwrap();
    let bound = cg.row.iteration_bound.unwrap();
    check(
        converged && worst <= 1e-7 && cg.row.iterations <= bound,
        format!(
            "{} {} runs, worst a-error {worst:.1e}, AS-CG {} iterations ≤ {bound}",
            c.name,
            runs.len(),
            cg.row.iterations
        ),
    )
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for run in ["first", "second"] {
        let config = ExperimentConfig {
            dim: 1,
            cells_per_side: 32,
            blocks_per_side: 4,
            overlap_layers: 2,
            methods: ["AS", "FE_T", "EF_T", "RAS_CUT", "OBDD_CUT", "FEPS_T"].map(String::from).to_vec(),
            epsilon: SWEEP.to_vec(),
            tol: 1e-8,
            max_iter: 1000,
            seed: 42,
            dense_cap: 5000,
            output: tmp.path().join(run),
        };
        run_experiment(&config).unwrap();
        let read = |f: &str| std::fs::read(config.output.join(f)).unwrap();
        bodies.push((read("bounds.csv"), read("solver_table.csv")));
    }
    check(
        bodies[0] == bodies[1],
        format!("R1 twice: bounds.csv {} bytes, solver_table.csv {} bytes", bodies[0].0.len(), bodies[0].1.len()),
    )
}

#[test]
fn acceptance() {
    let r1 = config("R1", 1, 32, 4, 2);
    let r2 = config("R2", 2, 16, 2, 1);
    let both = |f: fn(&Config) -> Verdict| all(vec![f(&r1), f(&r2)]);
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("wiring identity", Box::new(|| both(wiring))),
        ("Lions bounds for AS", Box::new(|| both(lions))),
        ("angle identities", Box::new(angle_identities)),
        ("projection lemma", Box::new(|| projection_lemma(&r1))),
        ("right inverse of F", Box::new(|| both(right_inverse))),
        ("r-constants", Box::new(|| both(r_constants))),
        ("central bound", Box::new(|| both(central))),
        ("positivity", Box::new(|| positivity(&r1))),
        ("Wielandt inequality", Box::new(|| wielandt(&r1))),
        ("solver correctness", Box::new(|| both(solvers))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = run();
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        writeln!(err, "acceptance {:>2} {tag} {name}: {detail}", i + 1).unwrap();
        if verdict.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
