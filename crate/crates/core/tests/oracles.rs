//! Independent oracles: the drift formulas are re-derived from the original
//! coefficients, implicit steps are re-solved by plain bisection, and both
//! schemes are replayed by straight-line code that shares nothing with the
//! library except the random inputs.

use jumpsde::model::QSearch;
use jumpsde::{
    compute_q, compute_q_original, generate_bundle, implicit_step_z, BackwardEuler, JumpCoefficient, ModelParams,
    SolverConfig, Tjabem,
};

fn critical() -> ModelParams {
    ModelParams {
        gamma: 2.0,
        ..ModelParams::set_one()
    }
}

fn probe_sets() -> Vec<ModelParams> {
    vec![ModelParams::set_one(), ModelParams::set_two(), critical()]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `F` from Ito's formula applied to `z = x^{1-rho}`.
fn chain_rule_f(p: &ModelParams, x: f64) -> f64 {
    let f = p.alpha_m1 / x - p.alpha0 + p.alpha1 * x - p.alpha2 * x.powf(p.gamma);
    let g = p.alpha3 * x.powf(p.rho);
    (1.0 - p.rho) * x.powf(-p.rho) * f + 0.5 * (1.0 - p.rho) * (-p.rho) * x.powf(-p.rho - 1.0) * g * g
}

/// Root of `z - dt F(z) = rhs` by geometric then arithmetic bisection.
fn bisect_step(p: &ModelParams, rhs: f64, dt: f64) -> f64 {
    let g = |z: f64| z - dt * p.transformed_drift(z).unwrap() - rhs;
    let (mut lo, mut hi) = (1e-50f64, 1e50f64);
    assert!(g(lo) < 0.0 && g(hi) > 0.0);
    for _ in 0..400 {
        let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn transformed_drift_matches_chain_rule() {
    for p in probe_sets() {
        for k in -40..=40 {
            let x = 10f64.powf(k as f64 / 10.0);
            let z = x.powf(1.0 - p.rho);
            let lib = p.transformed_drift(z).unwrap();
            let oracle = chain_rule_f(&p, x);
            assert!(rel(lib, oracle) < 1e-9, "x = {x}: {lib} vs {oracle}");
        }
    }
}

#[test]
fn derivatives_match_central_differences() {
    for p in probe_sets() {
        for z in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let h = 1e-5 * z;
            let fd1 = (p.transformed_drift(z + h).unwrap() - p.transformed_drift(z - h).unwrap()) / (2.0 * h);
            let fd2 = (p.transformed_drift_prime(z + h).unwrap() - p.transformed_drift_prime(z - h).unwrap()) / (2.0 * h);
            assert!(rel(p.transformed_drift_prime(z).unwrap(), fd1) < 1e-5, "F' at {z}");
            assert!(rel(p.transformed_drift_second(z).unwrap(), fd2) < 1e-5, "F'' at {z}");

            let x = z;
            let fdx = (p.drift(x + h).unwrap() - p.drift(x - h).unwrap()) / (2.0 * h);
            assert!(rel(p.drift_prime(x).unwrap(), fdx) < 1e-5, "f' at {x}");
        }
    }
}

#[test]
fn one_sided_lipschitz_constants() {
    // sup F' from a 40-digit grid + Newton-on-F'' computation:
    // set I: -11.63436802061184903 at z = 1.0742715831
    // set II: -4.28477049646071704 at z = 1.2045556673
    // set I with a0 = 40: 178.97948434525731546 at z = 2.4511131763
    assert_eq!(compute_q(&ModelParams::set_one()).unwrap(), 0.0);
    assert_eq!(compute_q(&ModelParams::set_two()).unwrap(), 0.0);
    let hot = ModelParams {
        alpha0: 40.0,
        ..ModelParams::set_one()
    };
    let q = compute_q(&hot).unwrap();
    assert!(rel(q, 178.979_484_345_257_3) < 1e-9, "Q = {q}");

    let (_, sup) = jumpsde::model::maximize_log_grid(|z| ModelParams::set_one().transformed_drift_prime(z).unwrap(), &QSearch::default());
    assert!(rel(sup, -11.634_368_020_611_849) < 1e-9, "sup = {sup}");

    // original drift: sup f' = a1 - 2 sqrt(a_{-1} a2 gamma) < 0 for set I
    assert_eq!(compute_q_original(&ModelParams::set_one()), 0.0);
}

#[test]
fn q_bounds_f_prime_everywhere() {
    let hot = ModelParams {
        alpha0: 40.0,
        ..ModelParams::set_one()
    };
    for p in [ModelParams::set_one(), ModelParams::set_two(), critical(), hot] {
        let q = compute_q(&p).unwrap();
        for k in 0..=6000 {
            let z = 10f64.powf(-6.0 + 12.0 * k as f64 / 6000.0);
            let d = p.transformed_drift_prime(z).unwrap();
            assert!(d <= q + 1e-8 * q.abs().max(1.0), "F'({z}) = {d} > Q = {q}");
        }
    }
}

#[test]
fn implicit_step_matches_bisection() {
    let cfg = SolverConfig::default();
    for p in [ModelParams::set_one(), ModelParams::set_two()] {
        for rhs in [-10.0, -1.0, -1e-3, 0.0, 0.3, 1.0, 2.5, 10.0] {
            for e in 5..=12 {
                let dt = 2f64.powi(-e);
                let lib = implicit_step_z(&p, 0.0, rhs, dt, &cfg).unwrap();
                let oracle = bisect_step(&p, rhs, dt);
                assert!(rel(lib, oracle) < 1e-11, "rhs {rhs}, dt {dt}: {lib} vs {oracle}");
            }
        }
    }
    // regression value used by the solver's unit test
    let z = bisect_step(&ModelParams::set_one(), 1.0, 2f64.powi(-5));
    assert!((z - 1.037_001_791_890_881).abs() < 1e-12, "{z}");
}

/// Straight-line TJABEM on a given mesh.
fn tjabem_replica(p: &ModelParams, h: &JumpCoefficient, nodes_jump: &[bool], dt: &[f64], dw: &[f64]) -> f64 {
    let e = 1.0 - p.rho;
    let mut z = p.x0.powf(e);
    for k in 0..dt.len() {
        z = bisect_step(p, z + e * p.alpha3 * dw[k], dt[k]);
        if nodes_jump[k + 1] {
            let x = z.powf(1.0 / e);
            z = (x + h.eval(x)).powf(e);
        }
    }
    z.powf(1.0 / e)
}

/// Straight-line drift-implicit Euler in `X` on the uniform grid.
fn bem_replica(p: &ModelParams, h: &JumpCoefficient, dw: &[f64], dn: &[u32]) -> f64 {
    let dt = p.horizon / dw.len() as f64;
    let f = |x: f64| p.alpha_m1 / x - p.alpha0 + p.alpha1 * x - p.alpha2 * x.powf(p.gamma);
    let mut x = p.x0;
    for k in 0..dw.len() {
        let rhs = x + p.alpha3 * x.powf(p.rho) * dw[k] + h.eval(x) * dn[k] as f64;
        let g = |y: f64| y - dt * f(y) - rhs;
        let (mut lo, mut hi) = (1e-50f64, 1e50f64);
        for _ in 0..400 {
            let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = 0.5 * (lo + hi);
    }
    x
}

/// Set I, h = -0.5x, lambda = 1, seed 2024, path 0, M = 32.
const PINNED_TJABEM_X_T: f64 = 8.907_550_320_577_68e-1;
/// Same path on the uniform M = 64 grid with the backward Euler baseline.
const PINNED_BEM_X_T: f64 = 6.513_796_816_064_108e-1;

#[test]
fn tjabem_matches_straight_line_replica() {
    let p = ModelParams::set_one();
    let h = JumpCoefficient::Linear(-0.5);
    let tj = Tjabem::new(&p, &h, SolverConfig::default()).unwrap();
    for i in 0..40 {
        let b = generate_bundle(&p, 32, 2024, i).unwrap();
        let lib = tj.terminal(&b.fine_mesh, &b.dw_fine).unwrap();
        let oracle = tjabem_replica(&p, &h, b.fine_mesh.is_jump(), b.fine_mesh.dt(), &b.dw_fine);
        assert!(rel(lib, oracle) < 1e-10, "path {i}: {lib} vs {oracle}");
        if i == 0 {
            println!("tjabem path 0: {oracle:.17e}");
            assert!(rel(oracle, PINNED_TJABEM_X_T) < 1e-12, "pinned value drifted: {oracle:.17e}");
        }
    }
}

#[test]
fn bem_matches_straight_line_replica() {
    let p = ModelParams::set_one();
    let h = JumpCoefficient::Linear(-0.5);
    let bem = BackwardEuler::new(&p, &h, SolverConfig::default()).unwrap();
    for i in 0..40 {
        let b = generate_bundle(&p, 64, 2024, i).unwrap();
        let (dw, dn) = b.uniform_increments(64).unwrap();
        let lib = bem.terminal(&dw, &dn).unwrap();
        let oracle = bem_replica(&p, &h, &dw, &dn);
        assert!(rel(lib, oracle) < 1e-10, "path {i}: {lib} vs {oracle}");
        if i == 0 {
            println!("bem path 0: {oracle:.17e}");
            assert!(rel(oracle, PINNED_BEM_X_T) < 1e-12, "pinned value drifted: {oracle:.17e}");
        }
    }
}
