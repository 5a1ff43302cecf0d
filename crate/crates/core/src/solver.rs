//! Implicit steppers.
//!
//! [`Tjabem`] advances `Z = X^{1-rho}` with a drift-implicit Euler step on a
//! jump-adapted mesh, applies the jump map at jump nodes and maps back with
//! `X = Z^{1/(1-rho)}`. [`BackwardEuler`] is the regular-grid drift-implicit
//! baseline in the original coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::JumpAdaptedMesh;
use crate::model::{compute_q, compute_q_original, JumpCoefficient, ModelParams, Regime, TransformedDrift};
use crate::transform::{jump_map_z, lamperti_forward, lamperti_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once `|G(z) - rhs| <= residual_tol * max(1, |rhs|)`.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Required upper bound on `Q * dt`; must lie in `(0, 1)`.
    pub step_safety: f64,
    /// Smallest admissible left bracket endpoint.
    pub bracket_lo_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            max_iter: 200,
            step_safety: 0.5,
            bracket_lo_floor: 1e-300,
        }
    }
}

impl SolverConfig {
    /// `Q * dt` above this value is allowed but reported as a warning.
    pub const STEP_SAFETY_WARN: f64 = 0.25;

    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::SolverConfig("residual_tol must be positive"));
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return Err(Error::SolverConfig("step_safety must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::SolverConfig("max_iter must be positive"));
        }
        if !(self.bracket_lo_floor > 0.0) {
            return Err(Error::SolverConfig("bracket_lo_floor must be positive"));
        }
        Ok(())
    }

    pub fn check_step(&self, q: f64, dt: f64) -> Result<()> {
        let q_dt = q * dt;
        if q_dt > self.step_safety {
            Err(Error::StepGuard {
                q_dt,
                safety: self.step_safety,
            })
        } else {
            Ok(())
        }
    }
}

/// Solves `map(z) = rhs` for `z > 0` where `map` is strictly increasing,
/// tends to `-inf` at `0+` and `+inf` at infinity. `map` returns the value and
/// the derivative. Newton steps are kept inside a sign-change bracket and
/// replaced by (geometric) bisection whenever they leave it or stall.
pub fn solve_increasing<G>(map: G, rhs: f64, hint: f64, cfg: &SolverConfig) -> Result<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    let target = cfg.residual_tol * rhs.abs().max(1.0);
    let resid = |z: f64| {
        let (g, dg) = map(z);
        (g - rhs, dg)
    };
    let hint = if hint > 0.0 && hint.is_finite() { hint } else { 1.0 };
    let floor = cfg.bracket_lo_floor;

    let mut lo = (hint * 1e-3).max(floor);
    let mut hi = hint * 1e3;
    let mut r_lo = resid(lo).0;
    let mut expansions = 0;
    while !(r_lo < 0.0) {
        if r_lo.is_nan() || lo <= floor || expansions > cfg.max_iter {
            return Err(Error::Bracket { rhs, endpoint: lo });
        }
        hi = lo;
        lo = (lo * 1e-3).max(floor);
        r_lo = resid(lo).0;
        expansions += 1;
    }
    let mut r_hi = resid(hi).0;
    while !(r_hi > 0.0) {
        if r_hi.is_nan() || !hi.is_finite() || expansions > cfg.max_iter {
            return Err(Error::Bracket { rhs, endpoint: hi });
        }
        lo = hi;
        hi *= 1e3;
        r_hi = resid(hi).0;
        expansions += 1;
    }

    let mut z = hint.clamp(lo, hi);
    let mut last_abs = f64::INFINITY;
    let mut residual = f64::NAN;
    for _ in 0..cfg.max_iter {
        let (r, dr) = resid(z);
        residual = r;
        if r.abs() <= target {
            // one polishing Newton step, kept only if it helps
            let polished = z - r / dr;
            if polished > 0.0 && polished.is_finite() && resid(polished).0.abs() < r.abs() {
                return Ok(polished);
            }
            return Ok(z);
        }
        if r < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let newton = z - r / dr;
        let stalled = r.abs() > 0.5 * last_abs;
        last_abs = r.abs();
        let next = if newton > lo && newton < hi && newton.is_finite() && !stalled {
            newton
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if next == z {
            break;
        }
        z = next;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        rhs,
        residual,
    })
}

/// Unique `z > 0` with `z - dt F(z) = rhs`.
pub fn implicit_step_z(params: &ModelParams, q: f64, rhs: f64, dt: f64, cfg: &SolverConfig) -> Result<f64> {
    cfg.check_step(q, dt)?;
    let hint = if rhs > 0.0 { rhs } else { 1.0 };
    implicit_step_with(&TransformedDrift::new(params), rhs, dt, hint, cfg)
}

#[inline]
fn implicit_step_with(drift: &TransformedDrift, rhs: f64, dt: f64, hint: f64, cfg: &SolverConfig) -> Result<f64> {
    solve_increasing(
        |z| {
            let (f, fp) = drift.eval_with_prime(z);
            (z - dt * f, 1.0 - dt * fp)
        },
        rhs,
        hint,
        cfg,
    )
}

/// Left limits and post-jump values of `Z` at every mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryZ {
    pub mesh: JumpAdaptedMesh,
    pub z_pre: Vec<f64>,
    pub z_post: Vec<f64>,
    pub rho: f64,
}

impl TrajectoryZ {
    /// `X` at each node (post-jump).
    pub fn x(&self) -> Vec<f64> {
        let e = 1.0 / (1.0 - self.rho);
        self.z_post.iter().map(|z| z.powf(e)).collect()
    }

    /// Trajectory dump with columns `t,is_jump,z_pre,z_post,x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,is_jump,z_pre,z_post,x\n");
        let x = self.x();
        for (k, xk) in x.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.mesh.nodes()[k],
                self.mesh.is_jump()[k],
                self.z_pre[k],
                self.z_post[k],
                xk
            ));
        }
        out
    }
}

/// Jump-adapted backward Euler in Lamperti coordinates.
#[derive(Debug, Clone)]
pub struct Tjabem<'a> {
    params: &'a ModelParams,
    h: &'a JumpCoefficient,
    drift: TransformedDrift,
    q: f64,
    cfg: SolverConfig,
    z0: f64,
    noise: f64,
}

impl<'a> Tjabem<'a> {
    pub fn new(params: &'a ModelParams, h: &'a JumpCoefficient, cfg: SolverConfig) -> Result<Self> {
        let q = compute_q(params)?;
        Self::with_q(params, h, q, cfg)
    }

    pub fn with_q(params: &'a ModelParams, h: &'a JumpCoefficient, q: f64, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            params,
            h,
            drift: TransformedDrift::new(params),
            q,
            cfg,
            z0: lamperti_forward(params.rho, params.x0)?,
            noise: (1.0 - params.rho) * params.alpha3,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Steps along `mesh`, calling `visit(k, z_pre, z_post)` for every node
    /// `k >= 1`. Returns the final post-jump `Z`.
    pub fn run<V>(&self, mesh: &JumpAdaptedMesh, dw: &[f64], mut visit: V) -> Result<f64>
    where
        V: FnMut(usize, f64, f64),
    {
        if dw.len() != mesh.intervals() {
            return Err(Error::Input(format!(
                "{} increments for {} mesh intervals",
                dw.len(),
                mesh.intervals()
            )));
        }
        self.cfg.check_step(self.q, mesh.base_dt())?;
        let rho = self.params.rho;
        let mut z = self.z0;
        for (k, (&dt, &dwk)) in mesh.dt().iter().zip(dw).enumerate() {
            let rhs = z + self.noise * dwk;
            let z_pre = implicit_step_with(&self.drift, rhs, dt, z, &self.cfg)?;
            let z_post = if mesh.is_jump()[k + 1] {
                jump_map_z(rho, self.h, z_pre)?
            } else {
                z_pre
            };
            visit(k + 1, z_pre, z_post);
            z = z_post;
        }
        Ok(z)
    }

    pub fn path(&self, mesh: &JumpAdaptedMesh, dw: &[f64]) -> Result<(TrajectoryZ, f64)> {
        let n = mesh.nodes().len();
        let mut z_pre = vec![self.z0; n];
        let mut z_post = vec![self.z0; n];
        let z_t = self.run(mesh, dw, |k, a, b| {
            z_pre[k] = a;
            z_post[k] = b;
        })?;
        let x_t = lamperti_inverse(self.params.rho, z_t)?;
        Ok((
            TrajectoryZ {
                mesh: mesh.clone(),
                z_pre,
                z_post,
                rho: self.params.rho,
            },
            x_t,
        ))
    }

    /// `X_T` only, without storing the trajectory.
    pub fn terminal(&self, mesh: &JumpAdaptedMesh, dw: &[f64]) -> Result<f64> {
        let z_t = self.run(mesh, dw, |_, _, _| {})?;
        lamperti_inverse(self.params.rho, z_t)
    }
}

pub fn tjabem_path(
    params: &ModelParams,
    h: &JumpCoefficient,
    mesh: &JumpAdaptedMesh,
    increments: &[f64],
    q: f64,
    cfg: &SolverConfig,
) -> Result<(TrajectoryZ, f64)> {
    Tjabem::with_q(params, h, q, *cfg)?.path(mesh, increments)
}

/// Drift-implicit backward Euler on the uniform grid, jumps applied explicitly
/// with the per-interval Poisson count.
#[derive(Debug, Clone)]
pub struct BackwardEuler<'a> {
    params: &'a ModelParams,
    h: &'a JumpCoefficient,
    q: f64,
    cfg: SolverConfig,
}

impl<'a> BackwardEuler<'a> {
    pub fn new(params: &'a ModelParams, h: &'a JumpCoefficient, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            params,
            h,
            q: compute_q_original(params),
            cfg,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn terminal(&self, dw: &[f64], dn: &[u32]) -> Result<f64> {
        let m = dw.len();
        if m == 0 || dn.len() != m {
            return Err(Error::Input(format!("{} increments and {} jump counts", dw.len(), dn.len())));
        }
        let p = self.params;
        let dt = p.horizon / m as f64;
        self.cfg.check_step(self.q, dt)?;
        let mut x = p.x0;
        for (&dwk, &dnk) in dw.iter().zip(dn) {
            let mut rhs = x + p.diffusion_unchecked(x) * dwk;
            if dnk > 0 {
                rhs += self.h.eval(x) * dnk as f64;
            }
            x = solve_increasing(
                |y| {
                    let y_gm1 = y.powf(p.gamma - 1.0);
                    let f = p.alpha_m1 / y - p.alpha0 + p.alpha1 * y - p.alpha2 * y_gm1 * y;
                    let fp = -p.alpha_m1 / (y * y) + p.alpha1 - p.alpha2 * p.gamma * y_gm1;
                    (y - dt * f, 1.0 - dt * fp)
                },
                rhs,
                x,
                &self.cfg,
            )?;
        }
        Ok(x)
    }
}

pub fn bem_path(
    params: &ModelParams,
    h: &JumpCoefficient,
    m: usize,
    dw: &[f64],
    dn: &[u32],
    cfg: &SolverConfig,
) -> Result<f64> {
    if dw.len() != m {
        return Err(Error::Input(format!("expected {m} increments, got {}", dw.len())));
    }
    BackwardEuler::new(params, h, *cfg)?.terminal(dw, dn)
}

/// Advisory step-size conditions for the inverse-moment bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeDiagnostics {
    pub q_dt: f64,
    pub m: f64,
    /// `dt^{(m-1)/(2m) + eps} <= a_2^{1/m} / (2 (rho-1) a_3^{(m+1)/m})`
    pub noise_condition_ok: bool,
    /// `dt^eps < min((a_2 (rho-1) / (2 (rho-1)(a_{-1}+a_1) + 2Q))^{1/(m+1)}, 1 / (2 + 4 (rho-1)(a_{-1}+a_1) + 4Q))`
    pub drift_condition_ok: bool,
    pub epsilon: f64,
}

/// Upper end of the admissible `epsilon` interval for moment order `p >= 1`.
pub fn epsilon_upper(params: &ModelParams, p: f64) -> f64 {
    let rho = params.rho;
    let a = (rho - 1.0) / (8.0 * rho * p);
    let b = 2.0 * (params.gamma + 1.0 - 2.0 * rho) / (3.0 * rho * (params.gamma - 1.0));
    a.min(b)
}

pub fn step_size_diagnostics(params: &ModelParams, q: f64, base_dt: f64, epsilon: f64, p: f64) -> Result<StepSizeDiagnostics> {
    if params.regime() != Regime::Supercritical {
        return Err(Error::InvalidRegime {
            gamma: params.gamma,
            rho: params.rho,
        });
    }
    if !(p >= 1.0) {
        return Err(Error::Input(format!("moment order p = {p} must be >= 1")));
    }
    let upper = epsilon_upper(params, p);
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(Error::Epsilon { epsilon, upper });
    }
    let m = params.m_exponent();
    let r1 = params.rho - 1.0;
    let lhs_noise = base_dt.powf((m - 1.0) / (2.0 * m) + epsilon);
    let rhs_noise = params.alpha2.powf(1.0 / m) / (2.0 * r1 * params.alpha3.powf((m + 1.0) / m));
    let s = params.alpha_m1 + params.alpha1;
    let first = (params.alpha2 * r1 / (2.0 * r1 * s + 2.0 * q)).powf(1.0 / (m + 1.0));
    let second = 1.0 / (2.0 + 4.0 * r1 * s + 4.0 * q);
    Ok(StepSizeDiagnostics {
        q_dt: q * base_dt,
        m,
        noise_condition_ok: lhs_noise <= rhs_noise,
        drift_condition_ok: base_dt.powf(epsilon) < first.min(second),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn constructed_root() {
        let p = ModelParams::set_one();
        for dt in [2f64.powi(-5), 2f64.powi(-9), 0.3] {
            let rhs = 1.0 - dt * p.transformed_drift(1.0).unwrap();
            let z = implicit_step_z(&p, 0.0, rhs, dt, &cfg()).unwrap();
            assert!((z - 1.0).abs() < 1e-11, "dt {dt}: {z}");
        }
    }

    #[test]
    fn vanishing_step() {
        let z = implicit_step_z(&ModelParams::set_one(), 0.0, 2.0, 1e-14, &cfg()).unwrap();
        assert!((z - 2.0).abs() < 1e-10);
    }

    #[test]
    fn set_one_regression() {
        // Frozen by bisection on [1e-8, 10] to 1e-12 (see tests/oracles.rs).
        let z = implicit_step_z(&ModelParams::set_one(), 0.0, 1.0, 2f64.powi(-5), &cfg()).unwrap();
        assert!(z > 1.0);
        assert!((z - SET_ONE_STEP_ROOT).abs() < 1e-11, "{z}");
    }

    pub(crate) const SET_ONE_STEP_ROOT: f64 = 1.037_001_791_890_881;

    #[test]
    fn step_guard() {
        let err = implicit_step_z(&ModelParams::set_one(), 10.0, 1.0, 0.1, &cfg()).unwrap_err();
        assert!(matches!(err, Error::StepGuard { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { step_safety: 1.0, ..cfg() }.validate().is_err());
        assert!(SolverConfig { residual_tol: 0.0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn solve_increasing_on_cubic() {
        let z = solve_increasing(|z| (z * z * z + z, 3.0 * z * z + 1.0), 10.0, 0.1, &cfg()).unwrap();
        assert!((z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_step_unrolled() {
        let p = ModelParams::set_one();
        let mesh = build_mesh(1, 1.0, &[]).unwrap();
        let (_, x_t) = tjabem_path(&p, &JumpCoefficient::Zero, &mesh, &[0.0], 0.0, &cfg()).unwrap();
        let z = implicit_step_z(&p, 0.0, 1.0, 1.0, &cfg()).unwrap();
        assert!((x_t - lamperti_inverse(1.5, z).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn left_limit_bookkeeping() {
        let p = ModelParams::set_one();
        let h = JumpCoefficient::Linear(-0.5);
        let mesh = build_mesh(8, 1.0, &[0.3, 0.61]).unwrap();
        let dw: Vec<f64> = (0..mesh.intervals()).map(|k| 0.1 * ((k as f64).sin())).collect();
        let (traj, x_t) = tjabem_path(&p, &h, &mesh, &dw, 0.0, &cfg()).unwrap();
        for k in 0..traj.z_pre.len() {
            if mesh.is_jump()[k] {
                assert_eq!(traj.z_post[k], jump_map_z(1.5, &h, traj.z_pre[k]).unwrap());
            } else {
                assert_eq!(traj.z_post[k], traj.z_pre[k]);
            }
        }
        assert_eq!(x_t, lamperti_inverse(1.5, *traj.z_post.last().unwrap()).unwrap());
        assert_eq!(traj.to_csv().lines().count(), mesh.nodes().len() + 1);
    }

    #[test]
    fn increment_length_mismatch() {
        let mesh = build_mesh(4, 1.0, &[]).unwrap();
        assert!(tjabem_path(&ModelParams::set_one(), &JumpCoefficient::Zero, &mesh, &[0.0; 3], 0.0, &cfg()).is_err());
    }

    #[test]
    fn bem_single_step() {
        let p = ModelParams::set_one();
        let x = bem_path(&p, &JumpCoefficient::Zero, 1, &[0.0], &[0], &cfg()).unwrap();
        // x - f(x) = 1
        assert!((x - p.drift(x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bem_q_is_zero_for_presets() {
        let h = JumpCoefficient::Zero;
        assert_eq!(BackwardEuler::new(&ModelParams::set_one(), &h, cfg()).unwrap().q(), 0.0);
        assert_eq!(BackwardEuler::new(&ModelParams::set_two(), &h, cfg()).unwrap().q(), 0.0);
    }

    #[test]
    fn diagnostics_set_one() {
        let p = ModelParams::set_one();
        let d = step_size_diagnostics(&p, 0.0, 2f64.powi(-5), 0.01, 1.0).unwrap();
        assert_eq!(d.m, 3.0);
        // 2^{-5 (1/3 + 0.01)} ~ 0.304 <= 5^{1/3} ~ 1.710
        assert!(d.noise_condition_ok);
        // 2^{-0.05} ~ 0.966 is not below min(0.919, 1/9)
        assert!(!d.drift_condition_ok);
        assert!(step_size_diagnostics(&p, 0.0, 0.01, 0.5, 1.0).is_err());
        assert!(step_size_diagnostics(&ModelParams { gamma: 2.0, ..p }, 0.0, 0.01, 0.01, 1.0).is_err());
    }

    #[test]
    fn diagnostics_monotone_in_step() {
        for p in [ModelParams::set_one(), ModelParams::set_two()] {
            let eps = 0.9 * epsilon_upper(&p, 1.0);
            let mut seen = (false, false);
            for k in 0..=40 {
                let d = step_size_diagnostics(&p, 0.0, 2f64.powi(-k), eps, 1.0).unwrap();
                assert!(d.noise_condition_ok || !seen.0, "noise condition lost at 2^-{k}");
                assert!(d.drift_condition_ok || !seen.1, "drift condition lost at 2^-{k}");
                seen = (d.noise_condition_ok, d.drift_condition_ok);
            }
        }
    }

    #[test]
    fn diagnostics_hold_for_small_steps() {
        // With a_{-1}, a_0, a_1 small and rho = 2 the admissible epsilon is large
        // enough for the drift condition to hold at 2^-20. For set I it cannot:
        // it needs dt^eps < 1/9 while eps < 1/24.
        let p = ModelParams {
            alpha_m1: 0.02,
            alpha0: 0.02,
            alpha1: 0.02,
            alpha2: 5.0,
            alpha3: 1.0,
            gamma: 10.0,
            rho: 2.0,
            ..ModelParams::set_one()
        };
        let q = compute_q(&p).unwrap();
        let eps = 0.95 * epsilon_upper(&p, 1.0);
        let d = step_size_diagnostics(&p, q, 2f64.powi(-20), eps, 1.0).unwrap();
        assert!(d.noise_condition_ok && d.drift_condition_ok, "{d:?} with Q = {q}");

        let one = ModelParams::set_one();
        let d = step_size_diagnostics(&one, 0.0, 2f64.powi(-20), 0.99 * epsilon_upper(&one, 1.0), 1.0).unwrap();
        assert!(d.noise_condition_ok && !d.drift_condition_ok);
    }
}
