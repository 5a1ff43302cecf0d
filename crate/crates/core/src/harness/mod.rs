//! Monte Carlo experiments: strong-error ladders with order fits, positivity
//! counts and empirical moments.
//!
//! Paths are independent work items keyed by `(global_seed, path_index)`.
//! Per-path results are collected in index order and reduced sequentially,
//! so reports do not depend on the number of worker threads.

mod report;

pub use report::{convergence_csv, moments_csv, plot_csv, positivity_csv};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compute_q, validate_jump, validate_params, JumpCoefficient, JumpRequirement, ModelParams, ProbeGrid};
use crate::paths::generate_bundle;
use crate::solver::{BackwardEuler, SolverConfig, Tjabem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Tjabem,
    Bem,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Tjabem => "tjabem",
            Scheme::Bem => "bem",
        }
    }
}

/// How many paths to run, from which seed, on how many threads (`0` = all cores).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub n_paths: u64,
    pub global_seed: u64,
    pub parallelism: usize,
}

/// Evaluates `f` for every path index and returns the results in index order.
/// The first failing path (lowest index) aborts the run with replay data.
pub fn map_paths<T, F>(run: &RunSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = if run.parallelism == 1 {
        (0..run.n_paths).map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(run.parallelism)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
        pool.install(|| (0..run.n_paths).into_par_iter().map(&f).collect())
    };
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::PathFailed {
                seed: run.global_seed,
                path_index: i as u64,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(ln dt, ln error)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 2 {
        return Err(Error::Input("order fit needs at least two points".into()));
    }
    for &(dt, e) in points {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Input(format!("non-positive error {e} at dt = {dt}")));
        }
        if !(dt > 0.0) {
            return Err(Error::Input(format!("non-positive step {dt}")));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("order fit needs distinct step sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderPoint {
    pub m: usize,
    pub dt: f64,
    /// Mean of `|X_T^ref - X_T|`.
    pub error_l1: f64,
    pub stderr: f64,
    /// Root mean square of `X_T^ref - X_T`.
    pub error_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scheme: Scheme,
    pub points: Vec<LadderPoint>,
    pub fit: OrderFit,
    pub n_paths: u64,
    pub m_ref: usize,
    pub global_seed: u64,
    /// Adjacent ladder pairs in which the error grows with the step size.
    pub monotone_pairs: usize,
    /// Soft check: at most one adjacent pair breaks monotonicity.
    pub monotone_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ladder {
    /// Coarse-to-fine grid sizes; each must divide `m_ref` by a power of two.
    pub m_list: Vec<usize>,
    pub m_ref: usize,
}

impl Ladder {
    /// `M = 2^lo .. 2^hi` with reference `2^reference`.
    pub fn dyadic(lo: u32, hi: u32, reference: u32) -> Self {
        Self {
            m_list: (lo..=hi).map(|k| 1usize << k).collect(),
            m_ref: 1usize << reference,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m_list.is_empty() {
            return Err(Error::Input("empty ladder".into()));
        }
        if !self.m_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input("ladder must be strictly increasing in M".into()));
        }
        for &m in &self.m_list {
            if m == 0 || !self.m_ref.is_multiple_of(m) || !(self.m_ref / m).is_power_of_two() {
                return Err(Error::Input(format!("M = {m} is not a dyadic divisor of M_ref = {}", self.m_ref)));
            }
        }
        Ok(())
    }
}

/// Strong errors of each scheme against the fine-mesh TJABEM reference, all on
/// the same coupled paths.
pub fn strong_error_ladders(
    params: &ModelParams,
    h: &JumpCoefficient,
    schemes: &[Scheme],
    ladder: &Ladder,
    run: &RunSpec,
    cfg: &SolverConfig,
) -> Result<Vec<ConvergenceReport>> {
    validate_params(params)?;
    validate_jump(h, params, &ProbeGrid::default(), JumpRequirement::Convergence)?;
    ladder.validate()?;
    if run.n_paths < 2 {
        return Err(Error::Input("at least two paths are needed for standard errors".into()));
    }
    let q = compute_q(params)?;
    let tjabem = Tjabem::with_q(params, h, q, *cfg)?;
    let bem = BackwardEuler::new(params, h, *cfg)?;
    for &m in &ladder.m_list {
        cfg.check_step(q, params.horizon / m as f64)?;
        if schemes.contains(&Scheme::Bem) {
            cfg.check_step(bem.q(), params.horizon / m as f64)?;
        }
    }

    // errors[path][scheme][m]
    let per_path = map_paths(run, |i| {
        let bundle = generate_bundle(params, ladder.m_ref, run.global_seed, i)?;
        let x_ref = tjabem.terminal(&bundle.fine_mesh, &bundle.dw_fine)?;
        let mut out = Vec::with_capacity(schemes.len());
        for scheme in schemes {
            let mut errs = Vec::with_capacity(ladder.m_list.len());
            for &m in &ladder.m_list {
                let x = match scheme {
                    Scheme::Tjabem => {
                        let (mesh, dw) = bundle.coarsen(m)?;
                        tjabem.terminal(&mesh, &dw)?
                    }
                    Scheme::Bem => {
                        let (dw, dn) = bundle.uniform_increments(m)?;
                        bem.terminal(&dw, &dn)?
                    }
                };
                errs.push(x_ref - x);
            }
            out.push(errs);
        }
        Ok(out)
    })?;

    let mut reports = Vec::with_capacity(schemes.len());
    for (s, &scheme) in schemes.iter().enumerate() {
        let mut points = Vec::with_capacity(ladder.m_list.len());
        for (j, &m) in ladder.m_list.iter().enumerate() {
            let abs: Vec<f64> = per_path.iter().map(|p| p[s][j].abs()).collect();
            let (error_l1, stderr) = mean_and_stderr(&abs);
            let error_l2 = (abs.iter().map(|e| e * e).sum::<f64>() / abs.len() as f64).sqrt();
            points.push(LadderPoint {
                m,
                dt: params.horizon / m as f64,
                error_l1,
                stderr,
                error_l2,
            });
        }
        reports.push(build_report(scheme, points, run, ladder.m_ref)?);
    }
    Ok(reports)
}

pub fn strong_error_ladder(
    params: &ModelParams,
    h: &JumpCoefficient,
    scheme: Scheme,
    ladder: &Ladder,
    run: &RunSpec,
    cfg: &SolverConfig,
) -> Result<ConvergenceReport> {
    let mut v = strong_error_ladders(params, h, &[scheme], ladder, run, cfg)?;
    Ok(v.remove(0))
}

/// Wraps ladder points into a report with fitted order and the monotonicity flag.
pub fn build_report(scheme: Scheme, points: Vec<LadderPoint>, run: &RunSpec, m_ref: usize) -> Result<ConvergenceReport> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.dt, p.error_l1)).collect();
    let fit = fit_order(&pairs)?;
    // points run coarse to fine, so errors should decrease along the list
    let monotone_pairs = points.windows(2).filter(|w| w[0].error_l1 > w[1].error_l1).count();
    let total_pairs = points.len().saturating_sub(1);
    Ok(ConvergenceReport {
        scheme,
        points,
        fit,
        n_paths: run.n_paths,
        m_ref,
        global_seed: run.global_seed,
        monotone_pairs,
        monotone_ok: monotone_pairs + 1 >= total_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityCell {
    pub param_set: String,
    pub h_family: String,
    pub dt: f64,
    pub n_values: u64,
    pub n_nonpositive: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub cells: Vec<PositivityCell>,
    pub n_paths: u64,
    pub global_seed: u64,
}

impl PositivityReport {
    pub fn all_zero(&self) -> bool {
        self.cells.iter().all(|c| c.n_nonpositive == 0)
    }
}

/// Counts non-positive `X` values over every node of every TJABEM trajectory,
/// per (step size, jump coefficient, parameter set).
pub fn positivity_table(
    sets: &[(String, ModelParams)],
    families: &[JumpCoefficient],
    m_list: &[usize],
    lambda: f64,
    run: &RunSpec,
    cfg: &SolverConfig,
) -> Result<PositivityReport> {
    let mut cells = Vec::new();
    for &m in m_list {
        if m == 0 {
            return Err(Error::Input("M must be positive".into()));
        }
        for h in families {
            for (name, base) in sets {
                let params = base.with_lambda(lambda);
                validate_params(&params)?;
                validate_jump(h, &params, &ProbeGrid::default(), JumpRequirement::Positivity)?;
                let tjabem = Tjabem::new(&params, h, *cfg)?;
                let e = 1.0 / (1.0 - params.rho);
                let counts = map_paths(run, |i| {
                    let bundle = generate_bundle(&params, m, run.global_seed, i)?;
                    let mut bad = u64::from(!(params.x0 > 0.0));
                    let mut n = 1u64;
                    tjabem.run(&bundle.fine_mesh, &bundle.dw_fine, |_, z_pre, z_post| {
                        let x = z_post.powf(e);
                        n += 1;
                        if !(x > 0.0 && x.is_finite() && z_pre > 0.0 && z_post > 0.0) {
                            bad += 1;
                        }
                    })?;
                    Ok((n, bad))
                })?;
                let n_values: u64 = counts.iter().map(|c| c.0).sum();
                let n_nonpositive: u64 = counts.iter().map(|c| c.1).sum();
                cells.push(PositivityCell {
                    param_set: name.clone(),
                    h_family: h.to_string(),
                    dt: params.horizon / m as f64,
                    n_values,
                    n_nonpositive,
                    percent: 100.0 * n_nonpositive as f64 / n_values as f64,
                });
            }
        }
    }
    Ok(PositivityReport {
        cells,
        n_paths: run.n_paths,
        global_seed: run.global_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub p: f64,
    /// `E[max_k X_k^p]`
    pub sup_mean: f64,
    pub sup_stderr: f64,
    /// `E[X_T^p]`
    pub terminal_mean: f64,
    pub terminal_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    pub m: usize,
    pub n_paths: u64,
    pub global_seed: u64,
}

/// Sample moments of the TJABEM solution; negative `p` gives inverse moments.
pub fn moment_probe(
    params: &ModelParams,
    h: &JumpCoefficient,
    m: usize,
    p_list: &[f64],
    run: &RunSpec,
    cfg: &SolverConfig,
) -> Result<MomentTable> {
    let regime = validate_params(params)?;
    for &p in p_list {
        regime.check_moment(p)?;
    }
    validate_jump(h, params, &ProbeGrid::default(), JumpRequirement::Positivity)?;
    let tjabem = Tjabem::new(params, h, *cfg)?;
    let e = 1.0 / (1.0 - params.rho);
    // (min X, max X, X_T) per path
    let extremes = map_paths(run, |i| {
        let bundle = generate_bundle(params, m, run.global_seed, i)?;
        let (mut lo, mut hi) = (params.x0, params.x0);
        let z_t = tjabem.run(&bundle.fine_mesh, &bundle.dw_fine, |_, _, z| {
            let x = z.powf(e);
            lo = lo.min(x);
            hi = hi.max(x);
        })?;
        Ok((lo, hi, z_t.powf(e)))
    })?;

    let rows = p_list
        .iter()
        .map(|&p| {
            let pow = |x: f64| if p == 0.0 { 1.0 } else { x.powf(p) };
            let sup: Vec<f64> = extremes
                .iter()
                .map(|&(lo, hi, _)| if p >= 0.0 { pow(hi) } else { pow(lo) })
                .collect();
            let term: Vec<f64> = extremes.iter().map(|&(_, _, xt)| pow(xt)).collect();
            let (sup_mean, sup_stderr) = mean_and_stderr(&sup);
            let (terminal_mean, terminal_stderr) = mean_and_stderr(&term);
            MomentRow {
                p,
                sup_mean,
                sup_stderr,
                terminal_mean,
                terminal_stderr,
            }
        })
        .collect();
    Ok(MomentTable {
        rows,
        m,
        n_paths: run.n_paths,
        global_seed: run.global_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(n: u64) -> RunSpec {
        RunSpec {
            n_paths: n,
            global_seed: 17,
            parallelism: 2,
        }
    }

    #[test]
    fn exact_power_laws() {
        let one = fit_order(&[(1.0, 1.0), (0.5, 0.5)]).unwrap();
        assert!((one.slope - 1.0).abs() < 1e-14);
        let half = fit_order(&[(1.0, 1.0), (0.5, 0.5f64.sqrt())]).unwrap();
        assert!((half.slope - 0.5).abs() < 1e-14);
        let pts: Vec<(f64, f64)> = (5..10).map(|k| 2f64.powi(-k)).map(|dt| (dt, 3.0 * dt)).collect();
        let fit = fit_order(&pts).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_order(&[(1.0, 1.0)]).is_err());
        assert!(fit_order(&[(1.0, 1.0), (0.5, 0.0)]).is_err());
        assert!(fit_order(&[(1.0, 1.0), (0.5, -1.0)]).is_err());
    }

    #[test]
    fn noisy_ladder_slope() {
        // multiplicative noise in [0.95, 1.05] moves the slope by at most
        // ln(1.05/0.95)/ln(16) ~ 0.036 on a 5-point dyadic ladder
        let noise = [1.05, 0.95, 1.05, 0.95, 1.05];
        for order in [0.5, 1.0, 1.5] {
            let pts: Vec<(f64, f64)> = (0..5)
                .map(|k| {
                    let dt = 2f64.powi(-(5 + k));
                    (dt, 0.7 * dt.powf(order) * noise[k as usize])
                })
                .collect();
            let fit = fit_order(&pts).unwrap();
            assert!((fit.slope - order).abs() < 0.1, "order {order}: {}", fit.slope);
        }
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ladder_validation() {
        assert!(Ladder::dyadic(5, 9, 12).validate().is_ok());
        assert!(Ladder { m_list: vec![64, 32], m_ref: 256 }.validate().is_err());
        assert!(Ladder { m_list: vec![48], m_ref: 256 }.validate().is_err());
    }

    #[test]
    fn zeroth_moment_is_one() {
        let t = moment_probe(&ModelParams::set_one(), &JumpCoefficient::Linear(-0.5), 16, &[0.0, 2.0, -2.0], &run(50), &SolverConfig::default()).unwrap();
        assert_eq!(t.rows[0].sup_mean, 1.0);
        assert_eq!(t.rows[0].terminal_mean, 1.0);
        assert!(t.rows[1].sup_mean.is_finite() && t.rows[2].sup_mean.is_finite());
        // max_k X^2 >= X_T^2 path by path
        assert!(t.rows[1].sup_mean >= t.rows[1].terminal_mean);
    }

    #[test]
    fn critical_regime_rejects_large_p() {
        let p = ModelParams {
            gamma: 2.0,
            ..ModelParams::set_one()
        };
        // cap = 5
        let err = moment_probe(&p, &JumpCoefficient::Zero, 8, &[6.0], &run(4), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InadmissibleMoment { .. }));
    }

    #[test]
    fn small_ladder_runs_and_is_thread_independent() {
        let p = ModelParams::set_one();
        let h = JumpCoefficient::Linear(-0.5);
        let ladder = Ladder::dyadic(2, 4, 7);
        let a = strong_error_ladders(&p, &h, &[Scheme::Tjabem, Scheme::Bem], &ladder, &run(40), &SolverConfig::default()).unwrap();
        let b = strong_error_ladders(
            &p,
            &h,
            &[Scheme::Tjabem, Scheme::Bem],
            &ladder,
            &RunSpec {
                parallelism: 1,
                ..run(40)
            },
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a[0].points.iter().all(|pt| pt.error_l1 > 0.0));
    }

    #[test]
    fn positivity_zero_intensity() {
        let sets = vec![("set1".to_string(), ModelParams::set_one())];
        let r = positivity_table(&sets, &[JumpCoefficient::Zero], &[32], 0.0, &run(20), &SolverConfig::default()).unwrap();
        assert!(r.all_zero());
        assert_eq!(r.cells[0].n_values, 20 * 33);
    }

    #[test]
    fn failed_path_reports_replay_info() {
        let r = run(3);
        let err = map_paths(&r, |i| if i == 1 { Err(Error::Input("boom".into())) } else { Ok(i) }).unwrap_err();
        assert!(matches!(err, Error::PathFailed { seed: 17, path_index: 1, .. }));
    }
}
