//! Model parameters, drift/diffusion coefficients in the original and the
//! Lamperti-transformed coordinates, and parameter validation.
//!
//! The original model is
//!
//! ```text
//! dX = (a_{-1} X^{-1} - a_0 + a_1 X - a_2 X^gamma) dt + a_3 X^rho dW + h(X-) dN
//! ```
//!
//! and `Z = X^{1-rho}` satisfies an SDE with additive noise `(1-rho) a_3 dW`
//! and drift [`ModelParams::transformed_drift`].

mod jump;

pub use jump::{JumpCoefficient, JumpConstants, JumpRequirement, ProbeGrid, validate_jump, validate_jump_sampled};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether `gamma == 2 rho - 1`.
const CRITICAL_REL_TOL: f64 = 1e-12;

/// Probe domain and resolution for the one-sided Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSearch {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Golden-section refinement stops once the bracket is this small relative to its centre.
    pub rel_tol: f64,
}

impl Default for QSearch {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 1e6,
            points: 2048,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha_m1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Poisson intensity (jumps per unit time).
    pub lambda: f64,
    pub x0: f64,
    /// Time horizon `T`.
    #[serde(alias = "T", alias = "t")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `gamma > 2 rho - 1`
    Supercritical,
    /// `gamma == 2 rho - 1`
    Critical,
    /// `gamma < 2 rho - 1`
    Invalid,
}

/// Outcome of [`validate_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeCheck {
    pub regime: Regime,
    /// `a_2 / a_3^2 - rho + 3/2`, only set in the critical regime.
    pub critical_moment_cap: Option<f64>,
}

impl RegimeCheck {
    /// Checks that the moment order `p` may be used for moment statements.
    pub fn check_moment(&self, p: f64) -> Result<()> {
        match self.critical_moment_cap {
            Some(cap) if !(p < cap) => Err(Error::InadmissibleMoment { p, cap }),
            _ if !p.is_finite() => Err(Error::InadmissibleMoment {
                p,
                cap: f64::INFINITY,
            }),
            _ => Ok(()),
        }
    }
}

fn check_positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

impl ModelParams {
    /// Parameter set I: `a = (2, 1, 1.5, 5, 1)`, `gamma = 3`, `rho = 1.5`, `x0 = 1`, `T = 1`, `lambda = 1`.
    pub fn set_one() -> Self {
        Self {
            alpha_m1: 2.0,
            alpha0: 1.0,
            alpha1: 1.5,
            alpha2: 5.0,
            alpha3: 1.0,
            gamma: 3.0,
            rho: 1.5,
            lambda: 1.0,
            x0: 1.0,
            horizon: 1.0,
        }
    }

    /// Parameter set II: `a = (1, 2, 1.5, 3, 1)`, `gamma = 3.5`, `rho = 1.5`, `x0 = 1`, `T = 1`, `lambda = 1`.
    pub fn set_two() -> Self {
        Self {
            alpha_m1: 1.0,
            alpha0: 2.0,
            alpha1: 1.5,
            alpha2: 3.0,
            alpha3: 1.0,
            gamma: 3.5,
            rho: 1.5,
            lambda: 1.0,
            x0: 1.0,
            horizon: 1.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn regime(&self) -> Regime {
        let edge = 2.0 * self.rho - 1.0;
        if (self.gamma - edge).abs() <= CRITICAL_REL_TOL * edge.abs().max(1.0) {
            Regime::Critical
        } else if self.gamma > edge {
            Regime::Supercritical
        } else {
            Regime::Invalid
        }
    }

    /// `m = (gamma - rho) / (rho - 1)`, the exponent of the dominant inverse term of `F`.
    pub fn m_exponent(&self) -> f64 {
        (self.gamma - self.rho) / (self.rho - 1.0)
    }

    /// `f(x) = a_{-1}/x - a_0 + a_1 x - a_2 x^gamma`
    pub fn drift(&self, x: f64) -> Result<f64> {
        check_positive("drift_f", x)?;
        Ok(self.drift_unchecked(x))
    }

    #[inline]
    pub(crate) fn drift_unchecked(&self, x: f64) -> f64 {
        self.alpha_m1 / x - self.alpha0 + self.alpha1 * x - self.alpha2 * x.powf(self.gamma)
    }

    /// `f'(x) = -a_{-1}/x^2 + a_1 - a_2 gamma x^{gamma-1}`
    pub fn drift_prime(&self, x: f64) -> Result<f64> {
        check_positive("drift_f_prime", x)?;
        Ok(self.drift_prime_unchecked(x))
    }

    #[inline]
    pub(crate) fn drift_prime_unchecked(&self, x: f64) -> f64 {
        -self.alpha_m1 / (x * x) + self.alpha1 - self.alpha2 * self.gamma * x.powf(self.gamma - 1.0)
    }

    /// `g(x) = a_3 x^rho`
    pub fn diffusion(&self, x: f64) -> Result<f64> {
        check_positive("diffusion_g", x)?;
        Ok(self.diffusion_unchecked(x))
    }

    #[inline]
    pub(crate) fn diffusion_unchecked(&self, x: f64) -> f64 {
        self.alpha3 * x.powf(self.rho)
    }

    /// Drift `F` of the transformed process `Z = X^{1-rho}`.
    pub fn transformed_drift(&self, z: f64) -> Result<f64> {
        check_positive("transformed_drift_F", z)?;
        let r1 = self.rho - 1.0;
        let inner = -self.alpha_m1 * z.powf((self.rho + 1.0) / r1)
            + self.alpha0 * z.powf(self.rho / r1)
            - self.alpha1 * z
            + self.alpha2 * z.powf(-(self.gamma - self.rho) / r1)
            + 0.5 * self.rho * self.alpha3 * self.alpha3 / z;
        Ok(r1 * inner)
    }

    /// First derivative of [`transformed_drift`](Self::transformed_drift).
    pub fn transformed_drift_prime(&self, z: f64) -> Result<f64> {
        check_positive("transformed_drift_Fprime", z)?;
        Ok(self.transformed_drift_prime_unchecked(z))
    }

    #[inline]
    pub(crate) fn transformed_drift_prime_unchecked(&self, z: f64) -> f64 {
        let r1 = self.rho - 1.0;
        -self.alpha_m1 * (self.rho + 1.0) * z.powf(2.0 / r1) + self.alpha0 * self.rho * z.powf(1.0 / r1)
            - self.alpha1 * r1
            - self.alpha2 * (self.gamma - self.rho) * z.powf(-(self.gamma - 1.0) / r1)
            - 0.5 * r1 * self.rho * self.alpha3 * self.alpha3 / (z * z)
    }

    /// Second derivative of [`transformed_drift`](Self::transformed_drift).
    pub fn transformed_drift_second(&self, z: f64) -> Result<f64> {
        check_positive("transformed_drift_Fsecond", z)?;
        let r1 = self.rho - 1.0;
        Ok(-(2.0 * self.alpha_m1 * (self.rho + 1.0) / r1) * z.powf((3.0 - self.rho) / r1)
            + (self.alpha0 * self.rho / r1) * z.powf((2.0 - self.rho) / r1)
            + (self.alpha2 * (self.gamma - self.rho) * (self.gamma - 1.0) / r1)
                * z.powf(-(self.gamma + self.rho - 2.0) / r1)
            + r1 * self.rho * self.alpha3 * self.alpha3 * z.powi(-3))
    }
}

/// `F` and `F'` sharing their power evaluations; used inside the implicit solver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TransformedDrift {
    e_am1: f64,
    e_a0: f64,
    e_a2: f64,
    c_am1: f64,
    c_a0: f64,
    c_a1: f64,
    c_a2: f64,
    c_a3: f64,
    d_am1: f64,
    d_a0: f64,
    d_a2: f64,
    d_a1: f64,
    d_a3: f64,
}

impl TransformedDrift {
    pub(crate) fn new(p: &ModelParams) -> Self {
        let r1 = p.rho - 1.0;
        let a3sq = p.alpha3 * p.alpha3;
        Self {
            e_am1: (p.rho + 1.0) / r1,
            e_a0: p.rho / r1,
            e_a2: -(p.gamma - p.rho) / r1,
            c_am1: -r1 * p.alpha_m1,
            c_a0: r1 * p.alpha0,
            c_a1: -r1 * p.alpha1,
            c_a2: r1 * p.alpha2,
            c_a3: 0.5 * r1 * p.rho * a3sq,
            d_am1: -p.alpha_m1 * (p.rho + 1.0),
            d_a0: p.alpha0 * p.rho,
            d_a2: -p.alpha2 * (p.gamma - p.rho),
            d_a1: -p.alpha1 * r1,
            d_a3: -0.5 * r1 * p.rho * a3sq,
        }
    }

    /// Returns `(F(z), F'(z))` for `z > 0`.
    #[inline]
    pub(crate) fn eval_with_prime(&self, z: f64) -> (f64, f64) {
        let p_am1 = z.powf(self.e_am1);
        let p_a0 = z.powf(self.e_a0);
        let p_a2 = z.powf(self.e_a2);
        let inv = 1.0 / z;
        let f = self.c_am1 * p_am1 + self.c_a0 * p_a0 + self.c_a1 * z + self.c_a2 * p_a2 + self.c_a3 * inv;
        let fp = (self.d_am1 * p_am1 + self.d_a0 * p_a0 + self.d_a2 * p_a2) * inv
            + self.d_a1
            + self.d_a3 * inv * inv;
        (f, fp)
    }
}

/// Maximises `f` over a log-spaced grid on `[lo, hi]`, then refines the best
/// bracket by golden-section search in log coordinates. Returns `(argmax, max)`.
pub fn maximize_log_grid<F: Fn(f64) -> f64>(f: F, search: &QSearch) -> (f64, f64) {
    let n = search.points.max(3);
    let (llo, lhi) = (search.lo.ln(), search.hi.ln());
    let step = (lhi - llo) / (n - 1) as f64;
    let at = |i: usize| (llo + step * i as f64).exp();

    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(at(i));
        if v > best_val {
            best_val = v;
            best = i;
        }
    }

    let mut a = at(best.saturating_sub(1)).ln();
    let mut b = at((best + 1).min(n - 1)).ln();
    let g = |u: f64| f(u.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..200 {
        let (za, zb) = (a.exp(), b.exp());
        if (zb - za) <= search.rel_tol * 0.5 * (za + zb) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g(d);
        }
    }
    let (mut arg, mut val) = if fc > fd { (c.exp(), fc) } else { (d.exp(), fd) };
    if best_val > val {
        arg = at(best);
        val = best_val;
    }
    (arg, val)
}

/// One-sided Lipschitz constant `Q = max(0, sup_{z>0} F'(z))` of the transformed drift.
pub fn compute_q(params: &ModelParams) -> Result<f64> {
    compute_q_with(params, &QSearch::default())
}

pub fn compute_q_with(params: &ModelParams, search: &QSearch) -> Result<f64> {
    if params.regime() == Regime::Invalid {
        return Err(Error::InvalidRegime {
            gamma: params.gamma,
            rho: params.rho,
        });
    }
    let (_, sup) = maximize_log_grid(|z| params.transformed_drift_prime_unchecked(z), search);
    Ok(sup.max(0.0))
}

/// `max(0, sup_{x>0} f'(x))` for the original drift; guards the baseline backward Euler step.
pub fn compute_q_original(params: &ModelParams) -> f64 {
    let (_, sup) = maximize_log_grid(|x| params.drift_prime_unchecked(x), &QSearch::default());
    sup.max(0.0)
}

pub fn validate_params(params: &ModelParams) -> Result<RegimeCheck> {
    let positive = [
        ("alpha_m1", params.alpha_m1),
        ("alpha0", params.alpha0),
        ("alpha1", params.alpha1),
        ("alpha2", params.alpha2),
        ("alpha3", params.alpha3),
        ("x0", params.x0),
        ("T", params.horizon),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParam {
                name,
                value,
                reason: "must be positive and finite",
            });
        }
    }
    for (name, value) in [("gamma", params.gamma), ("rho", params.rho)] {
        if !(value > 1.0 && value.is_finite()) {
            return Err(Error::InvalidParam {
                name,
                value,
                reason: "must exceed 1",
            });
        }
    }
    if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
        return Err(Error::InvalidParam {
            name: "lambda",
            value: params.lambda,
            reason: "must be nonnegative and finite",
        });
    }

    match params.regime() {
        Regime::Invalid => Err(Error::InvalidRegime {
            gamma: params.gamma,
            rho: params.rho,
        }),
        Regime::Supercritical => Ok(RegimeCheck {
            regime: Regime::Supercritical,
            critical_moment_cap: None,
        }),
        Regime::Critical => {
            let cap = params.alpha2 / (params.alpha3 * params.alpha3) - params.rho + 1.5;
            if cap <= 1.0 {
                return Err(Error::CriticalCapUnusable { cap });
            }
            Ok(RegimeCheck {
                regime: Regime::Critical,
                critical_moment_cap: Some(cap),
            })
        }
    }
}
