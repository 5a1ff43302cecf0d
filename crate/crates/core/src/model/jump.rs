use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Assumption, Error, Result};
use crate::model::ModelParams;

/// Minimum of `sin(x)/x` over `x > 0`, attained at the first positive root of `tan x = x`.
const SINC_MIN: f64 = -0.217_233_628_211_221_66;
const SINC_ARGMIN: f64 = 4.493_409_457_909_064;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied jump coefficient together with its derivative.
#[derive(Clone)]
pub struct CustomJump {
    pub name: String,
    eval: ScalarFn,
    deriv: ScalarFn,
}

/// Jump coefficient `h`, applied as `X -> X + h(X)` at each Poisson epoch.
#[derive(Clone)]
pub enum JumpCoefficient {
    /// `h(x) = c x`
    Linear(f64),
    /// `h(x) = c sin x`
    Sine(f64),
    /// `h(x) = c x / (1 + x)`
    Rational(f64),
    Zero,
    Custom(CustomJump),
}

impl fmt::Debug for JumpCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JumpCoefficient({self})")
    }
}

impl fmt::Display for JumpCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpCoefficient::Linear(c) => write!(f, "linear:{c}"),
            JumpCoefficient::Sine(c) => write!(f, "sine:{c}"),
            JumpCoefficient::Rational(c) => write!(f, "rational:{c}"),
            JumpCoefficient::Zero => f.write_str("zero"),
            JumpCoefficient::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for JumpCoefficient {
    type Err = Error;

    /// Parses `family:param`, e.g. `linear:-0.5`, `sine:1`, `rational:0.5`, or `zero`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, param) = match s.split_once(':') {
            Some((f, p)) => (f.trim(), Some(p.trim())),
            None => (s, None),
        };
        let value = |p: Option<&str>| -> Result<f64> {
            let p = p.ok_or_else(|| Error::Input(format!("jump family '{family}' needs a parameter")))?;
            p.parse::<f64>()
                .map_err(|_| Error::Input(format!("bad jump parameter '{p}'")))
        };
        match family.to_ascii_lowercase().as_str() {
            "linear" => Ok(JumpCoefficient::Linear(value(param)?)),
            "sine" | "sin" => Ok(JumpCoefficient::Sine(value(param)?)),
            "rational" => Ok(JumpCoefficient::Rational(value(param)?)),
            "zero" | "none" => Ok(JumpCoefficient::Zero),
            other => Err(Error::Input(format!("unknown jump family '{other}'"))),
        }
    }
}

impl JumpCoefficient {
    pub fn custom<F, D>(name: impl Into<String>, eval: F, deriv: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        JumpCoefficient::Custom(CustomJump {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            JumpCoefficient::Linear(c) => c * x,
            JumpCoefficient::Sine(c) => c * x.sin(),
            JumpCoefficient::Rational(c) => c * x / (1.0 + x),
            JumpCoefficient::Zero => 0.0,
            JumpCoefficient::Custom(c) => (c.eval)(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            JumpCoefficient::Linear(c) => *c,
            JumpCoefficient::Sine(c) => c * x.cos(),
            JumpCoefficient::Rational(c) => c / ((1.0 + x) * (1.0 + x)),
            JumpCoefficient::Zero => 0.0,
            JumpCoefficient::Custom(c) => (c.deriv)(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpCoefficient::Zero)
    }

    /// `(1 + h(x)/x)^(-rho) (1 + h'(x))`
    pub fn band_value(&self, rho: f64, x: f64) -> f64 {
        (1.0 + self.eval(x) / x).powf(-rho) * (1.0 + self.deriv(x))
    }
}

/// Log-spaced probe points used to check the jump assumptions numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 1e6,
            points: 512,
        }
    }
}

impl ProbeGrid {
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(2);
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
    }
}

/// Which assumptions a run needs. Positivity only needs the growth condition;
/// the convergence analysis also needs the band condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpRequirement {
    Positivity,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpConstants {
    /// Bound on `|h'|`.
    pub mu: f64,
    /// Largest `r` with `x + h(x) >= r x`.
    pub r: f64,
    /// Infimum of the band expression.
    pub mu1: f64,
    /// Supremum of the band expression.
    pub mu2: f64,
    /// `true` when the constants only reflect the probe grid.
    pub sampled_only: bool,
}

impl JumpConstants {
    pub fn band_holds(&self) -> bool {
        self.mu1 > 0.0 && self.mu2.is_finite()
    }
}

/// Derives the growth and band constants of `h`. Built-in families use closed
/// forms (or a dense search over a compact reparametrisation); custom
/// coefficients are checked on `grid` only.
pub fn validate_jump(
    h: &JumpCoefficient,
    params: &ModelParams,
    grid: &ProbeGrid,
    requirement: JumpRequirement,
) -> Result<JumpConstants> {
    let (constants, band_witness) = match h {
        JumpCoefficient::Zero => (
            JumpConstants {
                mu: 0.0,
                r: 1.0,
                mu1: 1.0,
                mu2: 1.0,
                sampled_only: false,
            },
            1.0,
        ),
        JumpCoefficient::Linear(c) => {
            let c = *c;
            if !c.is_finite() {
                return Err(Error::JumpFamily {
                    param: c,
                    reason: "parameter must be finite",
                });
            }
            if c <= -1.0 {
                return Err(Error::JumpAssumption {
                    assumption: Assumption::Growth,
                    x: 1.0,
                    detail: format!("x + h(x) = {} <= 0", 1.0 + c),
                });
            }
            let band = (1.0 + c).powf(1.0 - params.rho);
            (
                JumpConstants {
                    mu: c.abs(),
                    r: 1.0 + c,
                    mu1: band,
                    mu2: band,
                    sampled_only: false,
                },
                1.0,
            )
        }
        JumpCoefficient::Sine(c) => sine_constants(*c, params.rho)?,
        JumpCoefficient::Rational(c) => rational_constants(*c, params.rho)?,
        JumpCoefficient::Custom(_) => return finish(sampled_constants(h, params, grid)?, requirement, None),
    };
    finish(constants, requirement, Some(band_witness))
}

fn finish(constants: JumpConstants, requirement: JumpRequirement, witness: Option<f64>) -> Result<JumpConstants> {
    if requirement == JumpRequirement::Convergence && !constants.band_holds() {
        return Err(Error::JumpAssumption {
            assumption: Assumption::Band,
            x: witness.unwrap_or(f64::NAN),
            detail: format!("band [{}, {}] must satisfy 0 < mu1 <= mu2 < inf", constants.mu1, constants.mu2),
        });
    }
    Ok(constants)
}

/// Grid-only constants for any `h`; errors at the first probe point that
/// violates the growth condition.
pub fn validate_jump_sampled(h: &JumpCoefficient, params: &ModelParams, grid: &ProbeGrid) -> Result<JumpConstants> {
    sampled_constants(h, params, grid)
}

fn sampled_constants(h: &JumpCoefficient, params: &ModelParams, grid: &ProbeGrid) -> Result<JumpConstants> {
    let mut mu: f64 = 0.0;
    let mut r = f64::INFINITY;
    let mut mu1 = f64::INFINITY;
    let mut mu2 = f64::NEG_INFINITY;
    for x in grid.iter() {
        let hx = h.eval(x);
        let dh = h.deriv(x);
        if !hx.is_finite() || !dh.is_finite() {
            return Err(Error::JumpAssumption {
                assumption: Assumption::Growth,
                x,
                detail: format!("h(x) = {hx}, h'(x) = {dh} not finite"),
            });
        }
        let ratio = (x + hx) / x;
        if !(ratio > 0.0) {
            return Err(Error::JumpAssumption {
                assumption: Assumption::Growth,
                x,
                detail: format!("x + h(x) = {} <= 0", x + hx),
            });
        }
        mu = mu.max(dh.abs());
        r = r.min(ratio);
        let band = ratio.powf(-params.rho) * (1.0 + dh);
        mu1 = mu1.min(band);
        mu2 = mu2.max(band);
    }
    Ok(JumpConstants {
        mu,
        r,
        mu1,
        mu2,
        sampled_only: true,
    })
}

/// Returns `(min, argmin, max, argmax)` of `f` over `[a, b]` from a dense grid
/// followed by golden-section refinement around each extremum.
fn extrema_on_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> (f64, f64, f64, f64) {
    let at = |i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
    let (mut imin, mut imax) = (0, 0);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = f(at(i));
        if v < vmin {
            vmin = v;
            imin = i;
        }
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let refine = |i: usize, sign: f64| -> (f64, f64) {
        let mut lo = at(i.saturating_sub(1));
        let mut hi = at((i + 1).min(n - 1));
        let g = |x: f64| sign * f(x);
        let k = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let c = hi - k * (hi - lo);
            let d = lo + k * (hi - lo);
            if g(c) < g(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let x = 0.5 * (lo + hi);
        (x, f(x))
    };
    let (xmin, rmin) = refine(imin, 1.0);
    let (xmax, rmax) = refine(imax, -1.0);
    let (vmin, xmin) = if rmin < vmin { (rmin, xmin) } else { (vmin, at(imin)) };
    let (vmax, xmax) = if rmax > vmax { (rmax, xmax) } else { (vmax, at(imax)) };
    (vmin, xmin, vmax, xmax)
}

fn sine_constants(c: f64, rho: f64) -> Result<(JumpConstants, f64)> {
    if !c.is_finite() {
        return Err(Error::JumpFamily {
            param: c,
            reason: "parameter must be finite",
        });
    }
    // inf over x > 0 of 1 + c sin(x)/x
    let (r, r_at) = if c >= 0.0 {
        (1.0 + c * SINC_MIN, SINC_ARGMIN)
    } else {
        (1.0 + c, 0.0)
    };
    if !(r > 0.0) {
        return Err(Error::JumpAssumption {
            assumption: Assumption::Growth,
            x: r_at,
            detail: format!("inf (x + h(x))/x = {r} <= 0"),
        });
    }
    let h = JumpCoefficient::Sine(c);
    // Deviations from the asymptotic band 1 + c cos x decay like x^-1, so the
    // extremes sit in the first few dozen periods.
    let (mut mu1, mut x1, mut mu2, _) =
        extrema_on_interval(|x| h.band_value(rho, x), 1e-9, 64.0 * std::f64::consts::PI, 200_001);
    let tail_lo = 1.0 - c.abs();
    if tail_lo < mu1 {
        mu1 = tail_lo;
        x1 = f64::INFINITY;
    }
    mu2 = mu2.max(1.0 + c.abs());
    Ok((
        JumpConstants {
            mu: c.abs(),
            r,
            mu1,
            mu2,
            sampled_only: false,
        },
        x1,
    ))
}

fn rational_constants(c: f64, rho: f64) -> Result<(JumpConstants, f64)> {
    if !c.is_finite() {
        return Err(Error::JumpFamily {
            param: c,
            reason: "parameter must be finite",
        });
    }
    if c <= -1.0 {
        return Err(Error::JumpAssumption {
            assumption: Assumption::Growth,
            x: 0.0,
            detail: format!("(x + h(x))/x -> {} <= 0 as x -> 0", 1.0 + c),
        });
    }
    // With u = 1/(1+x) in (0, 1): band(u) = (1 + c u)^(-rho) (1 + c u^2).
    let band = |u: f64| (1.0 + c * u).powf(-rho) * (1.0 + c * u * u);
    let (mu1, umin, mu2, _) = extrema_on_interval(band, 0.0, 1.0, 20_001);
    let x_at_min = if umin > 0.0 { 1.0 / umin - 1.0 } else { f64::INFINITY };
    Ok((
        JumpConstants {
            mu: c.abs(),
            r: 1.0f64.min(1.0 + c),
            mu1,
            mu2,
            sampled_only: false,
        },
        x_at_min,
    ))
}
