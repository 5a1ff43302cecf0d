//! Lamperti change of variables `Z = X^{1-rho}` and the jump update in `Z`.

use crate::error::{Error, Result};
use crate::model::JumpCoefficient;

fn guarded_pow(what: &'static str, base: f64, exponent: f64) -> Result<f64> {
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::Domain { what, value: base });
    }
    let out = base.powf(exponent);
    if out > 0.0 && out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Range { what, value: base })
    }
}

/// `x -> x^{1-rho}`
pub fn lamperti_forward(rho: f64, x: f64) -> Result<f64> {
    guarded_pow("lamperti_forward", x, 1.0 - rho)
}

/// `z -> z^{1/(1-rho)}`
pub fn lamperti_inverse(rho: f64, z: f64) -> Result<f64> {
    guarded_pow("lamperti_inverse", z, 1.0 / (1.0 - rho))
}

/// Post-jump value in `Z` coordinates: `(x + h(x))^{1-rho}` with `x = z^{1/(1-rho)}`.
pub fn jump_map_z(rho: f64, h: &JumpCoefficient, z: f64) -> Result<f64> {
    if h.is_zero() {
        return Ok(z);
    }
    let x = lamperti_inverse(rho, z)?;
    let jumped = x + h.eval(x);
    if !(jumped > 0.0) {
        return Err(Error::Domain {
            what: "jump_map_z (x + h(x))",
            value: jumped,
        });
    }
    lamperti_forward(rho, jumped)
}
