//! Dead-time (Dick effect) limits for a flicker-noise limited laser.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::noise::NoiseExponent;

/// Terms summed explicitly; the tail beyond is below `1/(2π² n²)`.
pub const DICK_TERMS: usize = 1_000_000;

/// `Σ_{n≥1} sin²(π n d) / (π² n³)`.
pub fn dick_series(d: f64) -> f64 {
    // reduce n·d modulo 1 so that integer multiples give exact zeros
    (1..=DICK_TERMS)
        .rev()
        .map(|n| {
            let nf = n as f64;
            let frac = (nf * d).fract();
            (PI * frac).sin().powi(2) / (PI * PI * nf * nf * nf)
        })
        .sum()
}

/// `σ_Dick² · ω_A² τ / b₂ = b₂T / (χ(2)·2 ln 2) · S(d) / d³`.
pub fn dick_sigma_sq(bt: f64, d: f64) -> f64 {
    bt / (NoiseExponent::Flicker.chi() * 2.0 * 2f64.ln()) * dick_series(d) / d.powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickLimits {
    /// Smallest duty cycle that keeps the Dick term below `σ_opt²`.
    pub d_min: f64,
    /// Largest dead-time fraction `1 − d_min`.
    pub r_max: f64,
    pub iterations: usize,
}

/// `d_min = min{d : b₂T_opt/(χ(2)·2 ln 2) · S(d)/d² ≤ σ_opt²}` by bisection.
pub fn dick_limits(bt_opt: f64, sigma_opt: f64) -> Result<DickLimits> {
    if !(bt_opt > 0.0) || !(sigma_opt > 0.0) {
        return Err(Error::InvalidArgument("b₂T_opt and σ_opt must be positive".into()));
    }
    let pref = bt_opt / (NoiseExponent::Flicker.chi() * 2.0 * 2f64.ln());
    let excess = |d: f64| pref * dick_series(d) / (d * d) - sigma_opt * sigma_opt;
    let (mut lo, mut hi) = (1e-9, 1.0);
    if excess(lo) <= 0.0 {
        return Ok(DickLimits {
            d_min: lo,
            r_max: 1.0 - lo,
            iterations: 0,
        });
    }
    let mut iterations = 0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(DickLimits {
        d_min: hi,
        r_max: 1.0 - hi,
        iterations,
    })
}
