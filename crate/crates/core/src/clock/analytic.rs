//! Closed-form instability predictions in units of `ω_A⁻¹ (b_α/τ)^{1/2}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::noise::NoiseExponent;

fn check_bt(bt: f64) -> Result<()> {
    if !bt.is_finite() {
        return Err(Error::NonFinite("b_α T"));
    }
    if bt <= 0.0 {
        return Err(Error::InvalidArgument(format!("b_α T must be positive, got {bt}")));
    }
    Ok(())
}

/// Prior width `δφ_T = (b_α T)^{α/2}` of a laser-noise limited clock.
pub fn prior_width(alpha: NoiseExponent, bt: f64) -> Result<f64> {
    check_bt(bt)?;
    Ok(bt.powf(alpha.value() / 2.0))
}

/// Dimensionless instability `σ = Δφ_M / √(b_α T)` and the Allan deviation
/// `σ_y(τ) = Δφ_M / (ω_A T) · √(T/τ)` it implies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanPrediction {
    pub sigma: f64,
    /// `σ_y(τ)·√τ` in `s^{1/2}`, given `ω_A` and `T`.
    pub sigma_y_sqrt_tau: f64,
}

impl AllanPrediction {
    pub fn sigma_y(&self, tau: f64) -> f64 {
        self.sigma_y_sqrt_tau / tau.sqrt()
    }
}

pub fn predict_allan(omega_a: f64, t: f64, bt: f64, delta_phi_m: f64) -> Result<AllanPrediction> {
    check_bt(bt)?;
    if !(t > 0.0) || !(omega_a > 0.0) {
        return Err(Error::InvalidArgument("T and ω_A must be positive".into()));
    }
    Ok(AllanPrediction {
        sigma: delta_phi_m / bt.sqrt(),
        sigma_y_sqrt_tau: delta_phi_m / (omega_a * t) * t.sqrt(),
    })
}

/// Optimal-linear-estimator CSS clock,
/// `σ² = [e^ν/N + (1−1/N) sinh ν − ν] / (b_α T)` with `ν = δφ_T²`.
pub fn css_sigma(n: usize, alpha: NoiseExponent, bt: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidAtomNumber("N must be at least 1".into()));
    }
    let nu = prior_width(alpha, bt)?.powi(2);
    if nu > 700.0 {
        return Ok(f64::INFINITY);
    }
    let nf = n as f64;
    // regrouped as 1/N + (cosh ν − 1)/N + (sinh ν − ν) to avoid cancellation
    let sinh_minus = if nu < 1e-2 {
        nu.powi(3) / 6.0 * (1.0 + nu * nu / 20.0 * (1.0 + nu * nu / 42.0))
    } else {
        nu.sinh() - nu
    };
    let cosh_minus = 2.0 * (nu / 2.0).sinh().powi(2);
    Ok(((1.0 + cosh_minus) / nf + sinh_minus).sqrt() / bt.sqrt())
}

pub fn sql_sigma(n: usize, bt: f64) -> f64 {
    1.0 / (n as f64 * bt).sqrt()
}

pub fn hl_sigma(n: usize, bt: f64) -> f64 {
    1.0 / (n as f64 * bt.sqrt())
}

pub fn pi_hl_sigma(n: usize, bt: f64) -> f64 {
    PI / (n as f64 * bt.sqrt())
}

/// Coherence-time limit of the optimal clock from phase slips,
/// `σ² = 4π²/(b_α T) · erfc(π / (√2 δφ_T))`.
pub fn ctl_oqc_sigma(alpha: NoiseExponent, bt: f64) -> Result<f64> {
    let dphi = prior_width(alpha, bt)?;
    let x = PI / (2f64.sqrt() * dphi);
    Ok((4.0 * PI * PI / bt * libm::erfc(x)).sqrt())
}

/// Large-`N` optimum of `σ_πHL² + (σ_CTL^OQC)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OqcScaling {
    pub z: f64,
    /// Root of `w − ln w = ln z`.
    pub w: f64,
    pub residual: f64,
    pub bt_opt: f64,
    pub sigma_opt: f64,
    /// For `α = 2`, the two-logarithm form `(√π/N)[L^{−1/2} + L^{1/2}]^{1/2}`
    /// with `L = ln(z ln z)`.
    pub sigma_two_log: Option<f64>,
    pub bt_two_log: Option<f64>,
}

pub fn oqc_scaling(n: usize, alpha: NoiseExponent) -> Result<OqcScaling> {
    let a = alpha.value();
    let nf = n as f64;
    let z = 8.0 * a * a * nf.powi(4) / PI;
    if !(z > std::f64::consts::E) {
        return Err(Error::AsymptoticsInvalid(z));
    }
    let lz = z.ln();
    let mut w = lz;
    for _ in 0..200 {
        let next = lz + w.ln();
        let done = (next - w).abs() <= 1e-15 * next;
        w = next;
        if done {
            break;
        }
    }
    let residual = (w - w.ln() - lz).abs();
    let bt_opt = (w / (PI * PI)).powf(-1.0 / a);
    let sigma_opt = (PI * PI / (nf * nf) * (w / (PI * PI)).powf(1.0 / a) * (1.0 + 2.0 / (a * w))).sqrt();
    let (sigma_two_log, bt_two_log) = if alpha == NoiseExponent::Flicker {
        let l = (z * lz).ln();
        (
            Some(PI.sqrt() / nf * (l.powf(-0.5) + l.sqrt()).sqrt()),
            Some(PI / l.sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(OqcScaling {
        z,
        w,
        residual,
        bt_opt,
        sigma_opt,
        sigma_two_log,
        bt_two_log,
    })
}

/// Minimum over `b_α T` of `σ_πHL² + (σ_CTL^OQC)²` by golden-section search
/// in `ln(b_α T)`; returns `(b_α T, σ)`.
///
/// The search stops at `δφ_T = π`. Beyond it the slip term saturates and the
/// expression falls off as `1/(b_α T)` without describing a working clock.
pub fn oqc_numeric_optimum(n: usize, alpha: NoiseExponent) -> Result<(f64, f64)> {
    let f = |lbt: f64| {
        let bt = lbt.exp();
        pi_hl_sigma(n, bt).powi(2) + ctl_oqc_sigma(alpha, bt).map_or(f64::INFINITY, |s| s * s)
    };
    // bracket the minimum on a coarse log grid first
    let top = 2.0 * PI.ln() / alpha.value();
    let grid: Vec<f64> = (0..=400).map(|i| -30.0 + (top + 30.0) * i as f64 / 400.0).collect();
    let (ibest, _) = grid
        .iter()
        .map(|&x| f(x))
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let (mut lo, mut hi) = (grid[ibest.saturating_sub(1)], grid[(ibest + 1).min(grid.len() - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x.exp(), f(x).sqrt()))
}
