//! Free-running laser noise, expressed as the phase `x_k = ω_A T ȳ_k`
//! accumulated during cycle `k`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency-noise exponent `α` of `S_L(f) ∝ f^{1−α}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NoiseExponent {
    White,
    Flicker,
    RandomWalk,
}

impl NoiseExponent {
    pub fn value(self) -> f64 {
        u8::from(self) as f64
    }

    /// Empirical ratio between rescaled and bare bandwidth, `b_α^α = χ b̃_α^α`.
    pub fn chi(self) -> f64 {
        match self {
            NoiseExponent::White => 1.0,
            NoiseExponent::Flicker => 1.8,
            NoiseExponent::RandomWalk => 2.0,
        }
    }
}

impl TryFrom<u8> for NoiseExponent {
    type Error = Error;

    fn try_from(a: u8) -> Result<Self> {
        match a {
            1 => Ok(NoiseExponent::White),
            2 => Ok(NoiseExponent::Flicker),
            3 => Ok(NoiseExponent::RandomWalk),
            _ => Err(Error::InvalidArgument(format!("noise exponent must be 1, 2 or 3, got {a}"))),
        }
    }
}

impl From<NoiseExponent> for u8 {
    fn from(a: NoiseExponent) -> u8 {
        match a {
            NoiseExponent::White => 1,
            NoiseExponent::Flicker => 2,
            NoiseExponent::RandomWalk => 3,
        }
    }
}

/// Single-component laser spectrum `S_L(f) = h_{1−α} f^{1−α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaserNoiseRaw")]
pub struct LaserNoiseSpec {
    pub alpha: NoiseExponent,
    /// Rescaled bandwidth `b_α` in 1/s.
    pub b_alpha: f64,
    #[serde(rename = "omega_A")]
    pub omega_a: f64,
}

#[derive(Deserialize)]
struct LaserNoiseRaw {
    alpha: NoiseExponent,
    b_alpha: Option<f64>,
    h_coeff: Option<f64>,
    #[serde(rename = "omega_A")]
    omega_a: f64,
}

impl TryFrom<LaserNoiseRaw> for LaserNoiseSpec {
    type Error = Error;

    fn try_from(raw: LaserNoiseRaw) -> Result<Self> {
        match (raw.b_alpha, raw.h_coeff) {
            (Some(b), None) => LaserNoiseSpec::new(raw.alpha, b, raw.omega_a),
            (None, Some(h)) => LaserNoiseSpec::from_h(raw.alpha, h, raw.omega_a),
            _ => Err(Error::Config("give exactly one of b_alpha and h_coeff".into())),
        }
    }
}

impl LaserNoiseSpec {
    pub fn new(alpha: NoiseExponent, b_alpha: f64, omega_a: f64) -> Result<Self> {
        if !b_alpha.is_finite() || !omega_a.is_finite() {
            return Err(Error::NonFinite("laser noise"));
        }
        if b_alpha < 0.0 || omega_a <= 0.0 {
            return Err(Error::InvalidArgument(
                "b_alpha must be non-negative and omega_A positive".into(),
            ));
        }
        Ok(Self { alpha, b_alpha, omega_a })
    }

    /// From the spectral prefactor, through `σ_L(1/b̃) ω_A / b̃ = 1`.
    pub fn from_h(alpha: NoiseExponent, h: f64, omega_a: f64) -> Result<Self> {
        if !(h >= 0.0) {
            return Err(Error::InvalidArgument(format!("h_coeff must be non-negative, got {h}")));
        }
        let w2 = omega_a * omega_a;
        let bare = match alpha {
            NoiseExponent::White => h * w2 / 2.0,
            NoiseExponent::Flicker => (2.0 * 2f64.ln() * h * w2).sqrt(),
            NoiseExponent::RandomWalk => (2.0 * PI * PI * h * w2 / 3.0).cbrt(),
        };
        Self::new(alpha, alpha.chi().powf(1.0 / alpha.value()) * bare, omega_a)
    }

    pub fn bare_bandwidth(&self) -> f64 {
        self.b_alpha / self.alpha.chi().powf(1.0 / self.alpha.value())
    }

    pub fn h_coeff(&self) -> f64 {
        let b = self.bare_bandwidth();
        let w2 = self.omega_a * self.omega_a;
        match self.alpha {
            NoiseExponent::White => 2.0 * b / w2,
            NoiseExponent::Flicker => b * b / (2.0 * 2f64.ln() * w2),
            NoiseExponent::RandomWalk => 3.0 * b.powi(3) / (2.0 * PI * PI * w2),
        }
    }
}

const FLICKER_TAUS: [f64; 6] = [0.1, 1.0, 10.0, 100.0, 1e3, 1e4];

/// Six AR(1) processes whose summed Allan variance is flat between one and
/// a thousand cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct FlickerBank {
    pub rho: [f64; 6],
    /// Stationary variance of each component.
    pub variance: [f64; 6],
}

/// Allan variance at `n` cycles of a unit-variance AR(1) sequence.
pub fn ar1_allan(rho: f64, tau: f64, n: usize) -> f64 {
    let one_minus = -(-1.0 / tau).exp_m1();
    let var_sum = |n: f64| {
        n * (1.0 + rho) / one_minus + 2.0 * rho * (-n / tau).exp_m1() / (one_minus * one_minus)
    };
    let nf = n as f64;
    (4.0 * var_sum(nf) - var_sum(2.0 * nf)) / (2.0 * nf * nf)
}

impl FlickerBank {
    pub fn get() -> &'static FlickerBank {
        static BANK: OnceLock<FlickerBank> = OnceLock::new();
        BANK.get_or_init(FlickerBank::fit)
    }

    fn fit() -> FlickerBank {
        let rho = FLICKER_TAUS.map(|t| (-1.0 / t).exp());
        let grid: Vec<usize> = (0..=60)
            .map(|i| 10f64.powf(3.0 * i as f64 / 60.0).round() as usize)
            .collect();
        let a = DMatrix::from_fn(grid.len(), 6, |i, j| ar1_allan(rho[j], FLICKER_TAUS[j], grid[i]));
        let target = DVector::from_element(grid.len(), 1.0);
        let w = nnls(&a, &target);
        let mut variance = [0.0; 6];
        variance.copy_from_slice(w.as_slice());
        FlickerBank { rho, variance }
    }

    pub fn allan(&self, n: usize) -> f64 {
        (0..6)
            .map(|j| self.variance[j] * ar1_allan(self.rho[j], FLICKER_TAUS[j], n))
            .sum()
    }
}

/// Lawson–Hanson non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let z = sub.svd(true, true).solve(b, 1e-14).expect("svd solve");
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _ in 0..10 * n {
        let grad = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j] && grad[j] > 1e-12)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = pick else { break };
        passive[j] = true;
        loop {
            let z = solve(&passive);
            if (0..n).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let step = (0..n)
                .filter(|&j| passive[j] && z[j] <= 0.0)
                .map(|j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * step;
            for j in 0..n {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x
}

/// Phase variance of an ideal integrating servo, `φ' = x (1 − z⁻¹)/(1 − (1−g) z⁻¹)`,
/// driven by the unit-level generator of exponent `alpha`.
pub fn closed_loop_unit_variance(alpha: NoiseExponent, gain: f64) -> f64 {
    let g = gain;
    let a = 1.0 - g;
    let one_minus_a2 = g * (2.0 - g);
    // stationary AR(1) input with correlation ρ
    let ar = |rho: f64| {
        1.0 + g * g / one_minus_a2
            + 2.0 * (-g * rho / (1.0 - a * rho) + g * g * a * rho / (one_minus_a2 * (1.0 - a * rho)))
    };
    match alpha {
        NoiseExponent::White => ar(0.0),
        NoiseExponent::Flicker => {
            let bank = FlickerBank::get();
            (0..6).map(|j| bank.variance[j] * ar(bank.rho[j])).sum()
        }
        // increments of interval-averaged Brownian motion: c0 = 2/3, c1 = 1/6
        NoiseExponent::RandomWalk => (2.0 / 3.0 + a / 3.0) / one_minus_a2,
    }
}

/// `χ` implied by this generator at servo gain `g`, i.e. the ideal closed-loop
/// phase variance in units of `(b̃_α T)^α`.
pub fn implied_chi(alpha: NoiseExponent, gain: f64) -> f64 {
    // the unit generators sit at (b̃T)^α = 1 for α ≤ 2 and at 1/3 for α = 3
    let unit = if alpha == NoiseExponent::RandomWalk { 3.0 } else { 1.0 };
    unit * closed_loop_unit_variance(alpha, gain)
}

/// Seeded generator of per-cycle laser phases, scaled so that an ideal servo
/// with gain `g` holds the phase variance at `(b_α T)^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseNoise {
    pub alpha: NoiseExponent,
    pub scale: f64,
}

impl PhaseNoise {
    pub fn new(alpha: NoiseExponent, bt: f64, gain: f64) -> Result<Self> {
        if !(bt >= 0.0) || !bt.is_finite() {
            return Err(Error::InvalidArgument(format!("b_α T must be finite and non-negative, got {bt}")));
        }
        check_gain(gain)?;
        let target = bt.powf(alpha.value());
        Ok(Self {
            alpha,
            scale: (target / closed_loop_unit_variance(alpha, gain)).sqrt(),
        })
    }

    pub fn generate<R: Rng + ?Sized>(&self, n_cycles: usize, rng: &mut R) -> Vec<f64> {
        if self.scale == 0.0 {
            return vec![0.0; n_cycles];
        }
        let mut gauss = || -> f64 { StandardNormal.sample(rng) };
        let s = self.scale;
        match self.alpha {
            NoiseExponent::White => (0..n_cycles).map(|_| s * gauss()).collect(),
            NoiseExponent::Flicker => {
                let bank = FlickerBank::get();
                let sd = bank.variance.map(f64::sqrt);
                let innov = bank.rho.map(|r| (1.0 - r * r).sqrt());
                let mut state: [f64; 6] = std::array::from_fn(|_| gauss());
                (0..n_cycles)
                    .map(|_| {
                        let x: f64 = (0..6).map(|j| sd[j] * state[j]).sum();
                        for j in 0..6 {
                            state[j] = bank.rho[j] * state[j] + innov[j] * gauss();
                        }
                        s * x
                    })
                    .collect()
            }
            NoiseExponent::RandomWalk => {
                let bridge = (1.0f64 / 12.0).sqrt();
                let mut y = 0.0;
                (0..n_cycles)
                    .map(|_| {
                        let next = y + gauss();
                        let x = 0.5 * (y + next) + bridge * gauss();
                        y = next;
                        s * x
                    })
                    .collect()
            }
        }
    }
}

pub(crate) fn check_gain(gain: f64) -> Result<()> {
    if gain > 0.0 && gain <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("servo gain must lie in (0, 1], got {gain}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::allan::overlapping_allan;
    use crate::optimizer::restart_rng;

    #[test]
    fn spec_round_trips_h() {
        for a in [NoiseExponent::White, NoiseExponent::Flicker, NoiseExponent::RandomWalk] {
            let spec = LaserNoiseSpec::new(a, 3.7, 2.0 * PI * 4.3e14).unwrap();
            let back = LaserNoiseSpec::from_h(a, spec.h_coeff(), spec.omega_a).unwrap();
            assert!((back.b_alpha / spec.b_alpha - 1.0).abs() < 1e-12);
        }
        let json = r#"{"alpha": 2, "h_coeff": 1e-32, "omega_A": 2.7e15}"#;
        let spec: LaserNoiseSpec = serde_json::from_str(json).unwrap();
        assert!((spec.h_coeff() / 1e-32 - 1.0).abs() < 1e-12);
        assert!(serde_json::from_str::<LaserNoiseSpec>(r#"{"alpha": 4, "b_alpha": 1, "omega_A": 1}"#).is_err());
    }

    #[test]
    fn white_closed_loop_factor() {
        for g in [0.1, 0.5, 1.0] {
            assert!((closed_loop_unit_variance(NoiseExponent::White, g) - 2.0 / (2.0 - g)).abs() < 1e-14);
        }
    }

    #[test]
    fn flicker_bank_is_flat() {
        let bank = FlickerBank::get();
        assert!(bank.variance.iter().all(|&v| v >= 0.0));
        for n in [1usize, 3, 10, 30, 100, 300, 1000] {
            let dev = bank.allan(n).sqrt();
            assert!((dev - 1.0).abs() < 0.05, "n = {n}: {dev}");
        }
    }

    #[test]
    fn zero_bandwidth_is_silent() {
        let noise = PhaseNoise::new(NoiseExponent::Flicker, 0.0, 0.1).unwrap();
        assert!(noise.generate(100, &mut restart_rng(1, 0)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ideal_loop_holds_prior_width() {
        for (alpha, bt) in [
            (NoiseExponent::White, 0.3),
            (NoiseExponent::Flicker, 0.5),
            (NoiseExponent::RandomWalk, 0.4),
        ] {
            let g = 0.1;
            let noise = PhaseNoise::new(alpha, bt, g).unwrap();
            let x = noise.generate(400_000, &mut restart_rng(7, alpha as usize));
            let mut c = x[0];
            let mut acc = 0.0;
            let burn = 1000;
            for (k, &xk) in x.iter().enumerate() {
                let phi = xk - c;
                c += g * phi;
                if k >= burn {
                    acc += phi * phi;
                }
            }
            let var = acc / (x.len() - burn) as f64;
            let target = bt.powf(alpha.value());
            assert!((var / target - 1.0).abs() < 0.05, "{alpha:?}: {var} vs {target}");
        }
    }

    #[test]
    fn raw_allan_slopes() {
        let white = PhaseNoise::new(NoiseExponent::White, 1.0, 0.1).unwrap();
        let x = white.generate(200_000, &mut restart_rng(3, 0));
        let al = overlapping_allan(&x, 1.0);
        let (ns, ss): (Vec<f64>, Vec<f64>) = al
            .taus
            .iter()
            .zip(&al.sigma_y)
            .filter(|(t, _)| **t >= 1.0 && **t <= 1000.0)
            .map(|(t, s)| (t.ln(), s.ln()))
            .unzip();
        let mx = ns.iter().sum::<f64>() / ns.len() as f64;
        let my = ss.iter().sum::<f64>() / ss.len() as f64;
        let slope = ns.iter().zip(&ss).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / ns.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.05, "{slope}");
    }
}
