//! Closed servo loop of an atomic clock.
//!
//! Each cycle the atoms accumulate the residual laser phase
//! `φ'_k = x_k − c_k`, an outcome `m_k` is drawn from `p(m|φ'_k)`, and the
//! correction advances by `c_{k+1} = c_k + g m_k / ∂_φ m̄|₀`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{decoder_matrix, entangle, named, CircuitParams};
use crate::error::{Error, Result};
use crate::optimizer::restart_rng;
use num_complex::Complex64 as C64;

use crate::spin::SpinOperatorTable;

use super::allan::{overlapping_allan, AllanSeries, WhiteFit};
use super::noise::{check_gain, LaserNoiseSpec, PhaseNoise};

/// Interferometer used for the frequency measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockProtocol {
    /// Noiseless readout `φ_est = φ`.
    Ideal,
    Css,
    Circuit { params: CircuitParams },
}

fn default_gain() -> f64 {
    0.1
}

fn default_runs() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockRunConfig {
    #[serde(rename = "N")]
    pub n: usize,
    /// Ramsey time in seconds.
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "T_dead", default)]
    pub t_dead: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    pub n_cycles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub protocol: ClockProtocol,
    pub noise: LaserNoiseSpec,
}

impl ClockRunConfig {
    pub fn validate(&self) -> Result<()> {
        check_gain(self.gain)?;
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidArgument(format!("Ramsey time must be positive, got {}", self.t)));
        }
        if self.t_dead != 0.0 {
            return Err(Error::InvalidArgument(
                "dead time is only modelled analytically; use the Dick-effect limits".into(),
            ));
        }
        if self.n_cycles < 2 {
            return Err(Error::InvalidArgument("at least two cycles are needed".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidArgument("at least one run is needed".into()));
        }
        if self.n == 0 && self.protocol != ClockProtocol::Ideal {
            return Err(Error::InvalidAtomNumber("N must be at least 1".into()));
        }
        Ok(())
    }

    pub fn bt(&self) -> f64 {
        self.noise.b_alpha * self.t
    }
}

/// Draws outcomes of a pure-state interferometer and converts them into
/// phase estimates through the slope of `m̄(φ)` at zero.
#[derive(Clone, Debug)]
pub struct PhaseMeter {
    m: Vec<f64>,
    /// `U_De diag(ψ)`.
    columns: DMatrix<C64>,
    slope: f64,
}

impl PhaseMeter {
    pub fn new(table: &SpinOperatorTable, params: &CircuitParams) -> Result<Self> {
        let psi = entangle(table, params)?;
        let u = decoder_matrix(table, &params.vartheta);
        let m = table.basis().m_values();
        let mut columns = u;
        for (j, mut col) in columns.column_iter_mut().enumerate() {
            col *= psi.amplitudes()[j];
        }
        // ∂_φ p_k at 0 for amplitudes Σ_j U_kj ψ_j e^{−iφ m_j}
        let a0: DVector<C64> = columns.column_sum();
        let da: DVector<C64> = &columns * DVector::from_iterator(m.len(), m.iter().map(|&mj| C64::new(0.0, -mj)));
        let slope: f64 = (0..m.len()).map(|k| m[k] * 2.0 * (a0[k].conj() * da[k]).re).sum();
        if !(slope.abs() > 1e-12) {
            return Err(Error::UnusableProtocol(format!(
                "mean outcome has zero slope at φ = 0 ({slope:e})"
            )));
        }
        Ok(Self { m, columns, slope })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn probabilities(&self, phi: f64) -> Vec<f64> {
        let phase = DVector::from_iterator(self.m.len(), self.m.iter().map(|&mj| C64::from_polar(1.0, -phi * mj)));
        (&self.columns * phase).iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, phi: f64, rng: &mut R) -> f64 {
        let p = self.probabilities(phi);
        let total: f64 = p.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (k, pk) in p.iter().enumerate() {
            if u < *pk {
                return self.m[k];
            }
            u -= pk;
        }
        *self.m.last().expect("non-empty outcome set")
    }

    pub fn estimate<R: Rng + ?Sized>(&self, phi: f64, rng: &mut R) -> f64 {
        self.sample(phi, rng) / self.slope
    }
}

/// Residual phases and fringe hops of one loop.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopTrace {
    pub phases: Vec<f64>,
    pub fringe_hops: usize,
}

/// Runs the loop over the laser phases `noise`, starting from correction `c0`.
pub fn servo_loop(noise: &[f64], c0: f64, gain: f64, mut estimate: impl FnMut(f64) -> f64) -> LoopTrace {
    let mut c = c0;
    let mut fringe_hops = 0;
    let phases = noise
        .iter()
        .map(|&x| {
            let phi = x - c;
            if phi.abs() > std::f64::consts::PI {
                fringe_hops += 1;
            }
            c += gain * estimate(phi);
            phi
        })
        .collect();
    LoopTrace { phases, fringe_hops }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServoRun {
    pub seed: u64,
    pub run: usize,
    /// Allan deviation of the corrected fractional frequency.
    pub allan: AllanSeries,
    pub fit: Option<WhiteFit>,
    /// Fitted `σ_y(τ) √τ` in `s^{1/2}`.
    pub sigma_y_sqrt_tau: Option<f64>,
    /// Dimensionless instability `σ_y ω_A √(τ / b_α)`.
    pub sigma: Option<f64>,
    pub fringe_hops: usize,
    /// Variance of the residual phase, the loop's prior width squared.
    pub phase_variance: f64,
}

/// Averaging lengths used for the asymptotic fit.
pub fn fit_window(n_cycles: usize) -> (usize, usize) {
    ((n_cycles / 100).clamp(1, 10_000), (n_cycles / 10).max(1))
}

fn meter_for(config: &ClockRunConfig) -> Result<Option<PhaseMeter>> {
    let params = match &config.protocol {
        ClockProtocol::Ideal => return Ok(None),
        ClockProtocol::Css => named::css(),
        ClockProtocol::Circuit { params } => params.clone(),
    };
    let table = SpinOperatorTable::build(config.n)?;
    PhaseMeter::new(&table, &params).map(Some)
}

fn run_with_meter(config: &ClockRunConfig, meter: Option<&PhaseMeter>, run: usize) -> ServoRun {
    let bt = config.bt();
    let noise = PhaseNoise::new(config.noise.alpha, bt, config.gain).expect("validated config");
    let burn = (10.0 / config.gain).ceil() as usize;
    let x = noise.generate(burn + config.n_cycles, &mut restart_rng(config.seed, 2 * run));
    let mut rng = restart_rng(config.seed, 2 * run + 1);
    // the laser starts locked to its initial frequency
    let trace = match meter {
        Some(meter) => servo_loop(&x, x[0], config.gain, |phi| meter.estimate(phi, &mut rng)),
        None => servo_loop(&x, x[0], config.gain, |phi| phi),
    };
    let kept = &trace.phases[burn..];
    let hops = kept.iter().filter(|p| p.abs() > std::f64::consts::PI).count();
    let phase_variance = kept.iter().map(|p| p * p).sum::<f64>() / kept.len() as f64;
    let wt = config.noise.omega_a * config.t;
    let phase_allan = overlapping_allan(kept, config.t);
    let (lo, hi) = fit_window(config.n_cycles);
    let fit = phase_allan.fit_white(lo, hi);
    let allan = AllanSeries {
        sigma_y: phase_allan.sigma_y.iter().map(|s| s / wt).collect(),
        ..phase_allan
    };
    let sigma = fit.filter(|_| bt > 0.0).map(|f| f.c / bt.sqrt());
    ServoRun {
        seed: config.seed,
        run,
        allan,
        fit,
        sigma_y_sqrt_tau: fit.map(|f| f.c * config.t.sqrt() / wt),
        sigma,
        fringe_hops: hops,
        phase_variance,
    }
}

/// A single loop, the `run`-th stream of the configured seed.
pub fn run_servo_loop(config: &ClockRunConfig, run: usize) -> Result<ServoRun> {
    config.validate()?;
    let meter = meter_for(config)?;
    Ok(run_with_meter(config, meter.as_ref(), run))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServoEnsemble {
    pub runs: Vec<ServoRun>,
    pub sigma_mean: Option<f64>,
    /// Standard error of the mean over runs.
    pub sigma_sem: Option<f64>,
    pub fringe_hops: usize,
}

/// `config.runs` independent loops executed concurrently.
pub fn run_servo_ensemble(config: &ClockRunConfig) -> Result<ServoEnsemble> {
    config.validate()?;
    let meter = meter_for(config)?;
    let runs: Vec<ServoRun> = (0..config.runs)
        .into_par_iter()
        .map(|r| run_with_meter(config, meter.as_ref(), r))
        .collect();
    let sig: Vec<f64> = runs.iter().filter_map(|r| r.sigma).collect();
    let (sigma_mean, sigma_sem) = if sig.len() == runs.len() && !sig.is_empty() {
        let k = sig.len() as f64;
        let mean = sig.iter().sum::<f64>() / k;
        let sem = if sig.len() > 1 {
            (sig.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            0.0
        };
        (Some(mean), Some(sem))
    } else {
        (None, None)
    };
    let fringe_hops = runs.iter().map(|r| r.fringe_hops).sum();
    Ok(ServoEnsemble {
        runs,
        sigma_mean,
        sigma_sem,
        fringe_hops,
    })
}
