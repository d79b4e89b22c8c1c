//! Bayesian cost functions on a [`ProbabilityKernel`], estimators, Fisher
//! information and reference bounds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuits::{Estimator, ProbabilityKernel};
use crate::error::{Error, Result};
use crate::quadrature::{normal_gauss_hermite, normal_trapezoid, Rule};

/// Normal prior centred at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub delta_phi: f64,
}

impl PriorSpec {
    pub const DEFAULT_GH_ORDER: usize = 240;

    pub fn new(delta_phi: f64) -> Result<Self> {
        if !delta_phi.is_finite() {
            return Err(Error::NonFinite("prior width"));
        }
        if delta_phi <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "prior width must be positive, got {delta_phi}"
            )));
        }
        Ok(Self { delta_phi })
    }

    pub fn variance(&self) -> f64 {
        self.delta_phi * self.delta_phi
    }

    /// Default phase grid for kernels whose outcome amplitudes are
    /// trigonometric polynomials of degree `atoms`.
    pub fn rule(&self, atoms: usize) -> Rule {
        normal_trapezoid(self.delta_phi, atoms)
    }

    pub fn gauss_hermite(&self, order: usize) -> Rule {
        normal_gauss_hermite(self.delta_phi, order)
    }
}

/// Cost summary for one circuit at one prior width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// `(Δφ)²`.
    pub bmse: f64,
    /// `Δφ/δφ`.
    pub posterior_over_prior: f64,
    /// `(Δφ_M)²`.
    pub eff_meas_var: f64,
    pub a_opt: f64,
}

impl CostReport {
    pub fn from_bmse(bmse: f64, prior: &PriorSpec, a_opt: f64) -> Self {
        let bmse = bmse.max(0.0);
        Self {
            bmse,
            posterior_over_prior: bmse.sqrt() / prior.delta_phi,
            eff_meas_var: effective_measurement_variance(bmse, prior.delta_phi),
            a_opt,
        }
    }

    pub fn delta_phi_m(&self) -> f64 {
        self.eff_meas_var.sqrt()
    }
}

/// `[(Δφ)^{-2} − (δφ)^{-2}]^{-1}`; infinite when the measurement adds no
/// information.
pub fn effective_measurement_variance(bmse: f64, delta_phi: f64) -> f64 {
    let info = 1.0 / bmse - 1.0 / (delta_phi * delta_phi);
    if info <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / info
    }
}

/// How the estimator is chosen inside [`bmse`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    LinearOptimal,
    FixedA(f64),
    Mmse,
}

/// `ε(φ) = Σ_m (φ − φ_est(m))² p(m|φ)` on the kernel nodes.
pub fn mse_curve(kernel: &ProbabilityKernel, estimator: &Estimator) -> Vec<f64> {
    (0..kernel.nodes())
        .map(|r| {
            let phi = kernel.phi_nodes[r];
            (0..kernel.outcomes())
                .map(|c| {
                    let d = phi - estimator.value(c, kernel.m(c));
                    d * d * kernel.probs[(r, c)]
                })
                .sum()
        })
        .collect()
}

fn check_prior_grid(kernel: &ProbabilityKernel, prior: &PriorSpec) -> Result<()> {
    let total: f64 = kernel.weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "kernel weights integrate to {total}, not a normalized prior grid"
        )));
    }
    let reach = kernel
        .phi_nodes
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if reach < 8.0 * prior.delta_phi * (1.0 - 1e-9) && kernel.nodes() > 64 {
        return Err(Error::InvalidArgument(format!(
            "grid reaches {reach}, needs ±8δφ = {}",
            8.0 * prior.delta_phi
        )));
    }
    Ok(())
}

/// Weighted moments `Σ_r w_r φ_r^k p(m|φ_r)` for `k = 0, 1, 2`.
fn outcome_moments(kernel: &ProbabilityKernel) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; kernel.outcomes()];
    for r in 0..kernel.nodes() {
        let w = kernel.weights[r];
        let phi = kernel.phi_nodes[r];
        for (c, mom) in out.iter_mut().enumerate() {
            let p = w * kernel.probs[(r, c)];
            mom[0] += p;
            mom[1] += p * phi;
            mom[2] += p * phi * phi;
        }
    }
    out
}

/// BMSE of the kernel under the prior. The kernel must have been evaluated
/// on a prior-weighted grid (for instance [`PriorSpec::rule`]).
pub fn bmse(kernel: &ProbabilityKernel, prior: &PriorSpec, mode: EstimatorMode) -> Result<CostReport> {
    check_prior_grid(kernel, prior)?;
    let mom = outcome_moments(kernel);
    let second: f64 = mom.iter().map(|m| m[2]).sum();
    match mode {
        EstimatorMode::FixedA(_) | EstimatorMode::LinearOptimal => {
            let (mut t1, mut t2) = (0.0, 0.0);
            for (c, m) in mom.iter().enumerate() {
                let mv = kernel.m(c);
                t1 += mv * m[1];
                t2 += mv * mv * m[0];
            }
            let a = match mode {
                EstimatorMode::FixedA(a) => a,
                _ if t2 > 0.0 => t1 / t2,
                _ => 0.0,
            };
            let cost = second - 2.0 * a * t1 + a * a * t2;
            Ok(CostReport::from_bmse(cost, prior, a))
        }
        EstimatorMode::Mmse => {
            let gain: f64 = mom
                .iter()
                .filter(|m| m[0] > 0.0)
                .map(|m| m[1] * m[1] / m[0])
                .sum();
            Ok(CostReport::from_bmse(second - gain, prior, f64::NAN))
        }
    }
}

/// Posterior-mean estimator table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmseEstimator {
    pub values: Vec<f64>,
    /// Outcome indices with zero evidence, assigned the prior mean.
    pub zero_evidence: Vec<usize>,
}

impl MmseEstimator {
    pub fn estimator(&self) -> Estimator {
        Estimator::Table {
            values: self.values.clone(),
        }
    }
}

pub fn mmse_estimator(kernel: &ProbabilityKernel) -> MmseEstimator {
    let mut zero_evidence = Vec::new();
    let values = outcome_moments(kernel)
        .iter()
        .enumerate()
        .map(|(c, m)| {
            if m[0] > 1e-300 {
                m[1] / m[0]
            } else {
                zero_evidence.push(c);
                0.0
            }
        })
        .collect();
    MmseEstimator {
        values,
        zero_evidence,
    }
}

const FISHER_P_FLOOR: f64 = 1e-14;

/// Fisher information `F(φ) = Σ_m (∂_φ p)²/p` per node. Uses the analytic
/// derivative stored in the kernel, or finite differences otherwise.
pub fn fisher_information(kernel: &ProbabilityKernel) -> Result<Vec<f64>> {
    match &kernel.dprobs {
        Some(d) => Ok((0..kernel.nodes())
            .map(|r| {
                (0..kernel.outcomes())
                    .filter(|&c| kernel.probs[(r, c)] > FISHER_P_FLOOR)
                    .map(|c| d[(r, c)] * d[(r, c)] / kernel.probs[(r, c)])
                    .sum()
            })
            .collect()),
        None => fisher_information_fd(kernel),
    }
}

/// Fisher information from fourth-order central differences on a uniform
/// node grid. The outermost two nodes on each side use the nearest interior
/// stencil's value.
pub fn fisher_information_fd(kernel: &ProbabilityKernel) -> Result<Vec<f64>> {
    let n = kernel.nodes();
    if n < 5 {
        return Err(Error::InvalidArgument(
            "finite-difference Fisher information needs at least 5 nodes".into(),
        ));
    }
    let h = kernel.phi_nodes[1] - kernel.phi_nodes[0];
    let uniform = kernel
        .phi_nodes
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if !uniform || h <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite-difference Fisher information needs an increasing uniform grid".into(),
        ));
    }
    let mut f = vec![0.0; n];
    for (r, fr) in f.iter_mut().enumerate().take(n - 2).skip(2) {
        *fr = (0..kernel.outcomes())
            .filter(|&c| kernel.probs[(r, c)] > FISHER_P_FLOOR)
            .map(|c| {
                let p = |k: usize| kernel.probs[(k, c)];
                let d = (p(r - 2) - 8.0 * p(r - 1) + 8.0 * p(r + 1) - p(r + 2)) / (12.0 * h);
                d * d / p(r)
            })
            .sum();
    }
    f[0] = f[2];
    f[1] = f[2];
    f[n - 1] = f[n - 3];
    f[n - 2] = f[n - 3];
    Ok(f)
}

/// Prior-averaged Fisher information `F̄`.
pub fn mean_fisher_information(kernel: &ProbabilityKernel) -> Result<f64> {
    let f = fisher_information(kernel)?;
    Ok(f.iter().zip(&kernel.weights).map(|(f, w)| f * w).sum())
}

/// van Trees lower bound `1/(F̄ + δφ^{-2})` on the BMSE.
pub fn van_trees_bound(mean_fisher: f64, prior: &PriorSpec) -> f64 {
    1.0 / (mean_fisher + 1.0 / prior.variance())
}

/// `(Δφ_M^GHZ)² = e^{(Nδφ)²}/N² − δφ²`; `+∞` once the exponential overflows.
pub fn ghz_effective_variance(n: usize, delta_phi: f64) -> f64 {
    let nf = n as f64;
    let x = (nf * delta_phi).powi(2);
    let e = x.exp();
    if !e.is_finite() {
        return f64::INFINITY;
    }
    e / (nf * nf) - delta_phi * delta_phi
}

/// `(Δφ_M^{πHL})² = π²/N² + 4π² erfc(π/(√2 δφ))`.
pub fn pi_hl_variance(n: usize, delta_phi: f64) -> f64 {
    let nf = n as f64;
    PI * PI / (nf * nf) + 4.0 * PI * PI * libm::erfc(PI / (std::f64::consts::SQRT_2 * delta_phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{conditional_probs, named, CircuitParams};
    use crate::spin::SpinOperatorTable;
    use nalgebra::DMatrix;

    fn constant_kernel(prior: &PriorSpec, n: usize) -> ProbabilityKernel {
        let rule = prior.rule(n);
        let mut probs = DMatrix::<f64>::zeros(rule.len(), n + 1);
        for r in 0..rule.len() {
            for c in 0..=n {
                probs[(r, c)] = 1.0 / (n + 1) as f64;
            }
        }
        ProbabilityKernel {
            phi_nodes: rule.nodes,
            weights: rule.weights,
            probs,
            dprobs: None,
        }
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::new(0.0).is_err());
        assert!(PriorSpec::new(f64::NAN).is_err());
        let p = PriorSpec::new(0.4).unwrap();
        let s: f64 = p.rule(16).weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_slope_gives_prior_variance() {
        let prior = PriorSpec::new(0.6).unwrap();
        let t = SpinOperatorTable::build(6).unwrap();
        let k = conditional_probs(&t, &named::sss(0.1, 0.2), &prior.rule(6)).unwrap();
        let r = bmse(&k, &prior, EstimatorMode::FixedA(0.0)).unwrap();
        assert!((r.bmse - 0.36).abs() < 1e-12);
        assert!(r.eff_meas_var.is_infinite());
        let c = mse_curve(&k, &Estimator::Linear { a: 0.0 });
        for (phi, e) in k.phi_nodes.iter().zip(c) {
            assert!((e - phi * phi).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_estimator_has_zero_mse() {
        let rule = Rule {
            nodes: vec![-1.0, 0.0, 1.0],
            weights: vec![1.0 / 3.0; 3],
        };
        let probs = DMatrix::<f64>::identity(3, 3);
        let k = ProbabilityKernel {
            phi_nodes: rule.nodes.clone(),
            weights: rule.weights,
            probs,
            dprobs: None,
        };
        let e = mse_curve(&k, &Estimator::Linear { a: 1.0 });
        assert!(e.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn linear_optimum_is_stationary() {
        let prior = PriorSpec::new(0.5).unwrap();
        let t = SpinOperatorTable::build(5).unwrap();
        let k = conditional_probs(&t, &named::sss(0.15, -0.4), &prior.rule(5)).unwrap();
        let best = bmse(&k, &prior, EstimatorMode::LinearOptimal).unwrap();
        for da in [-1e-3, 1e-3] {
            let r = bmse(&k, &prior, EstimatorMode::FixedA(best.a_opt + da)).unwrap();
            assert!(r.bmse > best.bmse);
        }
    }

    #[test]
    fn constant_kernel_has_no_information() {
        let prior = PriorSpec::new(0.3).unwrap();
        let k = constant_kernel(&prior, 4);
        let mm = mmse_estimator(&k);
        assert!(mm.values.iter().all(|v| v.abs() < 1e-14));
        let f = fisher_information(&k).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-20));
        let r = bmse(&k, &prior, EstimatorMode::Mmse).unwrap();
        assert!((r.bmse - 0.09).abs() < 1e-12);
    }

    #[test]
    fn estimator_hierarchy_and_parity() {
        let prior = PriorSpec::new(0.8).unwrap();
        let t = SpinOperatorTable::build(8).unwrap();
        let p = CircuitParams::new(1, 1, vec![0.2, 0.4, -0.3], vec![0.5, -0.2, 0.9], 0.0).unwrap();
        let k = conditional_probs(&t, &p, &prior.rule(8)).unwrap();
        let lin = bmse(&k, &prior, EstimatorMode::LinearOptimal).unwrap();
        let mm = bmse(&k, &prior, EstimatorMode::Mmse).unwrap();
        assert!(mm.bmse <= lin.bmse + 1e-12);
        assert!(lin.bmse <= prior.variance());
        let est = mmse_estimator(&k);
        for c in 0..=8 {
            assert!((est.values[c] + est.values[8 - c]).abs() < 1e-10);
        }
        // the table estimator through mse_curve reproduces the MMSE cost
        let curve = mse_curve(&k, &est.estimator());
        let direct: f64 = curve.iter().zip(&k.weights).map(|(e, w)| e * w).sum();
        assert!((direct - mm.bmse).abs() < 1e-12);
    }

    #[test]
    fn ramsey_fisher_at_zero_is_n() {
        for n in [2usize, 7, 16] {
            let t = SpinOperatorTable::build(n).unwrap();
            let rule = Rule {
                nodes: (-4..=4).map(|i| i as f64 * 1e-3).collect(),
                weights: vec![0.0; 9],
            };
            let mut k = conditional_probs(&t, &named::css(), &rule).unwrap();
            let f = fisher_information(&k).unwrap();
            assert!((f[4] - n as f64).abs() < 1e-9 * n as f64);
            k.dprobs = None;
            let fd = fisher_information(&k).unwrap();
            assert!((fd[4] - n as f64).abs() < 1e-4 * n as f64);
        }
    }

    #[test]
    fn fd_rejects_bad_grids() {
        let prior = PriorSpec::new(0.3).unwrap();
        let mut k = constant_kernel(&prior, 2);
        k.phi_nodes.truncate(3);
        k.probs = k.probs.rows(0, 3).into_owned();
        assert!(fisher_information_fd(&k).is_err());
    }

    #[test]
    fn van_trees_limits() {
        let prior = PriorSpec::new(0.7).unwrap();
        assert!((van_trees_bound(0.0, &prior) - 0.49).abs() < 1e-15);
        assert!(van_trees_bound(100.0, &prior) < 0.01);
    }

    #[test]
    fn ghz_formula_values() {
        let v = ghz_effective_variance(4, 0.2);
        assert!((v - (0.64f64.exp() / 16.0 - 0.04)).abs() < 1e-15);
        assert!((v - 0.078526).abs() < 1e-5);
        assert!((ghz_effective_variance(10, 1e-6) - 0.01).abs() < 1e-9);
        assert_eq!(ghz_effective_variance(1000, 1.0), f64::INFINITY);
    }

    #[test]
    fn pi_hl_formula_values() {
        let n = 8;
        assert!((pi_hl_variance(n, 1e-3) - PI * PI / 64.0).abs() < 1e-15);
        // the erfc argument is one at δφ = π/√2
        let expected = PI * PI / 64.0 + 4.0 * PI * PI * libm::erfc(1.0);
        let d1 = PI / std::f64::consts::SQRT_2;
        assert!((pi_hl_variance(n, d1) - expected).abs() < 1e-14);
    }
}
