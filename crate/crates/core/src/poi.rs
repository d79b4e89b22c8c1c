//! Phase-operator interferometer: a von Neumann measurement of the
//! Pegg–Barnett phase observable with the input state and estimator
//! optimized alternately.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::circuits::{kernel_from_state, ProbabilityKernel};
use crate::error::{Error, Result};
use crate::estimation::PriorSpec;
use crate::quadrature::Rule;
use crate::spin::{PureState, SpinBasis, SpinOperatorTable};

/// Eigenbasis `|s⟩ = (2J+1)^{-1/2} Σ_m e^{-iφ_s m}|m⟩` with
/// `φ_s = 2πs/(2J+1)`, `s = -J..J`.
#[derive(Clone, Debug)]
pub struct PhaseObservable {
    basis: SpinBasis,
    /// Column `k` holds `|s_k⟩` in the `|m⟩` basis.
    vectors: DMatrix<C64>,
}

impl PhaseObservable {
    pub fn new(n: usize) -> Result<Self> {
        let basis = SpinBasis::new(n)?;
        let dim = basis.dim();
        let norm = 1.0 / (dim as f64).sqrt();
        let phis: Vec<f64> = (0..dim).map(|k| 2.0 * PI * basis.m(k) / dim as f64).collect();
        let vectors = DMatrix::from_fn(dim, dim, |i, k| C64::from_polar(norm, -phis[k] * basis.m(i)));
        Ok(Self { basis, vectors })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `φ_s` in increasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim() as f64;
        (0..self.dim()).map(|k| 2.0 * PI * self.basis.m(k) / d).collect()
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    /// `|s⟩` for outcome index `k` (`s = k - J`).
    pub fn state(&self, k: usize) -> PureState {
        PureState::new(self.vectors.column(k).into_owned()).expect("unit vector")
    }

    /// Measurement matrix whose rows are `⟨s|`.
    pub fn measurement(&self) -> DMatrix<C64> {
        self.vectors.adjoint()
    }

    /// `p(s|φ)` for the probe state on the nodes of `rule`.
    pub fn kernel(&self, table: &SpinOperatorTable, psi: &PureState, rule: &Rule) -> Result<ProbabilityKernel> {
        table.check_dim(psi.dim())?;
        Ok(kernel_from_state(table, psi, &self.measurement(), rule))
    }

    /// `Σ_{m,m'} ψ_m* ψ_m' f(m - m') ⟨m|s⟩⟨s|m'⟩` for every outcome.
    fn outcome_sums(&self, psi: &DVector<C64>, f: impl Fn(f64) -> C64) -> Vec<C64> {
        let dim = self.dim();
        (0..dim)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..dim {
                    let a = psi[i].conj() * self.vectors[(i, k)];
                    for j in 0..dim {
                        let d = self.basis.m(i) - self.basis.m(j);
                        acc += a * self.vectors[(j, k)].conj() * psi[j] * f(d);
                    }
                }
                acc
            })
            .collect()
    }

    /// Posterior-mean estimator `e(s)` for a probe state and its BMSE.
    pub fn mmse(&self, psi: &PureState, prior: &PriorSpec) -> (Vec<f64>, f64) {
        let nu = prior.variance();
        let g = |d: f64| (-0.5 * nu * d * d).exp();
        let amps = psi.amplitudes();
        let evidence = self.outcome_sums(amps, |d| C64::new(g(d), 0.0));
        let first = self.outcome_sums(amps, |d| C64::new(0.0, nu * d * g(d)));
        let mut gain = 0.0;
        let est = evidence
            .iter()
            .zip(&first)
            .map(|(e, f)| {
                if e.re > 1e-300 {
                    gain += f.re * f.re / e.re;
                    f.re / e.re
                } else {
                    0.0
                }
            })
            .collect();
        (est, nu - gain)
    }

    /// Hermitian matrix `A` with `BMSE = ⟨ψ|A|ψ⟩` for a fixed estimator.
    pub fn cost_matrix(&self, estimator: &[f64], prior: &PriorSpec) -> Result<DMatrix<C64>> {
        let dim = self.dim();
        if estimator.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: estimator.len(),
            });
        }
        let nu = prior.variance();
        let mut a = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let d = self.basis.m(i) - self.basis.m(j);
                let g = (-0.5 * nu * d * d).exp();
                let mut acc = C64::new(0.0, 0.0);
                for (k, &e) in estimator.iter().enumerate() {
                    let w = self.vectors[(i, k)] * self.vectors[(j, k)].conj();
                    acc += w * C64::new(nu - nu * nu * d * d + e * e, -2.0 * e * nu * d);
                }
                a[(i, j)] = acc * g;
            }
        }
        Ok(a)
    }
}

/// Alternating state/estimator optimization outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiResult {
    /// Optimal probe amplitudes as `[re, im]` pairs.
    pub state: Vec<[f64; 2]>,
    pub estimator: Vec<f64>,
    pub bmse: f64,
    /// BMSE after every half step, starting with the `|s=0⟩` probe.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PoiResult {
    pub fn probe(&self) -> Result<PureState> {
        PureState::normalized(DVector::from_iterator(
            self.state.len(),
            self.state.iter().map(|z| C64::new(z[0], z[1])),
        ))
    }

    pub fn posterior_over_prior(&self, prior: &PriorSpec) -> f64 {
        self.bmse.sqrt() / prior.delta_phi
    }
}

/// Alternates the MMSE estimator for the current probe with the
/// minimum-eigenvalue probe for the current estimator, starting from
/// `|s=0⟩`. Stops when one full iteration lowers the BMSE by less than `tol`.
pub fn poi_optimize(n: usize, prior: &PriorSpec, max_iters: usize, tol: f64) -> Result<PoiResult> {
    let obs = PhaseObservable::new(n)?;
    let dim = obs.dim();
    // |s=0⟩ for integer J; for half-integer J the same uniform superposition,
    // which is symmetric about φ = 0 unlike either neighbouring eigenvector
    let mut psi = PureState::normalized(DVector::from_element(dim, C64::new(1.0, 0.0)))?;
    let (mut est, mut cost) = obs.mmse(&psi, prior);
    let mut trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let before = cost;
        let a = obs.cost_matrix(&est, prior)?;
        let eig = SymmetricEigen::new(a);
        let (k, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty spectrum");
        // the eigenproblem cannot do worse than the current probe
        if lambda <= cost {
            psi = PureState::normalized(eig.eigenvectors.column(k).into_owned())?;
            cost = lambda;
        }
        trace.push(cost);
        let (e, c) = obs.mmse(&psi, prior);
        if c <= cost {
            est = e;
            cost = c;
        }
        trace.push(cost);
        if before - cost < tol {
            converged = true;
            break;
        }
    }
    Ok(PoiResult {
        state: psi.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
        estimator: est,
        bmse: cost,
        trace,
        iterations,
        converged,
    })
}

/// `χ = min(curve)/min(reference)` over curves sampled on a shared grid.
pub fn performance_ratio(curve: &[f64], reference: &[f64]) -> Result<f64> {
    if curve.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("empty curve".into()));
    }
    let min = |c: &[f64]| c.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min(curve) / min(reference))
}
