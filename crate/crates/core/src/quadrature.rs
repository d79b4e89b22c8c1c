//! Quadrature rules for phase averages and sphere integrals.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Nodes and weights of a one-dimensional rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Golub–Welsch for a symmetric Jacobi matrix with zero diagonal.
fn golub_welsch(off_diag: &[f64], mu0: f64) -> Rule {
    let n = off_diag.len() + 1;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in off_diag.iter().enumerate() {
        jac[(k, k + 1)] = b;
        jac[(k + 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize: the rules below are even
    for i in 0..n / 2 {
        let (a, b) = (pairs[i], pairs[n - 1 - i]);
        let x = 0.5 * (b.0 - a.0);
        let w = 0.5 * (a.1 + b.1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
pub fn gauss_hermite(order: usize) -> Rule {
    assert!(order >= 1);
    let off: Vec<f64> = (1..order).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&off, PI.sqrt())
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Rule {
    assert!(order >= 1);
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// Gauss–Hermite rule mapped onto a centred normal density with standard
/// deviation `sigma`; weights sum to one.
pub fn normal_gauss_hermite(sigma: f64, order: usize) -> Rule {
    let base = gauss_hermite(order);
    let scale = std::f64::consts::SQRT_2 * sigma;
    Rule {
        nodes: base.nodes.iter().map(|x| x * scale).collect(),
        weights: base.weights.iter().map(|w| w / PI.sqrt()).collect(),
    }
}

/// Normal density with zero mean.
pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Half-width of the uniform grid in units of `sigma`.
pub const TRAPEZOID_HALF_WIDTH: f64 = 12.0;

/// Uniform-grid rule for a centred normal density, sized for integrands that
/// are trigonometric polynomials of degree up to `max_frequency` times a
/// smooth factor.
///
/// By Poisson summation the aliasing error of the trapezoid sum for
/// `exp(iωφ)·P(φ)` is of order `exp(-(2π/h - ω)² σ²/2)`; the spacing below
/// keeps that exponent beyond 70 for all `|ω| ≤ max_frequency + 2`.
pub fn normal_trapezoid(sigma: f64, max_frequency: usize) -> Rule {
    let band = 2.0 * (max_frequency as f64 + 2.0) + 12.0 / sigma;
    let h = 2.0 * PI / band;
    let half = (TRAPEZOID_HALF_WIDTH * sigma / h).ceil() as i64;
    let nodes: Vec<f64> = (-half..=half).map(|k| k as f64 * h).collect();
    let weights = nodes.iter().map(|&x| h * normal_pdf(x, sigma)).collect();
    Rule { nodes, weights }
}
