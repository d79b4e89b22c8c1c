//! Brute-force references on the full `2^N` product space.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use vramsey::{Axis, CircuitParams};

const I: C64 = C64::new(0.0, 1.0);

fn pauli(axis: Axis) -> DMatrix<C64> {
    let (a, b, c, d) = match axis {
        Axis::X => (0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()),
        Axis::Y => (0.0.into(), -I, I, 0.0.into()),
        Axis::Z => (C64::from(1.0), 0.0.into(), 0.0.into(), C64::from(-1.0)),
    };
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// `N` spin-½ particles, bit `k` of a basis index set ⇔ particle `k` up.
pub struct ProductSpace {
    pub n: usize,
}

impl ProductSpace {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `σ^μ` on particle `k`, identity elsewhere.
    pub fn local(&self, axis: Axis, k: usize) -> DMatrix<C64> {
        let s = pauli(axis);
        let mut m = DMatrix::<C64>::zeros(self.dim(), self.dim());
        for col in 0..self.dim() {
            let bit = (col >> k) & 1;
            for out_bit in 0..2 {
                // basis state 1 is spin up, the first row of σ^z
                let amp = s[(1 - out_bit, 1 - bit)];
                if amp != C64::from(0.0) {
                    let row = (col & !(1 << k)) | (out_bit << k);
                    m[(row, col)] += amp;
                }
            }
        }
        m
    }

    pub fn collective(&self, axis: Axis) -> DMatrix<C64> {
        (0..self.n).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, k| acc + self.local(axis, k) * C64::from(0.5))
    }

    /// `exp(−i(lin·J + quad·J²))` by diagonalizing `J`.
    pub fn gate(&self, axis: Axis, lin: f64, quad: f64) -> DMatrix<C64> {
        let eig = self.collective(axis).symmetric_eigen();
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-I * (lin * l + quad * l * l)).exp()));
        &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
    }

    pub fn magnetization(&self, index: usize) -> f64 {
        index.count_ones() as f64 - self.n as f64 / 2.0
    }

    /// Columns are the Dicke states `|N/2, m⟩`, `m = i − N/2`.
    pub fn dicke(&self) -> DMatrix<C64> {
        let mut v = DMatrix::<C64>::zeros(self.dim(), self.n + 1);
        for idx in 0..self.dim() {
            v[(idx, idx.count_ones() as usize)] = 1.0.into();
        }
        for mut c in v.column_iter_mut() {
            let norm = c.norm();
            c /= C64::from(norm);
        }
        v
    }

    pub fn all_down(&self) -> DVector<C64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0.into();
        v
    }

    pub fn entangle(&self, params: &CircuitParams) -> DVector<C64> {
        let mut psi = self.gate(Axis::Y, std::f64::consts::FRAC_PI_2, 0.0) * self.all_down();
        for l in params.theta.chunks_exact(3) {
            psi = self.gate(Axis::Z, 0.0, l[0]) * psi;
            psi = self.gate(Axis::X, l[2], l[1]) * psi;
        }
        psi
    }

    pub fn decoder(&self, vartheta: &[f64]) -> DMatrix<C64> {
        let mut u = DMatrix::identity(self.dim(), self.dim());
        for l in vartheta.chunks_exact(3).rev() {
            u = self.gate(Axis::X, l[2], l[1]) * u;
            u = self.gate(Axis::Z, 0.0, l[0]) * u;
        }
        self.gate(Axis::X, std::f64::consts::FRAC_PI_2, 0.0) * u
    }

    /// `dρ/dt = Σ_k L_k ρ L_k† − ½{L_k†L_k, ρ}` with `L_k = σ^z_k/2`,
    /// integrated by classical Runge–Kutta over unit time at rate `gamma_t`.
    /// `L_k` is diagonal, so the dissipator acts entrywise.
    pub fn lindblad_dephase(&self, rho: &DMatrix<C64>, gamma_t: f64, steps: usize) -> DMatrix<C64> {
        let z = |idx: usize, k: usize| if (idx >> k) & 1 == 1 { 0.5 } else { -0.5 };
        let dim = self.dim();
        let rate = DMatrix::<f64>::from_fn(dim, dim, |a, b| {
            (0..self.n).map(|k| z(a, k) * z(b, k) - 0.25).sum::<f64>() * gamma_t
        });
        let deriv = |r: &DMatrix<C64>| r.zip_map(&rate, |x, g| x * g);
        let h = 1.0 / steps as f64;
        let mut r = rho.clone();
        for _ in 0..steps {
            let k1 = deriv(&r);
            let k2 = deriv(&(&r + &k1 * C64::from(h * 0.5)));
            let k3 = deriv(&(&r + &k2 * C64::from(h * 0.5)));
            let k4 = deriv(&(&r + &k3 * C64::from(h)));
            r += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
        }
        r
    }

    /// `p(m|φ)` at each phase of the circuit with dephasing exposure
    /// `gamma_t` during the interrogation.
    pub fn kernel_rows(&self, params: &CircuitParams, phis: &[f64], gamma_t: f64) -> Vec<Vec<f64>> {
        let psi = self.entangle(params);
        let mut rho = &psi * psi.adjoint();
        if gamma_t > 0.0 {
            rho = self.lindblad_dephase(&rho, gamma_t, 400);
        }
        let decoder = self.decoder(&params.vartheta);
        phis.iter()
            .map(|&phi| {
                let u = &decoder * self.gate(Axis::Z, phi, 0.0);
                let out = &u * &rho * u.adjoint();
                let mut p = vec![0.0; self.n + 1];
                for idx in 0..self.dim() {
                    p[idx.count_ones() as usize] += out[(idx, idx)].re;
                }
                p
            })
            .collect()
    }
}

/// Seeded angles in `[−π, π)`.
pub fn angles(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(-PI..PI)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
