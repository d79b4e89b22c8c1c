//! Local dephasing `L(ρ) = ¼ Σ_k (σ^z_k ρ σ^z_k − ρ)` on permutation-invariant
//! states.
//!
//! A permutation-invariant state is `⊕_j ρ^{(j)} ⊗ 1_{d_j}`; only the blocks
//! `ρ^{(j)}` are stored. The channel couples sectors `j` and `j ± 1` at fixed
//! `(m, m')`, so for every pair of magnetizations it reduces to a small real
//! matrix over the admissible sectors, exponentiated once per exposure.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::circuits::{entangle, CircuitParams, ProbabilityKernel};
use crate::error::{Error, Result};
use crate::quadrature::Rule;
use crate::spin::{Axis, SpinOperatorTable};

/// `ln d_j` for `n` spin-½ particles, `d_j = (2j+1) n! / ((n/2+j+1)! (n/2-j)!)`.
pub fn ln_degeneracy(n: usize, j: f64) -> f64 {
    let nf = n as f64;
    (2.0 * j + 1.0).ln() + libm::lgamma(nf + 1.0) - libm::lgamma(nf / 2.0 + j + 2.0) - libm::lgamma(nf / 2.0 - j + 1.0)
}

/// Multiplicity of total spin `j` among `n` spin-½ particles.
pub fn degeneracy(n: usize, j: f64) -> f64 {
    let d = ln_degeneracy(n, j).exp();
    if d < 9.0e15 {
        d.round()
    } else {
        d
    }
}

/// Total spins `N/2, N/2 − 1, …` down to 0 or ½.
pub fn sector_spins(n: usize) -> Vec<f64> {
    (0..=n / 2).map(|q| n as f64 / 2.0 - q as f64).collect()
}

/// Matrix element of `σ^z` on the last particle between `|j, m⟩` and
/// `|j', m⟩`, both built from a spin `j1` of the other particles.
fn sigma_z_element(jp: f64, j: f64, j1: f64, m: f64) -> f64 {
    let up = j1 + 0.5;
    let denom = 2.0 * j1 + 1.0;
    if (j - jp).abs() < 0.25 {
        if (j - up).abs() < 0.25 {
            2.0 * m / denom
        } else {
            -2.0 * m / denom
        }
    } else {
        -2.0 * (up * up - m * m).max(0.0).sqrt() / denom
    }
}

/// Generator restricted to the sectors admissible for `(m, m')`, ordered by
/// decreasing `j` starting at `N/2`.
pub fn pair_generator(n: usize, m: f64, mp: f64) -> DMatrix<f64> {
    let jmax = n as f64 / 2.0;
    let jmin = m.abs().max(mp.abs());
    let count = (jmax - jmin + 1e-9).floor() as usize + 1;
    let spin = |q: usize| jmax - q as f64;
    let mut phi = DMatrix::<f64>::zeros(count, count);
    if n == 0 {
        return phi;
    }
    let ln_dn: Vec<f64> = (0..count).map(|q| ln_degeneracy(n, spin(q))).collect();
    for (qo, &ln_do) in ln_dn.iter().enumerate() {
        let jp = spin(qo);
        for j1 in [jp - 0.5, jp + 0.5] {
            if j1 < -1e-9 || j1 > (n as f64 - 1.0) / 2.0 + 1e-9 {
                continue;
            }
            let weight = n as f64 * (ln_degeneracy(n - 1, j1) - ln_do).exp();
            for j in [j1 - 0.5, j1 + 0.5] {
                if j < jmin - 1e-9 || j > jmax + 1e-9 {
                    continue;
                }
                let qi = (jmax - j).round() as usize;
                phi[(qo, qi)] += weight * sigma_z_element(jp, j, j1, m) * sigma_z_element(jp, j, j1, mp);
            }
        }
    }
    (phi - DMatrix::identity(count, count) * n as f64) * 0.25
}

/// `exp(γT·L)` tabulated for every pair of magnetizations.
#[derive(Clone, Debug)]
pub struct DephasingChannel {
    n: usize,
    gamma_t: f64,
    /// Indexed by `i * (N+1) + i'` with `m = i − N/2`.
    maps: Vec<DMatrix<f64>>,
}

impl DephasingChannel {
    pub fn new(n: usize, gamma_t: f64) -> Result<Self> {
        if !gamma_t.is_finite() {
            return Err(Error::NonFinite("dephasing exposure"));
        }
        if gamma_t < 0.0 {
            return Err(Error::NegativeExposure(gamma_t));
        }
        if n == 0 {
            return Err(Error::InvalidAtomNumber("N must be at least 1".into()));
        }
        let dim = n + 1;
        let half = n as f64 / 2.0;
        let maps = (0..dim * dim)
            .into_par_iter()
            .map(|idx| {
                let (i, ip) = (idx / dim, idx % dim);
                let l = pair_generator(n, i as f64 - half, ip as f64 - half);
                (l * gamma_t).exp()
            })
            .collect();
        Ok(Self { n, gamma_t, maps })
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    pub fn exposure(&self) -> f64 {
        self.gamma_t
    }

    fn map(&self, i: usize, ip: usize) -> &DMatrix<f64> {
        &self.maps[i * (self.n + 1) + ip]
    }

    pub fn apply(&self, state: &PIBlockState) -> Result<PIBlockState> {
        if state.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: state.n,
            });
        }
        let mut out = PIBlockState::zeros(self.n);
        let dim = self.n + 1;
        let jmax = self.n as f64 / 2.0;
        for i in 0..dim {
            for ip in 0..dim {
                let e = self.map(i, ip);
                let count = e.nrows();
                let input = DVector::<C64>::from_fn(count, |q, _| state.element(q, i, ip));
                for qo in 0..count {
                    let mut acc = C64::new(0.0, 0.0);
                    for qi in 0..count {
                        acc += input[qi] * e[(qo, qi)];
                    }
                    let off = (jmax - out.spin(qo)) as usize;
                    out.blocks[qo][(i - off, ip - off)] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Factors `F_j[m, m']` with `ρ'_j = F_j ∘ ρ` for an input supported on
    /// `j = N/2` only; one matrix per sector in block coordinates.
    pub fn symmetric_input_factors(&self) -> Vec<DMatrix<f64>> {
        let jmax = self.n as f64 / 2.0;
        sector_spins(self.n)
            .iter()
            .enumerate()
            .map(|(q, &j)| {
                let d = (2.0 * j + 1.0).round() as usize;
                let off = (jmax - j).round() as usize;
                DMatrix::from_fn(d, d, |a, b| self.map(a + off, b + off)[(q, 0)])
            })
            .collect()
    }
}

/// Blocks `ρ^{(j)}` with multiplicities `d_j`; `Σ_j d_j tr ρ^{(j)} = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PIBlockState {
    n: usize,
    /// Block `q` has spin `j = N/2 − q`, rows indexed by `m + j`.
    pub blocks: Vec<DMatrix<C64>>,
    pub degeneracies: Vec<f64>,
}

impl PIBlockState {
    pub fn zeros(n: usize) -> Self {
        let spins = sector_spins(n);
        Self {
            n,
            blocks: spins
                .iter()
                .map(|&j| {
                    let d = (2.0 * j + 1.0).round() as usize;
                    DMatrix::zeros(d, d)
                })
                .collect(),
            degeneracies: spins.iter().map(|&j| degeneracy(n, j)).collect(),
        }
    }

    /// `|ψ⟩⟨ψ|` in the symmetric sector.
    pub fn from_pure(amplitudes: &DVector<C64>) -> Result<Self> {
        let n = amplitudes.len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidAtomNumber("state must have at least two amplitudes".into())
        })?;
        let mut s = Self::zeros(n);
        s.blocks[0] = amplitudes * amplitudes.adjoint();
        Ok(s)
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    pub fn spin(&self, q: usize) -> f64 {
        self.n as f64 / 2.0 - q as f64
    }

    /// `ρ^{(j_q)}[m, m']` for global indices `m = i − N/2`; zero outside the block.
    fn element(&self, q: usize, i: usize, ip: usize) -> C64 {
        let off = q;
        let d = self.blocks[q].nrows();
        if i < off || ip < off || i - off >= d || ip - off >= d {
            return C64::new(0.0, 0.0);
        }
        self.blocks[q][(i - off, ip - off)]
    }

    pub fn trace(&self) -> f64 {
        self.blocks
            .iter()
            .zip(&self.degeneracies)
            .map(|(b, d)| d * b.trace().re)
            .sum()
    }

    /// Largest deviation from Hermiticity across blocks.
    pub fn hermiticity_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b - b.adjoint()).map(|z| z.norm()).max())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of any `d_j ρ^{(j)}`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .zip(&self.degeneracies)
            .map(|(b, d)| {
                let h = (b + b.adjoint()) * C64::new(0.5 * d, 0.0);
                h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Outcome distribution of a `J_z` measurement, indexed by `m + N/2`.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n + 1];
        for (q, (b, d)) in self.blocks.iter().zip(&self.degeneracies).enumerate() {
            for k in 0..b.nrows() {
                p[k + q] += d * b[(k, k)].re;
            }
        }
        p
    }
}

/// Spin tables for every sector `j ≥ ½`, used to apply collective gates
/// block by block.
#[derive(Clone, Debug)]
pub struct SectorTables {
    n: usize,
    tables: Vec<Option<SpinOperatorTable>>,
}

impl SectorTables {
    pub fn new(n: usize) -> Result<Self> {
        let tables = sector_spins(n)
            .iter()
            .map(|&j| {
                let atoms = (2.0 * j).round() as usize;
                if atoms == 0 {
                    Ok(None)
                } else {
                    SpinOperatorTable::build(atoms).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, tables })
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    /// Table for sector `q`, `None` for the scalar `j = 0` sector.
    pub fn table(&self, q: usize) -> Option<&SpinOperatorTable> {
        self.tables[q].as_ref()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Decoder unitary of every sector.
    pub fn decoder_matrices(&self, vartheta: &[f64]) -> Vec<DMatrix<C64>> {
        self.tables
            .iter()
            .map(|t| match t {
                Some(t) => crate::circuits::decoder_matrix(t, vartheta),
                None => DMatrix::identity(1, 1),
            })
            .collect()
    }

    /// Applies `exp(−i(lin·J_μ + quad·J_μ²))` to every block, `U ρ U†`.
    pub fn apply_gate(&self, state: &mut PIBlockState, axis: Axis, lin: f64, quad: f64) {
        for (t, b) in self.tables.iter().zip(state.blocks.iter_mut()) {
            if let Some(t) = t {
                let u = t.gate_matrix(axis, lin, quad);
                *b = &u * &*b * u.adjoint();
            }
        }
    }
}

/// `exp(γT·L)` applied to a block state.
pub fn dephase(state: &PIBlockState, gamma_t: f64) -> Result<PIBlockState> {
    DephasingChannel::new(state.atoms(), gamma_t)?.apply(state)
}

/// `p(m|φ, γT)` for a circuit whose entangled state dephases during the
/// interrogation.
pub fn conditional_probs_dephased(
    table: &SpinOperatorTable,
    params: &CircuitParams,
    rule: &Rule,
    gamma_t: f64,
) -> Result<ProbabilityKernel> {
    let channel = DephasingChannel::new(table.atoms(), gamma_t)?;
    let sectors = SectorTables::new(table.atoms())?;
    kernel_with_channel(table, &sectors, &channel, params, rule)
}

/// As [`conditional_probs_dephased`] with a precomputed channel.
pub fn kernel_with_channel(
    table: &SpinOperatorTable,
    sectors: &SectorTables,
    channel: &DephasingChannel,
    params: &CircuitParams,
    rule: &Rule,
) -> Result<ProbabilityKernel> {
    let psi = entangle(table, params)?;
    let rho = channel.apply(&PIBlockState::from_pure(psi.amplitudes())?)?;
    let us = sectors.decoder_matrices(&params.vartheta);
    let n = table.atoms();
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = rule
        .nodes
        .par_iter()
        .map(|&phi| {
            let mut p = vec![0.0; n + 1];
            let mut dp = vec![0.0; n + 1];
            for (q, (b, u)) in rho.blocks.iter().zip(&us).enumerate() {
                let d = rho.degeneracies[q];
                let j = rho.spin(q);
                let dim = b.nrows();
                let rot = DMatrix::from_fn(dim, dim, |a, c| {
                    let dm = (a as f64 - j) - (c as f64 - j);
                    b[(a, c)] * C64::from_polar(1.0, -phi * dm)
                });
                let drot = DMatrix::from_fn(dim, dim, |a, c| {
                    let dm = (a as f64 - j) - (c as f64 - j);
                    rot[(a, c)] * C64::new(0.0, -dm)
                });
                let x = u * rot;
                let dx = u * drot;
                for k in 0..dim {
                    let mut acc = C64::new(0.0, 0.0);
                    let mut dacc = C64::new(0.0, 0.0);
                    for c in 0..dim {
                        acc += x[(k, c)] * u[(k, c)].conj();
                        dacc += dx[(k, c)] * u[(k, c)].conj();
                    }
                    p[k + q] += d * acc.re;
                    dp[k + q] += d * dacc.re;
                }
            }
            (p, Some(dp))
        })
        .collect();
    Ok(ProbabilityKernel::from_rows(rule, n + 1, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{conditional_probs, named};

    #[test]
    fn degeneracies() {
        assert_eq!(degeneracy(4, 2.0), 1.0);
        assert_eq!(degeneracy(4, 1.0), 3.0);
        assert_eq!(degeneracy(4, 0.0), 2.0);
        assert_eq!(degeneracy(5, 0.5), 5.0);
        // Σ_j d_j (2j+1) = 2^N
        for n in [1usize, 6, 11, 30] {
            let total: f64 = sector_spins(n)
                .iter()
                .map(|&j| degeneracy(n, j) * (2.0 * j + 1.0))
                .sum();
            assert!((total - 2f64.powi(n as i32)).abs() < 1e-6 * total);
        }
    }

    #[test]
    fn zero_exposure_is_identity() {
        let t = SpinOperatorTable::build(5).unwrap();
        let psi = entangle(&t, &named::sss(0.3, 0.1)).unwrap();
        let s = PIBlockState::from_pure(psi.amplitudes()).unwrap();
        let out = dephase(&s, 0.0).unwrap();
        for (a, b) in out.blocks.iter().zip(&s.blocks) {
            assert!((a - b).map(|z| z.norm()).max() < 1e-14);
        }
        assert!(dephase(&s, -1.0).is_err());
    }

    #[test]
    fn single_atom_coherence_decay() {
        let amps = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let s = PIBlockState::from_pure(&amps).unwrap();
        for gt in [0.1, 1.0, 3.0] {
            let out = dephase(&s, gt).unwrap();
            let b = &out.blocks[0];
            assert!((b[(0, 1)] - s.blocks[0][(0, 1)] * (-gt / 2.0).exp()).norm() < 1e-13);
            assert!((b[(0, 0)].re - 0.36).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_hermiticity_positivity() {
        let n = 9;
        let t = SpinOperatorTable::build(n).unwrap();
        let p = CircuitParams::new(1, 0, vec![0.4, 0.2, 0.7], vec![], 0.0).unwrap();
        let psi = entangle(&t, &p).unwrap();
        let s = PIBlockState::from_pure(psi.amplitudes()).unwrap();
        for gt in [0.05, 0.5, 2.0, 10.0] {
            let out = dephase(&s, gt).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-9);
            assert!(out.hermiticity_error() < 1e-12);
            assert!(out.min_eigenvalue() > -1e-10);
        }
    }

    #[test]
    fn factors_match_full_channel() {
        let n = 6;
        let t = SpinOperatorTable::build(n).unwrap();
        let psi = entangle(&t, &named::sss(0.5, 0.3)).unwrap();
        let s = PIBlockState::from_pure(psi.amplitudes()).unwrap();
        let ch = DephasingChannel::new(n, 0.7).unwrap();
        let out = ch.apply(&s).unwrap();
        let full = psi.amplitudes() * psi.amplitudes().adjoint();
        for (q, f) in ch.symmetric_input_factors().iter().enumerate() {
            let d = f.nrows();
            for a in 0..d {
                for b in 0..d {
                    let expect = full[(a + q, b + q)] * f[(a, b)];
                    assert!((out.blocks[q][(a, b)] - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn dephased_kernel_limits() {
        let n = 6;
        let t = SpinOperatorTable::build(n).unwrap();
        let p = named::sss(0.2, 0.4);
        let rule = Rule {
            nodes: vec![-0.5, 0.1, 0.9],
            weights: vec![0.0; 3],
        };
        let pure = conditional_probs(&t, &p, &rule).unwrap();
        let k0 = conditional_probs_dephased(&t, &p, &rule, 0.0).unwrap();
        assert!((&pure.probs - &k0.probs).amax() < 1e-12);
        assert!((pure.dprobs.unwrap() - k0.dprobs.unwrap()).amax() < 1e-12);
        let kinf = conditional_probs_dephased(&t, &named::css(), &rule, 60.0).unwrap();
        assert!(kinf.max_row_error() < 1e-9);
        for r in 1..3 {
            for c in 0..=n {
                assert!((kinf.probs[(r, c)] - kinf.probs[(0, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn block_gates_preserve_trace() {
        let n = 5;
        let t = SpinOperatorTable::build(n).unwrap();
        let psi = entangle(&t, &named::sss(0.5, 0.3)).unwrap();
        let mut s = dephase(&PIBlockState::from_pure(psi.amplitudes()).unwrap(), 0.8).unwrap();
        let tabs = SectorTables::new(n).unwrap();
        tabs.apply_gate(&mut s, Axis::X, 0.4, 0.9);
        tabs.apply_gate(&mut s, Axis::Y, 1.1, 0.0);
        assert!((s.trace() - 1.0).abs() < 1e-12);
        let p = s.probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
