//! Rydberg-dressed interactions on a lattice, simulated in the full `2^N`
//! product space.
//!
//! Basis index bit `k` is particle `k`, set for spin up (`s_k = +1`). The
//! dressing Hamiltonian `H_z/V0 = Σ_{k,l} v_kl σ^z_k σ^z_l` is diagonal, so a
//! z gate is a phase per bit string; x gates conjugate with a Hadamard on
//! every site. In that rotated frame `σ^x ↦ −σ^z` for the ordering
//! (down, up) used here.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{CircuitParams, ProbabilityKernel, Template};
use crate::error::{Error, Result};
use crate::estimation::{CostReport, PriorSpec};
use crate::optimizer::Objective;
use crate::quadrature::Rule;
use crate::spin::Axis;

/// Largest particle number simulated unless overridden.
pub const DEFAULT_ATOM_CAP: usize = 16;

/// Particle positions in units of the lattice spacing and the soft-core
/// radius `R_C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub positions: Vec<[f64; 2]>,
    pub rc: f64,
}

/// JSON geometry: either a named lattice or explicit positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Lattice {
        lattice: String,
        nx: usize,
        ny: usize,
        #[serde(default = "unit_spacing")]
        spacing: f64,
        #[serde(rename = "Rc")]
        rc: f64,
    },
    Positions {
        positions: Vec<[f64; 2]>,
        #[serde(rename = "Rc")]
        rc: f64,
    },
}

fn unit_spacing() -> f64 {
    1.0
}

impl GeometrySpec {
    pub fn build(&self) -> Result<LatticeGeometry> {
        match self {
            GeometrySpec::Lattice {
                lattice,
                nx,
                ny,
                spacing,
                rc,
            } => {
                if lattice != "square" {
                    return Err(Error::InvalidArgument(format!("unknown lattice '{lattice}'")));
                }
                if !(*spacing > 0.0) {
                    return Err(Error::InvalidArgument("spacing must be positive".into()));
                }
                LatticeGeometry::square(*nx, *ny, *rc / spacing)
            }
            GeometrySpec::Positions { positions, rc } => LatticeGeometry::new(positions.clone(), *rc),
        }
    }
}

impl LatticeGeometry {
    pub fn new(positions: Vec<[f64; 2]>, rc: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidAtomNumber("geometry has no sites".into()));
        }
        if !(rc > 0.0) || !rc.is_finite() {
            return Err(Error::InvalidArgument(format!("interaction radius must be positive, got {rc}")));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("site position"));
        }
        for (k, p) in positions.iter().enumerate() {
            if positions[..k].iter().any(|q| q == p) {
                return Err(Error::InvalidArgument(format!("duplicate site at {p:?}")));
            }
        }
        Ok(Self { positions, rc })
    }

    /// `nx × ny` square lattice with unit spacing.
    pub fn square(nx: usize, ny: usize, rc: f64) -> Result<Self> {
        let positions = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| [x as f64, y as f64]))
            .collect();
        Self::new(positions, rc)
    }

    pub fn atoms(&self) -> usize {
        self.positions.len()
    }

    /// `V_kl / V0 = (R_C⁶/4) / (|r_k − r_l|⁶ + R_C⁶)`, diagonal included.
    pub fn couplings(&self) -> DMatrix<f64> {
        let n = self.atoms();
        let rc6 = self.rc.powi(6);
        DMatrix::from_fn(n, n, |k, l| {
            let [xk, yk] = self.positions[k];
            let [xl, yl] = self.positions[l];
            let r2 = (xk - xl).powi(2) + (yk - yl).powi(2);
            0.25 * rc6 / (r2.powi(3) + rc6)
        })
    }
}

/// Amplitudes over the `2^N` computational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub amplitudes: Vec<C64>,
}

impl FullState {
    pub fn all_down(n: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &FullState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Precomputed diagonal energies for one geometry.
#[derive(Clone, Debug)]
pub struct DressingModel {
    geometry: LatticeGeometry,
    n: usize,
    /// `E_z(b)/V0`.
    energies: Vec<f64>,
    /// Magnetization `m(b)`.
    magnetization: Vec<f64>,
    weight: Vec<usize>,
}

impl DressingModel {
    pub fn new(geometry: LatticeGeometry) -> Result<Self> {
        Self::with_cap(geometry, DEFAULT_ATOM_CAP)
    }

    pub fn with_cap(geometry: LatticeGeometry, cap: usize) -> Result<Self> {
        let n = geometry.atoms();
        if n > cap || n >= usize::BITS as usize - 1 {
            return Err(Error::MemoryCap(format!(
                "{n} sites need 2^{n} amplitudes; the cap is {cap} sites"
            )));
        }
        let v = geometry.couplings();
        let dim = 1usize << n;
        let energies = (0..dim)
            .into_par_iter()
            .map(|b| {
                let s: Vec<f64> = (0..n).map(|k| if b >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
                let mut e = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        e += v[(k, l)] * s[k] * s[l];
                    }
                }
                e
            })
            .collect();
        let weight: Vec<usize> = (0..dim).map(|b: usize| b.count_ones() as usize).collect();
        let magnetization = weight.iter().map(|&w| w as f64 - n as f64 / 2.0).collect();
        Ok(Self {
            geometry,
            n,
            energies,
            magnetization,
            weight,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    fn diagonal(&self, quad: f64, lin: f64, sign: f64, v: &mut [C64]) {
        v.par_iter_mut().enumerate().for_each(|(b, a)| {
            let phase = quad * self.energies[b] + sign * lin * self.magnetization[b];
            *a *= C64::from_polar(1.0, -phase);
        });
    }

    /// `H^{⊗N}` in place (self-inverse).
    fn hadamard_all(&self, v: &mut [C64]) {
        for k in 0..self.n {
            let bit = 1usize << k;
            for b in 0..v.len() {
                if b & bit == 0 {
                    let (x, y) = (v[b], v[b | bit]);
                    v[b] = (x + y) * FRAC_1_SQRT_2;
                    v[b | bit] = (x - y) * FRAC_1_SQRT_2;
                }
            }
        }
    }

    /// `exp(−i(lin·J_μ + quad·H^D_μ/V0))` for μ ∈ {x, z}; y rotations take
    /// `quad = 0`.
    pub fn apply(&self, axis: Axis, lin: f64, quad: f64, state: &mut FullState) {
        let v = state.amplitudes.as_mut_slice();
        match axis {
            Axis::Z => self.diagonal(quad, lin, 1.0, v),
            Axis::X => {
                self.hadamard_all(v);
                self.diagonal(quad, lin, -1.0, v);
                self.hadamard_all(v);
            }
            Axis::Y => {
                debug_assert!(quad == 0.0, "no y dressing gate");
                self.diagonal(0.0, -FRAC_PI_2, 1.0, v);
                self.hadamard_all(v);
                self.diagonal(0.0, lin, -1.0, v);
                self.hadamard_all(v);
                self.diagonal(0.0, FRAC_PI_2, 1.0, v);
            }
        }
    }

    /// `D_μ(θ)` alone.
    pub fn dressing_gate(&self, axis: Axis, theta: f64, state: &mut FullState) -> Result<()> {
        if axis == Axis::Y {
            return Err(Error::InvalidArgument("dressing gates act along x or z".into()));
        }
        if !theta.is_finite() {
            return Err(Error::NonFinite("gate angle"));
        }
        self.apply(axis, 0.0, theta, state);
        Ok(())
    }

    /// Entangler with dressing gates in place of twisting.
    pub fn entangle(&self, params: &CircuitParams) -> Result<FullState> {
        params.validate()?;
        let mut s = FullState::all_down(self.n);
        self.apply(Axis::Y, FRAC_PI_2, 0.0, &mut s);
        for layer in params.theta.chunks_exact(3) {
            self.apply(Axis::Z, 0.0, layer[0], &mut s);
            self.apply(Axis::X, layer[2], layer[1], &mut s);
        }
        Ok(s)
    }

    pub fn decode(&self, vartheta: &[f64], state: &mut FullState) {
        for layer in vartheta.chunks_exact(3).rev() {
            self.apply(Axis::X, layer[2], layer[1], state);
            self.apply(Axis::Z, 0.0, layer[0], state);
        }
        self.apply(Axis::X, FRAC_PI_2, 0.0, state);
    }

    /// `K[o][m][m'] = ⟨χ_{m'}|P_o|χ_m⟩` with `χ_m = U_De P_m U_En|ψ0⟩`, so that
    /// `p(o|φ) = Σ_{m,m'} e^{−iφ(m−m')} K[o][m][m']`.
    fn gram(&self, params: &CircuitParams) -> Result<Vec<DMatrix<C64>>> {
        let psi = self.entangle(params)?;
        let dim = self.n + 1;
        let chis: Vec<Vec<C64>> = (0..dim)
            .into_par_iter()
            .map(|w| {
                let mut s = FullState {
                    amplitudes: psi
                        .amplitudes
                        .iter()
                        .zip(&self.weight)
                        .map(|(&a, &wb)| if wb == w { a } else { C64::new(0.0, 0.0) })
                        .collect(),
                };
                self.decode(&params.vartheta, &mut s);
                s.amplitudes
            })
            .collect();
        let mut k = vec![DMatrix::<C64>::zeros(dim, dim); dim];
        for (b, &o) in self.weight.iter().enumerate() {
            let g = &mut k[o];
            for m in 0..dim {
                let cm = chis[m][b];
                if cm == C64::new(0.0, 0.0) {
                    continue;
                }
                for mp in 0..dim {
                    g[(m, mp)] += chis[mp][b].conj() * cm;
                }
            }
        }
        Ok(k)
    }

    /// Outcome distribution over total magnetization on the nodes of `rule`.
    pub fn kernel(&self, params: &CircuitParams, rule: &Rule) -> Result<ProbabilityKernel> {
        let k = self.gram(params)?;
        let dim = self.n + 1;
        let half = self.n as f64 / 2.0;
        let rows = rule
            .nodes
            .iter()
            .map(|&phi| {
                let mut p = vec![0.0; dim];
                let mut dp = vec![0.0; dim];
                for (o, g) in k.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    let mut dacc = C64::new(0.0, 0.0);
                    for m in 0..dim {
                        for mp in 0..dim {
                            let delta = (m as f64 - half) - (mp as f64 - half);
                            let t = g[(m, mp)] * C64::from_polar(1.0, -phi * delta);
                            acc += t;
                            dacc += t * C64::new(0.0, -delta);
                        }
                    }
                    p[o] = acc.re;
                    dp[o] = dacc.re;
                }
                (p, Some(dp))
            })
            .collect();
        Ok(ProbabilityKernel::from_rows(rule, dim, rows))
    }

    /// Exact linear-estimator BMSE with the optimal slope.
    pub fn evaluate(&self, params: &CircuitParams, prior: &PriorSpec) -> Result<CostReport> {
        let k = self.gram(params)?;
        let nu = prior.variance();
        let dim = self.n + 1;
        let half = self.n as f64 / 2.0;
        let (mut t1, mut t2) = (0.0, 0.0);
        for (o, g) in k.iter().enumerate() {
            let mo = o as f64 - half;
            for m in 0..dim {
                for mp in 0..dim {
                    let d = (m as f64) - (mp as f64);
                    let e = (-0.5 * nu * d * d).exp();
                    // ∫P φ e^{−iφΔ} = −iνΔ e^{−νΔ²/2}
                    t1 += mo * (g[(m, mp)] * C64::new(0.0, -nu * d * e)).re;
                    t2 += mo * mo * g[(m, mp)].re * e;
                }
            }
        }
        let (bmse, a) = if t2 > 1e-300 {
            (nu - t1 * t1 / t2, t1 / t2)
        } else {
            (nu, 0.0)
        };
        Ok(CostReport::from_bmse(bmse, prior, a))
    }
}

/// Finite-range circuit cost as an optimizer objective; gradients by
/// finite differences.
pub struct DressingObjective<'a> {
    pub model: &'a DressingModel,
    pub prior: PriorSpec,
    pub template: Template,
}

impl Objective for DressingObjective<'_> {
    fn dim(&self) -> usize {
        self.template.parameter_count()
    }

    fn value(&self, x: &[f64]) -> f64 {
        CircuitParams::from_angles(self.template, x, 0.0)
            .and_then(|p| self.model.evaluate(&p, &self.prior))
            .map_or(f64::INFINITY, |r| r.bmse)
    }
}
