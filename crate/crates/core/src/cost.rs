//! Closed-form BMSE of the optimal linear estimator for pure-state circuits
//! and its exact gradient.
//!
//! For a normal prior of variance `ν` the phase average can be done
//! analytically: `∫P(φ) e^{iφΔ} = e^{-νΔ²/2}` and
//! `∫P(φ) φ e^{iφΔ} = iνΔ e^{-νΔ²/2}`. With `O_k = U_De† M^k U_De` and
//! `M = diag(m)` the cost for slope `a` is `ν − 2a t₁ + a² t₂` where
//! `t_k = ψ† (O_k ∘ G_k) ψ`. Minimizing over `a` gives `a = t₁/t₂` and
//! `C = ν − t₁²/t₂`.
//!
//! Dephasing between the entangler and the decoder keeps this structure: the
//! state splits into total-spin sectors, each an elementwise-damped slice of
//! `ψψ†`, and the `t_k` become multiplicity-weighted sums over sectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::circuits::{apply_entangler, decoder_matrix, CircuitParams, Template};
use crate::decoherence::{degeneracy, sector_spins, DephasingChannel};
use crate::error::Result;
use crate::estimation::{CostReport, PriorSpec};
use crate::spin::{Axis, SpinOperatorTable};

/// Values of `t₂` below this are treated as zero.
const T2_FLOOR: f64 = 1e-300;

/// One total-spin sector `j` of the interrogated state. A pure probe only
/// occupies `j = N/2`; dephasing leaks weight into lower `j` as
/// `ρ_j = F_j ∘ (ψψ†)` restricted to `|m| ≤ j`.
#[derive(Clone, Debug)]
struct Sector {
    /// `None` for the symmetric sector, which uses the caller's table.
    table: Option<SpinOperatorTable>,
    /// Index of `m = −j` in the symmetric basis.
    offset: usize,
    weight: f64,
    factor: Option<DMatrix<f64>>,
    g1: DMatrix<C64>,
    g2: DMatrix<C64>,
    jx: DMatrix<f64>,
    jx2: DMatrix<f64>,
    jz2: Vec<f64>,
}

impl Sector {
    fn new(
        table: Option<SpinOperatorTable>,
        main: &SpinOperatorTable,
        offset: usize,
        weight: f64,
        factor: Option<DMatrix<f64>>,
        nu: f64,
    ) -> Self {
        let t = table.as_ref().unwrap_or(main);
        let basis = t.basis();
        let dim = t.dim();
        let g1 = DMatrix::from_fn(dim, dim, |k, l| {
            let d = basis.m(k) - basis.m(l);
            C64::new(0.0, nu * d * (-0.5 * nu * d * d).exp())
        });
        let g2 = DMatrix::from_fn(dim, dim, |k, l| {
            let d = basis.m(k) - basis.m(l);
            C64::new((-0.5 * nu * d * d).exp(), 0.0)
        });
        let jx = t.jx().clone();
        let jx2 = &jx * &jx;
        let jz2 = basis.m_values().iter().map(|m| m * m).collect();
        Self {
            table,
            offset,
            weight,
            factor,
            g1,
            g2,
            jx,
            jx2,
            jz2,
        }
    }

    /// `ρ_j ∘ G_kᵀ` with `ρ_j` cut from `ψψ†`.
    fn weighted_state(&self, outer: &DMatrix<C64>, g: &DMatrix<C64>) -> DMatrix<C64> {
        let d = g.nrows();
        DMatrix::from_fn(d, d, |a, b| {
            let f = self.factor.as_ref().map_or(1.0, |f| f[(a, b)]);
            outer[(a + self.offset, b + self.offset)] * f * g[(b, a)]
        })
    }
}

/// Exact linear-estimator BMSE for one atom number and prior, optionally
/// with local dephasing during the interrogation.
#[derive(Clone, Debug)]
pub struct ExactCost<'a> {
    table: &'a SpinOperatorTable,
    prior: PriorSpec,
    gamma_t: f64,
    sectors: Vec<Sector>,
}

/// Cost, optimal slope and gradient with respect to the flat angle vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CostGradient {
    pub cost: f64,
    pub a: f64,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Gate {
    axis: Axis,
    lin: f64,
    quad: f64,
    /// Flat parameter index of the linear and quadratic angle.
    lin_idx: Option<usize>,
    quad_idx: Option<usize>,
}

impl<'a> ExactCost<'a> {
    pub fn new(table: &'a SpinOperatorTable, prior: PriorSpec) -> Self {
        let nu = prior.variance();
        Self {
            table,
            prior,
            gamma_t: 0.0,
            sectors: vec![Sector::new(None, table, 0, 1.0, None, nu)],
        }
    }

    /// Cost with single-particle dephasing of exposure `γT` acting between
    /// the entangler and the decoder.
    pub fn dephased(table: &'a SpinOperatorTable, prior: PriorSpec, gamma_t: f64) -> Result<Self> {
        if gamma_t == 0.0 {
            return Ok(Self::new(table, prior));
        }
        let n = table.atoms();
        let channel = DephasingChannel::new(n, gamma_t)?;
        let nu = prior.variance();
        let mut sectors = Vec::new();
        for (q, (f, j)) in channel
            .symmetric_input_factors()
            .into_iter()
            .zip(sector_spins(n))
            .enumerate()
        {
            // the j = 0 sector only has m = 0 and carries no signal
            if j < 0.25 {
                continue;
            }
            let sub = if q == 0 {
                None
            } else {
                Some(SpinOperatorTable::build((2.0 * j).round() as usize)?)
            };
            sectors.push(Sector::new(sub, table, q, degeneracy(n, j), Some(f), nu));
        }
        Ok(Self {
            table,
            prior,
            gamma_t,
            sectors,
        })
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior
    }

    pub fn table(&self) -> &SpinOperatorTable {
        self.table
    }

    pub fn exposure(&self) -> f64 {
        self.gamma_t
    }

    fn sector_table<'s>(&'s self, s: &'s Sector) -> &'s SpinOperatorTable {
        s.table.as_ref().unwrap_or(self.table)
    }

    fn observables(&self, s: &Sector, vartheta: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
        let t = self.sector_table(s);
        let u = decoder_matrix(t, vartheta);
        let basis = t.basis();
        let mu = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * basis.m(i));
        let o1 = u.adjoint() * mu;
        let o2 = &o1 * &o1;
        (o1, o2)
    }

    /// `Q_k = Σ_j d_j (O_k ∘ G_k ∘ F_j)` embedded in the symmetric basis, so
    /// that `t_k = ψ† Q_k ψ`.
    fn effective_observables(&self, vartheta: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
        let dim = self.table.dim();
        let mut q1 = DMatrix::<C64>::zeros(dim, dim);
        let mut q2 = DMatrix::<C64>::zeros(dim, dim);
        for s in &self.sectors {
            let (o1, o2) = self.observables(s, vartheta);
            let d = o1.nrows();
            for a in 0..d {
                for b in 0..d {
                    let f = s.weight * s.factor.as_ref().map_or(1.0, |f| f[(a, b)]);
                    q1[(a + s.offset, b + s.offset)] += o1[(a, b)] * s.g1[(a, b)] * f;
                    q2[(a + s.offset, b + s.offset)] += o2[(a, b)] * s.g2[(a, b)] * f;
                }
            }
        }
        (q1, q2)
    }

    fn terms(&self, params: &CircuitParams) -> Result<(f64, f64)> {
        params.validate()?;
        let psi = self.entangled(&params.theta);
        let (q1, q2) = self.effective_observables(&params.vartheta);
        Ok((quad_form(&psi, &q1), quad_form(&psi, &q2)))
    }

    fn entangled(&self, theta: &[f64]) -> DVector<C64> {
        let mut v = DVector::<C64>::zeros(self.table.dim());
        v[0] = C64::new(1.0, 0.0);
        apply_entangler(self.table, theta, v.as_mut_slice());
        v
    }

    /// BMSE at a fixed slope.
    pub fn bmse_at(&self, params: &CircuitParams, a: f64) -> Result<f64> {
        let (t1, t2) = self.terms(params)?;
        Ok(self.prior.variance() - 2.0 * a * t1 + a * a * t2)
    }

    /// `∂BMSE/∂a` at a fixed slope.
    pub fn slope_derivative(&self, params: &CircuitParams, a: f64) -> Result<f64> {
        let (t1, t2) = self.terms(params)?;
        Ok(-2.0 * t1 + 2.0 * a * t2)
    }

    /// Cost report with the optimal slope; `params.a` is ignored.
    pub fn evaluate(&self, params: &CircuitParams) -> Result<CostReport> {
        let (t1, t2) = self.terms(params)?;
        let (cost, a) = self.optimal(t1, t2);
        Ok(CostReport::from_bmse(cost, &self.prior, a))
    }

    fn optimal(&self, t1: f64, t2: f64) -> (f64, f64) {
        if t2 > T2_FLOOR {
            (self.prior.variance() - t1 * t1 / t2, t1 / t2)
        } else {
            (self.prior.variance(), 0.0)
        }
    }

    /// Cost at the optimal slope and its gradient with respect to
    /// `[θ…, ϑ…]`.
    pub fn value_and_gradient(&self, template: Template, angles: &[f64]) -> Result<CostGradient> {
        let params = CircuitParams::from_angles(template, angles, 0.0)?;
        let n_theta = params.theta.len();
        let mut psi = self.entangled(&params.theta);
        let (q1, q2) = self.effective_observables(&params.vartheta);
        let t1 = quad_form(&psi, &q1);
        let t2 = quad_form(&psi, &q2);
        let (cost, a) = self.optimal(t1, t2);
        let mut gradient = vec![0.0; angles.len()];
        if t2 <= T2_FLOOR {
            return Ok(CostGradient { cost, a, gradient });
        }
        let (w1, w2) = (-2.0 * a, a * a);
        let main = &self.sectors[0];
        debug_assert_eq!(main.offset, 0);

        // entangler: backward sweep with λ_k = Q_k ψ
        let psi_en = psi.clone();
        let mut lam1 = &q1 * &psi;
        let mut lam2 = &q2 * &psi;
        for (l, layer) in params.theta.chunks_exact(3).enumerate().rev() {
            let base = 3 * l;
            gradient[base + 2] +=
                w1 * im_dense(&lam1, &main.jx, &psi) + w2 * im_dense(&lam2, &main.jx, &psi);
            gradient[base + 1] +=
                w1 * im_dense(&lam1, &main.jx2, &psi) + w2 * im_dense(&lam2, &main.jx2, &psi);
            for v in [&mut psi, &mut lam1, &mut lam2] {
                self.table
                    .apply_gate(Axis::X, -layer[2], -layer[1], v.as_mut_slice());
            }
            gradient[base] += w1 * im_diag(&lam1, &psi, &main.jz2) + w2 * im_diag(&lam2, &psi, &main.jz2);
            for v in [&mut psi, &mut lam1, &mut lam2] {
                self.table.apply_gate(Axis::Z, 0.0, -layer[0], v.as_mut_slice());
            }
        }

        // decoder: operators pushed forward against observables pulled back;
        // for Hermitian Y, S the derivative i·tr(H[Y,S]) equals −2 Im tr(HYS)
        let outer = &psi_en * psi_en.adjoint();
        let gates = decoder_gates(&params.vartheta, n_theta);
        for s in &self.sectors {
            let table = self.sector_table(s);
            let mut s1 = s.weighted_state(&outer, &s.g1);
            let mut s2 = s.weighted_state(&outer, &s.g2);
            let dim = table.dim();
            let basis = table.basis();
            let mut y = DMatrix::<C64>::from_diagonal(&DVector::from_fn(dim, |i, _| {
                C64::new(basis.m(i), 0.0)
            }));
            let mut ys = vec![DMatrix::<C64>::zeros(0, 0); gates.len()];
            for (k, g) in gates.iter().enumerate().rev() {
                if g.lin_idx.is_some() || g.quad_idx.is_some() {
                    ys[k] = y.clone();
                }
                conjugate(table, g.axis, -g.lin, -g.quad, &mut y);
            }
            let (sw1, sw2) = (C64::new(w1 * s.weight, 0.0), C64::new(w2 * s.weight, 0.0));
            for (k, gate) in gates.iter().enumerate() {
                conjugate(table, gate.axis, gate.lin, gate.quad, &mut s1);
                conjugate(table, gate.axis, gate.lin, gate.quad, &mut s2);
                if gate.lin_idx.is_none() && gate.quad_idx.is_none() {
                    continue;
                }
                let y1 = &ys[k];
                let y2 = y1 * y1;
                let p = (y1 * &s1) * sw1 + (&y2 * &s2) * sw2;
                match gate.axis {
                    Axis::Z => {
                        if let Some(i) = gate.quad_idx {
                            let tr: C64 = (0..dim).map(|d| p[(d, d)] * s.jz2[d]).sum();
                            gradient[i] += -2.0 * tr.im;
                        }
                    }
                    _ => {
                        if let Some(i) = gate.lin_idx {
                            gradient[i] += -2.0 * trace_prod(&s.jx, &p).im;
                        }
                        if let Some(i) = gate.quad_idx {
                            gradient[i] += -2.0 * trace_prod(&s.jx2, &p).im;
                        }
                    }
                }
            }
        }
        Ok(CostGradient { cost, a, gradient })
    }
}

/// `m ← g m g†` for Hermitian `m`.
fn conjugate(table: &SpinOperatorTable, axis: Axis, lin: f64, quad: f64, m: &mut DMatrix<C64>) {
    table.left_apply(axis, lin, quad, m);
    m.adjoint_mut();
    table.left_apply(axis, lin, quad, m);
}

fn im_dense(lam: &DVector<C64>, h: &DMatrix<f64>, psi: &DVector<C64>) -> f64 {
    let hpsi = DVector::from_fn(psi.len(), |i, _| {
        (0..psi.len()).map(|j| psi[j] * h[(i, j)]).sum::<C64>()
    });
    2.0 * lam.dotc(&hpsi).im
}

fn im_diag(lam: &DVector<C64>, psi: &DVector<C64>, jz2: &[f64]) -> f64 {
    let s: C64 = lam
        .iter()
        .zip(psi.iter())
        .zip(jz2)
        .map(|((l, p), h)| l.conj() * p * *h)
        .sum();
    2.0 * s.im
}

/// Decoder gates in acting order, each tagged with its flat parameter indices.
fn decoder_gates(vartheta: &[f64], offset: usize) -> Vec<Gate> {
    let mut out = Vec::with_capacity(2 * vartheta.len() / 3 + 1);
    for (l, layer) in vartheta.chunks_exact(3).enumerate().rev() {
        let base = offset + 3 * l;
        out.push(Gate {
            axis: Axis::X,
            lin: layer[2],
            quad: layer[1],
            lin_idx: Some(base + 2),
            quad_idx: Some(base + 1),
        });
        out.push(Gate {
            axis: Axis::Z,
            lin: 0.0,
            quad: layer[0],
            lin_idx: None,
            quad_idx: Some(base),
        });
    }
    out.push(Gate {
        axis: Axis::X,
        lin: std::f64::consts::FRAC_PI_2,
        quad: 0.0,
        lin_idx: None,
        quad_idx: None,
    });
    out
}

fn quad_form(psi: &DVector<C64>, q: &DMatrix<C64>) -> f64 {
    psi.dotc(&(q * psi)).re
}

/// `tr(A B)`.
fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{conditional_probs, named};
    use crate::decoherence::conditional_probs_dephased;
    use crate::estimation::{bmse, EstimatorMode};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_angles(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn matches_kernel_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, dphi) in &[(3usize, 0.4), (8, 0.9), (12, 0.25)] {
            let t = SpinOperatorTable::build(n).unwrap();
            let prior = PriorSpec::new(dphi).unwrap();
            let cost = ExactCost::new(&t, prior);
            let tpl = Template::new(1, 2);
            let p = CircuitParams::from_angles(tpl, &random_angles(&mut rng, 9), 0.0).unwrap();
            let k = conditional_probs(&t, &p, &prior.rule(n)).unwrap();
            let numeric = bmse(&k, &prior, EstimatorMode::LinearOptimal).unwrap();
            let exact = cost.evaluate(&p).unwrap();
            assert!((numeric.bmse - exact.bmse).abs() < 1e-12, "{numeric:?} {exact:?}");
            assert!((numeric.a_opt - exact.a_opt).abs() < 1e-9);
        }
    }

    #[test]
    fn css_closed_form() {
        for &(n, dphi) in &[(1usize, 0.3), (8, 0.5), (64, 1.0)] {
            let t = SpinOperatorTable::build(n).unwrap();
            let prior = PriorSpec::new(dphi).unwrap();
            let r = ExactCost::new(&t, prior).evaluate(&named::css()).unwrap();
            let nu = dphi * dphi;
            let nf = n as f64;
            let m2 = nu.exp() / nf + (1.0 - 1.0 / nf) * nu.sinh() - nu;
            assert!((r.eff_meas_var - m2).abs() < 1e-10 * m2);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = SpinOperatorTable::build(8).unwrap();
        let cost = ExactCost::new(&t, PriorSpec::new(0.7).unwrap());
        for tpl in [Template::new(1, 1), Template::new(2, 3), Template::new(0, 2)] {
            let x = random_angles(&mut rng, tpl.parameter_count());
            let g = cost.value_and_gradient(tpl, &x).unwrap();
            let f = |y: &[f64]| cost.value_and_gradient(tpl, y).unwrap().cost;
            let h = 1e-4;
            for i in 0..x.len() {
                let at = |d: f64| {
                    let mut y = x.clone();
                    y[i] += d;
                    f(&y)
                };
                let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                let scale = g.gradient.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
                assert!(
                    (fd - g.gradient[i]).abs() < 1e-6 * scale,
                    "{tpl} i={i}: fd {fd} exact {}",
                    g.gradient[i]
                );
            }
        }
    }

    #[test]
    fn dephased_matches_kernel_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, dphi, gt) in &[(4usize, 0.5, 0.2), (7, 0.8, 0.05), (10, 0.3, 1.0)] {
            let t = SpinOperatorTable::build(n).unwrap();
            let prior = PriorSpec::new(dphi).unwrap();
            let cost = ExactCost::dephased(&t, prior, gt).unwrap();
            let p = CircuitParams::from_angles(Template::new(1, 1), &random_angles(&mut rng, 6), 0.0)
                .unwrap();
            let k = conditional_probs_dephased(&t, &p, &prior.rule(n), gt).unwrap();
            let numeric = bmse(&k, &prior, EstimatorMode::LinearOptimal).unwrap();
            let exact = cost.evaluate(&p).unwrap();
            assert!((numeric.bmse - exact.bmse).abs() < 1e-11, "{numeric:?} {exact:?}");
        }
    }

    #[test]
    fn dephased_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = SpinOperatorTable::build(6).unwrap();
        let cost = ExactCost::dephased(&t, PriorSpec::new(0.6).unwrap(), 0.3).unwrap();
        let tpl = Template::new(2, 2);
        let x = random_angles(&mut rng, tpl.parameter_count());
        let g = cost.value_and_gradient(tpl, &x).unwrap();
        let h = 1e-4;
        for i in 0..x.len() {
            let at = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                cost.value_and_gradient(tpl, &y).unwrap().cost
            };
            let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            let scale = g.gradient.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            assert!((fd - g.gradient[i]).abs() < 1e-6 * scale, "i={i}: {fd} {}", g.gradient[i]);
        }
    }

    #[test]
    fn dephasing_never_helps_css() {
        let t = SpinOperatorTable::build(8).unwrap();
        let prior = PriorSpec::new(0.5).unwrap();
        let mut last = ExactCost::new(&t, prior).evaluate(&named::css()).unwrap().bmse;
        for gt in [0.01, 0.1, 1.0] {
            let c = ExactCost::dephased(&t, prior, gt).unwrap().evaluate(&named::css()).unwrap().bmse;
            assert!(c > last);
            last = c;
        }
    }

    #[test]
    fn slope_derivative_vanishes_at_optimum() {
        let t = SpinOperatorTable::build(6).unwrap();
        let cost = ExactCost::new(&t, PriorSpec::new(0.6).unwrap());
        let p = named::sss(0.2, 0.5);
        let r = cost.evaluate(&p).unwrap();
        assert!(cost.slope_derivative(&p, r.a_opt).unwrap().abs() < 1e-12);
        assert!((cost.bmse_at(&p, 0.0).unwrap() - 0.36).abs() < 1e-14);
    }
}
