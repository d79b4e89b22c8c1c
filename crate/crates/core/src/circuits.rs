//! Entangler/decoder circuit templates and the outcome distribution `p(m|φ)`.
//!
//! The entangler prepares `U_En(θ) |-N/2⟩` where
//! `U_En = Π_l [R_x(θ_l³) T_x(θ_l²) T_z(θ_l¹)] · R_y(π/2)` and layer 1 acts
//! first. The decoder is
//! `U_De = R_x(π/2) · [T_z(ϑ_1¹) T_x(ϑ_1²) R_x(ϑ_1³)] ⋯ [T_z(ϑ_n¹) T_x(ϑ_n²) R_x(ϑ_n³)]`
//! with the rightmost gate acting first. Parameters are stored layer by
//! layer, three per layer, in superscript order.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rule;
use crate::spin::{Axis, PureState, SpinOperatorTable};

/// Circuit depth `(n_En, n_De)`, written `"(n_En,n_De)"` in JSON.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "String")]
pub struct Template {
    pub n_en: usize,
    pub n_de: usize,
}

impl Template {
    pub const fn new(n_en: usize, n_de: usize) -> Self {
        Self { n_en, n_de }
    }

    pub fn parameter_count(&self) -> usize {
        3 * (self.n_en + self.n_de)
    }

    /// True when every circuit of `self` is also a circuit of `other`.
    pub fn nests_in(&self, other: &Template) -> bool {
        self.n_en <= other.n_en && self.n_de <= other.n_de
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n_en, self.n_de)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TemplateRepr {
    Text(String),
    Fields { n_en: usize, n_de: usize },
}

impl TryFrom<TemplateRepr> for Template {
    type Error = Error;

    fn try_from(r: TemplateRepr) -> Result<Self> {
        match r {
            TemplateRepr::Text(s) => s.parse(),
            TemplateRepr::Fields { n_en, n_de } => Ok(Template::new(n_en, n_de)),
        }
    }
}

impl From<Template> for String {
    fn from(t: Template) -> String {
        t.to_string()
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut it = t.split(',').map(|p| p.trim().parse::<usize>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => Ok(Template::new(a, b)),
            _ => Err(Error::InvalidArgument(format!("cannot parse template '{s}'"))),
        }
    }
}

/// Variational parameters of an `(n_en, n_de)` circuit plus the slope of the
/// linear estimator `φ_est(m) = a·m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub n_en: usize,
    pub n_de: usize,
    pub theta: Vec<f64>,
    pub vartheta: Vec<f64>,
    pub a: f64,
}

impl CircuitParams {
    pub fn new(n_en: usize, n_de: usize, theta: Vec<f64>, vartheta: Vec<f64>, a: f64) -> Result<Self> {
        let p = Self {
            n_en,
            n_de,
            theta,
            vartheta,
            a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(template: Template) -> Self {
        Self {
            n_en: template.n_en,
            n_de: template.n_de,
            theta: vec![0.0; 3 * template.n_en],
            vartheta: vec![0.0; 3 * template.n_de],
            a: 0.0,
        }
    }

    /// Builds parameters from a flat angle vector (entangler then decoder).
    pub fn from_angles(template: Template, angles: &[f64], a: f64) -> Result<Self> {
        if angles.len() != template.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: template.parameter_count(),
                got: angles.len(),
            });
        }
        let (t, v) = angles.split_at(3 * template.n_en);
        Self::new(template.n_en, template.n_de, t.to_vec(), v.to_vec(), a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != 3 * self.n_en {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.n_en,
                got: self.theta.len(),
            });
        }
        if self.vartheta.len() != 3 * self.n_de {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.n_de,
                got: self.vartheta.len(),
            });
        }
        if !self.a.is_finite() || self.theta.iter().chain(&self.vartheta).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("circuit parameters"));
        }
        Ok(())
    }

    pub fn template(&self) -> Template {
        Template::new(self.n_en, self.n_de)
    }

    pub fn parameter_count(&self) -> usize {
        self.template().parameter_count()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.vartheta).copied().collect()
    }

    /// Embeds these parameters into a deeper template; the extra layers are
    /// zero angles and therefore act as the identity.
    pub fn padded(&self, target: Template) -> Result<Self> {
        if !self.template().nests_in(&target) {
            return Err(Error::InvalidArgument(format!(
                "{} does not nest in {}",
                self.template(),
                target
            )));
        }
        let mut out = Self::zeros(target);
        out.theta[..self.theta.len()].copy_from_slice(&self.theta);
        out.vartheta[..self.vartheta.len()].copy_from_slice(&self.vartheta);
        out.a = self.a;
        Ok(out)
    }
}

/// Applies the entangler (including the leading `R_y(π/2)`) in place.
pub(crate) fn apply_entangler(table: &SpinOperatorTable, theta: &[f64], v: &mut [C64]) {
    table.apply_gate(Axis::Y, FRAC_PI_2, 0.0, v);
    for layer in theta.chunks_exact(3) {
        table.apply_gate(Axis::Z, 0.0, layer[0], v);
        table.apply_gate(Axis::X, layer[2], layer[1], v);
    }
}

/// `U_En(θ)|ψ0⟩`.
pub fn entangle(table: &SpinOperatorTable, params: &CircuitParams) -> Result<PureState> {
    params.validate()?;
    let mut v = PureState::all_down(table.basis()).into_amplitudes();
    apply_entangler(table, &params.theta, v.as_mut_slice());
    Ok(PureState::from_raw(v))
}

/// Dense decoder unitary `U_De(ϑ)`.
pub fn decoder_matrix(table: &SpinOperatorTable, vartheta: &[f64]) -> DMatrix<C64> {
    let dim = table.dim();
    let mut u = DMatrix::<C64>::identity(dim, dim);
    for layer in vartheta.chunks_exact(3).rev() {
        table.left_apply(Axis::X, layer[2], layer[1], &mut u);
        table.left_apply(Axis::Z, 0.0, layer[0], &mut u);
    }
    table.left_apply(Axis::X, FRAC_PI_2, 0.0, &mut u);
    u
}

/// Table of `p(m|φ)` on a phase grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityKernel {
    pub phi_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row per phase node, column per outcome index (`m = index - N/2`).
    pub probs: DMatrix<f64>,
    /// `∂p(m|φ)/∂φ`, when the generator of the phase evolution is available.
    pub dprobs: Option<DMatrix<f64>>,
}

impl ProbabilityKernel {
    pub const ROW_TOL: f64 = 1e-9;

    pub fn atoms(&self) -> usize {
        self.probs.ncols() - 1
    }

    pub fn outcomes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.probs.nrows()
    }

    pub fn m(&self, index: usize) -> f64 {
        index as f64 - self.atoms() as f64 / 2.0
    }

    pub fn row(&self, node: usize) -> Vec<f64> {
        self.probs.row(node).iter().copied().collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.nodes())
            .map(|r| (self.probs.row(r).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_rows(
        rule: &Rule,
        outcomes: usize,
        rows: Vec<(Vec<f64>, Option<Vec<f64>>)>,
    ) -> Self {
        let n = rule.len();
        let mut probs = DMatrix::<f64>::zeros(n, outcomes);
        let has_d = rows.first().map(|r| r.1.is_some()).unwrap_or(false);
        let mut dprobs = has_d.then(|| DMatrix::<f64>::zeros(n, outcomes));
        for (r, (p, dp)) in rows.into_iter().enumerate() {
            for (c, v) in p.into_iter().enumerate() {
                // roundoff can leave tiny negative entries
                probs[(r, c)] = if v < 0.0 { 0.0 } else { v };
            }
            if let (Some(d), Some(dp)) = (dprobs.as_mut(), dp) {
                for (c, v) in dp.into_iter().enumerate() {
                    d[(r, c)] = v;
                }
            }
        }
        Self {
            phi_nodes: rule.nodes.clone(),
            weights: rule.weights.clone(),
            probs,
            dprobs,
        }
    }

    /// CSV with columns `phi,m,p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,m,p\n");
        for r in 0..self.nodes() {
            for c in 0..self.outcomes() {
                out.push_str(&format!(
                    "{:.17e},{},{:.17e}\n",
                    self.phi_nodes[r],
                    self.m(c),
                    self.probs[(r, c)]
                ));
            }
        }
        out
    }
}

/// Outcome distribution of a pure-state interferometer on the nodes of `rule`.
pub fn conditional_probs(
    table: &SpinOperatorTable,
    params: &CircuitParams,
    rule: &Rule,
) -> Result<ProbabilityKernel> {
    let psi = entangle(table, params)?;
    let u_de = decoder_matrix(table, &params.vartheta);
    Ok(kernel_from_state(table, &psi, &u_de, rule))
}

/// Outcome distribution for an arbitrary probe state and measurement unitary.
pub fn kernel_from_state(
    table: &SpinOperatorTable,
    psi: &PureState,
    measurement: &DMatrix<C64>,
    rule: &Rule,
) -> ProbabilityKernel {
    let basis = table.basis();
    let dim = table.dim();
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = rule
        .nodes
        .par_iter()
        .map(|&phi| {
            let mut v = psi.amplitudes().clone();
            let mut dv = DVector::<C64>::zeros(dim);
            for i in 0..dim {
                let m = basis.m(i);
                v[i] *= C64::from_polar(1.0, -phi * m);
                dv[i] = v[i] * C64::new(0.0, -m);
            }
            let out = measurement * &v;
            let dout = measurement * &dv;
            let p: Vec<f64> = out.iter().map(|a| a.norm_sqr()).collect();
            let dp: Vec<f64> = out
                .iter()
                .zip(dout.iter())
                .map(|(a, d)| 2.0 * (a.conj() * d).re)
                .collect();
            (p, Some(dp))
        })
        .collect();
    ProbabilityKernel::from_rows(rule, dim, rows)
}

/// Estimator `m ↦ φ_est(m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Linear { a: f64 },
    /// One value per outcome index.
    Table { values: Vec<f64> },
}

impl Estimator {
    pub fn value(&self, index: usize, m: f64) -> f64 {
        match self {
            Estimator::Linear { a } => a * m,
            Estimator::Table { values } => values[index],
        }
    }
}

/// `φ ↦ Σ_m φ_est(m) p(m|φ)` on the kernel nodes.
pub fn estimator_mean(kernel: &ProbabilityKernel, estimator: &Estimator) -> Vec<f64> {
    (0..kernel.nodes())
        .map(|r| {
            (0..kernel.outcomes())
                .map(|c| estimator.value(c, kernel.m(c)) * kernel.probs[(r, c)])
                .sum()
        })
        .collect()
}

/// Named circuits.
pub mod named {
    use super::*;
    use std::f64::consts::PI;

    /// Conventional Ramsey interferometer, the `(0,0)` circuit.
    pub fn css() -> CircuitParams {
        CircuitParams::zeros(Template::new(0, 0))
    }

    /// Squeezed-state interferometer: one twisting layer and a rotation that
    /// aligns the squeezed quadrature with the measured axis.
    pub fn sss(twist: f64, rotation: f64) -> CircuitParams {
        CircuitParams::new(1, 0, vec![twist, 0.0, rotation], vec![], 0.0)
            .expect("three angles for one layer")
    }

    /// GHZ interferometer as a `(2,1)` circuit.
    ///
    /// The entangler prepares the cat `(|−N/2⟩ ± |N/2⟩)/√2` along `z`, and the
    /// decoder maps its relative phase `Nφ` onto the two extreme outcomes with
    /// `p(±N/2|φ) = (1 ± sin Nφ)/2` up to an overall sign of the signal.
    /// The angles depend only on the parity of `N`.
    pub fn ghz(n: usize) -> CircuitParams {
        let (theta, vartheta) = ghz_angles(n);
        CircuitParams::new(2, 1, theta.to_vec(), vartheta.to_vec(), 0.0)
            .expect("nine angles for the (2,1) template")
    }

    pub(crate) fn ghz_angles(n: usize) -> ([f64; 6], [f64; 3]) {
        let h = PI / 2.0;
        let q = PI / 4.0;
        if n % 2 == 1 {
            ([-3.0 * q, -h, -h, -3.0 * q, -h, 0.0], [0.0, h, 0.0])
        } else {
            // the x rotation of the first layer must scale with 1/N
            let lin = -9.0 * PI / (2.0 * n.max(1) as f64);
            ([-h, -3.0 * q, lin, -3.0 * q, 0.0, h], [0.0, h, -h])
        }
    }
}
