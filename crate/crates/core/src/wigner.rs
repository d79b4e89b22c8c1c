//! Spherical Wigner representation of operators on the symmetric subspace.
//!
//! An operator is expanded in multipole operators
//! `T_kq = Σ_{m,m'} (−1)^{j−m} √(2k+1) (j k j; −m q m') |m⟩⟨m'|`, which are
//! orthonormal under the trace inner product, and mapped to
//! `W(θ, φ) = Σ_kq c_kq Y_kq(θ, φ)` with `c_kq = tr(T_kq† O)`. Then
//! `∫ W_A W_B dΩ = tr(A B)` for Hermitian `A`, `B`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Default polar × azimuthal resolution.
pub const DEFAULT_GRID: (usize, usize) = (256, 512);

/// `ln n!` for `n = 0..len`.
#[derive(Clone, Debug)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(len: usize) -> Self {
        let mut v = Vec::with_capacity(len.max(1));
        v.push(0.0);
        for n in 1..len {
            v.push(v[n - 1] + (n as f64).ln());
        }
        Self(v)
    }

    fn get(&self, n: i64) -> f64 {
        self.0[n as usize]
    }
}

/// Wigner 3j symbol with every argument given doubled, so half-integers are
/// exact. Racah's single sum, evaluated in log-factorials.
pub fn wigner_3j_doubled(lf: &LogFactorials, j: [i64; 3], m: [i64; 3]) -> f64 {
    let [j1, j2, j3] = j;
    let [m1, m2, m3] = m;
    if m1 + m2 + m3 != 0 {
        return 0.0;
    }
    if (0..3).any(|i| m[i].abs() > j[i] || (j[i] + m[i]) % 2 != 0) {
        return 0.0;
    }
    if j3 < (j1 - j2).abs() || j3 > j1 + j2 || (j1 + j2 + j3) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i64| x / 2;
    let ln_delta = lf.get(h(j1 + j2 - j3)) + lf.get(h(j1 - j2 + j3)) + lf.get(h(-j1 + j2 + j3))
        - lf.get(h(j1 + j2 + j3) + 1);
    let ln_m = lf.get(h(j1 + m1))
        + lf.get(h(j1 - m1))
        + lf.get(h(j2 + m2))
        + lf.get(h(j2 - m2))
        + lf.get(h(j3 + m3))
        + lf.get(h(j3 - m3));
    let prefactor = 0.5 * (ln_delta + ln_m);
    let t_min = 0.max(h(j2 - j3 - m1)).max(h(j1 - j3 + m2));
    let t_max = h(j1 + j2 - j3).min(h(j1 - m1)).min(h(j2 + m2));
    if t_min > t_max {
        return 0.0;
    }
    let terms: Vec<(f64, f64)> = (t_min..=t_max)
        .map(|t| {
            let ln = lf.get(t)
                + lf.get(h(j3 - j2 + m1) + t)
                + lf.get(h(j3 - j1 - m2) + t)
                + lf.get(h(j1 + j2 - j3) - t)
                + lf.get(h(j1 - m1) - t)
                + lf.get(h(j2 + m2) - t);
            (if t % 2 == 0 { 1.0 } else { -1.0 }, prefactor - ln)
        })
        .collect();
    let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|(s, l)| s * (l - top).exp()).sum();
    let phase = if h(j1 - j2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * sum * top.exp()
}

/// `(j1 j2 j3; m1 m2 m3)` for integer arguments.
pub fn wigner_3j(j: [i64; 3], m: [i64; 3]) -> f64 {
    let lf = LogFactorials::new((j[0] + j[1] + j[2] + 2).max(2) as usize);
    wigner_3j_doubled(&lf, j.map(|x| 2 * x), m.map(|x| 2 * x))
}

/// Multipole coefficients `c_kq`, stored as `coeffs[k][q + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipoles {
    pub n: usize,
    pub coeffs: Vec<Vec<C64>>,
}

/// Bands `T_kq[i' + q, i']` for one `q ≥ 0` and every `k = q..=N`, indexed
/// by `k − q`; negative `q` follow from `T_{k,−q} = (−1)^q T_kq†`.
///
/// The alternating Racah sum loses all precision once `j` reaches a few
/// dozen, and lowering with `[J−, T_kq]` amplifies roundoff. Instead each
/// band is an eigenvector of the Casimir superoperator
/// `X ↦ Σ_μ [J_μ, [J_μ, X]]`, which keeps the band and is tridiagonal on
/// it with eigenvalues `k(k+1)`. The sign follows the stretched element
/// `⟨j|T_kq|j−q⟩`, a single Racah term with sign `(−1)^q`.
fn multipole_bands(n: usize, q: usize) -> Vec<Vec<f64>> {
    let len = n + 1 - q;
    let j = n as f64 / 2.0;
    let m = |i: usize| i as f64 - j;
    let raise = |i: usize| (j * (j + 1.0) - m(i) * (m(i) + 1.0)).max(0.0).sqrt();
    let mut c = DMatrix::<f64>::zeros(len, len);
    for i in 0..len {
        c[(i, i)] = 2.0 * j * (j + 1.0) - 2.0 * m(i + q) * m(i);
        if i + 1 < len {
            let off = -raise(i + q) * raise(i);
            c[(i, i + 1)] = off;
            c[(i + 1, i)] = off;
        }
    }
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    order
        .into_iter()
        .map(|col| {
            let v = eig.eigenvectors.column(col);
            let flip = if v[len - 1] * sign < 0.0 { -1.0 } else { 1.0 };
            v.iter().map(|x| x * flip).collect()
        })
        .collect()
}

/// `c_kq = tr(T_kq† O)` for an operator on the `N+1`-dimensional space.
pub fn multipoles(op: &DMatrix<C64>) -> Result<Multipoles> {
    let dim = op.nrows();
    if dim < 2 || op.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim.max(2),
            got: op.ncols(),
        });
    }
    let n = dim - 1;
    let per_q: Vec<Vec<(C64, C64)>> = (0..=n)
        .into_par_iter()
        .map(|q| {
            let s = if q % 2 == 0 { 1.0 } else { -1.0 };
            multipole_bands(n, q)
                .iter()
                .map(|band| {
                    let mut pos = C64::new(0.0, 0.0);
                    let mut neg = C64::new(0.0, 0.0);
                    for (ip, &t) in band.iter().enumerate() {
                        pos += op[(ip + q, ip)] * t;
                        neg += op[(ip, ip + q)] * (s * t);
                    }
                    (pos, neg)
                })
                .collect()
        })
        .collect();
    let coeffs = (0..=n)
        .map(|k| {
            let mut row = vec![C64::new(0.0, 0.0); 2 * k + 1];
            for q in 0..=k {
                let (pos, neg) = per_q[q][k - q];
                row[k + q] = pos;
                row[k - q] = neg;
            }
            row
        })
        .collect();
    Ok(Multipoles { n, coeffs })
}

/// `T_kq` as a dense matrix.
pub fn multipole_operator(n: usize, k: usize, q: i64) -> DMatrix<C64> {
    let dim = n + 1;
    let qa = q.unsigned_abs() as usize;
    let mut t = DMatrix::<C64>::zeros(dim, dim);
    if qa > k || k > n {
        return t;
    }
    let band = &multipole_bands(n, qa)[k - qa];
    for (ip, &v) in band.iter().enumerate() {
        if q >= 0 {
            t[(ip + qa, ip)] = C64::new(v, 0.0);
        } else {
            let s = if qa % 2 == 0 { 1.0 } else { -1.0 };
            t[(ip, ip + qa)] = C64::new(s * v, 0.0);
        }
    }
    t
}

/// Orthonormal `P̄_k^q(x)` for `0 ≤ q ≤ k ≤ k_max`, including the
/// Condon–Shortley phase, such that `Y_kq = P̄_k^q(cos θ) e^{iqφ}`.
fn normalized_legendre(k_max: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; k_max + 1]; k_max + 1];
    p[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for q in 1..=k_max {
        let qf = q as f64;
        p[q][q] = -((2.0 * qf + 1.0) / (2.0 * qf)).sqrt() * s * p[q - 1][q - 1];
    }
    for q in 0..k_max {
        p[q + 1][q] = ((2 * q + 3) as f64).sqrt() * x * p[q][q];
    }
    for q in 0..=k_max {
        for k in q + 2..=k_max {
            let (kf, qf) = (k as f64, q as f64);
            let a = ((4.0 * kf * kf - 1.0) / (kf * kf - qf * qf)).sqrt();
            let b = (((kf - 1.0).powi(2) - qf * qf) / (4.0 * (kf - 1.0).powi(2) - 1.0)).sqrt();
            p[k][q] = a * (x * p[k - 1][q] - b * p[k - 2][q]);
        }
    }
    p
}

/// Real quasi-probability on a Gauss–Legendre × uniform sphere grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerField {
    pub n: usize,
    pub k_max: usize,
    /// Polar angles, increasing.
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Quadrature weight of each polar row, including `sin θ dθ`.
    pub theta_weights: Vec<f64>,
    /// Row-major `[theta][phi]`.
    pub values: Vec<f64>,
}

#[derive(Serialize)]
struct BinaryHeader {
    #[serde(rename = "N")]
    n: usize,
    k_max: usize,
    n_theta: usize,
    n_phi: usize,
}

impl WignerField {
    pub fn value(&self, i_theta: usize, i_phi: usize) -> f64 {
        self.values[i_theta * self.phi.len() + i_phi]
    }

    /// `∫ f g dΩ` on the shared grid.
    pub fn overlap(&self, other: &WignerField) -> Result<f64> {
        if self.theta.len() != other.theta.len() || self.phi.len() != other.phi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        let dphi = 2.0 * PI / self.phi.len() as f64;
        let n_phi = self.phi.len();
        Ok(self
            .theta_weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let row = i * n_phi..(i + 1) * n_phi;
                w * dphi
                    * self.values[row.clone()]
                        .iter()
                        .zip(&other.values[row])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .sum())
    }

    pub fn integral(&self) -> f64 {
        let dphi = 2.0 * PI / self.phi.len() as f64;
        let n_phi = self.phi.len();
        self.theta_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * dphi * self.values[i * n_phi..(i + 1) * n_phi].iter().sum::<f64>())
            .sum()
    }

    /// CSV with columns `theta,phi,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 64);
        out.push_str("theta,phi,value\n");
        for (i, t) in self.theta.iter().enumerate() {
            for (l, p) in self.phi.iter().enumerate() {
                out.push_str(&format!("{t:.17e},{p:.17e},{:.17e}\n", self.value(i, l)));
            }
        }
        out
    }

    /// `VRWG`, a little-endian `u32` header length, a JSON header, then the
    /// polar nodes, azimuthal nodes and values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&BinaryHeader {
            n: self.n,
            k_max: self.k_max,
            n_theta: self.theta.len(),
            n_phi: self.phi.len(),
        })?;
        w.write_all(b"VRWG")?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for v in self.theta.iter().chain(&self.phi).chain(&self.values) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Wigner field of a Hermitian operator.
pub fn wigner(op: &DMatrix<C64>, grid: (usize, usize)) -> Result<WignerField> {
    let (n_theta, n_phi) = grid;
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::InvalidArgument("empty sphere grid".into()));
    }
    let dev = (op - op.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = op.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if dev > 1e-10 * scale {
        return Err(Error::NotHermitian(dev));
    }
    let mp = multipoles(op)?;
    let k_max = mp.n;
    let gl = gauss_legendre(n_theta);
    // polar rows ordered by increasing θ, i.e. decreasing cos θ
    let mut rows: Vec<(f64, f64)> = gl.nodes.iter().zip(&gl.weights).map(|(&x, &w)| (x, w)).collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let theta: Vec<f64> = rows.iter().map(|r| r.0.clamp(-1.0, 1.0).acos()).collect();
    let theta_weights: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let phi: Vec<f64> = (0..n_phi).map(|l| 2.0 * PI * l as f64 / n_phi as f64).collect();
    let values: Vec<f64> = rows
        .par_iter()
        .flat_map_iter(|&(x, _)| {
            let p = normalized_legendre(k_max, x);
            // F_q = Σ_k c_kq P̄_k^q; negative q follow from Y_{k,−q} = (−1)^q Y_kq*
            let f: Vec<(C64, C64)> = (0..=k_max)
                .map(|q| {
                    let mut pos = C64::new(0.0, 0.0);
                    let mut neg = C64::new(0.0, 0.0);
                    for k in q..=k_max {
                        pos += mp.coeffs[k][k + q] * p[k][q];
                        neg += mp.coeffs[k][k - q] * p[k][q];
                    }
                    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                    (pos, neg * sign)
                })
                .collect();
            let phi = &phi;
            (0..n_phi).map(move |l| {
                let mut w = f[0].0.re;
                for (q, (pos, neg)) in f.iter().enumerate().skip(1) {
                    let e = C64::from_polar(1.0, q as f64 * phi[l]);
                    w += (pos * e + neg * e.conj()).re;
                }
                w
            })
        })
        .collect();
    Ok(WignerField {
        n: mp.n,
        k_max,
        theta,
        phi,
        theta_weights,
        values,
    })
}
