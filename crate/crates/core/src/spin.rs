//! Collective spin operators on the symmetric (maximal total spin) subspace.
//!
//! Basis index `i = 0..=N` corresponds to the Dicke state `|m⟩` with
//! `m = i - N/2`, so index 0 is `|-N/2⟩` (all atoms down).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest atom number accepted by [`SpinBasis::new`].
pub const MAX_ATOMS: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Dicke basis of `N` spin-1/2 particles at total spin `j = N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpinBasis {
    n: usize,
}

impl SpinBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAtomNumber("N must be at least 1".into()));
        }
        if n > MAX_ATOMS {
            return Err(Error::InvalidAtomNumber(format!(
                "N = {n} exceeds the supported maximum {MAX_ATOMS}"
            )));
        }
        Ok(Self { n })
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn j(&self) -> f64 {
        self.n as f64 / 2.0
    }

    /// Magnetization of basis index `i`.
    #[inline]
    pub fn m(&self, i: usize) -> f64 {
        i as f64 - self.j()
    }

    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m(i)).collect()
    }
}

/// Normalized state vector on the symmetric subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
}

impl PureState {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(amps: DVector<C64>) -> Result<Self> {
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(Self { amps })
    }

    /// Normalizes `amps` before wrapping it.
    pub fn normalized(amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Self::new(amps / C64::new(norm, 0.0))
    }

    /// `|-N/2⟩`, all atoms in the lower level.
    pub fn all_down(basis: SpinBasis) -> Self {
        Self::basis_state(basis, 0)
    }

    pub fn basis_state(basis: SpinBasis, index: usize) -> Self {
        let mut amps = DVector::zeros(basis.dim());
        amps[index] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub(crate) fn from_raw(amps: DVector<C64>) -> Self {
        Self { amps }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.amps.dotc(&other.amps).norm_sqr()
    }

    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        self.amps.dotc(&(op * &self.amps))
    }
}

/// Precomputed collective spin matrices for one atom number.
///
/// Immutable after construction; share it freely between threads.
#[derive(Clone, Debug)]
pub struct SpinOperatorTable {
    basis: SpinBasis,
    jx: DMatrix<f64>,
    jy: DMatrix<C64>,
    jz: DVector<f64>,
    /// Columns are eigenvectors of `Jx`; column `k` has eigenvalue `m(k)`.
    x_vecs: DMatrix<f64>,
}

impl SpinOperatorTable {
    pub fn build(n: usize) -> Result<Self> {
        let basis = SpinBasis::new(n)?;
        let dim = basis.dim();
        let j = basis.j();

        let mut jx = DMatrix::<f64>::zeros(dim, dim);
        let mut jy = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim - 1 {
            let m = basis.m(i);
            // ⟨m+1|J+|m⟩
            let c = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
            jx[(i + 1, i)] = 0.5 * c;
            jx[(i, i + 1)] = 0.5 * c;
            jy[(i + 1, i)] = C64::new(0.0, -0.5 * c);
            jy[(i, i + 1)] = C64::new(0.0, 0.5 * c);
        }
        let jz = DVector::from_iterator(dim, (0..dim).map(|i| basis.m(i)));

        let eig = SymmetricEigen::new(jx.clone());
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut x_vecs = DMatrix::<f64>::zeros(dim, dim);
        for (k, &src) in order.iter().enumerate() {
            let lambda = eig.eigenvalues[src];
            if (lambda - basis.m(k)).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "Jx spectrum mismatch at k={k}: {lambda} vs {}",
                    basis.m(k)
                )));
            }
            let mut col = eig.eigenvectors.column(src).into_owned();
            // fix the sign so the table is reproducible
            if col[0] < 0.0 {
                col.neg_mut();
            }
            x_vecs.set_column(k, &col);
        }

        Ok(Self {
            basis,
            jx,
            jy,
            jz,
            x_vecs,
        })
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn atoms(&self) -> usize {
        self.basis.atoms()
    }

    pub fn jx(&self) -> &DMatrix<f64> {
        &self.jx
    }

    pub fn jy(&self) -> &DMatrix<C64> {
        &self.jy
    }

    pub fn jz_diag(&self) -> &DVector<f64> {
        &self.jz
    }

    pub fn jz(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.jz)
    }

    pub fn jx2(&self) -> DMatrix<f64> {
        &self.jx * &self.jx
    }

    pub fn jz2(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.jz.map(|m| m * m))
    }

    /// Eigenvectors of `Jx` as columns, ordered by eigenvalue `-j..=j`.
    pub fn jx_eigenvectors(&self) -> &DMatrix<f64> {
        &self.x_vecs
    }

    /// Collective operator along `axis` as a complex matrix.
    pub fn operator(&self, axis: Axis) -> DMatrix<C64> {
        match axis {
            Axis::X => self.jx.map(|v| C64::new(v, 0.0)),
            Axis::Y => self.jy.clone(),
            Axis::Z => self.jz().map(|v| C64::new(v, 0.0)),
        }
    }

    /// `exp(-iθ J_μ)`.
    pub fn rotation(&self, axis: Axis, theta: f64, s: &PureState) -> Result<PureState> {
        check_angle(theta)?;
        self.check_dim(s.dim())?;
        let mut v = s.amps.clone();
        self.apply_gate(axis, theta, 0.0, v.as_mut_slice());
        Ok(PureState::from_raw(v))
    }

    /// One-axis twisting `exp(-iθ J_μ²)`.
    pub fn oat(&self, axis: Axis, theta: f64, s: &PureState) -> Result<PureState> {
        check_angle(theta)?;
        self.check_dim(s.dim())?;
        let mut v = s.amps.clone();
        self.apply_gate(axis, 0.0, theta, v.as_mut_slice());
        Ok(PureState::from_raw(v))
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Applies `exp(-i (lin·J_μ + quad·J_μ²))` in place.
    pub(crate) fn apply_gate(&self, axis: Axis, lin: f64, quad: f64, v: &mut [C64]) {
        match axis {
            Axis::Z => self.apply_z_phase(lin, quad, v),
            Axis::X => self.apply_x_phase(lin, quad, v),
            Axis::Y => {
                // R_y(θ) = R_z(π/2) R_x(θ) R_z(-π/2)
                self.apply_z_phase(-std::f64::consts::FRAC_PI_2, 0.0, v);
                self.apply_x_phase(lin, quad, v);
                self.apply_z_phase(std::f64::consts::FRAC_PI_2, 0.0, v);
            }
        }
    }

    pub(crate) fn apply_z_phase(&self, lin: f64, quad: f64, v: &mut [C64]) {
        for (i, a) in v.iter_mut().enumerate() {
            let m = self.basis.m(i);
            *a *= C64::from_polar(1.0, -(lin * m + quad * m * m));
        }
    }

    pub(crate) fn apply_x_phase(&self, lin: f64, quad: f64, v: &mut [C64]) {
        let dim = self.dim();
        let mut w = vec![C64::new(0.0, 0.0); dim];
        for (k, wk) in w.iter_mut().enumerate() {
            let col = self.x_vecs.column(k);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..dim {
                acc += v[i] * col[i];
            }
            let m = self.basis.m(k);
            *wk = acc * C64::from_polar(1.0, -(lin * m + quad * m * m));
        }
        v.fill(C64::new(0.0, 0.0));
        for (k, wk) in w.iter().enumerate() {
            let col = self.x_vecs.column(k);
            for i in 0..dim {
                v[i] += *wk * col[i];
            }
        }
    }

    /// Left-multiplies `m` by `exp(-i (lin·J_μ + quad·J_μ²))`.
    pub(crate) fn left_apply(&self, axis: Axis, lin: f64, quad: f64, m: &mut DMatrix<C64>) {
        match axis {
            Axis::Z => {
                for i in 0..m.nrows() {
                    let mi = self.basis.m(i);
                    let ph = C64::from_polar(1.0, -(lin * mi + quad * mi * mi));
                    m.row_mut(i).iter_mut().for_each(|x| *x *= ph);
                }
            }
            Axis::X => {
                // real eigenvectors: two real products per side beat one complex product
                let re = m.map(|z| z.re);
                let im = m.map(|z| z.im);
                let mut wr = self.x_vecs.tr_mul(&re);
                let mut wi = self.x_vecs.tr_mul(&im);
                for k in 0..wr.nrows() {
                    let mk = self.basis.m(k);
                    let (s, c) = (-(lin * mk + quad * mk * mk)).sin_cos();
                    for j in 0..wr.ncols() {
                        let (a, b) = (wr[(k, j)], wi[(k, j)]);
                        wr[(k, j)] = a * c - b * s;
                        wi[(k, j)] = a * s + b * c;
                    }
                }
                let re = &self.x_vecs * wr;
                let im = &self.x_vecs * wi;
                m.zip_zip_apply(&re, &im, |z, a, b| *z = C64::new(a, b));
            }
            Axis::Y => {
                self.left_apply(Axis::Z, -std::f64::consts::FRAC_PI_2, 0.0, m);
                self.left_apply(Axis::X, lin, quad, m);
                self.left_apply(Axis::Z, std::f64::consts::FRAC_PI_2, 0.0, m);
            }
        }
    }

    /// Dense unitary `exp(-i (lin·J_μ + quad·J_μ²))`.
    pub fn gate_matrix(&self, axis: Axis, lin: f64, quad: f64) -> DMatrix<C64> {
        let dim = self.dim();
        let mut u = DMatrix::<C64>::identity(dim, dim);
        self.left_apply(axis, lin, quad, &mut u);
        u
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("gate angle"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_zero_atoms() {
        assert!(SpinOperatorTable::build(0).is_err());
        assert!(SpinBasis::new(MAX_ATOMS + 1).is_err());
    }

    #[test]
    fn basis_layout() {
        let b = SpinBasis::new(3).unwrap();
        assert_eq!(b.dim(), 4);
        assert_eq!(b.j(), 1.5);
        assert_eq!(b.m_values(), vec![-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn spin_half_matrices() {
        let t = SpinOperatorTable::build(1).unwrap();
        assert_eq!(t.jz_diag().as_slice(), &[-0.5, 0.5]);
        assert!((t.jx()[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((t.jx()[(1, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spin_one_ladder_elements() {
        let t = SpinOperatorTable::build(2).unwrap();
        assert!((t.jx()[(0, 1)] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((t.jx()[(1, 2)] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(t.jx()[(0, 2)], 0.0);
    }

    #[test]
    fn commutator_identity() {
        for n in [1usize, 2, 5, 16, 64, 257, 512] {
            let t = SpinOperatorTable::build(n).unwrap();
            let jx = t.operator(Axis::X);
            let jy = t.operator(Axis::Y);
            let jz = t.operator(Axis::Z);
            let c = &jx * &jy - &jy * &jx - jz * C64::new(0.0, 1.0);
            // entries of JxJy are of order j(j+1); one ulp of that is the floor
            let j = n as f64 / 2.0;
            let tol = 1e-12 * (1.0 + j * (j + 1.0) / 64.0);
            assert!(max_abs(&c) < tol, "N={n}: {}", max_abs(&c));
        }
    }

    #[test]
    fn jx_eigenvectors_diagonalize() {
        for n in [1usize, 4, 33, 128] {
            let t = SpinOperatorTable::build(n).unwrap();
            let v = t.jx_eigenvectors();
            let d = v.transpose() * t.jx() * v;
            for k in 0..t.dim() {
                assert!((d[(k, k)] - t.basis().m(k)).abs() < 1e-10);
            }
            let off = (&d - DMatrix::from_diagonal(&d.diagonal())).amax();
            assert!(off < 1e-10, "N={n}: {off}");
        }
    }

    #[test]
    fn jz_acts_diagonally() {
        let t = SpinOperatorTable::build(6).unwrap();
        for i in 0..t.dim() {
            let s = PureState::basis_state(t.basis(), i);
            let out = t.operator(Axis::Z) * s.amplitudes();
            assert!((out[i].re - t.basis().m(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_angle_is_identity() {
        let t = SpinOperatorTable::build(7).unwrap();
        let s = t
            .rotation(Axis::Y, 0.3, &PureState::all_down(t.basis()))
            .unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let r = t.rotation(axis, 0.0, &s).unwrap();
            assert!((r.amplitudes() - s.amplitudes()).norm() < 1e-12);
        }
    }

    #[test]
    fn spin_half_y_rotation() {
        let t = SpinOperatorTable::build(1).unwrap();
        let s = t
            .rotation(Axis::Y, FRAC_PI_2, &PureState::all_down(t.basis()))
            .unwrap();
        let p = s.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn z_rotation_phases() {
        let t = SpinOperatorTable::build(4).unwrap();
        let theta = 0.37;
        for i in 0..t.dim() {
            let s = PureState::basis_state(t.basis(), i);
            let r = t.rotation(Axis::Z, theta, &s).unwrap();
            let expected = C64::from_polar(1.0, -theta * t.basis().m(i));
            assert!((r.amplitudes()[i] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn oat_spin_half_is_global_phase() {
        let t = SpinOperatorTable::build(1).unwrap();
        let s = t
            .rotation(Axis::Y, 0.8, &PureState::all_down(t.basis()))
            .unwrap();
        let theta = 1.3;
        for axis in [Axis::X, Axis::Z] {
            let r = t.oat(axis, theta, &s).unwrap();
            let expected = s.amplitudes() * C64::from_polar(1.0, -theta / 4.0);
            assert!((r.amplitudes() - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn oat_z_is_quadratic_phase() {
        let t = SpinOperatorTable::build(5).unwrap();
        let theta = 0.61;
        for i in 0..t.dim() {
            let m = t.basis().m(i);
            let r = t
                .oat(Axis::Z, theta, &PureState::basis_state(t.basis(), i))
                .unwrap();
            assert!((r.amplitudes()[i] - C64::from_polar(1.0, -theta * m * m)).norm() < 1e-14);
        }
    }

    #[test]
    fn gates_are_unitary() {
        let t = SpinOperatorTable::build(12).unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for (lin, quad) in [(0.7, 0.0), (0.0, 1.1), (-2.0, 0.4)] {
                let u = t.gate_matrix(axis, lin, quad);
                let dev = &u.adjoint() * &u - DMatrix::identity(t.dim(), t.dim());
                assert!(max_abs(&dev) < 1e-10);
            }
        }
    }

    #[test]
    fn y_rotation_by_pi_flips() {
        let t = SpinOperatorTable::build(6).unwrap();
        let r = t
            .rotation(Axis::Y, PI, &PureState::all_down(t.basis()))
            .unwrap();
        assert!((r.probabilities()[6] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_angle() {
        let t = SpinOperatorTable::build(2).unwrap();
        let s = PureState::all_down(t.basis());
        assert!(t.rotation(Axis::X, f64::NAN, &s).is_err());
        assert!(t.oat(Axis::Z, f64::INFINITY, &s).is_err());
    }
}
