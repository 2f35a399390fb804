//! Angular-momentum matrices, Kronecker embedding into a composite Hilbert
//! space, and rank-2 tensor rotation about the symmetry axis.
//!
//! Every subsystem basis is ordered by descending magnetic quantum number
//! `m = s, s-1, ..., -s`. Composite spaces are ordered electron first, then
//! nuclei in list order.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Spin matrices for a single spin `s` (hbar = 1).
#[derive(Debug, Clone)]
pub struct SpinOperatorSet {
    pub s: f64,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
    pub splus: CMatrix,
    pub sminus: CMatrix,
}

impl SpinOperatorSet {
    pub fn dim(&self) -> usize {
        self.sz.nrows()
    }

    /// Components in (x, y, z) order.
    pub fn xyz(&self) -> [&CMatrix; 3] {
        [&self.sx, &self.sy, &self.sz]
    }
}

/// Number of basis states `2s + 1`, or an error when `2s` is not a
/// non-negative integer.
pub fn multiplicity(s: f64) -> Result<usize> {
    let two_s = 2.0 * s;
    if !s.is_finite() || s < 0.0 || (two_s - two_s.round()).abs() > 1e-12 {
        return Err(Error::InvalidSpin(s));
    }
    Ok(two_s.round() as usize + 1)
}

pub fn spin_operators(s: f64) -> Result<SpinOperatorSet> {
    let dim = multiplicity(s)?;
    let m = |k: usize| s - k as f64;

    let sz = CMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            Complex64::new(m(r), 0.0)
        } else {
            C0
        }
    });
    // <m+1|S+|m> = sqrt(s(s+1) - m(m+1)); row r holds m(r) = m(c) + 1.
    let splus = CMatrix::from_fn(dim, dim, |r, c| {
        if c == r + 1 {
            let mc = m(c);
            Complex64::new((s * (s + 1.0) - mc * (mc + 1.0)).max(0.0).sqrt(), 0.0)
        } else {
            C0
        }
    });
    let sminus = splus.adjoint();
    let sx = (&splus + &sminus).map(|z| z * 0.5);
    let sy = (&splus - &sminus).map(|z| z * Complex64::new(0.0, -0.5));

    Ok(SpinOperatorSet {
        s,
        sx,
        sy,
        sz,
        splus,
        sminus,
    })
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Places `op` at position `slot` of the tensor product
/// `I ⊗ ... ⊗ op ⊗ ... ⊗ I`.
pub fn embed(op: &CMatrix, slot: usize, dims: &[usize]) -> Result<CMatrix> {
    if slot >= dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "slot {slot} out of range for {} subsystems",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::DimensionMismatch(
            "subsystem dimensions must be >= 1".into(),
        ));
    }
    if !op.is_square() || op.nrows() != dims[slot] {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but subsystem {slot} has dimension {}",
            op.nrows(),
            op.ncols(),
            dims[slot]
        )));
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    // I_left ⊗ op ⊗ I_right, written out directly.
    let n = left * dims[slot] * right;
    let d = dims[slot];
    let mut out = CMatrix::zeros(n, n);
    for l in 0..left {
        for i in 0..d {
            for j in 0..d {
                let v = op[(i, j)];
                if v == C0 {
                    continue;
                }
                let row0 = (l * d + i) * right;
                let col0 = (l * d + j) * right;
                for r in 0..right {
                    out[(row0 + r, col0 + r)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Symmetric 3x3 interaction tensor in MHz, built from its six independent
/// entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTwoTensor {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    #[serde(default)]
    pub xy: f64,
    #[serde(default)]
    pub xz: f64,
    #[serde(default)]
    pub yz: f64,
}

impl RankTwoTensor {
    pub fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        Self {
            xx,
            yy,
            zz,
            xy,
            xz,
            yz,
        }
    }

    /// In-plane tensor with no xz/yz coupling.
    pub fn planar(xx: f64, yy: f64, zz: f64, xy: f64) -> Self {
        Self::new(xx, yy, zz, xy, 0.0, 0.0)
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let s = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
        Self::new(s(0, 0), s(1, 1), s(2, 2), s(0, 1), s(0, 2), s(1, 2))
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        match (a.min(b), a.max(b)) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            (2, 2) => self.zz,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 2) => self.yz,
            _ => panic!("tensor index out of range: ({a}, {b})"),
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Keeps only the zz element (secular coupling along the quantization axis).
    pub fn axial_part(&self) -> Self {
        Self::new(0.0, 0.0, self.zz, 0.0, 0.0, 0.0)
    }
}

/// Active rotation `R T Rᵀ` about z by `angle` radians.
pub fn rotate_tensor_about_z(t: &RankTwoTensor, angle: f64) -> RankTwoTensor {
    let (s, c) = angle.sin_cos();
    let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    RankTwoTensor::from_matrix(&(r * t.to_matrix() * r.transpose()))
}

pub(crate) fn czero() -> Complex64 {
    C0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_one_matrices() {
        let ops = spin_operators(1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (i, m) in [1.0, 0.0, -1.0].iter().enumerate() {
            assert_eq!(ops.sz[(i, i)].re, *m);
        }
        let expected = [[0.0, r, 0.0], [r, 0.0, r], [0.0, r, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(ops.sx[(i, j)].re, expected[i][j], epsilon = 1e-15);
                assert_abs_diff_eq!(ops.sx[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn spin_half_commutator() {
        let ops = spin_operators(0.5).unwrap();
        let comm = &ops.sx * &ops.sy - &ops.sy * &ops.sx;
        let i_sz = ops.sz.map(|z| z * Complex64::i());
        assert!(max_abs(&(comm - i_sz)) < 1e-15);
    }

    #[test]
    fn spin_operator_identities() {
        for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let ops = spin_operators(s).unwrap();
            let [x, y, z] = ops.xyz();
            for m in [x, y, z] {
                assert!(max_abs(&(m - m.adjoint())) < 1e-12);
            }
            assert!(max_abs(&(&ops.splus - ops.sminus.adjoint())) < 1e-12);
            let i = Complex64::i();
            let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
            assert!(max_abs(&(comm(x, y) - z.map(|v| v * i))) < 1e-12);
            assert!(max_abs(&(comm(y, z) - x.map(|v| v * i))) < 1e-12);
            assert!(max_abs(&(comm(z, x) - y.map(|v| v * i))) < 1e-12);
            let casimir = x * x + y * y + z * z;
            let target = identity(ops.dim()).map(|v| v * (s * (s + 1.0)));
            assert!(max_abs(&(casimir - target)) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_half_integer_spin() {
        assert!(matches!(spin_operators(0.3), Err(Error::InvalidSpin(_))));
        assert!(spin_operators(-1.0).is_err());
        assert!(spin_operators(f64::NAN).is_err());
    }

    #[test]
    fn embed_electron_sz() {
        let sz = spin_operators(1.0).unwrap().sz;
        let e = embed(&sz, 0, &[3, 3]).unwrap();
        let diag = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0];
        for r in 0..9 {
            for c in 0..9 {
                let want = if r == c { diag[r] } else { 0.0 };
                assert_eq!(e[(r, c)].re, want);
            }
        }
    }

    #[test]
    fn embed_identity_and_trace() {
        let id = identity(3);
        for slot in 0..4 {
            let e = embed(&id, slot, &[3, 3, 3, 3]).unwrap();
            assert_eq!(e, identity(81));
        }
        let ops = spin_operators(1.0).unwrap();
        let op = &ops.sz * &ops.sz + &ops.sx;
        let dims = [3, 2, 4];
        let op3 = &op;
        let e = embed(op3, 0, &dims).unwrap();
        assert_abs_diff_eq!(e.trace().re, op.trace().re * 8.0, epsilon = 1e-12);
    }

    #[test]
    fn embed_matches_kron() {
        let ops = spin_operators(1.0).unwrap();
        let half = spin_operators(0.5).unwrap();
        let e = embed(&half.sy, 1, &[3, 2, 3]).unwrap();
        let k = kron(&kron(&identity(3), &half.sy), &identity(3));
        assert_eq!(e, k);
        let e0 = embed(&ops.sx, 0, &[3, 2]).unwrap();
        assert_eq!(e0, kron(&ops.sx, &identity(2)));
    }

    #[test]
    fn embed_dimension_errors() {
        let sz = spin_operators(1.0).unwrap().sz;
        assert!(matches!(
            embed(&sz, 0, &[2, 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(embed(&sz, 2, &[3, 3]).is_err());
        assert!(embed(&sz, 0, &[3, 0]).is_err());
    }

    #[test]
    fn rotation_identity_and_closure() {
        let t = RankTwoTensor::new(46.944, 90.025, 48.158, 1.5, -0.3, 0.7);
        assert_eq!(rotate_tensor_about_z(&t, 0.0), t);
        let third = 2.0 * std::f64::consts::PI / 3.0;
        let mut r = t;
        for _ in 0..3 {
            r = rotate_tensor_about_z(&r, third);
        }
        for (a, b) in [
            (r.xx, t.xx),
            (r.yy, t.yy),
            (r.zz, t.zz),
            (r.xy, t.xy),
            (r.xz, t.xz),
            (r.yz, t.yz),
        ] {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadrupole_row_rotates_to_other_nuclei() {
        let q1 = RankTwoTensor::planar(-0.46, 0.98, -0.52, 0.0);
        let third = 2.0 * std::f64::consts::PI / 3.0;
        let q3 = rotate_tensor_about_z(&q1, third);
        assert_abs_diff_eq!(q3.xx, 0.62, epsilon = 5e-4);
        assert_abs_diff_eq!(q3.yy, -0.10, epsilon = 5e-4);
        assert_abs_diff_eq!(q3.xy, 0.623, epsilon = 1e-3);
        let q2 = rotate_tensor_about_z(&q1, -third);
        assert_abs_diff_eq!(q2.xy, -0.623, epsilon = 1e-3);
        assert_abs_diff_eq!(q2.trace(), q1.trace(), epsilon = 1e-12);
    }
}
