//! System parameters and assembly of the full spin Hamiltonian.
//!
//! Units: energies in MHz (frequency units, h = 1), fields in mT,
//! gyromagnetic ratios in MHz/mT.
//!
//! ```text
//! H = D (Sz² - 2/3) + ε (Sy² - Sx²) + γe B·S
//!     + Σᵢ S·Aⁱ·Iⁱ + Σᵢ γnⁱ B·Iⁱ + Σᵢ Iⁱ·Qⁱ·Iⁱ
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{embed, identity, multiplicity, rotate_tensor_about_z, spin_operators};
use crate::spin::{CMatrix, RankTwoTensor};

/// Free-electron gyromagnetic ratio.
pub const GAMMA_E_MHZ_PER_MT: f64 = 28.02495;
/// ¹⁴N nuclear gyromagnetic ratio.
pub const GAMMA_N14_MHZ_PER_MT: f64 = 3.0777e-3;
/// Ground-state zero-field splitting of the boron vacancy.
pub const VB_ZFS_MHZ: f64 = 3450.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusSpec {
    pub spin: f64,
    #[serde(rename = "gamma_n_MHz_per_mT")]
    pub gamma_n: f64,
    #[serde(rename = "A_MHz")]
    pub hyperfine: RankTwoTensor,
    #[serde(rename = "Q_MHz")]
    pub quadrupole: RankTwoTensor,
}

impl NucleusSpec {
    pub fn nitrogen14(hyperfine: RankTwoTensor, quadrupole: RankTwoTensor) -> Self {
        Self {
            spin: 1.0,
            gamma_n: GAMMA_N14_MHZ_PER_MT,
            hyperfine,
            quadrupole,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    #[serde(rename = "D_MHz")]
    pub zfs: f64,
    #[serde(rename = "epsilon_MHz", default)]
    pub strain: f64,
    #[serde(rename = "gamma_e_MHz_per_mT")]
    pub gamma_e: f64,
    pub nuclei: Vec<NucleusSpec>,
}

impl SpinSystem {
    /// Subsystem dimensions, electron first.
    pub fn dims(&self) -> Result<Vec<usize>> {
        let mut dims = vec![3];
        for n in &self.nuclei {
            dims.push(multiplicity(n.spin)?);
        }
        Ok(dims)
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.dims()?.iter().product())
    }

    /// Dimension of the nuclear space alone (states per electron manifold).
    pub fn nuclear_dim(&self) -> Result<usize> {
        Ok(self.dim()? / 3)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} is not finite")))
            }
        };
        finite("D", self.zfs)?;
        finite("epsilon", self.strain)?;
        finite("gamma_e", self.gamma_e)?;
        if self.gamma_e <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma_e must be positive, got {}",
                self.gamma_e
            )));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if n.spin <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "nucleus {i}: spin must be positive"
                )));
            }
            multiplicity(n.spin)?;
            finite("gamma_n", n.gamma_n)?;
            if !n.hyperfine.is_finite() || !n.quadrupole.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "nucleus {i}: non-finite tensor entry"
                )));
            }
        }
        Ok(())
    }

    /// Only the secular hyperfine coupling (A_zz Sz Iz) and no quadrupole:
    /// the Hamiltonian the closed-form perturbative model describes.
    pub fn with_secular_coupling(&self) -> Self {
        let mut out = self.clone();
        for n in &mut out.nuclei {
            n.hyperfine = n.hyperfine.axial_part();
            n.quadrupole = RankTwoTensor::zero();
        }
        out
    }

    /// Replaces nuclei 2 and 3 by exact ∓120° rotations of nucleus 1.
    pub fn with_exact_c3_tensors(&self) -> Self {
        let mut out = self.clone();
        if let Some(first) = self.nuclei.first().cloned() {
            let third = 2.0 * PI / 3.0;
            for (k, n) in out.nuclei.iter_mut().enumerate().skip(1).take(2) {
                let angle = if k == 1 { -third } else { third };
                n.hyperfine = rotate_tensor_about_z(&first.hyperfine, angle);
                n.quadrupole = rotate_tensor_about_z(&first.quadrupole, angle);
            }
        }
        out
    }

    /// Zeroes every hyperfine and quadrupole tensor.
    pub fn decoupled(&self) -> Self {
        let mut out = self.clone();
        for n in &mut out.nuclei {
            n.hyperfine = RankTwoTensor::zero();
            n.quadrupole = RankTwoTensor::zero();
        }
        out
    }
}

/// V_B⁻ in hBN with its three first-shell ¹⁴N nuclei.
pub fn default_vb_system() -> SpinSystem {
    let n = NucleusSpec::nitrogen14;
    SpinSystem {
        zfs: VB_ZFS_MHZ,
        strain: 0.0,
        gamma_e: GAMMA_E_MHZ_PER_MT,
        nuclei: vec![
            n(
                RankTwoTensor::planar(46.944, 90.025, 48.158, 0.0),
                RankTwoTensor::planar(-0.46, 0.98, -0.52, 0.0),
            ),
            n(
                RankTwoTensor::planar(79.406, 58.170, 48.159, -18.391),
                RankTwoTensor::planar(0.62, -0.1, -0.52, -0.623),
            ),
            n(
                RankTwoTensor::planar(79.406, 58.170, 48.159, 18.391),
                RankTwoTensor::planar(0.62, -0.1, -0.52, 0.623),
            ),
        ],
    }
}

/// Bias field `B0 r̂(θ, φ)` plus an optional Cartesian fluctuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    #[serde(rename = "B0_mT")]
    pub b0: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    #[serde(rename = "phi_rad")]
    pub phi: f64,
    #[serde(rename = "offset_mT", default)]
    pub offset: [f64; 3],
}

impl FieldPoint {
    pub fn new(b0: f64, theta: f64, phi: f64) -> Self {
        Self {
            b0,
            theta,
            phi,
            offset: [0.0; 3],
        }
    }

    pub fn along_z(b0: f64) -> Self {
        Self::new(b0, 0.0, 0.0)
    }

    pub fn along_x(b0: f64) -> Self {
        Self::new(b0, PI / 2.0, 0.0)
    }

    pub fn with_offset(mut self, offset: [f64; 3]) -> Self {
        self.offset = offset;
        self
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn cartesian(&self) -> [f64; 3] {
        let r = self.unit_vector();
        [
            self.b0 * r[0] + self.offset[0],
            self.b0 * r[1] + self.offset[1],
            self.b0 * r[2] + self.offset[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.b0.is_finite()
            && self.theta.is_finite()
            && self.phi.is_finite()
            && self.offset.iter().all(|v| v.is_finite())
    }
}

pub fn field_vector(b0: f64, theta: f64, phi: f64) -> Result<[f64; 3]> {
    if b0 < 0.0 || !b0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "field magnitude must be finite and non-negative, got {b0}"
        )));
    }
    Ok(FieldPoint::new(b0, theta, phi).cartesian())
}

/// Precomputed pieces of the Hamiltonian: `H(B) = H_static + Σ_d B_d M_d`.
///
/// Also carries the embedded electron operators needed downstream
/// (transition probabilities, manifold labels).
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    dims: Vec<usize>,
    static_part: CMatrix,
    field_coupling: [CMatrix; 3],
    electron: [CMatrix; 3],
    nuclear_z_total: CMatrix,
}

impl HamiltonianModel {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        sys.validate()?;
        let dims = sys.dims()?;
        let n = dims.iter().product::<usize>();
        let s = spin_operators(1.0)?;
        let electron = [
            embed(&s.sx, 0, &dims)?,
            embed(&s.sy, 0, &dims)?,
            embed(&s.sz, 0, &dims)?,
        ];

        let re = |v: f64| Complex64::new(v, 0.0);
        let scale = |m: &CMatrix, v: f64| m.map(|z| z * v);
        let id = identity(n);

        let sz2 = &electron[2] * &electron[2];
        let sx2 = &electron[0] * &electron[0];
        let sy2 = &electron[1] * &electron[1];
        let mut h = scale(&(sz2 - id.map(|z| z * (2.0 / 3.0))), sys.zfs);
        if sys.strain != 0.0 {
            h += scale(&(sy2 - sx2), sys.strain);
        }

        let mut field_coupling = [
            scale(&electron[0], sys.gamma_e),
            scale(&electron[1], sys.gamma_e),
            scale(&electron[2], sys.gamma_e),
        ];
        let mut nuclear_z_total = CMatrix::zeros(n, n);

        for (k, nuc) in sys.nuclei.iter().enumerate() {
            let slot = k + 1;
            let ops = spin_operators(nuc.spin)?;
            let nuc_ops = [
                embed(&ops.sx, slot, &dims)?,
                embed(&ops.sy, slot, &dims)?,
                embed(&ops.sz, slot, &dims)?,
            ];
            for a in 0..3 {
                field_coupling[a] += scale(&nuc_ops[a], nuc.gamma_n);
                for b in 0..3 {
                    let a_ab = nuc.hyperfine.get(a, b);
                    if a_ab != 0.0 {
                        h += (&electron[a] * &nuc_ops[b]).map(|z| z * re(a_ab));
                    }
                    let q_ab = nuc.quadrupole.get(a, b);
                    if q_ab != 0.0 {
                        h += (&nuc_ops[a] * &nuc_ops[b]).map(|z| z * re(q_ab));
                    }
                }
            }
            nuclear_z_total += &nuc_ops[2];
        }

        Ok(Self {
            dims,
            static_part: hermitize(h),
            field_coupling: field_coupling.map(hermitize),
            electron,
            nuclear_z_total,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.static_part.nrows()
    }

    /// Embedded electron (Sx, Sy, Sz).
    pub fn electron_ops(&self) -> &[CMatrix; 3] {
        &self.electron
    }

    /// Σᵢ Izⁱ over all nuclei.
    pub fn nuclear_z_total(&self) -> &CMatrix {
        &self.nuclear_z_total
    }

    /// Hamiltonian at Cartesian field `b` (mT).
    pub fn at(&self, b: [f64; 3]) -> Result<CMatrix> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite field vector {b:?}"
            )));
        }
        let mut h = self.static_part.clone();
        for (d, &bd) in b.iter().enumerate() {
            if bd != 0.0 {
                h.zip_apply(&self.field_coupling[d], |x, m| *x += m * bd);
            }
        }
        Ok(h)
    }
}

/// `(M + M†)/2`, exactly Hermitian entry by entry.
fn hermitize(m: CMatrix) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(m[(r, r)].re, 0.0)
        } else if r < c {
            (m[(r, c)] + m[(c, r)].conj()) * 0.5
        } else {
            ((m[(c, r)] + m[(r, c)].conj()) * 0.5).conj()
        }
    })
}

pub fn build_hamiltonian(sys: &SpinSystem, field: &FieldPoint) -> Result<CMatrix> {
    if !field.is_finite() {
        return Err(Error::InvalidParameter("non-finite field point".into()));
    }
    HamiltonianModel::new(sys)?.at(field.cartesian())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_system_parameters() {
        let sys = default_vb_system();
        assert_eq!(sys.zfs, 3450.0);
        assert_eq!(sys.strain, 0.0);
        assert_eq!(sys.dim().unwrap(), 81);
        let a0 = sys.nuclei[0].hyperfine;
        assert_eq!((a0.xx, a0.yy, a0.zz, a0.xy), (46.944, 90.025, 48.158, 0.0));
        assert_eq!(sys.nuclei[1].hyperfine.xy, -18.391);
        assert_eq!(sys.nuclei[2].hyperfine.xy, 18.391);
    }

    #[test]
    fn field_vector_cases() {
        let b = field_vector(2.0, 0.0, 1.234).unwrap();
        assert_abs_diff_eq!(b[0], 0.0);
        assert_abs_diff_eq!(b[2], 2.0);
        let b = field_vector(3.0, PI / 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(b[0], 3.0);
        assert_abs_diff_eq!(b[1], 0.0);
        assert_abs_diff_eq!(b[2], 0.0, epsilon = 1e-15);
        let b = field_vector(1.0, PI / 4.0, PI / 4.0).unwrap();
        assert_abs_diff_eq!(b[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b[2], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(field_vector(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn offset_adds_to_cartesian() {
        let f = FieldPoint::along_z(10.0).with_offset([0.1, -0.2, 0.3]);
        assert_eq!(f.cartesian(), [0.1, -0.2, 10.3]);
    }

    #[test]
    fn hamiltonian_is_exactly_hermitian() {
        let h = build_hamiltonian(&default_vb_system(), &FieldPoint::new(7.3, 0.4, 2.1)).unwrap();
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut sys = default_vb_system();
        sys.gamma_e = 0.0;
        assert!(HamiltonianModel::new(&sys).is_err());
        let mut sys = default_vb_system();
        sys.zfs = f64::NAN;
        assert!(HamiltonianModel::new(&sys).is_err());
        let sys = default_vb_system();
        let f = FieldPoint::new(f64::INFINITY, 0.0, 0.0);
        assert!(build_hamiltonian(&sys, &f).is_err());
    }

    #[test]
    fn exact_c3_tensors_preserve_first_nucleus() {
        let sys = default_vb_system().with_exact_c3_tensors();
        assert_eq!(sys.nuclei[0], default_vb_system().nuclei[0]);
        assert_abs_diff_eq!(sys.nuclei[1].quadrupole.xy, -0.623, epsilon = 1e-3);
        assert_abs_diff_eq!(sys.nuclei[2].quadrupole.xy, 0.623, epsilon = 1e-3);
        // Tabulated hyperfine rows are not an exact rotation of the first row.
        assert!((sys.nuclei[1].hyperfine.xx - 79.406).abs() > 0.1);
    }

    #[test]
    fn serde_uses_unit_suffixed_keys() {
        let text = toml::to_string(&default_vb_system()).unwrap();
        assert!(text.contains("D_MHz"));
        assert!(text.contains("gamma_e_MHz_per_mT"));
        assert!(text.contains("A_MHz"));
        let back: SpinSystem = toml::from_str(&text).unwrap();
        assert_eq!(back, default_vb_system());
    }
}
