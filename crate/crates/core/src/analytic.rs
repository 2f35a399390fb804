//! Second-order perturbative model for a bias field along the quantization
//! axis, treating the equivalent nuclei as one collective spin.
//!
//! The transition energy for Δm_I = 0 is
//!
//! ```text
//! f = D + m_s · Y,   Y = sqrt([γe(Bz + bz) + m_I A_zz]² + γe² (bx² + by²))
//! ```
//!
//! and the first-order sensitivity vanishes along z where
//! `γe Bz + m_I A_zz = 0`.
//!
//! Note: for any nonzero fluctuation the gradient magnitude of `f` is
//! exactly γe. The dip is the kink of `|γe Bz + m_I A_zz|` in the b → 0
//! limit; [`pt_gradient`] returns the literal partials and reports that
//! limit at the singular point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::RankTwoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtConfig {
    pub zfs: f64,
    pub gamma_e: f64,
    pub a_zz: f64,
    pub ms: i8,
    pub mi: i32,
}

impl PtConfig {
    pub fn new(zfs: f64, gamma_e: f64, a_zz: f64, ms: i8, mi: i32) -> Result<Self> {
        if ms != 1 && ms != -1 {
            return Err(Error::InvalidParameter(format!("m_s must be ±1, got {ms}")));
        }
        Ok(Self {
            zfs,
            gamma_e,
            a_zz,
            ms,
            mi,
        })
    }

    fn ms_f(&self) -> f64 {
        f64::from(self.ms)
    }

    /// `γe (Bz + bz) + m_I A_zz`
    fn axial(&self, bz: f64, b: [f64; 3]) -> f64 {
        self.gamma_e * (bz + b[2]) + f64::from(self.mi) * self.a_zz
    }

    fn transverse(&self, b: [f64; 3]) -> f64 {
        self.gamma_e * b[0].hypot(b[1])
    }
}

pub fn pt_transition_energy(cfg: &PtConfig, bz: f64, b: [f64; 3]) -> f64 {
    let y = cfg.axial(bz, b).hypot(cfg.transverse(b));
    cfg.zfs + cfg.ms_f() * y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtGradient {
    pub components: [f64; 3],
    pub magnitude: f64,
    /// Set at the removable singularity (dip with b = 0).
    pub kink: bool,
}

pub fn pt_gradient(cfg: &PtConfig, bz: f64, b: [f64; 3]) -> PtGradient {
    let axial = cfg.axial(bz, b);
    let y = axial.hypot(cfg.transverse(b));
    let ms = cfg.ms_f();
    let g = cfg.gamma_e;
    if y == 0.0 {
        // Directional limit approaching along +bz.
        return PtGradient {
            components: [0.0, 0.0, ms * g],
            magnitude: g,
            kink: true,
        };
    }
    let components = [
        ms * g * g * b[0] / y,
        ms * g * g * b[1] / y,
        ms * g * axial / y,
    ];
    let magnitude = components.iter().map(|c| c * c).sum::<f64>().sqrt();
    PtGradient {
        components,
        magnitude,
        kink: false,
    }
}

/// `-m_I A_zz / γe` for each `m_I`.
pub fn dip_fields(a_zz: f64, gamma_e: f64, mi_values: &[i32]) -> Result<Vec<f64>> {
    if !(gamma_e > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_e must be positive, got {gamma_e}"
        )));
    }
    Ok(mi_values
        .iter()
        .map(|&mi| -f64::from(mi) * a_zz / gamma_e)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    /// (m_I, A_zz in MHz) per shell.
    pub shells: Vec<(i32, f64)>,
}

/// `-Σᵢ m_Iᵢ A_zzᵢ / γe`
pub fn multi_shell_dip_field(spec: &ShellSpec, gamma_e: f64) -> Result<f64> {
    if spec.shells.is_empty() {
        return Err(Error::InvalidParameter("no nuclear shells given".into()));
    }
    if !(gamma_e > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_e must be positive, got {gamma_e}"
        )));
    }
    let sum: f64 = spec.shells.iter().map(|&(mi, a)| f64::from(mi) * a).sum();
    Ok(-sum / gamma_e)
}

/// `sqrt(A_zx² + A_zy² + A_zz²)`, the coupling that replaces A_zz when the
/// hyperfine axis is tilted out of plane.
pub fn effective_out_of_plane_coupling(a: &RankTwoTensor) -> f64 {
    (a.xz * a.xz + a.yz * a.yz + a.zz * a.zz).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const G: f64 = 28.02495;
    const AZZ: f64 = 48.158;

    fn cfg(ms: i8, mi: i32) -> PtConfig {
        PtConfig::new(3450.0, G, AZZ, ms, mi).unwrap()
    }

    #[test]
    fn energy_at_fifteen_mt() {
        let f = pt_transition_energy(&cfg(-1, 0), 15.0, [0.0; 3]);
        assert_abs_diff_eq!(f, 3450.0 - G * 15.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f, 3029.626, epsilon = 1e-3);
    }

    #[test]
    fn zero_fluctuation_reduces_to_absolute_value() {
        for bz in [-3.0, 0.5, 1.0, 4.0, 12.0] {
            for mi in -3..=3 {
                let c = cfg(1, mi);
                let f = pt_transition_energy(&c, bz, [0.0; 3]);
                let want = 3450.0 + (G * bz + f64::from(mi) * AZZ).abs();
                assert_abs_diff_eq!(f, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn at_dip_only_transverse_noise_remains() {
        let bz = AZZ / G;
        let f = pt_transition_energy(&cfg(-1, -1), bz, [0.003, 0.004, 0.0]);
        assert_abs_diff_eq!(f, 3450.0 - G * 0.005, epsilon = 1e-9);
    }

    #[test]
    fn gradient_off_dip() {
        let g = pt_gradient(&cfg(-1, 0), 15.0, [0.0; 3]);
        assert_eq!(g.components[0], 0.0);
        assert_eq!(g.components[1], 0.0);
        assert_abs_diff_eq!(g.components[2], -G, epsilon = 1e-12);
        assert_abs_diff_eq!(g.magnitude, G, epsilon = 1e-12);
        assert!(!g.kink);
        // Below the m_I = -1 dip the axial term is negative.
        let g = pt_gradient(&cfg(-1, -1), 1.0, [0.0; 3]);
        assert_abs_diff_eq!(g.components[2], G, epsilon = 1e-12);
    }

    #[test]
    fn gradient_at_dip_with_transverse_noise() {
        let bz = AZZ / G;
        let g = pt_gradient(&cfg(1, -1), bz, [1e-4, -2e-4, 0.0]);
        assert_abs_diff_eq!(g.magnitude, G, epsilon = 1e-9);
        assert!(g.components[2].abs() < 1e-6);
    }

    #[test]
    fn gradient_singularity_is_flagged() {
        let c = PtConfig::new(3450.0, 2.0, 4.0, -1, -1).unwrap();
        let g = pt_gradient(&c, 2.0, [0.0; 3]);
        assert!(g.kink);
        assert_eq!(g.magnitude, 2.0);
        assert!(g.components.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dip_positions() {
        let d = dip_fields(AZZ, G, &[-1, -2, -3, 0, 3]).unwrap();
        assert_abs_diff_eq!(d[0], 1.7184, epsilon = 1e-4);
        assert_abs_diff_eq!(d[1], 3.4368, epsilon = 1e-4);
        assert_abs_diff_eq!(d[2], 5.1552, epsilon = 1e-4);
        assert_eq!(d[3], 0.0);
        assert_abs_diff_eq!(d[4], -5.1552, epsilon = 1e-4);
        assert!(dip_fields(AZZ, 0.0, &[-1]).is_err());
    }

    #[test]
    fn multi_shell_sums() {
        let one = ShellSpec { shells: vec![(-1, AZZ)] };
        assert_abs_diff_eq!(multi_shell_dip_field(&one, G).unwrap(), 1.7184, epsilon = 1e-4);
        let two = ShellSpec {
            shells: vec![(-1, AZZ), (-1, 4.8158)],
        };
        let d = multi_shell_dip_field(&two, G).unwrap();
        assert_abs_diff_eq!(d, (AZZ + 4.8158) / G, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 1.890236, epsilon = 2e-6);
        let cancel = ShellSpec {
            shells: vec![(-1, 10.0), (2, 5.0)],
        };
        assert_eq!(multi_shell_dip_field(&cancel, G).unwrap(), 0.0);
        assert!(multi_shell_dip_field(&ShellSpec { shells: vec![] }, G).is_err());
    }

    #[test]
    fn out_of_plane_coupling() {
        let a = RankTwoTensor::planar(46.944, 90.025, 48.158, 0.0);
        assert_eq!(effective_out_of_plane_coupling(&a), 48.158);
        let b = RankTwoTensor::new(1.0, 2.0, 0.0, 0.5, 3.0, 4.0);
        assert_abs_diff_eq!(effective_out_of_plane_coupling(&b), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_ms() {
        assert!(PtConfig::new(3450.0, G, AZZ, 0, 0).is_err());
    }
}
