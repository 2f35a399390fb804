//! Field sensitivity of transition energies by central finite differences,
//! and the coherence-time estimate built from it.
//!
//! For each axis d the field is displaced by ±step along ê_d, the perturbed
//! eigensystem is matched state-by-state to the unperturbed one, and the
//! same (initial, final) pair is followed:
//!
//! ```text
//! ∂f/∂b_d   ≈ [f(+h) - f(-h)] / 2h
//! ∂²f/∂b_d² ≈ [f(+h) - 2 f(0) + f(-h)] / h²
//! f'  = |(∂f/∂b_x, ∂f/∂b_y, ∂f/∂b_z)|
//! f'' = |(∂²f/∂b_x², ∂²f/∂b_y², ∂²f/∂b_z²)|
//! ```
//!
//! Mixed second partials are not computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::hamiltonian::{FieldPoint, HamiltonianModel};
use crate::spectra::{eigensystem, match_states, record, transitions, EigenSystem, TransitionRecord};

pub const DEFAULT_STEP_MT: f64 = 1e-3;
pub const DEFAULT_SIGMA_B_MT: f64 = 0.1726;
pub const DEFAULT_T2_CAP_US: f64 = 1e4;
pub const DEFAULT_PROBABILITY_THRESHOLD: f64 = 0.3;
/// Relative eigen-residual above which a row is flagged.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Isotropic Gaussian field noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(rename = "sigma_B_mT")]
    pub sigma_b: f64,
}

impl NoiseModel {
    pub fn new(sigma_b: f64) -> Result<Self> {
        let n = Self { sigma_b };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_b > 0.0 && self.sigma_b.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "sigma_B must be positive, got {}",
                self.sigma_b
            )))
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_b: DEFAULT_SIGMA_B_MT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2Estimate {
    /// Microseconds.
    pub value: f64,
    pub capped: bool,
}

/// `T2 = 1 / sqrt((f' σ)² + ½ (f'' σ²)²)` in μs for f', f'' in MHz/mT and
/// MHz/mT², clipped at `cap` μs.
pub fn estimate_t2(f_prime: f64, f_double_prime: f64, noise: &NoiseModel, cap: f64) -> Result<T2Estimate> {
    noise.validate()?;
    if !(f_prime.is_finite() && f_double_prime.is_finite()) || f_prime < 0.0 || f_double_prime < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sensitivities must be finite and non-negative, got f'={f_prime}, f''={f_double_prime}"
        )));
    }
    let s = noise.sigma_b;
    let first = f_prime * s;
    let second = f_double_prime * s * s;
    let sigma_f = (first * first + 0.5 * second * second).sqrt();
    if sigma_f == 0.0 || 1.0 / sigma_f > cap {
        return Ok(T2Estimate {
            value: cap,
            capped: true,
        });
    }
    Ok(T2Estimate {
        value: 1.0 / sigma_f,
        capped: false,
    })
}

/// Central-difference results for a vector of tracked quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub values: Vec<f64>,
    pub gradient: Vec<[f64; 3]>,
    pub curvature: Vec<[f64; 3]>,
}

/// Evaluates `eval` at the origin and at ±step along each axis (seven
/// calls). `eval` returns one value per tracked quantity.
pub fn central_differences<F>(mut eval: F, step: f64) -> Result<Stencil>
where
    F: FnMut([f64; 3]) -> Result<Vec<f64>>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let values = eval([0.0; 3])?;
    let n = values.len();
    let mut gradient = vec![[0.0; 3]; n];
    let mut curvature = vec![[0.0; 3]; n];
    for d in 0..3 {
        let mut offset = [0.0; 3];
        offset[d] = step;
        let plus = eval(offset)?;
        offset[d] = -step;
        let minus = eval(offset)?;
        if plus.len() != n || minus.len() != n {
            return Err(Error::DimensionMismatch(
                "stencil evaluations returned different lengths".into(),
            ));
        }
        for k in 0..n {
            gradient[k][d] = (plus[k] - minus[k]) / (2.0 * step);
            curvature[k][d] = (plus[k] - 2.0 * values[k] + minus[k]) / (step * step);
        }
    }
    Ok(Stencil {
        values,
        gradient,
        curvature,
    })
}

pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Which transitions to report at a field point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selector {
    /// Every m_s = 0 → ±1 transition.
    All,
    /// The single most probable transition; flagged when its probability
    /// does not exceed `threshold`. Re-evaluated at every field point.
    MaxProbability { threshold: f64 },
    /// An explicit (initial, final) eigenstate index pair.
    Pair {
        initial: usize,
        #[serde(rename = "final")]
        fin: usize,
    },
}

impl Default for Selector {
    fn default() -> Self {
        Selector::MaxProbability {
            threshold: DEFAULT_PROBABILITY_THRESHOLD,
        }
    }
}

/// Applies `selector` to one eigensystem.
pub fn select(es: &EigenSystem, selector: &Selector) -> Result<Vec<(TransitionRecord, Flags)>> {
    let mixed = |r: &TransitionRecord| if r.mixed { Flags::MIXED } else { Flags::NONE };
    match *selector {
        Selector::All => Ok(transitions(es).into_iter().map(|r| (r, mixed(&r))).collect()),
        Selector::MaxProbability { threshold } => {
            let all = transitions(es);
            let best = all
                .iter()
                .copied()
                .reduce(|a, b| if b.probability > a.probability { b } else { a })
                .ok_or_else(|| Error::InvalidParameter("no transitions available".into()))?;
            let mut flags = mixed(&best);
            if best.probability <= threshold {
                flags |= Flags::LOW_PROBABILITY;
            }
            Ok(vec![(best, flags)])
        }
        Selector::Pair { initial, fin } => {
            if initial >= es.dim() || fin >= es.dim() {
                return Err(Error::InvalidParameter(format!(
                    "state pair ({initial}, {fin}) out of range for dimension {}",
                    es.dim()
                )));
            }
            let r = record(es, initial, fin);
            Ok(vec![(r, mixed(&r))])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseOptions {
    #[serde(rename = "fd_step_mT")]
    pub step: f64,
    #[serde(rename = "t2_cap_us")]
    pub t2_cap: f64,
    pub noise: NoiseModel,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP_MT,
            t2_cap: DEFAULT_T2_CAP_US,
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityResult {
    pub transition: TransitionRecord,
    /// MHz at the unperturbed field.
    pub f: f64,
    /// MHz/mT
    pub grad: [f64; 3],
    pub grad_mag: f64,
    /// MHz/mT²
    pub curv: [f64; 3],
    pub curv_mag: f64,
    pub t2: T2Estimate,
    pub flags: Flags,
}

#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub eigensystem: EigenSystem,
    pub results: Vec<SensitivityResult>,
    /// Smallest squared overlap over all six state matchings.
    pub min_overlap: f64,
}

/// Energies of `pairs` at `reference_field + offset`, following each state
/// of `reference` into the perturbed eigensystem.
fn tracked_energies(
    model: &HamiltonianModel,
    reference: &EigenSystem,
    reference_field: [f64; 3],
    pairs: &[(usize, usize)],
    offset: [f64; 3],
    min_overlap: &mut f64,
) -> Result<Vec<f64>> {
    if offset == [0.0; 3] {
        return Ok(pairs
            .iter()
            .map(|&(i, f)| reference.energies[f] - reference.energies[i])
            .collect());
    }
    let field = [
        reference_field[0] + offset[0],
        reference_field[1] + offset[1],
        reference_field[2] + offset[2],
    ];
    let perturbed = eigensystem(model, field)?;
    let m = match_states(reference, &perturbed)?;
    *min_overlap = min_overlap.min(m.min_overlap);
    Ok(pairs
        .iter()
        .map(|&(i, f)| perturbed.energies[m.permutation[f]] - perturbed.energies[m.permutation[i]])
        .collect())
}

/// Gradient, curvature and T2 for the selected transitions at `field`.
pub fn sensitivities(
    model: &HamiltonianModel,
    field: &FieldPoint,
    selector: &Selector,
    opts: &ResponseOptions,
) -> Result<SensitivityReport> {
    opts.noise.validate()?;
    let b0 = field.cartesian();
    let es = eigensystem(model, b0)?;
    let selected = select(&es, selector)?;
    let pairs: Vec<(usize, usize)> = selected.iter().map(|(r, _)| (r.initial, r.fin)).collect();

    let mut min_overlap = 1.0f64;
    let stencil = central_differences(
        |offset| tracked_energies(model, &es, b0, &pairs, offset, &mut min_overlap),
        opts.step,
    )?;

    let mut base = Flags::NONE;
    if min_overlap < crate::spectra::MATCH_FLAG_OVERLAP {
        base |= Flags::MATCH;
    }
    if es.relative_residual() > RESIDUAL_TOLERANCE {
        base |= Flags::RESIDUAL;
    }

    let mut results = Vec::with_capacity(selected.len());
    for (k, (rec, flags)) in selected.into_iter().enumerate() {
        let grad = stencil.gradient[k];
        let curv = stencil.curvature[k];
        let grad_mag = norm3(&grad);
        let curv_mag = norm3(&curv);
        let t2 = estimate_t2(grad_mag, curv_mag, &opts.noise, opts.t2_cap)?;
        let mut flags = flags | base;
        if t2.capped {
            flags |= Flags::CAPPED;
        }
        results.push(SensitivityResult {
            transition: rec,
            f: stencil.values[k],
            grad,
            grad_mag,
            curv,
            curv_mag,
            t2,
            flags,
        });
    }
    Ok(SensitivityReport {
        eigensystem: es,
        results,
        min_overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientResult {
    pub transition: TransitionRecord,
    pub components: [f64; 3],
    pub magnitude: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureResult {
    pub transition: TransitionRecord,
    pub components: [f64; 3],
    pub magnitude: f64,
    pub flags: Flags,
}

pub fn gradient(
    model: &HamiltonianModel,
    field: &FieldPoint,
    step: f64,
    selector: &Selector,
) -> Result<Vec<GradientResult>> {
    let opts = ResponseOptions {
        step,
        ..Default::default()
    };
    Ok(sensitivities(model, field, selector, &opts)?
        .results
        .into_iter()
        .map(|r| GradientResult {
            transition: r.transition,
            components: r.grad,
            magnitude: r.grad_mag,
            flags: r.flags,
        })
        .collect())
}

pub fn curvature(
    model: &HamiltonianModel,
    field: &FieldPoint,
    step: f64,
    selector: &Selector,
) -> Result<Vec<CurvatureResult>> {
    let opts = ResponseOptions {
        step,
        ..Default::default()
    };
    Ok(sensitivities(model, field, selector, &opts)?
        .results
        .into_iter()
        .map(|r| CurvatureResult {
            transition: r.transition,
            components: r.curv,
            magnitude: r.curv_mag,
            flags: r.flags,
        })
        .collect())
}
