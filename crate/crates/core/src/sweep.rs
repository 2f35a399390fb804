//! Field grids and parallel evaluation over them.
//!
//! Grid points are independent work items. Results are collected in grid
//! order, so output does not depend on the worker count. A failing point is
//! annotated with [`Flags::SOLVER`] and the sweep continues.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::hamiltonian::{FieldPoint, HamiltonianModel, SpinSystem};
use crate::response::{select, sensitivities, ResponseOptions, Selector, RESIDUAL_TOLERANCE};
use crate::spectra::{eigensystem, eminence_ratio, transitions, TransitionRecord};

pub const DEFAULT_LINE_POINTS: usize = 501;
pub const DEFAULT_ARC_POINTS: usize = 181;
pub const DEFAULT_SPHERE_THETA: usize = 91;
pub const DEFAULT_SPHERE_PHI: usize = 181;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Energies,
    Transitions,
    Gradient,
    Curvature,
    T2,
    Probability,
    Eminence,
}

impl Quantity {
    pub fn needs_derivatives(self) -> bool {
        matches!(self, Quantity::Gradient | Quantity::Curvature | Quantity::T2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineAxis {
    /// Along z, the quantization axis.
    Parallel,
    /// Along x.
    Transverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepGrid {
    LineParallel {
        #[serde(rename = "b_min_mT")]
        b_min: f64,
        #[serde(rename = "b_max_mT")]
        b_max: f64,
        n: usize,
    },
    LineTransverse {
        #[serde(rename = "b_min_mT")]
        b_min: f64,
        #[serde(rename = "b_max_mT")]
        b_max: f64,
        n: usize,
    },
    PolarArc {
        #[serde(rename = "B0_mT")]
        b0: f64,
        #[serde(rename = "theta_min_rad")]
        theta_min: f64,
        #[serde(rename = "theta_max_rad")]
        theta_max: f64,
        #[serde(rename = "phi_rad")]
        phi: f64,
        n: usize,
    },
    SphereShell {
        #[serde(rename = "B0_mT")]
        b0: f64,
        n_theta: usize,
        n_phi: usize,
    },
    Custom {
        points: Vec<FieldPoint>,
    },
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

impl SweepGrid {
    pub fn line(axis: LineAxis, b_min: f64, b_max: f64, n: usize) -> Self {
        match axis {
            LineAxis::Parallel => SweepGrid::LineParallel { b_min, b_max, n },
            LineAxis::Transverse => SweepGrid::LineTransverse { b_min, b_max, n },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            SweepGrid::LineParallel { b_min, b_max, n } | SweepGrid::LineTransverse { b_min, b_max, n } => {
                if !(b_min.is_finite() && b_max.is_finite()) || *b_min < 0.0 || b_min >= b_max {
                    return bad(format!("line sweep needs 0 <= b_min < b_max, got [{b_min}, {b_max}]"));
                }
                if *n < 2 {
                    return bad(format!("line sweep needs n >= 2, got {n}"));
                }
            }
            SweepGrid::PolarArc {
                b0,
                theta_min,
                theta_max,
                phi,
                n,
            } => {
                if !(*b0 > 0.0 && b0.is_finite()) {
                    return bad(format!("polar arc needs B0 > 0, got {b0}"));
                }
                if !(0.0..=PI).contains(theta_min) || !(0.0..=PI).contains(theta_max) || theta_min > theta_max {
                    return bad(format!("polar arc needs 0 <= theta_min <= theta_max <= pi, got [{theta_min}, {theta_max}]"));
                }
                if !(0.0..2.0 * PI).contains(phi) {
                    return bad(format!("phi must lie in [0, 2pi), got {phi}"));
                }
                if theta_min == theta_max {
                    if *n != 1 {
                        return bad("a single-point arc needs n = 1".into());
                    }
                } else if *n < 2 {
                    return bad(format!("polar arc needs n >= 2, got {n}"));
                }
            }
            SweepGrid::SphereShell { b0, n_theta, n_phi } => {
                if !(*b0 > 0.0 && b0.is_finite()) {
                    return bad(format!("sphere needs B0 > 0, got {b0}"));
                }
                if *n_theta < 2 || *n_phi < 2 {
                    return bad(format!("sphere needs n_theta, n_phi >= 2, got {n_theta} x {n_phi}"));
                }
            }
            SweepGrid::Custom { points } => {
                if points.is_empty() {
                    return bad("custom grid has no points".into());
                }
                if points.iter().any(|p| !p.is_finite() || p.b0 < 0.0) {
                    return bad("custom grid has an invalid point".into());
                }
            }
        }
        Ok(())
    }

    /// Field points in grid order. Sphere shells iterate φ fastest and
    /// exclude the φ = 2π duplicate.
    pub fn points(&self) -> Result<Vec<FieldPoint>> {
        self.validate()?;
        Ok(match self {
            SweepGrid::LineParallel { b_min, b_max, n } => linspace(*b_min, *b_max, *n)
                .into_iter()
                .map(FieldPoint::along_z)
                .collect(),
            SweepGrid::LineTransverse { b_min, b_max, n } => linspace(*b_min, *b_max, *n)
                .into_iter()
                .map(FieldPoint::along_x)
                .collect(),
            SweepGrid::PolarArc {
                b0,
                theta_min,
                theta_max,
                phi,
                n,
            } => linspace(*theta_min, *theta_max, *n)
                .into_iter()
                .map(|t| FieldPoint::new(*b0, t, *phi))
                .collect(),
            SweepGrid::SphereShell { b0, n_theta, n_phi } => {
                let thetas = linspace(0.0, PI, *n_theta);
                let mut pts = Vec::with_capacity(n_theta * n_phi);
                for t in thetas {
                    for k in 0..*n_phi {
                        pts.push(FieldPoint::new(*b0, t, 2.0 * PI * k as f64 / *n_phi as f64));
                    }
                }
                pts
            }
            SweepGrid::Custom { points } => points.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub response: ResponseOptions,
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            response: ResponseOptions::default(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

/// One (field point, transition) row. Columns not requested, or not
/// computable at a failed point, are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub b0: f64,
    pub theta: f64,
    pub phi: f64,
    pub initial: Option<usize>,
    pub fin: Option<usize>,
    pub ms_initial: Option<i8>,
    pub ms_final: Option<i8>,
    pub mi_final: Option<i32>,
    pub f: Option<f64>,
    pub probability: Option<f64>,
    pub grad: Option<f64>,
    pub curv: Option<f64>,
    pub t2: Option<f64>,
    pub eminence: Option<f64>,
    pub flags: Flags,
}

impl SweepRow {
    fn at(point: &FieldPoint) -> Self {
        Self {
            b0: point.b0,
            theta: point.theta,
            phi: point.phi,
            initial: None,
            fin: None,
            ms_initial: None,
            ms_final: None,
            mi_final: None,
            f: None,
            probability: None,
            grad: None,
            curv: None,
            t2: None,
            eminence: None,
            flags: Flags::NONE,
        }
    }

    fn with_transition(point: &FieldPoint, r: &TransitionRecord, flags: Flags) -> Self {
        Self {
            initial: Some(r.initial),
            fin: Some(r.fin),
            ms_initial: Some(r.ms_initial),
            ms_final: Some(r.ms_final),
            mi_final: Some(r.mi_final),
            f: Some(r.energy),
            probability: Some(r.probability),
            flags,
            ..Self::at(point)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub grid: SweepGrid,
    pub quantities: Vec<Quantity>,
    pub selector: Selector,
    pub settings: SweepSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    pub metadata: SweepMetadata,
    pub rows: Vec<SweepRow>,
}

impl SweepDataset {
    pub fn point_count(&self) -> usize {
        let mut n = 0;
        let mut last: Option<(u64, u64, u64)> = None;
        for r in &self.rows {
            let key = (r.b0.to_bits(), r.theta.to_bits(), r.phi.to_bits());
            if last != Some(key) {
                n += 1;
                last = Some(key);
            }
        }
        n
    }
}

fn evaluate_point(
    model: &HamiltonianModel,
    point: &FieldPoint,
    quantities: &[Quantity],
    selector: &Selector,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    let want = |q: Quantity| quantities.contains(&q);
    let derivatives = quantities.iter().any(|q| q.needs_derivatives());

    let (es, mut rows) = if derivatives {
        let report = sensitivities(model, point, selector, &settings.response)?;
        let rows = report
            .results
            .iter()
            .map(|s| {
                let mut row = SweepRow::with_transition(point, &s.transition, s.flags);
                if want(Quantity::Gradient) {
                    row.grad = Some(s.grad_mag);
                }
                if want(Quantity::Curvature) {
                    row.curv = Some(s.curv_mag);
                }
                if want(Quantity::T2) {
                    row.t2 = Some(s.t2.value);
                }
                row
            })
            .collect();
        (report.eigensystem, rows)
    } else {
        let es = eigensystem(model, point.cartesian())?;
        let mut rows: Vec<SweepRow> = select(&es, selector)?
            .iter()
            .map(|(r, flags)| SweepRow::with_transition(point, r, *flags))
            .collect();
        if es.relative_residual() > RESIDUAL_TOLERANCE {
            for r in &mut rows {
                r.flags |= Flags::RESIDUAL;
            }
        }
        (es, rows)
    };

    if want(Quantity::Eminence) {
        let all = transitions(&es);
        let ratios = eminence_ratio(&all).ratios;
        let n_excited = es.dim() - es.manifold(0).len();
        let zero = es.manifold(0);
        let excited: Vec<usize> = (0..es.dim()).filter(|&k| es.labels[k].ms != 0).collect();
        for row in &mut rows {
            let (Some(i), Some(f)) = (row.initial, row.fin) else {
                continue;
            };
            if let (Ok(a), Ok(b)) = (zero.binary_search(&i), excited.binary_search(&f)) {
                row.eminence = Some(ratios[a * n_excited + b]);
            }
        }
    }
    Ok(rows)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Evaluates `quantities` for the transitions picked by `selector` at every
/// point of `grid`.
pub fn run_sweep(
    sys: &SpinSystem,
    grid: &SweepGrid,
    quantities: &[Quantity],
    selector: &Selector,
    settings: &SweepSettings,
) -> Result<SweepDataset> {
    if quantities.is_empty() {
        return Err(Error::InvalidParameter("no quantities requested".into()));
    }
    settings.response.noise.validate()?;
    let points = grid.points()?;
    let model = HamiltonianModel::new(sys)?;

    let per_point: Vec<Vec<SweepRow>> = pool(settings.workers)?.install(|| {
        points
            .par_iter()
            .map(|p| match evaluate_point(&model, p, quantities, selector, settings) {
                Ok(rows) => rows,
                Err(e) => {
                    log::warn!("field point ({}, {}, {}) failed: {e}", p.b0, p.theta, p.phi);
                    let mut row = SweepRow::at(p);
                    row.flags = Flags::SOLVER;
                    vec![row]
                }
            })
            .collect()
    });

    Ok(SweepDataset {
        metadata: SweepMetadata {
            grid: grid.clone(),
            quantities: quantities.to_vec(),
            selector: *selector,
            settings: *settings,
        },
        rows: per_point.into_iter().flatten().collect(),
    })
}

pub fn sweep_line(
    sys: &SpinSystem,
    axis: LineAxis,
    b_min: f64,
    b_max: f64,
    n: usize,
    quantities: &[Quantity],
    selector: &Selector,
    settings: &SweepSettings,
) -> Result<SweepDataset> {
    run_sweep(sys, &SweepGrid::line(axis, b_min, b_max, n), quantities, selector, settings)
}

pub fn sweep_polar_arc(
    sys: &SpinSystem,
    b0: f64,
    theta_range: (f64, f64),
    phi: f64,
    n: usize,
    quantities: &[Quantity],
    selector: &Selector,
    settings: &SweepSettings,
) -> Result<SweepDataset> {
    let grid = SweepGrid::PolarArc {
        b0,
        theta_min: theta_range.0,
        theta_max: theta_range.1,
        phi,
        n,
    };
    run_sweep(sys, &grid, quantities, selector, settings)
}

pub fn sweep_sphere(
    sys: &SpinSystem,
    b0: f64,
    n_theta: usize,
    n_phi: usize,
    quantity: Quantity,
    selector: &Selector,
    settings: &SweepSettings,
) -> Result<SweepDataset> {
    run_sweep(
        sys,
        &SweepGrid::SphereShell { b0, n_theta, n_phi },
        &[quantity],
        selector,
        settings,
    )
}

/// Eigenenergies at one field point; `None` when the solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub point: FieldPoint,
    pub energies: Option<Vec<f64>>,
    pub ms: Option<Vec<i8>>,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDataset {
    pub grid: SweepGrid,
    pub dim: usize,
    pub rows: Vec<SpectrumRow>,
}

/// All eigenenergies along `grid`.
pub fn spectrum_sweep(sys: &SpinSystem, grid: &SweepGrid, workers: usize) -> Result<SpectrumDataset> {
    let points = grid.points()?;
    let model = HamiltonianModel::new(sys)?;
    let rows = pool(workers)?.install(|| {
        points
            .par_iter()
            .map(|p| match eigensystem(&model, p.cartesian()) {
                Ok(es) => {
                    let mut flags = Flags::NONE;
                    if es.relative_residual() > RESIDUAL_TOLERANCE {
                        flags |= Flags::RESIDUAL;
                    }
                    if es.labels.iter().any(|l| l.mixed) {
                        flags |= Flags::MIXED;
                    }
                    SpectrumRow {
                        point: *p,
                        ms: Some(es.labels.iter().map(|l| l.ms).collect()),
                        energies: Some(es.energies),
                        flags,
                    }
                }
                Err(e) => {
                    log::warn!("field point ({}, {}, {}) failed: {e}", p.b0, p.theta, p.phi);
                    SpectrumRow {
                        point: *p,
                        energies: None,
                        ms: None,
                        flags: Flags::SOLVER,
                    }
                }
            })
            .collect()
    });
    Ok(SpectrumDataset {
        grid: grid.clone(),
        dim: model.dim(),
        rows,
    })
}
