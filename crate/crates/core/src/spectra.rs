//! Eigenstructure of the Hamiltonian: diagonalization, electron-manifold
//! labels, the m_s = 0 → ±1 transition list, transition probabilities and
//! state matching between nearby field points.

use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::spin::{czero, CMatrix};

/// Below this |⟨Sz⟩| a state assigned to m_s = ±1 is flagged as mixed.
pub const MIXED_SZ_UPPER: f64 = 0.65;
/// Above this ⟨Sz²⟩ a state assigned to m_s = 0 is flagged as mixed.
pub const MIXED_SZ_LOWER: f64 = 0.35;
/// Squared overlap below which a state match is flagged.
pub const MATCH_FLAG_OVERLAP: f64 = 0.5;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    /// Dominant electron manifold: -1, 0 or +1.
    pub ms: i8,
    pub mixed: bool,
    pub sz: f64,
    pub sz_sq: f64,
    /// ⟨Σᵢ Izⁱ⟩
    pub nuclear_z: f64,
}

impl StateLabel {
    /// Collective nuclear projection rounded to the nearest integer.
    pub fn mi(&self) -> i32 {
        self.nuclear_z.round() as i32
    }

    /// True when both electron and collective nuclear projections are
    /// within 0.25 of integers.
    pub fn is_pure(&self) -> bool {
        !self.mixed && (self.nuclear_z - self.nuclear_z.round()).abs() < 0.25
    }
}

#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Ascending, MHz.
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, same order as `energies`.
    pub states: CMatrix,
    pub labels: Vec<StateLabel>,
    /// Largest ‖H v - E v‖ over all states.
    pub max_residual: f64,
    /// Frobenius norm of H.
    pub hamiltonian_norm: f64,
    /// Trace of H (real part).
    pub hamiltonian_trace: f64,
    transverse: [CMatrix; 2],
}

/// Dense Hermitian eigendecomposition with ascending eigenvalues.
pub fn diagonalize(h: &CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let eig = SymmetricEigen::try_new(h.clone(), EIGEN_EPS, EIGEN_MAX_ITER)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let states = CMatrix::from_fn(h.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Some((energies, states))
}

fn expectation_diag(op: &CMatrix, states: &CMatrix) -> Vec<f64> {
    let ov = op * states;
    (0..states.ncols())
        .map(|k| states.column(k).dotc(&ov.column(k)).re)
        .collect()
}

/// Assigns manifold labels. The `n_zero` states with the smallest ⟨Sz²⟩
/// form the m_s = 0 manifold; the rest go to ±1 by the sign of ⟨Sz⟩.
pub fn label_states(sz: &[f64], sz_sq: &[f64], nuclear_z: &[f64], n_zero: usize) -> Vec<StateLabel> {
    let mut order: Vec<usize> = (0..sz.len()).collect();
    order.sort_by(|&a, &b| sz_sq[a].total_cmp(&sz_sq[b]).then(a.cmp(&b)));
    let mut is_zero = vec![false; sz.len()];
    for &k in order.iter().take(n_zero) {
        is_zero[k] = true;
    }
    (0..sz.len())
        .map(|k| {
            let (ms, mixed) = if is_zero[k] {
                (0, sz_sq[k] > MIXED_SZ_LOWER)
            } else if sz[k] >= 0.0 {
                (1, sz[k].abs() < MIXED_SZ_UPPER)
            } else {
                (-1, sz[k].abs() < MIXED_SZ_UPPER)
            };
            StateLabel {
                ms,
                mixed,
                sz: sz[k],
                sz_sq: sz_sq[k],
                nuclear_z: nuclear_z[k],
            }
        })
        .collect()
}

impl EigenSystem {
    /// Diagonalizes `h` and labels its states using the operators of `model`.
    pub fn from_hamiltonian(h: &CMatrix, model: &HamiltonianModel, field: [f64; 3]) -> Result<Self> {
        let (energies, states) = diagonalize(h).ok_or_else(|| Error::Eigensolver {
            bx: field[0],
            by: field[1],
            bz: field[2],
            reason: "no convergence".into(),
        })?;
        if energies.iter().any(|e: &f64| !e.is_finite()) {
            return Err(Error::Eigensolver {
                bx: field[0],
                by: field[1],
                bz: field[2],
                reason: "non-finite eigenvalue".into(),
            });
        }
        let [sx, sy, sz] = model.electron_ops();
        let sz_v = sz * &states;
        let sz_exp: Vec<f64> = (0..states.ncols())
            .map(|k| states.column(k).dotc(&sz_v.column(k)).re)
            .collect();
        let sz_sq: Vec<f64> = (0..states.ncols()).map(|k| sz_v.column(k).norm_squared()).collect();
        let nz = expectation_diag(model.nuclear_z_total(), &states);
        let labels = label_states(&sz_exp, &sz_sq, &nz, states.nrows() / 3);

        let hv = h * &states;
        let max_residual = (0..states.ncols())
            .map(|k| (hv.column(k) - states.column(k) * Complex64::new(energies[k], 0.0)).norm())
            .fold(0.0, f64::max);

        let adj = states.adjoint();
        let transverse = [&adj * (sx * &states), &adj * (sy * &states)];

        Ok(Self {
            energies,
            states,
            labels,
            max_residual,
            hamiltonian_norm: h.norm(),
            hamiltonian_trace: h.trace().re,
            transverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Residual relative to ‖H‖.
    pub fn relative_residual(&self) -> f64 {
        if self.hamiltonian_norm > 0.0 {
            self.max_residual / self.hamiltonian_norm
        } else {
            self.max_residual
        }
    }

    pub fn manifold(&self, ms: i8) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.labels[k].ms == ms).collect()
    }

    /// `|⟨ψf|Sx|ψi⟩|² + |⟨ψf|Sy|ψi⟩|²` from the cached matrix elements.
    pub fn probability(&self, initial: usize, fin: usize) -> f64 {
        self.transverse[0][(fin, initial)].norm_sqr() + self.transverse[1][(fin, initial)].norm_sqr()
    }

    /// `⟨ψi|Sx² + Sy²|ψi⟩`, the completeness bound on outgoing probability.
    pub fn transverse_weight(&self, initial: usize) -> f64 {
        (0..self.dim()).map(|f| self.probability(initial, f)).sum()
    }
}

pub fn eigensystem(model: &HamiltonianModel, field: [f64; 3]) -> Result<EigenSystem> {
    let h = model.at(field)?;
    EigenSystem::from_hamiltonian(&h, model, field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub initial: usize,
    #[serde(rename = "final")]
    pub fin: usize,
    /// E_final - E_initial, MHz.
    pub energy: f64,
    pub probability: f64,
    pub ms_initial: i8,
    pub ms_final: i8,
    pub mi_initial: i32,
    pub mi_final: i32,
    pub mixed: bool,
}

/// Every (m_s = 0 state, m_s = ±1 state) pair, ordered by initial then
/// final index.
pub fn transitions(es: &EigenSystem) -> Vec<TransitionRecord> {
    let zero = es.manifold(0);
    let excited: Vec<usize> = (0..es.dim()).filter(|&k| es.labels[k].ms != 0).collect();
    let mut out = Vec::with_capacity(zero.len() * excited.len());
    for &i in &zero {
        for &f in &excited {
            out.push(record(es, i, f));
        }
    }
    out
}

pub fn record(es: &EigenSystem, i: usize, f: usize) -> TransitionRecord {
    let (li, lf) = (es.labels[i], es.labels[f]);
    TransitionRecord {
        initial: i,
        fin: f,
        energy: es.energies[f] - es.energies[i],
        probability: es.probability(i, f),
        ms_initial: li.ms,
        ms_final: lf.ms,
        mi_initial: li.mi(),
        mi_final: lf.mi(),
        mixed: li.mixed || lf.mixed,
    }
}

/// Transition probability between two explicit states for a microwave
/// field polarized transverse to z.
pub fn transition_probability(psi_i: &CMatrix, psi_f: &CMatrix, sx: &CMatrix, sy: &CMatrix) -> f64 {
    let elem = |op: &CMatrix| -> Complex64 {
        let v = op * psi_i;
        psi_f
            .iter()
            .zip(v.iter())
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b)
    };
    elem(sx).norm_sqr() + elem(sy).norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMatching {
    /// `permutation[k]` is the perturbed index matched to reference state `k`.
    pub permutation: Vec<usize>,
    /// Squared overlap of each matched pair.
    pub overlaps: Vec<f64>,
    pub min_overlap: f64,
    /// Any matched pair with squared overlap below 0.5.
    pub flagged: bool,
}

/// Greedy bijective assignment by descending |⟨ref_k|pert_j⟩|².
pub fn match_states(reference: &EigenSystem, perturbed: &EigenSystem) -> Result<StateMatching> {
    match_state_vectors(&reference.states, &perturbed.states)
}

pub fn match_state_vectors(reference: &CMatrix, perturbed: &CMatrix) -> Result<StateMatching> {
    if reference.shape() != perturbed.shape() {
        return Err(Error::DimensionMismatch(format!(
            "cannot match {:?} states against {:?}",
            reference.shape(),
            perturbed.shape()
        )));
    }
    let n = reference.ncols();
    let overlap = (reference.adjoint() * perturbed).map(|z| z.norm_sqr());

    let mut permutation = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut pending: Vec<(usize, usize)> = Vec::new();

    // An entry above 1/2 is the unique maximum of its row and column, so
    // greedy order would assign it first anyway.
    for r in 0..n {
        if let Some(c) = (0..n).find(|&c| overlap[(r, c)] > 0.5) {
            permutation[r] = c;
            taken[c] = true;
        }
    }
    let open_rows: Vec<usize> = (0..n).filter(|&r| permutation[r] == usize::MAX).collect();
    if !open_rows.is_empty() {
        for &r in &open_rows {
            for c in (0..n).filter(|&c| !taken[c]) {
                pending.push((r, c));
            }
        }
        pending.sort_by(|a, b| {
            overlap[*b]
                .total_cmp(&overlap[*a])
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        for (r, c) in pending {
            if permutation[r] == usize::MAX && !taken[c] {
                permutation[r] = c;
                taken[c] = true;
            }
        }
    }

    let overlaps: Vec<f64> = (0..n).map(|r| overlap[(r, permutation[r])]).collect();
    let min_overlap = overlaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StateMatching {
        flagged: min_overlap < MATCH_FLAG_OVERLAP,
        permutation,
        overlaps,
        min_overlap: if n == 0 { 1.0 } else { min_overlap },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EminenceRatios {
    pub ratios: Vec<f64>,
    /// Set when a manifold pair has no nonzero probability.
    pub degenerate: bool,
}

/// Each record's probability divided by the largest probability among
/// records of the same manifold pair (0 ↔ -1 or 0 ↔ +1).
pub fn eminence_ratio(records: &[TransitionRecord]) -> EminenceRatios {
    let max_for = |ms: i8| {
        records
            .iter()
            .filter(|r| r.ms_initial == 0 && r.ms_final == ms)
            .map(|r| r.probability)
            .fold(0.0, f64::max)
    };
    let (max_minus, max_plus) = (max_for(-1), max_for(1));
    let mut degenerate = false;
    let ratios = records
        .iter()
        .map(|r| {
            let denom = if r.ms_final < 0 { max_minus } else { max_plus };
            if denom > 0.0 {
                (r.probability / denom).clamp(0.0, 1.0)
            } else {
                degenerate = true;
                0.0
            }
        })
        .collect();
    if degenerate {
        log::warn!("eminence ratio: a manifold pair has no allowed transition; ratios set to 0");
    }
    EminenceRatios { ratios, degenerate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{default_vb_system, HamiltonianModel};
    use crate::spin::{embed, spin_operators};

    fn product_state(ms_index: usize, nuc_index: usize, n_nuc: usize) -> CMatrix {
        let mut v = CMatrix::zeros(3 * n_nuc, 1);
        v[(ms_index * n_nuc + nuc_index, 0)] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn diagonal_matrix_is_sorted_permutation() {
        let d = [3.0, -1.0, 2.0, 0.5];
        let h = CMatrix::from_fn(4, 4, |r, c| {
            if r == c {
                Complex64::new(d[r], 0.0)
            } else {
                czero()
            }
        });
        let (e, v) = diagonalize(&h).unwrap();
        assert_eq!(e, vec![-1.0, 0.5, 2.0, 3.0]);
        for (col, src) in [1usize, 3, 2, 0].iter().enumerate() {
            assert!((v[(*src, col)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_state_probabilities() {
        let s = spin_operators(1.0).unwrap();
        let dims = [3, 3];
        let sx = embed(&s.sx, 0, &dims).unwrap();
        let sy = embed(&s.sy, 0, &dims).unwrap();
        // basis: electron index 0 -> m=+1, 1 -> 0, 2 -> -1
        let zero = product_state(1, 1, 3);
        let minus_same = product_state(2, 1, 3);
        let minus_other = product_state(2, 0, 3);
        assert!((transition_probability(&zero, &minus_same, &sx, &sy) - 1.0).abs() < 1e-14);
        assert_eq!(transition_probability(&zero, &minus_other, &sx, &sy), 0.0);
    }

    #[test]
    fn default_transition_count_and_labels() {
        let model = HamiltonianModel::new(&default_vb_system()).unwrap();
        let es = eigensystem(&model, [0.0, 0.0, 15.0]).unwrap();
        assert_eq!(es.manifold(0).len(), 27);
        assert_eq!(es.manifold(-1).len(), 27);
        assert_eq!(es.manifold(1).len(), 27);
        assert_eq!(transitions(&es).len(), 1458);
        assert!(es.relative_residual() < 1e-8);
    }

    #[test]
    fn matching_identity_and_swap() {
        let model = HamiltonianModel::new(&default_vb_system()).unwrap();
        let es = eigensystem(&model, [0.0, 0.0, 10.0]).unwrap();
        let m = match_states(&es, &es).unwrap();
        assert_eq!(m.permutation, (0..81).collect::<Vec<_>>());
        assert!((m.min_overlap - 1.0).abs() < 1e-10);

        let mut swapped = es.states.clone();
        swapped.swap_columns(4, 9);
        let m = match_state_vectors(&es.states, &swapped).unwrap();
        let mut want: Vec<usize> = (0..81).collect();
        want.swap(4, 9);
        assert_eq!(m.permutation, want);
        assert!(!m.flagged);
    }

    #[test]
    fn matching_rejects_shape_mismatch() {
        let a = CMatrix::identity(3, 3);
        let b = CMatrix::identity(4, 4);
        assert!(match_state_vectors(&a, &b).is_err());
    }

    #[test]
    fn eminence_of_max_and_forbidden() {
        let rec = |fin, p, ms| TransitionRecord {
            initial: 0,
            fin,
            energy: 0.0,
            probability: p,
            ms_initial: 0,
            ms_final: ms,
            mi_initial: 0,
            mi_final: 0,
            mixed: false,
        };
        let recs = [rec(1, 0.8, -1), rec(2, 0.0, -1), rec(3, 0.4, -1), rec(4, 0.5, 1)];
        let e = eminence_ratio(&recs);
        assert_eq!(e.ratios, vec![1.0, 0.0, 0.5, 1.0]);
        assert!(!e.degenerate);
        let e = eminence_ratio(&[rec(1, 0.0, -1)]);
        assert_eq!(e.ratios, vec![0.0]);
        assert!(e.degenerate);
    }
}
