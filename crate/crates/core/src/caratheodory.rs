//! Finite convex combinations and their reduction to at most `n + 1` atoms.
//!
//! Pruning repeatedly takes the first `n + 2` atoms, finds an affine
//! dependence `Σ γᵢ·imageᵢ = 0, Σ γᵢ = 0` among them, and shifts weight along
//! it until at least one atom reaches zero. The weighted image sum is
//! unchanged by every shift.

use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainPoint;
use crate::linalg::{null_vector, Lu, Matrix};
use crate::quad::compensated_sum;

/// Weights at or below this are dropped after a shift.
pub const DROP_WEIGHT: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtom {
    pub point: DomainPoint,
    pub weight: f64,
    /// X(point) in R^n.
    pub image: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCombination {
    pub atoms: Vec<WeightedAtom>,
    pub target: Vec<f64>,
    /// ‖Σ wᵢ·imageᵢ − target‖∞.
    pub residual: f64,
}

impl ConvexCombination {
    /// Builds a combination and computes its residual.
    pub fn new(atoms: Vec<WeightedAtom>, target: Vec<f64>) -> Self {
        let mut c = ConvexCombination {
            atoms,
            target,
            residual: 0.0,
        };
        c.residual = c.compute_residual();
        c
    }

    /// Dimension n of the image space.
    pub fn dimension(&self) -> usize {
        self.target.len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.weight))
    }

    pub fn min_weight(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight)
            .fold(f64::INFINITY, f64::min)
    }

    /// Σ wᵢ·imageᵢ.
    pub fn combined_image(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|k| compensated_sum(self.atoms.iter().map(|a| a.weight * a.image[k])))
            .collect()
    }

    pub fn compute_residual(&self) -> f64 {
        self.combined_image()
            .iter()
            .zip(&self.target)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn target_scale(&self) -> f64 {
        self.target.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Re-solves the weights of the current atoms so the combination hits
    /// `target` exactly, keeping the result only if the weights stay
    /// nonnegative and the residual improves.
    ///
    /// With `m = n + 1` affinely independent atoms this is a square solve of
    /// `[images; 1]·w = [target; 1]`; with fewer atoms it is the
    /// least-squares solution of the same system.
    pub fn refit_weights(&mut self) -> bool {
        let n = self.dimension();
        let m = self.len();
        if m == 0 || m > n + 1 {
            return false;
        }
        let rows = n + 1;
        let mut a = Matrix::zeros(rows, m);
        let mut b = vec![0.0; rows];
        for (j, atom) in self.atoms.iter().enumerate() {
            for k in 0..n {
                a[(k, j)] = atom.image[k] - self.target[k];
            }
            a[(n, j)] = 1.0;
        }
        b[n] = 1.0;
        let solution = if m == rows {
            match Lu::factor(&a) {
                Ok(lu) => lu.solve(&b),
                Err(_) => return false,
            }
        } else {
            // Normal equations; m <= n here and the systems are tiny.
            let mut ata = Matrix::zeros(m, m);
            let mut atb = vec![0.0; m];
            for i in 0..m {
                for j in 0..m {
                    ata[(i, j)] = (0..rows).map(|k| a[(k, i)] * a[(k, j)]).sum();
                }
                atb[i] = (0..rows).map(|k| a[(k, i)] * b[k]).sum();
            }
            match Lu::factor(&ata) {
                Ok(lu) => lu.solve(&atb),
                Err(_) => return false,
            }
        };
        if solution.iter().any(|w| !w.is_finite() || *w < -1e-12) {
            return false;
        }
        let clamped: Vec<f64> = solution.iter().map(|w| w.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        if total <= 0.0 {
            return false;
        }
        let mut candidate = self.clone();
        for (atom, w) in candidate.atoms.iter_mut().zip(&clamped) {
            atom.weight = w / total;
        }
        candidate.residual = candidate.compute_residual();
        if candidate.residual < self.residual {
            *self = candidate;
            true
        } else {
            false
        }
    }
}

/// One elimination round of [`prune_with_trace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneRound {
    pub round: usize,
    /// Atoms remaining after this round.
    pub atoms: usize,
    pub theta: f64,
    /// Indices (in the input combination) of atoms removed this round.
    pub eliminated: Vec<usize>,
    /// Running total weight after this round.
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PruneError {
    #[error("combination is empty")]
    Empty,
    #[error("atom {index} has image of length {found}, expected {expected}")]
    ImageDimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("atom {index} has invalid weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("no affine dependence found among {atoms} atoms in round {round}")]
    NoDependence { round: usize, atoms: usize },
}

/// Reduces `comb` to at most `n + 1` affinely independent atoms with the
/// same weighted image sum.
pub fn prune(comb: ConvexCombination) -> Result<ConvexCombination, PruneError> {
    prune_with_trace(comb, |_| {})
}

pub fn prune_with_trace(
    comb: ConvexCombination,
    mut on_round: impl FnMut(&PruneRound),
) -> Result<ConvexCombination, PruneError> {
    let n = comb.dimension();
    if comb.is_empty() {
        return Err(PruneError::Empty);
    }
    for (index, atom) in comb.atoms.iter().enumerate() {
        if atom.image.len() != n {
            return Err(PruneError::ImageDimension {
                index,
                found: atom.image.len(),
                expected: n,
            });
        }
        if !atom.weight.is_finite() || atom.weight < 0.0 {
            return Err(PruneError::BadWeight {
                index,
                weight: atom.weight,
            });
        }
    }
    let mut weight_sum = comb.weight_sum();
    // With n + 1 or fewer atoms there may be nothing to do.
    let original = (comb.len() <= n + 1).then(|| comb.clone());
    let ConvexCombination { atoms, target, .. } = comb;
    let mut remaining = atoms.len();
    let mut pending = atoms.into_iter().enumerate();
    // The first n + 2 atoms of the current list (all of them once fewer
    // remain); eliminations keep order.
    let mut active: Vec<(usize, WeightedAtom)> = Vec::with_capacity(n + 2);
    let mut round = 0;

    loop {
        while active.len() < n + 2 {
            match pending.next() {
                Some(a) => active.push(a),
                None => break,
            }
        }
        // Below n + 2 atoms a dependence exists only if the images are
        // affinely degenerate; keep eliminating while one does.
        let full_window = active.len() == n + 2;
        if active.len() <= 1 {
            break;
        }
        let mut a = Matrix::zeros(n + 1, active.len());
        for (j, (_, atom)) in active.iter().enumerate() {
            for k in 0..n {
                a[(k, j)] = atom.image[k] - target[k];
            }
            a[(n, j)] = 1.0;
        }
        let Some(mut gamma) = null_vector(&a) else {
            if full_window {
                return Err(PruneError::NoDependence {
                    round: round + 1,
                    atoms: remaining,
                });
            }
            break;
        };
        round += 1;
        if !gamma.iter().any(|g| *g > 0.0) {
            gamma.iter_mut().for_each(|g| *g = -*g);
        }
        // θ = min over γᵢ > 0 of wᵢ/γᵢ, smallest index on ties.
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gamma.iter().enumerate() {
            if *g > 0.0 {
                let ratio = active[j].1.weight / g;
                if best.is_none_or(|(_, r)| ratio < r) {
                    best = Some((j, ratio));
                }
            }
        }
        let (pivot, theta) = best.ok_or(PruneError::NoDependence {
            round,
            atoms: remaining,
        })?;
        let before: f64 = active.iter().map(|(_, a)| a.weight).sum();
        for (j, (_, atom)) in active.iter_mut().enumerate() {
            if j == pivot {
                atom.weight = 0.0;
            } else {
                atom.weight -= theta * gamma[j];
            }
        }
        let mut eliminated = Vec::new();
        active.retain(|(index, atom)| {
            if atom.weight <= DROP_WEIGHT {
                eliminated.push(*index);
                false
            } else {
                true
            }
        });
        let after: f64 = active.iter().map(|(_, a)| a.weight).sum();
        weight_sum += after - before;
        remaining -= eliminated.len();
        on_round(&PruneRound {
            round,
            atoms: remaining,
            theta,
            eliminated,
            weight_sum,
        });
    }
    if let (0, Some(original)) = (round, original) {
        return Ok(original);
    }

    let mut out: Vec<WeightedAtom> = active
        .into_iter()
        .map(|(_, a)| a)
        .chain(pending.map(|(_, a)| a))
        .collect();
    let total = compensated_sum(out.iter().map(|a| a.weight));
    out.iter_mut().for_each(|a| a.weight /= total);
    Ok(ConvexCombination::new(out, target))
}
