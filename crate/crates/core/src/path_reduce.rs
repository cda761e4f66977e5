//! Reduction of an `(n + 1)`-atom convex combination to `n` atoms for
//! continuous integrands on a convex domain.
//!
//! With the target translated to the origin, `n` of the images form a basis
//! and the remaining (distinguished) image has strictly negative coordinates
//! in it. Walking the domain path from the distinguished point towards one
//! of the basis points, the coordinates `f_j(λ)` of the moving image start
//! negative and the partner's coordinate ends at 1, so some coordinate
//! vanishes first at `λ₀ ∈ (0, 1)`. At that point the moving image and the
//! basis images other than the vanished one represent the origin with
//! nonnegative coefficients, which saves one atom.

use serde::Serialize;
use thiserror::Error;

use crate::caratheodory::{ConvexCombination, WeightedAtom};
use crate::domain::{MeasureError, MeasureSpec, PathSpec};
use crate::expr::Expr;
use crate::integrate::{images, IntegrateError};
use crate::linalg::{null_vector, rank, Lu, Matrix};

pub const MAX_CONDITION: f64 = 1e12;
pub const INITIAL_GRID: usize = 1024;
pub const MAX_GRID: usize = 1 << 16;
/// Bracket width at which the crossing bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error("combination has {found} atoms, expected n + 1 = {expected}")]
    AtomCount { found: usize, expected: usize },
    #[error("basis is numerically singular")]
    SingularFrame,
    #[error("basis condition estimate {0:e} exceeds {MAX_CONDITION:e}")]
    IllConditioned(f64),
    #[error("coordinate solve residual {0:e} is too large")]
    SolveResidual(f64),
    #[error("distinguished point has coordinate {value} at index {index}, expected negative")]
    NotNegative { index: usize, value: f64 },
    #[error("no zero crossing found on a grid of {0} points")]
    NoCrossing(usize),
    #[error("reduced combination has weight {0}")]
    NegativeWeight(f64),
    #[error("reduced residual {found:e} exceeds allowed {allowed:e}")]
    ResidualGrowth { found: f64, allowed: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Coordinates with respect to `n` translated images used as a basis.
#[derive(Debug, Clone)]
pub struct BarycentricFrame {
    /// Atom indices of the basis, in order.
    pub basis: Vec<usize>,
    /// Atom index of the distinguished point `t₀`.
    pub negative_point: usize,
    lu: Lu,
    columns: Matrix,
    pub condition: f64,
}

impl BarycentricFrame {
    /// Builds the frame from translated images `y` (target already at the
    /// origin), using every atom except `distinguished` as the basis.
    pub fn new(y: &[Vec<f64>], distinguished: usize) -> Result<Self, ReduceError> {
        let basis: Vec<usize> = (0..y.len()).filter(|&j| j != distinguished).collect();
        let cols: Vec<&[f64]> = basis.iter().map(|&j| y[j].as_slice()).collect();
        let columns = Matrix::from_columns(&cols);
        let lu = Lu::factor(&columns).map_err(|_| ReduceError::SingularFrame)?;
        let condition = lu.condition();
        if !(condition <= MAX_CONDITION) {
            return Err(ReduceError::IllConditioned(condition));
        }
        let frame = BarycentricFrame {
            basis,
            negative_point: distinguished,
            lu,
            columns,
            condition,
        };
        let p = frame.coordinates(&y[distinguished])?;
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(**v < 0.0)) {
            return Err(ReduceError::NotNegative { index, value });
        }
        Ok(frame)
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// `p` with `Σ pⱼ·basisⱼ = v`.
    pub fn coordinates(&self, v: &[f64]) -> Result<Vec<f64>, ReduceError> {
        let p = self.lu.solve(v);
        let back = self.columns.mul_vec(&p);
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let residual = back
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(residual <= 1e-10 * (1.0 + scale)) {
            return Err(ReduceError::SolveResidual(residual));
        }
        Ok(p)
    }
}

/// Where the walk stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTrace {
    pub lambda_zero: f64,
    /// Position within the frame's basis of the coordinate that vanished.
    pub vanished_index: usize,
    pub crossings_scanned: usize,
    pub bisection_steps: usize,
    pub tol_zero: f64,
    /// `f_j(λ₀)` for every basis coordinate.
    pub coordinates: Vec<f64>,
}

fn max_index(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = j;
        }
    }
    best
}

/// Finds the first `λ ∈ (0, 1]` where some coordinate of `f(λ)` vanishes.
///
/// `f(0)` must be strictly negative in every coordinate. A uniform grid of
/// `grid` intervals is scanned for the first point where some coordinate
/// reaches `-tol_zero`, with `tol_zero = 1e-11·(1 + max |f_j|)` over the
/// grid; the bracket is then bisected on `max_j f_j` down to
/// [`BISECTION_WIDTH`] and the vanishing coordinate polished on its own.
/// The grid doubles up to [`MAX_GRID`] if nothing is found.
pub fn first_crossing<E>(
    mut f: impl FnMut(f64) -> Result<Vec<f64>, E>,
    grid: usize,
) -> Result<ReductionTrace, E>
where
    E: From<ReduceError>,
{
    let start = f(0.0)?;
    let mut grid = grid.max(1);
    loop {
        let mut values = Vec::with_capacity(grid + 1);
        values.push(start.clone());
        for i in 1..=grid {
            values.push(f(i as f64 / grid as f64)?);
        }
        let peak = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol_zero = 1e-11 * (1.0 + peak);
        if let Some(&bad) = start.iter().find(|v| !(**v < -tol_zero)) {
            return Err(ReduceError::NotNegative {
                index: start.iter().position(|v| *v == bad).unwrap_or(0),
                value: bad,
            }
            .into());
        }
        let hit = (1..=grid).find(|&i| values[i].iter().any(|v| *v >= -tol_zero));
        let Some(i) = hit else {
            if grid >= MAX_GRID {
                return Err(ReduceError::NoCrossing(grid).into());
            }
            grid *= 2;
            continue;
        };

        let max_of = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
        let mut lo = (i - 1) as f64 / grid as f64;
        let mut hi = i as f64 / grid as f64;
        let mut f_hi = values[i].clone();
        let mut steps = 0;
        if max_of(&f_hi) >= 0.0 {
            while hi - lo > BISECTION_WIDTH {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let f_mid = f(mid)?;
                steps += 1;
                if max_of(&f_mid) >= 0.0 {
                    hi = mid;
                    f_hi = f_mid;
                } else {
                    lo = mid;
                }
            }
        }
        let mut lambda = hi;
        let mut coords = f_hi;
        let k = max_index(&coords);
        // Polish the vanishing coordinate on its own.
        let mut a = lo;
        let mut b = hi;
        while coords[k].abs() > tol_zero && steps < 400 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let f_mid = f(mid)?;
            steps += 1;
            if f_mid[k] >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
            if f_mid[k].abs() < coords[k].abs() {
                lambda = mid;
                coords = f_mid;
            }
        }
        return Ok(ReductionTrace {
            lambda_zero: lambda,
            vanished_index: k,
            crossings_scanned: grid + 1,
            bisection_steps: steps,
            tol_zero,
            coordinates: coords,
        });
    }
}

/// Walks `path` and reports where the first barycentric coordinate of
/// `X(path(λ)) − target` vanishes.
pub fn first_zero_crossing(
    frame: &BarycentricFrame,
    fns: &[Expr],
    target: &[f64],
    path: &PathSpec,
) -> Result<ReductionTrace, ReduceError> {
    first_crossing(
        |lambda| {
            let p = path.at(lambda);
            let x = images(fns, p.coords())?;
            let y: Vec<f64> = x.iter().zip(target).map(|(a, b)| a - b).collect();
            frame.coordinates(&y)
        },
        INITIAL_GRID,
    )
}

/// Result of [`reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOutcome {
    pub combination: ConvexCombination,
    /// `false` when every fallback failed and the input came back unchanged.
    pub reduced: bool,
    pub trace: Option<ReductionTrace>,
    /// `(distinguished, partner, error)` for each failed attempt.
    pub failures: Vec<(usize, usize, String)>,
}

impl ReduceOutcome {
    fn unchanged(comb: ConvexCombination, reduced: bool) -> Self {
        ReduceOutcome {
            combination: comb,
            reduced,
            trace: None,
            failures: Vec::new(),
        }
    }
}

fn allowed_residual(comb: &ConvexCombination) -> f64 {
    comb.residual + 1e-8 * (1.0 + comb.target_scale())
}

/// Normalizes raw coefficients into weights: tiny negatives (down to
/// -1e-9 after normalization) are clamped, anything lower is an error.
fn normalize(coeffs: &[f64]) -> Result<Vec<f64>, ReduceError> {
    let total: f64 = coeffs.iter().sum();
    if !(total > 0.0) {
        return Err(ReduceError::NegativeWeight(total));
    }
    let w: Vec<f64> = coeffs.iter().map(|c| c / total).collect();
    let min = w.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min < -1e-9 {
        return Err(ReduceError::NegativeWeight(min));
    }
    let clamped: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    Ok(clamped.iter().map(|v| v / total).collect())
}

/// Reduces an `(n + 1)`-atom combination to at most `n` atoms.
///
/// Distinguished atoms are tried in index order and path partners in index
/// order for each; if every pair fails numerically the input is returned
/// with `reduced = false`.
pub fn reduce(
    comb: ConvexCombination,
    fns: &[Expr],
    measure: &MeasureSpec,
) -> Result<ReduceOutcome, ReduceError> {
    let n = comb.dimension();
    if comb.len() <= n {
        return Ok(ReduceOutcome::unchanged(comb, true));
    }
    if comb.len() != n + 1 {
        return Err(ReduceError::AtomCount {
            found: comb.len(),
            expected: n + 1,
        });
    }
    if !measure.supports_paths() {
        return Err(MeasureError::NoPaths.into());
    }
    if comb.atoms.iter().any(|a| a.weight <= 0.0) {
        let mut out = comb.clone();
        out.atoms.retain(|a| a.weight > 0.0);
        let total = out.weight_sum();
        out.atoms.iter_mut().for_each(|a| a.weight /= total);
        out.residual = out.compute_residual();
        return Ok(ReduceOutcome::unchanged(out, true));
    }

    let y: Vec<Vec<f64>> = comb
        .atoms
        .iter()
        .map(|a| {
            a.image
                .iter()
                .zip(&comb.target)
                .map(|(x, t)| x - t)
                .collect()
        })
        .collect();
    let cols: Vec<&[f64]> = y.iter().map(|v| v.as_slice()).collect();
    if rank(&Matrix::from_columns(&cols)) < n {
        if let Some(out) = eliminate_on_hyperplane(&comb, &y) {
            if out.residual <= allowed_residual(&comb) {
                return Ok(ReduceOutcome::unchanged(out, true));
            }
        }
    }

    let mut failures = Vec::new();
    for d in 0..=n {
        for q in (0..=n).filter(|&q| q != d) {
            match attempt(&comb, &y, fns, measure, d, q) {
                Ok((combination, trace)) => {
                    return Ok(ReduceOutcome {
                        combination,
                        reduced: true,
                        trace: Some(trace),
                        failures,
                    })
                }
                Err(e) => failures.push((d, q, e.to_string())),
            }
        }
    }
    Ok(ReduceOutcome {
        combination: comb,
        reduced: false,
        trace: None,
        failures,
    })
}

/// When the translated images span less than R^n, `[y; 1]` has a null
/// vector with zero sum and one Carathéodory shift drops an atom.
fn eliminate_on_hyperplane(comb: &ConvexCombination, y: &[Vec<f64>]) -> Option<ConvexCombination> {
    let n = comb.dimension();
    let m = y.len();
    let mut a = Matrix::zeros(n + 1, m);
    for (j, v) in y.iter().enumerate() {
        for k in 0..n {
            a[(k, j)] = v[k];
        }
        a[(n, j)] = 1.0;
    }
    let mut gamma = null_vector(&a)?;
    if !gamma.iter().any(|g| *g > 0.0) {
        gamma.iter_mut().for_each(|g| *g = -*g);
    }
    let (pivot, theta) = gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(j, g)| (j, comb.atoms[j].weight / g))
        .fold(None, |best: Option<(usize, f64)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })?;
    let mut atoms: Vec<WeightedAtom> = comb.atoms.clone();
    for (j, atom) in atoms.iter_mut().enumerate() {
        atom.weight = if j == pivot {
            0.0
        } else {
            atom.weight - theta * gamma[j]
        };
    }
    atoms.retain(|a| a.weight > crate::caratheodory::DROP_WEIGHT);
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    atoms.iter_mut().for_each(|a| a.weight /= total);
    let mut out = ConvexCombination::new(atoms, comb.target.clone());
    // The survivors span the image subspace, so a least-squares refit can
    // remove the part of the input residual lying inside it.
    out.refit_weights();
    Some(out)
}

fn attempt(
    comb: &ConvexCombination,
    y: &[Vec<f64>],
    fns: &[Expr],
    measure: &MeasureSpec,
    distinguished: usize,
    partner: usize,
) -> Result<(ConvexCombination, ReductionTrace), ReduceError> {
    let frame = BarycentricFrame::new(y, distinguished)?;
    let path = measure.path(
        comb.atoms[distinguished].point.clone(),
        comb.atoms[partner].point.clone(),
    )?;
    let trace = first_zero_crossing(&frame, fns, &comb.target, &path)?;
    let k = trace.vanished_index;
    let crossing = path.at(trace.lambda_zero);
    let image = images(fns, crossing.coords())?;

    // x(t̄) − Σ_{j≠k} pⱼ·x(tⱼ) = 0 with every −pⱼ ≥ 0.
    let mut coeffs = vec![1.0];
    let mut members = vec![None];
    for (pos, &atom) in frame.basis.iter().enumerate() {
        if pos != k {
            coeffs.push(-trace.coordinates[pos]);
            members.push(Some(atom));
        }
    }
    let weights = normalize(&coeffs)?;
    let mut atoms = Vec::with_capacity(weights.len());
    for (member, w) in members.into_iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let atom = match member {
            None => WeightedAtom {
                point: crossing.clone(),
                weight: w,
                image: image.clone(),
            },
            Some(j) => WeightedAtom {
                weight: w,
                ..comb.atoms[j].clone()
            },
        };
        atoms.push(atom);
    }
    let out = ConvexCombination::new(atoms, comb.target.clone());
    let allowed = allowed_residual(comb);
    if !(out.residual <= allowed) {
        return Err(ReduceError::ResidualGrowth {
            found: out.residual,
            allowed,
        });
    }
    Ok((out, trace))
}
