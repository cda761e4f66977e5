//! Mean vectors E X = (E X₁, …, E Xₙ) and their discretization into
//! finite convex combinations.

use thiserror::Error;

use crate::caratheodory::{ConvexCombination, WeightedAtom};
use crate::domain::{DomainKind, DomainPoint, MeasureError, MeasureSpec};
use crate::expr::{EvalError, Expr};
use crate::quad::{compensated_sum, Cubature};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_RESOLUTION: usize = 4096;
pub const DEFAULT_MAX_CELLS: usize = 200_000;
/// Cap on the number of midpoint atoms reached by doubling.
pub const MAX_ATOMS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub values: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub function_evals: usize,
    /// μ(S) before normalization.
    pub total_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub tol: f64,
    pub max_cells: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            tol: DEFAULT_TOLERANCE,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

impl IntegrationOptions {
    pub fn with_tol(tol: f64) -> Self {
        IntegrationOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("no functions to integrate")]
    NoFunctions,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(
        "function {function} needs {needed} coordinates but the domain has dimension {dimension}"
    )]
    Dimension {
        function: usize,
        needed: usize,
        dimension: usize,
    },
    #[error("function {function} failed at {point:?}: {source}")]
    Eval {
        function: usize,
        point: Vec<f64>,
        source: EvalError,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("refinement budget exhausted: best estimate {:?}, achieved error {:?}", .best.values, .best.error_estimate)]
    NotConverged { best: MeanVector },
    #[error("resolution {resolution} is below the minimum of {minimum} atoms")]
    ResolutionTooLow { resolution: usize, minimum: usize },
    #[error("discretization residual {residual:e} exceeds {target:e} even with {atoms} atoms; try a larger resolution")]
    ResolutionTooSmall {
        atoms: usize,
        residual: f64,
        target: f64,
        best: Box<ConvexCombination>,
    },
    #[error("all discretization cells have zero measure")]
    ZeroWeights,
}

fn check_functions(fns: &[Expr], measure: &MeasureSpec) -> Result<(), IntegrateError> {
    if fns.is_empty() {
        return Err(IntegrateError::NoFunctions);
    }
    let dimension = measure.dimension();
    for (function, f) in fns.iter().enumerate() {
        let needed = f.required_dimension();
        if needed > dimension {
            return Err(IntegrateError::Dimension {
                function,
                needed,
                dimension,
            });
        }
    }
    Ok(())
}

/// Evaluates every function at `p`.
pub fn images(fns: &[Expr], p: &[f64]) -> Result<Vec<f64>, IntegrateError> {
    fns.iter()
        .enumerate()
        .map(|(function, f)| {
            f.eval(p).map_err(|source| IntegrateError::Eval {
                function,
                point: p.to_vec(),
                source,
            })
        })
        .collect()
}

/// E X for the normalized measure, to absolute tolerance `opts.tol` per
/// component. Discrete measures give the exact weighted sum.
pub fn mean_vector(
    fns: &[Expr],
    measure: &MeasureSpec,
    opts: &IntegrationOptions,
) -> Result<MeanVector, IntegrateError> {
    check_functions(fns, measure)?;
    if !(opts.tol > 0.0) {
        return Err(IntegrateError::BadTolerance(opts.tol));
    }
    let n = fns.len();
    if let DomainKind::Discrete { atoms } = measure.kind() {
        let mut imgs = Vec::with_capacity(atoms.len());
        for atom in atoms {
            imgs.push(images(fns, atom.point.coords())?);
        }
        let mass: f64 = atoms.iter().map(|a| a.mass).sum();
        let values = (0..n)
            .map(|k| compensated_sum(atoms.iter().zip(&imgs).map(|(a, x)| a.mass * x[k])) / mass)
            .collect();
        return Ok(MeanVector {
            values,
            error_estimate: vec![0.0; n],
            function_evals: atoms.len() * n,
            total_mass: measure.raw_discrete_mass(),
        });
    }

    let (lo, hi) = measure.bounds().expect("continuous domain");
    let tol = opts.tol;
    let out = Cubature {
        lo: &lo,
        hi: &hi,
        components: n + 1,
        max_cells: opts.max_cells,
    }
    .run(
        |p, out| {
            let w = measure.density_at(p)?;
            out[0] = w;
            for (k, f) in fns.iter().enumerate() {
                let v = f.eval(p).map_err(|source| IntegrateError::Eval {
                    function: k,
                    point: p.to_vec(),
                    source,
                })?;
                out[k + 1] = w * v;
            }
            Ok::<(), IntegrateError>(())
        },
        |v, e| {
            let mass = v[0];
            mass > 0.0 && (1..=n).all(|k| e[k] + (v[k] / mass).abs() * e[0] <= tol * mass)
        },
    )?;
    let mass = out.values[0];
    if mass <= 0.0 {
        return Err(MeasureError::ZeroMass(mass).into());
    }
    let values: Vec<f64> = (1..=n).map(|k| out.values[k] / mass).collect();
    let error_estimate = (1..=n)
        .map(|k| (out.errors[k] + values[k - 1].abs() * out.errors[0]) / mass)
        .collect();
    let total_mass = if measure.density().is_none() {
        measure.volume().expect("continuous domain")
    } else {
        mass
    };
    let mean = MeanVector {
        values,
        error_estimate,
        function_evals: out.evals * n,
        total_mass,
    };
    if !out.converged {
        return Err(IntegrateError::NotConverged { best: mean });
    }
    Ok(mean)
}

/// μ(S) of a measure (raw mass for discrete, volume or ∫ density otherwise).
pub fn total_mass(measure: &MeasureSpec, opts: &IntegrationOptions) -> Result<f64, IntegrateError> {
    if measure.is_discrete() {
        return Ok(measure.raw_discrete_mass());
    }
    if measure.density().is_none() {
        return Ok(measure.volume().expect("continuous domain"));
    }
    let one = Expr::Num(1.0);
    Ok(mean_vector(std::slice::from_ref(&one), measure, opts)?.total_mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannOptions {
    /// Initial number of atoms for interval/box domains.
    pub resolution: usize,
    /// Doubling stops once the discretization residual is at most this.
    pub residual_target: f64,
    pub max_atoms: usize,
}

impl RiemannOptions {
    pub fn new(resolution: usize, tol: f64) -> Self {
        RiemannOptions {
            resolution,
            residual_target: 10.0 * tol,
            max_atoms: MAX_ATOMS,
        }
    }
}

/// Smallest k with k^d >= count.
fn cells_per_axis(count: usize, d: usize) -> usize {
    let mut k = (count as f64).powf(1.0 / d as f64).floor().max(1.0) as usize;
    while k.pow(d as u32) < count {
        k += 1;
    }
    while k > 1 && (k - 1).pow(d as u32) >= count {
        k -= 1;
    }
    k
}

fn midpoint_atoms(
    fns: &[Expr],
    measure: &MeasureSpec,
    count: usize,
) -> Result<Vec<WeightedAtom>, IntegrateError> {
    let (lo, hi) = measure.bounds().expect("continuous domain");
    let d = lo.len();
    let k = cells_per_axis(count, d);
    let total = k.pow(d as u32);
    let h: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, u)| (u - l) / k as f64)
        .collect();
    let uniform = measure.density().is_none();
    let mut atoms = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let coords: Vec<f64> = (0..d)
            .map(|a| lo[a] + (idx[a] as f64 + 0.5) * h[a])
            .collect();
        let weight = if uniform {
            1.0
        } else {
            measure.density_at(&coords)?
        };
        if weight > 0.0 {
            let image = images(fns, &coords)?;
            atoms.push(WeightedAtom {
                point: DomainPoint::new(coords),
                weight,
                image,
            });
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    if atoms.is_empty() {
        return Err(IntegrateError::ZeroWeights);
    }
    if uniform {
        let w = 1.0 / atoms.len() as f64;
        atoms.iter_mut().for_each(|a| a.weight = w);
    } else {
        let sum = compensated_sum(atoms.iter().map(|a| a.weight));
        atoms.iter_mut().for_each(|a| a.weight /= sum);
    }
    Ok(atoms)
}

/// Discretizes E X as a convex combination of midpoint atoms (cell volume
/// times density, normalized) whose residual is measured against `target`.
///
/// The atom count doubles from `opts.resolution` until the residual is at
/// most `opts.residual_target` or `opts.max_atoms` is reached; in the latter
/// case the best combination found travels inside the error. Discrete
/// measures pass through unchanged.
pub fn riemann_atoms(
    fns: &[Expr],
    measure: &MeasureSpec,
    target: &[f64],
    opts: &RiemannOptions,
) -> Result<ConvexCombination, IntegrateError> {
    check_functions(fns, measure)?;
    if let DomainKind::Discrete { atoms } = measure.kind() {
        let mut out = Vec::with_capacity(atoms.len());
        for atom in atoms {
            out.push(WeightedAtom {
                point: atom.point.clone(),
                weight: atom.mass,
                image: images(fns, atom.point.coords())?,
            });
        }
        return Ok(ConvexCombination::new(out, target.to_vec()));
    }
    let minimum = fns.len() + 2;
    if opts.resolution < minimum {
        return Err(IntegrateError::ResolutionTooLow {
            resolution: opts.resolution,
            minimum,
        });
    }
    let mut count = opts.resolution.min(opts.max_atoms.max(minimum));
    let mut best: Option<ConvexCombination> = None;
    loop {
        let comb = ConvexCombination::new(midpoint_atoms(fns, measure, count)?, target.to_vec());
        if comb.residual <= opts.residual_target {
            return Ok(comb);
        }
        if best.as_ref().is_none_or(|b| comb.residual < b.residual) {
            best = Some(comb);
        }
        if count >= opts.max_atoms {
            let best = best.expect("at least one attempt");
            return Err(IntegrateError::ResolutionTooSmall {
                atoms: best.len(),
                residual: best.residual,
                target: opts.residual_target,
                best: Box::new(best),
            });
        }
        count = (count * 2).min(opts.max_atoms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_all(srcs: &[&str]) -> Vec<Expr> {
        srcs.iter().map(|s| Expr::parse(s).unwrap()).collect()
    }

    #[test]
    fn constant_mean_is_the_constant() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let mv = mean_vector(&parse_all(&["7"]), &m, &IntegrationOptions::default()).unwrap();
        assert!((mv.values[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn moments_of_uniform_interval() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let mv = mean_vector(
            &parse_all(&["t", "t^2", "t^3"]),
            &m,
            &IntegrationOptions::default(),
        )
        .unwrap();
        for (k, v) in mv.values.iter().enumerate() {
            // ∫₀¹ t^k dt = 1/(k+1)
            assert!((v - 1.0 / (k as f64 + 2.0)).abs() <= 1e-9, "{k}: {v}");
        }
        assert!(mv.error_estimate.iter().all(|e| *e <= 1e-9));
        assert!(mv.function_evals > 0);
        assert_eq!(mv.total_mass, 1.0);
    }

    #[test]
    fn step_mean_is_zero() {
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        let mv = mean_vector(
            &parse_all(&["2*step(t)-1"]),
            &m,
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(mv.values[0].abs() <= 1e-9);
        assert_eq!(mv.total_mass, 2.0);
    }

    #[test]
    fn density_weighted_mean() {
        // Density e^{-t} on [0,1]: E t = (1 - 2/e) / (1 - 1/e).
        let m = MeasureSpec::interval(0.0, 1.0)
            .unwrap()
            .with_density(Expr::parse("exp(-t)").unwrap())
            .unwrap();
        let mv = mean_vector(&parse_all(&["t"]), &m, &IntegrationOptions::default()).unwrap();
        let e = std::f64::consts::E;
        let exact = (1.0 - 2.0 / e) / (1.0 - 1.0 / e);
        assert!((mv.values[0] - exact).abs() <= 1e-9);
        assert!((mv.total_mass - (1.0 - 1.0 / e)).abs() < 1e-12);
    }

    #[test]
    fn box_mean() {
        let m = MeasureSpec::boxed(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mv = mean_vector(
            &parse_all(&["x1*x2", "x2^2"]),
            &m,
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!((mv.values[0] - 0.5).abs() <= 1e-9);
        assert!((mv.values[1] - 4.0 / 3.0).abs() <= 1e-9);
    }

    #[test]
    fn discrete_mean_is_exact() {
        let m = MeasureSpec::discrete(vec![(0.0.into(), 1.0), (10.0.into(), 1.0)]).unwrap();
        let mv = mean_vector(&parse_all(&["exp(-t)"]), &m, &IntegrationOptions::default()).unwrap();
        assert_eq!(mv.values[0], 0.5 * (1.0 + (-10.0f64).exp()));
    }

    #[test]
    fn evaluation_failure_names_function_and_point() {
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        let err = mean_vector(
            &parse_all(&["t", "log(t)"]),
            &m,
            &IntegrationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::Eval { function: 1, .. }));
    }

    #[test]
    fn budget_exhaustion_carries_estimate() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let opts = IntegrationOptions {
            tol: 1e-14,
            max_cells: 10,
        };
        let err = mean_vector(&parse_all(&["step(t-0.3)"]), &m, &opts).unwrap_err();
        let IntegrateError::NotConverged { best } = err else {
            panic!("{err}")
        };
        assert!((best.values[0] - 0.7).abs() < 1e-2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        assert_eq!(
            mean_vector(&[], &m, &IntegrationOptions::default()),
            Err(IntegrateError::NoFunctions)
        );
        assert!(matches!(
            mean_vector(&parse_all(&["x2"]), &m, &IntegrationOptions::default()),
            Err(IntegrateError::Dimension { .. })
        ));
        assert!(matches!(
            mean_vector(&parse_all(&["t"]), &m, &IntegrationOptions::with_tol(0.0)),
            Err(IntegrateError::BadTolerance(_))
        ));
    }

    #[test]
    fn midpoint_atoms_for_linear_function() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let opts = RiemannOptions {
            resolution: 4,
            residual_target: 1e-12,
            max_atoms: 4,
        };
        let c = riemann_atoms(&parse_all(&["t"]), &m, &[0.5], &opts).unwrap();
        let pts: Vec<f64> = c.atoms.iter().map(|a| a.point.0[0]).collect();
        assert_eq!(pts, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(c.atoms.iter().all(|a| a.weight == 0.25));
        assert_eq!(c.combined_image(), vec![0.5]);
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn discrete_atoms_pass_through() {
        let m = MeasureSpec::discrete(vec![((-1.0).into(), 0.5), (1.0.into(), 0.5)]).unwrap();
        let c = riemann_atoms(
            &parse_all(&["t"]),
            &m,
            &[0.0],
            &RiemannOptions::new(4096, 1e-9),
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.atoms[0].weight, 0.5);
        assert_eq!(c.atoms[1].point, DomainPoint::scalar(1.0));
    }

    #[test]
    fn step_discretization_is_accurate() {
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        let c = riemann_atoms(
            &parse_all(&["2*step(t)-1"]),
            &m,
            &[0.0],
            &RiemannOptions::new(4096, 1e-9),
        )
        .unwrap();
        let direct: f64 = c.atoms.iter().map(|a| a.weight * a.image[0]).sum();
        assert!(direct.abs() <= 1e-3);
        assert!((c.weight_sum() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn resolution_doubles_until_residual_target() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let opts = RiemannOptions {
            resolution: 4,
            residual_target: 1e-4,
            max_atoms: 1 << 12,
        };
        // Midpoint error for t^2 with k cells is 1/(12 k^2).
        let c = riemann_atoms(&parse_all(&["t^2"]), &m, &[1.0 / 3.0], &opts).unwrap();
        assert_eq!(c.len(), 32);
        let tight = RiemannOptions {
            residual_target: 1e-12,
            ..opts
        };
        let err = riemann_atoms(&parse_all(&["t^2"]), &m, &[1.0 / 3.0], &tight).unwrap_err();
        assert!(matches!(
            err,
            IntegrateError::ResolutionTooSmall { atoms: 4096, .. }
        ));
        assert!(matches!(
            riemann_atoms(
                &parse_all(&["t"]),
                &m,
                &[0.5],
                &RiemannOptions::new(2, 1e-9)
            ),
            Err(IntegrateError::ResolutionTooLow { .. })
        ));
    }

    #[test]
    fn box_atoms_cover_the_grid() {
        assert_eq!(cells_per_axis(4096, 2), 64);
        assert_eq!(cells_per_axis(4097, 2), 65);
        assert_eq!(cells_per_axis(4096, 3), 16);
        assert_eq!(cells_per_axis(5, 1), 5);
        let m = MeasureSpec::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let c = riemann_atoms(
            &parse_all(&["x1 + x2"]),
            &m,
            &[1.0],
            &RiemannOptions::new(16, 1e-9),
        )
        .unwrap();
        assert_eq!(c.len(), 16);
        assert!(c.residual < 1e-14);
    }
}
