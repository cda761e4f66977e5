//! Checks of the probability-level properties on concrete measures:
//! finite additivity, Markov's inequality and constructive convex-hull
//! membership of E X.
//!
//! Every measure the crate builds is countably additive (Lebesgue with a
//! density, or finitely many atoms). The "E X = 0 and X ≥ 0 forces X = 0
//! almost surely" condition is therefore never checked directly; it holds
//! for all admitted instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::caratheodory::{prune, ConvexCombination, PruneError};
use crate::domain::{DomainKind, MeasureError, MeasureSpec, ProbOptions};
use crate::expr::Expr;
use crate::integrate::{
    mean_vector, riemann_atoms, IntegrateError, IntegrationOptions, RiemannOptions,
};

/// Slack allowed on Markov's bound.
pub const MARKOV_SLACK: f64 = 1e-9;
/// Slack allowed on finite additivity.
pub const ADDITIVITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyFailure {
    pub input: String,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property_name: String,
    pub cases_run: usize,
    pub failures: Vec<PropertyFailure>,
    pub passed: bool,
}

impl PropertyReport {
    fn new(name: &str) -> Self {
        PropertyReport {
            property_name: name.to_string(),
            cases_run: 0,
            failures: Vec::new(),
            passed: true,
        }
    }

    fn record(&mut self, ok: bool, input: impl FnOnce() -> String, observed: f64, bound: f64) {
        self.cases_run += 1;
        if !ok {
            self.failures.push(PropertyFailure {
                input: input(),
                observed,
                bound,
            });
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AxiomError {
    #[error("function is negative ({value}) at {point:?}; Markov's inequality needs X >= 0")]
    NegativeFunction { point: Vec<f64>, value: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("finite additivity is checked on discrete measures only")]
    NotDiscrete,
    #[error("integration stage: {0}")]
    Integrate(#[from] IntegrateError),
    #[error("probability stage: {0}")]
    Measure(#[from] MeasureError),
    #[error("pruning stage: {0}")]
    Prune(#[from] PruneError),
}

/// Sample points used to verify that a function is nonnegative.
fn sample_points(measure: &MeasureSpec) -> Vec<Vec<f64>> {
    match measure.kind() {
        DomainKind::Discrete { atoms } => atoms.iter().map(|a| a.point.0.clone()).collect(),
        DomainKind::Interval { a, b } => (0..=1024)
            .map(|i| vec![a + (b - a) * i as f64 / 1024.0])
            .collect(),
        DomainKind::Box { lo, hi } => {
            let d = lo.len();
            let k: usize = match d {
                1 => 1024,
                2 => 32,
                _ => 10,
            };
            let mut out = Vec::new();
            let mut idx = vec![0usize; d];
            for _ in 0..(k + 1).pow(d as u32) {
                out.push(
                    (0..d)
                        .map(|a| lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / k as f64)
                        .collect(),
                );
                for slot in idx.iter_mut() {
                    *slot += 1;
                    if *slot <= k {
                        break;
                    }
                    *slot = 0;
                }
            }
            out
        }
    }
}

/// Checks `P(X > ε) ≤ E X / ε + 1e-9` for each ε.
pub fn check_markov(
    f: &Expr,
    measure: &MeasureSpec,
    epsilons: &[f64],
    opts: &IntegrationOptions,
) -> Result<PropertyReport, AxiomError> {
    for &eps in epsilons {
        if !(eps > 0.0) {
            return Err(AxiomError::BadEpsilon(eps));
        }
    }
    for p in sample_points(measure) {
        let value = f.eval(&p).map_err(|source| IntegrateError::Eval {
            function: 0,
            point: p.clone(),
            source,
        })?;
        if value < 0.0 {
            return Err(AxiomError::NegativeFunction { point: p, value });
        }
    }
    let mean = mean_vector(std::slice::from_ref(f), measure, opts)?.values[0];
    let prob_opts = ProbOptions {
        tol: 1e-12,
        max_cells: opts.max_cells.max(ProbOptions::default().max_cells),
    };
    let mut report = PropertyReport::new("markov");
    for &eps in epsilons {
        let p = measure.try_prob(|x| Ok(f.eval(x)? > eps), &prob_opts)?;
        let bound = mean / eps + MARKOV_SLACK;
        report.record(p <= bound, || format!("X = {f}, eps = {eps}"), p, bound);
    }
    Ok(report)
}

/// Checks finite additivity, nonnegativity and `P(S) = 1` on random pairs
/// of disjoint threshold events `{h < c}` and `{h > c}` for random linear
/// functionals `h` of the atom coordinates.
pub fn check_fap(
    measure: &MeasureSpec,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport, AxiomError> {
    let DomainKind::Discrete { atoms } = measure.kind() else {
        return Err(AxiomError::NotDiscrete);
    };
    let opts = ProbOptions::default();
    let mut report = PropertyReport::new("fap");

    let whole = measure.prob(|_| true, &opts)?;
    report.record(whole == 1.0, || "P(S)".into(), whole, 1.0);
    let empty = measure.prob(|_| false, &opts)?;
    report.record(empty == 0.0, || "P(empty)".into(), empty, 0.0);

    let d = measure.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = |x: &[f64]| x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        let (lo, hi) = atoms
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                let v = h(a.point.coords());
                (lo.min(v), hi.max(v))
            });
        let c = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let pa = measure.prob(|x| h(x) < c, &opts)?;
        let pb = measure.prob(|x| h(x) > c, &opts)?;
        let pab = measure.prob(|x| h(x) < c || h(x) > c, &opts)?;
        let gap = (pab - pa - pb).abs();
        report.record(
            gap <= ADDITIVITY_SLACK,
            || format!("trial {trial}: additivity, c = {c}"),
            gap,
            ADDITIVITY_SLACK,
        );
        let low = pa.min(pb).min(pab);
        report.record(
            low >= 0.0,
            || format!("trial {trial}: nonnegativity"),
            low,
            0.0,
        );
    }
    Ok(report)
}

/// Builds a convex combination of at most `n + 1` domain points whose image
/// sum equals E X (within the returned residual).
pub fn hull_certificate(
    fns: &[Expr],
    measure: &MeasureSpec,
    tol: f64,
    resolution: usize,
) -> Result<ConvexCombination, AxiomError> {
    let opts = IntegrationOptions::with_tol(tol);
    let target = mean_vector(fns, measure, &opts)?.values;
    let atoms = match riemann_atoms(fns, measure, &target, &RiemannOptions::new(resolution, tol)) {
        Ok(c) => c,
        Err(IntegrateError::ResolutionTooSmall { best, .. }) => *best,
        Err(e) => return Err(e.into()),
    };
    let mut pruned = prune(atoms)?;
    pruned.refit_weights();
    Ok(pruned)
}

/// Certifies `E X ∈ conv X(S)` by exhibiting a pruned combination with
/// nonnegative weights summing to 1 and residual at most `tol`.
pub fn check_hull_membership(
    fns: &[Expr],
    measure: &MeasureSpec,
    tol: f64,
    resolution: usize,
) -> Result<PropertyReport, AxiomError> {
    let cert = hull_certificate(fns, measure, tol, resolution)?;
    let mut report = PropertyReport::new("hull");
    report.record(
        cert.residual <= tol,
        || format!("residual of {}-atom certificate", cert.len()),
        cert.residual,
        tol,
    );
    let min = cert.min_weight();
    report.record(min >= -1e-12, || "minimum weight".into(), min, -1e-12);
    let drift = (cert.weight_sum() - 1.0).abs();
    report.record(drift <= 1e-12, || "weight sum".into(), drift, 1e-12);
    let limit = fns.len() + 1;
    report.record(
        cert.len() <= limit,
        || "atom count".into(),
        cert.len() as f64,
        limit as f64,
    );
    Ok(report)
}
