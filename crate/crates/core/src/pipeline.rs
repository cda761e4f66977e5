//! End-to-end synthesis of a shared-weight quadrature rule and its
//! independent re-verification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caratheodory::{prune_with_trace, ConvexCombination, PruneError, PruneRound};
use crate::domain::{DomainPoint, MeasureSpec};
use crate::expr::Expr;
use crate::integrate::{
    images, mean_vector, riemann_atoms, IntegrateError, IntegrationOptions, RiemannOptions,
    DEFAULT_MAX_CELLS, DEFAULT_RESOLUTION, DEFAULT_TOLERANCE,
};
use crate::path_reduce::{reduce, ReduceError, ReductionTrace};
use crate::quad::compensated_sum;

/// Everything [`synthesize`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub functions: Vec<Expr>,
    /// Per-function continuity flags; path reduction runs only if all are set.
    pub continuous: Vec<bool>,
    pub measure: MeasureSpec,
    pub tolerance: f64,
    pub resolution: usize,
    pub seed: u64,
    pub unnormalized: bool,
    pub max_cells: usize,
}

impl Problem {
    /// A problem with all functions continuous and default settings.
    pub fn new(functions: Vec<Expr>, measure: MeasureSpec) -> Self {
        let continuous = vec![true; functions.len()];
        Problem {
            functions,
            continuous,
            measure,
            tolerance: DEFAULT_TOLERANCE,
            resolution: DEFAULT_RESOLUTION,
            seed: 0,
            unnormalized: false,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_continuity(mut self, continuous: Vec<bool>) -> Self {
        self.continuous = continuous;
        self
    }

    pub fn dimension(&self) -> usize {
        self.functions.len()
    }

    fn integration_options(&self, tol: f64) -> IntegrationOptions {
        IntegrationOptions {
            tol,
            max_cells: self.max_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<DomainPoint>,
    pub weights: Vec<f64>,
    pub target: Vec<f64>,
    pub residual: f64,
    pub reduced: bool,
    pub total_mass: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }
}

/// Progress events emitted by [`synthesize_with_trace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum TraceEvent {
    Integrate {
        target: Vec<f64>,
        error_estimate: Vec<f64>,
        function_evals: usize,
        total_mass: f64,
    },
    Discretize {
        atoms: usize,
        residual: f64,
        converged: bool,
    },
    Prune(PruneRound),
    Refit {
        after: &'static str,
        atoms: usize,
        residual: f64,
        changed: bool,
    },
    Reduce {
        reduced: bool,
        trace: Option<ReductionTrace>,
        failures: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("integrate stage: {0}")]
    Integrate(IntegrateError),
    #[error("discretize stage: {0}")]
    Discretize(IntegrateError),
    #[error("prune stage: {0}")]
    Prune(#[from] PruneError),
    #[error("reduce stage: {0}")]
    Reduce(#[from] ReduceError),
    #[error("emit stage: {0}")]
    Emit(IntegrateError),
    #[error("emit stage: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual {
        residual: f64,
        tolerance: f64,
        rule: Box<QuadratureRule>,
    },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Integrate(_) => "integrate",
            PipelineError::Discretize(_) => "discretize",
            PipelineError::Prune(_) => "prune",
            PipelineError::Reduce(_) => "reduce",
            PipelineError::Emit(_) | PipelineError::Residual { .. } => "emit",
        }
    }
}

pub fn synthesize(problem: &Problem) -> Result<QuadratureRule, PipelineError> {
    synthesize_with_trace(problem, |_| {})
}

/// Runs integrate → discretize → prune → reduce (when every function is
/// continuous and the domain has paths) and emits the rule.
pub fn synthesize_with_trace(
    problem: &Problem,
    mut on_event: impl FnMut(TraceEvent),
) -> Result<QuadratureRule, PipelineError> {
    let fns = &problem.functions;
    let n = fns.len();
    let measure = &problem.measure;

    let mean = mean_vector(
        fns,
        measure,
        &problem.integration_options(problem.tolerance),
    )
    .map_err(PipelineError::Integrate)?;
    on_event(TraceEvent::Integrate {
        target: mean.values.clone(),
        error_estimate: mean.error_estimate.clone(),
        function_evals: mean.function_evals,
        total_mass: mean.total_mass,
    });

    let riemann = RiemannOptions::new(problem.resolution, problem.tolerance);
    let (atoms, converged) = match riemann_atoms(fns, measure, &mean.values, &riemann) {
        Ok(c) => (c, true),
        Err(IntegrateError::ResolutionTooSmall { best, .. }) => (*best, false),
        Err(e) => return Err(PipelineError::Discretize(e)),
    };
    on_event(TraceEvent::Discretize {
        atoms: atoms.len(),
        residual: atoms.residual,
        converged,
    });

    let mut comb = prune_with_trace(atoms, |r| on_event(TraceEvent::Prune(r.clone())))?;
    refit(&mut comb, "prune", &mut on_event);

    let continuous = problem.continuous.iter().all(|c| *c);
    if continuous && measure.supports_paths() && comb.len() == n + 1 {
        let outcome = reduce(comb, fns, measure)?;
        on_event(TraceEvent::Reduce {
            reduced: outcome.reduced,
            trace: outcome.trace.clone(),
            failures: outcome
                .failures
                .iter()
                .map(|(d, q, e)| format!("distinguished {d}, partner {q}: {e}"))
                .collect(),
        });
        comb = outcome.combination;
        if outcome.reduced {
            refit(&mut comb, "reduce", &mut on_event);
        }
    }

    let rule = emit(&comb, problem, mean.total_mass)?;
    let allowed = problem.tolerance * rule.total_mass;
    if !(rule.residual <= allowed) {
        return Err(PipelineError::Residual {
            residual: rule.residual,
            tolerance: allowed,
            rule: Box::new(rule),
        });
    }
    Ok(rule)
}

fn refit(comb: &mut ConvexCombination, after: &'static str, on_event: &mut impl FnMut(TraceEvent)) {
    let changed = comb.refit_weights();
    on_event(TraceEvent::Refit {
        after,
        atoms: comb.len(),
        residual: comb.residual,
        changed,
    });
}

/// Builds the output rule, recomputing every image from scratch for the
/// residual and rescaling by μ(S) when unnormalized output is requested.
fn emit(
    comb: &ConvexCombination,
    problem: &Problem,
    mass: f64,
) -> Result<QuadratureRule, PipelineError> {
    let scale = if problem.unnormalized { mass } else { 1.0 };
    let nodes: Vec<DomainPoint> = comb.atoms.iter().map(|a| a.point.clone()).collect();
    let weights: Vec<f64> = comb.atoms.iter().map(|a| a.weight * scale).collect();
    let target: Vec<f64> = comb.target.iter().map(|t| t * scale).collect();
    let combined = combine(&problem.functions, &nodes, &weights).map_err(PipelineError::Emit)?;
    let residual = max_gap(&combined, &target);
    Ok(QuadratureRule {
        reduced: nodes.len() <= problem.dimension(),
        nodes,
        weights,
        target,
        residual,
        total_mass: scale,
    })
}

/// Σ λᵢ X(tᵢ) by direct evaluation.
pub fn combine(
    fns: &[Expr],
    nodes: &[DomainPoint],
    weights: &[f64],
) -> Result<Vec<f64>, IntegrateError> {
    let imgs = nodes
        .iter()
        .map(|p| images(fns, p.coords()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..fns.len())
        .map(|k| compensated_sum(imgs.iter().zip(weights).map(|(x, w)| w * x[k])))
        .collect())
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub tolerance: f64,
    /// E X recomputed at a tenth of the tolerance (times μ(S) when the rule
    /// is unnormalized).
    pub recomputed_target: Vec<f64>,
    /// Σ λᵢ X(tᵢ) by direct evaluation.
    pub combination: Vec<f64>,
    /// `combination - recomputed_target`, componentwise.
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
    /// Largest gap between the rule's stored target and the recomputed one.
    pub target_drift: f64,
    pub weight_sum: f64,
    pub expected_weight_sum: f64,
    pub min_weight: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Integrate(#[from] IntegrateError),
}

/// Re-checks a rule against a problem from scratch.
pub fn verify(rule: &QuadratureRule, problem: &Problem) -> Result<VerifyReport, VerifyError> {
    let n = problem.dimension();
    let d = problem.measure.dimension();
    if rule.weights.len() != rule.nodes.len() {
        return Err(VerifyError::Dimension(format!(
            "{} nodes but {} weights",
            rule.nodes.len(),
            rule.weights.len()
        )));
    }
    if rule.target.len() != n {
        return Err(VerifyError::Dimension(format!(
            "target has {} components, config has {n} functions",
            rule.target.len()
        )));
    }
    if let Some(p) = rule.nodes.iter().find(|p| p.dimension() != d) {
        return Err(VerifyError::Dimension(format!(
            "node {:?} is not in the {d}-dimensional domain",
            p.coords()
        )));
    }

    let tol = problem.tolerance;
    let mean = mean_vector(
        &problem.functions,
        &problem.measure,
        &problem.integration_options(tol / 10.0),
    )?;
    let mut failures = Vec::new();
    let scale = rule.total_mass;
    if scale != 1.0 && (scale - mean.total_mass).abs() > 1e-9 * mean.total_mass.max(1.0) {
        failures.push(format!(
            "total_mass {scale} is neither 1 nor the domain mass {}",
            mean.total_mass
        ));
    }
    let recomputed: Vec<f64> = mean.values.iter().map(|v| v * scale).collect();
    let combination = combine(&problem.functions, &rule.nodes, &rule.weights)?;
    let discrepancies: Vec<f64> = combination
        .iter()
        .zip(&recomputed)
        .map(|(c, t)| c - t)
        .collect();
    let max_discrepancy = discrepancies.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let allowed = tol * scale;
    if !(max_discrepancy <= allowed) {
        failures.push(format!(
            "combination misses the recomputed target by {max_discrepancy:e} (allowed {allowed:e})"
        ));
    }
    let target_drift = max_gap(&rule.target, &recomputed);
    if !(target_drift <= allowed) {
        failures.push(format!("stored target is off by {target_drift:e}"));
    }
    let weight_sum = rule.weight_sum();
    let sum_slack = 1e-12 * scale.max(1.0);
    if !((weight_sum - scale).abs() <= sum_slack) {
        failures.push(format!("weights sum to {weight_sum}, expected {scale}"));
    }
    let min_weight = rule.weights.iter().copied().fold(f64::INFINITY, f64::min);
    if min_weight < 0.0 {
        failures.push(format!("negative weight {min_weight}"));
    }
    if let Some(p) = rule.nodes.iter().find(|p| !problem.measure.contains(p)) {
        failures.push(format!("node {:?} lies outside the domain", p.coords()));
    }
    if rule.len() > n + 1 {
        failures.push(format!("{} nodes exceed n + 1 = {}", rule.len(), n + 1));
    }
    Ok(VerifyReport {
        passed: failures.is_empty(),
        tolerance: tol,
        recomputed_target: recomputed,
        combination,
        discrepancies,
        max_discrepancy,
        target_drift,
        weight_sum,
        expected_weight_sum: scale,
        min_weight,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn one_node_for_t_squared() {
        let p = Problem::new(vec![e("t^2")], MeasureSpec::interval(0.0, 1.0).unwrap());
        let rule = synthesize(&p).unwrap();
        assert_eq!(rule.len(), 1);
        assert!(rule.reduced);
        let t = rule.nodes[0].0[0];
        assert!((t - (1.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert_eq!(rule.weights, vec![1.0]);
        assert!(rule.residual <= 1e-9);
        assert!(verify(&rule, &p).unwrap().passed);
    }

    #[test]
    fn step_function_keeps_two_nodes() {
        let p = Problem::new(
            vec![e("2*step(t)-1")],
            MeasureSpec::interval(-1.0, 1.0).unwrap(),
        )
        .with_continuity(vec![false]);
        let rule = synthesize(&p).unwrap();
        assert_eq!(rule.len(), 2);
        assert!(!rule.reduced);
        let mut ts: Vec<f64> = rule.nodes.iter().map(|n| n.0[0]).collect();
        ts.sort_by(f64::total_cmp);
        assert!(ts[0] < 0.0 && ts[1] > 0.0);
        for w in &rule.weights {
            assert!((w - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn perturbed_weight_fails_verification() {
        let p = Problem::new(
            vec![e("t"), e("t^2")],
            MeasureSpec::interval(0.0, 1.0).unwrap(),
        );
        let mut rule = synthesize(&p).unwrap();
        assert!(rule.len() <= 2);
        let x0 = rule.nodes[0].0[0];
        rule.weights[0] += 1e-3;
        let report = verify(&rule, &p).unwrap();
        assert!(!report.passed);
        assert!((report.discrepancies[0] - 1e-3 * x0).abs() < 1e-8);
        assert!((report.discrepancies[1] - 1e-3 * x0 * x0).abs() < 1e-8);
    }

    #[test]
    fn unnormalized_weights_sum_to_the_length() {
        let mut p = Problem::new(vec![e("t^3")], MeasureSpec::interval(-1.0, 1.0).unwrap());
        p.unnormalized = true;
        let rule = synthesize(&p).unwrap();
        assert_eq!(rule.total_mass, 2.0);
        assert!((rule.weight_sum() - 2.0).abs() <= 1e-12);
        assert!(verify(&rule, &p).unwrap().passed);
    }

    #[test]
    fn discrete_measure_prunes_without_paths() {
        let atoms = (0..6)
            .map(|i| (DomainPoint::scalar(i as f64), 1.0))
            .collect();
        let p = Problem::new(
            vec![e("t"), e("t^2")],
            MeasureSpec::discrete(atoms).unwrap(),
        );
        let rule = synthesize(&p).unwrap();
        assert!(rule.len() <= 3);
        assert!(rule.residual <= 1e-9 * 10.0);
        assert!(verify(&rule, &p).unwrap().passed);
    }

    #[test]
    fn verify_rejects_mismatched_rules() {
        let p = Problem::new(vec![e("t")], MeasureSpec::interval(0.0, 1.0).unwrap());
        let rule = QuadratureRule {
            nodes: vec![DomainPoint::scalar(0.5)],
            weights: vec![],
            target: vec![0.5],
            residual: 0.0,
            reduced: true,
            total_mass: 1.0,
        };
        assert!(matches!(verify(&rule, &p), Err(VerifyError::Dimension(_))));
    }

    #[test]
    fn trace_reports_every_stage() {
        let p = Problem::new(vec![e("t")], MeasureSpec::interval(0.0, 1.0).unwrap());
        let mut stages = Vec::new();
        synthesize_with_trace(&p, |ev| {
            let json = serde_json::to_value(&ev).unwrap();
            stages.push(json["stage"].as_str().unwrap().to_string());
        })
        .unwrap();
        assert_eq!(stages.first().map(String::as_str), Some("integrate"));
        assert!(stages.iter().any(|s| s == "prune"));
        assert!(stages.iter().any(|s| s == "reduce"));
    }
}
