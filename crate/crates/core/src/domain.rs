//! Measured domains: intervals and boxes (optionally with a density) and
//! finite discrete measures, plus straight-line paths in convex domains.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::quad::Cubature;

/// A point of the integration domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainPoint(pub Vec<f64>);

impl DomainPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        DomainPoint(coords)
    }

    pub fn scalar(t: f64) -> Self {
        DomainPoint(vec![t])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

impl From<f64> for DomainPoint {
    fn from(t: f64) -> Self {
        DomainPoint::scalar(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAtom {
    pub point: DomainPoint,
    /// Normalized probability mass.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Discrete { atoms: Vec<DiscreteAtom> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("density needs {needed} coordinates but the domain has dimension {dimension}")]
    DensityDimension { needed: usize, dimension: usize },
    #[error("density is only supported on interval and box domains")]
    DensityOnDiscrete,
    #[error("density failed at {point:?}: {source}")]
    DensityEval { point: Vec<f64>, source: EvalError },
    #[error("density is negative ({value}) at {point:?}")]
    NegativeDensity { point: Vec<f64>, value: f64 },
    #[error("total mass of the domain is not positive ({0})")]
    ZeroMass(f64),
    #[error("discrete domains are not path-connected; no path between atoms")]
    NoPaths,
    #[error("path endpoint {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("path parameter {0} is outside [0, 1]")]
    BadLambda(f64),
    #[error("indicator failed at {point:?}: {source}")]
    IndicatorEval { point: Vec<f64>, source: EvalError },
    #[error("integration did not converge: estimate {estimate}, achieved error {error:e}")]
    NotConverged { estimate: f64, error: f64 },
}

/// A normalized measure on a domain. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    kind: DomainKind,
    density: Option<Expr>,
    /// μ(S) for discrete measures (sum of the raw masses).
    raw_mass: f64,
    /// Sum of the normalized discrete masses in atom order.
    mass_sum: f64,
}

/// Options for the adaptive integration behind [`MeasureSpec::prob`].
#[derive(Debug, Clone, Copy)]
pub struct ProbOptions {
    pub tol: f64,
    pub max_cells: usize,
}

impl Default for ProbOptions {
    fn default() -> Self {
        ProbOptions {
            tol: 1e-12,
            max_cells: 200_000,
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<(), MeasureError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MeasureError::InvalidDomain(format!(
            "{what} must be finite"
        )))
    }
}

impl MeasureSpec {
    pub fn interval(a: f64, b: f64) -> Result<Self, MeasureError> {
        check_finite(&[a, b], "interval bounds")?;
        if a >= b {
            return Err(MeasureError::InvalidDomain(format!(
                "interval needs a < b, got [{a}, {b}]"
            )));
        }
        Ok(Self::from_kind(DomainKind::Interval { a, b }))
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, MeasureError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(MeasureError::InvalidDomain(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if lo.len() > 3 {
            return Err(MeasureError::InvalidDomain(format!(
                "box dimension {} exceeds the supported maximum of 3",
                lo.len()
            )));
        }
        check_finite(&lo, "box bounds")?;
        check_finite(&hi, "box bounds")?;
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(MeasureError::InvalidDomain(
                "box needs lo < hi in every coordinate".into(),
            ));
        }
        Ok(Self::from_kind(DomainKind::Box { lo, hi }))
    }

    /// Builds a discrete measure from `(point, mass)` pairs. Zero-mass atoms
    /// are dropped and the rest normalized to total mass 1.
    pub fn discrete(atoms: Vec<(DomainPoint, f64)>) -> Result<Self, MeasureError> {
        let dim = atoms.first().map_or(0, |(p, _)| p.dimension());
        if dim == 0 {
            return Err(MeasureError::InvalidDomain(
                "discrete measure needs atoms with at least one coordinate".into(),
            ));
        }
        for (p, m) in &atoms {
            if p.dimension() != dim {
                return Err(MeasureError::InvalidDomain(
                    "all atoms must have the same dimension".into(),
                ));
            }
            check_finite(p.coords(), "atom coordinates")?;
            if !m.is_finite() || *m < 0.0 {
                return Err(MeasureError::InvalidDomain(format!(
                    "atom mass must be finite and nonnegative, got {m}"
                )));
            }
        }
        let kept: Vec<(DomainPoint, f64)> = atoms.into_iter().filter(|(_, m)| *m > 0.0).collect();
        let raw_mass: f64 = kept.iter().map(|(_, m)| m).sum();
        if kept.is_empty() || raw_mass <= 0.0 {
            return Err(MeasureError::InvalidDomain(
                "discrete measure needs at least one atom with positive mass".into(),
            ));
        }
        let atoms: Vec<DiscreteAtom> = kept
            .into_iter()
            .map(|(point, m)| DiscreteAtom {
                point,
                mass: m / raw_mass,
            })
            .collect();
        let mass_sum = atoms.iter().map(|a| a.mass).sum();
        Ok(MeasureSpec {
            kind: DomainKind::Discrete { atoms },
            density: None,
            raw_mass,
            mass_sum,
        })
    }

    fn from_kind(kind: DomainKind) -> Self {
        MeasureSpec {
            kind,
            density: None,
            raw_mass: 0.0,
            mass_sum: 1.0,
        }
    }

    pub fn with_density(mut self, density: Expr) -> Result<Self, MeasureError> {
        if matches!(self.kind, DomainKind::Discrete { .. }) {
            return Err(MeasureError::DensityOnDiscrete);
        }
        let needed = density.required_dimension();
        if needed > self.dimension() {
            return Err(MeasureError::DensityDimension {
                needed,
                dimension: self.dimension(),
            });
        }
        self.density = Some(density);
        Ok(self)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn density(&self) -> Option<&Expr> {
        self.density.as_ref()
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::Box { lo, .. } => lo.len(),
            DomainKind::Discrete { atoms } => atoms[0].point.dimension(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DomainKind::Discrete { .. })
    }

    /// Only the convex domains (interval, box) carry paths.
    pub fn supports_paths(&self) -> bool {
        !self.is_discrete()
    }

    /// Bounds of a continuous domain as `(lo, hi)`.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            DomainKind::Interval { a, b } => Some((vec![*a], vec![*b])),
            DomainKind::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            DomainKind::Discrete { .. } => None,
        }
    }

    /// Lebesgue volume of a continuous domain.
    pub fn volume(&self) -> Option<f64> {
        self.bounds()
            .map(|(lo, hi)| lo.iter().zip(&hi).map(|(l, h)| h - l).product())
    }

    /// Raw discrete mass μ(S) before normalization.
    pub(crate) fn raw_discrete_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn contains(&self, p: &DomainPoint) -> bool {
        if p.dimension() != self.dimension() || !p.coords().iter().all(|v| v.is_finite()) {
            return false;
        }
        match &self.kind {
            DomainKind::Interval { a, b } => (*a..=*b).contains(&p.0[0]),
            DomainKind::Box { lo, hi } => p
                .coords()
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| (*l..=*h).contains(v)),
            DomainKind::Discrete { atoms } => atoms.iter().any(|a| a.point == *p),
        }
    }

    /// Density value at `p` (1 when no density is set).
    pub fn density_at(&self, p: &[f64]) -> Result<f64, MeasureError> {
        match &self.density {
            None => Ok(1.0),
            Some(expr) => {
                let v = expr.eval(p).map_err(|source| MeasureError::DensityEval {
                    point: p.to_vec(),
                    source,
                })?;
                if v < 0.0 {
                    return Err(MeasureError::NegativeDensity {
                        point: p.to_vec(),
                        value: v,
                    });
                }
                Ok(v)
            }
        }
    }

    /// Straight segment from `from` to `to`.
    pub fn path(&self, from: DomainPoint, to: DomainPoint) -> Result<PathSpec, MeasureError> {
        if !self.supports_paths() {
            return Err(MeasureError::NoPaths);
        }
        for p in [&from, &to] {
            if !self.contains(p) {
                return Err(MeasureError::OutsideDomain(p.0.clone()));
            }
        }
        Ok(PathSpec {
            from,
            to,
            bounds: self.bounds().expect("continuous domain"),
        })
    }

    /// P(B) = E(I_B) for an infallible indicator.
    pub fn prob(
        &self,
        mut indicator: impl FnMut(&[f64]) -> bool,
        opts: &ProbOptions,
    ) -> Result<f64, MeasureError> {
        self.try_prob(|p| Ok(indicator(p)), opts)
    }

    /// P(B) = E(I_B). Discrete measures sum masses directly; continuous ones
    /// integrate the indicator against the density adaptively.
    pub fn try_prob(
        &self,
        mut indicator: impl FnMut(&[f64]) -> Result<bool, EvalError>,
        opts: &ProbOptions,
    ) -> Result<f64, MeasureError> {
        let mut test = |p: &[f64]| {
            indicator(p).map_err(|source| MeasureError::IndicatorEval {
                point: p.to_vec(),
                source,
            })
        };
        if let DomainKind::Discrete { atoms } = &self.kind {
            let mut inside = 0.0;
            for atom in atoms {
                if test(atom.point.coords())? {
                    inside += atom.mass;
                }
            }
            // Same summation order as `mass_sum`, so P(S) is exactly 1.
            return Ok(inside / self.mass_sum);
        }
        let (lo, hi) = self.bounds().expect("continuous domain");
        let tol = opts.tol;
        let out = Cubature {
            lo: &lo,
            hi: &hi,
            components: 2,
            max_cells: opts.max_cells,
        }
        .run(
            |p, out| {
                let w = self.density_at(p)?;
                out[0] = w;
                out[1] = if test(p)? { w } else { 0.0 };
                Ok(())
            },
            |v, e| v[0] > 0.0 && e[1] + (v[1] / v[0]).abs() * e[0] <= tol * v[0],
        )?;
        let mass = out.values[0];
        if mass <= 0.0 {
            return Err(MeasureError::ZeroMass(mass));
        }
        let p = out.values[1] / mass;
        if !out.converged {
            return Err(MeasureError::NotConverged {
                estimate: p,
                error: (out.errors[1] + p.abs() * out.errors[0]) / mass,
            });
        }
        Ok(p)
    }
}

/// A straight path in a convex domain with `f(0) = from` and `f(1) = to`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    from: DomainPoint,
    to: DomainPoint,
    bounds: (Vec<f64>, Vec<f64>),
}

impl PathSpec {
    pub fn from(&self) -> &DomainPoint {
        &self.from
    }

    pub fn to(&self) -> &DomainPoint {
        &self.to
    }

    /// `(1 - λ)·from + λ·to`, exact at both endpoints and clamped to the
    /// domain bounds against rounding.
    pub fn eval(&self, lambda: f64) -> Result<DomainPoint, MeasureError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(MeasureError::BadLambda(lambda));
        }
        Ok(self.at(lambda))
    }

    pub(crate) fn at(&self, lambda: f64) -> DomainPoint {
        if lambda == 0.0 {
            return self.from.clone();
        }
        if lambda == 1.0 {
            return self.to.clone();
        }
        let (lo, hi) = &self.bounds;
        DomainPoint(
            self.from
                .coords()
                .iter()
                .zip(self.to.coords())
                .enumerate()
                .map(|(k, (a, b))| ((1.0 - lambda) * a + lambda * b).clamp(lo[k], hi[k]))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_interpolates() {
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        let p = m.path((-1.0).into(), 1.0.into()).unwrap();
        assert_eq!(p.eval(0.5).unwrap(), DomainPoint::scalar(0.0));
        let b = MeasureSpec::boxed(vec![0.0, 0.0], vec![2.0, 4.0]).unwrap();
        let p = b
            .path(
                DomainPoint::new(vec![0.0, 0.0]),
                DomainPoint::new(vec![2.0, 4.0]),
            )
            .unwrap();
        assert_eq!(p.eval(0.25).unwrap(), DomainPoint::new(vec![0.5, 1.0]));
    }

    #[test]
    fn path_endpoints_are_bitwise_exact() {
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        let from = DomainPoint::scalar(-0.0);
        let to = DomainPoint::scalar(0.1 + 0.2);
        let p = m.path(from.clone(), to.clone()).unwrap();
        assert_eq!(p.eval(0.0).unwrap().0[0].to_bits(), from.0[0].to_bits());
        assert_eq!(p.eval(1.0).unwrap().0[0].to_bits(), to.0[0].to_bits());
        assert!(p.eval(1.5).is_err());
    }

    #[test]
    fn discrete_domains_have_no_paths() {
        let m = MeasureSpec::discrete(vec![((-1.0).into(), 0.5), (1.0.into(), 0.5)]).unwrap();
        assert_eq!(
            m.path((-1.0).into(), 1.0.into()).unwrap_err(),
            MeasureError::NoPaths
        );
    }

    #[test]
    fn path_rejects_points_outside() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        assert!(m.path(0.0.into(), 2.0.into()).is_err());
    }

    #[test]
    fn discrete_prob_sums_masses() {
        let m = MeasureSpec::discrete(vec![((-1.0).into(), 0.5), (1.0.into(), 0.5)]).unwrap();
        let opts = ProbOptions::default();
        assert_eq!(m.prob(|p| p[0] > 0.0, &opts).unwrap(), 0.5);
        assert_eq!(m.prob(|_| true, &opts).unwrap(), 1.0);
        assert_eq!(m.prob(|_| false, &opts).unwrap(), 0.0);
    }

    #[test]
    fn discrete_normalizes_and_drops_zero_mass() {
        let m = MeasureSpec::discrete(vec![
            (0.0.into(), 3.0),
            (1.0.into(), 0.0),
            (2.0.into(), 1.0),
        ])
        .unwrap();
        let DomainKind::Discrete { atoms } = m.kind() else {
            panic!()
        };
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].mass, 0.75);
        assert_eq!(m.raw_discrete_mass(), 4.0);
        assert!(MeasureSpec::discrete(vec![(0.0.into(), 0.0)]).is_err());
        assert!(MeasureSpec::discrete(vec![(0.0.into(), -1.0)]).is_err());
    }

    #[test]
    fn uniform_interval_prob() {
        let m = MeasureSpec::interval(0.0, 1.0).unwrap();
        let opts = ProbOptions::default();
        let p = m.prob(|p| p[0] <= 0.25, &opts).unwrap();
        assert!((p - 0.25).abs() < 1e-10);
        let m = MeasureSpec::interval(-1.0, 1.0).unwrap();
        assert_eq!(m.prob(|_| true, &opts).unwrap(), 1.0);
        let p = m.prob(|p| p[0] > 0.3, &opts).unwrap();
        assert!((p - 0.35).abs() < 1e-11);
    }

    #[test]
    fn weighted_prob_uses_density() {
        // Density 2t on [0,1]: P(t <= 1/2) = 1/4.
        let m = MeasureSpec::interval(0.0, 1.0)
            .unwrap()
            .with_density(Expr::parse("2*t").unwrap())
            .unwrap();
        let p = m.prob(|p| p[0] <= 0.5, &ProbOptions::default()).unwrap();
        assert!((p - 0.25).abs() < 1e-11);
    }

    #[test]
    fn negative_density_is_rejected() {
        let m = MeasureSpec::interval(-1.0, 1.0)
            .unwrap()
            .with_density(Expr::parse("t").unwrap())
            .unwrap();
        assert!(matches!(
            m.prob(|_| true, &ProbOptions::default()),
            Err(MeasureError::NegativeDensity { .. })
        ));
    }

    #[test]
    fn invalid_domains() {
        assert!(MeasureSpec::interval(1.0, 1.0).is_err());
        assert!(MeasureSpec::interval(0.0, f64::INFINITY).is_err());
        assert!(MeasureSpec::boxed(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MeasureSpec::boxed(vec![0.0; 4], vec![1.0; 4]).is_err());
        let disc = MeasureSpec::discrete(vec![(0.0.into(), 1.0)]).unwrap();
        assert_eq!(
            disc.with_density(Expr::parse("1").unwrap()).unwrap_err(),
            MeasureError::DensityOnDiscrete
        );
        assert!(MeasureSpec::interval(0.0, 1.0)
            .unwrap()
            .with_density(Expr::parse("x2").unwrap())
            .is_err());
    }
}
