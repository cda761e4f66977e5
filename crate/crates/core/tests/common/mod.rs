//! Random test systems with closed-form means, evaluated independently of
//! the expression engine.

#![allow(dead_code)]

use std::rc::Rc;

use meanrule::{Expr, MeasureSpec, Problem};
use rand::Rng;

#[derive(Clone)]
pub struct Component {
    pub expr: String,
    pub f: Rc<dyn Fn(f64) -> f64>,
    pub mean: f64,
}

#[derive(Clone)]
pub struct System {
    pub a: f64,
    pub b: f64,
    pub parts: Vec<Component>,
}

pub fn random_interval(rng: &mut impl Rng) -> (f64, f64) {
    let a = rng.gen_range(-2.0..2.0);
    (a, a + rng.gen_range(0.5..3.0))
}

/// Σ cⱼ tʲ with random coefficients in [-1, 1].
pub fn polynomial(rng: &mut impl Rng, a: f64, b: f64, degree: usize) -> Component {
    let c: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let expr = c
        .iter()
        .enumerate()
        .map(|(j, cj)| match j {
            0 => format!("({cj:?})"),
            1 => format!("({cj:?})*t"),
            _ => format!("({cj:?})*t^{j}"),
        })
        .collect::<Vec<_>>()
        .join(" + ");
    let mean = c
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            let k = j as i32 + 1;
            cj * (b.powi(k) - a.powi(k)) / k as f64
        })
        .sum::<f64>()
        / (b - a);
    let cf = c.clone();
    Component {
        expr,
        f: Rc::new(move |t| {
            cf.iter()
                .enumerate()
                .map(|(j, cj)| cj * t.powi(j as i32))
                .sum()
        }),
        mean,
    }
}

/// p·cos(ωt) + q·sin(ωt).
pub fn trig(rng: &mut impl Rng, a: f64, b: f64) -> Component {
    let p: f64 = rng.gen_range(-1.0..1.0);
    let q: f64 = rng.gen_range(-1.0..1.0);
    let w: f64 = rng.gen_range(0.5..3.0);
    let expr = format!("({p:?})*cos(({w:?})*t) + ({q:?})*sin(({w:?})*t)");
    let mean = (p * ((w * b).sin() - (w * a).sin()) / w - q * ((w * b).cos() - (w * a).cos()) / w)
        / (b - a);
    Component {
        expr,
        f: Rc::new(move |t| p * (w * t).cos() + q * (w * t).sin()),
        mean,
    }
}

/// n random polynomials (degree ≤ 5) and trig sums on a random interval.
pub fn random_system(rng: &mut impl Rng, n: usize) -> System {
    let (a, b) = random_interval(rng);
    let parts = (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                let degree = rng.gen_range(1..=5);
                polynomial(rng, a, b, degree)
            } else {
                trig(rng, a, b)
            }
        })
        .collect();
    System { a, b, parts }
}

impl System {
    pub fn exprs(&self) -> Vec<Expr> {
        self.parts
            .iter()
            .map(|c| Expr::parse(&c.expr).unwrap())
            .collect()
    }

    pub fn measure(&self) -> MeasureSpec {
        MeasureSpec::interval(self.a, self.b).unwrap()
    }

    pub fn problem(&self) -> Problem {
        Problem::new(self.exprs(), self.measure())
    }

    pub fn means(&self) -> Vec<f64> {
        self.parts.iter().map(|c| c.mean).collect()
    }

    /// max_k |Σ wᵢ fₖ(tᵢ) − E fₖ| using the closed-form means.
    pub fn residual(&self, nodes: &[f64], weights: &[f64]) -> f64 {
        self.parts
            .iter()
            .map(|c| {
                let s: f64 = nodes.iter().zip(weights).map(|(t, w)| w * (c.f)(*t)).sum();
                (s - c.mean).abs()
            })
            .fold(0.0, f64::max)
    }
}
