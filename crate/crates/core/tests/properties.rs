mod common;

use meanrule::caratheodory::prune;
use meanrule::domain::DiscreteAtom;
use meanrule::expr::{BinOp, Const, Func, Var};
use meanrule::integrate::{
    mean_vector, riemann_atoms, IntegrateError, IntegrationOptions, RiemannOptions,
};
use meanrule::{
    reduce, synthesize, verify, ConvexCombination, DomainPoint, Expr, MeasureSpec, Problem,
    WeightedAtom,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-10.0..10.0f64),
        (0u32..20).prop_map(f64::from),
        Just(0.1),
        Just(1e-7),
        Just(2.5e20),
        Just(-3.0),
    ]
}

fn ast() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        number().prop_map(Expr::Num),
        Just(Expr::Const(Const::Pi)),
        Just(Expr::Const(Const::E)),
        Just(Expr::Var(Var::T)),
        (1u8..=3).prop_map(|k| Expr::Var(Var::X(k))),
    ];
    let op = prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Pow),
    ];
    let func = proptest::sample::select(Func::ALL.to_vec());
    leaf.prop_recursive(5, 40, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::negate),
            (op.clone(), inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::binary(o, a, b)),
            (func.clone(), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

fn bits(r: Result<f64, meanrule::EvalError>) -> Result<u64, meanrule::EvalError> {
    r.map(f64::to_bits)
}

fn combination(seed: u64, m: usize, n: usize) -> ConvexCombination {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let atoms: Vec<WeightedAtom> = raw
        .iter()
        .map(|w| {
            let image: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            WeightedAtom {
                point: DomainPoint::new(image.clone()),
                weight: w / total,
                image,
            }
        })
        .collect();
    let target = (0..n)
        .map(|k| atoms.iter().map(|a| a.weight * a.image[k]).sum())
        .collect();
    ConvexCombination::new(atoms, target)
}

fn direct_drift(c: &ConvexCombination) -> f64 {
    (0..c.dimension())
        .map(|k| {
            let s: f64 = c.atoms.iter().map(|a| a.weight * a.image[k]).sum();
            (s - c.target[k]).abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_expressions_reparse_to_the_same_values(
        e in ast(),
        p in proptest::collection::vec(-3.0..3.0f64, 3),
    ) {
        let printed = e.to_string();
        let reparsed = Expr::parse(&printed).unwrap();
        prop_assert_eq!(bits(e.eval(&p)), bits(reparsed.eval(&p)), "{}", printed);
        prop_assert_eq!(reparsed.to_string(), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn prune_invariants(seed in any::<u64>(), m in 1usize..40, n in 1usize..5) {
        let input = combination(seed, m, n);
        let out = prune(input.clone()).unwrap();
        prop_assert!(out.len() <= n + 1);
        prop_assert!(out.atoms.iter().all(|a| a.weight >= 0.0));
        prop_assert!((out.atoms.iter().map(|a| a.weight).sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(direct_drift(&out) <= 1e-10);
        // Every surviving atom comes from the input.
        for a in &out.atoms {
            prop_assert!(input.atoms.iter().any(|b| b.point == a.point));
        }
        prop_assert_eq!(prune(out.clone()).unwrap(), out);
    }

    #[test]
    fn disjoint_events_add(seed in any::<u64>(), count in 1usize..30, split in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms: Vec<(DomainPoint, f64)> = (0..count)
            .map(|i| (DomainPoint::scalar(i as f64), rng.gen_range(0.0..5.0)))
            .collect();
        let Ok(m) = MeasureSpec::discrete(atoms) else { return Ok(()) };
        let opts = Default::default();
        let label = |x: &[f64]| (split >> (x[0] as u64 % 64)) & 3;
        let pa = m.prob(|x| label(x) == 0, &opts).unwrap();
        let pb = m.prob(|x| label(x) == 1, &opts).unwrap();
        let pab = m.prob(|x| label(x) <= 1, &opts).unwrap();
        prop_assert!((pab - pa - pb).abs() <= 1e-12);
        prop_assert!(pa >= 0.0 && pb >= 0.0);
        prop_assert_eq!(m.prob(|_| true, &opts).unwrap(), 1.0);
        if let meanrule::domain::DomainKind::Discrete { atoms } = m.kind() {
            let sum: f64 = atoms.iter().map(|a: &DiscreteAtom| a.mass).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mean_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::random_system(&mut rng, 2);
        let (f, g) = (&sys.parts[0].expr, &sys.parts[1].expr);
        let combo = Expr::parse(&format!("({a:?})*({f}) + ({b:?})*({g})")).unwrap();
        let tol = 1e-9;
        let opts = IntegrationOptions::with_tol(tol);
        let m = sys.measure();
        let parts = mean_vector(&sys.exprs(), &m, &opts).unwrap().values;
        let whole = mean_vector(&[combo], &m, &opts).unwrap().values[0];
        let scale = 1.0 + a.abs() + b.abs();
        prop_assert!((whole - (a * parts[0] + b * parts[1])).abs() <= 2.0 * tol * scale);
    }

    #[test]
    fn nonnegative_functions_have_nonnegative_means(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::random_system(&mut rng, 1);
        let f = Expr::parse(&format!("({})^2", sys.parts[0].expr)).unwrap();
        let mean = mean_vector(&[f], &sys.measure(), &IntegrationOptions::default()).unwrap().values[0];
        prop_assert!(mean >= -1e-9);
    }

    #[test]
    fn reduce_never_grows_the_residual(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::random_system(&mut rng, n);
        let fns = sys.exprs();
        let m = sys.measure();
        let atoms = match riemann_atoms(&fns, &m, &sys.means(), &RiemannOptions::new(1024, 1e-9)) {
            Ok(c) => c,
            Err(IntegrateError::ResolutionTooSmall { best, .. }) => *best,
            Err(e) => panic!("{e}"),
        };
        let input = prune(atoms).unwrap();
        let scale = input.target.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let before = input.residual;
        let out = reduce(input, &fns, &m).unwrap();
        if out.reduced {
            prop_assert!(out.combination.len() <= n);
        }
        prop_assert!(out.combination.residual <= before + 1e-8 * (1.0 + scale));
        prop_assert!(out.combination.atoms.iter().all(|a| a.weight >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn end_to_end_random_systems(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::random_system(&mut rng, n);
        let rule = synthesize(&sys.problem()).unwrap();
        prop_assert!(rule.len() <= n, "{} nodes", rule.len());
        prop_assert!(rule.reduced);
        let nodes: Vec<f64> = rule.nodes.iter().map(|p| p.0[0]).collect();
        prop_assert!(nodes.iter().all(|t| sys.a <= *t && *t <= sys.b));
        prop_assert!(sys.residual(&nodes, &rule.weights) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn affine_images_still_meet_tolerance(
        seed in any::<u64>(),
        n in 1usize..4,
        a in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64],
        b in -2.0..2.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::random_system(&mut rng, n);
        let base = sys.problem();
        let rule = synthesize(&base).unwrap();
        prop_assert!(verify(&rule, &base).unwrap().passed);

        let moved: Vec<Expr> = sys
            .parts
            .iter()
            .map(|c| Expr::parse(&format!("({a:?})*({}) + ({b:?})", c.expr)).unwrap())
            .collect();
        let problem = Problem::new(moved, sys.measure());
        let rule = synthesize(&problem).unwrap();
        let report = verify(&rule, &problem).unwrap();
        prop_assert!(report.passed, "{:?}", report.failures);
    }
}
