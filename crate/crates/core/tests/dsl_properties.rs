use hhpool_core::heuristics::random::random_expr;
use hhpool_core::heuristics::{parse, parse_expr, HeuristicProgram, VAR_COUNT};
use hhpool_core::llm::{parse_program_response, parse_selection_response};
use hhpool_core::problems::ProblemKind;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind_of(b: bool) -> ProblemKind {
    if b {
        ProblemKind::Obpp
    } else {
        ProblemKind::Cvrp
    }
}

fn finite_or_extreme() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        Just(0.0),
        Just(-0.0),
        Just(1e300),
        Just(-1e300),
        Just(f64::MIN_POSITIVE),
        Just(1e-12),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_parse_round_trip(seed in any::<u64>(), depth in 1usize..7, obpp in any::<bool>()) {
        let kind = kind_of(obpp);
        let expr = random_expr(kind, depth, &mut ChaCha8Rng::seed_from_u64(seed));
        let text = expr.render();
        let back = parse_expr(&text, kind).unwrap();
        prop_assert_eq!(back.render(), text.clone());
        let program = HeuristicProgram::from_expr(kind, expr, "");
        prop_assert_eq!(parse(&text, kind).unwrap().id, program.id);
    }

    #[test]
    fn evaluation_is_total(seed in any::<u64>(), env in proptest::array::uniform11(finite_or_extreme()), obpp in any::<bool>()) {
        let expr = random_expr(kind_of(obpp), 6, &mut ChaCha8Rng::seed_from_u64(seed));
        let env: [f64; VAR_COUNT] = env;
        let v = expr.eval(&env);
        prop_assert!(v.is_finite() && v.abs() <= 1e18, "{} -> {}", expr.render(), v);
    }

    #[test]
    fn parsers_never_panic(text in ".{0,200}", k in 1usize..17) {
        let _ = parse_expr(&text, ProblemKind::Obpp);
        let _ = parse_program_response(&text, ProblemKind::Cvrp);
        if let Ok(i) = parse_selection_response(&text, k) {
            prop_assert!((1..=k).contains(&i));
        }
    }

    #[test]
    fn fenced_noise_never_panics(body in "[a-z0-9+*/()\\-. ,]{0,80}", prefix in "[A-Za-z ]{0,30}") {
        let text = format!("{prefix}\n```\n{body}\n```\n");
        if let Ok(p) = parse_program_response(&text, ProblemKind::Obpp) {
            prop_assert_eq!(parse(&p.render(), ProblemKind::Obpp).unwrap().id, p.id);
        }
    }
}
