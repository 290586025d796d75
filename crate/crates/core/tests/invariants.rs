//! Properties that must hold on every seeded instance.

use accelpd_core::harness::config::{resolve, RunConfig};
use accelpd_core::problems;
use accelpd_core::solvers::{self, Engine};
use accelpd_core::ProblemInstance;
use proptest::prelude::*;

fn certified(p: &ProblemInstance, algorithm: &str, schedule: serde_json::Value, gamma: &str, iters: usize) -> solvers::Trace {
    let cfg: RunConfig = serde_json::from_value(serde_json::json!({
        "problem": {"instance": p},
        "algorithm": algorithm,
        "schedule": schedule,
        "gamma": gamma,
        "max_iters": iters,
        "check_level": "full_inequality",
    }))
    .unwrap();
    let r = resolve(&cfg, p).unwrap();
    solvers::run(cfg.algorithm, p, &r.solve).unwrap()
}

fn assert_certified(trace: &solvers::Trace) {
    assert!(trace.lyapunov_monotone);
    assert!(trace.violations.is_empty(), "{:?}", trace.violations.first());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn apgd_certificates_hold(seed in 0u64..10_000, lam in 0.01f64..1.0) {
        let p = problems::gen_lasso_like(12, 10, lam, seed).unwrap();
        assert_certified(&certified(&p, "apgd", serde_json::json!({"regime": "apgd_sublinear"}), "inverse_lipschitz", 300));
    }

    #[test]
    fn apgd_capped_certificates_hold(seed in 0u64..10_000, cond in 2.0f64..1e4) {
        let p = problems::gen_strongly_convex(10, cond, seed).unwrap();
        assert_certified(&certified(&p, "apgd", serde_json::json!({"regime": "apgd_capped"}), "inverse_lipschitz", 300));
    }

    #[test]
    fn reg_s_certificates_hold(seed in 0u64..10_000, mu_g in prop_oneof![Just(0.0), 1e-3f64..1.0]) {
        let p = problems::gen_quadratic_reg_s(8, 5, mu_g, 100.0, seed).unwrap();
        let regime = if mu_g > 0.0 { "regS_capped" } else { "regS" };
        assert_certified(&certified(&p, "apapc", serde_json::json!({"regime": regime}), "corollary_S", 300));
    }

    #[test]
    fn reg_b_certificates_hold(seed in 0u64..10_000, nu in 0.1f64..=1.0) {
        let p = problems::gen_reg_b(8, 0.1, 100.0, seed).unwrap();
        assert_certified(&certified(&p, "apapc", serde_json::json!({"regime": "regB", "nu": nu}), "corollary_B", 300));
    }

    #[test]
    fn reg_c_certificates_hold(seed in 0u64..10_000) {
        let p = problems::gen_linconstrained(10, 4, 0.0, seed).unwrap();
        assert_certified(&certified(&p, "apapc", serde_json::json!({"regime": "regC"}), "corollary_C", 300));
    }

    #[test]
    fn resolution_is_pure(seed in 0u64..10_000) {
        let p = problems::gen_quadratic_reg_s(6, 4, 0.01, 10.0, seed).unwrap();
        let cfg: RunConfig = serde_json::from_value(serde_json::json!({
            "problem": {"instance": p},
            "algorithm": "apapc",
            "schedule": {"regime": "regS_capped"},
            "gamma": "corollary_S",
            "max_iters": 10,
        }))
        .unwrap();
        let a = resolve(&cfg, &p).unwrap();
        let b = resolve(&cfg, &p).unwrap();
        prop_assert_eq!(a.audit, b.audit);
        prop_assert_eq!(a.solve.schedule.materialize(20), b.solve.schedule.materialize(20));
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..10_000) {
        let p = problems::gen_linconstrained(8, 3, 0.1, seed).unwrap();
        let a = certified(&p, "apapc", serde_json::json!({"regime": "regC_capped"}), "corollary_C", 50);
        let b = certified(&p, "apapc", serde_json::json!({"regime": "regC_capped"}), "corollary_C", 50);
        prop_assert_eq!(a.records, b.records);
        prop_assert_eq!(a.final_state, b.final_state);
    }
}

#[test]
fn pgd_runs_without_a_schedule() {
    let p = problems::gen_lasso_like(8, 6, 0.1, 3).unwrap();
    let t = certified(&p, "pgd", serde_json::Value::Null, "inverse_lipschitz", 100);
    assert_eq!(t.engine, Engine::Pgd);
    assert!(t.lyapunov_monotone);
}
