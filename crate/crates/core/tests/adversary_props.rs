use lowbound_core::adversary::{replay_check, replay_check_on, run_session, AdversaryConfig};
use lowbound_core::methods::Method;
use lowbound_core::space::{Ball, NormSpec};
use proptest::prelude::*;

fn config(p: f64, n: usize, t: usize, kappa: f64, l: f64, r: f64) -> AdversaryConfig<f64> {
    AdversaryConfig::unit(NormSpec::new(p, n).unwrap(), t, kappa, l)
        .and_then(|c| AdversaryConfig::new(*c.space(), t, kappa, l, *c.kernel(), r))
        .unwrap()
}

fn methods(c: &AdversaryConfig<f64>) -> Vec<Method<f64>> {
    let r = c.radius();
    vec![
        Method::ConditionalGradient,
        Method::Accelerated { lipschitz: c.smooth_lipschitz() / (r * r) },
        Method::ProjectedSubgradient,
    ]
}

fn projected_ball(c: &AdversaryConfig<f64>, m: &Method<f64>) -> Ball<f64> {
    match m {
        Method::ConditionalGradient => c.ball().unwrap(),
        _ if c.space().is_inf() || c.space().p() == 2.0 => c.ball().unwrap(),
        _ => Ball::new(NormSpec::new(2.0, c.space().n()).unwrap(), c.radius()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_method_replays_and_meets_the_bound(
        p in prop_oneof![Just(2.0), Just(4.0), Just(f64::INFINITY)],
        t in 1usize..10,
        extra in 0usize..6,
        kappa in prop_oneof![Just(1.5), Just(2.0), 1.1f64..2.0],
        l in 0.5f64..3.0,
        r in prop_oneof![Just(1.0), 0.5f64..2.0],
    ) {
        let n = (t + extra).max(3);
        let c = config(p, n, t, kappa, l, r);
        for m in methods(&c) {
            let ball = projected_ball(&c, &m);
            let (hi, trace) = run_session(c, &m, &ball).unwrap();
            prop_assert!(replay_check_on(&hi, &m, &ball), "{} did not replay", m.name());
            prop_assert!(ball.contains(&trace.final_point, 1e-12).unwrap());
            let gap = hi.certified_gap(&trace.final_point).unwrap();
            prop_assert!(gap >= hi.bound() * (1.0 - 1e-9), "{}: gap {} < bound {}", m.name(), gap, hi.bound());
            for rep in hi.locality_reports(1e-12).unwrap() {
                prop_assert!(rep.agree());
            }
            // recorded answers follow the step floor
            for (k, ans) in hi.trace().answers().iter().enumerate() {
                let floor = -c.beta() * (k as f64 * c.delta() + c.chi() * c.kernel().rho());
                prop_assert!(ans.value >= floor - 1e-12 * c.beta());
            }
        }
    }

    #[test]
    fn sigma_is_injective_and_greedy(t in 2usize..12, seed in any::<u64>()) {
        let c = config(f64::INFINITY, 16, t, 2.0, 1.0, 1.0);
        let (hi, _) = run_session(c, &Method::ConditionalGradient, &c.ball().unwrap()).unwrap();
        let st = hi.trace();
        let mut seen = std::collections::HashSet::new();
        prop_assert!(st.sigma().iter().all(|s| seen.insert(*s) && *s < t));
        for (k, x) in st.queries().iter().enumerate() {
            let s = st.sigma()[k];
            let best = (0..t)
                .filter(|i| !st.sigma()[..k].contains(i))
                .map(|i| x[i].abs())
                .fold(0.0f64, f64::max);
            prop_assert_eq!(st.xi()[k] * x[s], best);
        }
        let _ = seed;
    }
}

#[test]
fn replay_distinguishes_methods() {
    let c = config(2.0, 12, 6, 2.0, 1.0, 1.0);
    let (hi, _) = run_session(c, &Method::ConditionalGradient, &c.ball().unwrap()).unwrap();
    assert!(replay_check(&hi, &Method::ConditionalGradient));
    assert!(!replay_check(&hi, &Method::ProjectedSubgradient));
}
