use lowbound_core::kernel::SmoothingKernel;
use lowbound_core::space::{conjugate, lp_norm, Ball, NormSpec};
use proptest::prelude::*;

fn p_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0), Just(4.0), Just(f64::INFINITY)]
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn holder_inequality(p in p_strategy(), x in vec_strategy(6), y in vec_strategy(6)) {
        let q = conjugate(p);
        let ip: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!(ip.abs() <= lp_norm(&x, p) * lp_norm(&y, q) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn lmo_attains_support_and_is_feasible(p in p_strategy(), c in vec_strategy(5), probe in vec_strategy(5)) {
        let ball = Ball::new(NormSpec::new(p, 5).unwrap(), 1.5).unwrap();
        let s = ball.lmo(&c).unwrap();
        prop_assert!(ball.contains(&s, 1e-12).unwrap());
        let v: f64 = c.iter().zip(&s).map(|(a, b)| a * b).sum();
        prop_assert!((v - ball.support_min(&c).unwrap()).abs() <= 1e-10 * (1.0 + v.abs()));
        // any feasible point does no better
        let scale = 1.5 / lp_norm(&probe, p).max(1.5);
        let w: f64 = c.iter().zip(&probe).map(|(a, b)| a * b * scale).sum();
        prop_assert!(v <= w + 1e-10 * (1.0 + w.abs()));
    }

    #[test]
    fn projection_is_idempotent(inf in any::<bool>(), x in vec_strategy(4)) {
        let p = if inf { f64::INFINITY } else { 2.0 };
        let ball = Ball::new(NormSpec::new(p, 4).unwrap(), 1.0).unwrap();
        let y = ball.project(&x).unwrap();
        prop_assert!(ball.contains(&y, 1e-12).unwrap());
        let z = ball.project(&y).unwrap();
        for (a, b) in y.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn kernel_gradient_matches_finite_differences(
        p in prop_oneof![Just(2.0), Just(4.0), Just(f64::INFINITY)],
        h in vec_strategy(5),
    ) {
        let space = NormSpec::new(p, 5).unwrap();
        let k = SmoothingKernel::new(space).unwrap();
        let h: Vec<f64> = h.iter().map(|v| v / 3.0).collect();
        let g = k.grad(&h).unwrap();
        let eps = 1e-6;
        for j in 0..5 {
            let mut a = h.clone();
            let mut b = h.clone();
            a[j] += eps;
            b[j] -= eps;
            let fd = (k.value(&a).unwrap() - k.value(&b).unwrap()) / (2.0 * eps);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "j = {}: {} vs {}", j, fd, g[j]);
        }
    }

    #[test]
    fn gradient_inversion_round_trip(p in prop_oneof![Just(2.0), Just(4.0), Just(f64::INFINITY)], h in vec_strategy(6)) {
        let k = SmoothingKernel::new(NormSpec::new(p, 6).unwrap()).unwrap();
        let g = k.grad(&h).unwrap();
        let back = k.grad_invert(&g).unwrap();
        for (a, b) in back.iter().zip(&h) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn kernel_properties_hold(
        p in prop_oneof![Just(2.0), Just(4.0), Just(f64::INFINITY)],
        h in vec_strategy(8),
        e in vec_strategy(8),
    ) {
        let space = NormSpec::new(p, 8).unwrap();
        let k = SmoothingKernel::new(space).unwrap();
        let zero = vec![0.0; 8];
        prop_assert_eq!(k.value(&zero).unwrap(), 0.0);
        prop_assert!(k.grad(&zero).unwrap().iter().all(|&v| v == 0.0));
        let hn = lp_norm(&h, p);
        prop_assume!(hn > 0.0);
        let boundary: Vec<f64> = h.iter().map(|v| v / hn).collect();
        prop_assert!(k.value(&boundary).unwrap() > 1.0);
        let inside: Vec<f64> = boundary.iter().map(|v| v * 0.9).collect();
        let quad = k.hessian_quadform(&inside, &e).unwrap();
        prop_assert!(quad <= k.m_phi() * lp_norm(&e, p).powi(2));
    }
}
