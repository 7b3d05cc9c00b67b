use lowbound_core::kernel::SmoothingKernel;
use lowbound_core::smoothing::{AffineTerm, MaxAffine, SmoothedInstance};
use lowbound_core::space::NormSpec;
use proptest::prelude::*;

const N: usize = 6;

fn instance(p: f64, terms: &[(usize, bool, f64)]) -> SmoothedInstance<f64> {
    let space = NormSpec::new(p, N).unwrap();
    let kernel = SmoothingKernel::new(space).unwrap();
    let terms =
        terms.iter().map(|&(i, neg, b)| AffineTerm::signed_basis(i % N, if neg { -1.0 } else { 1.0 }, b)).collect();
    let g = MaxAffine::new(N, terms).unwrap();
    SmoothedInstance::new(g, kernel, 0.05, 1.0, 2.0).unwrap()
}

fn terms_strategy() -> impl Strategy<Value = Vec<(usize, bool, f64)>> {
    prop::collection::vec((0usize..N, any::<bool>(), -0.3f64..0.0), 1..6)
}

fn p_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(2.0), Just(4.0), Just(f64::INFINITY)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn sandwich(p in p_strategy(), terms in terms_strategy(), x in prop::collection::vec(-1.0f64..1.0, N)) {
        let inst = instance(p, &terms);
        let tol = inst.default_tol(&x).unwrap();
        let gx = inst.g().eval(&x).unwrap();
        let v = inst.eval(&x).unwrap().value;
        let rho = inst.kernel().rho();
        prop_assert!(v <= gx + 10.0 * tol);
        prop_assert!(v >= gx - inst.chi() * rho - 10.0 * tol);
    }

    #[test]
    fn gradient_matches_finite_differences(
        p in p_strategy(),
        terms in terms_strategy(),
        x in prop::collection::vec(-1.0f64..1.0, N),
    ) {
        let inst = instance(p, &terms);
        let g = inst.eval(&x).unwrap().gradient;
        let eps = 1e-6;
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..N {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += eps;
            b[j] -= eps;
            let fd = (inst.eval(&a).unwrap().value - inst.eval(&b).unwrap().value) / (2.0 * eps);
            prop_assert!((fd - g[j]).abs() <= 1e-4 * gnorm.max(1e-2), "j = {}: fd {} vs {}", j, fd, g[j]);
        }
    }

    #[test]
    fn smoothed_function_is_one_lipschitz(
        p in p_strategy(),
        terms in terms_strategy(),
        x in prop::collection::vec(-1.0f64..1.0, N),
        y in prop::collection::vec(-1.0f64..1.0, N),
    ) {
        let inst = instance(p, &terms);
        let d = lowbound_core::space::lp_norm(
            &x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>(),
            p,
        );
        let (fx, fy) = (inst.eval(&x).unwrap().value, inst.eval(&y).unwrap().value);
        prop_assert!((fx - fy).abs() <= d + 1e-9);
    }

    #[test]
    fn inner_minimizer_is_interior(p in p_strategy(), terms in terms_strategy(), x in prop::collection::vec(-1.0f64..1.0, N)) {
        let inst = instance(p, &terms);
        let h = inst.eval(&x).unwrap().inner_point;
        let u: Vec<f64> = h.iter().map(|v| v / inst.chi()).collect();
        prop_assert!(lowbound_core::space::lp_norm(&u, p) < 1.0);
    }
}
