//! The resisting oracle.
//!
//! An [`AdversaryState`] answers a method's queries one at a time. Query `t`
//! (counted from zero) picks the unused coordinate `s` among the first `T`
//! with the largest `|x_s|`, appends the term `xi * x_s - t * delta` with
//! `xi = sign(x_s)`, and answers with the smoothed `(t + 1)`-term function.
//! Because every later term sits at least `delta` below the running maximum
//! near the earlier queries, the final `T`-term function reproduces every
//! earlier answer, so the method would have produced the same trajectory on
//! it. [`replay_check`] verifies that bit for bit.
//!
//! Instances for a ball of radius `R` are the unit-ball instance with
//! Lipschitz constant `L R^kappa` composed with `x -> x / R`.

use crate::error::{check_dim, Error, Result};
use crate::kernel::SmoothingKernel;
use crate::methods::{same_points, Method, MethodTrace};
use crate::oracle::{FirstOrderOracle, OracleAnswer, ScaledOracle};
use crate::scalar::{sign_nonneg, Scalar};
use crate::smoothing::{check_locality, AffineTerm, LocalityReport, MaxAffine, SmoothedInstance};
use crate::space::{Ball, NormSpec};

/// Parameters of one adversary session, with the derived step sizes frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig<S> {
    space: NormSpec<S>,
    horizon: usize,
    kappa: S,
    lipschitz: S,
    kernel: SmoothingKernel<S>,
    radius: S,
    big_delta: S,
    delta: S,
    chi: S,
    beta: S,
    tol: Option<S>,
}

impl<S: Scalar> AdversaryConfig<S> {
    /// Validates the configuration and computes `Delta = T^{-1/p}`,
    /// `delta = Delta / (2T)`, `chi = Delta / (4 T rho)` and the unit-ball
    /// scale `beta = L R^kappa Delta^{kappa-1} / (2^kappa (T rho M)^{kappa-1})`.
    pub fn new(
        space: NormSpec<S>,
        horizon: usize,
        kappa: S,
        lipschitz: S,
        kernel: SmoothingKernel<S>,
        radius: S,
    ) -> Result<Self> {
        if space.p() < S::two() {
            return Err(Error::InvalidConfig(format!("the direct construction needs p >= 2, got p = {}", space.p())));
        }
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon T must be positive".into()));
        }
        if horizon > space.n() {
            return Err(Error::InvalidConfig(format!("T = {horizon} exceeds n = {}", space.n())));
        }
        if kernel.space() != &space {
            return Err(Error::InvalidConfig(format!(
                "kernel built for (p = {}, n = {}) but the space is (p = {}, n = {})",
                kernel.space().p(),
                kernel.dim(),
                space.p(),
                space.n()
            )));
        }
        if !(kappa > S::one() && kappa <= S::two()) {
            return Err(Error::InvalidConfig(format!("kappa = {kappa} must lie in (1, 2]")));
        }
        if !(lipschitz > S::zero() && lipschitz.is_finite()) {
            return Err(Error::InvalidConfig(format!("L = {lipschitz} must be positive")));
        }
        if !(radius > S::zero() && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("R = {radius} must be positive")));
        }
        let t = S::from_usize_lossy(horizon);
        let big_delta = if space.is_inf() { S::one() } else { t.powf(-S::one() / space.p()) };
        let rho = kernel.rho();
        let m = kernel.m_phi();
        let delta = big_delta / (S::two() * t);
        let chi = big_delta / (S::lit(4.0) * t * rho);
        let km1 = kappa - S::one();
        let base_l = lipschitz * radius.powf(kappa);
        let beta = base_l * big_delta.powf(km1) / (S::two().powf(kappa) * (t * rho * m).powf(km1));
        Ok(Self { space, horizon, kappa, lipschitz, kernel, radius, big_delta, delta, chi, beta, tol: None })
    }

    /// Configuration on the unit ball with the default kernel for `space`.
    pub fn unit(space: NormSpec<S>, horizon: usize, kappa: S, lipschitz: S) -> Result<Self> {
        Self::new(space, horizon, kappa, lipschitz, SmoothingKernel::new(space)?, S::one())
    }

    /// Fixes the inner smoothing tolerance of every instance the session builds.
    pub fn with_tol(mut self, tol: S) -> Result<Self> {
        if !(tol > S::zero()) {
            return Err(Error::InvalidConfig(format!("tolerance {tol} must be positive")));
        }
        self.tol = Some(tol);
        Ok(self)
    }

    pub fn tol(&self) -> Option<S> {
        self.tol
    }

    pub fn space(&self) -> &NormSpec<S> {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn lipschitz(&self) -> S {
        self.lipschitz
    }

    pub fn kernel(&self) -> &SmoothingKernel<S> {
        &self.kernel
    }

    pub fn radius(&self) -> S {
        self.radius
    }

    pub fn big_delta(&self) -> S {
        self.big_delta
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn chi(&self) -> S {
        self.chi
    }

    /// Scale of the unit-ball instance (includes the `R^kappa` factor).
    pub fn beta(&self) -> S {
        self.beta
    }

    /// Lipschitz constant of the unit-ball instance, `L R^kappa`.
    pub fn base_lipschitz(&self) -> S {
        self.lipschitz * self.radius.powf(self.kappa)
    }

    /// Gradient Lipschitz constant `beta M / chi` of the unit-ball instance,
    /// valid for every `kappa`; divide by `R^2` for the radius-`R` instance.
    pub fn smooth_lipschitz(&self) -> S {
        self.beta * self.kernel.m_phi() / self.chi
    }

    /// The feasible set `{||x||_p <= R}`.
    pub fn ball(&self) -> Result<Ball<S>> {
        Ball::new(self.space, self.radius)
    }

    fn smoothed(&self, g: MaxAffine<S>) -> Result<SmoothedInstance<S>> {
        let inst =
            SmoothedInstance::with_lipschitz(g, self.kernel, self.chi, self.beta, self.kappa, self.base_lipschitz())?;
        Ok(match self.tol {
            Some(t) => inst.with_tol(t),
            None => inst,
        })
    }
}

/// `R^kappa Delta^kappa L / (2^{kappa+1} (rho M)^{kappa-1} T^{kappa-1})`.
pub fn lower_bound<S: Scalar>(config: &AdversaryConfig<S>) -> S {
    let km1 = config.kappa - S::one();
    let t = S::from_usize_lossy(config.horizon);
    let rm = config.kernel.rho() * config.kernel.m_phi();
    (config.radius * config.big_delta).powf(config.kappa) * config.lipschitz
        / (S::two().powf(config.kappa + S::one()) * rm.powf(km1) * t.powf(km1))
}

/// A running session. Implements [`FirstOrderOracle`]; each query grows the
/// hidden function by one term.
#[derive(Debug, Clone)]
pub struct AdversaryState<S> {
    config: AdversaryConfig<S>,
    sigma: Vec<usize>,
    xi: Vec<S>,
    used: Vec<bool>,
    g: Option<MaxAffine<S>>,
    queries: Vec<Vec<S>>,
    answers: Vec<OracleAnswer<S>>,
}

impl<S: Scalar> AdversaryState<S> {
    pub fn new(config: AdversaryConfig<S>) -> Self {
        let horizon = config.horizon;
        Self {
            config,
            sigma: Vec::with_capacity(horizon),
            xi: Vec::with_capacity(horizon),
            used: vec![false; horizon],
            g: None,
            queries: Vec::with_capacity(horizon),
            answers: Vec::with_capacity(horizon),
        }
    }

    /// Session obtained by answering `queries` in order.
    pub fn from_queries(config: AdversaryConfig<S>, queries: &[Vec<S>]) -> Result<Self> {
        let mut state = Self::new(config);
        for q in queries {
            state.answer_query(q)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &AdversaryConfig<S> {
        &self.config
    }

    /// Number of answered queries.
    pub fn steps(&self) -> usize {
        self.sigma.len()
    }

    /// Chosen coordinates, zero-based.
    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn xi(&self) -> &[S] {
        &self.xi
    }

    pub fn queries(&self) -> &[Vec<S>] {
        &self.queries
    }

    pub fn answers(&self) -> &[OracleAnswer<S>] {
        &self.answers
    }

    /// Unused index among the first `T` maximizing `|y_i|`, smallest index on ties.
    fn select(&self, y: &[S]) -> usize {
        let mut best = None;
        let mut best_abs = S::neg_infinity();
        for (i, &v) in y.iter().take(self.config.horizon).enumerate() {
            if !self.used[i] && v.abs() > best_abs {
                best = Some(i);
                best_abs = v.abs();
            }
        }
        best.expect("an unused index exists while t < T")
    }

    /// Answers `x` with the smoothed function that includes the term chosen
    /// at `x`.
    pub fn answer_query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        let t = self.steps();
        if t == self.config.horizon {
            return Err(Error::BudgetExhausted(self.config.horizon));
        }
        check_dim(self.config.space.n(), x.len())?;
        let r = self.config.radius;
        let y: Vec<S> = x.iter().map(|&v| v / r).collect();
        let s = self.select(&y);
        let sign = sign_nonneg(y[s]);
        let term = AffineTerm::signed_basis(s, sign, -S::from_usize_lossy(t) * self.config.delta);
        let g = match self.g.take() {
            None => MaxAffine::new(self.config.space.n(), vec![term])?,
            Some(mut g) => {
                g.push(term)?;
                g
            }
        };
        let inst = self.config.smoothed(g)?;
        let result = inst.eval(&y);
        self.g = Some(inst.g().clone());
        let mut ans = result?;
        for v in &mut ans.gradient {
            *v /= r;
        }
        self.used[s] = true;
        self.sigma.push(s);
        self.xi.push(sign);
        self.queries.push(x.to_vec());
        self.answers.push(ans.clone());
        Ok(ans)
    }

    /// Builds the final instance and its certificate. Fails unless all `T`
    /// queries were answered.
    pub fn finalize(self) -> Result<HardInstance<S>> {
        let horizon = self.config.horizon;
        if self.steps() < horizon {
            return Err(Error::Incomplete { done: self.steps(), budget: horizon });
        }
        let cfg = self.config;
        let g = self.g.clone().expect("T >= 1 terms");
        let f = cfg.smoothed(g)?;
        let mut certificate = vec![S::zero(); cfg.space.n()];
        for (&s, &xi) in self.sigma.iter().zip(&self.xi) {
            certificate[s] = -xi * cfg.radius * cfg.big_delta;
        }
        let hi = HardInstance { f, certificate, bound: lower_bound(&cfg), trace: self };
        let value = hi.eval(&hi.certificate)?.value;
        let target = -cfg.beta * cfg.big_delta;
        let slack = S::lit(1e-9) * S::one().max(target.abs());
        if value > target + slack {
            return Err(Error::Numerical {
                what: format!("certificate value {value} above -beta * Delta = {target}"),
                residual: (value - target).as_f64(),
            });
        }
        Ok(hi)
    }
}

impl<S: Scalar> FirstOrderOracle<S> for AdversaryState<S> {
    fn dim(&self) -> usize {
        self.config.space.n()
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        self.answer_query(x)
    }
}

/// The finished instance `f^T(x) = beta S_chi[g^T](x / R)` with a certificate
/// point and the lower bound it realizes.
#[derive(Debug, Clone)]
pub struct HardInstance<S> {
    f: SmoothedInstance<S>,
    certificate: Vec<S>,
    bound: S,
    trace: AdversaryState<S>,
}

impl<S: Scalar> HardInstance<S> {
    /// Unit-ball instance; see [`HardInstance::oracle`] for the radius-`R` one.
    pub fn unit_instance(&self) -> &SmoothedInstance<S> {
        &self.f
    }

    pub fn config(&self) -> &AdversaryConfig<S> {
        &self.trace.config
    }

    pub fn certificate(&self) -> &[S] {
        &self.certificate
    }

    pub fn bound(&self) -> S {
        self.bound
    }

    pub fn trace(&self) -> &AdversaryState<S> {
        &self.trace
    }

    /// Static oracle for `f^T` on the radius-`R` ball.
    pub fn oracle(&self) -> ScaledOracle<SmoothedInstance<S>, S> {
        ScaledOracle::new(self.f.clone(), self.trace.config.radius)
    }

    pub fn eval(&self, x: &[S]) -> Result<OracleAnswer<S>> {
        self.oracle().query(x)
    }

    /// `f^T(x) - f^T(x_*)`, a lower bound on the optimality gap at `x`.
    pub fn certified_gap(&self, x: &[S]) -> Result<S> {
        Ok(self.eval(x)?.value - self.eval(&self.certificate)?.value)
    }

    /// Smoothed `k`-term prefix `f^k` on the unit ball.
    pub fn prefix_instance(&self, k: usize) -> Result<SmoothedInstance<S>> {
        self.f.with_function(self.f.g().prefix(k)?)
    }

    /// For every recorded query `x_k`, compares `f^{k+1}` (the function that
    /// answered it) with `f^T` at `x_k` on the unit ball.
    pub fn locality_reports(&self, tol: S) -> Result<Vec<LocalityReport<S>>> {
        let r = self.trace.config.radius;
        self.trace
            .queries
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let y: Vec<S> = x.iter().map(|&v| v / r).collect();
                check_locality(&self.prefix_instance(k + 1)?, self.f.g(), &y, tol)
            })
            .collect()
    }
}

/// Runs `method` against a fresh session over `ball` and finalizes it.
pub fn run_session<S: Scalar>(
    config: AdversaryConfig<S>,
    method: &Method<S>,
    ball: &Ball<S>,
) -> Result<(HardInstance<S>, MethodTrace<S>)> {
    let mut state = AdversaryState::new(config);
    let trace = method.run(&mut state, ball, config.horizon)?;
    Ok((state.finalize()?, trace))
}

/// Reruns `method` on the static `f^T` over the configured ball and reports
/// whether it queries exactly the recorded points.
pub fn replay_check<S: Scalar>(hi: &HardInstance<S>, method: &Method<S>) -> bool {
    match hi.config().ball() {
        Ok(ball) => replay_check_on(hi, method, &ball),
        Err(_) => false,
    }
}

/// [`replay_check`] over an explicit feasible set.
pub fn replay_check_on<S: Scalar>(hi: &HardInstance<S>, method: &Method<S>, ball: &Ball<S>) -> bool {
    let mut oracle = hi.oracle();
    match method.run(&mut oracle, ball, hi.config().horizon) {
        Ok(trace) => same_points(&trace.queries, &hi.trace.queries),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64, n: usize, t: usize, kappa: f64, l: f64, r: f64) -> AdversaryConfig<f64> {
        let space = NormSpec::new(p, n).unwrap();
        AdversaryConfig::new(space, t, kappa, l, SmoothingKernel::new(space).unwrap(), r).unwrap()
    }

    #[test]
    fn derived_parameters() {
        let c = cfg(f64::INFINITY, 16, 10, 2.0, 1.0, 1.0);
        assert_eq!(c.big_delta(), 1.0);
        assert!((c.delta() - 0.05).abs() < 1e-16);
        assert!((c.chi() - 0.025).abs() < 1e-16);
        let m = c.kernel().m_phi();
        assert!((c.beta() - 1.0 / (40.0 * m)).abs() < 1e-15 * c.beta());

        let c = cfg(2.0, 8, 4, 2.0, 1.0, 1.0);
        assert!((c.big_delta() - 0.5).abs() < 1e-16);
        assert!((c.delta() - 1.0 / 16.0).abs() < 1e-16);
        assert!((c.chi() - 1.0 / 32.0).abs() < 1e-16);
    }

    #[test]
    fn config_errors() {
        let space = NormSpec::new(f64::INFINITY, 4).unwrap();
        let k = SmoothingKernel::new(space).unwrap();
        assert!(AdversaryConfig::new(space, 5, 2.0, 1.0, k, 1.0).is_err());
        let other = SmoothingKernel::new(NormSpec::new(f64::INFINITY, 5).unwrap()).unwrap();
        assert!(AdversaryConfig::new(space, 3, 2.0, 1.0, other, 1.0).is_err());
        assert!(AdversaryConfig::new(space, 3, 1.0, 1.0, k, 1.0).is_err());
    }

    #[test]
    fn selection_rules() {
        let mut st = AdversaryState::new(cfg(2.0, 2, 2, 2.0, 1.0, 1.0));
        st.answer_query(&[0.0, 0.0]).unwrap();
        assert_eq!(st.sigma(), &[0]);
        assert_eq!(st.xi(), &[1.0]);
        st.answer_query(&[-0.3, 0.5]).unwrap();
        assert_eq!(st.sigma(), &[0, 1]);
        assert_eq!(st.xi(), &[1.0, 1.0]);
        assert_eq!(st.answer_query(&[0.0, 0.0]), Err(Error::BudgetExhausted(2)));
    }

    #[test]
    fn negative_coordinate_gives_negative_sign() {
        let mut st = AdversaryState::new(cfg(f64::INFINITY, 5, 3, 2.0, 1.0, 1.0));
        st.answer_query(&[0.1, -0.7, 0.7, 0.0, 0.0]).unwrap();
        assert_eq!(st.sigma(), &[1]);
        assert_eq!(st.xi(), &[-1.0]);
        st.answer_query(&[0.1, -0.7, 0.7, 0.0, 0.0]).unwrap();
        assert_eq!(st.sigma(), &[1, 2]);
    }

    #[test]
    fn answers_respect_floor() {
        let c = cfg(f64::INFINITY, 8, 6, 2.0, 1.0, 1.0);
        let mut st = AdversaryState::new(c);
        for t in 0..6 {
            let x: Vec<f64> = (0..8).map(|i| ((i * 7 + t * 3) % 5) as f64 * 0.2 - 0.4).collect();
            let ans = st.answer_query(&x).unwrap();
            let floor = -c.beta() * (t as f64 * c.delta() + c.chi() * c.kernel().rho());
            assert!(ans.value >= floor - 1e-15);
        }
    }

    #[test]
    fn finalize_requires_full_run() {
        let mut st = AdversaryState::new(cfg(f64::INFINITY, 4, 2, 2.0, 1.0, 1.0));
        st.answer_query(&[0.0; 4]).unwrap();
        assert!(matches!(st.finalize(), Err(Error::Incomplete { done: 1, budget: 2 })));
    }

    #[test]
    fn certificate_in_box() {
        let c = cfg(f64::INFINITY, 4, 2, 2.0, 1.0, 1.0);
        let mut st = AdversaryState::new(c);
        st.answer_query(&[0.0; 4]).unwrap();
        st.answer_query(&[0.2, 0.1, 0.0, 0.0]).unwrap();
        let hi = st.finalize().unwrap();
        assert_eq!(hi.certificate(), &[-1.0, -1.0, 0.0, 0.0]);
        assert_eq!(hi.unit_instance().g().eval(hi.certificate()).unwrap(), -1.0);
        assert!((hi.bound() - 1.0 / (8.0 * c.kernel().m_phi() * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn certificate_in_euclidean_ball() {
        let c = cfg(2.0, 6, 4, 2.0, 1.0, 1.0);
        let mut st = AdversaryState::new(c);
        for k in 0..4 {
            let mut x = vec![0.0; 6];
            x[k] = -0.1;
            st.answer_query(&x).unwrap();
        }
        let hi = st.finalize().unwrap();
        let xs = hi.certificate();
        assert!((crate::space::lp_norm(xs, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(&xs[..4], &[0.5; 4]);
        assert!(hi.unit_instance().g().eval(xs).unwrap() <= -0.5);
    }

    #[test]
    fn bound_formulas() {
        let c = cfg(f64::INFINITY, 16, 8, 2.0, 1.0, 1.0);
        let m = c.kernel().m_phi();
        assert!((lower_bound(&c) - 1.0 / (8.0 * m * 8.0)).abs() < 1e-16);
        let c = cfg(2.0, 16, 8, 2.0, 1.0, 1.0);
        assert!((lower_bound(&c) - 1.0 / (8.0 * 4.0 * 64.0)).abs() < 1e-16);
        for kappa in [1.5, 2.0] {
            let a = lower_bound(&cfg(4.0, 16, 8, kappa, 1.0, 1.0));
            let b = lower_bound(&cfg(4.0, 16, 8, kappa, 1.0, 2.0));
            assert!((b / a - 2f64.powf(kappa)).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_session_replays_and_realizes_bound() {
        for (p, kappa, r) in [(f64::INFINITY, 2.0, 1.0), (2.0, 2.0, 1.0), (4.0, 1.5, 2.0)] {
            let c = cfg(p, 12, 6, kappa, 1.0, r);
            let ball = c.ball().unwrap();
            let (hi, tr) = run_session(c, &Method::ConditionalGradient, &ball).unwrap();
            assert!(replay_check(&hi, &Method::ConditionalGradient), "p = {p}");
            let gap = hi.certified_gap(&tr.final_point).unwrap();
            assert!(gap >= hi.bound() * (1.0 - 1e-9), "p = {p}: {gap} < {}", hi.bound());
        }
    }

    #[test]
    fn single_step_replay_is_trivial() {
        let c = cfg(2.0, 4, 1, 2.0, 1.0, 1.0);
        let ball = c.ball().unwrap();
        let (hi, _) = run_session(c, &Method::ProjectedSubgradient, &ball).unwrap();
        assert!(replay_check(&hi, &Method::ConditionalGradient));
        assert!(replay_check(&hi, &Method::ProjectedSubgradient));
    }

    #[test]
    fn other_method_does_not_replay() {
        let c = cfg(f64::INFINITY, 10, 5, 2.0, 1.0, 1.0);
        let ball = c.ball().unwrap();
        let (hi, _) = run_session(c, &Method::ConditionalGradient, &ball).unwrap();
        assert!(!replay_check(&hi, &Method::ProjectedSubgradient));
    }

    #[test]
    fn locality_holds_along_trace() {
        let c = cfg(f64::INFINITY, 10, 5, 2.0, 1.0, 1.0);
        let ball = c.ball().unwrap();
        let l = c.smooth_lipschitz();
        let (hi, _) = run_session(c, &Method::Accelerated { lipschitz: l }, &ball).unwrap();
        for rep in hi.locality_reports(1e-12).unwrap() {
            assert!(rep.agree(), "{rep:?}");
        }
    }
}
