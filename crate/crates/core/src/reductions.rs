//! Reductions that extend the construction beyond `p >= 2`.
//!
//! For `1 <= p < 2` a random `T`-dimensional subspace of `R^n` is nearly
//! Euclidean in `||.||_p`. Writing `Q` for an orthonormal basis of it,
//! `G = k Q^T` maps the unit `lp` ball onto a set containing an `l_inf` ball
//! of radius `k / max_{y in {-1,1}^T} ||Q y||_p`, and has rows with
//! `||g_i||_q <= 1`. The `l_inf` hard instance `f` on `R^T` then lifts to
//! `f(G x)` without losing smoothness.
//!
//! The matrix embedding `F(X) = f(diag X)` carries a vector instance to the
//! Schatten-`p` ball of `m x m` matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::adversary::{AdversaryConfig, AdversaryState, HardInstance};
use crate::error::{check_dim, Error, Result};
use crate::kernel::SmoothingKernel;
use crate::methods::{same_points, Method, MethodTrace};
use crate::oracle::{FirstOrderOracle, OracleAnswer};
use crate::scalar::{dot, Scalar};
use crate::space::{conjugate, lp_norm, Ball, NormSpec};

const MAX_ATTEMPTS: usize = 5;
const MAX_DISTORTION: f64 = 4.0;
const GREEDY_STARTS: usize = 64;

/// Linear map `G = k Q^T : R^n -> R^T` built from a random section.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftMap<S> {
    p: S,
    n: usize,
    horizon: usize,
    /// Row-major `T x n`.
    g: Vec<S>,
    scale: S,
    inner: S,
    outer: S,
    sign_outer: S,
    seed: u64,
    attempts: usize,
}

impl<S: Scalar> LiftMap<S> {
    /// Assembles a map from stored parts, recomputing nothing but checking
    /// shapes and the row dual-norm condition.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        p: S,
        n: usize,
        horizon: usize,
        g: Vec<S>,
        scale: S,
        distortion: (S, S),
        sign_outer: S,
        seed: u64,
    ) -> Result<Self> {
        check_dim(n * horizon, g.len())?;
        let map =
            Self { p, n, horizon, g, scale, inner: distortion.0, outer: distortion.1, sign_outer, seed, attempts: 1 };
        let q = conjugate(p);
        for i in 0..horizon {
            let nq = lp_norm(map.row(i), q);
            if nq > S::one() + S::lit(1e-12) {
                return Err(Error::InvalidConfig(format!("row {i} has dual norm {nq} > 1")));
            }
        }
        Ok(map)
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Dimension of the `l_inf` instance the map feeds: `max(T, 3)`.
    pub fn base_dim(&self) -> usize {
        self.horizon.max(3)
    }

    pub fn matrix(&self) -> &[S] {
        &self.g
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.g[i * self.n..(i + 1) * self.n]
    }

    pub fn scale(&self) -> S {
        self.scale
    }

    /// `(min, max)` of `||Q z||_p` over the probed unit directions `z`.
    pub fn distortion(&self) -> (S, S) {
        (self.inner, self.outer)
    }

    pub fn distortion_ratio(&self) -> S {
        self.outer / self.inner
    }

    /// Estimated `max ||Q y||_p` over sign vectors `y`.
    pub fn sign_outer(&self) -> S {
        self.sign_outer
    }

    /// Radius of the `l_inf` ball whose points have representers in the unit
    /// `lp` ball.
    pub fn effective_radius(&self) -> S {
        self.scale / self.sign_outer
    }

    /// Seed that produced the accepted section.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attempts(&self) -> usize {
        self.attempts
    }

    /// `G x`, zero-padded to [`LiftMap::base_dim`].
    pub fn apply(&self, x: &[S]) -> Result<Vec<S>> {
        check_dim(self.n, x.len())?;
        let mut y = vec![S::zero(); self.base_dim()];
        for (i, yi) in y.iter_mut().take(self.horizon).enumerate() {
            *yi = self.row(i).iter().zip(x).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        }
        Ok(y)
    }

    /// `G^T v` for `v` of length [`LiftMap::base_dim`]; padded entries are ignored.
    pub fn apply_transpose(&self, v: &[S]) -> Result<Vec<S>> {
        check_dim(self.base_dim(), v.len())?;
        let mut x = vec![S::zero(); self.n];
        for (i, &vi) in v.iter().take(self.horizon).enumerate() {
            if vi != S::zero() {
                for (xj, &gij) in x.iter_mut().zip(self.row(i)) {
                    *xj += vi * gij;
                }
            }
        }
        Ok(x)
    }

    /// `x = Q y / k`, the point with `G x = y` inside the section.
    pub fn representer(&self, y: &[S]) -> Result<Vec<S>> {
        let k2 = self.scale * self.scale;
        Ok(self.apply_transpose(y)?.into_iter().map(|v| v / k2).collect())
    }

    /// Largest `||x||_p` over representers of `samples` random vertices of the
    /// `l_inf` ball of radius [`LiftMap::effective_radius`]. At most one when
    /// the containment holds.
    pub fn containment_check(&self, samples: usize, seed: u64) -> Result<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.effective_radius();
        let mut worst = S::zero();
        for _ in 0..samples {
            let mut y = vec![S::zero(); self.base_dim()];
            for yi in y.iter_mut().take(self.horizon) {
                *yi = if rng.random::<bool>() { r } else { -r };
            }
            worst = worst.max(lp_norm(&self.representer(&y)?, self.p));
        }
        Ok(worst)
    }
}

/// Draws a Gaussian `n x T` matrix, orthonormalizes it and measures the
/// section's distortion over `probes` random unit directions. Retries with
/// `seed + attempt` while the ratio exceeds 4.
pub fn random_section<S: Scalar>(n: usize, horizon: usize, p: S, seed: u64, probes: usize) -> Result<LiftMap<S>> {
    if !(p >= S::one() && p <= S::two()) {
        return Err(Error::InvalidConfig(format!("sections need 1 <= p <= 2, got {p}")));
    }
    if horizon == 0 || horizon > n / 20 {
        return Err(Error::InvalidConfig(format!("need 1 <= T <= n / 20, got T = {horizon}, n = {n}")));
    }
    if probes == 0 {
        return Err(Error::InvalidConfig("probes must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    for attempt in 0..MAX_ATTEMPTS {
        let s = seed.wrapping_add(attempt as u64);
        let mut map = build_section(n, horizon, p, s, probes)?;
        map.attempts = attempt + 1;
        let ratio = map.distortion_ratio().as_f64();
        if ratio <= MAX_DISTORTION {
            return Ok(map);
        }
        worst = worst.min(ratio);
    }
    Err(Error::Distortion { ratio: worst, attempts: MAX_ATTEMPTS })
}

fn build_section<S: Scalar>(n: usize, horizon: usize, p: S, seed: u64, probes: usize) -> Result<LiftMap<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major n x T basis
    let mut cols: Vec<Vec<S>> =
        (0..horizon).map(|_| (0..n).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect()).collect();
    for j in 0..horizon {
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let c = dot(&done[i], &rest[0]);
                for (v, &qi) in rest[0].iter_mut().zip(&done[i]) {
                    *v -= c * qi;
                }
            }
        }
        let nrm = lp_norm(&cols[j], S::two());
        if nrm == S::zero() {
            return Err(Error::Numerical { what: "degenerate Gaussian basis".into(), residual: 0.0 });
        }
        for v in &mut cols[j] {
            *v /= nrm;
        }
    }

    let combine = |z: &[S]| -> Vec<S> {
        let mut out = vec![S::zero(); n];
        for (col, &zj) in cols.iter().zip(z) {
            for (o, &c) in out.iter_mut().zip(col) {
                *o += zj * c;
            }
        }
        out
    };

    let mut inner = S::infinity();
    let mut outer = S::zero();
    for _ in 0..probes {
        let mut z: Vec<S> = (0..horizon).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let zn = lp_norm(&z, S::two());
        if zn == S::zero() {
            continue;
        }
        for v in &mut z {
            *v /= zn;
        }
        let m = lp_norm(&combine(&z), p);
        inner = inner.min(m);
        outer = outer.max(m);
    }

    let q = conjugate(p);
    let max_row_q = cols.iter().fold(S::zero(), |m, c| m.max(lp_norm(c, q)));
    let scale = S::one() / max_row_q;

    let mut sign_outer = S::zero();
    for _ in 0..GREEDY_STARTS {
        let mut y: Vec<S> = (0..horizon).map(|_| if rng.random::<bool>() { S::one() } else { -S::one() }).collect();
        let mut v = combine(&y);
        let mut best = lp_norm(&v, p);
        loop {
            let mut improved = false;
            for (i, col) in cols.iter().enumerate() {
                let shift = -S::two() * y[i];
                let cand: Vec<S> = v.iter().zip(col).map(|(&a, &c)| a + shift * c).collect();
                let val = lp_norm(&cand, p);
                if val > best {
                    best = val;
                    v = cand;
                    y[i] = -y[i];
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        sign_outer = sign_outer.max(best);
    }

    let mut g = Vec::with_capacity(horizon * n);
    for col in &cols {
        g.extend(col.iter().map(|&c| scale * c));
    }
    Ok(LiftMap { p, n, horizon, g, scale, inner, outer, sign_outer, seed, attempts: 1 })
}

/// `x -> f(G x)` with gradient `G^T grad f(G x)`.
pub struct LiftedOracle<O, S> {
    base: O,
    lift: LiftMap<S>,
}

impl<O, S> LiftedOracle<O, S> {
    pub fn into_parts(self) -> (O, LiftMap<S>) {
        (self.base, self.lift)
    }
}

/// Wraps `base` (over `R^{base_dim}`) as an oracle over `R^n`.
pub fn lift_oracle<S: Scalar, O: FirstOrderOracle<S>>(base: O, lift: LiftMap<S>) -> Result<LiftedOracle<O, S>> {
    check_dim(lift.base_dim(), base.dim())?;
    Ok(LiftedOracle { base, lift })
}

impl<S: Scalar, O: FirstOrderOracle<S>> FirstOrderOracle<S> for LiftedOracle<O, S> {
    fn dim(&self) -> usize {
        self.lift.n
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        let y = self.lift.apply(x)?;
        let ans = self.base.query(&y)?;
        let gradient = self.lift.apply_transpose(&ans.gradient)?;
        Ok(OracleAnswer { value: ans.value, gradient, inner_point: ans.inner_point, inner_gap: ans.inner_gap })
    }
}

/// Lifted hard instance on the unit `lp` ball of `R^n`.
#[derive(Debug, Clone)]
pub struct LiftedInstance<S> {
    base: HardInstance<S>,
    lift: LiftMap<S>,
    queries: Vec<Vec<S>>,
    certificate: Vec<S>,
}

impl<S: Scalar> LiftedInstance<S> {
    /// Combines a finished `l_inf` instance with its lift; fails when the
    /// certificate's representer leaves the unit `lp` ball.
    pub fn new(base: HardInstance<S>, lift: LiftMap<S>, queries: Vec<Vec<S>>) -> Result<Self> {
        check_dim(lift.base_dim(), base.config().space().n())?;
        let certificate = lift.representer(base.certificate())?;
        let norm = lp_norm(&certificate, lift.p);
        if norm > S::one() + S::lit(1e-9) {
            return Err(Error::Numerical {
                what: format!("lifted certificate has norm {norm} > 1"),
                residual: (norm - S::one()).as_f64(),
            });
        }
        Ok(Self { base, lift, queries, certificate })
    }

    pub fn base(&self) -> &HardInstance<S> {
        &self.base
    }

    pub fn lift(&self) -> &LiftMap<S> {
        &self.lift
    }

    pub fn effective_radius(&self) -> S {
        self.base.config().radius()
    }

    pub fn certificate(&self) -> &[S] {
        &self.certificate
    }

    /// Bound realized by this instance (the `l_inf` bound at the effective radius).
    pub fn bound(&self) -> S {
        self.base.bound()
    }

    /// Method queries in `R^n`.
    pub fn queries(&self) -> &[Vec<S>] {
        &self.queries
    }

    pub fn oracle(&self) -> LiftedOracle<crate::oracle::ScaledOracle<crate::smoothing::SmoothedInstance<S>, S>, S> {
        LiftedOracle { base: self.base.oracle(), lift: self.lift.clone() }
    }

    pub fn eval(&self, x: &[S]) -> Result<OracleAnswer<S>> {
        self.oracle().query(x)
    }

    pub fn certified_gap(&self, x: &[S]) -> Result<S> {
        Ok(self.eval(x)?.value - self.eval(&self.certificate)?.value)
    }

    /// The unit `lp` ball of `R^n`.
    pub fn ball(&self) -> Result<Ball<S>> {
        Ball::new(NormSpec::new(self.lift.p, self.lift.n)?, S::one())
    }
}

/// Runs `method` on the unit `lp` ball of `R^n` against the lifted `l_inf`
/// adversary with constants `(kappa, L)`.
pub fn run_lifted_session<S: Scalar>(
    lift: LiftMap<S>,
    kappa: S,
    lipschitz: S,
    method: &Method<S>,
) -> Result<(LiftedInstance<S>, MethodTrace<S>)> {
    let space = NormSpec::new(S::infinity(), lift.base_dim())?;
    let config = AdversaryConfig::new(
        space,
        lift.horizon,
        kappa,
        lipschitz,
        SmoothingKernel::new(space)?,
        lift.effective_radius(),
    )?;
    let ball = Ball::new(NormSpec::new(lift.p, lift.n)?, S::one())?;
    let mut oracle = lift_oracle(AdversaryState::new(config), lift)?;
    let trace = method.run(&mut oracle, &ball, config.horizon())?;
    let (state, lift) = oracle.into_parts();
    let inst = LiftedInstance::new(state.finalize()?, lift, trace.queries.clone())?;
    Ok((inst, trace))
}

/// Reruns `method` on the static lifted instance and compares trajectories bitwise.
pub fn replay_check_lifted<S: Scalar>(inst: &LiftedInstance<S>, method: &Method<S>) -> bool {
    let Ok(ball) = inst.ball() else { return false };
    let mut oracle = inst.oracle();
    match method.run(&mut oracle, &ball, inst.lift.horizon) {
        Ok(trace) => same_points(&trace.queries, &inst.queries),
        Err(_) => false,
    }
}

/// `R^kappa L / (2^{kappa+1} M^{kappa-1} T^{kappa-1})` with `R = 1 / (2 sqrt T)`
/// and `M` the `l_inf` kernel constant in dimension `max(T, 3)`.
pub fn lower_bound_small_p<S: Scalar>(n: usize, horizon: usize, p: S, kappa: S, lipschitz: S) -> Result<S> {
    if !(p >= S::one() && p <= S::two()) {
        return Err(Error::InvalidConfig(format!("need 1 <= p <= 2, got {p}")));
    }
    if horizon == 0 || horizon > n / 20 {
        return Err(Error::InvalidConfig(format!("need 1 <= T <= n / 20, got T = {horizon}, n = {n}")));
    }
    if !(kappa > S::one() && kappa <= S::two()) {
        return Err(Error::InvalidConfig(format!("kappa = {kappa} must lie in (1, 2]")));
    }
    if !(lipschitz > S::zero()) {
        return Err(Error::InvalidConfig(format!("L = {lipschitz} must be positive")));
    }
    let m = SmoothingKernel::new(NormSpec::new(S::infinity(), horizon.max(3))?)?.m_phi();
    let t = S::from_usize_lossy(horizon);
    let r = S::one() / (S::two() * t.sqrt());
    let km1 = kappa - S::one();
    Ok(r.powf(kappa) * lipschitz / (S::two().powf(kappa + S::one()) * m.powf(km1) * t.powf(km1)))
}

/// `F(X) = f(diag X)` on row-major `m x m` matrices.
pub struct SchattenEmbedding<O> {
    inner: O,
    side: usize,
}

pub fn schatten_embed<S: Scalar, O: FirstOrderOracle<S>>(inner: O) -> SchattenEmbedding<O> {
    let side = inner.dim();
    SchattenEmbedding { inner, side }
}

impl<O> SchattenEmbedding<O> {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

/// Row-major `m x m` matrix with `d` on the diagonal.
pub fn diag_matrix<S: Scalar>(d: &[S]) -> Vec<S> {
    let m = d.len();
    let mut out = vec![S::zero(); m * m];
    for (i, &v) in d.iter().enumerate() {
        out[i * m + i] = v;
    }
    out
}

/// Diagonal of a row-major square matrix.
pub fn diagonal<S: Scalar>(x: &[S], side: usize) -> Result<Vec<S>> {
    check_dim(side * side, x.len())?;
    Ok((0..side).map(|i| x[i * side + i]).collect())
}

/// Schatten-`p` norm of `diag(d)`; its singular values are `|d_j|`.
pub fn schatten_norm_of_diagonal<S: Scalar>(d: &[S], p: S) -> S {
    let s: Vec<S> = d.iter().map(|v| v.abs()).collect();
    lp_norm(&s, p)
}

impl<S: Scalar, O: FirstOrderOracle<S>> FirstOrderOracle<S> for SchattenEmbedding<O> {
    fn dim(&self) -> usize {
        self.side * self.side
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        let d = diagonal(x, self.side)?;
        let ans = self.inner.query(&d)?;
        Ok(OracleAnswer {
            value: ans.value,
            gradient: diag_matrix(&ans.gradient),
            inner_point: ans.inner_point,
            inner_gap: ans.inner_gap,
        })
    }
}
