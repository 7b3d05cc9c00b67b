//! Local inf-convolution smoothing of max-affine functions.
//!
//! For a kernel `phi` and scale `chi > 0`,
//!
//! ```text
//! S_chi[g](x) = min_h  g(x + h) + chi * phi(h / chi)
//! ```
//!
//! is convex, 1-Lipschitz, has an `m_phi / chi`-Lipschitz gradient
//! `-phi'(h*(x) / chi)`, sits between `g - chi` and `g`, and only depends on the
//! values of `g` on `x + chi * G`.
//!
//! The inner problem is solved through its dual over the simplex of term
//! weights. For fixed weights `lambda` the minimizing `h` is
//! `chi * (phi')^{-1}(-sum_i lambda_i w_i)`, so every iterate is primal-dual
//! feasible and carries a certified duality gap. When every term is constant or
//! a multiple of one coordinate (the resisting-oracle instances among them) the
//! inner minimizer for a fixed active level clamps zero into a box, and the
//! level solves a monotone scalar equation by bisection to machine precision;
//! otherwise entropic mirror ascent with a deterministic step schedule is used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::kernel::SmoothingKernel;
use crate::oracle::{FirstOrderOracle, OracleAnswer};
use crate::scalar::{dot, Scalar};
use crate::space::{lp_norm, sample_in_ball};

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients<S> {
    /// `(coordinate, value)` pairs; coordinates are distinct.
    Sparse(Vec<(usize, S)>),
    Dense(Vec<S>),
}

/// Affine function `<w, x> + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTerm<S> {
    pub coefficients: Coefficients<S>,
    pub offset: S,
}

/// Shape of a term for the separable solver.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TermShape<S> {
    Constant,
    Axis { coord: usize, coef: S },
}

/// Single-coordinate term as seen by the level solver.
#[derive(Debug, Clone, Copy)]
struct AxisTerm<S> {
    group: usize,
    mag: S,
    sign: S,
    value: S,
}

impl<S: Scalar> AffineTerm<S> {
    /// `sign * x_index + offset`.
    pub fn signed_basis(index: usize, sign: S, offset: S) -> Self {
        Self { coefficients: Coefficients::Sparse(vec![(index, sign)]), offset }
    }

    pub fn sparse(entries: Vec<(usize, S)>, offset: S) -> Self {
        Self { coefficients: Coefficients::Sparse(entries), offset }
    }

    pub fn dense(w: Vec<S>, offset: S) -> Self {
        Self { coefficients: Coefficients::Dense(w), offset }
    }

    pub fn constant(offset: S) -> Self {
        Self { coefficients: Coefficients::Sparse(Vec::new()), offset }
    }

    pub fn apply(&self, x: &[S]) -> S {
        let lin = match &self.coefficients {
            Coefficients::Sparse(e) => e.iter().map(|&(j, w)| w * x[j]).sum(),
            Coefficients::Dense(w) => dot(w, x),
        };
        lin + self.offset
    }

    /// `out += scale * w`.
    fn add_scaled_to(&self, scale: S, out: &mut [S]) {
        match &self.coefficients {
            Coefficients::Sparse(e) => {
                for &(j, w) in e {
                    out[j] += scale * w;
                }
            }
            Coefficients::Dense(w) => {
                for (o, &wj) in out.iter_mut().zip(w) {
                    *o += scale * wj;
                }
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<S> {
        let mut w = vec![S::zero(); n];
        self.add_scaled_to(S::one(), &mut w);
        w
    }

    pub fn dual_norm(&self, n: usize, q: S) -> S {
        lp_norm(&self.to_dense(n), q)
    }

    fn shape(&self) -> Option<TermShape<S>> {
        let mut found = None;
        let mut visit = |j: usize, w: S| {
            if w != S::zero() {
                if found.is_some() {
                    return false;
                }
                found = Some((j, w));
            }
            true
        };
        let ok = match &self.coefficients {
            Coefficients::Sparse(e) => e.iter().all(|&(j, w)| visit(j, w)),
            Coefficients::Dense(w) => w.iter().enumerate().all(|(j, &v)| visit(j, v)),
        };
        if !ok {
            return None;
        }
        Some(match found {
            None => TermShape::Constant,
            Some((coord, coef)) => TermShape::Axis { coord, coef },
        })
    }

    fn validate(&self, n: usize) -> Result<()> {
        match &self.coefficients {
            Coefficients::Sparse(e) => {
                for (k, &(j, w)) in e.iter().enumerate() {
                    if j >= n {
                        return Err(Error::InvalidConfig(format!("term coordinate {j} out of range for n = {n}")));
                    }
                    if !w.is_finite() {
                        return Err(Error::InvalidConfig("non-finite term coefficient".into()));
                    }
                    if e[..k].iter().any(|&(i, _)| i == j) {
                        return Err(Error::InvalidConfig(format!("duplicate coordinate {j} in sparse term")));
                    }
                }
            }
            Coefficients::Dense(w) => {
                check_dim(n, w.len())?;
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("non-finite term coefficient".into()));
                }
            }
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidConfig("non-finite term offset".into()));
        }
        Ok(())
    }
}

/// `g(x) = max_i <w_i, x> + b_i` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine<S> {
    n: usize,
    terms: Vec<AffineTerm<S>>,
}

impl<S: Scalar> MaxAffine<S> {
    pub fn new(n: usize, terms: Vec<AffineTerm<S>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidConfig("max-affine function needs at least one term".into()));
        }
        for t in &terms {
            t.validate(n)?;
        }
        Ok(Self { n, terms })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[AffineTerm<S>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn push(&mut self, term: AffineTerm<S>) -> Result<()> {
        term.validate(self.n)?;
        self.terms.push(term);
        Ok(())
    }

    /// The function built from the first `k` terms.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        Self::new(self.n, self.terms[..k.min(self.terms.len())].to_vec())
    }

    pub fn eval(&self, x: &[S]) -> Result<S> {
        check_dim(self.n, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[S]) -> S {
        self.terms.iter().map(|t| t.apply(x)).fold(S::neg_infinity(), |a, b| a.max(b))
    }

    /// `Some` when every term is constant or supported on a single coordinate.
    fn separable_layout(&self) -> Option<Vec<TermShape<S>>> {
        self.terms.iter().map(|t| t.shape()).collect()
    }
}

/// Inner solver selection for [`SmoothedInstance::eval_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    /// Level bisection when the terms are separable, mirror ascent otherwise.
    Auto,
    Level,
    MirrorAscent,
}

/// `f = beta * S_chi[g]` with its smoothness class `(kappa, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedInstance<S> {
    g: MaxAffine<S>,
    kernel: SmoothingKernel<S>,
    chi: S,
    beta: S,
    kappa: S,
    lipschitz: S,
    tol: Option<S>,
    layout: Option<Vec<TermShape<S>>>,
}

/// Hölder constant `beta 2^{2-kappa} (m_phi / chi)^{kappa-1}` certified for
/// `beta * S_chi[g]`.
pub fn holder_constant<S: Scalar>(beta: S, chi: S, kappa: S, m_phi: S) -> S {
    beta * S::two().powf(S::two() - kappa) * (m_phi / chi).powf(kappa - S::one())
}

impl<S: Scalar> SmoothedInstance<S> {
    /// Instance whose `L` is the certified Hölder constant.
    pub fn new(g: MaxAffine<S>, kernel: SmoothingKernel<S>, chi: S, beta: S, kappa: S) -> Result<Self> {
        let l = holder_constant(beta, chi, kappa, kernel.m_phi());
        Self::with_lipschitz(g, kernel, chi, beta, kappa, l)
    }

    /// Instance claimed to belong to the class `(kappa, L)`; rejected when the
    /// certified Hölder constant exceeds `L`.
    pub fn with_lipschitz(
        g: MaxAffine<S>,
        kernel: SmoothingKernel<S>,
        chi: S,
        beta: S,
        kappa: S,
        lipschitz: S,
    ) -> Result<Self> {
        check_dim(kernel.dim(), g.dim())?;
        if !(chi > S::zero() && chi.is_finite()) {
            return Err(Error::InvalidConfig(format!("chi = {chi} must be positive")));
        }
        if !(beta > S::zero() && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta = {beta} must be positive")));
        }
        if !(kappa > S::one() && kappa <= S::two()) {
            return Err(Error::InvalidConfig(format!("kappa = {kappa} must lie in (1, 2]")));
        }
        let q = kernel.space().q();
        for (i, t) in g.terms().iter().enumerate() {
            let dn = t.dual_norm(g.dim(), q);
            if dn > S::one() + S::lit(1e-12) {
                return Err(Error::InvalidConfig(format!("term {i} has dual norm {dn} > 1")));
            }
        }
        let needed = holder_constant(beta, chi, kappa, kernel.m_phi());
        if !(lipschitz > S::zero()) || needed > lipschitz * (S::one() + S::lit(1e-9)) {
            return Err(Error::InvalidConfig(format!(
                "certified Hölder constant {needed} exceeds the class constant L = {lipschitz}"
            )));
        }
        let layout = g.separable_layout();
        Ok(Self { g, kernel, chi, beta, kappa, lipschitz, tol: None, layout })
    }

    /// Fixes the inner tolerance used by [`FirstOrderOracle::query`].
    pub fn with_tol(mut self, tol: S) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn g(&self) -> &MaxAffine<S> {
        &self.g
    }

    pub fn kernel(&self) -> &SmoothingKernel<S> {
        &self.kernel
    }

    pub fn chi(&self) -> S {
        self.chi
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn lipschitz(&self) -> S {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn uses_separable_solver(&self) -> bool {
        self.layout.is_some()
    }

    /// Same smoothing parameters applied to another max-affine function.
    pub fn with_function(&self, g: MaxAffine<S>) -> Result<Self> {
        let mut out = Self::with_lipschitz(g, self.kernel, self.chi, self.beta, self.kappa, self.lipschitz)?;
        out.tol = self.tol;
        Ok(out)
    }

    /// Default inner tolerance at `x`: `1e-10 * max(1, |g(x)|)`.
    pub fn default_tol(&self, x: &[S]) -> Result<S> {
        let gx = self.g.eval(x)?;
        Ok(S::lit(1e-10) * S::one().max(gx.abs()))
    }

    /// Value, gradient and inner minimizer of `beta * S_chi[g]` at `x` with the
    /// default tolerance.
    pub fn eval(&self, x: &[S]) -> Result<OracleAnswer<S>> {
        let tol = match self.tol {
            Some(t) => t,
            None => self.default_tol(x)?,
        };
        self.eval_with_tol(x, tol)
    }

    pub fn eval_with_tol(&self, x: &[S], tol: S) -> Result<OracleAnswer<S>> {
        self.eval_with(x, tol, InnerSolver::Auto)
    }

    /// Evaluation with an explicit inner solver. [`InnerSolver::Level`] fails
    /// with `Unsupported` on non-separable functions.
    pub fn eval_with(&self, x: &[S], tol: S, solver: InnerSolver) -> Result<OracleAnswer<S>> {
        check_dim(self.dim(), x.len())?;
        if !(tol > S::zero()) {
            return Err(Error::InvalidConfig(format!("tolerance {tol} must be positive")));
        }
        let inner = match (solver, &self.layout) {
            (InnerSolver::Auto | InnerSolver::Level, Some(layout)) => self.solve_separable(x, layout)?,
            (InnerSolver::Level, None) => {
                return Err(Error::Unsupported("level solver on a non-separable max-affine function".into()))
            }
            (InnerSolver::Auto, None) | (InnerSolver::MirrorAscent, _) => self.solve_mirror(x, tol)?,
        };
        if !(inner.gap <= tol) {
            return Err(Error::Numerical {
                what: "inner smoothing problem did not reach the requested duality gap".into(),
                residual: inner.gap.as_f64(),
            });
        }
        let grad_phi = self.kernel.grad_unchecked(&inner.u);
        let gradient = grad_phi.iter().map(|&v| if v == S::zero() { S::zero() } else { -self.beta * v }).collect();
        let inner_point = inner.u.iter().map(|&v| self.chi * v).collect();
        Ok(OracleAnswer { value: self.beta * inner.primal, gradient, inner_point, inner_gap: inner.gap })
    }

    /// Primal objective `g(x + chi u) + chi phi(u)`.
    fn primal(&self, x: &[S], u: &[S]) -> S {
        let shifted: Vec<S> = x.iter().zip(u).map(|(&a, &b)| a + self.chi * b).collect();
        self.g.eval_unchecked(&shifted) + self.chi * self.kernel.value_unchecked(u)
    }

    fn solve_separable(&self, x: &[S], layout: &[TermShape<S>]) -> Result<InnerSolution<S>> {
        let chi = self.chi;
        let n = self.dim();
        let mut slot = vec![usize::MAX; n];
        let mut coords: Vec<usize> = Vec::new();
        let mut axis: Vec<AxisTerm<S>> = Vec::with_capacity(layout.len());
        let mut floor: Option<S> = None;
        for (term, shape) in self.g.terms().iter().zip(layout) {
            let a = term.apply(x);
            match *shape {
                TermShape::Constant => floor = Some(floor.map_or(a, |f: S| f.max(a))),
                TermShape::Axis { coord, coef } => {
                    if slot[coord] == usize::MAX {
                        slot[coord] = coords.len();
                        coords.push(coord);
                    }
                    axis.push(AxisTerm { group: slot[coord], mag: coef.abs(), sign: coef.signum(), value: a });
                }
            }
        }
        let zero_u = || vec![S::zero(); n];
        let trivial = |u: Vec<S>| Ok(InnerSolution { primal: self.primal(x, &u), u, gap: S::zero() });
        let Some(a_max) = axis.iter().map(|e| e.value).reduce(|a, b| a.max(b)) else {
            return trivial(zero_u());
        };
        if floor.is_some_and(|f| f >= a_max) {
            return trivial(zero_u());
        }

        // a coordinate carrying terms of both signs bounds the level from below
        let mut crossing: Option<(S, usize, usize)> = None;
        for (i, ei) in axis.iter().enumerate().filter(|(_, e)| e.sign > S::zero()) {
            for (k, ek) in axis.iter().enumerate().filter(|(_, e)| e.sign < S::zero() && e.group == ei.group) {
                let level = (ei.value * ek.mag + ek.value * ei.mag) / (ei.mag + ek.mag);
                if crossing.is_none_or(|c| level > c.0) {
                    crossing = Some((level, i, k));
                }
            }
        }
        let lowest = match (floor, crossing) {
            (Some(f), Some(c)) => Some(f.max(c.0)),
            (f, c) => f.or(c.map(|c| c.0)),
        };

        // |u_j| at level nu and the index of the binding term on coordinate j
        let groups = coords.len();
        let mut t = vec![S::zero(); groups];
        let mut bind: Vec<Option<usize>> = vec![None; groups];
        let fill = |nu: S, t: &mut [S], bind: &mut [Option<usize>]| {
            let mut pos = vec![(S::zero(), None); groups];
            let mut neg = vec![(S::zero(), None); groups];
            for (i, e) in axis.iter().enumerate() {
                let need = (e.value - nu) / (chi * e.mag);
                let side = if e.sign > S::zero() { &mut pos[e.group] } else { &mut neg[e.group] };
                if need > side.0 {
                    *side = (need, Some(i));
                }
            }
            for j in 0..groups {
                (t[j], bind[j]) = if pos[j].1.is_some() { pos[j] } else { neg[j] };
            }
        };
        // right derivative of nu + chi phi(u(nu)) in the level nu
        let slope = |nu: S, t: &mut [S], bind: &mut [Option<usize>]| -> S {
            fill(nu, t, bind);
            let g = self.kernel.grad_unchecked(t);
            let pull: S = g.iter().zip(bind.iter()).filter_map(|(&gi, b)| b.map(|i| gi / axis[i].mag)).sum();
            S::one() - pull
        };

        let mut hi = a_max;
        let nu = match lowest {
            Some(f) if slope(f, &mut t, &mut bind) >= S::zero() => f,
            Some(f) => {
                let mut lo = f;
                bisect_level(&mut lo, &mut hi, |nu| slope(nu, &mut t, &mut bind));
                hi
            }
            None => {
                let mut step = chi;
                let mut lo = a_max - step;
                let mut guard = 0;
                while slope(lo, &mut t, &mut bind) > S::zero() {
                    step *= S::two();
                    lo = a_max - step;
                    guard += 1;
                    if guard > 4000 || !lo.is_finite() {
                        return Err(Error::Numerical {
                            what: "could not bracket the smoothing level".into(),
                            residual: f64::NAN,
                        });
                    }
                }
                bisect_level(&mut lo, &mut hi, |nu| slope(nu, &mut t, &mut bind));
                hi
            }
        };

        // weights lambda_i = d_j phi(t) / |coef_i| on the binding terms; a
        // level stuck at its lower limit hands the missing mass to the
        // constant term or to the crossing pair, which then also balances the
        // gradient on its coordinate
        fill(nu, &mut t, &mut bind);
        let g = self.kernel.grad_unchecked(&t);
        let mut lam = vec![S::zero(); axis.len()];
        for (j, b) in bind.iter().enumerate() {
            if let Some(i) = *b {
                lam[i] = g[j] / axis[i].mag;
            }
        }
        let total: S = lam.iter().copied().sum();
        let mut floor_weight = S::zero();
        if total < S::one() && Some(nu) == lowest {
            match crossing.filter(|c| c.0 == nu && floor.is_none_or(|f| f < nu)) {
                Some((_, ip, ineg)) => {
                    let j = axis[ip].group;
                    let d = match bind[j] {
                        Some(i) => {
                            lam[i] = S::zero();
                            axis[i].sign * g[j]
                        }
                        None => S::zero(),
                    };
                    let rest = S::one() - lam.iter().copied().sum::<S>();
                    let (cp, cn) = (axis[ip].mag, axis[ineg].mag);
                    let lp = ((d + rest * cn) / (cp + cn)).max(S::zero()).min(rest);
                    lam[ip] = lp;
                    lam[ineg] = rest - lp;
                }
                None => floor_weight = S::one() - total,
            }
        }
        let norm = floor_weight + lam.iter().copied().sum::<S>();
        if !(norm > S::zero()) {
            return trivial(zero_u());
        }
        for l in &mut lam {
            *l /= norm;
        }
        let floor_weight = floor_weight / norm;

        let mut z = vec![S::zero(); groups];
        for (l, e) in lam.iter().zip(&axis) {
            z[e.group] += *l * e.sign * e.mag;
        }
        let v: Vec<S> = z.iter().map(|zj| zj.abs()).collect();
        let tc = self.kernel.grad_invert_unchecked(&v)?;
        let mut u = zero_u();
        for ((&tj, &zj), &coord) in tc.iter().zip(&z).zip(&coords) {
            if tj > S::zero() {
                u[coord] = -zj.signum() * tj;
            }
        }
        let mut primal = self.primal(x, &u);
        let lin: S = lam.iter().zip(&axis).map(|(&l, e)| l * e.value).sum::<S>()
            - chi * v.iter().zip(&tc).map(|(&vj, &tj)| vj * tj).sum::<S>();
        let dual = lin + floor_weight * floor.unwrap_or(S::zero()) + chi * self.kernel.value_unchecked(&u);
        if primal - dual <= S::lit(8.0) * S::epsilon() * S::one().max(primal.abs()) {
            return Ok(InnerSolution { u, primal, gap: (primal - dual).max(S::zero()) });
        }
        let mut level_u = zero_u();
        for ((&tj, b), &coord) in t.iter().zip(&bind).zip(&coords) {
            if let Some(i) = *b {
                level_u[coord] = -axis[i].sign * tj;
            }
        }
        let level_primal = self.primal(x, &level_u);
        if level_primal < primal {
            (u, primal) = (level_u, level_primal);
        }
        let gap = (primal - dual).max(S::zero());
        Ok(InnerSolution { u, primal, gap })
    }

    fn solve_mirror(&self, x: &[S], tol: S) -> Result<InnerSolution<S>> {
        let m = self.g.len();
        let n = self.dim();
        let chi = self.chi;
        let terms = self.g.terms();
        let a: Vec<S> = terms.iter().map(|t| t.apply(x)).collect();

        // u(lambda), term values at x + chi u, dual value, primal value
        let evaluate = |lam: &[S]| -> Result<(Vec<S>, Vec<S>, S, S)> {
            let mut wbar = vec![S::zero(); n];
            for (t, &l) in terms.iter().zip(lam) {
                t.add_scaled_to(-l, &mut wbar);
            }
            let u = self.kernel.grad_invert_unchecked(&wbar)?;
            let phi = self.kernel.value_unchecked(&u);
            let pieces: Vec<S> = terms
                .iter()
                .zip(&a)
                .map(|(t, &ai)| {
                    let mut w = vec![S::zero(); n];
                    t.add_scaled_to(S::one(), &mut w);
                    ai + chi * dot(&w, &u)
                })
                .collect();
            let dual = dot(lam, &pieces) + chi * phi;
            let top = pieces.iter().copied().fold(S::neg_infinity(), |p, q| p.max(q));
            Ok((u, pieces, dual, top + chi * phi))
        };

        let mut lam = vec![S::one() / S::from_usize_lossy(m); m];
        let (mut u, mut pieces, mut dual, mut primal) = evaluate(&lam)?;
        let mut best_u = u.clone();
        let mut best_primal = primal;
        let mut best_dual = dual;
        let log_term = (S::one() / tol).ln().max(S::one());
        let budget = (S::lit(50.0) * S::from_usize_lossy(m * m) * log_term).to_usize().unwrap_or(usize::MAX).max(2000);
        let mut eta = S::one() / chi;
        let mut last_gap = best_primal - best_dual;
        let mut stalled = 0;
        for _ in 0..budget {
            let gap = best_primal - best_dual;
            if gap <= tol || stalled > 200 {
                break;
            }
            if gap < last_gap {
                last_gap = gap;
                stalled = 0;
            } else {
                stalled += 1;
            }
            let top = pieces.iter().copied().fold(S::neg_infinity(), |p, q| p.max(q));
            let mut cand: Vec<S> = lam.iter().zip(&pieces).map(|(&l, &p)| l * (eta * (p - top)).exp()).collect();
            let z: S = cand.iter().copied().sum();
            for c in &mut cand {
                *c /= z;
            }
            let (cu, cp, cd, cprimal) = evaluate(&cand)?;
            if cd >= dual {
                lam = cand;
                u = cu;
                pieces = cp;
                dual = cd;
                primal = cprimal;
                eta *= S::lit(1.5);
                if dual > best_dual {
                    best_dual = dual;
                }
                if primal < best_primal {
                    best_primal = primal;
                    best_u = u.clone();
                }
            } else {
                eta *= S::lit(0.5);
            }
        }
        let _ = &u;
        if best_primal - best_dual > tol {
            if let Some((polished, blend)) = polish_active_set(&lam, &pieces, |l| evaluate(l)) {
                let (pu, _, pd, pp) = evaluate(&polished)?;
                best_dual = best_dual.max(pd);
                if pp < best_primal {
                    best_primal = pp;
                    best_u = pu;
                }
                if let Some(bu) = blend {
                    let bp = self.primal(x, &bu);
                    if bp < best_primal {
                        best_primal = bp;
                        best_u = bu;
                    }
                }
            }
        }
        let gap = (best_primal - best_dual).max(S::zero());
        Ok(InnerSolution { primal: self.primal(x, &best_u), u: best_u, gap })
    }
}

type Evaluation<S> = (Vec<S>, Vec<S>, S, S);

/// Refines dual weights by solving "all active pieces are equal", dropping
/// terms whose weight turns negative and adding terms whose piece rises above
/// the active level. Two active terms are equalized by bisection; the second
/// value is then a primal point blended from both ends of the final bracket
/// so that the two pieces agree exactly.
fn polish_active_set<S: Scalar>(
    lam: &[S],
    pieces: &[S],
    evaluate: impl Fn(&[S]) -> Result<Evaluation<S>>,
) -> Option<(Vec<S>, Option<Vec<S>>)> {
    let m = lam.len();
    let lmax = lam.iter().copied().fold(S::zero(), S::max);
    let mut active: Vec<usize> = (0..m).filter(|&i| lam[i] >= S::lit(1e-8) * lmax).collect();
    if active.is_empty() {
        let top = pieces.iter().copied().fold(S::neg_infinity(), S::max);
        active.push(pieces.iter().position(|&p| p == top)?);
    }
    let mut weights: Vec<S> = active.iter().map(|&i| lam[i]).collect();
    let mut blend: Option<Vec<S>>;
    for _ in 0..(2 * m + 4) {
        blend = None;
        let total: S = weights.iter().copied().sum();
        for w in &mut weights {
            *w /= total;
        }
        let full = |w: &[S]| -> Vec<S> {
            let mut l = vec![S::zero(); m];
            for (&i, &wi) in active.iter().zip(w) {
                l[i] = wi;
            }
            l
        };
        let residual = |w: &[S]| -> Option<Vec<S>> {
            let (_, p, _, _) = evaluate(&full(w)).ok()?;
            Some(active[1..].iter().map(|&i| p[i] - p[active[0]]).collect())
        };
        let k = active.len() - 1;
        if k == 1 {
            // p_1 - p_0 is nonincreasing in the weight moved onto term 1
            let total = weights[0] + weights[1];
            let gap_at = |t: S| residual(&[total - t, t]).map(|r| r[0]);
            let (mut lo, mut hi) = (S::zero(), total);
            if gap_at(lo)? <= S::zero() {
                weights = vec![total, S::zero()];
            } else if gap_at(hi)? >= S::zero() {
                weights = vec![S::zero(), total];
            } else {
                let mut failed = false;
                bisect_level(&mut lo, &mut hi, |t| match gap_at(t) {
                    Some(r) => -r,
                    None => {
                        failed = true;
                        S::zero()
                    }
                });
                if failed {
                    return None;
                }
                let (rl, rh) = (gap_at(lo)?, gap_at(hi)?);
                let t = if rl.abs() <= rh.abs() { lo } else { hi };
                weights = vec![total - t, t];
                if rl > S::zero() && rh < S::zero() {
                    let (u_lo, ..) = evaluate(&full(&[total - lo, lo])).ok()?;
                    let (u_hi, ..) = evaluate(&full(&[total - hi, hi])).ok()?;
                    let s = rl / (rl - rh);
                    blend = Some(u_lo.iter().zip(&u_hi).map(|(&a, &b)| a + s * (b - a)).collect());
                }
            }
        } else if k > 1 {
            let rn = newton_equalize(&mut weights, k, &residual)?;
            let level = residual_scale(&evaluate(&full(&weights)).ok()?.1, &active);
            if rn > S::lit(1e-13) * level {
                let (j, _) = weights
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))?;
                active.remove(j);
                weights.remove(j);
                continue;
            }
        }
        if let Some((j, _)) = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < S::zero())
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        {
            if active.len() == 1 {
                return None;
            }
            active.remove(j);
            weights.remove(j);
            for w in &mut weights {
                *w = w.max(S::zero());
            }
            continue;
        }
        let lam_full = full(&weights);
        let (_, p, _, _) = evaluate(&lam_full).ok()?;
        let level = active.iter().map(|&i| p[i]).fold(S::neg_infinity(), S::max);
        let scale = S::one().max(level.abs());
        let outsider = (0..m)
            .filter(|i| !active.contains(i))
            .filter(|&i| p[i] > level + S::lit(1e-14) * scale)
            .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap_or(std::cmp::Ordering::Equal));
        match outsider {
            Some(i) => {
                active.push(i);
                weights.push(S::zero());
            }
            None => return Some((lam_full, blend)),
        }
    }
    None
}

fn residual_scale<S: Scalar>(pieces: &[S], active: &[usize]) -> S {
    active.iter().fold(S::one(), |m, &i| m.max(pieces[i].abs()))
}

/// Finite-difference Newton on `residual(w) = 0`, moving weight between
/// `w[0]` and `w[j + 1]`, with backtracking so the residual never grows.
/// Returns the final residual norm.
fn newton_equalize<S: Scalar>(weights: &mut Vec<S>, k: usize, residual: &impl Fn(&[S]) -> Option<Vec<S>>) -> Option<S> {
    let norm = |r: &[S]| r.iter().fold(S::zero(), |a, v| a.max(v.abs()));
    let mut r = residual(weights)?;
    for _ in 0..40 {
        let rn = norm(&r);
        if rn <= S::epsilon() {
            break;
        }
        let eps = S::lit(1e-7);
        let mut jac = vec![vec![S::zero(); k]; k];
        for j in 0..k {
            let mut w = weights.clone();
            w[j + 1] += eps;
            w[0] -= eps;
            let rj = residual(&w)?;
            for (row, (&a, &b)) in jac.iter_mut().zip(rj.iter().zip(&r)) {
                row[j] = (a - b) / eps;
            }
        }
        let step = solve_linear(jac, r.iter().map(|&v| -v).collect())?;
        let mut scale = S::one();
        let mut accepted = None;
        for _ in 0..30 {
            let mut next = weights.clone();
            for (j, &d) in step.iter().enumerate() {
                next[j + 1] += scale * d;
                next[0] -= scale * d;
            }
            if let Some(rnext) = residual(&next) {
                if norm(&rnext) < rn {
                    accepted = Some((next, rnext));
                    break;
                }
            }
            scale /= S::two();
        }
        match accepted {
            Some((next, rnext)) => {
                *weights = next;
                r = rnext;
            }
            None => break,
        }
    }
    Some(norm(&r))
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[piv][col] == S::zero() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (dst, &v) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *dst -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let s: S = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Bisection on a nondecreasing slope with `slope(lo) < 0 <= slope(hi)`,
/// run until the bracket cannot shrink in floating point.
fn bisect_level<S: Scalar>(lo: &mut S, hi: &mut S, mut slope: impl FnMut(S) -> S) {
    loop {
        let mid = *lo + (*hi - *lo) / S::two();
        if mid <= *lo || mid >= *hi {
            break;
        }
        if slope(mid) < S::zero() {
            *lo = mid;
        } else {
            *hi = mid;
        }
    }
}

struct InnerSolution<S> {
    /// Scaled inner minimizer `h / chi`.
    u: Vec<S>,
    primal: S,
    gap: S,
}

impl<S: Scalar> FirstOrderOracle<S> for SmoothedInstance<S> {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        self.eval(x)
    }
}

/// Outcome of an empirical Hölder-gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport<S> {
    pub pairs: usize,
    /// `max ||grad f(x) - grad f(y)||_q / ||x - y||_p^{kappa - 1}`.
    pub max_ratio: S,
    /// `max ||grad f(x) - grad f(y)||_q / ||x - y||_p`.
    pub max_lipschitz_ratio: S,
    /// Largest `ratio / (L (1 + 10 tol / ||x - y||_p))`; at most 1 on success.
    pub max_normalized: S,
    pub lipschitz: S,
}

impl<S: Scalar> MembershipReport<S> {
    pub fn passes(&self) -> bool {
        self.max_normalized <= S::one()
    }
}

/// Samples `samples` pairs in the `||.||_p` ball of radius 2 and measures the
/// Hölder ratio of the gradient. Half of the pairs are independent points,
/// half are perturbations of size up to `chi` to probe the smoothing scale.
pub fn check_membership<S: Scalar>(
    inst: &SmoothedInstance<S>,
    samples: usize,
    seed: u64,
) -> Result<MembershipReport<S>> {
    let p = inst.kernel().space().p();
    let n = inst.dim();
    let q = inst.kernel().space().q();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MembershipReport {
        pairs: samples,
        max_ratio: S::zero(),
        max_lipschitz_ratio: S::zero(),
        max_normalized: S::zero(),
        lipschitz: inst.lipschitz(),
    };
    for k in 0..samples {
        let x = sample_in_ball(&mut rng, p, n, S::two());
        let y = if k % 2 == 0 {
            sample_in_ball(&mut rng, p, n, S::two())
        } else {
            let d = sample_in_ball(&mut rng, p, n, inst.chi());
            x.iter().zip(&d).map(|(&a, &b)| a + b).collect()
        };
        let diff: Vec<S> = x.iter().zip(&y).map(|(&a, &b)| a - b).collect();
        let dist = lp_norm(&diff, p);
        if dist == S::zero() {
            continue;
        }
        let fx = inst.eval(&x)?;
        let fy = inst.eval(&y)?;
        let tol = inst.default_tol(&x)?.max(inst.default_tol(&y)?);
        let gd: Vec<S> = fx.gradient.iter().zip(&fy.gradient).map(|(&a, &b)| a - b).collect();
        let num = lp_norm(&gd, q);
        let ratio = num / dist.powf(inst.kappa() - S::one());
        let allowed = inst.lipschitz() * (S::one() + S::lit(10.0) * tol / dist);
        report.max_ratio = report.max_ratio.max(ratio);
        report.max_lipschitz_ratio = report.max_lipschitz_ratio.max(num / dist);
        report.max_normalized = report.max_normalized.max(ratio / allowed);
    }
    Ok(report)
}

/// Difference between the smoothings of two max-affine functions at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalityReport<S> {
    pub value_diff: S,
    pub gradient_diff: S,
    pub tol: S,
}

impl<S: Scalar> LocalityReport<S> {
    pub fn agree(&self) -> bool {
        let bound = S::lit(10.0) * self.tol;
        self.value_diff <= bound && self.gradient_diff <= bound
    }
}

/// Compares `inst` with the same smoothing applied to `other` at `x`.
///
/// The caller is responsible for `g` and `other` coinciding on the
/// `chi`-ball around `x`; see [`coincide_near`].
pub fn check_locality<S: Scalar>(
    inst: &SmoothedInstance<S>,
    other: &MaxAffine<S>,
    x: &[S],
    tol: S,
) -> Result<LocalityReport<S>> {
    let twin = inst.with_function(other.clone())?;
    let a = inst.eval_with_tol(x, tol)?;
    let b = twin.eval_with_tol(x, tol)?;
    let value_diff = (a.value - b.value).abs();
    let gradient_diff = a.gradient.iter().zip(&b.gradient).fold(S::zero(), |m, (&u, &v)| m.max((u - v).abs()));
    Ok(LocalityReport { value_diff, gradient_diff, tol })
}

/// Sampling check that two max-affine functions agree on `{||y - x||_p <= radius}`.
pub fn coincide_near<S: Scalar>(
    g1: &MaxAffine<S>,
    g2: &MaxAffine<S>,
    x: &[S],
    p: S,
    radius: S,
    samples: usize,
    seed: u64,
) -> Result<bool> {
    check_dim(g1.dim(), g2.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let d = sample_in_ball(&mut rng, p, g1.dim(), radius);
        let y: Vec<S> = x.iter().zip(&d).map(|(&a, &b)| a + b).collect();
        let (v1, v2) = (g1.eval(&y)?, g2.eval(&y)?);
        if (v1 - v2).abs() > S::lit(1e-12) * S::one().max(v1.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}
