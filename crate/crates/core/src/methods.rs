//! Deterministic first-order methods over lp balls.
//!
//! Every method spends exactly one oracle call per iteration, so the budget
//! `T` is the number of queries. The reported solution is the best queried
//! point, which keeps it inside the trajectory the resisting oracle saw.

use crate::error::{Error, Result};
use crate::oracle::{FirstOrderOracle, OracleAnswer};
use crate::scalar::{dot, Scalar};
use crate::space::{lp_norm, Ball};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method<S> {
    /// Frank-Wolfe with the open-loop step `2 / (k + 2)`.
    ConditionalGradient,
    /// Accelerated projected gradient with step `1 / lipschitz`.
    Accelerated { lipschitz: S },
    /// Projected subgradient with step `R / (||g||_2 sqrt(T))`.
    ProjectedSubgradient,
}

impl<S: Scalar> Method<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ConditionalGradient => "cg",
            Method::Accelerated { .. } => "accelerated",
            Method::ProjectedSubgradient => "subgradient",
        }
    }

    pub fn run<O: FirstOrderOracle<S> + ?Sized>(
        &self,
        oracle: &mut O,
        ball: &Ball<S>,
        budget: usize,
    ) -> Result<MethodTrace<S>> {
        match *self {
            Method::ConditionalGradient => run_cg(oracle, ball, budget),
            Method::Accelerated { lipschitz } => run_accelerated(oracle, ball, budget, lipschitz),
            Method::ProjectedSubgradient => run_subgradient(oracle, ball, budget),
        }
    }
}

/// Query points, answers and the selected solution of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrace<S> {
    pub queries: Vec<Vec<S>>,
    pub answers: Vec<OracleAnswer<S>>,
    pub final_point: Vec<S>,
    pub best_value: S,
    /// Index into `queries` of the final point.
    pub final_index: usize,
}

impl<S: Scalar> MethodTrace<S> {
    /// True when both traces queried bit-identical points.
    pub fn same_queries(&self, other: &MethodTrace<S>) -> bool {
        same_points(&self.queries, &other.queries)
    }
}

/// Bitwise equality of two point sequences.
pub fn same_points<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.as_f64().to_bits() == v.as_f64().to_bits())
        })
}

struct Recorder<'a, O: ?Sized, S> {
    oracle: &'a mut O,
    trace: MethodTrace<S>,
}

impl<'a, S: Scalar, O: FirstOrderOracle<S> + ?Sized> Recorder<'a, O, S> {
    fn new(oracle: &'a mut O, ball: &Ball<S>, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidConfig("method budget T must be positive".into()));
        }
        if oracle.dim() != ball.dim() {
            return Err(Error::DimensionMismatch { expected: ball.dim(), got: oracle.dim() });
        }
        Ok(Self {
            oracle,
            trace: MethodTrace {
                queries: Vec::with_capacity(budget),
                answers: Vec::with_capacity(budget),
                final_point: ball.center().to_vec(),
                best_value: S::infinity(),
                final_index: 0,
            },
        })
    }

    fn query(&mut self, x: Vec<S>) -> Result<Vec<S>> {
        let ans = self.oracle.query(&x)?;
        let grad = ans.gradient.clone();
        if ans.value < self.trace.best_value {
            self.trace.best_value = ans.value;
            self.trace.final_point = x.clone();
            self.trace.final_index = self.trace.queries.len();
        }
        self.trace.queries.push(x);
        self.trace.answers.push(ans);
        Ok(grad)
    }

    fn finish(self) -> MethodTrace<S> {
        self.trace
    }
}

/// Conditional gradient started at the ball center:
/// `x_{k+1} = (1 - g_k) x_k + g_k lmo(grad f(x_k))`, `g_k = 2 / (k + 2)`.
pub fn run_cg<S: Scalar, O: FirstOrderOracle<S> + ?Sized>(
    oracle: &mut O,
    ball: &Ball<S>,
    budget: usize,
) -> Result<MethodTrace<S>> {
    let mut rec = Recorder::new(oracle, ball, budget)?;
    let mut x = ball.center().to_vec();
    for k in 0..budget {
        let g = rec.query(x.clone())?;
        if k + 1 == budget {
            break;
        }
        let s = ball.lmo(&g)?;
        let gamma = S::two() / S::from_usize_lossy(k + 2);
        for (xj, &sj) in x.iter_mut().zip(&s) {
            *xj = (S::one() - gamma) * *xj + gamma * sj;
        }
    }
    Ok(rec.finish())
}

/// Accelerated projected gradient in the similar-triangles form: the query
/// `y_k = (1 - a_k) x_k + a_k z_k` is a convex combination of feasible points,
/// `z_{k+1} = proj(z_k - grad f(y_k) / (a_k L))`, `x_{k+1} = (1 - a_k) x_k + a_k z_{k+1}`
/// with `a_k = 2 / (k + 2)`. Requires `p` in `{2, inf}`.
pub fn run_accelerated<S: Scalar, O: FirstOrderOracle<S> + ?Sized>(
    oracle: &mut O,
    ball: &Ball<S>,
    budget: usize,
    lipschitz: S,
) -> Result<MethodTrace<S>> {
    ensure_projectable(ball)?;
    if !(lipschitz > S::zero() && lipschitz.is_finite()) {
        return Err(Error::InvalidConfig(format!("accelerated method needs L > 0, got {lipschitz}")));
    }
    let mut rec = Recorder::new(oracle, ball, budget)?;
    let mut x = ball.center().to_vec();
    let mut z = x.clone();
    for k in 0..budget {
        let a = S::two() / S::from_usize_lossy(k + 2);
        let y: Vec<S> = x.iter().zip(&z).map(|(&xi, &zi)| (S::one() - a) * xi + a * zi).collect();
        let g = rec.query(y)?;
        if k + 1 == budget {
            break;
        }
        let step = S::one() / (a * lipschitz);
        let moved: Vec<S> = z.iter().zip(&g).map(|(&zi, &gi)| zi - step * gi).collect();
        z = ball.project(&moved)?;
        for (xi, &zi) in x.iter_mut().zip(&z) {
            *xi = (S::one() - a) * *xi + a * zi;
        }
    }
    Ok(rec.finish())
}

/// Projected subgradient with the fixed step `R / (||g||_2 sqrt(T))`; a zero
/// gradient leaves the iterate in place. Requires `p` in `{2, inf}`.
pub fn run_subgradient<S: Scalar, O: FirstOrderOracle<S> + ?Sized>(
    oracle: &mut O,
    ball: &Ball<S>,
    budget: usize,
) -> Result<MethodTrace<S>> {
    ensure_projectable(ball)?;
    let mut rec = Recorder::new(oracle, ball, budget)?;
    let mut x = ball.center().to_vec();
    let sqrt_t = S::from_usize_lossy(budget).sqrt();
    for k in 0..budget {
        let g = rec.query(x.clone())?;
        if k + 1 == budget {
            break;
        }
        let gn = lp_norm(&g, S::two());
        if gn == S::zero() {
            continue;
        }
        let step = ball.radius() / (gn * sqrt_t);
        let moved: Vec<S> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
        x = ball.project(&moved)?;
    }
    Ok(rec.finish())
}

fn ensure_projectable<S: Scalar>(ball: &Ball<S>) -> Result<()> {
    let p = ball.space().p();
    if p.is_infinite() || p == S::two() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("projected methods need p in {{2, inf}}, got p = {p}")))
    }
}

/// Two-sided estimate of `min_{x in ball} f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumEstimate<S> {
    /// Best observed value (an upper bound on the optimum).
    pub upper: S,
    /// Largest Frank-Wolfe dual bound `f(y) + min_{s in ball} <grad f(y), s - y>`.
    pub lower: S,
    pub point: Vec<S>,
}

/// Runs `iterations` steps of a polishing method and collects the best value
/// together with the Frank-Wolfe dual bound at every query. Uses the
/// accelerated method when `lipschitz` is given and the ball is projectable,
/// conditional gradient otherwise.
pub fn estimate_optimum<S: Scalar, O: FirstOrderOracle<S> + ?Sized>(
    oracle: &mut O,
    ball: &Ball<S>,
    iterations: usize,
    lipschitz: Option<S>,
) -> Result<OptimumEstimate<S>> {
    let trace = match lipschitz {
        Some(l) if ensure_projectable(ball).is_ok() => run_accelerated(oracle, ball, iterations, l)?,
        _ => run_cg(oracle, ball, iterations)?,
    };
    let mut lower = S::neg_infinity();
    for (y, ans) in trace.queries.iter().zip(&trace.answers) {
        let bound = ans.value + ball.support_min(&ans.gradient)? - dot(&ans.gradient, y);
        lower = lower.max(bound);
    }
    Ok(OptimumEstimate { upper: trace.best_value, lower, point: trace.final_point })
}
