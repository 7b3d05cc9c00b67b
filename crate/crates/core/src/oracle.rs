//! First-order oracle interface consumed by the methods.

use crate::error::{check_dim, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::space::{conjugate, lp_norm, sample_in_ball};

/// One oracle answer: value and gradient, plus solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer<S> {
    pub value: S,
    pub gradient: Vec<S>,
    /// Minimizer `h(x)` of the inner inf-convolution problem (empty when the
    /// oracle has no inner problem).
    pub inner_point: Vec<S>,
    /// Certified duality gap of the inner solve.
    pub inner_gap: S,
}

pub trait FirstOrderOracle<S: Scalar> {
    fn dim(&self) -> usize;
    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>>;
}

impl<S: Scalar, O: FirstOrderOracle<S> + ?Sized> FirstOrderOracle<S> for &mut O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        (**self).query(x)
    }
}

impl<S: Scalar, O: FirstOrderOracle<S> + ?Sized> FirstOrderOracle<S> for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        (**self).query(x)
    }
}

/// Oracle backed by a closure returning `(value, gradient)`.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<S, F> FirstOrderOracle<S> for FnOracle<F>
where
    S: Scalar,
    F: FnMut(&[S]) -> (S, Vec<S>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        check_dim(self.dim, x.len())?;
        let (value, gradient) = (self.f)(x);
        Ok(OracleAnswer { value, gradient, inner_point: Vec::new(), inner_gap: S::zero() })
    }
}

/// `x -> f(x / R)`: transports an instance built for the unit ball to the ball
/// of radius `R`. With `R = 1` answers are bit-identical to the inner oracle.
pub struct ScaledOracle<O, S> {
    inner: O,
    radius: S,
}

impl<O, S: Scalar> ScaledOracle<O, S> {
    pub fn new(inner: O, radius: S) -> Self {
        Self { inner, radius }
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<S: Scalar, O: FirstOrderOracle<S>> FirstOrderOracle<S> for ScaledOracle<O, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn query(&mut self, x: &[S]) -> Result<OracleAnswer<S>> {
        let y: Vec<S> = x.iter().map(|&v| v / self.radius).collect();
        let mut ans = self.inner.query(&y)?;
        for g in &mut ans.gradient {
            *g /= self.radius;
        }
        Ok(ans)
    }
}

/// Largest `||grad f(x) - grad f(y)||_q / ||x - y||_p^{kappa - 1}` over
/// `samples` pairs drawn from the `lp` ball of radius `radius`; every other
/// pair is a perturbation of size at most `local` around its first point.
pub fn empirical_holder_ratio<S: Scalar, O: FirstOrderOracle<S> + ?Sized>(
    oracle: &mut O,
    p: S,
    kappa: S,
    radius: S,
    local: S,
    samples: usize,
    seed: u64,
) -> Result<S> {
    let n = oracle.dim();
    let q = conjugate(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = S::zero();
    for k in 0..samples {
        let x = sample_in_ball(&mut rng, p, n, radius);
        let y: Vec<S> = if k % 2 == 0 {
            sample_in_ball(&mut rng, p, n, radius)
        } else {
            let d = sample_in_ball(&mut rng, p, n, local);
            x.iter().zip(&d).map(|(&a, &b)| a + b).collect()
        };
        let diff: Vec<S> = x.iter().zip(&y).map(|(&a, &b)| a - b).collect();
        let dist = lp_norm(&diff, p);
        if dist == S::zero() {
            continue;
        }
        let gx = oracle.query(&x)?.gradient;
        let gy = oracle.query(&y)?.gradient;
        let gd: Vec<S> = gx.iter().zip(&gy).map(|(&a, &b)| a - b).collect();
        worst = worst.max(lp_norm(&gd, q) / dist.powf(kappa - S::one()));
    }
    Ok(worst)
}
