//! Norm and ball geometry on `R^n` equipped with an lp norm.

use crate::error::{check_dim, Error, Result};
use crate::scalar::{abs_pow, dot, Scalar};

/// The space `(R^n, ||.||_p)` with `p` in `[1, inf]`. `p = inf` is stored as
/// the scalar's infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec<S> {
    p: S,
    n: usize,
}

impl<S: Scalar> NormSpec<S> {
    pub fn new(p: S, n: usize) -> Result<Self> {
        if p.is_nan() || p < S::one() {
            return Err(Error::InvalidConfig(format!("norm exponent p = {p} must lie in [1, inf]")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("dimension n must be positive".into()));
        }
        Ok(Self { p, n })
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn q(&self) -> S {
        conjugate(self.p)
    }

    pub fn is_inf(&self) -> bool {
        self.p.is_infinite()
    }

    pub fn norm(&self, x: &[S]) -> Result<S> {
        check_dim(self.n, x.len())?;
        Ok(lp_norm(x, self.p))
    }

    pub fn dual_norm(&self, x: &[S]) -> Result<S> {
        check_dim(self.n, x.len())?;
        Ok(lp_norm(x, self.q()))
    }

    /// Same space with a different dimension.
    pub fn with_dim(&self, n: usize) -> Result<Self> {
        Self::new(self.p, n)
    }
}

/// Conjugate exponent of `p`, with the `1 <-> inf` pair handled explicitly.
pub fn conjugate<S: Scalar>(p: S) -> S {
    if p.is_infinite() {
        S::one()
    } else if p == S::one() {
        S::infinity()
    } else {
        p / (p - S::one())
    }
}

/// `||x||_p` for any `p` in `[1, inf]`.
///
/// Computed as `m * ||x / m||_p` with `m = ||x||_inf`, so large entries never
/// overflow `|x_j|^p`.
pub fn lp_norm<S: Scalar>(x: &[S], p: S) -> S {
    let m = x.iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
    if p.is_infinite() || m == S::zero() {
        return m;
    }
    if p == S::one() {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == S::two() {
        let s: S = x.iter().map(|&v| (v / m) * (v / m)).sum();
        return m * s.sqrt();
    }
    let s: S = x.iter().map(|&v| abs_pow(v / m, p)).sum();
    m * s.powf(S::one() / p)
}

/// A closed lp ball `{x : ||x - center||_p <= radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball<S> {
    space: NormSpec<S>,
    radius: S,
    center: Vec<S>,
}

impl<S: Scalar> Ball<S> {
    /// Ball of the given radius centered at the origin.
    pub fn new(space: NormSpec<S>, radius: S) -> Result<Self> {
        Self::with_center(space, radius, vec![S::zero(); space.n()])
    }

    pub fn with_center(space: NormSpec<S>, radius: S, center: Vec<S>) -> Result<Self> {
        if !(radius > S::zero()) || radius.is_infinite() {
            return Err(Error::InvalidConfig(format!("ball radius {radius} must be positive and finite")));
        }
        check_dim(space.n(), center.len())?;
        Ok(Self { space, radius, center })
    }

    pub fn space(&self) -> &NormSpec<S> {
        &self.space
    }

    pub fn radius(&self) -> S {
        self.radius
    }

    pub fn center(&self) -> &[S] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.space.n()
    }

    /// `||x - center||_p`.
    pub fn distance_from_center(&self, x: &[S]) -> Result<S> {
        check_dim(self.dim(), x.len())?;
        let d: Vec<S> = x.iter().zip(&self.center).map(|(&a, &c)| a - c).collect();
        Ok(lp_norm(&d, self.space.p()))
    }

    pub fn contains(&self, x: &[S], rel_tol: S) -> Result<bool> {
        Ok(self.distance_from_center(x)? <= self.radius * (S::one() + rel_tol))
    }

    /// Linear minimization oracle: a minimizer of `<c, x>` over the ball.
    ///
    /// Coordinates with `c_j = 0` stay at the center coordinate. For `p = 1` the
    /// whole radius goes to the first coordinate of maximal `|c_j|`. `c = 0`
    /// returns the center.
    pub fn lmo(&self, c: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), c.len())?;
        let r = self.radius;
        let mut x = self.center.clone();
        let m = c.iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
        if m == S::zero() {
            return Ok(x);
        }
        let p = self.space.p();
        if p.is_infinite() {
            for (xj, &cj) in x.iter_mut().zip(c) {
                if cj > S::zero() {
                    *xj -= r;
                } else if cj < S::zero() {
                    *xj += r;
                }
            }
        } else if p == S::one() {
            let j = c.iter().position(|v| v.abs() == m).expect("max attained");
            x[j] -= r * c[j].signum();
        } else {
            // Hölder equality: x_j - center_j = -R sign(c_j) |c_j|^{q-1} / ||c||_q^{q-1}.
            let q = conjugate(p);
            let e = q - S::one();
            let scaled: Vec<S> = c.iter().map(|&v| v / m).collect();
            let nq = lp_norm(&scaled, q);
            let denom = nq.powf(e);
            for (xj, &cj) in x.iter_mut().zip(&scaled) {
                if cj != S::zero() {
                    *xj -= r * cj.signum() * abs_pow(cj, e) / denom;
                }
            }
        }
        Ok(x)
    }

    /// Euclidean projection onto the ball; supported for `p` in `{2, inf}`.
    pub fn project(&self, x: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), x.len())?;
        let p = self.space.p();
        let r = self.radius;
        if p.is_infinite() {
            Ok(x.iter().zip(&self.center).map(|(&v, &c)| (v - c).max(-r).min(r) + c).collect())
        } else if p == S::two() {
            let d: Vec<S> = x.iter().zip(&self.center).map(|(&v, &c)| v - c).collect();
            let nd = lp_norm(&d, S::two());
            if nd <= r {
                Ok(x.to_vec())
            } else {
                let s = r / nd;
                Ok(d.iter().zip(&self.center).map(|(&v, &c)| c + s * v).collect())
            }
        } else {
            Err(Error::Unsupported(format!("Euclidean projection onto an l{p} ball")))
        }
    }

    /// Value of the linear minimization problem, `<c, center> - R ||c||_q`.
    pub fn support_min(&self, c: &[S]) -> Result<S> {
        check_dim(self.dim(), c.len())?;
        Ok(dot(c, &self.center) - self.radius * lp_norm(c, self.space.q()))
    }
}

/// Random point of the ball `{||x||_p <= radius}` in `R^n`: a Gaussian direction
/// normalized in `||.||_p`, scaled by `radius * U` with `U` uniform on `[0, 1)`.
pub fn sample_in_ball<S: Scalar, R: rand::Rng + ?Sized>(rng: &mut R, p: S, n: usize, radius: S) -> Vec<S> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let d: Vec<S> =
            (0..n).map(|_| S::lit(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))).collect();
        let nd = lp_norm(&d, p);
        if nd > S::zero() {
            let u = S::lit(rng.random::<f64>());
            return d.iter().map(|&v| v / nd * radius * u).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(p: f64, n: usize) -> NormSpec<f64> {
        NormSpec::new(p, n).unwrap()
    }

    #[test]
    fn norms_of_small_vectors() {
        assert_eq!(sp(2.0, 2).norm(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(sp(f64::INFINITY, 2).norm(&[-1.0, 0.5]).unwrap(), 1.0);
        assert_eq!(sp(1.0, 3).norm(&[1.0, 1.0, 1.0]).unwrap(), 3.0);
    }

    #[test]
    fn dual_norms() {
        assert_eq!(sp(f64::INFINITY, 2).dual_norm(&[1.0, -2.0]).unwrap(), 3.0);
        assert_eq!(sp(2.0, 2).dual_norm(&[3.0, 4.0]).unwrap(), 5.0);
        // l_{4/3} norm of (1, 1) is 2^{3/4}
        let direct = (2.0f64).powf(3.0 / 4.0);
        assert!((sp(4.0, 2).dual_norm(&[1.0, 1.0]).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = sp(2.0, 3).norm(&[1.0, 2.0]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, got: 2 });
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(NormSpec::new(0.5f64, 3).is_err());
        assert!(NormSpec::new(f64::NAN, 3).is_err());
        assert!(NormSpec::new(2.0f64, 0).is_err());
    }

    #[test]
    fn huge_entries_do_not_overflow() {
        let x = [1e300, 1e300];
        let v = lp_norm(&x, 4.0);
        assert!((v / 1e300 - 2f64.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn lmo_examples() {
        let b = Ball::new(sp(f64::INFINITY, 3), 1.0).unwrap();
        assert_eq!(b.lmo(&[1.0, -2.0, 0.0]).unwrap(), vec![-1.0, 1.0, 0.0]);
        assert_eq!(b.lmo(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let b2 = Ball::new(sp(2.0, 2), 1.0).unwrap();
        let v = b2.lmo(&[3.0, 4.0]).unwrap();
        assert!((v[0] + 0.6).abs() < 1e-15 && (v[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn lmo_l1_picks_first_largest() {
        let b = Ball::new(sp(1.0, 3), 2.0).unwrap();
        assert_eq!(b.lmo(&[1.0, -3.0, 3.0]).unwrap(), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn lmo_respects_center() {
        let b = Ball::with_center(sp(f64::INFINITY, 2), 0.5, vec![1.0, -1.0]).unwrap();
        assert_eq!(b.lmo(&[2.0, 0.0]).unwrap(), vec![0.5, -1.0]);
    }

    #[test]
    fn projection_examples() {
        let b = Ball::new(sp(f64::INFINITY, 2), 1.0).unwrap();
        assert_eq!(b.project(&[2.0, -0.5]).unwrap(), vec![1.0, -0.5]);
        let b2 = Ball::new(sp(2.0, 2), 1.0).unwrap();
        let v = b2.project(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(b2.project(&[0.1, 0.0]).unwrap(), vec![0.1, 0.0]);
    }

    #[test]
    fn projection_unsupported_for_general_p() {
        let b = Ball::new(sp(3.0, 2), 1.0).unwrap();
        assert!(matches!(b.project(&[1.0, 1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let b = Ball::new(NormSpec::new(2.0f32, 2).unwrap(), 1.0).unwrap();
        let v = b.lmo(&[3.0, 4.0]).unwrap();
        assert!((v[0] + 0.6).abs() < 1e-6);
    }
}
