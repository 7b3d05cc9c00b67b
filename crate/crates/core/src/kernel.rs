//! Smoothing kernels for the lp geometry.
//!
//! For `p > 2` the kernel is `phi(x) = 2 (sum_j |x_j|^r)^{2 theta / r}` with
//! `2 < r <= p`, `theta > 1` and `2 theta / r < 1`; for `p = 2` it is
//! `phi(x) = 2 ||x||_2^2`. Both are paired with the unit lp ball as the compact
//! set outside of which the kernel dominates the norm, so `rho = 1`.

use crate::error::{check_dim, Error, Result};
use crate::scalar::{abs_pow, dot, sign_nonneg, Scalar};
use crate::space::{lp_norm, NormSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelVariant<S> {
    PNorm { r: S, theta: S },
    Euclidean,
}

/// A smoothing kernel together with its certified Hessian constant `m_phi`
/// (`<e, phi''(h) e> <= m_phi ||e||_p^2` on the unit ball) and radius `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel<S> {
    variant: KernelVariant<S>,
    space: NormSpec<S>,
    m_phi: S,
    rho: S,
}

/// `r = min(p, 3 ln n)`, clamped to 3 when that would not exceed 2.
fn exponent_r<S: Scalar>(p: S, n: usize) -> S {
    let r = p.min(S::lit(3.0) * S::from_usize_lossy(n).ln());
    if r <= S::two() {
        S::lit(3.0)
    } else {
        r
    }
}

fn theta_for<S: Scalar>(r: S, n: usize) -> S {
    let slack = S::lit(0.25).min((r / S::two() - S::one()) / S::two());
    S::one() + slack / S::from_usize_lossy(n.max(3)).ln()
}

/// `4 theta (r - 1) n^{2 theta (p - r) / (p r)}`: the Hessian bound on the unit
/// lp ball, `2 theta / r` being the exponent's `p = inf` limit.
fn certified_m<S: Scalar>(p: S, n: usize, r: S, theta: S) -> S {
    let expo = if p.is_infinite() { S::two() * theta / r } else { S::two() * theta * (p - r) / (p * r) };
    S::lit(4.0) * theta * (r - S::one()) * S::from_usize_lossy(n).powf(expo)
}

impl<S: Scalar> SmoothingKernel<S> {
    /// Builds the kernel for `(R^n, ||.||_p)` with `p >= 2`.
    pub fn new(space: NormSpec<S>) -> Result<Self> {
        let p = space.p();
        let n = space.n();
        if p < S::two() {
            return Err(Error::Unsupported(format!(
                "smoothing kernels need p >= 2, got p = {p}; use the section reduction"
            )));
        }
        if p == S::two() {
            return Ok(Self { variant: KernelVariant::Euclidean, space, m_phi: S::lit(4.0), rho: S::one() });
        }
        if n <= 2 {
            return Err(Error::TooSmallDimension(n));
        }
        let r = exponent_r(p, n);
        let theta = theta_for(r, n);
        Self::with_params(space, r, theta)
    }

    /// PNorm kernel with explicit `(r, theta)`; validates `2 < r <= p`,
    /// `theta > 1` and `2 theta / r < 1`.
    pub fn with_params(space: NormSpec<S>, r: S, theta: S) -> Result<Self> {
        let p = space.p();
        if !(r > S::two() && r <= p && theta > S::one() && S::two() * theta < r) {
            return Err(Error::InvalidConfig(format!(
                "kernel parameters r = {r}, theta = {theta} violate 2 < r <= p = {p}, theta > 1, 2 theta < r"
            )));
        }
        let m_phi = certified_m(p, space.n(), r, theta);
        Ok(Self { variant: KernelVariant::PNorm { r, theta }, space, m_phi, rho: S::one() })
    }

    pub fn variant(&self) -> KernelVariant<S> {
        self.variant
    }

    pub fn space(&self) -> &NormSpec<S> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.n()
    }

    pub fn m_phi(&self) -> S {
        self.m_phi
    }

    pub fn rho(&self) -> S {
        self.rho
    }

    /// `(r, theta)` for PNorm kernels.
    pub fn r_theta(&self) -> Option<(S, S)> {
        match self.variant {
            KernelVariant::PNorm { r, theta } => Some((r, theta)),
            KernelVariant::Euclidean => None,
        }
    }

    pub fn value(&self, h: &[S]) -> Result<S> {
        check_dim(self.dim(), h.len())?;
        Ok(self.value_unchecked(h))
    }

    pub fn grad(&self, h: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), h.len())?;
        Ok(self.grad_unchecked(h))
    }

    /// Solves `phi'(h) = v` for `h`.
    pub fn grad_invert(&self, v: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), v.len())?;
        self.grad_invert_unchecked(v)
    }

    /// `<e, phi''(h) e>`; zero at `h = 0` for PNorm kernels, where the form is
    /// `(2 theta - 2)`-homogeneous and vanishes continuously.
    pub fn hessian_quadform(&self, h: &[S], e: &[S]) -> Result<S> {
        check_dim(self.dim(), h.len())?;
        check_dim(self.dim(), e.len())?;
        Ok(match self.variant {
            KernelVariant::Euclidean => {
                let en = lp_norm(e, S::two());
                S::lit(4.0) * en * en
            }
            KernelVariant::PNorm { r, theta } => {
                let m = max_abs(h);
                if m == S::zero() {
                    return Ok(S::zero());
                }
                let a = S::two() * theta / r;
                let mut sum_r = S::zero();
                let mut lin = S::zero();
                let mut quad = S::zero();
                for (&hj, &ej) in h.iter().zip(e) {
                    let u = hj / m;
                    sum_r += abs_pow(u, r);
                    lin += abs_pow(u, r - S::one()) * sign_nonneg(u) * ej;
                    quad += abs_pow(u, r - S::two()) * ej * ej;
                }
                let scale = m.powf(S::two() * theta - S::two());
                let four = S::lit(4.0);
                let t1 = four * r * theta * (a - S::one()) * sum_r.powf(a - S::two()) * lin * lin;
                let t2 = four * theta * (r - S::one()) * sum_r.powf(a - S::one()) * quad;
                scale * (t1 + t2)
            }
        })
    }

    /// Convex conjugate `phi*(v) = <v, h> - phi(h)` with `phi'(h) = v`.
    pub fn conjugate(&self, v: &[S]) -> Result<S> {
        check_dim(self.dim(), v.len())?;
        self.conjugate_unchecked(v)
    }

    pub(crate) fn conjugate_unchecked(&self, v: &[S]) -> Result<S> {
        let h = self.grad_invert_unchecked(v)?;
        Ok(dot(v, &h) - self.value_unchecked(&h))
    }

    pub(crate) fn value_unchecked(&self, h: &[S]) -> S {
        match self.variant {
            KernelVariant::Euclidean => S::two() * dot(h, h),
            KernelVariant::PNorm { r, theta } => {
                let m = max_abs(h);
                if m == S::zero() {
                    return S::zero();
                }
                let sum_r: S = h.iter().map(|&x| abs_pow(x / m, r)).sum();
                // 2 s^{2 theta / r} with s = m^r sum_r
                let two_theta = S::two() * theta;
                S::two() * (two_theta * m.ln() + (two_theta / r) * sum_r.ln()).exp()
            }
        }
    }

    pub(crate) fn grad_unchecked(&self, h: &[S]) -> Vec<S> {
        match self.variant {
            KernelVariant::Euclidean => h.iter().map(|&x| S::lit(4.0) * x).collect(),
            KernelVariant::PNorm { r, theta } => {
                let m = max_abs(h);
                if m == S::zero() {
                    return vec![S::zero(); h.len()];
                }
                let sum_r: S = h.iter().map(|&x| abs_pow(x / m, r)).sum();
                let a = S::two() * theta / r;
                let two_theta = S::two() * theta;
                // 4 theta s^{a-1} |h_j|^{r-1} = 4 theta (sum_r)^{a-1} m^{2 theta - 1} |h_j/m|^{r-1}
                let common =
                    S::lit(4.0) * theta * ((a - S::one()) * sum_r.ln() + (two_theta - S::one()) * m.ln()).exp();
                h.iter()
                    .map(|&x| {
                        let u = abs_pow(x / m, r - S::one());
                        if u == S::zero() {
                            S::zero()
                        } else {
                            common * u * sign_nonneg(x)
                        }
                    })
                    .collect()
            }
        }
    }

    pub(crate) fn grad_invert_unchecked(&self, v: &[S]) -> Result<Vec<S>> {
        let m = max_abs(v);
        if m == S::zero() {
            return Ok(vec![S::zero(); v.len()]);
        }
        let h: Vec<S> = match self.variant {
            KernelVariant::Euclidean => v.iter().map(|&x| x / S::lit(4.0)).collect(),
            KernelVariant::PNorm { r, theta } => {
                // |h_j| = c |v_j|^{1/(r-1)}; the scalar equation for c is
                // 4 theta V^{a-1} c^{2 theta - 1} = 1 with V = sum |v_j|^{r/(r-1)},
                // linear in ln c.
                let a = S::two() * theta / r;
                let rm1 = r - S::one();
                let dual_r = r / rm1;
                let v_sum: S = v.iter().map(|&x| abs_pow(x / m, dual_r)).sum();
                let ln_v = dual_r * m.ln() + v_sum.ln();
                let ln_c = -((S::lit(4.0) * theta).ln() + (a - S::one()) * ln_v) / (S::two() * theta - S::one());
                v.iter()
                    .map(|&x| {
                        if x == S::zero() {
                            S::zero()
                        } else {
                            let ln_h = ln_c + (m.ln() + (x.abs() / m).ln()) / rm1;
                            sign_nonneg(x) * ln_h.exp()
                        }
                    })
                    .collect()
            }
        };
        let back = self.grad_unchecked(&h);
        let q = self.space.q();
        let diff: Vec<S> = back.iter().zip(v).map(|(&b, &x)| b - x).collect();
        let residual = lp_norm(&diff, q);
        let scale = S::one().max(lp_norm(v, q));
        if !(residual <= S::lit(1e-10) * scale) {
            // f32 cannot reach 1e-10; accept its own precision floor instead.
            let floor = S::epsilon() * S::lit(1e3) * scale;
            if !(residual <= floor) {
                return Err(Error::Numerical { what: "kernel gradient inversion".into(), residual: residual.as_f64() });
            }
        }
        Ok(h)
    }
}

fn max_abs<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(p: f64, n: usize) -> SmoothingKernel<f64> {
        SmoothingKernel::new(NormSpec::new(p, n).unwrap()).unwrap()
    }

    #[test]
    fn euclidean_for_p2() {
        let k = kernel(2.0, 7);
        assert_eq!(k.variant(), KernelVariant::Euclidean);
        assert_eq!(k.m_phi(), 4.0);
        assert_eq!(k.rho(), 1.0);
        assert_eq!(k.value(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn pnorm_parameters_box() {
        let k = kernel(f64::INFINITY, 1000);
        let (r, theta) = k.r_theta().unwrap();
        assert!((r - 3.0 * 1000f64.ln()).abs() < 1e-12);
        assert!(theta > 1.0 && 2.0 * theta < r);
        assert!(k.m_phi() <= 30.0 * 1000f64.ln());
    }

    #[test]
    fn pnorm_parameters_p4() {
        let k = kernel(4.0, 100);
        let (r, theta) = k.r_theta().unwrap();
        assert_eq!(r, 4.0);
        // theta = 1 + min(1/4, 1/2) / ln 100, exponent of n vanishes since r = p
        let expected_theta = 1.0 + 0.25 / 100f64.ln();
        assert!((theta - expected_theta).abs() < 1e-15);
        let expected_m = 4.0 * expected_theta * 3.0;
        assert!((k.m_phi() - expected_m).abs() < 1e-12);
        assert!(k.m_phi() <= 30.0 * 4f64.min(100f64.ln()));
    }

    #[test]
    fn refuses_small_p_and_tiny_dimension() {
        assert!(matches!(SmoothingKernel::new(NormSpec::new(1.5f64, 10).unwrap()), Err(Error::Unsupported(_))));
        assert!(matches!(
            SmoothingKernel::new(NormSpec::new(f64::INFINITY, 2).unwrap()),
            Err(Error::TooSmallDimension(2))
        ));
    }

    #[test]
    fn with_params_validates() {
        let sp = NormSpec::new(4.0f64, 10).unwrap();
        assert!(SmoothingKernel::with_params(sp, 4.0, 1.1).is_ok());
        assert!(SmoothingKernel::with_params(sp, 5.0, 1.1).is_err());
        assert!(SmoothingKernel::with_params(sp, 2.0, 1.1).is_err());
        assert!(SmoothingKernel::with_params(sp, 4.0, 2.5).is_err());
        assert!(SmoothingKernel::with_params(sp, 4.0, 1.0).is_err());
    }

    #[test]
    fn property_a_at_origin() {
        for k in [kernel(2.0, 5), kernel(f64::INFINITY, 5), kernel(3.0, 5)] {
            let z = vec![0.0; 5];
            assert_eq!(k.value(&z).unwrap(), 0.0);
            assert!(k.grad(&z).unwrap().iter().all(|&g| g == 0.0));
            assert_eq!(k.grad_invert(&z).unwrap(), z);
            let quad = k.hessian_quadform(&z, &[1.0; 5]).unwrap();
            if k.r_theta().is_some() {
                assert_eq!(quad, 0.0);
            } else {
                assert!((quad - 20.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn basis_vector_values_and_gradients() {
        let k = SmoothingKernel::with_params(NormSpec::new(4.0f64, 3).unwrap(), 4.0, 1.1).unwrap();
        assert!((k.value(&[1.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let g = k.grad(&[1.0, 0.0, 0.0]).unwrap();
        assert!((g[0] - 4.4).abs() < 1e-14);
        assert_eq!(&g[1..], &[0.0, 0.0]);

        // central differences at step 1e-6
        let hstep = 1e-6;
        let fd =
            (k.value(&[1.0 + hstep, 0.0, 0.0]).unwrap() - k.value(&[1.0 - hstep, 0.0, 0.0]).unwrap()) / (2.0 * hstep);
        assert!((fd - 4.4).abs() < 1e-6);
    }

    #[test]
    fn euclidean_gradient_and_inverse() {
        let k = kernel(2.0, 2);
        assert_eq!(k.grad(&[1.0, -2.0]).unwrap(), vec![4.0, -8.0]);
        assert_eq!(k.grad_invert(&[4.0, -8.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(k.hessian_quadform(&[0.3, 0.1], &[1.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn quadform_zero_direction() {
        let k = kernel(f64::INFINITY, 8);
        let h = [0.1, -0.5, 0.2, 0.0, 0.9, 0.3, -0.3, 0.4];
        assert_eq!(k.hessian_quadform(&h, &[0.0; 8]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_is_positive_zero_on_empty_coordinates() {
        let k = kernel(f64::INFINITY, 4);
        let g = k.grad(&[0.5, -0.0, 0.0, -0.25]).unwrap();
        assert_eq!(g[1].to_bits(), 0.0f64.to_bits());
        assert_eq!(g[2].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn conjugate_of_euclidean() {
        // phi(h) = 2|h|^2 gives phi*(v) = |v|^2 / 8
        let k = kernel(2.0, 2);
        assert!((k.conjugate(&[4.0, -8.0]).unwrap() - 10.0).abs() < 1e-14);
    }
}
