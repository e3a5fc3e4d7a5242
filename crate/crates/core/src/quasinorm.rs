//! A-homogeneous quasi-norms via the implicit unit-sphere construction:
//! rho_A(x) is the unique r > 0 with ||delta_{1/r}^A x|| = 1. Balls,
//! sampled quasi-triangle constants and the Euclidean comparison constants.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dilations::DilationMatrix;
use crate::error::{Error, Result};
use crate::lie::{bch_product, GroupPoint, LieAlgebra};
use crate::rng::seeded;

/// Evaluator for the quasi-norm of an admissible dilation matrix.
#[derive(Debug, Clone)]
pub struct QuasiNormHandle {
    pub algebra: LieAlgebra,
    pub dilation: DilationMatrix,
    /// Relative bisection tolerance.
    pub solver_tolerance: f64,
    pub cached_triangle_c: Option<f64>,
    pub cached_eta: Option<EtaConstants>,
}

/// The two-sided comparison c1 ||x|| <= rho(x) <= c2 ||x||^gamma on a ball
/// of quasi-radius `radius`, estimated by sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EtaConstants {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    QuasiNorm,
    Euclidean,
}

#[derive(Debug, Clone)]
pub struct Ball {
    pub center: GroupPoint,
    pub radius: f64,
    pub norm_kind: NormKind,
}

impl QuasiNormHandle {
    pub fn new(algebra: LieAlgebra, dilation: DilationMatrix) -> Self {
        Self {
            algebra,
            dilation,
            solver_tolerance: 1e-13,
            cached_triangle_c: None,
            cached_eta: None,
        }
    }

    /// rho_A(x): bisection after geometric bracketing from r0 = ||x||.
    pub fn eval(&self, x: &GroupPoint) -> Result<f64> {
        let norm = x.euclidean_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let eig = &self.dilation.eigen;
        // ||delta_{1/r} x|| = ||X diag(r^{-v}) X^{-1} x||.
        let w = &eig.vectors_inv * &x.coords;
        let g = |r: f64| -> f64 {
            let s = DVector::from_fn(w.len(), |i, _| (-eig.values[i] * r.ln()).exp() * w[i]);
            (&eig.vectors * s).norm()
        };
        let mut lo = norm.max(1e-300);
        let mut hi = lo;
        let mut steps = 0;
        while g(lo) < 1.0 {
            lo *= 0.5;
            steps += 1;
            if steps > 4000 {
                return Err(Error::SolverBracketFailure(norm));
            }
        }
        while g(hi) > 1.0 {
            hi *= 2.0;
            steps += 1;
            if steps > 4000 {
                return Err(Error::SolverBracketFailure(norm));
            }
        }
        for _ in 0..200 {
            if hi - lo <= self.solver_tolerance * lo {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if g(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The explicit quasi-norm (sum |x_i'|^{2N/v_i})^{1/2N} in eigenbasis
    /// coordinates; equivalent to `eval` for the same matrix.
    pub fn explicit_eval(&self, x: &GroupPoint) -> f64 {
        let eig = &self.dilation.eigen;
        let w = &eig.vectors_inv * &x.coords;
        let two_n = 2.0 * self.dilation.max_eigenvalue().ceil().max(1.0);
        let mut s = 0.0;
        for i in 0..w.len() {
            s += w[i].abs().powf(two_n / eig.values[i]);
        }
        s.powf(1.0 / two_n)
    }

    /// Draw a point delta_r^A(u) with ||u|| = 1, r in (0, radius].
    pub fn sample_in_ball(&self, radius: f64, rng: &mut impl Rng) -> GroupPoint {
        let n = self.dilation.dim();
        let mut u = DVector::from_fn(n, |_, _| {
            // Box-Muller standard normal
            let a: f64 = rng.gen_range(1e-12..1.0);
            let b: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * a.ln()).sqrt() * b.cos()
        });
        let norm = u.norm();
        if norm == 0.0 {
            u[0] = 1.0;
        } else {
            u /= norm;
        }
        let r = rng.gen_range(0.0..1.0f64).max(1e-12) * radius;
        let map = self.dilation.eigen.exp_scaled(r.ln());
        GroupPoint::new(map * u)
    }

    /// Sampled estimate of the quasi-triangle constant C in
    /// rho(xy) <= C (rho(x) + rho(y)) over pairs drawn in the ball of
    /// quasi-radius 10. Monotone nondecreasing in `sample_count` for a fixed
    /// seed: samples are drawn sequentially from one stream.
    pub fn estimate_quasi_triangle_c(&mut self, sample_count: usize, seed: u64) -> Result<f64> {
        let mut rng = seeded(seed);
        let mut worst = 0.0f64;
        for _ in 0..sample_count {
            let x = self.sample_in_ball(10.0, &mut rng);
            let y = self.sample_in_ball(10.0, &mut rng);
            let xy = bch_product(&x, &y, &self.algebra);
            let rx = self.eval(&x)?;
            let ry = self.eval(&y)?;
            let rxy = self.eval(&xy)?;
            if rx + ry > 0.0 {
                worst = worst.max(rxy / (rx + ry));
            }
        }
        self.cached_triangle_c = Some(worst);
        Ok(worst)
    }

    /// Sampled gamma, c1, c2 on the ball of quasi-radius R. Requires the
    /// minimum eigenvalue to be 1.
    pub fn estimate_eta_constants(
        &mut self,
        radius: f64,
        sample_count: usize,
        seed: u64,
    ) -> Result<EtaConstants> {
        self.dilation.require_normalized(1e-10)?;
        let gamma = 1.0 / self.dilation.max_eigenvalue();
        let mut rng = seeded(seed);
        let mut c1 = f64::INFINITY;
        let mut c2 = 0.0f64;
        for _ in 0..sample_count {
            let x = self.sample_in_ball(radius, &mut rng);
            let rho = self.eval(&x)?;
            let e = x.euclidean_norm();
            if e == 0.0 {
                continue;
            }
            c1 = c1.min(rho / e);
            c2 = c2.max(rho / e.powf(gamma));
        }
        let eta = EtaConstants {
            gamma,
            c1,
            c2,
            radius,
            samples: sample_count,
            seed,
        };
        self.cached_eta = Some(eta);
        Ok(eta)
    }

    /// C required at (x, y) for ||xy|| <= C (||x||^gamma + ||y||^gamma).
    pub fn euclid_quasi_triangle(&self, x: &GroupPoint, y: &GroupPoint) -> f64 {
        let gamma = 1.0 / self.dilation.max_eigenvalue();
        let xy = bch_product(x, y, &self.algebra);
        let denom = x.euclidean_norm().powf(gamma) + y.euclidean_norm().powf(gamma);
        if denom == 0.0 {
            return 0.0;
        }
        xy.euclidean_norm() / denom
    }

    /// Monte Carlo volume of the quasi-norm ball of given radius.
    pub fn ball_volume_mc(&self, radius: f64, samples: usize, seed: u64) -> Result<f64> {
        let n = self.dilation.dim();
        let kappa = self.dilation.eigen.basis_condition();
        let v1 = self.dilation.min_eigenvalue();
        let vn = self.dilation.max_eigenvalue();
        let half = kappa * radius.powf(v1).max(radius.powf(vn)) * 1.0001;
        let mut rng = seeded(seed);
        let mut hits = 0usize;
        for _ in 0..samples {
            let x = GroupPoint::new(DVector::from_fn(n, |_, _| rng.gen_range(-half..half)));
            if self.eval(&x)? < radius {
                hits += 1;
            }
        }
        Ok(hits as f64 / samples as f64 * (2.0 * half).powi(n as i32))
    }
}

/// Membership test rho_A(x0^{-1} x) < r, or the Euclidean analogue.
pub fn ball_membership(h: &QuasiNormHandle, ball: &Ball, x: &GroupPoint) -> Result<bool> {
    let rel = bch_product(&ball.center.inverse(), x, &h.algebra);
    match ball.norm_kind {
        NormKind::QuasiNorm => Ok(h.eval(&rel)? < ball.radius),
        NormKind::Euclidean => Ok(rel.euclidean_norm() < ball.radius),
    }
}
