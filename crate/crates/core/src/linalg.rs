//! Dense linear-algebra helpers: real eigendecompositions of diagonalizable
//! matrices, matrix exponentials, operator norms, and log-magnitude matrix
//! products that do not overflow for large powers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Real eigendecomposition `A = X diag(v) X^{-1}` of a matrix that is
/// diagonalizable with real eigenvalues. Eigenvalues are sorted ascending and
/// the columns of `X` follow the sort.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub vectors_inv: DMatrix<f64>,
}

impl Eigen {
    /// exp(s * A) reconstructed from the eigendecomposition.
    pub fn exp_scaled(&self, s: f64) -> DMatrix<f64> {
        let n = self.values.len();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (s * self.values[i]).exp()
            } else {
                0.0
            }
        });
        &self.vectors * d * &self.vectors_inv
    }

    /// exp(s * A) with the largest diagonal exponential factored out, returned
    /// as (log_scale, matrix) with `exp(sA) = e^{log_scale} * matrix`.
    pub fn exp_scaled_log(&self, s: f64) -> (f64, DMatrix<f64>) {
        let shift = self
            .values
            .iter()
            .map(|v| s * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let n = self.values.len();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (s * self.values[i] - shift).exp()
            } else {
                0.0
            }
        });
        (shift, &self.vectors * d * &self.vectors_inv)
    }

    /// Condition-style bound `kappa = ||X|| * ||X^{-1}||`.
    pub fn basis_condition(&self) -> f64 {
        opnorm(&self.vectors) * opnorm(&self.vectors_inv)
    }
}

/// Eigendecomposition of a real matrix that must be diagonalizable with real,
/// strictly positive eigenvalues. Geometric multiplicities are obtained from
/// SVD null spaces of `A - lambda I`.
pub fn eig_positive(a: &DMatrix<f64>) -> Result<Eigen> {
    let n = a.nrows();
    let scale = opnorm(a).max(1.0);
    let complex = a.clone().complex_eigenvalues();
    let tol = 1e-8 * scale;
    let mut values: Vec<f64> = Vec::with_capacity(n);
    for ev in complex.iter() {
        if ev.im.abs() > tol {
            return Err(Error::NonpositiveEigenvalue(ev.re));
        }
        values.push(ev.re);
    }
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for &v in &values {
        if v <= tol {
            return Err(Error::NonpositiveEigenvalue(v));
        }
    }

    // Cluster eigenvalues and extract eigenvectors per cluster.
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &v in &values {
        match clusters.last_mut() {
            Some((rep, count)) if (v - *rep).abs() <= 1e-7 * scale => {
                *rep = (*rep * *count as f64 + v) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => clusters.push((v, 1)),
        }
    }

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut sorted_values = Vec::with_capacity(n);
    for &(lambda, mult) in &clusters {
        let shifted = a - DMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(true, true);
        let v_t = svd.v_t.as_ref().expect("svd vectors requested");
        let mut null: Vec<DVector<f64>> = Vec::new();
        for i in 0..n {
            if svd.singular_values[i] <= 1e-7 * scale {
                null.push(v_t.row(i).transpose());
            }
        }
        if null.len() < mult {
            return Err(Error::NotDiagonalizable);
        }
        for vec in null.into_iter().take(mult) {
            cols.push(vec);
            sorted_values.push(lambda);
        }
    }
    let vectors = DMatrix::from_columns(&cols);
    let vectors_inv = vectors
        .clone()
        .try_inverse()
        .ok_or(Error::NotDiagonalizable)?;
    Ok(Eigen {
        values: sorted_values,
        vectors,
        vectors_inv,
    })
}

/// Operator (spectral) norm via singular values.
pub fn opnorm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Matrix exponential by scaling and squaring with a Pade [6/6] approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.camax();
    let mut squarings = 0u32;
    let mut b = a.clone();
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
        b /= 2f64.powi(squarings as i32);
    }
    // Pade [6/6]: p(x)/p(-x) with p the truncated even/odd split.
    let c = [
        1.0,
        0.5,
        3.0 / 26.0,
        5.0 / 312.0,
        5.0 / 3432.0,
        1.0 / 11440.0,
        1.0 / 308880.0,
    ];
    let id = DMatrix::identity(n, n);
    let b2 = &b * &b;
    let b4 = &b2 * &b2;
    let b6 = &b2 * &b4;
    let even = &id * c[0] + &b2 * c[2] + &b4 * c[4] + &b6 * c[6];
    let odd = &b * (&id * c[1] + &b2 * c[3] + &b4 * c[5]);
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is nonsingular");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// expm in `ScaledMatrix` form: the squaring phase renormalizes, so inputs
/// whose exponential overflows f64 stay representable.
pub fn expm_scaled(a: &DMatrix<f64>) -> ScaledMatrix {
    let norm = a.camax();
    let mut squarings = 0u32;
    let mut b = a.clone();
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
        b /= 2f64.powi(squarings as i32);
    }
    let mut r = ScaledMatrix::new(expm(&b));
    for _ in 0..squarings {
        r = r.mul(&r.clone());
    }
    r
}

/// A matrix carried as `e^{log_scale} * mat` so that norms of large powers
/// stay representable.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub log_scale: f64,
    pub mat: DMatrix<f64>,
}

impl ScaledMatrix {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self {
            log_scale: 0.0,
            mat,
        }
    }

    pub fn from_log(log_scale: f64, mat: DMatrix<f64>) -> Self {
        Self { log_scale, mat }
    }

    /// Renormalize so the max-abs entry of `mat` is about 1.
    fn renorm(mut self) -> Self {
        let m = self.mat.camax();
        if m > 0.0 && m.is_finite() {
            self.mat /= m;
            self.log_scale += m.ln();
        }
        self
    }

    pub fn mul(&self, other: &ScaledMatrix) -> ScaledMatrix {
        ScaledMatrix {
            log_scale: self.log_scale + other.log_scale,
            mat: &self.mat * &other.mat,
        }
        .renorm()
    }

    /// ln of the operator norm.
    pub fn log_opnorm(&self) -> f64 {
        self.log_scale + opnorm(&self.mat).ln()
    }

    /// ln of |det|.
    pub fn log_abs_det(&self) -> f64 {
        let n = self.mat.nrows() as f64;
        self.log_scale * n + self.mat.determinant().abs().ln()
    }

    /// Materialize the plain matrix (may overflow for huge scales).
    pub fn dense(&self) -> DMatrix<f64> {
        &self.mat * self.log_scale.exp()
    }
}
