//! Admissible dilation matrices, the automorphic dilations r -> exp(ln(r) A),
//! general (non-automorphic) dilations, and function dilations D_t^{L,p}.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::lie::{GroupPoint, LieAlgebra};
use crate::linalg::{eig_positive, expm, opnorm, Eigen};

/// An admissible dilation matrix: diagonalizable with positive eigenvalues
/// and a derivation of the algebra.
#[derive(Debug, Clone)]
pub struct DilationMatrix {
    pub matrix: DMatrix<f64>,
    pub eigen: Eigen,
    pub trace: f64,
    pub is_derivation: bool,
}

impl DilationMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues sorted ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen.values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigen.values.last().unwrap()
    }

    pub fn op_norm(&self) -> f64 {
        opnorm(&self.matrix)
    }

    /// The linear map of the dilation: exp(ln(r) A).
    pub fn dilation_map(&self, r: f64) -> Result<DMatrix<f64>> {
        if r <= 0.0 {
            return Err(Error::NonpositiveScale(r));
        }
        Ok(self.eigen.exp_scaled(r.ln()))
    }

    /// Rescaled so the minimum eigenvalue is 1. Never applied silently.
    pub fn normalized(&self, a: &LieAlgebra) -> DilationMatrix {
        let v1 = self.min_eigenvalue();
        check_admissible(&(&self.matrix / v1), a).expect("rescaling preserves admissibility")
    }

    /// Require min eigenvalue 1 within `tol`.
    pub fn require_normalized(&self, tol: f64) -> Result<()> {
        let v1 = self.min_eigenvalue();
        if (v1 - 1.0).abs() > tol {
            return Err(Error::NotNormalized(v1));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64, a: &LieAlgebra) -> DilationMatrix {
        check_admissible(&(&self.matrix * c), a).expect("positive multiples stay admissible")
    }
}

/// An arbitrary invertible matrix used as a (not necessarily automorphic)
/// dilation generator.
#[derive(Debug, Clone)]
pub struct GeneralDilation {
    pub matrix: DMatrix<f64>,
    pub trace: f64,
}

impl GeneralDilation {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let det = matrix.determinant().abs();
        let scale = matrix.camax().max(1.0);
        if det <= 1e-14 * scale.powi(matrix.nrows() as i32) {
            return Err(Error::SingularMatrix(det));
        }
        let trace = matrix.trace();
        Ok(Self { matrix, trace })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            trace: n as f64,
        }
    }

    /// exp(ln(t) * Lambda) by scaling-and-squaring.
    pub fn dilation_map(&self, t: f64) -> Result<DMatrix<f64>> {
        if t <= 0.0 {
            return Err(Error::NonpositiveScale(t));
        }
        Ok(expm(&(&self.matrix * t.ln())))
    }
}

/// Admissibility check: diagonalizable, positive eigenvalues, derivation.
pub fn check_admissible(m: &DMatrix<f64>, a: &LieAlgebra) -> Result<DilationMatrix> {
    if m.nrows() != a.dim || m.ncols() != a.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: m.nrows(),
        });
    }
    let eigen = eig_positive(m)?;
    if let Some((i, j, res)) = a.derivation_residual(m) {
        return Err(Error::NotDerivation(i, j, res));
    }
    let trace = m.trace();
    let sum: f64 = eigen.values.iter().sum();
    debug_assert!((trace - sum).abs() <= 1e-10 * trace.abs().max(1.0));
    Ok(DilationMatrix {
        matrix: m.clone(),
        eigen,
        trace,
        is_derivation: true,
    })
}

/// Apply the automorphic dilation to a point.
pub fn dilate_point(d: &DilationMatrix, r: f64, x: &GroupPoint) -> Result<GroupPoint> {
    Ok(GroupPoint::new(d.dilation_map(r)? * &x.coords))
}

/// Apply a general dilation to a point.
pub fn dilate_point_general(d: &GeneralDilation, t: f64, x: &GroupPoint) -> Result<GroupPoint> {
    Ok(GroupPoint::new(d.dilation_map(t)? * &x.coords))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Multilinear,
    Nearest,
}

/// D_t^{L,p} f(x) = t^{tr(L)/p} f(delta_t^L x), resampled on the grid of `f`.
///
/// Samples falling outside the source box are taken as zero when `f` vanishes
/// on its boundary shell; otherwise the coverage is genuinely insufficient.
pub fn dilate_function(
    map: &DMatrix<f64>,
    trace: f64,
    t: f64,
    p: f64,
    f: &GridFunction,
    resampling: Resampling,
) -> Result<GridFunction> {
    if t <= 0.0 {
        return Err(Error::NonpositiveScale(t));
    }
    let factor = t.powf(trace / p);
    let dil = map;
    let boundary_ok = f.boundary_max_abs() == 0.0;
    let spec = f.spec;
    let mut out = GridFunction::zeros(spec);
    let mut missed = false;
    for i in 0..spec.node_count() {
        let y = dil * spec.node_coord(i);
        let v = match resampling {
            Resampling::Multilinear => f.eval_multilinear(&y),
            Resampling::Nearest => f.eval_nearest(&y),
        };
        match v {
            Some(v) => out.values[i] = factor * v,
            None => missed = true,
        }
    }
    if missed && !boundary_ok {
        return Err(Error::GridCoverage);
    }
    Ok(out)
}

/// Convenience wrapper taking the general dilation and scale.
pub fn dilate_function_general(
    lambda: &GeneralDilation,
    t: f64,
    p: f64,
    f: &GridFunction,
    resampling: Resampling,
) -> Result<GridFunction> {
    let map = lambda.dilation_map(t)?;
    dilate_function(&map, lambda.trace, t, p, f, resampling)
}

/// Residual of the commutation delta_t^I delta_r^L x = delta_r^L delta_t^I x.
pub fn commute_identity_check(
    lambda: &GeneralDilation,
    r: f64,
    t: f64,
    x: &GroupPoint,
) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::NonpositiveScale(r));
    }
    if t <= 0.0 {
        return Err(Error::NonpositiveScale(t));
    }
    let map = lambda.dilation_map(r)?;
    let a = (&map * &x.coords) * t;
    let b = &map * (&x.coords * t);
    Ok((a - b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::grid::GridSpec;
    use crate::lie::{abelian, heisenberg};
    use approx::assert_relative_eq;

    fn diag(entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(entries.len(), entries.len(), |i, j| {
            if i == j {
                entries[i]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identity_on_abelian_is_admissible() {
        let a = abelian(2);
        let d = check_admissible(&DMatrix::identity(2, 2), &a).unwrap();
        assert_eq!(d.eigenvalues(), &[1.0, 1.0]);
    }

    #[test]
    fn heisenberg_standard_dilation_admissible() {
        let a = heisenberg();
        let d = check_admissible(&diag(&[1.0, 1.0, 2.0]), &a).unwrap();
        assert!(d.is_derivation);
        assert_relative_eq!(d.trace, 4.0);
    }

    #[test]
    fn heisenberg_non_derivation_rejected() {
        let a = heisenberg();
        // A[Y1,Y2] = 2 Y3 but [AY1,Y2] + [Y1,AY2] = 3 Y3.
        let r = check_admissible(&diag(&[1.0, 2.0, 2.0]), &a);
        assert!(matches!(r, Err(Error::NotDerivation(0, 1, _))));
    }

    #[test]
    fn dilate_point_eigen_exponentiation() {
        let a = heisenberg();
        let d = check_admissible(&diag(&[1.0, 1.0, 2.0]), &a).unwrap();
        let x = GroupPoint::from_slice(&[1.0, 1.0, 1.0]);
        let y = dilate_point(&d, 2.0, &x).unwrap();
        assert_relative_eq!(y.coords[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(y.coords[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(y.coords[2], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn scale_one_is_identity() {
        let a = heisenberg();
        let d = check_admissible(&diag(&[1.0, 1.0, 2.0]), &a).unwrap();
        let x = GroupPoint::from_slice(&[0.3, -0.2, 0.9]);
        let y = dilate_point(&d, 1.0, &x).unwrap();
        assert_relative_eq!((y.coords - x.coords).camax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn one_parameter_group_law() {
        let a = heisenberg();
        let d = check_admissible(&diag(&[1.0, 1.0, 2.0]), &a).unwrap();
        let x = GroupPoint::from_slice(&[0.8, 0.1, -0.4]);
        let lhs = dilate_point(&d, 2.0, &dilate_point(&d, 3.0, &x).unwrap()).unwrap();
        let rhs = dilate_point(&d, 6.0, &x).unwrap();
        assert!((lhs.coords - rhs.coords).camax() < 1e-12);
    }

    #[test]
    fn function_dilation_change_of_variables() {
        // Abelian R^1: t = 2, p = 1, f = indicator [0,1] -> 2 * indicator [0,1/2].
        let spec = GridSpec::new(1, 4.0, 257);
        let f = GridFunction::from_fn(spec, |x| {
            if x[0] >= 0.0 && x[0] <= 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let lambda = GeneralDilation::identity(1);
        let g = dilate_function_general(&lambda, 2.0, 1.0, &f, Resampling::Nearest).unwrap();
        let x_in = DVector::from_row_slice(&[0.25]);
        let x_out = DVector::from_row_slice(&[0.75]);
        assert_relative_eq!(g.eval_nearest(&x_in).unwrap(), 2.0);
        assert_relative_eq!(g.eval_nearest(&x_out).unwrap(), 0.0);
    }

    #[test]
    fn function_dilation_t_one_is_identity() {
        let spec = GridSpec::new(2, 2.0, 33);
        let f = GridFunction::from_fn(spec, |x| (-x.norm_squared()).exp());
        let lambda = GeneralDilation::identity(2);
        let g = dilate_function_general(&lambda, 1.0, 0.5, &f, Resampling::Multilinear).unwrap();
        for (a, b) in f.values.iter().zip(&g.values) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn commuting_dilations() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, -0.3, 2.0]);
        let lambda = GeneralDilation::new(m).unwrap();
        let x = GroupPoint::from_slice(&[1.3, -0.4]);
        let r = commute_identity_check(&lambda, 2.0, 3.0, &x).unwrap();
        assert!(r <= 1e-12);
    }
}
