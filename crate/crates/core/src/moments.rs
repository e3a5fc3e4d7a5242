//! Multi-index machinery: isotropic and homogeneous degrees, the degree
//! semigroup of a dilation matrix, monomial bases and p-admissible pairs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dilations::DilationMatrix;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self { entries }
    }

    /// Isotropic degree |I|.
    pub fn total(&self) -> usize {
        self.entries.iter().sum()
    }
}

/// All multi-indices of length n with |I| <= cap, in graded lexicographic
/// order.
pub fn multi_indices(n: usize, cap: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for total in 0..=cap {
        let mut current = vec![0usize; n];
        fill(&mut out, &mut current, 0, total);
    }
    fn fill(out: &mut Vec<MultiIndex>, current: &mut Vec<usize>, axis: usize, remaining: usize) {
        if axis + 1 == current.len() {
            current[axis] = remaining;
            out.push(MultiIndex::new(current.clone()));
            return;
        }
        for i in 0..=remaining {
            current[axis] = i;
            fill(out, current, axis + 1, remaining - i);
        }
        current[axis] = 0;
    }
    out
}

/// Homogeneous degree d_A(I) = v_1 i_1 + ... + v_n i_n.
pub fn homogeneous_degree(index: &MultiIndex, d: &DilationMatrix) -> Result<f64> {
    if index.entries.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: index.entries.len(),
        });
    }
    Ok(index
        .entries
        .iter()
        .zip(d.eigenvalues())
        .map(|(&i, &v)| i as f64 * v)
        .sum())
}

/// All elements of the additive semigroup generated by {0, v_1, ..., v_n}
/// up to `cap`, deduplicated with tolerance 1e-9, sorted.
pub fn delta_semigroup(d: &DilationMatrix, cap: f64) -> Vec<f64> {
    let mut elems: Vec<f64> = vec![0.0];
    let mut frontier: Vec<f64> = vec![0.0];
    let tol = 1e-9;
    while let Some(x) = frontier.pop() {
        for &v in d.eigenvalues() {
            let y = x + v;
            if y <= cap + tol && !elems.iter().any(|&e| (e - y).abs() <= tol) {
                elems.push(y);
                frontier.push(y);
            }
        }
    }
    elems.sort_by(|a, b| a.partial_cmp(b).unwrap());
    elems
}

/// max { a in Delta_A : a <= tr(A)(1/p - 1) }; any alpha in Delta_A at least
/// this is p-admissible.
pub fn min_admissible_alpha(d: &DilationMatrix, p: f64) -> f64 {
    let threshold = d.trace * (1.0 / p - 1.0);
    let elems = delta_semigroup(d, threshold);
    elems
        .into_iter()
        .filter(|&a| a <= threshold + 1e-9)
        .fold(0.0, f64::max)
}

/// Smallest natural number alpha that is p-admissible for both matrices.
pub fn shared_alpha(a: &DilationMatrix, b: &DilationMatrix, p: f64) -> usize {
    let m = min_admissible_alpha(a, p).max(min_admissible_alpha(b, p));
    m.ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissiblePair {
    pub p: f64,
    pub alpha: f64,
}

impl AdmissiblePair {
    pub fn check(p: f64, alpha: f64, d: &DilationMatrix) -> Result<Self> {
        if !(0.0 < p && p <= 1.0) {
            return Err(Error::ConfigInvalid("p".into(), format!("{p} not in (0,1]")));
        }
        let min = min_admissible_alpha(d, p);
        if alpha + 1e-9 < min {
            return Err(Error::ConfigInvalid(
                "alpha".into(),
                format!("{alpha} below the p-admissible minimum {min}"),
            ));
        }
        Ok(Self { p, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Coordinate functionals of the fixed orthonormal basis.
    Isotropic,
    /// Dual functionals of the eigenbasis of A.
    Adapted,
}

/// Linear coordinate functionals eta_j(x) = (W x)_j; monomials are products
/// of powers of these.
#[derive(Debug, Clone)]
pub struct PolynomialBasis {
    pub kind: BasisKind,
    pub w: DMatrix<f64>,
}

impl PolynomialBasis {
    pub fn isotropic(n: usize) -> Self {
        Self {
            kind: BasisKind::Isotropic,
            w: DMatrix::identity(n, n),
        }
    }

    pub fn adapted(d: &DilationMatrix) -> Self {
        Self {
            kind: BasisKind::Adapted,
            w: d.eigen.vectors_inv.clone(),
        }
    }

    pub fn eval_monomial(&self, index: &MultiIndex, x: &DVector<f64>) -> f64 {
        let y = &self.w * x;
        index
            .entries
            .iter()
            .enumerate()
            .map(|(j, &i)| y[j].powi(i as i32))
            .product()
    }
}

/// Whether sampled values of a function on [-1,1]^n are reproduced by a
/// polynomial of isotropic degree <= cap, to relative residual 1e-9.
/// Implemented by least-squares fit on a tensor node set.
pub fn fits_within_isotropic_degree(
    n: usize,
    cap: usize,
    f: &dyn Fn(&DVector<f64>) -> f64,
) -> bool {
    let nodes_per_axis = cap + 3;
    let mut nodes: Vec<DVector<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        nodes.push(DVector::from_fn(n, |a, _| {
            -1.0 + 2.0 * idx[a] as f64 / (nodes_per_axis - 1) as f64
        }));
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < nodes_per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == n {
                break;
            }
        }
        if axis == n {
            break;
        }
    }
    let basis = PolynomialBasis::isotropic(n);
    let indices = multi_indices(n, cap);
    let a = DMatrix::from_fn(nodes.len(), indices.len(), |r, c| {
        basis.eval_monomial(&indices[c], &nodes[r])
    });
    let b = DVector::from_fn(nodes.len(), |r, _| f(&nodes[r]));
    let scale = b.camax().max(1e-30);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).expect("least squares");
    let residual = (&a * coef - &b).camax();
    residual <= 1e-9 * scale
}

/// Checks that a random polynomial of isotropic degree <= N stays of degree
/// <= N when composed with the linear map `map` (the paper's closure of
/// P_N under dilations).
pub fn poly_degree_closure_check(n_degree: usize, map: &DMatrix<f64>, seed: u64) -> bool {
    let n = map.nrows();
    let mut rng = seeded(seed);
    let basis = PolynomialBasis::isotropic(n);
    let coeffs: Vec<(MultiIndex, f64)> = multi_indices(n, n_degree)
        .into_iter()
        .map(|i| (i, rng.gen_range(-1.0..1.0)))
        .collect();
    let composed = |x: &DVector<f64>| -> f64 {
        let y = map * x;
        coeffs
            .iter()
            .map(|(i, c)| c * basis.eval_monomial(i, &y))
            .sum()
    };
    fits_within_isotropic_degree(n, n_degree, &composed)
}
