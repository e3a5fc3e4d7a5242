//! The homogeneous group in exponential coordinates: Lie algebra from
//! structure constants, the truncated BCH group law, inversion and Haar
//! measure.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nilpotent Lie algebra given by structure constants in a fixed
/// orthonormal basis: `[Y_i, Y_j] = sum_k c[i][j][k] Y_k`.
#[derive(Debug, Clone)]
pub struct LieAlgebra {
    pub dim: usize,
    /// Flattened row-major (i, j, k).
    constants: Vec<f64>,
    pub nilpotency_step: usize,
    pub name: Option<String>,
}

/// A group element in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub coords: DVector<f64>,
}

impl GroupPoint {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(c: &[f64]) -> Self {
        Self {
            coords: DVector::from_row_slice(c),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            coords: DVector::zeros(n),
        }
    }

    /// Inversion is coordinate negation in exponential coordinates.
    pub fn inverse(&self) -> Self {
        Self {
            coords: -&self.coords,
        }
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.coords.norm()
    }
}

impl LieAlgebra {
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    pub fn constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.constants[self.idx(i, j, k)]
    }

    pub fn structure_constants(&self) -> &[f64] {
        &self.constants
    }

    /// Lie bracket of two coefficient vectors.
    pub fn bracket(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for j in 0..n {
                let vj = v[j];
                if vj == 0.0 {
                    continue;
                }
                for k in 0..n {
                    out[k] += ui * vj * self.constant(i, j, k);
                }
            }
        }
        out
    }

    /// Whether a matrix is a derivation: `M[Y_i,Y_j] = [MY_i,Y_j] + [Y_i,MY_j]`
    /// for all basis pairs. Returns the first failing pair with its residual.
    pub fn derivation_residual(&self, m: &DMatrix<f64>) -> Option<(usize, usize, f64)> {
        let n = self.dim;
        let scale = m.camax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let yi = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
                let yj = DVector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 });
                let lhs = m * self.bracket(&yi, &yj);
                let rhs = self.bracket(&(m * &yi), &yj) + self.bracket(&yi, &(m * &yj));
                let res = (lhs - rhs).camax();
                if res > 1e-9 * scale {
                    return Some((i, j, res));
                }
            }
        }
        None
    }
}

/// Validate raw structure constants and compute the nilpotency step.
pub fn validate_algebra(dim: usize, constants: &[f64], name: Option<String>) -> Result<LieAlgebra> {
    if constants.len() != dim * dim * dim {
        return Err(Error::BadShape(constants.len(), dim));
    }
    let idx = |i: usize, j: usize, k: usize| (i * dim + j) * dim + k;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                if (constants[idx(i, j, k)] + constants[idx(j, i, k)]).abs() > 1e-12 {
                    return Err(Error::AntisymmetryViolation(i, j, k));
                }
            }
        }
    }
    // Jacobi: [Yi,[Yj,Yk]] + [Yj,[Yk,Yi]] + [Yk,[Yi,Yj]] = 0.
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let mut s = 0.0;
                    for m in 0..dim {
                        s += constants[idx(j, k, m)] * constants[idx(i, m, l)]
                            + constants[idx(k, i, m)] * constants[idx(j, m, l)]
                            + constants[idx(i, j, m)] * constants[idx(k, m, l)];
                    }
                    if s.abs() > 1e-12 {
                        return Err(Error::JacobiViolation(i, j, k, s.abs()));
                    }
                }
            }
        }
    }
    let mut algebra = LieAlgebra {
        dim,
        constants: constants.to_vec(),
        nilpotency_step: 0,
        name,
    };
    algebra.nilpotency_step = nilpotency_step(&algebra)?;
    Ok(algebra)
}

/// Smallest s with vanishing (s+1)-fold brackets, via the lower central series.
fn nilpotency_step(a: &LieAlgebra) -> Result<usize> {
    let n = a.dim;
    // g_1 = g, spanned by the basis.
    let mut span: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    for step in 1..=n + 1 {
        let mut next: Vec<DVector<f64>> = Vec::new();
        for i in 0..n {
            let yi = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
            for v in &span {
                let b = a.bracket(&yi, v);
                if b.camax() > 1e-13 {
                    next.push(b);
                }
            }
        }
        if next.is_empty() {
            return Ok(step);
        }
        span = orthonormal_span(&next);
        if span.is_empty() {
            return Ok(step);
        }
    }
    Err(Error::NotNilpotent)
}

fn orthonormal_span(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = vectors[0].len();
    let m = DMatrix::from_columns(vectors);
    let svd = m.svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let mut out = Vec::new();
    for i in 0..svd.singular_values.len().min(n) {
        if svd.singular_values[i] > tol {
            out.push(u.column(i).into_owned());
        }
    }
    out
}

// BCH term table: (coefficient, word) with word letters 0 = X, 1 = Y; the
// word contributes coef * [l1,[l2,[...,[l_{m-1}, l_m]]]].
type BchTable = Arc<Vec<(f64, Vec<u8>)>>;

fn bch_table(max_depth: usize) -> BchTable {
    static CACHE: OnceLock<Mutex<HashMap<usize, BchTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(max_depth)
        .or_insert_with(|| Arc::new(build_bch_table(max_depth)))
        .clone()
}

/// Dynkin series: log(e^X e^Y) = sum over k and block sequences
/// ((r_1,s_1),...,(r_k,s_k)), r_i + s_i >= 1, of
/// (-1)^{k-1}/k * [X^{r_1} Y^{s_1} ... ] / ((sum r_i+s_i) * prod r_i! s_i!).
fn build_bch_table(max_depth: usize) -> Vec<(f64, Vec<u8>)> {
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }
    let mut acc: HashMap<Vec<u8>, f64> = HashMap::new();
    // Recursively enumerate block sequences with total degree <= max_depth.
    fn recurse(
        max_depth: usize,
        word: &mut Vec<u8>,
        k: usize,
        inv_fact: f64,
        acc: &mut HashMap<Vec<u8>, f64>,
    ) {
        let used = word.len();
        if used > 0 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let coef = sign / k as f64 * inv_fact / used as f64;
            *acc.entry(word.clone()).or_insert(0.0) += coef;
        }
        if used >= max_depth {
            return;
        }
        let remaining = max_depth - used;
        for r in 0..=remaining {
            for s in 0..=(remaining - r) {
                if r + s == 0 {
                    continue;
                }
                let before = word.len();
                word.extend(std::iter::repeat(0u8).take(r));
                word.extend(std::iter::repeat(1u8).take(s));
                let f = inv_fact / (factorial(r) * factorial(s));
                recurse(max_depth, word, k + 1, f, acc);
                word.truncate(before);
            }
        }
    }
    let mut word = Vec::new();
    recurse(max_depth, &mut word, 0, 1.0, &mut acc);
    // Drop words whose nested bracket vanishes identically: length >= 2 and
    // the last two letters equal.
    acc.retain(|w, c| {
        c.abs() > 1e-15 && (w.len() < 2 || w[w.len() - 1] != w[w.len() - 2])
    });
    let mut table: Vec<(f64, Vec<u8>)> = acc.into_iter().map(|(w, c)| (c, w)).collect();
    table.sort_by(|a, b| (a.1.len(), &a.1).cmp(&(b.1.len(), &b.1)));
    table
}

/// Group product in exponential coordinates via the truncated BCH series.
/// Exact for nilpotent algebras: brackets deeper than the step vanish.
pub fn bch_product(x: &GroupPoint, y: &GroupPoint, a: &LieAlgebra) -> GroupPoint {
    assert_eq!(x.coords.len(), a.dim, "point dimension mismatch");
    assert_eq!(y.coords.len(), a.dim, "point dimension mismatch");
    let table = bch_table(a.nilpotency_step);
    let mut out = DVector::zeros(a.dim);
    for (coef, word) in table.iter() {
        let last = if word[word.len() - 1] == 0 {
            &x.coords
        } else {
            &y.coords
        };
        let mut v = last.clone();
        for &letter in word[..word.len() - 1].iter().rev() {
            let left = if letter == 0 { &x.coords } else { &y.coords };
            v = a.bracket(left, &v);
            if v.camax() == 0.0 {
                break;
            }
        }
        out += v * *coef;
    }
    GroupPoint::new(out)
}

/// Haar measure of an axis-aligned coordinate box: the product of side
/// lengths (Haar = Lebesgue in exponential coordinates).
pub fn haar_measure_box(bounds: &[(f64, f64)]) -> Result<f64> {
    let mut v = 1.0;
    for (axis, (lo, hi)) in bounds.iter().enumerate() {
        if hi < lo {
            return Err(Error::NegativeSideLength(axis));
        }
        v *= hi - lo;
    }
    Ok(v)
}

/// JSON group definition file.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroupSpec {
    pub dim: usize,
    /// Flattened n^3, row-major (i, j, k).
    pub structure_constants: Vec<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

impl GroupSpec {
    pub fn build(&self) -> Result<LieAlgebra> {
        validate_algebra(self.dim, &self.structure_constants, self.name.clone())
    }
}

/// Abelian R^n: all brackets vanish, step 1.
pub fn abelian(n: usize) -> LieAlgebra {
    validate_algebra(n, &vec![0.0; n * n * n], Some(format!("abelian:{n}"))).unwrap()
}

/// Heisenberg algebra: [Y1, Y2] = Y3, step 2.
pub fn heisenberg() -> LieAlgebra {
    let n = 3;
    let mut c = vec![0.0; n * n * n];
    c[(0 * n + 1) * n + 2] = 1.0;
    c[(1 * n + 0) * n + 2] = -1.0;
    validate_algebra(n, &c, Some("heisenberg".into())).unwrap()
}

/// Engel algebra: [Y1, Y2] = Y3, [Y1, Y3] = Y4, step 3.
pub fn engel() -> LieAlgebra {
    let n = 4;
    let mut c = vec![0.0; n * n * n];
    c[(0 * n + 1) * n + 2] = 1.0;
    c[(1 * n + 0) * n + 2] = -1.0;
    c[(0 * n + 2) * n + 3] = 1.0;
    c[(2 * n + 0) * n + 3] = -1.0;
    validate_algebra(n, &c, Some("engel".into())).unwrap()
}

/// Resolve a preset name: "abelian:n", "heisenberg" or "engel".
pub fn preset(name: &str) -> Result<LieAlgebra> {
    if let Some(n) = name.strip_prefix("abelian:") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::ConfigInvalid("group".into(), format!("bad preset `{name}`")))?;
        return Ok(abelian(n));
    }
    match name {
        "heisenberg" => Ok(heisenberg()),
        "engel" => Ok(engel()),
        _ => Err(Error::ConfigInvalid(
            "group".into(),
            format!("unknown preset `{name}`"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn abelian_is_step_one() {
        let a = abelian(3);
        assert_eq!(a.nilpotency_step, 1);
    }

    #[test]
    fn heisenberg_is_step_two() {
        assert_eq!(heisenberg().nilpotency_step, 2);
    }

    #[test]
    fn engel_is_step_three() {
        assert_eq!(engel().nilpotency_step, 3);
    }

    #[test]
    fn antisymmetry_violation_detected() {
        let n = 3;
        let mut c = vec![0.0; n * n * n];
        c[(0 * n + 1) * n + 2] = 1.0;
        c[(1 * n + 0) * n + 2] = 1.0; // should be -1
        assert!(matches!(
            validate_algebra(n, &c, None),
            Err(Error::AntisymmetryViolation(0, 1, 2))
        ));
    }

    #[test]
    fn jacobi_violation_detected() {
        // [Y1,Y2]=Y3, [Y1,Y3]=Y1: the (1,2,3) Jacobi sum is [Y2,-Y1] = Y3.
        let n = 3;
        let mut c = vec![0.0; n * n * n];
        let mut set = |i: usize, j: usize, k: usize, v: f64| {
            c[(i * n + j) * n + k] = v;
            c[(j * n + i) * n + k] = -v;
        };
        set(0, 1, 2, 1.0);
        set(0, 2, 0, 1.0);
        let r = validate_algebra(n, &c, None);
        assert!(matches!(r, Err(Error::JacobiViolation(..))));
    }

    #[test]
    fn so3_not_nilpotent() {
        let n = 3;
        let mut c = vec![0.0; n * n * n];
        let mut set = |i: usize, j: usize, k: usize, v: f64| {
            c[(i * n + j) * n + k] = v;
            c[(j * n + i) * n + k] = -v;
        };
        set(0, 1, 2, 1.0);
        set(1, 2, 0, 1.0);
        set(2, 0, 1, 1.0);
        assert!(matches!(validate_algebra(n, &c, None), Err(Error::NotNilpotent)));
    }

    #[test]
    fn abelian_bch_is_addition() {
        let a = abelian(2);
        let x = GroupPoint::from_slice(&[1.0, 2.0]);
        let y = GroupPoint::from_slice(&[3.0, 4.0]);
        let z = bch_product(&x, &y, &a);
        assert_relative_eq!(z.coords[0], 4.0, epsilon = 1e-14);
        assert_relative_eq!(z.coords[1], 6.0, epsilon = 1e-14);
    }

    #[test]
    fn heisenberg_bch_closed_form() {
        // (1,0,0) * (0,1,0) = (1,1,1/2): X + Y + [X,Y]/2
        let a = heisenberg();
        let x = GroupPoint::from_slice(&[1.0, 0.0, 0.0]);
        let y = GroupPoint::from_slice(&[0.0, 1.0, 0.0]);
        let z = bch_product(&x, &y, &a);
        assert_relative_eq!(z.coords[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(z.coords[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(z.coords[2], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn engel_bch_matches_degree_three_closed_form() {
        // z = x + y + [x,y]/2 + [x,[x,y]]/12 + [y,[y,x]]/12 for step <= 3.
        let a = engel();
        let x = GroupPoint::from_slice(&[0.3, -0.7, 0.2, 0.9]);
        let y = GroupPoint::from_slice(&[-1.1, 0.4, 0.6, -0.2]);
        let z = bch_product(&x, &y, &a);
        let b = a.bracket(&x.coords, &y.coords);
        let xxy = a.bracket(&x.coords, &b);
        let yyx = a.bracket(&y.coords, &(&b * -1.0));
        let expect = &x.coords + &y.coords + &b * 0.5 + (xxy + yyx) / 12.0;
        assert_relative_eq!((z.coords - expect).camax(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn inverse_law() {
        let a = engel();
        let x = GroupPoint::from_slice(&[0.5, 1.5, -0.2, 0.8]);
        let z = bch_product(&x, &x.inverse(), &a);
        assert!(z.coords.camax() < 1e-14);
    }

    #[test]
    fn box_measure() {
        assert_eq!(haar_measure_box(&[(0.0, 2.0), (0.0, 3.0)]).unwrap(), 6.0);
        assert_eq!(
            haar_measure_box(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]).unwrap(),
            1.0
        );
        assert!(matches!(
            haar_measure_box(&[(1.0, 0.0)]),
            Err(Error::NegativeSideLength(0))
        ));
    }
}
