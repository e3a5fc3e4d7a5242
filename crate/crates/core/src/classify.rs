//! Decision procedures for quasi-norm equivalence and Hardy-space
//! equality, with numerical certificates. The decisions themselves are
//! exact matrix tests; the scans and sampled sups corroborate but never
//! decide.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::dilations::{check_admissible, DilationMatrix};
use crate::error::Result;
use crate::lie::LieAlgebra;
use crate::linalg::{expm, opnorm};
use crate::rng::stage_rng;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_WINDOW: i64 = 64;

#[derive(Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EquivalentNorms,
    EqualHardy,
    Neither,
    Both,
}

#[derive(Serialize, Debug, Clone)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// tr(A)/tr(B), the only candidate for A = cB.
    pub c_star: f64,
    /// ‖A − c_star·B‖_F / ‖A‖_F.
    pub matrix_residual: f64,
    /// ‖A − B‖_F / ‖A‖_F.
    pub equiv_residual: f64,
    pub trace_gap: f64,
    /// ‖exp(A)^{-j} exp(B)^{⌊εj⌋}‖ over j ∈ [−J, J].
    pub growth_profile: Vec<f64>,
    pub growth_bounded: bool,
    pub apriori_bound: f64,
    pub d_sequence: Vec<i64>,
    pub ratio_sup_estimate: f64,
}

/// Operator norms ‖exp(A)^{-j} exp(B)^{⌊εj⌋}‖ for j ∈ [−J, J], in
/// log-magnitude form internally, with the bounded flag measured against
/// the a-priori bound max_{r ∈ [−1/c_star, 0]} ‖exp(rA)‖ of the
/// proportional regime.
pub fn boundedness_scan(
    a: &DilationMatrix,
    b: &DilationMatrix,
    j_window: i64,
) -> (Vec<f64>, bool, f64) {
    let eps = a.trace / b.trace;
    let mut log_max = f64::NEG_INFINITY;
    let mut profile = Vec::with_capacity((2 * j_window + 1) as usize);
    for j in -j_window..=j_window {
        let k = (eps * j as f64).floor() as i64;
        let ln = crate::atoms::power_product(a, b, -j, -k).log_opnorm();
        log_max = log_max.max(ln);
        profile.push(ln.exp());
    }
    let apriori = exp_segment_max(&a.matrix, 1.0 / eps);
    let bounded = log_max <= apriori.ln() + 1e-6;
    (profile, bounded, apriori)
}

/// max_{r ∈ [−len, 0]} ‖exp(rM)‖ by coarse sampling plus one local
/// refinement around the argmax.
fn exp_segment_max(m: &DMatrix<f64>, len: f64) -> f64 {
    let steps = 512usize;
    let value = |r: f64| opnorm(&expm(&(r * m)));
    let mut best = 0.0f64;
    let mut best_i = 0usize;
    for i in 0..=steps {
        let v = value(-len * i as f64 / steps as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = -len * (best_i.saturating_sub(1)) as f64 / steps as f64;
    let hi = -len * (best_i + 1).min(steps) as f64 / steps as f64;
    for i in 0..=128 {
        best = best.max(value(lo + (hi - lo) * i as f64 / 128.0));
    }
    best
}

/// Sampled sup of ‖δ_r^A x‖ / ‖δ_r^B x‖ over scales and directions; a
/// diagnostic, unbounded exactly when the norms are inequivalent.
pub fn ratio_sup_estimate(a: &DilationMatrix, b: &DilationMatrix, seed: u64) -> f64 {
    let n = a.dim();
    let mut rng = stage_rng(seed, "ratio-sup");
    let mut sup = 0.0f64;
    for _ in 0..200 {
        let mut x = DVector::<f64>::zeros(n);
        for i in 0..n {
            x[i] = rng.gen_range(-1.0..1.0);
        }
        if x.norm() < 1e-6 {
            continue;
        }
        x /= x.norm();
        for k in -24..=24 {
            let r = (k as f64 / 4.0).exp();
            let num = (a.dilation_map(r).unwrap() * &x).norm();
            let den = (b.dilation_map(r).unwrap() * &x).norm();
            if den > 0.0 {
                sup = sup.max(num / den);
            }
        }
    }
    sup
}

pub fn classify_pair(
    a: &DilationMatrix,
    b: &DilationMatrix,
    algebra: &LieAlgebra,
    tol: f64,
    j_window: i64,
    seed: u64,
) -> Result<ClassificationReport> {
    let norm_a = a.matrix.norm();
    let equiv_residual = (&a.matrix - &b.matrix).norm() / norm_a;
    let c_star = a.trace / b.trace;
    let matrix_residual = (&a.matrix - c_star * &b.matrix).norm() / norm_a;
    let trace_gap = (a.trace - b.trace).abs() / a.trace.abs();
    let equiv = equiv_residual <= tol;
    let hardy = matrix_residual <= tol;
    let (growth_profile, growth_bounded, apriori_bound) = boundedness_scan(a, b, j_window);
    let an = a.normalized(algebra);
    let bn = b.normalized(algebra);
    let mut d_sequence = Vec::new();
    for j in 1..=j_window {
        d_sequence.push(crate::atoms::compute_dj(&an, &bn, j)?);
    }
    let verdict = match (equiv, hardy) {
        (true, true) => Verdict::Both,
        (true, false) => Verdict::EquivalentNorms,
        (false, true) => Verdict::EqualHardy,
        (false, false) => Verdict::Neither,
    };
    Ok(ClassificationReport {
        verdict,
        c_star,
        matrix_residual,
        equiv_residual,
        trace_gap,
        growth_profile,
        growth_bounded,
        apriori_bound,
        d_sequence,
        ratio_sup_estimate: ratio_sup_estimate(a, b, seed),
    })
}

/// Quasi-norm equivalence: ρ_A ≍ ρ_B iff A = B, tested as a relative
/// Frobenius residual.
pub fn equiv_norm_decision(
    a: &DilationMatrix,
    b: &DilationMatrix,
    algebra: &LieAlgebra,
    tol: f64,
) -> Result<ClassificationReport> {
    let mut report = classify_pair(a, b, algebra, tol, DEFAULT_WINDOW, 0)?;
    if report.equiv_residual <= tol {
        report.verdict = Verdict::EquivalentNorms;
    }
    Ok(report)
}

/// Hardy-space equality: H^p_A = H^p_B iff A = cB, with c forced to be
/// tr(A)/tr(B).
pub fn hardy_equal_decision(
    a: &DilationMatrix,
    b: &DilationMatrix,
    algebra: &LieAlgebra,
    tol: f64,
    j_window: i64,
) -> Result<ClassificationReport> {
    classify_pair(a, b, algebra, tol, j_window, 0)
}

/// Diagonal derivation weights for the algebra: whenever c^k_{ij} ≠ 0 the
/// weights must satisfy w_k = w_i + w_j; free variables are sampled.
fn sample_weights(algebra: &LieAlgebra, rng: &mut impl Rng) -> Vec<f64> {
    let n = algebra.dim;
    let mut defined: Vec<bool> = vec![true; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if algebra.constant(i, j, k) != 0.0 {
                    defined[k] = false;
                }
            }
        }
    }
    let mut w: Vec<Option<f64>> = (0..n)
        .map(|k| {
            if defined[k] {
                Some(rng.gen_range(0.5..3.0))
            } else {
                None
            }
        })
        .collect();
    for _ in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if algebra.constant(i, j, k) != 0.0 && w[k].is_none() {
                        if let (Some(wi), Some(wj)) = (w[i], w[j]) {
                            w[k] = Some(wi + wj);
                        }
                    }
                }
            }
        }
    }
    w.into_iter().map(|v| v.unwrap_or(1.0)).collect()
}

/// Random admissible dilation matrix: a diagonal derivation with sampled
/// weights, conjugated by a random inner automorphism exp(ad_X). On
/// abelian algebras every matrix is a derivation, so a random orthogonal
/// conjugation is used instead.
pub fn random_admissible(algebra: &LieAlgebra, rng: &mut impl Rng) -> Result<DilationMatrix> {
    let n = algebra.dim;
    let weights = sample_weights(algebra, rng);
    let d = DMatrix::from_diagonal(&DVector::from_vec(weights));
    let p = if algebra.nilpotency_step <= 1 {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        raw.qr().q()
    } else {
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        let mut ad = DMatrix::zeros(n, n);
        for j in 0..n {
            let ej = DVector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 });
            ad.set_column(j, &algebra.bracket(&x, &ej));
        }
        expm(&ad)
    };
    let p_inv = p.clone().try_inverse().expect("automorphism is invertible");
    check_admissible(&(&p * d * p_inv), algebra)
}
