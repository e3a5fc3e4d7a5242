//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line. Run with `--nocapture` to see the lines on success.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use homogroup::atoms::{
    build_base_atom, build_counterexample_state, compute_dj, in_quasi_ball,
    singular_limit_diagnostics, validate_atom,
};
use homogroup::classify::{classify_pair, random_admissible, Verdict, DEFAULT_TOL, DEFAULT_WINDOW};
use homogroup::dilations::{check_admissible, DilationMatrix};
use homogroup::grid::{GridFunction, GridSpec};
use homogroup::lie::{abelian, bch_product, engel, heisenberg, GroupPoint, LieAlgebra};
use homogroup::linalg::{expm, opnorm};
use homogroup::maximal::{blowup_experiment, scaling_invariance_check, BlowupConfig, LadderSpec};
use homogroup::quasinorm::QuasiNormHandle;
use homogroup::rng::stage_rng;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion:02} [{status}] {name}: {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn diag(algebra: &LieAlgebra, entries: &[f64]) -> DilationMatrix {
    let n = entries.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &v) in entries.iter().enumerate() {
        m[(i, i)] = v;
    }
    check_admissible(&m, algebra).unwrap()
}

fn random_point(n: usize, rng: &mut impl Rng) -> GroupPoint {
    GroupPoint::new(DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)))
}

#[test]
fn criterion_01_group_law() {
    let start = Instant::now();
    let mut worst_assoc = 0.0f64;
    let mut worst_inv = 0.0f64;
    for algebra in [abelian(3), heisenberg(), engel()] {
        let mut rng = stage_rng(101, "acceptance-group-law");
        for _ in 0..10_000 {
            let x = random_point(algebra.dim, &mut rng);
            let y = random_point(algebra.dim, &mut rng);
            let z = random_point(algebra.dim, &mut rng);
            let left = bch_product(&bch_product(&x, &y, &algebra), &z, &algebra);
            let right = bch_product(&x, &bch_product(&y, &z, &algebra), &algebra);
            worst_assoc = worst_assoc.max((&left.coords - &right.coords).amax());
            let e = bch_product(&x, &x.inverse(), &algebra);
            worst_inv = worst_inv.max(e.coords.amax());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_assoc <= 1e-12 && worst_inv <= 1e-12 && elapsed < 10.0;
    report(
        1,
        "group law",
        pass,
        &format!("assoc {worst_assoc:.2e}, inverse {worst_inv:.2e}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_02_measure_homogeneity() {
    let start = Instant::now();
    let algebra = heisenberg();
    let d = diag(&algebra, &[1.0, 1.0, 2.0]);
    let q = d.trace;
    let h = QuasiNormHandle::new(algebra, d);
    let base = h.ball_volume_mc(1.0, 1_000_000, 202).unwrap();
    let mut worst = 0.0f64;
    for (i, r) in [0.5, 2.0, 5.0].into_iter().enumerate() {
        let vol = h.ball_volume_mc(r, 1_000_000, 300 + i as u64).unwrap();
        let rel = (vol / (base * r.powf(q)) - 1.0).abs();
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 0.02 && elapsed < 60.0;
    report(
        2,
        "measure homogeneity",
        pass,
        &format!("worst ratio error {worst:.2e}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_03_quasinorm_axioms() {
    let algebra = heisenberg();
    let d = diag(&algebra, &[1.0, 1.0, 2.0]);
    let mut h = QuasiNormHandle::new(algebra, d);

    let mut rng = stage_rng(303, "acceptance-homogeneity");
    let mut worst_hom = 0.0f64;
    let mut symmetry_exact = true;
    for _ in 0..10_000 {
        let x = random_point(3, &mut rng);
        let r = (rng.gen_range(-3.0f64..3.0)).exp();
        let rho = h.eval(&x).unwrap();
        let map = h.dilation.dilation_map(r).unwrap();
        let scaled = GroupPoint::new(&map * &x.coords);
        let rel = (h.eval(&scaled).unwrap() / (r * rho) - 1.0).abs();
        worst_hom = worst_hom.max(rel);
        if h.eval(&x.inverse()).unwrap() != rho {
            symmetry_exact = false;
        }
    }

    let c_small = h.estimate_quasi_triangle_c(10_000, 41).unwrap();
    let c_large = h.estimate_quasi_triangle_c(100_000, 41).unwrap();
    let drift = (c_large / c_small - 1.0).abs();
    let pass = worst_hom <= 1e-10 && symmetry_exact && c_small.is_finite() && drift <= 0.05;
    report(
        3,
        "quasi-norm axioms",
        pass,
        &format!(
            "homogeneity {worst_hom:.2e}, symmetry exact {symmetry_exact}, \
             C {c_small:.3} -> {c_large:.3} (drift {drift:.2e})"
        ),
    );
}

#[test]
fn criterion_04_two_sided_bounds() {
    let algebra = heisenberg();
    let d = diag(&algebra, &[1.0, 1.0, 2.0]);
    let h = QuasiNormHandle::new(algebra, d);
    let gamma = 0.5;

    // Constants and verification share the sample stream, so the reported
    // c1, c2 are exactly the extremal ratios over these 1e5 points.
    let mut rng = stage_rng(404, "acceptance-eta");
    let mut samples = Vec::with_capacity(100_000);
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for _ in 0..100_000 {
        let x = h.sample_in_ball(1.0, &mut rng);
        let rho = h.eval(&x).unwrap();
        let e = x.euclidean_norm();
        if e == 0.0 {
            continue;
        }
        c1 = c1.min(rho / e);
        c2 = c2.max(rho / e.powf(gamma));
        samples.push((x, rho, e));
    }
    let two_sided = samples
        .iter()
        .all(|(_, rho, e)| c1 * e <= *rho && *rho <= c2 * e.powf(gamma));

    // Inclusion chain at r = 1 with the reported constants:
    // Euclidean ball of radius (r/c2)^(1/gamma) inside the quasi-ball,
    // quasi-ball inside the Euclidean ball of radius r/c1.
    let mut violations = 0usize;
    let slack = 1.0 + 1e-9;
    let inner = (1.0 / c2).powf(1.0 / gamma);
    let mut rng = stage_rng(405, "acceptance-inclusion");
    for _ in 0..10_000 {
        let dir = DVector::from_fn(3, |_, _| rng.gen_range(-1.0f64..1.0));
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let z = GroupPoint::new(dir * (inner * rng.gen::<f64>().powf(1.0 / 3.0) / norm));
        if h.eval(&z).unwrap() > slack {
            violations += 1;
        }
        let y = h.sample_in_ball(1.0, &mut rng);
        if y.euclidean_norm() > slack / c1 {
            violations += 1;
        }
    }
    let pass = two_sided && violations == 0 && c1 > 0.0 && c2.is_finite();
    report(
        4,
        "two-sided norm bounds",
        pass,
        &format!("c1 {c1:.4}, c2 {c2:.4}, inclusion violations {violations}"),
    );
}

fn unit_mass(mut f: GridFunction) -> GridFunction {
    let m = f.integral();
    for v in &mut f.values {
        *v /= m;
    }
    f
}

#[test]
fn criterion_05_scaling_invariance() {
    let ladder = LadderSpec { q: 4, k: 12 };
    let mut worst = 0.0f64;

    let alg2 = abelian(2);
    let d2 = diag(&alg2, &[1.0, 2.0]);
    let spec2 = GridSpec::new(2, 2.0, 33);
    let f2 = GridFunction::from_fn(spec2.clone(), |x| (-2.0 * x.norm_squared()).exp());
    let phi2 = unit_mass(GridFunction::from_fn(spec2, |x| {
        (-4.0 * x.norm_squared()).exp()
    }));
    for c in [2.0, 1.0 / 3.0] {
        worst = worst.max(scaling_invariance_check(&f2, &phi2, &d2, c, &alg2, &ladder).unwrap());
    }

    let alg3 = heisenberg();
    let d3 = diag(&alg3, &[1.0, 1.0, 2.0]);
    let spec3 = GridSpec::new(3, 2.0, 17);
    let f3 = GridFunction::from_fn(spec3.clone(), |x| (-2.0 * x.norm_squared()).exp());
    let phi3 = unit_mass(GridFunction::from_fn(spec3, |x| {
        (-4.0 * x.norm_squared()).exp()
    }));
    for c in [2.0, 1.0 / 3.0] {
        worst = worst.max(scaling_invariance_check(&f3, &phi3, &d3, c, &alg3, &ladder).unwrap());
    }

    let pass = worst <= 1e-12;
    report(
        5,
        "scaling invariance",
        pass,
        &format!("max node difference {worst:.2e}"),
    );
}

#[test]
fn criterion_06_atom_construction() {
    let alg2 = abelian(2);
    let d2 = diag(&alg2, &[1.0, 2.0]);
    let h2 = QuasiNormHandle::new(alg2, d2.clone());
    let spec2 = GridSpec::new(2, 1.1, 65);
    let x1 = GroupPoint::from_slice(&[0.0, 1.0]);

    let mut worst_residual = 0.0f64;
    let mut all_valid = true;
    for alpha in 0..=4 {
        let atom =
            build_base_atom(&h2, 0.5, alpha, 0.4, 0.2, 2.0, &x1, &spec2, 606).unwrap();
        worst_residual = worst_residual.max(atom.moment_residual);
        let rep = validate_atom(&atom, &h2, Some(&d2), 607).unwrap();
        all_valid &= rep.pass;
    }

    let alg3 = heisenberg();
    let d3 = diag(&alg3, &[1.0, 1.0, 2.0]);
    let h3 = QuasiNormHandle::new(alg3, d3.clone());
    let spec3 = GridSpec::new(3, 1.1, 17);
    let y1 = GroupPoint::from_slice(&[0.0, 1.0, 0.0]);
    for alpha in 0..=2 {
        let atom =
            build_base_atom(&h3, 0.75, alpha, 0.4, 0.2, 2.0, &y1, &spec3, 608).unwrap();
        worst_residual = worst_residual.max(atom.moment_residual);
        let rep = validate_atom(&atom, &h3, Some(&d3), 609).unwrap();
        all_valid &= rep.pass;
    }

    // alpha = 0 closed form: the correction on the theta ball is the
    // constant -mu(ball(x1,eps)) / mu(ball(e,theta)), discretized as a
    // node-count ratio, times the normalizer omega0.
    let atom0 = build_base_atom(&h2, 0.5, 0, 0.4, 0.2, 2.0, &x1, &spec2, 606).unwrap();
    let e = GroupPoint::identity(2);
    let mut n_theta = 0usize;
    let mut n_eps = 0usize;
    for i in 0..spec2.node_count() {
        let z = GroupPoint::new(spec2.node_coord(i));
        if in_quasi_ball(&h2, &e, 0.4, &z).unwrap() {
            n_theta += 1;
        }
        if in_quasi_ball(&h2, &x1, 0.2, &z).unwrap() {
            n_eps += 1;
        }
    }
    let expected = -atom0.omega * n_eps as f64 / n_theta as f64;
    let mut closed_form_err = 0.0f64;
    for i in 0..spec2.node_count() {
        let z = GroupPoint::new(spec2.node_coord(i));
        if in_quasi_ball(&h2, &e, 0.4, &z).unwrap() {
            closed_form_err = closed_form_err.max((atom0.values.values[i] - expected).abs());
        }
    }

    let pass = worst_residual <= 1e-8 && all_valid && closed_form_err <= 1e-10;
    report(
        6,
        "atom construction",
        pass,
        &format!(
            "worst moment residual {worst_residual:.2e}, validations {all_valid}, \
             alpha=0 closed form error {closed_form_err:.2e}"
        ),
    );
}

#[test]
fn criterion_07_counterexample_mechanics() {
    let algebra = abelian(2);
    let a = diag(&algebra, &[1.0, 2.0]);
    let b = diag(&algebra, &[2.0, 1.0]);
    let x = DVector::from_row_slice(&[0.0, 1.0]);
    let norm_exp_b = opnorm(&expm(&b.matrix));

    let mut dj_exact = true;
    let mut bracket_exact = true;
    let mut worst_trace = 0.0f64;
    for j in 1..=20 {
        dj_exact &= compute_dj(&a, &b, j).unwrap() == j;
        let state = build_counterexample_state(&a, &b, j, &x, 0.5, 1.0).unwrap();
        bracket_exact &= state.tau_j >= 1.0 / norm_exp_b && state.tau_j <= 1.0;
        let identity = j as f64 * a.trace - state.k_j as f64 * b.trace;
        worst_trace = worst_trace.max((state.trace_q_j - identity).abs());
    }

    let b2 = diag(&algebra, &[2.0, 4.0]);
    let mut dj_bounded = true;
    for j in 1..=64 {
        dj_bounded &= compute_dj(&a, &b2, j).unwrap().abs() <= 1;
    }

    let pass = dj_exact && bracket_exact && worst_trace <= 1e-8 && dj_bounded;
    report(
        7,
        "counterexample mechanics",
        pass,
        &format!(
            "d_j = j {dj_exact}, tau bracket {bracket_exact}, \
             trace identity {worst_trace:.2e}, proportional d_j bounded {dj_bounded}"
        ),
    );
}

#[test]
fn criterion_08_classifier() {
    let presets: [LieAlgebra; 3] = [abelian(3), heisenberg(), engel()];
    let mut consistency = true;
    let mut worst_cstar = 0.0f64;
    let mut soundness = true;
    let mut sound_pairs = 0usize;

    for (pi, algebra) in presets.iter().enumerate() {
        let mut rng = stage_rng(808 + pi as u64, "acceptance-classifier");
        for _ in 0..100 {
            let a = random_admissible(algebra, &mut rng).unwrap();
            let c: f64 = rng.gen_range(0.3..3.0);
            let ca = a.scaled(c, algebra);
            let rep = classify_pair(&a, &ca, algebra, DEFAULT_TOL, DEFAULT_WINDOW, 5).unwrap();
            consistency &= matches!(rep.verdict, Verdict::EqualHardy | Verdict::Both);
            worst_cstar = worst_cstar.max((rep.c_star - 1.0 / c).abs());
        }
        // Genuinely different pairs: require the growth alarm by |j| <= 64.
        let mut rng = stage_rng(818 + pi as u64, "acceptance-classifier-sound");
        while sound_pairs < 100 * (pi + 1) {
            let a = random_admissible(algebra, &mut rng).unwrap();
            let b = random_admissible(algebra, &mut rng).unwrap();
            let rep = classify_pair(&a, &b, algebra, DEFAULT_TOL, DEFAULT_WINDOW, 5).unwrap();
            if rep.matrix_residual < 0.05 {
                continue;
            }
            sound_pairs += 1;
            soundness &= rep.verdict == Verdict::Neither && !rep.growth_bounded;
            let max_profile = rep.growth_profile.iter().cloned().fold(0.0, f64::max);
            soundness &= max_profile > 10.0 * rep.apriori_bound;
        }
    }

    let alg2 = abelian(2);
    let two_i = diag(&alg2, &[2.0, 2.0]);
    let i = diag(&alg2, &[1.0, 1.0]);
    let rep = classify_pair(&two_i, &i, &alg2, DEFAULT_TOL, DEFAULT_WINDOW, 5).unwrap();
    let asymmetry = rep.verdict == Verdict::EqualHardy;

    let pass = consistency && worst_cstar <= 1e-9 && soundness && asymmetry;
    report(
        8,
        "classifier",
        pass,
        &format!(
            "consistency {consistency}, c_star error {worst_cstar:.2e}, \
             soundness {soundness}, (2I, I) equal-hardy only {asymmetry}"
        ),
    );
}

#[test]
fn criterion_09_singular_limit() {
    let algebra = abelian(2);
    let a = diag(&algebra, &[1.0, 2.0]);
    let b = diag(&algebra, &[2.0, 1.0]);
    let h = QuasiNormHandle::new(algebra.clone(), a.clone());
    let spec = GridSpec::new(2, 1.1, 129);
    let x1 = GroupPoint::from_slice(&[0.0, 1.0]);
    let a0 = build_base_atom(&h, 0.5, 3, 0.4, 0.2, 2.0, &x1, &spec, 909).unwrap();
    let x = DVector::from_row_slice(&[0.0, 1.0]);
    let js: Vec<i64> = (1..=6).collect();

    let mut worst_pairing = 0.0f64;
    let mut monotone = true;
    let mut bound_ok = true;
    for trial in 0..5 {
        let mut rng = stage_rng(910 + trial, "acceptance-singular-phi");
        let bumps: Vec<(DVector<f64>, f64, f64)> = (0..3)
            .map(|_| {
                (
                    DVector::from_fn(2, |_, _| rng.gen_range(-0.4..0.4)),
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.5..1.5),
                )
            })
            .collect();
        let phi = GridFunction::from_fn(spec.clone(), |z| {
            bumps
                .iter()
                .map(|(c, w, amp)| amp * (-(z - c).norm_squared() / (w * w)).exp())
                .sum()
        });
        let table = singular_limit_diagnostics(&a, &b, &a0, &phi, &js, &x).unwrap();
        for r in &table.rows {
            worst_pairing = worst_pairing.max(r.rel_diff);
        }
        if trial == 0 {
            for pair in table.rows.windows(2) {
                monotone &= pair[1].det_m_j < pair[0].det_m_j;
            }
            for r in &table.rows {
                bound_ok &= r.det_m_j <= ((1.0 - r.d_j as f64) * b.trace).exp() * (1.0 + 1e-12);
            }
        }
    }

    let pass = worst_pairing <= 0.01 && monotone && bound_ok;
    report(
        9,
        "singular limit",
        pass,
        &format!(
            "pairing mismatch {worst_pairing:.2e}, det monotone {monotone}, det bound {bound_ok}"
        ),
    );
}

#[test]
fn criterion_10_blowup() {
    let start = Instant::now();
    let algebra = abelian(2);
    let a = diag(&algebra, &[1.0, 2.0]);
    let b = diag(&algebra, &[2.0, 1.0]);
    let b_control = diag(&algebra, &[2.0, 4.0]);
    let h = QuasiNormHandle::new(algebra, a);
    let cfg = BlowupConfig::defaults(GridSpec::new(2, 1.1, 65), vec![0.0, 1.0]);

    let divergent = blowup_experiment(&h, &b, &cfg).unwrap();
    let vals: Vec<f64> = divergent.rows.iter().map(|r| r.integral_p).collect();
    let increasing = vals.windows(2).skip(1).all(|w| w[1] > w[0]);
    let tenfold = vals[3] > 10.0 * vals[0];

    let control = blowup_experiment(&h, &b_control, &cfg).unwrap();
    let cvals: Vec<f64> = control.rows.iter().map(|r| r.integral_p).collect();
    let spread = cvals.iter().cloned().fold(0.0, f64::max)
        / cvals.iter().cloned().fold(f64::INFINITY, f64::min);

    let elapsed = start.elapsed().as_secs_f64();
    let pass = increasing && tenfold && spread <= 4.0 && elapsed < 600.0;
    report(
        10,
        "blow-up",
        pass,
        &format!(
            "integral {}, increasing {increasing}, 10x by j=4 {tenfold}, \
             control spread {spread:.2}, {elapsed:.0}s",
            vals.iter()
                .map(|v| format!("{v:.2e}"))
                .collect::<Vec<_>>()
                .join(" "),
        ),
    );
}
