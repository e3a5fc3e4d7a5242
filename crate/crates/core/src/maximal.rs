//! Group convolution, the radial maximal function, discrete L^p
//! quasi-norms, and the blow-up experiment along the counterexample atoms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::atoms::{build_aux_atom, build_base_atom, build_counterexample_state, Atom};
use crate::dilations::DilationMatrix;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::lie::{bch_product, GroupPoint, LieAlgebra};
use crate::linalg::{expm, opnorm};
use crate::quasinorm::QuasiNormHandle;
use crate::rng::stage_rng;

#[derive(Debug, Clone, Copy)]
pub struct LadderSpec {
    /// Rungs per unit of ln t.
    pub q: u32,
    /// Rung index range [-k, k]; scales are e^{i/q}.
    pub k: i64,
}

impl LadderSpec {
    pub fn scales(&self) -> Result<Vec<f64>> {
        if self.q == 0 || self.k < 0 {
            return Err(Error::LadderEmpty);
        }
        Ok((-self.k..=self.k)
            .map(|i| (i as f64 / self.q as f64).exp())
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct MaximalResult {
    pub values: GridFunction,
    pub t_ladder: Vec<f64>,
    pub argmax_t: Vec<f64>,
}

/// (f * g)(x) = ∫ f(y) g(y^{-1} x) dμ(y) by direct quadrature over the
/// support of f.
pub fn group_convolve(
    f: &GridFunction,
    g: &GridFunction,
    algebra: &LieAlgebra,
) -> Result<GridFunction> {
    f.check_same_spec(g)?;
    let spec = f.spec.clone();
    let w = spec.weight();
    let support: Vec<(GroupPoint, f64)> = f
        .support_nodes()
        .into_iter()
        .map(|i| (GroupPoint::new(spec.node_coord(i)), f.values[i]))
        .collect();
    let values: Vec<f64> = (0..spec.node_count())
        .into_par_iter()
        .map(|i| {
            let x = GroupPoint::new(spec.node_coord(i));
            let mut acc = 0.0;
            for (y, fv) in &support {
                let rel = bch_product(&y.inverse(), &x, algebra);
                if let Some(gv) = g.eval_multilinear(&rel.coords) {
                    acc += fv * gv;
                }
            }
            acc * w
        })
        .collect();
    Ok(GridFunction { spec, values })
}

/// sup over the given scales of |f * φ_t|, with φ_t = t^{tr} φ(δ_t ·)
/// evaluated by interpolation (the dilated bump is never resampled).
pub fn radial_maximal_scales(
    f: &GridFunction,
    phi: &GridFunction,
    dilation_map: impl Fn(f64) -> Result<DMatrix<f64>>,
    trace: f64,
    algebra: &LieAlgebra,
    scales: &[f64],
) -> Result<MaximalResult> {
    if scales.is_empty() {
        return Err(Error::LadderEmpty);
    }
    f.check_same_spec(phi)?;
    let spec = f.spec.clone();
    let w = spec.weight();
    let support: Vec<(GroupPoint, f64)> = f
        .support_nodes()
        .into_iter()
        .map(|i| (GroupPoint::new(spec.node_coord(i)), f.values[i]))
        .collect();
    let maps: Vec<(f64, f64, DMatrix<f64>)> = scales
        .iter()
        .map(|&t| Ok((t, trace * t.ln(), dilation_map(t)?)))
        .collect::<Result<_>>()?;

    let rows: Vec<(f64, f64)> = (0..spec.node_count())
        .into_par_iter()
        .map(|i| {
            let x = GroupPoint::new(spec.node_coord(i));
            let rels: Vec<(DVector<f64>, f64)> = support
                .iter()
                .map(|(y, fv)| (bch_product(&y.inverse(), &x, algebra).coords, *fv))
                .collect();
            let mut best = 0.0f64;
            let mut best_t = maps[0].0;
            for (t, log_pow, map) in &maps {
                let mut acc = 0.0;
                for (rel, fv) in &rels {
                    if let Some(pv) = phi.eval_multilinear(&(map * rel)) {
                        acc += fv * pv;
                    }
                }
                let v = (acc * w).abs() * log_pow.exp();
                if v > best {
                    best = v;
                    best_t = *t;
                }
            }
            (best, best_t)
        })
        .collect();

    let mut values = GridFunction::zeros(spec);
    let mut argmax_t = vec![0.0; rows.len()];
    for (i, (v, t)) in rows.into_iter().enumerate() {
        values.values[i] = v;
        argmax_t[i] = t;
    }
    Ok(MaximalResult {
        values,
        t_ladder: maps.iter().map(|m| m.0).collect(),
        argmax_t,
    })
}

pub fn radial_maximal(
    f: &GridFunction,
    phi: &GridFunction,
    d: &DilationMatrix,
    algebra: &LieAlgebra,
    ladder: &LadderSpec,
) -> Result<MaximalResult> {
    if (phi.integral() - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(phi.integral()));
    }
    radial_maximal_scales(
        f,
        phi,
        |t| d.dilation_map(t),
        d.trace,
        algebra,
        &ladder.scales()?,
    )
}

/// Max-node difference between the ladder sup for A over {t} and the
/// ladder sup for cA over {t^{1/c}}; the term sets coincide, so this is
/// zero up to rounding.
pub fn scaling_invariance_check(
    f: &GridFunction,
    phi: &GridFunction,
    d: &DilationMatrix,
    c: f64,
    algebra: &LieAlgebra,
    ladder: &LadderSpec,
) -> Result<f64> {
    let scales = ladder.scales()?;
    let base = radial_maximal_scales(f, phi, |t| d.dilation_map(t), d.trace, algebra, &scales)?;
    let dc = d.scaled(c, algebra);
    let mapped: Vec<f64> = scales.iter().map(|t| t.powf(1.0 / c)).collect();
    let other =
        radial_maximal_scales(f, phi, |t| dc.dilation_map(t), dc.trace, algebra, &mapped)?;
    let diff = base
        .values
        .values
        .iter()
        .zip(&other.values.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(diff)
}

pub fn lp_quasinorm(f: &GridFunction, p: f64) -> f64 {
    let w = f.spec.weight();
    f.values
        .iter()
        .map(|v| v.abs().powf(p) * w)
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Pointwise max of radial maximal functions over a finite dictionary of
/// normalized test functions; a lower bound for the grand maximal
/// function by construction.
pub fn grand_maximal_proxy(
    f: &GridFunction,
    dictionary: &[GridFunction],
    d: &DilationMatrix,
    algebra: &LieAlgebra,
    ladder: &LadderSpec,
) -> Result<GridFunction> {
    if dictionary.is_empty() {
        return Err(Error::LadderEmpty);
    }
    let mut out = GridFunction::zeros(f.spec.clone());
    for phi in dictionary {
        let m = radial_maximal(f, phi, d, algebra, ladder)?;
        for (o, v) in out.values.iter_mut().zip(&m.values.values) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

/// Smooth bump that is 1 on the quasi-ball of radius `plateau`, supported
/// in the ball of radius `support`, radial in the explicit gauge of the
/// dilation, and normalized to unit integral via the polar formula
/// ∫φ = amp · c · Q · ∫ ψ(s) s^{Q-1} ds with c the unit-ball volume.
#[derive(Debug, Clone)]
pub struct RadialBump {
    handle: QuasiNormHandle,
    pub plateau: f64,
    pub support: f64,
    pub amplitude: f64,
    pub unit_ball_volume: f64,
}

fn smoothstep_down(w: f64) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    if w >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - w)).exp();
    let b = (-1.0 / w).exp();
    a / (a + b)
}

impl RadialBump {
    pub fn new(h: &QuasiNormHandle, plateau: f64, support: f64, seed: u64) -> Result<RadialBump> {
        if !(plateau > 0.0 && support > plateau) {
            return Err(Error::ConfigInvalid(
                "bump radii".into(),
                "need 0 < plateau < support".into(),
            ));
        }
        let unit_ball_volume = explicit_unit_ball_volume(&h.dilation, seed);
        let mut bump = RadialBump {
            handle: h.clone(),
            plateau,
            support,
            amplitude: 1.0,
            unit_ball_volume,
        };
        let raw = bump.radial_integral();
        bump.amplitude = 1.0 / raw;
        Ok(bump)
    }

    /// Unnormalized profile at gauge value s.
    pub fn profile(&self, s: f64) -> f64 {
        smoothstep_down((s - self.plateau) / (self.support - self.plateau))
    }

    pub fn gauge(&self, x: &DVector<f64>) -> f64 {
        self.handle.explicit_eval(&GroupPoint::new(x.clone()))
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.amplitude * self.profile(self.gauge(x))
    }

    /// ∫ profile(ρ(x)) dμ(x) by the polar formula.
    fn radial_integral(&self) -> f64 {
        let q = self.handle.dilation.trace;
        let n = 4096usize;
        let h = self.support / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let s = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.profile(s) * s.powf(q - 1.0);
        }
        self.unit_ball_volume * q * acc * h / 3.0
    }

    pub fn integral(&self) -> f64 {
        self.amplitude * self.radial_integral()
    }
}

/// Volume of the unit ball of the explicit gauge, by Monte Carlo in the
/// eigenbasis box.
pub fn explicit_unit_ball_volume(d: &DilationMatrix, seed: u64) -> f64 {
    let n = d.dim();
    let mut rng = stage_rng(seed, "explicit-unit-ball");
    let handle_free_eval = |xp: &DVector<f64>| -> f64 {
        // mirror of the explicit gauge in eigen coordinates
        let two_n = 2.0 * d.max_eigenvalue().ceil();
        xp.iter()
            .zip(d.eigenvalues())
            .map(|(&c, &v)| c.abs().powf(two_n / v))
            .sum::<f64>()
            .powf(1.0 / two_n)
    };
    let samples = 400_000;
    let mut hits = 0usize;
    let mut xp = DVector::zeros(n);
    for _ in 0..samples {
        for i in 0..n {
            xp[i] = rng.gen_range(-1.0..1.0);
        }
        if handle_free_eval(&xp) <= 1.0 {
            hits += 1;
        }
    }
    let det_v = d.eigen.vectors.determinant().abs();
    det_v * 2f64.powi(n as i32) * hits as f64 / samples as f64
}

/// Self-normalized quadrature over the support of a radial bump. After
/// the substitution v = δ_t(z^{-1}y) the convolution at every scale t
/// reads (f * φ_t)(z) = ∫ f(z · δ_{1/t}(v)^{-1}) φ(v) dμ(v), so one fixed
/// point set serves the whole ladder and the fine-bump limit is exact.
#[derive(Debug, Clone)]
pub struct SmearQuadrature {
    pub points: Vec<(DVector<f64>, f64)>,
}

impl SmearQuadrature {
    pub fn build(
        phi: &RadialBump,
        d: &DilationMatrix,
        n_points: usize,
        seed: u64,
    ) -> Result<SmearQuadrature> {
        let mut rng = stage_rng(seed, "smear-quadrature");
        let mut points: Vec<(DVector<f64>, f64)> = vec![(DVector::zeros(d.dim()), 1.0)];
        while points.len() < n_points {
            let v = sample_explicit_ball(d, phi.support, &mut rng)?;
            let w = phi.profile(phi.gauge(&v));
            if w > 1e-12 {
                // antithetic pair: keeps the point set centered
                points.push((-&v, w));
                points.push((v, w));
            }
        }
        let total: f64 = points.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut points {
            *w /= total;
        }
        Ok(SmearQuadrature { points })
    }

    /// Group inverses of δ_{1/t}(v_q) for each ladder scale.
    pub fn offsets(&self, d: &DilationMatrix, scales: &[f64]) -> Result<Vec<Vec<GroupPoint>>> {
        scales
            .iter()
            .map(|&t| {
                let map = d.dilation_map(1.0 / t)?;
                Ok(self
                    .points
                    .iter()
                    .map(|(v, _)| GroupPoint::new(&map * v).inverse())
                    .collect())
            })
            .collect()
    }
}

/// Ladder maximal function of an atom at one point via the smeared
/// convolution. Returns (value, argmax scale, still-rising flag); the
/// flag is set when the maximum sits on the top rung and the last step
/// still improved it, which drives the adaptive ladder extension.
pub fn atom_maximal_smeared(
    atom: &Atom,
    quad: &SmearQuadrature,
    offsets: &[Vec<GroupPoint>],
    algebra: &LieAlgebra,
    scales: &[f64],
    x: &DVector<f64>,
) -> (f64, f64, bool) {
    let xg = GroupPoint::new(x.clone());
    let mut best = 0.0f64;
    let mut best_i = 0usize;
    let mut prev = 0.0f64;
    let mut last = 0.0f64;
    for (i, offs) in offsets.iter().enumerate() {
        let mut acc = 0.0;
        for ((_, w), o) in quad.points.iter().zip(offs) {
            acc += w * atom.eval(&bch_product(&xg, o, algebra).coords);
        }
        let v = acc.abs();
        if v > best {
            best = v;
            best_i = i;
        }
        prev = last;
        last = v;
    }
    let rising = best_i + 1 == offsets.len() && best > 0.0 && last > prev * 1.001;
    (best, scales[best_i], rising)
}

#[derive(Debug, Clone)]
pub struct BlowupConfig {
    pub p: f64,
    pub j_max: i64,
    pub alpha: Option<usize>,
    pub theta: f64,
    pub eps_ball: f64,
    pub beta: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub big_r: f64,
    pub grid: GridSpec,
    pub ladder_q: u32,
    pub ladder_k: i64,
    pub x_vec: Vec<f64>,
    pub witness_samples: usize,
    pub seed: u64,
    /// Rescale both matrices so their smallest eigenvalue is 1.
    pub normalize: bool,
}

impl BlowupConfig {
    pub fn defaults(grid: GridSpec, x_vec: Vec<f64>) -> Self {
        BlowupConfig {
            p: 0.5,
            j_max: 5,
            alpha: None,
            theta: 0.4,
            eps_ball: 0.2,
            beta: 0.5,
            eps1: 0.25,
            eps2: 0.75,
            big_r: 2.0,
            grid,
            ladder_q: 8,
            ladder_k: 48,
            x_vec,
            witness_samples: 64,
            seed: 2024,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlowupRow {
    pub j: i64,
    pub d_j: i64,
    pub tau_j: f64,
    pub det_m_j: f64,
    pub witness_min: f64,
    pub integral_p: f64,
    pub marker: f64,
    /// ω_j e^{tr Q_j} μ(B(e, τ_j^{-1} ε₁ s)) without the slack factor.
    pub witness_bound: f64,
    pub argmax_interior: bool,
}

#[derive(Debug, Clone)]
pub struct BlowupTable {
    pub rows: Vec<BlowupRow>,
    pub bounded_regime: bool,
    pub sigma: f64,
    pub support_scale: f64,
    pub alpha: usize,
}

fn sample_explicit_ball(
    d: &DilationMatrix,
    radius: f64,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let n = d.dim();
    let two_n = 2.0 * d.max_eigenvalue().ceil();
    let mut xp = DVector::<f64>::zeros(n);
    for _ in 0..10_000 {
        for i in 0..n {
            xp[i] = rng.gen_range(-1.0..1.0);
        }
        let g = xp
            .iter()
            .zip(d.eigenvalues())
            .map(|(&c, &v)| c.abs().powf(two_n / v))
            .sum::<f64>()
            .powf(1.0 / two_n);
        if g <= 1.0 {
            let unit = &d.eigen.vectors * &xp;
            return Ok(d.dilation_map(radius)? * unit);
        }
    }
    Err(Error::SolverBracketFailure(radius))
}

/// Desk-scale reproduction of the divergence mechanism: for each j the
/// maximal function of a_j is measured on the grid and on the witness
/// ball around δ^{Q_j}(z_j), and ∫|M⁰a_j|^p combines the grid quadrature
/// with the directly integrated witness region (which sits far below the
/// grid resolution in the divergent regime).
pub fn blowup_experiment(
    h: &QuasiNormHandle,
    b_in: &DilationMatrix,
    cfg: &BlowupConfig,
) -> Result<BlowupTable> {
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::ConfigInvalid("p".into(), "need 0 < p < 1".into()));
    }
    for (name, v) in [
        ("theta", cfg.theta),
        ("eps_ball", cfg.eps_ball),
        ("beta", cfg.beta),
        ("eps1", cfg.eps1),
        ("eps2", cfg.eps2),
    ] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::ConfigInvalid(name.into(), "need value in (0,1)".into()));
        }
    }
    if cfg.eps1 >= cfg.eps2 {
        return Err(Error::ConfigInvalid(
            "eps1".into(),
            "need eps1 < eps2".into(),
        ));
    }

    let algebra = h.algebra.clone();
    let (a, b);
    if cfg.normalize {
        a = h.dilation.normalized(&algebra);
        b = b_in.normalized(&algebra);
    } else {
        a = h.dilation.clone();
        b = b_in.clone();
    }
    let hn = QuasiNormHandle::new(algebra.clone(), a.clone());

    let gamma = 1.0 / b.max_eigenvalue();
    let sigma = 1.0 / (gamma * gamma);
    let scale = opnorm(&expm(&b.matrix)).powf(-sigma);
    let alpha = match cfg.alpha {
        Some(v) => v,
        None => crate::moments::min_admissible_alpha(&a, cfg.p).ceil() as usize,
    };

    let phi = RadialBump::new(&hn, cfg.eps1 * scale, cfg.eps2 * scale, cfg.seed)?;
    let x_vec = DVector::from_row_slice(&cfg.x_vec);
    let x1 = GroupPoint::new(x_vec.clone());
    let a0 = build_base_atom(
        &hn,
        cfg.p,
        alpha,
        cfg.theta,
        cfg.eps_ball,
        cfg.big_r,
        &x1,
        &cfg.grid,
        cfg.seed,
    )?;

    let mut d_js = Vec::new();
    for j in 1..=cfg.j_max {
        d_js.push(crate::atoms::compute_dj(&a, &b, j)?);
    }
    let spread = d_js.iter().max().unwrap() - d_js.iter().min().unwrap();
    let bounded_regime = spread <= 1;

    let c_ball = phi.unit_ball_volume;
    let quad = SmearQuadrature::build(&phi, &a, 64, cfg.seed)?;
    let mut rows = Vec::new();
    for j in 1..=cfg.j_max {
        let state = build_counterexample_state(&a, &b, j, &x_vec, cfg.p, a0.omega)?;
        if state.tau_j.recip() * cfg.eps1 * scale >= cfg.eps_ball {
            return Err(Error::ConfigInfeasible(format!(
                "eps1 too large: tau^-1 eps1 scale = {:.3e} >= eps_ball at j = {j}",
                state.tau_j.recip() * cfg.eps1 * scale
            )));
        }
        let aux = build_aux_atom(&state, &a0, cfg.p)?;
        let cloud = aux.support_cloud();
        let witness_center = &state.m_j * &state.z_j_vec;
        let witness_radius = cfg.beta * scale;

        // Feasibility of the plateau-window inclusion: offsets within the
        // witness ball shifted by plateau points must stay in the support
        // ball of the bump.
        let mut rng = stage_rng(cfg.seed, "blowup-feasibility");
        for _ in 0..256 {
            let woff = sample_explicit_ball(&a, witness_radius, &mut rng)?;
            let u = sample_explicit_ball(&a, cfg.eps1 * scale, &mut rng)?;
            let rel = bch_product(
                &GroupPoint::new(woff.clone()).inverse(),
                &GroupPoint::new(u.clone()),
                &algebra,
            );
            if phi.gauge(&rel.coords) >= cfg.eps2 * scale {
                return Err(Error::ConfigInfeasible(
                    "beta too large: plateau escapes the shifted bump support".into(),
                ));
            }
        }

        // Witness sample points.
        // Uniform points give an unbiased Monte Carlo estimate of the
        // L^p mass over the witness ball. The certificate minimum instead
        // probes sliver-adapted points center * (M_j eta): those stay in
        // the ball (||M_j|| = tau_j <= 1, enforced by halving) but sit
        // within the image thickness of the support, where the discrete
        // scale ladder resolves the maximal function at every j.
        let mut rng = stage_rng(cfg.seed ^ j as u64, "blowup-witness");
        let mut witness_pts = vec![witness_center.clone()];
        let mut probe_pts = vec![witness_center.clone()];
        for _ in 1..cfg.witness_samples {
            let off = sample_explicit_ball(&a, witness_radius, &mut rng)?;
            let mut adapted = &state.m_j * &off;
            while hn.explicit_eval(&GroupPoint::new(adapted.clone())) > witness_radius {
                adapted *= 0.5;
            }
            for (coords, bucket) in [(off, &mut witness_pts), (adapted, &mut probe_pts)] {
                bucket.push(
                    bch_product(
                        &GroupPoint::new(witness_center.clone()),
                        &GroupPoint::new(coords),
                        &algebra,
                    )
                    .coords,
                );
            }
        }

        // First-piece contamination at unit scale must stay below the
        // plateau lower bound for the mechanism to be observable.
        let mu_small = c_ball * (state.tau_j.recip() * cfg.eps1 * scale).powf(a.trace);
        let witness_bound = state.omega_j * state.trace_q_j.exp() * mu_small;
        let theta_cloud: Vec<(DVector<f64>, f64)> = cloud
            .iter()
            .filter(|(x, _)| {
                let z = &aux.linear_map_inv * x;
                hn.explicit_eval(&GroupPoint::new(z)) < 2.0 * cfg.theta
            })
            .cloned()
            .collect();
        let contamination: f64 = theta_cloud
            .iter()
            .map(|(y, v)| {
                let rel = bch_product(
                    &GroupPoint::new(y.clone()).inverse(),
                    &GroupPoint::new(witness_center.clone()),
                    &algebra,
                );
                v.abs() * phi.eval(&rel.coords)
            })
            .sum::<f64>()
            * aux.cell_weight();
        if contamination > 0.5 * witness_bound {
            return Err(Error::ConfigInfeasible(format!(
                "theta too large: first-piece contamination {contamination:.3e} \
                 dominates the plateau bound {witness_bound:.3e} at j = {j}"
            )));
        }

        // Ladder, extended until the witness maxima stop rising at the
        // top rung (or a hard cap).
        let q = cfg.ladder_q;
        let mut k = cfg.ladder_k;
        let (witness_vals, probe_vals, argmax_interior, scales, offsets) = loop {
            let scales: Vec<f64> = (-k..=k).map(|i| (i as f64 / q as f64).exp()).collect();
            let offsets = quad.offsets(&a, &scales)?;
            let eval = |pts: &[DVector<f64>]| -> Vec<(f64, f64, bool)> {
                pts.par_iter()
                    .map(|z| atom_maximal_smeared(&aux, &quad, &offsets, &algebra, &scales, z))
                    .collect()
            };
            let vals = eval(&witness_pts);
            let probes = eval(&probe_pts);
            let rising = vals.iter().chain(&probes).any(|(_, _, r)| *r);
            if !rising || k >= q as i64 * 20 {
                break (vals, probes, !rising, scales, offsets);
            }
            k += 8 * q as i64;
        };

        let grid_vals: Vec<f64> = (0..cfg.grid.node_count())
            .into_par_iter()
            .map(|i| {
                atom_maximal_smeared(
                    &aux,
                    &quad,
                    &offsets,
                    &algebra,
                    &scales,
                    &cfg.grid.node_coord(i),
                )
                .0
            })
            .collect();
        let grid_part: f64 =
            grid_vals.iter().map(|v| v.powf(cfg.p)).sum::<f64>() * cfg.grid.weight();
        let witness_vol = c_ball * witness_radius.powf(a.trace);
        let witness_part = witness_vals
            .iter()
            .map(|(v, _, _)| v.powf(cfg.p))
            .sum::<f64>()
            / witness_vals.len() as f64
            * witness_vol;
        let witness_min = probe_vals
            .iter()
            .map(|(v, _, _)| *v)
            .fold(f64::INFINITY, f64::min);

        rows.push(BlowupRow {
            j,
            d_j: state.d_j,
            tau_j: state.tau_j,
            det_m_j: state.trace_q_j.exp(),
            witness_min,
            integral_p: grid_part + witness_part,
            marker: ((1.0 / cfg.p - 1.0) * b.trace * state.d_j as f64).exp(),
            witness_bound,
            argmax_interior,
        });
    }

    Ok(BlowupTable {
        rows,
        bounded_regime,
        sigma,
        support_scale: scale,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomKind;
    use crate::lie::abelian;
    use approx::assert_relative_eq;

    use crate::dilations::check_admissible;

    fn line() -> (LieAlgebra, DilationMatrix, GridSpec) {
        let alg = abelian(1);
        let d = check_admissible(&DMatrix::identity(1, 1), &alg).unwrap();
        (alg, d, GridSpec::new(1, 4.0, 129))
    }

    fn diag2(a: f64, b: f64) -> DilationMatrix {
        check_admissible(
            &DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]),
            &abelian(2),
        )
        .unwrap()
    }

    fn gauss(spec: &GridSpec, center: f64, width: f64) -> GridFunction {
        GridFunction::from_fn(spec.clone(), |x| (-((x[0] - center) / width).powi(2)).exp())
    }

    fn unit_mass(mut f: GridFunction) -> GridFunction {
        let m = f.integral();
        for v in &mut f.values {
            *v /= m;
        }
        f
    }

    #[test]
    fn ladder_scales_symmetric() {
        let s = LadderSpec { q: 8, k: 48 }.scales().unwrap();
        assert_eq!(s.len(), 97);
        assert_relative_eq!(s[0] * s[96], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[48], 1.0, epsilon = 1e-15);
        assert!(matches!(
            LadderSpec { q: 0, k: 4 }.scales(),
            Err(Error::LadderEmpty)
        ));
    }

    #[test]
    fn convolving_with_node_delta_reproduces_the_function() {
        let (alg, _, spec) = line();
        let mut delta = GridFunction::zeros(spec.clone());
        let center = spec.node_count() / 2;
        delta.values[center] = 1.0 / spec.weight();
        let g = gauss(&spec, 0.5, 0.7);
        let conv = group_convolve(&delta, &g, &alg).unwrap();
        for (a, b) in conv.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn abelian_convolution_commutes() {
        let (alg, _, spec) = line();
        let f = gauss(&spec, -0.3, 0.5);
        let g = gauss(&spec, 0.4, 0.8);
        let fg = group_convolve(&f, &g, &alg).unwrap();
        let gf = group_convolve(&g, &f, &alg).unwrap();
        for (a, b) in fg.values.iter().zip(&gf.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn maximal_of_zero_is_zero() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let f = GridFunction::zeros(spec);
        let m = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 4, k: 8 }).unwrap();
        assert!(m.values.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_dominates_the_unit_scale_term() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let f = gauss(&spec, 0.2, 0.6);
        let m = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 4, k: 8 }).unwrap();
        let conv = group_convolve(&f, &phi, &alg).unwrap();
        for (mv, cv) in m.values.values.iter().zip(&conv.values) {
            assert!(*mv >= cv.abs() - 1e-12);
        }
    }

    #[test]
    fn ladder_refinement_never_decreases() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let f = gauss(&spec, 0.2, 0.6);
        let coarse = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 4, k: 8 }).unwrap();
        let fine = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 8, k: 16 }).unwrap();
        for (c, f) in coarse.values.values.iter().zip(&fine.values.values) {
            assert!(*f >= *c - 1e-12);
        }
    }

    #[test]
    fn dense_ladder_changes_little() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let f = gauss(&spec, 0.2, 0.6);
        let base = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 8, k: 16 }).unwrap();
        let dense = radial_maximal(&f, &phi, &d, &alg, &LadderSpec { q: 32, k: 64 }).unwrap();
        for (b, v) in base.values.values.iter().zip(&dense.values.values) {
            if *v > 1e-8 {
                assert!((v - b).abs() <= 0.02 * v, "coarse {b} vs dense {v}");
            }
        }
    }

    #[test]
    fn matched_ladders_are_scaling_invariant() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let f = gauss(&spec, 0.2, 0.6);
        let diff =
            scaling_invariance_check(&f, &phi, &d, 2.0, &alg, &LadderSpec { q: 4, k: 8 }).unwrap();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn lp_quasinorm_homogeneity_and_p1() {
        let (_, _, spec) = line();
        let f = gauss(&spec, 0.0, 0.7);
        let mut g = f.clone();
        for v in &mut g.values {
            *v *= 2.0;
        }
        for p in [0.5, 1.0, 2.0] {
            assert_relative_eq!(lp_quasinorm(&g, p), 2.0 * lp_quasinorm(&f, p), epsilon = 1e-10);
        }
        assert_relative_eq!(lp_quasinorm(&f, 1.0), f.integral(), epsilon = 1e-12);
        assert_eq!(lp_quasinorm(&GridFunction::zeros(spec), 0.5), 0.0);
    }

    #[test]
    fn grand_proxy_singleton_and_monotonicity() {
        let (alg, d, spec) = line();
        let phi = unit_mass(gauss(&spec, 0.0, 0.5));
        let phi2 = unit_mass(gauss(&spec, 0.0, 1.2));
        let f = gauss(&spec, 0.2, 0.6);
        let ladder = LadderSpec { q: 4, k: 8 };
        let single = grand_maximal_proxy(&f, &[phi.clone()], &d, &alg, &ladder).unwrap();
        let radial = radial_maximal(&f, &phi, &d, &alg, &ladder).unwrap();
        for (a, b) in single.values.iter().zip(&radial.values.values) {
            assert_eq!(a, b);
        }
        let pair = grand_maximal_proxy(&f, &[phi, phi2], &d, &alg, &ladder).unwrap();
        for (a, b) in pair.values.iter().zip(&single.values) {
            assert!(a >= b);
        }
    }

    #[test]
    fn unit_ball_volumes_match_closed_forms() {
        let (alg, d, _) = line();
        let v1 = explicit_unit_ball_volume(&d, 7);
        assert!((v1 - 2.0).abs() < 0.02, "line ball volume {v1}");
        let d2 = diag2(1.0, 1.0);
        let v2 = explicit_unit_ball_volume(&d2, 7);
        assert!((v2 - std::f64::consts::PI).abs() < 0.03, "disk volume {v2}");
        let _ = alg;
    }

    #[test]
    fn radial_bump_is_normalized_and_supported() {
        let (alg, d, _) = line();
        let h = QuasiNormHandle::new(alg, d);
        let bump = RadialBump::new(&h, 0.5, 1.0, 7).unwrap();
        assert_relative_eq!(bump.integral(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            bump.eval(&DVector::from_row_slice(&[0.2])),
            bump.amplitude,
            epsilon = 1e-15
        );
        assert_eq!(bump.eval(&DVector::from_row_slice(&[1.5])), 0.0);
        let spec = GridSpec::new(1, 1.5, 2001);
        let direct = GridFunction::from_fn(spec, |x| bump.eval(x)).integral();
        assert!((direct - 1.0).abs() < 1e-3, "direct integral {direct}");
    }

    #[test]
    fn explicit_ball_samples_stay_inside() {
        let d = diag2(1.0, 2.0);
        let alg = abelian(2);
        let h = QuasiNormHandle::new(alg, d.clone());
        let mut rng = stage_rng(3, "ball-test");
        for _ in 0..200 {
            let x = sample_explicit_ball(&d, 0.3, &mut rng).unwrap();
            assert!(h.explicit_eval(&GroupPoint::new(x)) <= 0.3 + 1e-12);
        }
    }

    fn smooth_test_atom(spec: &GridSpec) -> Atom {
        let values = GridFunction::from_fn(spec.clone(), |x| {
            let r2 = x.iter().map(|c| c * c).sum::<f64>();
            (1.0 - 2.0 * r2) * (-3.0 * r2).exp()
        });
        let n = spec.dim;
        Atom {
            kind: AtomKind::Classical {
                center: GroupPoint::identity(n),
                radius: spec.half_width,
            },
            p: 0.5,
            alpha: 0,
            values,
            linear_map: DMatrix::identity(n, n),
            linear_map_inv: DMatrix::identity(n, n),
            log_amplitude: 0.0,
            omega: 1.0,
            moment_residual: 0.0,
        }
    }

    #[test]
    fn smeared_maximal_matches_grid_maximal_on_smooth_data() {
        let (alg, d, spec) = line();
        let h = QuasiNormHandle::new(alg.clone(), d.clone());
        let bump = RadialBump::new(&h, 0.3, 0.8, 7).unwrap();
        let atom = smooth_test_atom(&spec);
        let phi = unit_mass(GridFunction::from_fn(spec.clone(), |x| bump.eval(x)));
        let f = GridFunction {
            spec: spec.clone(),
            values: atom.values.values.clone(),
        };
        let ladder = LadderSpec { q: 4, k: 6 };
        let scales = ladder.scales().unwrap();
        let grid_path = radial_maximal(&f, &phi, &d, &alg, &ladder).unwrap();
        let quad = SmearQuadrature::build(&bump, &d, 512, 7).unwrap();
        let offsets = quad.offsets(&d, &scales).unwrap();
        for &x in &[0.0, 0.375, 1.0] {
            let (v, _, _) = atom_maximal_smeared(
                &atom,
                &quad,
                &offsets,
                &alg,
                &scales,
                &DVector::from_row_slice(&[x]),
            );
            let gi = ((x + spec.half_width) / spec.spacing()).round() as usize;
            let g = grid_path.values.values[gi];
            assert!(
                (v - g).abs() <= 0.02 * g.abs().max(1e-3),
                "x {x}: smeared {v} vs grid {g}"
            );
        }
    }

    fn divergent_pair() -> (QuasiNormHandle, DilationMatrix) {
        (QuasiNormHandle::new(abelian(2), diag2(1.0, 2.0)), diag2(2.0, 1.0))
    }

    #[test]
    fn blowup_rejects_bad_exponent() {
        let (h, b) = divergent_pair();
        let mut cfg = BlowupConfig::defaults(GridSpec::new(2, 1.1, 33), vec![0.0, 1.0]);
        cfg.p = 1.5;
        assert!(matches!(
            blowup_experiment(&h, &b, &cfg),
            Err(Error::ConfigInvalid(_, _))
        ));
    }

    #[test]
    fn blowup_divergent_pair_matches_closed_forms() {
        let (h, b) = divergent_pair();
        let mut cfg = BlowupConfig::defaults(GridSpec::new(2, 1.1, 49), vec![0.0, 1.0]);
        cfg.j_max = 3;
        cfg.witness_samples = 16;
        let table = blowup_experiment(&h, &b, &cfg).unwrap();
        assert!(!table.bounded_regime);
        assert_relative_eq!(table.sigma, 4.0, epsilon = 1e-12);
        for (i, row) in table.rows.iter().enumerate() {
            let j = (i + 1) as i64;
            assert_eq!(row.j, j);
            assert_eq!(row.d_j, j);
            assert_relative_eq!(row.tau_j, 1.0, epsilon = 1e-9);
            assert_relative_eq!(row.det_m_j, (-3.0 * j as f64).exp(), epsilon = 1e-9);
            assert_relative_eq!(row.marker, (3.0 * j as f64).exp(), epsilon = 1e-9);
            assert!(
                row.witness_min >= 0.1 * row.witness_bound,
                "j {j}: witness {:.3e} vs bound {:.3e}",
                row.witness_min,
                row.witness_bound
            );
        }
        assert!(table.rows[1].integral_p > table.rows[0].integral_p);
        assert!(table.rows[2].integral_p > table.rows[1].integral_p);
    }

    #[test]
    fn blowup_proportional_pair_stays_bounded() {
        let (h, _) = divergent_pair();
        let b2 = diag2(2.0, 4.0);
        let mut cfg = BlowupConfig::defaults(GridSpec::new(2, 1.1, 49), vec![0.0, 1.0]);
        cfg.j_max = 2;
        cfg.witness_samples = 16;
        let table = blowup_experiment(&h, &b2, &cfg).unwrap();
        assert!(table.bounded_regime);
        let lo = table.rows.iter().map(|r| r.integral_p).fold(f64::INFINITY, f64::min);
        let hi = table.rows.iter().map(|r| r.integral_p).fold(0.0, f64::max);
        assert!(hi / lo <= 4.0, "spread {}", hi / lo);
        for row in &table.rows {
            assert_eq!(row.d_j, 0);
            assert_relative_eq!(row.marker, 1.0, epsilon = 1e-12);
        }
    }
}
