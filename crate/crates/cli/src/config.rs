use homogroup::dilations::{check_admissible, DilationMatrix};
use homogroup::error::Error;
use homogroup::grid::GridSpec;
use homogroup::lie::{preset, LieAlgebra};
use homogroup::maximal::{BlowupConfig, LadderSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// One config file drives atoms, the maximal operator and the blow-up
/// experiment, so a pipeline run is reproducible from a single document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Group preset: "abelian:n", "heisenberg" or "engel".
    pub group: String,
    /// Row-major dilation matrix A.
    pub a: Vec<Vec<f64>>,
    /// Second dilation matrix B; defaults to A.
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Moment order; derived from (A, p) when absent.
    #[serde(default)]
    pub alpha: Option<usize>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_eps_ball")]
    pub eps_ball: f64,
    #[serde(default = "default_big_r")]
    pub big_r: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    /// Base-atom center; unit Euclidean norm.
    pub x1: Vec<f64>,
    pub grid: GridShape,
    #[serde(default)]
    pub ladder: LadderShape,
    #[serde(default = "default_j_max")]
    pub j_max: i64,
    #[serde(default = "default_witness")]
    pub witness_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridShape {
    pub half_width: f64,
    pub nodes_per_axis: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderShape {
    pub q: u32,
    pub k: i64,
}

impl Default for LadderShape {
    fn default() -> Self {
        LadderShape { q: 8, k: 48 }
    }
}

fn default_p() -> f64 {
    0.5
}
fn default_theta() -> f64 {
    0.4
}
fn default_eps_ball() -> f64 {
    0.2
}
fn default_big_r() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    0.5
}
fn default_eps1() -> f64 {
    0.25
}
fn default_eps2() -> f64 {
    0.75
}
fn default_j_max() -> i64 {
    5
}
fn default_witness() -> usize {
    64
}
fn default_seed() -> u64 {
    2024
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn algebra(&self) -> Result<LieAlgebra, Error> {
        preset(&self.group)
    }

    pub fn matrix_a(&self, algebra: &LieAlgebra) -> Result<DilationMatrix, Error> {
        check_admissible(&rows_to_matrix(&self.a, algebra.dim)?, algebra)
    }

    pub fn matrix_b(&self, algebra: &LieAlgebra) -> Result<DilationMatrix, Error> {
        let rows = self.b.as_ref().unwrap_or(&self.a);
        check_admissible(&rows_to_matrix(rows, algebra.dim)?, algebra)
    }

    pub fn grid_spec(&self, dim: usize) -> GridSpec {
        GridSpec::new(dim, self.grid.half_width, self.grid.nodes_per_axis)
    }

    pub fn ladder_spec(&self) -> LadderSpec {
        LadderSpec {
            q: self.ladder.q,
            k: self.ladder.k,
        }
    }

    pub fn blowup(&self, dim: usize) -> BlowupConfig {
        BlowupConfig {
            p: self.p,
            j_max: self.j_max,
            alpha: self.alpha,
            theta: self.theta,
            eps_ball: self.eps_ball,
            beta: self.beta,
            eps1: self.eps1,
            eps2: self.eps2,
            big_r: self.big_r,
            grid: self.grid_spec(dim),
            ladder_q: self.ladder.q,
            ladder_k: self.ladder.k,
            x_vec: self.x1.clone(),
            witness_samples: self.witness_samples,
            seed: self.seed,
            normalize: self.normalize,
        }
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, Error> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::ConfigInvalid(
            "matrix".into(),
            format!("need {dim} rows of {dim} entries"),
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(dim, dim, &flat))
}

/// Parse "1,0,0,2" into an n-by-n row-major matrix.
pub fn parse_matrix_arg(s: &str, dim: usize) -> Result<DMatrix<f64>, Error> {
    let vals = parse_vector_arg(s)?;
    if vals.len() != dim * dim {
        return Err(Error::ConfigInvalid(
            "matrix".into(),
            format!("need {} entries, got {}", dim * dim, vals.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(dim, dim, &vals))
}

pub fn parse_vector_arg(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::ConfigInvalid("vector".into(), format!("bad entry `{t}`")))
        })
        .collect()
}

pub fn load_config(path_or_name: &str) -> Result<ExperimentConfig, Error> {
    let text = match bundled(path_or_name) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(path_or_name)
            .map_err(|_| Error::FileNotFound(path_or_name.to_string()))?,
    };
    serde_json::from_str(&text)
        .map_err(|e| Error::ConfigInvalid("config".into(), e.to_string()))
}

/// Named configs shipped with the binary.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "r2-diverge" => Some(include_str!("../configs/r2-diverge.json")),
        "heisenberg-same" => Some(include_str!("../configs/heisenberg-same.json")),
        _ => None,
    }
}
