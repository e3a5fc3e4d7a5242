//! Uniform sampling grids on a centered box in exponential coordinates.
//! Node 0-of-center is the identity; the quadrature weight is h^n per node.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Box is [-half_width, half_width]^dim.
    pub half_width: f64,
    /// Odd node count per axis so the center node sits at the identity.
    pub nodes_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, nodes_per_axis: usize) -> Self {
        assert!(nodes_per_axis % 2 == 1, "nodes_per_axis must be odd");
        assert!(half_width > 0.0);
        Self {
            dim,
            half_width,
            nodes_per_axis,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.nodes_per_axis - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    /// Quadrature weight h^n.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn node_coord(&self, flat: usize) -> DVector<f64> {
        let m = self.nodes_per_axis;
        let h = self.spacing();
        let mut rem = flat;
        let mut out = DVector::zeros(self.dim);
        for axis in (0..self.dim).rev() {
            let i = rem % m;
            rem /= m;
            out[axis] = -self.half_width + i as f64 * h;
        }
        out
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let m = self.nodes_per_axis;
        idx.iter().fold(0, |acc, &i| acc * m + i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            values: vec![0.0; spec.node_count()],
            spec,
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&DVector<f64>) -> f64) -> Self {
        let values = (0..spec.node_count())
            .map(|i| f(&spec.node_coord(i)))
            .collect();
        Self { spec, values }
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn eval_multilinear(&self, x: &DVector<f64>) -> Option<f64> {
        let s = &self.spec;
        let h = s.spacing();
        let m = s.nodes_per_axis;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for axis in 0..s.dim {
            let u = (x[axis] + s.half_width) / h;
            if u < -1e-12 || u > (m - 1) as f64 + 1e-12 {
                return None;
            }
            let u = u.clamp(0.0, (m - 1) as f64);
            let i = (u.floor() as usize).min(m - 2);
            base[axis] = i;
            frac[axis] = u - i as f64;
        }
        let corners = 1usize << s.dim;
        let mut acc = 0.0;
        let mut idx = vec![0usize; s.dim];
        for corner in 0..corners {
            let mut w = 1.0;
            for axis in 0..s.dim {
                if corner >> axis & 1 == 1 {
                    idx[axis] = base[axis] + 1;
                    w *= frac[axis];
                } else {
                    idx[axis] = base[axis];
                    w *= 1.0 - frac[axis];
                }
            }
            if w != 0.0 {
                acc += w * self.values[s.flat_index(&idx)];
            }
        }
        Some(acc)
    }

    /// Nearest-node lookup; `None` outside the box.
    pub fn eval_nearest(&self, x: &DVector<f64>) -> Option<f64> {
        let s = &self.spec;
        let h = s.spacing();
        let m = s.nodes_per_axis;
        let mut idx = vec![0usize; s.dim];
        for axis in 0..s.dim {
            let u = (x[axis] + s.half_width) / h;
            if u < -0.5 || u > (m - 1) as f64 + 0.5 {
                return None;
            }
            idx[axis] = (u.round() as usize).min(m - 1);
        }
        Some(self.values[s.flat_index(&idx)])
    }

    /// Largest absolute value on the outermost node shell.
    pub fn boundary_max_abs(&self) -> f64 {
        let s = &self.spec;
        let m = s.nodes_per_axis;
        let mut worst = 0.0f64;
        for flat in 0..s.node_count() {
            let mut rem = flat;
            let mut on_boundary = false;
            for _ in 0..s.dim {
                let i = rem % m;
                rem /= m;
                if i == 0 || i == m - 1 {
                    on_boundary = true;
                    break;
                }
            }
            if on_boundary {
                worst = worst.max(self.values[flat].abs());
            }
        }
        worst
    }

    /// Quadrature integral sum f * h^n.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.weight()
    }

    /// Flat indices of nonzero nodes.
    pub fn support_nodes(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn check_same_spec(&self, other: &GridFunction) -> Result<()> {
        if self.spec == other.spec {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}
