use serde::{Deserialize, Serialize};

use crate::embedding::check_dim;
use crate::error::{Error, Result};

/// Linear layer over `[e_cm; e_spk]` producing a dim-length CM embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistLayer {
    pub dim: usize,
    /// Row-major `dim × 2·dim`.
    pub m: Vec<f64>,
    pub b: Vec<f64>,
}

impl AssistLayer {
    /// `M = [I | 0]`, `b = 0`: passes the CM embedding through unchanged.
    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; 2 * dim * dim];
        for i in 0..dim {
            m[i * 2 * dim + i] = 1.0;
        }
        Self {
            dim,
            m,
            b: vec![0.0; dim],
        }
    }

    fn check(&self) -> Result<()> {
        if self.m.len() != 2 * self.dim * self.dim || self.b.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "assist layer {}×{} with bias {} for dim {}",
                self.m.len() / (2 * self.dim).max(1),
                2 * self.dim,
                self.b.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn apply(&self, e_cm: &[f64], e_spk: &[f64]) -> Result<Vec<f64>> {
        self.check()?;
        check_dim(self.dim, e_cm.len())?;
        check_dim(self.dim, e_spk.len())?;
        let d = self.dim;
        Ok((0..d)
            .map(|i| {
                let row = &self.m[i * 2 * d..(i + 1) * 2 * d];
                let a: f64 = row[..d].iter().zip(e_cm).map(|(w, x)| w * x).sum();
                let s: f64 = row[d..].iter().zip(e_spk).map(|(w, x)| w * x).sum();
                a + s + self.b[i]
            })
            .collect())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.m.clone();
        p.extend(&self.b);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.m.len();
        if p.len() != n + self.b.len() {
            return Err(Error::ShapeMismatch("assist parameter count".into()));
        }
        self.m.copy_from_slice(&p[..n]);
        self.b.copy_from_slice(&p[n..]);
        Ok(())
    }

    /// Gradient of a loss with respect to `[M, b]` given `∂loss/∂output`.
    pub fn backward(&self, e_cm: &[f64], e_spk: &[f64], d_out: &[f64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.m.len() + self.dim);
        for di in d_out {
            g.extend(e_cm.iter().chain(e_spk).map(|x| di * x));
        }
        g.extend_from_slice(d_out);
        g
    }
}

/// `M·[e_cm_raw; e_spk] + b`.
pub fn assist_transform(e_cm_raw: &[f64], e_spk: &[f64], layer: &AssistLayer) -> Result<Vec<f64>> {
    layer.apply(e_cm_raw, e_spk)
}
