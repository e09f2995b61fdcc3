//! Trainable and parameter-free SASV scoring heads.
//!
//! Every trainable head exposes its parameters as one flat vector
//! (`params` / `set_params`) and an analytic gradient of its output logit
//! with respect to that vector and to the CM weight rows (`grad`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{j_jacobian, j_matrix_with, prob_matrix, sigmoid, CmClassifier, JMode, ScoreMatrix};
use crate::embedding::{check_dim, dot};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const LEAKY_SLOPE: f64 = 0.01;

/// One trial's embeddings after the normalization policy (and, when
/// enabled, the assist layer) have been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInput {
    pub e_test: Vec<f64>,
    pub e_en: Vec<f64>,
    pub e_cm: Vec<f64>,
}

impl TrialInput {
    pub fn dim(&self) -> usize {
        self.e_test.len()
    }

    fn check(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.e_test.len())?;
        check_dim(dim, self.e_en.len())?;
        check_dim(dim, self.e_cm.len())
    }
}

/// Output logit with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub logit: f64,
    /// Same order as [`SasvHead::params`].
    pub params: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

/// Scoring strategies, named after the systems they reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Score matrix → J → linear layer (TDT-1, TDT-2, TDT-O).
    #[serde(rename = "tdt1")]
    MatrixLinear,
    /// As `MatrixLinear` with η₁, η₂ zeroed (TDT-D).
    #[serde(rename = "tdtd")]
    DiagZero,
    /// `P_SV · P_CM` (TDT-M).
    #[serde(rename = "tdtm")]
    ProbProduct,
    /// Raw branch-score sum (Baseline1).
    #[serde(rename = "scoresum")]
    ScoreSum,
    /// MLP over the concatenated embeddings (TDT-B).
    #[serde(rename = "concat")]
    Concat,
    /// 5×1 then 1×1 convolution over the stacked vectors (TDT-C).
    #[serde(rename = "conv")]
    Conv,
    /// Scalar sigmoid gates on both embeddings before the score matrix (TDT-A).
    #[serde(rename = "attn")]
    Attention,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::MatrixLinear,
        Strategy::DiagZero,
        Strategy::ProbProduct,
        Strategy::ScoreSum,
        Strategy::Concat,
        Strategy::Conv,
        Strategy::Attention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MatrixLinear => "tdt1",
            Strategy::DiagZero => "tdtd",
            Strategy::ProbProduct => "tdtm",
            Strategy::ScoreSum => "scoresum",
            Strategy::Concat => "concat",
            Strategy::Conv => "conv",
            Strategy::Attention => "attn",
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, Strategy::ProbProduct | Strategy::ScoreSum)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::UnsupportedStrategy(s.to_string()))
    }
}

/// Structural choices for head construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    /// Hidden layer widths of the concat MLP.
    pub hidden: Vec<usize>,
    pub channels: usize,
    pub j_mode: JMode,
    pub score_sum_minmax: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            channels: 8,
            j_mode: JMode::Formula,
            score_sum_minmax: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixLinear {
    pub w: [f64; 4],
    pub b: f64,
    pub zero_diagonal: bool,
    #[serde(default)]
    pub j_mode: JMode,
}

impl MatrixLinear {
    pub fn new(w: [f64; 4], b: f64, zero_diagonal: bool) -> Self {
        Self {
            w,
            b,
            zero_diagonal,
            j_mode: JMode::Formula,
        }
    }

    /// Logit, `∂logit/∂w` (the flattened J) and `∂logit/∂S`.
    fn forward_s(&self, s: ScoreMatrix) -> (f64, [f64; 4], [f64; 4]) {
        let s = if self.zero_diagonal {
            s.with_zero_diagonal()
        } else {
            s
        };
        let p = prob_matrix(&s);
        let j = j_matrix_with(&p, self.j_mode).to_array();
        let logit = dot(&self.w, &j) + self.b;
        let jac = j_jacobian(&p, self.j_mode);
        let pa = p.to_array();
        let mut ds = [0.0; 4];
        for (l, d) in ds.iter_mut().enumerate() {
            let dp: f64 = (0..4).map(|k| self.w[k] * jac[k][l]).sum();
            *d = dp * pa[l] * (1.0 - pa[l]);
        }
        if self.zero_diagonal {
            ds[0] = 0.0;
            ds[3] = 0.0;
        }
        (logit, j, ds)
    }
}

/// Baseline score sum, optionally min-max normalizing each branch with
/// ranges fitted on training trials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSumHead {
    /// `[sv_min, sv_max, cm_min, cm_max]`.
    pub minmax: Option<[f64; 4]>,
}

impl ScoreSumHead {
    fn apply(&self, s_sv: f64, s_cm: f64) -> f64 {
        match self.minmax {
            None => s_sv + s_cm,
            Some([a, b, c, d]) => {
                let scale = |x: f64, lo: f64, hi: f64| {
                    let w = hi - lo;
                    if w > 0.0 {
                        (x - lo) / w
                    } else {
                        x - lo
                    }
                };
                scale(s_sv, a, b) + scale(s_cm, c, d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatHead {
    pub layers: Vec<Dense>,
}

impl ConcatHead {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        s.extend(self.layers.last().map(|l| l.outputs));
        s
    }

    fn check(&self, dim: usize) -> Result<()> {
        let sizes = self.sizes();
        let ok = sizes.first() == Some(&(3 * dim))
            && sizes.last() == Some(&1)
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "concat layers {sizes:?} for embedding dim {dim}"
            )))
        }
    }

    /// Pre-activations of every layer.
    fn forward(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(&z);
            if i + 1 < self.layers.len() {
                z = a.iter().map(|&x| leaky(x)).collect();
            }
            pre.push(a);
        }
        pre
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvHead {
    pub channels: usize,
    pub dim: usize,
    /// `channels × 5`, row-major by channel; taps follow the stacking order
    /// `[e_test, e_en, e_cm, w0, w1]`.
    pub k5: Vec<f64>,
    pub b5: Vec<f64>,
    pub k1: Vec<f64>,
    pub b1: f64,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl ConvHead {
    fn check(&self, dim: usize) -> Result<()> {
        let c = self.channels;
        if self.dim != dim
            || self.k5.len() != 5 * c
            || self.b5.len() != c
            || self.k1.len() != c
            || self.w_out.len() != dim
        {
            return Err(Error::ShapeMismatch(format!(
                "conv head with {c} channels, dim {} for embedding dim {dim}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Pre-activation maps `h[c][j]` and the final embedding.
    fn forward(&self, rows: &[&[f64]; 5]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let h: Vec<Vec<f64>> = (0..self.channels)
            .map(|c| {
                let k = &self.k5[5 * c..5 * c + 5];
                (0..self.dim)
                    .map(|j| (0..5).map(|r| k[r] * rows[r][j]).sum::<f64>() + self.b5[c])
                    .collect()
            })
            .collect();
        let emb = (0..self.dim)
            .map(|j| {
                (0..self.channels)
                    .map(|c| self.k1[c] * leaky(h[c][j]))
                    .sum::<f64>()
                    + self.b1
            })
            .collect();
        (h, emb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    pub u1: Vec<f64>,
    pub b1: f64,
    pub u2: Vec<f64>,
    pub b2: f64,
    pub inner: MatrixLinear,
}

impl AttentionHead {
    fn gates(&self, e_test: &[f64], e_cm: &[f64]) -> (f64, f64) {
        (
            sigmoid(dot(&self.u1, e_test) + self.b1),
            sigmoid(dot(&self.u2, e_cm) + self.b2),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SasvHead {
    MatrixLinear(MatrixLinear),
    ProbProduct,
    ScoreSum(ScoreSumHead),
    Concat(ConcatHead),
    Conv(ConvHead),
    Attention(AttentionHead),
}

fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_slope(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn uniform_vec(rng: &mut SeededRng, n: usize, fan_in: usize) -> Vec<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.symmetric(a)).collect()
}

impl SasvHead {
    /// Fresh head: weights `U(−1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(strategy: Strategy, dim: usize, cfg: &HeadConfig, rng: &mut SeededRng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ConfigInvalid("dim"));
        }
        let matrix = |rng: &mut SeededRng, zero_diagonal| {
            let w = uniform_vec(rng, 4, 4);
            MatrixLinear {
                w: [w[0], w[1], w[2], w[3]],
                b: 0.0,
                zero_diagonal,
                j_mode: cfg.j_mode,
            }
        };
        Ok(match strategy {
            Strategy::MatrixLinear => SasvHead::MatrixLinear(matrix(rng, false)),
            Strategy::DiagZero => SasvHead::MatrixLinear(matrix(rng, true)),
            Strategy::ProbProduct => SasvHead::ProbProduct,
            Strategy::ScoreSum => SasvHead::ScoreSum(ScoreSumHead::default()),
            Strategy::Concat => {
                let mut sizes = vec![3 * dim];
                sizes.extend(cfg.hidden.iter().copied());
                sizes.push(1);
                if sizes.contains(&0) {
                    return Err(Error::ConfigInvalid("hidden"));
                }
                let layers = sizes
                    .windows(2)
                    .map(|w| Dense {
                        inputs: w[0],
                        outputs: w[1],
                        weights: uniform_vec(rng, w[0] * w[1], w[0]),
                        bias: vec![0.0; w[1]],
                    })
                    .collect();
                SasvHead::Concat(ConcatHead { layers })
            }
            Strategy::Conv => {
                let c = cfg.channels;
                if c == 0 {
                    return Err(Error::ConfigInvalid("channels"));
                }
                SasvHead::Conv(ConvHead {
                    channels: c,
                    dim,
                    k5: uniform_vec(rng, 5 * c, 5),
                    b5: vec![0.0; c],
                    k1: uniform_vec(rng, c, c),
                    b1: 0.0,
                    w_out: uniform_vec(rng, dim, dim),
                    b_out: 0.0,
                })
            }
            Strategy::Attention => {
                let u1 = uniform_vec(rng, dim, dim);
                let u2 = uniform_vec(rng, dim, dim);
                SasvHead::Attention(AttentionHead {
                    u1,
                    b1: 0.0,
                    u2,
                    b2: 0.0,
                    inner: matrix(rng, false),
                })
            }
        })
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            SasvHead::MatrixLinear(m) if m.zero_diagonal => Strategy::DiagZero,
            SasvHead::MatrixLinear(_) => Strategy::MatrixLinear,
            SasvHead::ProbProduct => Strategy::ProbProduct,
            SasvHead::ScoreSum(_) => Strategy::ScoreSum,
            SasvHead::Concat(_) => Strategy::Concat,
            SasvHead::Conv(_) => Strategy::Conv,
            SasvHead::Attention(_) => Strategy::Attention,
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.strategy().is_trainable()
    }

    /// Checks parameter shapes against an embedding dimension.
    pub fn check(&self, dim: usize) -> Result<()> {
        match self {
            SasvHead::Concat(h) => h.check(dim),
            SasvHead::Conv(h) => h.check(dim),
            SasvHead::Attention(h) => {
                check_dim(dim, h.u1.len())?;
                check_dim(dim, h.u2.len())
            }
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        match self {
            SasvHead::MatrixLinear(m) => {
                p.extend(m.w);
                p.push(m.b);
            }
            SasvHead::ProbProduct | SasvHead::ScoreSum(_) => {}
            SasvHead::Concat(h) => {
                for l in &h.layers {
                    p.extend(&l.weights);
                    p.extend(&l.bias);
                }
            }
            SasvHead::Conv(h) => {
                p.extend(&h.k5);
                p.extend(&h.b5);
                p.extend(&h.k1);
                p.push(h.b1);
                p.extend(&h.w_out);
                p.push(h.b_out);
            }
            SasvHead::Attention(h) => {
                p.extend(&h.u1);
                p.push(h.b1);
                p.extend(&h.u2);
                p.push(h.b2);
                p.extend(h.inner.w);
                p.push(h.inner.b);
            }
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.n_params();
        if p.len() != n {
            return Err(Error::ShapeMismatch(format!("expected {n} parameters, got {}", p.len())));
        }
        let mut it = p.iter().copied();
        let mut take = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().unwrap());
        match self {
            SasvHead::MatrixLinear(m) => {
                take(&mut m.w);
                take(std::slice::from_mut(&mut m.b));
            }
            SasvHead::ProbProduct | SasvHead::ScoreSum(_) => {}
            SasvHead::Concat(h) => {
                for l in &mut h.layers {
                    take(&mut l.weights);
                    take(&mut l.bias);
                }
            }
            SasvHead::Conv(h) => {
                take(&mut h.k5);
                take(&mut h.b5);
                take(&mut h.k1);
                take(std::slice::from_mut(&mut h.b1));
                take(&mut h.w_out);
                take(std::slice::from_mut(&mut h.b_out));
            }
            SasvHead::Attention(h) => {
                take(&mut h.u1);
                take(std::slice::from_mut(&mut h.b1));
                take(&mut h.u2);
                take(std::slice::from_mut(&mut h.b2));
                take(&mut h.inner.w);
                take(std::slice::from_mut(&mut h.inner.b));
            }
        }
        Ok(())
    }

    /// The head's trial score: a logit for trainable heads, the probability
    /// product for `ProbProduct`, the branch sum for `ScoreSum`.
    pub fn score(&self, x: &TrialInput, clf: &CmClassifier) -> Result<f64> {
        x.check(clf.dim())?;
        match self {
            SasvHead::MatrixLinear(m) => {
                let s = super::score_matrix(&x.e_test, &x.e_cm, clf, &x.e_en)?;
                Ok(m.forward_s(s).0)
            }
            SasvHead::ProbProduct => {
                let w = clf.scoring_vector();
                super::prob_product_score(sigmoid(dot(&x.e_test, &x.e_en)), sigmoid(dot(&x.e_cm, &w)))
            }
            SasvHead::ScoreSum(h) => {
                let w = clf.scoring_vector();
                Ok(h.apply(dot(&x.e_test, &x.e_en), dot(&x.e_cm, &w)))
            }
            SasvHead::Concat(h) => concat_score(&x.e_test, &x.e_en, &x.e_cm, h),
            SasvHead::Conv(h) => conv_score(&x.e_test, &x.e_en, &x.e_cm, clf, h),
            SasvHead::Attention(h) => {
                let (gt, gc) = attention_gate(&x.e_test, &x.e_cm, h)?;
                let s = super::score_matrix(&gt, &gc, clf, &x.e_en)?;
                Ok(h.inner.forward_s(s).0)
            }
        }
    }

    /// Logit and gradients. Fails for parameter-free heads.
    pub fn grad(&self, x: &TrialInput, clf: &CmClassifier) -> Result<HeadGrad> {
        let dim = clf.dim();
        x.check(dim)?;
        let w = clf.scoring_vector();
        let (e_t, e_en, e_c) = (&x.e_test, &x.e_en, &x.e_cm);
        // ∂logit/∂W, mapped to (w0, w1) = (−dW, +dW)
        let mut d_w = vec![0.0; dim];
        let mut d_w0_extra = vec![0.0; dim];
        let mut d_w1_extra = vec![0.0; dim];
        let (logit, params) = match self {
            SasvHead::MatrixLinear(m) => {
                let s = ScoreMatrix {
                    eta1: dot(e_t, &w),
                    s_sv: dot(e_t, e_en),
                    s_cm: dot(e_c, &w),
                    eta2: dot(e_c, e_en),
                };
                let (logit, j, ds) = m.forward_s(s);
                for i in 0..dim {
                    d_w[i] = ds[0] * e_t[i] + ds[2] * e_c[i];
                }
                let mut p = j.to_vec();
                p.push(1.0);
                (logit, p)
            }
            SasvHead::Attention(h) => {
                let (g1, g2) = h.gates(e_t, e_c);
                let (t_w, t_en, c_w, c_en) = (dot(e_t, &w), dot(e_t, e_en), dot(e_c, &w), dot(e_c, e_en));
                let s = ScoreMatrix {
                    eta1: g1 * t_w,
                    s_sv: g1 * t_en,
                    s_cm: g2 * c_w,
                    eta2: g2 * c_en,
                };
                let (logit, j, ds) = h.inner.forward_s(s);
                let dg1 = (ds[0] * t_w + ds[1] * t_en) * g1 * (1.0 - g1);
                let dg2 = (ds[2] * c_w + ds[3] * c_en) * g2 * (1.0 - g2);
                for i in 0..dim {
                    d_w[i] = ds[0] * g1 * e_t[i] + ds[2] * g2 * e_c[i];
                }
                let mut p = Vec::with_capacity(2 * dim + 7);
                p.extend(e_t.iter().map(|x| dg1 * x));
                p.push(dg1);
                p.extend(e_c.iter().map(|x| dg2 * x));
                p.push(dg2);
                p.extend(j);
                p.push(1.0);
                (logit, p)
            }
            SasvHead::Concat(h) => {
                h.check(dim)?;
                let input: Vec<f64> = e_t.iter().chain(e_en).chain(e_c).copied().collect();
                let pre = h.forward(&input);
                let n = h.layers.len();
                let logit = pre[n - 1][0];
                let mut offsets = Vec::with_capacity(n);
                let mut total = 0;
                for layer in &h.layers {
                    offsets.push(total);
                    total += layer.weights.len() + layer.bias.len();
                }
                let mut p = vec![0.0; total];
                let mut delta = vec![1.0];
                for l in (0..n).rev() {
                    let layer = &h.layers[l];
                    let hidden;
                    let z_prev: &[f64] = if l == 0 {
                        &input
                    } else {
                        hidden = pre[l - 1].iter().map(|&a| leaky(a)).collect::<Vec<f64>>();
                        &hidden
                    };
                    let block = &mut p[offsets[l]..offsets[l] + layer.weights.len() + layer.bias.len()];
                    let (gw, gb) = block.split_at_mut(layer.weights.len());
                    for (row, d) in gw.chunks_exact_mut(layer.inputs).zip(&delta) {
                        for (g, z) in row.iter_mut().zip(z_prev) {
                            *g = d * z;
                        }
                    }
                    gb.copy_from_slice(&delta);
                    if l > 0 {
                        let mut next = vec![0.0; layer.inputs];
                        for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                            for (nx, wv) in next.iter_mut().zip(row) {
                                *nx += d * wv;
                            }
                        }
                        for (nx, a) in next.iter_mut().zip(&pre[l - 1]) {
                            *nx *= leaky_slope(*a);
                        }
                        delta = next;
                    }
                }
                (logit, p)
            }
            SasvHead::Conv(h) => {
                h.check(dim)?;
                let rows: [&[f64]; 5] = [e_t, e_en, e_c, &clf.w0, &clf.w1];
                let (pre, emb) = h.forward(&rows);
                let logit = dot(&h.w_out, &emb) + h.b_out;
                let c = h.channels;
                let mut g_k5 = vec![0.0; 5 * c];
                let mut g_b5 = vec![0.0; c];
                let mut g_k1 = vec![0.0; c];
                let g_b1: f64 = h.w_out.iter().sum();
                for ch in 0..c {
                    for j in 0..dim {
                        let a = pre[ch][j];
                        g_k1[ch] += h.w_out[j] * leaky(a);
                        let dh = h.w_out[j] * h.k1[ch] * leaky_slope(a);
                        g_b5[ch] += dh;
                        for r in 0..5 {
                            g_k5[5 * ch + r] += dh * rows[r][j];
                        }
                        d_w0_extra[j] += dh * h.k5[5 * ch + 3];
                        d_w1_extra[j] += dh * h.k5[5 * ch + 4];
                    }
                }
                let mut p = g_k5;
                p.extend(g_b5);
                p.extend(g_k1);
                p.push(g_b1);
                p.extend(emb);
                p.push(1.0);
                (logit, p)
            }
            SasvHead::ProbProduct | SasvHead::ScoreSum(_) => {
                return Err(Error::UnsupportedStrategy(format!(
                    "{} has no trainable parameters",
                    self.strategy()
                )))
            }
        };
        let w0 = d_w0_extra.iter().zip(&d_w).map(|(e, d)| e - d).collect();
        let w1 = d_w1_extra.iter().zip(&d_w).map(|(e, d)| e + d).collect();
        Ok(HeadGrad {
            logit,
            params,
            w0,
            w1,
        })
    }
}

/// `w · flatten(J) + b`, row-major flatten.
pub fn matrix_linear_score(j: &super::JMatrix, head: &MatrixLinear) -> f64 {
    dot(&head.w, &j.to_array()) + head.b
}

/// Full pipeline with η₁ and η₂ forced to zero before the sigmoid.
pub fn diag_zero_score(
    e_test: &[f64],
    e_cm: &[f64],
    clf: &CmClassifier,
    e_en: &[f64],
    head: &MatrixLinear,
) -> Result<f64> {
    let s = super::score_matrix(e_test, e_cm, clf, e_en)?;
    let head = MatrixLinear {
        zero_diagonal: true,
        ..head.clone()
    };
    Ok(head.forward_s(s).0)
}

pub fn concat_score(e_test: &[f64], e_en: &[f64], e_cm: &[f64], head: &ConcatHead) -> Result<f64> {
    let dim = e_test.len();
    check_dim(dim, e_en.len())?;
    check_dim(dim, e_cm.len())?;
    head.check(dim)?;
    let input: Vec<f64> = e_test.iter().chain(e_en).chain(e_cm).copied().collect();
    Ok(head.forward(&input).last().unwrap()[0])
}

/// Stacks `[e_test, e_en, e_cm, w0, w1]` into a 5×dim map, applies the 5×1
/// convolution (leaky-rectified), mixes channels with the 1×1 convolution
/// and scores the resulting dim-length embedding linearly.
pub fn conv_score(
    e_test: &[f64],
    e_en: &[f64],
    e_cm: &[f64],
    clf: &CmClassifier,
    head: &ConvHead,
) -> Result<f64> {
    let dim = clf.dim();
    for len in [e_test.len(), e_en.len(), e_cm.len()] {
        check_dim(dim, len)?;
    }
    head.check(dim)?;
    let (_, emb) = head.forward(&[e_test, e_en, e_cm, &clf.w0, &clf.w1]);
    Ok(dot(&head.w_out, &emb) + head.b_out)
}

/// Returns `(σ(u1·e_test + b1)·e_test, σ(u2·e_cm + b2)·e_cm)`.
pub fn attention_gate(e_test: &[f64], e_cm: &[f64], head: &AttentionHead) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(head.u1.len(), e_test.len())?;
    check_dim(head.u2.len(), e_cm.len())?;
    let (g1, g2) = head.gates(e_test, e_cm);
    Ok((
        e_test.iter().map(|x| g1 * x).collect(),
        e_cm.iter().map(|x| g2 * x).collect(),
    ))
}
