//! A small pre-LayerNorm decoder-only transformer with explicit backprop.
//!
//! All parameters live in one flat `Vec<f64>`; [`Layout`] records where each
//! tensor starts. Matrices are row-major and multiply from the right
//! (`y = x W + b`, `W: in x out`). The output projection is tied to the token
//! embedding.

use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{log_sum_exp, ModelError, SequenceModel};
use crate::anticipate::{CONTROL_OFFSET, VOCAB_SIZE};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyTransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub context_length: usize,
    pub vocab_size: usize,
}

impl Default for TinyTransformerConfig {
    fn default() -> Self {
        TinyTransformerConfig {
            layers: 2,
            heads: 2,
            model_dim: 64,
            context_length: 512,
            vocab_size: VOCAB_SIZE,
        }
    }
}

impl TinyTransformerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(2..=4).contains(&self.layers) {
            return bad(format!("layers must be in 2..=4, got {}", self.layers));
        }
        if !(2..=4).contains(&self.heads) {
            return bad(format!("heads must be in 2..=4, got {}", self.heads));
        }
        if !(64..=256).contains(&self.model_dim) {
            return bad(format!(
                "model_dim must be in 64..=256, got {}",
                self.model_dim
            ));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            ));
        }
        if self.context_length == 0 || self.vocab_size == 0 {
            return bad("context_length and vocab_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_proj: usize,
    b_proj: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &TinyTransformerConfig) -> Self {
        let c = cfg.model_dim;
        let mut next = 0;
        let mut take = |n: usize| {
            let at = next;
            next += n;
            at
        };
        let wte = take(cfg.vocab_size * c);
        let wpe = take(cfg.context_length * c);
        let layers = (0..cfg.layers)
            .map(|_| LayerOffsets {
                ln1_g: take(c),
                ln1_b: take(c),
                w_qkv: take(c * 3 * c),
                b_qkv: take(3 * c),
                w_o: take(c * c),
                b_o: take(c),
                ln2_g: take(c),
                ln2_b: take(c),
                w_fc: take(c * 4 * c),
                b_fc: take(4 * c),
                w_proj: take(4 * c * c),
                b_proj: take(c),
            })
            .collect();
        let lnf_g = take(c);
        let lnf_b = take(c);
        Layout {
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            total: next,
        }
    }
}

fn mat(p: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout")
}

fn vec1(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

fn accumulate<'a>(grad: &mut [f64], off: usize, values: impl IntoIterator<Item = &'a f64>) {
    for (g, v) in grad[off..].iter_mut().zip(values) {
        *g += v;
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (rows, cols) = x.dim();
    let mut xhat = Array2::zeros((rows, cols));
    let mut rstd = Array1::zeros(rows);
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let mean = row.sum() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * r));
    }
    let out = &xhat * &g + b;
    (out, LnCache { xhat, rstd })
}

/// Returns `(dx, dgamma, dbeta)`.
fn layer_norm_backward(
    dout: &Array2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let cols = dout.ncols() as f64;
    let dg = (dout * &cache.xhat).sum_axis(Axis(0));
    let db = dout.sum_axis(Axis(0));
    let dxhat = dout * &g;
    let mut dx = Array2::zeros(dout.dim());
    for i in 0..dout.nrows() {
        let dxh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_d = dxh.sum() / cols;
        let mean_dx = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / cols;
        let r = cache.rstd[i];
        dx.row_mut(i)
            .assign(&((&dxh - mean_d - &(&xh * mean_dx)) * r));
    }
    (dx, dg, db)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerCache {
    ln1: LnCache,
    ln1_out: Array2<f64>,
    qkv: Array2<f64>,
    att: Vec<Array2<f64>>,
    y: Array2<f64>,
    ln2: LnCache,
    ln2_out: Array2<f64>,
    h_pre: Array2<f64>,
    h_act: Array2<f64>,
}

struct ForwardCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    lnf_out: Array2<f64>,
}

#[derive(Clone)]
pub struct TinyTransformer {
    config: TinyTransformerConfig,
    layout: Layout,
    params: Vec<f64>,
    version: String,
}

impl fmt::Debug for TinyTransformer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TinyTransformer")
            .field("config", &self.config)
            .field("parameters", &self.params.len())
            .field("version", &self.version)
            .finish()
    }
}

impl PartialEq for TinyTransformer {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl TinyTransformer {
    /// GPT-2 style initialization: N(0, 0.02) weights, residual projections
    /// scaled by `1/sqrt(2 * layers)`, unit LayerNorm gains, zero biases.
    pub fn new(config: TinyTransformerConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let residual =
            Normal::new(0.0, INIT_STD / (2.0 * config.layers as f64).sqrt()).expect("valid std");
        let c = config.model_dim;
        let mut fill = |off: usize, n: usize, dist: &Normal<f64>| {
            for p in &mut params[off..off + n] {
                *p = dist.sample(&mut rng);
            }
        };
        fill(layout.wte, config.vocab_size * c, &normal);
        fill(layout.wpe, config.context_length * c, &normal);
        for l in &layout.layers {
            fill(l.w_qkv, 3 * c * c, &normal);
            fill(l.w_o, c * c, &residual);
            fill(l.w_fc, 4 * c * c, &normal);
            fill(l.w_proj, 4 * c * c, &residual);
        }
        for l in &layout.layers {
            params[l.ln1_g..l.ln1_g + c].fill(1.0);
            params[l.ln2_g..l.ln2_g + c].fill(1.0);
        }
        params[layout.lnf_g..layout.lnf_g + c].fill(1.0);
        Ok(Self::from_parts(config, params))
    }

    fn from_parts(config: TinyTransformerConfig, params: Vec<f64>) -> Self {
        Self::try_from_parts(config, params).expect("parameter count matches configuration")
    }

    pub(crate) fn try_from_parts(
        config: TinyTransformerConfig,
        params: Vec<f64>,
    ) -> Result<Self, String> {
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(format!(
                "configuration needs {} parameters, found {}",
                layout.total,
                params.len()
            ));
        }
        let mut model = TinyTransformer {
            config,
            layout,
            params,
            version: String::new(),
        };
        model.refresh_version();
        Ok(model)
    }

    pub fn config(&self) -> &TinyTransformerConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access for optimizers and finite-difference checks. Call
    /// [`TinyTransformer::refresh_version`] after changing parameters.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn refresh_version(&mut self) {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.to_le_bytes());
        }
        let cfg = &self.config;
        self.version = format!(
            "tiny-transformer-{}x{}-{}",
            cfg.layers,
            cfg.model_dim,
            hex::encode(&hasher.finalize()[..4])
        );
    }

    /// Index ranges of parameters that can influence the loss of a sequence
    /// of `len` inputs (position embeddings past `len` cannot).
    pub fn live_parameter_ranges(&self, len: usize) -> Vec<std::ops::Range<usize>> {
        let c = self.config.model_dim;
        vec![
            self.layout.wte..self.layout.wpe + len * c,
            self.layout.wpe + self.config.context_length * c..self.layout.total,
        ]
    }

    fn forward(&self, tokens: &[u32]) -> ForwardCache {
        let cfg = &self.config;
        let (t_len, c) = (tokens.len(), cfg.model_dim);
        assert!(t_len >= 1 && t_len <= cfg.context_length);
        let p = &self.params;
        let wte = mat(p, self.layout.wte, cfg.vocab_size, c);
        let wpe = mat(p, self.layout.wpe, cfg.context_length, c);
        let mut x = Array2::zeros((t_len, c));
        for (t, &tok) in tokens.iter().enumerate() {
            x.row_mut(t).assign(&(&wte.row(tok as usize) + &wpe.row(t)));
        }
        let hs = c / cfg.heads;
        let scale = 1.0 / (hs as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in &self.layout.layers {
            let (ln1_out, ln1) = layer_norm(&x, vec1(p, l.ln1_g, c), vec1(p, l.ln1_b, c));
            let qkv = ln1_out.dot(&mat(p, l.w_qkv, c, 3 * c)) + vec1(p, l.b_qkv, 3 * c);
            let mut y = Array2::zeros((t_len, c));
            let mut att = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let q = qkv.slice(s![.., h * hs..(h + 1) * hs]);
                let k = qkv.slice(s![.., c + h * hs..c + (h + 1) * hs]);
                let v = qkv.slice(s![.., 2 * c + h * hs..2 * c + (h + 1) * hs]);
                let mut a = q.dot(&k.t()) * scale;
                for i in 0..t_len {
                    let mut row = a.row_mut(i);
                    let max = row
                        .slice(s![..=i])
                        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let mut total = 0.0;
                    for j in 0..t_len {
                        if j <= i {
                            row[j] = (row[j] - max).exp();
                            total += row[j];
                        } else {
                            row[j] = 0.0;
                        }
                    }
                    row.mapv_inplace(|v| v / total);
                }
                y.slice_mut(s![.., h * hs..(h + 1) * hs]).assign(&a.dot(&v));
                att.push(a);
            }
            x = x + y.dot(&mat(p, l.w_o, c, c)) + vec1(p, l.b_o, c);
            let (ln2_out, ln2) = layer_norm(&x, vec1(p, l.ln2_g, c), vec1(p, l.ln2_b, c));
            let h_pre = ln2_out.dot(&mat(p, l.w_fc, c, 4 * c)) + vec1(p, l.b_fc, 4 * c);
            let h_act = h_pre.mapv(gelu);
            x = x + h_act.dot(&mat(p, l.w_proj, 4 * c, c)) + vec1(p, l.b_proj, c);
            layers.push(LayerCache {
                ln1,
                ln1_out,
                qkv,
                att,
                y,
                ln2,
                ln2_out,
                h_pre,
                h_act,
            });
        }
        let (lnf_out, lnf) = layer_norm(
            &x,
            vec1(p, self.layout.lnf_g, c),
            vec1(p, self.layout.lnf_b, c),
        );
        ForwardCache {
            tokens: tokens.to_vec(),
            layers,
            lnf,
            lnf_out,
        }
    }

    fn logits(&self, cache: &ForwardCache) -> Array2<f64> {
        let wte = mat(
            &self.params,
            self.layout.wte,
            self.config.vocab_size,
            self.config.model_dim,
        );
        cache.lnf_out.dot(&wte.t())
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>, grad: &mut [f64]) {
        let cfg = &self.config;
        let c = cfg.model_dim;
        let t_len = cache.tokens.len();
        let p = &self.params;
        let wte = mat(p, self.layout.wte, cfg.vocab_size, c);

        accumulate(
            grad,
            self.layout.wte,
            dlogits.t().dot(&cache.lnf_out).iter(),
        );
        let d_lnf_out = dlogits.dot(&wte);
        let (mut dx, dg, db) =
            layer_norm_backward(&d_lnf_out, &cache.lnf, vec1(p, self.layout.lnf_g, c));
        accumulate(grad, self.layout.lnf_g, dg.iter());
        accumulate(grad, self.layout.lnf_b, db.iter());

        let hs = c / cfg.heads;
        let scale = 1.0 / (hs as f64).sqrt();
        for (l, lc) in self.layout.layers.iter().zip(&cache.layers).rev() {
            // feed-forward block
            accumulate(grad, l.w_proj, lc.h_act.t().dot(&dx).iter());
            accumulate(grad, l.b_proj, dx.sum_axis(Axis(0)).iter());
            let mut d_h = dx.dot(&mat(p, l.w_proj, 4 * c, c).t());
            d_h.zip_mut_with(&lc.h_pre, |d, &pre| *d *= gelu_grad(pre));
            accumulate(grad, l.w_fc, lc.ln2_out.t().dot(&d_h).iter());
            accumulate(grad, l.b_fc, d_h.sum_axis(Axis(0)).iter());
            let d_ln2_out = d_h.dot(&mat(p, l.w_fc, c, 4 * c).t());
            let (dx_ln2, dg2, db2) = layer_norm_backward(&d_ln2_out, &lc.ln2, vec1(p, l.ln2_g, c));
            accumulate(grad, l.ln2_g, dg2.iter());
            accumulate(grad, l.ln2_b, db2.iter());
            dx = dx + dx_ln2;

            // attention block
            accumulate(grad, l.w_o, lc.y.t().dot(&dx).iter());
            accumulate(grad, l.b_o, dx.sum_axis(Axis(0)).iter());
            let dy = dx.dot(&mat(p, l.w_o, c, c).t());
            let mut d_qkv = Array2::zeros((t_len, 3 * c));
            for h in 0..cfg.heads {
                let q = lc.qkv.slice(s![.., h * hs..(h + 1) * hs]);
                let k = lc.qkv.slice(s![.., c + h * hs..c + (h + 1) * hs]);
                let v = lc.qkv.slice(s![.., 2 * c + h * hs..2 * c + (h + 1) * hs]);
                let att = &lc.att[h];
                let dy_h = dy.slice(s![.., h * hs..(h + 1) * hs]);
                let d_att = dy_h.dot(&v.t());
                let d_v = att.t().dot(&dy_h);
                let mut d_scores = Array2::zeros((t_len, t_len));
                for i in 0..t_len {
                    let a = att.row(i);
                    let da = d_att.row(i);
                    let dot: f64 = a.iter().zip(da.iter()).map(|(x, y)| x * y).sum();
                    for j in 0..=i {
                        d_scores[[i, j]] = a[j] * (da[j] - dot) * scale;
                    }
                }
                d_qkv
                    .slice_mut(s![.., h * hs..(h + 1) * hs])
                    .assign(&d_scores.dot(&k));
                d_qkv
                    .slice_mut(s![.., c + h * hs..c + (h + 1) * hs])
                    .assign(&d_scores.t().dot(&q));
                d_qkv
                    .slice_mut(s![.., 2 * c + h * hs..2 * c + (h + 1) * hs])
                    .assign(&d_v);
            }
            accumulate(grad, l.w_qkv, lc.ln1_out.t().dot(&d_qkv).iter());
            accumulate(grad, l.b_qkv, d_qkv.sum_axis(Axis(0)).iter());
            let d_ln1_out = d_qkv.dot(&mat(p, l.w_qkv, c, 3 * c).t());
            let (dx_ln1, dg1, db1) = layer_norm_backward(&d_ln1_out, &lc.ln1, vec1(p, l.ln1_g, c));
            accumulate(grad, l.ln1_g, dg1.iter());
            accumulate(grad, l.ln1_b, db1.iter());
            dx = dx + dx_ln1;
        }

        for (t, &tok) in cache.tokens.iter().enumerate() {
            accumulate(grad, self.layout.wte + tok as usize * c, dx.row(t).iter());
            accumulate(grad, self.layout.wpe + t * c, dx.row(t).iter());
        }
    }

    /// Cross-entropy of predicting `tokens[1..]`, summed over the counted
    /// positions, together with the gradient of that sum.
    ///
    /// With `events_only`, targets in the control range do not count.
    /// Sequences longer than `context_length + 1` are truncated from the left.
    pub fn loss_and_grad(&self, tokens: &[u32], events_only: bool) -> (f64, usize, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let tokens = &tokens[tokens.len().saturating_sub(self.config.context_length + 1)..];
        if tokens.len() < 2 {
            return (0.0, 0, grad);
        }
        let (inputs, targets) = (&tokens[..tokens.len() - 1], &tokens[1..]);
        let cache = self.forward(inputs);
        let mut dlogits = self.logits(&cache);
        let mut loss = 0.0;
        let mut count = 0;
        for (t, &target) in targets.iter().enumerate() {
            let mut row = dlogits.row_mut(t);
            let counted = !events_only || !is_control_token(target);
            let lse = log_sum_exp(row.as_slice().expect("row-major"));
            if counted {
                loss += lse - row[target as usize];
                count += 1;
                row.mapv_inplace(|l| (l - lse).exp());
                row[target as usize] -= 1.0;
            } else {
                row.fill(0.0);
            }
        }
        self.backward(&cache, &dlogits, &mut grad);
        (loss, count, grad)
    }

    /// Summed loss only (same conventions as [`TinyTransformer::loss_and_grad`]).
    pub fn loss(&self, tokens: &[u32], events_only: bool) -> (f64, usize) {
        let tokens = &tokens[tokens.len().saturating_sub(self.config.context_length + 1)..];
        if tokens.len() < 2 {
            return (0.0, 0);
        }
        let cache = self.forward(&tokens[..tokens.len() - 1]);
        let logits = self.logits(&cache);
        let mut loss = 0.0;
        let mut count = 0;
        for (t, &target) in tokens[1..].iter().enumerate() {
            if events_only && is_control_token(target) {
                continue;
            }
            let row = logits.row(t);
            loss += log_sum_exp(row.as_slice().expect("row-major")) - row[target as usize];
            count += 1;
        }
        (loss, count)
    }
}

fn is_control_token(token: u32) -> bool {
    (CONTROL_OFFSET..2 * CONTROL_OFFSET).contains(&token)
}

impl SequenceModel for TinyTransformer {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn context_length(&self) -> usize {
        self.config.context_length
    }

    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64> {
        if prefix.is_empty() {
            return vec![0.0; self.config.vocab_size];
        }
        let prefix = &prefix[prefix.len().saturating_sub(self.config.context_length)..];
        let cache = self.forward(prefix);
        let wte = mat(
            &self.params,
            self.layout.wte,
            self.config.vocab_size,
            self.config.model_dim,
        );
        wte.dot(&cache.lnf_out.row(prefix.len() - 1)).to_vec()
    }

    fn model_version(&self) -> String {
        self.version.clone()
    }

    fn sequence_nll(&self, tokens: &[u32]) -> (f64, usize) {
        self.loss(tokens, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TinyTransformer {
        TinyTransformer::new(
            TinyTransformerConfig {
                layers: 2,
                heads: 2,
                model_dim: 64,
                context_length: 16,
                vocab_size: 40,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn config_bounds() {
        let ok = TinyTransformerConfig::default();
        ok.validate().unwrap();
        for bad in [
            TinyTransformerConfig {
                layers: 1,
                ..ok.clone()
            },
            TinyTransformerConfig {
                heads: 5,
                ..ok.clone()
            },
            TinyTransformerConfig {
                model_dim: 32,
                ..ok.clone()
            },
            TinyTransformerConfig {
                heads: 3,
                model_dim: 64,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn logits_are_finite_and_deterministic() {
        let m = small();
        let a = m.next_token_logits(&[1, 2, 3]);
        assert_eq!(a.len(), 40);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, m.next_token_logits(&[1, 2, 3]));
    }

    #[test]
    fn causal_prefix_consistency() {
        // logits at position t of a longer input equal logits of the prefix
        let m = small();
        let cache = m.forward(&[5, 6, 7, 8]);
        let full = m.logits(&cache);
        let prefix = m.next_token_logits(&[5, 6]);
        for (a, b) in full.row(1).iter().zip(&prefix) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn long_prefix_truncated_left() {
        let m = small();
        let long: Vec<u32> = (0..30).map(|i| i % 40).collect();
        assert_eq!(m.next_token_logits(&long), m.next_token_logits(&long[14..]));
    }

    #[test]
    fn loss_matches_sequence_nll_route() {
        let m = small();
        let toks = [1u32, 4, 9, 2, 7];
        let (a, n) = m.loss(&toks, false);
        let mut b = 0.0;
        for i in 1..toks.len() {
            let logits = m.next_token_logits(&toks[..i]);
            b += log_sum_exp(&logits) - logits[toks[i] as usize];
        }
        assert_eq!(n, 4);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
