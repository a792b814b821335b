use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a BERT-style encoder; field names follow the usual `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    #[serde(default = "default_model_type")]
    pub model_type: String,
}

fn default_type_vocab() -> usize {
    2
}
fn default_ln_eps() -> f64 {
    1e-12
}
fn default_act() -> String {
    "gelu".into()
}
fn default_model_type() -> String {
    "bert".into()
}

impl BertConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0
            || self.num_attention_heads == 0
            || !self.hidden_size.is_multiple_of(self.num_attention_heads)
        {
            return Err(Error::Checkpoint(format!(
                "hidden size {} is not divisible by {} attention heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if self.hidden_act != "gelu" {
            return Err(Error::Checkpoint(format!(
                "unsupported activation `{}` (only exact gelu)",
                self.hidden_act
            )));
        }
        if self.type_vocab_size == 0 || self.vocab_size == 0 || self.max_position_embeddings < 2 {
            return Err(Error::Checkpoint("degenerate encoder dimensions".into()));
        }
        Ok(())
    }
}

/// Callback receiving `(name, shape, values)` for each parameter tensor.
pub type Visitor<'a> = dyn FnMut(&str, &[usize], &[f64]) + 'a;
pub type VisitorMut<'a> = dyn FnMut(&str, &mut [f64]) + 'a;

/// Parameter containers expose their tensors by name in a fixed order.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>);

    fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, v| n += v.len());
        n
    }

    /// All values concatenated in visiting order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, v| out.extend_from_slice(v));
        out
    }
}

fn visit2(prefix: &str, name: &str, a: &Array2<f64>, f: &mut Visitor<'_>) {
    f(
        &format!("{prefix}{name}"),
        a.shape(),
        a.as_slice().expect("standard layout"),
    );
}
fn visit1(prefix: &str, name: &str, a: &Array1<f64>, f: &mut Visitor<'_>) {
    f(
        &format!("{prefix}{name}"),
        a.shape(),
        a.as_slice().expect("standard layout"),
    );
}
fn visit2_mut(prefix: &str, name: &str, a: &mut Array2<f64>, f: &mut VisitorMut<'_>) {
    f(&format!("{prefix}{name}"), a.as_slice_mut().expect("standard layout"));
}
fn visit1_mut(prefix: &str, name: &str, a: &mut Array1<f64>, f: &mut VisitorMut<'_>) {
    f(&format!("{prefix}{name}"), a.as_slice_mut().expect("standard layout"));
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Affine map stored as `[out, in]`: `y = x Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(out: usize, inp: usize) -> Linear {
        Linear {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    pub fn init(out: usize, inp: usize, std: f64, rng: &mut impl Rng) -> Linear {
        Linear {
            w: normal_matrix(out, inp, std, rng),
            b: Array1::zeros(out),
        }
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, g: &mut Linear) -> Array2<f64> {
        g.w += &dy.t().dot(x);
        g.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

impl Params for Linear {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        visit2(p, "weight", &self.w, f);
        visit1(p, "bias", &self.b, f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        visit2_mut(p, "weight", &mut self.w, f);
        visit1_mut(p, "bias", &mut self.b, f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub g: Array1<f64>,
    pub b: Array1<f64>,
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(n: usize) -> LayerNorm {
        LayerNorm {
            g: Array1::ones(n),
            b: Array1::zeros(n),
        }
    }

    fn zeros(n: usize) -> LayerNorm {
        LayerNorm {
            g: Array1::zeros(n),
            b: Array1::zeros(n),
        }
    }

    fn forward(&self, x: Array2<f64>, eps: f64) -> (Array2<f64>, LnCache) {
        let n = x.ncols() as f64;
        let mut xhat = x;
        let mut inv_std = Array1::zeros(xhat.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            *s = 1.0 / (var + eps).sqrt();
            row *= *s;
        }
        let y = &xhat * &self.g + &self.b;
        (y, LnCache { xhat, inv_std })
    }

    fn backward(&self, c: &LnCache, dy: &Array2<f64>, g: &mut LayerNorm) -> Array2<f64> {
        g.g += &(dy * &c.xhat).sum_axis(Axis(0));
        g.b += &dy.sum_axis(Axis(0));
        let n = dy.ncols() as f64;
        let mut dx = dy * &self.g;
        for ((mut row, xh), &s) in dx.rows_mut().into_iter().zip(c.xhat.rows()).zip(c.inv_std.iter()) {
            let mean_d = row.sum() / n;
            let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
            row.zip_mut_with(&xh, |d, &x| *d = s * (*d - mean_d - x * mean_dx));
        }
        dx
    }
}

impl Params for LayerNorm {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        visit1(p, "weight", &self.g, f);
        visit1(p, "bias", &self.b, f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        visit1_mut(p, "weight", &mut self.g, f);
        visit1_mut(p, "bias", &mut self.b, f);
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * pdf
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub word: Array2<f64>,
    pub position: Array2<f64>,
    pub token_type: Array2<f64>,
    pub ln: LayerNorm,
}

impl Params for Embeddings {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        visit2(p, "word_embeddings.weight", &self.word, f);
        visit2(p, "position_embeddings.weight", &self.position, f);
        visit2(p, "token_type_embeddings.weight", &self.token_type, f);
        self.ln.visit(&format!("{p}LayerNorm."), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        visit2_mut(p, "word_embeddings.weight", &mut self.word, f);
        visit2_mut(p, "position_embeddings.weight", &mut self.position, f);
        visit2_mut(p, "token_type_embeddings.weight", &mut self.token_type, f);
        self.ln.visit_mut(&format!("{p}LayerNorm."), f);
    }
}

/// Post-norm transformer block: self-attention then a GELU feed-forward,
/// each wrapped in a residual connection and layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_ln: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub out_ln: LayerNorm,
}

impl Params for Layer {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        self.query.visit(&format!("{p}attention.self.query."), f);
        self.key.visit(&format!("{p}attention.self.key."), f);
        self.value.visit(&format!("{p}attention.self.value."), f);
        self.attn_out.visit(&format!("{p}attention.output.dense."), f);
        self.attn_ln.visit(&format!("{p}attention.output.LayerNorm."), f);
        self.ffn_in.visit(&format!("{p}intermediate.dense."), f);
        self.ffn_out.visit(&format!("{p}output.dense."), f);
        self.out_ln.visit(&format!("{p}output.LayerNorm."), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        self.query.visit_mut(&format!("{p}attention.self.query."), f);
        self.key.visit_mut(&format!("{p}attention.self.key."), f);
        self.value.visit_mut(&format!("{p}attention.self.value."), f);
        self.attn_out.visit_mut(&format!("{p}attention.output.dense."), f);
        self.attn_ln.visit_mut(&format!("{p}attention.output.LayerNorm."), f);
        self.ffn_in.visit_mut(&format!("{p}intermediate.dense."), f);
        self.ffn_out.visit_mut(&format!("{p}output.dense."), f);
        self.out_ln.visit_mut(&format!("{p}output.LayerNorm."), f);
    }
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln1: LnCache,
    h1: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    ln2: LnCache,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Trace {
    ids: Vec<u32>,
    emb_ln: LnCache,
    layers: Vec<LayerCache>,
    first: Array2<f64>,
    pub(crate) pooled: Array1<f64>,
}

/// Token and position embeddings, a stack of layers, and a tanh pooler over
/// the first token.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: BertConfig,
    pub embeddings: Embeddings,
    pub layers: Vec<Layer>,
    pub pooler: Linear,
}

#[cfg(test)]
impl Trace {
    /// Final hidden state of the first token.
    pub(crate) fn first_hidden(&self) -> ndarray::ArrayView1<'_, f64> {
        self.first.row(0)
    }
}

impl Encoder {
    /// Weights drawn from N(0, 0.02²), biases zero, layer norms identity.
    pub fn init(config: BertConfig, rng: &mut impl Rng) -> Encoder {
        let (h, i) = (config.hidden_size, config.intermediate_size);
        let std = 0.02;
        let embeddings = Embeddings {
            word: normal_matrix(config.vocab_size, h, std, rng),
            position: normal_matrix(config.max_position_embeddings, h, std, rng),
            token_type: normal_matrix(config.type_vocab_size, h, std, rng),
            ln: LayerNorm::new(h),
        };
        let layers = (0..config.num_hidden_layers)
            .map(|_| Layer {
                query: Linear::init(h, h, std, rng),
                key: Linear::init(h, h, std, rng),
                value: Linear::init(h, h, std, rng),
                attn_out: Linear::init(h, h, std, rng),
                attn_ln: LayerNorm::new(h),
                ffn_in: Linear::init(i, h, std, rng),
                ffn_out: Linear::init(h, i, std, rng),
                out_ln: LayerNorm::new(h),
            })
            .collect();
        let pooler = Linear::init(h, h, std, rng);
        Encoder {
            config,
            embeddings,
            layers,
            pooler,
        }
    }

    /// Same shapes, all values zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Encoder {
        let c = &self.config;
        let (h, i) = (c.hidden_size, c.intermediate_size);
        Encoder {
            config: c.clone(),
            embeddings: Embeddings {
                word: Array2::zeros(self.embeddings.word.raw_dim()),
                position: Array2::zeros(self.embeddings.position.raw_dim()),
                token_type: Array2::zeros(self.embeddings.token_type.raw_dim()),
                ln: LayerNorm::zeros(h),
            },
            layers: (0..self.layers.len())
                .map(|_| Layer {
                    query: Linear::zeros(h, h),
                    key: Linear::zeros(h, h),
                    value: Linear::zeros(h, h),
                    attn_out: Linear::zeros(h, h),
                    attn_ln: LayerNorm::zeros(h),
                    ffn_in: Linear::zeros(i, h),
                    ffn_out: Linear::zeros(h, i),
                    out_ln: LayerNorm::zeros(h),
                })
                .collect(),
            pooler: Linear::zeros(h, h),
        }
    }

    pub(crate) fn forward(&self, ids: &[u32]) -> Trace {
        let c = &self.config;
        let eps = c.layer_norm_eps;
        let l = ids.len();
        assert!(
            l <= c.max_position_embeddings,
            "sequence longer than the position table"
        );
        let mut e = Array2::zeros((l, c.hidden_size));
        for (t, &id) in ids.iter().enumerate() {
            let mut row = e.row_mut(t);
            row += &self.embeddings.word.row(id as usize);
            row += &self.embeddings.position.row(t);
            row += &self.embeddings.token_type.row(0);
        }
        let (mut x, emb_ln) = self.embeddings.ln.forward(e, eps);
        let heads = c.num_attention_heads;
        let d = c.hidden_size / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let q = layer.query.forward(&x.view());
            let k = layer.key.forward(&x.view());
            let v = layer.value.forward(&x.view());
            let mut ctx = Array2::zeros((l, c.hidden_size));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * d..(h + 1) * d];
                let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for mut row in p.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - m).exp());
                    let z = row.sum();
                    row /= z;
                }
                ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
                probs.push(p);
            }
            let a = layer.attn_out.forward(&ctx.view()) + &x;
            let (h1, ln1) = layer.attn_ln.forward(a, eps);
            let pre = layer.ffn_in.forward(&h1.view());
            let act = pre.mapv(gelu);
            let f = layer.ffn_out.forward(&act.view()) + &h1;
            let (out, ln2) = layer.out_ln.forward(f, eps);
            caches.push(LayerCache {
                x,
                q,
                k,
                v,
                probs,
                ctx,
                ln1,
                h1,
                pre,
                act,
                ln2,
            });
            x = out;
        }
        let first = x.slice(s![0..1, ..]).to_owned();
        let pooled = self.pooler.forward(&first.view()).mapv(f64::tanh).row(0).to_owned();
        Trace {
            ids: ids.to_vec(),
            emb_ln,
            layers: caches,
            first,
            pooled,
        }
    }

    /// Pooled first-token representation.
    pub fn pooled(&self, ids: &[u32]) -> Array1<f64> {
        self.forward(ids).pooled
    }

    /// Backpropagates `dL/dpooled` through the trace into `g`.
    pub(crate) fn backward(&self, trace: &Trace, d_pooled: &Array1<f64>, g: &mut Encoder) {
        let c = &self.config;
        let heads = c.num_attention_heads;
        let d = c.hidden_size / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let d_pre_pool = (d_pooled * &trace.pooled.mapv(|p| 1.0 - p * p)).insert_axis(Axis(0));
        let d_first = self.pooler.backward(&trace.first.view(), &d_pre_pool, &mut g.pooler);
        let l = trace.ids.len();
        let mut dx = Array2::zeros((l, c.hidden_size));
        dx.slice_mut(s![0..1, ..]).assign(&d_first);
        for ((layer, cache), gl) in self.layers.iter().zip(&trace.layers).zip(g.layers.iter_mut()).rev() {
            let d_f = layer.out_ln.backward(&cache.ln2, &dx, &mut gl.out_ln);
            let d_act = layer.ffn_out.backward(&cache.act.view(), &d_f, &mut gl.ffn_out);
            let mut d_pre = d_act;
            d_pre.zip_mut_with(&cache.pre, |dv, &x| *dv *= gelu_grad(x));
            let d_h1 = layer.ffn_in.backward(&cache.h1.view(), &d_pre, &mut gl.ffn_in) + &d_f;
            let d_a = layer.attn_ln.backward(&cache.ln1, &d_h1, &mut gl.attn_ln);
            let d_ctx = layer.attn_out.backward(&cache.ctx.view(), &d_a, &mut gl.attn_out);
            let mut dq = Array2::zeros((l, c.hidden_size));
            let mut dk = Array2::zeros((l, c.hidden_size));
            let mut dv = Array2::zeros((l, c.hidden_size));
            for (h, p) in cache.probs.iter().enumerate() {
                let cols = s![.., h * d..(h + 1) * d];
                let dch = d_ctx.slice(cols);
                let dp = dch.dot(&cache.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dch));
                let mut ds = p * &dp;
                for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                    let total = row.sum();
                    row.zip_mut_with(&prow, |v, &pv| *v -= pv * total);
                }
                ds *= scale;
                dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
            }
            let xv = cache.x.view();
            dx = d_a
                + layer.query.backward(&xv, &dq, &mut gl.query)
                + layer.key.backward(&xv, &dk, &mut gl.key)
                + layer.value.backward(&xv, &dv, &mut gl.value);
        }
        let d_e = self.embeddings.ln.backward(&trace.emb_ln, &dx, &mut g.embeddings.ln);
        for (t, &id) in trace.ids.iter().enumerate() {
            let row = d_e.row(t);
            let mut w = g.embeddings.word.row_mut(id as usize);
            w += &row;
            let mut p = g.embeddings.position.row_mut(t);
            p += &row;
            let mut ty = g.embeddings.token_type.row_mut(0);
            ty += &row;
        }
    }
}

impl Params for Encoder {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        self.embeddings.visit(&format!("{p}embeddings."), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("{p}encoder.layer.{i}."), f);
        }
        self.pooler.visit(&format!("{p}pooler.dense."), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        self.embeddings.visit_mut(&format!("{p}embeddings."), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("{p}encoder.layer.{i}."), f);
        }
        self.pooler.visit_mut(&format!("{p}pooler.dense."), f);
    }
}

/// Numerically stable `BCE(sigmoid(z), y)`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Encoder plus the 4-output linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub encoder: Encoder,
    pub head: Linear,
}

impl Params for Network {
    fn visit(&self, p: &str, f: &mut Visitor<'_>) {
        self.encoder.visit(p, f);
        self.head.visit(&format!("{p}classifier."), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut VisitorMut<'_>) {
        self.encoder.visit_mut(p, f);
        self.head.visit_mut(&format!("{p}classifier."), f);
    }
}

impl Network {
    pub fn new(encoder: Encoder, rng: &mut impl Rng) -> Network {
        let h = encoder.config.hidden_size;
        Network {
            encoder,
            head: Linear::init(4, h, 0.02, rng),
        }
    }

    pub fn zeros_like(&self) -> Network {
        Network {
            encoder: self.encoder.zeros_like(),
            head: Linear::zeros(4, self.head.w.ncols()),
        }
    }

    pub fn logits(&self, ids: &[u32]) -> [f64; 4] {
        let pooled = self.encoder.pooled(ids);
        head_logits(&self.head, &pooled)
    }

    pub fn probs(&self, ids: &[u32]) -> [f64; 4] {
        self.logits(ids).map(sigmoid)
    }

    /// Mean per-label BCE over the batch.
    pub fn loss(&self, batch: &[(&[u32], [f64; 4])]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|(ids, y)| {
                self.logits(ids)
                    .iter()
                    .zip(y)
                    .map(|(&z, &t)| bce_with_logits(z, t))
                    .sum::<f64>()
            })
            .sum();
        total / (4 * batch.len()) as f64
    }

    /// Mean per-label BCE over the batch, with its gradient accumulated into
    /// `grad`. When `train_encoder` is false only the head receives gradient.
    pub fn loss_and_grad(&self, batch: &[(&[u32], [f64; 4])], grad: &mut Network, train_encoder: bool) -> f64 {
        let norm = (4 * batch.len()) as f64;
        let mut total = 0.0;
        for (ids, y) in batch {
            let trace = self.encoder.forward(ids);
            let z = head_logits(&self.head, &trace.pooled);
            let dz: Array2<f64> = Array2::from_shape_fn((1, 4), |(_, k)| (sigmoid(z[k]) - y[k]) / norm);
            total += z.iter().zip(y).map(|(&z, &t)| bce_with_logits(z, t)).sum::<f64>();
            let pooled = trace.pooled.view().insert_axis(Axis(0));
            let d_pooled = self.head.backward(&pooled, &dz, &mut grad.head).row(0).to_owned();
            if train_encoder {
                self.encoder.backward(&trace, &d_pooled, &mut grad.encoder);
            }
        }
        total / norm
    }
}

pub fn head_logits(head: &Linear, pooled: &Array1<f64>) -> [f64; 4] {
    let z = head.w.dot(pooled) + &head.b;
    [z[0], z[1], z[2], z[3]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn micro_config(hidden: usize) -> BertConfig {
        BertConfig {
            vocab_size: 12,
            hidden_size: hidden,
            num_hidden_layers: 2,
            num_attention_heads: 2,
            intermediate_size: 2 * hidden,
            max_position_embeddings: 16,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            hidden_act: "gelu".into(),
            model_type: "bert".into(),
        }
    }

    /// Larger init than training uses so that every nonlinearity is exercised.
    fn perturbed(net: &mut Network, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.3).unwrap();
        net.visit_mut("", &mut |_, v| v.iter_mut().for_each(|x| *x += dist.sample(&mut rng)));
    }

    fn batch() -> Vec<(Vec<u32>, [f64; 4])> {
        vec![
            (vec![2, 5, 6, 3], [1.0, 0.0, 1.0, 0.0]),
            (vec![2, 7, 3], [0.0, 1.0, 0.0, 1.0]),
            (vec![2, 8, 9, 10, 11, 3], [1.0, 1.0, 0.0, 0.0]),
        ]
    }

    /// Central differences over every parameter against the analytic
    /// gradient; returns the worst relative error.
    fn grad_check(net: &mut Network, train_encoder: bool, only_head: bool) -> f64 {
        let data = batch();
        let b: Vec<(&[u32], [f64; 4])> = data.iter().map(|(i, y)| (i.as_slice(), *y)).collect();
        let mut g = net.zeros_like();
        net.loss_and_grad(&b, &mut g, train_encoder);
        let analytic = g.flatten();
        let mut names = Vec::new();
        net.visit("", &mut |n, _, v| {
            names.extend(std::iter::repeat_n(n.to_string(), v.len()))
        });
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for idx in 0..analytic.len() {
            if only_head && !names[idx].starts_with("classifier.") {
                continue;
            }
            let nudge = |net: &mut Network, delta: f64| {
                let mut seen = 0;
                net.visit_mut("", &mut |_, v| {
                    if idx >= seen && idx < seen + v.len() {
                        v[idx - seen] += delta;
                    }
                    seen += v.len();
                });
            };
            nudge(net, h);
            let up = net.loss(&b);
            nudge(net, -2.0 * h);
            let down = net.loss(&b);
            nudge(net, h);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[idx];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            if err > worst {
                worst = err;
            }
            assert!(err < 1e-3, "{}[{}]: analytic {a} numeric {numeric}", names[idx], idx);
        }
        worst
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::new(Encoder::init(micro_config(8), &mut rng), &mut rng);
        perturbed(&mut net, 2);
        let mut g = net.zeros_like();
        let data = batch();
        let b: Vec<(&[u32], [f64; 4])> = data.iter().map(|(i, y)| (i.as_slice(), *y)).collect();
        net.loss_and_grad(&b, &mut g, false);
        assert!(g.encoder.flatten().iter().all(|&v| v == 0.0));
        grad_check(&mut net, false, true);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::new(Encoder::init(micro_config(8), &mut rng), &mut rng);
        perturbed(&mut net, 4);
        grad_check(&mut net, true, false);
    }

    #[test]
    fn stable_loss_helpers() {
        assert!((bce_with_logits(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logits(-800.0, 1.0).is_finite());
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn zeros_like_matches_parameter_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(Encoder::init(micro_config(8), &mut rng), &mut rng);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        net.visit("", &mut |n, s, _| a.push((n.to_string(), s.to_vec())));
        net.zeros_like()
            .visit("", &mut |n, s, _| b.push((n.to_string(), s.to_vec())));
        assert_eq!(a, b);
        assert!(a
            .iter()
            .any(|(n, _)| n == "encoder.layer.1.attention.output.LayerNorm.weight"));
    }
}
