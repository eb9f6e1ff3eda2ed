//! Layers built on the tape: linear maps, GRU, transformer encoder,
//! convolution + max-pool blocks, dropout and the training losses.

use rand::Rng as _;

use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::value::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), &[d_in, d_out], bound, rng);
        let bias = bias.then(|| store.add_uniform(format!("{name}.bias"), &[1, d_out], bound, rng));
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        let y = x.matmul(p.get(self.weight));
        match self.bias {
            Some(b) => y.add_row(p.get(b)),
            None => y,
        }
    }
}

/// Weights of one GRU layer.
#[derive(Clone, Debug)]
pub struct GruLayer {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

/// The nine GRU tensors as tape values.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'t> {
    pub w_z: Var<'t>,
    pub w_r: Var<'t>,
    pub w_h: Var<'t>,
    pub u_z: Var<'t>,
    pub u_r: Var<'t>,
    pub u_h: Var<'t>,
    pub b_z: Var<'t>,
    pub b_r: Var<'t>,
    pub b_h: Var<'t>,
}

fn check_shape(what: &str, got: &[usize], want: [usize; 2]) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want:?}, got {got:?}")));
    }
    Ok(())
}

/// One GRU step on a batch of rows.
///
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `ĥ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h' = (1 - z) ⊙ h + z ⊙ ĥ`.
pub fn gru_cell<'t>(x: Var<'t>, h_prev: Var<'t>, w: &GruWeights<'t>) -> Result<Var<'t>> {
    let (batch, d_in) = (x.rows(), x.cols());
    let hidden = h_prev.cols();
    if h_prev.rows() != batch {
        return Err(Error::Shape(format!(
            "gru: {batch} input rows but {} hidden rows",
            h_prev.rows()
        )));
    }
    for (name, v, shape) in [
        ("W_z", w.w_z, [d_in, hidden]),
        ("W_r", w.w_r, [d_in, hidden]),
        ("W_h", w.w_h, [d_in, hidden]),
        ("U_z", w.u_z, [hidden, hidden]),
        ("U_r", w.u_r, [hidden, hidden]),
        ("U_h", w.u_h, [hidden, hidden]),
        ("b_z", w.b_z, [1, hidden]),
        ("b_r", w.b_r, [1, hidden]),
        ("b_h", w.b_h, [1, hidden]),
    ] {
        check_shape(name, &v.shape(), shape)?;
    }
    let z = x
        .matmul(w.w_z)
        .add(h_prev.matmul(w.u_z))
        .add_row(w.b_z)
        .sigmoid();
    let r = x
        .matmul(w.w_r)
        .add(h_prev.matmul(w.u_r))
        .add_row(w.b_r)
        .sigmoid();
    let cand = x
        .matmul(w.w_h)
        .add(r.mul(h_prev).matmul(w.u_h))
        .add_row(w.b_h)
        .tanh();
    Ok(h_prev.add(z.mul(cand.sub(h_prev))))
}

impl GruLayer {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut mk = |n: &str, shape: &[usize]| store.add_uniform(format!("{name}.{n}"), shape, k, rng);
        GruLayer {
            w_z: mk("w_z", &[d_in, hidden]),
            w_r: mk("w_r", &[d_in, hidden]),
            w_h: mk("w_h", &[d_in, hidden]),
            u_z: mk("u_z", &[hidden, hidden]),
            u_r: mk("u_r", &[hidden, hidden]),
            u_h: mk("u_h", &[hidden, hidden]),
            b_z: mk("b_z", &[1, hidden]),
            b_r: mk("b_r", &[1, hidden]),
            b_h: mk("b_h", &[1, hidden]),
            d_in,
            hidden,
        }
    }

    pub fn weights<'t>(&self, p: &Bound<'t>) -> GruWeights<'t> {
        GruWeights {
            w_z: p.get(self.w_z),
            w_r: p.get(self.w_r),
            w_h: p.get(self.w_h),
            u_z: p.get(self.u_z),
            u_r: p.get(self.u_r),
            u_h: p.get(self.u_h),
            b_z: p.get(self.b_z),
            b_r: p.get(self.b_r),
            b_h: p.get(self.b_h),
        }
    }

    pub fn step<'t>(&self, p: &Bound<'t>, x: Var<'t>, h: Var<'t>) -> Var<'t> {
        gru_cell(x, h, &self.weights(p)).expect("gru layer dimensions are fixed at construction")
    }

    /// Runs the layer over `steps` (each `[B x d_in]`), starting from zeros.
    ///
    /// Input projections for all steps are computed with one matrix product
    /// per gate; the recurrence then only multiplies by `U`.
    pub fn run<'t>(&self, tape: &'t Tape, p: &Bound<'t>, steps: &[Var<'t>]) -> Vec<Var<'t>> {
        if steps.is_empty() {
            return Vec::new();
        }
        let batch = steps[0].rows();
        let w = self.weights(p);
        let xs = tape.concat_rows(steps);
        let xz = xs.matmul(w.w_z).add_row(w.b_z);
        let xr = xs.matmul(w.w_r).add_row(w.b_r);
        let xh = xs.matmul(w.w_h).add_row(w.b_h);
        let mut h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut out = Vec::with_capacity(steps.len());
        for t in 0..steps.len() {
            let (a, b) = (t * batch, (t + 1) * batch);
            let z = xz.slice_rows(a, b).add(h.matmul(w.u_z)).sigmoid();
            let r = xr.slice_rows(a, b).add(h.matmul(w.u_r)).sigmoid();
            let cand = xh.slice_rows(a, b).add(r.mul(h).matmul(w.u_h)).tanh();
            h = h.add(z.mul(cand.sub(h)));
            out.push(h);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: store.add_const(format!("{name}.gamma"), &[1, d], 1.0),
            beta: store.add_const(format!("{name}.beta"), &[1, d], 0.0),
            eps: 1e-5,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        let (n, d) = (x.rows(), x.cols());
        let inv_d = 1.0 / d as f64;
        let mean = x.sum_cols().scale(inv_d).broadcast_cols(d);
        let centered = x.sub(mean);
        let var = centered.square().sum_cols().scale(inv_d);
        let inv_std = var.affine(1.0, self.eps).powf(-0.5).broadcast_cols(d);
        let gamma = p.get(self.gamma).broadcast_rows(n);
        centered.mul(inv_std).mul(gamma).add_row(p.get(self.beta))
    }
}

/// Sinusoidal position table `[len x d]`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(len, d, data)
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model width {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, true, rng),
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, true, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, true, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, true, rng),
            heads,
            d_model,
        })
    }

    /// Self-attention over `x` (`[L x d]`). Also returns the per-head
    /// attention weight matrices (`[L x L]` each).
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: Var<'t>,
        causal: bool,
    ) -> (Var<'t>, Vec<Var<'t>>) {
        let tape = x.tape();
        let len = x.rows();
        let dh = self.d_model / self.heads;
        let q = self.q.forward(p, x);
        let k = self.k.forward(p, x);
        let v = self.v.forward(p, x);
        let mask = causal.then(|| {
            let mut m = Tensor::zeros(&[len, len]);
            for i in 0..len {
                for j in i + 1..len {
                    m.data_mut()[i * len + j] = f64::NEG_INFINITY;
                }
            }
            tape.constant(m)
        });
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let (qh, kh, vh) = (q.slice_cols(a, b), k.slice_cols(a, b), v.slice_cols(a, b));
            let mut scores = qh.matmul_nt(kh).scale(scale);
            if let Some(m) = mask {
                scores = scores.add(m);
            }
            let attn = scores.softmax_rows();
            heads.push(attn.matmul(vh));
            weights.push(attn);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        (self.out.forward(p, joined), weights)
    }
}

/// Post-norm encoder layer: attention and feed-forward sub-layers, each
/// wrapped in a residual connection followed by layer normalisation.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(EncoderLayer {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d_model, heads, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ff1: Linear::new(store, &format!("{name}.ff1"), d_model, d_ff, true, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), d_ff, d_model, true, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, causal: bool) -> (Var<'t>, Vec<Var<'t>>) {
        let (a, w) = self.attn.forward(p, x, causal);
        let x = self.norm1.forward(p, x.add(a));
        let f = self.ff2.forward(p, self.ff1.forward(p, x).relu());
        (self.norm2.forward(p, x.add(f)), w)
    }
}

#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub layers: Vec<EncoderLayer>,
    pub d_model: usize,
    pub heads: usize,
}

impl TransformerEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
        n_layers: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.{i}"), d_model, heads, d_ff, rng))
            .collect::<Result<_>>()?;
        Ok(TransformerEncoder {
            layers,
            d_model,
            heads,
        })
    }

    /// Adds positional encodings and runs every layer.
    pub fn forward<'t>(&self, p: &Bound<'t>, seq: Var<'t>, causal: bool) -> Result<Var<'t>> {
        Ok(self.forward_with_attention(p, seq, causal)?.0)
    }

    pub fn forward_with_attention<'t>(
        &self,
        p: &Bound<'t>,
        seq: Var<'t>,
        causal: bool,
    ) -> Result<(Var<'t>, Vec<Var<'t>>)> {
        if seq.cols() != self.d_model {
            return Err(Error::Shape(format!(
                "transformer: input width {} != model width {}",
                seq.cols(),
                self.d_model
            )));
        }
        let pe = seq.tape().constant(positional_encoding(seq.rows(), self.d_model));
        let mut x = seq.add(pe);
        let mut all = Vec::new();
        for layer in &self.layers {
            let (y, w) = layer.forward(p, x, causal);
            x = y;
            all.extend(w);
        }
        Ok((x, all))
    }
}

/// Two stacked valid convolutions of width `kernel` with ReLU, followed by
/// a global max-pool over positions.
#[derive(Clone, Debug)]
pub struct ConvMaxBlock {
    pub conv1: Linear,
    pub conv2: Linear,
    pub kernel: usize,
}

impl ConvMaxBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        kernel: usize,
        widths: (usize, usize),
        rng: &mut Rng,
    ) -> Self {
        ConvMaxBlock {
            conv1: Linear::new(store, &format!("{name}.conv1"), kernel * d_in, widths.0, true, rng),
            conv2: Linear::new(store, &format!("{name}.conv2"), kernel * widths.0, widths.1, true, rng),
            kernel,
        }
    }

    /// Shortest input the two valid convolutions accept.
    pub fn min_len(&self) -> usize {
        2 * self.kernel - 1
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, seq: Var<'t>) -> Result<Var<'t>> {
        let len = seq.rows();
        if len < self.min_len() {
            return Err(Error::SequenceTooShort {
                len,
                kernel: self.kernel,
            });
        }
        let h = self.conv1.forward(p, seq.unfold(self.kernel)).relu();
        let h = self.conv2.forward(p, h.unfold(self.kernel)).relu();
        Ok(h.max_pool_rows())
    }

    /// Same as [`forward`](Self::forward) on each sequence, stacked into a
    /// `[B x c2]` matrix. The convolutions run as one product per layer.
    pub fn forward_batch<'t>(&self, tape: &'t Tape, p: &Bound<'t>, seqs: &[Var<'t>]) -> Result<Var<'t>> {
        let k = self.kernel;
        for s in seqs {
            if s.rows() < self.min_len() {
                return Err(Error::SequenceTooShort { len: s.rows(), kernel: k });
            }
        }
        let unfold_all = |xs: &[Var<'t>]| tape.concat_rows(&xs.iter().map(|x| x.unfold(k)).collect::<Vec<_>>());
        let split = |h: Var<'t>, lens: &[usize]| {
            let mut start = 0;
            lens.iter()
                .map(|&l| {
                    let part = h.slice_rows(start, start + l);
                    start += l;
                    part
                })
                .collect::<Vec<_>>()
        };
        let lens1: Vec<usize> = seqs.iter().map(|s| s.rows() + 1 - k).collect();
        let h1 = self.conv1.forward(p, unfold_all(seqs)).relu();
        let parts = split(h1, &lens1);
        let lens2: Vec<usize> = lens1.iter().map(|l| l + 1 - k).collect();
        let h2 = self.conv2.forward(p, unfold_all(&parts)).relu();
        let pooled: Vec<Var<'t>> = split(h2, &lens2).into_iter().map(|h| h.max_pool_rows()).collect();
        Ok(tape.concat_rows(&pooled))
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout<'t>(x: Var<'t>, rate: f64, training: bool, rng: &mut Rng) -> Var<'t> {
    if !training || rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = x.shape();
    let n = shape.iter().product();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    x.mul_const(Tensor::new(shape, mask))
}

/// Mean next-token cross-entropy of `logits` (`[n x V]`) against `targets`.
pub fn cross_entropy<'t>(logits: Var<'t>, targets: &[usize]) -> Var<'t> {
    let (n, v) = (logits.rows(), logits.cols());
    assert_eq!(n, targets.len(), "cross_entropy: {n} rows but {} targets", targets.len());
    let mask = Tensor::one_hot(targets, v);
    logits
        .log_softmax_rows()
        .mul_const(mask)
        .sum()
        .scale(-1.0 / n.max(1) as f64)
}

/// Mean binary cross-entropy on raw scores (`[n x 1]`), positives weighted
/// by `pos_weight`: `-(w y log σ(s) + (1 - y) log(1 - σ(s)))`.
pub fn weighted_bce_with_logits<'t>(scores: Var<'t>, labels: &[bool], pos_weight: f64) -> Var<'t> {
    let n = labels.len();
    assert_eq!(scores.rows() * scores.cols(), n, "one score per label");
    let shape = scores.shape();
    let pos: Vec<f64> = labels.iter().map(|&y| if y { pos_weight } else { 0.0 }).collect();
    let neg: Vec<f64> = labels.iter().map(|&y| if y { 0.0 } else { 1.0 }).collect();
    // -log σ(s) = softplus(-s); -log(1 - σ(s)) = softplus(s)
    let pos_term = scores.scale(-1.0).softplus().mul_const(Tensor::new(shape.clone(), pos));
    let neg_term = scores.softplus().mul_const(Tensor::new(shape, neg));
    pos_term.add(neg_term).sum().scale(1.0 / n.max(1) as f64)
}

/// Mean cosine distance `1 - cos(out_i, target_i)` over rows. Targets are constants.
pub fn cosine_distance<'t>(out: Var<'t>, targets: &Tensor) -> Result<Var<'t>> {
    if out.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "cosine: output {:?} vs target {:?}",
            out.shape(),
            targets.shape()
        )));
    }
    let n = targets.rows();
    let mut inv_norms = Vec::with_capacity(n);
    for r in 0..n {
        let norm = targets.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument(format!("target row {r} has zero norm")));
        }
        inv_norms.push(1.0 / norm);
    }
    let tape = out.tape();
    let dots = out.mul(tape.constant(targets.clone())).sum_cols();
    let out_norms = out.square().sum_cols().sqrt();
    let cos = dots
        .div(out_norms)
        .mul_const(Tensor::matrix(n, 1, inv_norms));
    Ok(cos.affine(-1.0, 1.0).mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn scalar_weights(tape: &Tape, w: [f64; 9]) -> GruWeights<'_> {
        let s = |v: f64| tape.var(Tensor::matrix(1, 1, vec![v]));
        GruWeights {
            w_z: s(w[0]),
            w_r: s(w[1]),
            w_h: s(w[2]),
            u_z: s(w[3]),
            u_r: s(w[4]),
            u_h: s(w[5]),
            b_z: s(w[6]),
            b_r: s(w[7]),
            b_h: s(w[8]),
        }
    }

    #[test]
    fn gru_zero_params_zero_state() {
        let tape = Tape::new();
        let w = scalar_weights(&tape, [0.0; 9]);
        let h = gru_cell(tape.constant(Tensor::scalar(0.7)), tape.constant(Tensor::scalar(0.0)), &w).unwrap();
        assert_eq!(h.item(), 0.0);
    }

    #[test]
    fn gru_zero_params_halves_state() {
        let tape = Tape::new();
        let w = scalar_weights(&tape, [0.0; 9]);
        let h = gru_cell(tape.constant(Tensor::scalar(0.3)), tape.constant(Tensor::scalar(0.8)), &w).unwrap();
        assert!((h.item() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gru_scalar_hand_computed() {
        // W_z = U_z = 1, W_h = U_h = 1, everything else 0, x = h = 1:
        // z = σ(2), r = σ(0) = 0.5, ĥ = tanh(1 + 0.5) = tanh(1.5)
        // h' = (1 - z) + z tanh(1.5)
        let z = 1.0 / (1.0 + (-2.0f64).exp());
        let expected = (1.0 - z) * 1.0 + z * 1.5f64.tanh();
        assert!((expected - 0.916_454_858_969_299).abs() < 1e-12);
        let tape = Tape::new();
        let w = scalar_weights(&tape, [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let h = gru_cell(tape.constant(Tensor::scalar(1.0)), tape.constant(Tensor::scalar(1.0)), &w).unwrap();
        assert!((h.item() - expected).abs() < 1e-14);
    }

    #[test]
    fn gru_dimension_mismatch_is_an_error() {
        let tape = Tape::new();
        let w = scalar_weights(&tape, [0.0; 9]);
        let x = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let h = tape.constant(Tensor::scalar(0.0));
        assert!(matches!(gru_cell(x, h, &w), Err(Error::Shape(_))));
    }

    #[test]
    fn gru_layer_run_matches_cell_steps() {
        let mut rng = rng_from(3);
        let mut store = ParamStore::new();
        let layer = GruLayer::new(&mut store, "g", 3, 4, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let steps: Vec<_> = (0..5)
            .map(|t| tape.constant(Tensor::matrix(2, 3, (0..6).map(|i| ((i + t) as f64).sin()).collect())))
            .collect();
        let fast = layer.run(&tape, &p, &steps);
        let mut h = tape.constant(Tensor::zeros(&[2, 4]));
        for (t, x) in steps.iter().enumerate() {
            h = layer.step(&p, *x, h);
            for (a, b) in h.value().data().iter().zip(fast[t].value().data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heads_must_divide_width() {
        let mut store = ParamStore::new();
        let err = TransformerEncoder::new(&mut store, "t", 10, 4, 8, 1, &mut rng_from(0));
        assert!(err.is_err());
    }

    #[test]
    fn conv_block_rejects_short_sequences() {
        let mut store = ParamStore::new();
        let block = ConvMaxBlock::new(&mut store, "c", 2, 5, (4, 3), &mut rng_from(0));
        let tape = Tape::new();
        let p = store.bind(&tape);
        let short = tape.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(block.forward(&p, short), Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn conv_block_hand_computed() {
        // 1 input channel, kernel 2, widths (1, 1), on x = [1, 3, 2, 4].
        // conv1: w = (1, -1), b = 0 -> x_t - x_{t+1} = (-2, 1, -2) -> relu (0, 1, 0)
        // conv2: w = (2, 1), b = 0.5 -> (0*2 + 1 + 0.5, 2*1 + 0 + 0.5) = (1.5, 2.5)
        // max-pool -> 2.5
        let mut store = ParamStore::new();
        let block = ConvMaxBlock::new(&mut store, "c", 1, 2, (1, 1), &mut rng_from(0));
        *store.value_mut(block.conv1.weight) = Tensor::matrix(2, 1, vec![1.0, -1.0]);
        *store.value_mut(block.conv1.bias.unwrap()) = Tensor::matrix(1, 1, vec![0.0]);
        *store.value_mut(block.conv2.weight) = Tensor::matrix(2, 1, vec![2.0, 1.0]);
        *store.value_mut(block.conv2.bias.unwrap()) = Tensor::matrix(1, 1, vec![0.5]);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::matrix(4, 1, vec![1.0, 3.0, 2.0, 4.0]));
        assert_eq!(block.forward(&p, x).unwrap().item(), 2.5);
    }

    #[test]
    fn conv_block_output_width_and_zero_input() {
        let mut store = ParamStore::new();
        let block = ConvMaxBlock::new(&mut store, "c", 6, 3, (16, 8), &mut rng_from(1));
        for p in store.iter_mut() {
            if p.name.ends_with("bias") {
                p.value.data_mut().fill(0.0);
            }
        }
        let tape = Tape::new();
        let p = store.bind(&tape);
        let out = block.forward(&p, tape.constant(Tensor::zeros(&[12, 6]))).unwrap();
        assert_eq!(out.shape(), vec![1, 8]);
        assert!(out.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_conv_matches_single() {
        use rand::Rng as _;
        let mut rng = rng_from(4);
        let mut store = ParamStore::new();
        let block = ConvMaxBlock::new(&mut store, "c", 3, 3, (5, 4), &mut rng);
        let seqs: Vec<Tensor> = [7, 12, 5]
            .iter()
            .map(|&l| Tensor::new(vec![l, 3], (0..l * 3).map(|_| rng.random::<f64>() - 0.5).collect()))
            .collect();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let vars: Vec<Var> = seqs.iter().map(|t| tape.constant(t.clone())).collect();
        let batch = block.forward_batch(&tape, &p, &vars).unwrap().value();
        for (i, v) in vars.iter().enumerate() {
            let one = block.forward(&p, *v).unwrap().value();
            assert_eq!(batch.row_slice(i), one.data());
        }
        let short = tape.constant(Tensor::zeros(&[4, 3]));
        assert!(block.forward_batch(&tape, &p, &[vars[0], short]).is_err());
    }

    #[test]
    fn cosine_identity_and_antipode() {
        let tape = Tape::new();
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let same = cosine_distance(tape.var(t.clone()), &t).unwrap();
        assert!(same.item().abs() < 1e-12);
        let opposite = cosine_distance(tape.var(t.map(|v| -v)), &t).unwrap();
        assert!((opposite.item() - 2.0).abs() < 1e-12);
        let zero = Tensor::zeros(&[2, 3]);
        assert!(cosine_distance(tape.var(t.clone()), &zero).is_err());
    }

    #[test]
    fn cosine_matches_direct_computation() {
        let a = [0.3, -1.2, 2.5, 0.7];
        let b = [1.1, 0.4, -0.6, 2.0];
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = 1.0 - dot / (na * nb);
        let tape = Tape::new();
        let got = cosine_distance(tape.var(Tensor::row(a.to_vec())), &Tensor::row(b.to_vec())).unwrap();
        assert!((got.item() - expected).abs() < 1e-9);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        let y = dropout(x, 0.3, false, &mut rng_from(0));
        assert_eq!(y.value().data(), x.value().data());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 10_000], 1.0));
        let y = dropout(x, 0.3, true, &mut rng_from(11));
        let mean = y.value().data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn bce_matches_formula() {
        let tape = Tape::new();
        let s = tape.var(Tensor::matrix(2, 1, vec![0.3, -1.0]));
        let loss = weighted_bce_with_logits(s, &[true, false], 3.0);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let expected = (-3.0 * sig(0.3).ln() - (1.0 - sig(-1.0)).ln()) / 2.0;
        assert!((loss.item() - expected).abs() < 1e-12);
    }
}
