use crate::autodiff::{AutodiffError, Tape, Tensor};
use rand::Rng;

/// One multi-head self-attention block: fused Q/K/V/output projections of
/// width d, attention running over the feature-token axis of each sample.
#[derive(Debug)]
pub struct AttentionParams {
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
}

/// One post-LN transformer layer: self-attention + residual + layernorm,
/// then a position-wise feed-forward (relu, hidden width m) + residual +
/// layernorm.
#[derive(Debug)]
pub struct LayerParams {
    pub attn: AttentionParams,
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
}

/// A stack of identical layers sharing (d, H, m) sizes.
#[derive(Debug)]
pub struct TransformerStack {
    pub layers: Vec<LayerParams>,
    pub n_heads: usize,
    pub d: usize,
}

fn uniform_tensor(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::param(shape, values).expect("shape/values agree")
}

impl TransformerStack {
    /// Initializes `n_layers` layers. Projection weights are uniform
    /// fan-in init; layernorm starts at the identity (gamma 1, beta 0).
    pub fn init(n_layers: usize, n_heads: usize, d: usize, m: usize, rng: &mut impl Rng) -> TransformerStack {
        assert!(d % n_heads == 0, "token width {d} must divide into {n_heads} heads");
        let layers = (0..n_layers)
            .map(|_| LayerParams {
                attn: AttentionParams {
                    w_q: uniform_tensor(rng, vec![d, d], d),
                    b_q: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                    w_k: uniform_tensor(rng, vec![d, d], d),
                    b_k: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                    w_v: uniform_tensor(rng, vec![d, d], d),
                    b_v: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                    w_o: uniform_tensor(rng, vec![d, d], d),
                    b_o: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                },
                ln1_gamma: Tensor::param(vec![d], vec![1.0; d]).expect("const shape"),
                ln1_beta: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                ffn_w1: uniform_tensor(rng, vec![d, m], d),
                ffn_b1: Tensor::param(vec![m], vec![0.0; m]).expect("const shape"),
                ffn_w2: uniform_tensor(rng, vec![m, d], m),
                ffn_b2: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
                ln2_gamma: Tensor::param(vec![d], vec![1.0; d]).expect("const shape"),
                ln2_beta: Tensor::param(vec![d], vec![0.0; d]).expect("const shape"),
            })
            .collect();
        TransformerStack { layers, n_heads, d }
    }

    pub fn collect_params(&self, out: &mut Vec<Tensor>) {
        for l in &self.layers {
            for t in [
                &l.attn.w_q, &l.attn.b_q, &l.attn.w_k, &l.attn.b_k,
                &l.attn.w_v, &l.attn.b_v, &l.attn.w_o, &l.attn.b_o,
                &l.ln1_gamma, &l.ln1_beta,
                &l.ffn_w1, &l.ffn_b1, &l.ffn_w2, &l.ffn_b2,
                &l.ln2_gamma, &l.ln2_beta,
            ] {
                out.push(t.clone());
            }
        }
    }

    /// Same tensors as [`TransformerStack::collect_params`], paired with
    /// stable names for serialization.
    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (li, l) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("attn.w_q", &l.attn.w_q), ("attn.b_q", &l.attn.b_q),
                ("attn.w_k", &l.attn.w_k), ("attn.b_k", &l.attn.b_k),
                ("attn.w_v", &l.attn.w_v), ("attn.b_v", &l.attn.b_v),
                ("attn.w_o", &l.attn.w_o), ("attn.b_o", &l.attn.b_o),
                ("ln1.gamma", &l.ln1_gamma), ("ln1.beta", &l.ln1_beta),
                ("ffn.w1", &l.ffn_w1), ("ffn.b1", &l.ffn_b1),
                ("ffn.w2", &l.ffn_w2), ("ffn.b2", &l.ffn_b2),
                ("ln2.gamma", &l.ln2_gamma), ("ln2.beta", &l.ln2_beta),
            ] {
                out.push((format!("{prefix}.{li}.{name}"), t.clone()));
            }
        }
    }

    /// Runs the stack over a sample-major token matrix `[B*T, d]` holding
    /// `batch` samples of `seq_len` tokens each. When `attn_trace` is
    /// given it receives every head's attention-weight matrix (softmax
    /// outputs, one `[T, T]` tensor per sample per head per layer).
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        batch: usize,
        seq_len: usize,
        mut attn_trace: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor, AutodiffError> {
        let mut h = x.clone();
        for layer in &self.layers {
            let attended = self.attention(tape, &h, layer, batch, seq_len, attn_trace.as_deref_mut())?;
            let res1 = tape.add(&h, &attended)?;
            let normed1 = tape.layernorm(&res1, &layer.ln1_gamma, &layer.ln1_beta, 1e-5)?;
            let ff = self.feed_forward(tape, &normed1, layer)?;
            let res2 = tape.add(&normed1, &ff)?;
            h = tape.layernorm(&res2, &layer.ln2_gamma, &layer.ln2_beta, 1e-5)?;
        }
        Ok(h)
    }

    fn attention(
        &self,
        tape: &mut Tape,
        h: &Tensor,
        layer: &LayerParams,
        batch: usize,
        seq_len: usize,
        mut attn_trace: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor, AutodiffError> {
        let dh = self.d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q_all = self.project(tape, h, &layer.attn.w_q, &layer.attn.b_q)?;
        let k_all = self.project(tape, h, &layer.attn.w_k, &layer.attn.b_k)?;
        let v_all = self.project(tape, h, &layer.attn.w_v, &layer.attn.b_v)?;
        // split heads once on the batched matrices, then attend per sample
        let mut q_heads = Vec::with_capacity(self.n_heads);
        let mut k_heads = Vec::with_capacity(self.n_heads);
        let mut v_heads = Vec::with_capacity(self.n_heads);
        for head in 0..self.n_heads {
            q_heads.push(tape.slice_cols(&q_all, head * dh, dh)?);
            k_heads.push(tape.slice_cols(&k_all, head * dh, dh)?);
            v_heads.push(tape.slice_cols(&v_all, head * dh, dh)?);
        }
        let mut per_sample = Vec::with_capacity(batch);
        for s in 0..batch {
            let mut per_head = Vec::with_capacity(self.n_heads);
            for head in 0..self.n_heads {
                let q = tape.slice_rows(&q_heads[head], s * seq_len, seq_len)?;
                let k = tape.slice_rows(&k_heads[head], s * seq_len, seq_len)?;
                let v = tape.slice_rows(&v_heads[head], s * seq_len, seq_len)?;
                let k_t = tape.transpose(&k)?;
                let scores = tape.matmul(&q, &k_t)?;
                let scores = tape.scale(&scores, scale);
                let weights = tape.softmax_lastdim(&scores);
                if let Some(trace) = attn_trace.as_deref_mut() {
                    trace.push(weights.clone());
                }
                per_head.push(tape.matmul(&weights, &v)?);
            }
            per_sample.push(tape.concat_cols(&per_head)?);
        }
        let combined = tape.concat_rows(&per_sample)?;
        self.project(tape, &combined, &layer.attn.w_o, &layer.attn.b_o)
    }

    fn feed_forward(
        &self,
        tape: &mut Tape,
        h: &Tensor,
        layer: &LayerParams,
    ) -> Result<Tensor, AutodiffError> {
        let hidden = self.project(tape, h, &layer.ffn_w1, &layer.ffn_b1)?;
        let hidden = tape.relu(&hidden);
        self.project(tape, &hidden, &layer.ffn_w2, &layer.ffn_b2)
    }

    fn project(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let xv = tape.matmul(x, w)?;
        tape.add(&xv, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil::derive_rng;

    #[test]
    fn forward_preserves_shape_and_attention_rows_sum_to_one() {
        let mut rng = derive_rng(7, &[42]);
        let stack = TransformerStack::init(2, 2, 8, 16, &mut rng);
        let batch = 3;
        let seq = 4;
        let mut tape = Tape::new();
        let x_vals: Vec<f64> = (0..batch * seq * 8).map(|i| ((i * 37) % 17) as f64 * 0.1 - 0.8).collect();
        let x = Tensor::from_vec(vec![batch * seq, 8], x_vals).unwrap();
        let mut trace = Vec::new();
        let out = stack.forward(&mut tape, &x, batch, seq, Some(&mut trace)).unwrap();
        assert_eq!(out.shape(), [batch * seq, 8]);
        // layers * samples * heads attention matrices, each row a distribution
        assert_eq!(trace.len(), 2 * batch * 2);
        for weights in &trace {
            assert_eq!(weights.shape(), [seq, seq]);
            let w = weights.to_vec();
            for r in 0..seq {
                let row_sum: f64 = w[r * seq..(r + 1) * seq].iter().sum();
                assert!((row_sum - 1.0).abs() < 1e-9, "attention row must sum to 1");
            }
        }
    }

    #[test]
    fn samples_do_not_attend_across_each_other() {
        // Changing sample 1's tokens must not move sample 0's output.
        let mut rng = derive_rng(8, &[42]);
        let stack = TransformerStack::init(1, 2, 4, 8, &mut rng);
        let base: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f64) * 0.05).collect();
        let run = |vals: Vec<f64>| {
            let mut tape = Tape::new();
            let x = Tensor::from_vec(vec![6, 4], vals).unwrap();
            let out = stack.forward(&mut tape, &x, 2, 3, None).unwrap();
            out.to_vec()[..12].to_vec() // sample 0 rows
        };
        let out_a = run(base.clone());
        let mut altered = base;
        for v in &mut altered[12..] {
            *v += 3.0;
        }
        let out_b = run(altered);
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn init_is_deterministic_per_stream() {
        let a = TransformerStack::init(1, 2, 4, 8, &mut derive_rng(9, &[1]));
        let b = TransformerStack::init(1, 2, 4, 8, &mut derive_rng(9, &[1]));
        assert_eq!(a.layers[0].attn.w_q.to_vec(), b.layers[0].attn.w_q.to_vec());
        let c = TransformerStack::init(1, 2, 4, 8, &mut derive_rng(10, &[1]));
        assert_ne!(a.layers[0].attn.w_q.to_vec(), c.layers[0].attn.w_q.to_vec());
    }

    #[test]
    #[should_panic(expected = "must divide")]
    fn head_count_must_divide_width() {
        TransformerStack::init(1, 3, 8, 16, &mut derive_rng(1, &[1]));
    }
}
