use super::{AutodiffError, Tensor};

/// Define-by-run computation tape.
///
/// Every operation records its inputs, its output, and a local-gradient
/// closure. Records are appended in forward order, so walking them in
/// reverse visits the graph in reverse topological order. A tape is built
/// fresh for each forward pass and consumed by a single [`Tape::backward`]
/// call; calling backward twice is an error rather than a silent re-run.
///
/// Broadcasting for binary elementwise ops is deliberately narrow: shapes
/// must be identical, or one operand must be a scalar `[1]`, or the smaller
/// shape (after stripping leading 1s) must be a trailing suffix of the
/// larger. Anything fancier is rejected.
#[derive(Default)]
pub struct Tape {
    records: Vec<Box<dyn Fn()>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, record: impl Fn() + 'static) {
        self.records.push(Box::new(record));
    }

    /// Propagates gradients from a scalar loss through every recorded
    /// operation. Tensors with `requires_grad` reachable from the loss hold
    /// their gradient afterwards; unreachable tensors keep `None`.
    pub fn backward(&mut self, loss: &Tensor) -> Result<(), AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        if loss.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                shape: loss.shape().to_vec(),
            });
        }
        self.consumed = true;
        loss.seed_grad_ones();
        for record in self.records.iter().rev() {
            record();
        }
        Ok(())
    }

    // ── Binary elementwise ──────────────────────────────────────────────

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, |_, _, go| go, |_, _, go| go)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, |_, _, go| go, |_, _, go| -go)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, |_, y, go| go * y, |x, _, go| go * x)
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: fn(f64, f64) -> f64,
        df_da: fn(f64, f64, f64) -> f64,
        df_db: fn(f64, f64, f64) -> f64,
    ) -> Result<Tensor, AutodiffError> {
        let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
        let na = a.numel();
        let nb = b.numel();
        let n: usize = out_shape.iter().product();
        let out_values: Vec<f64> = {
            let av = a.values();
            let bv = b.values();
            (0..n).map(|i| f(av[i % na], bv[i % nb])).collect()
        };
        let out = Tensor::from_op(out_shape, out_values);
        let (a, b, out_c) = (a.clone(), b.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            let av = a.values();
            let bv = b.values();
            if a.wants_grad() {
                let mut ga = vec![0.0; na];
                for (i, g) in go.iter().enumerate() {
                    ga[i % na] += df_da(av[i % na], bv[i % nb], *g);
                }
                drop(av);
                a.accumulate_grad(&ga);
                if b.wants_grad() {
                    let av = a.values();
                    let mut gb = vec![0.0; nb];
                    for (i, g) in go.iter().enumerate() {
                        gb[i % nb] += df_db(av[i % na], bv[i % nb], *g);
                    }
                    drop(av);
                    drop(bv);
                    b.accumulate_grad(&gb);
                }
            } else if b.wants_grad() {
                let mut gb = vec![0.0; nb];
                for (i, g) in go.iter().enumerate() {
                    gb[i % nb] += df_db(av[i % na], bv[i % nb], *g);
                }
                drop(av);
                drop(bv);
                b.accumulate_grad(&gb);
            }
        });
        Ok(out)
    }

    // ── Unary elementwise ───────────────────────────────────────────────

    /// Logistic sigmoid, numerically stable on both tails.
    pub fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        self.unary(a, stable_sigmoid, |_, y, go| go * y * (1.0 - y))
    }

    pub fn exp(&mut self, a: &Tensor) -> Tensor {
        self.unary(a, f64::exp, |_, y, go| go * y)
    }

    /// Natural logarithm; non-positive inputs are a domain error.
    pub fn log(&mut self, a: &Tensor) -> Result<Tensor, AutodiffError> {
        if let Some(&bad) = a.values().iter().find(|v| **v <= 0.0) {
            return Err(AutodiffError::DomainError { op: "log", value: bad });
        }
        Ok(self.unary(a, f64::ln, |x, _, go| go / x))
    }

    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        self.unary(a, |x| x.max(0.0), |x, _, go| if x > 0.0 { go } else { 0.0 })
    }

    /// `max(x, c)` elementwise; the subgradient at the kink is 0.
    pub fn max_with_const(&mut self, a: &Tensor, c: f64) -> Tensor {
        let threshold = c;
        self.unary_with(a, move |x| x.max(threshold), move |x, _, go| {
            if x > threshold {
                go
            } else {
                0.0
            }
        })
    }

    /// `|x|` with sign(0) taken as 0.
    pub fn abs(&mut self, a: &Tensor) -> Tensor {
        self.unary(a, f64::abs, |x, _, go| go * sign_zero(x))
    }

    /// Square root; negative inputs are a domain error. The backward pass
    /// contributes 0 at x = 0 (a valid subgradient of the norm it is used
    /// to build) instead of dividing by zero.
    pub fn sqrt(&mut self, a: &Tensor) -> Result<Tensor, AutodiffError> {
        if let Some(&bad) = a.values().iter().find(|v| **v < 0.0) {
            return Err(AutodiffError::DomainError { op: "sqrt", value: bad });
        }
        Ok(self.unary(a, f64::sqrt, |_, y, go| {
            if y > 1e-12 {
                go / (2.0 * y)
            } else {
                0.0
            }
        }))
    }

    /// `ln(1 + e^x)` computed without overflow.
    pub fn softplus(&mut self, a: &Tensor) -> Tensor {
        self.unary(
            a,
            |x| x.max(0.0) + (-x.abs()).exp().ln_1p(),
            |x, _, go| go * stable_sigmoid(x),
        )
    }

    /// `c * x`.
    pub fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        self.affine(a, c, 0.0)
    }

    /// `mul * x + add`, elementwise with constants.
    pub fn affine(&mut self, a: &Tensor, mul: f64, add: f64) -> Tensor {
        self.unary_with(a, move |x| mul * x + add, move |_, _, go| go * mul)
    }

    fn unary(
        &mut self,
        a: &Tensor,
        f: fn(f64) -> f64,
        df: fn(f64, f64, f64) -> f64,
    ) -> Tensor {
        self.unary_with(a, f, df)
    }

    fn unary_with(
        &mut self,
        a: &Tensor,
        f: impl Fn(f64) -> f64 + 'static,
        df: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let out_values: Vec<f64> = a.values().iter().map(|&x| f(x)).collect();
        let out = Tensor::from_op(a.shape().to_vec(), out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if !a.wants_grad() {
                return;
            }
            let ga: Vec<f64> = {
                let av = a.values();
                let yv = out_c.values();
                go.iter()
                    .enumerate()
                    .map(|(i, g)| df(av[i], yv[i], *g))
                    .collect()
            };
            a.accumulate_grad(&ga);
        });
        out
    }

    // ── Matrix ops ──────────────────────────────────────────────────────

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        let (m, k) = as_2d("matmul", a.shape())?;
        let (k2, n) = as_2d("matmul", b.shape())?;
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let out_values = {
            let av = a.values();
            let bv = b.values();
            matmul_raw(&av, &bv, m, k, n)
        };
        let out = Tensor::from_op(vec![m, n], out_values);
        let (a, b, out_c) = (a.clone(), b.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                // grad_a += go . b^T
                let bv = b.values();
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let g = go[i * n + j];
                        for p in 0..k {
                            ga[i * k + p] += g * bv[p * n + j];
                        }
                    }
                }
                drop(bv);
                a.accumulate_grad(&ga);
            }
            if b.wants_grad() {
                // grad_b += a^T . go
                let av = a.values();
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let x = av[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += x * go[i * n + j];
                        }
                    }
                }
                drop(av);
                b.accumulate_grad(&gb);
            }
        });
        Ok(out)
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor, AutodiffError> {
        let (r, c) = as_2d("transpose", a.shape())?;
        let out_values = {
            let av = a.values();
            transpose_raw(&av, r, c)
        };
        let out = Tensor::from_op(vec![c, r], out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                a.accumulate_grad(&transpose_raw(&go, c, r));
            }
        });
        Ok(out)
    }

    /// Same flat data, new shape; the element count must not change.
    pub fn reshape(&mut self, a: &Tensor, shape: Vec<usize>) -> Result<Tensor, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != a.numel() || shape.is_empty() {
            return Err(AutodiffError::InvalidShape {
                op: "reshape",
                shape,
                reason: "element count must be preserved",
            });
        }
        let out = Tensor::from_op(shape, a.to_vec());
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                a.accumulate_grad(&go);
            }
        });
        Ok(out)
    }

    // ── Softmax family ──────────────────────────────────────────────────

    /// Row-wise softmax over the last dimension, shifted by the row max.
    pub fn softmax_lastdim(&mut self, a: &Tensor) -> Tensor {
        let last = *a.shape().last().expect("non-empty shape");
        let rows = a.numel() / last;
        let mut out_values = vec![0.0; a.numel()];
        {
            let av = a.values();
            for r in 0..rows {
                softmax_row(&av[r * last..(r + 1) * last], &mut out_values[r * last..(r + 1) * last]);
            }
        }
        let out = Tensor::from_op(a.shape().to_vec(), out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if !a.wants_grad() {
                return;
            }
            let ga: Vec<f64> = {
                let yv = out_c.values();
                let mut ga = vec![0.0; yv.len()];
                for r in 0..rows {
                    let y = &yv[r * last..(r + 1) * last];
                    let g = &go[r * last..(r + 1) * last];
                    let dot: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
                    for i in 0..last {
                        ga[r * last + i] = y[i] * (g[i] - dot);
                    }
                }
                ga
            };
            a.accumulate_grad(&ga);
        });
        out
    }

    /// Row-wise log-softmax; the numerically safe route to cross-entropy.
    pub fn log_softmax_lastdim(&mut self, a: &Tensor) -> Tensor {
        let last = *a.shape().last().expect("non-empty shape");
        let rows = a.numel() / last;
        let mut out_values = vec![0.0; a.numel()];
        {
            let av = a.values();
            for r in 0..rows {
                let row = &av[r * last..(r + 1) * last];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
                for i in 0..last {
                    out_values[r * last + i] = row[i] - lse;
                }
            }
        }
        let out = Tensor::from_op(a.shape().to_vec(), out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if !a.wants_grad() {
                return;
            }
            let ga: Vec<f64> = {
                let yv = out_c.values();
                let mut ga = vec![0.0; yv.len()];
                for r in 0..rows {
                    let y = &yv[r * last..(r + 1) * last];
                    let g = &go[r * last..(r + 1) * last];
                    let gsum: f64 = g.iter().sum();
                    for i in 0..last {
                        ga[r * last + i] = g[i] - y[i].exp() * gsum;
                    }
                }
                ga
            };
            a.accumulate_grad(&ga);
        });
        out
    }

    // ── Reductions ──────────────────────────────────────────────────────

    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let total: f64 = a.values().iter().sum();
        let out = Tensor::from_op(vec![1], vec![total]);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                a.accumulate_grad(&vec![go[0]; a.numel()]);
            }
        });
        out
    }

    pub fn mean(&mut self, a: &Tensor) -> Tensor {
        let n = a.numel() as f64;
        let total: f64 = a.values().iter().sum();
        let out = Tensor::from_op(vec![1], vec![total / n]);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                a.accumulate_grad(&vec![go[0] / n; a.numel()]);
            }
        });
        out
    }

    // ── Structural ops ──────────────────────────────────────────────────

    /// Concatenation along axis 0. Parts must agree on every other axis.
    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::InvalidShape {
                op: "concat_rows",
                shape: vec![],
                reason: "at least one part required",
            });
        }
        let tail = &parts[0].shape()[1..];
        let mut rows = 0usize;
        for p in parts {
            if &p.shape()[1..] != tail {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_rows",
                    left: parts[0].shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            rows += p.shape()[0];
        }
        let mut out_shape = vec![rows];
        out_shape.extend_from_slice(tail);
        let mut out_values = Vec::with_capacity(out_shape.iter().product());
        for p in parts {
            out_values.extend_from_slice(&p.values());
        }
        let out = Tensor::from_op(out_shape, out_values);
        let parts: Vec<Tensor> = parts.to_vec();
        let out_c = out.clone();
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            let mut offset = 0;
            for p in &parts {
                let n = p.numel();
                if p.wants_grad() {
                    p.accumulate_grad(&go[offset..offset + n]);
                }
                offset += n;
            }
        });
        Ok(out)
    }

    /// 2-D concatenation along axis 1. Parts must agree on the row count.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::InvalidShape {
                op: "concat_cols",
                shape: vec![],
                reason: "at least one part required",
            });
        }
        let (rows, _) = as_2d("concat_cols", parts[0].shape())?;
        let mut cols = 0usize;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = as_2d("concat_cols", p.shape())?;
            if r != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    left: parts[0].shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            widths.push(c);
            cols += c;
        }
        let mut out_values = vec![0.0; rows * cols];
        let mut col_offset = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let pv = p.values();
            for r in 0..rows {
                out_values[r * cols + col_offset..r * cols + col_offset + w]
                    .copy_from_slice(&pv[r * w..(r + 1) * w]);
            }
            col_offset += w;
        }
        let out = Tensor::from_op(vec![rows, cols], out_values);
        let parts: Vec<Tensor> = parts.to_vec();
        let out_c = out.clone();
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            let mut col_offset = 0;
            for (p, w) in parts.iter().zip(&widths) {
                if p.wants_grad() {
                    let mut gp = vec![0.0; rows * w];
                    for r in 0..rows {
                        gp[r * w..(r + 1) * w].copy_from_slice(
                            &go[r * cols + col_offset..r * cols + col_offset + w],
                        );
                    }
                    p.accumulate_grad(&gp);
                }
                col_offset += w;
            }
        });
        Ok(out)
    }

    /// Contiguous slice along axis 0.
    pub fn slice_rows(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor, AutodiffError> {
        let axis0 = a.shape()[0];
        if start + len > axis0 || len == 0 {
            return Err(AutodiffError::InvalidShape {
                op: "slice_rows",
                shape: a.shape().to_vec(),
                reason: "slice range exceeds axis 0",
            });
        }
        let row_width: usize = a.shape()[1..].iter().product();
        let mut out_shape = a.shape().to_vec();
        out_shape[0] = len;
        let out_values = a.values()[start * row_width..(start + len) * row_width].to_vec();
        let out = Tensor::from_op(out_shape, out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                let mut ga = vec![0.0; a.numel()];
                ga[start * row_width..(start + len) * row_width].copy_from_slice(&go);
                a.accumulate_grad(&ga);
            }
        });
        Ok(out)
    }

    /// Column slice of a 2-D tensor.
    pub fn slice_cols(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor, AutodiffError> {
        let (rows, cols) = as_2d("slice_cols", a.shape())?;
        if start + len > cols || len == 0 {
            return Err(AutodiffError::InvalidShape {
                op: "slice_cols",
                shape: a.shape().to_vec(),
                reason: "slice range exceeds axis 1",
            });
        }
        let mut out_values = vec![0.0; rows * len];
        {
            let av = a.values();
            for r in 0..rows {
                out_values[r * len..(r + 1) * len]
                    .copy_from_slice(&av[r * cols + start..r * cols + start + len]);
            }
        }
        let out = Tensor::from_op(vec![rows, len], out_values);
        let (a, out_c) = (a.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if a.wants_grad() {
                let mut ga = vec![0.0; a.numel()];
                for r in 0..rows {
                    ga[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&go[r * len..(r + 1) * len]);
                }
                a.accumulate_grad(&ga);
            }
        });
        Ok(out)
    }

    // ── Normalization ───────────────────────────────────────────────────

    /// Layer normalization over the last dimension with learnable scale and
    /// shift vectors of that width.
    pub fn layernorm(
        &mut self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Tensor, AutodiffError> {
        let width = *x.shape().last().expect("non-empty shape");
        if gamma.shape() != [width] || beta.shape() != [width] {
            return Err(AutodiffError::ShapeMismatch {
                op: "layernorm",
                left: x.shape().to_vec(),
                right: gamma.shape().to_vec(),
            });
        }
        let rows = x.numel() / width;
        let mut out_values = vec![0.0; x.numel()];
        let mut xhat = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; rows];
        {
            let xv = x.values();
            let gv = gamma.values();
            let bv = beta.values();
            for r in 0..rows {
                let row = &xv[r * width..(r + 1) * width];
                let mean = row.iter().sum::<f64>() / width as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[r] = is;
                for i in 0..width {
                    let xh = (row[i] - mean) * is;
                    xhat[r * width + i] = xh;
                    out_values[r * width + i] = gv[i] * xh + bv[i];
                }
            }
        }
        let out = Tensor::from_op(x.shape().to_vec(), out_values);
        let (x, gamma, beta, out_c) = (x.clone(), gamma.clone(), beta.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            let gv = gamma.values();
            if gamma.wants_grad() {
                let mut gg = vec![0.0; width];
                for r in 0..rows {
                    for i in 0..width {
                        gg[i] += go[r * width + i] * xhat[r * width + i];
                    }
                }
                gamma.accumulate_grad(&gg);
            }
            if beta.wants_grad() {
                let mut gb = vec![0.0; width];
                for r in 0..rows {
                    for i in 0..width {
                        gb[i] += go[r * width + i];
                    }
                }
                beta.accumulate_grad(&gb);
            }
            if x.wants_grad() {
                let mut gx = vec![0.0; rows * width];
                for r in 0..rows {
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for i in 0..width {
                        let g = go[r * width + i] * gv[i];
                        sum_g += g;
                        sum_gx += g * xhat[r * width + i];
                    }
                    let n = width as f64;
                    for i in 0..width {
                        let g = go[r * width + i] * gv[i];
                        gx[r * width + i] =
                            inv_std[r] * (g - sum_g / n - xhat[r * width + i] * sum_gx / n);
                    }
                }
                drop(gv);
                x.accumulate_grad(&gx);
            }
        });
        Ok(out)
    }

    // ── Straight-through discretization ─────────────────────────────────

    /// Row-wise one-hot at the argmax (ties break to the lowest index).
    /// The forward value is hard; the backward pass hands the upstream
    /// gradient to the soft input unchanged, which makes the composition
    /// `straight_through_argmax(softmax(...))` behave as a straight-through
    /// estimator.
    pub fn straight_through_argmax(&mut self, soft: &Tensor) -> Tensor {
        let last = *soft.shape().last().expect("non-empty shape");
        let rows = soft.numel() / last;
        let mut out_values = vec![0.0; soft.numel()];
        {
            let sv = soft.values();
            for r in 0..rows {
                let row = &sv[r * last..(r + 1) * last];
                let am = argmax(row);
                out_values[r * last + am] = 1.0;
            }
        }
        let out = Tensor::from_op(soft.shape().to_vec(), out_values);
        let (soft, out_c) = (soft.clone(), out.clone());
        self.push(move || {
            let go = match out_c.grad() {
                Some(g) => g,
                None => return,
            };
            if soft.wants_grad() {
                soft.accumulate_grad(&go);
            }
        });
        out
    }
}

// ── Free helpers ────────────────────────────────────────────────────────

fn as_2d(op: &'static str, shape: &[usize]) -> Result<(usize, usize), AutodiffError> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(AutodiffError::InvalidShape {
            op,
            shape: shape.to_vec(),
            reason: "expected a 2-D tensor",
        }),
    }
}

/// Decides the output shape of a broadcast binary op, or rejects the pair.
fn broadcast_shape(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>, AutodiffError> {
    let strip = |s: &[usize]| -> Vec<usize> {
        let keep = s.iter().position(|&d| d != 1).unwrap_or(s.len().saturating_sub(1));
        s[keep..].to_vec()
    };
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    let (big, small) = if na >= nb { (a, b) } else { (b, a) };
    let small_core = strip(small);
    let is_scalar = small_core == [1];
    let is_suffix = big.len() >= small_core.len() && big[big.len() - small_core.len()..] == small_core[..];
    if a == b || is_scalar || is_suffix {
        Ok(big.to_vec())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += x * b[p * n + j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        Tensor::param(shape, values).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let eye = leaf(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let v = leaf(vec![2, 1], vec![3.0, 4.0]);
        let out = tape.matmul(&eye, &v).unwrap();
        assert_eq!(out.to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn scalar_product_rule() {
        let mut tape = Tape::new();
        let a = leaf(vec![1, 1], vec![2.0]);
        let b = leaf(vec![1, 1], vec![3.0]);
        let out = tape.matmul(&a, &b).unwrap();
        assert_eq!(out.to_vec(), vec![6.0]);
        let loss = tape.sum(&out);
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![3.0]);
        assert_eq!(b.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = leaf(vec![2, 3], vec![0.0; 6]);
        let b = leaf(vec![2, 2], vec![0.0; 4]);
        let err = tape.matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = leaf(vec![1], vec![0.0]);
        let y = tape.sigmoid(&x);
        assert_eq!(y.item(), 0.5);
    }

    #[test]
    fn softmax_uniform_logits() {
        let mut tape = Tape::new();
        let x = leaf(vec![3], vec![0.0, 0.0, 0.0]);
        let y = tape.softmax_lastdim(&x);
        for v in y.to_vec() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = leaf(vec![4, 5], (0..20).map(|i| (i as f64) * 0.37 - 3.0).collect());
        let y = tape.softmax_lastdim(&x);
        let yv = y.to_vec();
        for r in 0..4 {
            let s: f64 = yv[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(yv[r * 5..(r + 1) * 5].iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = leaf(vec![2], vec![1.0, 0.0]);
        let err = tape.log(&x).unwrap_err();
        assert!(matches!(err, AutodiffError::DomainError { op: "log", .. }));
    }

    #[test]
    fn backward_identity_and_quadratic() {
        // loss = x -> grad 1
        let mut tape = Tape::new();
        let x = leaf(vec![1], vec![5.0]);
        let y = tape.scale(&x, 1.0);
        tape.backward(&y).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);

        // loss = sum(x*x), x=[1,2] -> grad [2,4]
        let mut tape = Tape::new();
        let x = leaf(vec![2], vec![1.0, 2.0]);
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.sum(&sq);
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf(vec![2], vec![1.0, 2.0]);
        let y = tape.scale(&x, 2.0);
        let err = tape.backward(&y).unwrap_err();
        assert!(matches!(err, AutodiffError::NonScalarLoss { .. }));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = leaf(vec![1], vec![1.0]);
        let y = tape.scale(&x, 3.0);
        tape.backward(&y).unwrap();
        let err = tape.backward(&y).unwrap_err();
        assert_eq!(err, AutodiffError::TapeConsumed);
    }

    #[test]
    fn shared_subexpression_gradients_sum() {
        // loss = x*x + x*x built from one shared square vs two copies.
        let mut tape = Tape::new();
        let x = leaf(vec![1], vec![3.0]);
        let sq = tape.mul(&x, &x).unwrap();
        let both = tape.add(&sq, &sq).unwrap();
        tape.backward(&both).unwrap();
        let shared = x.grad().unwrap()[0];

        let mut tape = Tape::new();
        let x2 = leaf(vec![1], vec![3.0]);
        let sq_a = tape.mul(&x2, &x2).unwrap();
        let sq_b = tape.mul(&x2, &x2).unwrap();
        let both = tape.add(&sq_a, &sq_b).unwrap();
        tape.backward(&both).unwrap();
        let duplicated = x2.grad().unwrap()[0];

        assert_eq!(shared, duplicated);
        assert_eq!(shared, 12.0); // d/dx 2x^2 at 3
    }

    #[test]
    fn broadcast_bias_over_rows() {
        let mut tape = Tape::new();
        let x = leaf(vec![2, 3], vec![0.0; 6]);
        let b = leaf(vec![3], vec![1.0, 2.0, 3.0]);
        let y = tape.add(&x, &b).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = tape.sum(&y);
        tape.backward(&loss).unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn broadcast_rejects_non_suffix() {
        let mut tape = Tape::new();
        let a = leaf(vec![2, 3], vec![0.0; 6]);
        let b = leaf(vec![3, 2], vec![0.0; 6]);
        assert!(tape.add(&a, &b).is_err());
    }

    #[test]
    fn straight_through_forward_hard_backward_identity() {
        let mut tape = Tape::new();
        let soft = leaf(vec![3], vec![0.2, 0.5, 0.3]);
        let hard = tape.straight_through_argmax(&soft);
        assert_eq!(hard.to_vec(), vec![0.0, 1.0, 0.0]);
        let w = leaf(vec![3], vec![1.0, 2.0, 3.0]);
        let weighted = tape.mul(&hard, &w).unwrap();
        let loss = tape.sum(&weighted);
        tape.backward(&loss).unwrap();
        // gradient of sum(w .* hard) w.r.t. soft passes w straight through
        assert_eq!(soft.grad().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn argmax_tie_breaks_low_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
    }
}
