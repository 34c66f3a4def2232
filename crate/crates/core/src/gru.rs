//! Single-layer GRU with a shared linear read-out at every timestep.
//!
//! Gate convention:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h~
//! y  = W_out h' + b_out
//! ```
//!
//! Gate weights are stored stacked as `[z; r; h]` blocks so that one GEMM
//! produces all three input projections. Segments are run in batches laid out
//! time-major (row `t * batch + b`); a single segment is simply a batch of one.
//! Backward stops at the initial hidden state: `h0` is treated as a constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{gemm, sigmoid, Matrix, View};

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    /// `3H x F`, blocks `[W_z; W_r; W_h]`.
    pub w_in: Matrix,
    /// `3H x H`, blocks `[U_z; U_r; U_h]`.
    pub w_rec: Matrix,
    /// `3H`, blocks `[b_z; b_r; b_h]`.
    pub bias: Vec<f64>,
    /// `V x H`.
    pub w_out: Matrix,
    /// `V`.
    pub b_out: Vec<f64>,
}

/// Gradients have exactly the shape of the model.
pub type Gradients = GruModel;

impl GruModel {
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        let g = 3 * hidden_size;
        GruModel {
            input_size,
            hidden_size,
            output_size,
            w_in: Matrix::zeros(g, input_size),
            w_rec: Matrix::zeros(g, hidden_size),
            bias: vec![0.0; g],
            w_out: Matrix::zeros(output_size, hidden_size),
            b_out: vec![0.0; output_size],
        }
    }

    /// Uniform(−k, k) weights with k = 1/√hidden_size, zero biases.
    pub fn init(seed: u64, input_size: usize, hidden_size: usize, output_size: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 || output_size == 0 {
            return Err(Error::config(format!(
                "model sizes must be positive (F={input_size}, hs={hidden_size}, V={output_size})"
            )));
        }
        let mut model = Self::zeros(input_size, hidden_size, output_size);
        let k = 1.0 / (hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || loop {
            let v = (2.0 * rng.random::<f64>() - 1.0) * k;
            if v > -k {
                return v;
            }
        };
        for m in [&mut model.w_in, &mut model.w_rec, &mut model.w_out] {
            m.as_mut_slice().iter_mut().for_each(|w| *w = draw());
        }
        Ok(model)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.output_size)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in a fixed order: `w_in, w_rec, bias, w_out, b_out`.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.w_in.as_slice(),
            self.w_rec.as_slice(),
            &self.bias,
            self.w_out.as_slice(),
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_in.as_mut_slice(),
            self.w_rec.as_mut_slice(),
            &mut self.bias,
            self.w_out.as_mut_slice(),
            &mut self.b_out,
        ]
    }

    pub fn same_shape(&self, other: &GruModel) -> bool {
        self.input_size == other.input_size
            && self.hidden_size == other.hidden_size
            && self.output_size == other.output_size
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GruModel, scale: f64) {
        assert!(self.same_shape(other));
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Largest absolute difference between corresponding parameters.
    pub fn max_abs_diff(&self, other: &GruModel) -> f64 {
        assert!(self.same_shape(other));
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Gate block `0 = z`, `1 = r`, `2 = h` of the input weights.
    pub fn w_gate(&self, gate: usize) -> View<'_> {
        let h = self.hidden_size;
        self.w_in.view_rows(gate * h, (gate + 1) * h)
    }

    /// Gate block of the recurrent weights.
    pub fn u_gate(&self, gate: usize) -> View<'_> {
        let h = self.hidden_size;
        self.w_rec.view_rows(gate * h, (gate + 1) * h)
    }

    pub fn b_gate(&self, gate: usize) -> &[f64] {
        let h = self.hidden_size;
        &self.bias[gate * h..(gate + 1) * h]
    }
}

/// A detached hidden state: plain values, no gradient history.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(Vec<f64>);

impl HiddenState {
    pub fn zeros(hidden_size: usize) -> Self {
        HiddenState(vec![0.0; hidden_size])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        HiddenState(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Intermediates of a batched forward pass, consumed by [`backward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    steps: usize,
    input_size: usize,
    hidden_size: usize,
    /// `T*B x F`, time-major.
    x: Matrix,
    /// `(T+1)*B x H`; block 0 holds `h0`.
    hs: Matrix,
    z: Matrix,
    r: Matrix,
    n: Matrix,
    /// `r ⊙ h_prev`, `T*B x H`.
    rh: Matrix,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[derive(Debug, Clone)]
pub struct BatchForward {
    /// `T*B x V`, time-major.
    pub yhat: Matrix,
    pub h_last: Vec<HiddenState>,
    pub cache: ForwardCache,
}

impl BatchForward {
    /// Predictions of segment `b` as a `T x V` matrix.
    pub fn segment_output(&self, b: usize) -> Matrix {
        let (bs, steps) = (self.cache.batch, self.cache.steps);
        let v = self.yhat.cols();
        let mut out = Matrix::zeros(steps, v);
        for t in 0..steps {
            out.row_mut(t).copy_from_slice(self.yhat.row(t * bs + b));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SegmentForward {
    /// `T x V`.
    pub yhat: Matrix,
    pub h_last: HiddenState,
    pub cache: ForwardCache,
}

/// Run `inputs.len()` equal-length segments side by side.
///
/// Each input is a `T x F` matrix; `h0[b]` initializes segment `b`.
pub fn forward_batch(model: &GruModel, inputs: &[&Matrix], h0: &[HiddenState]) -> Result<BatchForward> {
    let bs = inputs.len();
    if bs == 0 {
        return Err(Error::config("forward_batch needs at least one segment"));
    }
    if h0.len() != bs {
        return Err(Error::config(format!("{} initial states for {bs} segments", h0.len())));
    }
    let steps = inputs[0].rows();
    if steps == 0 {
        return Err(Error::config("segments must have at least one timestep"));
    }
    let (f, h) = (model.input_size, model.hidden_size);
    for (b, x) in inputs.iter().enumerate() {
        if x.shape() != (steps, f) {
            return Err(Error::config(format!(
                "segment {b} has shape {:?}, expected ({steps}, {f})",
                x.shape()
            )));
        }
    }
    for (b, s) in h0.iter().enumerate() {
        if s.len() != h {
            return Err(Error::config(format!(
                "initial state {b} has length {}, expected {h}",
                s.len()
            )));
        }
    }

    // Time-major input; a single segment is already in that layout.
    let x = if bs == 1 {
        inputs[0].clone()
    } else {
        let mut x = Matrix::zeros(steps * bs, f);
        for t in 0..steps {
            for (b, seg) in inputs.iter().enumerate() {
                x.row_mut(t * bs + b).copy_from_slice(seg.row(t));
            }
        }
        x
    };
    let mut hs = Matrix::zeros((steps + 1) * bs, h);
    for (b, s) in h0.iter().enumerate() {
        hs.row_mut(b).copy_from_slice(s.as_slice());
    }
    run_forward(model, x, hs, bs, steps)
}

fn run_forward(model: &GruModel, x: Matrix, mut hs: Matrix, bs: usize, steps: usize) -> Result<BatchForward> {
    let h = model.hidden_size;
    let rows = steps * bs;

    let mut xp = Matrix::zeros(rows, 3 * h);
    for i in 0..rows {
        xp.row_mut(i).copy_from_slice(&model.bias);
    }
    gemm(1.0, x.view(), model.w_in.view().t(), 1.0, xp.view_mut());

    let mut z = Matrix::zeros(rows, h);
    let mut r = Matrix::zeros(rows, h);
    let mut n = Matrix::zeros(rows, h);
    let mut rh = Matrix::zeros(rows, h);
    let mut rz_rec = Matrix::zeros(bs, 2 * h);
    let mut cand_rec = Matrix::zeros(bs, h);
    let u_zr = model.w_rec.view_rows(0, 2 * h).t();
    let u_h = model.u_gate(2).t();

    for t in 0..steps {
        let r0 = t * bs;
        gemm(1.0, hs.view_rows(r0, r0 + bs), u_zr, 0.0, rz_rec.view_mut());
        for b in 0..bs {
            let row = r0 + b;
            let xpr = xp.row(row);
            let rec = rz_rec.row(b);
            let hp = hs.row(row);
            let zr = z.row_mut(row);
            for j in 0..h {
                zr[j] = sigmoid(xpr[j] + rec[j]);
            }
            let rr = r.row_mut(row);
            for j in 0..h {
                rr[j] = sigmoid(xpr[h + j] + rec[h + j]);
            }
            let rhr = rh.row_mut(row);
            let rr = r.row(row);
            for j in 0..h {
                rhr[j] = rr[j] * hp[j];
            }
        }
        gemm(1.0, rh.view_rows(r0, r0 + bs), u_h, 0.0, cand_rec.view_mut());
        for b in 0..bs {
            let row = r0 + b;
            let xpr = xp.row(row);
            let rec = cand_rec.row(b);
            let nr = n.row_mut(row);
            for j in 0..h {
                nr[j] = (xpr[2 * h + j] + rec[j]).tanh();
            }
            let zr = z.row(row);
            let nr = n.row(row);
            let (prev, next) = hs.as_mut_slice().split_at_mut((row + bs) * h);
            let hp = &prev[row * h..(row + 1) * h];
            let hn = &mut next[..h];
            for j in 0..h {
                hn[j] = (1.0 - zr[j]) * hp[j] + zr[j] * nr[j];
            }
        }
    }

    let v = model.output_size;
    let mut yhat = Matrix::zeros(rows, v);
    for i in 0..rows {
        yhat.row_mut(i).copy_from_slice(&model.b_out);
    }
    gemm(1.0, hs.view_rows(bs, rows + bs), model.w_out.view().t(), 1.0, yhat.view_mut());

    if !yhat.is_finite() {
        return Err(Error::Divergence {
            location: String::new(),
            message: "non-finite prediction in forward pass".into(),
        });
    }

    let h_last = (0..bs)
        .map(|b| HiddenState::from_vec(hs.row(rows + b).to_vec()))
        .collect();
    Ok(BatchForward {
        yhat,
        h_last,
        cache: ForwardCache {
            batch: bs,
            steps,
            input_size: model.input_size,
            hidden_size: h,
            x,
            hs,
            z,
            r,
            n,
            rh,
        },
    })
}

/// Parameter gradients for a batched forward, given `dL/dŶ` in the same
/// time-major `T*B x V` layout as [`BatchForward::yhat`].
pub fn backward_batch(model: &GruModel, cache: &ForwardCache, dyhat: &Matrix) -> Result<Gradients> {
    let (bs, steps, h) = (cache.batch, cache.steps, model.hidden_size);
    if cache.hidden_size != h || cache.input_size != model.input_size {
        return Err(Error::config("forward cache was produced by a model of a different shape"));
    }
    let rows = steps * bs;
    if dyhat.shape() != (rows, model.output_size) {
        return Err(Error::config(format!(
            "output gradient has shape {:?}, expected ({rows}, {})",
            dyhat.shape(),
            model.output_size
        )));
    }
    let mut grads = model.zeros_like();
    let outputs = cache.hs.view_rows(bs, rows + bs);

    gemm(1.0, dyhat.view().t(), outputs, 0.0, grads.w_out.view_mut());
    for i in 0..rows {
        for (g, d) in grads.b_out.iter_mut().zip(dyhat.row(i)) {
            *g += d;
        }
    }

    // dL/dh_t from the read-out.
    let mut dh_out = Matrix::zeros(rows, h);
    gemm(1.0, dyhat.view(), model.w_out.view(), 0.0, dh_out.view_mut());

    let mut da = Matrix::zeros(rows, 3 * h);
    let mut dh_next = Matrix::zeros(bs, h);
    let mut d_rh = Matrix::zeros(bs, h);
    let u_h = model.u_gate(2);
    let u_zr = model.w_rec.view_rows(0, 2 * h);

    for t in (0..steps).rev() {
        let r0 = t * bs;
        for b in 0..bs {
            let row = r0 + b;
            let (zr, nr, hp) = (cache.z.row(row), cache.n.row(row), cache.hs.row(row));
            let dho = dh_out.row(row);
            let dhn = dh_next.row_mut(b);
            let dar = da.row_mut(row);
            for j in 0..h {
                let dh = dho[j] + dhn[j];
                let zj = zr[j];
                let nj = nr[j];
                dar[2 * h + j] = dh * zj * (1.0 - nj * nj);
                dar[j] = dh * (nj - hp[j]) * zj * (1.0 - zj);
                dhn[j] = dh * (1.0 - zj);
            }
        }
        gemm(
            1.0,
            da.view_rows(r0, r0 + bs).sub_cols(2 * h, 3 * h),
            u_h,
            0.0,
            d_rh.view_mut(),
        );
        for b in 0..bs {
            let row = r0 + b;
            let (rr, hp) = (cache.r.row(row), cache.hs.row(row));
            let drh = d_rh.row(b);
            let dhn = dh_next.row_mut(b);
            let dar = da.row_mut(row);
            for j in 0..h {
                let rj = rr[j];
                dar[h + j] = drh[j] * hp[j] * rj * (1.0 - rj);
                dhn[j] += drh[j] * rj;
            }
        }
        if t > 0 {
            gemm(
                1.0,
                da.view_rows(r0, r0 + bs).sub_cols(0, 2 * h),
                u_zr,
                1.0,
                dh_next.view_mut(),
            );
        }
    }

    gemm(1.0, da.view().t(), cache.x.view(), 0.0, grads.w_in.view_mut());
    for i in 0..rows {
        for (g, d) in grads.bias.iter_mut().zip(da.row(i)) {
            *g += d;
        }
    }
    gemm(
        1.0,
        da.view_cols(0, 2 * h).t(),
        cache.hs.view_rows(0, rows),
        0.0,
        grads.w_rec.view_rows_mut(0, 2 * h),
    );
    gemm(
        1.0,
        da.view_cols(2 * h, 3 * h).t(),
        cache.rh.view(),
        0.0,
        grads.w_rec.view_rows_mut(2 * h, 3 * h),
    );
    Ok(grads)
}

/// Forward one segment (`T x F`) from `h0`.
pub fn segment_forward(model: &GruModel, x: &Matrix, h0: &HiddenState) -> Result<SegmentForward> {
    let out = forward_batch(model, &[x], std::slice::from_ref(h0))?;
    let BatchForward {
        yhat,
        mut h_last,
        cache,
    } = out;
    Ok(SegmentForward {
        yhat,
        h_last: h_last.pop().expect("one segment"),
        cache,
    })
}

/// Gradients for one segment; `dyhat` is `T x V`.
pub fn segment_backward(model: &GruModel, cache: &ForwardCache, dyhat: &Matrix) -> Result<Gradients> {
    if cache.batch != 1 {
        return Err(Error::config("segment_backward needs a single-segment cache"));
    }
    backward_batch(model, cache, dyhat)
}

/// One GRU step. Identical arithmetic to a one-step [`segment_forward`].
pub fn cell_forward(model: &GruModel, x: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != model.input_size || h_prev.len() != model.hidden_size {
        return Err(Error::config(format!(
            "cell input lengths ({}, {}) do not match model ({}, {})",
            x.len(),
            h_prev.len(),
            model.input_size,
            model.hidden_size
        )));
    }
    let x = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let out = segment_forward(model, &x, &HiddenState::from_vec(h_prev.to_vec()))?;
    Ok((out.h_last.into_vec(), out.yhat.into_vec()))
}

/// Mean squared error of one prediction matrix and its gradient w.r.t. the
/// predictions, scaled by `weight` (used to average over a batch).
pub fn mse_and_grad(yhat: &Matrix, target: &Matrix, weight: f64) -> (f64, Matrix) {
    assert_eq!(yhat.shape(), target.shape());
    let n = yhat.as_slice().len() as f64;
    let mut grad = Matrix::zeros(yhat.rows(), yhat.cols());
    let mut sum = 0.0;
    for ((g, p), y) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(yhat.as_slice())
        .zip(target.as_slice())
    {
        let e = p - y;
        sum += e * e;
        *g = weight * 2.0 * e / n;
    }
    (sum / n, grad)
}
