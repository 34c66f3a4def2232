//! Whole-split prediction under the four inference schemes.
//!
//! All functions take normalized inputs (`n x F`) and return normalized
//! predictions, one per day. The split is cut into consecutive windows of
//! `seg_len` days starting at day 0; a shorter final window covers the tail so
//! every day is predicted exactly once.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::{denorm_targets, TimeSeriesDataset, Variable};
use crate::error::{Error, Result};
use crate::gru::{cell_forward, forward_batch, segment_forward, GruModel, HiddenState};
use crate::linalg::Matrix;

/// Segments predicted together by [`infer_iif`].
const IIF_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InferenceMode {
    /// Every window starts from the zero state.
    Iif,
    /// Hidden state chained from window to window.
    Ssif,
    /// Zero state per window; the appended initial-value column is the previous
    /// window's last prediction.
    Scif,
    /// Zero state per window; the appended column is the model's own previous
    /// prediction at every step.
    Autoregressive,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Iif => "IIF",
            InferenceMode::Ssif => "SSIF",
            InferenceMode::Scif => "SCIF",
            InferenceMode::Autoregressive => "AR",
        }
    }

    /// Whether the model consumes one extra target-derived input column.
    pub fn needs_extra_input(self) -> bool {
        matches!(self, InferenceMode::Scif | InferenceMode::Autoregressive)
    }
}

impl std::fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `(start, end)` of consecutive windows covering `0..n`.
pub fn window_bounds(n: usize, seg_len: usize) -> Vec<(usize, usize)> {
    assert!(seg_len > 0, "window length must be positive");
    (0..n).step_by(seg_len).map(|s| (s, (s + seg_len).min(n))).collect()
}

fn check_model(model: &GruModel, x: &Matrix, extra: bool) -> Result<()> {
    let want = x.cols() + usize::from(extra);
    if model.input_size() != want {
        return Err(Error::config(format!(
            "model takes {} inputs but the split provides {}{}",
            model.input_size(),
            x.cols(),
            if extra { " plus the target column" } else { "" }
        )));
    }
    if model.output_size() != 1 {
        return Err(Error::config("inference expects a single-output model"));
    }
    if x.rows() == 0 {
        return Err(Error::config("cannot predict an empty split"));
    }
    Ok(())
}

fn with_constant(x: &Matrix, start: usize, end: usize, value: f64) -> Matrix {
    let f = x.cols();
    let mut m = Matrix::zeros(end - start, f + 1);
    for t in start..end {
        let row = m.row_mut(t - start);
        row[..f].copy_from_slice(x.row(t));
        row[f] = value;
    }
    m
}

pub fn infer_iif(model: &GruModel, x: &Matrix, seg_len: usize) -> Result<Vec<f64>> {
    check_model(model, x, false)?;
    let h = model.hidden_size();
    let mut out = vec![0.0; x.rows()];
    let bounds = window_bounds(x.rows(), seg_len);
    let (full, tail): (Vec<_>, Vec<_>) = bounds.into_iter().partition(|(s, e)| e - s == seg_len);
    for chunk in full.chunks(IIF_CHUNK) {
        let inputs: Vec<Matrix> = chunk.iter().map(|&(s, e)| x.slice_rows(s, e)).collect();
        let refs: Vec<&Matrix> = inputs.iter().collect();
        let h0 = vec![HiddenState::zeros(h); chunk.len()];
        let fwd = forward_batch(model, &refs, &h0)?;
        for (b, &(s, _)) in chunk.iter().enumerate() {
            for t in 0..seg_len {
                out[s + t] = fwd.yhat.get(t * chunk.len() + b, 0);
            }
        }
    }
    for (s, e) in tail {
        let fwd = segment_forward(model, &x.slice_rows(s, e), &HiddenState::zeros(h))?;
        out[s..e].copy_from_slice(fwd.yhat.as_slice());
    }
    Ok(out)
}

pub fn infer_ssif(model: &GruModel, x: &Matrix, seg_len: usize) -> Result<Vec<f64>> {
    check_model(model, x, false)?;
    let mut out = Vec::with_capacity(x.rows());
    let mut state = HiddenState::zeros(model.hidden_size());
    for (s, e) in window_bounds(x.rows(), seg_len) {
        let fwd = segment_forward(model, &x.slice_rows(s, e), &state)?;
        out.extend_from_slice(fwd.yhat.as_slice());
        state = fwd.h_last;
    }
    Ok(out)
}

/// `y0_init` is the normalized value used as the first window's initial value.
pub fn infer_scif(model: &GruModel, x: &Matrix, seg_len: usize, y0_init: f64) -> Result<Vec<f64>> {
    check_model(model, x, true)?;
    let zero = HiddenState::zeros(model.hidden_size());
    let mut out = Vec::with_capacity(x.rows());
    let mut y0 = y0_init;
    for (s, e) in window_bounds(x.rows(), seg_len) {
        let fwd = segment_forward(model, &with_constant(x, s, e, y0), &zero)?;
        out.extend_from_slice(fwd.yhat.as_slice());
        y0 = *out.last().expect("non-empty window");
    }
    Ok(out)
}

/// Step-by-step prediction feeding back the previous output. `y0_init` is the
/// normalized target on the day before the split.
pub fn infer_autoregressive(model: &GruModel, x: &Matrix, seg_len: usize, y0_init: f64) -> Result<Vec<f64>> {
    check_model(model, x, true)?;
    let f = x.cols();
    let mut out = Vec::with_capacity(x.rows());
    let mut prev = y0_init;
    let mut input = vec![0.0; f + 1];
    for (s, e) in window_bounds(x.rows(), seg_len) {
        let mut h = vec![0.0; model.hidden_size()];
        for t in s..e {
            input[..f].copy_from_slice(x.row(t));
            input[f] = prev;
            let (h_next, y) = cell_forward(model, &input, &h)?;
            h = h_next;
            prev = y[0];
            out.push(prev);
        }
    }
    Ok(out)
}

/// Run `mode` over a normalized split. `y0_init` is ignored by IIF and SSIF.
pub fn predict(
    mode: InferenceMode,
    model: &GruModel,
    x: &Matrix,
    seg_len: usize,
    y0_init: f64,
) -> Result<Vec<f64>> {
    match mode {
        InferenceMode::Iif => infer_iif(model, x, seg_len),
        InferenceMode::Ssif => infer_ssif(model, x, seg_len),
        InferenceMode::Scif => infer_scif(model, x, seg_len, y0_init),
        InferenceMode::Autoregressive => infer_autoregressive(model, x, seg_len, y0_init),
    }
}

/// Denormalized predictions of one run on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub label: String,
    pub seed: u64,
    pub variable: Variable,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub doy: Vec<u16>,
    pub year: Vec<i32>,
}

impl PredictionSeries {
    /// Predict a normalized split and map everything back to physical units.
    #[allow(clippy::too_many_arguments)]
    pub fn from_split(
        mode: InferenceMode,
        model: &GruModel,
        split: &TimeSeriesDataset,
        var: Variable,
        seg_len: usize,
        y0_init: f64,
        label: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let stats = split
            .norm_stats
            .as_ref()
            .ok_or_else(|| Error::config("prediction needs a normalized split"))?;
        let yhat = predict(mode, model, &split.x, seg_len, y0_init)?;
        Ok(PredictionSeries {
            label: label.into(),
            seed,
            variable: var,
            observed: denorm_targets(&split.target(var), stats, var),
            predicted: denorm_targets(&yhat, stats, var),
            doy: split.doy.clone(),
            year: split.year.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

pub const PREDICTIONS_HEADER: &str = "date,observed,predicted,strategy,seed";

pub fn write_predictions(series: &[PredictionSeries], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{PREDICTIONS_HEADER}").map_err(io)?;
    for s in series {
        for d in 0..s.len() {
            writeln!(
                out,
                "{:04}-{:03},{},{},{},{}",
                s.year[d], s.doy[d], s.observed[d], s.predicted[d], s.label, s.seed
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Trajectories started from different initial values and the step at which
/// each pair stops differing by more than the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub inits: Vec<f64>,
    pub trajectories: Vec<Vec<f64>>,
    /// `(i, j, step)`: 1-based step from which `|a_t − b_t| ≤ tol` for the rest
    /// of the split, `None` if the two never settle.
    pub merge_steps: Vec<(usize, usize, Option<usize>)>,
}

impl SensitivityReport {
    /// Largest merge step over all pairs; `None` if any pair never merges.
    pub fn worst_merge(&self) -> Option<usize> {
        self.merge_steps
            .iter()
            .map(|&(_, _, m)| m)
            .try_fold(1usize, |acc, m| m.map(|m| acc.max(m)))
    }
}

/// First 1-based step after which the two series stay within `tol`.
pub fn merge_step(a: &[f64], b: &[f64], tol: f64) -> Option<usize> {
    let last_far = a.iter().zip(b).rposition(|(p, q)| (p - q).abs() > tol);
    match last_far {
        None => Some(1),
        Some(i) if i + 1 == a.len() => None,
        Some(i) => Some(i + 2),
    }
}

/// SCIF from each normalized initial value in `inits`.
pub fn scif_sensitivity(
    model: &GruModel,
    x: &Matrix,
    seg_len: usize,
    inits: &[f64],
    tol: f64,
) -> Result<SensitivityReport> {
    if inits.len() < 2 {
        return Err(Error::config("sensitivity needs at least two initial values"));
    }
    let trajectories = inits
        .iter()
        .map(|&y0| infer_scif(model, x, seg_len, y0))
        .collect::<Result<Vec<_>>>()?;
    let mut merge_steps = Vec::new();
    for i in 0..inits.len() {
        for j in i + 1..inits.len() {
            merge_steps.push((i, j, merge_step(&trajectories[i], &trajectories[j], tol)));
        }
    }
    Ok(SensitivityReport {
        inits: inits.to_vec(),
        trajectories,
        merge_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: usize) -> GruModel {
        GruModel::init(5, f, 4, 1).unwrap()
    }

    fn inputs(n: usize, f: usize) -> Matrix {
        Matrix::from_fn(n, f, |i, j| ((i * 7 + j * 3) as f64 * 0.31).sin())
    }

    #[test]
    fn windows_cover_every_day_once() {
        assert_eq!(window_bounds(10, 4), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(window_bounds(8, 4), vec![(0, 4), (4, 8)]);
        assert_eq!(window_bounds(3, 4), vec![(0, 3)]);
    }

    #[test]
    fn iif_matches_zero_state_segments() {
        let m = model(3);
        let x = inputs(23, 3);
        let got = infer_iif(&m, &x, 5).unwrap();
        assert_eq!(got.len(), 23);
        for (s, e) in window_bounds(23, 5) {
            let want = segment_forward(&m, &x.slice_rows(s, e), &HiddenState::zeros(4)).unwrap();
            for t in s..e {
                assert!((got[t] - want.yhat.get(t - s, 0)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn iif_window_ignores_other_windows() {
        let m = model(3);
        let x = inputs(20, 3);
        let full = infer_iif(&m, &x, 5).unwrap();
        let alone = infer_iif(&m, &x.slice_rows(10, 15), 5).unwrap();
        for t in 0..5 {
            assert!((full[10 + t] - alone[t]).abs() < 1e-13);
        }
    }

    #[test]
    fn ssif_is_one_long_forward() {
        let m = model(3);
        let x = inputs(37, 3);
        let chained = infer_ssif(&m, &x, 6).unwrap();
        let whole = segment_forward(&m, &x, &HiddenState::zeros(4)).unwrap();
        assert_eq!(chained.as_slice(), whole.yhat.as_slice());
        assert_ne!(chained, infer_iif(&m, &x, 6).unwrap());
    }

    #[test]
    fn scif_chains_last_prediction() {
        let m = model(4);
        let x = inputs(15, 3);
        let got = infer_scif(&m, &x, 5, 0.7).unwrap();
        let first = segment_forward(&m, &with_constant(&x, 0, 5, 0.7), &HiddenState::zeros(4)).unwrap();
        assert_eq!(&got[..5], first.yhat.as_slice());
        let second = segment_forward(&m, &with_constant(&x, 5, 10, got[4]), &HiddenState::zeros(4)).unwrap();
        assert_eq!(&got[5..10], second.yhat.as_slice());
        assert!(infer_scif(&model(3), &x, 5, 0.0).is_err());
    }

    #[test]
    fn autoregressive_feeds_back_each_step() {
        let m = model(4);
        let x = inputs(9, 3);
        let got = infer_autoregressive(&m, &x, 9, -0.2).unwrap();
        // Teacher-forced forward with the model's own outputs as the extra column.
        let mut forced = Matrix::zeros(9, 4);
        for t in 0..9 {
            forced.row_mut(t)[..3].copy_from_slice(x.row(t));
            forced.set(t, 3, if t == 0 { -0.2 } else { got[t - 1] });
        }
        let fwd = segment_forward(&m, &forced, &HiddenState::zeros(4)).unwrap();
        for t in 0..9 {
            assert!((got[t] - fwd.yhat.get(t, 0)).abs() < 1e-14);
        }
    }

    #[test]
    fn merge_step_rules() {
        assert_eq!(merge_step(&[1.0, 2.0], &[1.0, 2.0], 1e-3), Some(1));
        assert_eq!(merge_step(&[1.0, 2.0, 3.0], &[0.0, 2.0, 3.0], 1e-3), Some(2));
        assert_eq!(merge_step(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0], 1e-3), None);
        assert_eq!(merge_step(&[0.0, 5.0, 3.0], &[0.0, 2.0, 3.0], 1e-3), Some(3));
    }

    #[test]
    fn sensitivity_identical_inits_merge_at_once() {
        let m = model(4);
        let x = inputs(12, 3);
        let rep = scif_sensitivity(&m, &x, 6, &[0.3, 0.3], 1e-3).unwrap();
        assert_eq!(rep.merge_steps, vec![(0, 1, Some(1))]);
        assert_eq!(rep.worst_merge(), Some(1));
        assert!(scif_sensitivity(&m, &x, 6, &[0.3], 1e-3).is_err());
    }
}
