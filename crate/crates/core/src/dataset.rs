//! Feature assembly, normalization, chronological splits, segmentation and the
//! two target-as-input augmentations (initial value and teacher forcing).

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const INPUT_NAMES: [&str; 7] = ["precip", "tmin", "tmax", "srad", "wind", "rhum", "doy"];
pub const TARGET_NAMES: [&str; 3] = ["sw", "sno", "sf"];

/// The three simulated targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    /// Soil water: multi-season memory.
    Sw,
    /// Snowpack: resets every summer.
    Sno,
    /// Streamflow: mostly driven by same-day inputs.
    Sf,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Sw, Variable::Sno, Variable::Sf];

    pub fn index(self) -> usize {
        match self {
            Variable::Sw => 0,
            Variable::Sno => 1,
            Variable::Sf => 2,
        }
    }

    pub fn name(self) -> &'static str {
        TARGET_NAMES[self.index()]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sw" => Ok(Variable::Sw),
            "sno" => Ok(Variable::Sno),
            "sf" => Ok(Variable::Sf),
            other => Err(Error::config(format!("unknown target variable '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name().to_ascii_uppercase())
    }
}

/// Seasonal distance feature: 183 − |doy − 183|.
pub fn doy_feature(doy: u16) -> Result<f64> {
    if !(1..=366).contains(&doy) {
        return Err(Error::config(format!("day of year {doy} outside 1..=366")));
    }
    Ok(183.0 - (doy as f64 - 183.0).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

/// Aligned daily inputs (`n x F`) and targets (`n x V`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub x: Matrix,
    pub y: Matrix,
    pub doy: Vec<u16>,
    pub year: Vec<i32>,
    /// Global index of the first row in the full series.
    pub start_day: usize,
    /// Present once the dataset has been normalized.
    pub norm_stats: Option<NormStats>,
}

impl TimeSeriesDataset {
    pub fn new(x: Matrix, y: Matrix, doy: Vec<u16>, year: Vec<i32>) -> Result<Self> {
        let n = x.rows();
        if y.rows() != n || doy.len() != n || year.len() != n {
            return Err(Error::config("inputs, targets and calendar differ in length"));
        }
        Ok(TimeSeriesDataset {
            x,
            y,
            doy,
            year,
            start_day: 0,
            norm_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.x.cols()
    }

    pub fn target(&self, var: Variable) -> Vec<f64> {
        self.y.column(var.index())
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeriesDataset {
        TimeSeriesDataset {
            x: self.x.slice_rows(start, end),
            y: self.y.slice_rows(start, end),
            doy: self.doy[start..end].to_vec(),
            year: self.year[start..end].to_vec(),
            start_day: self.start_day + start,
            norm_stats: self.norm_stats.clone(),
        }
    }
}

/// Contiguous chronological split. Sizes are floored; the remainder goes to the
/// last split.
pub fn split_sizes(n: usize, fracs: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fracs;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions {fracs:?} must be in [0,1] and sum to 1")));
    }
    let train = (n as f64 * a + 1e-9).floor() as usize;
    let valid = (n as f64 * b + 1e-9).floor() as usize;
    let test = n - train - valid;
    if train == 0 || valid == 0 || test == 0 {
        return Err(Error::config(format!(
            "split of {n} days into ({train}, {valid}, {test}) leaves an empty part"
        )));
    }
    Ok((train, valid, test))
}

pub fn split_chrono(
    ds: &TimeSeriesDataset,
    fracs: (f64, f64, f64),
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset)> {
    let (train, valid, _) = split_sizes(ds.len(), fracs)?;
    Ok((
        ds.slice(0, train),
        ds.slice(train, train + valid),
        ds.slice(train + valid, ds.len()),
    ))
}

fn column_stats(m: &Matrix, names: &[&str]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.rows() as f64;
    let mut means = Vec::with_capacity(m.cols());
    let mut stds = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= 0.0 || !std.is_finite() {
            let name = names.get(j).copied().unwrap_or("?");
            return Err(Error::config(format!("column '{name}' has zero variance")));
        }
        means.push(mean);
        stds.push(std);
    }
    Ok((means, stds))
}

/// Per-column mean and (population) standard deviation of the training split.
pub fn fit_norm(train: &TimeSeriesDataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::config("cannot fit normalization on an empty split"));
    }
    let input_names: Vec<&str> = (0..train.x.cols())
        .map(|j| INPUT_NAMES.get(j).copied().unwrap_or("input"))
        .collect();
    let (x_mean, x_std) = column_stats(&train.x, &input_names)?;
    let (y_mean, y_std) = column_stats(&train.y, &TARGET_NAMES)?;
    Ok(NormStats {
        x_mean,
        x_std,
        y_mean,
        y_std,
    })
}

pub fn apply_norm(split: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    if split.norm_stats.is_some() {
        return Err(Error::config("split is already normalized"));
    }
    if stats.x_mean.len() != split.x.cols() || stats.y_mean.len() != split.y.cols() {
        return Err(Error::config("normalization statistics do not match the split's columns"));
    }
    let mut out = split.clone();
    for i in 0..out.len() {
        for (j, v) in out.x.row_mut(i).iter_mut().enumerate() {
            *v = (*v - stats.x_mean[j]) / stats.x_std[j];
        }
        for (j, v) in out.y.row_mut(i).iter_mut().enumerate() {
            *v = (*v - stats.y_mean[j]) / stats.y_std[j];
        }
    }
    out.norm_stats = Some(stats.clone());
    Ok(out)
}

pub fn norm_target(value: f64, stats: &NormStats, var: Variable) -> f64 {
    (value - stats.y_mean[var.index()]) / stats.y_std[var.index()]
}

/// Map normalized predictions of `var` back to physical units.
pub fn denorm_targets(yhat: &[f64], stats: &NormStats, var: Variable) -> Vec<f64> {
    let (m, s) = (stats.y_mean[var.index()], stats.y_std[var.index()]);
    yhat.iter().map(|v| v * s + m).collect()
}

/// A window of `len` consecutive days starting at `start` (split-relative).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentIndex {
    pub start: usize,
    pub len: usize,
}

impl SegmentIndex {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Windows at starts 0, stride, 2·stride, … that fit entirely in `n_days`.
pub fn slice_segments(n_days: usize, len: usize, stride: usize) -> Result<Vec<SegmentIndex>> {
    if len == 0 || stride == 0 {
        return Err(Error::config("segment length and stride must be positive"));
    }
    if len > n_days {
        return Err(Error::config(format!(
            "segment length {len} exceeds split length {n_days}"
        )));
    }
    Ok((0..=n_days - len)
        .step_by(stride)
        .map(|start| SegmentIndex { start, len })
        .collect())
}

/// How the extra target-derived input column is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    None,
    /// Target on the day before the segment, repeated at every step.
    InitialValue,
    /// Target on the previous day at every step.
    TeacherForcing,
}

/// Normalized target on day `day - 1` of the split, falling back to the day
/// before the split and finally to 0 (the normalized mean).
fn previous_target(y: &[f64], day: usize, predecessor: Option<f64>) -> f64 {
    if day > 0 {
        y[day - 1]
    } else {
        predecessor.unwrap_or(0.0)
    }
}

/// Plain `T x F` input windows.
pub fn segment_inputs(split: &TimeSeriesDataset, segments: &[SegmentIndex]) -> Vec<Matrix> {
    segments.iter().map(|s| split.x.slice_rows(s.start, s.end())).collect()
}

/// `T x 1` target windows of one variable.
pub fn segment_targets(split: &TimeSeriesDataset, var: Variable, segments: &[SegmentIndex]) -> Vec<Matrix> {
    let y = split.target(var);
    segments
        .iter()
        .map(|s| Matrix::from_vec(s.len, 1, y[s.start..s.end()].to_vec()).expect("window shape"))
        .collect()
}

fn with_extra_column(split: &TimeSeriesDataset, seg: SegmentIndex, extra: impl Fn(usize) -> f64) -> Matrix {
    let f = split.x.cols();
    let mut m = Matrix::zeros(seg.len, f + 1);
    for t in 0..seg.len {
        let row = m.row_mut(t);
        row[..f].copy_from_slice(split.x.row(seg.start + t));
        row[f] = extra(t);
    }
    m
}

/// Inputs with one appended column equal to the target observed one day
/// before each segment starts.
pub fn augment_initial_value(
    split: &TimeSeriesDataset,
    var: Variable,
    segments: &[SegmentIndex],
    predecessor: Option<f64>,
) -> Vec<Matrix> {
    let y = split.target(var);
    segments
        .iter()
        .map(|&s| {
            let y0 = previous_target(&y, s.start, predecessor);
            with_extra_column(split, s, |_| y0)
        })
        .collect()
}

/// Inputs with one appended column equal to the previous day's target.
pub fn augment_teacher_forcing(
    split: &TimeSeriesDataset,
    var: Variable,
    segments: &[SegmentIndex],
    predecessor: Option<f64>,
) -> Vec<Matrix> {
    let y = split.target(var);
    segments
        .iter()
        .map(|&s| with_extra_column(split, s, |t| previous_target(&y, s.start + t, predecessor)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(n: usize) -> TimeSeriesDataset {
        let x = Matrix::from_fn(n, 2, |i, j| (i as f64 * 0.7 + j as f64).sin() * (j + 1) as f64);
        let y = Matrix::from_fn(n, 3, |i, j| (i as f64 * 0.05).cos() * 10.0 + j as f64 + i as f64 * 0.01);
        let doy = (0..n).map(|i| (i % 366 + 1) as u16).collect();
        let year = (0..n).map(|i| (i / 366) as i32).collect();
        TimeSeriesDataset::new(x, y, doy, year).unwrap()
    }

    #[test]
    fn doy_transform() {
        assert_eq!(doy_feature(183).unwrap(), 183.0);
        assert_eq!(doy_feature(1).unwrap(), 1.0);
        assert_eq!(doy_feature(366).unwrap(), 0.0);
        assert!(doy_feature(0).is_err());
        assert!(doy_feature(367).is_err());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(365_244, (0.5, 0.1, 0.4)).unwrap(), (182_622, 36_524, 146_098));
        assert_eq!(split_sizes(100, (0.5, 0.1, 0.4)).unwrap(), (50, 10, 40));
        assert_eq!(split_sizes(73_200, (0.5, 0.1, 0.4)).unwrap(), (36_600, 7_320, 29_280));
        assert!(split_sizes(100, (0.5, 0.2, 0.4)).is_err());
        assert!(split_sizes(5, (0.5, 0.1, 0.4)).is_err());
    }

    #[test]
    fn splits_partition_the_series() {
        let ds = toy(100);
        let (a, b, c) = split_chrono(&ds, (0.5, 0.1, 0.4)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (50, 10, 40));
        assert_eq!((b.start_day, c.start_day), (50, 60));
        let mut rows = a.x.as_slice().to_vec();
        rows.extend_from_slice(b.x.as_slice());
        rows.extend_from_slice(c.x.as_slice());
        assert_eq!(rows, ds.x.as_slice());
    }

    #[test]
    fn normalization_uses_training_stats() {
        let ds = toy(400);
        let (train, valid, _) = split_chrono(&ds, (0.5, 0.1, 0.4)).unwrap();
        let stats = fit_norm(&train).unwrap();
        let nt = apply_norm(&train, &stats).unwrap();
        for j in 0..nt.x.cols() {
            let col = nt.x.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-10 && (std - 1.0).abs() < 1e-10);
        }
        let nv = apply_norm(&valid, &stats).unwrap();
        let vmean = nv.y.column(0).iter().sum::<f64>() / nv.len() as f64;
        assert!(vmean.abs() > 1e-3);
        // leakage check: validation statistics differ from the training ones
        assert_ne!(fit_norm(&valid).unwrap(), stats);

        let back = denorm_targets(&nv.target(Variable::Sno), &stats, Variable::Sno);
        for (a, b) in back.iter().zip(valid.target(Variable::Sno)) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(apply_norm(&nt, &stats).is_err());
    }

    #[test]
    fn constant_feature_is_rejected_by_name() {
        let mut ds = toy(50);
        for i in 0..50 {
            ds.x.set(i, 1, 4.0);
        }
        match fit_norm(&ds) {
            Err(Error::Config(msg)) => assert!(msg.contains("tmin"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn segmentation_starts() {
        let s = slice_segments(1098, 366, 366).unwrap();
        assert_eq!(s.iter().map(|s| s.start).collect::<Vec<_>>(), vec![0, 366, 732]);
        let s = slice_segments(1098, 366, 183).unwrap();
        assert_eq!(
            s.iter().map(|s| s.start).collect::<Vec<_>>(),
            vec![0, 183, 366, 549, 732]
        );
        assert!(slice_segments(365, 366, 366).is_err());
    }

    #[test]
    fn initial_value_augmentation() {
        let ds = toy(1098);
        let segs = slice_segments(1098, 366, 183).unwrap();
        let aug = augment_initial_value(&ds, Variable::Sw, &segs, None);
        let y = ds.target(Variable::Sw);
        assert_eq!(aug[0].cols(), ds.x.cols() + 1);
        assert!(aug[0].column(2).iter().all(|&v| v == 0.0));
        assert!(aug[1].column(2).iter().all(|&v| v == y[182]));
        let with_pred = augment_initial_value(&ds, Variable::Sw, &segs, Some(1.5));
        assert!(with_pred[0].column(2).iter().all(|&v| v == 1.5));
    }

    #[test]
    fn teacher_forcing_is_shifted_target() {
        let ds = toy(1098);
        let segs = slice_segments(1098, 366, 183).unwrap();
        let tf = augment_teacher_forcing(&ds, Variable::Sf, &segs, None);
        let iv = augment_initial_value(&ds, Variable::Sf, &segs, None);
        let y = ds.target(Variable::Sf);
        for (k, s) in segs.iter().enumerate() {
            assert_eq!(tf[k].get(0, 2), iv[k].get(0, 2));
            for t in 1..s.len {
                assert_eq!(tf[k].get(t, 2), y[s.start + t - 1]);
            }
        }
    }

    #[test]
    fn non_overlapping_initial_value_is_previous_segment_end() {
        let ds = toy(1464);
        let segs = slice_segments(1464, 366, 366).unwrap();
        let aug = augment_initial_value(&ds, Variable::Sno, &segs, None);
        let tgt = segment_targets(&ds, Variable::Sno, &segs);
        for i in 1..segs.len() {
            assert_eq!(aug[i].get(0, 2), tgt[i - 1].get(365, 0));
        }
    }
}
