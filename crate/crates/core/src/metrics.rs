//! Error metrics on denormalized predictions and seed aggregation.

use crate::error::{Error, Result};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::config("metric of an empty series"));
    }
    if y.len() != yhat.len() {
        return Err(Error::config(format!(
            "observed ({}) and predicted ({}) lengths differ",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(sum / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    Ok(mse(y, yhat)?.sqrt())
}

/// Nash–Sutcliffe efficiency: `1 − Σ(ŷ − y)² / Σ(y − ȳ)²`.
pub fn nse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let denom: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return Err(Error::config("NSE is undefined for constant observations"));
    }
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(1.0 - num / denom)
}

/// RMSE across segments at each within-segment position. `residuals[i][t]` is
/// the error of segment `i` at step `t`; all segments must have equal length.
pub fn avg_step_rmse(residuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = residuals
        .first()
        .ok_or_else(|| Error::config("no segments to aggregate"))?;
    let len = first.len();
    if residuals.iter().any(|r| r.len() != len) {
        return Err(Error::config("segments differ in length"));
    }
    let n = residuals.len() as f64;
    Ok((0..len)
        .map(|t| (residuals.iter().map(|r| r[t] * r[t]).sum::<f64>() / n).sqrt())
        .collect())
}

/// Per day-of-year RMSE. Entry `d - 1` covers day-of-year `d`; days with no
/// observation are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRmse {
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

pub fn avg_daily_rmse(residuals: &[f64], doy: &[u16]) -> Result<DailyRmse> {
    if residuals.len() != doy.len() {
        return Err(Error::config("residuals and day-of-year labels differ in length"));
    }
    let mut sums = vec![0.0; 366];
    let mut counts = vec![0usize; 366];
    for (&e, &d) in residuals.iter().zip(doy) {
        if !(1..=366).contains(&d) {
            return Err(Error::config(format!("day of year {d} outside 1..=366")));
        }
        sums[d as usize - 1] += e * e;
        counts[d as usize - 1] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| (s / c as f64).sqrt()))
        .collect();
    Ok(DailyRmse { values, counts })
}

/// Mean and unbiased sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("cannot aggregate zero values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(MeanStd { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Metrics of one inference run on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub nse: f64,
    pub avg_step_rmse: Vec<f64>,
    pub avg_daily_rmse: DailyRmse,
}

impl EvalReport {
    /// `segment_len` positions of complete, aligned segments starting at day 0
    /// feed the step trace; every day feeds the other metrics.
    pub fn compute(y: &[f64], yhat: &[f64], doy: &[u16], segment_len: usize) -> Result<Self> {
        check_pair(y, yhat)?;
        let residuals: Vec<f64> = yhat.iter().zip(y).map(|(p, o)| p - o).collect();
        let segments: Vec<Vec<f64>> = residuals
            .chunks_exact(segment_len)
            .map(|c| c.to_vec())
            .collect();
        Ok(EvalReport {
            rmse: rmse(y, yhat)?,
            nse: nse(y, yhat)?,
            avg_step_rmse: avg_step_rmse(&segments)?,
            avg_daily_rmse: avg_daily_rmse(&residuals, doy)?,
        })
    }
}

/// Mean ± std of each scalar metric and mean traces over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub rmse: MeanStd,
    pub nse: MeanStd,
    pub avg_step_rmse: Vec<f64>,
    pub avg_daily_rmse: Vec<Option<f64>>,
}

pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<SeedSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::config("no reports to aggregate"))?;
    let n = reports.len() as f64;
    let rmses: Vec<f64> = reports.iter().map(|r| r.rmse).collect();
    let nses: Vec<f64> = reports.iter().map(|r| r.nse).collect();
    let steps = (0..first.avg_step_rmse.len())
        .map(|t| reports.iter().map(|r| r.avg_step_rmse[t]).sum::<f64>() / n)
        .collect();
    let daily = (0..366)
        .map(|d| {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.avg_daily_rmse.values[d]).collect();
            vals.map(|v| v.iter().sum::<f64>() / n)
        })
        .collect();
    Ok(SeedSummary {
        rmse: MeanStd::of(&rmses)?,
        nse: MeanStd::of(&nses)?,
        avg_step_rmse: steps,
        avg_daily_rmse: daily,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nse_cases() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(nse(&y, &y).unwrap(), 1.0);
        assert!(nse(&y, &[2.0, 2.0, 2.0]).unwrap().abs() < 1e-12);
        assert!(nse(&[4.0, 4.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn step_trace_cases() {
        let zeros = vec![vec![0.0; 4]; 3];
        assert_eq!(avg_step_rmse(&zeros).unwrap(), vec![0.0; 4]);
        let c = vec![vec![-1.5; 4]; 3];
        assert_eq!(avg_step_rmse(&c).unwrap(), vec![1.5; 4]);
    }

    #[test]
    fn daily_trace_cases() {
        let d = avg_daily_rmse(&[0.0; 5], &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(&d.values[..5], &[Some(0.0); 5]);
        assert_eq!(d.values[5], None);
        let two = avg_daily_rmse(&[3.0, 4.0], &[10, 10]).unwrap();
        assert!((two.values[9].unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seed_aggregation() {
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[5.0]).unwrap().std, 0.0);
        assert_eq!(MeanStd::of(&[2.0, 2.0, 2.0]).unwrap().std, 0.0);
        assert_eq!(format!("{m}"), "2.000 ± 1.414");
    }

    proptest! {
        #[test]
        fn metric_identities(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..200)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let m = mse(&y, &yhat).unwrap();
            let r = rmse(&y, &yhat).unwrap();
            prop_assert!((r * r - m).abs() <= 1e-12 * m.max(1e-300));
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
            if var > 1e-9 {
                let e = nse(&y, &yhat).unwrap();
                let want = 1.0 - m / var;
                prop_assert!((e - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
            // partition identity: count-weighted daily MSE equals overall MSE
            let doy: Vec<u16> = (0..y.len()).map(|i| (i % 366 + 1) as u16).collect();
            let res: Vec<f64> = yhat.iter().zip(&y).map(|(p, o)| p - o).collect();
            let d = avg_daily_rmse(&res, &doy).unwrap();
            let total: f64 = d.values.iter().zip(&d.counts)
                .filter_map(|(v, &c)| v.map(|v| v * v * c as f64)).sum();
            prop_assert!((total / y.len() as f64 - m).abs() <= 1e-10 * m.max(1.0));
        }
    }
}
