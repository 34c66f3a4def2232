//! Synthetic weather and a conceptual watershed that produce three targets with
//! distinct memory: soil water (months to years), snowpack (seasonal reset) and
//! streamflow (largely same-day).

mod csv;
mod watershed;
mod weather;

pub use self::csv::{export_csv, load_csv, CSV_HEADER};
pub use watershed::{simulate_watershed, TargetSeries, WatershedParams};
pub use weather::{doy_of, gen_weather, WeatherSeries, DAYS_PER_YEAR};

use crate::dataset::{doy_feature, TimeSeriesDataset};
use crate::error::Result;
use crate::linalg::Matrix;

/// Calendar year of the first generated day.
pub const FIRST_YEAR: i32 = 2001;

/// Generate `years` years of weather, simulate the watershed and assemble the
/// 7-input / 3-target dataset.
pub fn generate_dataset(seed: u64, years: usize, params: &WatershedParams) -> Result<TimeSeriesDataset> {
    let n = years * DAYS_PER_YEAR;
    let weather = gen_weather(seed, n)?;
    let targets = simulate_watershed(&weather, params)?;
    assemble(&weather, &targets)
}

pub fn assemble(weather: &WeatherSeries, targets: &TargetSeries) -> Result<TimeSeriesDataset> {
    let n = weather.len();
    let mut x = Matrix::zeros(n, 7);
    let mut y = Matrix::zeros(n, 3);
    for d in 0..n {
        x.row_mut(d).copy_from_slice(&[
            weather.precip[d],
            weather.tmin[d],
            weather.tmax[d],
            weather.srad[d],
            weather.wind[d],
            weather.rhum[d],
            doy_feature(weather.doy[d])?,
        ]);
        y.row_mut(d)
            .copy_from_slice(&[targets.sw[d], targets.sno[d], targets.sf[d]]);
    }
    let year = (0..n).map(|d| FIRST_YEAR + (d / DAYS_PER_YEAR) as i32).collect();
    TimeSeriesDataset::new(x, y, weather.doy.clone(), year)
}
