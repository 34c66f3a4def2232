use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};

/// Every synthetic year has exactly this many days; day-of-year runs 1..=366.
pub const DAYS_PER_YEAR: usize = 366;

/// Daily weather drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    /// mm/day
    pub precip: Vec<f64>,
    /// °C
    pub tmin: Vec<f64>,
    /// °C
    pub tmax: Vec<f64>,
    /// MJ/m²/day
    pub srad: Vec<f64>,
    /// m/s
    pub wind: Vec<f64>,
    /// fraction
    pub rhum: Vec<f64>,
    pub doy: Vec<u16>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.precip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precip.is_empty()
    }

    pub fn mean_temp(&self, day: usize) -> f64 {
        0.5 * (self.tmin[day] + self.tmax[day])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.tmin.len(),
            self.tmax.len(),
            self.srad.len(),
            self.wind.len(),
            self.rhum.len(),
            self.doy.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::config("weather arrays differ in length"));
        }
        for d in 0..n {
            let ok = self.precip[d] >= 0.0
                && self.srad[d] >= 0.0
                && self.wind[d] >= 0.0
                && (0.0..=1.0).contains(&self.rhum[d])
                && self.tmin[d] <= self.tmax[d]
                && (1..=DAYS_PER_YEAR as u16).contains(&self.doy[d]);
            if !ok {
                return Err(Error::config(format!("weather record {d} violates physical bounds")));
            }
        }
        Ok(())
    }
}

/// Day of year (1-based) of a day index counted from the first day of year 0.
pub fn doy_of(day: usize) -> u16 {
    (day % DAYS_PER_YEAR + 1) as u16
}

/// Seasonal phase in radians, zero on the coldest day (doy 20).
fn phase(doy: u16) -> f64 {
    2.0 * PI * (doy as f64 - 20.0) / DAYS_PER_YEAR as f64
}

/// Synthetic daily weather.
///
/// Temperature follows an annual cosine (−6 °C mid-winter, 20 °C mid-summer)
/// plus AR(1) anomalies. Precipitation is a two-state Markov occurrence chain
/// with exponential amounts, scaled by an AR(1) annual wetness factor so that
/// wet and dry years cluster. Radiation, wind and humidity are seasonal with
/// wet-day adjustments.
pub fn gen_weather(seed: u64, n_days: usize) -> Result<WeatherSeries> {
    if n_days < DAYS_PER_YEAR {
        return Err(Error::config(format!(
            "at least {DAYS_PER_YEAR} days are required, got {n_days}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let amount = Exp::new(1.0 / 7.0).expect("valid exponential");

    let mut w = WeatherSeries {
        precip: Vec::with_capacity(n_days),
        tmin: Vec::with_capacity(n_days),
        tmax: Vec::with_capacity(n_days),
        srad: Vec::with_capacity(n_days),
        wind: Vec::with_capacity(n_days),
        rhum: Vec::with_capacity(n_days),
        doy: Vec::with_capacity(n_days),
    };

    let mut wet_anomaly = 0.0f64;
    let mut wet_factor = 1.0;
    let mut temp_anomaly = 0.0f64;
    let mut wet = false;
    for day in 0..n_days {
        let doy = doy_of(day);
        if doy == 1 {
            wet_anomaly = 0.6 * wet_anomaly + 0.3 * unit.sample(&mut rng);
            wet_factor = wet_anomaly.exp();
        }
        let season = phase(doy).cos();

        let p_wet = if wet { 0.5 } else { 0.22 } + 0.05 * (phase(doy) - 0.5 * PI).cos();
        wet = rng.random::<f64>() < p_wet;
        let precip = if wet { wet_factor * amount.sample(&mut rng) } else { 0.0 };

        temp_anomaly = 0.7 * temp_anomaly + 2.5 * unit.sample(&mut rng);
        let tmean = 7.0 - 13.0 * season + temp_anomaly;
        let dtr = (if wet { 7.0 } else { 11.0 } + 1.5 * unit.sample(&mut rng)).max(1.0);

        let clear = 15.0 - 10.0 * season;
        let srad = (clear * if wet { 0.5 } else { 1.0 } + 1.5 * unit.sample(&mut rng)).max(0.0);
        let wind = (3.0 + season + unit.sample(&mut rng)).abs();
        let rhum = (0.6 + if wet { 0.2 } else { 0.0 } + 0.05 * season + 0.08 * unit.sample(&mut rng))
            .clamp(0.0, 1.0);

        w.precip.push(precip);
        w.tmin.push(tmean - 0.5 * dtr);
        w.tmax.push(tmean + 0.5 * dtr);
        w.srad.push(srad);
        w.wind.push(wind);
        w.rhum.push(rhum);
        w.doy.push(doy);
    }
    Ok(w)
}
