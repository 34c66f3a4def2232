use crate::datagen::weather::WeatherSeries;
use crate::error::{Error, Result};

/// Conceptual bucket watershed: degree-day snowpack feeding a single soil store
/// that drains by radiation-driven evapotranspiration and a linear baseflow.
#[derive(Debug, Clone, PartialEq)]
pub struct WatershedParams {
    /// mm of melt per °C above `freeze_temp` per day.
    pub melt_rate: f64,
    /// °C; precipitation falls as snow below it and snow melts above it.
    pub freeze_temp: f64,
    /// mm; soil water above this spills to direct runoff.
    pub soil_capacity: f64,
    /// ET = et_coeff · srad · SW / soil_capacity.
    pub et_coeff: f64,
    /// Fraction of soil water released as baseflow each day.
    pub recession_k: f64,
    /// Fraction of liquid input (rain + melt) entering the soil.
    pub infiltration_frac: f64,
    /// Soil water on the day before the first simulated day.
    pub initial_sw: f64,
}

impl Default for WatershedParams {
    /// Snow-dominated basin whose soil store has a memory of several months.
    fn default() -> Self {
        WatershedParams {
            melt_rate: 3.0,
            freeze_temp: 0.0,
            soil_capacity: 500.0,
            et_coeff: 0.15,
            recession_k: 0.002,
            infiltration_frac: 0.6,
            initial_sw: 200.0,
        }
    }
}

impl WatershedParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.melt_rate,
            self.freeze_temp,
            self.soil_capacity,
            self.et_coeff,
            self.recession_k,
            self.infiltration_frac,
            self.initial_sw,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("watershed parameters must be finite"));
        }
        if self.melt_rate <= 0.0 {
            return Err(Error::config("melt_rate must be positive"));
        }
        if self.soil_capacity <= 0.0 {
            return Err(Error::config("soil_capacity must be positive"));
        }
        if self.et_coeff < 0.0 {
            return Err(Error::config("et_coeff must be non-negative"));
        }
        if !(self.recession_k > 0.0 && self.recession_k < 1.0) {
            return Err(Error::config("recession_k must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.infiltration_frac) {
            return Err(Error::config("infiltration_frac must lie in [0, 1]"));
        }
        if !(0.0..=self.soil_capacity).contains(&self.initial_sw) {
            return Err(Error::config("initial_sw must lie in [0, soil_capacity]"));
        }
        Ok(())
    }
}

/// Simulated target variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    /// Soil water, mm.
    pub sw: Vec<f64>,
    /// Snow water equivalent, mm.
    pub sno: Vec<f64>,
    /// Streamflow, mm/day.
    pub sf: Vec<f64>,
    /// Evapotranspiration, mm/day (kept for the water balance).
    pub et: Vec<f64>,
}

/// Run the bucket model day by day. Every day satisfies
/// `ΔSNO + ΔSW = precip − ET − SF`.
pub fn simulate_watershed(weather: &WeatherSeries, params: &WatershedParams) -> Result<TargetSeries> {
    params.validate()?;
    weather.validate()?;
    let n = weather.len();
    let mut out = TargetSeries {
        sw: Vec::with_capacity(n),
        sno: Vec::with_capacity(n),
        sf: Vec::with_capacity(n),
        et: Vec::with_capacity(n),
    };
    let cap = params.soil_capacity;
    let mut sno = 0.0f64;
    let mut sw = params.initial_sw;
    for d in 0..n {
        let temp = weather.mean_temp(d);
        let precip = weather.precip[d];
        let (snowfall, rain) = if temp < params.freeze_temp {
            (precip, 0.0)
        } else {
            (0.0, precip)
        };
        sno += snowfall;
        let melt = (params.melt_rate * (temp - params.freeze_temp).max(0.0)).min(sno);
        sno -= melt;

        let liquid = rain + melt;
        let infil = params.infiltration_frac * liquid;
        let mut direct = liquid - infil;
        sw += infil;
        if sw > cap {
            direct += sw - cap;
            sw = cap;
        }
        let et = (params.et_coeff * weather.srad[d] * sw / cap).min(sw);
        sw -= et;
        let base = params.recession_k * sw;
        sw -= base;

        out.sno.push(sno);
        out.sw.push(sw);
        out.sf.push(base + direct);
        out.et.push(et);
    }
    Ok(out)
}
