//! Run configuration read from `key = value` lines.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not listed in
//! [`KNOWN_KEYS`] are rejected; missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::WatershedParams;
use crate::dataset::Variable;
use crate::error::{Error, Result};
use crate::trainer::{Strategy, TrainConfig};

pub const KNOWN_KEYS: [&str; 18] = [
    "data.seed",
    "data.years",
    "data.params.melt_rate",
    "data.params.freeze_temp",
    "data.params.soil_capacity",
    "data.params.et_coeff",
    "data.params.recession_k",
    "data.params.infiltration_frac",
    "data.params.initial_sw",
    "train.strategy",
    "train.variable",
    "train.bs",
    "train.lr",
    "train.max_epochs",
    "train.patience",
    "train.seeds",
    "train.hidden_size",
    "eval.out_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub years: usize,
    pub params: WatershedParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 42,
            years: 200,
            params: WatershedParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value '{value}' for key '{key}'"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path)
    }

    /// `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i as u64 + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.data.params.validate()?;
        cfg.train.validate()?;
        if cfg.data.years == 0 {
            return Err(Error::config("data.years must be at least 1"));
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let p = &mut self.data.params;
        let t = &mut self.train;
        match key {
            "data.seed" => self.data.seed = parse_num(key, value)?,
            "data.years" => self.data.years = parse_num(key, value)?,
            "data.params.melt_rate" => p.melt_rate = parse_num(key, value)?,
            "data.params.freeze_temp" => p.freeze_temp = parse_num(key, value)?,
            "data.params.soil_capacity" => p.soil_capacity = parse_num(key, value)?,
            "data.params.et_coeff" => p.et_coeff = parse_num(key, value)?,
            "data.params.recession_k" => p.recession_k = parse_num(key, value)?,
            "data.params.infiltration_frac" => p.infiltration_frac = parse_num(key, value)?,
            "data.params.initial_sw" => p.initial_sw = parse_num(key, value)?,
            "train.strategy" => t.strategy = Strategy::parse(value).map_err(|e| format!("train.strategy: {e}"))?,
            "train.variable" => t.variable = Variable::parse(value).map_err(|e| format!("train.variable: {e}"))?,
            "train.bs" => t.bs = parse_num(key, value)?,
            "train.lr" => t.lr = parse_num(key, value)?,
            "train.max_epochs" => t.max_epochs = parse_num(key, value)?,
            "train.patience" => t.patience = parse_num(key, value)?,
            "train.hidden_size" => t.hidden_size = parse_num(key, value)?,
            "train.seeds" => {
                t.seeds = value
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "eval.out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    /// Text form that [`RunConfig::parse`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        let (d, p, t) = (&self.data, &self.data.params, &self.train);
        let seeds: Vec<String> = t.seeds.iter().map(u64::to_string).collect();
        let mut s = String::new();
        let pairs: [(&str, String); 18] = [
            ("data.seed", d.seed.to_string()),
            ("data.years", d.years.to_string()),
            ("data.params.melt_rate", p.melt_rate.to_string()),
            ("data.params.freeze_temp", p.freeze_temp.to_string()),
            ("data.params.soil_capacity", p.soil_capacity.to_string()),
            ("data.params.et_coeff", p.et_coeff.to_string()),
            ("data.params.recession_k", p.recession_k.to_string()),
            ("data.params.infiltration_frac", p.infiltration_frac.to_string()),
            ("data.params.initial_sw", p.initial_sw.to_string()),
            ("train.strategy", t.strategy.to_string()),
            ("train.variable", t.variable.to_string()),
            ("train.bs", t.bs.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.seeds", seeds.join(",")),
            ("train.hidden_size", t.hidden_size.to_string()),
            ("eval.out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in pairs {
            writeln!(s, "{k} = {v}").expect("writing to a string");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.conf"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.bs, 64);
        assert_eq!(c.train.stride(), 183);
    }

    #[test]
    fn values_are_applied() {
        let c = parse("train.strategy = ssmb\ntrain.variable = SNO\ntrain.seeds = 3, 4\ndata.params.melt_rate = 2.5\n").unwrap();
        assert_eq!(c.train.strategy, Strategy::Ssmb);
        assert_eq!(c.train.stride(), 366);
        assert_eq!(c.train.variable, Variable::Sno);
        assert_eq!(c.train.seeds, vec![3, 4]);
        assert_eq!(c.data.params.melt_rate, 2.5);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("train.bs = 8\ntrain.colour = red\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("train.colour") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse("train.strategy = BOGUS").is_err());
        assert!(parse("train.bs = many").is_err());
        assert!(parse("train.bs = 0").is_err());
        assert!(parse("data.years = 0").is_err());
        assert!(parse("no equals sign").is_err());
        assert!(parse("data.params.recession_k = 2").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.train.strategy = Strategy::Cmb;
        c.train.lr = 0.003;
        c.data.params.et_coeff = 0.125;
        assert_eq!(parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), KNOWN_KEYS.len());
    }
}
