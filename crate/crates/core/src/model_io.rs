//! Plain-text model files.
//!
//! ```text
//! seqbatch-gru 1
//! strategy RMB
//! variable SW
//! seed 1
//! seq_len 366
//! dims <input_size> <hidden_size> <output_size>
//! w_in <rows> <cols>
//! <one line per row, values separated by spaces>
//! w_rec <rows> <cols>
//! ...
//! bias <len>
//! <one line>
//! w_out <rows> <cols>
//! ...
//! b_out <len>
//! <one line>
//! ```
//!
//! Gate blocks are stacked as update, reset, candidate. Values use Rust's
//! shortest round-trip formatting, so a saved model loads back bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::Variable;
use crate::error::{Error, Result};
use crate::gru::GruModel;
use crate::trainer::Strategy;

const MAGIC: &str = "seqbatch-gru 1";

/// A trained model with the run facts needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub strategy: Strategy,
    pub variable: Variable,
    pub seed: u64,
    pub seq_len: usize,
    pub model: GruModel,
}

fn write_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(f64::to_string).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "strategy {}", self.strategy);
        let _ = writeln!(s, "variable {}", self.variable);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "seq_len {}", self.seq_len);
        let _ = writeln!(s, "dims {} {} {}", m.input_size(), m.hidden_size(), m.output_size());
        for (name, mat) in [("w_in", &m.w_in), ("w_rec", &m.w_rec)] {
            let _ = writeln!(s, "{name} {} {}", mat.rows(), mat.cols());
            for i in 0..mat.rows() {
                write_values(&mut s, mat.row(i));
            }
        }
        let _ = writeln!(s, "bias {}", m.bias.len());
        write_values(&mut s, &m.bias);
        let _ = writeln!(s, "w_out {} {}", m.w_out.rows(), m.w_out.cols());
        for i in 0..m.w_out.rows() {
            write_values(&mut s, m.w_out.row(i));
        }
        let _ = writeln!(s, "b_out {}", m.b_out.len());
        write_values(&mut s, &m.b_out);
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
            origin,
            last: 0,
        };
        let magic = r.line()?;
        if magic.trim() != MAGIC {
            return Err(r.err(format!("expected '{MAGIC}' header")));
        }
        let strategy = Strategy::parse(&r.field("strategy", 1)?[0]).map_err(|e| r.err(e.to_string()))?;
        let variable = Variable::parse(&r.field("variable", 1)?[0]).map_err(|e| r.err(e.to_string()))?;
        let seed = r.field("seed", 1)?;
        let seed = r.num(&seed[0])?;
        let seq_len = r.field("seq_len", 1)?;
        let seq_len = r.num(&seq_len[0])?;
        let dims = r.field("dims", 3)?;
        let (f, h, v): (usize, usize, usize) = (r.num(&dims[0])?, r.num(&dims[1])?, r.num(&dims[2])?);
        if f == 0 || h == 0 || v == 0 {
            return Err(r.err("dimensions must be positive".into()));
        }
        let mut model = GruModel::zeros(f, h, v);
        for (name, rows, cols) in [("w_in", 3 * h, f), ("w_rec", 3 * h, h)] {
            r.shape(name, &[rows, cols])?;
            let mat = if name == "w_in" { &mut model.w_in } else { &mut model.w_rec };
            for i in 0..rows {
                let vals = r.values(cols)?;
                mat.row_mut(i).copy_from_slice(&vals);
            }
        }
        r.shape("bias", &[3 * h])?;
        model.bias = r.values(3 * h)?;
        r.shape("w_out", &[v, h])?;
        for i in 0..v {
            let vals = r.values(h)?;
            model.w_out.row_mut(i).copy_from_slice(&vals);
        }
        r.shape("b_out", &[v])?;
        model.b_out = r.values(v)?;
        Ok(ModelFile {
            strategy,
            variable,
            seed,
            seq_len,
            model,
        })
    }
}

struct Reader<'a, I> {
    lines: I,
    origin: &'a Path,
    last: u64,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            line: self.last,
            message,
        }
    }

    fn line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i as u64 + 1;
                Ok(l)
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of file".into()))
            }
        }
    }

    fn field(&mut self, name: &str, n: usize) -> Result<Vec<String>> {
        let line = self.line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.err(format!("expected '{name}'")));
        }
        let rest: Vec<String> = parts.map(str::to_string).collect();
        if rest.len() != n {
            return Err(self.err(format!("'{name}' takes {n} value(s)")));
        }
        Ok(rest)
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid number '{s}'")))
    }

    fn shape(&mut self, name: &str, want: &[usize]) -> Result<()> {
        let got = self.field(name, want.len())?;
        let got: Vec<usize> = got.iter().map(|s| self.num(s)).collect::<Result<_>>()?;
        if got != want {
            return Err(self.err(format!("'{name}' has shape {got:?}, expected {want:?}")));
        }
        Ok(())
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.line()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| self.num::<f64>(s))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite parameter".into()));
        }
        Ok(vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFile {
        let mut model = GruModel::init(3, 8, 5, 1).unwrap();
        model.bias[2] = 1.0 / 3.0;
        model.b_out[0] = -2.5e-17;
        ModelFile {
            strategy: Strategy::Cmb,
            variable: Variable::Sno,
            seed: 3,
            seq_len: 366,
            model,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        m.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_files_report_the_line() {
        let text = sample().to_text();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[8] = "0.1 0.2";
        let broken = lines.join("\n");
        match ModelFile::parse(&broken, Path::new("m.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
        assert!(ModelFile::parse("not a model", Path::new("m.txt")).is_err());
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(ModelFile::parse(&truncated, Path::new("m.txt")).is_err());
    }
}
