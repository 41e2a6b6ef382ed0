use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// A labelled 2D grid for figure export, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub row_label: String,
    pub col_label: String,
    pub row_axis: Vec<f64>,
    pub col_axis: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    map: &'a Heatmap,
    rows: usize,
    cols: usize,
    /// Values mapped to PGM grey 0 and 255.
    pgm_black: f64,
    pgm_white: f64,
    units: &'a str,
}

impl Heatmap {
    pub fn rows(&self) -> usize {
        self.row_axis.len()
    }

    pub fn cols(&self) -> usize {
        self.col_axis.len()
    }

    /// Finite minimum and maximum of the values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "{}\\{}", self.row_label, self.col_label)?;
        for c in &self.col_axis {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (r, row) in self.values.chunks_exact(self.cols()).enumerate() {
            write!(w, "{}", self.row_axis[r])?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Binary 8-bit PGM; `lo` maps to 0 and `hi` to 255.
    pub fn write_pgm<W: Write>(&self, mut w: W, lo: f64, hi: f64) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.cols(), self.rows())?;
        let span = if hi > lo { hi - lo } else { 1.0 };
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                let x = ((v - lo) / span).clamp(0.0, 1.0);
                if x.is_nan() {
                    0
                } else {
                    (x * 255.0).round() as u8
                }
            })
            .collect();
        w.write_all(&bytes)
    }

    /// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.json` into `dir`.
    pub fn save(
        &self,
        dir: &Path,
        stem: &str,
        units: &str,
        span: Option<(f64, f64)>,
    ) -> Result<Vec<PathBuf>> {
        let (lo, hi) = span.unwrap_or_else(|| self.range());
        let csv = dir.join(format!("{stem}.csv"));
        let pgm = dir.join(format!("{stem}.pgm"));
        let json = dir.join(format!("{stem}.json"));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        self.write_pgm(std::io::BufWriter::new(std::fs::File::create(&pgm)?), lo, hi)?;
        let side = Sidecar {
            map: self,
            rows: self.rows(),
            cols: self.cols(),
            pgm_black: lo,
            pgm_white: hi,
            units,
        };
        std::fs::write(&json, serde_json::to_string_pretty(&side)?)?;
        Ok(vec![csv, pgm, json])
    }
}
