//! Run artifacts: per-trial JSONL, per-cell CSV summaries and run metadata.
//!
//! Everything written to `summary.csv` and `report.jsonl` is a pure function
//! of `(config, seed)`; wall-clock and host details go to `run_meta.json`
//! only, so reruns produce byte-identical data files.

use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// 95% normal confidence half-width for a sample of `n` values with sample
/// standard deviation `sd`.
pub fn ci95_half_width(sd: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    1.96 * sd / (n as f64).sqrt()
}

/// Sample mean and standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A finished run: where its artifacts live plus headline facts.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub kind: String,
    pub out_dir: PathBuf,
    pub summary_csv: PathBuf,
    pub report_jsonl: PathBuf,
    pub extra_csv: Vec<PathBuf>,
    pub svg_files: Vec<PathBuf>,
    pub wall_clock_secs: f64,
    /// Datasets redrawn to satisfy the coverage assumption, when applicable.
    pub n_redrawn_datasets: usize,
    /// For the theorem suite: whether every property held.
    pub all_properties_hold: bool,
}

/// Incremental writer for the run's deterministic artifacts.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    jsonl: BufWriter<File>,
    jsonl_path: PathBuf,
}

impl ArtifactWriter {
    pub fn create(out_dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let jsonl_path = out_dir.join("report.jsonl");
        Ok(ArtifactWriter {
            out_dir: out_dir.to_path_buf(),
            jsonl: BufWriter::new(File::create(&jsonl_path)?),
            jsonl_path,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Appends one JSON line to `report.jsonl`.
    pub fn record<T: Serialize>(&mut self, row: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.jsonl, row)?;
        self.jsonl.write_all(b"\n")
    }

    /// Writes a CSV file from a header and stringified rows.
    pub fn write_csv(
        &self,
        name: &str,
        header: &str,
        rows: &[String],
    ) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_meta<T: Serialize>(&self, meta: &T) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join("run_meta.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, meta)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }

    pub fn finish(mut self) -> std::io::Result<PathBuf> {
        self.jsonl.flush()?;
        Ok(self.jsonl_path)
    }
}
