use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;

pub const CSV_HEADER: [&str; 6] = ["method", "step", "time", "residual", "feasibility_gap", "dispersion"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "method")]
    pub method_label: String,
    pub step: u64,
    pub time: f64,
    /// `F(x) - F*`.
    pub residual: f64,
    /// `|sum x - demand|`.
    pub feasibility_gap: f64,
    /// `max_i g_i - min_i g_i`.
    pub dispersion: f64,
}

/// 17 significant digits, which round-trips every finite `f64`.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Records ordered by method label, then step (stable for equal keys).
pub fn sorted(records: &[MetricsRecord]) -> Vec<&MetricsRecord> {
    let mut out: Vec<&MetricsRecord> = records.iter().collect();
    out.sort_by(|a, b| a.method_label.cmp(&b.method_label).then(a.step.cmp(&b.step)));
    out
}

pub fn write_csv_to<W: Write>(records: &[MetricsRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in sorted(records) {
        w.write_record([
            r.method_label.clone(),
            r.step.to_string(),
            format_real(r.time),
            format_real(r.residual),
            format_real(r.feasibility_gap),
            format_real(r.dispersion),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[MetricsRecord], path: &Path) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    write_csv_to(records, std::io::BufWriter::new(file))
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ExperimentError::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    r.deserialize().map(|row| row.map_err(ExperimentError::from)).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let file = std::fs::File::open(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    read_csv_from(std::io::BufReader::new(file))
}

/// Mean residual over records in the final 10% of the step range, i.e.
/// steps strictly greater than `0.9 * last_step`.
pub fn terminal_residual(records: &[MetricsRecord]) -> Option<f64> {
    let last = records.iter().map(|r| r.step).max()?;
    let cut = last as f64 * 0.9;
    let (sum, count) = records
        .iter()
        .filter(|r| r.step as f64 > cut)
        .fold((0.0, 0usize), |(s, c), r| (s + r.residual, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Time of the first record whose residual is at or below `threshold`.
pub fn time_to_reach(records: &[MetricsRecord], threshold: f64) -> Option<f64> {
    records.iter().find(|r| r.residual <= threshold).map(|r| r.time)
}

/// Residual of the last record at or before `time`.
pub fn residual_at(records: &[MetricsRecord], time: f64) -> Option<f64> {
    records.iter().take_while(|r| r.time <= time).last().map(|r| r.residual)
}

pub fn max_feasibility_gap(records: &[MetricsRecord]) -> f64 {
    records.iter().map(|r| r.feasibility_gap).fold(0.0, f64::max)
}
