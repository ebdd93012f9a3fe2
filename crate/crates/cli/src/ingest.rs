use std::path::Path;

use hdvb_core::dgp::TimeSeriesPanel;
use hdvb_core::linproc::DenseMatrix;

use crate::error::CliError;

/// Reads a rows-are-time CSV. A first row with no numeric cell is taken as a
/// header; the first `k` data rows become the presample.
pub fn ingest_csv(path: &Path, k: usize) -> Result<TimeSeriesPanel, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, k, &path.display().to_string())
}

pub fn ingest_reader<R: std::io::Read>(reader: R, k: usize, origin: &str) -> Result<TimeSeriesPanel, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{origin}: {e}")).at(i + 1, None))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if i == 0 && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            labels = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        if let Some(w) = width {
            if rec.len() != w {
                return Err(CliError::input(format!(
                    "{origin}: row {line} has {} columns, expected {w}",
                    rec.len()
                ))
                .at(line, None));
            }
        }
        width = Some(rec.len());
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(CliError::input(format!(
                        "{origin}: cell at row {line}, column {} is `{cell}`, expected a finite number",
                        j + 1
                    ))
                    .at(line, Some(j + 1)))
                }
            }
        }
        rows.push(row);
    }
    if rows.len() < k + 1 {
        return Err(CliError::input(format!(
            "{origin}: {} data rows, need at least {} for {k} presample rows",
            rows.len(),
            k + 1
        )));
    }
    let data = DenseMatrix::from_rows(&rows)?;
    let panel = TimeSeriesPanel::new(data, k)?;
    match labels {
        Some(l) => Ok(panel.with_labels(l)?),
        None => Ok(panel),
    }
}
