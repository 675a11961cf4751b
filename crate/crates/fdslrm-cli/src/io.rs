//! File ingestion: RFC-4180 CSV series (first column, auto-detected header)
//! and JSON model configurations.

use std::path::Path;

use crate::CliError;

/// Reads the first column of a CSV file as the observed series. A header is
/// assumed when the first cell of the first record does not parse as a
/// number.
pub fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let cell = record.get(0).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue, // header row
            Err(_) => {
                return Err(CliError::input(format!(
                    "{}: row {} is not numeric: {cell:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{}: no numeric data", path.display())));
    }
    Ok(out)
}

pub fn read_model(path: &Path) -> Result<(fdslrm::ModelSpec, fdslrm::ModelConfig), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let config = fdslrm::ModelConfig::from_json(&text).map_err(CliError::from)?;
    let spec = config.to_spec().map_err(CliError::from)?;
    Ok((spec, config))
}

/// Parses a comma-separated list of numbers ("0.5,1,2e-3").
pub fn parse_number_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("not a number: {s:?}")))
        })
        .collect()
}

/// Parses a comma-separated list of counts, accepting scientific notation
/// ("1e3,1e4").
pub fn parse_count_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            let v = s
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("not a count: {s:?}")))?;
            if v < 1.0 || v.fract() != 0.0 && (v - v.round()).abs() > 1e-6 {
                return Err(CliError::input(format!("not a positive integer: {s:?}")));
            }
            Ok(v.round() as usize)
        })
        .collect()
}

/// Writes rows as RFC-4180 CSV to a file or stdout.
pub fn write_csv<W: std::io::Write>(
    target: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(target);
    writer
        .write_record(header)
        .map_err(|e| CliError::input(format!("write: {e}")))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| CliError::input(format!("write: {e}")))?;
    }
    writer.flush().map_err(|e| CliError::input(format!("write: {e}")))?;
    Ok(())
}
