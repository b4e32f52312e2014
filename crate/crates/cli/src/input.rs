//! Reading survival datasets from headered CSV files.

use std::path::Path;

use causal_surv::SurvivalDataset;

use crate::error::{CliError, CliResult};

/// Columns to pull out of a CSV file.
pub struct ColumnSpec<'a> {
    pub time: &'a str,
    pub event: &'a str,
    pub exposure: &'a str,
    pub covariates: &'a [String],
}

pub struct LoadedData {
    pub data: SurvivalDataset,
    /// Rows skipped for missing values under complete-case analysis.
    pub dropped: usize,
}

fn find_column(headers: &csv::StringRecord, name: &str, path: &Path) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Input(format!("{}: column '{name}' not found", path.display())))
}

fn parse_number(raw: &str, line: u64, column: &str) -> CliResult<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::Input(format!("line {line}, column '{column}': cannot parse '{raw}' as a number")))?;
    if !v.is_finite() {
        return Err(CliError::Input(format!("line {line}, column '{column}': value '{raw}' is not finite")));
    }
    Ok(v)
}

fn parse_indicator(raw: &str, line: u64, column: &str) -> CliResult<bool> {
    let v = parse_number(raw, line, column)?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(CliError::Input(format!("line {line}, column '{column}': expected 0 or 1, got '{raw}'")))
    }
}

/// Loads the requested columns. Rows with an empty cell in any used column
/// are an error unless `complete_case` is set, in which case they are
/// dropped and counted.
pub fn read_dataset(path: &Path, spec: &ColumnSpec<'_>, complete_case: bool) -> CliResult<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let time_col = find_column(&headers, spec.time, path)?;
    let event_col = find_column(&headers, spec.event, path)?;
    let exposure_col = find_column(&headers, spec.exposure, path)?;
    let cov_cols = spec
        .covariates
        .iter()
        .map(|c| find_column(&headers, c, path))
        .collect::<CliResult<Vec<_>>>()?;

    let used: Vec<(usize, &str)> = [(time_col, spec.time), (event_col, spec.event), (exposure_col, spec.exposure)]
        .into_iter()
        .chain(cov_cols.iter().copied().zip(spec.covariates.iter().map(String::as_str)))
        .collect();

    let mut data = SurvivalDataset::new(spec.covariates.to_vec());
    let mut dropped = 0;
    let mut row = vec![0.0; cov_cols.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let missing = used
            .iter()
            .find(|(col, _)| record.get(*col).is_none_or(str::is_empty));
        if let Some((_, name)) = missing {
            if complete_case {
                dropped += 1;
                continue;
            }
            return Err(CliError::Input(format!(
                "line {line}, column '{name}': missing value (use --complete-case to drop incomplete rows)"
            )));
        }
        let time = parse_number(&record[time_col], line, spec.time)?;
        if time < 0.0 {
            return Err(CliError::Input(format!("line {line}, column '{}': negative time {time}", spec.time)));
        }
        let event = parse_indicator(&record[event_col], line, spec.event)?;
        let exposure = parse_indicator(&record[exposure_col], line, spec.exposure)?;
        for ((slot, &col), name) in row.iter_mut().zip(&cov_cols).zip(spec.covariates) {
            *slot = parse_number(&record[col], line, name)?;
        }
        data.push(time, event, exposure, &row)
            .map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
    }
    if data.is_empty() {
        return Err(CliError::Input(format!("{}: no usable rows", path.display())));
    }
    Ok(LoadedData { data, dropped })
}
