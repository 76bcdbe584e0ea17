//! Exponential-rate fits of `S_chi_t` series read back from output CSVs.

use std::io::Read;

use lmgsim::fit_exponent;
use serde::Serialize;

pub const TIME_COLUMN: &str = "S_chi_t";
const GROUP_COLUMN: &str = "omega_over_schi";
const KEY_COLUMNS: [&str; 3] = [TIME_COLUMN, GROUP_COLUMN, "delta_phi"];

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no `{0}` column")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {value:?} is not a number")]
    BadNumber { row: usize, column: String, value: String },
    #[error("column `{column}`: {source}")]
    Fit { column: String, source: lmgsim::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub column: String,
    pub omega_over_schi: Option<f64>,
    pub lambda: f64,
    pub stderr: f64,
    pub points: usize,
}

pub struct FitReport {
    pub fits: Vec<FitRow>,
    /// Columns left out of an all-column fit for non-positive values.
    pub skipped: Vec<String>,
}

fn parse_cell(row: usize, column: &str, value: &str) -> Result<Option<f64>, FitError> {
    if value.is_empty() {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| FitError::BadNumber { row, column: column.into(), value: value.into() })
}

/// Fits `ln y = 2 lambda S_chi_t + c` inside `window` for `column`, or for
/// every non-key column when `column` is `None`. Rows are grouped by
/// `omega_over_schi` when that column exists; `#` lines are comments.
pub fn fit_csv<R: Read>(input: R, window: (f64, f64), column: Option<&str>) -> Result<FitReport, FitError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let t_col = index(TIME_COLUMN).ok_or_else(|| FitError::MissingColumn(TIME_COLUMN.into()))?;
    let group_col = index(GROUP_COLUMN);
    let targets: Vec<usize> = match column {
        Some(name) => vec![index(name).ok_or_else(|| FitError::MissingColumn(name.into()))?],
        None => (0..headers.len()).filter(|&i| !KEY_COLUMNS.contains(&headers[i].as_str())).collect(),
    };
    let mut table: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        table.push(record.iter().enumerate().map(|(c, v)| parse_cell(r + 1, &headers[c], v)).collect::<Result<_, _>>()?);
    }
    let mut groups: Vec<Option<f64>> = Vec::new();
    for row in &table {
        let g = group_col.and_then(|c| row[c]);
        if !groups.iter().any(|&x| x.map(f64::to_bits) == g.map(f64::to_bits)) {
            groups.push(g);
        }
    }
    let in_window = |t: f64| t >= window.0 && t <= window.1;
    let mut report = FitReport { fits: Vec::new(), skipped: Vec::new() };
    for &col in &targets {
        let name = &headers[col];
        let mut fits = Vec::new();
        let mut positive = true;
        for &g in &groups {
            let (t, y): (Vec<f64>, Vec<f64>) = table
                .iter()
                .filter(|row| group_col.and_then(|c| row[c]).map(f64::to_bits) == g.map(f64::to_bits))
                .filter_map(|row| Some((row[t_col]?, row[col]?)))
                .unzip();
            if column.is_none() && t.iter().zip(&y).any(|(&t, &y)| in_window(t) && !(y > 0.0)) {
                positive = false;
                break;
            }
            let fit = fit_exponent(&t, &y, window).map_err(|source| FitError::Fit { column: name.clone(), source })?;
            fits.push(FitRow { column: name.clone(), omega_over_schi: g, lambda: fit.lambda, stderr: fit.stderr, points: fit.points });
        }
        if positive {
            report.fits.extend(fits);
        } else {
            report.skipped.push(name.clone());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_each_group_separately() {
        let mut text = String::from("# comment\nomega_over_schi,S_chi_t,y\n");
        for (g, rate) in [(0.0, 0.5), (1.0, 1.0)] {
            for i in 0..=10 {
                let t = 0.1 * i as f64;
                text += &format!("{g},{t},{}\n", (2.0 * rate * t).exp());
            }
        }
        let report = fit_csv(text.as_bytes(), (0.2, 0.8), None).unwrap();
        assert_eq!(report.fits.len(), 2);
        assert!((report.fits[0].lambda - 0.5).abs() < 1e-9);
        assert!((report.fits[1].lambda - 1.0).abs() < 1e-9);
        assert_eq!(report.fits[1].omega_over_schi, Some(1.0));
    }

    #[test]
    fn non_positive_columns_are_skipped_or_rejected() {
        let text = "S_chi_t,a,b\n0,1,0\n0.1,2,-1\n0.2,4,1\n0.3,8,1\n";
        let report = fit_csv(text.as_bytes(), (0.0, 0.3), None).unwrap();
        assert_eq!(report.skipped, vec!["b".to_string()]);
        assert!((report.fits[0].lambda - 2f64.ln() / 0.2).abs() < 1e-9);
        assert!(matches!(fit_csv(text.as_bytes(), (0.0, 0.3), Some("b")), Err(FitError::Fit { .. })));
        assert!(matches!(fit_csv(text.as_bytes(), (0.0, 0.3), Some("c")), Err(FitError::MissingColumn(_))));
    }
}
