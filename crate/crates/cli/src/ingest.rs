//! CSV ingestion into a validated [`Dataset`].

use std::collections::HashMap;
use std::path::Path;

use rbcopula::model::{Covariates, Dataset, Design};

use crate::config::{DataConfig, ModelConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Group labels in order of first appearance; index = group id.
    pub group_labels: Vec<String>,
}

/// Reads the response, covariate and group columns named in the config.
/// Rows are numbered from 1, not counting the header.
pub fn ingest_csv(path: &Path, data: &DataConfig, model: &ModelConfig) -> Result<Ingested, CliError> {
    let file = path.display();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{file}: {e}")))?;
    let headers = rdr.headers().map_err(|e| CliError::Validation(format!("{file}: {e}")))?.clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("{file}: missing column '{name}'")))
    };
    let iy = [col(&data.y1)?, col(&data.y2)?];
    let ix1: Vec<usize> = model.x1.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let ix2: Vec<usize> = model.x2.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let ig = model.group.as_deref().map(col).transpose()?;

    let mut y = [Vec::new(), Vec::new()];
    let mut x1: Vec<Vec<f64>> = vec![Vec::new(); ix1.len()];
    let mut x2: Vec<Vec<f64>> = vec![Vec::new(); ix2.len()];
    let mut group = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| CliError::Validation(format!("{file}: row {row}: {e}")))?;
        let num = |c: usize| -> Result<f64, CliError> {
            let cell = rec.get(c).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Validation(format!("{file}: row {row}, column '{}': non-numeric value '{cell}'", &headers[c])))
        };
        for j in 0..2 {
            let raw = num(iy[j])?;
            let v = if data.percent_scale { raw / 100.0 } else { raw };
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Validation(format!(
                    "{file}: row {row}, column '{}': response {raw} is outside the open interval {}",
                    &headers[iy[j]],
                    if data.percent_scale { "(0,100)" } else { "(0,1)" }
                )));
            }
            y[j].push(v);
        }
        for (k, &c) in ix1.iter().enumerate() {
            x1[k].push(num(c)?);
        }
        for (k, &c) in ix2.iter().enumerate() {
            x2[k].push(num(c)?);
        }
        if let Some(c) = ig {
            let label = rec.get(c).unwrap_or("").to_string();
            let next = ids.len();
            let id = *ids.entry(label.clone()).or_insert_with(|| {
                labels.push(label);
                next
            });
            group.push(id);
        }
    }
    let n = y[0].len();
    if n == 0 {
        return Err(CliError::Validation(format!("{file}: no data rows")));
    }
    let design = |cols: &[Vec<f64>]| {
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        Design::with_intercept(&refs, n).map_err(|e| CliError::Validation(format!("{file}: {e}")))
    };
    let covariates = if ig.is_some() {
        Covariates::new(design(&x1)?, design(&x2)?, group)
    } else {
        Covariates::ungrouped(design(&x1)?, design(&x2)?)
    }
    .map_err(|e| CliError::Validation(format!("{file}: {e}")))?;
    let [y1, y2] = y;
    let dataset = Dataset::new(y1, y2, covariates).map_err(|e| CliError::Validation(format!("{file}: {e}")))?;
    Ok(Ingested { dataset, group_labels: labels })
}

/// FNV-1a over the responses, design matrices and group ids; identifies
/// the data a fit was run on.
pub fn dataset_digest(d: &Dataset) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    let cov = &d.covariates;
    for v in d.y1.iter().chain(&d.y2) {
        eat(&v.to_bits().to_le_bytes());
    }
    for j in 0..2 {
        let x = cov.design(j);
        eat(&(x.cols() as u64).to_le_bytes());
        for i in 0..x.rows() {
            for v in x.row(i) {
                eat(&v.to_bits().to_le_bytes());
            }
        }
    }
    for &g in &cov.group {
        eat(&(g as u64).to_le_bytes());
    }
    format!("{h:016x}")
}
