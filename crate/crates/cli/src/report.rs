//! Machine-readable experiment reports: a fixed-column CSV record table and a
//! JSON document carrying the full summary and provenance.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};

/// One solved (pair, model) combination. CSV column order is fixed:
/// `pair_id, model_id, d_euclidean, d_geodesic, converged, steps, energy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub pair_id: usize,
    pub model_id: usize,
    pub d_euclidean: f64,
    pub d_geodesic: f64,
    pub converged: bool,
    pub steps: usize,
    pub energy: f64,
}

/// Experiment-level aggregates; fields not applicable to a mode are omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub unconverged_fraction: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub messages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_geodesic: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_euclidean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cv_geodesic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cv_euclidean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_statistic: Option<f64>,
    /// p for the alternative "geodesic CVs are smaller".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Right-tail p for the opposite orientation, reported for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value_greater: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_lengths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geodesic_spreads: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euclidean_spreads: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_singular_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub karcher_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frechet_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

/// Sampled curve for the single-pair mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveDump {
    pub ts: Vec<f64>,
    pub latent: Vec<Vec<f64>>,
    pub decoded: Vec<Vec<f64>>,
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub library_version: String,
    pub experiment: String,
    pub seed: u64,
    /// Injectivity of the decoder is certified by construction; dense
    /// networks report false here.
    pub injectivity_certified: bool,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub records: Vec<DistanceSample>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveDump>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: &ExperimentConfig, injectivity_certified: bool) -> Self {
        Self {
            provenance: Provenance {
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                experiment: experiment.to_string(),
                seed: config.seed,
                injectivity_certified,
                config: config.clone(),
            },
            records: Vec::new(),
            summary: Summary::default(),
            curve: None,
        }
    }

    /// Deterministic record order for byte-stable output.
    pub fn sort_records(&mut self) {
        self.records.sort_by_key(|r| (r.pair_id, r.model_id));
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The fixed-column record table.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for record in &self.records {
            wtr.serialize(record)?;
        }
        let bytes = wtr.into_inner().context("csv writer")?;
        Ok(String::from_utf8(bytes)?)
    }

    /// Curve-sample table for the single-pair mode: `t, z0.., x0..`.
    pub fn curve_csv(&self) -> Result<Option<String>> {
        let Some(curve) = &self.curve else {
            return Ok(None);
        };
        let d = curve.latent.first().map_or(0, Vec::len);
        let amb = curve.decoded.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("z{i}")));
        header.extend((0..amb).map(|i| format!("x{i}")));
        wtr.write_record(&header)?;
        for (i, &t) in curve.ts.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(curve.latent[i].iter().map(f64::to_string));
            row.extend(curve.decoded[i].iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        let bytes = wtr.into_inner().context("csv writer")?;
        Ok(Some(String::from_utf8(bytes)?))
    }

    /// One-row table for the karcher mode: mean coordinates plus diagnostics.
    pub fn karcher_csv(&self) -> Result<Option<String>> {
        let Some(mean) = &self.summary.karcher_mean else {
            return Ok(None);
        };
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (0..mean.len()).map(|i| format!("mean_{i}")).collect();
        header.extend([
            "frechet_variance".into(),
            "converged".into(),
            "iterations".into(),
        ]);
        wtr.write_record(&header)?;
        let mut row: Vec<String> = mean.iter().map(f64::to_string).collect();
        row.push(
            self.summary
                .frechet_variance
                .unwrap_or(f64::NAN)
                .to_string(),
        );
        row.push(self.summary.pass.to_string());
        row.push(self.summary.iterations.unwrap_or(0).to_string());
        wtr.write_record(&row)?;
        let bytes = wtr.into_inner().context("csv writer")?;
        Ok(Some(String::from_utf8(bytes)?))
    }

    /// The CSV payload appropriate for this report: the curve table in
    /// single-pair mode, the mean row in karcher mode, the record table
    /// otherwise.
    pub fn csv_payload(&self) -> Result<String> {
        if let Some(curve_table) = self.curve_csv()? {
            return Ok(curve_table);
        }
        if let Some(mean_row) = self.karcher_csv()? {
            return Ok(mean_row);
        }
        self.to_csv()
    }

    /// Writes the report in the requested format.
    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let payload = match format {
            OutputFormat::Json => self.to_json()?,
            OutputFormat::Csv => self.csv_payload()?,
        };
        let mut file =
            fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        file.write_all(payload.as_bytes())?;
        Ok(())
    }
}

/// Reads a record table back from CSV.
pub fn read_records_csv(text: &str) -> Result<Vec<DistanceSample>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        records.push(row?);
    }
    Ok(records)
}
