use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::analyses::{CaseAttribution, GlobalAttribution, TimeStep};
use super::saliency::SensitivityProfile;
use super::shap::{AttributionResult, ShapMethod};
use super::sweep::SweepRow;
use super::normalize_unit_max;
use crate::error::Result;

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

fn floats(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(f64::to_string)
}

/// Columns: pressure, flow, forecast, setpoint_c1..setpoint_cX.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let x = rows.first().map_or(0, |r| r.setpoints.len());
    let mut header: Vec<String> = vec!["pressure".into(), "flow".into(), "forecast".into()];
    header.extend((1..=x).map(|i| format!("setpoint_c{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.pressure.to_string(), r.flow.to_string(), r.forecast.to_string()];
        row.extend(floats(&r.setpoints));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: feature, mean_abs_gradient, normalized.
pub fn write_saliency_csv(path: &Path, profile: &SensitivityProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "mean_abs_gradient", "normalized"])?;
    let norm = normalize_unit_max(&profile.mean_abs_gradient);
    for (j, feature) in profile.features.iter().enumerate() {
        w.write_record([feature.clone(), profile.mean_abs_gradient[j].to_string(), norm[j].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AttributionRecord<'a> {
    state: &'a [f64],
    features: &'a [String],
    phi: &'a [f64],
    phi_per_action: &'a [Vec<f64>],
    baseline: f64,
    output: f64,
    method: &'a ShapMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<&'a [f64]>,
}

impl<'a> AttributionRecord<'a> {
    fn new(r: &'a AttributionResult, features: &'a [String]) -> Self {
        Self {
            state: &r.state,
            features,
            phi: &r.phi,
            phi_per_action: &r.phi_per_action,
            baseline: r.baseline,
            output: r.output,
            method: &r.method,
            stderr: r.stderr.as_deref(),
        }
    }
}

/// JSON array of attribution records.
pub fn write_attributions_json(path: &Path, results: &[AttributionResult], features: &[String]) -> Result<()> {
    let records: Vec<_> = results.iter().map(|r| AttributionRecord::new(r, features)).collect();
    write_json(path, &records)
}

/// Columns: feature, mean_abs_phi, normalized; with a saliency profile also
/// mean_abs_gradient and gradient_normalized, each method scaled to unit max.
pub fn write_global_csv(path: &Path, global: &GlobalAttribution, saliency: Option<&SensitivityProfile>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["feature", "mean_abs_phi", "normalized"];
    if saliency.is_some() {
        header.extend(["mean_abs_gradient", "gradient_normalized"]);
    }
    w.write_record(&header)?;
    let norm = normalize_unit_max(&global.mean_abs_phi);
    let g_norm = saliency.map(|p| normalize_unit_max(&p.mean_abs_gradient));
    for (j, feature) in global.features.iter().enumerate() {
        let mut row = vec![feature.clone(), global.mean_abs_phi[j].to_string(), norm[j].to_string()];
        if let (Some(p), Some(g)) = (saliency, &g_norm) {
            row.extend([p.mean_abs_gradient[j].to_string(), g[j].to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format, one row per (state, feature): the scatter points of the
/// per-feature pattern plots.
pub fn write_pattern_csv(path: &Path, global: &GlobalAttribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "feature", "value", "phi"])?;
    for (i, a) in global.attributions.iter().enumerate() {
        for (j, feature) in global.features.iter().enumerate() {
            w.write_record([i.to_string(), feature.clone(), a.state[j].to_string(), a.phi[j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CaseRecord<'a> {
    pressure: f64,
    forecast: f64,
    attribution: AttributionRecord<'a>,
    waterfall: &'a [super::analyses::WaterfallStep],
}

pub fn write_case_json(path: &Path, cases: &[CaseAttribution], features: &[String]) -> Result<()> {
    let records: Vec<_> = cases
        .iter()
        .map(|c| CaseRecord {
            pressure: c.pressure,
            forecast: c.forecast,
            attribution: AttributionRecord::new(&c.result, features),
            waterfall: &c.waterfall,
        })
        .collect();
    write_json(path, &records)
}

/// Columns: t, excitation, the state features, output, then phi per feature.
pub fn write_time_csv(path: &Path, steps: &[TimeStep], features: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["t".into(), "excitation".into()];
    header.extend(features.iter().cloned());
    header.push("output".into());
    header.extend(features.iter().map(|f| format!("phi_{f}")));
    w.write_record(&header)?;
    for s in steps {
        let mut row = vec![s.t.to_string(), s.excitation.to_string()];
        row.extend(floats(&s.result.state));
        row.push(s.result.output.to_string());
        row.extend(floats(&s.result.phi));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
