//! Consumer demand profiles: synthetic generation and CSV ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Consumer volumetric flow sampled at the plant timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    /// m³/s, one sample per timestep.
    pub samples: Vec<f64>,
    /// Normalization ceiling for forecasts, m³/s.
    pub ceiling: f64,
}

impl DemandProfile {
    pub fn new(samples: Vec<f64>, ceiling: f64) -> Result<Self> {
        if !(ceiling > 0.0 && ceiling.is_finite()) {
            return Err(Error::Config(format!("demand ceiling must be > 0, got {ceiling}")));
        }
        if let Some((i, v)) = samples.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("demand sample {i} is invalid: {v}")));
        }
        let max = samples.iter().copied().fold(0.0, f64::max);
        if max > ceiling {
            return Err(Error::Domain(format!("demand sample {max} exceeds ceiling {ceiling}")));
        }
        Ok(Self { samples, ceiling })
    }

    /// Constant demand, mostly useful for tests and scripted scenarios.
    pub fn constant(value: f64, len: usize, ceiling: f64) -> Result<Self> {
        Self::new(vec![value; len], ceiling)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sub-profile starting at `start` with `len` samples.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        let end = start.checked_add(len).filter(|&e| e <= self.samples.len()).ok_or(
            Error::EndOfData { step: start, horizon: len, len: self.samples.len() },
        )?;
        Ok(Self { samples: self.samples[start..end].to_vec(), ceiling: self.ceiling })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemandPattern {
    DailyWave,
    StepLoads,
    Mixed,
}

impl FromStr for DemandPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dailywave" | "daily_wave" | "daily-wave" => Ok(Self::DailyWave),
            "steploads" | "step_loads" | "step-loads" => Ok(Self::StepLoads),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!(
                "unknown demand pattern '{other}' (expected DailyWave, StepLoads or Mixed)"
            ))),
        }
    }
}

impl fmt::Display for DemandPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::DailyWave => "DailyWave",
            Self::StepLoads => "StepLoads",
            Self::Mixed => "Mixed",
        };
        f.write_str(name)
    }
}

/// Shape parameters of the synthetic generator, as fractions of the ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandShape {
    pub base_fraction: f64,
    pub wave_amplitude: f64,
    /// Diurnal period in timesteps (17280 = one day at dt = 5 s).
    pub wave_period_steps: f64,
    /// Expected number of step-load events per timestep.
    pub step_rate: f64,
    /// Step offsets are drawn uniformly from `[-step_magnitude, step_magnitude]`.
    pub step_magnitude: f64,
    pub noise_std: f64,
}

impl Default for DemandShape {
    fn default() -> Self {
        Self {
            base_fraction: 0.5,
            wave_amplitude: 0.2,
            wave_period_steps: 17_280.0,
            step_rate: 1.0 / 90.0,
            step_magnitude: 0.3,
            noise_std: 0.03,
        }
    }
}

impl DemandShape {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_fraction >= 0.0
            && self.wave_amplitude >= 0.0
            && self.wave_period_steps > 0.0
            && (0.0..=1.0).contains(&self.step_rate)
            && self.step_magnitude >= 0.0
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid demand shape {self:?}")))
        }
    }
}

/// Deterministic synthetic demand for a seed. Samples are clamped to `[0, ceiling]`.
pub fn generate_demand(
    seed: u64,
    length: usize,
    pattern: DemandPattern,
    shape: &DemandShape,
    ceiling: f64,
) -> Result<DemandProfile> {
    if length == 0 {
        return Err(Error::Config("demand length must be > 0".into()));
    }
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random::<f64>() * shape.wave_period_steps;
    let noise = Normal::new(0.0, shape.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;

    let with_wave = matches!(pattern, DemandPattern::DailyWave | DemandPattern::Mixed);
    let with_steps = matches!(pattern, DemandPattern::StepLoads | DemandPattern::Mixed);
    let with_noise = pattern == DemandPattern::Mixed && shape.noise_std > 0.0;

    let mut step_offset = if with_steps {
        rng.random_range(-1.0..=1.0) * shape.step_magnitude
    } else {
        0.0
    };
    let samples = (0..length)
        .map(|t| {
            let mut frac = shape.base_fraction;
            if with_wave {
                let angle = std::f64::consts::TAU * (t as f64 + phase) / shape.wave_period_steps;
                frac += shape.wave_amplitude * angle.sin();
            }
            if with_steps {
                if rng.random::<f64>() < shape.step_rate {
                    step_offset = rng.random_range(-1.0..=1.0) * shape.step_magnitude;
                }
                frac += step_offset;
            }
            if with_noise {
                frac += noise.sample(&mut rng);
            }
            (frac * ceiling).clamp(0.0, ceiling)
        })
        .collect();
    DemandProfile::new(samples, ceiling)
}

#[derive(Debug, Deserialize)]
struct DemandRow {
    timestamp: f64,
    flow_m3s: f64,
}

/// Reads a `timestamp,flow_m3s` CSV whose rows are spaced `dt` seconds apart.
///
/// The ceiling is the larger of `min_ceiling` and the largest sample.
pub fn load_demand_csv(path: &Path, dt: f64, min_ceiling: f64) -> Result<DemandProfile> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };

    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "flow_m3s" {
        return Err(parse_err(1, format!("expected header 'timestamp,flow_m3s', got '{}'", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut samples = Vec::new();
    let mut previous: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: DemandRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, format!("malformed row: {e}")))?;
        if !(row.flow_m3s >= 0.0 && row.flow_m3s.is_finite()) {
            return Err(parse_err(line, format!("flow must be finite and >= 0, got {}", row.flow_m3s)));
        }
        if let Some(prev) = previous {
            let spacing = row.timestamp - prev;
            if (spacing - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(parse_err(line, format!("row spacing {spacing} s does not match dt = {dt} s")));
            }
        }
        previous = Some(row.timestamp);
        samples.push(row.flow_m3s);
    }
    if samples.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    let ceiling = samples.iter().copied().fold(min_ceiling, f64::max);
    DemandProfile::new(samples, ceiling)
}
