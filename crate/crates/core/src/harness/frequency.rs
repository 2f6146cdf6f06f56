//! Grid-frequency input: seeded synthetic traces or uniformly sampled CSV files.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::PathBuf;

use crate::error::HarnessError;

/// Deterministic frequency events on top of the stochastic part: a ramp to
/// `magnitude`, a hold, and a ramp back, with alternating sign (the first
/// one is an under-frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSchedule {
    /// [s]
    pub first: f64,
    /// Time between event starts [s].
    pub interval: f64,
    /// [Hz]
    pub magnitude: f64,
    /// [s]
    pub ramp: f64,
    /// [s]
    pub hold: f64,
}

impl Default for EventSchedule {
    fn default() -> Self {
        Self {
            first: 60.0,
            interval: 240.0,
            magnitude: 0.35,
            ramp: 0.5,
            hold: 5.0,
        }
    }
}

impl EventSchedule {
    /// Deviation added at time `t` [Hz].
    pub fn deviation(&self, t: f64) -> f64 {
        if self.magnitude == 0.0 || t < self.first {
            return 0.0;
        }
        let k = ((t - self.first) / self.interval).floor();
        let local = t - self.first - k * self.interval;
        let sign = if (k as i64) % 2 == 0 { -1.0 } else { 1.0 };
        let r = self.ramp.max(1e-12);
        let shape = if local < r {
            local / r
        } else if local < r + self.hold {
            1.0
        } else if local < 2.0 * r + self.hold {
            1.0 - (local - r - self.hold) / r
        } else {
            0.0
        };
        sign * self.magnitude * shape
    }
}

/// Ornstein–Uhlenbeck deviation around the nominal frequency plus events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFrequency {
    pub seed: u64,
    /// [Hz]
    pub nominal: f64,
    /// Stationary standard deviation of the stochastic part [Hz].
    pub volatility: f64,
    /// Mean-reversion rate [1/s].
    pub mean_reversion: f64,
    pub events: EventSchedule,
}

impl Default for SyntheticFrequency {
    fn default() -> Self {
        Self {
            seed: 1,
            nominal: 50.0,
            volatility: 0.03,
            mean_reversion: 0.05,
            events: EventSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum FrequencySource {
    Synthetic(SyntheticFrequency),
    Csv { path: PathBuf },
}

impl Default for FrequencySource {
    fn default() -> Self {
        FrequencySource::Synthetic(SyntheticFrequency::default())
    }
}

impl FrequencySource {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            FrequencySource::Synthetic(s) => {
                let ok = s.nominal > 0.0
                    && s.volatility >= 0.0
                    && s.mean_reversion > 0.0
                    && s.events.interval > 0.0
                    && s.events.ramp >= 0.0
                    && s.events.hold >= 0.0
                    && 2.0 * s.events.ramp + s.events.hold <= s.events.interval;
                if ok {
                    Ok(())
                } else {
                    Err(HarnessError::Config(
                        "synthetic frequency needs positive nominal and mean reversion, non-negative volatility, \
                         and events that fit inside their interval"
                            .into(),
                    ))
                }
            }
            FrequencySource::Csv { .. } => Ok(()),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            FrequencySource::Synthetic(s) => Some(s.seed),
            FrequencySource::Csv { .. } => None,
        }
    }

    /// Samples at `k·dt` for `k < steps`.
    pub fn samples(&self, steps: usize, dt: f64) -> Result<Vec<f64>, HarnessError> {
        match self {
            FrequencySource::Synthetic(s) => Ok(synthesize_frequency(s, steps, dt)),
            FrequencySource::Csv { path } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| HarnessError::Trace(format!("{}: {e}", path.display())))?;
                let trace = read_trace(file)?;
                trace.resample(steps, dt)
            }
        }
    }
}

/// `steps` samples spaced by `dt`, starting at the nominal frequency.
pub fn synthesize_frequency(s: &SyntheticFrequency, steps: usize, dt: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let decay = (-s.mean_reversion * dt).exp();
    let kick = s.volatility * (1.0 - decay * decay).sqrt();
    let mut x = 0.0;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        out.push(s.nominal + x + s.events.deviation(t));
        let z: f64 = StandardNormal.sample(&mut rng);
        x = decay * x + kick * z;
    }
    out
}

/// Uniformly sampled trace read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    pub t: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    t_s: f64,
    f_hz: f64,
}

/// Parse `t_s, f_hz` with a header; sampling must be uniform.
pub fn read_trace<R: Read>(input: R) -> Result<FrequencyTrace, HarnessError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_s", "f_hz"] {
        return Err(HarnessError::Trace(format!("expected header 't_s,f_hz', found '{}'", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut t, mut f) = (Vec::new(), Vec::new());
    for row in reader.deserialize() {
        let row: TraceRow = row?;
        if !row.t_s.is_finite() || !(row.f_hz > 0.0 && row.f_hz.is_finite()) {
            return Err(HarnessError::Trace(format!("invalid sample at row {}", t.len() + 1)));
        }
        t.push(row.t_s);
        f.push(row.f_hz);
    }
    if t.len() < 2 {
        return Err(HarnessError::Trace("trace needs at least two samples".into()));
    }
    let h = t[1] - t[0];
    if !(h > 0.0) {
        return Err(HarnessError::Trace("time must increase".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * h.max(1e-3) + 1e-9 {
            return Err(HarnessError::Trace(format!("non-uniform sampling at row {}", i + 2)));
        }
    }
    Ok(FrequencyTrace { t, f })
}

pub fn write_trace<W: Write>(out: W, dt: f64, f: &[f64]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for (k, v) in f.iter().enumerate() {
        w.serialize(TraceRow {
            t_s: k as f64 * dt,
            f_hz: *v,
        })?;
    }
    w.flush()?;
    Ok(())
}

impl FrequencyTrace {
    /// Linear interpolation at `k·dt`; the trace must cover every sample time.
    pub fn resample(&self, steps: usize, dt: f64) -> Result<Vec<f64>, HarnessError> {
        let t0 = self.t[0];
        let h = self.t[1] - t0;
        let last = *self.t.last().expect("two samples");
        let mut out = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = k as f64 * dt;
            if t < t0 - 1e-9 || t > last + 1e-9 {
                return Err(HarnessError::Trace(format!("trace [{t0}, {last}] s does not cover t = {t} s")));
            }
            let pos = ((t - t0) / h).max(0.0);
            let i = (pos.floor() as usize).min(self.t.len() - 2);
            let w = (pos - i as f64).clamp(0.0, 1.0);
            out.push(self.f[i] + w * (self.f[i + 1] - self.f[i]));
        }
        Ok(out)
    }
}
