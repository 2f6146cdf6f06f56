//! Penstock fatigue from stress traces: rainflow counting, S-N curve, Miner's
//! rule and the relative damage index against an uncontrolled base case.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::FatigueError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    /// Half the stress range [Pa].
    pub amplitude: f64,
    /// [Pa]
    pub mean: f64,
    /// 1.0 for a closed cycle, 0.5 for a residual half-cycle.
    pub count: f64,
}

impl Cycle {
    fn between(a: f64, b: f64, count: f64) -> Self {
        Self {
            amplitude: (a - b).abs() / 2.0,
            mean: (a + b) / 2.0,
            count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleHistogram {
    pub cycles: Vec<Cycle>,
}

impl CycleHistogram {
    /// Total count in cycles (a half-cycle counts 0.5).
    pub fn total_count(&self) -> f64 {
        self.cycles.iter().map(|c| c.count).sum()
    }

    pub fn half_cycles(&self) -> usize {
        self.cycles.iter().map(|c| (2.0 * c.count).round() as usize).sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.cycles.iter().map(|c| c.amplitude).fold(0.0, f64::max)
    }

    pub fn extend(&mut self, other: &CycleHistogram) {
        self.cycles.extend_from_slice(&other.cycles);
    }
}

/// Local extrema of the series, endpoints included, with plateaus collapsed.
pub fn turning_points(series: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in series {
        match out.len() {
            0 => out.push(v),
            1 => {
                if v != out[0] {
                    out.push(v);
                }
            }
            n => {
                let (a, b) = (out[n - 2], out[n - 1]);
                if v == b {
                    continue;
                }
                if (b - a) * (v - b) > 0.0 {
                    out[n - 1] = v;
                } else {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Four-point rainflow count; the residual is counted as half-cycles.
pub fn rainflow(series: &[f64]) -> Result<CycleHistogram, FatigueError> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(FatigueError::InvalidSeries(format!("non-finite sample at index {i}")));
    }
    let mut hist = CycleHistogram::default();
    let mut stack: Vec<f64> = Vec::new();
    for p in turning_points(series) {
        stack.push(p);
        while stack.len() >= 4 {
            let n = stack.len();
            let (a, b, c, d) = (stack[n - 4], stack[n - 3], stack[n - 2], stack[n - 1]);
            let inner = (b - c).abs();
            if inner <= (a - b).abs() && inner <= (c - d).abs() {
                hist.cycles.push(Cycle::between(b, c, 1.0));
                stack.truncate(n - 3);
                stack.push(d);
            } else {
                break;
            }
        }
    }
    for w in stack.windows(2) {
        hist.cycles.push(Cycle::between(w[0], w[1], 0.5));
    }
    Ok(hist)
}

/// Basquin curve `N(σ_a) = N_ref·(σ_ref/σ_a)^m` with a cut-off below the
/// endurance limit. Stresses are amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnCurve {
    /// [Pa]
    pub reference_stress: f64,
    pub exponent: f64,
    pub reference_cycles: f64,
    /// Amplitudes at or below this cause no damage [Pa].
    pub endurance_limit: f64,
}

impl Default for SnCurve {
    fn default() -> Self {
        Self {
            reference_stress: 40.0e6,
            exponent: 3.0,
            reference_cycles: 2.0e6,
            endurance_limit: 0.0,
        }
    }
}

impl SnCurve {
    /// Default curve with the endurance limit at half the stress band.
    pub fn for_band(stress_band: f64) -> Self {
        Self {
            endurance_limit: stress_band / 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FatigueError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.reference_stress) || !positive(self.exponent) || !positive(self.reference_cycles) {
            return Err(FatigueError::InvalidCurve(
                "reference stress, exponent and reference cycles must be positive".into(),
            ));
        }
        if !(self.endurance_limit >= 0.0) {
            return Err(FatigueError::InvalidCurve("endurance limit must be non-negative".into()));
        }
        Ok(())
    }

    /// Cycles to failure at amplitude `amplitude`; infinite at or below the
    /// endurance limit.
    pub fn cycles_to_failure(&self, amplitude: f64) -> f64 {
        if amplitude <= self.endurance_limit || amplitude <= 0.0 {
            return f64::INFINITY;
        }
        self.reference_cycles * (self.reference_stress / amplitude).powf(self.exponent)
    }
}

/// Miner's sum `Σ n_j / N(σ_j)`.
pub fn miner_damage(hist: &CycleHistogram, sn: &SnCurve) -> f64 {
    hist.cycles
        .iter()
        .map(|c| {
            let n = sn.cycles_to_failure(c.amplitude);
            if n.is_finite() {
                c.count / n
            } else {
                0.0
            }
        })
        .sum()
}

pub fn relative_damage_index(controlled: f64, base: f64) -> Result<f64, FatigueError> {
    if !(base > 0.0) {
        return Err(FatigueError::UndefinedRdi);
    }
    Ok(controlled / base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDamage {
    /// One-based element index.
    pub element: usize,
    pub n_cycles: f64,
    pub damage: f64,
    pub rdi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageReport {
    pub scenario: String,
    pub elements: Vec<ElementDamage>,
    /// Maximum over elements.
    pub total_damage: f64,
    /// One-based index of the element with the largest damage.
    pub critical_element: usize,
    /// Headline damage over the base case headline; `None` if the base
    /// accumulated no damage.
    pub rdi: Option<f64>,
}

impl DamageReport {
    /// Damage per element from stress traces (one per element).
    pub fn from_stress(
        scenario: &str,
        stress: &[Vec<f64>],
        sn: &SnCurve,
        base: Option<&DamageReport>,
    ) -> Result<Self, FatigueError> {
        sn.validate()?;
        let mut elements = Vec::with_capacity(stress.len());
        for (i, trace) in stress.iter().enumerate() {
            let hist = rainflow(trace)?;
            elements.push(ElementDamage {
                element: i + 1,
                n_cycles: hist.total_count(),
                damage: miner_damage(&hist, sn),
                rdi: None,
            });
        }
        let mut report = Self {
            scenario: scenario.to_string(),
            elements,
            total_damage: 0.0,
            critical_element: 1,
            rdi: None,
        };
        report.summarize();
        if let Some(b) = base {
            report.relative_to(b)?;
        }
        Ok(report)
    }

    fn summarize(&mut self) {
        let (mut best, mut worst) = (1, 0.0);
        for e in &self.elements {
            if e.damage > worst {
                worst = e.damage;
                best = e.element;
            }
        }
        self.total_damage = worst;
        self.critical_element = best;
    }

    /// Fill per-element and headline RDI against `base`.
    pub fn relative_to(&mut self, base: &DamageReport) -> Result<(), FatigueError> {
        if base.elements.len() != self.elements.len() {
            return Err(FatigueError::InvalidSeries(format!(
                "base case has {} elements, this run {}",
                base.elements.len(),
                self.elements.len()
            )));
        }
        for (e, b) in self.elements.iter_mut().zip(&base.elements) {
            e.rdi = relative_damage_index(e.damage, b.damage).ok();
        }
        self.rdi = relative_damage_index(self.total_damage, base.total_damage).ok();
        Ok(())
    }

    /// `element, n_cycles, D, RDI` rows followed by a summary line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["element", "n_cycles", "D", "RDI"])?;
        let rdi = |r: Option<f64>| r.map(|v| format!("{v:e}")).unwrap_or_default();
        for e in &self.elements {
            w.write_record([
                e.element.to_string(),
                e.n_cycles.to_string(),
                format!("{:e}", e.damage),
                rdi(e.rdi),
            ])?;
        }
        w.write_record([
            format!("max:{}", self.critical_element),
            self.elements.iter().map(|e| e.n_cycles).sum::<f64>().to_string(),
            format!("{:e}", self.total_damage),
            rdi(self.rdi),
        ])?;
        w.flush()?;
        Ok(())
    }
}
