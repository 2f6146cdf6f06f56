//! Run statistics and the cross-controller comparison.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::config::{ControllerKind, ScenarioConfig};
use super::run::RunTraces;
use crate::error::HarnessError;
use crate::fatigue::DamageReport;
use crate::qp::QpStatus;

/// Ground-truth head band statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    /// Largest excursion outside the band [m].
    pub max_violation: f64,
    /// `max_violation` over the band width.
    pub max_violation_fraction: f64,
    /// Cycles with at least one element outside the band.
    pub violating_steps: usize,
    /// One-based element of the largest excursion, if any.
    pub worst_element: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcStats {
    pub active_steps: usize,
    pub fallbacks: usize,
    /// Largest KKT residual over cycles solved to optimality.
    pub max_kkt_residual: f64,
    /// Inactive cycles with |y† − y*| above 1e-6.
    pub inactivity_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: ControllerKind,
    pub fingerprint: String,
    pub steps: usize,
    /// Correlation of plant plus battery output with the twin's output.
    pub tracking_correlation: Option<f64>,
    /// Correlation of the plant output alone with the twin's output.
    pub hpp_correlation: Option<f64>,
    pub max_relative_tracking_error: Option<f64>,
    /// Same, over cycles outside constrained episodes.
    pub max_relative_tracking_error_outside_episodes: Option<f64>,
    /// Maximal runs of cycles with an active filter or a non-zero split.
    pub episodes: usize,
    pub episode_steps: usize,
    /// [W]
    pub peak_p_bess: f64,
    /// Σ|P_bess|·dt [Wh]
    pub bess_energy_throughput: f64,
    pub band: BandStats,
    pub relinearizations: usize,
    pub mpc: Option<MpcStats>,
    pub timing: Option<TimingStats>,
}

/// Pearson correlation; `None` when either series is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (da, db) = (a[k] - ma, b[k] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cycles inside a constrained episode: the MPC is active or falling back,
/// or the battery carries a non-zero share.
pub fn episode_mask(traces: &RunTraces) -> Vec<bool> {
    let p_bess = traces.p_bess();
    (0..traces.steps())
        .map(|k| {
            let mpc = traces.mpc.get(k).is_some_and(|r| r.active || r.fallback);
            mpc || p_bess[k] != 0.0
        })
        .collect()
}

pub fn band_stats(traces: &RunTraces) -> BandStats {
    let n = traces.layout.n_elements;
    let mut stats = BandStats {
        max_violation: 0.0,
        max_violation_fraction: 0.0,
        violating_steps: 0,
        worst_element: None,
    };
    for (k, state) in traces.plant.states.iter().enumerate() {
        let band = traces.band_at(k);
        let mut any = false;
        for i in 0..n {
            let v = (state[i] - band.upper[i]).max(band.lower[i] - state[i]);
            if v > 0.0 {
                any = true;
                if v > stats.max_violation {
                    stats.max_violation = v;
                    stats.max_violation_fraction = v / (band.upper[i] - band.lower[i]);
                    stats.worst_element = Some(i + 1);
                }
            }
        }
        stats.violating_steps += any as usize;
    }
    stats
}

/// Statistics of a run, computed from its logged traces only (plus the
/// wall-clock samples, which are not part of the traces).
pub fn summarize(cfg: &ScenarioConfig, fingerprint: &str, traces: &RunTraces, cycle_ms: &[f64]) -> RunSummary {
    let dt = traces.control_period;
    let p_bess = traces.p_bess();
    let hybrid: Vec<f64> = traces.plant.p_hpp.iter().zip(&p_bess).map(|(p, b)| p + b).collect();
    let mask = episode_mask(traces);

    let (mut tracking_correlation, mut hpp_correlation, mut max_err, mut max_err_out) = (None, None, None, None);
    if let Some(twin) = &traces.twin {
        let reference = &twin.p_hpp;
        tracking_correlation = correlation(&hybrid, reference);
        hpp_correlation = correlation(&traces.plant.p_hpp, reference);
        let rel: Vec<f64> = hybrid.iter().zip(reference).map(|(h, r)| (h - r).abs() / r.abs()).collect();
        max_err = rel.iter().cloned().reduce(f64::max);
        max_err_out = Some(rel.iter().zip(&mask).filter(|(_, m)| !**m).map(|(e, _)| *e).fold(0.0, f64::max));
    }

    let mut episodes = 0;
    for k in 0..mask.len() {
        if mask[k] && (k == 0 || !mask[k - 1]) {
            episodes += 1;
        }
    }

    let mpc = (!traces.mpc.is_empty()).then(|| MpcStats {
        active_steps: traces.mpc.iter().filter(|r| r.active).count(),
        fallbacks: traces.mpc.iter().filter(|r| r.fallback).count(),
        max_kkt_residual: traces
            .mpc
            .iter()
            .filter(|r| r.status == QpStatus::Optimal)
            .map(|r| r.kkt_residual)
            .fold(0.0, f64::max),
        inactivity_violations: traces
            .mpc
            .iter()
            .filter(|r| !r.active && (r.y_dagger - r.y_star).abs() > 1e-6)
            .count(),
    });

    let timing = (!cycle_ms.is_empty()).then(|| {
        let mut s = cycle_ms.to_vec();
        s.sort_by(f64::total_cmp);
        TimingStats {
            median_ms: percentile(&s, 0.5),
            p95_ms: percentile(&s, 0.95),
            max_ms: *s.last().expect("non-empty"),
        }
    });

    RunSummary {
        name: cfg.name.clone(),
        controller: cfg.controller,
        fingerprint: fingerprint.to_string(),
        steps: traces.steps(),
        tracking_correlation,
        hpp_correlation,
        max_relative_tracking_error: max_err,
        max_relative_tracking_error_outside_episodes: max_err_out,
        episodes,
        episode_steps: mask.iter().filter(|m| **m).count(),
        peak_p_bess: p_bess.iter().fold(0.0, |m, p| m.max(p.abs())),
        bess_energy_throughput: p_bess.iter().map(|p| p.abs() * dt).sum::<f64>() / 3600.0,
        band: band_stats(traces),
        relinearizations: traces.bands.len().saturating_sub(1),
        mpc,
        timing,
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub controller: ControllerKind,
    pub tracking_correlation: Option<f64>,
    pub hpp_correlation: Option<f64>,
    pub max_relative_tracking_error: Option<f64>,
    pub peak_p_bess: f64,
    pub bess_energy_throughput: f64,
    pub damage: f64,
    pub rdi: Option<f64>,
    pub element_rdi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub fingerprint: String,
    pub base: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compare runs of one scenario against `base` (the uncontrolled run, or any
/// run used as reference). Refuses runs with different fingerprints.
pub fn compare_report(
    base: (&RunSummary, &DamageReport),
    runs: &[(&RunSummary, &DamageReport)],
) -> Result<Comparison, HarnessError> {
    let (bs, bd) = base;
    let mut rows = Vec::with_capacity(runs.len());
    for (s, d) in runs {
        if s.fingerprint != bs.fingerprint {
            return Err(HarnessError::Mismatch(format!(
                "run '{}' ({}) and base '{}' ({}) differ in plant or frequency trace",
                s.name,
                &s.fingerprint[..12.min(s.fingerprint.len())],
                bs.name,
                &bs.fingerprint[..12.min(bs.fingerprint.len())]
            )));
        }
        let mut d = (*d).clone();
        d.relative_to(bd)?;
        rows.push(ComparisonRow {
            name: s.name.clone(),
            controller: s.controller,
            tracking_correlation: s.tracking_correlation,
            hpp_correlation: s.hpp_correlation,
            max_relative_tracking_error: s.max_relative_tracking_error,
            peak_p_bess: s.peak_p_bess,
            bess_energy_throughput: s.bess_energy_throughput,
            damage: d.total_damage,
            rdi: d.rdi,
            element_rdi: d.elements.iter().map(|e| e.rdi).collect(),
        });
    }
    Ok(Comparison {
        fingerprint: bs.fingerprint.clone(),
        base: bs.name.clone(),
        rows,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        writeln!(s, "| run | controller | corr (hybrid) | corr (HPP) | max rel. err | peak P_bess [MW] | BESS throughput [MWh] | damage | RDI |").unwrap();
        writeln!(s, "|---|---|---|---|---|---|---|---|---|").unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "| {} | {} | {} | {} | {} | {:.3} | {:.4} | {:.3e} | {} |",
                r.name,
                r.controller.as_str(),
                opt(r.tracking_correlation, 5),
                opt(r.hpp_correlation, 5),
                opt(r.max_relative_tracking_error, 4),
                r.peak_p_bess / 1e6,
                r.bess_energy_throughput / 1e6,
                r.damage,
                opt(r.rdi, 4)
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.rows.first().map_or(0, |r| r.element_rdi.len());
        let mut header: Vec<String> = [
            "run",
            "controller",
            "tracking_correlation",
            "hpp_correlation",
            "max_relative_tracking_error",
            "peak_p_bess",
            "bess_energy_throughput",
            "damage",
            "rdi",
        ]
        .map(String::from)
        .to_vec();
        header.extend((1..=n).map(|i| format!("rdi_{i}")));
        w.write_record(&header)?;
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut row = vec![
                r.name.clone(),
                r.controller.as_str().to_string(),
                o(r.tracking_correlation),
                o(r.hpp_correlation),
                o(r.max_relative_tracking_error),
                r.peak_p_bess.to_string(),
                r.bess_energy_throughput.to_string(),
                r.damage.to_string(),
                o(r.rdi),
            ];
            row.extend(r.element_rdi.iter().map(|v| o(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let b: Vec<f64> = a.iter().map(|v| -2.0 * v + 1.0).collect();
        assert!((correlation(&a, &b).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(correlation(&a, &[1.0; 4]), None);
    }

    #[test]
    fn percentiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&s, 0.5), 3.0);
        assert_eq!(percentile(&s, 1.0), 5.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.5), 1.5);
    }
}
