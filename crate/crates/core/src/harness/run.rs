//! Closed-loop co-simulation: nonlinear plant, governor, optional set-point
//! filter and battery split, plus the uncontrolled twin.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ControllerKind, ScenarioConfig};
use super::report::{summarize, RunSummary};
use crate::error::{HarnessError, MpcError};
use crate::fatigue::DamageReport;
use crate::linearize::{linear_model_around, LinearPlantModel};
use crate::mpc::{head_bounds, stress_from_head, MpcController, MpcLogRecord, StressLimits};
use crate::plant::{Governor, Plant, Simulator, StateLayout};
use crate::splitting::{LpfSplitter, MpcSplitter, SplitLogRecord};

/// Plant trajectory sampled at the start of every control period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlantTrace {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Packed states `[h, Q, N, δ]`.
    pub states: Vec<Vec<f64>>,
    /// Electrical output [W].
    pub p_hpp: Vec<f64>,
}

impl PlantTrace {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            p_hpp: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, y: f64, state: &[f64], p: f64) {
        self.t.push(t);
        self.y.push(y);
        self.states.push(state.to_vec());
        self.p_hpp.push(p);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Head history of one element (zero-based).
    pub fn heads(&self, element: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[element]).collect()
    }

    fn tail(&self, from: usize) -> Self {
        Self {
            t: self.t[from..].to_vec(),
            y: self.y[from..].to_vec(),
            states: self.states[from..].to_vec(),
            p_hpp: self.p_hpp[from..].to_vec(),
        }
    }

    /// Columns `t, y, h_1..h_I, Q_1..Q_{I+1}, Q_t, N, P_hpp`.
    pub fn write_csv<W: Write>(&self, out: W, layout: StateLayout) -> Result<(), csv::Error> {
        let n = layout.n_elements;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "y".to_string()];
        header.extend((1..=n).map(|i| format!("h_{i}")));
        header.extend((1..=n + 1).map(|i| format!("Q_{i}")));
        header.extend(["Q_t", "N", "P_hpp"].map(String::from));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            let s = &self.states[k];
            row.clear();
            row.push(self.t[k].to_string());
            row.push(self.y[k].to_string());
            row.extend(s[..2 * n + 1].iter().map(|v| v.to_string()));
            row.push(s[layout.turbine_flow()].to_string());
            row.push(s[layout.speed()].to_string());
            row.push(self.p_hpp[k].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`PlantTrace::write_csv`]. The rotor angle is not exported
    /// and reads back as zero.
    pub fn read_csv<R: Read>(input: R, layout: StateLayout) -> Result<Self, HarnessError> {
        let n = layout.n_elements;
        let mut r = csv::Reader::from_reader(input);
        let mut out = Self::default();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 2 * n + 6 {
                return Err(HarnessError::Trace(format!("plant trace row has {} columns", rec.len())));
            }
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| HarnessError::Trace(e.to_string())))
                .collect::<Result<_, _>>()?;
            let mut state = vec![0.0; layout.dim()];
            state[..2 * n + 1].copy_from_slice(&v[2..2 * n + 3]);
            state[layout.speed()] = v[2 * n + 4];
            out.push(v[0], v[1], &state, v[2 * n + 5]);
        }
        Ok(out)
    }
}

/// Head band in force from `step` on.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRecord {
    pub step: usize,
    /// Operating-point opening the band is centred on.
    pub opening: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BandRow {
    step: usize,
    opening: f64,
    element: usize,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CommandRow {
    t: f64,
    f_hz: f64,
    y_star: f64,
    y_applied: f64,
}

/// Everything logged during a run, one entry per control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTraces {
    pub control_period: f64,
    pub layout: StateLayout,
    pub frequency: Vec<f64>,
    pub y_star: Vec<f64>,
    pub plant: PlantTrace,
    pub twin: Option<PlantTrace>,
    pub mpc: Vec<MpcLogRecord>,
    pub split: Vec<SplitLogRecord>,
    pub bands: Vec<BandRecord>,
}

impl RunTraces {
    fn new(steps: usize, dt: f64, layout: StateLayout, twin: bool) -> Self {
        Self {
            control_period: dt,
            layout,
            frequency: Vec::with_capacity(steps),
            y_star: Vec::with_capacity(steps),
            plant: PlantTrace::with_capacity(steps),
            twin: twin.then(|| PlantTrace::with_capacity(steps)),
            mpc: Vec::new(),
            split: Vec::new(),
            bands: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.plant.len()
    }

    /// Battery power per step, zero when no split is logged [W].
    pub fn p_bess(&self) -> Vec<f64> {
        if self.split.is_empty() {
            vec![0.0; self.steps()]
        } else {
            self.split.iter().map(|r| r.p_bess).collect()
        }
    }

    /// Index into `bands` of the band in force at `step`.
    pub fn band_at(&self, step: usize) -> &BandRecord {
        let i = self.bands.partition_point(|b| b.step <= step);
        &self.bands[i.saturating_sub(1)]
    }

    /// Stress history per element [Pa].
    pub fn stress(&self, params: &crate::PlantParameters) -> Vec<Vec<f64>> {
        (0..self.layout.n_elements)
            .map(|i| self.plant.heads(i).into_iter().map(|h| stress_from_head(h, params)).collect())
            .collect()
    }

    /// Last `steps` cycles.
    fn tail(&self, steps: usize) -> Self {
        let from = self.steps().saturating_sub(steps);
        let keep_band = self.bands.partition_point(|b| b.step <= from).saturating_sub(1);
        Self {
            control_period: self.control_period,
            layout: self.layout,
            frequency: self.frequency[from..].to_vec(),
            y_star: self.y_star[from..].to_vec(),
            plant: self.plant.tail(from),
            twin: self.twin.as_ref().map(|t| t.tail(from.min(t.len()))),
            mpc: self.mpc[from.min(self.mpc.len())..].to_vec(),
            split: self.split[from.min(self.split.len())..].to_vec(),
            bands: self.bands[keep_band..].to_vec(),
        }
    }

    /// Write all trace files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            "commands.csv".to_string(),
            "frequency.csv".to_string(),
            "plant.csv".to_string(),
            "bands.csv".to_string(),
        ];
        let mut w = csv::Writer::from_path(dir.join("commands.csv"))?;
        for k in 0..self.steps() {
            w.serialize(CommandRow {
                t: self.plant.t[k],
                f_hz: self.frequency[k],
                y_star: self.y_star[k],
                y_applied: self.plant.y[k],
            })?;
        }
        w.flush()?;
        let t0 = self.plant.t.first().copied().unwrap_or(0.0);
        let mut buf = Vec::new();
        super::frequency::write_trace(&mut buf, self.control_period, &self.frequency)?;
        if t0 != 0.0 {
            // Diagnostic tails keep their absolute time stamps.
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t_s", "f_hz"])?;
            for (k, f) in self.frequency.iter().enumerate() {
                w.write_record([self.plant.t[k].to_string(), f.to_string()])?;
            }
            buf = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
        }
        std::fs::write(dir.join("frequency.csv"), buf)?;
        self.plant.write_csv(std::fs::File::create(dir.join("plant.csv"))?, self.layout)?;
        if let Some(twin) = &self.twin {
            twin.write_csv(std::fs::File::create(dir.join("twin.csv"))?, self.layout)?;
            files.push("twin.csv".into());
        }
        if !self.mpc.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("mpc.csv"))?;
            for r in &self.mpc {
                w.serialize(r)?;
            }
            w.flush()?;
            files.push("mpc.csv".into());
        }
        if !self.split.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("split.csv"))?;
            for r in &self.split {
                w.serialize(r)?;
            }
            w.flush()?;
            files.push("split.csv".into());
        }
        let mut w = csv::Writer::from_path(dir.join("bands.csv"))?;
        for b in &self.bands {
            for i in 0..b.lower.len() {
                w.serialize(BandRow {
                    step: b.step,
                    opening: b.opening,
                    element: i + 1,
                    lower: b.lower[i],
                    upper: b.upper[i],
                })?;
            }
        }
        w.flush()?;
        Ok(files)
    }

    /// Load traces written by [`RunTraces::write_dir`].
    pub fn read_dir(dir: &Path, control_period: f64, layout: StateLayout) -> Result<Self, HarnessError> {
        let open = |name: &str| -> Result<Option<std::fs::File>, HarnessError> {
            match std::fs::File::open(dir.join(name)) {
                Ok(f) => Ok(Some(f)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let required = |name: &str| -> Result<std::fs::File, HarnessError> {
            open(name)?.ok_or_else(|| HarnessError::Trace(format!("{} missing in {}", name, dir.display())))
        };
        let mut frequency = Vec::new();
        let mut y_star = Vec::new();
        for row in csv::Reader::from_reader(required("commands.csv")?).deserialize() {
            let row: CommandRow = row?;
            frequency.push(row.f_hz);
            y_star.push(row.y_star);
        }
        let plant = PlantTrace::read_csv(required("plant.csv")?, layout)?;
        let twin = open("twin.csv")?.map(|f| PlantTrace::read_csv(f, layout)).transpose()?;
        let mut mpc = Vec::new();
        if let Some(f) = open("mpc.csv")? {
            for r in csv::Reader::from_reader(f).deserialize() {
                mpc.push(r?);
            }
        }
        let mut split = Vec::new();
        if let Some(f) = open("split.csv")? {
            for r in csv::Reader::from_reader(f).deserialize() {
                split.push(r?);
            }
        }
        let mut bands: Vec<BandRecord> = Vec::new();
        for row in csv::Reader::from_reader(required("bands.csv")?).deserialize() {
            let row: BandRow = row?;
            if bands.last().is_none_or(|b| b.step != row.step) {
                bands.push(BandRecord {
                    step: row.step,
                    opening: row.opening,
                    lower: Vec::new(),
                    upper: Vec::new(),
                });
            }
            let b = bands.last_mut().expect("pushed above");
            b.lower.push(row.lower);
            b.upper.push(row.upper);
        }
        Ok(Self {
            control_period,
            layout,
            frequency,
            y_star,
            plant,
            twin,
            mpc,
            split,
            bands,
        })
    }
}

/// Result of one scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub traces: RunTraces,
    pub summary: RunSummary,
    /// Absolute damage; RDI is filled in by the comparison.
    pub damage: DamageReport,
    /// Wall-clock of each controller cycle [ms]; empty without controller.
    pub cycle_ms: Vec<f64>,
}

/// Hash of everything two comparable runs must share: plant, governor,
/// timing and the frequency samples.
pub fn fingerprint(cfg: &ScenarioConfig, frequency: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(cfg.comparison_key().as_bytes());
    for f in frequency {
        h.update(f.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn band_around(
    plant: &Plant,
    opening: f64,
    cfg: &ScenarioConfig,
    step: usize,
) -> Result<BandRecord, HarnessError> {
    let heads = plant.steady_state(opening, cfg.plant.nominal_grid_frequency)?.heads;
    let limits = StressLimits::around_heads(&heads, cfg.mpc.stress_band(&cfg.plant), &cfg.plant);
    let (lower, upper) = head_bounds(&limits, &cfg.plant)?;
    Ok(BandRecord {
        step,
        opening,
        lower,
        upper,
    })
}

enum Filter {
    None,
    Mpc {
        controller: Box<MpcController>,
        split: MpcSplitter,
        consecutive_fallbacks: usize,
    },
    Lpf {
        split: LpfSplitter,
        model: Box<LinearPlantModel>,
    },
}

/// Run `cfg` with its configured frequency source and write the outputs if
/// an output directory is set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let frequency = cfg.frequency.samples(cfg.steps(), cfg.control_period())?;
    let out = run_with_frequency(cfg, &frequency)?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// Run `cfg` against explicit frequency samples, one per control period.
pub fn run_with_frequency(cfg: &ScenarioConfig, frequency: &[f64]) -> Result<RunOutput, HarnessError> {
    run_inner(cfg, frequency, None)
}

/// Replay experiment: the MPC sees `y_star[k + 1..]` (padded with the last
/// value) as its forecast instead of holding the current command. `y_star`
/// is typically the command trace of an earlier run of the same scenario.
pub fn run_with_forecast(cfg: &ScenarioConfig, frequency: &[f64], y_star: &[f64]) -> Result<RunOutput, HarnessError> {
    if y_star.len() != frequency.len() {
        return Err(HarnessError::Trace(format!(
            "{} forecast samples for {} control periods",
            y_star.len(),
            frequency.len()
        )));
    }
    run_inner(cfg, frequency, Some(y_star))
}

fn run_inner(cfg: &ScenarioConfig, frequency: &[f64], replay: Option<&[f64]>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let steps = cfg.steps();
    if frequency.len() != steps {
        return Err(HarnessError::Trace(format!(
            "{} frequency samples for {steps} control periods",
            frequency.len()
        )));
    }
    let dt = cfg.control_period();
    let plant = Plant::new(cfg.plant.clone(), cfg.n_elements)?;
    let layout = plant.layout();
    let mut traces = RunTraces::new(steps, dt, layout, cfg.twin);
    let mut cycle_ms = Vec::new();

    let result = simulate(cfg, &plant, frequency, replay, &mut traces, &mut cycle_ms);
    if let Err((time, err)) = result {
        let bundle = diagnostic_bundle(cfg, &traces, &err.to_string());
        return Err(HarnessError::Aborted {
            time,
            reason: err.to_string(),
            bundle: match bundle {
                Ok(p) => p.display().to_string(),
                Err(e) => format!("<bundle not written: {e}>"),
            },
        });
    }

    let sn = cfg.fatigue.curve(cfg.mpc.stress_band(&cfg.plant));
    let damage = DamageReport::from_stress(cfg.controller.as_str(), &traces.stress(&cfg.plant), &sn, None)?;
    let summary = summarize(cfg, &fingerprint(cfg, frequency), &traces, &cycle_ms);
    Ok(RunOutput {
        config: cfg.clone(),
        traces,
        summary,
        damage,
        cycle_ms,
    })
}

fn simulate(
    cfg: &ScenarioConfig,
    plant: &Plant,
    frequency: &[f64],
    replay: Option<&[f64]>,
    traces: &mut RunTraces,
    cycle_ms: &mut Vec<f64>,
) -> Result<(), (f64, HarnessError)> {
    let at = |t: f64| move |e: HarnessError| (t, e);
    let dt = cfg.control_period();
    let h = dt / cfg.substeps as f64;
    let f_nom = cfg.plant.nominal_grid_frequency;
    let rpm_to_rad = 2.0 * PI / 60.0;

    let y0 = plant.opening_for_power(cfg.power_reference).map_err(|e| at(0.0)(e.into()))?;
    let initial = plant.steady_state(y0, frequency[0]).map_err(|e| at(0.0)(e.into()))?;
    let x0 = initial.to_vector();
    let mut sim = Simulator::new(plant.clone(), &initial);
    let mut governor = Governor::new(cfg.governor.clone(), y0).map_err(|e| at(0.0)(e.into()))?;
    let mut twin = cfg.twin.then(|| (Simulator::new(plant.clone(), &initial), governor.clone()));

    let model = |opening: f64| linear_model_around(plant, opening, f_nom, dt).map_err(HarnessError::from);
    let mut filter = match cfg.controller {
        ControllerKind::None => Filter::None,
        ControllerKind::Mpc => {
            let m = model(y0).map_err(at(0.0))?;
            let split = MpcSplitter::new(&m, &cfg.plant, &x0);
            let controller = MpcController::new(cfg.mpc.clone(), &cfg.plant, m, y0).map_err(|e| at(0.0)(e.into()))?;
            Filter::Mpc {
                controller: Box::new(controller),
                split,
                consecutive_fallbacks: 0,
            }
        }
        ControllerKind::Lpf => {
            let m = model(y0).map_err(at(0.0))?;
            let split = LpfSplitter::new(cfg.lpf.cutoff, &m, &cfg.plant, &x0, y0).map_err(|e| at(0.0)(e.into()))?;
            Filter::Lpf {
                split,
                model: Box::new(m),
            }
        }
    };
    traces.bands.push(band_around(plant, y0, cfg, 0).map_err(at(0.0))?);

    let mut y_last = y0;
    let mut p_bess_last = 0.0;
    for (k, &f) in frequency.iter().enumerate() {
        let t = k as f64 * dt;
        let fail = at(t);
        // Cycle time includes any model rebuild.
        let start = Instant::now();

        if k > 0 && cfg.relinearization.drifted(traces.bands.last().expect("initial band").opening, y_last) {
            let band = band_around(plant, y_last, cfg, k).map_err(fail)?;
            match &mut filter {
                Filter::None => {}
                Filter::Mpc { controller, split, .. } => {
                    let m = model(y_last).map_err(fail)?;
                    split.set_model(&m);
                    controller.set_model(m).map_err(|e| fail(e.into()))?;
                    debug_assert_eq!(controller.bounds().1, &band.upper[..]);
                }
                Filter::Lpf { split, model: current } => {
                    let m = model(y_last).map_err(fail)?;
                    split.set_model(&m);
                    **current = m;
                }
            }
            traces.bands.push(band);
        }

        let state = sim.state();
        let x = sim.packed().to_vec();
        let p_e = plant.electrical_power(&state, f);
        let y_star = governor.step(state.rotor_speed * rpm_to_rad, p_e + p_bess_last, cfg.power_reference, dt);

        let (y_applied, p_bess) = match &mut filter {
            Filter::None => (y_star, 0.0),
            Filter::Mpc {
                controller,
                split,
                consecutive_fallbacks,
            } => {
                let sol = match replay {
                    None => controller.solve_step(&x, y_star, f),
                    Some(future) => {
                        let last = future.len() - 1;
                        let forecast: Vec<f64> = std::iter::once(y_star)
                            .chain((1..=cfg.mpc.horizon).map(|j| future[(k + j).min(last)]))
                            .collect();
                        controller.solve_with_forecast(&x, &forecast, f)
                    }
                }
                .map_err(|e| fail(e.into()))?;
                let s = split.step(y_star, sol.applied, f, controller.model()).map_err(|e| fail(e.into()))?;
                cycle_ms.push(start.elapsed().as_secs_f64() * 1e3);
                traces.mpc.push(MpcLogRecord::new(t, y_star, &sol));
                traces.split.push(SplitLogRecord::new(t, &s));
                *consecutive_fallbacks = if sol.fallback { *consecutive_fallbacks + 1 } else { 0 };
                if *consecutive_fallbacks > cfg.abort.max_consecutive_fallbacks {
                    return Err(fail(MpcError::PersistentFallback(*consecutive_fallbacks).into()));
                }
                (sol.applied, s.p_bess)
            }
            Filter::Lpf { split, model } => {
                let (y_f, s) = split.step(y_star, f, dt, model).map_err(|e| fail(e.into()))?;
                cycle_ms.push(start.elapsed().as_secs_f64() * 1e3);
                traces.split.push(SplitLogRecord::new(t, &s));
                (y_f, s.p_bess)
            }
        };

        traces.frequency.push(f);
        traces.y_star.push(y_star);
        traces.plant.push(t, y_applied, &x, p_e);

        if let (Some((tsim, tgov)), Some(trace)) = (twin.as_mut(), traces.twin.as_mut()) {
            let ts = tsim.state();
            let tp = plant.electrical_power(&ts, f);
            let ty = tgov.step(ts.rotor_speed * rpm_to_rad, tp, cfg.power_reference, dt);
            trace.push(t, ty, tsim.packed(), tp);
            for _ in 0..cfg.substeps {
                tsim.step(ty, f, h).map_err(|e| fail(e.into()))?;
            }
        }
        for _ in 0..cfg.substeps {
            sim.step(y_applied, f, h).map_err(|e| fail(e.into()))?;
        }
        y_last = y_applied;
        p_bess_last = p_bess;
    }
    Ok(())
}

fn diagnostic_bundle(cfg: &ScenarioConfig, traces: &RunTraces, reason: &str) -> Result<PathBuf, HarnessError> {
    let dir = match &cfg.output_dir {
        Some(d) => d.join("diagnostics"),
        None => std::env::temp_dir().join(format!("hydrohybrid-{}-diagnostics", cfg.name)),
    };
    let keep = (cfg.abort.diagnostic_window / cfg.control_period()).ceil() as usize;
    let tail = traces.tail(keep);
    tail.write_dir(&dir)?;
    std::fs::write(dir.join("reason.txt"), format!("{reason}\n"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

/// Machine-readable description of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub controller: ControllerKind,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub fingerprint: String,
    pub version: String,
    pub steps: usize,
    pub files: Vec<String>,
}

/// Traces, damage report, summary, configuration and manifest.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<RunManifest, HarnessError> {
    let mut files = out.traces.write_dir(dir)?;
    out.damage.write_csv(std::fs::File::create(dir.join("damage_report.csv"))?)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary)?)?;
    std::fs::write(dir.join("config.toml"), out.config.to_toml())?;
    files.extend(["damage_report.csv", "summary.json", "config.toml"].map(String::from));
    let manifest = RunManifest {
        name: out.config.name.clone(),
        controller: out.config.controller,
        seed: out.config.frequency.seed(),
        config_hash: out.config.hash(),
        fingerprint: out.summary.fingerprint.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        steps: out.traces.steps(),
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Summary and damage report of a run directory written by [`write_outputs`].
/// Damage is recomputed from the exported plant trace.
pub fn load_run(dir: &Path) -> Result<(RunSummary, DamageReport), HarnessError> {
    let cfg = ScenarioConfig::from_toml(&std::fs::read_to_string(dir.join("config.toml"))?)?;
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    let layout = Plant::new(cfg.plant.clone(), cfg.n_elements)?.layout();
    let traces = RunTraces::read_dir(dir, cfg.control_period(), layout)?;
    let sn = cfg.fatigue.curve(cfg.mpc.stress_band(&cfg.plant));
    let damage = DamageReport::from_stress(&summary.name, &traces.stress(&cfg.plant), &sn, None)?;
    Ok((summary, damage))
}
