use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{
    head_map, torque_map, CharacteristicDerivatives, LinearCharacteristic, OperatingPoint,
    DEFAULT_EPSILON,
};
use crate::error::LinearizeError;
use crate::plant::{HydraulicState, Plant, StateLayout};

/// Column of the guide-vane input in `B`.
pub const GUIDE_VANE_INPUT: usize = 0;
/// Column of the grid-frequency input in `B`.
pub const GRID_FREQUENCY_INPUT: usize = 1;

const TEXT_HEADER: &str = "hydrohybrid linear plant model v1";

/// `dx/dt = A·x + B·u + c` with `u = [y, f_grid]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// `x[k+1] = A_d·x[k] + B_d·u[k] + c_d` with `u = [y, f_grid]` held over `dt`.
///
/// The state uses the packed plant layout, so element heads are absolute
/// heads in metres and the model can be compared directly to the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub dt: f64,
    pub layout: StateLayout,
    pub operating_point: OperatingPoint,
    pub derivatives: CharacteristicDerivatives,
    pub head_map: LinearCharacteristic,
    pub torque_map: LinearCharacteristic,
    pub continuous: ContinuousModel,
}

/// Linear model around the steady state at `guide_vane`, with default step.
pub fn linear_model_around(
    plant: &Plant,
    guide_vane: f64,
    grid_frequency: f64,
    dt: f64,
) -> Result<LinearPlantModel, LinearizeError> {
    let op = OperatingPoint::steady(plant, guide_vane, grid_frequency)?;
    let derivs = CharacteristicDerivatives::compute(plant.turbine(), &op, DEFAULT_EPSILON)?;
    build_linear_model(plant, &derivs, &op, dt)
}

/// Assemble and discretize the affine model.
///
/// Friction is frozen at its incremental resistance `2·r·|Q₀|` so the model is
/// tangent to the plant; the constant part of the loss goes into the offset.
pub fn build_linear_model(
    plant: &Plant,
    derivs: &CharacteristicDerivatives,
    op: &OperatingPoint,
    dt: f64,
) -> Result<LinearPlantModel, LinearizeError> {
    if !(dt > 0.0 && dt <= 0.05 + 1e-12) {
        return Err(LinearizeError::Build(format!("sampling time {dt} s must lie in (0, 0.05]")));
    }
    let layout = plant.layout();
    if op.state.layout() != layout {
        return Err(LinearizeError::Build(format!(
            "operating point has {} elements, plant has {}",
            op.state.heads.len(),
            layout.n_elements
        )));
    }
    let continuous = assemble(plant, derivs, op);
    let dim = layout.dim();

    let mut aug = DMatrix::<f64>::zeros(dim + 3, dim + 3);
    aug.view_mut((0, 0), (dim, dim)).copy_from(&(&continuous.a * dt));
    aug.view_mut((0, dim), (dim, 2)).copy_from(&(&continuous.b * dt));
    aug.view_mut((0, dim + 2), (dim, 1)).copy_from(&(&continuous.c * dt));
    let phi = aug.exp();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(LinearizeError::Build("matrix exponential is not finite".into()));
    }

    let model = LinearPlantModel {
        a: phi.view((0, 0), (dim, dim)).into_owned(),
        b: phi.view((0, dim), (dim, 2)).into_owned(),
        c: phi.view((0, dim + 2), (dim, 1)).column(0).into_owned(),
        dt,
        layout,
        operating_point: op.clone(),
        derivatives: *derivs,
        head_map: head_map(plant.turbine(), op, derivs),
        torque_map: torque_map(plant.turbine(), op, derivs),
        continuous,
    };
    let rho = model.spectral_radius();
    if rho > 1.0 + 1e-9 {
        return Err(LinearizeError::Build(format!("unstable discrete model: spectral radius {rho}")));
    }
    Ok(model)
}

fn assemble(plant: &Plant, d: &CharacteristicDerivatives, op: &OperatingPoint) -> ContinuousModel {
    let lay = plant.layout();
    let n = lay.n_elements;
    let dim = lay.dim();
    let circuit = plant.circuit();
    let params = plant.params();
    let l = circuit.inductance;
    let cap = circuit.capacitance;
    let rve = circuit.viscoelastic_resistance;
    let x0 = op.state.to_vector();

    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DMatrix::<f64>::zeros(dim, 2);

    // Branch rows: coefficient `s` on node head j = h_j + R_ve·(Q_j − Q_{j+1}).
    let add_node = |a: &mut DMatrix<f64>, row: usize, j: usize, s: f64| {
        a[(row, lay.head(j))] += s;
        a[(row, lay.flow(j))] += s * rve;
        a[(row, lay.flow(j + 1))] -= s * rve;
    };
    for k in 0..=n {
        let row = lay.flow(k);
        let (inertance, loss_share) = match k {
            0 => (0.5 * l, 0.5),
            _ if k == n => (plant.turbine_branch_inductance(), 0.5),
            _ => (l, 1.0),
        };
        if k > 0 {
            add_node(&mut a, row, k - 1, 1.0 / inertance);
        }
        if k < n {
            add_node(&mut a, row, k, -1.0 / inertance);
        }
        let r = loss_share * circuit.incremental_resistance(x0[row]);
        a[(row, row)] -= r / inertance;
        if k == n {
            a[(row, lay.turbine_flow())] -= d.head_flow / inertance;
            a[(row, lay.speed())] -= d.head_speed / inertance;
            b[(row, GUIDE_VANE_INPUT)] -= d.head_guide_vane / inertance;
        }
    }
    for i in 0..n {
        a[(lay.head(i), lay.flow(i))] = 1.0 / cap;
        a[(lay.head(i), lay.flow(i + 1))] = -1.0 / cap;
    }

    // Swing equation in rpm and electrical radians.
    let rpm_to_rad = 2.0 * PI / 60.0;
    let omega0 = op.speed * rpm_to_rad;
    let delta0 = op.state.rotor_angle;
    let p_max = params.generator.synchronizing_power;
    let damping = params.generator.damping;
    let pole_pairs = params.polar_couples as f64;
    let k_n = 1.0 / (rpm_to_rad * params.generator_inertia);
    let te_delta = p_max * delta0.cos() / omega0;
    let te_speed = rpm_to_rad * (damping - p_max * delta0.sin() / (omega0 * omega0));
    let te_freq = -damping * 2.0 * PI / pole_pairs;
    let s = lay.speed();
    a[(s, lay.turbine_flow())] = k_n * d.torque_flow;
    a[(s, s)] = k_n * (d.torque_speed - te_speed);
    a[(s, lay.angle())] = -k_n * te_delta;
    b[(s, GUIDE_VANE_INPUT)] = k_n * d.torque_guide_vane;
    b[(s, GRID_FREQUENCY_INPUT)] = -k_n * te_freq;
    a[(lay.angle(), s)] = pole_pairs * rpm_to_rad;
    b[(lay.angle(), GRID_FREQUENCY_INPUT)] = -2.0 * PI;

    // Offset from the Taylor expansion: c = f(x₀, u₀) − A·x₀ − B·u₀.
    let mut f0 = vec![0.0; dim];
    plant.derivative(&x0, op.guide_vane, op.grid_frequency, &mut f0);
    let x0v = DVector::from_vec(x0);
    let u0 = DVector::from_vec(vec![op.guide_vane, op.grid_frequency]);
    let c = DVector::from_vec(f0) - &a * &x0v - &b * &u0;
    ContinuousModel { a, b, c }
}

impl LinearPlantModel {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn state_vector(state: &HydraulicState) -> DVector<f64> {
        DVector::from_vec(state.to_vector())
    }

    /// Packed operating-point state x₀.
    pub fn x0(&self) -> DVector<f64> {
        Self::state_vector(&self.operating_point.state)
    }

    pub fn step(&self, x: &DVector<f64>, guide_vane: f64, grid_frequency: f64) -> DVector<f64> {
        let mut next = &self.a * x + &self.c;
        next.axpy(guide_vane, &self.b.column(GUIDE_VANE_INPUT), 1.0);
        next.axpy(grid_frequency, &self.b.column(GRID_FREQUENCY_INPUT), 1.0);
        next
    }

    /// Equilibrium of the discrete model for constant inputs.
    pub fn fixed_point(&self, guide_vane: f64, grid_frequency: f64) -> Result<DVector<f64>, LinearizeError> {
        let dim = self.dim();
        let lhs = DMatrix::<f64>::identity(dim, dim) - &self.a;
        let mut rhs = self.c.clone();
        rhs.axpy(guide_vane, &self.b.column(GUIDE_VANE_INPUT), 1.0);
        rhs.axpy(grid_frequency, &self.b.column(GRID_FREQUENCY_INPUT), 1.0);
        lhs.lu()
            .solve(&rhs)
            .ok_or_else(|| LinearizeError::Build("I − A_d is singular".into()))
    }

    /// Linear torque estimate 𝒯(y, x) [N·m].
    pub fn torque(&self, state: &[f64], guide_vane: f64) -> f64 {
        self.torque_map.eval(
            state[self.layout.turbine_flow()],
            state[self.layout.speed()],
            guide_vane,
        )
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// Damped natural frequencies of the discrete poles [Hz], ascending.
    pub fn damped_frequencies(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self
            .a
            .complex_eigenvalues()
            .iter()
            .filter(|l| l.im > 1e-12)
            .map(|l| l.arg() / (2.0 * PI * self.dt))
            .collect();
        f.sort_by(f64::total_cmp);
        f
    }

    /// Plain-text dump: a header line, `key values...` lines and matrices
    /// written as `matrix NAME ROWS COLS` followed by one line per row.
    /// Numbers use the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let op = &self.operating_point;
        let d = &self.derivatives;
        writeln!(s, "{TEXT_HEADER}").unwrap();
        line(&mut s, "dt", &[self.dt]);
        writeln!(s, "n_elements {}", self.layout.n_elements).unwrap();
        line(&mut s, "operating_point", &[op.flow, op.speed, op.guide_vane, op.grid_frequency]);
        line(&mut s, "x0", &op.state.to_vector());
        line(
            &mut s,
            "derivatives",
            &[
                d.head_flow,
                d.head_speed,
                d.head_guide_vane,
                d.torque_flow,
                d.torque_speed,
                d.torque_guide_vane,
                d.epsilon,
            ],
        );
        line(&mut s, "head_map", &map_values(&self.head_map));
        line(&mut s, "torque_map", &map_values(&self.torque_map));
        matrix(&mut s, "A_d", &self.a);
        matrix(&mut s, "B_d", &self.b);
        matrix(&mut s, "c_d", &DMatrix::from_column_slice(self.dim(), 1, self.c.as_slice()));
        matrix(&mut s, "A_c", &self.continuous.a);
        matrix(&mut s, "B_c", &self.continuous.b);
        matrix(
            &mut s,
            "c_c",
            &DMatrix::from_column_slice(self.dim(), 1, self.continuous.c.as_slice()),
        );
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LinearizeError> {
        let err = |m: String| LinearizeError::Build(format!("model text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(TEXT_HEADER) {
            return Err(err("missing header".into()));
        }
        let mut next_values = |key: &str| -> Result<Vec<f64>, LinearizeError> {
            let l = lines.next().ok_or_else(|| err(format!("missing `{key}`")))?;
            let mut tok = l.split_whitespace();
            if tok.next() != Some(key) {
                return Err(err(format!("expected `{key}`, found `{l}`")));
            }
            tok.map(|t| t.parse::<f64>().map_err(|e| err(format!("{key}: {e}"))))
                .collect()
        };
        let dt = scalar(next_values("dt")?, "dt")?;
        let n = scalar(next_values("n_elements")?, "n_elements")?;
        if !(n >= 2.0 && n.fract() == 0.0) {
            return Err(err(format!("invalid n_elements {n}")));
        }
        let layout = StateLayout::new(n as usize);
        let opv = next_values("operating_point")?;
        let x0 = next_values("x0")?;
        let dv = next_values("derivatives")?;
        let hm = next_values("head_map")?;
        let tm = next_values("torque_map")?;
        if opv.len() != 4 || x0.len() != layout.dim() || dv.len() != 7 || hm.len() != 7 || tm.len() != 7 {
            return Err(err("wrong number of values".into()));
        }
        let mut read_matrix = |name: &str| -> Result<DMatrix<f64>, LinearizeError> {
            let l = lines.next().ok_or_else(|| err(format!("missing matrix {name}")))?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 4 || tok[0] != "matrix" || tok[1] != name {
                return Err(err(format!("expected matrix {name}, found `{l}`")));
            }
            let rows: usize = tok[2].parse().map_err(|e| err(format!("{name}: {e}")))?;
            let cols: usize = tok[3].parse().map_err(|e| err(format!("{name}: {e}")))?;
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                let l = lines.next().ok_or_else(|| err(format!("{name}: missing row {r}")))?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("{name}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if vals.len() != cols {
                    return Err(err(format!("{name}: row {r} has {} values", vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    m[(r, c)] = v;
                }
            }
            Ok(m)
        };
        let a = read_matrix("A_d")?;
        let b = read_matrix("B_d")?;
        let c = read_matrix("c_d")?;
        let ac = read_matrix("A_c")?;
        let bc = read_matrix("B_c")?;
        let cc = read_matrix("c_c")?;
        let dim = layout.dim();
        for (m, r, c_) in [(&a, dim, dim), (&b, dim, 2), (&c, dim, 1), (&ac, dim, dim), (&bc, dim, 2), (&cc, dim, 1)] {
            if m.nrows() != r || m.ncols() != c_ {
                return Err(err("matrix dimensions do not match the layout".into()));
            }
        }
        let state = HydraulicState::from_vector(layout, &x0);
        Ok(Self {
            a,
            b,
            c: c.column(0).into_owned(),
            dt,
            layout,
            operating_point: OperatingPoint {
                flow: opv[0],
                speed: opv[1],
                guide_vane: opv[2],
                grid_frequency: opv[3],
                state,
            },
            derivatives: CharacteristicDerivatives {
                head_flow: dv[0],
                head_speed: dv[1],
                head_guide_vane: dv[2],
                torque_flow: dv[3],
                torque_speed: dv[4],
                torque_guide_vane: dv[5],
                epsilon: dv[6],
            },
            head_map: map_from(&hm),
            torque_map: map_from(&tm),
            continuous: ContinuousModel {
                a: ac,
                b: bc,
                c: cc.column(0).into_owned(),
            },
        })
    }
}

fn scalar(v: Vec<f64>, key: &str) -> Result<f64, LinearizeError> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(LinearizeError::Build(format!("model text: `{key}` takes one value"))),
    }
}

fn line(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        write!(s, " {v:e}").unwrap();
    }
    s.push('\n');
}

fn matrix(s: &mut String, name: &str, m: &DMatrix<f64>) {
    writeln!(s, "matrix {name} {} {}", m.nrows(), m.ncols()).unwrap();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
}

fn map_values(m: &LinearCharacteristic) -> [f64; 7] {
    [m.value, m.flow, m.speed, m.guide_vane, m.d_flow, m.d_speed, m.d_guide_vane]
}

fn map_from(v: &[f64]) -> LinearCharacteristic {
    LinearCharacteristic {
        value: v[0],
        flow: v[1],
        speed: v[2],
        guide_vane: v[3],
        d_flow: v[4],
        d_speed: v[5],
        d_guide_vane: v[6],
    }
}

/// When to rebuild the linear model during a run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelinearizationPolicy {
    /// Rebuild once |y − y₀| exceeds this; `None` means manual only.
    pub threshold: Option<f64>,
}

impl Default for RelinearizationPolicy {
    fn default() -> Self {
        Self {
            threshold: Some(0.05),
        }
    }
}

impl RelinearizationPolicy {
    pub fn due(&self, model: &LinearPlantModel, guide_vane: f64) -> bool {
        self.drifted(model.operating_point.guide_vane, guide_vane)
    }

    /// Same rule against a bare operating-point opening.
    pub fn drifted(&self, operating_opening: f64, guide_vane: f64) -> bool {
        self.threshold.is_some_and(|t| (guide_vane - operating_opening).abs() > t)
    }
}
