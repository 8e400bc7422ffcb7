//! Plant models, nominal-trajectory steering, finite-horizon LQR gains and
//! linearization along nominal trajectories.

pub mod dubins;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::belief::kalman_step;
use crate::environment::Scenario;
use crate::linalg::{symmetrize, wrap_angle};
use crate::{CovMatrix, StateVec};

/// Terminal-state tolerance for steering.
pub const STEER_TOLERANCE: f64 = 1e-6;

/// Fewest Euler steps used to discretize a Dubins path.
const DUBINS_MIN_STEPS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// `[x, y, vx, vy]`, acceleration input.
    DoubleIntegrator2D,
    /// `[x, y, θ]`, unit forward speed, turn-rate input.
    Dubins,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Nominal discretization step (s). Dubins edges shrink it so that an
    /// integer number of steps covers the path exactly.
    pub dt: f64,
    /// Process-noise input matrix before time scaling; a step of length `dt`
    /// uses `G = √dt · process_noise`.
    pub process_noise: DMatrix<f64>,
    pub lqr_q: DMatrix<f64>,
    pub lqr_r: DMatrix<f64>,
    pub turn_radius: f64,
    /// Double-integrator horizon: seconds of travel per meter of separation.
    pub steering_speed_scale: f64,
    /// Weight on ‖u‖² in the double-integrator stage cost.
    pub control_weight: f64,
}

impl ModelSpec {
    pub fn double_integrator(dt: f64) -> Self {
        ModelSpec {
            kind: ModelKind::DoubleIntegrator2D,
            dt,
            process_noise: DMatrix::from_diagonal(&DVector::from_vec(vec![0.03, 0.03, 0.02, 0.02])),
            lqr_q: DMatrix::identity(4, 4),
            lqr_r: DMatrix::identity(2, 2),
            turn_radius: 1.0,
            steering_speed_scale: 1.0,
            control_weight: 0.5,
        }
    }

    pub fn dubins(dt: f64, turn_radius: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Dubins,
            dt,
            process_noise: DMatrix::from_diagonal(&DVector::from_vec(vec![0.02, 0.02, 0.02])),
            lqr_q: DMatrix::identity(3, 3) * 2.0,
            lqr_r: DMatrix::identity(1, 1),
            turn_radius,
            steering_speed_scale: 1.0,
            control_weight: 0.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            ModelKind::DoubleIntegrator2D => 4,
            ModelKind::Dubins => 3,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self.kind {
            ModelKind::DoubleIntegrator2D => 2,
            ModelKind::Dubins => 1,
        }
    }

    /// Measurement dimension; all states are measured (`C = I`).
    pub fn measurement_dim(&self) -> usize {
        self.state_dim()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let n = self.state_dim();
        let m = self.control_dim();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!("dt must be positive, got {}", self.dt)));
        }
        if self.process_noise.nrows() != n {
            return Err(DynamicsError::Dimension(format!(
                "process noise has {} rows, expected {n}",
                self.process_noise.nrows()
            )));
        }
        if self.lqr_q.shape() != (n, n) {
            return Err(DynamicsError::Dimension(format!("Q must be {n}x{n}")));
        }
        if self.lqr_r.shape() != (m, m) {
            return Err(DynamicsError::Dimension(format!("R must be {m}x{m}")));
        }
        if !crate::linalg::is_psd_with_slack(&self.lqr_q, 1e-12) {
            return Err(DynamicsError::InvalidModel("Q must be positive semidefinite".into()));
        }
        if symmetrize(&self.lqr_r).cholesky().is_none() {
            return Err(DynamicsError::NotPositiveDefinite("R"));
        }
        if self.kind == ModelKind::Dubins && !(self.turn_radius > 0.0) {
            return Err(DynamicsError::InvalidModel("turn radius must be positive".into()));
        }
        if !(self.steering_speed_scale > 0.0) {
            return Err(DynamicsError::InvalidModel("steering speed scale must be positive".into()));
        }
        if self.control_weight < 0.0 {
            return Err(DynamicsError::InvalidModel("control weight must be nonnegative".into()));
        }
        Ok(())
    }

    /// Deterministic one-step dynamics `f(x, u, 0)` over a step of length `dt`.
    pub fn step(&self, x: &StateVec, u: &DVector<f64>, dt: f64) -> StateVec {
        match self.kind {
            ModelKind::DoubleIntegrator2D => {
                let h = 0.5 * dt * dt;
                DVector::from_vec(vec![
                    x[0] + dt * x[2] + h * u[0],
                    x[1] + dt * x[3] + h * u[1],
                    x[2] + dt * u[0],
                    x[3] + dt * u[1],
                ])
            }
            ModelKind::Dubins => DVector::from_vec(vec![
                x[0] + x[2].cos() * dt,
                x[1] + x[2].sin() * dt,
                wrap_angle(x[2] + u[0] * dt),
            ]),
        }
    }

    /// Noise input matrix `G` for a step of length `dt`.
    pub fn noise_input(&self, dt: f64) -> DMatrix<f64> {
        &self.process_noise * dt.sqrt()
    }

    pub fn position(&self, x: &StateVec) -> Vector2<f64> {
        Vector2::new(x[0], x[1])
    }

    /// `x - x_ref`, with headings wrapped for the Dubins model.
    pub fn state_error(&self, x: &StateVec, x_ref: &StateVec) -> DVector<f64> {
        let mut e = x - x_ref;
        if self.kind == ModelKind::Dubins {
            e[2] = wrap_angle(e[2]);
        }
        e
    }

    /// Stage cost `J(x̄, ū)` of one nominal step.
    pub fn stage_cost(&self, u: &DVector<f64>, dt: f64) -> f64 {
        match self.kind {
            ModelKind::DoubleIntegrator2D => dt * (1.0 + self.control_weight * u.norm_squared()),
            // unit speed: path length
            ModelKind::Dubins => dt,
        }
    }

    /// Distance metric for nearest/near queries.
    pub fn distance(&self, a: &StateVec, b: &StateVec) -> f64 {
        let dp = (a[0] - b[0]).hypot(a[1] - b[1]);
        match self.kind {
            ModelKind::DoubleIntegrator2D => {
                let dv = (a[2] - b[2]).hypot(a[3] - b[3]);
                dp.hypot(0.5 * dv)
            }
            ModelKind::Dubins => dp + 0.5 * self.turn_radius * wrap_angle(a[2] - b[2]).abs(),
        }
    }
}

/// One step of the error dynamics
/// `x̌ₖ₊₁ = A x̌ₖ + B ǔₖ + G w`, `y̌ₖ₊₁ = C x̌ₖ₊₁ + D v`.
/// `D` depends on where the robot is and is resolved during propagation.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub dt: f64,
}

/// Tracking controller of an edge: one gain and one LTV step per control.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub gains: Vec<DMatrix<f64>>,
    pub steps: Vec<LtvStep>,
}

/// Nominal trajectory returned by steering. `states.len() == controls.len() + 1`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub controls: Vec<DVector<f64>>,
    /// Step length used along this trajectory.
    pub dt: f64,
    pub nominal_cost: f64,
    feedback: OnceLock<Feedback>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.controls == other.controls
            && self.dt == other.dt
            && self.nominal_cost == other.nominal_cost
    }
}

impl Trajectory {
    fn new(states: Vec<StateVec>, controls: Vec<DVector<f64>>, dt: f64, model: &ModelSpec) -> Self {
        let nominal_cost = controls.iter().map(|u| model.stage_cost(u, dt)).sum();
        Trajectory {
            states,
            controls,
            dt,
            nominal_cost,
            feedback: OnceLock::new(),
        }
    }

    /// Trajectory with an explicit nominal cost, bypassing the stage-cost sum.
    pub fn with_cost(states: Vec<StateVec>, controls: Vec<DVector<f64>>, dt: f64, nominal_cost: f64) -> Self {
        Trajectory {
            states,
            controls,
            dt,
            nominal_cost,
            feedback: OnceLock::new(),
        }
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn first(&self) -> &StateVec {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least one state")
    }

    /// LQR gains and linearization, synthesized on first use.
    pub fn feedback(&self, model: &ModelSpec) -> &Feedback {
        self.feedback.get_or_init(|| {
            let steps = linearize(model, &self.states, &self.controls, self.dt)
                .expect("trajectory dimensions are consistent by construction");
            let a: Vec<_> = steps.iter().map(|s| s.a.clone()).collect();
            let b: Vec<_> = steps.iter().map(|s| s.b.clone()).collect();
            let gains = lqr_gains(&a, &b, &model.lqr_q, &model.lqr_r)
                .expect("model weights validated");
            Feedback { gains, steps }
        })
    }

    pub fn gains(&self, model: &ModelSpec) -> &[DMatrix<f64>] {
        &self.feedback(model).gains
    }

    /// `self` followed by `next`, keeping each part's tracking controller.
    /// Fails unless `next` starts within [`STEER_TOLERANCE`] of where `self`
    /// ends.
    pub fn concat(&self, next: &Trajectory, model: &ModelSpec) -> Result<Trajectory, DynamicsError> {
        if model.state_error(next.first(), self.last()).amax() > STEER_TOLERANCE {
            return Err(DynamicsError::Dimension("trajectories do not meet".into()));
        }
        let mut states = self.states.clone();
        states.extend(next.states.iter().skip(1).cloned());
        let mut controls = self.controls.clone();
        controls.extend(next.controls.iter().cloned());
        let (a, b) = (self.feedback(model), next.feedback(model));
        let feedback = Feedback {
            gains: a.gains.iter().chain(&b.gains).cloned().collect(),
            steps: a.steps.iter().chain(&b.steps).cloned().collect(),
        };
        let traj = Trajectory {
            states,
            controls,
            dt: self.dt,
            nominal_cost: self.nominal_cost + next.nominal_cost,
            feedback: OnceLock::new(),
        };
        let _ = traj.feedback.set(feedback);
        Ok(traj)
    }
}

/// Nominal trajectory plus stabilizing LQR gains from `xa` to `xb`.
pub fn connect(model: &ModelSpec, xa: &StateVec, xb: &StateVec) -> Result<Trajectory, DynamicsError> {
    let traj = steer(model, xa, xb)?;
    traj.feedback(model);
    Ok(traj)
}

/// Nominal trajectory only; gains are computed lazily by [`Trajectory::feedback`].
pub fn steer(model: &ModelSpec, xa: &StateVec, xb: &StateVec) -> Result<Trajectory, DynamicsError> {
    let n = model.state_dim();
    if xa.len() != n || xb.len() != n {
        return Err(DynamicsError::Dimension(format!("states must have {n} entries")));
    }
    if xa.iter().chain(xb.iter()).any(|v| !v.is_finite()) {
        return Err(DynamicsError::Unreachable("non-finite state".into()));
    }
    if model.state_error(xb, xa).amax() == 0.0 {
        return Ok(Trajectory::new(vec![xa.clone()], Vec::new(), model.dt, model));
    }
    match model.kind {
        ModelKind::DoubleIntegrator2D => steer_double_integrator(model, xa, xb),
        ModelKind::Dubins => steer_dubins(model, xa, xb),
    }
}

fn terminal_error(model: &ModelSpec, x: &StateVec, target: &StateVec) -> f64 {
    model.state_error(x, target).amax()
}

/// Minimum-control-energy steering over a horizon proportional to distance,
/// solved per axis with the 2×2 discrete controllability Gramian.
fn steer_double_integrator(model: &ModelSpec, xa: &StateVec, xb: &StateVec) -> Result<Trajectory, DynamicsError> {
    let dt = model.dt;
    let dist = (xb[0] - xa[0]).hypot(xb[1] - xa[1]);
    let horizon = ((model.steering_speed_scale * dist / dt) - 1e-9).ceil().max(2.0);
    if !horizon.is_finite() || horizon > 1e6 {
        return Err(DynamicsError::Unreachable(format!("horizon {horizon} out of range")));
    }
    let horizon = horizon as usize;
    // A^j B per axis = [dt²(j + 1/2), dt]
    let column = |j: usize| Vector2::new(dt * dt * (j as f64 + 0.5), dt);
    let mut gramian = Matrix2::zeros();
    for j in 0..horizon {
        let c = column(j);
        gramian += c * c.transpose();
    }
    let Some(chol) = gramian.cholesky() else {
        return Err(DynamicsError::Unreachable("singular controllability Gramian".into()));
    };
    let nf = horizon as f64;
    let mut multipliers = [Vector2::zeros(); 2];
    for axis in 0..2 {
        let (p, v) = (xa[axis], xa[axis + 2]);
        let free = Vector2::new(p + nf * dt * v, v);
        let target = Vector2::new(xb[axis], xb[axis + 2]);
        multipliers[axis] = chol.solve(&(target - free));
    }
    let mut controls = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(xa.clone());
    for k in 0..horizon {
        let c = column(horizon - 1 - k);
        let u = DVector::from_vec(vec![c.dot(&multipliers[0]), c.dot(&multipliers[1])]);
        let next = model.step(&states[k], &u, dt);
        states.push(next);
        controls.push(u);
    }
    let err = terminal_error(model, states.last().unwrap(), xb);
    if err > STEER_TOLERANCE {
        return Err(DynamicsError::Unreachable(format!("terminal error {err:e}")));
    }
    Ok(Trajectory::new(states, controls, dt, model))
}

fn rollout_dubins(model: &ModelSpec, xa: &StateVec, controls: &[f64], h: f64) -> Vec<StateVec> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(xa.clone());
    for (k, &u) in controls.iter().enumerate() {
        let next = model.step(&states[k], &DVector::from_element(1, u), h);
        states.push(next);
    }
    states
}

/// Shortest Dubins path, discretized with forward Euler at uniform arc-length
/// steps. Euler integration drifts off the continuous arcs, so the turn-rate
/// sequence is corrected by minimum-norm Gauss-Newton until the discrete
/// trajectory lands on `xb`. Nearly straight S-shaped paths can be out of
/// reach of equal steps summing to exactly the Dubins length; those retry
/// with the common step length as an extra unknown. The nominal cost is
/// always the continuous Dubins length.
fn steer_dubins(model: &ModelSpec, xa: &StateVec, xb: &StateVec) -> Result<Trajectory, DynamicsError> {
    let q0 = [xa[0], xa[1], xa[2]];
    let q1 = [xb[0], xb[1], xb[2]];
    let path = dubins::shortest_path(q0, q1, model.turn_radius)
        .ok_or_else(|| DynamicsError::Unreachable("no Dubins word connects the configurations".into()))?;
    let length = path.length();
    let base = ((length / model.dt) - 1e-9).ceil().max(DUBINS_MIN_STEPS as f64) as usize;
    for (steps, flex) in [(base, false), (2 * base, false), (base, true), (2 * base, true)] {
        if let Some(traj) = refine_dubins(model, &path, xa, xb, steps, flex) {
            return Ok(traj);
        }
    }
    Err(DynamicsError::Unreachable("Euler refinement of Dubins path did not converge".into()))
}

fn refine_dubins(
    model: &ModelSpec,
    path: &dubins::DubinsPath,
    xa: &StateVec,
    xb: &StateVec,
    steps: usize,
    flex: bool,
) -> Option<Trajectory> {
    let length = path.length();
    let mut h = length / steps as f64;
    let mut u: Vec<f64> = (0..steps).map(|k| path.curvature_at((k as f64 + 0.5) * h)).collect();
    let residual = |states: &[StateVec]| {
        let last = states.last().unwrap();
        nalgebra::Vector3::new(last[0] - xb[0], last[1] - xb[1], wrap_angle(last[2] - xb[2]))
    };
    let cols = steps + usize::from(flex);
    let mut states = rollout_dubins(model, xa, &u, h);
    for _ in 0..100 {
        let r = residual(&states);
        if r.amax() < 1e-12 {
            break;
        }
        // d(p_N)/d(u_j) = h² Σ_{i>j} (-sin θ_i, cos θ_i), d(θ_N)/d(u_j) = h
        let mut jac = DMatrix::zeros(3, cols);
        let (mut sx, mut sy) = (0.0, 0.0);
        for j in (0..steps).rev() {
            jac[(0, j)] = h * h * sx;
            jac[(1, j)] = h * h * sy;
            jac[(2, j)] = h;
            let th = states[j][2];
            sx -= th.sin();
            sy += th.cos();
        }
        if flex {
            // θ_i = θ_0 + h Σ_{j<i} u_j
            let (mut dx, mut dy, mut turn) = (0.0, 0.0, 0.0);
            for i in 0..steps {
                let th = states[i][2];
                dx += th.cos() - h * th.sin() * turn;
                dy += th.sin() + h * th.cos() * turn;
                turn += u[i];
            }
            jac[(0, steps)] = dx;
            jac[(1, steps)] = dy;
            jac[(2, steps)] = turn;
        }
        let mut jjt = &jac * jac.transpose();
        let reg = 1e-14 * (1.0 + jjt.trace());
        for i in 0..3 {
            jjt[(i, i)] += reg;
        }
        let y = jjt.cholesky()?.solve(&DVector::from_column_slice(r.as_slice()));
        let delta = jac.transpose() * y;
        u.iter_mut().zip(delta.iter()).for_each(|(uj, dj)| *uj -= dj);
        if flex {
            h -= delta[steps];
            if !(h > 0.0) {
                return None;
            }
        }
        states = rollout_dubins(model, xa, &u, h);
    }
    if terminal_error(model, states.last().unwrap(), xb) > STEER_TOLERANCE {
        return None;
    }
    let controls = u.into_iter().map(|v| DVector::from_element(1, v)).collect();
    Some(Trajectory::with_cost(states, controls, h, length))
}

/// Feedback gains `Kₖ` and value matrices `Sₖ`.
pub type GainsAndValues = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Backward Riccati recursion with terminal weight `Q`. Returns the gains
/// `Kₖ` (closed loop `Aₖ + Bₖ Kₖ`) and the value matrices `S₀ … S_N`.
pub fn riccati(
    a_seq: &[DMatrix<f64>],
    b_seq: &[DMatrix<f64>],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GainsAndValues, DynamicsError> {
    if a_seq.len() != b_seq.len() {
        return Err(DynamicsError::Dimension(format!(
            "{} A matrices but {} B matrices",
            a_seq.len(),
            b_seq.len()
        )));
    }
    let n = q.nrows();
    let m = r.nrows();
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(DynamicsError::Dimension("Q and R must be square".into()));
    }
    if symmetrize(r).cholesky().is_none() {
        return Err(DynamicsError::NotPositiveDefinite("R"));
    }
    let horizon = a_seq.len();
    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut values = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut s = q.clone();
    values[horizon] = s.clone();
    for k in (0..horizon).rev() {
        let (a, b) = (&a_seq[k], &b_seq[k]);
        if a.shape() != (n, n) || b.shape() != (n, m) {
            return Err(DynamicsError::Dimension(format!("step {k}: A must be {n}x{n}, B {n}x{m}")));
        }
        let bt_s = b.transpose() * &s;
        let gram = symmetrize(&(r + &bt_s * b));
        let chol = gram.cholesky().ok_or(DynamicsError::NotPositiveDefinite("R + BᵀSB"))?;
        let k_gain = -chol.solve(&(&bt_s * a));
        s = symmetrize(&(q + a.transpose() * &s * (a + b * &k_gain)));
        gains[k] = k_gain;
        values[k] = s.clone();
    }
    Ok((gains, values))
}

/// Finite-horizon LQR gains, applied as `u = ū + K x̂`.
pub fn lqr_gains(
    a_seq: &[DMatrix<f64>],
    b_seq: &[DMatrix<f64>],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>, DynamicsError> {
    riccati(a_seq, b_seq, q, r).map(|(gains, _)| gains)
}

/// Error dynamics along a nominal trajectory. Step `k` maps deviation `k` to
/// `k + 1`; `C` is that of the destination step.
pub fn linearize(
    model: &ModelSpec,
    states: &[StateVec],
    controls: &[DVector<f64>],
    dt: f64,
) -> Result<Vec<LtvStep>, DynamicsError> {
    if !controls.is_empty() && states.len() != controls.len() + 1 {
        return Err(DynamicsError::Dimension(format!(
            "{} states for {} controls",
            states.len(),
            controls.len()
        )));
    }
    let n = model.state_dim();
    let g = model.noise_input(dt);
    let c = DMatrix::identity(n, n);
    let steps = (0..controls.len())
        .map(|k| {
            let (a, b) = match model.kind {
                ModelKind::DoubleIntegrator2D => {
                    let mut a = DMatrix::identity(4, 4);
                    a[(0, 2)] = dt;
                    a[(1, 3)] = dt;
                    let mut b = DMatrix::zeros(4, 2);
                    b[(0, 0)] = 0.5 * dt * dt;
                    b[(1, 1)] = 0.5 * dt * dt;
                    b[(2, 0)] = dt;
                    b[(3, 1)] = dt;
                    (a, b)
                }
                ModelKind::Dubins => {
                    let th = states[k][2];
                    let mut a = DMatrix::identity(3, 3);
                    a[(0, 2)] = -th.sin() * dt;
                    a[(1, 2)] = th.cos() * dt;
                    let mut b = DMatrix::zeros(3, 1);
                    b[(2, 0)] = dt;
                    (a, b)
                }
            };
            LtvStep {
                a,
                b,
                g: g.clone(),
                c: c.clone(),
                dt,
            }
        })
        .collect();
    Ok(steps)
}

/// One Monte-Carlo rollout: true states and the filter's deviation estimates.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub states: Vec<StateVec>,
    pub estimates: Vec<DVector<f64>>,
}

/// Simulates the plant under `u = ū + K x̂` with a Kalman filter on the LTV
/// error model. Process noise enters the true plant through `G`; the
/// measurement noise matrix is looked up at the nominal position.
pub fn simulate_closed_loop<R: Rng + ?Sized>(
    model: &ModelSpec,
    traj: &Trajectory,
    scenario: &Scenario,
    initial_state: &StateVec,
    initial_estimate: &DVector<f64>,
    initial_error_cov: &CovMatrix,
    rng: &mut R,
) -> Result<Rollout, DynamicsError> {
    let fb = traj.feedback(model);
    let n = model.state_dim();
    let mut x = initial_state.clone();
    let mut xhat = initial_estimate.clone();
    let mut p_tilde = initial_error_cov.clone();
    let mut p_hat = DMatrix::zeros(n, n);
    let mut states = vec![x.clone()];
    let mut estimates = vec![xhat.clone()];
    for (k, step) in fb.steps.iter().enumerate() {
        let gain = &fb.gains[k];
        let du = gain * &xhat;
        let u = &traj.controls[k] + &du;
        let w = DVector::from_fn(step.g.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut next = model.step(&x, &u, step.dt) + &step.g * w;
        if model.kind == ModelKind::Dubins {
            next[2] = wrap_angle(next[2]);
        }
        let nominal_next = &traj.states[k + 1];
        let d = scenario.measurement_noise_at(&model.position(nominal_next));
        let kf = kalman_step(step, d, gain, &p_hat, &p_tilde)
            .map_err(|e| DynamicsError::InvalidModel(e.to_string()))?;
        let prior = &step.a * &xhat + &step.b * &du;
        let v = DVector::from_fn(d.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &step.c * model.state_error(&next, nominal_next) + d * v;
        xhat = &prior + &kf.l * (y - &step.c * &prior);
        p_hat = kf.p_hat;
        p_tilde = kf.p_tilde;
        x = next;
        states.push(x.clone());
        estimates.push(xhat.clone());
    }
    Ok(Rollout { states, estimates })
}
