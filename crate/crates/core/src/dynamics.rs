//! Rigid-body attitude dynamics under magnetorquer torque and a fixed-step
//! RK4 integrator that co-integrates controller internal state.

use nalgebra::{SymmetricEigen, Vector4};

use crate::attmath::{attitude_matrix_unchecked, kinematics_matrix_unchecked, Mat3, Quaternion, Vec3};
use crate::environment::Environment;
use crate::error::{DynamicsError, ModelError};

/// Body rates above this magnitude (rad/s) abort a run as diverged.
pub const MAX_BODY_RATE: f64 = 10.0;

/// Upper bound on `rate * h` for controller internal dynamics, where `rate` is
/// the fastest internal decay rate and `h` the RK4 sub-step.
pub const MAX_INTERNAL_STEP_PRODUCT: f64 = 0.5;

/// Symmetric positive-definite inertia matrix (kg·m²) whose principal moments
/// satisfy the triangular inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaMatrix {
    matrix: Mat3,
    inverse: Mat3,
}

impl InertiaMatrix {
    pub fn new(matrix: Mat3) -> Result<Self, ModelError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid("inertia", "entries must be finite"));
        }
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        let asym = (matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(ModelError::InertiaNotSymmetric(asym));
        }
        let moments = principal_moments(&matrix);
        if moments[0] <= 1e-12 * scale {
            return Err(ModelError::InertiaNotPositiveDefinite(moments[0]));
        }
        if !satisfies_triangular(&moments) {
            return Err(ModelError::TriangularInequality(moments));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or(ModelError::InertiaNotPositiveDefinite(moments[0]))?;
        Ok(Self { matrix, inverse })
    }

    pub fn diagonal(j1: f64, j2: f64, j3: f64) -> Result<Self, ModelError> {
        Self::new(Mat3::from_diagonal(&Vec3::new(j1, j2, j3)))
    }

    /// The reference spacecraft, `diag(27, 17, 25)` kg·m².
    pub fn reference() -> Self {
        Self::diagonal(27.0, 17.0, 25.0).expect("reference inertia is valid")
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    /// Principal moments in ascending order.
    pub fn principal_moments(&self) -> [f64; 3] {
        principal_moments(&self.matrix)
    }
}

fn principal_moments(m: &Mat3) -> [f64; 3] {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    [ev[0], ev[1], ev[2]]
}

/// Each principal moment is at most the sum of the other two.
pub fn satisfies_triangular(moments: &[f64; 3]) -> bool {
    let [a, b, c] = *moments;
    let slack = 1e-12 * (a.abs() + b.abs() + c.abs());
    a <= b + c + slack && b <= a + c + slack && c <= a + b + slack
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacecraftState {
    pub q: Quaternion,
    /// Body rate relative to the inertial frame, resolved in body axes (rad/s).
    pub omega: Vec3,
}

impl SpacecraftState {
    pub fn new(q: Quaternion, omega: Vec3) -> Self {
        Self { q, omega }
    }

    pub fn at_rest() -> Self {
        Self::new(Quaternion::IDENTITY, Vec3::zeros())
    }

    /// Initial condition of the reference scenario: target attitude with a
    /// high tumbling rate.
    pub fn reference_initial() -> Self {
        Self::new(Quaternion::IDENTITY, Vec3::new(0.02, 0.02, -0.03))
    }
}

/// Controller internal state. Static laws leave it untouched.
pub type ControllerState = Vector4<f64>;

/// Plant state plus the controller state integrated alongside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopState {
    pub craft: SpacecraftState,
    pub internal: ControllerState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Commanded coil magnetic moments (A·m²).
    pub m_coils: Vec3,
    /// Intermediate control vector before projection onto the coils.
    pub u: Vec3,
    /// Time derivative of the controller internal state.
    pub internal_rate: ControllerState,
}

/// A feedback law evaluated at every integrator stage.
pub trait Controller: Sync {
    fn initial_internal(&self) -> ControllerState {
        ControllerState::zeros()
    }

    fn control(
        &self,
        q: &Quaternion,
        omega: &Vec3,
        b_body: &Vec3,
        internal: &ControllerState,
    ) -> ControlOutput;

    /// Fastest decay rate (1/s) of the controller internal dynamics, used to
    /// choose the RK4 sub-step. Zero for static laws.
    fn internal_rate_bound(&self) -> f64 {
        0.0
    }
}

/// Coils switched off.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoControl;

impl Controller for NoControl {
    fn control(&self, _: &Quaternion, _: &Vec3, _: &Vec3, _: &ControllerState) -> ControlOutput {
        ControlOutput {
            m_coils: Vec3::zeros(),
            u: Vec3::zeros(),
            internal_rate: ControllerState::zeros(),
        }
    }
}

/// `T = m_coils × B^b`.
pub fn coil_torque(m_coils: &Vec3, b_body: &Vec3) -> Vec3 {
    m_coils.cross(b_body)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub q_dot: Vector4<f64>,
    pub omega_dot: Vec3,
}

/// `q̇ = W(q) ω`, `ω̇ = J⁻¹(−ω × Jω + m_coils × B^b(q, t))`.
pub fn dynamics_rhs(
    state: &SpacecraftState,
    m_coils: &Vec3,
    t: f64,
    inertia: &InertiaMatrix,
    env: &Environment,
) -> StateDerivative {
    let b_body = attitude_matrix_unchecked(&state.q) * env.field_inertial(t);
    rhs_with_field(state, m_coils, &b_body, inertia)
}

fn rhs_with_field(
    state: &SpacecraftState,
    m_coils: &Vec3,
    b_body: &Vec3,
    inertia: &InertiaMatrix,
) -> StateDerivative {
    let omega = state.omega;
    let h = inertia.matrix() * omega;
    let torque = coil_torque(m_coils, b_body);
    debug_assert!(
        !torque.dot(b_body).is_finite()
            || torque.dot(b_body).abs() <= 1e-12 * torque.norm() * b_body.norm() + f64::MIN_POSITIVE,
        "magnetic torque must be perpendicular to the field"
    );
    StateDerivative {
        q_dot: kinematics_matrix_unchecked(&state.q) * omega,
        omega_dot: inertia.inverse() * (torque - omega.cross(&h)),
    }
}

#[derive(Debug, Clone, Copy)]
struct ClosedLoopDerivative {
    plant: StateDerivative,
    internal: ControllerState,
}

fn closed_loop_rhs(
    x: &ClosedLoopState,
    t: f64,
    controller: &dyn Controller,
    inertia: &InertiaMatrix,
    env: &Environment,
) -> ClosedLoopDerivative {
    let b_body = attitude_matrix_unchecked(&x.craft.q) * env.field_inertial(t);
    let out = controller.control(&x.craft.q, &x.craft.omega, &b_body, &x.internal);
    ClosedLoopDerivative {
        plant: rhs_with_field(&x.craft, &out.m_coils, &b_body, inertia),
        internal: out.internal_rate,
    }
}

fn advance(x: &ClosedLoopState, d: &ClosedLoopDerivative, h: f64) -> ClosedLoopState {
    ClosedLoopState {
        craft: SpacecraftState {
            q: Quaternion::from_vector4(x.craft.q.as_vector4() + d.plant.q_dot * h),
            omega: x.craft.omega + d.plant.omega_dot * h,
        },
        internal: x.internal + d.internal * h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: ClosedLoopState,
    /// `|‖q‖ − 1|` after the RK4 update and before renormalization.
    pub quaternion_drift: f64,
}

/// One classical RK4 step of the closed loop, controller evaluated at every
/// stage, followed by quaternion renormalization.
pub fn rk4_step(
    x: &ClosedLoopState,
    t: f64,
    dt: f64,
    controller: &dyn Controller,
    inertia: &InertiaMatrix,
    env: &Environment,
) -> Result<StepOutcome, DynamicsError> {
    if !(dt > 0.0) {
        return Err(ModelError::invalid("dt", "must be positive").into());
    }
    let half = 0.5 * dt;
    let k1 = closed_loop_rhs(x, t, controller, inertia, env);
    let k2 = closed_loop_rhs(&advance(x, &k1, half), t + half, controller, inertia, env);
    let k3 = closed_loop_rhs(&advance(x, &k2, half), t + half, controller, inertia, env);
    let k4 = closed_loop_rhs(&advance(x, &k3, dt), t + dt, controller, inertia, env);

    let w = dt / 6.0;
    let q = x.craft.q.as_vector4()
        + (k1.plant.q_dot + (k2.plant.q_dot + k3.plant.q_dot) * 2.0 + k4.plant.q_dot) * w;
    let omega = x.craft.omega
        + (k1.plant.omega_dot + (k2.plant.omega_dot + k3.plant.omega_dot) * 2.0 + k4.plant.omega_dot)
            * w;
    let internal =
        x.internal + (k1.internal + (k2.internal + k3.internal) * 2.0 + k4.internal) * w;

    let t_end = t + dt;
    let mut q = Quaternion::from_vector4(q);
    if !q.is_finite() || omega.iter().any(|v| !v.is_finite()) || internal.iter().any(|v| !v.is_finite())
    {
        return Err(DynamicsError::Diverged {
            t: t_end,
            reason: "non-finite state".into(),
        });
    }
    if omega.norm() > MAX_BODY_RATE {
        return Err(DynamicsError::Diverged {
            t: t_end,
            reason: format!("body rate {:.3} rad/s exceeds {MAX_BODY_RATE}", omega.norm()),
        });
    }
    let norm = q.renormalize().map_err(|e| DynamicsError::Diverged {
        t: t_end,
        reason: e.to_string(),
    })?;
    Ok(StepOutcome {
        state: ClosedLoopState {
            craft: SpacecraftState { q, omega },
            internal,
        },
        quaternion_drift: (norm - 1.0).abs(),
    })
}

/// One sampled point of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub q: Quaternion,
    pub omega: Vec3,
    pub m_coils: Vec3,
    pub u: Vec3,
    pub b_body: Vec3,
    pub internal: ControllerState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub samples: Vec<TraceSample>,
    /// Largest pre-renormalization quaternion drift over all steps.
    pub max_quaternion_drift: f64,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }
}

/// Fixed-step closed-loop simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulation {
    pub inertia: InertiaMatrix,
    pub env: Environment,
    /// Output step (s). Each step may be split into equal RK4 sub-steps when
    /// the controller carries fast internal dynamics.
    pub dt: f64,
    pub duration: f64,
    /// Record every n-th step.
    pub sample_every: usize,
}

impl Simulation {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ModelError::invalid("dt", "must be positive"));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(ModelError::invalid("duration", "must be positive"));
        }
        if self.sample_every == 0 {
            return Err(ModelError::invalid("sample_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of output steps; the final time is `steps() * dt ≥ duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Number of RK4 sub-steps per output step for the given controller.
    pub fn substeps(&self, controller: &dyn Controller) -> usize {
        let product = controller.internal_rate_bound() * self.dt;
        ((product / MAX_INTERNAL_STEP_PRODUCT).ceil() as usize).max(1)
    }

    pub fn run(
        &self,
        initial: SpacecraftState,
        controller: &dyn Controller,
    ) -> Result<SimulationTrace, DynamicsError> {
        let x0 = ClosedLoopState {
            craft: initial,
            internal: controller.initial_internal(),
        };
        self.run_from(x0, controller)
    }

    pub fn run_from(
        &self,
        initial: ClosedLoopState,
        controller: &dyn Controller,
    ) -> Result<SimulationTrace, DynamicsError> {
        self.validate()?;
        initial.craft.q.check_unit().map_err(ModelError::from)?;

        let steps = self.steps();
        let substeps = self.substeps(controller);
        let h = self.dt / substeps as f64;
        let mut trace = SimulationTrace {
            samples: Vec::with_capacity(steps / self.sample_every + 1),
            max_quaternion_drift: 0.0,
        };
        let mut x = initial;
        trace.samples.push(self.sample(0.0, &x, controller));
        for k in 0..steps {
            let t0 = k as f64 * self.dt;
            for s in 0..substeps {
                let t = t0 + s as f64 * h;
                let outcome = rk4_step(&x, t, h, controller, &self.inertia, &self.env)?;
                trace.max_quaternion_drift = trace.max_quaternion_drift.max(outcome.quaternion_drift);
                x = outcome.state;
            }
            if (k + 1) % self.sample_every == 0 {
                let t = (k + 1) as f64 * self.dt;
                trace.samples.push(self.sample(t, &x, controller));
            }
        }
        Ok(trace)
    }

    fn sample(&self, t: f64, x: &ClosedLoopState, controller: &dyn Controller) -> TraceSample {
        let b_body = self.env.field_body(&x.craft.q, t);
        let out = controller.control(&x.craft.q, &x.craft.omega, &b_body, &x.internal);
        TraceSample {
            t,
            q: x.craft.q,
            omega: x.craft.omega,
            m_coils: out.m_coils,
            u: out.u,
            b_body,
            internal: x.internal,
        }
    }
}

/// Convenience wrapper around [`Simulation::run`].
pub fn simulate(
    initial: SpacecraftState,
    controller: &dyn Controller,
    duration: f64,
    dt: f64,
    inertia: &InertiaMatrix,
    env: &Environment,
    sample_every: usize,
) -> Result<SimulationTrace, DynamicsError> {
    Simulation {
        inertia: *inertia,
        env: *env,
        dt,
        duration,
        sample_every,
    }
    .run(initial, controller)
}
