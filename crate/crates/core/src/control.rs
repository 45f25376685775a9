//! Magnetorquer feedback laws.
//!
//! Both laws produce an intermediate vector `u` that is projected onto the
//! plane orthogonal to the measured field, `m_coils = B^b × u`, optionally
//! followed by per-axis saturation.

use crate::attmath::{kinematics_matrix_unchecked, Quaternion, Vec3};
use crate::dynamics::{ControlOutput, Controller, ControllerState};
use crate::error::ModelError;

fn check_positive(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(name, format!("must be positive, got {v}")))
    }
}

/// Gains of the attitude plus rate feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFeedbackGains {
    pub k1: f64,
    pub k2: f64,
    pub epsilon: f64,
}

impl StateFeedbackGains {
    pub fn new(k1: f64, k2: f64, epsilon: f64) -> Result<Self, ModelError> {
        let g = Self { k1, k2, epsilon };
        g.validate()?;
        Ok(g)
    }

    /// `k1 = 2e11`, `k2 = 3e11`, `ε = 1e-3`.
    pub fn reference() -> Self {
        Self {
            k1: 2e11,
            k2: 3e11,
            epsilon: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("k1", self.k1)?;
        check_positive("k2", self.k2)?;
        check_positive("epsilon", self.epsilon)
    }

    /// Same gains with k1 and k2 negated (destabilizing).
    pub fn sign_flipped(&self) -> Self {
        Self {
            k1: -self.k1,
            k2: -self.k2,
            ..*self
        }
    }
}

/// Gains of the attitude-only dynamic feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputFeedbackGains {
    pub k1: f64,
    pub k2: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl OutputFeedbackGains {
    pub fn new(k1: f64, k2: f64, epsilon: f64, alpha: f64, lambda: f64) -> Result<Self, ModelError> {
        let g = Self {
            k1,
            k2,
            epsilon,
            alpha,
            lambda,
        };
        g.validate()?;
        Ok(g)
    }

    /// `k1 = 1e11`, `k2 = 3e11`, `ε = 1e-3`, `α = 4e3`, `λ = 1`.
    pub fn reference() -> Self {
        Self {
            k1: 1e11,
            k2: 3e11,
            epsilon: 1e-3,
            alpha: 4e3,
            lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("k1", self.k1)?;
        check_positive("k2", self.k2)?;
        check_positive("epsilon", self.epsilon)?;
        check_positive("alpha", self.alpha)?;
        check_positive("lambda", self.lambda)
    }

    pub fn sign_flipped(&self) -> Self {
        Self {
            k1: -self.k1,
            k2: -self.k2,
            ..*self
        }
    }

    /// Controller state at the closed-loop equilibrium, `q̄ / (ελ)`.
    pub fn equilibrium_state(&self) -> ControllerState {
        ControllerState::new(0.0, 0.0, 0.0, 1.0 / (self.epsilon * self.lambda))
    }
}

/// Per-axis coil moment limit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SaturationConfig {
    /// Limit on each coil moment (A·m²).
    pub m_max: f64,
    pub enabled: bool,
}

impl SaturationConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn limit(m_max: f64) -> Result<Self, ModelError> {
        check_positive("m_max", m_max)?;
        Ok(Self { m_max, enabled: true })
    }
}

/// `m_coils = B^b × u`, always orthogonal to the field.
pub fn project_to_coils(u: &Vec3, b_body: &Vec3) -> Vec3 {
    b_body.cross(u)
}

/// `u = −(ε² k1 q_v + ε k2 ω)`.
pub fn state_feedback_u(q: &Quaternion, omega: &Vec3, g: &StateFeedbackGains) -> Vec3 {
    -(q.vector() * (g.epsilon * g.epsilon * g.k1) + omega * (g.epsilon * g.k2))
}

/// Returns `(u, δ̇)` with `δ̇ = α(q − ελδ)` and
/// `u = −ε²(k1 q_v + k2 α λ W(q)ᵀ (q − ελδ))`.
pub fn output_feedback_step(
    q: &Quaternion,
    delta: &ControllerState,
    g: &OutputFeedbackGains,
) -> (Vec3, ControllerState) {
    let mismatch = q.as_vector4() - delta * (g.epsilon * g.lambda);
    let w = kinematics_matrix_unchecked(q);
    let eps2 = g.epsilon * g.epsilon;
    let u = -(q.vector() * g.k1 + w.transpose() * mismatch * (g.k2 * g.alpha * g.lambda)) * eps2;
    (u, mismatch * g.alpha)
}

/// Componentwise clamp to `[−m_max, m_max]` when enabled. The result is in
/// general no longer orthogonal to the field.
pub fn saturate_moments(m: &Vec3, cfg: &SaturationConfig) -> Vec3 {
    if !cfg.enabled {
        return *m;
    }
    m.map(|c| c.clamp(-cfg.m_max, cfg.m_max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFeedback {
    pub gains: StateFeedbackGains,
    pub saturation: SaturationConfig,
}

impl StateFeedback {
    pub fn new(gains: StateFeedbackGains) -> Self {
        Self {
            gains,
            saturation: SaturationConfig::disabled(),
        }
    }
}

impl Controller for StateFeedback {
    fn control(&self, q: &Quaternion, omega: &Vec3, b_body: &Vec3, _: &ControllerState) -> ControlOutput {
        let u = state_feedback_u(q, omega, &self.gains);
        ControlOutput {
            m_coils: saturate_moments(&project_to_coils(&u, b_body), &self.saturation),
            u,
            internal_rate: ControllerState::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputFeedback {
    pub gains: OutputFeedbackGains,
    pub saturation: SaturationConfig,
    /// δ(0); zero unless configured.
    pub initial_delta: ControllerState,
}

impl OutputFeedback {
    pub fn new(gains: OutputFeedbackGains) -> Self {
        Self {
            gains,
            saturation: SaturationConfig::disabled(),
            initial_delta: ControllerState::zeros(),
        }
    }
}

impl Controller for OutputFeedback {
    fn initial_internal(&self) -> ControllerState {
        self.initial_delta
    }

    fn control(&self, q: &Quaternion, _: &Vec3, b_body: &Vec3, delta: &ControllerState) -> ControlOutput {
        let (u, internal_rate) = output_feedback_step(q, delta, &self.gains);
        ControlOutput {
            m_coils: saturate_moments(&project_to_coils(&u, b_body), &self.saturation),
            u,
            internal_rate,
        }
    }

    fn internal_rate_bound(&self) -> f64 {
        (self.gains.alpha * self.gains.epsilon * self.gains.lambda).abs()
    }
}

/// Either feedback law, selected at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackLaw {
    State(StateFeedback),
    Output(OutputFeedback),
}

impl FeedbackLaw {
    pub fn name(&self) -> &'static str {
        match self {
            FeedbackLaw::State(_) => "state",
            FeedbackLaw::Output(_) => "output",
        }
    }

    pub fn as_controller(&self) -> &dyn Controller {
        match self {
            FeedbackLaw::State(c) => c,
            FeedbackLaw::Output(c) => c,
        }
    }
}
