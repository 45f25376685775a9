//! Averaged-system analysis.
//!
//! The time-varying torque authority `Γ^i(t) = ‖B^i‖² I − B^i B^iᵀ` is
//! averaged over a long horizon to obtain `Γ_av`. Replacing `Γ^i(t)` by
//! `Γ_av` in the linearized closed loops gives time-invariant averaged
//! systems, whose stability is checked by eigenvalues and by the quadratic
//! Lyapunov functions used to establish robustness to inertia uncertainty.
//!
//! The small parameter ε multiplies the whole right-hand side of the
//! averaged systems and is factored out here, so every matrix below is
//! ε-free.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::attmath::{Mat3, Vec3};
use crate::control::{OutputFeedbackGains, StateFeedbackGains};
use crate::dynamics::InertiaMatrix;
use crate::environment::Environment;
use crate::error::{AnalysisError, ModelError};
use crate::montecarlo::{random_inertia, rng_for, InequalityCheck};

/// Averaging checkpoints, in orbital periods.
pub const CHECKPOINT_ORBITS: [f64; 5] = [10.0, 25.0, 50.0, 100.0, 200.0];
/// Minimum averaging horizon, in orbital periods.
pub const MIN_HORIZON_ORBITS: f64 = 10.0;
/// Default quadrature step for the time average (s).
pub const DEFAULT_AVERAGE_DT: f64 = 10.0;
/// Largest relative change of det between the last two checkpoints that still
/// counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 0.01;
/// Below this determinant (T⁶) average controllability is reported as violated.
pub const SINGULAR_DET_THRESHOLD: f64 = 1e-30;
/// Relative margin for definiteness and Hurwitz tests.
pub const DEFINITENESS_MARGIN: f64 = 1e-12;

/// `Γ^i(t) = ‖B^i‖² I − B^i B^iᵀ`.
pub fn gamma_i(t: f64, env: &Environment) -> Mat3 {
    gamma_of(&env.field_inertial(t))
}

pub fn gamma_of(b: &Vec3) -> Mat3 {
    Mat3::identity() * b.norm_squared() - b * b.transpose()
}

/// Time average of `Γ^i` with the determinant recorded at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaAverage {
    pub matrix: Mat3,
    /// Averaging horizon (s).
    pub horizon: f64,
    /// `(T, det((1/T)∫₀ᵀ Γ^i))` at each checkpoint, ending with the horizon.
    pub history: Vec<(f64, f64)>,
}

impl GammaAverage {
    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let sym = (self.matrix + self.matrix.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2]]
    }

    /// Relative change of det between the last two checkpoints.
    pub fn last_relative_change(&self) -> f64 {
        match self.history.as_slice() {
            [.., (_, a), (_, b)] => {
                let scale = self.matrix.norm().powi(3);
                let floor = 1e-12 * scale;
                (a - b).abs() / a.abs().max(b.abs()).max(floor).max(f64::MIN_POSITIVE)
            }
            _ => 0.0,
        }
    }

    /// Positive definite, with determinant above [`SINGULAR_DET_THRESHOLD`].
    pub fn is_nonsingular(&self) -> bool {
        self.det() > SINGULAR_DET_THRESHOLD && self.eigenvalues()[0] > 0.0
    }
}

/// Trapezoidal time average of `Γ^i` over `[0, horizon]` with step at most
/// `dt`. Checkpoints are taken at [`CHECKPOINT_ORBITS`] below the horizon and
/// at the horizon itself; the result is rejected when det moved by more than
/// [`CONVERGENCE_TOLERANCE`] between the last two.
pub fn gamma_average(env: &Environment, horizon: f64, dt: f64) -> Result<GammaAverage, AnalysisError> {
    let period = env.orbit.period();
    let required = MIN_HORIZON_ORBITS * period;
    if !(horizon >= required * (1.0 - 1e-12)) {
        return Err(AnalysisError::HorizonTooShort { horizon, required });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::invalid("dt", "must be positive").into());
    }

    let mut breakpoints: Vec<f64> = CHECKPOINT_ORBITS
        .iter()
        .map(|k| k * period)
        .filter(|&t| t < horizon * (1.0 - 1e-12))
        .collect();
    breakpoints.push(horizon);

    let mut integral = Mat3::zeros();
    let mut history = Vec::with_capacity(breakpoints.len());
    let mut start = 0.0;
    let mut g_start = gamma_i(0.0, env);
    for &end in &breakpoints {
        let n = ((end - start) / dt).ceil().max(1.0) as usize;
        let h = (end - start) / n as f64;
        let mut acc = g_start * 0.5;
        for k in 1..n {
            acc += gamma_i(start + k as f64 * h, env);
        }
        let g_end = gamma_i(end, env);
        acc += g_end * 0.5;
        integral += acc * h;
        history.push((end, (integral / end).determinant()));
        start = end;
        g_start = g_end;
    }

    let matrix = integral / horizon;
    let average = GammaAverage {
        matrix: (matrix + matrix.transpose()) * 0.5,
        horizon,
        history,
    };
    let change = average.last_relative_change();
    if change > CONVERGENCE_TOLERANCE {
        return Err(AnalysisError::NotConverged {
            relative_change: change,
            average: Box::new(average),
        });
    }
    Ok(average)
}

/// Closed-form `det(Γ_av)` for a dipole aligned with the Earth's spin axis:
/// `(9 μ_m⁶ / (1024 R¹⁸)) [345 − 92 cos 2i + 3 cos 4i] sin² i`.
pub fn det_gamma_av_analytic(inclination: f64, radius: f64, moment: f64) -> f64 {
    let b0 = moment / radius.powi(3);
    let bracket = 345.0 - 92.0 * (2.0 * inclination).cos() + 3.0 * (4.0 * inclination).cos();
    9.0 / 1024.0 * b0.powi(6) * bracket * inclination.sin().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// 6 states: attitude and scaled rate.
    StateFeedback,
    /// 10 states: attitude, scaled rate, filter mismatch and scalar filter state.
    OutputFeedback,
}

/// Time-invariant averaged closed loop `ẇ = A_av w` (ε factored out).
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedSystem {
    pub kind: SystemKind,
    pub matrix: DMatrix<f64>,
}

impl AveragedSystem {
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        let mut ev: Vec<Complex<f64>> = self.matrix.clone().complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ev
    }

    /// Largest real part over the spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_hurwitz(&self) -> bool {
        let margin = DEFINITENESS_MARGIN * self.matrix.norm();
        self.spectral_abscissa() < -margin
    }
}

fn set_block(m: &mut DMatrix<f64>, row: usize, col: usize, block: &Mat3) {
    m.view_mut((row, col), (3, 3)).copy_from(block);
}

/// `[[0, ½I], [−k1 J⁻¹Γ_av, −k2 J⁻¹Γ_av]]`.
pub fn averaged_state_matrix(inertia: &InertiaMatrix, g: &StateFeedbackGains, gamma_av: &Mat3) -> AveragedSystem {
    let jg = inertia.inverse() * gamma_av;
    let mut a = DMatrix::zeros(6, 6);
    set_block(&mut a, 0, 3, &(Mat3::identity() * 0.5));
    set_block(&mut a, 3, 0, &(-jg * g.k1));
    set_block(&mut a, 3, 3, &(-jg * g.k2));
    AveragedSystem {
        kind: SystemKind::StateFeedback,
        matrix: a,
    }
}

/// Averaged output-feedback loop in the states `(w1, w2, w3, w4)`:
///
/// ```text
/// ẇ1 = ½ w2
/// ẇ2 = −J⁻¹Γ_av (k1 w1 + ½ k2 α λ w3)
/// ẇ3 = ½ w2 − α λ w3
/// ẇ4 = −α λ w4
/// ```
pub fn averaged_output_matrix(inertia: &InertiaMatrix, g: &OutputFeedbackGains, gamma_av: &Mat3) -> AveragedSystem {
    let jg = inertia.inverse() * gamma_av;
    let al = g.alpha * g.lambda;
    let half = Mat3::identity() * 0.5;
    let mut a = DMatrix::zeros(10, 10);
    set_block(&mut a, 0, 3, &half);
    set_block(&mut a, 3, 0, &(-jg * g.k1));
    set_block(&mut a, 3, 6, &(-jg * (0.5 * g.k2 * al)));
    set_block(&mut a, 6, 3, &half);
    set_block(&mut a, 6, 6, &(Mat3::identity() * -al));
    a[(9, 9)] = -al;
    AveragedSystem {
        kind: SystemKind::OutputFeedback,
        matrix: a,
    }
}

/// Quadratic Lyapunov certificate `V = wᵀPw` for an averaged system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCertificate {
    pub beta: f64,
    /// λ_min(P).
    pub p_min_eigenvalue: f64,
    /// λ_max(sym(P A_av)); `V̇ = 2 wᵀ P A_av w`.
    pub derivative_max_eigenvalue: f64,
    /// Guaranteed decay rate of V, `−2 λ_max(sym(PA)) / λ_max(P)`; only
    /// meaningful when feasible.
    pub decay_rate: f64,
    pub feasible: bool,
}

/// `61` logarithmically spaced values on `[1e-6, 1]`.
pub fn beta_grid() -> Vec<f64> {
    log_grid(1e-6, 1.0, 61)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    (ev.min(), ev.max())
}

/// Evaluates a given `P` against `A_av`.
pub fn evaluate_certificate(beta: f64, p: &DMatrix<f64>, a: &DMatrix<f64>) -> LyapunovCertificate {
    let (p_min, p_max) = symmetric_extremes(p);
    let pa = p * a;
    let (d_min, d_max) = symmetric_extremes(&pa);
    let p_scale = p_min.abs().max(p_max.abs());
    let d_scale = d_min.abs().max(d_max.abs());
    let feasible = beta > 0.0
        && p_min > DEFINITENESS_MARGIN * p_scale
        && d_max < -DEFINITENESS_MARGIN * d_scale;
    LyapunovCertificate {
        beta,
        p_min_eigenvalue: p_min,
        derivative_max_eigenvalue: d_max,
        decay_rate: -2.0 * d_max / p_max,
        feasible,
    }
}

/// `P = [[k1 Γ_av, βJ], [βJ, ½J]]`.
pub fn state_lyapunov_matrix(inertia: &InertiaMatrix, g: &StateFeedbackGains, gamma_av: &Mat3, beta: f64) -> DMatrix<f64> {
    let j = inertia.matrix();
    let mut p = DMatrix::zeros(6, 6);
    set_block(&mut p, 0, 0, &(gamma_av * g.k1));
    set_block(&mut p, 0, 3, &(j * beta));
    set_block(&mut p, 3, 0, &(j * beta));
    set_block(&mut p, 3, 3, &(j * 0.5));
    p
}

/// Matrix of `V_o = k1 w1ᵀΓw1 + ½ w2ᵀJw2 + ½ k2αλ w3ᵀΓw3 + ½ w4² + 2β w1ᵀJw2 − 4β w2ᵀJw3`.
pub fn output_lyapunov_matrix(inertia: &InertiaMatrix, g: &OutputFeedbackGains, gamma_av: &Mat3, beta: f64) -> DMatrix<f64> {
    let j = inertia.matrix();
    let mut p = DMatrix::zeros(10, 10);
    set_block(&mut p, 0, 0, &(gamma_av * g.k1));
    set_block(&mut p, 3, 3, &(j * 0.5));
    set_block(&mut p, 6, 6, &(gamma_av * (0.5 * g.k2 * g.alpha * g.lambda)));
    p[(9, 9)] = 0.5;
    set_block(&mut p, 0, 3, &(j * beta));
    set_block(&mut p, 3, 0, &(j * beta));
    set_block(&mut p, 3, 6, &(j * (-2.0 * beta)));
    set_block(&mut p, 6, 3, &(j * (-2.0 * beta)));
    p
}

fn require_positive_gamma(gamma_av: &Mat3) -> Result<(), AnalysisError> {
    let sym = (gamma_av + gamma_av.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    if ev.min() <= DEFINITENESS_MARGIN * ev.amax() || !ev.min().is_finite() {
        return Err(AnalysisError::SingularGamma {
            det: gamma_av.determinant(),
        });
    }
    Ok(())
}

fn best_certificate(candidates: impl Iterator<Item = LyapunovCertificate>) -> Option<LyapunovCertificate> {
    // feasible beats infeasible, then larger decay rate wins
    candidates.max_by(|a, b| {
        a.feasible
            .cmp(&b.feasible)
            .then(a.decay_rate.total_cmp(&b.decay_rate))
    })
}

/// Sweeps β over `betas` and returns the feasible certificate with the
/// largest guaranteed decay rate, or the least-bad infeasible one.
pub fn lyapunov_certificate_state(
    inertia: &InertiaMatrix,
    g: &StateFeedbackGains,
    gamma_av: &Mat3,
    betas: &[f64],
) -> Result<LyapunovCertificate, AnalysisError> {
    require_positive_gamma(gamma_av)?;
    let a = averaged_state_matrix(inertia, g, gamma_av).matrix;
    best_certificate(betas.iter().map(|&beta| {
        evaluate_certificate(beta, &state_lyapunov_matrix(inertia, g, gamma_av, beta), &a)
    }))
    .ok_or_else(|| ModelError::invalid("beta grid", "must not be empty").into())
}

/// Output-feedback counterpart built on `V_o`. The eigenvalue test on
/// [`averaged_output_matrix`] is the primary stability check; this quadratic
/// form is a supplementary certificate.
pub fn lyapunov_certificate_output(
    inertia: &InertiaMatrix,
    g: &OutputFeedbackGains,
    gamma_av: &Mat3,
    betas: &[f64],
) -> Result<LyapunovCertificate, AnalysisError> {
    require_positive_gamma(gamma_av)?;
    let a = averaged_output_matrix(inertia, g, gamma_av).matrix;
    best_certificate(betas.iter().map(|&beta| {
        evaluate_certificate(beta, &output_lyapunov_matrix(inertia, g, gamma_av, beta), &a)
    }))
    .ok_or_else(|| ModelError::invalid("beta grid", "must not be empty").into())
}

/// Gains of either law, for analyses that apply to both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawGains {
    State(StateFeedbackGains),
    Output(OutputFeedbackGains),
}

impl LawGains {
    pub fn averaged_system(&self, inertia: &InertiaMatrix, gamma_av: &Mat3) -> AveragedSystem {
        match self {
            LawGains::State(g) => averaged_state_matrix(inertia, g, gamma_av),
            LawGains::Output(g) => averaged_output_matrix(inertia, g, gamma_av),
        }
    }

    pub fn certificate(
        &self,
        inertia: &InertiaMatrix,
        gamma_av: &Mat3,
        betas: &[f64],
    ) -> Result<LyapunovCertificate, AnalysisError> {
        match self {
            LawGains::State(g) => lyapunov_certificate_state(inertia, g, gamma_av, betas),
            LawGains::Output(g) => lyapunov_certificate_output(inertia, g, gamma_av, betas),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustReport {
    pub samples: usize,
    pub hurwitz: usize,
    pub certified: usize,
    /// Largest spectral abscissa over all samples (closest to instability).
    pub worst_abscissa: f64,
    /// Smallest certified decay rate, if any sample was certified.
    pub worst_decay_rate: Option<f64>,
}

impl RobustReport {
    pub fn hurwitz_fraction(&self) -> f64 {
        self.hurwitz as f64 / self.samples.max(1) as f64
    }

    pub fn certified_fraction(&self) -> f64 {
        self.certified as f64 / self.samples.max(1) as f64
    }
}

/// Samples inertias with principal moments in `[j_min, j_max]` and checks
/// each averaged closed loop for Hurwitz stability and a Lyapunov certificate
/// on the standard β grid. Sample `i` uses the generator seeded by
/// `(seed, i)`, so the report does not depend on thread count.
pub fn robust_certificate_sweep(
    j_min: f64,
    j_max: f64,
    gains: &LawGains,
    gamma_av: &Mat3,
    n_samples: usize,
    seed: u64,
) -> Result<RobustReport, AnalysisError> {
    require_positive_gamma(gamma_av)?;
    let betas = beta_grid();
    let results: Vec<(f64, bool, Option<f64>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<_, AnalysisError> {
            let mut rng = rng_for(seed, i);
            let inertia = random_inertia(j_min, j_max, &mut rng, InequalityCheck::RequireBounds)?;
            let system = gains.averaged_system(&inertia, gamma_av);
            let cert = gains.certificate(&inertia, gamma_av, &betas)?;
            Ok((system.spectral_abscissa(), system.is_hurwitz(), cert.feasible.then_some(cert.decay_rate)))
        })
        .collect::<Result<_, _>>()?;

    Ok(RobustReport {
        samples: n_samples,
        hurwitz: results.iter().filter(|r| r.1).count(),
        certified: results.iter().filter(|r| r.2.is_some()).count(),
        worst_abscissa: results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
        worst_decay_rate: results.iter().filter_map(|r| r.2).reduce(f64::min),
    })
}
