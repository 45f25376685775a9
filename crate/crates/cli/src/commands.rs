use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use magtorq::analysis::{
    beta_grid, det_gamma_av_analytic, gamma_average, GammaAverage, LawGains, LyapunovCertificate,
    SINGULAR_DET_THRESHOLD,
};
use magtorq::dynamics::{Controller, NoControl};
use magtorq::montecarlo::{run_campaign_with_traces, settling_metrics, CampaignReport, RunMetrics, SettlingMetrics};
use magtorq::{AnalysisError, DynamicsError, Environment, FeedbackLaw, SimulationTrace};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

pub const TRACE_HEADER: &str = "t,q1,q2,q3,q4,wx,wy,wz,mx,my,mz,ux,uy,uz,Bbx,Bby,Bbz";
pub const METRICS_HEADER: &str = "run_id,seed,settled,settling_time_s,final_qv_norm,final_w_norm,peak_mcoils";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Diverged(String),
    #[error("average controllability violated: det(Gamma_av) = {det:e} (threshold {SINGULAR_DET_THRESHOLD:e})")]
    Uncontrollable { det: f64 },
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Uncontrollable { .. } => 4,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Diverged { .. } => CliError::Diverged(e.to_string()),
            DynamicsError::Model(m) => CliError::Config(m.into()),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_csv(w: &mut impl Write, trace: &SimulationTrace) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for s in &trace.samples {
        let cols = std::iter::once(s.t)
            .chain(s.q.as_vector4().iter().copied())
            .chain(s.omega.iter().copied())
            .chain(s.m_coils.iter().copied())
            .chain(s.u.iter().copied())
            .chain(s.b_body.iter().copied());
        let row: Vec<String> = cols.map(sci).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let context = format!("cannot write {}", path.display());
    let file = File::create(path).map_err(io_err(context.clone()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(context))
}

fn summary_line(m: &SettlingMetrics) -> String {
    format!(
        "settled: {}; settling_time_s: {}; final_qv_norm: {:e}; final_w_norm: {:e}; peak_mcoils: {:e}",
        m.settled,
        m.settling_time.map_or_else(|| "-".to_string(), |t| t.to_string()),
        m.final_qv_norm,
        m.final_w_norm,
        m.peak_mcoils
    )
}

/// Runs one closed-loop simulation, writes its trace and prints the settling
/// summary.
pub fn simulate(cfg: &RunConfig, csv: &Path, out: &mut dyn Write) -> Result<SettlingMetrics, CliError> {
    let sim = cfg.simulation()?;
    let law = cfg.law()?;
    let controller: &dyn Controller = match &law {
        Some(l) => l.as_controller(),
        None => &NoControl,
    };
    let trace = sim.run(cfg.initial_state()?, controller)?;
    write_file(csv, |w| write_trace_csv(w, &trace))?;
    let metrics = settling_metrics(&trace, &cfg.thresholds).map_err(|e| CliError::Invalid(e.to_string()))?;
    writeln!(out, "{}", summary_line(&metrics)).map_err(io_err("stdout"))?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeReport {
    pub average: GammaAverage,
    pub converged: bool,
    /// Numeric determinant with the dipole forced onto the spin axis.
    pub det_aligned_numeric: f64,
    /// Closed form for the aligned dipole.
    pub det_analytic: f64,
    pub hurwitz: Option<bool>,
    pub certificate: Option<LyapunovCertificate>,
}

impl AnalyzeReport {
    pub fn det(&self) -> f64 {
        self.average.det()
    }

    /// Numeric det at the configured dipole over the aligned closed form.
    pub fn ratio(&self) -> f64 {
        self.det() / self.det_analytic
    }
}

fn averaged(env: &Environment, horizon: f64, dt: f64) -> Result<(GammaAverage, bool), CliError> {
    match gamma_average(env, horizon, dt) {
        Ok(avg) => Ok((avg, true)),
        Err(AnalysisError::NotConverged { average, .. }) => Ok((*average, false)),
        Err(e) => Err(CliError::Invalid(e.to_string())),
    }
}

fn law_gains(law: &FeedbackLaw) -> LawGains {
    match law {
        FeedbackLaw::State(c) => LawGains::State(c.gains),
        FeedbackLaw::Output(c) => LawGains::Output(c.gains),
    }
}

/// Prints the averaged-controllability and averaged-stability report.
pub fn analyze(cfg: &RunConfig, out: &mut dyn Write) -> Result<AnalyzeReport, CliError> {
    let env = cfg.environment()?;
    let inertia = cfg.inertia()?;
    let law = cfg.law()?;
    let period = env.orbit.period();
    let horizon = cfg.analysis_horizon_orbits * period;

    let (average, converged) = averaged(&env, horizon, cfg.analysis_dt)?;
    let mut aligned_env = env;
    aligned_env.dipole.coelevation = std::f64::consts::PI;
    let (aligned, _) = averaged(&aligned_env, horizon, cfg.analysis_dt)?;
    let det_analytic = det_gamma_av_analytic(env.orbit.inclination, env.orbit.radius, env.dipole.moment);

    let mut report = AnalyzeReport {
        average,
        converged,
        det_aligned_numeric: aligned.det(),
        det_analytic,
        hurwitz: None,
        certificate: None,
    };

    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err("stdout"));
    let m = &report.average.matrix;
    w(out, format!("scenario: {}", cfg.scenario))?;
    w(out, format!("Gamma_av over {} orbits (step {} s):", cfg.analysis_horizon_orbits, cfg.analysis_dt))?;
    for r in 0..3 {
        w(out, format!("  [{:+.6e} {:+.6e} {:+.6e}]", m[(r, 0)], m[(r, 1)], m[(r, 2)]))?;
    }
    let ev = report.average.eigenvalues();
    w(out, format!("eigenvalues: {:.6e} {:.6e} {:.6e}", ev[0], ev[1], ev[2]))?;
    w(out, format!("det(Gamma_av) = {:.6e}", report.det()))?;
    w(out, "convergence history:".to_string())?;
    for (t, det) in &report.average.history {
        w(out, format!("  {:>6.1} orbits  det = {det:.6e}", t / period))?;
    }
    if !converged {
        w(
            out,
            format!(
                "warning: det changed by {:.3e} between the last two checkpoints",
                report.average.last_relative_change()
            ),
        )?;
    }
    w(out, format!("det numeric, coelevation 180 deg = {:.6e}", report.det_aligned_numeric))?;
    w(out, format!("det analytic, coelevation 180 deg = {:.6e}", report.det_analytic))?;
    w(out, format!("numeric/analytic ratio = {:.4}", report.ratio()))?;

    if !report.average.is_nonsingular() {
        w(out, "average controllability: violated".to_string())?;
        return Err(CliError::Uncontrollable { det: report.det() });
    }
    w(out, "average controllability: satisfied".to_string())?;

    let Some(law) = law else {
        w(out, "controller: none".to_string())?;
        return Ok(report);
    };
    let gains = law_gains(&law);
    let system = gains.averaged_system(&inertia, &report.average.matrix);
    let n = system.matrix.nrows();
    w(out, format!("averaged system ({} feedback, {n}x{n}) eigenvalues (per unit epsilon):", law.name()))?;
    for z in system.eigenvalues() {
        w(out, format!("  {:+.6e} {:+.6e}i", z.re, z.im))?;
    }
    let cert = gains
        .certificate(&inertia, &report.average.matrix, &beta_grid())
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    report.hurwitz = Some(system.is_hurwitz());
    report.certificate = Some(cert);
    w(
        out,
        format!(
            "Hurwitz: {}; certificate: {}",
            if system.is_hurwitz() { "yes" } else { "no" },
            if cert.feasible { "feasible" } else { "infeasible" }
        ),
    )?;
    if cert.feasible {
        w(out, format!("  beta = {:.4e}, decay rate = {:.4e} (per unit epsilon)", cert.beta, cert.decay_rate))?;
    }
    Ok(report)
}

fn metrics_row(m: &RunMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        m.run_id.map_or_else(|| "nominal".to_string(), |id| id.to_string()),
        m.seed,
        m.settled,
        m.settling_time.map_or_else(String::new, sci),
        sci(m.final_qv_norm),
        sci(m.final_w_norm),
        sci(m.peak_mcoils)
    )
}

pub fn write_metrics_csv(w: &mut impl Write, runs: &[RunMetrics]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in runs {
        writeln!(w, "{}", metrics_row(m))?;
    }
    Ok(())
}

pub fn summary_text(cfg: &RunConfig, report: &CampaignReport) -> String {
    let s = &report.summary;
    let mut lines = vec![
        format!("scenario: {}", cfg.scenario),
        format!("law: {}", cfg.law().ok().flatten().map_or("none", |l| l.name())),
        format!("settled {}/{}", s.settled, s.n_runs),
        format!("diverged {}", s.diverged),
    ];
    match s.settling_envelope {
        Some((lo, med, hi)) => lines.push(format!("settling time (s): min {lo} median {med} max {hi}")),
        None => lines.push("settling time (s): none settled".to_string()),
    }
    if let Some(nominal) = &report.nominal {
        lines.push(format!(
            "nominal: {}",
            summary_line(&SettlingMetrics {
                settled: nominal.settled,
                settling_time: nominal.settling_time,
                final_qv_norm: nominal.final_qv_norm,
                final_w_norm: nominal.final_w_norm,
                peak_mcoils: nominal.peak_mcoils,
            })
        ));
        if let (Some((_, _, hi)), Some(t)) = (s.settling_envelope, s.nominal_settling_time) {
            lines.push(format!("max perturbed settling >= nominal: {}", hi >= t));
        }
    }
    lines.join("\n") + "\n"
}

/// Runs the configured campaign and writes `metrics.csv`, `summary.txt` and
/// the effective `config.cfg` into `dir`; with `traces`, also one CSV per run
/// under `dir/traces`.
pub fn montecarlo(
    cfg: &RunConfig,
    dir: &Path,
    jobs: usize,
    traces: bool,
    out: &mut dyn Write,
) -> Result<CampaignReport, CliError> {
    let campaign = cfg
        .campaign_config()?
        .ok_or_else(|| CliError::Invalid("configuration has no campaign section".to_string()))?;
    let trace_dir = dir.join("traces");
    fs::create_dir_all(if traces { &trace_dir } else { dir })
        .map_err(io_err(format!("cannot create {}", dir.display())))?;

    let mut trace_error: Option<CliError> = None;
    let sink = |m: &RunMetrics, trace: &SimulationTrace| {
        if trace_error.is_some() {
            return;
        }
        let name = m.run_id.map_or_else(|| "nominal.csv".to_string(), |id| format!("run_{id:05}.csv"));
        if let Err(e) = write_file(&trace_dir.join(name), |w| write_trace_csv(w, trace)) {
            trace_error = Some(e);
        }
    };
    let report = run_campaign_with_traces(&campaign, jobs, traces.then_some(sink))
        .map_err(|e| CliError::Config(e.into()))?;
    if let Some(e) = trace_error {
        return Err(e);
    }

    write_file(&dir.join("metrics.csv"), |w| write_metrics_csv(w, &report.runs))?;
    let summary = summary_text(cfg, &report);
    write_file(&dir.join("summary.txt"), |w| w.write_all(summary.as_bytes()))?;
    write_file(&dir.join("config.cfg"), |w| w.write_all(cfg.to_config_string().as_bytes()))?;
    out.write_all(summary.as_bytes()).map_err(io_err("stdout"))?;
    Ok(report)
}
