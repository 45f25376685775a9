//! Run configuration: flat `section.key = value` lines.
//!
//! Blank lines and `#` comments are ignored. Angles carry their unit in the
//! key (`*_deg` or `*_rad`); each angle accepts either suffix, but not both.
//! Keys absent from the file take the reference-scenario defaults, and any key
//! can be overridden from the environment as `MAGTORQ_<SECTION>__<KEY>`, e.g.
//! `MAGTORQ_ORBIT__INCLINATION_DEG=60`. Unknown keys are errors.
//!
//! Campaign runs derive the generator seed of run `i` from `campaign.seed`
//! with a SplitMix64 step (see `magtorq::montecarlo::derive_seed`), so metrics
//! do not depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use magtorq::attmath::attitude_matrix;
use magtorq::dynamics::ControllerState;
use magtorq::environment::{deg_per_day_to_rad_per_s, DipoleParams, OrbitParams};
use magtorq::montecarlo::{CampaignConfig, InequalityCheck, SettlingThresholds};
use magtorq::{
    Environment, FeedbackLaw, InertiaMatrix, Mat3, ModelError, OutputFeedback, OutputFeedbackGains, Quaternion,
    SaturationConfig, Simulation, SpacecraftState, StateFeedback, StateFeedbackGains, Vec3,
};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MAGTORQ_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given more than once")]
    Duplicate(String),
    #[error("keys `{0}` and `{1}` are alternatives; give only one")]
    Conflict(String, String),
    #[error("key `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Each entry lists the keys that set one quantity; alternatives differ only
/// in unit or representation.
const SLOTS: &[&[&str]] = &[
    &["scenario.name"],
    &["orbit.altitude_m", "orbit.radius_m"],
    &["orbit.inclination_deg", "orbit.inclination_rad"],
    &["orbit.raan_deg", "orbit.raan_rad"],
    &["orbit.initial_phase_rad", "orbit.initial_phase_deg"],
    &["dipole.moment"],
    &["dipole.coelevation_deg", "dipole.coelevation_rad"],
    &["dipole.initial_ra_rad", "dipole.initial_ra_deg"],
    &["dipole.earth_rate_deg_per_day"],
    &["spacecraft.principal_moments", "spacecraft.inertia_matrix"],
    &["spacecraft.principal_axes_quaternion"],
    &["spacecraft.initial_quaternion"],
    &["spacecraft.initial_rate"],
    &["controller.law"],
    &["controller.k1"],
    &["controller.k2"],
    &["controller.epsilon"],
    &["controller.alpha"],
    &["controller.lambda"],
    &["controller.m_max"],
    &["controller.initial_delta"],
    &["integration.duration_s", "integration.duration_orbits"],
    &["integration.dt_s"],
    &["integration.sample_every"],
    &["settling.attitude"],
    &["settling.rate"],
    &["analysis.horizon_orbits"],
    &["analysis.dt_s"],
    &["campaign.n_runs"],
    &["campaign.seed"],
    &["campaign.j_min"],
    &["campaign.j_max"],
    &["campaign.per_sample_check"],
    &["campaign.include_nominal"],
];

fn slot_of(key: &str) -> Option<&'static [&'static str]> {
    SLOTS.iter().copied().find(|s| s.contains(&key))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Deg(f64),
    Rad(f64),
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Deg(d) => d.to_radians(),
            Angle::Rad(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrbitSize {
    /// Above the mean Earth radius (m).
    Altitude(f64),
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InertiaSpec {
    /// Principal moments, optionally rotated: `J = A(q)ᵀ diag(j) A(q)`.
    Principal { moments: [f64; 3], axes: Option<[f64; 4]> },
    /// Upper triangle `j11, j12, j13, j22, j23, j33`.
    Full([f64; 6]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    State,
    Output,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Duration {
    Seconds(f64),
    Orbits(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSection {
    pub law: LawKind,
    pub k1: f64,
    pub k2: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub m_max: Option<f64>,
    pub initial_delta: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignSection {
    pub n_runs: usize,
    pub seed: u64,
    pub j_min: f64,
    pub j_max: f64,
    pub per_sample_check: bool,
    pub include_nominal: bool,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            n_runs: 200,
            seed: 1,
            j_min: 17.0,
            j_max: 27.0,
            per_sample_check: false,
            include_nominal: true,
        }
    }
}

/// Fully resolved configuration. [`Default`] is the reference scenario with
/// the attitude plus rate feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub orbit_size: OrbitSize,
    pub inclination: Angle,
    pub raan: Angle,
    pub initial_phase: Angle,
    pub dipole_moment: f64,
    pub coelevation: Angle,
    pub initial_ra: Angle,
    pub earth_rate_deg_per_day: f64,
    pub inertia: InertiaSpec,
    pub initial_quaternion: [f64; 4],
    pub initial_rate: [f64; 3],
    pub controller: ControllerSection,
    pub duration: Duration,
    pub dt: f64,
    pub sample_every: usize,
    pub thresholds: SettlingThresholds,
    pub analysis_horizon_orbits: f64,
    pub analysis_dt: f64,
    pub campaign: Option<CampaignSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "reference".to_string(),
            orbit_size: OrbitSize::Altitude(450_000.0),
            inclination: Angle::Deg(87.0),
            raan: Angle::Deg(0.0),
            initial_phase: Angle::Rad(0.94),
            dipole_moment: 7.746e15,
            coelevation: Angle::Deg(170.0),
            initial_ra: Angle::Rad(4.54),
            earth_rate_deg_per_day: 360.99,
            inertia: InertiaSpec::Principal {
                moments: [27.0, 17.0, 25.0],
                axes: None,
            },
            initial_quaternion: [0.0, 0.0, 0.0, 1.0],
            initial_rate: [0.02, 0.02, -0.03],
            controller: controller_defaults(LawKind::State),
            duration: Duration::Orbits(15.0),
            dt: 1.0,
            sample_every: 1,
            thresholds: SettlingThresholds::default(),
            analysis_horizon_orbits: 200.0,
            analysis_dt: 10.0,
            campaign: None,
        }
    }
}

fn controller_defaults(law: LawKind) -> ControllerSection {
    let o = OutputFeedbackGains::reference();
    let k1 = match law {
        LawKind::Output => o.k1,
        _ => StateFeedbackGains::reference().k1,
    };
    ControllerSection {
        law,
        k1,
        k2: o.k2,
        epsilon: o.epsilon,
        alpha: o.alpha,
        lambda: o.lambda,
        m_max: None,
        initial_delta: [0.0; 4],
    }
}

/// Raw `key → value` entries after overrides, before typing.
#[derive(Debug, Default, Clone)]
struct Entries(BTreeMap<String, String>);

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: format!("expected `section.key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !key.contains('.') {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    reason: format!("key `{key}` has no section"),
                });
            }
            if slot_of(key).is_none() {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
        }
        Ok(Self(map))
    }

    /// Replaces whatever currently sets the same quantity.
    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let slot = slot_of(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        for alt in slot {
            self.0.remove(*alt);
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// The key and value given for a slot, if any.
    fn slot(&self, slot: &'static [&'static str]) -> Result<Option<(&'static str, &str)>, ConfigError> {
        let mut found: Option<(&'static str, &str)> = None;
        for key in slot {
            if let Some(v) = self.0.get(*key) {
                if let Some((prev, _)) = found {
                    return Err(ConfigError::Conflict(prev.to_string(), key.to_string()));
                }
                found = Some((key, v.as_str()));
            }
        }
        Ok(found)
    }

    fn get(&self, key: &'static str) -> Result<Option<&str>, ConfigError> {
        Ok(self.slot(slot_of(key).expect("known key"))?.map(|(_, v)| v))
    }

    fn f64(&self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        self.get(key)?.map_or(Ok(default), |v| parse_f64(key, v))
    }

    fn list<const N: usize>(&self, key: &'static str, default: [f64; N]) -> Result<[f64; N], ConfigError> {
        self.get(key)?.map_or(Ok(default), |v| parse_list(key, v))
    }

    fn int<T: std::str::FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError> {
        match self.get(key)? {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(key, format!("`{v}` is not a non-negative integer"))),
        }
    }

    fn bool(&self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key)? {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(bad(key, format!("`{v}` is not `true` or `false`"))),
        }
    }

    fn angle(&self, deg_or_rad: &'static str, default: Angle) -> Result<Angle, ConfigError> {
        match self.slot(slot_of(deg_or_rad).expect("known key"))? {
            None => Ok(default),
            Some((key, v)) => {
                let x = parse_f64(key, v)?;
                Ok(if key.ends_with("_deg") { Angle::Deg(x) } else { Angle::Rad(x) })
            }
        }
    }

    fn has_section(&self, section: &str) -> bool {
        self.0.keys().any(|k| k.split('.').next() == Some(section))
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| bad(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(x)
}

fn parse_list<const N: usize>(key: &str, v: &str) -> Result<[f64; N], ConfigError> {
    let items: Vec<&str> = v.split(',').map(str::trim).collect();
    if items.len() != N {
        return Err(bad(key, format!("expected {N} comma-separated numbers, got {}", items.len())));
    }
    let mut out = [0.0; N];
    for (o, s) in out.iter_mut().zip(items) {
        *o = parse_f64(key, s)?;
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_with_env(&text, std::env::vars())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_env(text, std::iter::empty())
    }

    /// Parses `text`, then applies `MAGTORQ_*` variables from `vars`; other
    /// variables are ignored.
    pub fn parse_with_env<I>(text: &str, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut entries = Entries::parse(text)?;
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (env_key(rest), v)))
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            entries.set(&key, &value)?;
        }
        let cfg = Self::from_entries(&entries)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        let d = Self::default();

        let orbit_size = match e.slot(slot_of("orbit.altitude_m").expect("known key"))? {
            None => d.orbit_size,
            Some(("orbit.radius_m", v)) => OrbitSize::Radius(parse_f64("orbit.radius_m", v)?),
            Some((k, v)) => OrbitSize::Altitude(parse_f64(k, v)?),
        };

        let axes_key = "spacecraft.principal_axes_quaternion";
        let axes = e.get(axes_key)?.map(|v| parse_list(axes_key, v)).transpose()?;
        let inertia = match e.slot(slot_of("spacecraft.principal_moments").expect("known key"))? {
            Some(("spacecraft.inertia_matrix", v)) => {
                if axes.is_some() {
                    return Err(ConfigError::Conflict(
                        "spacecraft.inertia_matrix".into(),
                        "spacecraft.principal_axes_quaternion".into(),
                    ));
                }
                InertiaSpec::Full(parse_list("spacecraft.inertia_matrix", v)?)
            }
            Some((k, v)) => InertiaSpec::Principal {
                moments: parse_list(k, v)?,
                axes,
            },
            None => InertiaSpec::Principal {
                moments: [27.0, 17.0, 25.0],
                axes,
            },
        };

        let law = match e.get("controller.law")? {
            None | Some("state") => LawKind::State,
            Some("output") => LawKind::Output,
            Some("none") => LawKind::None,
            Some(v) => return Err(bad("controller.law", format!("`{v}` is not one of state, output, none"))),
        };
        let cd = controller_defaults(law);
        let m_max = match e.get("controller.m_max")? {
            None | Some("off") => None,
            Some(v) => Some(parse_f64("controller.m_max", v)?),
        };
        let controller = ControllerSection {
            law,
            k1: e.f64("controller.k1", cd.k1)?,
            k2: e.f64("controller.k2", cd.k2)?,
            epsilon: e.f64("controller.epsilon", cd.epsilon)?,
            alpha: e.f64("controller.alpha", cd.alpha)?,
            lambda: e.f64("controller.lambda", cd.lambda)?,
            m_max,
            initial_delta: e.list("controller.initial_delta", cd.initial_delta)?,
        };

        let duration = match e.slot(slot_of("integration.duration_s").expect("known key"))? {
            None => d.duration,
            Some(("integration.duration_orbits", v)) => Duration::Orbits(parse_f64("integration.duration_orbits", v)?),
            Some((k, v)) => Duration::Seconds(parse_f64(k, v)?),
        };

        let campaign = if e.has_section("campaign") {
            let c = CampaignSection::default();
            Some(CampaignSection {
                n_runs: e.int("campaign.n_runs", c.n_runs)?,
                seed: e.int("campaign.seed", c.seed)?,
                j_min: e.f64("campaign.j_min", c.j_min)?,
                j_max: e.f64("campaign.j_max", c.j_max)?,
                per_sample_check: e.bool("campaign.per_sample_check", c.per_sample_check)?,
                include_nominal: e.bool("campaign.include_nominal", c.include_nominal)?,
            })
        } else {
            None
        };

        Ok(Self {
            scenario: e.get("scenario.name")?.map_or(d.scenario, str::to_string),
            orbit_size,
            inclination: e.angle("orbit.inclination_deg", d.inclination)?,
            raan: e.angle("orbit.raan_deg", d.raan)?,
            initial_phase: e.angle("orbit.initial_phase_rad", d.initial_phase)?,
            dipole_moment: e.f64("dipole.moment", d.dipole_moment)?,
            coelevation: e.angle("dipole.coelevation_deg", d.coelevation)?,
            initial_ra: e.angle("dipole.initial_ra_rad", d.initial_ra)?,
            earth_rate_deg_per_day: e.f64("dipole.earth_rate_deg_per_day", d.earth_rate_deg_per_day)?,
            inertia,
            initial_quaternion: e.list("spacecraft.initial_quaternion", d.initial_quaternion)?,
            initial_rate: e.list("spacecraft.initial_rate", d.initial_rate)?,
            controller,
            duration,
            dt: e.f64("integration.dt_s", d.dt)?,
            sample_every: e.int("integration.sample_every", d.sample_every)?,
            thresholds: SettlingThresholds {
                attitude: e.f64("settling.attitude", d.thresholds.attitude)?,
                rate: e.f64("settling.rate", d.thresholds.rate)?,
            },
            analysis_horizon_orbits: e.f64("analysis.horizon_orbits", d.analysis_horizon_orbits)?,
            analysis_dt: e.f64("analysis.dt_s", d.analysis_dt)?,
            campaign,
        })
    }

    /// Builds every model object once so that invalid values surface at load.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sim = self.simulation()?;
        sim.validate()?;
        self.initial_state()?;
        self.law()?;
        if !(self.thresholds.attitude > 0.0) || !(self.thresholds.rate > 0.0) {
            return Err(bad("settling", "thresholds must be positive"));
        }
        if !(self.analysis_horizon_orbits > 0.0) || !(self.analysis_dt > 0.0) {
            return Err(bad("analysis", "horizon and step must be positive"));
        }
        if let Some(c) = self.campaign_config()? {
            c.validate()?;
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment, ConfigError> {
        let (incl, raan, phase) = (
            self.inclination.radians(),
            self.raan.radians(),
            self.initial_phase.radians(),
        );
        let orbit = match self.orbit_size {
            OrbitSize::Altitude(h) => OrbitParams::from_altitude(h, incl, raan, phase)?,
            OrbitSize::Radius(r) => OrbitParams::from_radius(r, incl, raan, phase)?,
        };
        let dipole = DipoleParams {
            moment: self.dipole_moment,
            coelevation: self.coelevation.radians(),
            initial_ra: self.initial_ra.radians(),
            earth_rate: deg_per_day_to_rad_per_s(self.earth_rate_deg_per_day),
        };
        Ok(Environment::new(orbit, dipole)?)
    }

    pub fn inertia(&self) -> Result<InertiaMatrix, ConfigError> {
        Ok(match self.inertia {
            InertiaSpec::Principal { moments, axes } => {
                let diag = Mat3::from_diagonal(&Vec3::from(moments));
                match axes {
                    None => InertiaMatrix::new(diag)?,
                    Some([a, b, c, d]) => {
                        let q = Quaternion::normalized(a, b, c, d).map_err(ModelError::from)?;
                        let r = attitude_matrix(&q).map_err(ModelError::from)?;
                        let j = r.transpose() * diag * r;
                        InertiaMatrix::new((j + j.transpose()) * 0.5)?
                    }
                }
            }
            InertiaSpec::Full([j11, j12, j13, j22, j23, j33]) => {
                InertiaMatrix::new(Mat3::new(j11, j12, j13, j12, j22, j23, j13, j23, j33))?
            }
        })
    }

    pub fn initial_state(&self) -> Result<SpacecraftState, ConfigError> {
        let [a, b, c, d] = self.initial_quaternion;
        let q = Quaternion::new(a, b, c, d);
        q.check_unit().map_err(|e| bad("spacecraft.initial_quaternion", e.to_string()))?;
        Ok(SpacecraftState::new(q, Vec3::from(self.initial_rate)))
    }

    /// `None` when the coils are switched off.
    pub fn law(&self) -> Result<Option<FeedbackLaw>, ConfigError> {
        let c = &self.controller;
        let saturation = match c.m_max {
            None => SaturationConfig::disabled(),
            Some(m) => SaturationConfig::limit(m)?,
        };
        Ok(match c.law {
            LawKind::None => None,
            LawKind::State => Some(FeedbackLaw::State(StateFeedback {
                gains: StateFeedbackGains::new(c.k1, c.k2, c.epsilon)?,
                saturation,
            })),
            LawKind::Output => Some(FeedbackLaw::Output(OutputFeedback {
                gains: OutputFeedbackGains::new(c.k1, c.k2, c.epsilon, c.alpha, c.lambda)?,
                saturation,
                initial_delta: ControllerState::from(c.initial_delta),
            })),
        })
    }

    pub fn duration_seconds(&self, env: &Environment) -> f64 {
        match self.duration {
            Duration::Seconds(s) => s,
            Duration::Orbits(n) => n * env.orbit.period(),
        }
    }

    pub fn simulation(&self) -> Result<Simulation, ConfigError> {
        let env = self.environment()?;
        Ok(Simulation {
            inertia: self.inertia()?,
            env,
            dt: self.dt,
            duration: self.duration_seconds(&env),
            sample_every: self.sample_every,
        })
    }

    pub fn campaign_config(&self) -> Result<Option<CampaignConfig>, ConfigError> {
        let Some(c) = self.campaign else {
            return Ok(None);
        };
        let law = self
            .law()?
            .ok_or_else(|| bad("controller.law", "a campaign needs a feedback law"))?;
        let sim = self.simulation()?;
        Ok(Some(CampaignConfig {
            n_runs: c.n_runs,
            seed: c.seed,
            j_min: c.j_min,
            j_max: c.j_max,
            inequality_check: if c.per_sample_check {
                InequalityCheck::PerSample
            } else {
                InequalityCheck::RequireBounds
            },
            law,
            env: sim.env,
            initial: self.initial_state()?,
            duration: sim.duration,
            dt: sim.dt,
            sample_every: sim.sample_every,
            thresholds: self.thresholds,
            nominal: c.include_nominal.then_some(sim.inertia),
        }))
    }

    /// The effective configuration with every default spelled out. Parsing it
    /// back yields an identical `RunConfig`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("scenario.name", self.scenario.clone());
        match self.orbit_size {
            OrbitSize::Altitude(h) => put("orbit.altitude_m", num(h)),
            OrbitSize::Radius(r) => put("orbit.radius_m", num(r)),
        }
        put_angle(&mut put, "orbit.inclination", self.inclination);
        put_angle(&mut put, "orbit.raan", self.raan);
        put_angle(&mut put, "orbit.initial_phase", self.initial_phase);
        put("dipole.moment", num(self.dipole_moment));
        put_angle(&mut put, "dipole.coelevation", self.coelevation);
        put_angle(&mut put, "dipole.initial_ra", self.initial_ra);
        put("dipole.earth_rate_deg_per_day", num(self.earth_rate_deg_per_day));
        match self.inertia {
            InertiaSpec::Principal { moments, axes } => {
                put("spacecraft.principal_moments", list(&moments));
                if let Some(q) = axes {
                    put("spacecraft.principal_axes_quaternion", list(&q));
                }
            }
            InertiaSpec::Full(j) => put("spacecraft.inertia_matrix", list(&j)),
        }
        put("spacecraft.initial_quaternion", list(&self.initial_quaternion));
        put("spacecraft.initial_rate", list(&self.initial_rate));
        let c = &self.controller;
        put(
            "controller.law",
            match c.law {
                LawKind::State => "state",
                LawKind::Output => "output",
                LawKind::None => "none",
            }
            .to_string(),
        );
        put("controller.k1", num(c.k1));
        put("controller.k2", num(c.k2));
        put("controller.epsilon", num(c.epsilon));
        put("controller.alpha", num(c.alpha));
        put("controller.lambda", num(c.lambda));
        put("controller.m_max", c.m_max.map_or_else(|| "off".to_string(), num));
        put("controller.initial_delta", list(&c.initial_delta));
        match self.duration {
            Duration::Seconds(v) => put("integration.duration_s", num(v)),
            Duration::Orbits(v) => put("integration.duration_orbits", num(v)),
        }
        put("integration.dt_s", num(self.dt));
        put("integration.sample_every", self.sample_every.to_string());
        put("settling.attitude", num(self.thresholds.attitude));
        put("settling.rate", num(self.thresholds.rate));
        put("analysis.horizon_orbits", num(self.analysis_horizon_orbits));
        put("analysis.dt_s", num(self.analysis_dt));
        if let Some(k) = &self.campaign {
            put("campaign.n_runs", k.n_runs.to_string());
            put("campaign.seed", k.seed.to_string());
            put("campaign.j_min", num(k.j_min));
            put("campaign.j_max", num(k.j_max));
            put("campaign.per_sample_check", k.per_sample_check.to_string());
            put("campaign.include_nominal", k.include_nominal.to_string());
        }
        s
    }
}

fn put_angle(put: &mut impl FnMut(&str, String), stem: &str, a: Angle) {
    match a {
        Angle::Deg(v) => put(&format!("{stem}_deg"), num(v)),
        Angle::Rad(v) => put(&format!("{stem}_rad"), num(v)),
    }
}

/// `ORBIT__INCLINATION_DEG` → `orbit.inclination_deg`.
fn env_key(rest: &str) -> String {
    rest.to_ascii_lowercase().replacen("__", ".", 1)
}

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e7 || x.abs() < 1e-4) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}
