//! Run configuration: TOML file, `WARMCLOUD_*` environment overrides, and the
//! translation into solver objects.
//!
//! Every section and key is optional; missing entries take the defaults below.
//! Environment variables named `WARMCLOUD_<SECTION>__<KEY>` (nested keys joined
//! by `__`, case-insensitive) override file values, e.g.
//! `WARMCLOUD_STEPPING__T_END=0.5` or `WARMCLOUD_PHYSICS__DIFFUSION__RAIN__MU=0.02`.
//! Override values are parsed as TOML literals and fall back to plain strings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use warmcloud::binfmt::{load_checkpoint, load_velocity_provider};
use warmcloud::boundary::{BoundarySpec, FieldBoundary};
use warmcloud::grid::{BackgroundProfile, Grid, GridConfig};
use warmcloud::mms::MmsCase;
use warmcloud::operators::AdvectionScheme;
use warmcloud::params::{Diffusivity, PhysParams};
use warmcloud::solver::{Model, Processes, Scheme, StepControl};
use warmcloud::state::MoistState;
use warmcloud::velocity::{AnalyticFlowSpec, ValidationTolerance, VelocityProvider, VerticalShape};

use crate::expr::{Expr, Var};

pub const ENV_PREFIX: &str = "WARMCLOUD_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.to_string(),
    }
}

/// Expression text; accepts a TOML number or string.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprText(pub String);

impl ExprText {
    fn num(v: f64) -> Self {
        ExprText(format!("{v:?}"))
    }
}

impl Serialize for ExprText {
    fn serialize<Sr: Serializer>(&self, s: Sr) -> Result<Sr::Ok, Sr::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ExprText {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Int(v) => ExprText::num(v as f64),
            Raw::Float(v) => ExprText::num(v),
            Raw::Text(s) => ExprText(s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the initial-noise generator.
    pub seed: u64,
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub velocity: VelocitySection,
    pub initial: InitialSection,
    pub boundary: BoundarySection,
    pub stepping: SteppingSection,
    pub processes: ProcessSection,
    pub output: OutputSection,
    pub diagnostics: DiagnosticsSection,
    pub mms: MmsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: GridSection::default(),
            physics: PhysicsSection::default(),
            velocity: VelocitySection::default(),
            initial: InitialSection::default(),
            boundary: BoundarySection::default(),
            stepping: SteppingSection::default(),
            processes: ProcessSection::default(),
            output: OutputSection::default(),
            diagnostics: DiagnosticsSection::default(),
            mms: MmsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Background {
    Constant { value: f64 },
    Linear { bottom: f64, top: f64 },
    Levels { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub np: usize,
    pub lx: f64,
    pub ly: f64,
    pub p_top: f64,
    pub p_bottom: f64,
    pub background: Background,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            nx: 32,
            ny: 32,
            np: 32,
            lx: 1.0,
            ly: 1.0,
            p_top: 2.0e4,
            p_bottom: 1.0e5,
            background: Background::Linear {
                bottom: 288.0,
                top: 218.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionPair {
    pub mu: f64,
    pub nu: f64,
}

impl Default for DiffusionPair {
    fn default() -> Self {
        let d = PhysParams::<f64>::default().diffusion[0];
        DiffusionPair { mu: d.mu, nu: d.nu }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSection {
    pub temperature: DiffusionPair,
    pub vapor: DiffusionPair,
    pub cloud: DiffusionPair,
    pub rain: DiffusionPair,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        let p = DiffusionPair::default();
        DiffusionSection {
            temperature: p,
            vapor: p,
            cloud: p,
            rain: p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub r_d: f64,
    pub r_v: f64,
    pub c_pd: f64,
    pub c_pv: f64,
    pub c_l: f64,
    pub l0: f64,
    pub t0: f64,
    pub es0: f64,
    pub g: f64,
    pub v_rain: f64,
    pub c_ev: f64,
    pub c_cd: f64,
    pub c_cn: f64,
    pub c_ac: f64,
    pub c_cr: f64,
    pub q_ac_star: f64,
    pub t_low: f64,
    pub t_ramp: f64,
    pub q_vs_max: f64,
    pub p_ref: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    pub diffusion: DiffusionSection,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysParams::<f64>::default();
        PhysicsSection {
            r_d: p.r_d,
            r_v: p.r_v,
            c_pd: p.c_pd,
            c_pv: p.c_pv,
            c_l: p.c_l,
            l0: p.l0,
            t0: p.t0,
            es0: p.es0,
            g: p.g,
            v_rain: p.v_rain,
            c_ev: p.c_ev,
            c_cd: p.c_cd,
            c_cn: p.c_cn,
            c_ac: p.c_ac,
            c_cr: p.c_cr,
            q_ac_star: p.q_ac_star,
            t_low: p.t_low,
            t_ramp: p.t_ramp,
            q_vs_max: p.q_vs_max,
            p_ref: p.p_ref,
            beta: p.beta,
            kappa1: p.kappa1_override,
            diffusion: DiffusionSection::default(),
        }
    }
}

impl PhysicsSection {
    pub fn to_params(&self) -> PhysParams<f64> {
        let d = &self.diffusion;
        let pair = |p: DiffusionPair| Diffusivity { mu: p.mu, nu: p.nu };
        PhysParams {
            r_d: self.r_d,
            r_v: self.r_v,
            c_pd: self.c_pd,
            c_pv: self.c_pv,
            c_l: self.c_l,
            l0: self.l0,
            t0: self.t0,
            es0: self.es0,
            g: self.g,
            v_rain: self.v_rain,
            c_ev: self.c_ev,
            c_cd: self.c_cd,
            c_cn: self.c_cn,
            c_ac: self.c_ac,
            c_cr: self.c_cr,
            q_ac_star: self.q_ac_star,
            t_low: self.t_low,
            t_ramp: self.t_ramp,
            q_vs_max: self.q_vs_max,
            p_ref: self.p_ref,
            beta: self.beta,
            diffusion: [pair(d.temperature), pair(d.vapor), pair(d.cloud), pair(d.rain)],
            kappa1_override: self.kappa1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityKind {
    /// Analytic divergence-free cellular flow.
    Analytic,
    /// Binary velocity series written by `binfmt`.
    File,
    /// Fluid at rest.
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocitySection {
    pub kind: VelocityKind,
    pub amplitude: f64,
    pub mode_x: usize,
    pub mode_y: usize,
    pub vertical_mode: usize,
    /// Relative amplitude of the periodic modulation; 0 disables it.
    pub modulation: f64,
    pub period: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Validation tolerance as a multiple of `h^2`.
    pub tolerance_factor: f64,
}

impl Default for VelocitySection {
    fn default() -> Self {
        VelocitySection {
            kind: VelocityKind::Analytic,
            amplitude: 1.0,
            mode_x: 1,
            mode_y: 1,
            vertical_mode: 1,
            modulation: 0.0,
            period: 1.0,
            file: None,
            tolerance_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// Expressions in `x, y, p`.
    pub temperature: ExprText,
    pub vapor: ExprText,
    pub cloud: ExprText,
    pub rain: ExprText,
    /// Checkpoint to start from instead of the expressions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
    /// Uniform noise amplitude added to the temperature [K].
    pub temperature_noise: f64,
    /// Relative uniform noise on the vapour, in `[0, 1]`.
    pub vapor_noise: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            temperature: ExprText("280".into()),
            vapor: ExprText("5e-3".into()),
            cloud: ExprText("0".into()),
            rain: ExprText("0".into()),
            snapshot: None,
            temperature_noise: 0.0,
            vapor_noise: 0.0,
        }
    }
}

/// Robin coefficients and data of one field; bottom entries are expressions in
/// `x, y, t`, lateral entries in `p, t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldBoundarySection {
    pub alpha_bottom: ExprText,
    pub data_bottom: ExprText,
    pub alpha_lateral: ExprText,
    pub data_lateral: ExprText,
}

impl Default for FieldBoundarySection {
    fn default() -> Self {
        FieldBoundarySection {
            alpha_bottom: ExprText("0".into()),
            data_bottom: ExprText("0".into()),
            alpha_lateral: ExprText("0".into()),
            data_lateral: ExprText("0".into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    pub temperature: FieldBoundarySection,
    pub vapor: FieldBoundarySection,
    pub cloud: FieldBoundarySection,
    pub rain: FieldBoundarySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Euler,
    Rk2,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvectionName {
    Upwind,
    Minmod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteppingSection {
    pub t_end: f64,
    pub scheme: SchemeName,
    pub advection: AdvectionName,
    pub cfl_adv: f64,
    pub cfl_diff: f64,
    pub cfl_sed: f64,
    pub cfl_src: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub clamp_negative: bool,
}

impl Default for SteppingSection {
    fn default() -> Self {
        let c = StepControl::<f64>::default();
        SteppingSection {
            t_end: c.t_end,
            scheme: SchemeName::Euler,
            advection: AdvectionName::Upwind,
            cfl_adv: c.cfl_adv,
            cfl_diff: c.cfl_diff,
            cfl_sed: c.cfl_sed,
            cfl_src: c.cfl_src,
            dt_max: c.dt_max,
            dt_min: c.dt_min,
            clamp_negative: c.clamp_negative,
        }
    }
}

impl SteppingSection {
    pub fn to_control(&self) -> StepControl<f64> {
        StepControl {
            cfl_adv: self.cfl_adv,
            cfl_diff: self.cfl_diff,
            cfl_sed: self.cfl_sed,
            cfl_src: self.cfl_src,
            dt_max: self.dt_max,
            dt_min: self.dt_min,
            t_end: self.t_end,
            scheme: match self.scheme {
                SchemeName::Euler => Scheme::ExplicitEuler,
                SchemeName::Rk2 => Scheme::Rk2,
                SchemeName::Strang => Scheme::Strang,
            },
            advection: match self.advection {
                AdvectionName::Upwind => AdvectionScheme::Upwind,
                AdvectionName::Minmod => AdvectionScheme::Minmod,
            },
            clamp_negative: self.clamp_negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessSection {
    pub advection: bool,
    pub diffusion: bool,
    pub sources: bool,
    pub sedimentation: bool,
    pub temperature_extras: bool,
}

impl Default for ProcessSection {
    fn default() -> Self {
        let p = Processes::default();
        ProcessSection {
            advection: p.advection,
            diffusion: p.diffusion,
            sources: p.sources,
            sedimentation: p.sedimentation,
            temperature_extras: p.temperature_extras,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Simulated time between outputs; `<= 0` writes only the first and last state.
    pub interval: f64,
    pub vtk: bool,
    /// Writes `final.chk` at the end of the run.
    pub checkpoint: bool,
    /// Pressure levels written as CSV slices at every output.
    pub csv_levels: Vec<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            interval: 0.1,
            vtk: true,
            checkpoint: true,
            csv_levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Level-set base `M`; derived from the data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_set_m: Option<f64>,
    pub k_min: u32,
    pub k_max: u32,
    pub nonnegative_tol: f64,
    pub vapor_tol: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            level_set_m: None,
            k_min: 1,
            k_max: 8,
            nonnegative_tol: 1e-12,
            vapor_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmsName {
    Diffusion,
    Advection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsSection {
    pub cases: Vec<MmsName>,
    pub levels: Vec<usize>,
    /// Allowed deviation of the observed order from the nominal one.
    pub tolerance: f64,
}

impl Default for MmsSection {
    fn default() -> Self {
        MmsSection {
            cases: vec![MmsName::Diffusion, MmsName::Advection],
            levels: vec![8, 16, 32],
            tolerance: 0.2,
        }
    }
}

impl MmsName {
    pub fn case(self) -> MmsCase<f64> {
        match self {
            MmsName::Diffusion => MmsCase::diffusion(),
            MmsName::Advection => MmsCase::advection(),
        }
    }

    pub fn nominal_order(self) -> f64 {
        match self {
            MmsName::Diffusion => 2.0,
            MmsName::Advection => 1.0,
        }
    }
}

/// Reads `path`, applies the process environment overrides and validates the result.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_str(&text, path, std::env::vars())?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

/// Parses TOML `text` with the `WARMCLOUD_*` entries of `env` applied on top.
/// Relative paths are left untouched.
pub fn parse_str(
    text: &str,
    path: &Path,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig, ConfigError> {
    let syntax = |e: toml::de::Error| ConfigError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    };
    let overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    if overrides.is_empty() {
        // direct parse keeps line numbers in every error
        return toml::from_str(text).map_err(syntax);
    }
    let mut table: toml::Table = toml::from_str(text).map_err(syntax)?;
    for (key, value) in overrides {
        apply_override(&mut table, &key[ENV_PREFIX.len()..], &value)?;
    }
    RunConfig::deserialize(table).map_err(|e| ConfigError::Syntax {
        path: path.to_path_buf(),
        message: format!("after environment overrides: {}", e.to_string().trim_end()),
    })
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<String> = key.split("__").map(|s| s.to_ascii_lowercase()).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("{ENV_PREFIX}{key}"), "malformed override name"));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("{ENV_PREFIX}{key}"), format!("'{part}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].clone(), value);
    Ok(())
}

/// At least three strictly increasing grid sizes.
pub fn mms_levels_valid(levels: &[usize]) -> bool {
    levels.len() >= 3 && levels.windows(2).all(|w| w[1] > w[0]) && levels[0] >= 2
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.velocity.file {
            fix(p);
        }
        if let Some(p) = &mut self.initial.snapshot {
            fix(p);
        }
    }

    /// Semantic checks that do not touch the file system.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.physics.to_params();
        params.validate().map_err(|e| invalid("physics", e))?;
        self.grid_config().and_then(|g| Grid::new(&g, &params).map_err(|e| invalid("grid", e)))?;
        self.stepping.to_control().validate().map_err(|e| invalid("stepping", e))?;
        if !(self.stepping.t_end >= 0.0 && self.stepping.t_end.is_finite()) {
            return Err(invalid("stepping.t_end", "must be finite and nonnegative"));
        }
        self.expressions()?;
        let v = &self.velocity;
        match v.kind {
            VelocityKind::File if v.file.is_none() => return Err(invalid("velocity.file", "required when kind = \"file\"")),
            VelocityKind::Analytic => {
                if v.mode_x == 0 && v.mode_y == 0 {
                    return Err(invalid("velocity.mode_x", "mode_x and mode_y cannot both be zero"));
                }
                if v.vertical_mode == 0 {
                    return Err(invalid("velocity.vertical_mode", "must be at least 1"));
                }
                if !(v.modulation.abs() < 1.0 && v.period > 0.0) {
                    return Err(invalid("velocity.modulation", "needs |modulation| < 1 and period > 0"));
                }
            }
            _ => {}
        }
        if !(v.tolerance_factor > 0.0) {
            return Err(invalid("velocity.tolerance_factor", "must be positive"));
        }
        let i = &self.initial;
        if !(i.temperature_noise >= 0.0 && (0.0..=1.0).contains(&i.vapor_noise)) {
            return Err(invalid("initial", "temperature_noise must be >= 0 and vapor_noise in [0, 1]"));
        }
        if let Some(&k) = self.output.csv_levels.iter().find(|&&k| k >= self.grid.np) {
            return Err(invalid("output.csv_levels", format!("level {k} outside 0..{}", self.grid.np)));
        }
        let d = &self.diagnostics;
        if d.k_min < 1 || d.k_max < d.k_min {
            return Err(invalid("diagnostics.k_min", "need 1 <= k_min <= k_max"));
        }
        if let Some(m) = d.level_set_m {
            if !(m > 0.0) {
                return Err(invalid("diagnostics.level_set_m", "must be positive"));
            }
        }
        if !mms_levels_valid(&self.mms.levels) {
            return Err(invalid("mms.levels", "need at least three strictly increasing grid sizes >= 2"));
        }
        Ok(())
    }

    pub fn grid_config(&self) -> Result<GridConfig<f64>, ConfigError> {
        let g = &self.grid;
        let background = match &g.background {
            Background::Constant { value } => BackgroundProfile::Constant(*value),
            Background::Linear { bottom, top } => BackgroundProfile::Linear {
                bottom: *bottom,
                top: *top,
            },
            Background::Levels { values } => {
                if values.len() != g.np {
                    return Err(invalid(
                        "grid.background.values",
                        format!("expected {} levels, got {}", g.np, values.len()),
                    ));
                }
                BackgroundProfile::Levels(values.clone())
            }
        };
        Ok(GridConfig {
            nx: g.nx,
            ny: g.ny,
            np: g.np,
            lx: g.lx,
            ly: g.ly,
            p_top: g.p_top,
            p_bottom: g.p_bottom,
            background,
        })
    }

    fn expressions(&self) -> Result<Expressions, ConfigError> {
        let parse = |key: String, e: &ExprText, vars: &[Var]| -> Result<Expr, ConfigError> {
            Expr::parse(&e.0, vars).map_err(|err| invalid(key, format!("{err} in \"{}\"", e.0)))
        };
        let xyp = [Var::X, Var::Y, Var::P];
        let i = &self.initial;
        let initial = [
            parse("initial.temperature".into(), &i.temperature, &xyp)?,
            parse("initial.vapor".into(), &i.vapor, &xyp)?,
            parse("initial.cloud".into(), &i.cloud, &xyp)?,
            parse("initial.rain".into(), &i.rain, &xyp)?,
        ];
        let b = &self.boundary;
        let sections = [
            ("temperature", &b.temperature),
            ("vapor", &b.vapor),
            ("cloud", &b.cloud),
            ("rain", &b.rain),
        ];
        let mut boundary = Vec::with_capacity(4);
        for (name, s) in sections {
            let bottom = [Var::X, Var::Y, Var::T];
            let lateral = [Var::P, Var::T];
            boundary.push([
                parse(format!("boundary.{name}.alpha_bottom"), &s.alpha_bottom, &bottom)?,
                parse(format!("boundary.{name}.data_bottom"), &s.data_bottom, &bottom)?,
                parse(format!("boundary.{name}.alpha_lateral"), &s.alpha_lateral, &lateral)?,
                parse(format!("boundary.{name}.data_lateral"), &s.data_lateral, &lateral)?,
            ]);
        }
        Ok(Expressions {
            initial,
            boundary: boundary.try_into().unwrap(),
        })
    }

    /// Builds the grid, model, initial state and step control; reads the velocity
    /// file and the initial snapshot when configured.
    pub fn build(&self) -> Result<Setup, ConfigError> {
        self.validate()?;
        let params = self.physics.to_params();
        let grid = Grid::new(&self.grid_config()?, &params).map_err(|e| invalid("grid", e))?;
        let ex = self.expressions()?;

        let boundary = BoundarySpec {
            fields: ex.boundary.map(|[ab, db, al, dl]| {
                let (ab, db, al, dl) = (Arc::new(ab), Arc::new(db), Arc::new(al), Arc::new(dl));
                FieldBoundary {
                    alpha_bottom: Arc::new(move |x, y, t| ab.eval(x, y, 0.0, t)),
                    data_bottom: Arc::new(move |x, y, t| db.eval(x, y, 0.0, t)),
                    alpha_lateral: Arc::new(move |p, t| al.eval(0.0, 0.0, p, t)),
                    data_lateral: Arc::new(move |p, t| dl.eval(0.0, 0.0, p, t)),
                }
            }),
        };
        boundary
            .validate(&grid, self.stepping.t_end)
            .map_err(|e| invalid("boundary", e))?;

        let velocity = self.velocity_provider(&grid)?;

        let initial = match &self.initial.snapshot {
            Some(path) => {
                let (state, _) = load_checkpoint::<f64>(path).map_err(|e| invalid("initial.snapshot", e))?;
                if state.dims() != grid.dims() {
                    return Err(invalid("initial.snapshot", "snapshot dimensions differ from the grid block"));
                }
                state
            }
            None => {
                let [t, qv, qc, qr] = &ex.initial;
                let mut state = MoistState::from_fns(
                    &grid,
                    |x, y, p| t.eval(x, y, p, 0.0),
                    |x, y, p| qv.eval(x, y, p, 0.0),
                    |x, y, p| qc.eval(x, y, p, 0.0),
                    |x, y, p| qr.eval(x, y, p, 0.0),
                );
                self.add_noise(&mut state);
                state
            }
        };
        initial.check_admissible().map_err(|e| invalid("initial", e))?;

        let mut model = Model::new(grid, params, boundary, velocity);
        let p = &self.processes;
        model.processes = Processes {
            advection: p.advection,
            diffusion: p.diffusion,
            sources: p.sources,
            sedimentation: p.sedimentation,
            temperature_extras: p.temperature_extras,
        };
        let ctrl = self.stepping.to_control();
        model.validate(ctrl.t_end).map_err(|e| invalid("model", e))?;
        Ok(Setup { model, initial, ctrl })
    }

    pub fn tolerance(&self, grid: &Grid<f64>) -> ValidationTolerance<f64> {
        let base = ValidationTolerance::for_grid(grid);
        let s = self.velocity.tolerance_factor / 10.0;
        ValidationTolerance {
            divergence: base.divergence * s,
            normal: base.normal * s,
        }
    }

    pub fn analytic_spec(&self) -> AnalyticFlowSpec<f64> {
        let v = &self.velocity;
        let mut spec = AnalyticFlowSpec::new(v.amplitude);
        spec.mode_x = v.mode_x;
        spec.mode_y = v.mode_y;
        spec.shape = VerticalShape::Sine { mode: v.vertical_mode };
        if v.modulation != 0.0 {
            spec.modulation = Some((v.modulation, v.period));
        }
        spec
    }

    pub fn velocity_provider(&self, grid: &Grid<f64>) -> Result<VelocityProvider<f64>, ConfigError> {
        match self.velocity.kind {
            VelocityKind::Analytic => {
                VelocityProvider::analytic(self.analytic_spec(), grid).map_err(|e| invalid("velocity", e))
            }
            VelocityKind::Rest => Ok(VelocityProvider::Steady(warmcloud::velocity::VelocityField::zeros(grid.dims()))),
            VelocityKind::File => {
                let path = self.velocity.file.as_ref().expect("validated");
                load_velocity_provider(path, grid, self.tolerance(grid)).map_err(|e| invalid("velocity.file", e))
            }
        }
    }

    fn add_noise(&self, state: &mut MoistState<f64>) {
        let i = &self.initial;
        if i.temperature_noise == 0.0 && i.vapor_noise == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = state.dims();
        for k in 0..d.np {
            for j in 0..d.ny {
                for n in 0..d.nx {
                    let (a, b): (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                    let t = state.fields[0].get(n, j, k);
                    state.fields[0].set(n, j, k, t + i.temperature_noise * a);
                    let q = state.fields[1].get(n, j, k);
                    state.fields[1].set(n, j, k, q * (1.0 + i.vapor_noise * b));
                }
            }
        }
    }
}

struct Expressions {
    initial: [Expr; 4],
    boundary: [[Expr; 4]; 4],
}

/// Everything a run needs.
pub struct Setup {
    pub model: Model<f64>,
    pub initial: MoistState<f64>,
    pub ctrl: StepControl<f64>,
}
