//! Flat `key = value` run configuration.
//!
//! Every key is declared once in [`schema`] with a printer and a parser, so
//! loading, dumping and hashing all go through the same table. A dump lists
//! every key in sorted order with canonical values and loads back to an
//! identical configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use retire_core::econometrics::{Control, RegressionSpec, TreatmentRule};
use retire_core::ri_solver::FixedPointOptions;
use retire_core::simulator::{Cohort, InitialAssets, ScenarioSpec, SolutionKind, SpaPath};
use retire_core::Calibration;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Resolved configuration for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub calibration: Calibration,
    pub solver: FixedPointOptions,
    /// The `kind` field is set per simulated panel.
    pub scenario: ScenarioSpec,
    /// Solutions to compute, simulate and analyze.
    pub kinds: Vec<SolutionKind>,
    pub regression: RegressionSpec,
    /// Age at which belief errors are tabulated.
    pub belief_age: u32,
    /// Age of the inattentive-minus-full-information choice map.
    pub diff_map_age: u32,
    /// Ages written to the value and policy CSVs.
    pub policy_ages: Vec<u32>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            calibration: Calibration::default(),
            solver: FixedPointOptions::default(),
            scenario: ScenarioSpec::default(),
            kinds: vec![SolutionKind::Re, SolutionKind::Ri],
            regression: RegressionSpec::default(),
            belief_age: 58,
            diff_map_age: 57,
            policy_ages: vec![52, 55, 58, 60, 62, 65],
            output_dir: PathBuf::from("out"),
        }
    }
}

/// What a key feeds into; decides which artifacts go stale when it changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Model,
    Scenario,
    Analysis,
    Output,
}

type Getter = Box<dyn Fn(&RunConfig) -> String>;
type Setter = Box<dyn Fn(&mut RunConfig, &str) -> Result<(), String>>;

pub struct Field {
    pub key: String,
    pub scope: Scope,
    pub required: bool,
    get: Getter,
    set: Setter,
}

/// Keys that must appear in every config file.
pub const REQUIRED: [&str; 8] = [
    "model.gamma",
    "model.nu",
    "model.beta",
    "model.theta",
    "model.lambda",
    "spa.p_step",
    "grid.assets_n",
    "seed",
];

fn fmt_f64(x: &f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn fmt_int<T: ToString>(x: &T) -> String {
    x.to_string()
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid integer"))
}

fn fmt_bool(b: &bool) -> String {
    b.to_string()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not `true` or `false`")),
    }
}

fn items(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn fmt_f64_list(v: &[f64]) -> String {
    v.iter().map(fmt_f64).collect::<Vec<_>>().join(", ")
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    items(s).map(parse_f64).collect()
}

fn fmt_u32_list(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>, String> {
    items(s).map(parse_int).collect()
}

fn fmt_path(p: &Path) -> String {
    p.display().to_string()
}

fn parse_path(s: &str) -> Result<PathBuf, String> {
    if s.is_empty() {
        return Err("empty path".into());
    }
    Ok(PathBuf::from(s))
}

/// `label:60`, `label:drawn` or `label:60/60/61/...`.
fn fmt_cohorts(v: &[Cohort]) -> String {
    v.iter()
        .map(|c| {
            let spa = match &c.spa {
                SpaPath::Fixed(s) => s.to_string(),
                SpaPath::Drawn => "drawn".into(),
                SpaPath::Explicit(p) => p.iter().map(u32::to_string).collect::<Vec<_>>().join("/"),
            };
            format!("{}:{spa}", c.label)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_cohorts(s: &str) -> Result<Vec<Cohort>, String> {
    items(s)
        .map(|item| {
            let (label, spa) = item
                .split_once(':')
                .ok_or_else(|| format!("cohort `{item}` is not `label:spa`"))?;
            let label = label.trim();
            if label.is_empty() || label.contains(['=', '#']) {
                return Err(format!("cohort `{item}` has an invalid label"));
            }
            let spa = spa.trim();
            let spa = if spa == "drawn" {
                SpaPath::Drawn
            } else if spa.contains('/') {
                SpaPath::Explicit(spa.split('/').map(|x| parse_int(x.trim())).collect::<Result<_, _>>()?)
            } else {
                SpaPath::Fixed(parse_int(spa)?)
            };
            Ok(Cohort {
                label: label.to_string(),
                spa,
            })
        })
        .collect()
}

/// `lognormal MU SIGMA` or `empirical VALUE:WEIGHT ...`.
fn fmt_initial_assets(a: &InitialAssets) -> String {
    match a {
        InitialAssets::LogNormal { mu, sigma } => format!("lognormal {mu:?} {sigma:?}"),
        InitialAssets::Empirical(v) => {
            let pts: Vec<String> = v.iter().map(|(x, w)| format!("{x:?}:{w:?}")).collect();
            format!("empirical {}", pts.join(" "))
        }
    }
}

fn parse_initial_assets(s: &str) -> Result<InitialAssets, String> {
    let mut parts = s.split_whitespace();
    match parts.next() {
        Some("lognormal") => {
            let v: Vec<f64> = parts.map(parse_f64).collect::<Result<_, _>>()?;
            match v[..] {
                [mu, sigma] => Ok(InitialAssets::LogNormal { mu, sigma }),
                _ => Err("expected `lognormal MU SIGMA`".into()),
            }
        }
        Some("empirical") => {
            let pts = parts
                .map(|p| {
                    let (x, w) = p.split_once(':').ok_or_else(|| format!("`{p}` is not `value:weight`"))?;
                    Ok((parse_f64(x)?, parse_f64(w)?))
                })
                .collect::<Result<Vec<_>, String>>()?;
            if pts.is_empty() {
                return Err("empirical distribution needs at least one point".into());
            }
            Ok(InitialAssets::Empirical(pts))
        }
        _ => Err("expected `lognormal MU SIGMA` or `empirical VALUE:WEIGHT ...`".into()),
    }
}

fn fmt_kinds(v: &[SolutionKind]) -> String {
    v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_kinds(s: &str) -> Result<Vec<SolutionKind>, String> {
    let mut out = Vec::new();
    for k in items(s) {
        let kind = match k {
            "re" => SolutionKind::Re,
            "ri" => SolutionKind::Ri,
            _ => return Err(format!("`{k}` is not `re` or `ri`")),
        };
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err("at least one of `re`, `ri` is required".into());
    }
    out.sort_by_key(|k| *k == SolutionKind::Ri);
    Ok(out)
}

fn fmt_treatment(t: &TreatmentRule) -> String {
    match t {
        TreatmentRule::BelowSpa => "below_spa".into(),
        TreatmentRule::AtOrBelowSpa => "at_or_below_spa".into(),
    }
}

fn parse_treatment(s: &str) -> Result<TreatmentRule, String> {
    match s {
        "below_spa" => Ok(TreatmentRule::BelowSpa),
        "at_or_below_spa" => Ok(TreatmentRule::AtOrBelowSpa),
        _ => Err(format!("`{s}` is not `below_spa` or `at_or_below_spa`")),
    }
}

fn fmt_controls(v: &[Control]) -> String {
    v.iter()
        .map(|c| match c {
            Control::TypeDummies => "type",
            Control::Unemployed => "unemployed",
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_controls(s: &str) -> Result<Vec<Control>, String> {
    let mut out = Vec::new();
    for c in items(s) {
        let control = match c {
            "type" => Control::TypeDummies,
            "unemployed" => Control::Unemployed,
            _ => return Err(format!("`{c}` is not `type` or `unemployed`")),
        };
        if !out.contains(&control) {
            out.push(control);
        }
    }
    Ok(out)
}

macro_rules! field {
    ($out:ident, $key:expr, $scope:expr, |$c:ident| $place:expr, $fmt:expr, $parse:expr) => {{
        let key: String = $key.into();
        $out.push(Field {
            required: REQUIRED.contains(&key.as_str()),
            key,
            scope: $scope,
            get: Box::new(move |$c: &RunConfig| $fmt(&$place)),
            set: Box::new(move |$c: &mut RunConfig, v: &str| {
                $place = $parse(v)?;
                Ok(())
            }),
        });
    }};
}

/// Every accepted key, sorted.
pub fn schema() -> Vec<Field> {
    use Scope::*;
    let mut f = Vec::new();
    let n_types = Calibration::default().types.len();

    field!(f, "model.gamma", Model, |c| c.calibration.params.gamma, fmt_f64, parse_f64);
    field!(f, "model.nu", Model, |c| c.calibration.params.nu, fmt_f64, parse_f64);
    field!(f, "model.beta", Model, |c| c.calibration.params.beta, fmt_f64, parse_f64);
    field!(f, "model.theta", Model, |c| c.calibration.params.theta, fmt_f64, parse_f64);
    field!(f, "model.bequest_shift", Model, |c| c.calibration.params.bequest_shift, fmt_f64, parse_f64);
    field!(f, "model.lambda", Model, |c| c.calibration.params.lambda, fmt_f64, parse_f64);
    field!(f, "model.r", Model, |c| c.calibration.params.r, fmt_f64, parse_f64);
    field!(f, "model.work_hours", Model, |c| c.calibration.params.work_hours, fmt_f64, parse_f64);
    field!(f, "model.benefit", Model, |c| c.calibration.params.benefit, fmt_f64, parse_f64);
    field!(f, "model.state_pension", Model, |c| c.calibration.params.state_pension, fmt_f64, parse_f64);
    field!(f, "model.spouse_income", Model, |c| c.calibration.params.spouse_income, fmt_f64, parse_f64);
    field!(f, "model.age_start", Model, |c| c.calibration.params.age_start, fmt_int, parse_int);
    field!(f, "model.age_work_end", Model, |c| c.calibration.params.age_work_end, fmt_int, parse_int);
    field!(f, "model.age_death", Model, |c| c.calibration.params.age_death, fmt_int, parse_int);
    field!(f, "model.age_spouse_retire", Model, |c| c.calibration.params.age_spouse_retire, fmt_int, parse_int);
    field!(f, "model.age_entry", Model, |c| c.calibration.params.age_entry, fmt_int, parse_int);
    field!(f, "model.aime_freeze_age", Model, |c| c.calibration.params.aime_freeze_age, fmt_int, parse_int);
    field!(f, "model.age_db", Model, |c| c.calibration.params.age_db, fmt_int, parse_int);
    field!(f, "model.spouse_age_offset", Model, |c| c.calibration.params.spouse_age_offset, fmt_int, parse_int);
    field!(f, "spa.p_step", Model, |c| c.calibration.params.p_spa_step, fmt_f64, parse_f64);
    field!(f, "spa.init", Model, |c| c.calibration.params.spa_init, fmt_int, parse_int);
    field!(f, "spa.cap", Model, |c| c.calibration.params.spa_cap, fmt_int, parse_int);
    field!(f, "db.db1", Model, |c| c.calibration.db.db1, fmt_f64, parse_f64);
    field!(f, "db.db2", Model, |c| c.calibration.db.db2, fmt_f64, parse_f64);
    field!(f, "mortality.onset", Model, |c| c.calibration.mortality.onset, fmt_int, parse_int);
    field!(f, "mortality.a", Model, |c| c.calibration.mortality.a, fmt_f64, parse_f64);
    field!(f, "mortality.b", Model, |c| c.calibration.mortality.b, fmt_f64, parse_f64);
    field!(f, "grid.assets_n", Model, |c| c.calibration.grids.assets_n, fmt_int, parse_int);
    field!(f, "grid.assets_max", Model, |c| c.calibration.grids.assets_max, fmt_f64, parse_f64);
    field!(f, "grid.assets_curvature", Model, |c| c.calibration.grids.assets_curvature, fmt_f64, parse_f64);
    field!(f, "grid.aime_n", Model, |c| c.calibration.grids.aime_n, fmt_int, parse_int);
    field!(f, "grid.aime_max", Model, |c| c.calibration.grids.aime_max, fmt_f64, parse_f64);
    field!(f, "grid.aime_curvature", Model, |c| c.calibration.grids.aime_curvature, fmt_f64, parse_f64);
    field!(f, "grid.income_n", Model, |c| c.calibration.grids.income_n, fmt_int, parse_int);
    for i in 0..n_types {
        let t = |name: &str| format!("type.{}.{name}", i + 1);
        field!(f, t("has_db"), Model, |c| c.calibration.types[i].has_db, fmt_bool, parse_bool);
        field!(f, t("delta0"), Model, |c| c.calibration.types[i].delta0, fmt_f64, parse_f64);
        field!(f, t("delta1"), Model, |c| c.calibration.types[i].delta1, fmt_f64, parse_f64);
        field!(f, t("delta2"), Model, |c| c.calibration.types[i].delta2, fmt_f64, parse_f64);
        field!(f, t("rho"), Model, |c| c.calibration.types[i].rho, fmt_f64, parse_f64);
        field!(f, t("sigma_eps"), Model, |c| c.calibration.types[i].sigma_eps, fmt_f64, parse_f64);
        field!(f, t("sigma_init"), Model, |c| c.calibration.types[i].sigma_init, fmt_f64, parse_f64);
        field!(f, t("unemp_prob"), Model, |c| c.calibration.types[i].unemp_prob, fmt_f64_list, parse_f64_list);
        field!(f, t("share"), Model, |c| c.calibration.types[i].population_share, fmt_f64, parse_f64);
    }
    field!(f, "solver.tol", Model, |c| c.solver.tol, fmt_f64, parse_f64);
    field!(f, "solver.max_iter", Model, |c| c.solver.max_iter, fmt_int, parse_int);
    field!(f, "solver.polish", Model, |c| c.solver.polish, fmt_bool, parse_bool);

    field!(f, "seed", Scenario, |c| c.scenario.seed, fmt_int, parse_int);
    field!(f, "scenario.cohorts", Scenario, |c| c.scenario.cohorts, fmt_cohorts, parse_cohorts);
    field!(f, "scenario.households", Scenario, |c| c.scenario.households_per_cohort, fmt_int, parse_int);
    field!(f, "scenario.initial_assets", Scenario, |c| c.scenario.initial_assets, fmt_initial_assets, parse_initial_assets);
    field!(f, "scenario.initial_aime_ratio", Scenario, |c| c.scenario.initial_aime_ratio, fmt_f64, parse_f64);
    field!(f, "scenario.mortality", Scenario, |c| c.scenario.mortality, fmt_bool, parse_bool);
    field!(f, "scenario.last_age", Scenario, |c| c.scenario.last_age, fmt_int, parse_int);
    field!(f, "scenario.kinds", Scenario, |c| c.kinds, fmt_kinds, parse_kinds);

    field!(f, "regression.treatment", Analysis, |c| c.regression.treatment, fmt_treatment, parse_treatment);
    field!(f, "regression.age_dummies", Analysis, |c| c.regression.age_dummies, fmt_bool, parse_bool);
    field!(f, "regression.cohort_dummies", Analysis, |c| c.regression.cohort_dummies, fmt_bool, parse_bool);
    field!(f, "regression.controls", Analysis, |c| c.regression.extra_controls, fmt_controls, parse_controls);
    field!(f, "analysis.belief_age", Analysis, |c| c.belief_age, fmt_int, parse_int);
    field!(f, "analysis.diff_map_age", Analysis, |c| c.diff_map_age, fmt_int, parse_int);

    field!(f, "output.policy_ages", Output, |c| c.policy_ages, fmt_u32_list, parse_u32_list);
    field!(f, "output.dir", Output, |c| c.output_dir, fmt_path, parse_path);

    f.sort_by(|a, b| a.key.cmp(&b.key));
    f
}

impl RunConfig {
    /// Parses config text. Unset optional keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let schema = schema();
        let mut seen = BTreeMap::<String, usize>::new();
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!("line {}", i + 1), "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            let field = schema
                .iter()
                .find(|f| f.key == key)
                .ok_or_else(|| CliError::config(key, format!("unknown key (line {})", i + 1)))?;
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(CliError::config(key, format!("set twice (lines {prev} and {})", i + 1)));
            }
            (field.set)(&mut cfg, value).map_err(|m| CliError::config(key, m))?;
        }
        if let Some(missing) = schema.iter().find(|f| f.required && !seen.contains_key(&f.key)) {
            return Err(CliError::config(&missing.key, "required key is missing"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the keys that the core library does not see until later stages.
    pub fn validate(&self) -> Result<(), CliError> {
        retire_core::Model::build(&self.calibration).map_err(CliError::invalid_config)?;
        let p = &self.calibration.params;
        let decision = p.age_start..p.age_death;
        if let Some(a) = self.policy_ages.iter().find(|a| !decision.contains(a)) {
            return Err(CliError::config("output.policy_ages", format!("{a} is not a decision age")));
        }
        if !decision.contains(&self.diff_map_age) {
            return Err(CliError::config("analysis.diff_map_age", "not a decision age"));
        }
        if !(p.age_start..=self.scenario.last_age).contains(&self.belief_age) {
            return Err(CliError::config("analysis.belief_age", "outside the simulated ages"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(CliError::config("solver.tol", "must be positive"));
        }
        Ok(())
    }

    /// Canonical text of every key, sorted, one `key = value` per line.
    pub fn dump(&self) -> String {
        self.dump_scoped(|_| true)
    }

    fn dump_scoped(&self, keep: impl Fn(&Field) -> bool) -> String {
        schema()
            .iter()
            .filter(|f| keep(f))
            .map(|f| match (f.get)(self) {
                v if v.is_empty() => format!("{} =\n", f.key),
                v => format!("{} = {v}\n", f.key),
            })
            .collect()
    }

    fn hash_of(&self, keep: impl Fn(&Field) -> bool) -> String {
        sha256_hex(self.dump_scoped(keep).as_bytes())
    }

    /// Dump without the output directory, so that it is identical wherever
    /// the run is written.
    pub fn dump_portable(&self) -> String {
        self.dump_scoped(|f| f.key != "output.dir")
    }

    /// Hash of [`RunConfig::dump_portable`].
    pub fn config_hash(&self) -> String {
        sha256_hex(self.dump_portable().as_bytes())
    }

    /// Hash of the keys a solution depends on.
    pub fn model_hash(&self) -> String {
        self.hash_of(|f| f.scope == Scope::Model)
    }

    /// Hash of the keys a simulated panel depends on.
    pub fn panel_hash(&self) -> String {
        self.hash_of(|f| matches!(f.scope, Scope::Model | Scope::Scenario))
    }

    pub fn scenario_for(&self, kind: SolutionKind) -> ScenarioSpec {
        ScenarioSpec {
            kind,
            ..self.scenario.clone()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
