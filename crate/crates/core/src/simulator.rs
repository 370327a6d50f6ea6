//! Panel simulation from a solved model.
//!
//! Every household owns three ChaCha streams derived from the scenario seed
//! and its global index: one for exogenous shocks, one for inattentive
//! choice draws and one for drawn SPA paths. The shock stream consumes the
//! same number of draws every period whatever the household does, so runs
//! under the two solutions share income, unemployment and survival paths.
//!
//! AIME off the grid is handled by a lottery over the bracketing nodes with
//! the interpolation weights the solvers use for continuation values, which
//! keeps the simulated state on the solution grid.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::{initial_belief, update_belief, BeliefReport};
use crate::discretization::snap_down;
use crate::error::{Error, Result};
use crate::model::{aime_update, budget_terms, no_receipt_prior, BudgetInputs};
use crate::re_solver::SolutionRe;
use crate::ri_solver::SolutionRi;
use crate::space::{Decision, Model, SpaSlot, WPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionKind {
    Re,
    Ri,
}

impl std::fmt::Display for SolutionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolutionKind::Re => "re",
            SolutionKind::Ri => "ri",
        })
    }
}

/// Realised SPA for a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpaPath {
    Fixed(u32),
    /// One value per age from `age_start` to the last panel age plus one.
    Explicit(Vec<u32>),
    /// Drawn per household from the model's own SPA process.
    Drawn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub label: String,
    pub spa: SpaPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialAssets {
    LogNormal { mu: f64, sigma: f64 },
    /// `(value, weight)` pairs.
    Empirical(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub cohorts: Vec<Cohort>,
    pub households_per_cohort: usize,
    pub seed: u64,
    pub kind: SolutionKind,
    pub initial_assets: InitialAssets,
    /// Households die according to the mortality table when set.
    pub mortality: bool,
    /// Last age recorded.
    pub last_age: u32,
    /// Initial AIME as a share of average deterministic earnings.
    pub initial_aime_ratio: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            cohorts: (60..=62)
                .map(|s| Cohort {
                    label: format!("spa{s}"),
                    spa: SpaPath::Fixed(s),
                })
                .collect(),
            households_per_cohort: 500,
            seed: 20_190_601,
            kind: SolutionKind::Re,
            // illustrative, not estimated
            initial_assets: InitialAssets::LogNormal {
                mu: 3_000f64.ln(),
                sigma: 1.5,
            },
            mortality: true,
            last_age: 75,
            initial_aime_ratio: 0.8,
        }
    }
}

impl ScenarioSpec {
    /// Same scenario apart from the solution kind.
    pub fn same_design(&self, other: &ScenarioSpec) -> bool {
        ScenarioSpec {
            kind: other.kind,
            ..self.clone()
        } == *other
    }

    fn validate(&self, model: &Model) -> Result<()> {
        let p = &model.params;
        if self.cohorts.is_empty() {
            return Err(Error::config("scenario.cohorts", "at least one cohort is required"));
        }
        if self.households_per_cohort == 0 {
            return Err(Error::config("scenario.households", "must be positive"));
        }
        if self.last_age < p.age_start || self.last_age >= p.age_death {
            return Err(Error::config(
                "scenario.last_age",
                format!("must lie in [{}, {})", p.age_start, p.age_death),
            ));
        }
        if !(self.initial_aime_ratio >= 0.0) {
            return Err(Error::config("scenario.initial_aime_ratio", "must be non-negative"));
        }
        match &self.initial_assets {
            InitialAssets::LogNormal { mu, sigma } => {
                LogNormal::new(*mu, *sigma)
                    .map_err(|e| Error::config("scenario.initial_assets", e.to_string()))?;
            }
            InitialAssets::Empirical(v) => {
                if v.is_empty() || v.iter().any(|(a, w)| !(*a >= 0.0) || !(*w >= 0.0)) {
                    return Err(Error::config(
                        "scenario.initial_assets",
                        "empirical values and weights must be non-negative",
                    ));
                }
                WeightedIndex::new(v.iter().map(|x| x.1))
                    .map_err(|e| Error::config("scenario.initial_assets", e.to_string()))?;
            }
        }
        for c in &self.cohorts {
            let key = format!("scenario.cohort.{}", c.label);
            match &c.spa {
                SpaPath::Fixed(s) => check_path(&vec![*s; self.path_len(p.age_start)], p.age_start, model, &key)?,
                SpaPath::Explicit(v) => {
                    if v.len() != self.path_len(p.age_start) {
                        return Err(Error::config(
                            key,
                            format!("path needs {} entries", self.path_len(p.age_start)),
                        ));
                    }
                    check_path(v, p.age_start, model, &key)?
                }
                SpaPath::Drawn => {}
            }
        }
        Ok(())
    }

    fn path_len(&self, age_start: u32) -> usize {
        (self.last_age - age_start + 2) as usize
    }
}

/// Non-decreasing, unit steps, inside the SPA range, frozen once received.
fn check_path(path: &[u32], age_start: u32, model: &Model, key: &str) -> Result<()> {
    let p = &model.params;
    for (i, &s) in path.iter().enumerate() {
        if s < p.spa_init || s > p.spa_cap {
            return Err(Error::config(key, format!("SPA {s} outside [{}, {}]", p.spa_init, p.spa_cap)));
        }
        if i > 0 {
            let prev = path[i - 1];
            let age_prev = age_start + i as u32 - 1;
            if s < prev || s > prev + 1 || (prev <= age_prev && s != prev) {
                return Err(Error::config(key, format!("inadmissible SPA step {prev} -> {s}")));
            }
        }
    }
    Ok(())
}

/// A solved model of either kind.
#[derive(Debug, Clone, Copy)]
pub enum SolutionRef<'a> {
    Re(&'a SolutionRe),
    Ri(&'a SolutionRi),
}

impl SolutionRef<'_> {
    pub fn model(&self) -> &Model {
        match self {
            SolutionRef::Re(s) => &s.model,
            SolutionRef::Ri(s) => &s.model,
        }
    }

    pub fn kind(&self) -> SolutionKind {
        match self {
            SolutionRef::Re(_) => SolutionKind::Re,
            SolutionRef::Ri(_) => SolutionKind::Ri,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub household_id: u64,
    pub cohort: usize,
    pub age: u32,
    pub type_id: u32,
    pub assets: f64,
    pub income: f64,
    pub unemployed: bool,
    pub worked: bool,
    pub consumption: f64,
    pub next_assets: f64,
    pub cash_on_hand: f64,
    pub aime: f64,
    pub receiving: bool,
    pub true_spa: u32,
    /// Reported SPA. Full-information households report the truth.
    pub belief_mode: u32,
    pub belief_mean: f64,
    pub belief_entropy: f64,
}

pub const PANEL_HEADER: &str = "household_id,cohort,age,type_id,assets,income,unemployed,worked,consumption,next_assets,cash_on_hand,aime,receiving,true_spa,belief_mode,belief_mean,belief_entropy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub scenario: ScenarioSpec,
    /// Ordered by cohort, household and age.
    pub records: Vec<PanelRecord>,
}

impl Panel {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# panel v1\n{PANEL_HEADER}\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{:?},{:?},{},{},{:?},{:?},{:?},{:?},{},{},{},{:?},{:?}\n",
                r.household_id,
                r.cohort,
                r.age,
                r.type_id,
                r.assets,
                r.income,
                r.unemployed as u8,
                r.worked as u8,
                r.consumption,
                r.next_assets,
                r.cash_on_hand,
                r.aime,
                r.receiving as u8,
                r.true_spa,
                r.belief_mode,
                r.belief_mean,
                r.belief_entropy,
            ));
        }
        s
    }

    /// Reads the output of [`Panel::to_csv`]. Further `#` lines after the
    /// version line are skipped.
    pub fn from_csv(text: &str, scenario: ScenarioSpec) -> Result<Panel> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "# panel v1")) => {}
            _ => return Err(Error::Argument("panel file does not start with `# panel v1`".into())),
        }
        let mut lines = lines.filter(|(_, l)| !l.starts_with('#'));
        match lines.next() {
            Some((_, h)) if h == PANEL_HEADER => {}
            _ => return Err(Error::Argument("panel header does not match".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let bad = |what: &str| Error::Argument(format!("panel line {}: {what}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 17 {
                return Err(bad(&format!("expected 17 fields, found {}", f.len())));
            }
            let int = |k: usize| f[k].parse::<u64>().map_err(|_| bad(&format!("field {} is not an integer", k + 1)));
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(&format!("field {} is not a number", k + 1)));
            let flag = |k: usize| match f[k] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(&format!("field {} is not 0 or 1", k + 1))),
            };
            records.push(PanelRecord {
                household_id: int(0)?,
                cohort: int(1)? as usize,
                age: int(2)? as u32,
                type_id: int(3)? as u32,
                assets: num(4)?,
                income: num(5)?,
                unemployed: flag(6)?,
                worked: flag(7)?,
                consumption: num(8)?,
                next_assets: num(9)?,
                cash_on_hand: num(10)?,
                aime: num(11)?,
                receiving: flag(12)?,
                true_spa: int(13)? as u32,
                belief_mode: int(14)? as u32,
                belief_mean: num(15)?,
                belief_entropy: num(16)?,
            });
        }
        Ok(Panel { scenario, records })
    }

    /// Number of distinct households.
    pub fn n_households(&self) -> usize {
        let mut ids: Vec<u64> = self.records.iter().map(|r| r.household_id).collect();
        ids.dedup();
        ids.len()
    }

    /// Belief errors at `age` and pooled over non-receivers.
    pub fn belief_report(&self, age: u32) -> BeliefReport {
        crate::beliefs::belief_error_stats(
            self.records
                .iter()
                .map(|r| (r.age, r.receiving, r.belief_mode, r.true_spa)),
            age,
        )
    }
}

const STREAMS: u64 = 3;

fn rng(seed: u64, household: u64, which: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(household * STREAMS + which);
    r
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn draw_rule(rng: &mut ChaCha8Rng, rule: &[(u32, f64)]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(d, p) in rule {
        acc += p;
        if u < acc {
            return d;
        }
    }
    rule[rule.len() - 1].0
}

/// Node reached by a lottery matching linear interpolation weights.
fn aime_node(model: &Model, value: f64, u: f64) -> usize {
    let (lo, hi, w) = model.aime.interp_weights(value);
    if u < w {
        hi
    } else {
        lo
    }
}

fn spa_path(
    cohort: &Cohort,
    scenario: &ScenarioSpec,
    model: &Model,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    let p = &model.params;
    let n = scenario.path_len(p.age_start);
    Ok(match &cohort.spa {
        SpaPath::Fixed(s) => vec![*s; n],
        SpaPath::Explicit(v) => v.clone(),
        SpaPath::Drawn => {
            let prior = no_receipt_prior(p.age_start, p)?;
            let first = prior.first() + draw_index(rng, prior.probs()) as u32;
            let mut path = vec![first];
            for i in 1..n {
                let (prev, age_prev) = (path[i - 1], p.age_start + i as u32 - 1);
                let step = prev > age_prev && prev < p.spa_cap && rng.random::<f64>() < p.p_spa_step;
                path.push(prev + step as u32);
            }
            path
        }
    })
}

fn simulate_household(
    solution: SolutionRef<'_>,
    scenario: &ScenarioSpec,
    cohort_idx: usize,
    id: u64,
) -> Result<Vec<PanelRecord>> {
    let model = solution.model();
    let p = &model.params;
    let sp = model.space();
    let mut shocks = rng(scenario.seed, id, 0);
    let mut choices = rng(scenario.seed, id, 1);
    let mut spa_rng = rng(scenario.seed, id, 2);

    let path = spa_path(&scenario.cohorts[cohort_idx], scenario, model, &mut spa_rng)?;
    let shares: Vec<f64> = model.types.iter().map(|t| t.population_share).collect();
    let tau = draw_index(&mut shocks, &shares);
    let ty = &model.types[tau];
    let chain = &model.income[tau];

    let a0 = match &scenario.initial_assets {
        InitialAssets::LogNormal { mu, sigma } => LogNormal::new(*mu, *sigma)
            .map_err(|e| Error::config("scenario.initial_assets", e.to_string()))?
            .sample(&mut shocks),
        InitialAssets::Empirical(v) => {
            let idx = WeightedIndex::new(v.iter().map(|x| x.1))
                .map_err(|e| Error::config("scenario.initial_assets", e.to_string()))?
                .sample(&mut shocks);
            v[idx].0
        }
    };
    let mut asset = snap_down(a0, &model.assets)?;
    let mut income = draw_index(&mut shocks, chain.initial());
    let mut unemployed = shocks.random::<f64>() < ty.unemp_prob[income];
    let avg_earnings = (p.age_entry..p.age_start)
        .map(|a| ty.log_earnings_profile(a).exp())
        .sum::<f64>()
        / (p.age_start - p.age_entry) as f64;
    let mut aime = aime_node(model, scenario.initial_aime_ratio * avg_earnings, shocks.random());

    let ri = match solution {
        SolutionRef::Ri(s) => Some(s),
        SolutionRef::Re(_) => None,
    };
    let mut belief = match ri {
        Some(_) => Some(initial_belief(p)?),
        None => None,
    };

    let mut out = Vec::with_capacity((scenario.last_age - p.age_start + 1) as usize);
    for age in p.age_start..=scenario.last_age {
        let i = (age - p.age_start) as usize;
        let spa = path[i];
        let receiving = spa <= age;
        if let (Some(b), false) = (&belief, receiving) {
            if b.prob(spa) == 0.0 {
                return Err(Error::Logic(format!(
                    "household {id}: true SPA {spa} outside belief support at {age}"
                )));
            }
        }
        let slot = if receiving { SpaSlot::Receiving } else { SpaSlot::Pending(spa) };
        let wp = WPoint {
            type_idx: tau,
            asset,
            income,
            aime,
            unemployed,
        };
        let w = sp.w_index(&wp);
        let decision = match solution {
            SolutionRef::Re(s) => s.policy(age, &wp, slot),
            SolutionRef::Ri(s) => s
                .choice_rule(age, w, slot)
                .map(|r| Decision::from_index(draw_rule(&mut choices, &r) as usize)),
        }
        .ok_or_else(|| Error::Logic(format!("no decision stored at age {age} for {wp:?} {slot:?}")))?;

        let offer = model.income_offer(tau, age, income);
        let aime_value = model.aime.get(aime);
        let inputs = BudgetInputs {
            assets: model.assets.get(asset),
            age,
            work: decision.work,
            income: offer,
            unemployed,
            receiving,
            has_db: ty.has_db,
            aime: aime_value,
        };
        let coh = budget_terms(&inputs, p, &model.db).total();
        let next_assets = model.assets.get(decision.next_asset);
        let (belief_mode, belief_mean, belief_entropy) = match &belief {
            Some(b) => (b.mode(), b.mean(), b.entropy()),
            None => (spa, spa as f64, 0.0),
        };
        out.push(PanelRecord {
            household_id: id,
            cohort: cohort_idx,
            age,
            type_id: ty.type_id,
            assets: inputs.assets,
            income: offer,
            unemployed,
            worked: decision.work,
            consumption: coh - next_assets,
            next_assets,
            cash_on_hand: coh,
            aime: aime_value,
            receiving,
            true_spa: spa,
            belief_mode,
            belief_mean,
            belief_entropy,
        });

        let receipt_next = !receiving && path[i + 1] <= age + 1;
        if let (Some(s), Some(b)) = (ri, &belief) {
            belief = Some(update_belief(b, decision, w, age, s, receipt_next)?);
        }

        let (u_income, u_unemp, u_aime, u_alive): (f64, f64, f64, f64) =
            (shocks.random(), shocks.random(), shocks.random(), shocks.random());
        if scenario.mortality && u_alive >= model.mortality.survival(age) {
            break;
        }
        let next_income = {
            let mut acc = 0.0;
            let mut j = chain.len() - 1;
            for k in 0..chain.len() {
                acc += chain.prob(income, k);
                if u_income < acc {
                    j = k;
                    break;
                }
            }
            j
        };
        let next_aime = aime_update(aime_value, p.work_year_index(age), decision.work, offer, age, p);
        aime = aime_node(model, next_aime, u_aime);
        income = next_income;
        unemployed = u_unemp < ty.unemp_prob[income];
        asset = decision.next_asset;
    }
    Ok(out)
}

/// Simulates every cohort of `scenario` under `solution`, which must have
/// been solved for `model`.
pub fn simulate_panel(solution: SolutionRef<'_>, scenario: &ScenarioSpec, model: &Model) -> Result<Panel> {
    if solution.model() != model {
        return Err(Error::config("model", "solution was computed under different parameters"));
    }
    if solution.kind() != scenario.kind {
        return Err(Error::config(
            "scenario.kind",
            format!("scenario asks for {} but the solution is {}", scenario.kind, solution.kind()),
        ));
    }
    scenario.validate(model)?;
    let n = scenario.households_per_cohort;
    let total = scenario.cohorts.len() * n;
    let parts = (0..total)
        .into_par_iter()
        .map(|h| simulate_household(solution, scenario, h / n, h as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel {
        scenario: scenario.clone(),
        records: parts.into_iter().flatten().collect(),
    })
}

/// Panel columns available for summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Assets,
    Consumption,
    Income,
    Aime,
    Worked,
}

impl std::str::FromStr for Variable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "assets" => Variable::Assets,
            "consumption" => Variable::Consumption,
            "income" => Variable::Income,
            "aime" => Variable::Aime,
            "worked" => Variable::Worked,
            _ => return Err(Error::Argument(format!("unknown panel variable `{s}`"))),
        })
    }
}

impl Variable {
    pub fn get(&self, r: &PanelRecord) -> f64 {
        match self {
            Variable::Assets => r.assets,
            Variable::Consumption => r.consumption,
            Variable::Income => r.income,
            Variable::Aime => r.aime,
            Variable::Worked => r.worked as u8 as f64,
        }
    }
}

pub const PERCENTILES: [u32; 9] = [1, 5, 10, 25, 50, 75, 90, 95, 99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub percentiles: Vec<(u32, f64)>,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl SummaryStats {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("statistic,value\n");
        for (p, v) in &self.percentiles {
            s.push_str(&format!("p{p},{v:?}\n"));
        }
        s.push_str(&format!(
            "mean,{:?}\nsd,{:?}\nskewness,{:?}\nkurtosis,{:?}\nn,{}\n",
            self.mean, self.sd, self.skewness, self.kurtosis, self.n
        ));
        s
    }
}

/// Percentile with the averaging-at-integer-positions rule.
fn percentile(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len();
    let pos = n as f64 * p as f64 / 100.0;
    let k = pos.floor() as usize;
    if pos == k as f64 && k > 0 && k < n {
        0.5 * (sorted[k - 1] + sorted[k])
    } else {
        sorted[(pos.ceil() as usize).clamp(1, n) - 1]
    }
}

/// Percentiles, mean, sample sd and moment skewness and kurtosis.
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Argument("cannot summarise an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m = |k: i32| values.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let sd = if values.len() > 1 { (m2 * n / (n - 1.0)).sqrt() } else { f64::NAN };
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SummaryStats {
        n: values.len(),
        percentiles: PERCENTILES.iter().map(|&p| (p, percentile(&sorted, p))).collect(),
        mean,
        sd,
        skewness,
        kurtosis,
    })
}

pub fn summary_stats(panel: &Panel, variable: Variable) -> Result<SummaryStats> {
    let v: Vec<f64> = panel.records.iter().map(|r| variable.get(r)).collect();
    summarize(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeProfile {
    pub age: u32,
    pub participation_rate: f64,
    pub mean_assets: f64,
    pub n: usize,
}

pub fn age_profiles(panel: &Panel) -> Vec<AgeProfile> {
    let mut by_age = std::collections::BTreeMap::<u32, (usize, f64, usize)>::new();
    for r in &panel.records {
        let e = by_age.entry(r.age).or_default();
        e.0 += r.worked as usize;
        e.1 += r.assets;
        e.2 += 1;
    }
    by_age
        .into_iter()
        .map(|(age, (w, a, n))| AgeProfile {
            age,
            participation_rate: w as f64 / n as f64,
            mean_assets: a / n as f64,
            n,
        })
        .collect()
}

pub fn profiles_csv(rows: &[AgeProfile]) -> String {
    let mut s = String::from("age,participation_rate,mean_assets,n\n");
    for r in rows {
        s.push_str(&format!("{},{:?},{:?},{}\n", r.age, r.participation_rate, r.mean_assets, r.n));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDiff {
    pub w: WPoint,
    pub slot: SpaSlot,
    /// Inattentive work probability minus the full-information indicator.
    pub diff: f64,
}

/// Work-probability differences over every valid state at `age`.
pub fn choice_prob_diff_map(ri: &SolutionRi, re: &SolutionRe, age: u32) -> Result<Vec<ChoiceDiff>> {
    let (a, b) = (&ri.model, &re.model);
    if a.space() != b.space() || a.assets != b.assets || a.aime != b.aime || a.income != b.income {
        return Err(Error::config("grid", "solutions are on different grids"));
    }
    if !a.decision_ages().contains(&age) {
        return Err(Error::Argument(format!("age {age} is not a decision age")));
    }
    let sp = a.space();
    let mut out = Vec::new();
    for w in 0..sp.n_w() {
        let wp = sp.w_point(w);
        for slot in sp.valid_slots(age) {
            let rule = ri
                .choice_rule(age, w, slot)
                .ok_or_else(|| Error::Logic(format!("missing inattentive rule at {age}")))?;
            let p_work: f64 = rule.iter().filter(|x| x.0 % 2 == 1).map(|x| x.1).sum();
            let d = re
                .policy(age, &wp, slot)
                .ok_or_else(|| Error::Logic(format!("missing policy at {age}")))?;
            out.push(ChoiceDiff {
                w: wp,
                slot,
                diff: p_work - d.work as u8 as f64,
            });
        }
    }
    Ok(out)
}

pub fn diff_map_csv(rows: &[ChoiceDiff]) -> String {
    let mut s = String::from("type,asset,income,aime,unemployed,spa,diff\n");
    for r in rows {
        let spa = match r.slot {
            SpaSlot::Receiving => "receiving".to_string(),
            SpaSlot::Pending(s) => s.to_string(),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{:?}\n",
            r.w.type_idx + 1,
            r.w.asset,
            r.w.income,
            r.w.aime,
            r.w.unemployed as u8,
            spa,
            r.diff
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn five_value_summary() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.mean, 22.0);
        assert_eq!(s.percentiles[4], (50, 3.0));
        assert_eq!(s.percentiles[0], (1, 1.0));
        assert_eq!(s.percentiles[8], (99, 100.0));
    }

    #[test]
    fn even_sample_median_averages() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.percentiles[4].1, 2.5);
        assert_eq!(s.percentiles[3].1, 1.5);
    }

    #[test]
    fn constant_sample() {
        let s = summarize(&[5.0; 10]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert!(s.skewness.is_nan() && s.kurtosis.is_nan());
        assert!(matches!(summarize(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn normal_moments() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..200_000).map(|_| r.sample(rand_distr::StandardNormal)).collect();
        let s = summarize(&v).unwrap();
        assert_relative_eq!(s.sd, 1.0, epsilon = 0.01);
        assert!(s.skewness.abs() < 0.03);
        assert_relative_eq!(s.kurtosis, 3.0, epsilon = 0.05);
    }

    #[test]
    fn streams_are_independent() {
        let a: f64 = rng(7, 0, 0).random();
        let b: f64 = rng(7, 0, 1).random();
        let c: f64 = rng(7, 1, 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, rng(7, 0, 0).random::<f64>());
    }

    #[test]
    fn draw_index_follows_probabilities() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let probs = [0.2, 0.0, 0.5, 0.3];
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[draw_index(&mut r, &probs)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.005);
        }
    }
}
