//! Structural primitives of the life-cycle retirement model.
//!
//! Preferences, the household budget, average indexed earnings (AIME), the
//! defined-benefit pension, mortality, and the stochastic state pension age
//! (SPA) process. Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural parameters shared by every household type.
///
/// Currency values are annual amounts in the same units as the asset grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Risk-aversion curvature; must differ from 1.
    pub gamma: f64,
    /// Consumption weight in the Cobb-Douglas aggregator.
    pub nu: f64,
    pub beta: f64,
    /// Warm-glow bequest weight.
    pub theta: f64,
    /// Bequest shifter `K`.
    pub bequest_shift: f64,
    /// Attention cost in utils per nat.
    pub lambda: f64,
    pub r: f64,
    /// Share of the time endowment spent working when participating.
    pub work_hours: f64,
    pub benefit: f64,
    pub state_pension: f64,
    pub spouse_income: f64,
    /// Probability that a not-yet-received SPA moves up one year.
    pub p_spa_step: f64,
    pub age_start: u32,
    pub age_work_end: u32,
    pub age_death: u32,
    pub age_spouse_retire: u32,
    pub age_entry: u32,
    pub spa_init: u32,
    pub spa_cap: u32,
    pub aime_freeze_age: u32,
    /// Age from which a DB pension is paid to non-workers.
    pub age_db: u32,
    /// Spouse age minus agent age.
    pub spouse_age_offset: i32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma: 2.320,
            nu: 0.288,
            beta: 0.986,
            theta: 2.899e-2,
            bequest_shift: 2_000.0,
            lambda: 0.001,
            r: 0.02,
            work_hours: 0.2,
            benefit: 3_700.0,
            state_pension: 5_600.0,
            spouse_income: 7_500.0,
            p_spa_step: 0.06,
            age_start: 52,
            age_work_end: 80,
            age_death: 105,
            age_spouse_retire: 65,
            age_entry: 20,
            spa_init: 60,
            spa_cap: 70,
            aime_freeze_age: 65,
            age_db: 65,
            spouse_age_offset: 0,
        }
    }
}

fn ensure(cond: bool, key: &str, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.nu > 0.0 && self.nu < 1.0, "model.nu", "must lie in (0,1)")?;
        ensure(
            self.gamma > 0.0 && (self.gamma - 1.0).abs() > 1e-12,
            "model.gamma",
            "must be positive and different from 1",
        )?;
        ensure(self.beta > 0.0 && self.beta <= 1.0, "model.beta", "must lie in (0,1]")?;
        ensure(self.theta >= 0.0, "model.theta", "must be non-negative")?;
        ensure(self.bequest_shift >= 0.0, "model.bequest_shift", "must be non-negative")?;
        ensure(
            self.theta == 0.0 || self.bequest_shift > 0.0,
            "model.bequest_shift",
            "must be positive when the bequest weight is positive",
        )?;
        ensure(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "model.lambda",
            "must be finite and non-negative",
        )?;
        ensure(self.r > -1.0, "model.r", "must exceed -1")?;
        ensure(
            self.work_hours > 0.0 && self.work_hours < 1.0,
            "model.work_hours",
            "must lie in (0,1)",
        )?;
        ensure(self.benefit >= 0.0, "model.benefit", "must be non-negative")?;
        ensure(self.state_pension >= 0.0, "model.state_pension", "must be non-negative")?;
        ensure(self.spouse_income >= 0.0, "model.spouse_income", "must be non-negative")?;
        ensure(
            (0.0..=1.0).contains(&self.p_spa_step),
            "spa.p_step",
            "must lie in [0,1]",
        )?;
        ensure(
            self.age_entry < self.age_start
                && self.age_start < self.age_work_end
                && self.age_work_end < self.age_death,
            "model.age_start",
            "ages must satisfy entry < start < work_end < death",
        )?;
        ensure(
            self.spa_init <= self.spa_cap && self.spa_cap <= self.age_death,
            "spa.cap",
            "must satisfy init <= cap <= age_death",
        )?;
        ensure(
            self.age_entry < self.spa_init,
            "spa.init",
            "must exceed the labour-market entry age",
        )?;
        ensure(
            self.aime_freeze_age > self.age_entry,
            "model.aime_freeze_age",
            "must exceed the entry age",
        )?;
        Ok(())
    }

    /// Leisure share for a labour choice.
    #[inline]
    pub fn leisure(&self, work: bool) -> f64 {
        if work {
            1.0 - self.work_hours
        } else {
            1.0
        }
    }

    /// Running-average year counter used by the AIME law.
    #[inline]
    pub fn work_year_index(&self, age: u32) -> u32 {
        age.saturating_sub(self.age_entry) + 1
    }

    pub fn n_spa(&self) -> usize {
        (self.spa_cap - self.spa_init + 1) as usize
    }
}

/// Household type: education and DB coverage determine the earnings and
/// unemployment processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile {
    pub type_id: u32,
    pub has_db: bool,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub sigma_eps: f64,
    pub sigma_init: f64,
    /// Probability of unemployment indexed by income node.
    pub unemp_prob: Vec<f64>,
    pub population_share: f64,
}

impl TypeProfile {
    /// Log of the deterministic part of the income offer.
    #[inline]
    pub fn log_earnings_profile(&self, age: u32) -> f64 {
        let t = age as f64;
        self.delta0 + self.delta1 * t + self.delta2 * t * t
    }

    pub fn validate(&self, n_income: usize) -> Result<()> {
        let key = |f: &str| format!("type.{}.{f}", self.type_id);
        ensure(
            (1..=4).contains(&self.type_id),
            &key("id"),
            "type id must be one of 1..=4",
        )?;
        ensure((0.0..1.0).contains(&self.rho), &key("rho"), "must lie in [0,1)")?;
        ensure(self.sigma_eps >= 0.0, &key("sigma_eps"), "must be non-negative")?;
        ensure(self.sigma_init >= 0.0, &key("sigma_init"), "must be non-negative")?;
        ensure(
            self.unemp_prob.len() == n_income,
            &key("unemp_prob"),
            format!("expected {n_income} entries, one per income node"),
        )?;
        ensure(
            self.unemp_prob.iter().all(|p| (0.0..=1.0).contains(p)),
            &key("unemp_prob"),
            "probabilities must lie in [0,1]",
        )?;
        ensure(
            self.population_share >= 0.0,
            &key("share"),
            "must be non-negative",
        )?;
        Ok(())
    }
}

/// Checks that type shares form a distribution.
pub fn validate_type_shares(types: &[TypeProfile]) -> Result<()> {
    if types.is_empty() {
        return Err(Error::config("type", "at least one household type is required"));
    }
    let total: f64 = types.iter().map(|t| t.population_share).sum();
    ensure(
        (total - 1.0).abs() <= 1e-12,
        "type.share",
        format!("shares must sum to 1 (got {total})"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbPensionParams {
    pub db1: f64,
    pub db2: f64,
}

impl Default for DbPensionParams {
    fn default() -> Self {
        Self {
            db1: 0.5914,
            db2: -4.232e-6,
        }
    }
}

impl DbPensionParams {
    /// Kink point `db1 / (2 db2)`; `None` when it is not positive and the
    /// quadratic applies everywhere.
    pub fn kink(&self) -> Option<f64> {
        if self.db2 == 0.0 {
            return None;
        }
        let k = self.db1 / (2.0 * self.db2);
        (k > 0.0).then_some(k)
    }
}

/// One-period survival probabilities by age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityTable {
    first_age: u32,
    survival: Vec<f64>,
}

impl MortalityTable {
    /// Builds a table covering `first_age..=age_death`. The last entry must be 0.
    pub fn new(first_age: u32, survival: Vec<f64>) -> Result<Self> {
        if survival.is_empty() {
            return Err(Error::config("mortality", "empty survival table"));
        }
        if survival.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::config("mortality", "survival probabilities must lie in [0,1]"));
        }
        if *survival.last().unwrap() != 0.0 {
            return Err(Error::config(
                "mortality",
                "survival at the terminal age must be 0",
            ));
        }
        Ok(Self {
            first_age,
            survival,
        })
    }

    /// Gompertz hazard `a * exp(b * (age - onset))` from `onset`, certain
    /// survival before it and certain death at `age_death`.
    pub fn gompertz(first_age: u32, age_death: u32, onset: u32, a: f64, b: f64) -> Result<Self> {
        if age_death < first_age {
            return Err(Error::config("mortality", "terminal age precedes first age"));
        }
        if a < 0.0 {
            return Err(Error::config("mortality.gompertz_a", "must be non-negative"));
        }
        let survival = (first_age..=age_death)
            .map(|age| {
                if age == age_death {
                    0.0
                } else if age < onset {
                    1.0
                } else {
                    let hazard = a * (b * (age - onset) as f64).exp();
                    (1.0 - hazard).clamp(0.0, 1.0)
                }
            })
            .collect();
        Self::new(first_age, survival)
    }

    #[inline]
    pub fn survival(&self, age: u32) -> f64 {
        if age < self.first_age {
            return 1.0;
        }
        let idx = (age - self.first_age) as usize;
        self.survival.get(idx).copied().unwrap_or(0.0)
    }

    pub fn last_age(&self) -> u32 {
        self.first_age + self.survival.len() as u32 - 1
    }
}

/// Period utility of a living agent, `(c^nu l^(1-nu))^(1-gamma) / (1-gamma)`.
pub fn flow_utility(c: f64, l: f64, params: &ModelParams) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("consumption must be positive, got {c}")));
    }
    if !(l > 0.0 && l <= 1.0) {
        return Err(Error::Domain(format!("leisure must lie in (0,1], got {l}")));
    }
    Ok(flow_utility_unchecked(c.ln(), l.ln(), params))
}

/// Flow utility from `ln c` and `ln l`; the caller guarantees the domain.
#[inline]
pub(crate) fn flow_utility_unchecked(ln_c: f64, ln_l: f64, params: &ModelParams) -> f64 {
    let one_minus_gamma = 1.0 - params.gamma;
    (one_minus_gamma * (params.nu * ln_c + (1.0 - params.nu) * ln_l)).exp() / one_minus_gamma
}

/// Warm-glow utility of leaving `a`, `theta (a+K)^(nu(1-gamma)) / (1-gamma)`.
pub fn bequest_utility(a: f64, params: &ModelParams) -> Result<f64> {
    if a < 0.0 {
        return Err(Error::Domain(format!("bequest must be non-negative, got {a}")));
    }
    if params.theta == 0.0 {
        return Ok(0.0);
    }
    let base = a + params.bequest_shift;
    if !(base > 0.0) {
        return Err(Error::Domain(format!(
            "bequest plus shifter must be positive, got {base}"
        )));
    }
    let one_minus_gamma = 1.0 - params.gamma;
    Ok(params.theta * (params.nu * one_minus_gamma * base.ln()).exp() / one_minus_gamma)
}

/// Defined-benefit pension as a function of AIME.
pub fn db_pension(aime: f64, db: &DbPensionParams) -> Result<f64> {
    if aime < 0.0 {
        return Err(Error::Domain(format!("AIME must be non-negative, got {aime}")));
    }
    let quad = |x: f64| db.db1 * x - db.db2 * x * x;
    Ok(match db.kink() {
        Some(k) if aime >= k => quad(k),
        _ => quad(aime),
    })
}

/// One step of the AIME law: a running average of earnings over working
/// years, frozen from `aime_freeze_age` on.
pub fn aime_update(
    aime_prev: f64,
    work_year_index: u32,
    worked: bool,
    y: f64,
    age: u32,
    params: &ModelParams,
) -> f64 {
    if age >= params.aime_freeze_age || work_year_index == 0 {
        return aime_prev;
    }
    let t = work_year_index as f64;
    let earned = if worked { y } else { 0.0 };
    (aime_prev * (t - 1.0) + earned) / t
}

/// Inputs to the period budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub assets: f64,
    pub age: u32,
    pub work: bool,
    pub income: f64,
    pub unemployed: bool,
    pub receiving: bool,
    pub has_db: bool,
    pub aime: f64,
}

/// Individual resource flows making up cash on hand.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BudgetTerms {
    pub gross_assets: f64,
    pub labor: f64,
    pub benefit: f64,
    pub state_pension: f64,
    pub spouse: f64,
    pub db: f64,
}

impl BudgetTerms {
    #[inline]
    pub fn total(&self) -> f64 {
        self.gross_assets + self.labor + self.benefit + self.state_pension + self.spouse + self.db
    }
}

pub fn budget_terms(inp: &BudgetInputs, params: &ModelParams, db: &DbPensionParams) -> BudgetTerms {
    let leisure = !inp.work;
    let spouse_age = inp.age as i64 + params.spouse_age_offset as i64;
    BudgetTerms {
        gross_assets: (1.0 + params.r) * inp.assets,
        labor: if inp.work { inp.income } else { 0.0 },
        benefit: if leisure && inp.unemployed { params.benefit } else { 0.0 },
        state_pension: if inp.receiving { params.state_pension } else { 0.0 },
        spouse: if spouse_age < params.age_spouse_retire as i64 {
            params.spouse_income
        } else {
            params.state_pension
        },
        db: if leisure && inp.has_db && inp.age >= params.age_db {
            db_pension(inp.aime.max(0.0), db).unwrap_or(0.0)
        } else {
            0.0
        },
    }
}

/// Resources available for consumption and saving this period.
pub fn cash_on_hand(inp: &BudgetInputs, params: &ModelParams, db: &DbPensionParams) -> f64 {
    budget_terms(inp, params, db).total()
}

/// Probability distribution over SPA values `spa_init..=spa_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaDist {
    first: u32,
    probs: Vec<f64>,
}

impl SpaDist {
    pub fn zeros(params: &ModelParams) -> Self {
        Self {
            first: params.spa_init,
            probs: vec![0.0; params.n_spa()],
        }
    }

    pub fn point(spa: u32, params: &ModelParams) -> Self {
        let mut d = Self::zeros(params);
        d.probs[(spa - params.spa_init) as usize] = 1.0;
        d
    }

    pub fn from_probs(first: u32, probs: Vec<f64>) -> Self {
        Self { first, probs }
    }

    #[inline]
    pub fn prob(&self, spa: u32) -> f64 {
        if spa < self.first {
            return 0.0;
        }
        self.probs
            .get((spa - self.first) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn first(&self) -> u32 {
        self.first
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn add(&mut self, spa: u32, mass: f64) {
        self.probs[(spa - self.first) as usize] += mass;
    }

    /// `(spa, prob)` pairs with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(i, p)| (self.first + i as u32, *p))
    }

    pub fn support_len(&self) -> usize {
        self.probs.iter().filter(|p| **p > 0.0).count()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Most likely SPA, ties resolved toward the lower age.
    pub fn mode(&self) -> u32 {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        self.first + best as u32
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(s, p)| s as f64 * p).sum::<f64>() / self.total()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Rescales to unit mass; fails when the mass is zero.
    pub fn normalize(&mut self) -> Result<()> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::Logic("cannot normalise a zero-mass SPA distribution".into()));
        }
        self.probs.iter_mut().for_each(|p| *p /= total);
        Ok(())
    }

    /// Drops all mass on SPA values `<= age` (costless non-receipt news).
    pub fn condition_above(&mut self, age: u32) -> Result<()> {
        for (i, p) in self.probs.iter_mut().enumerate() {
            if self.first + i as u32 <= age {
                *p = 0.0;
            }
        }
        self.normalize()
    }

    /// One step of the SPA process applied to a not-yet-received SPA.
    pub fn propagate(&self, params: &ModelParams) -> SpaDist {
        let mut next = SpaDist::zeros(params);
        for (spa, mass) in self.support() {
            if spa < params.spa_cap {
                next.add(spa, mass * (1.0 - params.p_spa_step));
                next.add(spa + 1, mass * params.p_spa_step);
            } else {
                next.add(spa, mass);
            }
        }
        next
    }
}

/// Law of next period's SPA.
pub fn spa_transition(spa: u32, receiving: bool, params: &ModelParams) -> Result<SpaDist> {
    if spa < params.spa_init || spa > params.spa_cap {
        return Err(Error::Domain(format!(
            "SPA {spa} outside [{}, {}]",
            params.spa_init, params.spa_cap
        )));
    }
    if receiving {
        return Ok(SpaDist::point(spa, params));
    }
    Ok(SpaDist::point(spa, params).propagate(params))
}

/// Belief about the current SPA held at `age` by someone who entered the
/// labour market sure that SPA equals `spa_init`, has watched the process
/// since, and has not yet started receiving the pension.
pub fn no_receipt_prior(age: u32, params: &ModelParams) -> Result<SpaDist> {
    if age < params.age_entry || age >= params.spa_cap {
        return Err(Error::Domain(format!(
            "no-receipt prior defined for ages {}..{}, got {age}",
            params.age_entry, params.spa_cap
        )));
    }
    let mut dist = SpaDist::point(params.spa_init, params);
    for s in params.age_entry + 1..=age {
        dist = dist.propagate(params);
        dist.condition_above(s)?;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn utility_at_unit_consumption() {
        let u = flow_utility(1.0, 1.0, &params()).unwrap();
        assert_relative_eq!(u, 1.0 / (1.0 - 2.32), epsilon = 1e-15);
        assert_relative_eq!(u, -0.757_575_757_575_757_6, epsilon = 1e-15);
    }

    #[test]
    fn utility_reference_value() {
        let p = ModelParams {
            gamma: 2.0,
            nu: 0.5,
            ..params()
        };
        // -(2^0.5 * 0.7^0.5)^-1 = -1/sqrt(1.4)
        let u = flow_utility(2.0, 0.7, &p).unwrap();
        assert_relative_eq!(u, -0.845_154_254_728_516_6, epsilon = 1e-14);
    }

    #[test]
    fn utility_rejects_zero_consumption() {
        assert!(matches!(flow_utility(0.0, 1.0, &params()), Err(Error::Domain(_))));
        assert!(flow_utility(-3.0, 1.0, &params()).is_err());
    }

    #[test]
    fn bequest_cases() {
        let p = ModelParams {
            bequest_shift: 1.0,
            ..params()
        };
        assert_relative_eq!(
            bequest_utility(0.0, &p).unwrap(),
            p.theta / (1.0 - p.gamma),
            epsilon = 1e-15
        );
        let none = ModelParams { theta: 0.0, ..p.clone() };
        assert_eq!(bequest_utility(12345.0, &none).unwrap(), 0.0);

        let q = ModelParams {
            bequest_shift: 500.0,
            ..params()
        };
        // theta * 10500^(0.288 * -1.32) / -1.32, evaluated independently
        let expected = 2.899e-2 * 10500f64.powf(0.288 * -1.32) / -1.32;
        assert_relative_eq!(bequest_utility(10000.0, &q).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, -0.000_650_098_195, max_relative = 1e-9);
    }

    #[test]
    fn bequest_domain() {
        let p = ModelParams {
            bequest_shift: 0.0,
            ..params()
        };
        assert!(bequest_utility(0.0, &p).is_err());
        assert!(bequest_utility(-1.0, &params()).is_err());
    }

    #[test]
    fn db_pension_cases() {
        let table6 = DbPensionParams::default();
        assert_eq!(db_pension(0.0, &table6).unwrap(), 0.0);
        assert_relative_eq!(db_pension(10_000.0, &table6).unwrap(), 6337.2, epsilon = 1e-9);
        let capped = DbPensionParams { db1: 0.5, db2: 0.25 };
        assert_eq!(capped.kink(), Some(1.0));
        assert_relative_eq!(db_pension(2.0, &capped).unwrap(), 0.25);
        assert_relative_eq!(db_pension(0.5, &capped).unwrap(), 0.25 - 0.0625);
        assert!(db_pension(-1.0, &table6).is_err());
    }

    #[test]
    fn aime_cases() {
        let p = params();
        assert_eq!(aime_update(10.0, 2, true, 20.0, 50, &p), 15.0);
        assert_eq!(aime_update(10.0, 2, false, 20.0, 50, &p), 5.0);
        assert_eq!(aime_update(10.0, 2, true, 20.0, 65, &p), 10.0);
        assert_eq!(aime_update(10.0, 46, true, 1e6, 90, &p), 10.0);
        assert_eq!(p.work_year_index(20), 1);
        assert_eq!(p.work_year_index(52), 33);
    }

    #[test]
    fn budget_examples() {
        let p = params();
        let db = DbPensionParams::default();
        let base = BudgetInputs {
            assets: 0.0,
            age: 55,
            work: false,
            income: 9000.0,
            unemployed: true,
            receiving: false,
            has_db: true,
            aime: 10_000.0,
        };
        assert_eq!(cash_on_hand(&base, &p, &db), p.benefit + p.spouse_income);

        let rich = BudgetInputs {
            assets: 100.0,
            age: 66,
            work: true,
            income: 50.0,
            unemployed: false,
            receiving: true,
            ..base
        };
        let expect = 102.0 + 50.0 + p.state_pension + p.state_pension;
        assert_relative_eq!(cash_on_hand(&rich, &p, &db), expect, epsilon = 1e-12);

        let idle = BudgetInputs {
            unemployed: false,
            ..base
        };
        assert_eq!(budget_terms(&idle, &p, &db).benefit, 0.0);

        let retired_db = BudgetInputs {
            age: 66,
            work: false,
            unemployed: false,
            ..base
        };
        assert_relative_eq!(budget_terms(&retired_db, &p, &db).db, 6337.2, epsilon = 1e-9);
        let working_db = BudgetInputs {
            work: true,
            ..retired_db
        };
        assert_eq!(budget_terms(&working_db, &p, &db).db, 0.0);
    }

    #[test]
    fn spa_transition_cases() {
        let p = params();
        assert_eq!(spa_transition(70, false, &p).unwrap(), SpaDist::point(70, &p));
        let d = spa_transition(60, false, &p).unwrap();
        assert_relative_eq!(d.prob(60), 0.94);
        assert_relative_eq!(d.prob(61), 0.06);
        assert_eq!(spa_transition(62, true, &p).unwrap(), SpaDist::point(62, &p));
        assert!(spa_transition(59, false, &p).is_err());
        assert!(spa_transition(71, false, &p).is_err());
    }

    /// Brute-force enumeration of SPA paths from entry, keeping those that
    /// never hit receipt.
    fn prior_by_paths(age: u32, p: &ModelParams) -> Vec<f64> {
        let mut states: Vec<(u32, f64)> = vec![(p.spa_init, 1.0)];
        for s in p.age_entry + 1..=age {
            let mut next = Vec::new();
            for (spa, w) in states {
                let moves: Vec<(u32, f64)> = if spa < p.spa_cap {
                    vec![(spa, 1.0 - p.p_spa_step), (spa + 1, p.p_spa_step)]
                } else {
                    vec![(spa, 1.0)]
                };
                for (n, q) in moves {
                    if n > s {
                        next.push((n, w * q));
                    }
                }
            }
            // merge
            let mut merged: Vec<(u32, f64)> = Vec::new();
            for (n, w) in next {
                match merged.iter_mut().find(|(m, _)| *m == n) {
                    Some(e) => e.1 += w,
                    None => merged.push((n, w)),
                }
            }
            states = merged;
        }
        let total: f64 = states.iter().map(|s| s.1).sum();
        let mut out = vec![0.0; p.n_spa()];
        for (spa, w) in states {
            out[(spa - p.spa_init) as usize] = w / total;
        }
        out
    }

    #[test]
    fn prior_endpoints() {
        let p = params();
        assert_eq!(no_receipt_prior(20, &p).unwrap(), SpaDist::point(60, &p));
        assert_eq!(no_receipt_prior(69, &p).unwrap(), SpaDist::point(70, &p));
        assert!(no_receipt_prior(70, &p).is_err());
        assert!(no_receipt_prior(19, &p).is_err());
    }

    #[test]
    fn prior_at_start_matches_path_enumeration() {
        let p = params();
        let prior = no_receipt_prior(52, &p).unwrap();
        let oracle = prior_by_paths(52, &p);
        for (a, b) in prior.probs().iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, epsilon = 1e-13);
        }
        assert_eq!(prior.support_len(), 11);
        assert_relative_eq!(prior.total(), 1.0, epsilon = 1e-12);
        // Binomial(32, 0.06): P(0) = 0.94^32
        assert_relative_eq!(prior.prob(60), 0.94f64.powi(32), max_relative = 1e-12);
        assert_eq!(prior.mode(), 61);
        for age in [58, 61, 64, 67, 68] {
            let d = no_receipt_prior(age, &p).unwrap();
            let o = prior_by_paths(age, &p);
            for (a, b) in d.probs().iter().zip(&o) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
            assert!(d.support().all(|(s, _)| s > age));
        }
        assert_eq!(no_receipt_prior(58, &p).unwrap().mode(), 62);
    }

    #[test]
    fn degenerate_process_prior() {
        let p = ModelParams {
            p_spa_step: 0.0,
            ..params()
        };
        assert_eq!(no_receipt_prior(52, &p).unwrap(), SpaDist::point(60, &p));
    }

    #[test]
    fn gompertz_table_shape() {
        let t = MortalityTable::gompertz(20, 105, 60, 0.006, 0.095).unwrap();
        assert_eq!(t.survival(59), 1.0);
        assert!(t.survival(60) < 1.0);
        assert_eq!(t.survival(105), 0.0);
        assert!(t.survival(90) < t.survival(70));
        assert!(MortalityTable::new(20, vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(params().validate().is_ok());
        let bad = ModelParams { gamma: 1.0, ..params() };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "model.gamma"));
        let bad = ModelParams { nu: 1.0, ..params() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { p_spa_step: 1.5, ..params() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { age_start: 90, ..params() };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn utility_increasing_in_consumption(c in 1.0f64..1e6, dc in 1.0f64..1e5) {
                let p = ModelParams::default();
                let lo = flow_utility(c, 1.0, &p).unwrap();
                let hi = flow_utility(c + dc, 1.0, &p).unwrap();
                prop_assert!(hi > lo);
                let worked = flow_utility(c, p.leisure(true), &p).unwrap();
                prop_assert!(lo >= worked);
            }

            #[test]
            fn transitions_are_distributions(spa in 60u32..=70, recv in any::<bool>(), step in 0.0f64..=1.0) {
                let p = ModelParams { p_spa_step: step, ..ModelParams::default() };
                let d = spa_transition(spa, recv, &p).unwrap();
                prop_assert!((d.total() - 1.0).abs() <= 1e-12);
                prop_assert!(d.probs().iter().all(|x| *x >= 0.0));
                prop_assert!(d.support().all(|(s, _)| s >= spa));
            }

            #[test]
            fn budget_is_additive(
                a in 0.0f64..1e6, y in 0.0f64..1e5, aime in 0.0f64..5e4,
                age in 52u32..105, work in any::<bool>(), unemp in any::<bool>(),
                recv in any::<bool>(), has_db in any::<bool>(),
            ) {
                let p = ModelParams::default();
                let db = DbPensionParams::default();
                let inp = BudgetInputs { assets: a, age, work, income: y, unemployed: unemp, receiving: recv, has_db, aime };
                let t = budget_terms(&inp, &p, &db);
                let manual = (1.0 + p.r) * a
                    + if work { y } else { 0.0 }
                    + if !work && unemp { p.benefit } else { 0.0 }
                    + if recv { p.state_pension } else { 0.0 }
                    + if age < 65 { p.spouse_income } else { p.state_pension }
                    + if !work && has_db && age >= 65 { db_pension(aime, &db).unwrap() } else { 0.0 };
                prop_assert_eq!(cash_on_hand(&inp, &p, &db), t.total());
                prop_assert!((t.total() - manual).abs() <= 1e-9 * manual.abs().max(1.0));
            }

            #[test]
            fn aime_frozen_after_freeze(prev in 0.0f64..1e5, y in 0.0f64..1e5, age in 65u32..105, w in any::<bool>()) {
                let p = ModelParams::default();
                prop_assert_eq!(aime_update(prev, p.work_year_index(age), w, y, age, &p), prev);
            }
        }
    }
}
