//! The assembled model (parameters, types, grids, chains) and the indexing of
//! its discrete state and decision spaces.

use serde::{Deserialize, Serialize};

use crate::discretization::{build_grid, discretize_ar1, Grid, MarkovChain};
use crate::error::{Error, Result};
use crate::model::{validate_type_shares, DbPensionParams, ModelParams, MortalityTable, TypeProfile};

/// Grid sizes and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub assets_n: usize,
    pub assets_max: f64,
    pub assets_curvature: f64,
    pub aime_n: usize,
    pub aime_max: f64,
    pub aime_curvature: f64,
    pub income_n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            assets_n: 30,
            assets_max: 1_000_000.0,
            assets_curvature: 3.0,
            aime_n: 3,
            aime_max: 30_000.0,
            aime_curvature: 1.0,
            income_n: 5,
        }
    }
}

/// Gompertz mortality parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortalitySpec {
    pub onset: u32,
    pub a: f64,
    pub b: f64,
}

impl Default for MortalitySpec {
    fn default() -> Self {
        Self {
            onset: 60,
            a: 0.006,
            b: 0.095,
        }
    }
}

/// Everything needed to build a [`Model`]. Preferences and DB coefficients
/// default to the published estimates; the earnings, unemployment,
/// mortality, price and grid inputs are illustrative placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: ModelParams,
    pub db: DbPensionParams,
    pub types: Vec<TypeProfile>,
    pub mortality: MortalitySpec,
    pub grids: GridSpec,
}

impl Default for Calibration {
    fn default() -> Self {
        let low = [0.10, 0.07, 0.05, 0.035, 0.025];
        let high = [0.07, 0.05, 0.03, 0.02, 0.015];
        let mk = |type_id, has_db, delta0, unemp: &[f64], share| TypeProfile {
            type_id,
            has_db,
            delta0,
            delta1: 0.08,
            delta2: -0.0009,
            rho: 0.92,
            sigma_eps: 0.12,
            sigma_init: 0.3,
            unemp_prob: unemp.to_vec(),
            population_share: share,
        };
        Self {
            params: ModelParams::default(),
            db: DbPensionParams::default(),
            types: vec![
                mk(1, false, 7.48, &low, 0.35),
                mk(2, true, 7.48, &low, 0.15),
                mk(3, false, 8.01, &high, 0.2),
                mk(4, true, 8.01, &high, 0.3),
            ],
            mortality: MortalitySpec::default(),
            grids: GridSpec::default(),
        }
    }
}

/// A fully built model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub db: DbPensionParams,
    pub types: Vec<TypeProfile>,
    pub mortality: MortalityTable,
    pub assets: Grid,
    pub aime: Grid,
    /// One income chain per type, all with the same number of nodes.
    pub income: Vec<MarkovChain>,
}

impl Model {
    pub fn build(cal: &Calibration) -> Result<Self> {
        cal.params.validate()?;
        let g = &cal.grids;
        let assets = build_grid(0.0, g.assets_max, g.assets_n, g.assets_curvature)
            .map_err(|e| Error::config("grid.assets", e.to_string()))?;
        let aime = build_grid(0.0, g.aime_max, g.aime_n, g.aime_curvature)
            .map_err(|e| Error::config("grid.aime", e.to_string()))?;
        let income = cal
            .types
            .iter()
            .map(|t| {
                discretize_ar1(t.rho, t.sigma_eps, g.income_n)
                    .and_then(|c| c.with_initial_normal(t.sigma_init))
                    .map_err(|e| Error::config(format!("type.{}.rho", t.type_id), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let m = &cal.mortality;
        let mortality = MortalityTable::gompertz(
            cal.params.age_entry,
            cal.params.age_death,
            m.onset,
            m.a,
            m.b,
        )?;
        Self::from_parts(
            cal.params.clone(),
            cal.db,
            cal.types.clone(),
            mortality,
            assets,
            aime,
            income,
        )
    }

    pub fn from_parts(
        params: ModelParams,
        db: DbPensionParams,
        types: Vec<TypeProfile>,
        mortality: MortalityTable,
        assets: Grid,
        aime: Grid,
        income: Vec<MarkovChain>,
    ) -> Result<Self> {
        params.validate()?;
        validate_type_shares(&types)?;
        if income.len() != types.len() {
            return Err(Error::config("income", "one income chain per type is required"));
        }
        let n_income = income[0].len();
        if income.iter().any(|c| c.len() != n_income) {
            return Err(Error::config("income.n", "all income chains must share a size"));
        }
        for t in &types {
            t.validate(n_income)?;
        }
        if assets.min() != 0.0 {
            return Err(Error::config("grid.assets", "first asset point must be 0"));
        }
        if aime.min() < 0.0 {
            return Err(Error::config("grid.aime", "AIME grid must be non-negative"));
        }
        if mortality.last_age() != params.age_death || mortality.survival(params.age_death) != 0.0 {
            return Err(Error::config("mortality", "table must end at age_death with survival 0"));
        }
        Ok(Self {
            params,
            db,
            types,
            mortality,
            assets,
            aime,
            income,
        })
    }

    pub fn space(&self) -> StateSpace {
        StateSpace {
            n_types: self.types.len(),
            n_assets: self.assets.len(),
            n_income: self.income[0].len(),
            n_aime: self.aime.len(),
            spa_init: self.params.spa_init,
            spa_cap: self.params.spa_cap,
        }
    }

    /// Income offer for a type at an age and income node.
    #[inline]
    pub fn income_offer(&self, type_idx: usize, age: u32, node: usize) -> f64 {
        (self.types[type_idx].log_earnings_profile(age) + self.income[type_idx].nodes()[node]).exp()
    }

    pub fn n_decisions(&self) -> usize {
        2 * self.assets.len()
    }

    /// Decision ages, `age_start..age_death`.
    pub fn decision_ages(&self) -> std::ops::Range<u32> {
        self.params.age_start..self.params.age_death
    }
}

/// The freely observed part of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WPoint {
    pub type_idx: usize,
    pub asset: usize,
    pub income: usize,
    pub aime: usize,
    pub unemployed: bool,
}

/// Pension receipt status together with the SPA when not yet received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaSlot {
    Receiving,
    Pending(u32),
}

/// A choice of next-period asset node and labour supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub next_asset: usize,
    pub work: bool,
}

impl Decision {
    /// Position in the canonical ordering: by asset node, leisure first.
    #[inline]
    pub fn index(&self) -> usize {
        2 * self.next_asset + self.work as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        Self {
            next_asset: i / 2,
            work: i % 2 == 1,
        }
    }
}

/// Shape of the discrete state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub n_types: usize,
    pub n_assets: usize,
    pub n_income: usize,
    pub n_aime: usize,
    pub spa_init: u32,
    pub spa_cap: u32,
}

impl StateSpace {
    pub fn n_w(&self) -> usize {
        self.n_types * self.n_assets * self.n_income * self.n_aime * 2
    }

    #[inline]
    pub fn w_index(&self, w: &WPoint) -> usize {
        (((w.type_idx * self.n_assets + w.asset) * self.n_income + w.income) * self.n_aime + w.aime) * 2
            + w.unemployed as usize
    }

    #[inline]
    pub fn w_point(&self, mut idx: usize) -> WPoint {
        let unemployed = idx % 2 == 1;
        idx /= 2;
        let aime = idx % self.n_aime;
        idx /= self.n_aime;
        let income = idx % self.n_income;
        idx /= self.n_income;
        let asset = idx % self.n_assets;
        let type_idx = idx / self.n_assets;
        WPoint {
            type_idx,
            asset,
            income,
            aime,
            unemployed,
        }
    }

    pub fn n_slots(&self) -> usize {
        1 + (self.spa_cap - self.spa_init + 1) as usize
    }

    #[inline]
    pub fn slot_index(&self, slot: SpaSlot) -> usize {
        match slot {
            SpaSlot::Receiving => 0,
            SpaSlot::Pending(spa) => 1 + (spa - self.spa_init) as usize,
        }
    }

    #[inline]
    pub fn slot_from_index(&self, i: usize) -> SpaSlot {
        if i == 0 {
            SpaSlot::Receiving
        } else {
            SpaSlot::Pending(self.spa_init + i as u32 - 1)
        }
    }

    /// Receipt is possible once the earliest SPA has been reached.
    pub fn receiving_valid(&self, age: u32) -> bool {
        age >= self.spa_init
    }

    /// SPA values compatible with not receiving at `age`.
    pub fn pending_spas(&self, age: u32) -> std::ops::RangeInclusive<u32> {
        let lo = (age + 1).max(self.spa_init);
        lo..=self.spa_cap
    }

    /// All valid slots at `age`, receiving first.
    pub fn valid_slots(&self, age: u32) -> Vec<SpaSlot> {
        let mut v = Vec::with_capacity(self.n_slots());
        if self.receiving_valid(age) {
            v.push(SpaSlot::Receiving);
        }
        v.extend(self.pending_spas(age).map(SpaSlot::Pending));
        v
    }

    #[inline]
    pub fn table_index(&self, w: usize, slot: usize) -> usize {
        w * self.n_slots() + slot
    }
}
