//! Full-information solution by backward induction.
//!
//! The SPA is part of the observed state. With `p_spa_step = 0` it never
//! moves; with a positive step probability it evolves but is always seen.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{terminal_values, Stage};
use crate::error::{Error, Result};
use crate::space::{Decision, Model, SpaSlot, WPoint};

mod brute_force;

pub use brute_force::{brute_force_enumerate, BruteForceResult, TinyProblem, MAX_PATHS};

/// Sentinel for slots that cannot occur at an age.
pub const NO_DECISION: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRe {
    pub model: Model,
    /// `values[age - age_start]` for ages `age_start..=age_death`.
    values: Vec<Vec<f64>>,
    /// `policy[age - age_start]` for decision ages.
    policy: Vec<Vec<u32>>,
}

impl SolutionRe {
    fn age_idx(&self, age: u32) -> Option<usize> {
        let p = &self.model.params;
        (age >= p.age_start && age <= p.age_death).then(|| (age - p.age_start) as usize)
    }

    pub fn value_table(&self, age: u32) -> Option<&[f64]> {
        self.age_idx(age).map(|i| self.values[i].as_slice())
    }

    pub fn policy_table(&self, age: u32) -> Option<&[u32]> {
        self.age_idx(age).and_then(|i| self.policy.get(i)).map(|v| v.as_slice())
    }

    /// Value at a state; `None` if the slot is impossible at that age.
    pub fn value(&self, age: u32, w: &WPoint, slot: SpaSlot) -> Option<f64> {
        let sp = self.model.space();
        let v = self.value_table(age)?[sp.table_index(sp.w_index(w), sp.slot_index(slot))];
        (!v.is_nan()).then_some(v)
    }

    pub fn policy(&self, age: u32, w: &WPoint, slot: SpaSlot) -> Option<Decision> {
        let sp = self.model.space();
        let d = self.policy_table(age)?[sp.table_index(sp.w_index(w), sp.slot_index(slot))];
        (d != NO_DECISION).then(|| Decision::from_index(d as usize))
    }
}

/// All decisions with positive consumption at a state.
pub fn feasible_choices(model: &Model, age: u32, w: &WPoint, slot: SpaSlot) -> Result<Vec<Decision>> {
    let sp = model.space();
    let next = terminal_values(model)?;
    let stage = Stage::new(model, age, &next)?;
    let z = stage.z_table(sp.w_index(w), slot == SpaSlot::Receiving, &[sp.slot_index(slot)])?;
    Ok(z.decisions.iter().map(|&d| Decision::from_index(d as usize)).collect())
}

/// Values and policies at `age` given next-period values.
pub fn bellman_step(model: &Model, age: u32, next: &[f64]) -> Result<(Vec<f64>, Vec<u32>)> {
    let stage = Stage::new(model, age, next)?;
    let sp = stage.space;
    let n_slots = sp.n_slots();
    let pending: Vec<usize> = sp
        .pending_spas(age)
        .map(|s| sp.slot_index(SpaSlot::Pending(s)))
        .collect();
    let receiving = sp.receiving_valid(age);

    let mut values = vec![f64::NAN; sp.n_w() * n_slots];
    let mut policy = vec![NO_DECISION; sp.n_w() * n_slots];
    values
        .par_chunks_mut(n_slots)
        .zip(policy.par_chunks_mut(n_slots))
        .enumerate()
        .try_for_each(|(w, (vrow, prow))| -> Result<()> {
            if receiving {
                let z = stage.z_table(w, true, &[0])?;
                let (i, v) = z.argmax(0);
                vrow[0] = v;
                prow[0] = z.decisions[i];
            }
            if !pending.is_empty() {
                let z = stage.z_table(w, false, &pending)?;
                for (si, &slot) in pending.iter().enumerate() {
                    let (i, v) = z.argmax(si);
                    vrow[slot] = v;
                    prow[slot] = z.decisions[i];
                }
            }
            Ok(())
        })?;
    Ok((values, policy))
}

pub fn solve_re(model: &Model) -> Result<SolutionRe> {
    let p = &model.params;
    let n_ages = (p.age_death - p.age_start + 1) as usize;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_ages];
    let mut policy: Vec<Vec<u32>> = vec![Vec::new(); n_ages - 1];
    values[n_ages - 1] = terminal_values(model)?;
    for age in (p.age_start..p.age_death).rev() {
        let i = (age - p.age_start) as usize;
        let (v, pol) = bellman_step(model, age, &values[i + 1])?;
        if v.iter().any(|x| x.is_infinite()) {
            return Err(Error::Domain(format!("non-finite value at age {age}")));
        }
        values[i] = v;
        policy[i] = pol;
    }
    Ok(SolutionRe {
        model: model.clone(),
        values,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::ZTable;
    use crate::space::Calibration;
    use std::sync::OnceLock;

    fn small_model() -> Model {
        let mut cal = Calibration::default();
        cal.grids.assets_n = 8;
        cal.grids.income_n = 3;
        cal.grids.aime_n = 2;
        for t in &mut cal.types {
            t.unemp_prob.truncate(3);
        }
        Model::build(&cal).unwrap()
    }

    fn solved() -> &'static SolutionRe {
        static S: OnceLock<SolutionRe> = OnceLock::new();
        S.get_or_init(|| solve_re(&small_model()).unwrap())
    }

    #[test]
    fn unemployed_and_old_cannot_work() {
        let m = small_model();
        let mut w = WPoint {
            type_idx: 0,
            asset: 3,
            income: 1,
            aime: 0,
            unemployed: true,
        };
        let d = feasible_choices(&m, 55, &w, SpaSlot::Pending(60)).unwrap();
        assert!(!d.is_empty() && d.iter().all(|d| !d.work));
        w.unemployed = false;
        let d = feasible_choices(&m, 85, &w, SpaSlot::Receiving).unwrap();
        assert!(!d.is_empty() && d.iter().all(|d| !d.work));
        let d = feasible_choices(&m, 55, &w, SpaSlot::Pending(60)).unwrap();
        assert!(d.iter().any(|d| d.work));
    }

    #[test]
    fn infeasible_savings_excluded() {
        let m = small_model();
        let w = WPoint {
            type_idx: 0,
            asset: 0,
            income: 0,
            aime: 0,
            unemployed: true,
        };
        let d = feasible_choices(&m, 55, &w, SpaSlot::Pending(60)).unwrap();
        assert!(d.iter().all(|d| d.next_asset < m.assets.len() - 1));
        assert!(d.contains(&Decision { next_asset: 0, work: false }));
    }

    #[test]
    fn terminal_stage_is_bequest() {
        let s = solved();
        let m = &s.model;
        let sp = m.space();
        let v = s.value_table(m.params.age_death).unwrap();
        for w in 0..sp.n_w() {
            let a = m.assets.get(sp.w_point(w).asset);
            let b = crate::model::bequest_utility(a, &m.params).unwrap();
            assert_eq!(v[sp.table_index(w, 0)], b);
        }
    }

    #[test]
    fn value_monotone_in_assets() {
        let s = solved();
        let m = &s.model;
        let sp = m.space();
        for age in m.params.age_start..=m.params.age_death {
            let v = s.value_table(age).unwrap();
            for w in 0..sp.n_w() {
                let wp = sp.w_point(w);
                if wp.asset == 0 {
                    continue;
                }
                let lower = sp.w_index(&WPoint { asset: wp.asset - 1, ..wp });
                for slot in 0..sp.n_slots() {
                    let (hi, lo) = (v[sp.table_index(w, slot)], v[sp.table_index(lower, slot)]);
                    if hi.is_nan() {
                        continue;
                    }
                    assert!(hi >= lo, "age {age} w {wp:?} slot {slot}: {hi} < {lo}");
                }
            }
        }
    }

    #[test]
    fn bellman_residual_of_stored_policy() {
        let s = solved();
        let m = &s.model;
        let sp = m.space();
        for age in [52, 59, 64, 70, 90, 104] {
            let stage = Stage::new(m, age, s.value_table(age + 1).unwrap()).unwrap();
            let v = s.value_table(age).unwrap();
            let pol = s.policy_table(age).unwrap();
            for w in 0..sp.n_w() {
                for slot in sp.valid_slots(age) {
                    let si = sp.slot_index(slot);
                    let z: ZTable = stage.z_table(w, slot == SpaSlot::Receiving, &[si]).unwrap();
                    let d = pol[sp.table_index(w, si)];
                    let pos = z.decisions.iter().position(|&x| x == d).unwrap();
                    let stored = v[sp.table_index(w, si)];
                    assert!((z.row(0)[pos] - stored).abs() <= 1e-10 * stored.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn pension_raise_weakly_raises_value() {
        let base = solved();
        let mut m = small_model();
        m.params.state_pension += 500.0;
        let richer = solve_re(&m).unwrap();
        for age in [52, 60, 66, 80] {
            let (a, b) = (base.value_table(age).unwrap(), richer.value_table(age).unwrap());
            for (x, y) in a.iter().zip(b) {
                if !x.is_nan() {
                    assert!(y >= x);
                }
            }
        }
    }

    #[test]
    fn no_bequest_and_full_survival_drop_bequest_term() {
        let mut m = small_model();
        m.params.theta = 0.0;
        let n = m.space().n_w() * m.space().n_slots();
        let zero = vec![0.0; n];
        let (v, _) = bellman_step(&m, 104, &zero).unwrap();
        // continuation and bequest are both zero, so value is the best flow utility
        let sp = m.space();
        let stage = Stage::new(&m, 104, &zero).unwrap();
        for w in (0..sp.n_w()).step_by(7) {
            let z = stage.z_table(w, true, &[0]).unwrap();
            let best = z.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(v[sp.table_index(w, 0)], best);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let m = small_model();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| solve_re(&m).unwrap());
        let bits = |s: &SolutionRe| -> Vec<u64> { s.values.iter().flatten().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&single), bits(solved()));
        assert_eq!(single.policy, solved().policy);
    }
}
