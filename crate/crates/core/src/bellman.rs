//! One backward-induction stage: decision values at a given age, shared by
//! the RE and RI solvers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{aime_update, bequest_utility, cash_on_hand, flow_utility_unchecked, BudgetInputs};
use crate::space::{Decision, Model, SpaSlot, StateSpace, WPoint};

/// Feasible decisions at one W-point with their choice-specific values for
/// a set of SPA slots sharing the same receipt status.
#[derive(Debug, Clone)]
pub(crate) struct ZTable {
    pub decisions: Vec<u32>,
    /// Slot-major: `z[s * decisions.len() + d]`.
    pub z: Vec<f64>,
}

impl ZTable {
    #[inline]
    pub fn n_dec(&self) -> usize {
        self.decisions.len()
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        let n = self.n_dec();
        &self.z[s * n..(s + 1) * n]
    }

    /// First maximiser of row `s` in canonical decision order.
    pub fn argmax(&self, s: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.row(s).iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

/// Slots reachable next period from `slot` at `age`, with probabilities.
pub(crate) fn slot_transitions(space: &StateSpace, age: u32, slot: SpaSlot, p_step: f64) -> Vec<(usize, f64)> {
    match slot {
        SpaSlot::Receiving => vec![(0, 1.0)],
        SpaSlot::Pending(s) => {
            let next = |spa: u32| {
                if spa <= age + 1 {
                    0
                } else {
                    space.slot_index(SpaSlot::Pending(spa))
                }
            };
            let stay = next(s);
            let up = next((s + 1).min(space.spa_cap));
            let mut out = Vec::with_capacity(2);
            if up == stay {
                out.push((stay, 1.0));
            } else {
                if p_step < 1.0 {
                    out.push((stay, 1.0 - p_step));
                }
                if p_step > 0.0 {
                    out.push((up, p_step));
                }
            }
            out
        }
    }
}

/// Values at the terminal age: the bequest of entering assets everywhere.
pub(crate) fn terminal_values(model: &Model) -> Result<Vec<f64>> {
    let space = model.space();
    let n_slots = space.n_slots();
    let mut v = vec![0.0; space.n_w() * n_slots];
    for w in 0..space.n_w() {
        let a = model.assets.get(space.w_point(w).asset);
        let b = bequest_utility(a, &model.params)?;
        v[w * n_slots..(w + 1) * n_slots].fill(b);
    }
    Ok(v)
}

pub(crate) struct Stage<'a> {
    pub model: &'a Model,
    pub space: StateSpace,
    pub age: u32,
    surv: f64,
    /// Expected next-period value given type, current income node, next
    /// asset node, next AIME node and next slot.
    g: Vec<f64>,
    bequest: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
}

impl<'a> Stage<'a> {
    pub fn new(model: &'a Model, age: u32, next: &[f64]) -> Result<Self> {
        let space = model.space();
        let n_slots = space.n_slots();
        if next.len() != space.n_w() * n_slots {
            return Err(Error::Logic("continuation table has the wrong size".into()));
        }
        let (n_a, n_y, n_k) = (space.n_assets, space.n_income, space.n_aime);
        let valid_next: Vec<usize> = space
            .valid_slots(age + 1)
            .into_iter()
            .map(|s| space.slot_index(s))
            .collect();
        let block = n_a * n_k * n_slots;
        let mut g = vec![f64::NAN; space.n_types * n_y * block];
        g.par_chunks_mut(block).enumerate().for_each(|(ti, out)| {
            let (tau, i) = (ti / n_y, ti % n_y);
            let chain = &model.income[tau];
            let unemp = &model.types[tau].unemp_prob;
            for a in 0..n_a {
                for k in 0..n_k {
                    for &s in &valid_next {
                        let mut acc = 0.0;
                        for j in 0..n_y {
                            let pij = chain.prob(i, j);
                            if pij == 0.0 {
                                continue;
                            }
                            let mut wp = WPoint {
                                type_idx: tau,
                                asset: a,
                                income: j,
                                aime: k,
                                unemployed: false,
                            };
                            let v0 = next[space.table_index(space.w_index(&wp), s)];
                            wp.unemployed = true;
                            let v1 = next[space.table_index(space.w_index(&wp), s)];
                            let pu = unemp[j];
                            let ev = if pu == 0.0 {
                                v0
                            } else if pu == 1.0 {
                                v1
                            } else {
                                (1.0 - pu) * v0 + pu * v1
                            };
                            acc += pij * ev;
                        }
                        out[(a * n_k + k) * n_slots + s] = acc;
                    }
                }
            }
        });
        let bequest = model
            .assets
            .points()
            .iter()
            .map(|&a| bequest_utility(a, &model.params))
            .collect::<Result<Vec<_>>>()?;
        let transitions = (0..n_slots)
            .map(|s| slot_transitions(&space, age, space.slot_from_index(s), model.params.p_spa_step))
            .collect();
        Ok(Self {
            model,
            space,
            age,
            surv: model.mortality.survival(age),
            g,
            bequest,
            transitions,
        })
    }

    /// Choice-specific values at W-point `w` for `slots`, which must all be
    /// receiving or all pending.
    pub fn z_table(&self, w: usize, receiving: bool, slots: &[usize]) -> Result<ZTable> {
        let m = self.model;
        let p = &m.params;
        let sp = &self.space;
        let wp = sp.w_point(w);
        let ty = &m.types[wp.type_idx];
        let offer = m.income_offer(wp.type_idx, self.age, wp.income);
        let aime = m.aime.get(wp.aime);
        let (n_k, n_slots) = (sp.n_aime, sp.n_slots());
        let g_base = (wp.type_idx * sp.n_income + wp.income) * sp.n_assets;
        let can_work = !wp.unemployed && self.age < p.age_work_end;

        let mut decisions = Vec::new();
        let mut cols: Vec<(f64, f64, usize, usize, usize, f64)> = Vec::new();
        let mut coh = [0.0; 2];
        let mut aime_w = [(0usize, 0usize, 0.0f64); 2];
        for work in [false, true] {
            if work && !can_work {
                continue;
            }
            let inp = BudgetInputs {
                assets: m.assets.get(wp.asset),
                age: self.age,
                work,
                income: offer,
                unemployed: wp.unemployed,
                receiving,
                has_db: ty.has_db,
                aime,
            };
            coh[work as usize] = cash_on_hand(&inp, p, &m.db);
            let next_aime = aime_update(aime, p.work_year_index(self.age), work, offer, self.age, p);
            aime_w[work as usize] = m.aime.interp_weights(next_aime);
        }
        for a_next in 0..sp.n_assets {
            for work in [false, true] {
                if work && !can_work {
                    continue;
                }
                let c = coh[work as usize] - m.assets.get(a_next);
                if !(c > 0.0) {
                    continue;
                }
                let u = flow_utility_unchecked(c.ln(), p.leisure(work).ln(), p);
                let (lo, hi, wt) = aime_w[work as usize];
                decisions.push(Decision { next_asset: a_next, work }.index() as u32);
                cols.push((u, wt, lo, hi, a_next, self.bequest[a_next]));
            }
        }
        if decisions.is_empty() {
            return Err(Error::config(
                "model",
                format!("no feasible decision at age {} for state {:?}", self.age, wp),
            ));
        }

        let nd = decisions.len();
        let mut z = vec![0.0; nd * slots.len()];
        for (si, &slot) in slots.iter().enumerate() {
            let tr = &self.transitions[slot];
            for (di, &(u, wt, lo, hi, a_next, beq)) in cols.iter().enumerate() {
                let mut cont = 0.0;
                if self.surv > 0.0 {
                    let base = (g_base + a_next) * n_k;
                    for &(s2, pr) in tr {
                        let glo = self.g[(base + lo) * n_slots + s2];
                        let v = if wt == 0.0 {
                            glo
                        } else {
                            (1.0 - wt) * glo + wt * self.g[(base + hi) * n_slots + s2]
                        };
                        cont += pr * v;
                    }
                }
                let dead = if self.surv < 1.0 { (1.0 - self.surv) * beq } else { 0.0 };
                z[si * nd + di] = u + p.beta * (self.surv * cont + dead);
            }
        }
        Ok(ZTable { decisions, z })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Calibration;

    #[test]
    fn transitions_respect_receipt_timing() {
        let m = Model::build(&Calibration::default()).unwrap();
        let s = m.space();
        // SPA 61 at age 60: receipt next year unless it moves up
        let t = slot_transitions(&s, 60, SpaSlot::Pending(61), 0.06);
        assert_eq!(t, vec![(0, 0.94), (s.slot_index(SpaSlot::Pending(62)), 0.06)]);
        let t = slot_transitions(&s, 65, SpaSlot::Pending(70), 0.06);
        assert_eq!(t, vec![(s.slot_index(SpaSlot::Pending(70)), 1.0)]);
        let t = slot_transitions(&s, 69, SpaSlot::Pending(70), 0.06);
        assert_eq!(t, vec![(0, 1.0)]);
        let t = slot_transitions(&s, 55, SpaSlot::Pending(60), 0.0);
        assert_eq!(t, vec![(s.slot_index(SpaSlot::Pending(60)), 1.0)]);
    }
}
