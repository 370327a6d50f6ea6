//! Rationally inattentive solution.
//!
//! Before receipt the SPA is costly to observe. At each age and W-point the
//! period problem becomes a dynamic logit whose default rule is a fixed
//! point (see [`fixed_point`]). Receiving households, and ages where the
//! conditional SPA law has a single support point, face no information
//! problem and are solved exactly as under full information, using the
//! inattentive continuation values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{terminal_values, Stage};
use crate::error::{Error, Result};
use crate::model::{no_receipt_prior, ModelParams, SpaDist};
use crate::re_solver::NO_DECISION;
use crate::space::{Decision, Model, SpaSlot, WPoint};

pub mod fixed_point;
pub mod oracle;

pub use fixed_point::{entropy, mutual_information, ri_fixed_point, FixedPoint, FixedPointOptions};
pub use oracle::{direct_ri_oracle, optimize_channel, solve_tiny_fixed_point, RiTinyProblem, SecondPeriod};

/// Stored probabilities below this are dropped.
pub const PRUNE: f64 = 1e-14;

/// A sparse distribution over decision indices.
pub type SparseRule = Vec<(u32, f64)>;

/// Law of the SPA held by someone of `age` given their receipt status.
/// `None` when receipt status alone pins down everything relevant
/// (receiving), or when not receiving is impossible at this age.
pub fn conditional_spa_weights(age: u32, receiving: bool, params: &ModelParams) -> Option<SpaDist> {
    if receiving || age >= params.spa_cap {
        return None;
    }
    no_receipt_prior(age, params).ok()
}

/// Solution at one W-point where the fixed point was needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiPoint {
    pub default_rule: SparseRule,
    /// Choice rule per pending slot, indexed by `slot - 1`; empty for
    /// slots invalid at this age.
    pub rules: Vec<SparseRule>,
    pub info: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRi {
    pub model: Model,
    values: Vec<Vec<f64>>,
    /// Deterministic decision, or the modal one where the rule is stochastic.
    decisions: Vec<Vec<u32>>,
    points: Vec<Vec<Option<RiPoint>>>,
    weights: Vec<Option<SpaDist>>,
}

fn sparse(row: &[f64], decisions: &[u32]) -> SparseRule {
    let kept: Vec<(u32, f64)> = row
        .iter()
        .zip(decisions)
        .filter(|(p, _)| **p >= PRUNE)
        .map(|(p, d)| (*d, *p))
        .collect();
    let total: f64 = kept.iter().map(|x| x.1).sum();
    kept.into_iter().map(|(d, p)| (d, p / total)).collect()
}

fn modal(rule: &SparseRule) -> u32 {
    let mut best = rule[0];
    for &(d, p) in &rule[1..] {
        if p > best.1 {
            best = (d, p);
        }
    }
    best.0
}

impl SolutionRi {
    fn age_idx(&self, age: u32) -> Option<usize> {
        let p = &self.model.params;
        (age >= p.age_start && age <= p.age_death).then(|| (age - p.age_start) as usize)
    }

    pub fn value_table(&self, age: u32) -> Option<&[f64]> {
        self.age_idx(age).map(|i| self.values[i].as_slice())
    }

    pub fn decision_table(&self, age: u32) -> Option<&[u32]> {
        self.age_idx(age).and_then(|i| self.decisions.get(i)).map(|v| v.as_slice())
    }

    pub fn value(&self, age: u32, w: &WPoint, slot: SpaSlot) -> Option<f64> {
        let sp = self.model.space();
        let v = self.value_table(age)?[sp.table_index(sp.w_index(w), sp.slot_index(slot))];
        (!v.is_nan()).then_some(v)
    }

    /// Fixed-point output at a W-point, if the information problem was live.
    pub fn point(&self, age: u32, w: usize) -> Option<&RiPoint> {
        self.age_idx(age).and_then(|i| self.points.get(i)).and_then(|v| v[w].as_ref())
    }

    /// Conditional SPA weights used at `age` for non-receivers.
    pub fn weights(&self, age: u32) -> Option<&SpaDist> {
        self.age_idx(age).and_then(|i| self.weights[i].as_ref())
    }

    /// Choice probabilities at a state.
    pub fn choice_rule(&self, age: u32, w: usize, slot: SpaSlot) -> Option<SparseRule> {
        let sp = self.model.space();
        let si = sp.slot_index(slot);
        if let (SpaSlot::Pending(_), Some(pt)) = (slot, self.point(age, w)) {
            let r = &pt.rules[si - 1];
            return (!r.is_empty()).then(|| r.clone());
        }
        let d = self.decision_table(age)?[sp.table_index(w, si)];
        (d != NO_DECISION).then(|| vec![(d, 1.0)])
    }

    /// Default rule at a W-point for non-receivers.
    pub fn default_rule(&self, age: u32, w: usize) -> Option<SparseRule> {
        if let Some(pt) = self.point(age, w) {
            return Some(pt.default_rule.clone());
        }
        let sp = self.model.space();
        let mu = self.weights(age)?;
        let mut q: SparseRule = Vec::new();
        for (spa, m) in mu.support() {
            let d = self.decision_table(age)?[sp.table_index(w, sp.slot_index(SpaSlot::Pending(spa)))];
            match q.iter_mut().find(|x| x.0 == d) {
                Some(e) => e.1 += m,
                None => q.push((d, m)),
            }
        }
        q.sort_by_key(|x| x.0);
        Some(q)
    }

    /// Mutual information between SPA and decision at a W-point, in nats.
    pub fn info_flow(&self, age: u32, w: usize) -> f64 {
        self.point(age, w).map_or(0.0, |p| p.info)
    }

    /// Most likely decision at a state.
    pub fn modal_decision(&self, age: u32, w: &WPoint, slot: SpaSlot) -> Option<Decision> {
        let sp = self.model.space();
        let d = self.decision_table(age)?[sp.table_index(sp.w_index(w), sp.slot_index(slot))];
        (d != NO_DECISION).then(|| Decision::from_index(d as usize))
    }
}

/// Options for [`solve_ri_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RiOptions {
    pub fixed_point: FixedPointOptions,
}

pub fn solve_ri(model: &Model) -> Result<SolutionRi> {
    solve_ri_with(model, &RiOptions::default())
}

pub fn solve_ri_with(model: &Model, opts: &RiOptions) -> Result<SolutionRi> {
    let params = &model.params;
    if !(params.lambda > 0.0) {
        return Err(Error::config("model.lambda", "the inattentive model needs a positive attention cost"));
    }
    let sp = model.space();
    let n_slots = sp.n_slots();
    let n_ages = (params.age_death - params.age_start + 1) as usize;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_ages];
    let mut decisions: Vec<Vec<u32>> = vec![Vec::new(); n_ages - 1];
    let mut points: Vec<Vec<Option<RiPoint>>> = vec![Vec::new(); n_ages - 1];
    let weights: Vec<Option<SpaDist>> = (params.age_start..=params.age_death)
        .map(|age| conditional_spa_weights(age, false, params))
        .collect();
    values[n_ages - 1] = terminal_values(model)?;

    for age in (params.age_start..params.age_death).rev() {
        let ai = (age - params.age_start) as usize;
        let stage = Stage::new(model, age, &values[ai + 1])?;
        let pending: Vec<usize> = sp
            .pending_spas(age)
            .map(|s| sp.slot_index(SpaSlot::Pending(s)))
            .collect();
        let mu: Vec<f64> = match &weights[ai] {
            Some(dist) => sp.pending_spas(age).map(|s| dist.prob(s)).collect(),
            None => Vec::new(),
        };
        let live = mu.iter().filter(|m| **m > 0.0).count() >= 2;
        let receiving = sp.receiving_valid(age);

        let rows: Vec<(Vec<f64>, Vec<u32>, Option<RiPoint>)> = (0..sp.n_w())
            .into_par_iter()
            .map(|w| -> Result<_> {
                let mut v = vec![f64::NAN; n_slots];
                let mut d = vec![NO_DECISION; n_slots];
                let mut point = None;
                if receiving {
                    let z = stage.z_table(w, true, &[0])?;
                    let (i, best) = z.argmax(0);
                    v[0] = best;
                    d[0] = z.decisions[i];
                }
                if pending.is_empty() {
                    return Ok((v, d, point));
                }
                let z = stage.z_table(w, false, &pending)?;
                if live {
                    let fp = ri_fixed_point(&z.z, z.n_dec(), &mu, params.lambda, &opts.fixed_point).map_err(
                        |e| match e {
                            Error::Convergence { iterations, residual, .. } => Error::Convergence {
                                iterations,
                                residual,
                                context: Some(format!("age {age}, state {:?}", sp.w_point(w))),
                            },
                            other => other,
                        },
                    )?;
                    let info = mutual_information(&fp.p, &mu, &fp.q)?;
                    let mut rules = vec![Vec::new(); n_slots - 1];
                    for (si, &slot) in pending.iter().enumerate() {
                        let rule = sparse(&fp.p[si], &z.decisions);
                        v[slot] = fp.values[si];
                        d[slot] = modal(&rule);
                        rules[slot - 1] = rule;
                    }
                    point = Some(RiPoint {
                        default_rule: sparse(&fp.q, &z.decisions),
                        rules,
                        info,
                        residual: fp.residual,
                        iterations: fp.iterations,
                    });
                } else {
                    for (si, &slot) in pending.iter().enumerate() {
                        let (i, best) = z.argmax(si);
                        v[slot] = best;
                        d[slot] = z.decisions[i];
                    }
                }
                Ok((v, d, point))
            })
            .collect::<Result<_>>()?;

        let mut vt = Vec::with_capacity(sp.n_w() * n_slots);
        let mut dt = Vec::with_capacity(sp.n_w() * n_slots);
        let mut pts = Vec::with_capacity(sp.n_w());
        for (v, d, p) in rows {
            vt.extend(v);
            dt.extend(d);
            pts.push(p);
        }
        values[ai] = vt;
        decisions[ai] = dt;
        points[ai] = pts;
    }
    Ok(SolutionRi {
        model: model.clone(),
        values,
        decisions,
        points,
        weights,
    })
}
