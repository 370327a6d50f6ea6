//! Exhaustive expectimax over contingent plans for tiny instances. Uses only
//! the model primitives and tracks AIME exactly, so it shares no code with
//! the grid solver's continuation machinery.

use crate::error::{Error, Result};
use crate::model::{aime_update, bequest_utility, cash_on_hand, flow_utility, spa_transition, BudgetInputs};
use crate::space::{Decision, Model, SpaSlot, WPoint};

/// Refusal threshold on the number of decision paths.
pub const MAX_PATHS: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct TinyProblem {
    pub model: Model,
    pub age: u32,
    pub state: WPoint,
    pub slot: SpaSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub value: f64,
    /// Optimal decision sequences and the probability of each.
    pub paths: Vec<(Vec<Decision>, f64)>,
    pub nodes_evaluated: u64,
}

struct Node {
    asset: usize,
    income: usize,
    unemployed: bool,
    aime: f64,
    slot: SpaSlot,
}

struct Search<'a> {
    m: &'a Model,
    type_idx: usize,
    evaluated: u64,
}

impl Search<'_> {
    fn next_slots(&self, age: u32, slot: SpaSlot) -> Result<Vec<(SpaSlot, f64)>> {
        let p = &self.m.params;
        Ok(match slot {
            SpaSlot::Receiving => vec![(SpaSlot::Receiving, 1.0)],
            SpaSlot::Pending(s) => {
                let mut out: Vec<(SpaSlot, f64)> = Vec::new();
                for (spa, pr) in spa_transition(s, false, p)?.support() {
                    let ns = if spa <= age + 1 { SpaSlot::Receiving } else { SpaSlot::Pending(spa) };
                    match out.iter_mut().find(|(x, _)| *x == ns) {
                        Some(e) => e.1 += pr,
                        None => out.push((ns, pr)),
                    }
                }
                out
            }
        })
    }

    fn solve(&mut self, age: u32, n: &Node) -> Result<(f64, Vec<(Vec<Decision>, f64)>)> {
        self.evaluated += 1;
        let m = self.m;
        let p = &m.params;
        if age == p.age_death {
            return Ok((bequest_utility(m.assets.get(n.asset), p)?, vec![(Vec::new(), 1.0)]));
        }
        let ty = &m.types[self.type_idx];
        let offer = m.income_offer(self.type_idx, age, n.income);
        let surv = m.mortality.survival(age);
        let chain = &m.income[self.type_idx];
        let slots = self.next_slots(age, n.slot)?;

        let mut best: Option<(f64, Decision, Vec<(Vec<Decision>, f64)>)> = None;
        for a_next in 0..m.assets.len() {
            for work in [false, true] {
                if work && (n.unemployed || age >= p.age_work_end) {
                    continue;
                }
                let inp = BudgetInputs {
                    assets: m.assets.get(n.asset),
                    age,
                    work,
                    income: offer,
                    unemployed: n.unemployed,
                    receiving: n.slot == SpaSlot::Receiving,
                    has_db: ty.has_db,
                    aime: n.aime,
                };
                let c = cash_on_hand(&inp, p, &m.db) - m.assets.get(a_next);
                if c <= 0.0 {
                    continue;
                }
                let u = flow_utility(c, p.leisure(work), p)?;
                let aime = aime_update(n.aime, p.work_year_index(age), work, offer, age, p);
                let mut ev = 0.0;
                let mut sub: Vec<(Vec<Decision>, f64)> = Vec::new();
                if surv > 0.0 {
                    for j in 0..chain.len() {
                        let pj = chain.prob(n.income, j);
                        for (unemployed, pu) in [(false, 1.0 - ty.unemp_prob[j]), (true, ty.unemp_prob[j])] {
                            for &(slot, ps) in &slots {
                                let pr = pj * pu * ps;
                                if pr == 0.0 {
                                    continue;
                                }
                                let child = Node {
                                    asset: a_next,
                                    income: j,
                                    unemployed,
                                    aime,
                                    slot,
                                };
                                let (v, paths) = self.solve(age + 1, &child)?;
                                ev += pr * v;
                                for (path, q) in paths {
                                    sub.push((path, q * pr * surv));
                                }
                            }
                        }
                    }
                }
                let beq = bequest_utility(m.assets.get(a_next), p)?;
                let z = u + p.beta * (surv * ev + (1.0 - surv) * beq);
                if best.as_ref().is_none_or(|b| z > b.0) {
                    if surv < 1.0 {
                        sub.push((Vec::new(), 1.0 - surv));
                    }
                    best = Some((z, Decision { next_asset: a_next, work }, sub));
                }
            }
        }
        let (z, d, sub) =
            best.ok_or_else(|| Error::config("model", format!("no feasible decision at age {age}")))?;
        let mut paths: Vec<(Vec<Decision>, f64)> = Vec::new();
        for (mut path, q) in sub {
            path.insert(0, d);
            match paths.iter_mut().find(|(x, _)| *x == path) {
                Some(e) => e.1 += q,
                None => paths.push((path, q)),
            }
        }
        Ok((z, paths))
    }
}

/// Maximum expected discounted utility from the given state, found by
/// enumerating every contingent plan.
pub fn brute_force_enumerate(problem: &TinyProblem) -> Result<BruteForceResult> {
    let m = &problem.model;
    let p = &m.params;
    if problem.age > p.age_death || problem.age < p.age_start {
        return Err(Error::Argument(format!("start age {} outside the model", problem.age)));
    }
    let per_period = (2 * m.assets.len() * m.income[0].len() * 2 * 2) as f64;
    let paths = per_period.powi((p.age_death - problem.age) as i32);
    if paths > MAX_PATHS {
        return Err(Error::TooLarge(format!("{paths:.3e} decision paths exceed {MAX_PATHS:e}")));
    }
    let mut search = Search {
        m,
        type_idx: problem.state.type_idx,
        evaluated: 0,
    };
    let root = Node {
        asset: problem.state.asset,
        income: problem.state.income,
        unemployed: problem.state.unemployed,
        aime: m.aime.get(problem.state.aime),
        slot: problem.slot,
    };
    let (value, paths) = search.solve(problem.age, &root)?;
    Ok(BruteForceResult {
        value,
        paths,
        nodes_evaluated: search.evaluated,
    })
}
