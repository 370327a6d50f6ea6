//! Direct optimisation of the attention problem on tiny instances.
//!
//! The search runs over conditional distributions of signals given the
//! state and maximises expected payoff minus λ times mutual information,
//! without ever forming the logit fixed point. Two-period instances are
//! composed: the second period is optimised per first decision against the
//! prior-propagated state law, and its per-state net payoffs feed the first.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ri_solver::fixed_point::{mutual_information, ri_fixed_point, FixedPointOptions};

/// Second period of a two-period instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondPeriod {
    pub beta: f64,
    /// `transition[s][s2]`.
    pub transition: Vec<Vec<f64>>,
    /// `payoff[d1][s2][d2]`.
    pub payoff: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiTinyProblem {
    pub name: String,
    pub mu: Vec<f64>,
    /// `payoff[s][d]` in the first period.
    pub payoff: Vec<Vec<f64>>,
    pub second: Option<SecondPeriod>,
}

impl RiTinyProblem {
    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn n_decisions(&self) -> usize {
        self.payoff[0].len()
    }

    /// Law of the second-period state, ignoring what the first decision
    /// reveals.
    pub fn second_weights(&self) -> Option<Vec<f64>> {
        let sp = self.second.as_ref()?;
        let n2 = sp.transition[0].len();
        Some(
            (0..n2)
                .map(|j| self.mu.iter().zip(&sp.transition).map(|(m, row)| m * row[j]).sum())
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        let (ns, nd) = (self.n_states(), self.n_decisions());
        if ns > 3 || nd > 3 {
            return Err(Error::TooLarge(format!("{nd} decisions x {ns} states exceeds 3 x 3")));
        }
        if ns == 0 || nd == 0 || self.payoff.len() != ns || self.payoff.iter().any(|r| r.len() != nd) {
            return Err(Error::Argument("payoff matrix must be states x decisions".into()));
        }
        if let Some(sp) = &self.second {
            let n2 = sp.transition.first().map_or(0, |r| r.len());
            if n2 > 3 || sp.payoff.first().and_then(|r| r.first()).map_or(0, |r| r.len()) > 3 {
                return Err(Error::TooLarge("second period exceeds 3 x 3".into()));
            }
            if sp.transition.len() != ns
                || sp.payoff.len() != nd
                || sp.payoff.iter().any(|m| m.len() != n2)
                || sp.transition.iter().any(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-12)
            {
                return Err(Error::Argument("second period shapes do not match".into()));
            }
        }
        Ok(())
    }
}

/// Optimal channel for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// `p[s][d]`.
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// Expected payoff minus λ times mutual information.
    pub value: f64,
    /// Per-state payoff minus λ times the divergence from `q`.
    pub state_values: Vec<f64>,
    /// Largest weighted spread of marginal values across a state's support.
    pub kkt_gap: f64,
    pub iterations: usize,
}

fn marginal(mu: &[f64], p: &[Vec<f64>]) -> Vec<f64> {
    let nd = p[0].len();
    (0..nd).map(|d| mu.iter().zip(p).map(|(m, row)| m * row[d]).sum()).collect()
}

fn objective(mu: &[f64], payoff: &[Vec<f64>], p: &[Vec<f64>], lambda: f64) -> f64 {
    let q = marginal(mu, p);
    let mut f = 0.0;
    for s in 0..mu.len() {
        if mu[s] == 0.0 {
            continue;
        }
        for d in 0..q.len() {
            let x = p[s][d];
            if x > 0.0 {
                f += mu[s] * x * (payoff[s][d] - lambda * (x / q[d]).ln());
            }
        }
    }
    f
}

/// Simplex points with coordinates in multiples of `1/k`.
fn simplex_grid(n: usize, k: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / k as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, k, &mut Vec::new(), &mut out);
    out
}

/// Maximises `E[payoff] - λ I(state; signal)` over channels `p(signal|state)`.
pub fn optimize_channel(mu: &[f64], payoff: &[Vec<f64>], lambda: f64) -> Result<Channel> {
    let ns = mu.len();
    let nd = payoff[0].len();
    if lambda < 0.0 {
        return Err(Error::Argument("attention cost must be non-negative".into()));
    }
    let on: Vec<usize> = (0..ns).filter(|&s| mu[s] > 0.0).collect();
    if lambda == 0.0 {
        let mut p = vec![vec![0.0; nd]; ns];
        for s in 0..ns {
            let best = (0..nd).fold(0, |b, d| if payoff[s][d] > payoff[s][b] { d } else { b });
            p[s][best] = 1.0;
        }
        let q = marginal(mu, &p);
        let state_values: Vec<f64> = (0..ns).map(|s| (0..nd).map(|d| p[s][d] * payoff[s][d]).sum()).collect();
        let value = on.iter().map(|&s| mu[s] * state_values[s]).sum();
        return Ok(Channel {
            p,
            q,
            value,
            state_values,
            kkt_gap: 0.0,
            iterations: 0,
        });
    }

    // coarse start: best grid channel, blended towards uniform so that no
    // coordinate starts at zero
    let mut k = 10;
    while simplex_grid(nd, k).len().pow(on.len() as u32) > 400_000 && k > 2 {
        k -= 1;
    }
    let grid = simplex_grid(nd, k);
    let mut p = vec![vec![1.0 / nd as f64; nd]; ns];
    let mut best = objective(mu, payoff, &p, lambda);
    let mut idx = vec![0usize; on.len()];
    'outer: loop {
        let mut trial = p.clone();
        for (j, &s) in on.iter().enumerate() {
            trial[s] = grid[idx[j]].clone();
        }
        let f = objective(mu, payoff, &trial, lambda);
        if f > best {
            best = f;
            p = trial;
        }
        for j in 0..on.len() {
            idx[j] += 1;
            if idx[j] < grid.len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    for row in p.iter_mut() {
        for x in row.iter_mut() {
            *x = 0.9 * *x + 0.1 / nd as f64;
        }
    }

    // exponentiated-gradient ascent with an adaptive step
    let mut f = objective(mu, payoff, &p, lambda);
    let mut eta = 0.1 / lambda.max(1e-3);
    let mut stall = 0;
    let mut iterations = 0;
    let grad = |p: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let q = marginal(mu, p);
        (0..ns)
            .map(|s| {
                (0..nd)
                    .map(|d| {
                        if p[s][d] > 0.0 {
                            payoff[s][d] - lambda * (p[s][d] / q[d]).ln()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            })
            .collect()
    };
    while iterations < 50_000 && stall < 200 {
        iterations += 1;
        let g = grad(&p);
        let mut trial = p.clone();
        for &s in &on {
            let top = g[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for d in 0..nd {
                let x = p[s][d] * (eta * (g[s][d] - top)).exp();
                trial[s][d] = x;
                total += x;
            }
            trial[s].iter_mut().for_each(|x| *x /= total);
        }
        let ft = objective(mu, payoff, &trial, lambda);
        if ft > f {
            stall = if ft - f <= 1e-17 * f.abs().max(1.0) { stall + 1 } else { 0 };
            p = trial;
            f = ft;
            eta *= 1.3;
        } else {
            eta *= 0.5;
            stall += 1;
            if eta < 1e-300 {
                break;
            }
        }
    }

    iterations += newton_refine(mu, payoff, lambda, &on, &mut p);
    let f = objective(mu, payoff, &p, lambda);

    let q = marginal(mu, &p);
    let g = grad(&p);
    let mut kkt_gap: f64 = 0.0;
    for &s in &on {
        let mean: f64 = (0..nd).filter(|&d| p[s][d] > 0.0).map(|d| p[s][d] * g[s][d]).sum();
        let spread: f64 = (0..nd)
            .filter(|&d| p[s][d] > 0.0)
            .map(|d| p[s][d] * (g[s][d] - mean).abs())
            .sum();
        kkt_gap = kkt_gap.max(mu[s] * spread);
    }
    // states without weight respond optimally to q
    for s in 0..ns {
        if mu[s] > 0.0 {
            continue;
        }
        let top = (0..nd)
            .filter(|&d| q[d] > 0.0)
            .map(|d| payoff[s][d] / lambda + q[d].ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for d in 0..nd {
            p[s][d] = if q[d] > 0.0 { (payoff[s][d] / lambda + q[d].ln() - top).exp() } else { 0.0 };
            total += p[s][d];
        }
        p[s].iter_mut().for_each(|x| *x /= total);
    }
    let state_values = (0..ns)
        .map(|s| {
            (0..nd)
                .filter(|&d| p[s][d] > 0.0)
                .map(|d| p[s][d] * (payoff[s][d] - lambda * (p[s][d] / q[d]).ln()))
                .sum()
        })
        .collect();
    Ok(Channel {
        p,
        q,
        value: f,
        state_values,
        kkt_gap,
        iterations,
    })
}

/// Damped Newton on the positive channel entries of the weighted states,
/// keeping each row on the simplex. Entries that a step would push through
/// zero while already negligible are fixed at zero. Returns the step count.
fn newton_refine(mu: &[f64], payoff: &[Vec<f64>], lambda: f64, on: &[usize], p: &mut [Vec<f64>]) -> usize {
    let nd = payoff[0].len();
    let m = on.len();
    let mut f = objective(mu, payoff, p, lambda);
    let mut steps = 0;
    while steps < 500 {
        steps += 1;
        let q = marginal(mu, p);
        let mut free: Vec<(usize, usize, usize)> = Vec::new();
        for (i, &s) in on.iter().enumerate() {
            free.extend((0..nd).filter(|&d| p[s][d] > 0.0).map(|d| (i, s, d)));
        }
        let n = free.len();
        let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
        let mut rhs = DVector::<f64>::zeros(n + m);
        for (a, &(i, s, d)) in free.iter().enumerate() {
            rhs[a] = -mu[s] * (payoff[s][d] - lambda * (p[s][d] / q[d]).ln());
            kkt[(a, a)] -= lambda * mu[s] / p[s][d];
            for (b, &(_, s2, d2)) in free.iter().enumerate() {
                if d2 == d {
                    kkt[(a, b)] += lambda * mu[s] * mu[s2] / q[d];
                }
            }
            kkt[(a, n + i)] = 1.0;
            kkt[(n + i, a)] = 1.0;
        }
        let scale = (0..n).map(|a| kkt[(a, a)].abs()).fold(0.0, f64::max);
        for a in 0..n {
            kkt[(a, a)] -= 1e-13 * scale;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { break };
        let mut a_max: f64 = 1.0;
        let mut blocking = None;
        for (a, &(_, s, d)) in free.iter().enumerate() {
            if sol[a] < 0.0 && 0.99 * p[s][d] / -sol[a] < a_max {
                a_max = 0.99 * p[s][d] / -sol[a];
                blocking = Some((s, d));
            }
        }
        if let Some((s, d)) = blocking {
            if a_max < 1e-3 && p[s][d] < 1e-8 {
                p[s][d] = 0.0;
                let t: f64 = p[s].iter().sum();
                p[s].iter_mut().for_each(|x| *x /= t);
                f = objective(mu, payoff, p, lambda);
                continue;
            }
        }
        let mut alpha = a_max;
        let mut improved = false;
        for _ in 0..60 {
            let mut trial = p.to_vec();
            for (a, &(_, s, d)) in free.iter().enumerate() {
                trial[s][d] = p[s][d] + alpha * sol[a];
            }
            for &s in on {
                let t: f64 = trial[s].iter().sum();
                trial[s].iter_mut().for_each(|x| *x /= t);
            }
            let ft = objective(mu, payoff, &trial, lambda);
            if ft > f {
                p.clone_from_slice(&trial);
                f = ft;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    steps
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub net_value: f64,
    pub first: Channel,
    /// Second-period channel per first decision.
    pub second: Vec<Channel>,
}

/// First-period payoffs including the discounted, composed second period.
fn composed_payoff(problem: &RiTinyProblem, second_state_values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (ns, nd) = (problem.n_states(), problem.n_decisions());
    let mut out = problem.payoff.clone();
    if let Some(sp) = &problem.second {
        for s in 0..ns {
            for d in 0..nd {
                let cont: f64 = sp.transition[s]
                    .iter()
                    .zip(&second_state_values[d])
                    .map(|(t, v)| t * v)
                    .sum();
                out[s][d] += sp.beta * cont;
            }
        }
    }
    out
}

/// Searches directly over decision-valued signal structures.
pub fn direct_ri_oracle(problem: &RiTinyProblem, lambda: f64) -> Result<OracleResult> {
    problem.validate()?;
    let mut second = Vec::new();
    if let Some(sp) = &problem.second {
        let mu2 = problem.second_weights().unwrap();
        for pay in &sp.payoff {
            second.push(optimize_channel(&mu2, pay, lambda)?);
        }
    }
    let sv: Vec<Vec<f64>> = second.iter().map(|c| c.state_values.clone()).collect();
    let payoff = composed_payoff(problem, &sv);
    let first = optimize_channel(&problem.mu, &payoff, lambda)?;
    Ok(OracleResult {
        net_value: first.value,
        first,
        second,
    })
}

/// The same instance solved with the logit fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyFixedPoint {
    pub net_value: f64,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub second_p: Vec<Vec<Vec<f64>>>,
    pub mutual_information: f64,
}

pub fn solve_tiny_fixed_point(problem: &RiTinyProblem, lambda: f64) -> Result<TinyFixedPoint> {
    problem.validate()?;
    let opts = FixedPointOptions::default();
    let flat = |m: &[Vec<f64>]| m.iter().flatten().cloned().collect::<Vec<f64>>();
    let mut sv = Vec::new();
    let mut second_p = Vec::new();
    if let Some(sp) = &problem.second {
        let mu2 = problem.second_weights().unwrap();
        for pay in &sp.payoff {
            let fp = ri_fixed_point(&flat(pay), pay[0].len(), &mu2, lambda, &opts)?;
            sv.push(fp.values.clone());
            second_p.push(fp.p);
        }
    }
    let payoff = composed_payoff(problem, &sv);
    let fp = ri_fixed_point(&flat(&payoff), problem.n_decisions(), &problem.mu, lambda, &opts)?;
    Ok(TinyFixedPoint {
        net_value: fp.net_value(&problem.mu),
        mutual_information: mutual_information(&fp.p, &problem.mu, &fp.q)?,
        p: fp.p,
        q: fp.q,
        second_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> RiTinyProblem {
        RiTinyProblem {
            name: "2x2".into(),
            mu: vec![0.5, 0.5],
            payoff: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            second: None,
        }
    }

    #[test]
    fn free_information_picks_per_state_best() {
        let r = direct_ri_oracle(&two_by_two(), 0.0).unwrap();
        assert_eq!(r.first.p, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(r.net_value, 1.0);
    }

    #[test]
    fn costly_information_picks_best_pooled_decision() {
        let pb = RiTinyProblem {
            name: "pooled".into(),
            mu: vec![0.6, 0.4],
            payoff: vec![vec![1.0, 0.0, 0.2], vec![0.0, 1.0, 0.9]],
            second: None,
        };
        let r = direct_ri_oracle(&pb, 1e6).unwrap();
        // averages: 0.6, 0.4, 0.48
        assert!(r.first.q[0] > 0.999, "{r:?}");
        assert!((r.net_value - 0.6).abs() < 1e-5);
    }

    #[test]
    fn matches_closed_form_on_symmetric_case() {
        let lambda = 0.5;
        let r = direct_ri_oracle(&two_by_two(), lambda).unwrap();
        let e = (1.0f64 / lambda).exp();
        assert!((r.first.p[0][0] - e / (1.0 + e)).abs() < 1e-6);
        assert!((r.net_value - lambda * (0.5 * e + 0.5).ln()).abs() < 1e-9);
    }

    #[test]
    fn refuses_large_instances() {
        let pb = RiTinyProblem {
            name: "big".into(),
            mu: vec![0.25; 4],
            payoff: vec![vec![0.0; 2]; 4],
            second: None,
        };
        assert!(matches!(direct_ri_oracle(&pb, 1.0), Err(Error::TooLarge(_))));
    }

    #[test]
    fn grid_covers_simplex() {
        let g = simplex_grid(3, 4);
        assert_eq!(g.len(), 15);
        assert!(g.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
