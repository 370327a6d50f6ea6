//! Dynamic-logit fixed point at one W-point.
//!
//! Given choice-specific values `z(d, s)` and weights `mu(s)`, find the
//! default rule `q` with `p(d|s) ∝ q(d) exp(z(d,s)/λ)` and
//! `q = Σ_s mu(s) p(·|s)`. The iteration is Blahut-Arimoto; once it has
//! settled, an active-set Newton step on the concave dual
//! `Σ_s mu(s) log Σ_d q(d) exp(z(d,s)/λ)` finishes the job. That matters
//! when decisions are nearly tied, where the plain iteration crawls.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Bound on the sup-norm change of `q` over one iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Run the Newton finisher.
    pub polish: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub q: Vec<f64>,
    /// `p[s][d]`, defined for every state including those with zero weight.
    pub p: Vec<Vec<f64>>,
    /// `λ log Σ_d q(d) exp(z(d,s)/λ)` per state.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub newton_steps: usize,
    /// `sup_d |q(d) - Σ_s mu(s) p(d|s)|`.
    pub residual: f64,
}

impl FixedPoint {
    /// Expected value net of the attention cost, `Σ_s mu(s) V(s)`.
    pub fn net_value(&self, mu: &[f64]) -> f64 {
        mu.iter()
            .zip(&self.values)
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, v)| m * v)
            .sum()
    }
}

struct Problem<'a> {
    nd: usize,
    mu: &'a [f64],
    /// Indices of states with positive weight.
    on: Vec<usize>,
    /// `exp((z - max_d z)/λ)` for the weighted states, row per entry of `on`.
    e: Vec<f64>,
}

impl Problem<'_> {
    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        &self.e[k * self.nd..(k + 1) * self.nd]
    }

    /// Mixture denominators and the gradient `g(d) = Σ_s mu E(d,s) / D(s)`.
    fn grad(&self, q: &[f64], g: &mut [f64], dens: &mut [f64]) -> f64 {
        g.fill(0.0);
        let mut f = 0.0;
        for (k, &s) in self.on.iter().enumerate() {
            let row = self.row(k);
            let den: f64 = row.iter().zip(q).map(|(e, q)| e * q).sum();
            dens[k] = den;
            f += self.mu[s] * den.ln();
            let scale = self.mu[s] / den;
            for (gd, e) in g.iter_mut().zip(row) {
                *gd += scale * e;
            }
        }
        f
    }

    fn objective(&self, q: &[f64]) -> f64 {
        self.on
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let den: f64 = self.row(k).iter().zip(q).map(|(e, q)| e * q).sum();
                self.mu[s] * den.ln()
            })
            .sum()
    }
}

fn residual(q: &[f64], g: &[f64]) -> f64 {
    q.iter().zip(g).map(|(q, g)| (q * (g - 1.0)).abs()).fold(0.0, f64::max)
}

/// Active-set Newton on the simplex. Returns the improved `q` when the KKT
/// conditions hold to tolerance, `None` otherwise.
fn newton_polish(pb: &Problem, q0: &[f64], tol: f64, steps: &mut usize) -> Option<Vec<f64>> {
    const KKT_SLACK: f64 = 1e-12;
    let nd = pb.nd;
    let qmax = q0.iter().cloned().fold(0.0, f64::max);
    let mut q: Vec<f64> = q0.iter().map(|&x| if x >= 1e-7 * qmax { x } else { 0.0 }).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);

    let mut g = vec![0.0; nd];
    let mut dens = vec![0.0; pb.on.len()];
    for _round in 0..8 {
        for _ in 0..200 {
            *steps += 1;
            let f = pb.grad(&q, &mut g, &mut dens);
            let act: Vec<usize> = (0..nd).filter(|&d| q[d] > 0.0).collect();
            let m = act.len();
            let res = act.iter().map(|&d| (q[d] * (g[d] - 1.0)).abs()).fold(0.0, f64::max);
            if m == 1 || res <= tol * 1e-3 {
                break;
            }
            // KKT system [[H, -1], [-1', 0]] [Δ; ν] = [-g; 0] with H the
            // (negative semidefinite) Hessian on the active set.
            let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
            for (k, &s) in pb.on.iter().enumerate() {
                let row = pb.row(k);
                let c = pb.mu[s] / (dens[k] * dens[k]);
                for (i, &di) in act.iter().enumerate() {
                    let ei = row[di] * c;
                    if ei == 0.0 {
                        continue;
                    }
                    for (j, &dj) in act.iter().enumerate().skip(i) {
                        kkt[(i, j)] -= ei * row[dj];
                    }
                }
            }
            let mut diag_max: f64 = 0.0;
            for i in 0..m {
                for j in 0..i {
                    kkt[(i, j)] = kkt[(j, i)];
                }
                diag_max = diag_max.max(kkt[(i, i)].abs());
            }
            let reg = 1e-12 * diag_max + f64::MIN_POSITIVE;
            for i in 0..m {
                kkt[(i, i)] -= reg;
                kkt[(i, m)] = -1.0;
                kkt[(m, i)] = -1.0;
            }
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for (i, &d) in act.iter().enumerate() {
                rhs[i] = -g[d];
            }
            let sol = kkt.lu().solve(&rhs)?;
            let delta: Vec<f64> = (0..m).map(|i| sol[i]).collect();

            let mut a_max = 1.0f64;
            let mut blocking = None;
            for (i, &d) in act.iter().enumerate() {
                if delta[i] < 0.0 {
                    let a = -q[d] / delta[i];
                    if a < a_max {
                        a_max = a;
                        blocking = Some(d);
                    }
                }
            }
            let mut alpha = a_max;
            let mut trial = q.clone();
            let mut accepted = false;
            for _ in 0..40 {
                for (i, &d) in act.iter().enumerate() {
                    trial[d] = (q[d] + alpha * delta[i]).max(0.0);
                }
                if alpha == a_max {
                    if let Some(b) = blocking {
                        trial[b] = 0.0;
                    }
                }
                let s: f64 = trial.iter().sum();
                trial.iter_mut().for_each(|x| *x /= s);
                let ft = pb.objective(&trial);
                if ft.is_finite() && ft >= f - 1e-15 * f.abs().max(1e-300) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            let moved = trial.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = trial;
            if moved == 0.0 {
                break;
            }
        }
        pb.grad(&q, &mut g, &mut dens);
        // bring back the worst excluded decision if it would raise the dual
        let worst = (0..nd)
            .filter(|&d| q[d] == 0.0 && g[d] > 1.0 + KKT_SLACK)
            .max_by(|&a, &b| g[a].total_cmp(&g[b]));
        match worst {
            None => {
                return (residual(&q, &g) <= tol).then_some(q);
            }
            Some(d) => {
                q[d] = 1e-4;
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|x| *x /= s);
            }
        }
    }
    None
}

/// Solves the fixed point for `z` given slot-major as `z[s * nd + d]`.
pub fn ri_fixed_point(z: &[f64], nd: usize, mu: &[f64], lambda: f64, opts: &FixedPointOptions) -> Result<FixedPoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("attention cost must be positive, got {lambda}")));
    }
    let ns = mu.len();
    if nd == 0 || z.len() != ns * nd {
        return Err(Error::Argument("value matrix does not match the decision and state counts".into()));
    }
    let mass: f64 = mu.iter().sum();
    if mu.iter().any(|m| *m < 0.0) || (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Argument(format!("state weights must form a distribution (sum {mass})")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("choice values must be finite".into()));
    }
    let zmax: Vec<f64> = (0..ns)
        .map(|s| z[s * nd..(s + 1) * nd].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let on: Vec<usize> = (0..ns).filter(|&s| mu[s] > 0.0).collect();
    let mut e = Vec::with_capacity(on.len() * nd);
    for &s in &on {
        e.extend(z[s * nd..(s + 1) * nd].iter().map(|v| ((v - zmax[s]) / lambda).exp()));
    }
    let pb = Problem { nd, mu, on, e };

    let live: Vec<bool> = (0..nd).map(|d| (0..pb.on.len()).any(|k| pb.row(k)[d] > 0.0)).collect();
    let n_live = live.iter().filter(|x| **x).count() as f64;
    let mut q: Vec<f64> = live.iter().map(|&l| if l { 1.0 / n_live } else { 0.0 }).collect();

    let mut g = vec![0.0; nd];
    let mut dens = vec![0.0; pb.on.len()];
    let mut next = vec![0.0; nd];
    let mut prev_change = f64::INFINITY;
    let mut newton_steps = 0;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iter {
        pb.grad(&q, &mut g, &mut dens);
        let res = residual(&q, &g);
        if !opts.polish && res <= opts.tol {
            converged = true;
            break;
        }
        if opts.polish && (res <= opts.tol || iterations % 25 == 24) {
            if let Some(polished) = newton_polish(&pb, &q, opts.tol, &mut newton_steps) {
                q = polished;
                converged = true;
                break;
            }
        }
        for d in 0..nd {
            next[d] = q[d] * g[d];
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change > prev_change {
            for d in 0..nd {
                next[d] = 0.5 * (next[d] + q[d]);
            }
        }
        prev_change = change;
        std::mem::swap(&mut q, &mut next);
        iterations += 1;
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            residual: change,
            context: None,
        });
    }

    // rules and values for every state, weighted or not, in the log domain
    let support: Vec<usize> = (0..nd).filter(|&d| q[d] > 0.0).collect();
    let lq: Vec<f64> = q.iter().map(|x| x.ln()).collect();
    let mut p = vec![vec![0.0; nd]; ns];
    let mut values = vec![0.0; ns];
    for s in 0..ns {
        let row = &z[s * nd..(s + 1) * nd];
        let top = support
            .iter()
            .map(|&d| lq[d] + (row[d] - zmax[s]) / lambda)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &d in &support {
            let w = (lq[d] + (row[d] - zmax[s]) / lambda - top).exp();
            p[s][d] = w;
            sum += w;
        }
        p[s].iter_mut().for_each(|x| *x /= sum);
        // log Σ q e^x relative to Σ q; the expm1 form keeps precision when
        // λ is large and every x is tiny
        let qs: f64 = support.iter().map(|&d| q[d]).sum();
        let near: f64 = support.iter().map(|&d| q[d] * ((row[d] - zmax[s]) / lambda).exp_m1()).sum::<f64>() / qs;
        let log_mix = if near > -0.5 { near.ln_1p() } else { top + sum.ln() - qs.ln() };
        values[s] = zmax[s] + lambda * log_mix;
    }
    let mut res: f64 = 0.0;
    for d in 0..nd {
        let mix: f64 = (0..ns).map(|s| mu[s] * p[s][d]).sum();
        res = res.max((q[d] - mix).abs());
    }
    Ok(FixedPoint {
        q,
        p,
        values,
        iterations,
        newton_steps,
        residual: res,
    })
}

/// `Σ_s mu(s) Σ_d p(d|s) log(p(d|s)/q(d))` in nats.
pub fn mutual_information(p: &[Vec<f64>], mu: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (s, row) in p.iter().enumerate() {
        if mu[s] == 0.0 {
            continue;
        }
        for (d, &pd) in row.iter().enumerate() {
            if pd == 0.0 {
                continue;
            }
            if q[d] == 0.0 {
                return Err(Error::Logic(format!(
                    "decision {d} has positive probability under state {s} but none under the default rule"
                )));
            }
            total += mu[s] * pd * (pd / q[d]).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}
