//! Posterior over the SPA for simulated households.
//!
//! Under the inattentive solution the decision itself is the signal, so the
//! likelihood of an observed action given each candidate SPA is the solved
//! choice rule. Receipt of the pension reveals the SPA for free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{no_receipt_prior, ModelParams, SpaDist};
use crate::ri_solver::SolutionRi;
use crate::space::{Decision, SpaSlot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Belief {
    /// The pension started at this age.
    Receiving(u32),
    /// Distribution over SPA values strictly above the current age.
    NotReceiving(SpaDist),
}

impl Belief {
    /// Reported SPA: the posterior mode, ties to the lower age.
    pub fn mode(&self) -> u32 {
        match self {
            Belief::Receiving(spa) => *spa,
            Belief::NotReceiving(d) => d.mode(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Belief::Receiving(spa) => *spa as f64,
            Belief::NotReceiving(d) => d.mean(),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Belief::Receiving(_) => 0.0,
            Belief::NotReceiving(d) => d.entropy(),
        }
    }

    pub fn prob(&self, spa: u32) -> f64 {
        match self {
            Belief::Receiving(s) => (*s == spa) as u8 as f64,
            Belief::NotReceiving(d) => d.prob(spa),
        }
    }
}

/// Belief held at the first model age by someone not yet receiving.
pub fn initial_belief(params: &ModelParams) -> Result<Belief> {
    no_receipt_prior(params.age_start, params).map(Belief::NotReceiving)
}

/// One filtering step with an arbitrary likelihood `lik(spa)` of the action
/// observed at `age`. `receipt_next` says whether the pension starts at
/// `age + 1`.
pub fn bayes_step(
    belief: &Belief,
    lik: impl Fn(u32) -> f64,
    age: u32,
    receipt_next: bool,
    params: &ModelParams,
) -> Result<Belief> {
    let prior = match belief {
        Belief::Receiving(spa) => return Ok(Belief::Receiving(*spa)),
        Belief::NotReceiving(d) => d,
    };
    let mut post = SpaDist::zeros(params);
    for (spa, m) in prior.support() {
        let l = lik(spa);
        if l > 0.0 {
            post.add(spa, m * l);
        }
    }
    if !(post.total() > 0.0) {
        return Err(Error::Logic(format!(
            "observed action at age {age} has zero probability under every SPA in the belief"
        )));
    }
    post.normalize()?;
    let mut next = post.propagate(params);
    if receipt_next {
        if next.prob(age + 1) == 0.0 {
            return Err(Error::Logic(format!("receipt at {} contradicts the belief", age + 1)));
        }
        return Ok(Belief::Receiving(age + 1));
    }
    next.condition_above(age + 1).map_err(|_| {
        Error::Logic(format!("non-receipt at {} contradicts the belief", age + 1))
    })?;
    Ok(Belief::NotReceiving(next))
}

/// Bayes update using the solved inattentive choice rule at W-point `w`.
pub fn update_belief(
    belief: &Belief,
    action: Decision,
    w: usize,
    age: u32,
    solution: &SolutionRi,
    receipt_next: bool,
) -> Result<Belief> {
    let d = action.index() as u32;
    let lik = |spa: u32| {
        solution
            .choice_rule(age, w, SpaSlot::Pending(spa))
            .and_then(|r| r.iter().find(|x| x.0 == d).map(|x| x.1))
            .unwrap_or(0.0)
    };
    bayes_step(belief, lik, age, receipt_next, &solution.model.params)
}

/// Histogram of reported minus true SPA and the share within a year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefStats {
    /// `(error_years, count, share)` sorted by error.
    pub histogram: Vec<(i32, usize, f64)>,
    pub n: usize,
    pub share_exact: f64,
    pub share_within_one: f64,
}

impl BeliefStats {
    pub fn from_errors(errors: impl IntoIterator<Item = i32>) -> Self {
        let mut counts = std::collections::BTreeMap::<i32, usize>::new();
        for e in errors {
            *counts.entry(e).or_default() += 1;
        }
        let n: usize = counts.values().sum();
        let share = |c: usize| if n == 0 { f64::NAN } else { c as f64 / n as f64 };
        let exact = counts.get(&0).copied().unwrap_or(0);
        let within: usize = counts.range(-1..=1).map(|(_, c)| c).sum();
        Self {
            histogram: counts.iter().map(|(&e, &c)| (e, c, share(c))).collect(),
            n,
            share_exact: share(exact),
            share_within_one: share(within),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("error_years,count,share\n");
        for (e, c, sh) in &self.histogram {
            s.push_str(&format!("{e},{c},{sh:?}\n"));
        }
        s
    }
}

/// Belief errors at one age and pooled over all pre-receipt records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefReport {
    pub age: u32,
    pub at_age: BeliefStats,
    pub pooled: BeliefStats,
}

/// Errors from records of `(age, receiving, reported, true_spa)`.
pub fn belief_error_stats(
    records: impl IntoIterator<Item = (u32, bool, u32, u32)> + Clone,
    age: u32,
) -> BeliefReport {
    let err = |(_, _, m, s): (u32, bool, u32, u32)| m as i32 - s as i32;
    BeliefReport {
        age,
        at_age: BeliefStats::from_errors(records.clone().into_iter().filter(|r| r.0 == age).map(err)),
        pooled: BeliefStats::from_errors(records.into_iter().filter(|r| !r.1).map(err)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(p: f64) -> ModelParams {
        ModelParams {
            p_spa_step: p,
            ..ModelParams::default()
        }
    }

    #[test]
    fn initial_is_prior() {
        let p = params(0.06);
        let b = initial_belief(&p).unwrap();
        assert_eq!(b, Belief::NotReceiving(no_receipt_prior(52, &p).unwrap()));
        let b0 = initial_belief(&params(0.0)).unwrap();
        assert_eq!(b0.prob(60), 1.0);
        assert_eq!(b0.mode(), 60);
    }

    #[test]
    fn flat_likelihood_only_propagates() {
        let p = params(0.06);
        let b = initial_belief(&p).unwrap();
        let Belief::NotReceiving(prior) = &b else { unreachable!() };
        let next = bayes_step(&b, |_| 0.3, 52, false, &p).unwrap();
        let expected = prior.propagate(&p);
        for spa in 60..=70 {
            assert_relative_eq!(next.prob(spa), expected.prob(spa), epsilon = 1e-15);
        }
    }

    #[test]
    fn two_spa_bayes_ratio() {
        let p = params(0.1);
        let prior = SpaDist::from_probs(60, {
            let mut v = vec![0.0; 11];
            v[2] = 0.4;
            v[3] = 0.6;
            v
        });
        let b = Belief::NotReceiving(prior);
        let lik = |s: u32| if s == 62 { 0.7 } else { 0.2 };
        let next = bayes_step(&b, lik, 55, false, &p).unwrap();
        // posterior before moving: 0.28 / 0.12 normalised by 0.40
        let (a, c) = (0.28 / 0.40, 0.12 / 0.40);
        assert_relative_eq!(next.prob(62), a * 0.9, epsilon = 1e-12);
        assert_relative_eq!(next.prob(63), a * 0.1 + c * 0.9, epsilon = 1e-12);
        assert_relative_eq!(next.prob(64), c * 0.1, epsilon = 1e-12);
    }

    #[test]
    fn receipt_reveals() {
        let p = params(0.06);
        let b = Belief::NotReceiving(no_receipt_prior(62, &p).unwrap());
        let r = bayes_step(&b, |_| 1.0, 62, true, &p).unwrap();
        assert_eq!(r, Belief::Receiving(63));
        let again = bayes_step(&r, |_| 0.0, 63, false, &p).unwrap();
        assert_eq!(again, Belief::Receiving(63));
    }

    #[test]
    fn non_receipt_drops_past_values() {
        let p = params(0.06);
        let b = Belief::NotReceiving(no_receipt_prior(59, &p).unwrap());
        let Belief::NotReceiving(d) = bayes_step(&b, |_| 1.0, 59, false, &p).unwrap() else {
            panic!("expected pending belief")
        };
        assert_eq!(d.prob(60), 0.0);
        assert_relative_eq!(d.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn impossible_action_is_an_error() {
        let p = params(0.06);
        let b = initial_belief(&p).unwrap();
        assert!(matches!(bayes_step(&b, |_| 0.0, 52, false, &p), Err(Error::Logic(_))));
    }

    #[test]
    fn stats_shares() {
        let r = belief_error_stats(
            vec![(58, false, 60, 60), (58, false, 62, 60), (58, false, 61, 62), (59, false, 60, 60), (60, true, 60, 60)],
            58,
        );
        assert_eq!(r.at_age.n, 3);
        assert_relative_eq!(r.at_age.share_within_one, 2.0 / 3.0);
        assert_relative_eq!(r.at_age.share_exact, 1.0 / 3.0);
        assert_eq!(r.pooled.n, 4);
        assert_eq!(r.at_age.histogram, vec![(-1, 1, 1.0 / 3.0), (0, 1, 1.0 / 3.0), (2, 1, 1.0 / 3.0)]);
    }

    proptest::proptest! {
        #[test]
        fn posterior_is_a_distribution_above_age(
            age in 52u32..69,
            step in 0.01f64..0.5,
            lik in proptest::collection::vec(0.01f64..1.0, 11),
        ) {
            let p = params(step);
            let b = Belief::NotReceiving(no_receipt_prior(age, &p).unwrap());
            let Belief::NotReceiving(d) = bayes_step(&b, |s| lik[(s - 60) as usize], age, false, &p).unwrap() else {
                panic!("expected pending belief")
            };
            proptest::prop_assert!((d.total() - 1.0).abs() <= 1e-12);
            proptest::prop_assert!(d.support().all(|(s, _)| s > age + 1));
            proptest::prop_assert!(d.mode() > age + 1);
        }
    }
}
