//! Shipped tiny instances used by the oracle checks.

use crate::discretization::{discretize_ar1, Grid, MarkovChain};
use crate::model::{DbPensionParams, ModelParams, MortalityTable, TypeProfile};
use crate::re_solver::TinyProblem;
use crate::ri_solver::{RiTinyProblem, SecondPeriod};
use crate::space::{Model, SpaSlot, WPoint};

fn tiny_params() -> ModelParams {
    ModelParams {
        age_entry: 20,
        age_start: 62,
        age_work_end: 64,
        age_death: 65,
        age_spouse_retire: 64,
        spa_init: 63,
        spa_cap: 64,
        aime_freeze_age: 65,
        age_db: 63,
        p_spa_step: 0.0,
        ..ModelParams::default()
    }
}

fn tiny_type(has_db: bool, unemp: [f64; 2]) -> TypeProfile {
    TypeProfile {
        type_id: 1,
        has_db,
        delta0: 15_000f64.ln(),
        delta1: 0.0,
        delta2: 0.0,
        rho: 0.8,
        sigma_eps: 0.2,
        sigma_init: 0.2,
        unemp_prob: unemp.to_vec(),
        population_share: 1.0,
    }
}

fn tiny_model(params: ModelParams, ty: TypeProfile, chain: MarkovChain) -> Model {
    let mut survival = vec![1.0; (params.age_death - params.age_entry + 1) as usize];
    let n = survival.len();
    survival[n - 3] = 0.9;
    survival[n - 2] = 0.8;
    survival[n - 1] = 0.0;
    Model::from_parts(
        params.clone(),
        DbPensionParams::default(),
        vec![ty],
        MortalityTable::new(params.age_entry, survival).expect("valid table"),
        Grid::from_points(vec![0.0, 4_000.0, 12_000.0]).expect("valid grid"),
        Grid::from_points(vec![0.0, 20_000.0]).expect("valid grid"),
        vec![chain],
    )
    .expect("tiny model is valid")
}

fn identity_chain() -> MarkovChain {
    MarkovChain::new(vec![-0.2, 0.2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).expect("valid chain")
}

fn rouwenhorst() -> MarkovChain {
    discretize_ar1(0.8, 0.2, 2).expect("valid chain")
}

fn state(asset: usize, income: usize, aime: usize, unemployed: bool) -> WPoint {
    WPoint {
        type_idx: 0,
        asset,
        income,
        aime,
        unemployed,
    }
}

/// Named full-information instances small enough to enumerate.
pub fn re_instances() -> Vec<(String, TinyProblem)> {
    let mut out = Vec::new();
    let mk = |name: &str, model: Model, age: u32, state: WPoint, slot: SpaSlot| {
        (name.to_string(), TinyProblem { model, age, state, slot })
    };

    out.push(mk(
        "deterministic",
        tiny_model(tiny_params(), tiny_type(false, [0.0, 0.0]), identity_chain()),
        62,
        state(1, 0, 0, false),
        SpaSlot::Pending(63),
    ));
    out.push(mk(
        "stochastic-income",
        tiny_model(tiny_params(), tiny_type(false, [0.3, 0.1]), rouwenhorst()),
        63,
        state(2, 1, 0, false),
        SpaSlot::Receiving,
    ));
    out.push(mk(
        "observed-spa-step",
        tiny_model(
            ModelParams {
                p_spa_step: 0.4,
                ..tiny_params()
            },
            tiny_type(false, [0.2, 0.05]),
            rouwenhorst(),
        ),
        62,
        state(1, 1, 0, false),
        SpaSlot::Pending(63),
    ));
    out.push(mk(
        "db-frozen-aime",
        tiny_model(
            ModelParams {
                aime_freeze_age: 21,
                ..tiny_params()
            },
            tiny_type(true, [0.1, 0.1]),
            rouwenhorst(),
        ),
        62,
        state(0, 0, 1, false),
        SpaSlot::Pending(64),
    ));
    out.push(mk(
        "unemployed-no-bequest",
        tiny_model(
            ModelParams {
                theta: 0.0,
                p_spa_step: 0.5,
                ..tiny_params()
            },
            tiny_type(false, [0.5, 0.2]),
            rouwenhorst(),
        ),
        62,
        state(2, 0, 0, true),
        SpaSlot::Pending(63),
    ));
    out
}

/// Named attention-problem instances with their attention costs.
pub fn ri_instances() -> Vec<(RiTinyProblem, f64)> {
    vec![
        (
            RiTinyProblem {
                name: "two-by-two".into(),
                mu: vec![0.5, 0.5],
                payoff: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                second: None,
            },
            0.5,
        ),
        (
            RiTinyProblem {
                name: "three-by-three".into(),
                mu: vec![0.2, 0.5, 0.3],
                payoff: vec![vec![0.9, 0.1, 0.4], vec![0.0, 0.8, 0.5], vec![0.2, 0.3, 0.6]],
                second: None,
            },
            0.4,
        ),
        (
            RiTinyProblem {
                name: "dominated-decision".into(),
                mu: vec![0.5, 0.3, 0.2],
                payoff: vec![vec![1.0, 0.0, 0.2], vec![0.0, 1.0, 0.2], vec![0.5, 0.5, 0.1]],
                second: None,
            },
            0.3,
        ),
        (
            RiTinyProblem {
                name: "two-period-2x2".into(),
                mu: vec![0.7, 0.3],
                payoff: vec![vec![0.5, 0.3], vec![0.2, 0.6]],
                second: Some(SecondPeriod {
                    beta: 0.95,
                    transition: vec![vec![0.9, 0.1], vec![0.0, 1.0]],
                    payoff: vec![
                        vec![vec![1.0, 0.2], vec![0.1, 0.9]],
                        vec![vec![0.8, 0.4], vec![0.3, 0.7]],
                    ],
                }),
            },
            0.3,
        ),
        (
            RiTinyProblem {
                name: "two-period-3x3".into(),
                mu: vec![0.5, 0.3, 0.2],
                payoff: vec![vec![0.6, 0.2, 0.3], vec![0.1, 0.7, 0.4], vec![0.3, 0.3, 0.5]],
                second: Some(SecondPeriod {
                    beta: 0.9,
                    transition: vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.7, 0.3], vec![0.0, 0.0, 1.0]],
                    payoff: vec![
                        vec![vec![1.0, 0.0, 0.4], vec![0.2, 0.9, 0.3], vec![0.0, 0.1, 0.8]],
                        vec![vec![0.7, 0.3, 0.5], vec![0.4, 0.6, 0.5], vec![0.2, 0.4, 0.6]],
                        vec![vec![0.9, 0.5, 0.1], vec![0.1, 0.5, 0.9], vec![0.5, 0.5, 0.5]],
                    ],
                }),
            },
            0.25,
        ),
        (
            RiTinyProblem {
                name: "near-tie".into(),
                mu: vec![0.5, 0.5],
                payoff: vec![vec![0.5, 0.5001], vec![0.5, 0.4999]],
                second: None,
            },
            0.05,
        ),
    ]
}

/// The 2x2 instance used for the attention-cost ladder.
pub fn lambda_ladder_instance() -> RiTinyProblem {
    ri_instances().swap_remove(0).0
}
