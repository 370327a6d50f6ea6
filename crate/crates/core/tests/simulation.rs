use std::sync::OnceLock;

use retire_core::econometrics::{
    above_median_households, build_design, treatment_report, RegressionSpec, Subpopulation,
};
use retire_core::simulator::{
    age_profiles, choice_prob_diff_map, simulate_panel, summary_stats, Cohort, Panel, ScenarioSpec,
    SolutionKind, SolutionRef, SpaPath, Variable,
};
use retire_core::{solve_re, solve_ri, Calibration, Error, Model, SolutionRe, SolutionRi};

fn small_calibration() -> Calibration {
    let mut cal = Calibration::default();
    cal.grids.assets_n = 12;
    cal.grids.income_n = 3;
    cal.grids.aime_n = 2;
    for t in &mut cal.types {
        t.unemp_prob.truncate(3);
    }
    cal
}

struct Fixture {
    model: Model,
    re: SolutionRe,
    ri: SolutionRi,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let model = Model::build(&small_calibration()).unwrap();
        Fixture {
            re: solve_re(&model).unwrap(),
            ri: solve_ri(&model).unwrap(),
            model,
        }
    })
}

fn scenario(kind: SolutionKind) -> ScenarioSpec {
    ScenarioSpec {
        households_per_cohort: 150,
        kind,
        ..ScenarioSpec::default()
    }
}

fn ri_panel(sc: &ScenarioSpec) -> Panel {
    let f = fixture();
    simulate_panel(SolutionRef::Ri(&f.ri), sc, &f.model).unwrap()
}

#[test]
fn same_seed_same_panel_any_worker_count() {
    let f = fixture();
    let sc = scenario(SolutionKind::Ri);
    let a = ri_panel(&sc);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| simulate_panel(SolutionRef::Ri(&f.ri), &sc, &f.model).unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    let c = ri_panel(&ScenarioSpec { seed: sc.seed + 1, ..sc });
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn records_are_canonically_ordered() {
    let p = ri_panel(&scenario(SolutionKind::Ri));
    for w in p.records.windows(2) {
        let key = |r: &retire_core::simulator::PanelRecord| (r.cohort, r.household_id, r.age);
        assert!(key(&w[0]) < key(&w[1]));
    }
}

#[test]
fn observed_spa_without_step_stays_at_sixty() {
    let mut cal = small_calibration();
    cal.params.p_spa_step = 0.0;
    let m = Model::build(&cal).unwrap();
    let re = solve_re(&m).unwrap();
    let sc = ScenarioSpec {
        cohorts: vec![Cohort {
            label: "drawn".into(),
            spa: SpaPath::Drawn,
        }],
        households_per_cohort: 200,
        ..ScenarioSpec::default()
    };
    let p = simulate_panel(SolutionRef::Re(&re), &sc, &m).unwrap();
    assert!(p.records.iter().all(|r| r.true_spa == 60));
    assert!(p.records.iter().all(|r| r.receiving == (r.age >= 60)));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let f = fixture();
    let mut other = f.model.clone();
    other.params.state_pension += 1.0;
    let sc = scenario(SolutionKind::Re);
    assert!(matches!(
        simulate_panel(SolutionRef::Re(&f.re), &sc, &other),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        simulate_panel(SolutionRef::Ri(&f.ri), &sc, &f.model),
        Err(Error::Config { .. })
    ));
    let bad = ScenarioSpec {
        cohorts: vec![Cohort {
            label: "jump".into(),
            spa: SpaPath::Explicit(vec![60; 23].into_iter().chain([62, 62]).collect()),
        }],
        ..sc
    };
    assert!(matches!(
        simulate_panel(SolutionRef::Re(&f.re), &bad, &f.model),
        Err(Error::Config { .. })
    ));
}

#[test]
fn mortality_switch() {
    let f = fixture();
    let on = scenario(SolutionKind::Re);
    let off = ScenarioSpec {
        mortality: false,
        ..on.clone()
    };
    let a = simulate_panel(SolutionRef::Re(&f.re), &on, &f.model).unwrap();
    let b = simulate_panel(SolutionRef::Re(&f.re), &off, &f.model).unwrap();
    assert_eq!(b.records.len(), 450 * 24);
    assert!(a.records.len() < b.records.len());
}

#[test]
fn explicit_path_moves_receipt() {
    let f = fixture();
    // announced 60, moved to 61 at age 55
    let mut path = vec![60; 3];
    path.extend(vec![61; 22]);
    let sc = ScenarioSpec {
        cohorts: vec![Cohort {
            label: "moved".into(),
            spa: SpaPath::Explicit(path),
        }],
        households_per_cohort: 20,
        mortality: false,
        ..ScenarioSpec::default()
    };
    let p = simulate_panel(SolutionRef::Re(&f.re), &sc, &f.model).unwrap();
    for r in &p.records {
        assert_eq!(r.receiving, r.age >= 61, "{r:?}");
    }
}

#[test]
fn filter_is_calibrated_on_drawn_paths() {
    let sc = ScenarioSpec {
        cohorts: vec![Cohort {
            label: "drawn".into(),
            spa: SpaPath::Drawn,
        }],
        households_per_cohort: 10_000,
        mortality: false,
        kind: SolutionKind::Ri,
        ..ScenarioSpec::default()
    };
    let p = ri_panel(&sc);
    // Bayes consistency: among non-receivers at an age, the average posterior
    // mean matches the average true SPA up to sampling error (4 sd).
    for age in [55, 58, 61, 64, 67] {
        let rows: Vec<_> = p.records.iter().filter(|r| r.age == age && !r.receiving).collect();
        let n = rows.len() as f64;
        let truth: Vec<f64> = rows.iter().map(|r| r.true_spa as f64).collect();
        let m_true = truth.iter().sum::<f64>() / n;
        let var = truth.iter().map(|x| (x - m_true).powi(2)).sum::<f64>() / (n - 1.0);
        let m_belief = rows.iter().map(|r| r.belief_mean).sum::<f64>() / n;
        let tol = 4.0 * (var / n).sqrt() + 1e-9;
        assert!(
            (m_true - m_belief).abs() <= tol,
            "age {age}: true {m_true} belief {m_belief} tol {tol}"
        );
        assert!(rows.iter().all(|r| r.belief_mode > r.age));
    }
}

#[test]
fn profiles_and_summaries() {
    let f = fixture();
    let p = simulate_panel(SolutionRef::Re(&f.re), &scenario(SolutionKind::Re), &f.model).unwrap();
    let prof = age_profiles(&p);
    assert_eq!(prof.first().unwrap().age, 52);
    assert_eq!(prof.iter().map(|r| r.n).sum::<usize>(), p.records.len());
    let s = summary_stats(&p, Variable::Assets).unwrap();
    assert!(s.percentiles.windows(2).all(|w| w[0].1 <= w[1].1));
    let empty = Panel {
        scenario: p.scenario.clone(),
        records: vec![],
    };
    assert!(matches!(summary_stats(&empty, Variable::Assets), Err(Error::Argument(_))));

    let long = ScenarioSpec {
        last_age: 85,
        ..scenario(SolutionKind::Re)
    };
    let old = simulate_panel(SolutionRef::Re(&f.re), &long, &f.model).unwrap();
    for row in age_profiles(&old).iter().filter(|r| r.age >= 80) {
        assert_eq!(row.participation_rate, 0.0);
    }
}

#[test]
fn diff_map_properties() {
    let f = fixture();
    let rows = choice_prob_diff_map(&f.ri, &f.re, 57).unwrap();
    assert!(rows.iter().all(|r| (-1.0..=1.0).contains(&r.diff)));
    let other = {
        let mut cal = small_calibration();
        cal.grids.assets_n = 10;
        let m = Model::build(&cal).unwrap();
        solve_re(&m).unwrap()
    };
    assert!(matches!(choice_prob_diff_map(&f.ri, &other, 57), Err(Error::Config { .. })));

    let mut cal = small_calibration();
    cal.params.p_spa_step = 0.0;
    cal.params.lambda = 1e-6;
    let m = Model::build(&cal).unwrap();
    let (re, ri) = (solve_re(&m).unwrap(), solve_ri(&m).unwrap());
    for age in [55, 57, 59, 62] {
        let rows = choice_prob_diff_map(&ri, &re, age).unwrap();
        assert!(rows.iter().all(|r| r.diff.abs() <= 0.01));
    }
}

#[test]
fn design_columns_and_split() {
    let f = fixture();
    let p = simulate_panel(SolutionRef::Re(&f.re), &scenario(SolutionKind::Re), &f.model).unwrap();
    let d = build_design(&p, &RegressionSpec::default()).unwrap();
    assert_eq!(d.columns.iter().filter(|c| c.starts_with("cohort_")).count(), 2);
    assert_eq!(d.columns.iter().filter(|c| c.starts_with("age_")).count(), 23);

    let one = ScenarioSpec {
        cohorts: vec![Cohort {
            label: "only".into(),
            spa: SpaPath::Fixed(61),
        }],
        ..scenario(SolutionKind::Re)
    };
    let p1 = simulate_panel(SolutionRef::Re(&f.re), &one, &f.model).unwrap();
    // one SPA: treatment is spanned by the age dummies
    assert!(matches!(build_design(&p1, &RegressionSpec::default()), Err(Error::Rank { .. })));
    let no_age = RegressionSpec {
        age_dummies: false,
        ..RegressionSpec::default()
    };
    let d1 = build_design(&p1, &no_age).unwrap();
    assert_eq!(d1.columns, vec!["intercept".to_string(), "treatment".to_string()]);

    let no_mort = ScenarioSpec {
        mortality: false,
        ..scenario(SolutionKind::Re)
    };
    let p2 = simulate_panel(SolutionRef::Re(&f.re), &no_mort, &f.model).unwrap();
    let above = above_median_households(&p2.records);
    assert_eq!(above.len(), p2.n_households() / 2);
    let spec = RegressionSpec {
        subpopulation: Subpopulation::AboveMedianAssetsAtSpaMinus1,
        ..RegressionSpec::default()
    };
    let da = build_design(&p2, &spec).unwrap();
    assert_eq!(da.y.len(), above.len() * 24);
}

#[test]
fn treatment_report_requires_matching_design() {
    let f = fixture();
    let sc = scenario(SolutionKind::Re);
    let a = simulate_panel(SolutionRef::Re(&f.re), &sc, &f.model).unwrap();
    let rows = treatment_report(&a, &a, &RegressionSpec::default()).unwrap();
    for pop in ["whole", "above_median"] {
        let r: Vec<_> = rows.iter().filter(|r| r.population == pop).collect();
        assert_eq!(r[0].treatment, r[1].treatment);
        assert_eq!(r[0].p, r[1].p);
    }
    let b = simulate_panel(SolutionRef::Re(&f.re), &ScenarioSpec { seed: 1, ..sc }, &f.model).unwrap();
    assert!(matches!(
        treatment_report(&a, &b, &RegressionSpec::default()),
        Err(Error::Config { .. })
    ));
}

#[test]
fn panel_csv_round_trips() {
    let p = ri_panel(&scenario(SolutionKind::Ri));
    let text = p.to_csv();
    let back = Panel::from_csv(&text, p.scenario.clone()).unwrap();
    assert_eq!(back, p);
    let extra = text.replacen('\n', "\n# note\n", 1);
    assert_eq!(Panel::from_csv(&extra, p.scenario.clone()).unwrap(), p);
    assert!(matches!(Panel::from_csv(&text[1..], p.scenario.clone()), Err(Error::Argument(_))));
    let cut = text.rsplit_once(',').unwrap().0.to_string();
    assert!(matches!(Panel::from_csv(&cut, p.scenario.clone()), Err(Error::Argument(_))));
}
