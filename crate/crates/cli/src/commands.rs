//! The pipeline stages behind each subcommand.

use std::time::Instant;

use retire_core::econometrics::{treatment_csv, treatment_report, treatment_table};
use retire_core::re_solver::brute_force_enumerate;
use retire_core::ri_solver::{direct_ri_oracle, solve_ri_with, solve_tiny_fixed_point, RiOptions};
use retire_core::simulator::{
    age_profiles, choice_prob_diff_map, diff_map_csv, profiles_csv, simulate_panel, summary_stats, Panel,
    SolutionKind, SolutionRef, Variable, PERCENTILES,
};
use retire_core::toys::{lambda_ladder_instance, re_instances, ri_instances};
use retire_core::{solve_re, Model, SolutionRe, SolutionRi, SpaSlot, WPoint};

use crate::artifacts::{encode_panel, encode_solution, load_panel, load_solution, panel_file, solution_file, OutDir};
use crate::config::RunConfig;
use crate::error::CliError;

const VARIABLES: [(&str, Variable); 5] = [
    ("assets", Variable::Assets),
    ("consumption", Variable::Consumption),
    ("income", Variable::Income),
    ("aime", Variable::Aime),
    ("worked", Variable::Worked),
];

fn build_model(cfg: &RunConfig) -> Result<Model, CliError> {
    Model::build(&cfg.calibration).map_err(CliError::invalid_config)
}

fn spa_label(slot: SpaSlot) -> String {
    match slot {
        SpaSlot::Receiving => "receiving".into(),
        SpaSlot::Pending(s) => s.to_string(),
    }
}

fn state_prefix(model: &Model, age: u32, w: &WPoint, slot: SpaSlot) -> String {
    format!(
        "{age},{},{},{:?},{},{},{},{}",
        w.type_idx + 1,
        w.asset,
        model.assets.points()[w.asset],
        w.income,
        w.aime,
        w.unemployed as u8,
        spa_label(slot)
    )
}

const STATE_HEADER: &str = "age,type,asset,assets,income,aime,unemployed,spa";

fn re_solution_csv(sol: &SolutionRe, ages: &[u32]) -> String {
    let m = &sol.model;
    let sp = m.space();
    let mut s = format!("{STATE_HEADER},value,next_asset,work\n");
    for &age in ages {
        for w in 0..sp.n_w() {
            let wp = sp.w_point(w);
            for slot in sp.valid_slots(age) {
                if let (Some(v), Some(d)) = (sol.value(age, &wp, slot), sol.policy(age, &wp, slot)) {
                    s.push_str(&format!(
                        "{},{v:?},{},{}\n",
                        state_prefix(m, age, &wp, slot),
                        d.next_asset,
                        d.work as u8
                    ));
                }
            }
        }
    }
    s
}

fn ri_solution_csv(sol: &SolutionRi, ages: &[u32]) -> String {
    let m = &sol.model;
    let sp = m.space();
    let mut s = format!("{STATE_HEADER},value,next_asset,work,p_work,info\n");
    for &age in ages {
        for w in 0..sp.n_w() {
            let wp = sp.w_point(w);
            let info = sol.info_flow(age, w);
            for slot in sp.valid_slots(age) {
                let (Some(v), Some(d), Some(rule)) = (
                    sol.value(age, &wp, slot),
                    sol.modal_decision(age, &wp, slot),
                    sol.choice_rule(age, w, slot),
                ) else {
                    continue;
                };
                let p_work: f64 = rule.iter().filter(|x| x.0 % 2 == 1).map(|x| x.1).sum();
                s.push_str(&format!(
                    "{},{v:?},{},{},{p_work:?},{info:?}\n",
                    state_prefix(m, age, &wp, slot),
                    d.next_asset,
                    d.work as u8
                ));
            }
        }
    }
    s
}

/// Solves one model and writes the solution file and its CSV view.
pub fn solve(cfg: &RunConfig, out: &mut OutDir, kind: SolutionKind) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let hash = cfg.model_hash();
    let t = Instant::now();
    let (bytes, csv) = match kind {
        SolutionKind::Re => {
            let sol = solve_re(&model)?;
            (encode_solution(kind, &hash, &sol)?, re_solution_csv(&sol, &cfg.policy_ages))
        }
        SolutionKind::Ri => {
            let sol = solve_ri_with(&model, &RiOptions { fixed_point: cfg.solver })?;
            (encode_solution(kind, &hash, &sol)?, ri_solution_csv(&sol, &cfg.policy_ages))
        }
    };
    let secs = t.elapsed().as_secs_f64();
    out.write(&solution_file(kind), &bytes)?;
    out.write(&format!("solution_{kind}.csv"), csv.as_bytes())?;
    out.record_time(&format!("solve-{kind}"), secs);
    println!("solve-{kind}: {secs:.2}s");
    Ok(())
}

fn belief_csv(panel: &Panel, age: u32) -> String {
    let r = panel.belief_report(age);
    let mut s = String::from("scope,error_years,count,share\n");
    for (scope, stats) in [(format!("age{age}"), &r.at_age), ("pooled".to_string(), &r.pooled)] {
        for (e, c, sh) in &stats.histogram {
            s.push_str(&format!("{scope},{e},{c},{sh:?}\n"));
        }
    }
    s
}

/// Simulates one panel per configured solution kind.
pub fn simulate(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let model_hash = cfg.model_hash();
    let t = Instant::now();
    for &kind in &cfg.kinds {
        let path = out.path(&solution_file(kind));
        let sc = cfg.scenario_for(kind);
        let panel = match kind {
            SolutionKind::Re => {
                let sol: SolutionRe = load_solution(&path, kind, &model_hash)?;
                simulate_panel(SolutionRef::Re(&sol), &sc, &model)?
            }
            SolutionKind::Ri => {
                let sol: SolutionRi = load_solution(&path, kind, &model_hash)?;
                simulate_panel(SolutionRef::Ri(&sol), &sc, &model)?
            }
        };
        out.write(&panel_file(kind), encode_panel(&panel, &cfg.panel_hash()).as_bytes())?;
        out.write(&format!("profiles_{kind}.csv"), profiles_csv(&age_profiles(&panel)).as_bytes())?;
        out.write(&format!("beliefs_{kind}.csv"), belief_csv(&panel, cfg.belief_age).as_bytes())?;
        println!(
            "simulate-{kind}: {} households, {} records",
            panel.n_households(),
            panel.records.len()
        );
    }
    out.record_time("simulate", t.elapsed().as_secs_f64());
    Ok(())
}

fn summary_csv(panel: &Panel) -> Result<String, CliError> {
    let mut s = String::from("variable,n");
    for p in PERCENTILES {
        s.push_str(&format!(",p{p}"));
    }
    s.push_str(",mean,sd,skewness,kurtosis\n");
    for (name, var) in VARIABLES {
        let st = summary_stats(panel, var)?;
        s.push_str(&format!("{name},{}", st.n));
        for (_, v) in &st.percentiles {
            s.push_str(&format!(",{v:?}"));
        }
        s.push_str(&format!(",{:?},{:?},{:?},{:?}\n", st.mean, st.sd, st.skewness, st.kurtosis));
    }
    Ok(s)
}

/// Regression tables, summaries, belief histogram and the choice map.
pub fn analyze(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let t = Instant::now();
    let hash = cfg.panel_hash();
    let mut panels = Vec::new();
    for &kind in &cfg.kinds {
        let panel = load_panel(&out.path(&panel_file(kind)), cfg.scenario_for(kind), &hash)?;
        panels.push((kind, panel));
    }
    let mut hist = String::from("model,error_years,count,share\n");
    for (kind, panel) in &panels {
        let label = kind.to_string();
        let rows = treatment_table(&[(label.as_str(), panel)], &cfg.regression)?;
        out.write(&format!("treatment_{kind}.csv"), treatment_csv(&rows).as_bytes())?;
        out.write(&format!("summary_{kind}.csv"), summary_csv(panel)?.as_bytes())?;
        for (e, c, sh) in &panel.belief_report(cfg.belief_age).at_age.histogram {
            hist.push_str(&format!("{kind},{e},{c},{sh:?}\n"));
        }
        for r in &rows {
            println!(
                "treatment {kind} {}: {:?} (se {:?}, p {:?}, n {})",
                r.population, r.treatment, r.se, r.p, r.n_obs
            );
        }
    }
    out.write("belief_histogram.csv", hist.as_bytes())?;

    if let [(_, re), (_, ri)] = &panels[..] {
        let rows = treatment_report(re, ri, &cfg.regression)?;
        out.write("treatment_comparison.csv", treatment_csv(&rows).as_bytes())?;
        let mh = cfg.model_hash();
        let re_sol: SolutionRe = load_solution(&out.path(&solution_file(SolutionKind::Re)), SolutionKind::Re, &mh)?;
        let ri_sol: SolutionRi = load_solution(&out.path(&solution_file(SolutionKind::Ri)), SolutionKind::Ri, &mh)?;
        let map = choice_prob_diff_map(&ri_sol, &re_sol, cfg.diff_map_age)?;
        out.write(&format!("diff_map_age{}.csv", cfg.diff_map_age), diff_map_csv(&map).as_bytes())?;
    }
    out.record_time("analyze", t.elapsed().as_secs_f64());
    Ok(())
}

/// Runs every configured stage in order.
pub fn all(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    for &kind in &cfg.kinds {
        solve(cfg, out, kind)?;
    }
    simulate(cfg, out)?;
    analyze(cfg, out)
}

/// Tolerances of the tiny-instance checks.
pub const RE_TOL: f64 = 1e-10;
pub const RI_VALUE_TOL: f64 = 1e-6;
pub const RI_PROB_TOL: f64 = 1e-4;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Tiny-instance equivalence checks and the attention-cost ladder.
/// `scale` multiplies every tolerance.
pub fn oracle_check(scale: f64) -> Result<(), CliError> {
    let mut failed = 0usize;
    let re_tol = RE_TOL * scale;
    for (name, pb) in re_instances() {
        let v = solve_re(&pb.model)?
            .value(pb.age, &pb.state, pb.slot)
            .ok_or_else(|| CliError::Numeric(format!("{name}: no value at the initial state")))?;
        let bf = brute_force_enumerate(&pb)?;
        let d = (v - bf.value).abs();
        let ok = d <= re_tol;
        failed += !ok as usize;
        println!("re {name}: residual {d:e} (tol {re_tol:e}) {}", verdict(ok));
    }
    let (vt, pt) = (RI_VALUE_TOL * scale, RI_PROB_TOL * scale);
    for (pb, lambda) in ri_instances() {
        let fp = solve_tiny_fixed_point(&pb, lambda)?;
        let or = direct_ri_oracle(&pb, lambda)?;
        let dv = (fp.net_value - or.net_value).abs();
        let mut dp = 0.0f64;
        let pairs = fp.p.iter().zip(&or.first.p).chain(
            fp.second_p
                .iter()
                .zip(&or.second)
                .flat_map(|(a, ch)| a.iter().zip(&ch.p)),
        );
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(b) {
                dp = dp.max((x - y).abs());
            }
        }
        let ok = dv <= vt && dp <= pt;
        failed += !ok as usize;
        println!(
            "ri {} (lambda {lambda:?}): value residual {dv:e} (tol {vt:e}), prob residual {dp:e} (tol {pt:e}) {}",
            pb.name,
            verdict(ok)
        );
    }
    let pb = lambda_ladder_instance();
    let mut info = Vec::new();
    for lambda in [0.01, 0.1, 1.0, 10.0] {
        let mi = solve_tiny_fixed_point(&pb, lambda)?.mutual_information;
        println!("ladder lambda {lambda:?}: information {mi:e}");
        info.push(mi);
    }
    let ok = info.windows(2).all(|w| w[1] <= w[0]) && info.windows(2).any(|w| w[1] < w[0]);
    failed += !ok as usize;
    println!("ladder monotone: {}", verdict(ok));
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} oracle checks failed")));
    }
    println!("oracle-check: all checks passed");
    Ok(())
}
