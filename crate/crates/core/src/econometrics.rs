//! Treatment-effect regressions on simulated panels.
//!
//! Participation is regressed on an indicator of being below the SPA with
//! age and cohort dummies by pooled OLS; standard errors are clustered by
//! household.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulator::{Panel, PanelRecord};

/// How the treatment indicator is formed from age and true SPA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentRule {
    /// `age < spa`
    BelowSpa,
    /// `age <= spa`
    AtOrBelowSpa,
}

impl TreatmentRule {
    pub fn apply(&self, age: u32, spa: u32) -> bool {
        match self {
            TreatmentRule::BelowSpa => age < spa,
            TreatmentRule::AtOrBelowSpa => age <= spa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    TypeDummies,
    Unemployed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subpopulation {
    All,
    AboveMedianAssetsAtSpaMinus1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub treatment: TreatmentRule,
    pub age_dummies: bool,
    pub cohort_dummies: bool,
    pub extra_controls: Vec<Control>,
    pub subpopulation: Subpopulation,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            treatment: TreatmentRule::BelowSpa,
            age_dummies: true,
            cohort_dummies: true,
            extra_controls: Vec::new(),
            subpopulation: Subpopulation::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub clusters: Vec<u64>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Households whose assets in the year before their SPA are in the upper
/// half. Ties on the asset grid are broken by a hash of the household id so
/// the split is an exact half.
pub fn above_median_households(records: &[PanelRecord]) -> BTreeSet<u64> {
    let mut last: BTreeMap<u64, &PanelRecord> = BTreeMap::new();
    for r in records {
        let e = last.entry(r.household_id).or_insert(r);
        if r.age > e.age {
            *e = r;
        }
    }
    let mut pre: Vec<(f64, u64, u64)> = records
        .iter()
        .filter(|r| r.age + 1 == last[&r.household_id].true_spa)
        .map(|r| (r.assets, mix(r.household_id), r.household_id))
        .collect();
    pre.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let half = pre.len() / 2;
    pre[pre.len() - half..].iter().map(|x| x.2).collect()
}

fn dummies<K: Ord + Copy + std::fmt::Display>(
    name: &str,
    keys: &[K],
    x: &mut Vec<Vec<f64>>,
    cols: &mut Vec<String>,
) {
    let levels: BTreeSet<K> = keys.iter().copied().collect();
    for lvl in levels.iter().skip(1) {
        cols.push(format!("{name}_{lvl}"));
        x.push(keys.iter().map(|k| (k == lvl) as u8 as f64).collect());
    }
}

/// Regression design from a panel. Fails with the offending column names if
/// the design is rank deficient.
pub fn build_design(panel: &Panel, spec: &RegressionSpec) -> Result<Design> {
    let keep: Box<dyn Fn(&PanelRecord) -> bool> = match spec.subpopulation {
        Subpopulation::All => Box::new(|_| true),
        Subpopulation::AboveMedianAssetsAtSpaMinus1 => {
            let set = above_median_households(&panel.records);
            Box::new(move |r| set.contains(&r.household_id))
        }
    };
    let rows: Vec<&PanelRecord> = panel.records.iter().filter(|r| keep(r)).collect();
    if rows.is_empty() {
        return Err(Error::Argument("no observations in the regression sample".into()));
    }
    let mut cols = vec!["intercept".to_string(), "treatment".to_string()];
    let mut x: Vec<Vec<f64>> = vec![
        vec![1.0; rows.len()],
        rows.iter()
            .map(|r| spec.treatment.apply(r.age, r.true_spa) as u8 as f64)
            .collect(),
    ];
    if spec.age_dummies {
        let ages: Vec<u32> = rows.iter().map(|r| r.age).collect();
        dummies("age", &ages, &mut x, &mut cols);
    }
    if spec.cohort_dummies {
        let c: Vec<usize> = rows.iter().map(|r| r.cohort).collect();
        dummies("cohort", &c, &mut x, &mut cols);
    }
    for c in &spec.extra_controls {
        match c {
            Control::TypeDummies => {
                let t: Vec<u32> = rows.iter().map(|r| r.type_id).collect();
                dummies("type", &t, &mut x, &mut cols);
            }
            Control::Unemployed => {
                cols.push("unemployed".into());
                x.push(rows.iter().map(|r| r.unemployed as u8 as f64).collect());
            }
        }
    }
    let n = rows.len();
    let design = Design {
        x: DMatrix::from_fn(n, cols.len(), |i, j| x[j][i]),
        y: DVector::from_iterator(n, rows.iter().map(|r| r.worked as u8 as f64)),
        clusters: rows.iter().map(|r| r.household_id).collect(),
        columns: cols,
    };
    check_rank(&design.x, &design.columns)?;
    Ok(design)
}

/// Flags columns lying in the span of earlier ones.
pub fn check_rank(x: &DMatrix<f64>, columns: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let orig = x.column(j).into_owned();
        let norm = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let rem = v.norm();
        if norm == 0.0 || rem <= 1e-9 * norm {
            bad.push(columns[j].clone());
        } else {
            basis.push(v / rem);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Rank { columns: bad })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub columns: Vec<String>,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub se: DVector<f64>,
    pub z: DVector<f64>,
    pub p: DVector<f64>,
    pub residuals: DVector<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<Coefficient> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(Coefficient {
            estimate: self.coefficients[j],
            se: self.se[j],
            z: self.z[j],
            p: self.p[j],
        })
    }
}

/// Pooled OLS with cluster-robust covariance and the usual small-sample
/// factor `G/(G-1) * (N-1)/(N-K)`.
pub fn ols_cluster(design: &Design) -> Result<RegressionResult> {
    let (x, y) = (&design.x, &design.y);
    let (n, k) = x.shape();
    if y.len() != n || design.clusters.len() != n {
        return Err(Error::Argument("design, response and clusters differ in length".into()));
    }
    if n <= k {
        return Err(Error::Argument(format!("{n} observations for {k} regressors")));
    }
    let xtx = x.transpose() * x;
    let chol = match xtx.clone().cholesky() {
        Some(c) => c,
        None => {
            check_rank(x, &design.columns)?;
            return Err(Error::Rank {
                columns: design.columns.clone(),
            });
        }
    };
    let beta = chol.solve(&(x.transpose() * y));
    let resid = y - x * &beta;
    let bread = chol.inverse();

    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    for (i, &g) in design.clusters.iter().enumerate() {
        let gi = *index.entry(g).or_insert_with(|| {
            scores.push(DVector::zeros(k));
            scores.len() - 1
        });
        scores[gi].axpy(resid[i], &x.row(i).transpose(), 1.0);
    }
    let g = scores.len();
    if g < 2 {
        return Err(Error::Argument("clustered errors need at least two clusters".into()));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in &scores {
        meat.ger(1.0, s, s, 1.0);
    }
    let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let mut cov = &bread * meat * &bread * factor;
    cov = (&cov + cov.transpose()) * 0.5;
    let se = cov.diagonal().map(|v| v.max(0.0).sqrt());
    let z = beta.zip_map(&se, |b, s| b / s);
    let normal = Normal::standard();
    let p = z.map(|t| (2.0 * normal.sf(t.abs())).clamp(0.0, 1.0));
    Ok(RegressionResult {
        columns: design.columns.clone(),
        coefficients: beta,
        covariance: cov,
        se,
        z,
        p,
        residuals: resid,
        n_obs: n,
        n_clusters: g,
    })
}

/// Treatment row of one regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRow {
    pub population: String,
    pub model: String,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub treatment: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

fn treatment_row(panel: &Panel, spec: &RegressionSpec, population: &str, model: &str) -> Result<TreatmentRow> {
    let res = ols_cluster(&build_design(panel, spec)?)?;
    let c = res.coef("treatment").expect("treatment column is always present");
    Ok(TreatmentRow {
        population: population.into(),
        model: model.into(),
        n_obs: res.n_obs,
        n_clusters: res.n_clusters,
        treatment: c.estimate,
        se: c.se,
        z: c.z,
        p: c.p,
    })
}

/// Whole-population and above-median treatment effects for each panel.
pub fn treatment_table(panels: &[(&str, &Panel)], spec: &RegressionSpec) -> Result<Vec<TreatmentRow>> {
    let mut rows = Vec::new();
    for (pop, sub) in [
        ("whole", Subpopulation::All),
        ("above_median", Subpopulation::AboveMedianAssetsAtSpaMinus1),
    ] {
        let s = RegressionSpec {
            subpopulation: sub,
            ..spec.clone()
        };
        for (name, panel) in panels {
            rows.push(treatment_row(panel, &s, pop, name)?);
        }
    }
    Ok(rows)
}

/// Side-by-side effects from panels simulated under the same design.
pub fn treatment_report(re: &Panel, ri: &Panel, spec: &RegressionSpec) -> Result<Vec<TreatmentRow>> {
    if !re.scenario.same_design(&ri.scenario) {
        return Err(Error::config("scenario", "panels come from different scenarios or seeds"));
    }
    treatment_table(&[("re", re), ("ri", ri)], spec)
}

pub fn treatment_csv(rows: &[TreatmentRow]) -> String {
    let mut s = String::from("population,model,n_obs,n_clusters,treatment,se,z,p\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:?},{:?},{:?},{:?}\n",
            r.population, r.model, r.n_obs, r.n_clusters, r.treatment, r.se, r.z, r.p
        ));
    }
    s
}
