//! Subcommand implementations. Each returns the JSON result it recorded.

use std::fs::File;
use std::io::BufWriter;

use poisson_clt::bounds::{
    rate_prediction, write_zeta_csv, zeta_closed_form, zeta_monte_carlo, RatePrediction, ZetaBreakdown,
};
use poisson_clt::functional::{normalized_model, Gilbert};
use poisson_clt::geometry::{ConvexBody, McBudget, DEFAULT_MC_BUDGET};
use poisson_clt::gilbert::Components;
use poisson_clt::linalg::Matrix;
use poisson_clt::model::{pd_certificate, target_matrix_c, CovarianceReport, ModelSpec, PdCertificate};
use poisson_clt::numerics::mean_and_se;
use poisson_clt::seed::{tags, SeedPath};
use poisson_clt::verify::{
    d3_panel_estimate, empirical_covariance, poincare_check, rate_regression, replica_seed, run_replicas,
    GaussianSide, PanelEstimate, PoincareBudget, PoincareCheck, RateFit, TestFunctionPanel,
};
use poisson_clt::Result;
use serde::Serialize;

use crate::config::Validated;
use crate::output::{num, opt, Sink};

fn geometry_budget(seed: u64) -> McBudget {
    McBudget::new(DEFAULT_MC_BUDGET, SeedPath::new(seed, 0).derive(tags::GEOMETRY))
}

#[derive(Serialize)]
struct SimulateEntry {
    t: f64,
    epsilon: f64,
    tau: f64,
    means: Vec<f64>,
    scales: Vec<f64>,
    normalized_column_means: Vec<f64>,
    configurations_file: String,
}

pub fn simulate(v: &Validated, sink: &Sink) -> Result<serde_json::Value> {
    let c = &v.config;
    let m = v.spec.m();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (k, &t) in c.t_grid.iter().enumerate() {
        let batch = run_replicas(&v.spec, t, c.replicas, c.master_seed)?;
        let name = format!("configurations_t{k}.bin");
        let mut w = BufWriter::new(File::create(sink.path(&name))?);
        for r in 0..c.replicas {
            v.spec.sample(t, replica_seed(c.master_seed, r))?.write_binary(&mut w)?;
        }
        for (r, (raw, norm)) in batch.raw.iter().zip(&batch.rows).enumerate() {
            let mut row = vec![num(t), r.to_string()];
            row.extend(raw.iter().map(|x| num(*x)));
            row.extend(norm.iter().map(|x| num(*x)));
            rows.push(row);
        }
        let col_means = (0..m)
            .map(|i| mean_and_se(&batch.rows.iter().map(|r| r[i]).collect::<Vec<_>>()).0)
            .collect();
        let eps = v.spec.epsilon(t);
        entries.push(SimulateEntry {
            t,
            epsilon: eps,
            tau: t * eps.powi(v.spec.d() as i32),
            means: batch.means,
            scales: batch.scales,
            normalized_column_means: col_means,
            configurations_file: name,
        });
    }
    let mut header = vec!["t".to_string(), "replica".to_string()];
    header.extend((0..m).map(|i| format!("raw_{i}")));
    header.extend((0..m).map(|i| format!("normalized_{i}")));
    sink.write_csv("values.csv", &header.join(","), &rows)?;
    Ok(serde_json::to_value(serde_json::json!({ "batches": entries }))?)
}

fn cov_rows(report: &CovarianceReport) -> Vec<Vec<String>> {
    let m = report.target.c.n();
    let mut rows = Vec::new();
    for i in 0..m {
        for j in 0..m {
            rows.push(vec![
                num(report.t),
                i.to_string(),
                j.to_string(),
                num(report.target.c.get(i, j)),
                num(report.normalized_lower.get(i, j)),
                num(report.normalized_upper.get(i, j)),
                num(report.relative_remainder.get(i, j)),
                opt(report.empirical.as_ref().map(|e| e.get(i, j))),
                opt(report.empirical_std_err.as_ref().map(|e| e.get(i, j))),
            ]);
        }
    }
    rows
}

const COV_HEADER: &str = "t,i,j,target,normalized_lower,normalized_upper,relative_remainder,empirical,empirical_std_err";

pub fn covariance(v: &Validated, sink: &Sink) -> Result<serde_json::Value> {
    let c = &v.config;
    let budget = geometry_budget(c.master_seed);
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &t in &c.t_grid {
        let mut report = CovarianceReport::new(&v.spec, t, &budget)?;
        let batch = run_replicas(&v.spec, t, c.replicas, c.master_seed)?;
        let (emp, se) = empirical_covariance(&batch.rows)?;
        report.empirical = Some(emp);
        report.empirical_std_err = Some(se);
        rows.extend(cov_rows(&report));
        reports.push(report);
    }
    sink.write_csv("cov.csv", COV_HEADER, &rows)?;
    Ok(serde_json::to_value(serde_json::json!({ "reports": reports }))?)
}

#[derive(Serialize)]
struct BoundsResult {
    note: &'static str,
    p: f64,
    q: f64,
    c0: f64,
    prediction: Option<RatePrediction>,
    prediction_error: Option<String>,
    closed_form: Vec<ZetaBreakdown>,
    d3_rate: Option<RateFit>,
    monte_carlo: Option<Vec<ZetaBreakdown>>,
}

fn closed_form_grid(v: &Validated) -> Result<Vec<ZetaBreakdown>> {
    let c = &v.config;
    let budget = geometry_budget(c.master_seed);
    c.t_grid
        .iter()
        .map(|&t| zeta_closed_form(&v.spec, t, v.p, Some(v.q), c.c0, &budget))
        .collect()
}

fn fit_if_possible(ts: &[f64], ys: &[f64]) -> Option<RateFit> {
    rate_regression(ts, ys).ok()
}

pub fn bounds(v: &Validated, sink: &Sink) -> Result<serde_json::Value> {
    let c = &v.config;
    let closed = closed_form_grid(v)?;
    let mut f = BufWriter::new(File::create(sink.path("zeta.csv"))?);
    sink.write_csv_preamble(&mut f)?;
    write_zeta_csv(&closed, &mut f)?;
    drop(f);
    let (prediction, prediction_error) = match rate_prediction(&v.spec, v.p) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let d3_rate = fit_if_possible(&c.t_grid, &closed.iter().map(|z| z.d3_bound).collect::<Vec<_>>());
    let monte_carlo = match &c.zeta_monte_carlo {
        None => None,
        Some(zb) => {
            let budget = geometry_budget(c.master_seed);
            let target = target_matrix_c(&v.spec, &budget)?.c;
            let body = v.spec.sampling_domain();
            let rows = c
                .t_grid
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let f = normalized_model(&v.spec, t, &budget)?;
                    let seed = SeedPath::new(c.master_seed, 0).derive(tags::BOOTSTRAP).with_replica(k as u64);
                    zeta_monte_carlo(&f, &body, t, &target, v.p, Some(v.q), zb, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut f = BufWriter::new(File::create(sink.path("zeta_mc.csv"))?);
            sink.write_csv_preamble(&mut f)?;
            write_zeta_csv(&rows, &mut f)?;
            Some(rows)
        }
    };
    Ok(serde_json::to_value(BoundsResult {
        note: "closed-form values are upper bounds up to the constant c0",
        p: v.p,
        q: v.q,
        c0: c.c0,
        prediction,
        prediction_error,
        closed_form: closed,
        d3_rate,
        monte_carlo,
    })?)
}

#[derive(Serialize)]
struct CltEntry {
    t: f64,
    epsilon: f64,
    empirical_covariance: Matrix,
    empirical_std_err: Matrix,
    max_abs_cov_error: f64,
    max_abs_cov_error_std_err: f64,
    panel: PanelSummary,
    bounds: ZetaBreakdown,
}

#[derive(Serialize)]
struct PanelSummary {
    lower_bound: f64,
    std_err: f64,
    argmax: usize,
    functions: usize,
}

impl From<&PanelEstimate> for PanelSummary {
    fn from(p: &PanelEstimate) -> Self {
        Self {
            lower_bound: p.lower_bound,
            std_err: p.std_err,
            argmax: p.argmax,
            functions: p.entries.len(),
        }
    }
}

#[derive(Serialize)]
struct CltResult {
    target: Matrix,
    target_std_err: Matrix,
    prediction: Option<RatePrediction>,
    entries: Vec<CltEntry>,
    cov_error_rate: Option<RateFit>,
    panel_rate: Option<RateFit>,
    d3_bound_rate: Option<RateFit>,
}

pub fn clt(v: &Validated, sink: &Sink) -> Result<serde_json::Value> {
    let c = &v.config;
    let budget = geometry_budget(c.master_seed);
    let target = target_matrix_c(&v.spec, &budget)?;
    let panel = TestFunctionPanel::standard(v.spec.m())?;
    let closed = closed_form_grid(v)?;
    let mut entries = Vec::new();
    let mut cov_csv = Vec::new();
    for (&t, zb) in c.t_grid.iter().zip(closed) {
        let batch = run_replicas(&v.spec, t, c.replicas, c.master_seed)?;
        let (emp, se) = empirical_covariance(&batch.rows)?;
        let m = emp.n();
        let (mut worst, mut worst_se) = (0.0f64, 0.0);
        for i in 0..m {
            for j in 0..m {
                let e = (emp.get(i, j) - target.c.get(i, j)).abs();
                if e > worst {
                    worst = e;
                    worst_se = se.get(i, j);
                }
            }
        }
        let est = d3_panel_estimate(&batch.rows, &target.c, &panel, GaussianSide::ClosedForm)?;
        let mut report = CovarianceReport::new(&v.spec, t, &budget)?;
        report.empirical = Some(emp.clone());
        report.empirical_std_err = Some(se.clone());
        cov_csv.extend(cov_rows(&report));
        entries.push(CltEntry {
            t,
            epsilon: v.spec.epsilon(t),
            empirical_covariance: emp,
            empirical_std_err: se,
            max_abs_cov_error: worst,
            max_abs_cov_error_std_err: worst_se,
            panel: PanelSummary::from(&est),
            bounds: zb,
        });
    }
    sink.write_csv("cov.csv", COV_HEADER, &cov_csv)?;
    let rates: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                num(e.t),
                num(e.max_abs_cov_error),
                num(e.max_abs_cov_error_std_err),
                num(e.panel.lower_bound),
                num(e.panel.std_err),
                num(e.bounds.d3_bound),
                opt(e.bounds.d2_bound),
            ]
        })
        .collect();
    sink.write_csv(
        "rates.csv",
        "t,max_abs_cov_error,max_abs_cov_error_std_err,panel_lower_bound,panel_std_err,d3_bound,d2_bound",
        &rates,
    )?;
    let series = |g: fn(&CltEntry) -> f64| fit_if_possible(&c.t_grid, &entries.iter().map(g).collect::<Vec<_>>());
    let result = CltResult {
        target: target.c.clone(),
        target_std_err: target.std_err.clone(),
        prediction: rate_prediction(&v.spec, v.p).ok(),
        cov_error_rate: series(|e| e.max_abs_cov_error),
        panel_rate: series(|e| e.panel.lower_bound),
        d3_bound_rate: series(|e| e.bounds.d3_bound),
        entries,
    };
    Ok(serde_json::to_value(result)?)
}

fn windows(spec: &ModelSpec) -> Vec<ConvexBody> {
    match spec {
        ModelSpec::Exponents(s) => vec![s.window.clone()],
        ModelSpec::Domains(s) => s.windows.clone(),
    }
}

pub fn pdcheck(v: &Validated, _sink: &Sink) -> Result<serde_json::Value> {
    let cert: PdCertificate = pd_certificate(&windows(&v.spec), &geometry_budget(v.config.master_seed))?;
    Ok(serde_json::to_value(cert)?)
}

#[derive(Serialize)]
struct PoincareEntry {
    t: f64,
    component: usize,
    check: PoincareCheck,
}

pub fn poincare(v: &Validated, _sink: &Sink) -> Result<serde_json::Value> {
    let c = &v.config;
    let budget = c.poincare.unwrap_or(PoincareBudget {
        replicas: c.replicas,
        x_samples: 32,
    });
    let mut entries = Vec::new();
    for (k, &t) in c.t_grid.iter().enumerate() {
        let eps = v.spec.epsilon(t);
        for i in 0..v.spec.m() {
            let (w, alpha) = v.spec.component(i);
            let f = Gilbert::new(
                Components::Exponents {
                    window: w.clone(),
                    alphas: vec![alpha],
                },
                eps,
            )?;
            let seed = SeedPath::new(c.master_seed, 0)
                .derive(tags::MECKE_RHS)
                .with_replica((k * v.spec.m() + i) as u64);
            entries.push(PoincareEntry {
                t,
                component: i,
                check: poincare_check(&f, w, t, v.p, &budget, seed)?,
            });
        }
    }
    let all_pass = entries.iter().all(|e| e.check.pass);
    Ok(serde_json::json!({ "p": v.p, "all_pass": all_pass, "checks": serde_json::to_value(entries)? }))
}
