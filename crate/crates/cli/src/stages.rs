use landscape_recon::differential::{differential_sweep, sweep_csv};
use landscape_recon::gauge_recon::gauge_study;
use landscape_recon::lpp::{Step, WeightField};
use landscape_recon::modified_distance::SwitchingDag;
use landscape_recon::recon_pipeline::{
    end_to_end, horizon_study, interface_study, shock_measure, Prepared, ReconstructionReport,
};
use landscape_recon::{Error, Result};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{cell, table, Output};

pub type Failures = Vec<String>;

fn need(out: &mut Failures, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        out.push(what());
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

pub fn sample_field(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let window = cfg.pipeline.window_box();
    let field = WeightField::exponential(window, cfg.seed())?;
    let again = WeightField::exponential(window, cfg.seed())?;
    let weights: Vec<f64> = window.points().map(|p| field.weight(p)).collect::<Result<_>>()?;
    let mut failures = Vec::new();
    need(&mut failures, weights.iter().all(|&w| w > 0.0), || "non-positive weight".into());
    need(&mut failures, again.materialize(window)? == weights, || "resampling changed the weights".into());
    out.json("field.json", &field.header()).map_err(io)?;
    let rows = window.points().zip(&weights).map(|(p, w)| vec![s(p.i), s(p.j), s(w)]);
    out.csv("weights.csv", &table("i,j,weight", rows)).map_err(io)?;
    Ok(failures)
}

pub fn build_trees(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let prep = Prepared::new(&cfg.pipeline)?;
    let mut failures = Vec::new();
    let coverage = prep.coverage();
    for c in &coverage {
        need(&mut failures, c.tree >= cfg.pipeline.coverage_floor, || {
            format!("tree coverage {:.3} below floor for direction {}", c.tree, c.direction)
        });
    }
    let rows = coverage.iter().map(|c| vec![s(c.direction), s(c.tree), s(c.busemann)]);
    out.csv("coverage.csv", &table("direction,tree_coverage,busemann_coverage", rows)).map_err(io)?;
    let mut trees = vec![&prep.center];
    for w in &prep.windows {
        trees.extend([&w.lower, &w.upper]);
    }
    let points: Vec<_> = cfg.pipeline.window_box().points().collect();
    let rows = trees.iter().flat_map(|d| {
        points.iter().map(move |&v| {
            let step = match d.tree.parent_step(v) {
                Step::Horizontal => "H",
                Step::Vertical => "V",
            };
            vec![s(d.direction.value()), s(v.i), s(v.j), s(step), s(d.tree.is_stabilized(v))]
        })
    });
    out.csv("trees.csv", &table("direction,i,j,parent_step,stabilized", rows)).map_err(io)?;
    Ok(failures)
}

pub fn sweep_distances(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let prep = Prepared::new(&cfg.pipeline)?;
    let w = &prep.windows[0];
    let dag = SwitchingDag::new(&w.lower.tree, &w.upper.tree)?.with_weights(&prep.field)?;
    let rows = differential_sweep(&prep.field, &prep.center.busemann, &prep.center.tree, &dag, &prep.distance_pairs());
    let tol = cfg.pipeline.tolerance;
    let mut failures = Vec::new();
    for r in &rows {
        need(&mut failures, r.d.value() >= -tol, || format!("negative D at {:?}->{:?}", r.p, r.q));
        need(&mut failures, !r.ancestral || r.d.value() <= tol, || format!("ancestral pair {:?}->{:?} has D > 0", r.p, r.q));
        need(&mut failures, r.gap.is_nan() || r.gap >= -tol, || format!("restricted D below D at {:?}->{:?}", r.p, r.q));
    }
    need(&mut failures, !rows.is_empty(), || "no certified pairs".into());
    out.csv("sweep.csv", &sweep_csv(&rows)).map_err(io)?;
    Ok(failures)
}

pub fn recon_partition(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let p = Prepared::new(&cfg.pipeline)?.partition_score()?;
    let mut failures = Vec::new();
    need(&mut failures, p.fraction >= 0.99, || format!("partition agreement {:.4} < 0.99", p.fraction));
    need(&mut failures, p.failed_rows.is_empty(), || format!("non-interval classes on rows {:?}", p.failed_rows));
    let failed: Vec<String> = p.failed_rows.iter().map(|l| l.to_string()).collect();
    let row = vec![s(p.rows), s(p.agree), s(p.compared), s(p.fraction), failed.join(" ")];
    out.csv("partition.csv", &table("rows,agree,compared,fraction,failed_rows", [row])).map_err(io)?;
    Ok(failures)
}

pub fn recon_tree(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let prep = Prepared::new(&cfg.pipeline)?;
    let delta = prep.delta_score()?;
    let t = prep.tree_score()?;
    let mut failures = Vec::new();
    for d in &delta {
        need(&mut failures, d.max_deviation <= 1e3 * cfg.pipeline.tolerance, || {
            format!("assembled Δ off by {:e} in ({}, {})", d.max_deviation, d.lower, d.upper)
        });
    }
    need(&mut failures, t.fraction >= 0.99, || format!("tree agreement {:.4} < 0.99", t.fraction));
    need(&mut failures, t.degenerate_compared > 0 && t.degenerate_agree == t.degenerate_compared, || {
        format!("degenerate tree agreement {}/{}", t.degenerate_agree, t.degenerate_compared)
    });
    let rows = delta.iter().map(|d| vec![s(d.lower), s(d.upper), s(d.coverage), s(d.max_deviation)]);
    out.csv("delta.csv", &table("lower,upper,coverage,max_deviation", rows)).map_err(io)?;
    let row = vec![
        s(t.certified),
        s(t.coverage),
        s(t.ties),
        s(t.compared),
        s(t.agree),
        s(t.fraction),
        s(t.split_compared),
        s(t.split_agree),
        s(t.degenerate_compared),
        s(t.degenerate_agree),
    ];
    let header = "certified,coverage,ties,compared,agree,fraction,split_compared,split_agree,degenerate_compared,degenerate_agree";
    out.csv("tree.csv", &table(header, [row])).map_err(io)?;
    Ok(failures)
}

pub fn recon_distance(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let prep = Prepared::new(&cfg.pipeline)?;
    let (score, rows) = prep.distance_score()?;
    let mut failures = Vec::new();
    need(&mut failures, score.checked > 0 && score.exact == score.checked, || {
        format!("distance exact on {}/{} pairs, max error {:e}", score.exact, score.checked, score.max_abs_error)
    });
    need(&mut failures, score.monotone_violations == 0, || format!("{} non-monotone traces", score.monotone_violations));
    let windows = prep.windows.len();
    let header: Vec<String> = ["p_i", "p_j", "q_i", "q_j"]
        .into_iter()
        .map(String::from)
        .chain((1..=windows).map(|n| format!("window_{n}")))
        .chain(["truth", "switching_from", "error", "monotone"].into_iter().map(String::from))
        .collect();
    let body = rows.iter().map(|r| {
        let mut cells = vec![s(r.p.i), s(r.p.j), s(r.q.i), s(r.q.j)];
        cells.extend(r.values.iter().map(|v| cell(*v)));
        cells.extend([cell(r.truth), r.switching_from.map_or_else(String::new, |n| s(n + 1)), cell(r.error), s(r.monotone)]);
        cells
    });
    out.csv("distances.csv", &table(&header.join(","), body)).map_err(io)?;
    out.json("distance_summary.json", &score).map_err(io)?;
    Ok(failures)
}

pub fn shock(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let prep = Prepared::new(&cfg.pipeline)?;
    let rects = prep.rectangles();
    let values: Vec<Option<(f64, f64)>> = rects
        .par_iter()
        .map(|r| match shock_measure(&prep.field, &prep.center.busemann, r) {
            Ok(v) => Ok(Some((v.mu, v.mu_prime))),
            Err(Error::NotStabilized { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let additive = prep.additive_check()?;
    let tol = cfg.pipeline.tolerance;
    let mut failures = Vec::new();
    let checked: Vec<(f64, f64)> = values.iter().flatten().copied().collect();
    need(&mut failures, !checked.is_empty(), || "no certified rectangle".into());
    let worst = checked.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let min_mu = checked.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    need(&mut failures, worst <= tol, || format!("shock identity residual {worst:e}"));
    need(&mut failures, checked.is_empty() || min_mu >= -tol, || format!("negative shock measure {min_mu:e}"));
    need(&mut failures, additive.is_some_and(|r| r <= tol), || format!("additive residual {additive:?}"));
    let rows = rects.iter().zip(&values).map(|(r, v)| {
        let mut cells = vec![s(r.s), s(r.t), s(r.x1), s(r.x2), s(r.y1), s(r.y2)];
        cells.extend([cell(v.map(|x| x.0)), cell(v.map(|x| x.1)), cell(v.map(|x| (x.0 - x.1).abs()))]);
        cells
    });
    out.csv("shock.csv", &table("s,t,x1,x2,y1,y2,mu,mu_prime,residual", rows)).map_err(io)?;
    let summary = vec![s(rects.len()), s(checked.len()), s(worst), s(if checked.is_empty() { 0.0 } else { min_mu }), cell(additive)];
    out.csv("shock_summary.csv", &table("rectangles,checked,max_residual,min_mu,additive_residual", [summary])).map_err(io)?;
    Ok(failures)
}

pub fn gauge(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let study = gauge_study(&cfg.gauge)?;
    let mut failures = Vec::new();
    let err = study.reconstruction.max_relative_error();
    need(&mut failures, err <= 0.2, || format!("calibrated relative error {err:.3} > 0.2"));
    let half = study.half_disagreement();
    need(&mut failures, half <= 0.25, || format!("half-horizon calibrations differ by {half:.3} > 0.25"));
    need(&mut failures, study.trend.oscillation_decreases(), || "oscillation does not decrease with the scale".into());
    out.csv("gauge.csv", &study.reconstruction.to_csv()).map_err(io)?;
    out.csv("trend.csv", &study.trend.to_csv()).map_err(io)?;
    out.json("gauge.json", &study).map_err(io)?;
    Ok(failures)
}

pub fn horizon(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let study = horizon_study(&cfg.horizon)?;
    let failures = study.failures(cfg.alpha());
    let rows = study.delta_law.iter().map(|r| {
        vec![s(r.lag), s(r.samples), s(r.ks.statistic), s(r.ks.p_value), s(r.mean), s(r.reference_mean), s(r.zero_fraction), s(r.reference_zero_fraction)]
    });
    let header = "lag,samples,ks_statistic,ks_p,mean,reference_mean,zero_fraction,reference_zero_fraction";
    out.csv("delta_law.csv", &table(header, rows)).map_err(io)?;
    out.csv("coalescence.csv", &study.coalescence.to_csv()).map_err(io)?;
    out.json("horizon.json", &study).map_err(io)?;
    Ok(failures)
}

pub fn interface(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let study = interface_study(&cfg.interface)?;
    let mut failures = Vec::new();
    need(&mut failures, study.strictly_decreasing(), || "interface medians do not strictly decrease".into());
    let rows = study.rows.iter().map(|r| vec![s(r.d), s(r.median), s(r.seeds), s(r.unstable_fraction)]);
    out.csv("escape.csv", &table("d,median,seeds,unstable_fraction", rows)).map_err(io)?;
    Ok(failures)
}

fn summary_csv(report: &ReconstructionReport) -> String {
    let failures = report.failures();
    let rows = [
        ("partition_fraction", s(report.partition.fraction)),
        ("delta_max_deviation", s(report.delta.iter().map(|d| d.max_deviation).fold(0.0, f64::max))),
        ("tree_fraction", s(report.tree.fraction)),
        ("tree_split_fraction", s(report.tree.split_fraction)),
        ("degenerate_fraction", s(report.tree.degenerate_fraction)),
        ("distance_exact", s(report.distance.exact)),
        ("distance_checked", s(report.distance.checked)),
        ("monotone_violations", s(report.distance.monotone_violations)),
        ("shock_max_residual", s(report.shock.max_residual)),
        ("shock_min_mu", s(report.shock.min_mu)),
        ("additive_residual", cell(report.shock.additive_residual)),
        ("failures", s(failures.len())),
    ];
    table("metric,value", rows.into_iter().map(|(k, v)| vec![s(k), v]))
}

/// Runs every stage; runtimes go to stderr so the files stay deterministic.
pub fn end_to_end_stage(cfg: &ExperimentConfig, out: &mut Output) -> Result<Failures> {
    let mut report = end_to_end(&cfg.pipeline)?;
    for t in std::mem::take(&mut report.runtimes) {
        eprintln!("stage {} took {} ms", t.stage, t.millis);
    }
    out.json("report.json", &report).map_err(io)?;
    out.csv("summary.csv", &summary_csv(&report)).map_err(io)?;
    Ok(report.failures())
}

/// Re-scores `report.json` from an earlier end-to-end run in the output directory.
pub fn report(cfg: &ExperimentConfig, out: &mut Output, dir: &std::path::Path) -> Result<Failures> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(io)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let report: ReconstructionReport = serde_json::from_value(value["data"].clone())?;
    if report.config != cfg.pipeline {
        return Err(Error::Mismatch("report.json was produced by a different pipeline config".into()));
    }
    out.csv("summary.csv", &summary_csv(&report)).map_err(io)?;
    Ok(report.failures())
}
