use std::fs::File;

use cca_core::cca::{run_boundary_suite, run_dgp_grid, run_gradvar_experiment, score_pair_traced, CcaScore, Direction, GridReport};
use cca_core::dgp::{sample_scm3, SampleSet};
use cca_core::graph::{ccl_sweep as run_sweep, compute_pac_bound, lambda2_threshold as threshold, Dag, PacBoundInputs};
use cca_core::tuebingen::{load_benchmark, reference, run_tuebingen};
use serde::Serialize;
use serde_json::json;

use crate::config::{BoundaryConfig, CclSweepConfig, GradVarConfig, GridConfig, Lambda2Config, PacBoundConfig, ScorePairConfig, TuebingenConfig};
use crate::report::*;
use crate::{CliError, Context};

fn without_traces(r: &GridReport) -> GridReport {
    let mut r = r.clone();
    r.runs.iter_mut().for_each(|run| run.traces = None);
    r
}

fn report_errors(suite: &str, r: &GridReport) {
    for run in r.runs.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "{suite}: {} / {} seed {} failed: {}",
            run.dgp.name(),
            run.architecture,
            run.seed_index,
            run.error.as_deref().unwrap_or("")
        );
    }
}

/// Per-cell and per-DGP rows for one grid.
fn summary_rows<'a>(suite: &'a str, r: &'a GridReport, labels: &'a [String]) -> Vec<SummaryRow<'a>> {
    let mut rows = Vec::new();
    for total in &r.per_dgp {
        let kind = total.key.parse().expect("summary keys are DGP names");
        for (i, label) in labels.iter().enumerate() {
            rows.push(SummaryRow::new(suite, &total.key, label, &r.cell(kind, i)));
        }
        rows.push(SummaryRow::new(suite, &total.key, "all", total));
    }
    rows
}

fn print_grid_line(suite: &str, r: &GridReport) {
    for s in &r.per_dgp {
        println!(
            "{suite:>14} {:>7}: {:>3}/{:<3} correct  t_fwd {:7.1} ± {:<7.1} t_rev {:7.1} ± {:<7.1} undecided {} errors {}",
            s.key, s.correct, s.runs, s.mean_t_fwd, s.sd_t_fwd, s.mean_t_rev, s.sd_t_rev, s.undecided, s.errors
        );
    }
}

#[derive(Serialize)]
struct PairOutput {
    mean_score: f64,
    direction: Direction,
    scores: Vec<CcaScore>,
}

pub fn score_pair(cfg: &ScorePairConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let file = File::open(&cfg.input).map_err(|e| CliError::Data(format!("{}: {e}", cfg.input.display())))?;
    let data = SampleSet::read_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", cfg.input.display())))?;
    let rc = cfg.run_config();
    let outcomes = (0..cfg.n_seeds as u64)
        .map(|k| score_pair_traced(&data.x, &data.y, &rc, cfg.seed.wrapping_add(k)))
        .collect::<cca_core::Result<Vec<_>>>()?;
    let scores: Vec<CcaScore> = outcomes.iter().map(|o| o.score).collect();
    let mean_score = scores.iter().map(|s| s.score as f64).sum::<f64>() / scores.len() as f64;
    let out = PairOutput { mean_score, direction: Direction::from_score(mean_score), scores };
    let text = if out.scores.len() == 1 { serde_json::to_string_pretty(&out.scores[0]) } else { serde_json::to_string_pretty(&out) };
    println!("{}", text.expect("scores serialize"));

    if let Some(dir) = &ctx.out {
        let mut e = Emitter::new(dir)?;
        e.json("manifest.json", manifest)?;
        e.json("score.json", &Envelope { manifest, body: &out })?;
        let curves = outcomes.iter().enumerate().flat_map(|(k, o)| pair_curve_rows(k, cfg.normalize, &o.forward, &o.reverse));
        e.csv("fig2_loss_curves.csv", CURVE_HEADER, curves)?;
    }
    Ok(())
}

pub fn exp1(cfg: &GridConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let archs = cfg.architectures();
    let labels: Vec<String> = archs.iter().map(|a| a.label()).collect();
    let report = run_dgp_grid(&archs, &cfg.dgps, &cfg.experiment_config());
    report_errors("exp1", &report);
    print_grid_line("exp1", &report);

    let mut e = Emitter::new(&ctx.out_or("exp1"))?;
    e.json("manifest.json", manifest)?;
    e.csv("runs.csv", RUN_HEADER, report.runs.iter().map(|r| RunRow::new("exp1", r)))?;
    e.csv("table2.csv", SUMMARY_HEADER, summary_rows("exp1", &report, &labels))?;
    e.csv("table3.csv", SUMMARY_HEADER, report.per_arch.iter().map(|c| SummaryRow::new("exp1", "all", &c.key, c)))?;
    e.csv("fig3_cca_scores.csv", SCORE_HEADER, report.runs.iter().map(|r| ScoreRow::new("exp1", r)))?;
    e.csv("fig2_loss_curves.csv", CURVE_HEADER, curve_rows("exp1", &report.runs))?;
    e.json("exp1.json", &Envelope { manifest, body: json!({ "report": without_traces(&report) }) })?;
    Ok(())
}

pub fn boundary(cfg: &BoundaryConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let archs = cfg.architectures();
    let labels: Vec<String> = archs.iter().map(|a| a.label()).collect();
    let r = run_boundary_suite(&archs, &cfg.experiment_config());
    let suites = [("linear", &r.linear), ("square", &r.square), ("cubic_zscored", &r.cubic_zscored), ("cubic_raw", &r.cubic_raw)];
    for (name, g) in suites {
        report_errors(name, g);
        print_grid_line(name, g);
    }
    for (name, g) in [("square", &r.square), ("cubic_raw", &r.cubic_raw)] {
        if let Some(s) = g.per_dgp.first() {
            println!("{name:>14} median t_rev {:.1}", s.median_t_rev);
        }
    }

    let mut e = Emitter::new(&ctx.out_or("boundary"))?;
    e.json("manifest.json", manifest)?;
    e.csv("boundary_runs.csv", RUN_HEADER, suites.iter().flat_map(|(n, g)| g.runs.iter().map(|r| RunRow::new(n, r))))?;
    e.csv("boundary_summary.csv", SUMMARY_HEADER, suites.iter().flat_map(|(n, g)| summary_rows(n, g, &labels)))?;
    e.csv("fig4_boundary.csv", BOUNDARY_HEADER, suites.iter().flat_map(|(n, g)| g.runs.iter().map(|r| BoundaryRow::new(n, r))))?;
    let cubic = &suites[2..];
    e.csv("fig3_cca_scores.csv", SCORE_HEADER, cubic.iter().flat_map(|(n, g)| g.runs.iter().map(|r| ScoreRow::new(n, r))))?;
    e.csv("fig2_loss_curves.csv", CURVE_HEADER, cubic.iter().flat_map(|(n, g)| curve_rows(n, &g.runs)))?;
    let body = json!({
        "linear": without_traces(&r.linear),
        "square": without_traces(&r.square),
        "cubic_zscored": without_traces(&r.cubic_zscored),
        "cubic_raw": without_traces(&r.cubic_raw),
    });
    e.json("boundary.json", &Envelope { manifest, body })?;
    Ok(())
}

pub fn gradvar(cfg: &GradVarConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let arch = cfg.network.architecture();
    let r = run_gradvar_experiment(&arch, &cfg.dgps, &cfg.experiment_config(), cfg.n_batches, &cfg.phases)?;
    for s in &r.summary {
        println!("{:>7} step {:>5}: reverse/forward variance ratio {:.3} (ratio of means {:.3})", s.dgp.name(), s.phase, s.ratio, s.ratio_of_means);
    }
    let mut e = Emitter::new(&ctx.out_or("gradvar"))?;
    e.json("manifest.json", manifest)?;
    e.csv("gradvar_rows.csv", GRADVAR_HEADER, r.rows.iter().map(GradVarCsvRow::from))?;
    e.csv("table6.csv", GRADVAR_SUMMARY_HEADER, r.summary.iter().map(GradVarSummaryRow::from))?;
    e.json("gradvar.json", &Envelope { manifest, body: &r })?;
    Ok(())
}

pub fn ccl_sweep(cfg: &CclSweepConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let data = sample_scm3(cfg.n, (cfg.scm_noise[0], cfg.scm_noise[1]), cfg.seed)?.columns();
    let truth = Dag::from_edges(3, &[(0, 1), (1, 2), (0, 2)])?;
    let traces = run_sweep(&data, &cfg.lambda2s, &cfg.params(), &cfg.run_config(), cfg.seed, cfg.max_iters, Some(&truth))?;
    let rows: Vec<SweepRow> = cfg.lambda2s.iter().zip(&traces).map(|(&l, t)| SweepRow::new(l, t)).collect();
    if let Some(t) = traces.first() {
        println!("skeleton: {}", t.skeleton.edges().map(|(a, b)| format!("{a}--{b}")).collect::<Vec<_>>().join(" "));
    }
    for (&l, t) in cfg.lambda2s.iter().zip(&traces) {
        println!(
            "lambda2 {l:<6} iterations {} monotone {} spurious {} final objective {:.4}",
            t.iterations,
            if t.monotone { "yes" } else { "no" },
            t.spurious_edge_count().unwrap_or(0),
            t.objectives.last().copied().unwrap_or(f64::NAN)
        );
    }
    let mut e = Emitter::new(&ctx.out_or("ccl-sweep"))?;
    e.json("manifest.json", manifest)?;
    e.csv("table5.csv", SWEEP_HEADER, rows)?;
    e.csv("ccl_traces.csv", LOOP_HEADER, cfg.lambda2s.iter().zip(&traces).flat_map(|(&l, t)| loop_rows(l, t)))?;
    let body = json!({ "truth": truth, "lambda2s": cfg.lambda2s, "traces": traces });
    e.json("ccl_sweep.json", &Envelope { manifest, body })?;
    Ok(())
}

pub fn tuebingen(cfg: &TuebingenConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let pairs = load_benchmark(&cfg.data)?;
    let report = run_tuebingen(&pairs, &cfg.run_config(), cfg.seed)?;
    for f in &report.failed {
        log::warn!("pair {} failed: {}", f.id, f.error);
    }
    println!(
        "loaded {} pairs: scored {}, skipped {} non-scalar, failed {}",
        report.loaded,
        report.pairs.len(),
        report.skipped_non_scalar.len(),
        report.failed.len()
    );
    if let Some(m) = &report.metrics {
        println!(
            "weighted accuracy {:.3}, unweighted {:.3}, AUC {:.3} (reference: {:.2} / AUC {:.2}; majority baseline {:.3}; ANM/RESIT {:.2})",
            m.weighted_accuracy,
            m.unweighted_accuracy,
            m.auc,
            reference::ACCURACY,
            reference::AUC,
            reference::MAJORITY_BASELINE,
            reference::ANM_RESIT
        );
    }
    let mut e = Emitter::new(&ctx.out_or("tuebingen"))?;
    e.json("manifest.json", manifest)?;
    e.csv("tuebingen_pairs.csv", PAIR_HEADER, report.pairs.iter().map(PairRow::from))?;
    let curve = report.metrics.as_ref().map(|m| m.cumulative_curve.as_slice()).unwrap_or(&[]);
    e.csv("fig5_tuebingen.csv", FIG5_HEADER, fig5_rows(curve))?;
    let body = json!({
        "report": report,
        "reference": {
            "accuracy": reference::ACCURACY,
            "auc": reference::AUC,
            "majority_baseline": reference::MAJORITY_BASELINE,
            "anm_resit": reference::ANM_RESIT,
        },
    });
    e.json("tuebingen.json", &Envelope { manifest, body })?;
    Ok(())
}

pub fn pac_bound(cfg: &PacBoundConfig, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let inputs = PacBoundInputs { d_c: cfg.d_c, tau_mix: cfg.tau_mix, gamma: cfg.gamma, epsilon: cfg.epsilon, delta: cfg.delta, c: cfg.c };
    let value = compute_pac_bound(&inputs)?;
    println!("{value}");
    if let Some(dir) = &ctx.out {
        let mut e = Emitter::new(dir)?;
        e.json("manifest.json", manifest)?;
        e.json("pac_bound.json", &Envelope { manifest, body: json!({ "inputs": inputs, "n_samples": value }) })?;
    }
    Ok(())
}

pub fn lambda2_threshold(cfg: &Lambda2Config, manifest: &RunManifest, ctx: &Context) -> Result<(), CliError> {
    let value = threshold(cfg.gamma, cfg.v, cfg.e_max)?;
    println!("{value}");
    if let Some(dir) = &ctx.out {
        let mut e = Emitter::new(dir)?;
        e.json("manifest.json", manifest)?;
        e.json("lambda2_threshold.json", &Envelope { manifest, body: json!({ "gamma": cfg.gamma, "v": cfg.v, "e_max": cfg.e_max, "lambda2": value }) })?;
    }
    Ok(())
}
