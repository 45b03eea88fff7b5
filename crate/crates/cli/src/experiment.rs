//! Replicated simulation runs and their CSV rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use ecv_core::dense::DenseMatrix;
use ecv_core::ecv::{
    regularized_spectral_clustering, select_block_model, select_rank, stability_runs,
    stability_select, tune_graphon, tune_regularization, Candidate, EcvConfig, Family, Loss,
    SelectionResult, StabilityMode,
};
use ecv_core::graphon::{neighborhood_smoothing, SmootherConfig};
use ecv_core::holdout::HoldoutMask;
use ecv_core::lowrank::{complete, partial_svd, SvdOptions};
use ecv_core::metrics::clustering_accuracy;
use ecv_core::netgraph::AdjacencyMatrix;
use ecv_core::rng::{derive, fork_seed, StreamRng};
use ecv_core::simgen::{gen_block_model, gen_graphon, gen_rdpg_directed, PlantedInstance};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Source, Task};

/// One CSV line. Columns, in order:
///
/// `rep, n, K_true, lambda, t, beta, model_true, method, family_hat,
/// value_hat, correct, loss_best, ms, p, n_splits, score, losses`
///
/// Empty cells mean "not applicable". `correct` is filled for selection
/// tasks with a planted truth. `score` is task specific: clustering accuracy
/// for TUNE_REG, relative Frobenius error for TUNE_GRAPHON and the norm ratio
/// for CONCENTRATION. `losses` lists `candidate=mean loss` pairs joined by
/// `;`. Only `ms` varies between runs with the same config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub rep: usize,
    pub n: usize,
    #[serde(rename = "K_true")]
    pub k_true: Option<usize>,
    pub lambda: Option<f64>,
    pub t: Option<f64>,
    pub beta: Option<f64>,
    pub model_true: String,
    pub method: String,
    pub family_hat: Option<String>,
    pub value_hat: Option<f64>,
    pub correct: Option<u8>,
    pub loss_best: Option<f64>,
    pub ms: f64,
    pub p: Option<f64>,
    pub n_splits: Option<usize>,
    pub score: Option<f64>,
    pub losses: String,
}

/// Column holding wall time, the only non-reproducible field.
pub const TIMING_COLUMN: &str = "ms";

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub rows: usize,
    pub fraction_correct: Option<f64>,
    pub mean_score: Option<f64>,
    pub median_score: Option<f64>,
    /// How often each candidate was chosen.
    pub choices: BTreeMap<String, usize>,
    /// Candidate mean losses averaged over the rows that report them.
    pub mean_losses: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub failed_reps: Vec<usize>,
    pub methods: BTreeMap<String, MethodSummary>,
}

pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// Runs every replication, writes the CSV (and a `.summary.json` beside it)
/// when the config names an output, and returns rows and summary.
///
/// Output files are created before any computation, so an unwritable path
/// fails fast. A failing replication is logged, counted and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let sinks = match &cfg.output {
        Some(path) => Some(open_outputs(path)?),
        None => None,
    };
    let fixed = match &cfg.source {
        Source::EdgeList {
            path,
            directed,
            weighted,
        } => Some(Arc::new(
            AdjacencyMatrix::load_edge_list(path, *directed, *weighted)
                .with_context(|| format!("loading {}", path.display()))?,
        )),
        _ => None,
    };

    info!(
        "{}: {} replications, seed {}, config {}",
        cfg.task,
        cfg.replications,
        cfg.seed,
        &cfg.hash()[..12]
    );
    let results: Vec<Result<Vec<ResultRow>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep, fixed.as_deref()))
        .collect();

    let mut rows = Vec::new();
    let mut failed_reps = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                warn!("replication {rep} failed: {e:#}");
                failed_reps.push(rep);
            }
        }
    }
    let summary = summarize(cfg, &rows, failed_reps);
    if let Some((csv_out, json_out)) = sinks {
        write_rows(csv_out, &rows)?;
        let mut json_out = json_out;
        serde_json::to_writer_pretty(&mut json_out, &summary)?;
        writeln!(json_out)?;
        json_out.flush()?;
    }
    Ok(ExperimentOutput { rows, summary })
}

/// `results.csv` -> `results.summary.json`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

fn open_outputs(path: &Path) -> Result<(File, BufWriter<File>)> {
    let csv = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let json_path = summary_path(path);
    let json =
        File::create(&json_path).with_context(|| format!("creating {}", json_path.display()))?;
    Ok((csv, BufWriter::new(json)))
}

pub fn write_rows(out: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 17] = [
    "rep",
    "n",
    "K_true",
    "lambda",
    "t",
    "beta",
    "model_true",
    "method",
    "family_hat",
    "value_hat",
    "correct",
    "loss_best",
    "ms",
    "p",
    "n_splits",
    "score",
    "losses",
];

struct Replication<'a> {
    cfg: &'a ExperimentConfig,
    rep: usize,
    n: usize,
    instance: Option<PlantedInstance>,
}

fn run_replication(
    cfg: &ExperimentConfig,
    rep: usize,
    fixed: Option<&AdjacencyMatrix>,
) -> Result<Vec<ResultRow>> {
    let mut rng = derive(cfg.seed, rep as u64);
    let instance = match &cfg.source {
        Source::Block(d) => Some(gen_block_model(d, &mut rng)?),
        Source::Rdpg { n, k } => Some(gen_rdpg_directed(*n, *k, &mut rng)?),
        Source::Graphon { n, graphon } => Some(gen_graphon(*n, *graphon, &mut rng)?),
        Source::EdgeList { .. } => None,
    };
    if let Some(inst) = &instance {
        if inst.infeasible {
            warn!(
                "replication {rep}: {:.0}% of probabilities were clipped to 1",
                100.0 * inst.clipped_fraction
            );
        }
    }
    let a = match (&instance, fixed) {
        (Some(inst), _) => &inst.adjacency,
        (None, Some(a)) => a,
        (None, None) => unreachable!("edge-list source is loaded up front"),
    };
    let ctx = Replication {
        cfg,
        rep,
        n: a.n(),
        instance: instance.clone(),
    };
    let ecv = EcvConfig {
        p: cfg.p,
        n_splits: cfg.n_splits,
        ..EcvConfig::default()
    };
    match cfg.task {
        Task::SelectModel => {
            let runs = timed_runs(cfg, &mut rng, |r| {
                select_block_model(a, cfg.kmax, cfg.loss, &ecv, r)
            })?;
            Ok(ctx.selection_rows(&runs, &loss_tag("ECV", cfg.loss), Some(&ecv)))
        }
        Task::SelectRank => {
            let runs = timed_runs(cfg, &mut rng, |r| {
                select_rank(a, cfg.kmax, cfg.loss, &ecv, r)
            })?;
            let tag = match cfg.loss {
                Loss::L2 => "ECV-SSE".to_string(),
                other => loss_tag("ECV", other),
            };
            Ok(ctx.selection_rows(&runs, &tag, Some(&ecv)))
        }
        Task::SweepPn => {
            let base = fork_seed(&mut rng);
            let mut rows = Vec::new();
            let combos = cfg
                .sweep_p
                .iter()
                .flat_map(|&p| cfg.sweep_n.iter().map(move |&m| (p, m)));
            for (c, (p, m)) in combos.enumerate() {
                let e = EcvConfig {
                    p,
                    n_splits: m,
                    ..EcvConfig::default()
                };
                let runs = timed_runs(cfg, &mut derive(base, c as u64), |r| {
                    select_block_model(a, cfg.kmax, cfg.loss, &e, r)
                })?;
                rows.extend(ctx.selection_rows(&runs, &loss_tag("ECV", cfg.loss), Some(&e)));
            }
            Ok(rows)
        }
        Task::TuneReg => ctx.tune_reg_rows(a, &ecv, &mut rng),
        Task::TuneGraphon => ctx.tune_graphon_rows(a, &ecv, &mut rng),
        Task::Concentration => ctx.concentration_rows(a, &mut rng),
    }
}

fn loss_tag(prefix: &str, loss: Loss) -> String {
    let name = match loss {
        Loss::L2 => "l2",
        Loss::Deviance => "dev",
        Loss::Auc => "AUC",
    };
    format!("{prefix}-{name}")
}

struct TimedRun<T> {
    value: T,
    ms: f64,
}

/// One ECV run, or `stability_reps` of them when a stabilized variant is
/// requested; the first run doubles as the plain method.
fn timed_runs<T, F>(cfg: &ExperimentConfig, rng: &mut StreamRng, run: F) -> Result<Vec<TimedRun<T>>>
where
    T: Send,
    F: Fn(&mut StreamRng) -> ecv_core::Result<T> + Sync,
{
    let reps = if cfg.stability.mode() || cfg.stability.avg() {
        cfg.stability_reps
    } else {
        1
    };
    Ok(stability_runs(reps, rng, |r| {
        let start = Instant::now();
        let value = run(r)?;
        Ok(TimedRun {
            value,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })?)
}

impl Replication<'_> {
    fn row(&self, method: String, chosen: Option<Candidate>) -> ResultRow {
        let design = match &self.cfg.source {
            Source::Block(d) => Some(d),
            _ => None,
        };
        ResultRow {
            rep: self.rep,
            n: self.n,
            k_true: self.cfg.source.k_true(),
            lambda: design.map(|d| d.lambda),
            t: design.map(|d| d.t),
            beta: design.map(|d| d.beta),
            model_true: self.cfg.source.model_tag().to_string(),
            method,
            family_hat: chosen.map(|c| c.family().name().to_string()),
            value_hat: chosen.map(|c| c.value()),
            correct: None,
            loss_best: None,
            ms: 0.0,
            p: None,
            n_splits: None,
            score: None,
            losses: String::new(),
        }
    }

    fn correct(&self, c: Candidate) -> Option<u8> {
        self.instance.as_ref()?;
        let k = self.cfg.source.k_true()?;
        let ok = match (&self.cfg.source, self.cfg.task) {
            (Source::Block(d), Task::SelectModel | Task::SweepPn) => {
                let family = if d.degree_corrected {
                    Family::Dcsbm
                } else {
                    Family::Sbm
                };
                c.family() == family && c.k() == Some(k)
            }
            (_, Task::SelectRank) => c.k() == Some(k),
            _ => return None,
        };
        Some(ok as u8)
    }

    /// Rows for the plain method and the requested stabilized variants.
    fn selection_rows(
        &self,
        runs: &[TimedRun<SelectionResult>],
        tag: &str,
        ecv: Option<&EcvConfig>,
    ) -> Vec<ResultRow> {
        let results: Vec<&SelectionResult> = runs.iter().map(|r| &r.value).collect();
        let total_ms: f64 = runs.iter().map(|r| r.ms).sum();
        let mut out = Vec::new();
        let mut push = |method: String, chosen: Candidate, ms: f64, from: &[&SelectionResult]| {
            let mut row = self.row(method, Some(chosen));
            row.correct = self.correct(chosen);
            row.loss_best = mean_of(from.iter().filter_map(|r| r.mean_loss_of(&chosen)));
            row.losses = format_losses(from);
            row.ms = ms;
            if let Some(e) = ecv {
                row.p = Some(e.p);
                row.n_splits = Some(e.n_splits);
            }
            out.push(row);
        };
        push(
            tag.to_string(),
            results[0].chosen,
            runs[0].ms,
            &results[..1],
        );
        let choices: Vec<Candidate> = results.iter().map(|r| r.chosen).collect();
        for (wanted, mode, suffix) in [
            (
                self.cfg.stability.mode(),
                StabilityMode::MostFrequent,
                "mode",
            ),
            (self.cfg.stability.avg(), StabilityMode::Average, "avg"),
        ] {
            if !wanted {
                continue;
            }
            match stability_select(&choices, mode) {
                Ok(c) => push(format!("{tag}-{suffix}"), c, total_ms, &results),
                // Averaging needs one family; block-model menus can mix two.
                Err(e) => warn!("replication {}: {tag}-{suffix} skipped: {e}", self.rep),
            }
        }
        out
    }

    fn tune_reg_rows(
        &self,
        a: &AdjacencyMatrix,
        ecv: &EcvConfig,
        rng: &mut StreamRng,
    ) -> Result<Vec<ResultRow>> {
        let cfg = self.cfg;
        let k = cfg.k.or(cfg.source.k_true()).expect("validated");
        let truth = self.instance.as_ref().and_then(|i| i.truth.as_ref());
        let runs = timed_runs(cfg, rng, |r| {
            tune_regularization(a, &cfg.tau_grid, k, ecv, r)
        })?;
        let selections: Vec<TimedRun<SelectionResult>> = runs
            .iter()
            .map(|r| TimedRun {
                value: r.value.selection.clone(),
                ms: r.ms,
            })
            .collect();
        let mut rows = self.selection_rows(&selections, "ECV", None);

        let first = &runs[0].value;
        let label_seed = fork_seed(rng);
        for row in &mut rows {
            let (Some(truth), Some(tau)) = (truth, row.value_hat) else {
                continue;
            };
            let chosen = Candidate::TauReg(tau);
            let labels = match first.selection.candidates.iter().position(|c| *c == chosen) {
                Some(q) => first.full_labels[q].clone(),
                // An averaged tau off the grid gets its own clustering.
                None => regularized_spectral_clustering(
                    a,
                    tau,
                    k,
                    ecv.restarts,
                    &mut derive(label_seed, 0),
                )?,
            };
            row.score = Some(clustering_accuracy(&labels, truth)?);
        }
        for (c, labels) in first.selection.candidates.iter().zip(&first.full_labels) {
            let mut row = self.row("fixed".into(), Some(*c));
            row.score = truth.map(|t| clustering_accuracy(labels, t)).transpose()?;
            rows.push(row);
        }
        Ok(rows)
    }

    fn tune_graphon_rows(
        &self,
        a: &AdjacencyMatrix,
        ecv: &EcvConfig,
        rng: &mut StreamRng,
    ) -> Result<Vec<ResultRow>> {
        let cfg = self.cfg;
        let runs = timed_runs(cfg, rng, |r| {
            tune_graphon(a, &cfg.tau_grid, cfg.completion_kmax, ecv, r)
        })?;
        let selections: Vec<TimedRun<SelectionResult>> = runs
            .iter()
            .map(|r| TimedRun {
                value: r.value.selection.clone(),
                ms: r.ms,
            })
            .collect();
        let mut rows = self.selection_rows(&selections, "ECV", None);
        let Some(inst) = &self.instance else {
            return Ok(rows);
        };

        let w = a.to_dense();
        let error_at = |tau: f64| -> Result<Option<f64>> {
            let Ok(smoother) = SmootherConfig::from_tau(tau, w.rows()) else {
                return Ok(None);
            };
            let estimate = neighborhood_smoothing(&w, &smoother)?;
            Ok(Some(relative_error(&estimate, &inst.probabilities)?))
        };
        let mut fixed = BTreeMap::new();
        for &tau in &cfg.tau_grid {
            fixed.insert(tau.to_bits(), error_at(tau)?);
        }
        for row in &mut rows {
            if let Some(tau) = row.value_hat {
                row.score = match fixed.get(&tau.to_bits()) {
                    Some(e) => *e,
                    None => error_at(tau)?,
                };
            }
        }
        let mut seen = Vec::new();
        for &tau in &cfg.tau_grid {
            if seen.contains(&tau.to_bits()) {
                continue;
            }
            seen.push(tau.to_bits());
            let mut row = self.row("fixed".into(), Some(Candidate::TauGraphon(tau)));
            row.score = fixed[&tau.to_bits()];
            rows.push(row);
        }
        Ok(rows)
    }

    /// `||A_hat - M|| / ||A - M||` in spectral norm, `A_hat` the rank-`K`
    /// completion from one split.
    fn concentration_rows(
        &self,
        a: &AdjacencyMatrix,
        rng: &mut StreamRng,
    ) -> Result<Vec<ResultRow>> {
        let inst = self.instance.as_ref().expect("validated: generated source");
        let k = self.cfg.source.k_true().unwrap_or(self.cfg.kmax);
        let start = Instant::now();
        let mask = HoldoutMask::sample(a.n(), self.cfg.p, a.is_directed(), rng)?;
        let completed = complete(a, &mask, k, rng)?.to_dense();
        let m = &inst.probabilities;
        let num = spectral_norm(&completed.sub(m)?, rng)?;
        let den = spectral_norm(&a.to_dense().sub(m)?, rng)?;
        let mut row = self.row("COMPLETION".into(), None);
        row.score = Some(num / den);
        row.p = Some(self.cfg.p);
        row.ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(vec![row])
    }
}

fn spectral_norm(m: &DenseMatrix, rng: &mut StreamRng) -> Result<f64> {
    Ok(partial_svd(m, 1, &SvdOptions::default(), rng)?.sigma[0])
}

/// `||P - M||_F / ||M||_F` over off-diagonal entries.
pub fn relative_error(estimate: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    anyhow::ensure!(
        estimate.rows() == truth.rows() && estimate.cols() == truth.cols(),
        "estimate and truth differ in shape"
    );
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..truth.rows() {
        for j in 0..truth.cols() {
            if i != j {
                num += (estimate.get(i, j) - truth.get(i, j)).powi(2);
                den += truth.get(i, j).powi(2);
            }
        }
    }
    Ok((num / den).sqrt())
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Candidate mean losses averaged over `results`, as `name=value;...`.
fn format_losses(results: &[&SelectionResult]) -> String {
    let Some(first) = results.first() else {
        return String::new();
    };
    first
        .candidates
        .iter()
        .filter_map(|c| {
            mean_of(results.iter().filter_map(|r| r.mean_loss_of(c))).map(|l| format!("{c}={l}"))
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow], failed_reps: Vec<usize>) -> Summary {
    let mut by_method: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        let key = match (row.p, row.n_splits, cfg.task) {
            (Some(p), Some(m), Task::SweepPn) => format!("{}@p={p},N={m}", row.method),
            _ => row.method.clone(),
        };
        by_method.entry(key).or_default().push(row);
    }
    let methods = by_method
        .into_iter()
        .map(|(method, rows)| {
            let correct: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.correct)
                .map(f64::from)
                .collect();
            let mut scores: Vec<f64> = rows.iter().filter_map(|r| r.score).collect();
            scores.sort_by(f64::total_cmp);
            let mut choices = BTreeMap::new();
            for r in &rows {
                if let (Some(f), Some(v)) = (&r.family_hat, r.value_hat) {
                    *choices.entry(format!("{f}-{v}")).or_insert(0) += 1;
                }
            }
            let mut loss_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for r in &rows {
                for item in r.losses.split(';').filter(|s| !s.is_empty()) {
                    if let Some((name, value)) = item.rsplit_once('=') {
                        if let Ok(v) = value.parse::<f64>() {
                            let e = loss_sums.entry(name.to_string()).or_insert((0.0, 0));
                            e.0 += v;
                            e.1 += 1;
                        }
                    }
                }
            }
            let summary = MethodSummary {
                rows: rows.len(),
                fraction_correct: mean_of(correct.into_iter()),
                mean_score: mean_of(scores.iter().copied()),
                median_score: median(&scores),
                choices,
                mean_losses: loss_sums
                    .into_iter()
                    .map(|(k, (s, c))| (k, s / c as f64))
                    .collect(),
            };
            (method, summary)
        })
        .collect();
    Summary {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        replications: cfg.replications,
        failures: failed_reps.len(),
        failed_reps,
        methods,
    }
}

/// Median of sorted values.
pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Stability;
    use ecv_core::simgen::{BlockDesign, GraphonKind};

    fn small_block(task: Task, dc: bool) -> ExperimentConfig {
        let design = BlockDesign {
            n: 120,
            k: 2,
            lambda: 20.0,
            t: 0.0,
            beta: 0.1,
            degree_corrected: dc,
        };
        let mut cfg = ExperimentConfig::new(task, Source::Block(design));
        cfg.kmax = 3;
        cfg.replications = 3;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn select_model_rows_follow_the_schema() {
        let mut cfg = small_block(Task::SelectModel, false);
        cfg.stability = Stability::Both;
        cfg.stability_reps = 3;
        let out = run_experiment(&cfg).unwrap();
        // The averaged row exists only when every run picked the same family.
        let kept: Vec<&ResultRow> = out
            .rows
            .iter()
            .filter(|r| !r.method.ends_with("-avg"))
            .collect();
        let methods: Vec<&str> = kept.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(
            methods,
            [
                "ECV-l2",
                "ECV-l2-mode",
                "ECV-l2",
                "ECV-l2-mode",
                "ECV-l2",
                "ECV-l2-mode"
            ]
        );
        assert!(kept.iter().map(|r| r.rep).eq([0, 0, 1, 1, 2, 2]));
        assert!(out.rows.windows(2).all(|w| w[0].rep <= w[1].rep));
        for r in &out.rows {
            assert_eq!(
                (r.n, r.k_true, r.model_true.as_str()),
                (120, Some(2), "SBM")
            );
            assert!(r.correct.is_some() && r.loss_best.is_some());
            assert!(r.losses.starts_with("SBM-1="));
        }
        assert_eq!(out.summary.failures, 0);
        assert!(out.summary.methods["ECV-l2"].fraction_correct.is_some());
    }

    #[test]
    fn rank_selection_on_rdpg() {
        let mut cfg = ExperimentConfig::new(Task::SelectRank, Source::Rdpg { n: 150, k: 2 });
        cfg.kmax = 4;
        cfg.replications = 2;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(cfg.loss, Loss::Auc);
        assert!(out
            .rows
            .iter()
            .all(|r| r.method == "ECV-AUC" && r.family_hat.as_deref() == Some("RANK")));
    }

    #[test]
    fn tuning_rows_carry_scores_and_fixed_grid() {
        let mut cfg = small_block(Task::TuneReg, true);
        cfg.tau_grid = vec![0.2, 0.6, 1.0];
        cfg.replications = 1;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert_eq!(out.rows[0].method, "ECV");
        assert!(out
            .rows
            .iter()
            .all(|r| r.score.is_some_and(|s| (0.0..=1.0).contains(&s))));
        assert!(out.rows[1..].iter().all(|r| r.method == "fixed"));

        let mut cfg = ExperimentConfig::new(
            Task::TuneGraphon,
            Source::Graphon {
                n: 80,
                graphon: GraphonKind::PiecewiseK3,
            },
        );
        cfg.tau_grid = vec![0.5, 1.0, 50.0];
        cfg.completion_kmax = 3;
        cfg.replications = 1;
        let out = run_experiment(&cfg).unwrap();
        let fixed: Vec<Option<f64>> = out
            .rows
            .iter()
            .filter(|r| r.method == "fixed")
            .map(|r| r.score)
            .collect();
        assert_eq!(fixed.len(), 3);
        assert!(
            fixed[0].is_some() && fixed[2].is_none(),
            "bandwidth above 1 has no estimate"
        );
    }

    #[test]
    fn sweep_and_concentration() {
        let mut cfg = small_block(Task::SweepPn, false);
        cfg.sweep_p = vec![0.85, 0.95];
        cfg.sweep_n = vec![1, 2];
        cfg.replications = 1;
        let out = run_experiment(&cfg).unwrap();
        let grid: Vec<(Option<f64>, Option<usize>)> =
            out.rows.iter().map(|r| (r.p, r.n_splits)).collect();
        assert_eq!(
            grid,
            [
                (Some(0.85), Some(1)),
                (Some(0.85), Some(2)),
                (Some(0.95), Some(1)),
                (Some(0.95), Some(2))
            ]
        );
        assert_eq!(out.summary.methods.len(), 4);

        let mut cfg = small_block(Task::Concentration, false);
        cfg.replications = 2;
        let out = run_experiment(&cfg).unwrap();
        assert!(out
            .rows
            .iter()
            .all(|r| r.score.is_some_and(|s| s > 0.0 && s.is_finite())));
    }

    #[test]
    fn csv_is_reproducible_apart_from_timing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_block(Task::SelectModel, true);
        let mut texts = Vec::new();
        for name in ["a.csv", "b.csv"] {
            cfg.output = Some(dir.path().join(name));
            run_experiment(&cfg).unwrap();
            texts.push(strip_column(
                &std::fs::read_to_string(dir.path().join(name)).unwrap(),
                TIMING_COLUMN,
            ));
            assert!(summary_path(&dir.path().join(name)).exists());
        }
        assert_eq!(texts[0], texts[1]);
        assert!(texts[0].starts_with(
            "rep,n,K_true,lambda,t,beta,model_true,method,family_hat,value_hat,correct,loss_best,"
        ));
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        let mut cfg = small_block(Task::SelectModel, false);
        cfg.replications = 10_000;
        cfg.output = Some(PathBuf::from("/nonexistent-dir/out.csv"));
        let start = Instant::now();
        assert!(run_experiment(&cfg).is_err());
        assert!(start.elapsed().as_secs() < 5);
    }

    #[test]
    fn failed_replications_are_counted() {
        // K = n forces every ECV run to fail: no candidate survives.
        let mut cfg = small_block(Task::SelectModel, false);
        cfg.kmax = 500;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.summary.failures, 3);
    }

    fn strip_column(csv_text: &str, column: &str) -> String {
        let mut r = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = r.headers().unwrap().clone();
        let drop = headers.iter().position(|h| h == column).unwrap();
        let mut out = String::new();
        for rec in std::iter::once(headers).chain(r.records().map(|x| x.unwrap())) {
            let kept: Vec<&str> = rec
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, v)| v)
                .collect();
            out.push_str(&kept.join(","));
            out.push('\n');
        }
        out
    }
}
