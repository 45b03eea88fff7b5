use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ecv_cli::config::{parse_graphon, parse_loss, ExperimentConfig, Stability};
use ecv_cli::experiment::{run_experiment, summary_path};
use ecv_core::ecv::{
    select_block_model, select_rank, stability_runs, stability_select, tune_graphon,
    tune_regularization, Candidate, EcvConfig, Loss, SelectionResult, StabilityMode,
};
use ecv_core::holdout::HoldoutMask;
use ecv_core::lowrank::{complete, CompletedMatrix};
use ecv_core::netgraph::AdjacencyMatrix;
use ecv_core::rng::{derive, StreamRng};
use ecv_core::simgen::{
    gen_block_model, gen_graphon, gen_rdpg_directed, BlockDesign, PlantedInstance,
};
use serde::Serialize;

/// Edge cross-validation for network model selection and tuning.
#[derive(Parser)]
#[command(name = "ecv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose between SBM and DCSBM and the number of communities.
    SelectModel {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        ecv: EcvArgs,
        #[arg(long, default_value_t = 6)]
        kmax: usize,
        #[arg(long, default_value = "l2", value_parser = parse_loss)]
        loss: Loss,
    },
    /// Choose the rank of a low-rank network model.
    SelectRank {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        ecv: EcvArgs,
        #[arg(long, default_value_t = 6)]
        kmax: usize,
        #[arg(long, default_value = "l2", value_parser = parse_loss)]
        loss: Loss,
    },
    /// Tune the regularization of spectral clustering.
    TuneReg {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        ecv: EcvArgs,
        /// Number of clusters.
        #[arg(long)]
        clusters: usize,
        /// Comma-separated candidate values.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1,1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9,2"
        )]
        taus: Vec<f64>,
    },
    /// Tune the bandwidth of neighborhood smoothing.
    TuneGraphon {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        ecv: EcvArgs,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.25,0.5,0.75,1,1.5,2,3,4,5"
        )]
        taus: Vec<f64>,
        /// Largest completion rank considered.
        #[arg(long, default_value_t = 6)]
        completion_kmax: usize,
    },
    /// Low-rank completion of a network with a random held-out set.
    Complete {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        /// Permit `--p 1`, completing from every pair.
        #[arg(long)]
        allow_full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `<out>.u.csv`, `<out>.sigma.csv` and `<out>.v.csv` instead of the dense matrix.
        #[arg(long)]
        factors: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated experiment from a config file, or export one
    /// generated network.
    Simulate {
        #[arg(long, conflicts_with = "export", required_unless_present = "export")]
        config: Option<PathBuf>,
        /// Overrides the config's output path.
        #[arg(long, requires = "config")]
        out: Option<PathBuf>,
        #[arg(long, requires = "config")]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Edge-list path for one generated network; labels go to `<path>.truth`.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        design: DesignArgs,
    },
}

#[derive(Args)]
struct NetworkArgs {
    /// Edge list with an optional `n <count>` header.
    #[arg(long, conflicts_with = "generator")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    directed: bool,
    #[arg(long, requires = "input")]
    weighted: bool,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args)]
struct DesignArgs {
    /// Generate the network instead of reading one.
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 40.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Seed for the generator; independent of the ECV seed.
    #[arg(long, default_value_t = 0)]
    network_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Sbm,
    Dcsbm,
    Rdpg,
    Piecewise,
    Smooth,
}

#[derive(Args)]
struct EcvArgs {
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long, default_value_t = 3)]
    n_splits: usize,
    #[arg(long, default_value = "none")]
    stability: Stability,
    #[arg(long, default_value_t = 20)]
    stability_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the full selection result.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors before we get here.
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SelectModel {
            network,
            ecv,
            kmax,
            loss,
        } => {
            let a = network.load()?;
            let cfg = ecv.config()?;
            select(&ecv, &loss_method(loss), |r| {
                select_block_model(&a, kmax, loss, &cfg, r)
            })
        }
        Command::SelectRank {
            network,
            ecv,
            kmax,
            loss,
        } => {
            let a = network.load()?;
            let cfg = ecv.config()?;
            let method = if loss == Loss::L2 {
                "ECV-SSE".into()
            } else {
                loss_method(loss)
            };
            select(&ecv, &method, |r| select_rank(&a, kmax, loss, &cfg, r))
        }
        Command::TuneReg {
            network,
            ecv,
            clusters,
            taus,
        } => {
            let a = network.load()?;
            let cfg = ecv.config()?;
            select(&ecv, "ECV", |r| {
                tune_regularization(&a, &taus, clusters, &cfg, r).map(|t| t.selection)
            })
        }
        Command::TuneGraphon {
            network,
            ecv,
            taus,
            completion_kmax,
        } => {
            let a = network.load()?;
            let cfg = ecv.config()?;
            select(&ecv, "ECV", |r| {
                tune_graphon(&a, &taus, completion_kmax, &cfg, r).map(|t| t.selection)
            })
        }
        Command::Complete {
            network,
            rank,
            p,
            allow_full,
            seed,
            factors,
            out,
        } => {
            if p == 1.0 && !allow_full {
                bail!(
                    "--p 1 leaves no held-out pairs; pass --allow-full to complete from every pair"
                );
            }
            let a = network.load()?;
            let mut rng = derive(seed, 0);
            let mask = if p == 1.0 {
                HoldoutMask::full(a.n(), a.is_directed())
            } else {
                HoldoutMask::sample(a.n(), p, a.is_directed(), &mut rng)?
            };
            let completed = complete(&a, &mask, rank, &mut rng)?;
            write_completion(&completed, &out, factors)
        }
        Command::Simulate {
            config,
            out,
            replications,
            seed,
            export,
            design,
        } => match (config, export) {
            (Some(path), _) => {
                let mut cfg = ExperimentConfig::load(&path)?;
                if out.is_some() {
                    cfg.output = out;
                }
                if let Some(r) = replications {
                    cfg.replications = r;
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let result = run_experiment(&cfg)?;
                let s = &result.summary;
                for (method, m) in &s.methods {
                    let mut line = format!("{method}: {} rows", m.rows);
                    if let Some(f) = m.fraction_correct {
                        line += &format!(", fraction correct {f:.3}");
                    }
                    if let Some(x) = m.median_score {
                        line += &format!(", median score {x:.4}");
                    }
                    println!("{line}");
                }
                if let Some(path) = &cfg.output {
                    println!(
                        "wrote {} and {}",
                        path.display(),
                        summary_path(path).display()
                    );
                }
                if s.failures > 0 {
                    eprintln!("{} of {} replications failed", s.failures, s.replications);
                }
                Ok(())
            }
            (None, Some(path)) => {
                let inst = design.generate(seed.unwrap_or(design.network_seed))?;
                inst.adjacency.save_edge_list(&path)?;
                if inst.truth.is_some() {
                    let truth = truth_path(&path);
                    let mut w = BufWriter::new(File::create(&truth)?);
                    inst.write_truth(&mut w)?;
                    w.flush()?;
                }
                println!("wrote {}", path.display());
                Ok(())
            }
            (None, None) => unreachable!("clap requires --config or --export"),
        },
    }
}

fn loss_method(loss: Loss) -> String {
    match loss {
        Loss::L2 => "ECV-l2",
        Loss::Deviance => "ECV-dev",
        Loss::Auc => "ECV-AUC",
    }
    .to_string()
}

fn truth_path(edges: &Path) -> PathBuf {
    let mut s = edges.as_os_str().to_owned();
    s.push(".truth");
    PathBuf::from(s)
}

impl NetworkArgs {
    fn load(&self) -> Result<AdjacencyMatrix> {
        match &self.input {
            Some(path) => AdjacencyMatrix::load_edge_list(path, self.directed, self.weighted)
                .with_context(|| format!("loading {}", path.display())),
            None if self.design.generator.is_some() => {
                Ok(self.design.generate(self.design.network_seed)?.adjacency)
            }
            None => bail!("give either --input or --generator"),
        }
    }
}

impl DesignArgs {
    fn generate(&self, seed: u64) -> Result<PlantedInstance> {
        let Some(generator) = self.generator else {
            bail!("--generator is required")
        };
        let mut rng = derive(seed, 0);
        let block = |dc| BlockDesign {
            n: self.n,
            k: self.k,
            lambda: self.lambda,
            t: self.t,
            beta: self.beta,
            degree_corrected: dc,
        };
        Ok(match generator {
            Generator::Sbm => gen_block_model(&block(false), &mut rng)?,
            Generator::Dcsbm => gen_block_model(&block(true), &mut rng)?,
            Generator::Rdpg => gen_rdpg_directed(self.n, self.k, &mut rng)?,
            Generator::Piecewise => gen_graphon(self.n, parse_graphon("piecewise")?, &mut rng)?,
            Generator::Smooth => gen_graphon(self.n, parse_graphon("smooth")?, &mut rng)?,
        })
    }
}

impl EcvArgs {
    fn config(&self) -> Result<EcvConfig> {
        let cfg = EcvConfig {
            p: self.p,
            n_splits: self.n_splits,
            ..EcvConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Report {
    method: String,
    chosen: Candidate,
    /// Every repetition; one unless stability selection ran.
    runs: Vec<SelectionResult>,
}

/// Runs the selection (repeatedly for stability modes), prints
/// `<method> <choice>` lines and writes the reports.
fn select<F>(args: &EcvArgs, method: &str, run: F) -> Result<()>
where
    F: Fn(&mut StreamRng) -> ecv_core::Result<SelectionResult> + Sync,
{
    let runs: Vec<SelectionResult> = if args.stability == Stability::None {
        vec![run(&mut derive(args.seed, 0))?]
    } else {
        let mut rng = derive(args.seed, 0);
        stability_runs(args.stability_reps, &mut rng, run)?
    };
    let mut reports = vec![Report {
        method: method.to_string(),
        chosen: runs[0].chosen,
        runs: vec![runs[0].clone()],
    }];
    let choices: Vec<Candidate> = runs.iter().map(|r| r.chosen).collect();
    for (wanted, mode, suffix) in [
        (args.stability.mode(), StabilityMode::MostFrequent, "mode"),
        (args.stability.avg(), StabilityMode::Average, "avg"),
    ] {
        if wanted {
            reports.push(Report {
                method: format!("{method}-{suffix}"),
                chosen: stability_select(&choices, mode)?,
                runs: runs.clone(),
            });
        }
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in &reports {
        writeln!(out, "{} {}", r.method, r.chosen)?;
    }
    if let Some(path) = &args.out {
        let file = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        match args.format {
            Format::Json => {
                let mut file = file;
                serde_json::to_writer_pretty(&mut file, &reports)?;
                writeln!(file)?;
                file.flush()?;
            }
            Format::Csv => write_report_csv(file, &reports)?,
        }
    }
    Ok(())
}

/// One line per (method, repetition, candidate): mean loss and per-split losses.
fn write_report_csv(out: impl Write, reports: &[Report]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "chosen",
        "run",
        "candidate",
        "mean_loss",
        "split_losses",
    ])?;
    for report in reports {
        for (run, sel) in report.runs.iter().enumerate() {
            for (q, c) in sel.candidates.iter().enumerate() {
                let splits: Vec<String> = sel
                    .losses
                    .iter()
                    .map(|split| split[q].map_or(String::new(), |l| l.to_string()))
                    .collect();
                w.write_record([
                    report.method.clone(),
                    report.chosen.to_string(),
                    run.to_string(),
                    c.to_string(),
                    sel.mean_loss[q].map_or(String::new(), |l| l.to_string()),
                    splits.join(";"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Dense `n x n` CSV, or the three factor files.
fn write_completion(c: &CompletedMatrix, out: &Path, factors: bool) -> Result<()> {
    let write_matrix =
        |path: &Path, rows: usize, cols: usize, get: &dyn Fn(usize, usize) -> f64| -> Result<()> {
            let mut w = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            for i in 0..rows {
                let line: Vec<String> = (0..cols).map(|j| get(i, j).to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            w.flush()?;
            Ok(())
        };
    if !factors {
        return write_matrix(out, c.n(), c.n(), &|i, j| c.entry(i, j));
    }
    let with_suffix = |s: &str| {
        let mut p = out.as_os_str().to_owned();
        p.push(s);
        PathBuf::from(p)
    };
    let (u, v) = (c.u(), c.v());
    write_matrix(&with_suffix(".u.csv"), u.nrows(), u.ncols(), &|i, j| {
        u[(i, j)]
    })?;
    write_matrix(&with_suffix(".sigma.csv"), 1, c.sigma().len(), &|_, j| {
        c.sigma()[j]
    })?;
    write_matrix(&with_suffix(".v.csv"), v.nrows(), v.ncols(), &|i, j| {
        v[(i, j)]
    })?;
    Ok(())
}
