use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hevo_cli::bench::{default_data_dir, run_suite, BenchOptions, Distances, HeuristicChoice, Starts, Suite};
use hevo_cli::config::{BackendKind, RunConfig, RuntimeKind};
use hevo_cli::rundir::plot_data;
use hevo_cli::{eval_heuristic, evolve, landscape, landscape_csv, EvalSet};
use hevo_evo::Mode;

/// Evolve solver heuristics with a language model, and benchmark them.
#[derive(Parser)]
#[command(name = "hevo", version)]
struct Cli {
    /// TOML configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Transcript for the replay backend.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long, value_enum)]
    runtime: Option<RuntimeKind>,
    /// Runner program for the sandbox runtime.
    #[arg(long)]
    runner: Option<PathBuf>,
    /// Extra runner argument (repeatable).
    #[arg(long = "runner-arg", allow_hyphen_values = true)]
    runner_args: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_evaluations: Option<usize>,
    #[arg(long)]
    pop_size: Option<usize>,
    /// Validation instances per evaluation.
    #[arg(long)]
    count: Option<usize>,
    /// Validation instance size.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    timeout_s: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
}

impl RunFlags {
    fn apply(&self, task: Option<&str>, cfg: &mut RunConfig) {
        if let Some(t) = task {
            cfg.task = t.to_string();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        if let Some(t) = &self.transcript {
            cfg.backend.transcript = Some(t.clone());
            if self.backend.is_none() {
                cfg.backend.kind = BackendKind::Replay;
            }
        }
        if let Some(r) = self.runtime {
            cfg.runtime.kind = r;
        }
        if let Some(p) = &self.runner {
            cfg.runtime.sandbox.program = p.clone();
            cfg.runtime.sandbox.args = self.runner_args.clone();
            if self.runtime.is_none() {
                cfg.runtime.kind = RuntimeKind::Sandbox;
            }
        }
        let e = &mut cfg.evolution;
        if let Some(v) = self.seed {
            e.seed = v;
        }
        if let Some(v) = self.max_evaluations {
            e.max_evaluations = v;
        }
        if let Some(v) = self.pop_size {
            e.pop_size = v;
        }
        if let Some(m) = &self.model {
            e.generator_model = m.clone();
            e.reflector_model = m.clone();
            cfg.backend.live.model = m.clone();
        }
        let p = &mut cfg.protocol;
        p.count = self.count.or(p.count);
        p.size = self.size.or(p.size);
        p.timeout_s = self.timeout_s.or(p.timeout_s);
        if let Some(u) = &self.base_url {
            cfg.backend.live.base_url = u.clone();
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a heuristic and persist the run.
    Evolve {
        /// Task id from the catalog.
        task: Option<String>,
        #[command(flatten)]
        run: RunFlags,
        /// Run directory (must be empty or absent).
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a benchmark suite.
    Bench {
        #[arg(value_enum)]
        suite: Suite,
        /// Directory for `<suite>.csv` and `<suite>.json`.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// TSPLIB directory (default `$TSPLIB_DIR` or data/tsplib).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "nint")]
        distances: Distances,
        #[arg(long, value_enum, default_value = "three")]
        starts: Starts,
        /// Skip absent TSPLIB instances instead of failing.
        #[arg(long)]
        allow_missing: bool,
        /// `seed`, `fixture` or a source file.
        #[arg(long, default_value = "seed")]
        heuristic: HeuristicChoice,
        /// Task for aco_synthetic.
        #[arg(long, default_value = "tsp_aco")]
        task: String,
        #[arg(long, default_value = "white-box")]
        mode: Mode,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        /// Kicks of the reference search for gls_synthetic.
        #[arg(long)]
        reference_kicks: Option<usize>,
        #[arg(long, value_enum)]
        runtime: Option<RuntimeKind>,
        #[arg(long)]
        runner: Option<PathBuf>,
    },
    /// Random-walk landscape analysis with and without reflection.
    Landscape {
        task: Option<String>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Best-so-far series of a run directory.
    PlotData {
        dir: PathBuf,
        /// Output file (default `<dir>/plot.csv`).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Score one heuristic source file.
    EvalHeuristic {
        source: PathBuf,
        #[arg(long)]
        task: Option<String>,
        #[command(flatten)]
        run: RunFlags,
        /// Use the held-out test protocol at this size.
        #[arg(long)]
        test_size: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Evolve { task, run, out } => {
            run.apply(task.as_deref(), &mut cfg);
            let outcome = evolve(&cfg, &out)?;
            let s = &outcome.status;
            println!("run: {}", outcome.dir.display());
            println!("evaluations: {} (evaluated {})", s.attempts, s.evaluated);
            match s.best_fitness {
                Some(f) => println!(
                    "best: {f} ({})",
                    outcome.dir.join("best/heuristic.py").display()
                ),
                None => println!("best: none"),
            }
            if outcome.aborted() {
                eprintln!("aborted: {}", s.error.as_deref().unwrap_or("unknown"));
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Bench {
            suite,
            out,
            data_dir,
            distances,
            starts,
            allow_missing,
            heuristic,
            task,
            mode,
            size,
            count,
            reference_kicks,
            runtime,
            runner,
        } => {
            RunFlags {
                runtime,
                runner,
                ..RunFlags::default()
            }
            .apply(None, &mut cfg);
            let mut opts = BenchOptions {
                data_dir: data_dir.unwrap_or_else(default_data_dir),
                distances,
                starts,
                allow_missing,
                heuristic,
                task,
                mode,
                size,
                count,
                ..BenchOptions::default()
            };
            if let Some(k) = reference_kicks {
                opts.reference_kicks = k;
            }
            let report = run_suite(suite, &opts, cfg.runtime.build())?;
            print!("{}", report.table_csv());
            if let Some(g) = report.mean_gap_percent {
                println!("# mean gap: {g:.3}%");
            }
            println!("# mean objective: {}", report.mean_objective);
            if !report.missing.is_empty() {
                println!("# missing: {}", report.missing.join(" "));
            }
            if let Some(dir) = out {
                report.write(&dir)?;
            }
        }
        Cmd::Landscape {
            task,
            run,
            runs,
            steps,
            out,
        } => {
            run.apply(task.as_deref(), &mut cfg);
            if let Some(r) = runs {
                cfg.landscape.runs = r;
            }
            if let Some(s) = steps {
                cfg.landscape.steps = s;
            }
            let (rows, _) = landscape(&cfg, &out)?;
            print!("{}", landscape_csv(&rows));
        }
        Cmd::PlotData { dir, out } => {
            let series = plot_data(&dir)?;
            let path = out.unwrap_or_else(|| dir.join("plot.csv"));
            std::fs::write(&path, series.to_csv())
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!(
                "{} points{} -> {}",
                series.points.len(),
                if series.partial { " (partial run)" } else { "" },
                path.display()
            );
        }
        Cmd::EvalHeuristic {
            source,
            task,
            run,
            test_size,
        } => {
            run.apply(task.as_deref(), &mut cfg);
            let set = test_size.map_or(EvalSet::Validation, EvalSet::Test);
            let (_, result) = eval_heuristic(&cfg, &source, set)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            if !result.is_valid() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
