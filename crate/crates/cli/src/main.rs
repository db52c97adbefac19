use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmnlse_cli::config::{ENV_THREADS, ENV_OUTPUT_DIR};
use mmnlse_cli::{cmd_run, cmd_tables, load, resolve, run_many, CliError, CliResult, Resolved, RunOutcome, Sources};

#[derive(Parser)]
#[command(name = "mmnlse", version, about = "Multimode NLSE: table reproduction, SSF and PINN runs, comparisons")]
struct Cli {
    /// Worker threads for data-parallel kernels (overrides MMNLSE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the coefficient and scaling tables; exit 4 if a cell is out of tolerance.
    Tables {
        /// Also write tables.csv, config.toml and manifest.json here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run an experiment described by a config file, presets and overrides.
    Run(Box<RunArgs>),
    /// Compare a network checkpoint or field file against a reference field.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Analytic,
    Ssf,
    Train,
    Compare,
    Tables,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Analytic => "analytic",
            Kind::Ssf => "ssf",
            Kind::Train => "train",
            Kind::Compare => "compare",
            Kind::Tables => "tables",
        }
    }
}

#[derive(Args, Default)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides MMNLSE_OUTPUT_DIR and the file).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// on | off
    #[arg(long)]
    scaling: Option<String>,
    /// full | desk
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write CSV copies of field files.
    #[arg(long)]
    csv: bool,
    /// Dotted override, e.g. `train.lr=5e-4`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Preset name; repeat to run several presets, each in `<output_dir>/<preset>`.
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// Concurrent runs when several presets are given.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct CompareArgs {
    /// Network checkpoint (`net.bin`) or a field file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Reference field file (`.bin` or `.csv`).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    n_interior: Option<usize>,
    #[arg(long)]
    n_boundary: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    boundary_batch_size: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_lr: Option<f64>,
    #[arg(long)]
    w_pde: Option<f64>,
    #[arg(long)]
    w_ic: Option<f64>,
    #[arg(long)]
    corridor_fraction: Option<f64>,
    #[arg(long)]
    plateau_smoothing: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// sequential | parallel
    #[arg(long)]
    exec: Option<String>,
    /// deterministic | fast
    #[arg(long)]
    reduction: Option<String>,
}

impl TrainFlags {
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        let mut num = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("train.{k}={v}"));
            }
        };
        num("n_interior", self.n_interior.map(|v| v.to_string()));
        num("n_boundary", self.n_boundary.map(|v| v.to_string()));
        num("batch_size", self.batch_size.map(|v| v.to_string()));
        num("boundary_batch_size", self.boundary_batch_size.map(|v| v.to_string()));
        num("max_iterations", self.max_iterations.map(|v| v.to_string()));
        num("lr", self.lr.map(float));
        num("factor", self.factor.map(float));
        num("patience", self.patience.map(|v| v.to_string()));
        num("min_lr", self.min_lr.map(float));
        num("w_pde", self.w_pde.map(float));
        num("w_ic", self.w_ic.map(float));
        num("corridor_fraction", self.corridor_fraction.map(float));
        num("plateau_smoothing", self.plateau_smoothing.map(float));
        num("eval_every", self.eval_every.map(|v| v.to_string()));
        num("exec", self.exec.as_ref().map(|v| quote(v)));
        num("reduction", self.reduction.as_ref().map(|v| quote(v)));
        o
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn path_value(p: &std::path::Path) -> String {
    quote(&p.to_string_lossy())
}

impl Common {
    fn sources(&self, mut head: Vec<String>) -> CliResult<Sources> {
        let file = match &self.config {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?,
            ),
            None => None,
        };
        if let Some(s) = &self.scaling {
            head.push(format!("scaling={}", quote(s)));
        }
        if let Some(b) = &self.budget {
            head.push(format!("budget={}", quote(b)));
        }
        if let Some(s) = self.seed {
            head.push(format!("seed={s}"));
        }
        if self.csv {
            head.push("write_csv=true".into());
        }
        if let Some(d) = &self.output_dir {
            head.push(format!("output_dir={}", path_value(d)));
        }
        head.extend(self.set.iter().cloned());
        Ok(Sources::from_env(file, head))
    }
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(ENV_THREADS) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{ENV_THREADS}: `{v}` is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Config("threads: must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    Ok(())
}

fn report(o: &RunOutcome) {
    print!("{}", o.summary);
    println!("outputs in {}: {}", o.output_dir.display(), o.outputs.join(", "));
}

fn run(args: RunArgs) -> CliResult<()> {
    let mut head = args.train.overrides();
    if let Some(k) = args.kind {
        head.insert(0, format!("kind={}", quote(k.name())));
    }
    if args.presets.len() <= 1 {
        if let Some(p) = args.presets.first() {
            head.insert(0, format!("preset={}", quote(p)));
        }
        let r = resolve(load(&args.common.sources(head)?)?)?;
        let out = cmd_run(&r)?;
        report(&out);
        return Ok(());
    }
    let mut runs: Vec<Resolved> = Vec::new();
    for p in &args.presets {
        let mut h = head.clone();
        h.insert(0, format!("preset={}", quote(p)));
        let mut r = resolve(load(&args.common.sources(h)?)?)?;
        let base = args
            .common
            .output_dir
            .clone()
            .or_else(|| std::env::var(ENV_OUTPUT_DIR).ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        r.output_dir = base.join(p);
        runs.push(r);
    }
    let mut worst: Option<CliError> = None;
    for (p, res) in args.presets.iter().zip(run_many(&runs, args.jobs)?) {
        match res {
            Ok(o) => {
                println!("== {p}");
                report(&o);
            }
            Err(e) => {
                eprintln!("== {p}: {e}");
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn compare(args: CompareArgs) -> CliResult<()> {
    let mut head = vec![format!("kind={}", quote("compare"))];
    if let Some(p) = &args.preset {
        head.push(format!("preset={}", quote(p)));
    }
    if let Some(c) = &args.checkpoint {
        head.push(format!("compare.checkpoint={}", path_value(c)));
    }
    if let Some(r) = &args.reference {
        head.push(format!("compare.reference={}", path_value(r)));
    }
    let r = resolve(load(&args.common.sources(head)?)?)?;
    report(&cmd_run(&r)?);
    Ok(())
}

fn tables(output_dir: Option<PathBuf>) -> CliResult<()> {
    match output_dir {
        Some(d) => {
            let head = vec![format!("kind={}", quote("tables")), format!("output_dir={}", path_value(&d))];
            let r = resolve(load(&Sources {
                overrides: head,
                ..Sources::default()
            })?)?;
            report(&cmd_run(&r)?);
            Ok(())
        }
        None => {
            let t = cmd_tables()?;
            print!("{}", t.report);
            if t.n_failed > 0 {
                Err(CliError::Tolerance(format!("{} table cells outside tolerance", t.n_failed)))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads(cli.threads).and_then(|_| match cli.command {
        Command::Tables { output_dir } => tables(output_dir),
        Command::Run(a) => run(*a),
        Command::Compare(a) => compare(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
