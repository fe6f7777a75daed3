use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adatrans::datagen::{make_ground_truth, sample_problem, SettingSpec};
use adatrans::dump::{read_problem, read_truth, write_problem};
use adatrans::feature_transfer::fit_pilot;
use adatrans::model::{l2_error_sq, GroundTruth, TransferProblem};
use adatrans::sample_transfer::{
    cv_lambda_w, optimal_weights_k1, oracle_sample_weights, select_weights_qp, Dims,
};
use adatrans_bench::config::{parse_methods, ConfigFile, ExperimentSpec, Factor, Method, Profile, Sweep};
use adatrans_bench::experiment::{run_experiment, ResultRow};
use adatrans_bench::methods::{fit_method, MethodConfig};
use adatrans_bench::output::{emit_csv, summarize, write_csv, write_plot_data, write_summary};
use adatrans_bench::BenchError;
use clap::{Args, Parser, Subcommand};

/// Adaptive transfer learning: data generation, single fits and Monte-Carlo
/// benchmarks.
#[derive(Parser)]
#[command(name = "adatrans", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one problem and write it as CSV files into a directory.
    Gen {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method on a problem directory written by `gen`.
    Fit {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        method: Method,
        /// Seed of the cross-validation folds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write β̂ (one value per line) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Run the experiment described by a TOML file, with flag overrides.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a sweep of one factor over a list of values.
    Sweep {
        /// One of h_wedge, s_k, K, n_S.
        #[arg(long)]
        factor: Factor,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print data-driven and oracle sample weights for a problem directory.
    Weights {
        #[arg(long)]
        problem: PathBuf,
        /// Fixed λ_W; cross-validated when omitted.
        #[arg(long)]
        lambda_w: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Default)]
struct InstanceArgs {
    #[arg(long)]
    setting: Option<u8>,
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    sk: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    /// Result CSV; stdout when omitted. Summary and plot tables are written
    /// next to it as `<stem>.summary.csv` and `<stem>.plot.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time per fit (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Exit with status 3 if any fit did not converge.
    #[arg(long)]
    strict: bool,
}

/// Error paired with its exit status.
struct Failure(u8, String);

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let code = if matches!(e, BenchError::Config(_)) { 2 } else { 1 };
        Failure(code, e.to_string())
    }
}

impl From<adatrans::Error> for Failure {
    fn from(e: adatrans::Error) -> Self {
        BenchError::from(e).into()
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure(1, format!("{}: {e}", path.display()))
}

impl InstanceArgs {
    fn apply(&self, mut file: ConfigFile) -> ConfigFile {
        if let Some(p) = self.profile {
            file.profile = Some(match p {
                Profile::Desk => "desk".into(),
                Profile::Paper => "paper".into(),
            });
        }
        file.setting = self.setting.or(file.setting);
        file.p = self.p.or(file.p);
        file.s = self.s.or(file.s);
        file.n_t = self.nt.or(file.n_t);
        file.n_s = self.ns.or(file.n_s);
        file.k = self.k.or(file.k);
        file.h_wedge = self.h.or(file.h_wedge);
        file.s_k = self.sk.or(file.s_k);
        file.base_seed = self.seed.or(file.base_seed);
        file
    }

    fn setting_spec(&self) -> Result<SettingSpec, Failure> {
        let mut spec = self.apply(ConfigFile::default()).into_spec()?.setting_spec;
        spec.seed = self.seed.unwrap_or(0);
        Ok(spec)
    }
}

fn experiment(config: Option<&Path>, run: &RunArgs, sweep: Option<Sweep>) -> Result<ExperimentSpec, Failure> {
    let mut file = match config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    file = run.instance.apply(file);
    file.reps = run.reps.or(file.reps);
    if run.timing {
        file.timing = Some(true);
    }
    if let Some(list) = &run.methods {
        file.methods = Some(parse_methods(list)?.iter().map(|m| m.to_string()).collect());
    }
    let mut spec = file.into_spec()?;
    if let Some(sweep) = sweep {
        spec.sweep = Some(sweep);
        spec.validate()?;
    }
    Ok(spec)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn run_and_emit(spec: &ExperimentSpec, run: &RunArgs) -> Result<(), Failure> {
    let rows = run_experiment(spec)?;
    let factor = spec.sweep.as_ref().map(|s| s.factor);
    let summary = summarize(&rows, factor);
    match &run.out {
        Some(path) => {
            emit_csv(&rows, path)?;
            for (suffix, plot) in [("summary", false), ("plot", true)] {
                let target = sibling(path, suffix);
                let file = std::fs::File::create(&target).map_err(|e| io_failure(&target, e))?;
                if plot {
                    write_plot_data(file, &summary, &target)?;
                } else {
                    write_summary(file, &summary, &target)?;
                }
            }
        }
        None => write_csv(std::io::stdout().lock(), &rows, Path::new("<stdout>"))?,
    }
    let mut err = std::io::stderr().lock();
    for s in &summary {
        let x = s.x.map(|v| format!(" x={v}")).unwrap_or_default();
        let _ = writeln!(
            err,
            "{:<13}{x}  mean l2_error_sq {:.5}  sd {:.5}  n {}  failed {}",
            s.method, s.mean, s.sd, s.count, s.failed
        );
    }
    strict_check(run.strict, &rows)
}

fn strict_check(strict: bool, rows: &[ResultRow]) -> Result<(), Failure> {
    let bad = rows.iter().filter(|r| !r.converged).count();
    if strict && bad > 0 {
        return Err(Failure(3, format!("{bad} fit(s) did not converge")));
    }
    Ok(())
}

fn load(problem: &Path) -> Result<(TransferProblem<f64>, Option<GroundTruth<f64>>), Failure> {
    Ok((read_problem(problem)?, read_truth(problem)?))
}

fn fit(problem: &Path, method: Method, seed: u64, out: Option<&Path>, strict: bool) -> Result<(), Failure> {
    let (pb, truth) = load(problem)?;
    let estimate = fit_method(method, &pb, truth.as_ref(), &MethodConfig::with_seed(seed))
        .map_err(|e| match e {
            adatrans::Error::InvalidInput(msg) => Failure(2, msg),
            other => other.into(),
        })?
        .estimate;
    if let Some(truth) = &truth {
        println!("l2_error_sq {:.16e}", l2_error_sq(&estimate.beta_hat, &truth.beta)?);
    }
    println!("converged {}", estimate.converged);
    println!("iterations {}", estimate.iterations);
    println!("kkt_residual {:e}", estimate.kkt_residual);
    println!("nonzeros {}", estimate.beta_hat.iter().filter(|v| **v != 0.0).count());
    if let Some(path) = out {
        let text: String = estimate.beta_hat.iter().map(|v| format!("{v:.16e}\n")).collect();
        std::fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    if strict && !estimate.converged {
        return Err(Failure(3, "fit did not converge".into()));
    }
    Ok(())
}

fn weights(problem: &Path, lambda_w: Option<f64>, seed: u64) -> Result<(), Failure> {
    let (pb, truth) = load(problem)?;
    let dims = Dims::of(&pb);
    let config = MethodConfig::with_seed(seed).s;
    let init = fit_pilot(&pb, &config.pilot)?;
    let lw = match lambda_w {
        Some(v) => v,
        None => cv_lambda_w(&pb, &init.estimate, &config)?.0,
    };
    let qp = select_weights_qp::<f64>(&init.estimate, lw, dims)?;
    let fmt = |w: &nalgebra::DVector<f64>| w.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ");
    println!("lambda_w {lw}");
    println!("qp {}", fmt(&qp.weights.w));
    if let Some(truth) = truth {
        let oracle = oracle_sample_weights::<f64>(truth.s, &truth.h_k, dims, 1.0)?;
        println!("oracle {}", fmt(&oracle.w));
        if pb.k() == 1 {
            let k1 = optimal_weights_k1::<f64>(truth.s, dims.p, dims.n_t, dims.n_s, truth.h_k[0], 1.0)?;
            println!("single_source {}", fmt(&k1.w));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { instance, out } => {
            let spec = instance.setting_spec()?;
            let truth = make_ground_truth::<f64>(&spec)?;
            let pb = sample_problem(&spec, &truth)?;
            write_problem(&out, &pb, Some(&truth))?;
            eprintln!("wrote {} task files to {}", pb.k() + 1, out.display());
            Ok(())
        }
        Command::Fit {
            problem,
            method,
            seed,
            out,
            strict,
        } => fit(&problem, method, seed, out.as_deref(), strict),
        Command::Bench { config, run } => {
            let spec = experiment(config.as_deref(), &run, None)?;
            run_and_emit(&spec, &run)
        }
        Command::Sweep { factor, values, run } => {
            let spec = experiment(None, &run, Some(Sweep { factor, values }))?;
            run_and_emit(&spec, &run)
        }
        Command::Weights {
            problem,
            lambda_w,
            seed,
        } => weights(&problem, lambda_w, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
