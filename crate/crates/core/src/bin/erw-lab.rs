use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use erw_lab::dump::write_dump;
use erw_lab::experiment::{
    read_reports, render_summary, run, Experiment, ExperimentConfig, Preset, DEFAULT_OUT_DIR, OUT_DIR_ENV, VERSION,
};
use erw_lab::oracle::{exact_law, exact_moment};
use erw_lab::walk::{simulate, SamplingMode, WalkParams};
use erw_lab::ErwError;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

const TEST_HELP: &str = "\
Outputs (under --out-dir, else $ERW_OUT_DIR, else ./erw-out):
  config.json            canonical config, config_hash, version
  reports.jsonl          one report per line: name, observed, target, tolerance, pass, n_samples, metadata
  summary.csv            name,observed,target,tolerance,pass,n_samples
  summary.txt            readable summary with a timestamp
  oracle_pmf.csv         s,prob
  martingale_identity.csv p,q,n,abs_error
  second_moments.csv     p,n,second_moment,normalized
  lemma1_gap.csv         n,gap,n_gap
  tau_gap.csv            n,gap,sup_tau,bound
  mode_equiv.csv         p,mode,s,empirical,exact
  clt_diffusive_cdf.csv  x,empirical_cdf,normal_cdf
  joint_cov.csv          quantity,observed,target,std_error
  superdiffusive_marginals.csv t,variance,target,ks
  stable_indep.csv       pairing,correlation,tolerance,sign_chi_square
  lindeberg.csv          n,bound,n_bound,constant
  critical_variance.csv  t,variance,target,ratio
  *_paths.csv, fclt_diffusive_{walk,limit}.csv   path_id,t,value
Every CSV starts with a '#' line naming the version, config hash and seed.

Exit status: 0 all checks pass, 1 a check failed, 2 configuration error, 3 runtime fault.";

#[derive(Parser)]
#[command(name = "erw-lab", version = VERSION, about = "Elephant random walk simulation and limit-theorem checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write a packed binary dump.
    Simulate(SimulateArgs),
    /// Exact law of S_n: CSV (s,prob) and a JSON moment summary.
    Oracle(OracleArgs),
    /// Check the coefficient sequence and its deterministic lemmas.
    VerifyCoeff(VerifyCoeffArgs),
    /// Run an experiment and write data, reports and a summary.
    #[command(alias = "run", after_help = TEST_HELP)]
    Test(TestArgs),
    /// Print the summary of a previous run.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Steps per path.
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    n_paths: usize,
    #[arg(long, default_value_t = erw_lab::experiment::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "markov")]
    mode: ModeArg,
    /// Output file. Header: p f64, q f64, horizon u64, n_paths u64, seed u64
    /// (little-endian), then ceil(horizon/8) bytes per path, bit set = +1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    History,
    Markov,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long)]
    n: usize,
    /// Write oracle_pmf.csv and oracle_moments.json here; otherwise the CSV
    /// goes to stdout and the JSON to stderr.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyCoeffArgs {
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Comma-separated increasing times, e.g. 0.5,1,1.5.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for path generation (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory (default: $ERW_OUT_DIR, else ./erw-out).
    #[arg(long)]
    dir: Option<PathBuf>,
}

fn fault(err: &ErwError) -> u8 {
    match err {
        ErwError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn test(args: TestArgs) -> Result<u8, ErwError> {
    let base = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let flags = ExperimentConfig {
        experiment: args.experiment,
        preset: args.preset,
        p: args.p,
        q: args.q,
        n: args.n,
        n_paths: args.n_paths,
        grid: args.grid,
        seed: args.seed,
        out_dir: args.out_dir,
        threads: args.threads,
    };
    test_cfg(base.overlay(&flags))
}

fn simulate_cmd(args: SimulateArgs) -> Result<u8, ErwError> {
    let mode = match args.mode {
        ModeArg::History => SamplingMode::History,
        ModeArg::Markov => SamplingMode::Markov,
    };
    let params = WalkParams::new(args.p, args.q, args.horizon, args.seed, mode)
        .map_err(|e| ErwError::Config(e.to_string()))?;
    let batch = simulate(&params, args.n_paths)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_dump(&mut out, &batch)?;
    out.flush()?;
    Ok(0)
}

fn oracle_cmd(args: OracleArgs) -> Result<u8, ErwError> {
    let law = exact_law(args.p, args.q, args.n).map_err(|e| ErwError::Config(e.to_string()))?;
    let moments = serde_json::json!({
        "p": args.p, "q": args.q, "n": args.n,
        "mean": exact_moment(&law, 1),
        "second": exact_moment(&law, 2),
        "fourth": exact_moment(&law, 4),
        "mass_drift": law.mass_drift(),
    });
    let write_pmf = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "s,prob")?;
        for (s, pr) in law.pmf() {
            writeln!(w, "{s},{pr}")?;
        }
        Ok(())
    };
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let mut csv = BufWriter::new(File::create(dir.join("oracle_pmf.csv"))?);
            write_pmf(&mut csv)?;
            csv.flush()?;
            std::fs::write(dir.join("oracle_moments.json"), serde_json::to_string_pretty(&moments)? + "\n")?;
        }
        None => {
            write_pmf(&mut io::stdout().lock())?;
            eprintln!("{}", serde_json::to_string_pretty(&moments)?);
        }
    }
    Ok(0)
}

fn verify_coeff(args: VerifyCoeffArgs) -> Result<u8, ErwError> {
    let cfg = ExperimentConfig {
        experiment: Some(Experiment::Coeff),
        p: Some(args.p),
        out_dir: args.out_dir,
        ..Default::default()
    };
    test_cfg(cfg)
}

fn test_cfg(cfg: ExperimentConfig) -> Result<u8, ErwError> {
    cfg.validate()?;
    let artifacts = run(&cfg)?;
    print!("{}", render_summary(&artifacts.reports));
    println!("outputs in {}", artifacts.out_dir.display());
    Ok(if artifacts.all_pass() { 0 } else { EXIT_FAIL })
}

fn report(args: ReportArgs) -> Result<u8, ErwError> {
    let dir = args
        .dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let reports = read_reports(&dir.join("reports.jsonl"))?;
    print!("{}", render_summary(&reports));
    Ok(if reports.iter().all(|r| r.pass) { 0 } else { EXIT_FAIL })
}

fn dispatch(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::VerifyCoeff(a) => verify_coeff(a),
        Command::Test(a) => test(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            fault(&err)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(Cli::parse()))
}
