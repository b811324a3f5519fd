//! Command-line front end: verification runs, maximum-ε search, seeded
//! model generation, brute-force oracle checks, and the benchmark
//! harness.
//!
//! Exit codes: 0 VERIFIED, 1 FALSIFIED, 2 UNKNOWN, 64 malformed input
//! files, 70 internal error. Log level comes from `BNNVERIFY_LOG`.

use bnnverify_core::bnn::{BnnModel, InputFile, InputSpec, ModelError, Norm};
use bnnverify_core::cuts::CutConfig;
use bnnverify_core::driver::{
    default_eps_init, max_eps, verify_bnn, Answer, DriverError, Method, VerifyConfig,
    ALL_METHODS,
};
use bnnverify_core::gen::{gen_input, gen_model, GenError};
use bnnverify_core::oracle::{exact_zstar, OracleError, DEFAULT_ENUM_CAP};
use bnnverify_core::rat::{format_rat, parse_rat, Rat};
use bnnverify_core::report::{aggregate, BenchRecord};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "bnnverify", version, about = "Exact robustness verification of binarized neural networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide ε-robustness of an input under a model.
    Verify(VerifyArgs),
    /// Binary-search the largest verified radius.
    MaxEps(MaxEpsArgs),
    /// Generate a seeded random model (and optionally an input).
    GenModel(GenModelArgs),
    /// Brute-force ground truth for desk-scale instances.
    Oracle(OracleArgs),
    /// Run an instances × methods benchmark campaign.
    Bench(BenchArgs),
}

fn parse_rat_arg(s: &str) -> Result<Rat, String> {
    parse_rat(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone)]
struct SolveArgs {
    /// many-ip | 1-ip | 1-ip+hg | 1-ip+fix | 1-ip+fix+2var
    #[arg(long, default_value = "1-ip+fix+2var", value_parser = Method::from_str)]
    method: Method,
    /// l1 | l2 | linf
    #[arg(long, default_value = "l1", value_parser = Norm::from_str)]
    norm: Norm,
    #[arg(long = "time-limit-ms", default_value_t = 3_600_000)]
    time_limit_ms: u64,
    /// Budget for the cut phases; defaults to 3/4 of the time limit.
    #[arg(long = "cut-limit-ms")]
    cut_limit_ms: Option<u64>,
    /// Consecutive failed two-variable candidates before a layer gives up.
    #[arg(long = "max-fail", default_value_t = 100)]
    max_fail: u32,
    /// Command run as `<cmd> <lp-path> <result-path>` for ℓ2 models.
    #[arg(long = "external-solver")]
    external_solver: Option<String>,
    /// Include wall-clock timings in reports (breaks byte-reproducibility).
    #[arg(long)]
    timings: bool,
}

impl SolveArgs {
    fn config(&self, want_witness: bool) -> VerifyConfig {
        VerifyConfig {
            method: self.method,
            time_limit_ms: self.time_limit_ms,
            cut_limit_ms: self
                .cut_limit_ms
                .unwrap_or(self.time_limit_ms / 4 * 3)
                .min(self.time_limit_ms),
            cuts: CutConfig {
                max_fail: self.max_fail,
                ..Default::default()
            },
            external_solver: self.external_solver.clone(),
            want_witness,
            include_timings: self.timings,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_rat_arg)]
    eps: Rat,
    /// Echo a falsifying input in the report when one exists.
    #[arg(long)]
    witness: bool,
    /// Also write the JSON report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct MaxEpsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Starting radius; defaults to 1 (ℓ1), 1/255 (ℓ∞), 1/32 (ℓ2).
    #[arg(long = "eps-init", value_parser = parse_rat_arg)]
    eps_init: Option<Rat>,
    #[arg(long = "max-iter", default_value_t = 16)]
    max_iter: u32,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct GenModelArgs {
    /// Comma-separated layer widths n⁰,n¹,…,n^{L+1}.
    #[arg(long)]
    dims: String,
    #[arg(long, default_value_t = 1)]
    q: u32,
    /// Probability that a weight is nonzero.
    #[arg(long, default_value = "2/3", value_parser = parse_rat_arg)]
    density: Rat,
    #[arg(long = "bias-lo", default_value_t = -1)]
    bias_lo: i64,
    #[arg(long = "bias-hi", default_value_t = 1)]
    bias_hi: i64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a generated input (anchor + its predicted class) here.
    #[arg(long = "input-out")]
    input_out: Option<PathBuf>,
    /// Seed for the generated input; defaults to seed + 1.
    #[arg(long = "input-seed")]
    input_seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_rat_arg)]
    eps: Rat,
    #[arg(long, default_value = "l1", value_parser = Norm::from_str)]
    norm: Norm,
    /// Enumeration cap on |X⁰|.
    #[arg(long, default_value_t = DEFAULT_ENUM_CAP)]
    cap: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Model file; repeat for more instances (paired with --input).
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Input file; must appear as often as --model.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_parser = parse_rat_arg)]
    eps: Rat,
    /// Comma-separated method list; defaults to all five.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long = "out-csv")]
    out_csv: Option<PathBuf>,
    #[arg(long = "out-json")]
    out_json: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveArgs,
}

enum CliError {
    /// Unreadable or invalid model/input files → exit 64.
    Malformed(String),
    /// Everything else → exit 70.
    Internal(String),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Malformed(e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::Malformed(e.to_string())
    }
}

impl From<DriverError> for CliError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Model(m) => CliError::Malformed(m.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("BNNVERIFY_LOG")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Malformed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(64)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(70)
        }
    }
}

fn load_instance(
    model: &PathBuf,
    input: &PathBuf,
    eps: Rat,
    norm: Norm,
) -> Result<(BnnModel, InputSpec), CliError> {
    let model = BnnModel::from_json_file(model)?;
    let input = InputFile::load(input)?;
    let spec = input.to_spec(eps, norm);
    spec.validate(&model)?;
    Ok((model, spec))
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Verify(args) => {
            let (model, spec) = load_instance(&args.model, &args.input, args.eps, args.solve.norm)?;
            let config = args.solve.config(args.witness);
            log::info!(
                "verify: method={} norm={} eps={}",
                config.method,
                spec.norm,
                format_rat(&spec.epsilon)
            );
            let report = verify_bnn(&model, &spec, &config)?;
            emit(&report, args.out.as_ref())?;
            Ok(report.answer.exit_code() as u8)
        }
        Cmd::MaxEps(args) => {
            let (model, spec) =
                load_instance(&args.model, &args.input, Rat::from_integer(0), args.solve.norm)?;
            let config = args.solve.config(false);
            let eps_init = args.eps_init.unwrap_or_else(|| default_eps_init(spec.norm));
            let report = max_eps(&model, &spec, &config, eps_init, args.max_iter)?;
            emit(&report, args.out.as_ref())?;
            Ok(0)
        }
        Cmd::GenModel(args) => {
            let dims: Vec<usize> = args
                .dims
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Malformed(format!("bad --dims: {e}")))?;
            let model = gen_model(
                &dims,
                args.q,
                &args.density,
                args.bias_lo,
                args.bias_hi,
                args.seed,
            )?;
            model.to_json_file(&args.out)?;
            if let Some(input_out) = &args.input_out {
                let input = gen_input(&model, args.input_seed.unwrap_or(args.seed + 1));
                std::fs::write(input_out, serde_json::to_string_pretty(&input)? + "\n")?;
            }
            Ok(0)
        }
        Cmd::Oracle(args) => {
            let (model, spec) = load_instance(&args.model, &args.input, args.eps, args.norm)?;
            let (z_star, witness, class) = exact_zstar(&model, &spec, args.cap)?;
            let answer = if z_star <= 0 {
                Answer::Verified
            } else {
                Answer::Falsified
            };
            #[derive(Serialize)]
            struct OracleReport {
                schema_version: u32,
                z_star: i64,
                answer: Answer,
                witness_y: Vec<i64>,
                class: usize,
            }
            let report = OracleReport {
                schema_version: 1,
                z_star,
                answer,
                witness_y: witness,
                class,
            };
            emit(&report, None)?;
            Ok(answer.exit_code() as u8)
        }
        Cmd::Bench(args) => run_bench(args),
    }
}

fn run_bench(args: BenchArgs) -> Result<u8, CliError> {
    if args.model.len() != args.input.len() {
        return Err(CliError::Malformed(format!(
            "--model given {} times but --input {} times",
            args.model.len(),
            args.input.len()
        )));
    }
    let methods: Vec<Method> = match &args.methods {
        None => ALL_METHODS.to_vec(),
        Some(list) => list
            .split(',')
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(CliError::Malformed)?,
    };

    let mut records = Vec::new();
    for (model_path, input_path) in args.model.iter().zip(&args.input) {
        let (model, spec) = load_instance(model_path, input_path, args.eps, args.solve.norm)?;
        let instance = format!(
            "{}:{}",
            model_path.file_stem().unwrap_or_default().to_string_lossy(),
            input_path.file_stem().unwrap_or_default().to_string_lossy()
        );
        for &method in &methods {
            let mut config = args.solve.config(false);
            config.method = method;
            log::info!("bench: instance={instance} method={method}");
            let report = verify_bnn(&model, &spec, &config)?;
            records.push(BenchRecord::from_report(instance.clone(), &report));
        }
    }
    let aggregates = aggregate(&records);

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    for record in &records {
        csv_out
            .serialize(record)
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let csv_text = String::from_utf8(
        csv_out
            .into_inner()
            .map_err(|e| CliError::Internal(e.to_string()))?,
    )
    .expect("csv output is utf-8");
    match &args.out_csv {
        Some(path) => std::fs::write(path, &csv_text)?,
        None => print!("{csv_text}"),
    }

    #[derive(Serialize)]
    struct BenchReport<'a> {
        schema_version: u32,
        records: &'a [BenchRecord],
        aggregates: &'a [bnnverify_core::report::BenchAggregate],
    }
    let json = serde_json::to_string_pretty(&BenchReport {
        schema_version: 1,
        records: &records,
        aggregates: &aggregates,
    })? + "\n";
    match &args.out_json {
        Some(path) => std::fs::write(path, json)?,
        None => {
            if args.out_csv.is_some() {
                print!("{json}");
            }
        }
    }
    Ok(0)
}
