//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use pmgp_core::estimators::{EstimatorContext, TemperatureSchedule};
use pmgp_core::kernel::gram;
use pmgp_core::predict::{sample_latent, summarize, Predictor, DEFAULT_ESS_ITERS};
use pmgp_core::quadrature::{quadrature_marginal, MAX_DIM};
use pmgp_core::rng::{child_seeds, stream};
use pmgp_core::stats::r_from_log_estimates;
use pmgp_core::synthetic::{gen_synthetic, DEFAULT_SIGMA, DEFAULT_TAU};
use pmgp_core::{ChainConfig, EstimatorConfig, EstimatorMethod, Hyperparams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{pick, FileConfig};
use crate::dataset::{load_dataset, load_test_dataset, DatasetSpec, LabelRule, LoadedDataset, Normalization};
use crate::error::{Error, Result};
use crate::harness::{acceptance_benchmark, r_study, BenchConfig, PrelimConfig, RStudyConfig};
use crate::output::{self, RunHeader};
use crate::parallel;

const DEFAULT_SEED: u64 = 1;

/// Pseudo-marginal MCMC for Gaussian process classifiers.
///
/// Settings come from command-line flags, then from the flat JSON file given
/// with --config, then from built-in defaults. Every output file starts with
/// comment lines recording the version, the seed and the effective settings.
#[derive(Debug, Parser)]
#[command(name = "pmgp", version)]
pub struct Cli {
    /// Root random seed [default: 1].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic data set from the GP classifier.
    Synth(SynthArgs),
    /// Estimate the marginal likelihood at a fixed θ.
    Estimate(EstimateArgs),
    /// Sample the hyperparameter posterior with pseudo-marginal MCMC.
    Fit(FitArgs),
    /// Predictive class probabilities from a chain file.
    Predict(PredictArgs),
    /// Variance of the estimators on synthetic data.
    Rstudy(RStudyArgs),
    /// Acceptance-rate benchmark on one data set.
    Bench(BenchArgs),
    /// Marginal likelihood by quadrature (at most three points).
    Oracle(OracleArgs),
}

/// How to read a CSV data set.
#[derive(Debug, Clone, Args)]
pub struct DataOpts {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Layout preset: pima, breast, glass, banknote, thyroid, synthetic.
    #[arg(long)]
    pub kind: Option<String>,

    /// Name of the label column [default: last column].
    #[arg(long)]
    pub label_column: Option<String>,

    /// Label values mapped to +1, comma separated [default: 1,+1].
    #[arg(long, value_delimiter = ',')]
    pub positive: Option<Vec<String>>,

    /// Keep the raw feature scale.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Kernel variance [default: 20].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Length-scale [default: 0.255].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Output CSV, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataOpts,
    /// is, ais-prior or ais-approx [default: ais-approx].
    #[arg(long)]
    pub method: Option<EstimatorMethod>,
    /// Importance samples per estimate [default: 1].
    #[arg(long)]
    pub n_imp: Option<usize>,
    /// σ,τ₁[,τ₂…] on the natural scale; one τ is isotropic.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    /// Independent estimates; with two or more the spread r is reported [default: 1].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Annealing segments (even) [default: from the data size].
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataOpts,
    /// iso or ard [default: iso].
    #[arg(long)]
    pub cov: Option<String>,
    /// [default: ais-approx]
    #[arg(long)]
    pub method: Option<EstimatorMethod>,
    /// [default: 1]
    #[arg(long)]
    pub n_imp: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, burn-in included [default: 2000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// [default: 500]
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Warm-up iterations with the Laplace marginal [default: 2000].
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Chain CSV written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    #[command(flatten)]
    pub data: DataOpts,
    /// Test inputs, same layout as the training file.
    #[arg(long)]
    pub test: PathBuf,
    /// Slice-sampling steps per latent draw [default: 10].
    #[arg(long)]
    pub ess_iters: Option<usize>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RStudyArgs {
    /// Data sizes, comma separated [default: 10,50,100,500,1000].
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Estimators, comma separated [default: all three].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<EstimatorMethod>>,
    /// [default: 4]
    #[arg(long)]
    pub n_imp: Option<usize>,
    /// Estimates per θ [default: 50].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Posterior θ draws per size [default: 50].
    #[arg(long)]
    pub n_theta: Option<usize>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataOpts,
    /// Name for the output row [default: file stem].
    #[arg(long)]
    pub name: Option<String>,
    /// [default: iso]
    #[arg(long)]
    pub cov: Option<String>,
    /// [default: is]
    #[arg(long)]
    pub method: Option<EstimatorMethod>,
    /// [default: 1]
    #[arg(long)]
    pub n_imp: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    pub chains: Option<usize>,
    /// [default: 2000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// [default: 500]
    #[arg(long)]
    pub burnin: Option<usize>,
    /// [default: 2000]
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataOpts,
    /// σ,τ₁[,τ₂…] on the natural scale [default: 15,e⁻¹].
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = pick(cli.seed, file.seed, DEFAULT_SEED);
    let threads = cli.threads.or(file.threads);
    let pool = parallel::pool(threads)?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(a, &file, seed),
        Command::Estimate(a) => estimate(a, &file, seed),
        Command::Fit(a) => fit(a, &file, seed),
        Command::Predict(a) => predict(a, &file, seed),
        Command::Rstudy(a) => rstudy(a, &file, seed),
        Command::Bench(a) => bench(a, &file, seed),
        Command::Oracle(a) => oracle(a, &file),
    })
}

pub fn dataset_spec(opts: &DataOpts, file: &FileConfig) -> Result<DatasetSpec> {
    let kind = opts.kind.clone().or_else(|| file.kind.clone());
    let mut spec = match &kind {
        Some(k) => DatasetSpec::preset(k).ok_or_else(|| Error::input(format!("unknown data kind {k:?}")))?,
        None => DatasetSpec::default(),
    };
    if let Some(c) = opts.label_column.clone().or_else(|| file.label_column.clone()) {
        spec.label_column = Some(c);
    }
    if let Some(p) = opts.positive.clone().or_else(|| file.positive.clone()) {
        spec.labels = LabelRule::Positive(p);
    }
    if opts.no_normalize {
        spec.normalize = false;
    } else if let Some(n) = file.normalize {
        spec.normalize = n;
    }
    Ok(spec)
}

fn load(opts: &DataOpts, file: &FileConfig) -> Result<LoadedDataset> {
    let spec = dataset_spec(opts, file)?;
    let loaded = load_dataset(&opts.data, &spec)?;
    info!(
        "{}: n = {}, d = {}, {} rows rejected",
        opts.data.display(),
        loaded.data.n(),
        loaded.data.d(),
        loaded.rejected.len()
    );
    Ok(loaded)
}

fn parse_theta(v: &[f64], d: usize) -> Result<Hyperparams> {
    if v.len() < 2 {
        return Err(Error::input("theta needs σ and at least one τ"));
    }
    if v.len() != 2 && v.len() != d + 1 {
        return Err(Error::input(format!("theta needs 1 or {d} length-scales, got {}", v.len() - 1)));
    }
    Ok(Hyperparams::from_natural(v[0], &v[1..])?)
}

fn parse_cov(s: &str) -> Result<bool> {
    match s {
        "iso" => Ok(false),
        "ard" => Ok(true),
        _ => Err(Error::input(format!("covariance must be iso or ard, got {s:?}"))),
    }
}

fn data_json(opts: &DataOpts, spec: &DatasetSpec) -> serde_json::Value {
    serde_json::json!({
        "data": opts.data,
        "label_column": spec.label_column,
        "labels": format!("{:?}", spec.labels),
        "normalize": spec.normalize,
    })
}

#[derive(Serialize)]
struct SynthSettings {
    n: usize,
    sigma: f64,
    tau: f64,
}

fn synth(a: SynthArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let n = a.n.or(file.n).ok_or_else(|| Error::input("--n is required"))?;
    let s =
        SynthSettings { n, sigma: pick(a.sigma, file.sigma, DEFAULT_SIGMA), tau: pick(a.tau, file.tau, DEFAULT_TAU) };
    let out = gen_synthetic(s.n, s.sigma, s.tau, seed)?;
    info!("{} unbalanced draws discarded", out.redraws);
    output::write_dataset(&a.out, &out.data, &RunHeader::new("synth", seed, &s))
}

fn estimate(a: EstimateArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let loaded = load(&a.data, file)?;
    let data = &loaded.data;
    let theta_v = a.theta.or_else(|| file.theta.clone()).ok_or_else(|| Error::input("--theta is required"))?;
    let theta = parse_theta(&theta_v, data.d())?;
    let method = pick(a.method, file.method, EstimatorMethod::AisApprox);
    let mut cfg = EstimatorConfig::new(method, pick(a.n_imp, file.n_imp, 1));
    if let Some(s) = a.segments.or(file.segments) {
        cfg.schedule = Some(TemperatureSchedule::with_segments(s)?);
    }
    let reps = pick(a.reps, file.reps, 1).max(1);
    let settings = serde_json::json!({
        "dataset": data_json(&a.data, &dataset_spec(&a.data, file)?),
        "method": method, "n_imp": cfg.n_imp, "theta": theta_v, "reps": reps,
        "segments": cfg.schedule_for(data.n())?.segments(),
    });
    let ctx = EstimatorContext::for_method(data, &theta, method)?;
    let mut rng = stream(seed, &[0x0045_5354]);
    let mut logs = Vec::with_capacity(reps);
    let mut w = output::create(&a.out)?;
    let res = (|| -> Result<()> {
        RunHeader::new("estimate", seed, &settings).write_to(&mut w).map_err(|e| Error::io(&a.out, e))?;
        writeln!(w, "rep,log_estimate,ess_stalls").map_err(|e| Error::io(&a.out, e))?;
        for k in 0..reps {
            let est = ctx.estimate_with(data.y(), &cfg, &mut rng, &parallel::Rayon)?;
            writeln!(w, "{k},{},{}", est.log_value, est.ess_stalls).map_err(|e| Error::io(&a.out, e))?;
            logs.push(est.log_value);
        }
        if reps >= 2 {
            writeln!(w, "# r: {}", r_from_log_estimates(&logs)?).map_err(|e| Error::io(&a.out, e))?;
        }
        w.flush().map_err(|e| Error::io(&a.out, e))
    })();
    res
}

#[derive(Serialize)]
struct FitSettings {
    dataset: serde_json::Value,
    cov: String,
    method: EstimatorMethod,
    n_imp: usize,
    chains: usize,
    iters: usize,
    burnin: usize,
    warmup: usize,
}

fn fit(a: FitArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let loaded = load(&a.data, file)?;
    let cov = pick(a.cov, file.cov.clone(), "iso".into());
    let s = FitSettings {
        dataset: data_json(&a.data, &dataset_spec(&a.data, file)?),
        method: pick(a.method, file.method, EstimatorMethod::AisApprox),
        n_imp: pick(a.n_imp, file.n_imp, 1),
        chains: pick(a.chains, file.chains, 5),
        iters: pick(a.iters, file.iters, 2000),
        burnin: pick(a.burnin, file.burnin, 500),
        warmup: pick(a.warmup, file.warmup, 2000),
        cov,
    };
    let mut cfg = ChainConfig::new(s.method, s.n_imp, parse_cov(&s.cov)?, seed);
    cfg.n_chains = s.chains;
    cfg.n_iter = s.iters;
    cfg.burn_in = s.burnin;
    cfg.warmup.n_iter = s.warmup;
    let run = parallel::run_chains(&loaded.data, &cfg)?;
    eprintln!(
        "warm-up acceptance {:.1}%, proposal scale {:.4}",
        100.0 * run.warmup.final_acceptance,
        run.warmup.proposal.global_scale()
    );
    for c in &run.chains {
        eprintln!(
            "chain {}: acceptance {:.1}%, {} failed proposals",
            c.chain_id,
            100.0 * c.acceptance_rate,
            c.failures
        );
    }
    output::write_chains(&a.out, &run.chains, &RunHeader::new("fit", seed, &s))
}

fn predict(a: PredictArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let train = load(&a.data, file)?;
    let spec = dataset_spec(&a.data, file)?;
    let test = load_test_dataset(&a.test, &spec, &Normalization::of(&train.data))?;
    let samples = output::read_chains(&a.chain)?;
    if samples.is_empty() {
        return Err(Error::input(format!("{}: no samples", a.chain.display())));
    }
    let ess_iters = pick(a.ess_iters, file.ess_iters, DEFAULT_ESS_ITERS);
    let seeds = child_seeds(&mut stream(seed, &[0x5052_4544]), samples.len());
    let data = &train.data;
    let per_sample = samples
        .par_iter()
        .zip(seeds)
        .map(|(s, seed)| {
            let f = sample_latent(&s.theta, data, ess_iters, seed)?;
            let p = Predictor::new(data, &f, &s.theta)?;
            (0..test.data.n()).map(|i| p.predict(test.data.x().row(i))).collect::<pmgp_core::Result<Vec<_>>>()
        })
        .collect::<pmgp_core::Result<Vec<_>>>()?;
    let summaries: Vec<_> = (0..test.data.n())
        .map(|i| {
            let probs: Vec<f64> = per_sample.iter().map(|s| s[i].prob).collect();
            let clamped = per_sample.iter().filter(|s| s[i].clamped).count();
            if clamped > 0 {
                log::warn!("test point {i}: negative predictive variance clamped in {clamped} samples");
            }
            summarize(&probs, clamped)
        })
        .collect();
    let settings = serde_json::json!({
        "chain": a.chain, "test": a.test, "samples": samples.len(), "ess_iters": ess_iters,
        "dataset": data_json(&a.data, &spec),
    });
    output::write_predictions(&a.out, &summaries, &RunHeader::new("predict", seed, &settings))
}

fn rstudy(a: RStudyArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let d = RStudyConfig::default();
    let p = PrelimConfig::default();
    let cfg = RStudyConfig {
        n_list: pick(a.n_list, file.n_list.clone(), d.n_list),
        methods: pick(a.methods, file.methods.clone(), d.methods),
        n_imp: pick(a.n_imp, file.n_imp, d.n_imp),
        reps: pick(a.reps, file.reps, d.reps),
        n_theta: pick(a.n_theta, file.n_theta, d.n_theta),
        sigma: file.sigma.unwrap_or(d.sigma),
        tau: file.tau.unwrap_or(d.tau),
        prelim: PrelimConfig {
            warmup_iter: file.prelim_warmup.unwrap_or(p.warmup_iter),
            n_iter: file.prelim_iters.unwrap_or(p.n_iter),
            burn_in: file.prelim_burnin.unwrap_or(p.burn_in),
            n_imp: file.prelim_n_imp.unwrap_or(p.n_imp),
        },
        seed,
    };
    let results = r_study(&cfg)?;
    eprintln!("{:>6} {:>11} {:>12} {:>12} {:>12}", "n", "method", "q25", "median r", "q75");
    for r in &results {
        let q = r.five_numbers();
        eprintln!("{:>6} {:>11} {:>12.4e} {:>12.4e} {:>12.4e}", r.n, r.method.as_str(), q[1], q[2], q[3]);
    }
    output::write_rstudy(&a.out, &results, &RunHeader::new("rstudy", seed, &cfg))
}

fn bench(a: BenchArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let loaded = load(&a.data, file)?;
    let d = BenchConfig::default();
    let cfg = BenchConfig {
        ard: parse_cov(&pick(a.cov, file.cov.clone(), "iso".into()))?,
        method: pick(a.method, file.method, d.method),
        n_imp: pick(a.n_imp, file.n_imp, d.n_imp),
        chains: pick(a.chains, file.chains, d.chains),
        iters: pick(a.iters, file.iters, d.iters),
        burn_in: pick(a.burnin, file.burnin, d.burn_in),
        warmup_iter: pick(a.warmup, file.warmup, d.warmup_iter),
        seed,
    };
    let name = a.name.unwrap_or_else(|| stem(&a.data.data));
    let row = acceptance_benchmark(&name, &loaded.data, &cfg)?;
    eprintln!("{name} {} {} N_imp={}: {}", row.covariance, row.method, row.n_imp, row.cell());
    output::write_bench(&a.out, &[row], &RunHeader::new("bench", seed, &cfg))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn oracle(a: OracleArgs, file: &FileConfig) -> Result<()> {
    let loaded = load(&a.data, file)?;
    let data = &loaded.data;
    if data.n() > MAX_DIM {
        return Err(Error::input(format!("oracle needs at most {MAX_DIM} points, the data have {}", data.n())));
    }
    let theta = match a.theta.or_else(|| file.theta.clone()) {
        Some(v) => parse_theta(&v, data.d())?,
        None => Hyperparams::isotropic(15.0, (-1.0f64).exp())?,
    };
    let g = gram(data.x(), &theta)?;
    let q = quadrature_marginal(data.y(), &g)?;
    println!("marginal,log_marginal,nodes");
    println!("{},{},{}", q.value, q.value.ln(), q.nodes);
    Ok(())
}
