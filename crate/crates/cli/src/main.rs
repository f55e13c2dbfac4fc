mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gibbsrelax::exact::{ExactOracle, DEFAULT_CAP};
use gibbsrelax::io::{load_model, LoadedModel};
use gibbsrelax::meanfield::{mf_optimize, DEFAULT_RESTARTS};
use gibbsrelax::rounding::{
    best_product, round_to_products, sa_meanfield_with_cap, select_conditioning_set, theorem1_witness,
    SelectOptions, SelectionMode,
};
use gibbsrelax::sa::{solve_sa, validate_local_family, LocalFamily};
use gibbsrelax::spinglass::{kappa_sweep, sk_experiment, SkConfig, SkMethod};
use gibbsrelax::subsample::{subsample_estimate, Inner, SubsampleConfig};
use gibbsrelax::{Error, FrobeniusInteractionNorm, Noise};
use serde::Serialize;
use serde_json::{json, Value};

use output::{real, render, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "gibbsrelax", version, about = "Two-sided free-energy estimation")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Brute-force free energy.
    Exact(ExactArgs),
    /// Multi-restart mean-field lower bound.
    Meanfield(MeanfieldArgs),
    /// Sherali-Adams upper bound.
    Sa(SaArgs),
    /// Pinning and rounding of a Gibbs measure or relaxation family.
    Round(RoundArgs),
    /// Relaxation, pinning and rounding: lower and upper bound together.
    Pipeline(PipelineArgs),
    /// SK spin-glass trials.
    Sk(SkArgs),
    /// Pinned average absolute covariance sweep.
    Kappa(KappaArgs),
    /// Subsampled free-energy estimate.
    Subsample(SubsampleArgs),
    /// Check a model file and optionally a local family file.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Serialize)]
struct ModelArg {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExactArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Accepted for symmetry; output is always JSON.
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct MeanfieldArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct SaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Entropy level r; tables have size r + k.
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Gibbs,
    Sa,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Sweep,
    Greedy,
}

#[derive(Args, Debug, Serialize)]
struct RoundArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Pinning budget; omit with `--source gibbs` for the tuned witness.
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, value_enum, default_value_t = Source::Gibbs)]
    source: Source,
    /// Entropy level for `--source sa` (default: ell).
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Sweep)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NoiseArg {
    Gaussian,
    Rademacher,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Exact,
    Sandwich,
}

#[derive(Args, Debug, Serialize)]
struct SkArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    /// Entropy level in sandwich mode.
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// One CSV row per trial instead of a JSON document.
    #[arg(long)]
    #[serde(skip)]
    csv: bool,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct KappaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long)]
    tmax: usize,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InnerArg {
    Exact,
    Pipeline,
}

#[derive(Args, Debug, Serialize)]
struct SubsampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long)]
    s: usize,
    /// Default: ceil(48 ln(1/delta)), made odd.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = InnerArg::Exact)]
    inner: InnerArg,
    /// Entropy level for `--inner pipeline`.
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    template_eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Local family JSON to check for simplex and compatibility violations.
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    json: bool,
}

fn cap_from_env() -> anyhow::Result<u128> {
    match std::env::var("GIBBSRELAX_CAP") {
        Ok(v) => v
            .trim()
            .parse::<u128>()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::InvalidInput(format!("GIBBSRELAX_CAP must be a positive integer, got {v:?}")).into()),
        Err(_) => Ok(DEFAULT_CAP),
    }
}

fn check_eps(eps: f64) -> anyhow::Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")).into());
    }
    Ok(())
}

fn load(arg: &ModelArg) -> anyhow::Result<LoadedModel> {
    Ok(load_model(&arg.model)?)
}

fn binary_cap_check(n: usize, cap: u128) -> anyhow::Result<()> {
    let need = 1u128.checked_shl(n as u32).unwrap_or(u128::MAX);
    if need > cap {
        return Err(Error::SizeLimit { what: "exact enumeration (q^n)", needed: need, cap }.into());
    }
    Ok(())
}

fn document(command: &str, config: &impl Serialize, cap: u128, result: Value) -> anyhow::Result<Value> {
    let mut cfg = serde_json::to_value(config)?;
    if let Value::Object(map) = &mut cfg {
        map.insert("cap".into(), json!(cap.to_string()));
    }
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "result": result,
    }))
}

fn model_summary(m: &LoadedModel) -> Value {
    json!({
        "n": m.mrf.n(),
        "q": m.mrf.q(),
        "k": m.mrf.k(),
        "edges": m.mrf.edges().len(),
        "interaction_norm": m.mrf.frobenius_interaction_norm(),
        "sup_norm": m.mrf.interaction_sup_norm(),
        "ising": m.ising.is_some(),
        "ising_frobenius_norm": m.ising.as_ref().map(|i| i.frobenius_norm()),
    })
}

fn run(cli: Cli) -> anyhow::Result<String> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    let cap = cap_from_env()?;
    let doc = match &cli.command {
        Command::Exact(a) => {
            let m = load(&a.model)?;
            let f = ExactOracle::with_cap(cap).free_energy(&m.mrf)?;
            document("exact", a, cap, json!({ "free_energy": f, "model": model_summary(&m) }))?
        }
        Command::Meanfield(a) => {
            if a.restarts == 0 {
                return Err(Error::InvalidInput("--restarts must be at least 1".into()).into());
            }
            let m = load(&a.model)?;
            let sol = mf_optimize(&m.mrf, a.restarts, a.seed)?;
            document("meanfield", a, cap, serde_json::to_value(&sol)?)?
        }
        Command::Sa(a) => {
            check_eps(a.eps)?;
            let m = load(&a.model)?;
            let rep = solve_sa(&m.mrf, a.level, a.eps)?;
            document("sa", a, cap, serde_json::to_value(&rep)?)?
        }
        Command::Round(a) => {
            check_eps(a.eps)?;
            let m = load(&a.model)?;
            let result = match (a.source, a.ell) {
                (Source::Gibbs, None) => {
                    let ising = m.require_ising()?;
                    binary_cap_check(ising.n(), cap)?;
                    json!({ "witness": serde_json::to_value(theorem1_witness(ising)?)? })
                }
                (Source::Sa, None) => bail!(Error::InvalidInput("--ell is required with --source sa".into())),
                (source, Some(ell)) => {
                    let opts = SelectOptions {
                        mode: match a.mode {
                            ModeArg::Sweep => SelectionMode::Sweep,
                            ModeArg::Greedy => SelectionMode::Greedy,
                        },
                        seed: a.seed,
                    };
                    let k = m.mrf.k();
                    let (cond, rounded, family_value) = match source {
                        Source::Gibbs => {
                            let mu = ExactOracle::with_cap(cap).gibbs(&m.mrf)?;
                            let cond = select_conditioning_set(&mu, ell, k, &opts)?;
                            (cond.clone(), round_to_products(&mu, &cond.chosen_set)?, None)
                        }
                        Source::Sa => {
                            let level = a.level.unwrap_or(ell);
                            let sa = solve_sa(&m.mrf, level, a.eps)?;
                            let cond = select_conditioning_set(&sa.family, ell, k, &opts)?;
                            (cond.clone(), round_to_products(&sa.family, &cond.chosen_set)?, Some(sa.upper_bound))
                        }
                    };
                    let rounded = best_product(&m.mrf, rounded)?;
                    json!({
                        "conditioning": serde_json::to_value(&cond)?,
                        "rounded": serde_json::to_value(&rounded)?,
                        "lower": rounded.best_candidate().and_then(|c| c.objective),
                        "sa_upper_bound": family_value,
                    })
                }
            };
            document("round", a, cap, result)?
        }
        Command::Pipeline(a) => {
            check_eps(a.eps)?;
            let m = load(&a.model)?;
            let rep = sa_meanfield_with_cap(&m.mrf, a.level, a.eps, cap)?;
            document("pipeline", a, cap, serde_json::to_value(&rep)?)?
        }
        Command::Sk(a) => {
            check_eps(a.eps)?;
            let mut cfg = SkConfig::new(
                a.n,
                a.beta,
                a.trials,
                match a.noise {
                    NoiseArg::Gaussian => Noise::Gaussian,
                    NoiseArg::Rademacher => Noise::Rademacher,
                },
                a.seed,
                match a.method {
                    MethodArg::Exact => SkMethod::Exact,
                    MethodArg::Sandwich => SkMethod::Sandwich,
                },
            );
            cfg.restarts = a.restarts;
            cfg.r_entropy = a.level;
            cfg.eps = a.eps;
            cfg.cap = cap;
            if cfg.method == SkMethod::Exact {
                binary_cap_check(a.n, cap)?;
            }
            let res = sk_experiment(&cfg)?;
            if a.csv {
                return sk_csv(a, cap, &res);
            }
            document("sk", a, cap, serde_json::to_value(&res)?)?
        }
        Command::Kappa(a) => {
            let m = load(&a.model)?;
            let ising = m.require_ising()?;
            binary_cap_check(ising.n(), cap)?;
            document("kappa", a, cap, serde_json::to_value(kappa_sweep(ising, a.tmax)?)?)?
        }
        Command::Subsample(a) => {
            check_eps(a.eps)?;
            let m = load(&a.model)?;
            let mut cfg = SubsampleConfig::new(a.s, a.delta, a.seed);
            cfg.repetitions = a.reps;
            cfg.template_eps = a.template_eps;
            cfg.cap = cap;
            cfg.inner = match a.inner {
                InnerArg::Exact => Inner::Exact,
                InnerArg::Pipeline => Inner::Pipeline { r_entropy: a.level, eps: a.eps },
            };
            document("subsample", a, cap, serde_json::to_value(subsample_estimate(&m.mrf, &cfg)?)?)?
        }
        Command::Validate(a) => {
            let m = load(&a.model)?;
            let family = match &a.family {
                None => Value::Null,
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
                    let fam: LocalFamily = serde_json::from_str(&text)
                        .map_err(|e| Error::InvalidInput(format!("family JSON: {e}")))?;
                    let fam = LocalFamily::new(fam.n(), fam.q(), fam.level(), fam.tables().to_vec())?;
                    if fam.n() != m.mrf.n() || fam.q() != m.mrf.q() {
                        return Err(Error::ScopeMismatch("family and model disagree on n or q".into()).into());
                    }
                    let report = validate_local_family(&fam);
                    json!({ "valid": report.is_valid(), "report": serde_json::to_value(&report)? })
                }
            };
            document("validate", a, cap, json!({ "valid": true, "model": model_summary(&m), "family": family }))?
        }
    };
    Ok(render(&doc))
}

fn sk_csv(a: &SkArgs, cap: u128, res: &gibbsrelax::spinglass::SkExperimentResult) -> anyhow::Result<String> {
    let mut header = String::new();
    header.push_str(&format!("# schema_version={SCHEMA_VERSION}\n"));
    let mut cfg = serde_json::to_value(a)?;
    if let Value::Object(map) = &mut cfg {
        map.insert("cap".into(), json!(cap.to_string()));
    }
    header.push_str(&format!("# config={cfg}\n"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trial",
        "seed",
        "free_energy_density",
        "lower_density",
        "upper_density",
        "mean_field_density",
        "spectral_norm",
        "rs_prediction",
    ])?;
    let opt = |x: Option<f64>| x.map(real).unwrap_or_default();
    for t in &res.trials {
        w.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            opt(t.free_energy_density),
            opt(t.lower_density),
            opt(t.upper_density),
            real(t.mean_field_density),
            real(t.spectral_norm),
            real(res.rs_prediction),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(header + &body)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::SizeLimit { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
