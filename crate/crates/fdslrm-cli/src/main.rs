//! Command-line front end: data ingestion, model configuration, estimation
//! runs, prediction/decomposition output and a benchmark mode.
//!
//! Exit codes: 0 ok, 2 input error, 3 model error (rank/orthogonality),
//! 4 degenerate residual treated as an error under `--strict`.

mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use fdslrm::{
    build_projection, eblup_ne, estimate_ne, estimate_nn_doolse, estimate_projection,
    estimate_remle, gram_system, periodogram, solve_mme_cached, sort_by_power, DesignSet,
    DoolseVariant, EstimationResult, InitialMethod, LikelihoodVariant, Method, ModelSpec,
    SimulationConfig, VarianceComponents, RNG_ALGORITHM,
};
use report::{MethodReport, RunReport};

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    fn degenerate(msg: impl Into<String>) -> Self {
        CliError { code: 4, msg: msg.into() }
    }
}

impl From<fdslrm::Error> for CliError {
    fn from(err: fdslrm::Error) -> Self {
        use fdslrm::Error::*;
        let code = match err {
            RankDeficient { .. } | DegenerateColumn { .. } | NotOrthogonal
            | TooFewObservations { .. } | InvalidTerm(_) => 3,
            _ => 2,
        };
        CliError { code, msg: err.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "fdslrm", version, about = "Variance-component estimation and BLUP prediction \
for time-series regression models with a finite discrete spectrum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run estimators on a series and emit a JSON report.
    Fit {
        /// CSV file; the first column is the observed series.
        data: PathBuf,
        /// JSON model configuration.
        model: PathBuf,
        /// Comma-separated methods: ne, doolse, mdoolse, nn-doolse,
        /// nn-mdoolse, mle, remle, eblupne.
        #[arg(long, default_value = "ne,doolse,mdoolse,mle,remle,eblupne")]
        methods: String,
        /// Stage-one method of eblupne: ne, nn-doolse, nn-mdoolse, mle, remle.
        #[arg(long, default_value = "remle")]
        initial: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Treat a degenerate residual (in the span of V) as an error.
        #[arg(long)]
        strict: bool,
    },
    /// Decompose a series into trend, signal and residuals at a given or
    /// estimated nu.
    Predict {
        data: PathBuf,
        model: PathBuf,
        /// Explicit variance components "nu0,nu1,...".
        #[arg(long, conflicts_with = "method")]
        nu: Option<String>,
        /// Estimate nu first with this method: ne, nn-doolse, nn-mdoolse,
        /// mle, remle.
        #[arg(long)]
        method: Option<String>,
        /// Write the decomposition CSV here (parameter summary then goes to
        /// stdout); default prints CSV to stdout and the summary to stderr.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw Gaussian replicates from a model.
    Simulate {
        model: PathBuf,
        /// Trend coefficients "b1,b2,...".
        #[arg(long, default_value = "")]
        beta: String,
        /// True variance components "nu0,nu1,...".
        #[arg(long)]
        nu: String,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Seed; the FDSLRM_SEED environment variable overrides it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SimFormat::Csv)]
        format: SimFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time the non-negative MDOOLSE pipeline over a grid of series lengths.
    Bench {
        /// Ascending series lengths, scientific notation accepted.
        #[arg(long, default_value = "1e3,1e4,1e5,1e6")]
        n_grid: String,
        /// Number of random components.
        #[arg(long, default_value_t = 4)]
        l: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Timed runs per grid point (medians are reported).
        #[arg(long, default_value_t = 11)]
        runs: usize,
    },
    /// Print periodogram ordinates at the Fourier frequencies.
    Periodogram {
        data: PathBuf,
        /// Sort by descending power.
        #[arg(long)]
        sort: bool,
        /// Keep only the strongest K ordinates (implies --sort).
        #[arg(long)]
        top: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimFormat {
    /// One column per replicate.
    Csv,
    /// One JSON line of summary statistics per replicate.
    Summary,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.msg);
            ExitCode::from(err.code)
        }
    }
}

fn run() -> Result<ExitCode, CliError> {
    match Cli::parse().command {
        Command::Fit { data, model, methods, initial, output, strict } => {
            cmd_fit(&data, &model, &methods, &initial, output.as_deref(), strict)
        }
        Command::Predict { data, model, nu, method, output } => {
            cmd_predict(&data, &model, nu.as_deref(), method.as_deref(), output.as_deref())
        }
        Command::Simulate { model, beta, nu, replicates, seed, format, output } => {
            cmd_simulate(&model, &beta, &nu, replicates, seed, format, output.as_deref())
        }
        Command::Bench { n_grid, l, seed, runs } => cmd_bench(&n_grid, l, seed, runs),
        Command::Periodogram { data, sort, top } => cmd_periodogram(&data, sort, top),
    }
}

fn parse_method(name: &str) -> Result<Method, CliError> {
    Ok(match name {
        "ne" => Method::Ne,
        "doolse" => Method::Doolse,
        "mdoolse" => Method::Mdoolse,
        "nn-doolse" => Method::NnDoolse,
        "nn-mdoolse" => Method::NnMdoolse,
        "mle" => Method::Mle,
        "remle" => Method::Remle,
        "eblupne" => Method::EblupNe,
        other => return Err(CliError::input(format!("unknown method {other:?}"))),
    })
}

fn parse_initial(name: &str) -> Result<InitialMethod, CliError> {
    Ok(match name {
        "ne" => InitialMethod::Ne,
        "nn-doolse" => InitialMethod::NnDoolse,
        "nn-mdoolse" => InitialMethod::NnMdoolse,
        "mle" => InitialMethod::Mle,
        "remle" => InitialMethod::Remle,
        other => return Err(CliError::input(format!("unknown initial method {other:?}"))),
    })
}

fn seed_with_env_override(seed: u64) -> Result<u64, CliError> {
    match std::env::var("FDSLRM_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::input(format!("FDSLRM_SEED is not a u64: {text:?}"))),
        Err(_) => Ok(seed),
    }
}

fn load_inputs(
    data: &std::path::Path,
    model: &std::path::Path,
) -> Result<(Vec<f64>, ModelSpec, fdslrm::ModelConfig, DesignSet<f64>), CliError> {
    let series = io::read_series(data)?;
    let (spec, config) = io::read_model(model)?;
    if series.len() != spec.n() {
        return Err(CliError::from(fdslrm::Error::LengthMismatch {
            expected: spec.n(),
            actual: series.len(),
        }));
    }
    let design: DesignSet<f64> = spec.realize()?;
    Ok((series, spec, config, design))
}

fn cmd_fit(
    data: &std::path::Path,
    model: &std::path::Path,
    methods: &str,
    initial: &str,
    output: Option<&std::path::Path>,
    strict: bool,
) -> Result<ExitCode, CliError> {
    let (series, spec, config, design) = load_inputs(data, model)?;
    let initial_method = parse_initial(initial)?;
    let cache = build_projection(&design, &series)?;

    let mut reports = Vec::new();
    for name in methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let method = parse_method(name)?;
        let t0 = Instant::now();
        let entry = match method {
            Method::Ne => {
                let nu = estimate_ne(&cache, &design)?;
                MethodReport::from_result(&EstimationResult::from_ne(&nu), t0.elapsed().as_nanos())
            }
            Method::Doolse | Method::Mdoolse => {
                let variant = if method == Method::Doolse {
                    DoolseVariant::Doolse
                } else {
                    DoolseVariant::Mdoolse
                };
                let gram = gram_system(&cache, &design, variant)?;
                let est = estimate_projection(&gram);
                MethodReport::from_result(
                    &EstimationResult::from_projection(method, &est),
                    t0.elapsed().as_nanos(),
                )
            }
            Method::NnDoolse | Method::NnMdoolse => {
                let variant = if method == Method::NnDoolse {
                    DoolseVariant::Doolse
                } else {
                    DoolseVariant::Mdoolse
                };
                let gram = gram_system(&cache, &design, variant)?;
                let sol = estimate_nn_doolse(&gram)?;
                MethodReport::from_result(
                    &EstimationResult::from_kkt(method, &sol, None),
                    t0.elapsed().as_nanos(),
                )
            }
            Method::Mle | Method::Remle => {
                let variant = if method == Method::Mle {
                    LikelihoodVariant::Ml
                } else {
                    LikelihoodVariant::Reml
                };
                let est = estimate_remle(&cache, &design, variant)?;
                MethodReport::from_result(
                    &EstimationResult::from_kkt(method, &est.solution, est.log_likelihood),
                    t0.elapsed().as_nanos(),
                )
            }
            Method::EblupNe => {
                let out = eblup_ne(&design, &series, initial_method)?;
                let elapsed = t0.elapsed().as_nanos();
                let mut entry = MethodReport {
                    method: "eblupne".to_string(),
                    estimate: out.final_estimate.as_slice().to_vec(),
                    norm: report::norm(out.final_estimate.as_slice()),
                    time_ns: elapsed,
                    negative: false,
                    degenerate: out.final_estimate.is_degenerate() || out.initial.degenerate,
                    boundary_tie: out.initial.boundary_tie,
                    active_pattern: out.initial.active_pattern.clone(),
                    systems_tried: out.initial.systems_tried,
                    log_likelihood: out.initial.log_likelihood,
                    initial: Some(initial_method.name().to_string()),
                    rho: Some(out.rho.clone()),
                };
                entry.norm = report::norm(&entry.estimate);
                entry
            }
        };
        reports.push(entry);
    }

    let any_degenerate = reports.iter().any(|r| r.degenerate);
    let report = RunReport {
        schema: report::SCHEMA.to_string(),
        model: config,
        n: spec.n(),
        methods: reports,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::input(format!("serialize report: {e}")))?;
    match output {
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
        None => println!("{json}"),
    }

    if any_degenerate {
        eprintln!("warning: residual lies in the span of V; nu_0 = 0 solution reported");
        if strict {
            return Ok(ExitCode::from(4));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(
    data: &std::path::Path,
    model: &std::path::Path,
    nu_text: Option<&str>,
    method: Option<&str>,
    output: Option<&std::path::Path>,
) -> Result<ExitCode, CliError> {
    let (series, _spec, _config, design) = load_inputs(data, model)?;
    let cache = build_projection(&design, &series)?;

    let (nu, method_name) = match (nu_text, method) {
        (Some(text), _) => {
            let nu = VarianceComponents::new(io::parse_number_list(text)?)?;
            (nu, "given".to_string())
        }
        (None, Some(name)) => {
            let initial = parse_initial(name)?;
            let estimate = match initial {
                InitialMethod::Ne => estimate_ne(&cache, &design)?,
                InitialMethod::NnDoolse => {
                    estimate_nn_doolse(&gram_system(&cache, &design, DoolseVariant::Doolse)?)?.nu_hat
                }
                InitialMethod::NnMdoolse => {
                    estimate_nn_doolse(&gram_system(&cache, &design, DoolseVariant::Mdoolse)?)?.nu_hat
                }
                InitialMethod::Mle => {
                    estimate_remle(&cache, &design, LikelihoodVariant::Ml)?.solution.nu_hat
                }
                InitialMethod::Remle => {
                    estimate_remle(&cache, &design, LikelihoodVariant::Reml)?.solution.nu_hat
                }
            };
            if estimate.is_degenerate() {
                return Err(CliError::degenerate(
                    "estimated nu_0 = 0 (residual in the span of V); no predictor at this estimate",
                ));
            }
            (estimate, name.to_string())
        }
        (None, None) => {
            return Err(CliError::input("predict needs --nu or --method"));
        }
    };

    let blup = solve_mme_cached(&design, &cache, &series, &nu)?;
    let n = design.n();
    let rows = (0..n).map(|t| {
        let trend = series[t] - blup.marginal_residuals[t];
        let signal = blup.marginal_residuals[t] - blup.conditional_residuals[t];
        vec![
            (t + 1).to_string(),
            fmt(series[t]),
            fmt(trend),
            fmt(signal),
            fmt(blup.conditional_residuals[t]),
            fmt(blup.marginal_residuals[t]),
        ]
    });
    let header = ["t", "x", "trend", "signal", "residual_conditional", "residual_marginal"];

    let summary = serde_json::json!({
        "schema": "fdslrm-predict/1",
        "method": method_name,
        "nu": nu.as_slice(),
        "beta": blup.beta_hat,
        "y": blup.y_hat,
    });
    match output {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            io::write_csv(file, &header, rows)?;
            println!("{summary}");
        }
        None => {
            io::write_csv(std::io::stdout().lock(), &header, rows)?;
            eprintln!("{summary}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt(x: f64) -> String {
    // Shortest representation that round-trips the double.
    format!("{x:?}")
}

fn cmd_simulate(
    model: &std::path::Path,
    beta_text: &str,
    nu_text: &str,
    replicates: usize,
    seed: u64,
    format: SimFormat,
    output: Option<&std::path::Path>,
) -> Result<ExitCode, CliError> {
    let (spec, _config) = io::read_model(model)?;
    let beta = if beta_text.trim().is_empty() {
        Vec::new()
    } else {
        io::parse_number_list(beta_text)?
    };
    let nu_true = VarianceComponents::new(io::parse_number_list(nu_text)?)?;
    let seed = seed_with_env_override(seed)?;
    let config = SimulationConfig { spec, beta, nu_true, replicates, seed };
    let sampler = fdslrm::sampler(&config)?;
    let n = sampler.design().n();

    let mut sink: Box<dyn std::io::Write> = match output {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };

    match format {
        SimFormat::Csv => {
            let columns: Vec<Vec<f64>> = sampler.map(|rep| rep.series).collect();
            let header: Vec<String> = (0..replicates).map(|i| format!("rep{i}")).collect();
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = (0..n).map(|t| columns.iter().map(|c| fmt(c[t])).collect());
            io::write_csv(sink, &header_refs, rows)?;
        }
        SimFormat::Summary => {
            use std::io::Write;
            let meta = serde_json::json!({
                "schema": "fdslrm-simulate/1",
                "rng": RNG_ALGORITHM,
                "seed": seed,
                "replicates": replicates,
                "n": n,
            });
            writeln!(sink, "{meta}").map_err(|e| CliError::input(format!("write: {e}")))?;
            for (i, rep) in sampler.enumerate() {
                let mean = rep.series.iter().sum::<f64>() / n as f64;
                let var = rep.series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / (n as f64 - 1.0);
                let min = rep.series.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = rep.series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let line = serde_json::json!({
                    "replicate": i,
                    "mean": mean,
                    "variance": var,
                    "min": min,
                    "max": max,
                });
                writeln!(sink, "{line}").map_err(|e| CliError::input(format!("write: {e}")))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench_model(n: usize, l: usize) -> Result<ModelSpec, CliError> {
    use fdslrm::{Frequency, TermSpec};
    let trend = vec![
        TermSpec::Constant,
        TermSpec::Cosine(Frequency::Harmonic(1)),
        TermSpec::Sine(Frequency::Harmonic(1)),
    ];
    let mut random = Vec::with_capacity(l);
    for i in 0..l {
        let h = 2 + (i / 2) as u32;
        random.push(if i % 2 == 0 {
            TermSpec::Cosine(Frequency::Harmonic(h))
        } else {
            TermSpec::Sine(Frequency::Harmonic(h))
        });
    }
    Ok(ModelSpec::new(n, trend, random)?)
}

fn cmd_bench(n_grid: &str, l: usize, seed: u64, runs: usize) -> Result<ExitCode, CliError> {
    let grid = io::parse_count_list(n_grid)?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::input("--n-grid must be strictly ascending"));
    }
    if runs == 0 {
        return Err(CliError::input("--runs must be at least 1"));
    }
    let seed = seed_with_env_override(seed)?;

    println!("{:>10} {:>14} {:>14} {:>6}", "n", "median_us", "min_us", "runs");
    let mut medians: Vec<f64> = Vec::new();
    for &n in &grid {
        let spec = bench_model(n, l)?;
        let mut nu = vec![1.0];
        nu.extend(std::iter::repeat(0.4).take(l));
        let config = SimulationConfig {
            spec,
            beta: vec![1.0, 0.5, -0.25],
            nu_true: VarianceComponents::new(nu)?,
            replicates: 1,
            seed,
        };
        let sampler = fdslrm::sampler(&config)?;
        let design = sampler.design().clone();
        let series = sampler.replicate_at(0).series;

        let pipeline = || {
            let cache = build_projection(&design, &series).unwrap();
            let gram = gram_system(&cache, &design, DoolseVariant::Mdoolse).unwrap();
            estimate_nn_doolse(&gram).unwrap()
        };
        for _ in 0..2 {
            std::hint::black_box(pipeline());
        }
        let mut times: Vec<f64> = (0..runs)
            .map(|_| {
                let t0 = Instant::now();
                std::hint::black_box(pipeline());
                t0.elapsed().as_nanos() as f64
            })
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];
        medians.push(median);
        println!(
            "{:>10} {:>14.2} {:>14.2} {:>6}",
            n,
            median / 1e3,
            times[0] / 1e3,
            runs
        );
    }

    if grid.len() >= 2 {
        let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).log2()).collect();
        let ys: Vec<f64> = medians.iter().map(|&t| t.log2()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        println!("per-doubling factor: {:.3} (time ~ n^{:.3})", 2f64.powf(slope), slope);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_periodogram(
    data: &std::path::Path,
    sort: bool,
    top: Option<usize>,
) -> Result<ExitCode, CliError> {
    let series = io::read_series(data)?;
    let mut ordinates = periodogram(&series)?;
    if sort || top.is_some() {
        ordinates = sort_by_power(ordinates);
    }
    if let Some(k) = top {
        ordinates.truncate(k);
    }
    let rows = ordinates
        .iter()
        .map(|o| vec![o.harmonic.to_string(), fmt(o.frequency), fmt(o.power)]);
    io::write_csv(std::io::stdout().lock(), &["harmonic", "frequency", "power"], rows)?;
    Ok(ExitCode::SUCCESS)
}
