//! `corrbreak` command-line front end.
//!
//! Every artifact carries the tool version, the resolved run configuration,
//! the seed and the generator identity, so that two runs with the same
//! configuration can be compared byte for byte.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use corrbreak::arbitrage::{arbitrage_certificate, ArbitrageCertificate};
use corrbreak::bounds::{
    correlation_lower_bound, correlation_upper_bound, validate_matrix, DefaultCorrelationMatrix,
    BOUND_TOLERANCE,
};
use corrbreak::copula::{AssetCorrelationSpec, CopulaSampler};
use corrbreak::implied::{breakdown_report, PricingConfig, AUTO_EXHAUSTIVE_MAX};
use corrbreak::io::{read_matrix_path, read_portfolio_path};
use corrbreak::ladder::{build_ladder, ladder_loss_distribution, LadderSampler};
use corrbreak::model::ReferencePortfolio;
use corrbreak::pricing::{
    price_tranche_exhaustive, price_tranche_mc, price_tranche_mc_with, DefaultLaw, TrancheKind,
    TrancheSpec, Valuation,
};
use corrbreak::sampling::{fold_draws, DrawSampler, RNG_ALGORITHM};
use corrbreak::{Error, Result};

pub const TOOL: &str = "corrbreak";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable supplying the default worker-thread count.
pub const THREADS_ENV: &str = "CORRBREAK_THREADS";

/// Most profitable scenarios listed in an `arb` report.
const MAX_LISTED_SCENARIOS: usize = 1024;

#[derive(Debug, Parser)]
#[command(
    name = "corrbreak",
    version,
    about = "Default correlation bounds, tranche pricing and correlation-breakdown arbitrage"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write the result here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Auto,
    Exhaustive,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Supersenior,
    Equity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a portfolio and, optionally, a default-correlation matrix against the pairwise bounds.
    Validate {
        #[arg(long)]
        portfolio: PathBuf,
        /// Default-correlation matrix (CSV, N rows of N numbers).
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Scenario table and loss distribution of the maximal-correlation law.
    Ladder {
        #[arg(long)]
        portfolio: PathBuf,
        /// Also write the loss distribution as two-column CSV.
        #[arg(long, value_name = "PATH")]
        plot_data: Option<PathBuf>,
    },
    /// Simulate terminal default scenarios and count them.
    Simulate {
        #[arg(long)]
        portfolio: PathBuf,
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
    },
    /// Price a tranche.
    Price {
        #[arg(long)]
        portfolio: PathBuf,
        #[arg(long)]
        attachment: f64,
        #[arg(long, value_enum, default_value_t = Kind::Supersenior)]
        kind: Kind,
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
        /// Also write the price against flat correlation as two-column CSV.
        #[arg(long, value_name = "PATH")]
        plot_data: Option<PathBuf>,
        /// Points in the correlation grid written by --plot-data.
        #[arg(long, default_value_t = 11)]
        grid_points: usize,
    },
    /// Flat implied correlation of a supersenior quote, with breakdown diagnosis.
    Imply {
        #[arg(long)]
        portfolio: PathBuf,
        #[arg(long)]
        attachment: f64,
        #[arg(long)]
        market_price: f64,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
    },
    /// Build the static arbitrage against a supersenior quote and certify it.
    Arb {
        #[arg(long)]
        portfolio: PathBuf,
        #[arg(long)]
        attachment: f64,
        #[arg(long)]
        market_price: f64,
        /// Decompose the attachment with unit loss given default.
        #[arg(long)]
        stress_lgd: bool,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct LawArgs {
    /// Maximal-correlation law.
    #[arg(long)]
    ladder: bool,
    /// One-factor Gaussian copula at this flat asset correlation.
    #[arg(long, value_name = "RHO")]
    flat_rho: Option<f64>,
    /// Gaussian copula with this asset correlation matrix (CSV).
    #[arg(long, value_name = "FILE")]
    corr_matrix: Option<PathBuf>,
}

enum Law {
    Ladder,
    Flat(f64),
    Matrix(PathBuf),
}

impl LawArgs {
    fn resolve(&self) -> Law {
        match (&self.flat_rho, &self.corr_matrix) {
            (Some(r), _) => Law::Flat(*r),
            (_, Some(p)) => Law::Matrix(p.clone()),
            _ => Law::Ladder,
        }
    }
}

impl Law {
    fn describe(&self) -> Value {
        match self {
            Law::Ladder => json!("ladder"),
            Law::Flat(r) => json!({ "flat_rho": r }),
            Law::Matrix(p) => json!({ "corr_matrix": p.display().to_string() }),
        }
    }
}

/// Destination, column names and rows of a two-column side file.
type PlotData = (PathBuf, [&'static str; 2], Vec<(f64, f64)>);

/// What a command produced, before formatting.
struct Artifact {
    config: Value,
    result: Value,
    csv: String,
    plot: Option<PlotData>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Value,
    seed: u64,
    rng: &'static str,
    result: &'a Value,
}

fn metadata_lines(config: &Value, seed: u64) -> String {
    format!(
        "# tool: {TOOL} {VERSION}\n# config: {config}\n# seed: {seed}\n# rng: {RNG_ALGORITHM}\n"
    )
}

/// Writes `(x, y)` pairs as a two-column CSV after the metadata lines.
pub fn emit_plot_data(
    path: &Path,
    columns: [&str; 2],
    points: &[(f64, f64)],
    config: &Value,
    seed: u64,
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to write".into()));
    }
    let mut out = metadata_lines(config, seed);
    out.push_str(&format!("{},{}\n", columns[0], columns[1]));
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let mut warnings = Vec::new();
    let outcome = match cli.threads {
        Some(0) => Err(Error::InvalidArgument(
            "--threads must be at least 1".into(),
        )),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli, &mut warnings)),
            Err(e) => Err(Error::Io(format!("cannot start {t} worker threads: {e}"))),
        },
        None => execute(&cli, &mut warnings),
    };
    let _ = stderr.write_all(&warnings);
    let outcome = outcome.and_then(|a| deliver(&cli, a, stdout));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn deliver(cli: &Cli, artifact: Artifact, stdout: &mut dyn Write) -> Result<()> {
    if let Some((path, columns, points)) = &artifact.plot {
        emit_plot_data(path, *columns, points, &artifact.config, cli.seed)?;
    }
    let text = match cli.format {
        Format::Json => {
            let env = Envelope {
                tool: TOOL,
                version: VERSION,
                config: &artifact.config,
                seed: cli.seed,
                rng: RNG_ALGORITHM,
                result: &artifact.result,
            };
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => metadata_lines(&artifact.config, cli.seed) + &artifact.csv,
    };
    match &cli.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn load_portfolio(path: &Path, stderr: &mut Vec<u8>) -> Result<ReferencePortfolio> {
    let p = read_portfolio_path(path)?;
    let total = p.total_notional();
    if (total - 1.0).abs() > 1e-9 {
        let _ = writeln!(
            stderr,
            "warning: notionals sum to {total}, not 1; values are fractions of unit total notional"
        );
    }
    Ok(p)
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Io(e.to_string()))
}

/// Common config keys; threads and the output path are left out so they
/// cannot change the artifact.
fn base_config(cli: &Cli, command: &str, portfolio: &Path) -> BTreeMap<&'static str, Value> {
    let mut m = BTreeMap::new();
    m.insert("command", json!(command));
    m.insert("portfolio", json!(portfolio.display().to_string()));
    m.insert("format", json!(cli.format));
    m.insert("seed", json!(cli.seed));
    m
}

fn execute(cli: &Cli, stderr: &mut Vec<u8>) -> Result<Artifact> {
    match &cli.command {
        Command::Validate { portfolio, matrix } => {
            validate(cli, portfolio, matrix.as_deref(), stderr)
        }
        Command::Ladder {
            portfolio,
            plot_data,
        } => ladder(cli, portfolio, plot_data.as_deref(), stderr),
        Command::Simulate {
            portfolio,
            law,
            draws,
        } => simulate(cli, portfolio, law.resolve(), *draws, stderr),
        Command::Price {
            portfolio,
            attachment,
            kind,
            law,
            method,
            draws,
            plot_data,
            grid_points,
        } => price(
            cli,
            PriceArgs {
                path: portfolio,
                attachment: *attachment,
                kind: *kind,
                law: law.resolve(),
                method: *method,
                draws: *draws,
                plot_data: plot_data.as_deref(),
                grid_points: *grid_points,
            },
            stderr,
        ),
        Command::Imply {
            portfolio,
            attachment,
            market_price,
            method,
            draws,
        } => imply(
            cli,
            portfolio,
            *attachment,
            *market_price,
            *method,
            *draws,
            stderr,
        ),
        Command::Arb {
            portfolio,
            attachment,
            market_price,
            stress_lgd,
        } => arb(
            cli,
            portfolio,
            *attachment,
            *market_price,
            *stress_lgd,
            stderr,
        ),
    }
}

fn validate(
    cli: &Cli,
    path: &Path,
    matrix: Option<&Path>,
    stderr: &mut Vec<u8>,
) -> Result<Artifact> {
    let p = load_portfolio(path, stderr)?;
    let mut config = base_config(cli, "validate", path);
    config.insert("matrix", json!(matrix.map(|m| m.display().to_string())));
    let rho = match matrix {
        Some(m) => Some(DefaultCorrelationMatrix::new(read_matrix_path(m)?)),
        None => None,
    };
    let findings = match &rho {
        Some(m) => Some(validate_matrix(&p, m)?),
        None => None,
    };
    let probs = p.default_probs();
    let mut pairs = Vec::new();
    let mut csv = String::from("i,j,label_i,label_j,rho,lower_bound,upper_bound,status\n");
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let bounds = correlation_lower_bound(probs[i], probs[j])
                .and_then(|lo| Ok((lo, correlation_upper_bound(probs[i], probs[j])?)))
                .ok();
            let r = rho.as_ref().map(|m| m.get(i, j));
            let status = match (bounds, r) {
                (None, _) => "degenerate",
                (Some(_), None) => "-",
                (Some((_, hi)), Some(r)) if r > hi + BOUND_TOLERANCE => "above-upper",
                (Some((lo, _)), Some(r)) if r < lo - BOUND_TOLERANCE => "below-lower",
                (Some(_), Some(_)) => "ok",
            };
            let (lo, hi) = bounds.map_or((None, None), |(a, b)| (Some(a), Some(b)));
            let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{status}\n",
                i + 1,
                j + 1,
                p.name(i).label,
                p.name(j).label,
                cell(r),
                cell(lo),
                cell(hi)
            ));
            pairs.push(json!({
                "i": i + 1,
                "j": j + 1,
                "label_i": p.name(i).label,
                "label_j": p.name(j).label,
                "rho": r,
                "lower_bound": lo,
                "upper_bound": hi,
                "status": status,
            }));
        }
    }
    let valid = findings.as_ref().is_none_or(|f| f.is_valid());
    let result = json!({
        "names": p.len(),
        "total_notional": p.total_notional(),
        "total_loss_capacity": p.total_loss_capacity(),
        "expected_loss": p.expected_loss(),
        "pairs": pairs,
        "matrix": findings.map(|f| to_value(&f)).transpose()?,
        "valid": valid,
    });
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot: None,
    })
}

fn ladder(cli: &Cli, path: &Path, plot: Option<&Path>, stderr: &mut Vec<u8>) -> Result<Artifact> {
    let p = load_portfolio(path, stderr)?;
    let mut config = base_config(cli, "ladder", path);
    config.insert("plot_data", json!(plot.map(|x| x.display().to_string())));
    let l = build_ladder(&p);
    let dist = ladder_loss_distribution(&l)?;
    let mut csv = String::from("survivors,defaults,scenario,loss,probability\n");
    let mut scenarios = Vec::new();
    for k in (0..=p.len()).rev() {
        let s = l.scenario(k).to_string();
        let (loss, prob) = (l.scenario_loss(k), l.scenario_probs()[k]);
        csv.push_str(&format!("{k},{},{s},{loss},{prob}\n", p.len() - k));
        scenarios.push(json!({
            "survivors": k,
            "defaults": p.len() - k,
            "scenario": s,
            "loss": loss,
            "probability": prob,
        }));
    }
    csv.push_str("# loss distribution\nloss,probability\n");
    for (loss, prob) in dist.points() {
        csv.push_str(&format!("{loss},{prob}\n"));
    }
    let result = json!({
        "scenarios": scenarios,
        "loss_distribution": dist.points().iter().map(|(l, q)| json!({ "loss": l, "probability": q })).collect::<Vec<_>>(),
        "expected_loss": dist.mean(),
    });
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot: plot.map(|x| {
            (
                x.to_path_buf(),
                ["loss", "probability"],
                dist.points().to_vec(),
            )
        }),
    })
}

fn sampler_for(p: &ReferencePortfolio, law: &Law) -> Result<Box<dyn DrawSampler>> {
    Ok(match law {
        Law::Ladder => Box::new(LadderSampler::new(&build_ladder(p))),
        Law::Flat(r) => Box::new(CopulaSampler::new(p, &AssetCorrelationSpec::flat(*r)?)?),
        Law::Matrix(path) => Box::new(CopulaSampler::new(
            p,
            &AssetCorrelationSpec::full(read_matrix_path(path)?)?,
        )?),
    })
}

fn simulate(
    cli: &Cli,
    path: &Path,
    law: Law,
    draws: u64,
    stderr: &mut Vec<u8>,
) -> Result<Artifact> {
    let p = load_portfolio(path, stderr)?;
    let mut config = base_config(cli, "simulate", path);
    config.insert("law", law.describe());
    config.insert("draws", json!(draws));
    let sampler = sampler_for(&p, &law)?;
    let counts = fold_draws(
        sampler.as_ref(),
        draws,
        cli.seed,
        BTreeMap::<Vec<bool>, u64>::new,
        |m, d| match m.get_mut(d) {
            Some(c) => *c += 1,
            None => {
                m.insert(d.to_vec(), 1);
            }
        },
        |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        },
    )?;
    let mut csv = String::from("scenario,defaults,count,frequency\n");
    let mut rows = Vec::new();
    let mut violations = 0u64;
    for (s, &c) in &counts {
        let scenario = corrbreak::model::DefaultScenario::new(s.clone());
        if !scenario.is_hierarchical() {
            violations += c;
        }
        let text = scenario.to_string();
        let freq = c as f64 / draws as f64;
        csv.push_str(&format!("{text},{},{c},{freq}\n", scenario.default_count()));
        rows.push(json!({ "scenario": text, "defaults": scenario.default_count(), "count": c, "frequency": freq }));
    }
    let result = json!({
        "draws": draws,
        "distinct_scenarios": counts.len(),
        "hierarchical_violations": violations,
        "counts": rows,
    });
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot: None,
    })
}

struct PriceArgs<'a> {
    path: &'a Path,
    attachment: f64,
    kind: Kind,
    law: Law,
    method: Method,
    draws: u64,
    plot_data: Option<&'a Path>,
    grid_points: usize,
}

fn flat_price(
    p: &ReferencePortfolio,
    t: &TrancheSpec,
    rho: f64,
    method: Method,
    draws: u64,
    seed: u64,
) -> Result<Valuation> {
    let exhaustive = match method {
        Method::Exhaustive => true,
        Method::Mc => false,
        Method::Auto => p.len() <= AUTO_EXHAUSTIVE_MAX || rho == 1.0,
    };
    if exhaustive {
        let law = if rho == 1.0 {
            DefaultLaw::Ladder(build_ladder(p))
        } else {
            DefaultLaw::FlatGaussian(rho)
        };
        price_tranche_exhaustive(p, t, &law)
    } else {
        price_tranche_mc(p, t, &AssetCorrelationSpec::flat(rho)?, draws, seed)
    }
}

fn price(cli: &Cli, a: PriceArgs<'_>, stderr: &mut Vec<u8>) -> Result<Artifact> {
    let p = load_portfolio(a.path, stderr)?;
    let kind = match a.kind {
        Kind::Supersenior => TrancheKind::Supersenior,
        Kind::Equity => TrancheKind::Equity,
    };
    let t = TrancheSpec::new(a.attachment, kind)?;
    let mut config = base_config(cli, "price", a.path);
    config.insert("attachment", json!(a.attachment));
    config.insert("kind", json!(a.kind));
    config.insert("law", a.law.describe());
    config.insert("method", json!(a.method));
    config.insert("draws", json!(a.draws));
    config.insert(
        "plot_data",
        json!(a.plot_data.map(|x| x.display().to_string())),
    );
    config.insert("grid_points", json!(a.grid_points));

    let valuation = match (&a.law, a.method) {
        (Law::Ladder, Method::Auto | Method::Exhaustive) => {
            price_tranche_exhaustive(&p, &t, &DefaultLaw::Ladder(build_ladder(&p)))?
        }
        (Law::Ladder, Method::Mc) => price_tranche_mc_with(
            &p,
            &t,
            &LadderSampler::new(&build_ladder(&p)),
            a.draws,
            cli.seed,
        )?,
        (Law::Flat(r), m) => {
            AssetCorrelationSpec::flat(*r)?;
            flat_price(&p, &t, *r, m, a.draws, cli.seed)?
        }
        (Law::Matrix(_), Method::Exhaustive) => return Err(Error::InvalidArgument(
            "exhaustive pricing needs --ladder or --flat-rho; use --method mc with --corr-matrix"
                .into(),
        )),
        (Law::Matrix(path), _) => {
            let spec = AssetCorrelationSpec::full(read_matrix_path(path)?)?;
            price_tranche_mc(&p, &t, &spec, a.draws, cli.seed)?
        }
    };

    let plot = match a.plot_data {
        Some(path) => {
            if a.grid_points < 2 {
                return Err(Error::InvalidArgument(
                    "--grid-points must be at least 2".into(),
                ));
            }
            let last = a.grid_points - 1;
            let points = (0..=last)
                .map(|k| {
                    let rho = if k == last {
                        1.0
                    } else {
                        k as f64 / last as f64
                    };
                    flat_price(&p, &t, rho, a.method, a.draws, cli.seed).map(|v| (rho, v.value))
                })
                .collect::<Result<Vec<_>>>()?;
            Some((path.to_path_buf(), ["rho", "price"], points))
        }
        None => None,
    };

    let csv = format!(
        "value,stderr,method,draws,seed\n{},{},{},{},{}\n",
        valuation.value,
        valuation.stderr,
        to_value(&valuation.method)?.as_str().unwrap_or_default(),
        valuation.draws.map_or(String::new(), |d| d.to_string()),
        valuation.seed.map_or(String::new(), |s| s.to_string()),
    );
    let result = json!({
        "tranche": to_value(&t)?,
        "law": a.law.describe(),
        "valuation": to_value(&valuation)?,
        "expected_loss": p.expected_loss(),
    });
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot,
    })
}

fn field_rows(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                field_rows(x, &key, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                field_rows(x, &format!("{prefix}.{i}"), out);
            }
        }
        Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
        Value::Null => out.push_str(&format!("{prefix},\n")),
        other => out.push_str(&format!("{prefix},{other}\n")),
    }
}

fn imply(
    cli: &Cli,
    path: &Path,
    attachment: f64,
    market_price: f64,
    method: Method,
    draws: u64,
    stderr: &mut Vec<u8>,
) -> Result<Artifact> {
    let p = load_portfolio(path, stderr)?;
    let mut config = base_config(cli, "imply", path);
    config.insert("attachment", json!(attachment));
    config.insert("market_price", json!(market_price));
    config.insert("method", json!(method));
    config.insert("draws", json!(draws));
    let pricing = match method {
        Method::Auto => PricingConfig::Auto {
            draws,
            seed: cli.seed,
        },
        Method::Exhaustive => PricingConfig::Exhaustive,
        Method::Mc => PricingConfig::MonteCarlo {
            draws,
            seed: cli.seed,
        },
    };
    let report = breakdown_report(
        &p,
        &TrancheSpec::supersenior(attachment)?,
        market_price,
        pricing,
    )?;
    let result = to_value(&report)?;
    let mut csv = String::from("field,value\n");
    field_rows(&result, "", &mut csv);
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot: None,
    })
}

#[derive(Serialize)]
struct ArbReport<'a> {
    issued: bool,
    market_price: f64,
    break_even_price: f64,
    initial_value: f64,
    profit_floor: f64,
    decomposition: &'a corrbreak::arbitrage::AttachmentDecomposition,
    pivot_label: &'a str,
    cds_legs: &'a [corrbreak::arbitrage::CdsLeg],
    scenarios: u64,
    min_maturity_value: f64,
    worst_scenario: &'a str,
    max_maturity_value: f64,
    best_scenario: &'a str,
    nonnegative_at_maturity: bool,
    profitable_scenario_count: usize,
    profitable_scenarios: Vec<String>,
    profitable_scenarios_truncated: bool,
}

impl<'a> ArbReport<'a> {
    fn new(c: &'a ArbitrageCertificate) -> Self {
        let n = c.portfolio.portfolio().len();
        let listed = &c.maturity.profitable_scenarios;
        let d = &c.portfolio.decomposition;
        Self {
            issued: c.issued,
            market_price: c.market_price,
            break_even_price: c.break_even_price,
            initial_value: c.initial_value,
            profit_floor: c.profit_floor,
            decomposition: d,
            pivot_label: &c.portfolio.portfolio().name(d.pivot_index()).label,
            cds_legs: &c.portfolio.cds_legs,
            scenarios: c.maturity.scenarios,
            min_maturity_value: c.maturity.min_value,
            worst_scenario: &c.maturity.worst_scenario,
            max_maturity_value: c.maturity.max_value,
            best_scenario: &c.maturity.best_scenario,
            nonnegative_at_maturity: c.maturity.nonnegative,
            profitable_scenario_count: listed.len(),
            profitable_scenarios: listed
                .iter()
                .take(MAX_LISTED_SCENARIOS)
                .map(|&m| corrbreak::model::DefaultScenario::from_mask(m, n).to_string())
                .collect(),
            profitable_scenarios_truncated: listed.len() > MAX_LISTED_SCENARIOS,
        }
    }
}

fn arb(
    cli: &Cli,
    path: &Path,
    attachment: f64,
    market_price: f64,
    stress_lgd: bool,
    stderr: &mut Vec<u8>,
) -> Result<Artifact> {
    let p = load_portfolio(path, stderr)?;
    let mut config = base_config(cli, "arb", path);
    config.insert("attachment", json!(attachment));
    config.insert("market_price", json!(market_price));
    config.insert("stress_lgd", json!(stress_lgd));
    let cert = arbitrage_certificate(&p, attachment, market_price, stress_lgd)?;
    let result = to_value(&ArbReport::new(&cert))?;
    let mut csv = String::from("field,value\n");
    field_rows(&result, "", &mut csv);
    Ok(Artifact {
        config: json!(config),
        result,
        csv,
        plot: None,
    })
}
