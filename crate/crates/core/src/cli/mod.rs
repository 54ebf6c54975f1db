//! Command-line front end.
//!
//! Every command resolves its arguments into a [`Config`], echoes it as the
//! first output line (`# {json}`), and writes CSV to stdout or, atomically,
//! to `--output`. `dame replay --config` re-runs an echoed config.

pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{iteration_budget, solve_m_tilde};
use crate::distributions::SizeDistribution;
use crate::experiments::{
    bound_row, dame_transcript, estimate_risk, linear_grid, log_grid, run_figure_s1, run_figure_s2,
    run_n_alpha_sq_sweep, BoundRow, Family, FigureS2Config, RiskRow, Scenario, FIGURE_S1_N_ALPHA_SQ,
};
use crate::mechanisms::{
    audit_laplace_privacy, audit_rr_privacy, empirical_laplace_privacy, empirical_rr_privacy, FlipProbability,
    PrivacyBudget,
};
use crate::protocol::{laplace_scale, DameOptions};
use crate::seeding::TrialSeed;
use crate::{Error, Result};
use output::{fmt_f64, render_csv, write_atomic, CsvRecord};

pub const SEED_ENV: &str = "DAME_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const DIST_HELP: &str = "Size law as JSON. Kinds and keys:
  {\"kind\":\"point_mass\",\"m\":M}
  {\"kind\":\"two_spike\",\"m1\":M1,\"m2\":M2,\"rho\":R}   M(m1)=1-R, M(m2)=R
  {\"kind\":\"zero_truncated_poisson\",\"lambda\":L}
  {\"kind\":\"uniform_odd\",\"lambda\":L}              uniform on 1..2L-1
  {\"kind\":\"truncated_binomial\",\"lambda\":L,\"trials\":T}   T defaults to 1000
Any kind also accepts \"tail_tolerance\" (default 1e-12).";

#[derive(Parser, Debug)]
#[command(name = "dame", version, about = "Mean estimation under user-level local differential privacy")]
pub struct Cli {
    /// Master seed (DAME_SEED overrides it).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Write the result here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    /// Also render a chart to this SVG file.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug)]
pub enum CliCommand {
    /// Solve for the effective maximum dataset size.
    Mtilde {
        #[arg(long, long_help = DIST_HELP)]
        dist: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        alpha: f64,
    },
    /// Lower and upper risk bounds, optionally along a parameter grid.
    Bounds {
        #[arg(long, long_help = DIST_HELP)]
        dist: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        alpha: f64,
        /// `param=lo:hi:steps`; param is n, alpha, n_alpha_sq or a key of --dist.
        #[arg(long)]
        grid: Option<String>,
        /// Space the grid logarithmically.
        #[arg(long)]
        log_grid: bool,
    },
    /// Monte Carlo risk of one scenario.
    Simulate {
        /// Scenario JSON, or @path to a file holding it.
        #[arg(long)]
        scenario: String,
        /// Write the protocol transcript of trial 0 (dame only) as JSON.
        #[arg(long)]
        dump_transcript: Option<PathBuf>,
    },
    /// Bound grids and the two-spike comparison.
    Benchmark {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        n_alpha_sq: Option<f64>,
    },
    /// Exact and empirical privacy loss of both randomizers.
    Audit {
        #[arg(long)]
        alpha: f64,
        /// Bin half-width used to set the Laplace scale 14 tau / alpha.
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, value_enum, default_value_t = AuditFormat::Text)]
        format: AuditFormat,
    },
    /// Re-run an echoed config: inline JSON, a `# {...}` line, or a file.
    Replay {
        #[arg(long)]
        config: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    FigureS2Desk,
    FigureS2Paper,
    FigureS1Poisson,
    FigureS1Uniform,
    FigureS1Binomial,
    /// Poisson(5) along nα² in [10, 1e6].
    FigureS1Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFormat {
    Text,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Mtilde,
    Bounds,
    Simulate,
    Benchmark,
    Audit,
}

/// Fully resolved run description; the echo line is this without
/// `output` and `svg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: CommandName,
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

impl Config {
    pub fn echo(&self) -> String {
        let bare = Config {
            output: None,
            svg: None,
            ..self.clone()
        };
        serde_json::to_string(&bare).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtildeParams {
    pub dist: SizeDistribution,
    pub n: u64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    #[serde(default)]
    pub log: bool,
}

impl GridSpec {
    /// Parses `param=lo:hi:steps`.
    pub fn parse(text: &str, log: bool) -> Result<Self> {
        let bad = || Error::invalid(format!("grid must look like param=lo:hi:steps, got {text:?}"));
        let (param, range) = text.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 || param.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            param: param.to_string(),
            lo: parts[0].trim().parse().map_err(|_| bad())?,
            hi: parts[1].trim().parse().map_err(|_| bad())?,
            steps: parts[2].trim().parse().map_err(|_| bad())?,
            log,
        })
    }

    fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 || !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::invalid("grid needs steps >= 1 and finite lo <= hi"));
        }
        if self.log {
            if self.lo <= 0.0 {
                return Err(Error::invalid("a log grid needs lo > 0"));
            }
            Ok(log_grid(self.lo, self.hi, self.steps))
        } else {
            Ok(linear_grid(self.lo, self.hi, self.steps))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsParams {
    pub dist: SizeDistribution,
    pub n: u64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_alpha_sq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditParams {
    pub alpha: f64,
    pub tau: f64,
    pub trials: u64,
    pub format: AuditFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtildeRow {
    pub n_alpha_sq: f64,
    pub m_tilde: u64,
    pub iterations: u32,
    pub iteration_budget: u64,
    pub search_limit: u64,
    pub psi_at_one: f64,
    pub psi_at_limit: f64,
    pub bracketed: bool,
}

impl CsvRecord for MtildeRow {
    const HEADER: &'static [&'static str] = &[
        "n_alpha_sq",
        "m_tilde",
        "iterations",
        "iteration_budget",
        "search_limit",
        "psi_at_one",
        "psi_at_limit",
        "bracketed",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.n_alpha_sq),
            self.m_tilde.to_string(),
            self.iterations.to_string(),
            self.iteration_budget.to_string(),
            self.search_limit.to_string(),
            fmt_f64(self.psi_at_one),
            fmt_f64(self.psi_at_limit),
            self.bracketed.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub mechanism: String,
    pub alpha: f64,
    pub exact_loss: f64,
    pub empirical_loss: f64,
    pub trials: u64,
}

impl CsvRecord for AuditRow {
    const HEADER: &'static [&'static str] = &["mechanism", "alpha", "exact_loss", "empirical_loss", "trials"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mechanism.clone(),
            fmt_f64(self.alpha),
            fmt_f64(self.exact_loss),
            fmt_f64(self.empirical_loss),
            self.trials.to_string(),
        ]
    }
}

/// What a run produced: the main document, an optional chart, and an
/// error to report after the outputs are written.
pub struct Rendered {
    pub text: String,
    pub svg: Option<String>,
    pub deferred_error: Option<Error>,
}

/// Side options that do not change the main output.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub quiet: bool,
    pub want_svg: bool,
    pub dump_transcript: Option<PathBuf>,
}

fn parse_json_arg(text: &str) -> Result<Value> {
    let body = match text.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)?,
        None => text.to_string(),
    };
    Ok(serde_json::from_str(&body)?)
}

fn parse_dist(text: &str) -> Result<SizeDistribution> {
    SizeDistribution::from_value(parse_json_arg(text)?)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned 64-bit integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("params serialize")
}

/// Turns parsed arguments into a resolved config. Seeds resolve as
/// `DAME_SEED`, then `--seed`, then the scenario's own seed, then 0.
pub fn resolve(cli: &Cli) -> Result<Config> {
    let flag_seed = env_seed()?.or(cli.seed);
    let (command, params, seed) = match &cli.command {
        CliCommand::Mtilde { dist, n, alpha } => {
            let p = MtildeParams {
                dist: parse_dist(dist)?,
                n: *n,
                alpha: *alpha,
            };
            (CommandName::Mtilde, to_value(&p), flag_seed.unwrap_or(0))
        }
        CliCommand::Bounds {
            dist,
            n,
            alpha,
            grid,
            log_grid,
        } => {
            let p = BoundsParams {
                dist: parse_dist(dist)?,
                n: *n,
                alpha: *alpha,
                grid: grid.as_deref().map(|g| GridSpec::parse(g, *log_grid)).transpose()?,
            };
            (CommandName::Bounds, to_value(&p), flag_seed.unwrap_or(0))
        }
        CliCommand::Simulate { scenario, .. } => {
            let mut s: Scenario = serde_json::from_value(parse_json_arg(scenario)?)?;
            if let Some(seed) = flag_seed {
                s.seed = seed;
            }
            (CommandName::Simulate, to_value(&s), s.seed)
        }
        CliCommand::Benchmark {
            preset,
            trials,
            n_alpha_sq,
        } => {
            let mut p = BenchmarkParams {
                preset: *preset,
                trials: *trials,
                n_alpha_sq: *n_alpha_sq,
            };
            match preset {
                Preset::FigureS2Desk | Preset::FigureS2Paper => {
                    p.trials = Some(trials.unwrap_or(FigureS2Config::desk().trials));
                }
                Preset::FigureS1Poisson | Preset::FigureS1Uniform | Preset::FigureS1Binomial => {
                    p.n_alpha_sq = Some(n_alpha_sq.unwrap_or(FIGURE_S1_N_ALPHA_SQ));
                }
                Preset::FigureS1Sweep => {}
            }
            (CommandName::Benchmark, to_value(&p), flag_seed.unwrap_or(0))
        }
        CliCommand::Audit {
            alpha,
            tau,
            trials,
            format,
        } => {
            let p = AuditParams {
                alpha: *alpha,
                tau: *tau,
                trials: *trials,
                format: *format,
            };
            (CommandName::Audit, to_value(&p), flag_seed.unwrap_or(0))
        }
        CliCommand::Replay { config } => {
            let mut c = parse_replay_config(config)?;
            if let Some(seed) = env_seed()? {
                c.seed = seed;
            }
            if c.command == CommandName::Simulate {
                if let Some(obj) = c.params.as_object_mut() {
                    obj.insert("seed".into(), Value::from(c.seed));
                }
            }
            if cli.output.is_some() {
                c.output = cli.output.clone();
            }
            if cli.svg.is_some() {
                c.svg = cli.svg.clone();
            }
            return Ok(c);
        }
    };
    Ok(Config {
        command,
        params,
        seed,
        output: cli.output.clone(),
        svg: cli.svg.clone(),
    })
}

/// Accepts inline JSON, an echoed `# {...}` line, or a path to a file whose
/// first `#` line (or whole content) is the config.
pub fn parse_replay_config(text: &str) -> Result<Config> {
    let trimmed = text.trim();
    let json = if trimmed.starts_with('{') {
        trimmed.to_string()
    } else if let Some(rest) = trimmed.strip_prefix('#') {
        rest.trim().to_string()
    } else {
        let body = std::fs::read_to_string(trimmed)?;
        match body.lines().find(|l| l.starts_with('#')) {
            Some(line) => line.trim_start_matches('#').trim().to_string(),
            None => body,
        }
    };
    Ok(serde_json::from_str(&json)?)
}

fn budget_and_x(n: u64, alpha: f64) -> Result<(PrivacyBudget, f64)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let b = PrivacyBudget::new(alpha)?;
    Ok((b, b.n_alpha_sq(n)))
}

fn bounds_chart(title: &str, x_label: &str, rows: &[BoundRow], log_x: bool) -> svg::Chart {
    svg::Chart {
        title: title.to_string(),
        x_label: x_label.to_string(),
        y_label: "risk bound".into(),
        log_x,
        log_y: true,
        series: vec![
            svg::Series {
                name: "lower".into(),
                points: rows.iter().map(|r| (r.param, r.lower_bound)).collect(),
            },
            svg::Series {
                name: "upper".into(),
                points: rows.iter().map(|r| (r.param, r.upper_bound)).collect(),
            },
        ],
    }
}

fn risk_chart(title: &str, rows: &[RiskRow]) -> svg::Chart {
    let mut series: Vec<svg::Series> = Vec::new();
    for r in rows {
        match series.iter_mut().find(|s| s.name == r.algorithm) {
            Some(s) => s.points.push((r.param_value, r.mse)),
            None => series.push(svg::Series {
                name: r.algorithm.clone(),
                points: vec![(r.param_value, r.mse)],
            }),
        }
    }
    svg::Chart {
        title: title.to_string(),
        x_label: rows.first().map(|r| r.param_name.clone()).unwrap_or_default(),
        y_label: "mean squared error".into(),
        log_x: false,
        log_y: true,
        series,
    }
}

/// Replaces one key of the size-law JSON, keeping integer keys integral.
fn dist_with(dist: &SizeDistribution, key: &str, v: f64) -> Result<SizeDistribution> {
    let mut value = dist.to_value();
    let obj = value.as_object_mut().expect("size laws serialize to objects");
    let current = obj
        .get(key)
        .ok_or_else(|| Error::invalid(format!("grid parameter {key:?} is not a key of the size law")))?;
    let new = if current.is_u64() {
        if v < 0.0 {
            return Err(Error::invalid(format!("{key} must be non-negative")));
        }
        Value::from(v.round() as u64)
    } else {
        Value::from(v)
    };
    obj.insert(key.to_string(), new);
    SizeDistribution::from_value(value)
}

fn run_bounds(p: &BoundsParams, opts: &RunOptions) -> Result<(Vec<BoundRow>, Option<svg::Chart>)> {
    let (_, x) = budget_and_x(p.n, p.alpha)?;
    let Some(grid) = &p.grid else {
        return Ok((vec![bound_row(x, &p.dist, x)?], None));
    };
    let rows = grid
        .values()?
        .into_par_iter()
        .map(|v| match grid.param.as_str() {
            "n_alpha_sq" => {
                if v <= 0.0 {
                    return Err(Error::invalid("n_alpha_sq must be positive"));
                }
                bound_row(v, &p.dist, v)
            }
            "n" => {
                let (_, x) = budget_and_x(v.round() as u64, p.alpha)?;
                bound_row(v.round(), &p.dist, x)
            }
            "alpha" => {
                let (_, x) = budget_and_x(p.n, v)?;
                bound_row(v, &p.dist, x)
            }
            key => bound_row(v, &dist_with(&p.dist, key, v)?, x),
        })
        .collect::<Result<Vec<_>>>()?;
    let chart = opts
        .want_svg
        .then(|| bounds_chart("risk bounds", &grid.param, &rows, grid.log));
    Ok((rows, chart))
}

fn run_audit(p: &AuditParams, seed: u64) -> Result<Vec<AuditRow>> {
    let budget = PrivacyBudget::new(p.alpha)?;
    if !(p.tau > 0.0 && p.tau.is_finite()) {
        return Err(Error::invalid("tau must be positive"));
    }
    if p.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let pi = FlipProbability::for_budget(budget);
    let scale = laplace_scale(p.tau, budget);
    let sensitivity = 14.0 * p.tau;
    let ts = TrialSeed::new(seed, 0);
    Ok(vec![
        AuditRow {
            mechanism: "randomized_response".into(),
            alpha: p.alpha,
            exact_loss: audit_rr_privacy(pi),
            empirical_loss: empirical_rr_privacy(pi, p.trials, &mut ts.aux_rng(0)),
            trials: p.trials,
        },
        AuditRow {
            mechanism: "laplace".into(),
            alpha: p.alpha,
            exact_loss: audit_laplace_privacy(scale, sensitivity)?,
            empirical_loss: empirical_laplace_privacy(scale, sensitivity, p.trials, &mut ts.aux_rng(1))?,
            trials: p.trials,
        },
    ])
}

fn render_audit_text(echo: &str, rows: &[AuditRow]) -> String {
    let mut out = format!("# {echo}\n");
    out.push_str(&format!(
        "{:<22}{:<26}{:<26}{:<26}{}\n",
        "mechanism", "alpha", "exact_loss", "empirical_loss", "trials"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<22}{:<26}{:<26}{:<26}{}\n",
            r.mechanism,
            fmt_f64(r.alpha),
            fmt_f64(r.exact_loss),
            fmt_f64(r.empirical_loss),
            r.trials
        ));
    }
    out
}

fn progress(opts: &RunOptions, msg: &str) {
    if !opts.quiet {
        eprintln!("{msg}");
    }
}

/// Runs a resolved config.
pub fn execute(config: &Config, opts: &RunOptions) -> Result<Rendered> {
    let echo = config.echo();
    let params = config.params.clone();
    let mut deferred_error = None;
    let (text, chart) = match config.command {
        CommandName::Mtilde => {
            let p: MtildeParams = serde_json::from_value(params)?;
            let (_, x) = budget_and_x(p.n, p.alpha)?;
            let sol = solve_m_tilde(&p.dist, x)?;
            if !sol.bracketed {
                deferred_error = Some(Error::Numeric(format!(
                    "psi({}) = {} >= 0: the search interval does not bracket the root",
                    sol.search_limit, sol.psi_at_limit
                )));
            }
            let row = MtildeRow {
                n_alpha_sq: x,
                m_tilde: sol.m_tilde,
                iterations: sol.iterations,
                iteration_budget: iteration_budget(x),
                search_limit: sol.search_limit,
                psi_at_one: sol.psi_at_one,
                psi_at_limit: sol.psi_at_limit,
                bracketed: sol.bracketed,
            };
            (render_csv(&echo, &[row])?, None)
        }
        CommandName::Bounds => {
            let p: BoundsParams = serde_json::from_value(params)?;
            let (rows, chart) = run_bounds(&p, opts)?;
            (render_csv(&echo, &rows)?, chart)
        }
        CommandName::Simulate => {
            let mut s: Scenario = serde_json::from_value(params)?;
            s.seed = config.seed;
            s.validate()?;
            if let Some(path) = &opts.dump_transcript {
                let t = dame_transcript(&s, 0, DameOptions::default())?;
                write_atomic(path, serde_json::to_string_pretty(&t)?.as_bytes())?;
            }
            let risk = estimate_risk(&s, DameOptions::default())?;
            let rows = vec![RiskRow::new(&s, "none", 0.0, risk)];
            let chart = opts.want_svg.then(|| risk_chart("simulated risk", &rows));
            (render_csv(&echo, &rows)?, chart)
        }
        CommandName::Benchmark => {
            let p: BenchmarkParams = serde_json::from_value(params)?;
            match p.preset {
                Preset::FigureS2Desk | Preset::FigureS2Paper => {
                    let base = if p.preset == Preset::FigureS2Desk {
                        FigureS2Config::desk()
                    } else {
                        FigureS2Config::paper()
                    };
                    let cfg = FigureS2Config {
                        trials: p.trials.unwrap_or(base.trials),
                        seed: config.seed,
                        ..base
                    };
                    let rows = run_figure_s2(&cfg, |r| {
                        progress(
                            opts,
                            &format!("rho={:.4} {} mse={:.4e}", r.param_value, r.algorithm, r.mse),
                        )
                    })?;
                    let chart = opts.want_svg.then(|| risk_chart("two-spike risk", &rows));
                    (render_csv(&echo, &rows)?, chart)
                }
                Preset::FigureS1Sweep => {
                    let dist = SizeDistribution::poisson(5.0)?;
                    let rows = run_n_alpha_sq_sweep(&dist, 10.0, 1e6, 100)?;
                    let chart = opts
                        .want_svg
                        .then(|| bounds_chart("Poisson(5) bounds", "n alpha^2", &rows, true));
                    (render_csv(&echo, &rows)?, chart)
                }
                family => {
                    let family = match family {
                        Preset::FigureS1Poisson => Family::Poisson,
                        Preset::FigureS1Uniform => Family::Uniform,
                        _ => Family::Binomial,
                    };
                    let x = p.n_alpha_sq.unwrap_or(FIGURE_S1_N_ALPHA_SQ);
                    if !(x > 0.0 && x.is_finite()) {
                        return Err(Error::invalid("n_alpha_sq must be positive"));
                    }
                    let rows = run_figure_s1(family, x)?;
                    let chart = opts
                        .want_svg
                        .then(|| bounds_chart("risk bounds", "lambda", &rows, true));
                    (render_csv(&echo, &rows)?, chart)
                }
            }
        }
        CommandName::Audit => {
            let p: AuditParams = serde_json::from_value(params)?;
            let rows = run_audit(&p, config.seed)?;
            let text = match p.format {
                AuditFormat::Text => render_audit_text(&echo, &rows),
                AuditFormat::Csv => render_csv(&echo, &rows)?,
            };
            (text, None)
        }
    };
    if opts.want_svg && chart.is_none() {
        return Err(Error::invalid("--svg is not available for this command"));
    }
    Ok(Rendered {
        text,
        svg: chart.map(|c| svg::render(&c)),
        deferred_error,
    })
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Json(_) => EXIT_VALIDATION,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn report(e: &Error) -> i32 {
    let kind = match e {
        Error::InvalidParameter(_) | Error::Json(_) => "validation",
        Error::Numeric(_) => "numeric",
        Error::Io(_) | Error::Csv(_) => "io",
    };
    eprintln!("{}", error_json(kind, &e.to_string()));
    exit_code(e)
}

fn emit(rendered: &Rendered, config: &Config) -> Result<()> {
    match &config.output {
        Some(path) => write_atomic(path, rendered.text.as_bytes())?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(rendered.text.as_bytes())?;
            out.flush()?;
        }
    }
    if let (Some(path), Some(svg)) = (&config.svg, &rendered.svg) {
        write_atomic(Path::new(path), svg.as_bytes())?;
    }
    Ok(())
}

fn run_cli(cli: Cli) -> Result<Option<Error>> {
    let config = resolve(&cli)?;
    let opts = RunOptions {
        quiet: cli.quiet,
        want_svg: config.svg.is_some(),
        dump_transcript: match &cli.command {
            CliCommand::Simulate { dump_transcript, .. } => dump_transcript.clone(),
            _ => None,
        },
    };
    let rendered = match cli.threads {
        Some(0) => return Err(Error::invalid("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| execute(&config, &opts))?,
        None => execute(&config, &opts)?,
    };
    emit(&rendered, &config)?;
    Ok(rendered.deferred_error)
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Errors go to stderr as one line of JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return EXIT_VALIDATION;
        }
    };
    match run_cli(cli) {
        Ok(None) => EXIT_OK,
        Ok(Some(e)) | Err(e) => report(&e),
    }
}
