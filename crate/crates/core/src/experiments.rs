//! Monte Carlo risk harness, the two baselines, and the bound-grid and
//! two-spike benchmark scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lower_bound, solve_m_tilde, upper_bound};
use crate::distributions::{DataDistribution, SizeDistribution, SizeKind, UserDataset};
use crate::mechanisms::{standard_laplace, PrivacyBudget};
use crate::protocol::{run_dame, DameOptions, DameParams, NoiseMode, ProtocolTranscript};
use crate::seeding::TrialSeed;
use crate::{Error, Result};

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dame,
    DuchiItem,
    KentHomogeneous,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dame, Algorithm::DuchiItem, Algorithm::KentHomogeneous];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dame => "dame",
            Algorithm::DuchiItem => "duchi_item",
            Algorithm::KentHomogeneous => "kent_homogeneous",
        }
    }
}

fn default_algorithm() -> Algorithm {
    Algorithm::Dame
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub size_dist: SizeDistribution,
    pub data_dist: DataDistribution,
    pub n: u64,
    pub alpha: f64,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Overrides the solved `m̃` for DAME.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_tilde: Option<u64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::new(self.alpha)?;
        self.data_dist.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        let min_n = if self.algorithm == Algorithm::DuchiItem { 1 } else { 2 };
        if self.n < min_n {
            return Err(Error::invalid(format!("{} needs n >= {min_n}", self.algorithm.name())));
        }
        if self.m_tilde == Some(0) {
            return Err(Error::invalid("m_tilde must be at least 1"));
        }
        Ok(())
    }

    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.alpha).expect("validated")
    }

    pub fn n_alpha_sq(&self) -> f64 {
        self.budget().n_alpha_sq(self.n)
    }

    /// `m̃` DAME runs with: the override if present, else the solver's.
    pub fn resolved_m_tilde(&self) -> Result<u64> {
        match self.m_tilde {
            Some(m) => Ok(m),
            None => Ok(solve_m_tilde(&self.size_dist, self.n_alpha_sq())?.m_tilde),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean_sq_error: f64,
    pub ci_half_width_99: f64,
    pub trials: u64,
}

impl RiskEstimate {
    /// Mean of the squared errors with a normal-approximation 99% CI
    /// half-width from their sample standard deviation.
    pub fn from_squared_errors(errors: &[f64]) -> Self {
        let t = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / t;
        let sd = if errors.len() > 1 {
            (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean_sq_error: mean,
            ci_half_width_99: Z_99 * sd / t.sqrt(),
            trials: errors.len() as u64,
        }
    }
}

/// Draws the users of one trial. The datasets depend only on the seed, so
/// all algorithms evaluated with the same seed see the same data.
pub fn draw_users(size: &SizeDistribution, data: &DataDistribution, n: u64, seed: TrialSeed) -> Vec<UserDataset> {
    (0..n)
        .map(|u| UserDataset::draw(size, data, &mut seed.data_rng(u)))
        .collect()
}

/// Item-level Laplace baseline: every user releases `X̄ + Lap(2/α)` and the
/// releases are averaged.
pub fn baseline_duchi(users: &[UserDataset], budget: PrivacyBudget, seed: TrialSeed, noise: NoiseMode) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::invalid("baseline needs at least one user"));
    }
    let scale = 2.0 / budget.alpha();
    let sum: f64 = users
        .iter()
        .enumerate()
        .map(|(u, d)| match noise {
            NoiseMode::Private => d.empirical_mean + scale * standard_laplace(&mut seed.user_rng(u as u64)),
            NoiseMode::NonPrivateSuppressed => d.empirical_mean,
        })
        .sum();
    Ok(sum / users.len() as f64)
}

/// Homogeneous baseline: every user keeps only `m_min = min_u m_u` samples
/// (a fresh mean of `m_min` draws from `μ`) and DAME runs with
/// `M = PointMass(m_min)`.
pub fn baseline_kent(
    users: &[UserDataset],
    data: &DataDistribution,
    budget: PrivacyBudget,
    seed: TrialSeed,
    options: DameOptions,
) -> Result<f64> {
    let m_min = users
        .iter()
        .map(|d| d.m)
        .min()
        .ok_or_else(|| Error::invalid("baseline needs at least one user"))?;
    let truncated: Vec<UserDataset> = users
        .iter()
        .enumerate()
        .map(|(u, d)| {
            if d.m == m_min {
                *d
            } else {
                let mean = data.sample_empirical_mean(m_min, &mut seed.resample_rng(u as u64));
                UserDataset { m: m_min, empirical_mean: mean }
            }
        })
        .collect();
    let size_dist = SizeDistribution::point_mass(m_min)?;
    let n_even = (users.len() - users.len() % 2) as u64;
    let m_tilde = solve_m_tilde(&size_dist, budget.n_alpha_sq(n_even))?.m_tilde;
    let params = DameParams { size_dist, budget, m_tilde };
    run_dame_users(&truncated, &params, seed, options)
}

fn run_dame_users(users: &[UserDataset], params: &DameParams, seed: TrialSeed, options: DameOptions) -> Result<f64> {
    Ok(run_dame(users, params, seed, options)?.final_estimate)
}

/// Final estimate of every trial, in trial order.
pub fn trial_estimates(s: &Scenario, options: DameOptions) -> Result<Vec<f64>> {
    s.validate()?;
    let budget = s.budget();
    let params = match s.algorithm {
        Algorithm::Dame => Some(DameParams {
            size_dist: s.size_dist.clone(),
            budget,
            m_tilde: s.resolved_m_tilde()?,
        }),
        _ => None,
    };
    (0..s.trials)
        .into_par_iter()
        .map(|t| {
            let seed = TrialSeed::new(s.seed, t);
            let users = draw_users(&s.size_dist, &s.data_dist, s.n, seed);
            match s.algorithm {
                Algorithm::Dame => run_dame_users(&users, params.as_ref().expect("dame params"), seed, options),
                Algorithm::DuchiItem => baseline_duchi(&users, budget, seed, options.noise),
                Algorithm::KentHomogeneous => baseline_kent(&users, &s.data_dist, budget, seed, options),
            }
        })
        .collect()
}

/// Full DAME transcript of one trial of a scenario.
pub fn dame_transcript(s: &Scenario, trial: u64, options: DameOptions) -> Result<ProtocolTranscript> {
    s.validate()?;
    if s.algorithm != Algorithm::Dame {
        return Err(Error::invalid("transcripts exist only for the dame algorithm"));
    }
    let params = DameParams {
        size_dist: s.size_dist.clone(),
        budget: s.budget(),
        m_tilde: s.resolved_m_tilde()?,
    };
    let seed = TrialSeed::new(s.seed, trial);
    let users = draw_users(&s.size_dist, &s.data_dist, s.n, seed);
    run_dame(&users, &params, seed, options)
}

/// Monte Carlo estimate of `E(θ̂ - θ)²` at the scenario's fixed `μ`.
pub fn estimate_risk(s: &Scenario, options: DameOptions) -> Result<RiskEstimate> {
    let theta = s.data_dist.true_mean();
    let errors: Vec<f64> = trial_estimates(s, options)?
        .into_iter()
        .map(|e| (e - theta).powi(2))
        .collect();
    Ok(RiskEstimate::from_squared_errors(&errors))
}

/// One line of a risk CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub algorithm: String,
    pub param_name: String,
    pub param_value: f64,
    pub n: u64,
    pub alpha: f64,
    pub trials: u64,
    pub mse: f64,
    pub ci99: f64,
}

impl RiskRow {
    pub fn new(s: &Scenario, param_name: &str, param_value: f64, r: RiskEstimate) -> Self {
        Self {
            algorithm: s.algorithm.name().to_string(),
            param_name: param_name.to_string(),
            param_value,
            n: s.n,
            alpha: s.alpha,
            trials: r.trials,
            mse: r.mean_sq_error,
            ci99: r.ci_half_width_99,
        }
    }
}

/// One line of a bounds CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub param: f64,
    pub n_alpha_sq: f64,
    pub m_tilde: u64,
    pub lower_bound: f64,
    pub lower_argmax_a: u64,
    pub upper_bound: f64,
}

pub fn bound_row(param: f64, dist: &SizeDistribution, n_alpha_sq: f64) -> Result<BoundRow> {
    let (lower, argmax) = lower_bound(dist, n_alpha_sq, None)?;
    let ub = upper_bound(dist, n_alpha_sq)?;
    Ok(BoundRow {
        param,
        n_alpha_sq,
        m_tilde: ub.m_tilde,
        lower_bound: lower,
        lower_argmax_a: argmax,
        upper_bound: ub.value,
    })
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    Uniform,
    Binomial,
}

impl Family {
    pub fn distribution(self, lambda: f64) -> Result<SizeDistribution> {
        match self {
            Family::Poisson => SizeDistribution::poisson(lambda),
            Family::Uniform => SizeDistribution::uniform_odd(lambda.round() as u64),
            Family::Binomial => SizeDistribution::binomial(lambda),
        }
    }
}

pub const FIGURE_S1_N_ALPHA_SQ: f64 = 500.0;
pub const FIGURE_S1_LAMBDA: (f64, f64) = (5.0, 500.0);
pub const FIGURE_S1_POINTS: usize = 100;

/// Bounds along a 100-point log grid of the family parameter in `[5, 500]`.
/// For the uniform family the parameter is rounded to an integer.
pub fn run_figure_s1(family: Family, n_alpha_sq: f64) -> Result<Vec<BoundRow>> {
    let (lo, hi) = FIGURE_S1_LAMBDA;
    log_grid(lo, hi, FIGURE_S1_POINTS)
        .into_par_iter()
        .map(|lambda| {
            let param = match family {
                Family::Uniform => lambda.round(),
                _ => lambda,
            };
            bound_row(param, &family.distribution(lambda)?, n_alpha_sq)
        })
        .collect()
}

/// Bounds for a fixed size law along a log grid of `nα²`.
pub fn run_n_alpha_sq_sweep(dist: &SizeDistribution, lo: f64, hi: f64, points: usize) -> Result<Vec<BoundRow>> {
    log_grid(lo, hi, points)
        .into_par_iter()
        .map(|x| bound_row(x, dist, x))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureS2Config {
    pub m1: u64,
    pub m2: u64,
    pub n: u64,
    pub alpha: f64,
    pub rho_points: usize,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Mean of the two-point data law.
    #[serde(default)]
    pub theta: f64,
}

impl FigureS2Config {
    pub fn desk() -> Self {
        Self {
            m1: 1_000,
            m2: 10_000,
            n: 10_000,
            alpha: 22.0 / 35.0,
            rho_points: 10,
            trials: 200,
            seed: 0,
            theta: 0.0,
        }
    }

    pub fn paper() -> Self {
        Self {
            m1: 100_000,
            m2: 1_000_000,
            ..Self::desk()
        }
    }

    pub fn rho_grid(&self) -> Vec<f64> {
        linear_grid(0.0, 1.0, self.rho_points)
    }

    pub fn scenario(&self, rho: f64, algorithm: Algorithm) -> Result<Scenario> {
        Ok(Scenario {
            size_dist: SizeDistribution::new(SizeKind::TwoSpike {
                m1: self.m1,
                m2: self.m2,
                rho,
            })?,
            data_dist: DataDistribution::TwoPoint { theta: self.theta },
            n: self.n,
            alpha: self.alpha,
            trials: self.trials,
            seed: self.seed,
            algorithm,
            m_tilde: None,
        })
    }
}

/// Risks of the three algorithms along the ρ grid. Every algorithm at a
/// given ρ sees the same datasets. `on_row` is called as rows complete.
pub fn run_figure_s2(cfg: &FigureS2Config, mut on_row: impl FnMut(&RiskRow)) -> Result<Vec<RiskRow>> {
    if cfg.rho_points == 0 {
        return Err(Error::invalid("rho_points must be at least 1"));
    }
    let mut rows = Vec::new();
    for rho in cfg.rho_grid() {
        for alg in Algorithm::ALL {
            let s = cfg.scenario(rho, alg)?;
            let risk = estimate_risk(&s, DameOptions::default())?;
            let row = RiskRow::new(&s, "rho", rho, risk);
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
