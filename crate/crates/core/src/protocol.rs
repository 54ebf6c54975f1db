//! The two-phase DAME protocol.
//!
//! Users in the first half of the population vote, through randomized
//! response, for the bin of a `2τ` grid that holds their empirical mean or
//! one of its neighbours. The statistician elects the most voted bin `ĵ`.
//! Users in the second half shrink their empirical mean toward the bin
//! midpoint (users with fewer than `m̃` samples only), project onto the
//! enlarged interval `[L, U]` and add Laplace noise of scale `14τ/α`. The
//! statistician averages the releases and removes the shrinkage bias.
//!
//! [`LocalUser`] is the only type that sees a raw [`UserDataset`];
//! [`Statistician`] consumes [`VoteVector`]s and real-valued releases.
//!
//! Bin indices are zero-based throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{SizeDistribution, UserDataset};
use crate::mechanisms::{randomized_response, standard_laplace, FlipProbability, PrivacyBudget};
use crate::seeding::{TrialSeed, UserRng};
use crate::{Error, Result};

/// Half-width of the localisation bins:
/// `sqrt(2 ln(8 max(sqrt(m̃ n α²), 1)) / m̃)`.
pub fn compute_tau(m_tilde: u64, n: u64, budget: PrivacyBudget) -> f64 {
    let m = m_tilde as f64;
    let inner = (m * budget.n_alpha_sq(n)).sqrt().max(1.0);
    (2.0 * (8.0 * inner).ln() / m).sqrt()
}

/// Partition of `[-1, 1]` into `⌈1/τ⌉` bins `[-1 + 2τj, -1 + 2τ(j+1))`, the
/// last one closed at `+1` and possibly narrower than `2τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    tau: f64,
    bin_count: usize,
}

impl BinPartition {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        let bin_count = if tau >= 1.0 { 1 } else { (1.0 / tau).ceil() as usize };
        Ok(Self { tau, bin_count })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn lower(&self, j: usize) -> f64 {
        if j == 0 {
            -1.0
        } else {
            -1.0 + 2.0 * self.tau * j as f64
        }
    }

    pub fn upper(&self, j: usize) -> f64 {
        if j + 1 >= self.bin_count {
            1.0
        } else {
            self.lower(j + 1)
        }
    }

    /// Index of the bin containing `x`; values outside `[-1, 1]` go to the
    /// nearest end bin.
    pub fn bin_of(&self, x: f64) -> usize {
        if x.is_nan() || x <= -1.0 {
            return 0;
        }
        let mut j = (((x + 1.0) / (2.0 * self.tau)).floor() as usize).min(self.bin_count - 1);
        // float guard at bin borders
        while j > 0 && x < self.lower(j) {
            j -= 1;
        }
        while j + 1 < self.bin_count && x >= self.lower(j + 1) {
            j += 1;
        }
        j
    }
}

/// Binary vote vector, one coordinate per bin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoteVector(pub Vec<bool>);

impl VoteVector {
    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Elected bin with its enlarged projection interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateBin {
    pub j_hat: usize,
    /// `max(lower(ĵ) - 6τ, -1)`
    pub lower_limit: f64,
    /// `min(upper(ĵ) + 6τ, 1)`
    pub upper_limit: f64,
    /// Midpoint `s` of the elected bin.
    pub midpoint: f64,
}

impl CandidateBin {
    pub fn for_bin(part: &BinPartition, j: usize) -> Result<Self> {
        if j >= part.bin_count() {
            return Err(Error::invalid(format!(
                "bin {j} out of range for {} bins",
                part.bin_count()
            )));
        }
        let (l, u) = (part.lower(j), part.upper(j));
        let tau = part.tau();
        Ok(Self {
            j_hat: j,
            lower_limit: (l - 6.0 * tau).max(-1.0),
            upper_limit: (u + 6.0 * tau).min(1.0),
            midpoint: 0.5 * (l + u),
        })
    }

    pub fn width(&self) -> f64 {
        self.upper_limit - self.lower_limit
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lower_limit, self.upper_limit)
    }
}

/// Raw (pre-randomization) vote: ones at the bin holding the empirical mean
/// and its in-range neighbours; all zero when `m < m̃`.
pub fn localisation_vote(user: &UserDataset, part: &BinPartition, m_tilde: u64) -> VoteVector {
    let mut votes = vec![false; part.bin_count()];
    if user.m >= m_tilde {
        let j = part.bin_of(user.empirical_mean);
        let from = j.saturating_sub(1);
        let to = (j + 1).min(part.bin_count() - 1);
        votes[from..=to].iter_mut().for_each(|v| *v = true);
    }
    VoteVector(votes)
}

/// Column-sum argmax over privatized votes, ties to the lowest index.
pub fn elect_candidate(votes: &[VoteVector], part: &BinPartition) -> Result<CandidateBin> {
    if votes.is_empty() {
        return Err(Error::invalid("cannot elect a bin from an empty vote list"));
    }
    let mut totals = vec![0u64; part.bin_count()];
    for v in votes {
        if v.len() != part.bin_count() {
            return Err(Error::invalid(format!(
                "vote vector of length {} for {} bins",
                v.len(),
                part.bin_count()
            )));
        }
        for (t, &b) in totals.iter_mut().zip(&v.0) {
            *t += b as u64;
        }
    }
    let mut best = 0;
    for (j, &t) in totals.iter().enumerate() {
        if t > totals[best] {
            best = j;
        }
    }
    CandidateBin::for_bin(part, best)
}

/// `sqrt(m∧m̃)/sqrt(m̃) * (X̄ + (sqrt(m̃)/sqrt(m∧m̃) - 1) s)`.
pub fn shrink_estimate(user: &UserDataset, cand: &CandidateBin, m_tilde: u64) -> f64 {
    if user.m >= m_tilde {
        return user.empirical_mean;
    }
    let factor = (user.m as f64 / m_tilde as f64).sqrt();
    factor * user.empirical_mean + (1.0 - factor) * cand.midpoint
}

/// Whether randomizers are active. [`NoiseMode::NonPrivateSuppressed`]
/// disables both randomized response and Laplace noise and exists only for
/// deterministic pipeline checks; outputs produced with it are not private.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    #[default]
    Private,
    NonPrivateSuppressed,
}

pub fn laplace_scale(tau: f64, budget: PrivacyBudget) -> f64 {
    14.0 * tau / budget.alpha()
}

/// Projection onto `[L, U]` plus `Lap(14τ/α)`.
pub fn noisy_release<R: Rng + ?Sized>(
    shrunk: f64,
    cand: &CandidateBin,
    tau: f64,
    budget: PrivacyBudget,
    mode: NoiseMode,
    rng: &mut R,
) -> f64 {
    let projected = cand.project(shrunk);
    match mode {
        NoiseMode::Private => projected + laplace_scale(tau, budget) * standard_laplace(rng),
        NoiseMode::NonPrivateSuppressed => projected,
    }
}

/// `(θ̄ sqrt(m̃) - gap(m̃) s) / E[sqrt(m∧m̃)]`.
pub fn debias(mean_of_releases: f64, cand: &CandidateBin, dist: &SizeDistribution, m_tilde: u64) -> f64 {
    let root = (m_tilde as f64).sqrt();
    (mean_of_releases * root - dist.debias_gap_sum(m_tilde) * cand.midpoint)
        / dist.sqrt_moment_capped(m_tilde)
}

/// Public parameters shared by users and statistician.
#[derive(Clone, Debug)]
pub struct DameParams {
    pub size_dist: SizeDistribution,
    pub budget: PrivacyBudget,
    pub m_tilde: u64,
}

/// Overrides for test harnesses. The default is the private protocol.
#[derive(Clone, Copy, Debug, Default)]
pub struct DameOptions {
    pub noise: NoiseMode,
    /// Replace the elected bin by this one (forced-success analysis).
    pub forced_bin: Option<usize>,
}

/// Per-round context broadcast to users.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext {
    pub part: BinPartition,
    pub m_tilde: u64,
    pub budget: PrivacyBudget,
    pub noise: NoiseMode,
}

/// A user holding its local statistic and its private random stream.
pub struct LocalUser {
    data: UserDataset,
    rng: UserRng,
}

impl LocalUser {
    pub fn new(data: UserDataset, rng: UserRng) -> Self {
        Self { data, rng }
    }

    pub fn localisation_message(&mut self, ctx: &RoundContext) -> VoteVector {
        let raw = localisation_vote(&self.data, &ctx.part, ctx.m_tilde);
        match ctx.noise {
            NoiseMode::NonPrivateSuppressed => raw,
            NoiseMode::Private => {
                let pi = FlipProbability::for_budget(ctx.budget);
                VoteVector(randomized_response(&raw.0, pi, &mut self.rng).expect("votes are at most 3-hot"))
            }
        }
    }

    pub fn estimation_message(&mut self, ctx: &RoundContext, cand: &CandidateBin) -> f64 {
        let shrunk = shrink_estimate(&self.data, cand, ctx.m_tilde);
        noisy_release(shrunk, cand, ctx.part.tau(), ctx.budget, ctx.noise, &mut self.rng)
    }
}

/// Aggregator side: sees only privatized votes and noisy releases.
pub struct Statistician<'a> {
    params: &'a DameParams,
    part: BinPartition,
}

impl<'a> Statistician<'a> {
    pub fn new(params: &'a DameParams, part: BinPartition) -> Self {
        Self { params, part }
    }

    pub fn elect(&self, votes: &[VoteVector]) -> Result<CandidateBin> {
        elect_candidate(votes, &self.part)
    }

    pub fn estimate(&self, releases: &[f64], cand: &CandidateBin) -> Result<f64> {
        if releases.is_empty() {
            return Err(Error::invalid("no releases to aggregate"));
        }
        let mean = releases.iter().sum::<f64>() / releases.len() as f64;
        Ok(debias(mean, cand, &self.params.size_dist, self.params.m_tilde))
    }
}

/// Everything the statistician observes in one execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub tau: f64,
    pub m_tilde: u64,
    pub bin_count: usize,
    pub privatized_votes: Vec<VoteVector>,
    pub noisy_estimates: Vec<f64>,
    pub candidate: CandidateBin,
    pub final_estimate: f64,
}

/// Runs the protocol on fixed datasets; user `u` randomizes with the stream
/// `seed.user_rng(u)`.
pub fn run_dame(
    users: &[UserDataset],
    params: &DameParams,
    seed: TrialSeed,
    options: DameOptions,
) -> Result<ProtocolTranscript> {
    let locals = users
        .iter()
        .enumerate()
        .map(|(u, &d)| LocalUser::new(d, seed.user_rng(u as u64)))
        .collect();
    run_dame_with(locals, params, options)
}

/// Runs the protocol over users that already own their random streams.
/// With an odd population the last user is dropped.
pub fn run_dame_with(
    mut users: Vec<LocalUser>,
    params: &DameParams,
    options: DameOptions,
) -> Result<ProtocolTranscript> {
    if users.len() < 2 {
        return Err(Error::invalid(format!("DAME needs at least 2 users, got {}", users.len())));
    }
    if params.m_tilde == 0 {
        return Err(Error::invalid("m_tilde must be at least 1"));
    }
    users.truncate(users.len() - users.len() % 2);
    let n = users.len() as u64;
    let half = users.len() / 2;

    let tau = compute_tau(params.m_tilde, n, params.budget);
    let part = BinPartition::new(tau)?;
    let ctx = RoundContext {
        part,
        m_tilde: params.m_tilde,
        budget: params.budget,
        noise: options.noise,
    };
    let statistician = Statistician::new(params, part);

    let (voters, estimators) = users.split_at_mut(half);
    let votes: Vec<VoteVector> = voters.iter_mut().map(|u| u.localisation_message(&ctx)).collect();
    let candidate = match options.forced_bin {
        Some(j) => CandidateBin::for_bin(&part, j)?,
        None => statistician.elect(&votes)?,
    };
    let releases: Vec<f64> = estimators
        .iter_mut()
        .map(|u| u.estimation_message(&ctx, &candidate))
        .collect();
    let final_estimate = statistician.estimate(&releases, &candidate)?;

    Ok(ProtocolTranscript {
        tau,
        m_tilde: params.m_tilde,
        bin_count: part.bin_count(),
        privatized_votes: votes,
        noisy_estimates: releases,
        candidate,
        final_estimate,
    })
}
