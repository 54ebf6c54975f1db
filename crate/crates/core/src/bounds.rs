//! Minimax risk bounds for user-level LDP mean estimation with a known size
//! law, and the solver for the effective maximum dataset size `m̃`.
//!
//! Everything here depends on `(n, α)` only through `n α²`, so the
//! functions take that product directly.

use serde::{Deserialize, Serialize};

use crate::distributions::{SizeDistribution, Tail};
use crate::{Error, Result};

/// Fixed constants of the lower (`c1`, `c2`) and upper (`c3`, `c4`, `c5`)
/// bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

pub const CONSTANTS: BoundConstants = BoundConstants {
    c1: 7.713_112_755_417_473e-6, // e^-9 / 16
    c2: 24.0,
    c3: 1570.0,
    c4: 8.0,
    c5: 868.5, // 579 * 3 / 2
};

/// Trivial risk cap: both the estimate and the mean live in `[-1, 1]`.
pub const RISK_CAP: f64 = 4.0;

/// Largest search limit for the `m̃` binary search.
pub const SEARCH_LIMIT_CAP: u64 = 1 << 31;

fn check_n_alpha_sq(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("n alpha^2 must be positive and finite, got {x}")))
    }
}

/// `c5 / (nα²) · ln[c4 (a nα² ∨ 1) / ln(c4 (a nα² ∨ 1))]`.
pub fn phi(a: u64, n_alpha_sq: f64) -> f64 {
    let inner = CONSTANTS.c4 * (a as f64 * n_alpha_sq).max(1.0);
    CONSTANTS.c5 / n_alpha_sq * (inner / inner.ln()).ln()
}

/// `P(m >= a)² - (φ(a) ∧ 1)`; `m̃` is the largest `a` where this is `>= 0`.
pub fn psi(dist: &SizeDistribution, a: u64, n_alpha_sq: f64) -> f64 {
    let s = dist.survival(a, Tail::AtLeast);
    s * s - phi(a, n_alpha_sq).min(1.0)
}

/// `min(⌈exp(nα²)⌉, 2³¹)`, the right end of the `m̃` search interval.
pub fn search_limit(n_alpha_sq: f64) -> u64 {
    let e = n_alpha_sq.exp();
    if e >= SEARCH_LIMIT_CAP as f64 {
        SEARCH_LIMIT_CAP
    } else {
        (e.ceil() as u64).max(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MTildeSolution {
    pub m_tilde: u64,
    /// Number of bisection steps (ψ evaluations strictly inside the bracket).
    pub iterations: u32,
    pub search_limit: u64,
    pub psi_at_one: f64,
    pub psi_at_limit: f64,
    /// `false` when `ψ(search_limit) >= 0`, in which case `m̃` is the limit.
    pub bracketed: bool,
}

/// Binary search for the largest `a ∈ [1, search_limit]` with `ψ(a) >= 0`.
///
/// `φ` is non-decreasing in `a` (since `c4 >= e`) and the survival function
/// is non-increasing, so `ψ` is non-increasing and bisection is exact.
pub fn solve_m_tilde(dist: &SizeDistribution, n_alpha_sq: f64) -> Result<MTildeSolution> {
    check_n_alpha_sq(n_alpha_sq)?;
    let limit = search_limit(n_alpha_sq);
    let psi_at_one = psi(dist, 1, n_alpha_sq);
    let psi_at_limit = psi(dist, limit, n_alpha_sq);
    if psi_at_one < 0.0 {
        return Err(Error::Numeric(format!("psi(1) = {psi_at_one} < 0")));
    }
    if psi_at_limit >= 0.0 {
        return Ok(MTildeSolution {
            m_tilde: limit,
            iterations: 0,
            search_limit: limit,
            psi_at_one,
            psi_at_limit,
            bracketed: false,
        });
    }
    let (mut lo, mut hi) = (1u64, limit);
    let mut iterations = 0;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        iterations += 1;
        if psi(dist, mid, n_alpha_sq) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MTildeSolution {
        m_tilde: lo,
        iterations,
        search_limit: limit,
        psi_at_one,
        psi_at_limit,
        bracketed: true,
    })
}

/// Iteration budget `2⌈nα²⌉`.
pub fn iteration_budget(n_alpha_sq: f64) -> u64 {
    2 * n_alpha_sq.ceil() as u64
}

/// One term of the lower bound:
/// `c1 exp(-c2 nα² P(m > a)²) / (nα² E[sqrt(m) 1{m <= a}]² ∨ 1)`.
pub fn lower_bound_term(dist: &SizeDistribution, a: u64, n_alpha_sq: f64) -> f64 {
    let tail = dist.survival(a, Tail::Above);
    let below = dist.sqrt_moment_below(a);
    CONSTANTS.c1 * (-CONSTANTS.c2 * n_alpha_sq * tail * tail).exp()
        / (n_alpha_sq * below * below).max(1.0)
}

/// Maximum of [`lower_bound_term`] over `a ∈ {0, ..., a_max}` with its
/// smallest maximizer. Without `a_max` the scan runs past the last support
/// atom, which realizes the `a → ∞` limit.
///
/// The term is constant between consecutive atoms, so only `0` and the
/// atoms themselves are evaluated.
pub fn lower_bound(dist: &SizeDistribution, n_alpha_sq: f64, a_max: Option<u64>) -> Result<(f64, u64)> {
    check_n_alpha_sq(n_alpha_sq)?;
    let a_max = a_max.unwrap_or(u64::MAX);
    let mut best = (lower_bound_term(dist, 0, n_alpha_sq), 0);
    for (a, _) in dist.atoms().take_while(|&(a, _)| a <= a_max) {
        let v = lower_bound_term(dist, a, n_alpha_sq);
        if v > best.0 {
            best = (v, a);
        }
    }
    Ok(best)
}

/// Upper-bound expression at a given `m̃`, without the cap at 4.
pub fn upper_bound_at(dist: &SizeDistribution, n_alpha_sq: f64, m_tilde: u64) -> f64 {
    let m = m_tilde as f64;
    let moment = dist.sqrt_moment_capped(m_tilde);
    CONSTANTS.c3 * (CONSTANTS.c4 * (m * n_alpha_sq).sqrt().max(1.0)).ln() / (n_alpha_sq * moment * moment)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    pub uncapped: f64,
    pub m_tilde: u64,
}

/// Risk guarantee of DAME run with the solved `m̃`, capped at 4.
pub fn upper_bound(dist: &SizeDistribution, n_alpha_sq: f64) -> Result<UpperBound> {
    let m_tilde = solve_m_tilde(dist, n_alpha_sq)?.m_tilde;
    let uncapped = upper_bound_at(dist, n_alpha_sq, m_tilde);
    Ok(UpperBound {
        value: uncapped.min(RISK_CAP),
        uncapped,
        m_tilde,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBounds {
    pub n_alpha_sq: f64,
    pub m_tilde: u64,
    pub lower: f64,
    pub lower_argmax_a: u64,
    pub upper: f64,
}

pub fn risk_bounds(dist: &SizeDistribution, n_alpha_sq: f64) -> Result<RiskBounds> {
    let (lower, lower_argmax_a) = lower_bound(dist, n_alpha_sq, None)?;
    let ub = upper_bound(dist, n_alpha_sq)?;
    Ok(RiskBounds {
        n_alpha_sq,
        m_tilde: ub.m_tilde,
        lower,
        lower_argmax_a,
        upper: ub.value,
    })
}

/// Regimes of the two-spike law `M(1) = 1 - ρ`, `M(m) = ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum ToyRegime {
    /// `ρ² < φ(2)`: only item-level information is usable.
    ItemLevel,
    /// `φ(a) <= ρ² < φ(a + 1)` for some `2 <= a < m`.
    Intermediate { a: u64 },
    /// `ρ² >= φ(m)`: every sample of the large users counts.
    FullUserLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyBound {
    #[serde(flatten)]
    pub regime: ToyRegime,
    pub bound: f64,
}

/// Classifies `(ρ, m)` and evaluates the matching two-spike rate with the
/// explicit constants.
pub fn toy_regimes(rho: f64, m: u64, n_alpha_sq: f64) -> Result<ToyBound> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    if m < 2 {
        return Err(Error::invalid("the large spike must sit at m >= 2"));
    }
    if !(n_alpha_sq >= 1.0 && n_alpha_sq.is_finite()) {
        return Err(Error::invalid(format!(
            "two-spike rates assume n alpha^2 >= 1 (got {n_alpha_sq}); the trivial bound 4 applies"
        )));
    }
    let c = CONSTANTS;
    let x = n_alpha_sq;
    let r2 = rho * rho;
    let rate = |a: u64| {
        let mix = (1.0 - rho) + rho * (a as f64).sqrt();
        c.c3 * (c.c4 * (a as f64 * x).sqrt()).ln() / (x * mix * mix)
    };

    if r2 < phi(2, x) {
        return Ok(ToyBound {
            regime: ToyRegime::ItemLevel,
            bound: c.c3 * (c.c4 * x.sqrt()).ln() / x,
        });
    }
    if r2 >= phi(m, x) {
        return Ok(ToyBound {
            regime: ToyRegime::FullUserLevel,
            bound: rate(m),
        });
    }
    // largest a in [2, m - 1] with φ(a) <= ρ²
    let (mut lo, mut hi) = (2u64, m);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if phi(mid, x) <= r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tail = (-r2 * x / c.c5).exp() / r2;
    Ok(ToyBound {
        regime: ToyRegime::Intermediate { a: lo },
        bound: rate(lo).min(tail),
    })
}

/// Total variation and KL divergence between the two-point laws on
/// `{-1, 1}` with `P(1) = (1 ∓ δ) / 2`.
pub fn two_point_divergences(delta: f64) -> Result<(f64, f64)> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::invalid(format!("delta must lie in [0, 1/2], got {delta}")));
    }
    let kl = if delta == 0.0 {
        0.0
    } else {
        delta * ((1.0 + delta) / (1.0 - delta)).ln()
    };
    Ok((delta, kl))
}
