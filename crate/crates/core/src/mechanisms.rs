//! Local randomizers: per-coordinate randomized response on sparse binary
//! vectors, and Laplace noise, together with their exact privacy losses.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper end of the high-privacy regime the risk bounds are stated for.
pub const STRICT_ALPHA_MAX: f64 = 22.0 / 35.0;

/// Maximum number of ones a vote vector may carry through
/// [`randomized_response`].
pub const MAX_ONES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivacyBudget {
    alpha: f64,
}

impl PrivacyBudget {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(Self { alpha })
        } else {
            Err(Error::invalid(format!("alpha must be a positive finite real, got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Whether `alpha <= 22/35`, the regime under which the bounds hold.
    pub fn is_strict_regime(&self) -> bool {
        self.alpha <= STRICT_ALPHA_MAX
    }

    pub fn n_alpha_sq(&self, n: u64) -> f64 {
        n as f64 * self.alpha * self.alpha
    }
}

/// Keep-probability of randomized response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipProbability {
    keep: f64,
}

impl FlipProbability {
    pub fn new(keep: f64) -> Result<Self> {
        if (0.5..=1.0).contains(&keep) {
            Ok(Self { keep })
        } else {
            Err(Error::invalid(format!("keep probability must lie in [1/2, 1], got {keep}")))
        }
    }

    /// `e^{α/6} / (1 + e^{α/6})`: each of the at most six coordinates on
    /// which two 3-hot vectors differ costs `α/6`.
    pub fn for_budget(budget: PrivacyBudget) -> Self {
        let x = budget.alpha() / 6.0;
        // logistic(x), written to stay accurate for large x
        Self { keep: 1.0 / (1.0 + (-x).exp()) }
    }

    pub fn keep(&self) -> f64 {
        self.keep
    }

    pub fn flip(&self) -> f64 {
        1.0 - self.keep
    }
}

/// Keeps each coordinate with probability `pi.keep()` and flips it otherwise.
pub fn randomized_response<R: Rng + ?Sized>(
    bits: &[bool],
    pi: FlipProbability,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let ones = bits.iter().filter(|&&b| b).count();
    if ones > MAX_ONES {
        return Err(Error::invalid(format!(
            "randomized response accepts at most {MAX_ONES} ones, got {ones}"
        )));
    }
    Ok(bits
        .iter()
        .map(|&b| if rng.random::<f64>() < pi.keep() { b } else { !b })
        .collect())
}

/// Standard Laplace draw by inverse CDF from a single open-interval uniform.
pub fn standard_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -u.signum() * (-2.0 * u.abs()).ln_1p()
}

pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("laplace scale must be positive, got {scale}")));
    }
    Ok(scale * standard_laplace(rng))
}

/// Worst-case log-likelihood ratio of randomized response between two
/// inputs with at most three ones each, i.e. differing in at most six
/// coordinates.
pub fn audit_rr_privacy(pi: FlipProbability) -> f64 {
    2.0 * MAX_ONES as f64 * (pi.keep() / pi.flip()).ln()
}

/// Supremum of the log-density ratio of `x + Lap(scale)` against
/// `x' + Lap(scale)` for `|x - x'| <= sensitivity`.
pub fn audit_laplace_privacy(scale: f64, sensitivity: f64) -> Result<f64> {
    if !(scale > 0.0 && sensitivity > 0.0) {
        return Err(Error::invalid("scale and sensitivity must be positive"));
    }
    Ok(sensitivity / scale)
}

/// Monte Carlo estimate of the randomized-response privacy loss between
/// two disjoint 3-hot inputs.
///
/// Coordinates are released independently, so the worst output's
/// log-likelihood ratio is the sum over coordinates of the largest
/// per-coordinate log ratio of empirical output frequencies.
pub fn empirical_rr_privacy<R: Rng + ?Sized>(pi: FlipProbability, trials: u64, rng: &mut R) -> f64 {
    let x = [true, true, true, false, false, false];
    let y = [false, false, false, true, true, true];
    let mut ones_x = [0u64; 6];
    let mut ones_y = [0u64; 6];
    for _ in 0..trials {
        let zx = randomized_response(&x, pi, rng).expect("3-hot input");
        let zy = randomized_response(&y, pi, rng).expect("3-hot input");
        for j in 0..6 {
            ones_x[j] += zx[j] as u64;
            ones_y[j] += zy[j] as u64;
        }
    }
    let t = trials as f64;
    (0..6)
        .map(|j| {
            let (p1, q1) = (ones_x[j] as f64 / t, ones_y[j] as f64 / t);
            let r1 = (p1 / q1).ln().abs();
            let r0 = ((1.0 - p1) / (1.0 - q1)).ln().abs();
            r1.max(r0)
        })
        .sum()
}

/// Monte Carlo estimate of the Laplace privacy loss: histogram both output
/// laws for inputs `0` and `sensitivity` and take the largest absolute log
/// ratio over bins where both counts are at least `min_count`.
pub fn empirical_laplace_privacy<R: Rng + ?Sized>(
    scale: f64,
    sensitivity: f64,
    trials: u64,
    rng: &mut R,
) -> Result<f64> {
    const BINS: usize = 64;
    const MIN_COUNT: u64 = 2000;
    let lo = -3.0 * scale;
    let hi = sensitivity + 3.0 * scale;
    let width = (hi - lo) / BINS as f64;
    let mut a = [0u64; BINS];
    let mut b = [0u64; BINS];
    let bin = |v: f64| -> Option<usize> {
        if v < lo || v >= hi {
            None
        } else {
            Some((((v - lo) / width) as usize).min(BINS - 1))
        }
    };
    for _ in 0..trials {
        if let Some(k) = bin(laplace_noise(scale, rng)?) {
            a[k] += 1;
        }
        if let Some(k) = bin(sensitivity + laplace_noise(scale, rng)?) {
            b[k] += 1;
        }
    }
    Ok(a.iter()
        .zip(&b)
        .filter(|(&x, &y)| x >= MIN_COUNT && y >= MIN_COUNT)
        .map(|(&x, &y)| (x as f64 / y as f64).ln().abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn budget_flags_regime() {
        assert!(PrivacyBudget::new(0.6).unwrap().is_strict_regime());
        assert!(PrivacyBudget::new(22.0 / 35.0).unwrap().is_strict_regime());
        assert!(!PrivacyBudget::new(1.0).unwrap().is_strict_regime());
        assert!(PrivacyBudget::new(0.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN).is_err());
    }

    #[test]
    fn rr_identity_at_keep_one() {
        let pi = FlipProbability::new(1.0).unwrap();
        let out = randomized_response(&[false, true, true, true], pi, &mut rng(0)).unwrap();
        assert_eq!(out, vec![false, true, true, true]);
    }

    #[test]
    fn rr_rejects_more_than_three_ones() {
        let pi = FlipProbability::new(0.7).unwrap();
        assert!(randomized_response(&[true, true, true, true], pi, &mut rng(0)).is_err());
    }

    #[test]
    fn rr_flip_frequency() {
        let budget = PrivacyBudget::new(22.0 / 35.0).unwrap();
        let pi = FlipProbability::for_budget(budget);
        assert!((pi.flip() - 0.47383).abs() < 1e-5);
        let trials = 100_000;
        let mut r = rng(3);
        let mut ones = [0u32; 4];
        for _ in 0..trials {
            let z = randomized_response(&[false; 4], pi, &mut r).unwrap();
            for (c, b) in ones.iter_mut().zip(z) {
                *c += b as u32;
            }
        }
        let se = (pi.flip() * pi.keep() / trials as f64).sqrt();
        for c in ones {
            assert!((c as f64 / trials as f64 - pi.flip()).abs() < 3.0 * se);
        }
    }

    #[test]
    fn laplace_moments() {
        let mut r = rng(5);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace_noise(1.0, &mut r).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 2.0).abs() < 0.02, "{var}");

        let mean5 = (0..n).map(|_| laplace_noise(5.0, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!(mean5.abs() < 3.0 * 50f64.sqrt() / 1e3, "{mean5}");

        assert!(laplace_noise(0.0, &mut r).is_err());
    }

    #[test]
    fn audit_examples() {
        let at = |a: f64| FlipProbability::for_budget(PrivacyBudget::new(a).unwrap());
        assert!((audit_rr_privacy(at(0.6)) - 0.6).abs() < 1e-12);
        assert!((audit_rr_privacy(at(22.0 / 35.0)) - 22.0 / 35.0).abs() < 1e-12);
        assert_eq!(audit_rr_privacy(FlipProbability::new(0.5).unwrap()), 0.0);

        assert_eq!(audit_laplace_privacy(2.0, 1.0).unwrap(), 0.5);
        let tau = 0.387;
        let alpha = 0.6;
        let got = audit_laplace_privacy(14.0 * tau / alpha, 14.0 * tau).unwrap();
        assert!((got - alpha).abs() < 1e-12);
        assert!(audit_laplace_privacy(0.0, 1.0).is_err());
    }

    #[test]
    fn lemma_k_inequality_on_grid() {
        for k in 1..=200 {
            let alpha = k as f64 / 200.0;
            let pi = FlipProbability::for_budget(PrivacyBudget::new(alpha).unwrap());
            let gap = 0.5 - pi.keep();
            assert!(gap * gap >= alpha * alpha / 579.0, "alpha = {alpha}");
        }
    }

    #[test]
    fn empirical_audits_close_to_exact() {
        let alpha = 22.0 / 35.0;
        let pi = FlipProbability::for_budget(PrivacyBudget::new(alpha).unwrap());
        let rr = empirical_rr_privacy(pi, 200_000, &mut rng(8));
        assert!((rr - alpha).abs() < 0.08, "{rr}");
        let lap = empirical_laplace_privacy(2.0, 1.0, 400_000, &mut rng(9)).unwrap();
        assert!((lap - 0.5).abs() < 0.1, "{lap}");
    }
}
