//! Dataset-size law `M` over the positive integers and data law `μ` on `[-1, 1]`.
//!
//! A [`SizeDistribution`] is stored as a sorted table of atoms so that every
//! quantity the protocol and the bounds need (pmf, survival, truncated
//! square-root moments) is a lookup or a short sum. Families with infinite
//! or very thin tails (Poisson, Binomial) drop the atoms whose cumulative
//! mass from either end is below `tail_tolerance` and renormalize.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_BINOMIAL_TRIALS: u64 = 1000;

/// Parametric family of the size law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeKind {
    PointMass {
        m: u64,
    },
    /// `M(m1) = 1 - rho`, `M(m2) = rho`.
    TwoSpike {
        m1: u64,
        m2: u64,
        rho: f64,
    },
    ZeroTruncatedPoisson {
        lambda: f64,
    },
    /// Uniform over `{1, ..., 2λ - 1}`.
    UniformOdd {
        lambda: u64,
    },
    /// Binomial(trials, lambda / trials) conditioned on being non-zero.
    TruncatedBinomial {
        #[serde(default = "default_trials")]
        trials: u64,
        lambda: f64,
    },
}

fn default_trials() -> u64 {
    DEFAULT_BINOMIAL_TRIALS
}

/// Which strictness of the tail event to use in [`SizeDistribution::survival`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tail {
    /// `P(m >= a)`
    AtLeast,
    /// `P(m > a)`
    Above,
}

#[derive(Clone, Debug)]
pub struct SizeDistribution {
    kind: SizeKind,
    tail_tolerance: f64,
    atoms: Vec<u64>,
    pmf: Vec<f64>,
    /// `suffix[i] = sum(pmf[i..])`
    suffix: Vec<f64>,
    /// `cdf[i] = sum(pmf[..=i])`
    cdf: Vec<f64>,
    /// `sqrt_prefix[i] = sum(sqrt(atoms[k]) * pmf[k] for k < i)`
    sqrt_prefix: Vec<f64>,
}

impl PartialEq for SizeDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.tail_tolerance == other.tail_tolerance
    }
}

impl SizeDistribution {
    pub fn new(kind: SizeKind) -> Result<Self> {
        Self::with_tolerance(kind, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn point_mass(m: u64) -> Result<Self> {
        Self::new(SizeKind::PointMass { m })
    }

    pub fn two_spike(m1: u64, m2: u64, rho: f64) -> Result<Self> {
        Self::new(SizeKind::TwoSpike { m1, m2, rho })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(SizeKind::ZeroTruncatedPoisson { lambda })
    }

    pub fn uniform_odd(lambda: u64) -> Result<Self> {
        Self::new(SizeKind::UniformOdd { lambda })
    }

    pub fn binomial(lambda: f64) -> Result<Self> {
        Self::new(SizeKind::TruncatedBinomial {
            trials: DEFAULT_BINOMIAL_TRIALS,
            lambda,
        })
    }

    pub fn with_tolerance(kind: SizeKind, tail_tolerance: f64) -> Result<Self> {
        if !(tail_tolerance > 0.0 && tail_tolerance < 1e-3) {
            return Err(Error::invalid(format!(
                "tail_tolerance must lie in (0, 1e-3), got {tail_tolerance}"
            )));
        }
        let raw = raw_atoms(&kind)?;
        let trimmed = match kind {
            SizeKind::ZeroTruncatedPoisson { .. } | SizeKind::TruncatedBinomial { .. } => {
                trim_tails(raw, tail_tolerance)
            }
            _ => raw,
        };
        Ok(Self::from_atoms(kind, tail_tolerance, trimmed))
    }

    fn from_atoms(kind: SizeKind, tail_tolerance: f64, raw: Vec<(u64, f64)>) -> Self {
        let total: f64 = raw.iter().map(|&(_, p)| p).sum();
        let (atoms, pmf): (Vec<u64>, Vec<f64>) = raw
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(m, p)| (m, p / total))
            .unzip();

        let mut suffix = vec![0.0; pmf.len() + 1];
        for i in (0..pmf.len()).rev() {
            suffix[i] = suffix[i + 1] + pmf[i];
        }
        suffix.pop();

        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();

        let mut sqrt_prefix = Vec::with_capacity(pmf.len() + 1);
        let mut acc = 0.0;
        sqrt_prefix.push(0.0);
        for (&m, &p) in atoms.iter().zip(&pmf) {
            acc += (m as f64).sqrt() * p;
            sqrt_prefix.push(acc);
        }

        Self {
            kind,
            tail_tolerance,
            atoms,
            pmf,
            suffix,
            cdf,
            sqrt_prefix,
        }
    }

    /// Parses `{"kind": "...", ...}` with an optional `tail_tolerance` key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn from_value(mut value: serde_json::Value) -> Result<Self> {
        let tol = match value.as_object_mut() {
            Some(obj) => match obj.remove("tail_tolerance") {
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::invalid("tail_tolerance must be a number"))?,
                None => DEFAULT_TAIL_TOLERANCE,
            },
            None => return Err(Error::invalid("size distribution must be a JSON object")),
        };
        let kind: SizeKind = serde_json::from_value(value)?;
        Self::with_tolerance(kind, tol)
    }

    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.kind).expect("size kind serializes");
        if self.tail_tolerance != DEFAULT_TAIL_TOLERANCE {
            v["tail_tolerance"] = self.tail_tolerance.into();
        }
        v
    }

    pub fn kind(&self) -> &SizeKind {
        &self.kind
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    /// Support atoms in increasing order, paired with their probabilities.
    pub fn atoms(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.pmf.iter().copied())
    }

    pub fn min_size(&self) -> u64 {
        self.atoms[0]
    }

    pub fn max_size(&self) -> u64 {
        *self.atoms.last().expect("non-empty support")
    }

    /// `P(m = i)`.
    pub fn pmf(&self, i: u64) -> f64 {
        match self.atoms.binary_search(&i) {
            Ok(k) => self.pmf[k],
            Err(_) => 0.0,
        }
    }

    /// Index of the first atom `>= a`.
    fn first_at_least(&self, a: u64) -> usize {
        self.atoms.partition_point(|&m| m < a)
    }

    pub fn survival(&self, a: u64, tail: Tail) -> f64 {
        let a = match tail {
            Tail::AtLeast => a,
            Tail::Above => match a.checked_add(1) {
                Some(a) => a,
                None => return 0.0,
            },
        };
        if a <= self.atoms[0] {
            return 1.0;
        }
        let k = self.first_at_least(a);
        if k == self.atoms.len() {
            0.0
        } else {
            self.suffix[k]
        }
    }

    /// `E[sqrt(min(m, cap))]`.
    pub fn sqrt_moment_capped(&self, cap: u64) -> f64 {
        let k = self.first_at_least(cap.saturating_add(1));
        let tail = if k == self.atoms.len() { 0.0 } else { self.suffix[k] };
        self.sqrt_prefix[k] + (cap as f64).sqrt() * tail
    }

    /// `E[sqrt(m) 1{m <= a}]`.
    pub fn sqrt_moment_below(&self, a: u64) -> f64 {
        self.sqrt_prefix[self.first_at_least(a.saturating_add(1))]
    }

    /// `sum_{i=1}^{m_tilde} (sqrt(m_tilde) - sqrt(i)) M(i)`.
    pub fn debias_gap_sum(&self, m_tilde: u64) -> f64 {
        let root = (m_tilde as f64).sqrt();
        self.atoms()
            .take_while(|&(i, _)| i <= m_tilde)
            .map(|(i, p)| (root - (i as f64).sqrt()) * p)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(m, p)| m as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.atoms.len() == 1 {
            return self.atoms[0];
        }
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        self.atoms[k.min(self.atoms.len() - 1)]
    }
}

impl Serialize for SizeDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SizeDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Self::from_value(v).map_err(serde::de::Error::custom)
    }
}

fn raw_atoms(kind: &SizeKind) -> Result<Vec<(u64, f64)>> {
    match *kind {
        SizeKind::PointMass { m } => {
            if m == 0 {
                return Err(Error::invalid("point mass must sit on a positive integer"));
            }
            Ok(vec![(m, 1.0)])
        }
        SizeKind::TwoSpike { m1, m2, rho } => {
            if m1 == 0 || m2 == 0 {
                return Err(Error::invalid("two-spike atoms must be positive integers"));
            }
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
            }
            let mut atoms = if m1 == m2 {
                vec![(m1, 1.0)]
            } else {
                vec![(m1, 1.0 - rho), (m2, rho)]
            };
            atoms.sort_by_key(|&(m, _)| m);
            Ok(atoms)
        }
        SizeKind::ZeroTruncatedPoisson { lambda } => {
            if !(lambda > 0.0 && lambda.is_finite() && lambda <= 1e7) {
                return Err(Error::invalid(format!(
                    "poisson lambda must lie in (0, 1e7], got {lambda}"
                )));
            }
            let hi = (lambda + 40.0 * lambda.sqrt() + 60.0).ceil() as u64;
            let log_norm = (-(-lambda).exp_m1()).ln();
            Ok((1..=hi)
                .map(|k| {
                    let kf = k as f64;
                    let lp = kf * lambda.ln() - lambda - ln_gamma(kf + 1.0) - log_norm;
                    (k, lp.exp())
                })
                .collect())
        }
        SizeKind::UniformOdd { lambda } => {
            if lambda == 0 || lambda > 50_000_000 {
                return Err(Error::invalid(format!(
                    "uniform lambda must lie in [1, 5e7], got {lambda}"
                )));
            }
            let top = 2 * lambda - 1;
            let p = 1.0 / top as f64;
            Ok((1..=top).map(|k| (k, p)).collect())
        }
        SizeKind::TruncatedBinomial { trials, lambda } => {
            if trials == 0 || trials > 10_000_000 {
                return Err(Error::invalid("binomial trials must lie in [1, 1e7]"));
            }
            let t = trials as f64;
            if !(lambda > 0.0 && lambda <= t) {
                return Err(Error::invalid(format!(
                    "binomial lambda must lie in (0, trials], got {lambda}"
                )));
            }
            let p = lambda / t;
            if p == 1.0 {
                return Ok(vec![(trials, 1.0)]);
            }
            let log_norm = (-((1.0 - p).ln() * t).exp_m1()).ln();
            let ln_choose_top = ln_gamma(t + 1.0);
            Ok((1..=trials)
                .map(|k| {
                    let kf = k as f64;
                    let lp = ln_choose_top - ln_gamma(kf + 1.0) - ln_gamma(t - kf + 1.0)
                        + kf * p.ln()
                        + (t - kf) * (-p).ln_1p()
                        - log_norm;
                    (k, lp.exp())
                })
                .collect())
        }
    }
}

/// Drops atoms whose cumulative mass counted from either end stays below
/// `tol`.
fn trim_tails(atoms: Vec<(u64, f64)>, tol: f64) -> Vec<(u64, f64)> {
    let mut lo = 0;
    let mut acc = 0.0;
    while lo + 1 < atoms.len() && acc + atoms[lo].1 < tol {
        acc += atoms[lo].1;
        lo += 1;
    }
    let mut hi = atoms.len();
    let mut acc = 0.0;
    while hi > lo + 1 && acc + atoms[hi - 1].1 < tol {
        acc += atoms[hi - 1].1;
        hi -= 1;
    }
    atoms[lo..hi].to_vec()
}

/// Law of a single sample on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataDistribution {
    /// Supported on `{-1, 1}` with `P(1) = (1 + theta) / 2`.
    TwoPoint { theta: f64 },
    UniformInterval { lo: f64, hi: f64 },
    PointMass { x: f64 },
}

impl DataDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DataDistribution::TwoPoint { theta } => (-1.0..=1.0).contains(&theta),
            DataDistribution::UniformInterval { lo, hi } => -1.0 <= lo && lo <= hi && hi <= 1.0,
            DataDistribution::PointMass { x } => (-1.0..=1.0).contains(&x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("data distribution {self:?} leaves [-1, 1]")))
        }
    }

    pub fn true_mean(&self) -> f64 {
        match *self {
            DataDistribution::TwoPoint { theta } => theta,
            DataDistribution::UniformInterval { lo, hi } => 0.5 * (lo + hi),
            DataDistribution::PointMass { x } => x,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DataDistribution::TwoPoint { theta } => {
                if rng.random::<f64>() < 0.5 * (1.0 + theta) {
                    1.0
                } else {
                    -1.0
                }
            }
            DataDistribution::UniformInterval { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            DataDistribution::PointMass { x } => x,
        }
    }

    /// Mean of `m` i.i.d. draws. The two-point law goes through a single
    /// binomial draw, `(2B - m) / m` with `B ~ Bin(m, (1 + θ) / 2)`.
    pub fn sample_empirical_mean<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> f64 {
        assert!(m >= 1, "empirical mean needs at least one sample");
        match *self {
            DataDistribution::TwoPoint { theta } => {
                let p = (0.5 * (1.0 + theta)).clamp(0.0, 1.0);
                let ones = Binomial::new(m, p).expect("valid binomial").sample(rng);
                let mf = m as f64;
                ((2.0 * ones as f64 - mf) / mf).clamp(-1.0, 1.0)
            }
            DataDistribution::PointMass { x } => x,
            DataDistribution::UniformInterval { .. } => {
                let sum: f64 = (0..m).map(|_| self.sample(rng)).sum();
                (sum / m as f64).clamp(-1.0, 1.0)
            }
        }
    }
}

/// Sufficient statistic of one user's local dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserDataset {
    pub m: u64,
    pub empirical_mean: f64,
}

impl UserDataset {
    pub fn new(m: u64, empirical_mean: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("a user holds at least one sample"));
        }
        if !(-1.0..=1.0).contains(&empirical_mean) {
            return Err(Error::invalid(format!(
                "empirical mean {empirical_mean} outside [-1, 1]"
            )));
        }
        Ok(Self { m, empirical_mean })
    }

    /// Draws `m ~ M` and then the mean of `m` samples from `μ`.
    pub fn draw<R: Rng + ?Sized>(size: &SizeDistribution, data: &DataDistribution, rng: &mut R) -> Self {
        let m = size.sample(rng);
        Self {
            m,
            empirical_mean: data.sample_empirical_mean(m, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<SizeDistribution> {
        vec![
            SizeDistribution::point_mass(4).unwrap(),
            SizeDistribution::two_spike(1, 100, 0.3).unwrap(),
            SizeDistribution::two_spike(1000, 10_000, 0.5).unwrap(),
            SizeDistribution::poisson(0.5).unwrap(),
            SizeDistribution::poisson(5.0).unwrap(),
            SizeDistribution::poisson(500.0).unwrap(),
            SizeDistribution::uniform_odd(7).unwrap(),
            SizeDistribution::binomial(5.0).unwrap(),
            SizeDistribution::binomial(400.0).unwrap(),
        ]
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(SizeDistribution::point_mass(4).unwrap().pmf(4), 1.0);
        assert_eq!(SizeDistribution::two_spike(1, 100, 0.5).unwrap().pmf(100), 0.5);
        let expected = 5.0 * (-5.0f64).exp() / (1.0 - (-5.0f64).exp());
        let got = SizeDistribution::poisson(5.0).unwrap().pmf(1);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((got - 0.033918).abs() < 1e-6);
    }

    #[test]
    fn pmf_is_normalised_on_positive_integers() {
        for d in all_kinds() {
            let total: f64 = d.atoms().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-9, "{:?}", d.kind());
            assert_eq!(d.pmf(0), 0.0);
            assert!(d.min_size() >= 1);
            assert!(d.mean().is_finite());
        }
    }

    #[test]
    fn survival_examples() {
        for d in all_kinds() {
            assert_eq!(d.survival(1, Tail::AtLeast), 1.0);
        }
        let d = SizeDistribution::two_spike(1, 100, 0.3).unwrap();
        assert!((d.survival(2, Tail::AtLeast) - 0.3).abs() < 1e-15);
        let d = SizeDistribution::point_mass(4).unwrap();
        assert_eq!(d.survival(4, Tail::Above), 0.0);
        assert_eq!(d.survival(4, Tail::AtLeast), 1.0);
    }

    #[test]
    fn survival_variants_and_monotonicity() {
        for d in all_kinds() {
            let top = d.max_size() + 3;
            let mut prev = 1.0;
            for a in 0..=top.min(5000) {
                let ge = d.survival(a, Tail::AtLeast);
                assert!(ge <= prev + 1e-15);
                prev = ge;
                assert_eq!(d.survival(a, Tail::Above), d.survival(a + 1, Tail::AtLeast));
                // brute force over the atom table
                let brute: f64 = d.atoms().filter(|&(m, _)| m >= a).map(|(_, p)| p).sum();
                assert!((ge - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_moment_examples() {
        let pm4 = SizeDistribution::point_mass(4).unwrap();
        assert_eq!(pm4.sqrt_moment_capped(4), 2.0);
        assert_eq!(pm4.sqrt_moment_below(4), 2.0);
        let ts = SizeDistribution::two_spike(1, 100, 0.5).unwrap();
        assert!((ts.sqrt_moment_capped(100) - 5.5).abs() < 1e-14);
        let ts3 = SizeDistribution::two_spike(1, 100, 0.3).unwrap();
        assert!((ts3.sqrt_moment_below(50) - 0.7).abs() < 1e-14);
        for d in all_kinds() {
            assert!((d.sqrt_moment_capped(1) - 1.0).abs() < 1e-12);
            assert_eq!(d.sqrt_moment_below(0), 0.0);
        }
    }

    #[test]
    fn sqrt_moments_match_direct_summation() {
        for d in all_kinds() {
            let full: f64 = d.atoms().map(|(m, p)| (m as f64).sqrt() * p).sum();
            let mut prev = 0.0;
            for cap in [1u64, 2, 3, 5, 10, 50, 99, 100, 101, 400, 1000, 20_000] {
                let direct: f64 = d.atoms().map(|(m, p)| (m.min(cap) as f64).sqrt() * p).sum();
                let below: f64 = d.atoms().filter(|&(m, _)| m <= cap).map(|(m, p)| (m as f64).sqrt() * p).sum();
                let capped = d.sqrt_moment_capped(cap);
                assert!((capped - direct).abs() < 1e-12);
                assert!((d.sqrt_moment_below(cap) - below).abs() < 1e-12);
                assert!(capped + 1e-12 >= prev && capped <= full + 1e-12);
                prev = capped;
                let root = (cap as f64).sqrt();
                let lhs = d.sqrt_moment_below(cap) + root * d.survival(cap + 1, Tail::AtLeast);
                assert!(lhs <= capped + root + 1e-12);
            }
        }
    }

    #[test]
    fn debias_gap_examples() {
        assert_eq!(SizeDistribution::point_mass(4).unwrap().debias_gap_sum(4), 0.0);
        let ts = SizeDistribution::two_spike(1, 100, 0.5).unwrap();
        assert!((ts.debias_gap_sum(100) - 4.5).abs() < 1e-14);
        for d in all_kinds() {
            assert_eq!(d.debias_gap_sum(1), 0.0);
        }
    }

    #[test]
    fn thin_tails_are_trimmed_on_both_sides() {
        let d = SizeDistribution::poisson(500.0).unwrap();
        assert!(d.min_size() > 300, "min atom {}", d.min_size());
        assert!(d.max_size() < 700);
        let d = SizeDistribution::poisson(5.0).unwrap();
        assert_eq!(d.min_size(), 1);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let d = SizeDistribution::from_json(r#"{"kind":"two_spike","m1":100000,"m2":1000000,"rho":0.5}"#).unwrap();
        assert_eq!(d.pmf(1_000_000), 0.5);
        let back = SizeDistribution::from_value(d.to_value()).unwrap();
        assert_eq!(back, d);
        let b = SizeDistribution::from_json(r#"{"kind":"truncated_binomial","lambda":3.0}"#).unwrap();
        assert_eq!(b.kind(), &SizeKind::TruncatedBinomial { trials: 1000, lambda: 3.0 });
        assert!(SizeDistribution::from_json(r#"{"kind":"point_mass","m":3,"bogus":1}"#).is_err());
        assert!(SizeDistribution::from_json(r#"{"kind":"point_mass","m":0}"#).is_err());
        assert!(SizeDistribution::from_json(r#"{"kind":"two_spike","m1":1,"m2":2,"rho":1.5}"#).is_err());
        assert!(SizeDistribution::from_json("[1,2]").is_err());
    }

    #[test]
    fn size_sampling_matches_pmf() {
        let d = SizeDistribution::two_spike(3, 9, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let hits = (0..n).filter(|_| d.sample(&mut rng) == 9).count() as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((hits - 0.25).abs() < 5.0 * se);
    }

    #[test]
    fn empirical_mean_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pm = DataDistribution::PointMass { x: 0.3 };
        assert_eq!(pm.sample_empirical_mean(1_000_000, &mut rng), 0.3);

        let tp = DataDistribution::TwoPoint { theta: 0.0 };
        let mut plus = 0;
        for _ in 0..10_000 {
            let v = tp.sample_empirical_mean(1, &mut rng);
            assert!(v == 1.0 || v == -1.0);
            plus += (v == 1.0) as u32;
        }
        assert!((plus as f64 / 10_000.0 - 0.5).abs() < 5.0 * 0.005);

        // 10^4 draws of the mean of 10^4 samples: standard error of the
        // grand mean is sqrt(1 - θ²) / 10^4.
        let tp = DataDistribution::TwoPoint { theta: 0.2 };
        let reps = 10_000;
        let avg: f64 = (0..reps).map(|_| tp.sample_empirical_mean(10_000, &mut rng)).sum::<f64>() / reps as f64;
        let se = (1.0f64 - 0.04).sqrt() / 1e4;
        assert!((avg - 0.2).abs() < 5.0 * se, "{avg}");
    }

    #[test]
    fn samples_stay_in_range_and_match_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dist in [
            DataDistribution::TwoPoint { theta: -0.4 },
            DataDistribution::UniformInterval { lo: -0.5, hi: 1.0 },
            DataDistribution::PointMass { x: -1.0 },
        ] {
            let n = 1_000_000;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let x = dist.sample(&mut rng);
                assert!((-1.0..=1.0).contains(&x));
                sum += x;
                sq += x * x;
            }
            let mean = sum / n as f64;
            let var = (sq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!((mean - dist.true_mean()).abs() <= 5.0 * se + 1e-15, "{dist:?}");
        }
        assert!(DataDistribution::TwoPoint { theta: 1.2 }.validate().is_err());
        assert!(DataDistribution::UniformInterval { lo: 0.5, hi: 0.1 }.validate().is_err());
    }

    #[test]
    fn user_dataset_validation() {
        assert!(UserDataset::new(0, 0.1).is_err());
        assert!(UserDataset::new(3, 1.5).is_err());
        assert!(UserDataset::new(3, -1.0).is_ok());
    }
}
