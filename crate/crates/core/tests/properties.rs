use dame::bounds::{lower_bound, psi, search_limit, solve_m_tilde, upper_bound};
use dame::cli::output::fmt_f64;
use dame::distributions::{DataDistribution, SizeDistribution, Tail, UserDataset};
use dame::mechanisms::{randomized_response, FlipProbability, PrivacyBudget};
use dame::protocol::{compute_tau, localisation_vote, shrink_estimate, BinPartition, CandidateBin};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn size_law() -> impl Strategy<Value = SizeDistribution> {
    prop_oneof![
        (1u64..500).prop_map(|m| SizeDistribution::point_mass(m).unwrap()),
        (1u64..50, 51u64..800, 0.0f64..=1.0).prop_map(|(a, b, r)| SizeDistribution::two_spike(a, b, r).unwrap()),
        (0.1f64..200.0).prop_map(|l| SizeDistribution::poisson(l).unwrap()),
        (1u64..300).prop_map(|l| SizeDistribution::uniform_odd(l).unwrap()),
        (0.5f64..400.0).prop_map(|l| SizeDistribution::binomial(l).unwrap()),
    ]
}

fn direct_sqrt_moment_capped(d: &SizeDistribution, cap: u64) -> f64 {
    d.atoms().map(|(m, p)| p * (m.min(cap) as f64).sqrt()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn survival_variants_are_shifted(d in size_law(), a in 0u64..1500) {
        prop_assert_eq!(d.survival(a, Tail::Above), d.survival(a + 1, Tail::AtLeast));
    }

    #[test]
    fn sqrt_moment_orderings(d in size_law(), a in 0u64..1500) {
        let lhs = d.sqrt_moment_below(a) + (a as f64).sqrt() * d.survival(a + 1, Tail::AtLeast);
        prop_assert!(lhs <= d.sqrt_moment_capped(a) + (a as f64).sqrt() + 1e-12);
        prop_assert!(d.sqrt_moment_capped(a) <= d.sqrt_moment_capped(a + 1) + 1e-15);
        let full = d.sqrt_moment_capped(u64::MAX);
        prop_assert!(d.sqrt_moment_capped(a) <= full + 1e-15);
        prop_assert!((d.sqrt_moment_capped(a) - direct_sqrt_moment_capped(&d, a)).abs() < 1e-9);
    }

    #[test]
    fn solver_matches_linear_scan(d in size_law(), n in 1u64..20_000, alpha in 0.01f64..0.63) {
        let x = n as f64 * alpha * alpha;
        let s = solve_m_tilde(&d, x).unwrap();
        let limit = search_limit(x).min(1_000_000);
        let top = limit.min(d.max_size() + 1);
        // past the support the survival is 0, so ψ < 0 there
        let scan = (1..=top).filter(|&a| psi(&d, a, x) >= 0.0).max().unwrap();
        prop_assert_eq!(s.m_tilde, scan);
        prop_assert!(s.psi_at_one >= 0.0);
        prop_assert!(u64::from(s.iterations) <= 2 * x.ceil() as u64);
    }

    #[test]
    fn lower_never_exceeds_upper(d in size_law(), x in 0.05f64..1e6) {
        let (lo, _) = lower_bound(&d, x, None).unwrap();
        let up = upper_bound(&d, x).unwrap();
        prop_assert!(lo <= up.value);
        prop_assert!(up.value <= 4.0);
    }

    #[test]
    fn every_point_lies_in_exactly_one_bin(tau in 0.004f64..1.5, x in -1.0f64..=1.0) {
        let p = BinPartition::new(tau).unwrap();
        let holders: Vec<usize> = (0..p.bin_count())
            .filter(|&j| p.lower(j) <= x && (x < p.upper(j) || (j + 1 == p.bin_count() && x <= 1.0)))
            .collect();
        prop_assert_eq!(holders, vec![p.bin_of(x)]);
    }

    #[test]
    fn true_bin_always_receives_the_vote(
        tau in 0.01f64..1.2,
        theta in -1.0f64..=1.0,
        offset in -1.0f64..=1.0,
        m in 1u64..100,
        m_tilde in 1u64..100,
    ) {
        let p = BinPartition::new(tau).unwrap();
        let xbar = (theta + offset * tau).clamp(-1.0, 1.0);
        let v = localisation_vote(&UserDataset::new(m, xbar).unwrap(), &p, m_tilde);
        if m >= m_tilde {
            prop_assert!(v.0[p.bin_of(theta)]);
            prop_assert!(v.ones() <= 3);
        } else {
            prop_assert_eq!(v.ones(), 0);
        }
    }

    #[test]
    fn candidate_interval_is_at_most_fourteen_tau(tau in 0.004f64..3.0, pick in 0.0f64..1.0) {
        let p = BinPartition::new(tau).unwrap();
        let j = ((pick * p.bin_count() as f64) as usize).min(p.bin_count() - 1);
        let c = CandidateBin::for_bin(&p, j).unwrap();
        prop_assert!(c.width() <= 14.0 * tau * (1.0 + 1e-12));
    }

    #[test]
    fn shrinkage_is_contained(
        m_tilde in 2u64..5000,
        n in 100u64..100_000,
        alpha in 0.05f64..0.63,
        m_frac in 0.0f64..1.0,
        pick in 0.0f64..1.0,
        u in -1.0f64..=1.0,
    ) {
        let b = PrivacyBudget::new(alpha).unwrap();
        let tau = compute_tau(m_tilde, n, b);
        let p = BinPartition::new(tau).unwrap();
        let j = ((pick * p.bin_count() as f64) as usize).min(p.bin_count() - 1);
        let c = CandidateBin::for_bin(&p, j).unwrap();
        let m = 1 + ((m_tilde - 1) as f64 * m_frac) as u64;
        let radius = (2.0 * (8.0 * (m_tilde as f64 * b.n_alpha_sq(n)).sqrt().max(1.0)).ln()).sqrt();
        let reach = radius / (m as f64).sqrt() + 5.0 * tau * (m as f64 / m_tilde as f64).sqrt();
        let xbar = (c.midpoint + u * reach).clamp(-1.0, 1.0);
        let shrunk = shrink_estimate(&UserDataset::new(m, xbar).unwrap(), &c, m_tilde);
        prop_assert!((shrunk - c.midpoint).abs() <= 6.0 * tau * (1.0 + 1e-12));
        prop_assert_eq!(c.project(shrunk), shrunk);
    }

    #[test]
    fn randomized_response_respects_the_one_cap(bits in proptest::collection::vec(any::<bool>(), 0..12), seed: u64) {
        let pi = FlipProbability::new(0.6).unwrap();
        let ones = bits.iter().filter(|&&b| b).count();
        let out = randomized_response(&bits, pi, &mut ChaCha8Rng::seed_from_u64(seed));
        if ones <= 3 {
            prop_assert_eq!(out.unwrap().len(), bits.len());
        } else {
            prop_assert!(out.is_err());
        }
    }

    #[test]
    fn printed_floats_round_trip(bits: u64) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn binomial_fast_path_matches_direct_sampling() {
    let draws = 100_000;
    // level 1e-3: c = sqrt(-ln(0.0005) / 2)
    let crit = (-(0.0005f64).ln() / 2.0).sqrt() * (2.0 / draws as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (theta, m) in [(0.0, 1u64), (0.2, 7), (-0.5, 40), (0.9, 100)] {
        let d = DataDistribution::TwoPoint { theta };
        let fast: Vec<f64> = (0..draws).map(|_| d.sample_empirical_mean(m, &mut rng)).collect();
        let direct: Vec<f64> = (0..draws)
            .map(|_| (0..m).map(|_| d.sample(&mut rng)).sum::<f64>() / m as f64)
            .collect();
        let ks = ks_statistic(fast, direct);
        assert!(ks < crit, "theta {theta} m {m}: D = {ks} >= {crit}");
    }
}
