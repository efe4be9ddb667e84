//! Known values checked against independent computations.

use approx::assert_abs_diff_eq;
use psimix::bounds::{achievable_rate, convex_gap_bound, term_decomposition};
use psimix::codesim::{
    direct_communication_check, error_curve, CodesimParams, Decoder, Experiment, MemorylessChannel,
};
use psimix::mixing::{
    blocked_psi_comparison, lambda_profile, psi_brute_force, residual_distribution,
};
use psimix::process::index_word;
use psimix::ratedist::{blahut_arimoto, rd_vector_source, BaOptions, DistortionMeasure};
use psimix::simulate::{draw_flags, generate_codebook, SlotSchedule};
use psimix::{CylinderLaw, MarkovSource};

fn h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn chain(p: f64) -> MarkovSource {
    MarkovSource::binary_symmetric(p).unwrap()
}

fn uniform_iid() -> MarkovSource {
    MarkovSource::iid(vec!["0".into(), "1".into()], vec![0.5, 0.5]).unwrap()
}

/// Textbook alternating minimization at a fixed slope, with the slope
/// bisected until the distortion matches. No acceleration, no warm starts.
fn plain_rate_bits(px: &[f64], d: &[Vec<f64>], target: f64) -> f64 {
    let n = px.len();
    let m = d[0].len();
    let at_slope = |s: f64| -> (f64, f64) {
        let mut q = vec![1.0 / m as f64; m];
        let mut w = vec![vec![0.0; m]; n];
        for _ in 0..200_000 {
            for x in 0..n {
                let z: f64 = (0..m).map(|y| q[y] * (-s * d[x][y]).exp()).sum();
                for y in 0..m {
                    w[x][y] = q[y] * (-s * d[x][y]).exp() / z;
                }
            }
            let next: Vec<f64> = (0..m)
                .map(|y| (0..n).map(|x| px[x] * w[x][y]).sum())
                .collect();
            let delta = next
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            q = next;
            if delta < 1e-14 {
                break;
            }
        }
        let mut dist = 0.0;
        let mut info = 0.0;
        for x in 0..n {
            for y in 0..m {
                let joint = px[x] * w[x][y];
                if joint > 0.0 {
                    dist += joint * d[x][y];
                    info += joint * (w[x][y] / q[y]).log2();
                }
            }
        }
        (dist, info)
    };
    let (mut lo, mut hi) = (0.0, 64.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at_slope(mid).0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at_slope(0.5 * (lo + hi)).1
}

#[test]
fn stationary_law_of_a_cycle_is_uniform() {
    let cycle = MarkovSource::first_order(
        vec!["a".into(), "b".into(), "c".into()],
        vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ],
    )
    .unwrap();
    for &p in cycle.stationary() {
        assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
    }
}

#[test]
fn binary_chain_window_and_conditional_laws() {
    let c = chain(0.3);
    let p2 = c.marginal(2).unwrap();
    for (w, want) in [
        ([0, 0], 0.35),
        ([0, 1], 0.15),
        ([1, 0], 0.15),
        ([1, 1], 0.35),
    ] {
        assert_abs_diff_eq!(p2.prob(&w), want, epsilon = 1e-12);
        assert_abs_diff_eq!(c.cylinder_probability(&w), want, epsilon = 1e-12);
    }
    let next = c.conditional_law(&[0], 0, 1).unwrap();
    assert_abs_diff_eq!(next.prob(&[0]), 0.7, epsilon = 1e-12);
    // two steps ahead: 0.5 (1 + 0.4²)
    let skip = c.conditional_law(&[0], 1, 1).unwrap();
    assert_abs_diff_eq!(skip.prob(&[0]), 0.5 * (1.0 + 0.16), epsilon = 1e-12);
}

#[test]
fn block_process_regroups_the_parent() {
    let blocked = chain(0.3).block_process(2).unwrap();
    let want = [0.35, 0.15, 0.15, 0.35];
    for (p, w) in blocked.stationary().iter().zip(want) {
        assert_abs_diff_eq!(*p, w, epsilon = 1e-12);
    }
    // 00 -> 00 is two stays; 00 -> 11 is a flip then a stay
    assert_abs_diff_eq!(blocked.transition()[0][0], 0.49, epsilon = 1e-12);
    assert_abs_diff_eq!(blocked.transition()[0][3], 0.21, epsilon = 1e-12);
}

#[test]
fn psi_profile_matches_spectral_form() {
    for p in [0.1, 0.3, 0.45] {
        let profile = lambda_profile(&chain(p), 3).unwrap();
        for (tau, l) in profile.lambdas.iter().enumerate() {
            assert_abs_diff_eq!(*l, (1.0 - 2.0 * p).powi(tau as i32 + 1), epsilon = 1e-12);
        }
    }
    let c = chain(0.3);
    assert_abs_diff_eq!(psi_brute_force(&c, 0, 1, 1).unwrap(), 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(
        psi_brute_force(&c, 2, 2, 2).unwrap(),
        0.064,
        epsilon = 1e-12
    );
}

#[test]
fn residuals_at_the_extreme_prefixes_are_point_masses() {
    let c = chain(0.3);
    let r0 = residual_distribution(&c, &[0], 0, 1).unwrap();
    assert_abs_diff_eq!(r0.prob(&[0]), 1.0, epsilon = 1e-12);
    let r1 = residual_distribution(&c, &[1], 0, 1).unwrap();
    assert_abs_diff_eq!(r1.prob(&[1]), 1.0, epsilon = 1e-12);
}

#[test]
fn blocked_psi_values() {
    let c = chain(0.3);
    let b0 = blocked_psi_comparison(&c, 2, 0).unwrap();
    assert_abs_diff_eq!(b0.psi_parent, 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(b0.psi_block, 0.4, epsilon = 1e-12);
    let b1 = blocked_psi_comparison(&c, 2, 1).unwrap();
    assert_abs_diff_eq!(b1.psi_parent, 0.16, epsilon = 1e-12);
    assert_abs_diff_eq!(b1.psi_block, 0.064, epsilon = 1e-12);
}

#[test]
fn slots_follow_the_published_layout() {
    let s = SlotSchedule::new(2, 1, 2).unwrap();
    assert_eq!(s.a_bounds(), vec![(1, 2), (4, 5)]);
    assert_eq!(s.b_bounds(), vec![(3, 3), (6, 6)]);
    assert_eq!(s.len(), 6);
}

#[test]
fn good_fraction_concentrates() {
    let k = 10_000;
    let flags = draw_flags(k, 0.4, 99).unwrap();
    let frac = flags.good_count() as f64 / k as f64;
    let sigma = (0.24 / k as f64).sqrt();
    assert!((frac - 0.6).abs() <= 3.0 * sigma, "good fraction {frac}");
}

#[test]
fn simulate_golden_output() {
    let c = chain(0.3);
    let schedule = SlotSchedule::new(2, 1, 2).unwrap();
    let flags = draw_flags(2, 0.16, 7).unwrap();
    assert_eq!(flags.flags, vec![true, true]);
    let book = generate_codebook(&c, schedule, &flags, 1, 7).unwrap();
    assert_eq!(book[0], vec![1, 1, 0, 0, 1, 1]);
}

#[test]
fn iid_codebook_symbol_frequencies() {
    let src = MarkovSource::iid(vec!["0".into(), "1".into()], vec![0.3, 0.7]).unwrap();
    let schedule = SlotSchedule::new(1, 0, 1).unwrap();
    let flags = draw_flags(1, 0.0, 3).unwrap();
    let m = 1000;
    let book = generate_codebook(&src, schedule, &flags, m, 3).unwrap();
    let ones = book.iter().filter(|w| w[0] == 1).count() as f64 / m as f64;
    assert!(
        (ones - 0.7).abs() <= 3.0 * (0.21 / m as f64).sqrt(),
        "frequency {ones}"
    );
}

#[test]
fn binary_hamming_closed_forms() {
    let ham = DistortionMeasure::hamming(2);
    let uniform = CylinderLaw::new(2, 1, vec![0.5, 0.5]).unwrap();
    let r = blahut_arimoto(&uniform, &ham, 0.1, BaOptions::default()).unwrap();
    assert_abs_diff_eq!(r.rate_bits, 1.0 - h(0.1), epsilon = 1e-5);
    let bern = CylinderLaw::new(2, 1, vec![0.7, 0.3]).unwrap();
    let r = blahut_arimoto(&bern, &ham, 0.1, BaOptions::default()).unwrap();
    assert_abs_diff_eq!(r.rate_bits, h(0.3) - h(0.1), epsilon = 1e-5);

    // memoryless source: per-letter value does not depend on T
    for t in 1..=3 {
        let p = rd_vector_source(&uniform_iid(), &ham, t, 0.1, BaOptions::default()).unwrap();
        assert_abs_diff_eq!(p.rate_bits, 1.0 - h(0.1), epsilon = 1e-4);
    }
}

#[test]
fn zero_distortion_gives_block_entropy() {
    let ham = DistortionMeasure::hamming(2);
    let c = chain(0.3);
    for t in 1..=6 {
        let p = rd_vector_source(&c, &ham, t, 0.0, BaOptions::default()).unwrap();
        let want = (1.0 + (t as f64 - 1.0) * h(0.3)) / t as f64;
        assert_abs_diff_eq!(p.rate_bits, want, epsilon = 1e-9);
    }
}

#[test]
fn convex_gap_example() {
    let f = |d: f64| 1.0 - h(d);
    let gap = (f(0.1) - f(0.15)).abs();
    assert_abs_diff_eq!(gap, 0.1409, epsilon = 1e-4);
    let bound = convex_gap_bound(1.0, 0.1, 0.15).unwrap();
    assert_abs_diff_eq!(bound, 0.5, epsilon = 1e-12);
    assert!(gap <= bound);
}

#[test]
fn bound_example_against_plain_iteration() {
    let c = chain(0.3);
    let ham = DistortionMeasure::hamming(2);
    let report = achievable_rate(&c, &ham, 0.05, 4, 1, 0.04).unwrap();
    assert_abs_diff_eq!(report.lambda, 0.16, epsilon = 1e-12);
    assert_abs_diff_eq!(report.d_prime, 0.0625, epsilon = 1e-12);

    let law = c.marginal(4).unwrap();
    let words: Vec<Vec<usize>> = (0..16).map(|i| index_word(i, 4, 2)).collect();
    let table: Vec<Vec<f64>> = words
        .iter()
        .map(|a| {
            words
                .iter()
                .map(|b| a.iter().zip(b).filter(|(x, y)| x != y).count() as f64)
                .collect()
        })
        .collect();
    let oracle = plain_rate_bits(law.probabilities(), &table, 5.0 * 0.0625);
    assert_abs_diff_eq!(report.rd_block, oracle, epsilon = 1e-5);
    assert_abs_diff_eq!(report.rate_bound_bits, 0.8 / 5.0 * oracle, epsilon = 1e-6);
    assert_abs_diff_eq!(report.rate_bound_bits, 0.329879, epsilon = 1e-5);
}

#[test]
fn bound_terms_respect_envelopes() {
    let c = chain(0.3);
    let ham = DistortionMeasure::hamming(2);
    let report = term_decomposition(&c, &ham, 0.05, 4, 1, 0.04, 8).unwrap();
    assert!(report.within_envelopes(1e-9), "{report:?}");
}

#[test]
fn iid_bound_at_zero_gap() {
    let ham = DistortionMeasure::hamming(2);
    let report = achievable_rate(&uniform_iid(), &ham, 0.0, 1, 0, 0.1).unwrap();
    assert_abs_diff_eq!(report.rate_bound_bits, 0.9, epsilon = 1e-9);
}

#[test]
fn direct_check_binomial_tails() {
    let src = uniform_iid();
    let ham = DistortionMeasure::hamming(2);
    let good = MemorylessChannel::bsc(0.02).unwrap();
    let r = direct_communication_check(&src, &good, &ham, 0.05, 1000, 10_000, 5).unwrap();
    assert_eq!(r.exceed, 0);
    assert_abs_diff_eq!(r.mean_distortion, 0.02, epsilon = 1e-3);
    let bad = MemorylessChannel::bsc(0.1).unwrap();
    let r = direct_communication_check(&src, &bad, &ham, 0.05, 1000, 500, 5).unwrap();
    assert_eq!(r.exceed, 500);
}

fn small_experiment(rate: f64, decoder: Decoder) -> CodesimParams {
    CodesimParams {
        block_len: 8,
        gap: 0,
        beta: 0.1,
        distortion: 0.05,
        rate,
        trials: 400,
        seed: 11,
        decoder,
        batch_size: 100,
        explicit_bits: 10,
    }
}

#[test]
fn coding_outcomes_partition_and_repeat() {
    let src = uniform_iid();
    let ham = DistortionMeasure::hamming(2);
    let ch = MemorylessChannel::bsc(0.02).unwrap();
    for decoder in [Decoder::Threshold, Decoder::MinDistortion] {
        let exp = Experiment {
            source: &src,
            channel: &ch,
            measure: &ham,
            params: small_experiment(0.5, decoder),
        };
        let a = error_curve(&exp, &[2, 8]).unwrap();
        let b = error_curve(&exp, &[2, 8]).unwrap();
        assert_eq!(a, b);
        for batch in &a {
            assert_eq!(
                batch.correct + batch.erasure + batch.confusion,
                batch.trials
            );
        }
    }
}

#[test]
fn coding_below_and_above_the_bound() {
    let src = uniform_iid();
    let ham = DistortionMeasure::hamming(2);
    let ch = MemorylessChannel::bsc(0.02).unwrap();
    let below = Experiment {
        source: &src,
        channel: &ch,
        measure: &ham,
        params: small_experiment(0.5, Decoder::Threshold),
    };
    assert!(below.run(64).unwrap().error_rate() < 0.1);
    let above = Experiment {
        params: small_experiment(0.95, Decoder::Threshold),
        ..below
    };
    assert!(above.run(64).unwrap().error_rate() >= 0.5);
}
