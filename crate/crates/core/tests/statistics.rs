use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use varbayes::baseline::{isd, ols_fit, rmssd};
use varbayes::diagnostics::{ess, psrf, psrf_split};
use varbayes::inference::{empirical_pvalue, indirect_effect, summarize};

fn ar1(n: usize, phi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let innovation_sd = (1.0 - phi * phi).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    (0..n)
        .map(|_| {
            x = phi * x + innovation_sd * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

fn iid_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

#[test]
fn ar1_ess_matches_analytic_ratio() {
    let phi = 0.9;
    let analytic = (1.0 - phi) / (1.0 + phi);
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let chains: Vec<Vec<f64>> = (0..4).map(|_| ar1(5000, phi, &mut rng)).collect();
    let ratio = ess(&chains).unwrap().value / 20000.0;
    assert!(
        ratio > 0.8 * analytic && ratio < 1.25 * analytic,
        "ratio {ratio} vs {analytic}"
    );
}

#[test]
fn iid_psrf_tends_to_one() {
    let r = psrf(&iid_chains(4, 100_000, 1)).unwrap().value;
    assert!((r - 1.0).abs() < 0.01, "{r}");
}

#[test]
fn splitting_never_hides_drift() {
    for seed in 0..20 {
        let chains: Vec<Vec<f64>> = iid_chains(4, 500, seed)
            .into_iter()
            .map(|c| c.iter().enumerate().map(|(i, x)| x + 0.01 * i as f64).collect())
            .collect();
        let plain = psrf(&chains).unwrap().value;
        let split = psrf_split(&chains).unwrap().value;
        assert!(split >= plain, "seed {seed}: split {split} < plain {plain}");
    }
}

#[test]
fn ols_interval_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let beta = [1.0, -2.0, 0.5];
    let reps = 5000;
    let mut covered = [0usize; 3];
    for _ in 0..reps {
        let n = 30;
        let x = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y: Vec<f64> = (0..n)
            .map(|r| {
                (0..3).map(|c| x[(r, c)] * beta[c]).sum::<f64>()
                    + 0.7 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let fit = ols_fit(&x, &y, 0.95).unwrap();
        for c in 0..3 {
            if fit.ci_low[c] <= beta[c] && beta[c] <= fit.ci_high[c] {
                covered[c] += 1;
            }
        }
    }
    for c in covered {
        let rate = c as f64 / reps as f64;
        assert!((rate - 0.95).abs() <= 0.02, "coverage {rate}");
    }
}

#[test]
fn ols_recovers_square_systems() {
    let x = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 2.0, 1.0, 1.0, -1.0, 1.0, 3.0, 0.5, 1.0, -2.0, 4.0]);
    let beta = [0.3, -1.7, 2.2];
    let y: Vec<f64> = (0..4).map(|r| (0..3).map(|c| x[(r, c)] * beta[c]).sum()).collect();
    let fit = ols_fit(&x, &y, 0.95).unwrap();
    for c in 0..3 {
        assert!((fit.coefs[c] - beta[c]).abs() < 1e-10);
    }
}

fn chains_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 20), 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diagnostics_are_affine_invariant(chains in chains_strategy(), a in -100.0f64..100.0, b in 0.01f64..100.0, flip: bool) {
        let b = if flip { -b } else { b };
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| a + b * x).collect()).collect();
        let (r0, r1) = (psrf(&chains).unwrap().value, psrf(&moved).unwrap().value);
        prop_assert!((r0 - r1).abs() <= 1e-8 * r0.abs().max(1.0));
        let (e0, e1) = (ess(&chains).unwrap().value, ess(&moved).unwrap().value);
        prop_assert!((e0 - e1).abs() <= 1e-6 * e0.abs().max(1.0));
    }

    #[test]
    fn pvalue_invariances(draws in proptest::collection::vec(-5.0f64..5.0, 1..200), c in 0.001f64..1000.0, seed: u64) {
        let p = empirical_pvalue(&draws);
        let scaled: Vec<f64> = draws.iter().map(|x| x * c).collect();
        prop_assert_eq!(p, empirical_pvalue(&scaled));
        let mut shuffled = draws.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(p, empirical_pvalue(&shuffled));
        if draws.iter().all(|x| *x != 0.0) {
            let neg: Vec<f64> = draws.iter().map(|x| -x).collect();
            prop_assert_eq!(p, empirical_pvalue(&neg));
        }
    }

    #[test]
    fn summary_moments_match_two_pass(draws in proptest::collection::vec(-1e3f64..1e3, 2..300)) {
        let s = summarize("x", &draws, 0.95).unwrap();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assert!((s.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((s.sd - sd).abs() <= 1e-12 * sd.abs().max(1.0));
        prop_assert!(s.ci_low <= s.median && s.median <= s.ci_high);
    }

    #[test]
    fn indirect_effect_is_symmetric(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..100)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert_eq!(indirect_effect("ab", &a, &b, 0.95).unwrap(), indirect_effect("ab", &b, &a, 0.95).unwrap());
    }

    #[test]
    fn isd_is_affine_equivariant(x in proptest::collection::vec(-100.0f64..100.0, 2..50), a in -100.0f64..100.0, b in -10.0f64..10.0) {
        let moved: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        let (s0, s1) = (isd(&x).unwrap(), isd(&moved).unwrap());
        prop_assert!((s1 - b.abs() * s0).abs() <= 1e-9 * (b.abs() * s0).max(1.0));
    }

    #[test]
    fn rmssd_of_arithmetic_sequence_is_its_step(start in -100.0f64..100.0, step in -10.0f64..10.0, n in 2usize..50) {
        let seq: Vec<Option<f64>> = (0..n).map(|i| Some(start + step * i as f64)).collect();
        prop_assert!((rmssd(&seq).unwrap() - step.abs()).abs() <= 1e-9);
    }
}
