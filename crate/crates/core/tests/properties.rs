use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mutctl::codediff::{diff_percent, diff_percent_seq, lcs_len, SourceText};
use mutctl::llm::{extract_code, mock_mutate, sloppy_mock_mutate};
use mutctl::metrics::{aocc, mse, tdw_weights, AdherenceSample, AoccBounds, EvalTrace};
use mutctl::powerlaw::PowerLawConfig;

/// Textbook O(nm) table.
fn lcs_table(a: &[u8], b: &[u8]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn program(n: usize) -> SourceText {
    let text: String = (0..n).map(|i| format!("    step_{i} = {i} * x\n")).collect();
    SourceText::normalize(&text)
}

fn trace(values: &[f64], budget: usize) -> EvalTrace {
    let mut t = EvalTrace::empty(budget, AoccBounds::default());
    for &v in values {
        t.record(v);
    }
    t
}

proptest! {
    #[test]
    fn pmf_ratio_and_monotone(beta in 0.2f64..4.0, n in 4usize..400) {
        let cfg = PowerLawConfig::new(beta, n).unwrap();
        let table = cfg.pmf_table();
        prop_assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(table.windows(2).all(|w| w[1] < w[0]));
        let a = 1 + (n / 7) % (n / 2);
        let ratio = cfg.pmf(1).unwrap() / cfg.pmf(a).unwrap();
        prop_assert!((ratio / (a as f64).powf(beta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_rates_stay_in_support(beta in 0.5f64..3.0, n in 2usize..500, seed: u64) {
        let s = PowerLawConfig::new(beta, n).unwrap().sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = s.sample_alpha(&mut rng);
            prop_assert!(a >= 1 && a <= n / 2);
            let r = s.sample_rate_percent(&mut rng);
            prop_assert!(r > 0.0 && r <= 50.0);
        }
    }

    #[test]
    fn lcs_matches_table(a in prop::collection::vec(0u8..4, 0..40), b in prop::collection::vec(0u8..4, 0..40)) {
        prop_assert_eq!(lcs_len(&a, &b), lcs_table(&a, &b));
    }

    #[test]
    fn diff_symmetric_and_bounded(a in prop::collection::vec(0u8..5, 0..30), b in prop::collection::vec(0u8..5, 1..30)) {
        let d = diff_percent_seq(&a, &b).unwrap();
        prop_assert_eq!(d, diff_percent_seq(&b, &a).unwrap());
        prop_assert!((0.0..=100.0).contains(&d));
        prop_assert_eq!(diff_percent_seq(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn diff_ignores_layout(lines in prop::collection::vec("[a-c]{1,3}", 1..15)) {
        let plain = lines.join("\n");
        let noisy: String = lines.iter().map(|l| format!("{l}   \n\n")).collect();
        prop_assert_eq!(diff_percent(&SourceText::normalize(&plain), &SourceText::normalize(&noisy)).unwrap(), 0.0);
    }

    #[test]
    fn mse_scale_coherent(x in 0.5f64..60.0, ds in prop::collection::vec(0.1f64..100.0, 1..10), c in 0.1f64..10.0) {
        let base = mse(&AdherenceSample::new(x, ds.clone())).unwrap();
        let scaled = mse(&AdherenceSample::new(c * x, ds.iter().map(|d| c * d).collect())).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn tdw_weights_normalized_and_decreasing(beta in 0.1f64..4.0) {
        let w = tdw_weights(&[2.0, 5.0, 10.0, 20.0, 40.0], beta).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn aocc_monotone_and_pad_invariant(
        raw in prop::collection::vec(1e-10f64..1e3, 1..60),
        shrink in prop::collection::vec(0.0f64..1.0, 60),
        extra in 0usize..40,
    ) {
        let budget = raw.len() + extra;
        let worse = trace(&raw, budget);
        let better_raw: Vec<f64> = raw.iter().zip(&shrink).map(|(v, s)| v * s).collect();
        let better = trace(&better_raw, budget);
        let (a, b) = (aocc(&worse).unwrap(), aocc(&better).unwrap());
        prop_assert!(b >= a - 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((aocc(&worse.padded()).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn exact_mock_delivers_quantized_rate(n in 2usize..200, rate in 0.5f64..99.5, seed: u64) {
        let parent = program(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let child = extract_code(&mock_mutate(&parent, rate, &mut rng)).unwrap();
        let k = ((n as f64 * rate / 100.0).round() as usize).clamp(1, n);
        prop_assert_eq!(child.line_count(), n);
        prop_assert_eq!(diff_percent(&parent, &child).unwrap(), 100.0 * k as f64 / n as f64);
    }

    #[test]
    fn sloppy_mock_lands_in_band(n in 5usize..200, rate in 0.5f64..99.5, seed: u64) {
        let parent = program(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let child = extract_code(&sloppy_mock_mutate(&parent, rate, &mut rng)).unwrap();
        let d = diff_percent(&parent, &child).unwrap();
        let k = d * n as f64 / 100.0;
        prop_assert!(k >= (0.4 * n as f64).ceil() - 1e-9 && k <= (0.9 * n as f64).floor() + 1e-9);
    }
}
