#![allow(clippy::needless_range_loop)]

use chargeprice::forecast::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn known() -> MarkovChain {
    let t0 = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.25, 0.5, 0.25],
        vec![0.05, 0.35, 0.6],
    ];
    let t1 = vec![
        vec![0.1, 0.8, 0.1],
        vec![0.3, 0.3, 0.4],
        vec![0.5, 0.0, 0.5],
    ];
    MarkovChain {
        values: vec![vec![0.0, 1.0, 2.0]; 4],
        transitions: vec![t0.clone(), t1.clone(), t0, t1],
        initial_level: 1,
    }
}

/// Day trajectories of K + 1 levels, with the start level drawn uniformly.
fn days(chain: &MarkovChain, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|d| {
            let mut path = sample_path(chain, d % chain.levels(), &mut rng);
            let last = *path.last().unwrap();
            path.push(sample_next(chain, chain.horizons() - 1, last, &mut rng));
            path
        })
        .collect()
}

#[test]
fn recovers_generating_chain() {
    let chain = known();
    let est = estimate_transitions(&days(&chain, 10_000, 8), 3, 4).unwrap();
    for (k, m) in est.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let diff = (m[i][j] - chain.transitions[k][i][j]).abs();
                assert!(diff < 0.02, "T{k}[{i}][{j}] off by {diff}");
            }
        }
    }
}

#[test]
fn sampled_frequencies_follow_transitions() {
    let t = vec![vec![0.2, 0.8], vec![0.65, 0.35]];
    let k = 100_001;
    let chain = MarkovChain {
        values: vec![vec![0.0, 1.0]; k],
        transitions: vec![t.clone(); k],
        initial_level: 0,
    };
    let path = sample_path(&chain, 0, &mut ChaCha8Rng::seed_from_u64(21));
    let mut counts = [[0f64; 2]; 2];
    for w in path.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for i in 0..2 {
        let tot = counts[i][0] + counts[i][1];
        for j in 0..2 {
            assert!((counts[i][j] / tot - t[i][j]).abs() < 0.01);
        }
    }
}

proptest! {
    #[test]
    fn estimation_is_row_stochastic(hist in prop::collection::vec(prop::collection::vec(0usize..4, 6), 1..30)) {
        let t = estimate_transitions(&hist, 4, 5).unwrap();
        for m in &t {
            for row in m {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }

    #[test]
    fn expectation_is_linear_and_bounded(f in prop::collection::vec(-50.0f64..50.0, 3), g in prop::collection::vec(-50.0f64..50.0, 3), a in -3.0f64..3.0, i in 0usize..3, k in 0usize..4) {
        let chain = known();
        let ef = expected_next(&chain, k, i, |j| f[j]);
        let eg = expected_next(&chain, k, i, |j| g[j]);
        let emix = expected_next(&chain, k, i, |j| a * f[j] + g[j]);
        prop_assert!((emix - (a * ef + eg)).abs() < 1e-9);
        let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ef >= lo - 1e-12 && ef <= hi + 1e-12);
    }
}
