use clustcube_core::mdregress::{fit, RegressionStats};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<(Vec<f64>, f64)> {
    (0..n)
        .map(|_| {
            let mut x = vec![1.0];
            x.extend((0..p).map(|_| rng.random_range(-5.0..5.0)));
            let y = 0.5
                + x[1..]
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (j as f64 + 1.0) * v)
                    .sum::<f64>()
                + rng.random_range(-1.0..1.0);
            (x, y)
        })
        .collect()
}

fn dense(rows: &[(Vec<f64>, f64)]) -> (DMatrix<f64>, DVector<f64>) {
    let d = rows[0].0.len();
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].0[j]);
    let y = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    (x, y)
}

fn stats_of(rows: &[(Vec<f64>, f64)]) -> RegressionStats {
    RegressionStats::from_rows(rows[0].0.len(), rows.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn stats_match_dense_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = random_rows(&mut rng, 20, 3);
    let (x, y) = dense(&rows);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let s = stats_of(&rows);
    for i in 0..4 {
        assert!(close(s.xty[i], xty[i], 1e-12));
        for j in 0..4 {
            assert!(close(s.xtx_at(i, j), xtx[(i, j)], 1e-12));
        }
    }
    assert!(close(s.yty, y.dot(&y), 1e-12));
}

#[test]
fn fit_matches_normal_equation_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = random_rows(&mut rng, 20, 3);
    let (x, y) = dense(&rows);
    let oracle = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
    let f = fit(&stats_of(&rows), 0.0).unwrap();
    for j in 0..4 {
        assert!((f.beta[j] - oracle[j]).abs() <= 1e-9, "beta[{j}]");
    }

    // Oracle r2 and rmse from raw residuals.
    let resid = &y - &x * &oracle;
    let ssr = resid.dot(&resid);
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    assert!((f.r2 - (1.0 - ssr / sst)).abs() < 1e-9);
    assert!((f.rmse - (ssr / 20.0).sqrt()).abs() < 1e-9);
}

#[test]
fn ridge_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = random_rows(&mut rng, 15, 4);
    let (x, y) = dense(&rows);
    let mut ip = DMatrix::<f64>::identity(5, 5);
    ip[(0, 0)] = 0.0;
    let oracle = (x.transpose() * &x + ip * 2.5)
        .lu()
        .solve(&(x.transpose() * &y))
        .unwrap();
    let f = fit(&stats_of(&rows), 2.5).unwrap();
    for j in 0..5 {
        assert!((f.beta[j] - oracle[j]).abs() <= 1e-9);
    }
}

#[test]
fn halves_merge_to_whole() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows = random_rows(&mut rng, 40, 2);
    let whole = stats_of(&rows);
    let merged = stats_of(&rows[..20]).merge(&stats_of(&rows[20..])).unwrap();
    assert_eq!(merged.n, whole.n);
    for (a, b) in merged
        .xtx
        .iter()
        .zip(&whole.xtx)
        .chain(merged.xty.iter().zip(&whole.xty))
    {
        assert!(close(*a, *b, 1e-12));
    }
    assert!(close(merged.yty, whole.yty, 1e-12));
    assert!(close(merged.sum_y, whole.sum_y, 1e-12));
}

#[test]
fn residuals_orthogonal_to_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = random_rows(&mut rng, 50, 3);
    let (x, y) = dense(&rows);
    let f = fit(&stats_of(&rows), 0.0).unwrap();
    let beta = DVector::from_vec(f.beta.clone());
    let g = x.transpose() * (&y - &x * beta);
    assert!(g.norm() <= 1e-6 * (x.transpose() * &y).norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_fit_equals_pooled_fit(seed in any::<u64>(), n in 12usize..80, p in 1usize..4, cuts in prop::collection::vec(0.0f64..1.0, 1..7)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n, p);
        let mut bounds: Vec<usize> = cuts.iter().map(|c| (c * n as f64) as usize).collect();
        bounds.push(0);
        bounds.push(n);
        bounds.sort();
        let parts: Vec<RegressionStats> = bounds
            .windows(2)
            .filter(|w| w[0] < w[1])
            .map(|w| stats_of(&rows[w[0]..w[1]]))
            .collect();
        let merged = RegressionStats::merge_all(p + 1, &parts).unwrap();
        let a = fit(&merged, 0.0).unwrap();
        let b = fit(&stats_of(&rows), 0.0).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn fit_invariants(seed in any::<u64>(), n in 1usize..30, lambda in prop_oneof![Just(0.0), 0.0f64..10.0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n, 2);
        let s = stats_of(&rows);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(s.xtx_at(i, j), s.xtx_at(j, i));
            }
        }
        let f = fit(&s, lambda).unwrap();
        prop_assert!(f.r2 <= 1.0);
        prop_assert!(f.rmse >= 0.0);
    }
}
