use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ligbind::evaluation::{
    average_ranks, mae, pearson, ranking_power, rmse, sd_regression, spearman, Cluster, ClusterMember, MetricsReport,
};

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn qn(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn f(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

fn mean(v: &[BigRational]) -> BigRational {
    v.iter().fold(BigRational::zero(), |a, b| a + b) / qn(v.len())
}

fn exact(v: &[f64]) -> Vec<BigRational> {
    v.iter().map(|x| q(*x)).collect()
}

fn rmse_oracle(y: &[f64], p: &[f64]) -> f64 {
    let sq: Vec<BigRational> = y.iter().zip(p).map(|(a, b)| (q(*a) - q(*b)).pow(2)).collect();
    f(&mean(&sq)).sqrt()
}

fn mae_oracle(y: &[f64], p: &[f64]) -> f64 {
    let ab: Vec<BigRational> = y.iter().zip(p).map(|(a, b)| (q(*a) - q(*b)).abs()).collect();
    f(&mean(&ab))
}

/// Exact centered moments `(Sxx, Syy, Sxy)`.
fn moments(x: &[BigRational], y: &[BigRational]) -> (BigRational, BigRational, BigRational) {
    let (mx, my) = (mean(x), mean(y));
    let mut s = (BigRational::zero(), BigRational::zero(), BigRational::zero());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - &mx, b - &my);
        s.0 += &dx * &dx;
        s.1 += &dy * &dy;
        s.2 += &dx * &dy;
    }
    s
}

fn pearson_exact(x: &[BigRational], y: &[BigRational]) -> f64 {
    let (sxx, syy, sxy) = moments(x, y);
    let r2 = f(&(&sxy * &sxy / (sxx * syy)));
    r2.sqrt().copysign(f(&sxy))
}

fn sd_oracle(y: &[f64], p: &[f64]) -> f64 {
    let (ye, pe) = (exact(y), exact(p));
    let (spp, _, spy) = moments(&pe, &ye);
    let b = spy / spp;
    let a = mean(&ye) - &b * mean(&pe);
    let ss = ye.iter().zip(&pe).fold(BigRational::zero(), |acc, (yi, xi)| {
        let r = yi - (&a + &b * xi);
        acc + &r * &r
    });
    f(&(ss / qn(y.len() - 1))).sqrt()
}

fn spearman_oracle(y: &[f64], p: &[f64]) -> f64 {
    // average ranks are half-integers, so they are exact in f64
    pearson_exact(&exact(&average_ranks(y)), &exact(&average_ranks(p)))
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..12.0)).collect();
    let p: Vec<f64> = y.iter().map(|v| 0.7 * v + rng.random_range(-2.0..2.0)).collect();
    (y, p)
}

#[test]
fn metrics_match_exact_rational_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n = 100;
        let (mut y, p) = random_pair(&mut rng, n);
        if trial % 10 == 0 {
            // force ties into the rank computation
            for v in y.iter_mut().step_by(3) {
                *v = v.round();
            }
        }
        let checks = [
            ("rmse", rmse(&y, &p).unwrap(), rmse_oracle(&y, &p)),
            ("mae", mae(&y, &p).unwrap(), mae_oracle(&y, &p)),
            ("pearson", pearson(&y, &p).unwrap(), pearson_exact(&exact(&y), &exact(&p))),
            ("spearman", spearman(&y, &p).unwrap(), spearman_oracle(&y, &p)),
            ("sd", sd_regression(&y, &p).unwrap(), sd_oracle(&y, &p)),
        ];
        for (name, got, want) in checks {
            assert!((got - want).abs() < 1e-12, "{name} trial {trial}: {got} vs {want}");
        }
    }
}

#[test]
fn spearman_fixed_case_is_exact() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap(), 0.9);
    // rank-difference formula, Σd² = 2
    let n = 5.0f64;
    assert_eq!(1.0 - 6.0 * 2.0 / (n * (n * n - 1.0)), 0.9);
}

#[test]
fn report_csv_lists_every_metric() {
    let r = MetricsReport::compute(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
    assert!((r.sd - 0.5).abs() < 1e-15);
    let csv = r.to_csv();
    let keys: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(keys, ["metric", "n", "rmse", "mae", "sd", "pearson"]);
}

fn clusters_from(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<Cluster> {
    sizes
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            let (y, p) = random_pair(rng, m);
            Cluster {
                target_id: format!("T{t}"),
                members: (0..m)
                    .map(|i| ClusterMember { complex_id: format!("T{t}-{i}"), affinity: y[i], predicted: p[i] })
                    .collect(),
            }
        })
        .collect()
}

#[test]
fn ranking_power_matches_componentwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let clusters = clusters_from(&mut rng, &[4, 4, 5, 3, 2, 6, 4, 4]);
        let per: Vec<BigRational> = clusters
            .iter()
            .map(|c| {
                let y: Vec<f64> = c.members.iter().map(|m| m.affinity).collect();
                let p: Vec<f64> = c.members.iter().map(|m| m.predicted).collect();
                q(spearman_oracle(&y, &p))
            })
            .collect();
        let oracle = f(&mean(&per));
        assert!((ranking_power(&clusters).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn ranking_power_survives_member_removal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut clusters = clusters_from(&mut rng, &[5, 5]);
    while clusters[0].members.len() > 2 {
        clusters[0].members.pop();
        let rp = ranking_power(&clusters).unwrap();
        assert!((-1.0..=1.0).contains(&rp));
    }
}

fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(-50.0f64..50.0, n)))
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_maps((y, p) in arb_pair()) {
        if let Ok(base) = spearman(&y, &p) {
            let warped: Vec<f64> = p.iter().map(|v| v * v * v + 2.0 * v).collect();
            let squashed: Vec<f64> = y.iter().map(|v| (v / 10.0).tanh()).collect();
            prop_assert!((spearman(&y, &warped).unwrap() - base).abs() < 1e-12);
            if let Ok(s) = spearman(&squashed, &p) {
                // tanh may merge nearby values into ties; only check when ranks survive
                if average_ranks(&squashed) == average_ranks(&y) {
                    prop_assert!((s - base).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pearson_affine_behavior((y, p) in arb_pair(), a in 0.1f64..5.0, b in -10.0f64..10.0) {
        if let Ok(base) = pearson(&y, &p) {
            let up: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            let down: Vec<f64> = p.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&y, &up).unwrap() - base).abs() < 1e-9);
            prop_assert!((pearson(&y, &down).unwrap() + base).abs() < 1e-9);
        }
    }

    #[test]
    fn sd_absorbs_affine_predictions((y, p) in arb_pair(), a in 0.1f64..5.0, b in -10.0f64..10.0) {
        if let Ok(base) = sd_regression(&y, &p) {
            let moved: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            prop_assert!((sd_regression(&y, &moved).unwrap() - base).abs() < 1e-8 * base.max(1.0));
        }
    }

    #[test]
    fn metrics_ignore_sample_order((y, p) in arb_pair(), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..y.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        prop_assert!((rmse(&y, &p).unwrap() - rmse(&ys, &ps).unwrap()).abs() < 1e-12);
        prop_assert!((mae(&y, &p).unwrap() - mae(&ys, &ps).unwrap()).abs() < 1e-12);
        if let (Ok(a), Ok(b)) = (pearson(&y, &p), pearson(&ys, &ps)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (spearman(&y, &p), spearman(&ys, &ps)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (sd_regression(&y, &p), sd_regression(&ys, &ps)) {
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        }
    }
}
