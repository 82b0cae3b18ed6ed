use bregquant::divergence::{DivergenceSpec, ScalarKind};
use bregquant::numeric::rng_from_seed;
use bregquant::quantize::{
    assign, distortion_on_samples, lloyd, train_from, Codebook, LloydConfig, LloydInput, Similarity,
};
use bregquant::Points;
use proptest::prelude::*;
use rand::Rng;

fn cloud(seed: u64, n: usize, d: usize, lo: f64, hi: f64) -> Points {
    let mut rng = rng_from_seed(seed);
    Points::from_flat(d, (0..n * d).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn map(p: &Points, f: impl Fn(f64) -> f64) -> Points {
    Points::from_flat(p.dim(), p.as_flat().iter().map(|&v| f(v)).collect()).unwrap()
}

fn exact() -> LloydConfig {
    LloydConfig {
        tol: 0.0,
        max_iter: 2_000,
        ..LloydConfig::default()
    }
}

#[test]
fn squared_euclidean_lloyd_commutes_with_translation() {
    let sim: Similarity = DivergenceSpec::sq_euclid(2).into();
    let pts = cloud(1, 3_000, 2, 0.0, 1.0);
    let init = pts.prefix(7);
    let base = lloyd(LloydInput::Samples(&pts), &init, &sim, &exact()).unwrap();
    let shift = 3.25;
    let moved = lloyd(
        LloydInput::Samples(&map(&pts, |v| v + shift)),
        &map(&init, |v| v + shift),
        &sim,
        &exact(),
    )
    .unwrap();
    for (a, b) in base
        .codebook
        .points
        .iter()
        .zip(moved.codebook.points.iter())
    {
        for k in 0..2 {
            assert!((a[k] + shift - b[k]).abs() < 1e-9, "{a:?} {b:?}");
        }
    }
    let (e0, e1) = (base.trace.last().unwrap(), moved.trace.last().unwrap());
    assert!((e0 - e1).abs() < 1e-9 * e0);
}

#[test]
fn itakura_saito_lloyd_commutes_with_scaling() {
    // phi(c xi, c x) = phi(xi, x) for the Itakura-Saito divergence
    let sim: Similarity = DivergenceSpec::separable(ScalarKind::ItakuraSaito, 2).into();
    let pts = cloud(2, 3_000, 2, 0.5, 4.0);
    let init = pts.prefix(5);
    let base = lloyd(LloydInput::Samples(&pts), &init, &sim, &exact()).unwrap();
    let c = 8.0;
    let scaled = lloyd(
        LloydInput::Samples(&map(&pts, |v| c * v)),
        &map(&init, |v| c * v),
        &sim,
        &exact(),
    )
    .unwrap();
    for (a, b) in base
        .codebook
        .points
        .iter()
        .zip(scaled.codebook.points.iter())
    {
        for k in 0..2 {
            assert!((c * a[k] - b[k]).abs() < 1e-9 * b[k].abs(), "{a:?} {b:?}");
        }
    }
    let (e0, e1) = (base.trace.last().unwrap(), scaled.trace.last().unwrap());
    assert!((e0 - e1).abs() < 1e-9 * e0);
}

/// Brute-force optimum over all labelings of `xs` into `n` groups, with each
/// group represented by its mean.
fn best_partition(xs: &[f64], n: usize) -> f64 {
    let m = xs.len();
    let mut best = f64::INFINITY;
    for code in 0..n.pow(m as u32) {
        let mut c = code;
        let mut groups = vec![Vec::new(); n];
        for &x in xs {
            groups[c % n].push(x);
            c /= n;
        }
        let cost: f64 = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            })
            .sum();
        best = best.min(cost);
    }
    best / m as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lloyd_from_every_seed_subset_finds_the_partition_optimum(xs in prop::collection::vec(-5.0f64..5.0, 3..9), n in 1usize..4) {
        let sim: Similarity = DivergenceSpec::sq_euclid(1).into();
        let pts = Points::from_scalars(&xs);
        let m = xs.len();
        let inits = (0..1usize << m).filter(|mask| mask.count_ones() as usize == n).map(|mask| {
            let chosen: Vec<f64> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| xs[i]).collect();
            Ok(Points::from_scalars(&chosen))
        });
        let res = train_from(LloydInput::Samples(&pts), inits, &sim, &exact()).unwrap();
        let got = distortion_on_samples(&res.best.codebook, &pts, 2.0, &sim).unwrap().value;
        let want = best_partition(&xs, n);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-12), "{} vs {}", got, want);
    }

    #[test]
    fn assignment_matches_a_linear_scan(seed in 0u64..1_000) {
        let sim: Similarity = DivergenceSpec::separable(ScalarKind::KullbackLeibler, 2).into();
        let cb = Codebook::new(cloud(seed, 9, 2, 0.1, 3.0), "random", 2.0);
        for xi in cloud(seed + 1, 50, 2, 0.1, 3.0).iter() {
            let scan = cb
                .points
                .iter()
                .map(|a| sim.eval(xi, a))
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
            let got = assign(&cb, xi, &sim).unwrap();
            // ties within rounding may resolve either way
            prop_assert!(got == scan.0 || (sim.eval(xi, cb.points.row(got)) - scan.1).abs() <= 1e-12 * (1.0 + scan.1));
        }
    }
}
