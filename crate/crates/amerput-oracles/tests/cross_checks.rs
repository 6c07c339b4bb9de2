use amerput_core::eep::{solve_boundary, PutContract};
use amerput_core::hermite::DensityExpansion;
use amerput_core::lamperti::LampertiTransform;
use amerput_core::models::{build_gbm, build_merton, GbmParams, MertonParams};
use amerput_oracles::*;
use approx::assert_abs_diff_eq;

fn table_params(sigma: f64) -> GbmParams {
    GbmParams { r: 0.0488, delta: 0.0, sigma }
}

const GRID: [(f64, f64, f64); 27] = {
    let mut out = [(0.0, 0.0, 0.0); 27];
    let ks = [35.0, 40.0, 45.0];
    let sigmas = [0.2, 0.3, 0.4];
    let ts = [0.0833, 0.3333, 0.5833];
    let mut i = 0;
    while i < 27 {
        out[i] = (ks[(i / 3) % 3], sigmas[i / 9], ts[i % 3]);
        i += 1;
    }
    out
};

#[test]
fn binomial_reproduces_published_benchmarks() {
    let c = PutContract::new(40.0, 0.3333, 40.0).unwrap();
    assert_abs_diff_eq!(crr_binomial_put(&table_params(0.2), &c, 10_000).unwrap(), 1.5798, epsilon = 5e-5);
    let c = PutContract::new(45.0, 0.5833, 40.0).unwrap();
    assert_abs_diff_eq!(crr_binomial_put(&table_params(0.4), &c, 10_000).unwrap(), 7.3830, epsilon = 5e-5);
}

#[test]
fn binomial_is_stable_under_refinement() {
    for (k, sigma, t) in GRID {
        let c = PutContract::new(k, t, 40.0).unwrap();
        let fine = crr_binomial_put(&table_params(sigma), &c, 10_000).unwrap();
        let half = crr_binomial_put(&table_params(sigma), &c, 5_000).unwrap();
        assert!((fine - half).abs() <= 5e-4, "{k} {sigma} {t}: {fine} vs {half}");
    }
}

#[test]
fn american_dominates_european() {
    for (k, sigma, t) in GRID {
        let c = PutContract::new(k, t, 40.0).unwrap();
        let p = table_params(sigma);
        let am = crr_binomial_put(&p, &c, 2_000).unwrap();
        assert!(am >= black_scholes_put(&p, &c), "{k} {sigma} {t}");
    }
    let c = PutContract::new(40.0, 0.3333, 40.0).unwrap();
    assert!(black_scholes_put(&table_params(0.2), &c) < 1.5798);
}

fn seeds_within_three_errors(seeds: u64, paths: usize) -> usize {
    let c = PutContract::new(40.0, 0.5, 40.0).unwrap();
    let p = table_params(0.2);
    let want = black_scholes_put(&p, &c);
    let base = OracleConfig::default().mc_seed;
    (0..seeds)
        .filter(|i| {
            let cfg = OracleConfig { mc_paths: paths, mc_seed: base + i, ..Default::default() };
            let est = mc_european_put(McModel::Gbm(p), &c, &cfg).unwrap();
            (est.price - want).abs() <= 3.0 * est.std_err
        })
        .count()
}

#[test]
fn monte_carlo_brackets_black_scholes() {
    let inside = seeds_within_three_errors(20, 100_000);
    assert!(inside as f64 >= 0.99 * 20.0, "{inside}/20 seeds within 3 standard errors");
    // With 20 seeds one honest 3-sigma miss already drops the rate to 95%,
    // so the rate is also checked where 99% is meaningful.
    let inside = seeds_within_three_errors(400, 10_000);
    assert!(inside as f64 >= 0.99 * 400.0, "{inside}/400 seeds within 3 standard errors");
}

#[test]
fn monte_carlo_euler_brackets_black_scholes() {
    let p = table_params(0.3);
    let spec = build_gbm(&p).unwrap();
    let c = PutContract::new(40.0, 0.25, 40.0).unwrap();
    let cfg = OracleConfig { mc_paths: 40_000, mc_time_steps: 100, ..Default::default() };
    let est = mc_european_put(McModel::Diffusion(&spec), &c, &cfg).unwrap();
    assert!((est.price - black_scholes_put(&p, &c)).abs() <= 3.0 * est.std_err);
    assert_eq!(est.explosive, 0);
}

#[test]
fn monte_carlo_is_reproducible() {
    let m = build_merton(&MertonParams::default()).unwrap();
    let c = PutContract::new(40.0, 0.5, 40.0).unwrap();
    let cfg = OracleConfig { mc_paths: 50_000, mc_seed: 7, ..Default::default() };
    let a = mc_european_put(McModel::Jump(&m), &c, &cfg).unwrap();
    let b = mc_european_put(McModel::Jump(&m), &c, &cfg).unwrap();
    assert_eq!(a.price.to_bits(), b.price.to_bits());
    assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    let other = mc_european_put(McModel::Jump(&m), &c, &OracleConfig { mc_seed: 8, ..cfg }).unwrap();
    assert_ne!(a.price, other.price);
}

#[test]
fn merton_series_matches_monte_carlo() {
    let mp = MertonParams::default();
    let m = build_merton(&mp).unwrap();
    let c = PutContract::new(40.0, 0.5, 40.0).unwrap();
    let cfg = OracleConfig { mc_paths: 2_000_000, ..Default::default() };
    let est = mc_european_put(McModel::Jump(&m), &c, &cfg).unwrap();
    let series = merton_series_put(&mp, &c, 200);
    assert!((est.price - series).abs() <= 3.0 * est.std_err, "{} vs {series} (se {})", est.price, est.std_err);
}

#[test]
fn finite_differences_converge_to_the_tree() {
    let p = table_params(0.2);
    let c = PutContract::new(35.0, 0.0833, 40.0).unwrap();
    let bench = crr_binomial_put(&p, &c, 10_000).unwrap();
    let coarse = fd_american_put(&p, &c, &OracleConfig::default()).unwrap();
    assert!((coarse.price - bench).abs() <= 2e-2);
    let cfg = OracleConfig { fd_space_steps: 600, fd_time_steps: 600, ..Default::default() };
    for (k, sigma, t) in [(40.0, 0.2, 0.5833), (45.0, 0.4, 0.3333), (35.0, 0.3, 0.0833)] {
        let c = PutContract::new(k, t, 40.0).unwrap();
        let fd = fd_american_put(&table_params(sigma), &c, &cfg).unwrap();
        let bench = crr_binomial_put(&table_params(sigma), &c, 10_000).unwrap();
        assert!((fd.price - bench).abs() <= 5e-3, "{k} {sigma} {t}: {} vs {bench}", fd.price);
    }
}

#[test]
fn tree_boundary_tracks_expansion_boundary() {
    let p = table_params(0.2);
    let c = PutContract::new(40.0, 0.5833, 40.0).unwrap();
    let e = DensityExpansion::new(LampertiTransform::new(build_gbm(&p).unwrap(), 40.0).unwrap(), 2).unwrap();
    let ours = solve_boundary(&e, &c, 50).unwrap();
    let tree = binomial_implied_boundary(&p, &c, 10_000, 50).unwrap();
    assert_eq!(tree.value(50), 40.0);
    for n in 0..48 {
        let (a, b) = (ours.value(n), tree.value(n));
        assert!((a - b).abs() <= 0.01 * b, "step {n}: {a} vs {b}");
    }
}

#[test]
fn expansion_density_matches_lognormal() {
    let p = table_params(0.2);
    let dt: f64 = 0.0833;
    let e = DensityExpansion::new(LampertiTransform::new(build_gbm(&p).unwrap(), 40.0).unwrap(), 2).unwrap();
    // Central 99% of the log-price law.
    let sd = 0.2 * dt.sqrt();
    let m = 40f64.ln() + (0.0488 - 0.02) * dt;
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let x = m + sd * (-2.576 + 5.152 * i as f64 / 200.0);
        let exact = lognormal_density(&p, x.exp(), 40.0, dt);
        worst = worst.max((e.density(x.exp(), 40.0, dt).unwrap() / exact - 1.0).abs());
    }
    assert!(worst <= 1e-3, "sup relative error {worst}");
}
