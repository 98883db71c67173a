use std::collections::BTreeSet;
use std::f64::consts::PI;

use zdmix_core::billiard::{phi_cdf, BilliardTable};
use zdmix_core::extension::birkhoff_sum;
use zdmix_core::stats::ks_test;
use zdmix_core::{Cell, RngSpec};

mod common;

fn table() -> BilliardTable {
    BilliardTable::default_table().unwrap()
}

#[test]
fn mean_free_path_matches_santalo() {
    let t = table();
    // Mean flight under μ̄ is π |Q| / |∂Q| for the free region Q of one cell.
    let want = PI * t.free_area() / t.total_perimeter();
    let n = 1_000_000;
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut rng = RngSpec::new(31, 0).rng();
    for _ in 0..n {
        let x = t.sample_mu_bar(&mut rng);
        let f = t.billiard_map(&x).unwrap().flight;
        sum += f;
        sum2 += f * f;
    }
    let mean = sum / n as f64;
    let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - want).abs() <= 3.0 * se, "{mean} ± {se} vs {want}");
}

#[test]
fn scatterer_frequencies_follow_perimeters() {
    let t = table();
    let n = 200_000;
    let mut rng = RngSpec::new(32, 0).rng();
    let hits = (0..n).filter(|_| t.sample_mu_bar(&mut rng).scatterer == 0).count();
    let p = 0.45 / 0.65;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits as f64 / n as f64 - p).abs() <= 3.0 * se);
}

#[test]
fn sampled_phi_follows_cosine_law() {
    let t = table();
    let mut rng = RngSpec::new(33, 0).rng();
    let phis: Vec<f64> = (0..1_000_000).map(|_| t.sample_mu_bar(&mut rng).phi).collect();
    let ks = ks_test(&phis, phi_cdf).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn psi_values_form_the_frozen_set() {
    let t = table();
    let mut seen = BTreeSet::new();
    let mut rng = RngSpec::new(34, 0).rng();
    for _ in 0..1_000_000 {
        let x = t.sample_mu_bar(&mut rng);
        let psi = t.billiard_map(&x).unwrap().psi;
        assert!(psi.linf() <= t.max_psi());
        seen.insert(psi);
    }
    let seen: Vec<Cell> = seen.into_iter().collect();
    let frozen: Vec<Cell> = common::fixture("psi_set.json", &seen);
    assert_eq!(seen, frozen);
}

#[test]
fn trajectories_are_reproducible() {
    let t = table();
    let run = || {
        let mut rng = RngSpec::new(35, 7).rng();
        let x = t.sample_mu_bar(&mut rng);
        birkhoff_sum(&t, &x, 500).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.points, b.points);
    assert_eq!(a.sums, b.sums);
}
