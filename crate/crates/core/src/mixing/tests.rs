use super::*;
use crate::billiard::BilliardTable;
use crate::observables::{make_observable, CellWeight, CylinderFunction, CellWeightProfile, LocalSpec, ObservableOptions, ObservableSpec, PerCellLocal};
use crate::oracle::{exact_return_tail, marginal_at, Edge, LatticeKernel, MarkovExtension, DEFAULT_CELL_BUDGET};
use crate::stats::{empirical_cell_prob, CovarianceMatrix};
use std::f64::consts::PI;

const BUDGET: usize = DEFAULT_CELL_BUDGET;

fn dyadic3() -> MarkovExtension {
    let e = |to, prob, x, y| Edge { to, prob, jump: Cell::new(x, y) };
    MarkovExtension::from_edges(
        vec![
            vec![e(0, 0.5, 1, 0), e(1, 0.25, 0, 1), e(2, 0.25, 0, 0)],
            vec![e(0, 0.5, -1, 0), e(2, 0.5, 0, 0)],
            vec![e(0, 0.25, 0, -1), e(1, 0.25, 1, 0), e(2, 0.5, 0, 0)],
        ],
        2,
    )
    .unwrap()
}

fn specs() -> Vec<ObservableSpec> {
    let geometric = ObservableSpec::new(
        CellWeightProfile::Geometric { amplitude: 1.0, rho: 0.5 },
        LocalSpec::SiteIndicator { site: 0 },
    );
    let mut finite = ObservableSpec::constant(CellWeightProfile::Finite {
        weights: vec![
            CellWeight { cell: Cell::ZERO, weight: 1.0 },
            CellWeight { cell: Cell::new(1, 0), weight: -0.5 },
            CellWeight { cell: Cell::new(0, -1), weight: 2.0 },
        ],
    });
    finite.per_cell = vec![PerCellLocal {
        cell: Cell::new(1, 0),
        local: LocalSpec::SiteIndicator { site: 1 },
    }];
    vec![ObservableSpec::indicator_cell(), geometric, finite]
}

fn observe<S: ExtensionSystem>(system: &S, spec: &ObservableSpec) -> Observable {
    make_observable(system, spec, &ObservableOptions::default()).unwrap()
}

/// All edge paths of length n from `start`: (end state, S_n, probability).
fn enumerate(chain: &MarkovExtension, start: usize, n: usize) -> Vec<(usize, Cell, f64)> {
    let mut paths = vec![(start, Cell::ZERO, 1.0)];
    for _ in 0..n {
        paths = paths
            .into_iter()
            .flat_map(|(s, l, w)| chain.edges(s).iter().map(move |e| (e.to, l + e.jump, w * e.prob)))
            .collect();
    }
    paths
}

fn local_at(obs: &Observable, cell: Cell, state: usize) -> f64 {
    obs.weight(cell) * obs.local(cell).eval(&[Symbol::new(state as u32, Cell::ZERO)])
}

#[test]
fn exact_correlation_matches_path_enumeration() {
    let chain = dyadic3();
    let obs: Vec<Observable> = specs().iter().map(|s| observe(&chain, s)).collect();
    for n in [1, 3, 6] {
        for u in &obs {
            for v in &obs {
                let mut want = 0.0;
                for (i, p) in chain.stationary().iter().enumerate() {
                    for (j, s, w) in enumerate(&chain, i, n) {
                        for (l, _) in u.support() {
                            want += p * w * local_at(u, l, i) * local_at(v, l + s, j);
                        }
                    }
                }
                let got = exact_correlation(&chain, u, v, n, BUDGET).unwrap();
                assert!((got - want).abs() < 1e-13, "n={n}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn indicator_correlation_is_the_cell_probability() {
    let table = BilliardTable::default_table().unwrap();
    let ind = observe(&table, &ObservableSpec::indicator_cell());
    let a = correlation_integral(&table, &ind, &ind, 20, 3000, 17).unwrap();
    let b = empirical_cell_prob(&table, 20, Cell::ZERO, 3000, 17).unwrap();
    assert_eq!((a.value, a.stderr), (b.value, b.stderr));

    let srw = MarkovExtension::simple_random_walk();
    let ind = observe(&srw, &ObservableSpec::indicator_cell());
    let a = correlation_integral(&srw, &ind, &ind, 10, 5000, 3).unwrap();
    let b = empirical_cell_prob(&srw, 10, Cell::ZERO, 5000, 3).unwrap();
    assert_eq!(a.value, b.value);
}

#[test]
fn zero_observable_gives_zero() {
    let chain = dyadic3();
    let u = observe(&chain, &specs()[1]);
    let zero = observe(&chain, &ObservableSpec::constant(CellWeightProfile::zero()));
    let e = correlation_integral(&chain, &u, &zero, 7, 2000, 1).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(exact_correlation(&chain, &u, &zero, 7, BUDGET).unwrap(), 0.0);
}

#[test]
fn common_random_numbers_make_estimates_bilinear() {
    let chain = MarkovExtension::random(3, 11);
    let sp = specs();
    let u = observe(&chain, &sp[1]);
    let v = observe(&chain, &sp[2]);
    let mut doubled = sp[1].clone();
    doubled.profile = CellWeightProfile::Geometric { amplitude: 2.0, rho: 0.5 };
    let u2 = observe(&chain, &doubled);
    let w = observe(&chain, &sp[0]);
    let curves = correlation_curves(&chain, &[(&u, &v), (&u2, &v), (&u, &w)], &[4, 9], 4000, 5).unwrap();
    for i in 0..2 {
        assert_eq!(curves.estimate(1, i).value, 2.0 * curves.estimate(0, i).value);
    }
    // I(u, v + w) = I(u, v) + I(u, w) sample by sample.
    let mut sum_spec = sp[2].clone();
    if let CellWeightProfile::Finite { weights } = &mut sum_spec.profile {
        weights[0].weight += 1.0;
    }
    let vw = observe(&chain, &sum_spec);
    let joint = correlation_curves(&chain, &[(&u, &vw)], &[4, 9], 4000, 5).unwrap();
    for i in 0..2 {
        let sum = curves.estimate(0, i).value + curves.estimate(2, i).value;
        assert!((joint.estimate(0, i).value - sum).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_matches_exact_correlations() {
    let systems = [MarkovExtension::simple_random_walk(), MarkovExtension::random(3, 5), MarkovExtension::random(4, 9)];
    for chain in &systems {
        let obs: Vec<Observable> = specs().iter().map(|s| observe(chain, s)).collect();
        let pairs: Vec<(&Observable, &Observable)> = obs.iter().map(|o| (o, o)).collect();
        let grid = [5, 20, 100];
        let curves = correlation_curves(chain, &pairs, &grid, 40_000, 23).unwrap();
        for (p, (u, v)) in pairs.iter().enumerate() {
            for (i, &n) in grid.iter().enumerate() {
                let exact = exact_correlation(chain, u, v, n, BUDGET).unwrap();
                let est = curves.estimate(p, i);
                assert!(est.within(exact, 4.0), "pair {p} n={n}: {} ± {} vs {exact}", est.value, est.stderr);
            }
        }
    }
}

#[test]
fn return_tail_of_simple_walk() {
    let srw = MarkovExtension::simple_random_walk();
    let t = return_tail_empirical(&srw, 40, 20_000, 8).unwrap();
    assert_eq!(t.survival(0).value, 1.0);
    assert!(t.survival(2).within(0.75, 4.0));
    let curve = t.survival_curve();
    assert!(curve.windows(2).all(|w| w[1].value <= w[0].value));
    for n in 0..=40 {
        assert_eq!(t.survivors(n) + t.returns[..=n].iter().sum::<usize>(), t.n_samples);
    }
    assert_eq!(t.survivors(40), t.censored);
    assert!(t.returns.iter().skip(1).step_by(2).all(|&c| c == 0), "returns only at even times");
}

#[test]
fn return_tail_matches_exact_law() {
    for chain in [dyadic3(), MarkovExtension::random(3, 5)] {
        let exact = exact_return_tail(&chain, 60, BUDGET).unwrap();
        let t = return_tail_empirical(&chain, 60, 30_000, 2).unwrap();
        // Standard errors from the exact probabilities, so rare events with
        // no hits are judged correctly.
        let close = |e: EstimateWithCI, p: f64| (e.value - p).abs() <= 4.0 * (p * (1.0 - p) / e.n_samples as f64).sqrt();
        for n in [1, 5, 20, 60] {
            assert!(close(t.survival(n), exact.tail[n]), "n={n}");
            assert!(close(t.return_prob(n), exact.f[n]), "n={n}");
        }
    }
}

#[test]
fn weighted_marginal_matches_kernels() {
    let chain = dyadic3();
    let pi = chain.stationary().to_vec();
    let cells = [Cell::ZERO, Cell::new(1, 0), Cell::new(-2, 1)];
    let plain = weighted_marginal_at(&chain, 9, &cells, &pi, None, BUDGET).unwrap();
    let reference = marginal_at(&chain, 9, &cells, BUDGET).unwrap();
    for (a, b) in plain.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-15);
    }
    // E_π[a(X_0) 1{S_n = ℓ} w(X_t)] from the forward kernels at t and n − t.
    let a = [1.0, -2.0, 0.5];
    let w = [0.0, 1.0, 3.0];
    let start: Vec<f64> = pi.iter().zip(&a).map(|(p, x)| p * x).collect();
    for (n, t) in [(6, 0), (6, 2), (7, 7), (8, 5)] {
        let got = weighted_marginal_at(&chain, n, &cells, &start, Some((t, &w)), BUDGET).unwrap();
        let head = LatticeKernel::new(&chain, t, BUDGET).unwrap();
        let tail = LatticeKernel::new(&chain, n - t, BUDGET).unwrap();
        for (c, g) in cells.iter().zip(&got) {
            let mut want = 0.0;
            for i in 0..3 {
                for (j, s, m) in head.row(i).iter() {
                    want += start[i] * m * w[j] * tail.row(j).mass_at(*c - s);
                }
            }
            assert!((g - want).abs() < 1e-14, "n={n} t={t}: {g} vs {want}");
        }
    }
}

#[test]
fn mixing_report_on_lazy_walk() {
    let chain = MarkovExtension::lazy_walk(0.5).unwrap();
    let sigma = SigmaEstimate::exact(chain.exact_sigma().unwrap());
    let ind = observe(&chain, &ObservableSpec::indicator_cell());
    let (hyp, report) = mixing_rate_report(&chain, &ind, &ind, &[50, 100, 200], 200_000, &sigma, 4).unwrap();
    assert!(hyp.passed());
    assert!(report.verdict, "{report:#?}");
    assert_eq!(report.target.value, sigma.sigma.density_at_zero().unwrap());
    for row in &report.rows {
        assert_eq!(row.n_i_hat, row.n as f64 * row.i_hat.value);
    }
}

#[test]
fn srw_mixing_constant_with_period() {
    // n·P(S_n = 0) at even n tends to (period)·Φ_B(0) = 2/π.
    let srw = MarkovExtension::simple_random_walk();
    let q = marginal_at(&srw, 2000, &[Cell::ZERO], 8_100_000).unwrap()[0];
    let ind = observe(&srw, &ObservableSpec::indicator_cell());
    let small = exact_correlation(&srw, &ind, &ind, 100, BUDGET).unwrap();
    assert!((small - marginal_at(&srw, 100, &[Cell::ZERO], BUDGET).unwrap()[0]).abs() < 1e-15);
    let phi = CovarianceMatrix::diag(0.5, 0.5).unwrap().density_at_zero().unwrap();
    assert!((phi - 1.0 / PI).abs() < 1e-15);
    let ratio = 2000.0 * q / (srw.period() as f64 * phi);
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn exact_scan_is_bounded_for_aperiodic_chains() {
    let lazy = MarkovExtension::lazy_walk(0.5).unwrap();
    let sigma = lazy.exact_sigma().unwrap();
    let one = CylinderFunction::constant(1.0);
    let grid = [50, 100, 200, 500, 1000, 2000];
    let scan = prop_error_scan_exact(&lazy, &one, &one, 0, &grid, Cell::ZERO, &sigma, 8_100_000).unwrap();
    assert_eq!(scan.verdict, ScanVerdict::Bounded, "{scan:#?}");

    let chain = MarkovExtension::random(3, 5);
    let sigma = chain.exact_sigma().unwrap();
    let u = CylinderFunction::site_indicator(0);
    let scan = prop_error_scan_exact(&chain, &u, &one, 1, &[20, 50, 100, 200, 400], Cell::ZERO, &sigma, BUDGET).unwrap();
    assert_eq!(scan.verdict, ScanVerdict::Bounded, "{scan:#?}");
}

#[test]
fn exact_scan_with_correlated_locals_grows() {
    // v̄∘f̄^k is composed with the fixed shift k, so the leading term is
    // E[ū · v̄∘f̄^k] Φ_B/m rather than ∫ū ∫v̄ Φ_B/m whenever the two differ.
    let chain = MarkovExtension::random(3, 5);
    let sigma = chain.exact_sigma().unwrap();
    let u = CylinderFunction::site_indicator(0);
    let v = CylinderFunction::site_indicator(2);
    let grid = [20, 50, 100, 200, 400];
    let scan = prop_error_scan_exact(&chain, &u, &v, 1, &grid, Cell::ZERO, &sigma, BUDGET).unwrap();
    assert_eq!(scan.verdict, ScanVerdict::Growing);
    let pi = chain.stationary();
    let joint = pi[0] * chain.transition()[0][2];
    let last = scan.rows.last().unwrap();
    let lead = joint * sigma.density_at_zero().unwrap() / last.m as f64;
    assert!((last.estimate.value / lead - 1.0).abs() < 0.05);
}

#[test]
fn exact_scan_sees_the_period() {
    let srw = MarkovExtension::simple_random_walk();
    let sigma = srw.exact_sigma().unwrap();
    let one = CylinderFunction::constant(1.0);
    let scan = prop_error_scan_exact(&srw, &one, &one, 0, &[21, 41, 81, 401, 1601], Cell::ZERO, &sigma, 8_100_000).unwrap();
    assert_eq!(scan.verdict, ScanVerdict::Growing);
}

#[test]
fn scan_at_k_zero_is_the_llt_residual() {
    let chain = MarkovExtension::lazy_walk(0.5).unwrap();
    let sigma = chain.exact_sigma().unwrap();
    let one = CylinderFunction::constant(1.0);
    let scan = prop_error_scan(&chain, &one, &one, 0, &[10, 40], Cell::ZERO, 20_000, &sigma, 6).unwrap();
    for row in &scan.rows {
        let p = empirical_cell_prob(&chain, row.n, Cell::ZERO, 20_000, 6).unwrap();
        assert_eq!(row.estimate.value, p.value);
        let phi = sigma.density_at_zero().unwrap();
        assert!((row.residual.value - (p.value - phi / row.n as f64)).abs() < 1e-15);
    }
    assert!(prop_error_scan(&chain, &one, &one, 5, &[10], Cell::ZERO, 100, &sigma, 6).is_err());
}

#[test]
fn monte_carlo_scan_matches_exact_scan() {
    let chain = MarkovExtension::random(3, 5);
    let sigma = chain.exact_sigma().unwrap();
    let u = CylinderFunction::site_indicator(0);
    let v = CylinderFunction::site_indicator(1);
    let grid = [5, 20, 60];
    let exact = prop_error_scan_exact(&chain, &u, &v, 2, &grid, Cell::new(1, 0), &sigma, BUDGET).unwrap();
    let mc = prop_error_scan(&chain, &u, &v, 2, &grid, Cell::new(1, 0), 50_000, &sigma, 12).unwrap();
    for (a, b) in mc.rows.iter().zip(&exact.rows) {
        assert!(a.estimate.within(b.estimate.value, 4.0), "n={}", a.n);
    }
    assert!(mc.integral_u.within(exact.integral_u.value, 4.0));
}
