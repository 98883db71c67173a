use super::*;
use nalgebra::DMatrix;

const BUDGET: usize = DEFAULT_CELL_BUDGET;

fn srw() -> MarkovExtension {
    MarkovExtension::simple_random_walk()
}

/// Three states, dyadic probabilities, four distinct jumps.
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

/// Exhaustive enumeration of all edge paths of length n from `start`.
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

#[test]
fn constructor_checks() {
    assert!(MarkovExtension::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], vec![vec![Cell::ZERO; 2]; 2], 2).is_err());
    // Reducible.
    let e = |to, x| Edge { to, prob: 1.0, jump: Cell::new(x, 0) };
    assert!(MarkovExtension::from_edges(vec![vec![e(0, 1)], vec![e(1, 1)]], 2).is_err());
    // Jumps only along x: cycle lattice is not Z².
    assert!(MarkovExtension::one_state_walk(&[(Cell::new(1, 0), 0.5), (Cell::new(-1, 0), 0.5)]).is_err());
    // Index-2 sublattice.
    assert!(MarkovExtension::one_state_walk(&[
        (Cell::new(1, 1), 0.25),
        (Cell::new(-1, -1), 0.25),
        (Cell::new(1, -1), 0.25),
        (Cell::new(-1, 1), 0.25),
    ])
    .is_err());
    let one_d = MarkovExtension::from_edges(vec![vec![e(0, 1), Edge { to: 0, prob: 0.0, jump: Cell::new(-1, 0) }]], 1);
    assert!(one_d.is_err(), "one-sided walk never returns");
}

#[test]
fn stationary_and_period() {
    let c = dyadic3();
    let pi = c.stationary();
    for j in 0..3 {
        let pj: f64 = (0..3).map(|i| pi[i] * c.transition()[i][j]).sum();
        assert!((pj - pi[j]).abs() < 1e-15);
    }
    assert_eq!(srw().period(), 2);
    assert_eq!(MarkovExtension::lazy_walk(0.2).unwrap().period(), 1);
    assert_eq!(c.period(), 1);
    let r = MarkovExtension::random(3, 11);
    assert_eq!(r.n_states(), 3);
    assert_eq!(r.period(), 1);
    assert!(r.stationary().iter().all(|&p| p > 0.0));
}

#[test]
fn srw_small_values() {
    let c = srw();
    let d1 = exact_distribution(&c, 1, BUDGET).unwrap();
    assert_eq!(d1.q(Cell::new(1, 0)), 0.25);
    let d2 = exact_distribution(&c, 2, BUDGET).unwrap();
    assert_eq!(d2.q(Cell::ZERO), 0.25);
    let d0 = exact_distribution(&c, 0, BUDGET).unwrap();
    assert_eq!(d0.q(Cell::ZERO), 1.0);

    let tr = operator_tr(&c, 4, BUDGET).unwrap();
    assert_eq!(tr.r[1][(0, 0)], 0.0);
    assert_eq!(tr.r[2][(0, 0)], 0.25);
    assert_eq!(tr.t[1], tr.r[1]);

    let u = operator_u_check(&c, 4, BUDGET).unwrap();
    assert_eq!(u.u[2][(0, 0)], 0.75);

    let tail = exact_return_tail(&c, 4, BUDGET).unwrap();
    assert_eq!(tail.tail[1], 1.0);
    assert_eq!(tail.tail[2], 0.75);
}

#[test]
fn srw_two_step_matches_sixteen_paths() {
    let paths = enumerate(&srw(), 0, 2);
    assert_eq!(paths.len(), 16);
    let back = paths.iter().filter(|p| p.1.is_zero()).count();
    assert_eq!(back, 4);
}

#[test]
fn kernel_matches_enumeration() {
    for chain in [dyadic3(), srw(), MarkovExtension::random(3, 5)] {
        for n in 0..=6 {
            let d = exact_distribution(&chain, n, BUDGET).unwrap();
            let pi = chain.stationary();
            let mut q_enum = std::collections::HashMap::<Cell, f64>::new();
            for i in 0..chain.n_states() {
                let mut k_enum = std::collections::HashMap::<(usize, Cell), f64>::new();
                for (j, l, w) in enumerate(&chain, i, n) {
                    *k_enum.entry((j, l)).or_default() += w;
                    *q_enum.entry(l).or_default() += pi[i] * w;
                }
                for cell in d.kernel.support() {
                    for j in 0..chain.n_states() {
                        let want = k_enum.get(&(j, cell)).copied().unwrap_or(0.0);
                        assert!((d.kernel.row(i).get(j, cell) - want).abs() <= 1e-14);
                    }
                }
            }
            for (cell, want) in q_enum {
                assert!((d.q(cell) - want).abs() <= 1e-14, "n={n} {cell}");
            }
            assert!((d.marginal.total() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn q_operator_consistency() {
    let c = dyadic3();
    let d = exact_distribution(&c, 5, BUDGET).unwrap();
    let pi = nalgebra::DVector::from_column_slice(c.stationary());
    let one = nalgebra::DVector::from_element(3, 1.0);
    for cell in d.kernel.support() {
        let q = d.kernel.transfer(cell, c.stationary());
        assert!((pi.dot(&(q * &one)) - d.q(cell)).abs() < 1e-15);
    }
    assert_eq!(operator_q(&c, 0, Cell::ZERO, BUDGET).unwrap(), DMatrix::identity(3, 3));
    assert_eq!(operator_q(&c, 0, Cell::new(1, 0), BUDGET).unwrap(), DMatrix::zeros(3, 3));
    // Summing Q_{n,ℓ} over ℓ gives the n-step transfer operator, which fixes 1.
    let total = to_transfer(&d.kernel.total(), c.stationary());
    assert!(((total * &one) - &one).amax() < 1e-14);
}

#[test]
fn chapman_kolmogorov() {
    let c = MarkovExtension::random(3, 2);
    let pi = c.stationary();
    let (n, m) = (3, 4);
    let kn = LatticeKernel::new(&c, n, BUDGET).unwrap();
    let km = LatticeKernel::new(&c, m, BUDGET).unwrap();
    let knm = LatticeKernel::new(&c, n + m, BUDGET).unwrap();
    for l in knm.support() {
        let mut acc = DMatrix::zeros(3, 3);
        for j in kn.support() {
            acc += km.transfer(l - j, pi) * kn.transfer(j, pi);
        }
        assert!(sup_norm(&(acc - knm.transfer(l, pi))) < 1e-14);
    }
}

#[test]
fn marginal_split_matches_full() {
    for chain in [dyadic3(), srw(), MarkovExtension::lazy_walk(0.3).unwrap()] {
        for n in [6, 7] {
            let d = exact_distribution(&chain, n, BUDGET).unwrap();
            let cells = [Cell::ZERO, Cell::new(1, 0), Cell::new(2, -1), Cell::new(-3, 2)];
            let split = marginal_at(&chain, n, &cells, BUDGET).unwrap();
            for (c, s) in cells.iter().zip(split) {
                assert!((d.q(*c) - s).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn srw_return_probability_closed_form() {
    // P(S_2m = 0) = (C(2m, m)/4^m)² since the rotated coordinates are
    // independent one-dimensional walks.
    let c = srw();
    let binom = |m: u64| (1..=m).fold(1.0, |b, k| b * (2 * k - 1) as f64 / (2 * k) as f64);
    for n in [10usize, 40, 100] {
        let q = marginal_at(&c, n, &[Cell::ZERO], BUDGET).unwrap()[0];
        let want = binom(n as u64 / 2).powi(2);
        assert!((q - want).abs() < 1e-15 * n as f64, "n={n}");
        let odd = marginal_at(&c, n + 1, &[Cell::ZERO], BUDGET).unwrap()[0];
        assert_eq!(odd, 0.0);
    }
}

#[test]
fn renewal_identities_random_systems() {
    for seed in [1, 2, 3] {
        let c = MarkovExtension::random(3, seed);
        let tr = operator_tr(&c, 50, BUDGET).unwrap();
        assert!(tr.max_residual <= 1e-12);
        let u = operator_u_check(&c, 50, BUDGET).unwrap();
        assert!(u.max_residual <= 1e-12);
        assert!(sup_norm(&(&tr.t[1] - &tr.r[1])) == 0.0);
    }
}

#[test]
fn return_tail_monotone_and_matches_closed_form() {
    let c = srw();
    let exact = exact_return_tail(&c, 60, BUDGET).unwrap();
    let closed = simple_walk_return_tail(60);
    for n in 1..=60 {
        assert!(exact.tail[n] <= exact.tail[n - 1]);
        assert!((exact.tail[n] - closed[n]).abs() < 1e-13);
    }
    let lazy = exact_return_tail(&dyadic3(), 40, BUDGET).unwrap();
    assert!(lazy.tail.windows(2).all(|w| w[1] <= w[0]));
    assert!(lazy.max_residual <= 1e-12);
}

#[test]
fn memory_bound_reported() {
    let err = exact_distribution(&srw(), 50, 1000).unwrap_err();
    assert!(matches!(err, Error::MemoryBound { .. }));
}

#[test]
fn simulation_is_deterministic_and_labelled() {
    let c = dyadic3();
    let mut rng = RngSpec::new(4, 0).rng();
    let x = c.sample(&mut rng);
    let a = c.step(&x).unwrap();
    let b = c.step(&x).unwrap();
    assert_eq!(a.jump, b.jump);
    assert_eq!(a.next.state, b.next.state);
    assert!(c.edges(x.state).iter().any(|e| e.to == a.next.state && e.jump == a.jump));
}

#[test]
fn spec_round_trip() {
    let c = dyadic3();
    let again = MarkovExtension::from_spec(&c.spec()).unwrap();
    assert_eq!(again.stationary(), c.stationary());
}

#[test]
fn exact_sigma_matches_finite_n_covariance() {
    for chain in [dyadic3(), MarkovExtension::random(3, 8)] {
        let drift = chain.drift();
        if drift.iter().any(|d| d.abs() > 1e-12) {
            assert!(chain.exact_sigma().is_err());
            continue;
        }
        let sigma = chain.exact_sigma().unwrap().entries();
        let n = 200;
        let d = exact_distribution(&chain, n, BUDGET).unwrap();
        let mut cov = [[0.0; 2]; 2];
        for (_, cell, p) in d.marginal.iter() {
            let v = cell.as_f64();
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += p * v[a] * v[b] / n as f64;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert!((cov[a][b] - sigma[a][b]).abs() < 0.05 / n as f64 * 40.0, "{cov:?} vs {sigma:?}");
            }
        }
    }
    let srw = srw().exact_sigma().unwrap();
    assert_eq!(srw.entries(), [[0.5, 0.0], [0.0, 0.5]]);
}
