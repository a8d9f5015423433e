//! Library results against independent dense reference computations.

mod common;

use common::*;
use gridse::case_io::parse_case;
use gridse::casegen::{generate_se_case, NoiseSpec};
use gridse::linalg::{max_abs, LinearSolver, Triplets};
use gridse::linear_se::{assemble_kkt, device_stamps, solve_linear_se};
use gridse::network::build_split_admittance;
use gridse::nonlinear_se::{jacobian, residual_vector, NlState};
use gridse::powerflow::{solve_power_flow, PfOptions};
use gridse::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random measurement sets: grid size, placement and noise all vary.
fn random_cases(count: usize) -> Vec<gridse::casegen::SeCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..count)
        .map(|k| {
            let n = rng.random_range(5..=30);
            let c = synth(n, 100 + k as u64);
            let spec = NoiseSpec {
                // at least one PMU keeps the state observable
                frac_pmu_perfect: rng.random_range(0.05..0.2f64).max(1.0 / n as f64),
                frac_pmu_noisy: rng.random_range(0.0..0.2),
                degraded_frac: rng.random_range(0.0..0.3),
                ..NoiseSpec::default()
            };
            se_case(&c, &spec, k as u64).1
        })
        .collect()
}

#[test]
fn linear_estimate_matches_dense_uneliminated_kkt() {
    for (k, se) in random_cases(20).iter().enumerate() {
        let est = solve_linear_se(se).unwrap();
        let (vr, vi, dir, dii) = dense_kkt_oracle(se);
        let scale = max_abs(&vr).max(max_abs(&vi));
        let err = max_diff(&est.vr, &vr).max(max_diff(&est.vi, &vi)) / scale;
        assert!(err < 1e-8, "case {k}: relative voltage error {err:e}");
        let di_scale = max_abs(&dir).max(max_abs(&dii)).max(1e-3);
        let di_err = max_diff(&est.delta_ir, &dir).max(max_diff(&est.delta_ii, &dii)) / di_scale;
        assert!(di_err < 1e-7, "case {k}: correction current error {di_err:e}");
    }
}

#[test]
fn sparse_kkt_solve_matches_dense_lu_of_same_system() {
    for se in random_cases(5) {
        let y = build_split_admittance(&se.grid, None).unwrap();
        let kkt = assemble_kkt(&se, &y).unwrap();
        let a = DMatrix::from_fn(kkt.dim(), kkt.dim(), |i, j| kkt.matrix.get(i, j));
        let zd = a.lu().solve(&DVector::from_vec(kkt.rhs.clone())).unwrap();
        let zs = LinearSolver::analyze(&kkt.matrix).solve(&kkt.matrix, &kkt.rhs).unwrap().x;
        let err = max_diff(&zs, zd.as_slice()) / zd.amax();
        assert!(err < 1e-8, "{err:e}");
    }
}

#[test]
fn nonlinear_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for se in random_cases(20) {
        let n = se.n_buses();
        let y = build_split_admittance(&se.grid, None).unwrap();
        let stamps = device_stamps(&se.devices).unwrap();
        let z: Vec<f64> = (0..6 * n)
            .map(|k| {
                let base = if k < n { 1.0 } else { 0.0 };
                base + 0.2 * (rng.random::<f64>() - 0.5)
            })
            .collect();
        let jac = jacobian(&y, &stamps, &NlState::from_vec(&z));
        let h = 1e-6;
        for j in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let fp = residual_vector(&y, &stamps, &NlState::from_vec(&zp));
            let fm = residual_vector(&y, &stamps, &NlState::from_vec(&zm));
            for i in 0..z.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let an = jac.get(i, j);
                let rel = (fd - an).abs() / an.abs().max(1.0);
                assert!(rel < 1e-5, "J[{i},{j}] = {an}, finite difference {fd}");
            }
        }
    }
}

#[test]
fn split_admittance_matches_complex_construction() {
    let mut cases = vec![case14(), parse_case(THREE_BUS).unwrap()];
    cases.extend((0..5).map(|s| synth(25, s)));
    for c in &cases {
        let y = build_split_admittance(c, None).unwrap();
        let yc = ybus(c);
        let expect = split(&yc);
        let n = c.n_buses();
        for i in 0..2 * n {
            for j in 0..2 * n {
                let d = (y.blocks().get(i, j) - expect[(i, j)]).abs();
                assert!(d < 1e-12, "{}: entry ({i},{j}) off by {d:e}", c.name);
            }
        }
        let sol = pf(c);
        let (ir, ii) = y.currents(&sol.vr, &sol.vi);
        let i = &yc * phasors(&sol.vr, &sol.vi);
        for k in 0..n {
            assert!((ir[k] - i[k].re).abs() < 1e-12 && (ii[k] - i[k].im).abs() < 1e-12);
        }
    }
}

#[test]
fn power_flow_matches_polar_newton() {
    let mut cases = vec![case14(), parse_case(THREE_BUS).unwrap()];
    cases.extend((0..6).map(|s| synth(20 + 5 * s as usize, s)));
    for c in &cases {
        let sol = solve_power_flow(c, &PfOptions::default()).unwrap();
        let (vr, vi) = polar_power_flow(c, 1e-11, 30).expect("oracle converges");
        let err = max_diff(&sol.vr, &vr).max(max_diff(&sol.vi, &vi));
        assert!(err < 1e-8, "{}: {err:e}", c.name);
    }
}

#[test]
fn overloaded_network_fails_numerically() {
    let mut c = parse_case(THREE_BUS).unwrap();
    for b in &mut c.buses {
        b.pd *= 60.0;
        b.qd *= 60.0;
    }
    let err = solve_power_flow(&c, &PfOptions::default()).unwrap_err();
    assert!(
        matches!(err, Error::Diverged { .. } | Error::SingularJacobian),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
    assert!(polar_power_flow(&c, 1e-8, 50).is_none());
}

#[test]
fn sparse_solver_matches_dense_lu() {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let mut t = Triplets::new(n, n);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.random::<f64>() < 0.08 {
                    let v = rng.random::<f64>() * 2.0 - 1.0 + if i == j { 0.5 } else { 0.0 };
                    t.push(i, j, v);
                    dense[(i, j)] += v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let Some(expect) = dense.clone().lu().solve(&DVector::from_vec(b.clone())) else {
            continue;
        };
        let a = t.to_csc();
        let x = LinearSolver::analyze(&a).solve(&a, &b).unwrap().x;
        let err = max_diff(&x, expect.as_slice()) / expect.amax();
        assert!(err < 1e-9, "{err:e}");
    }
}

#[test]
fn zero_noise_estimate_is_the_power_flow_state() {
    for seed in 0..5 {
        let c = synth(30, seed);
        let sol = pf(&c);
        let se = generate_se_case(&sol, &c, &with_pmus(0.1, 0.1).noiseless(), seed).unwrap();
        let (vr, vi, dir, _) = dense_kkt_oracle(&se);
        assert!(max_diff(&vr, &sol.vr) < 1e-9 && max_diff(&vi, &sol.vi) < 1e-9);
        assert!(max_abs(&dir) < 1e-9);
    }
}
