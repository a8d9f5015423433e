//! Quick built-in consistency checks, run by `gridse selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case_io::parse_case;
use crate::casegen::{generate_se_case, NoiseSpec};
use crate::error::Result;
use crate::evaluation::sigma_max;
use crate::linalg::{max_abs, DenseLu, LinearSolver, Triplets};
use crate::linear_se::{solve_linear_se, EstimateResult};
use crate::montecarlo::{run_mc, McConfig};
use crate::network::build_split_admittance;
use crate::linear_se::device_stamps;
use crate::nonlinear_se::{jacobian, residual_vector, solve_nonlinear_se, NlOptions, NlState};
use crate::powerflow::{solve_power_flow, PfOptions};

pub const CASE14: &str = include_str!("../tests/data/case14.m");

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn spec14() -> NoiseSpec {
    NoiseSpec {
        frac_pmu_perfect: 0.15,
        frac_pmu_noisy: 0.15,
        ..NoiseSpec::default()
    }
}

pub fn run() -> Vec<Check> {
    let mut out = Vec::new();

    out.push(check("ieee14 power flow matches published voltages", || {
        let c = parse_case(CASE14)?;
        let pf = solve_power_flow(&c, &PfOptions::default())?;
        let vm = pf.vr[13].hypot(pf.vi[13]);
        let va = pf.vi[13].atan2(pf.vr[13]).to_degrees();
        let ok = (vm - 1.036).abs() < 1e-3 && (va + 16.04).abs() < 0.02;
        Ok((ok, format!("bus 14: {vm:.4} p.u. at {va:.3} deg")))
    }));

    out.push(check("sparse LU agrees with dense LU", || {
        let n = 150;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = Triplets::new(n, n);
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.random::<f64>() < 0.03 {
                    let v = if i == j { 3.0 } else { rng.random::<f64>() - 0.5 };
                    t.push(i, j, v);
                    dense[i * n + j] += v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = t.to_csc();
        let xs = LinearSolver::analyze(&a).solve(&a, &b)?.x;
        let xd = DenseLu::factor(n, dense)?.solve(&b);
        let diff = xs.iter().zip(&xd).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        Ok((diff < 1e-10 * max_abs(&xd).max(1.0), format!("max difference {diff:.2e}")))
    }));

    out.push(check("zero-noise estimates reproduce the truth", || {
        let c = parse_case(CASE14)?;
        let pf = solve_power_flow(&c, &PfOptions::default())?;
        let se = generate_se_case(&pf, &c, &spec14().noiseless(), 1)?;
        let lin = solve_linear_se(&se)?;
        let nl = solve_nonlinear_se(&se, &NlOptions::default())?;
        let e_lin = sigma_max(&lin.vr, &lin.vi, &pf.vr, &pf.vi)?;
        let e_nl = sigma_max(&nl.vr, &nl.vi, &pf.vr, &pf.vi)?;
        let ok = e_lin < 1e-8 && e_nl < 1e-8 && lin.objective < 1e-16 && nl.iterations <= 2;
        Ok((ok, format!("ΔI error {e_lin:.1e}, ΔY error {e_nl:.1e} in {} iterations", nl.iterations)))
    }));

    out.push(check("ΔY Jacobian matches finite differences", || {
        let c = parse_case(CASE14)?;
        let pf = solve_power_flow(&c, &PfOptions::default())?;
        let se = generate_se_case(&pf, &c, &spec14(), 2)?;
        let y = build_split_admittance(&c, None)?;
        let stamps = device_stamps(&se.devices)?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z: Vec<f64> = (0..6 * c.n_buses())
            .map(|k| if k < 2 * c.n_buses() { 1.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5))
            .collect();
        let jac = jacobian(&y, &stamps, &NlState::from_vec(&z)).to_dense();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let fp = residual_vector(&y, &stamps, &NlState::from_vec(&zp));
            let fm = residual_vector(&y, &stamps, &NlState::from_vec(&zm));
            for i in 0..z.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((fd - jac[i][j]).abs() / jac[i][j].abs().max(1.0));
            }
        }
        Ok((worst < 1e-5, format!("worst relative difference {worst:.1e}")))
    }));

    out.push(check("Monte Carlo is thread-count independent", || {
        let c = parse_case(CASE14)?;
        let pf = solve_power_flow(&c, &PfOptions::default())?;
        let se = generate_se_case(&pf, &c, &spec14(), 3)?;
        let cfg = |threads| McConfig {
            samples: 200,
            pilot_samples: 50,
            seed: 11,
            threads,
            ..McConfig::default()
        };
        let a = run_mc(&se, &cfg(1))?;
        let b = run_mc(&se, &cfg(3))?;
        Ok((a == b, format!("{} samples", a.samples_completed)))
    }));

    out.push(check("linear estimate satisfies the KKT conditions", || {
        let c = parse_case(CASE14)?;
        let pf = solve_power_flow(&c, &PfOptions::default())?;
        let se = generate_se_case(&pf, &c, &spec14(), 4)?;
        let r: EstimateResult = solve_linear_se(&se)?;
        let y = build_split_admittance(&c, None)?;
        let stamps = device_stamps(&se.devices)?;
        // the ΔI optimum is a ΔY point with the equivalent admittances
        let mut s = NlState::zeros(c.n_buses());
        s.vr = r.vr.clone();
        s.vi = r.vi.clone();
        s.lambda_r = r.lambda_r.clone();
        s.lambda_i = r.lambda_i.clone();
        let f = residual_vector(&y, &stamps, &s);
        let n = c.n_buses();
        // KCL rows only differ by the slack current, adjoint rows must vanish
        let adj = max_abs(&f[2 * n..4 * n]);
        Ok((adj < 1e-9 && r.converged, format!("adjoint residual {adj:.1e}")))
    }));

    out
}
