//! Fixtures and independent reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use gridse::case::{BusKind, GridCase};
use gridse::case_io::parse_case;
use gridse::casegen::{generate_se_case, Device, NoiseSpec, SeCase};
use gridse::powerflow::{solve_power_flow, PfOptions, PfSolution};
use gridse::synth::{synthetic_grid, SynthSpec};
use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

pub const CASE14: &str = include_str!("../data/case14.m");

pub const THREE_BUS: &str = "function mpc = three
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1.0	0	0	1	1.1	0.9;
	2	2	40	10	0	0	1	1.0	0	0	1	1.1	0.9;
	3	1	80	30	0	5	1	1.0	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1.02	100	1	200	0;
	2	30	0	100	-100	1.01	100	1	200	0;
];
mpc.branch = [
	1	2	0.02	0.06	0.03	0	0	0	0	0	1	-360	360;
	1	3	0.05	0.19	0.02	0	0	0	0.98	3	1	-360	360;
	2	3	0.06	0.17	0.02	0	0	0	0	0	1	-360	360;
];
";

pub fn case14() -> GridCase {
    parse_case(CASE14).unwrap()
}

pub fn synth(n: usize, seed: u64) -> GridCase {
    synthetic_grid(&SynthSpec::new(n), seed).unwrap()
}

pub fn pf(c: &GridCase) -> PfSolution {
    solve_power_flow(c, &PfOptions::default()).unwrap()
}

pub fn with_pmus(perfect: f64, noisy: f64) -> NoiseSpec {
    NoiseSpec {
        frac_pmu_perfect: perfect,
        frac_pmu_noisy: noisy,
        ..NoiseSpec::default()
    }
}

pub fn se_case(c: &GridCase, spec: &NoiseSpec, seed: u64) -> (PfSolution, SeCase) {
    let sol = pf(c);
    let se = generate_se_case(&sol, c, spec, seed).unwrap();
    (sol, se)
}

/// Complex bus admittance matrix built term by term from the pi model.
pub fn ybus(c: &GridCase) -> DMatrix<C64> {
    let n = c.n_buses();
    let pos = |id: u32| c.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (k, b) in c.buses.iter().enumerate() {
        y[(k, k)] += C64::new(b.gs, b.bs);
    }
    for br in c.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos(br.from), pos(br.to));
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let sh = C64::new(0.0, br.b_chg / 2.0);
        let tap = C64::from_polar(br.tap, br.shift);
        y[(f, f)] += (ys + sh) / (tap * tap.conj());
        y[(t, t)] += ys + sh;
        y[(f, t)] -= ys / tap.conj();
        y[(t, f)] -= ys / tap;
    }
    y
}

pub fn phasors(vr: &[f64], vi: &[f64]) -> DVector<C64> {
    DVector::from_iterator(vr.len(), vr.iter().zip(vi).map(|(&a, &b)| C64::new(a, b)))
}

/// `[[Re, −Im], [Im, Re]]` embedding of a complex matrix.
pub fn split(m: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, c + j)] = -z.im;
            out[(r + i, j)] = z.im;
            out[(r + i, c + j)] = z.re;
        }
    }
    out
}

/// Solution of the uneliminated optimality system with unknowns
/// `[V (2n), ΔI at RTUs (2m), μ (2n)]`:
///
/// ```text
/// min ½Σ_pmu g²|V − V_pmu|² + ½Σ_rtu γ|ΔI|²
/// s.t. Y V + draw(V) + ΔI = I_src
/// ```
///
/// Returns `(vr, vi, ΔI_r, ΔI_i)` with ΔI scattered back to bus order.
pub fn dense_kkt_oracle(se: &SeCase) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = se.n_buses();
    let mut a = ybus(&se.grid);
    let mut src = vec![C64::new(0.0, 0.0); n];
    let mut h = vec![0.0; n];
    let mut target = vec![C64::new(0.0, 0.0); n];
    let mut rtus = Vec::new();
    for (k, d) in se.devices.iter().enumerate() {
        match d {
            Device::Pmu(p) => {
                let vm = C64::new(p.vr, p.vi);
                a[(k, k)] += p.g_pmu;
                src[k] = C64::new(p.ir, p.ii) + vm * p.g_pmu;
                h[k] = p.g_pmu * p.g_pmu;
                target[k] = vm;
            }
            Device::Rtu(r) => {
                // constant-power consumer as an admittance: conj(S)/|V|²
                a[(k, k)] += C64::new(r.p, -r.q) / (r.vm * r.vm);
                rtus.push((k, r.gamma));
            }
        }
    }
    let m = rtus.len();
    let dim = 4 * n + 2 * m;
    let (ox, ou, om) = (0, 2 * n, 2 * n + 2 * m);
    let a = split(&a);
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for k in 0..n {
        kkt[(ox + k, ox + k)] = h[k];
        kkt[(ox + n + k, ox + n + k)] = h[k];
        rhs[ox + k] = h[k] * target[k].re;
        rhs[ox + n + k] = h[k] * target[k].im;
        rhs[om + k] = src[k].re;
        rhs[om + n + k] = src[k].im;
    }
    kkt.view_mut((ox, om), (2 * n, 2 * n)).copy_from(&a.transpose());
    kkt.view_mut((om, ox), (2 * n, 2 * n)).copy_from(&a);
    for (j, &(k, gamma)) in rtus.iter().enumerate() {
        for (part, off) in [(0, 0), (1, n)] {
            let u = ou + part * m + j;
            kkt[(u, u)] = gamma;
            kkt[(u, om + off + k)] = 1.0;
            kkt[(om + off + k, u)] = 1.0;
        }
    }
    let z = kkt.lu().solve(&rhs).expect("oracle system is nonsingular");
    let mut dir = vec![0.0; n];
    let mut dii = vec![0.0; n];
    for (j, &(k, _)) in rtus.iter().enumerate() {
        dir[k] = z[ou + j];
        dii[k] = z[ou + m + j];
    }
    (
        z.rows(0, n).iter().copied().collect(),
        z.rows(n, n).iter().copied().collect(),
        dir,
        dii,
    )
}

/// Textbook polar Newton–Raphson power flow with a dense Jacobian.
/// Returns rectangular voltages, or `None` without convergence.
pub fn polar_power_flow(c: &GridCase, tol: f64, max_iter: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = c.n_buses();
    let y = ybus(c);
    let pos = |id: u32| c.buses.iter().position(|b| b.id == id).unwrap();
    let mut p_spec: Vec<f64> = c.buses.iter().map(|b| -b.pd).collect();
    let mut q_spec: Vec<f64> = c.buses.iter().map(|b| -b.qd).collect();
    let mut vm: Vec<f64> = c.buses.iter().map(|b| b.vm_init).collect();
    for g in c.gens.iter().filter(|g| g.in_service) {
        let k = pos(g.bus);
        p_spec[k] += g.pg;
        q_spec[k] += g.qg;
        if c.buses[k].kind != BusKind::Pq {
            vm[k] = g.vset;
        }
    }
    let mut va = vec![0.0; n];
    let pvpq: Vec<usize> = (0..n).filter(|&k| c.buses[k].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| c.buses[k].kind == BusKind::Pq).collect();
    let (np, nq) = (pvpq.len(), pq.len());

    for _ in 0..=max_iter {
        let v = DVector::from_iterator(n, (0..n).map(|k| C64::from_polar(vm[k], va[k])));
        let ibus = &y * &v;
        let s: Vec<C64> = (0..n).map(|k| v[k] * ibus[k].conj()).collect();
        let mut f = DVector::<f64>::zeros(np + nq);
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s[k].re - p_spec[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            f[np + r] = s[k].im - q_spec[k];
        }
        if f.amax() < tol {
            return Some(((0..n).map(|k| v[k].re).collect(), (0..n).map(|k| v[k].im).collect()));
        }
        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let jac_entry = |i: usize, j: usize, angle: bool| -> C64 {
            let vj_unit = v[j] / vm[j];
            if angle {
                let inner = if i == j { ibus[i] } else { C64::new(0.0, 0.0) } - y[(i, j)] * v[j];
                C64::new(0.0, 1.0) * v[i] * inner.conj()
            } else {
                let mut d = v[i] * (y[(i, j)] * vj_unit).conj();
                if i == j {
                    d += ibus[i].conj() * vj_unit;
                }
                d
            }
        };
        let mut jac = DMatrix::<f64>::zeros(np + nq, np + nq);
        for (r, &i) in pvpq.iter().enumerate() {
            for (cc, &j) in pvpq.iter().enumerate() {
                let d = jac_entry(i, j, true);
                jac[(r, cc)] = d.re;
            }
            for (cc, &j) in pq.iter().enumerate() {
                jac[(r, np + cc)] = jac_entry(i, j, false).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (cc, &j) in pvpq.iter().enumerate() {
                jac[(np + r, cc)] = jac_entry(i, j, true).im;
            }
            for (cc, &j) in pq.iter().enumerate() {
                jac[(np + r, np + cc)] = jac_entry(i, j, false).im;
            }
        }
        let dx = jac.lu().solve(&(-f))?;
        for (r, &k) in pvpq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[np + r];
        }
    }
    None
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
