//! Newton–Raphson power flow on rectangular current-injection equations.
//!
//! Unknowns are `[V_R; V_I; Q_pv]`. Each non-slack bus contributes the two
//! split KCL rows `Y_GB V + I_draw(V) = 0`, where constant-power draws
//! `S = P + jQ` give `I_draw = conj(S / V)`. PV buses add the reactive
//! generation as an unknown and the constraint `V_R² + V_I² = vset²`. The
//! slack bus rows pin both voltage components.

use serde::{Deserialize, Serialize};

use crate::case::{BusKind, GridCase};
use crate::error::{Error, Result};
use crate::linalg::{LinearSolver, Triplets};
use crate::network::{build_split_admittance, SplitAdmittance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfInit {
    /// `vm_init∠0` at PQ buses, `vset∠0` at PV buses.
    Flat,
    /// Voltages from the case's `vm_init∠va_init`.
    FromCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: PfInit,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_iter: 50,
            init: PfInit::Flat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    pub vr: Vec<f64>,
    pub vi: Vec<f64>,
    /// Net generation per bus at the solution. Slack `pg` and PV/slack `qg`
    /// are the solved values.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub iterations: usize,
    /// Largest KCL current residual at a non-slack bus (p.u.).
    pub max_mismatch: f64,
}

/// Current drawn by a constant-power consumer `p + jq` at `v`.
#[inline]
pub(crate) fn power_draw(p: f64, q: f64, vr: f64, vi: f64) -> (f64, f64) {
    let m2 = vr * vr + vi * vi;
    ((p * vr + q * vi) / m2, (p * vi - q * vr) / m2)
}

/// Max-abs KCL current residual over non-slack buses for given voltages and
/// per-bus net generation.
pub fn kcl_mismatch(
    c: &GridCase,
    y: &SplitAdmittance,
    vr: &[f64],
    vi: &[f64],
    pg: &[f64],
    qg: &[f64],
) -> f64 {
    let (ir, ii) = y.currents(vr, vi);
    let mut worst = 0.0_f64;
    for (i, bus) in c.buses.iter().enumerate() {
        if bus.kind == BusKind::Slack {
            continue;
        }
        let (dr, di) = power_draw(bus.pd - pg[i], bus.qd - qg[i], vr[i], vi[i]);
        worst = worst.max((ir[i] + dr).abs()).max((ii[i] + di).abs());
    }
    worst
}

pub fn solve_power_flow(c: &GridCase, opt: &PfOptions) -> Result<PfSolution> {
    if !(opt.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive: {}", opt.tol)));
    }
    c.validate()?;
    let n = c.n_buses();
    let slack = c.slack_index().expect("validated case has a slack bus");
    let vset = c.voltage_setpoints()?;
    let (pg_sched, qg_sched) = c.scheduled_generation()?;
    let y = build_split_admittance(c, None)?;

    let pv: Vec<usize> = (0..n).filter(|&i| c.buses[i].kind == BusKind::Pv).collect();
    let mut pv_slot = vec![usize::MAX; n];
    for (k, &i) in pv.iter().enumerate() {
        pv_slot[i] = k;
    }
    let dim = 2 * n + pv.len();

    let (mut vr, mut vi) = (vec![0.0; n], vec![0.0; n]);
    for (i, bus) in c.buses.iter().enumerate() {
        let (vm, va) = match (opt.init, bus.kind) {
            (_, BusKind::Slack) => (vset[i], bus.va_init),
            (PfInit::Flat, BusKind::Pv) => (vset[i], 0.0),
            (PfInit::Flat, BusKind::Pq) => (bus.vm_init, 0.0),
            (PfInit::FromCase, _) => (bus.vm_init, bus.va_init),
        };
        vr[i] = vm * va.cos();
        vi[i] = vm * va.sin();
    }
    let slack_v = (vr[slack], vi[slack]);
    let mut qv: Vec<f64> = pv.iter().map(|&i| qg_sched[i]).collect();

    let evaluate = |vr: &[f64], vi: &[f64], qv: &[f64]| -> (Vec<f64>, f64, f64) {
        let (ir, ii) = y.currents(vr, vi);
        let mut f = vec![0.0; dim];
        let mut kcl = 0.0_f64;
        let mut vcon = 0.0_f64;
        for (i, bus) in c.buses.iter().enumerate() {
            match bus.kind {
                BusKind::Slack => {
                    f[i] = vr[i] - slack_v.0;
                    f[n + i] = vi[i] - slack_v.1;
                }
                kind => {
                    let q_gen = if kind == BusKind::Pv { qv[pv_slot[i]] } else { qg_sched[i] };
                    let (dr, di) = power_draw(bus.pd - pg_sched[i], bus.qd - q_gen, vr[i], vi[i]);
                    f[i] = ir[i] + dr;
                    f[n + i] = ii[i] + di;
                    kcl = kcl.max(f[i].abs()).max(f[n + i].abs());
                }
            }
        }
        for (k, &i) in pv.iter().enumerate() {
            let r = vr[i] * vr[i] + vi[i] * vi[i] - vset[i] * vset[i];
            f[2 * n + k] = r;
            vcon = vcon.max(r.abs());
        }
        (f, kcl, vcon)
    };

    let jacobian = |vr: &[f64], vi: &[f64], qv: &[f64]| {
        let mut t = Triplets::with_capacity(dim, dim, y.blocks().nnz() + 8 * n + 3 * pv.len());
        let blocks = y.blocks();
        for j in 0..2 * n {
            let (rows, vals) = blocks.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                let bus = if i < n { i } else { i - n };
                // slack rows keep their structural entries as zeros
                t.push(i, j, if bus == slack { 0.0 } else { v });
            }
        }
        for (i, bus) in c.buses.iter().enumerate() {
            if bus.kind == BusKind::Slack {
                t.push(i, i, 1.0);
                t.push(n + i, n + i, 1.0);
                continue;
            }
            let q_gen = if bus.kind == BusKind::Pv { qv[pv_slot[i]] } else { qg_sched[i] };
            let (p, q) = (bus.pd - pg_sched[i], bus.qd - q_gen);
            let (a, b) = (vr[i], vi[i]);
            let m2 = a * a + b * b;
            let (dr, di) = power_draw(p, q, a, b);
            t.push(i, i, p / m2 - 2.0 * a * dr / m2);
            t.push(i, n + i, q / m2 - 2.0 * b * dr / m2);
            t.push(n + i, i, -q / m2 - 2.0 * a * di / m2);
            t.push(n + i, n + i, p / m2 - 2.0 * b * di / m2);
            if bus.kind == BusKind::Pv {
                let col = 2 * n + pv_slot[i];
                // q = qd − Q_gen
                t.push(i, col, -b / m2);
                t.push(n + i, col, a / m2);
                t.push(col, i, 2.0 * a);
                t.push(col, n + i, 2.0 * b);
            }
        }
        t.to_csc()
    };

    let mut solver: Option<LinearSolver> = None;
    let mut iterations = 0;
    let (mut f, mut kcl, mut vcon) = evaluate(&vr, &vi, &qv);
    loop {
        if !kcl.is_finite() || !vcon.is_finite() {
            return Err(Error::Diverged {
                iterations,
                residual: kcl,
            });
        }
        if kcl < opt.tol && vcon < opt.tol {
            break;
        }
        if iterations >= opt.max_iter {
            return Err(Error::Diverged {
                iterations,
                residual: kcl.max(vcon),
            });
        }
        let jac = jacobian(&vr, &vi, &qv);
        let solver = solver.get_or_insert_with(|| LinearSolver::analyze(&jac));
        let dx = match solver.solve(&jac, &f) {
            Ok(s) => s.x,
            Err(Error::SingularSystem { .. }) => return Err(Error::SingularJacobian),
            Err(e) => return Err(e),
        };
        for i in 0..n {
            vr[i] -= dx[i];
            vi[i] -= dx[n + i];
        }
        for (k, q) in qv.iter_mut().enumerate() {
            *q -= dx[2 * n + k];
        }
        iterations += 1;
        (f, kcl, vcon) = evaluate(&vr, &vi, &qv);
    }

    // net generation at the solution
    let (ir, ii) = y.currents(&vr, &vi);
    let mut pg = pg_sched.clone();
    let mut qg = qg_sched.clone();
    for (k, &i) in pv.iter().enumerate() {
        qg[i] = qv[k];
    }
    {
        let i = slack;
        // S_injected = V conj(I_net)
        let p_inj = vr[i] * ir[i] + vi[i] * ii[i];
        let q_inj = vi[i] * ir[i] - vr[i] * ii[i];
        pg[i] = p_inj + c.buses[i].pd;
        qg[i] = q_inj + c.buses[i].qd;
    }
    Ok(PfSolution {
        vr,
        vi,
        pg,
        qg,
        iterations,
        max_mismatch: kcl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;

    const THREE_BUS: &str = "\
function mpc = three
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0  0  0 0 1 1 0 0 1 1.1 0.9;
 2 2 0  0  0 0 1 1 0 0 1 1.1 0.9;
 3 1 90 30 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [
 1 0  0 0 0 1.02 100 1 0 0;
 2 40 0 0 0 1.01 100 1 0 0;
];
mpc.branch = [
 1 2 0.02 0.08 0.02 0 0 0 0 0 1 -360 360;
 1 3 0.03 0.10 0.02 0 0 0 0 0 1 -360 360;
 2 3 0.02 0.09 0.02 0 0 0 0 0 1 -360 360;
];
";

    #[test]
    fn no_load_network_is_flat() {
        let text = "\
function mpc = flat
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 1 0 0 0 0 1 1 0 0 1 1.1 0.9;
 3 1 0 0 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 0 0 1.04 100 1 0 0; ];
mpc.branch = [
 1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
 2 3 0 0.2 0 0 0 0 0 0 1 -360 360;
];
";
        let c = parse_case(text).unwrap();
        let s = solve_power_flow(&c, &PfOptions::default()).unwrap();
        assert_eq!(s.iterations, 1);
        for i in 0..3 {
            assert!((s.vr[i] - 1.04).abs() < 1e-12);
            assert!(s.vi[i].abs() < 1e-12);
        }
    }

    #[test]
    fn three_bus_converges_with_pv_magnitude() {
        let c = parse_case(THREE_BUS).unwrap();
        let s = solve_power_flow(&c, &PfOptions::default()).unwrap();
        assert!(s.max_mismatch < 1e-8);
        let vm2 = (s.vr[1].powi(2) + s.vi[1].powi(2)).sqrt();
        assert!((vm2 - 1.01).abs() < 1e-8);
        // fresh recomputation of the residual
        let y = build_split_admittance(&c, None).unwrap();
        let m = kcl_mismatch(&c, &y, &s.vr, &s.vi, &s.pg, &s.qg);
        assert!((m - s.max_mismatch).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let c = parse_case(THREE_BUS).unwrap();
        let opt = PfOptions {
            tol: 0.0,
            ..PfOptions::default()
        };
        assert!(matches!(solve_power_flow(&c, &opt), Err(Error::Config(_))));
    }
}
