//! Linear ΔI-RTU estimator.
//!
//! Unknowns are stacked as `[vr; vi; λr; λi]` (each block of length n, bus
//! order). The first 2n rows are KCL with every RTU slack current already
//! eliminated through `ΔI = −λ/γ`; the last 2n rows are the adjoint
//! (stationarity in x) rows:
//!
//! ```text
//! [ J   −Γ⁻¹ ] [x]   [c      ]
//! [ D    Jᵀ  ] [λ] = [D·v_pmu]
//! ```
//!
//! `J = Y_GB + device stamps`, `D = g_pmu²` on PMU buses, `c` holds the PMU
//! source constants `i_meas + g_pmu·v_meas`. The objective is
//! `½Σ g_pmu²|V − V_pmu|² + ½Σ γ|ΔI|²`.

use crate::casegen::{Device, SeCase};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, CscMatrix, LinearSolver, Triplets};
use crate::network::{build_split_admittance, SplitAdmittance};

/// Per-bus model parameters as they enter the KKT matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stamp {
    Pmu { g: f64, vr: f64, vi: f64, ir: f64, ii: f64 },
    Rtu { g: f64, b: f64, gamma: f64 },
}

impl Stamp {
    pub fn from_device(d: &Device) -> Result<Stamp> {
        Ok(match d {
            Device::Pmu(p) => Stamp::Pmu {
                g: p.g_pmu,
                vr: p.vr,
                vi: p.vi,
                ir: p.ir,
                ii: p.ii,
            },
            Device::Rtu(r) => {
                let (g, b) = r.admittance()?;
                Stamp::Rtu { g, b, gamma: r.gamma }
            }
        })
    }

    /// The 2×2 block `[[a, b], [−b, a]]` this model adds to J, as `(a, b)`.
    fn jacobian(&self) -> (f64, f64) {
        match *self {
            Stamp::Pmu { g, .. } => (g, 0.0),
            Stamp::Rtu { g, b, .. } => (g, b),
        }
    }
}

pub fn device_stamps(devices: &[Device]) -> Result<Vec<Stamp>> {
    devices.iter().map(Stamp::from_device).collect()
}

/// Assembled saddle-point system.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub n: usize,
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
}

impl KktSystem {
    pub fn dim(&self) -> usize {
        4 * self.n
    }

    /// Positions of `(vr, vi, λr, λi)` for bus index `k`.
    pub fn index(&self, k: usize) -> [usize; 4] {
        let n = self.n;
        [k, n + k, 2 * n + k, 3 * n + k]
    }
}

/// Assembles the KKT system. Every bus contributes the same entries
/// regardless of its device kind (explicit zeros where a coupling does not
/// apply), so the pattern depends only on the network and symbolic analysis
/// can be shared across measurement draws.
pub fn assemble_kkt_from(y: &SplitAdmittance, stamps: &[Stamp]) -> Result<KktSystem> {
    let n = y.n();
    if stamps.len() != n {
        return Err(Error::IndexMismatch(format!(
            "{} device models for {n} buses",
            stamps.len()
        )));
    }
    let mut t = Triplets::with_capacity(4 * n, 4 * n, 2 * y.blocks().nnz() + 12 * n);
    y.stamp_into(&mut t, 0, 0, false);
    y.stamp_into(&mut t, 2 * n, 2 * n, true);
    let mut rhs = vec![0.0; 4 * n];
    for (k, s) in stamps.iter().enumerate() {
        let (r, i, lr, li) = (k, n + k, 2 * n + k, 3 * n + k);
        let (a, b) = s.jacobian();
        t.push(r, r, a);
        t.push(r, i, b);
        t.push(i, r, -b);
        t.push(i, i, a);
        // transposed copy in the adjoint block
        t.push(lr, lr, a);
        t.push(li, lr, b);
        t.push(lr, li, -b);
        t.push(li, li, a);
        let (coupling, d) = match *s {
            Stamp::Pmu { g, vr, vi, ir, ii } => {
                rhs[r] = ir + g * vr;
                rhs[i] = ii + g * vi;
                rhs[lr] = g * g * vr;
                rhs[li] = g * g * vi;
                (0.0, g * g)
            }
            Stamp::Rtu { gamma, .. } => (-1.0 / gamma, 0.0),
        };
        t.push(r, lr, coupling);
        t.push(i, li, coupling);
        t.push(lr, r, d);
        t.push(li, i, d);
    }
    Ok(KktSystem {
        n,
        matrix: t.to_csc(),
        rhs,
    })
}

pub fn assemble_kkt(se: &SeCase, y: &SplitAdmittance) -> Result<KktSystem> {
    if se.devices.len() != se.grid.n_buses() {
        return Err(Error::IndexMismatch(format!(
            "{} devices for {} buses",
            se.devices.len(),
            se.grid.n_buses()
        )));
    }
    assemble_kkt_from(y, &device_stamps(&se.devices)?)
}

/// An estimator solution.
///
/// `delta_ir`/`delta_ii` are the RTU correction currents; for the ΔY model
/// they are the currents equivalent to the admittance corrections, which are
/// reported in `delta_g`/`delta_b` (zero for the ΔI model). All per-bus
/// vectors are zero at PMU buses.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub vr: Vec<f64>,
    pub vi: Vec<f64>,
    pub lambda_r: Vec<f64>,
    pub lambda_i: Vec<f64>,
    pub delta_ir: Vec<f64>,
    pub delta_ii: Vec<f64>,
    pub delta_g: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-abs residual of the (nonlinear, for ΔY) KKT system.
    pub residual: f64,
}

/// `½Σ g²|V − V_pmu|²` over PMU buses.
pub(crate) fn pmu_objective(stamps: &[Stamp], vr: &[f64], vi: &[f64]) -> f64 {
    stamps
        .iter()
        .enumerate()
        .map(|(k, s)| match *s {
            Stamp::Pmu { g, vr: mr, vi: mi, .. } => {
                0.5 * g * g * ((vr[k] - mr).powi(2) + (vi[k] - mi).powi(2))
            }
            Stamp::Rtu { .. } => 0.0,
        })
        .sum()
}

/// Solves an assembled system; `solver` may carry a symbolic analysis of the
/// same pattern.
pub fn solve_kkt(kkt: &KktSystem, stamps: &[Stamp], solver: Option<&LinearSolver>) -> Result<EstimateResult> {
    let n = kkt.n;
    let local;
    let solver = match solver {
        Some(s) => s,
        None => {
            local = LinearSolver::analyze(&kkt.matrix);
            &local
        }
    };
    let sol = solver.solve(&kkt.matrix, &kkt.rhs)?;
    if sol.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { pivot: 0 });
    }
    let z = sol.x;
    let (vr, rest) = z.split_at(n);
    let (vi, rest) = rest.split_at(n);
    let (lr, li) = rest.split_at(n);
    let mut dir = vec![0.0; n];
    let mut dii = vec![0.0; n];
    let mut objective = pmu_objective(stamps, vr, vi);
    for (k, s) in stamps.iter().enumerate() {
        if let Stamp::Rtu { gamma, .. } = *s {
            dir[k] = -lr[k] / gamma;
            dii[k] = -li[k] / gamma;
            objective += 0.5 * gamma * (dir[k] * dir[k] + dii[k] * dii[k]);
        }
    }
    if !sol.accurate {
        log::warn!(
            "KKT solve residual {:.3e} above tolerance after refinement",
            sol.residual
        );
    }
    Ok(EstimateResult {
        vr: vr.to_vec(),
        vi: vi.to_vec(),
        lambda_r: lr.to_vec(),
        lambda_i: li.to_vec(),
        delta_ir: dir,
        delta_ii: dii,
        delta_g: vec![0.0; n],
        delta_b: vec![0.0; n],
        objective,
        converged: sol.accurate,
        iterations: 1,
        residual: sol.residual,
    })
}

pub fn solve_linear_se(se: &SeCase) -> Result<EstimateResult> {
    se.validate()?;
    let y = build_split_admittance(&se.grid, None)?;
    let stamps = device_stamps(&se.devices)?;
    let kkt = assemble_kkt_from(&y, &stamps)?;
    solve_kkt(&kkt, &stamps, None)
}

/// KCL residual `Y x + draws` of the device models at `(vr, vi)` with the
/// given RTU correction currents (pass zeros for the mean models).
pub fn model_kcl_residual(
    y: &SplitAdmittance,
    stamps: &[Stamp],
    vr: &[f64],
    vi: &[f64],
    delta_ir: &[f64],
    delta_ii: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (mut fr, mut fi) = y.currents(vr, vi);
    for (k, s) in stamps.iter().enumerate() {
        match *s {
            Stamp::Pmu { g, vr: mr, vi: mi, ir, ii } => {
                fr[k] += g * (vr[k] - mr) - ir;
                fi[k] += g * (vi[k] - mi) - ii;
            }
            Stamp::Rtu { g, b, .. } => {
                fr[k] += g * vr[k] + b * vi[k] + delta_ir[k];
                fi[k] += g * vi[k] - b * vr[k] + delta_ii[k];
            }
        }
    }
    (fr, fi)
}

/// `‖K z − rhs‖∞` for a stacked solution.
pub fn kkt_system_residual(kkt: &KktSystem, z: &[f64]) -> f64 {
    let kz = kkt.matrix.mul_vec(z);
    let r: Vec<f64> = kz.iter().zip(&kkt.rhs).map(|(a, b)| a - b).collect();
    max_abs(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Bus, BusKind, GridCase};
    use crate::casegen::{PmuDevice, RtuDevice};

    fn one_bus(gs: f64) -> GridCase {
        GridCase {
            name: "one".into(),
            base_mva: 100.0,
            buses: vec![Bus {
                id: 1,
                kind: BusKind::Slack,
                pd: 0.0,
                qd: 0.0,
                gs,
                bs: 0.0,
                vm_init: 1.0,
                va_init: 0.0,
            }],
            branches: vec![],
            gens: vec![],
        }
    }

    #[test]
    fn single_rtu_bus_matches_hand_assembly() {
        let se = SeCase {
            grid: one_bus(0.5),
            devices: vec![Device::Rtu(RtuDevice {
                vm: 1.0,
                p: 0.2,
                q: 0.1,
                sigma_vm_rel: 0.0,
                sigma_p_rel: 0.0,
                sigma_q_rel: 0.0,
                gamma: 4.0,
            })],
            truth: None,
            seed: 0,
        };
        let y = build_split_admittance(&se.grid, None).unwrap();
        let k = assemble_kkt(&se, &y).unwrap();
        let (g, b) = (0.5 + 0.2, 0.1);
        let expect = [
            [g, b, -0.25, 0.0],
            [-b, g, 0.0, -0.25],
            [0.0, 0.0, g, -b],
            [0.0, 0.0, b, g],
        ];
        let dense = k.matrix.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((dense[i][j] - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
        assert_eq!(k.rhs, vec![0.0; 4]);
        // no PMU: the only consistent state is the dead network
        let r = solve_linear_se(&se).unwrap();
        assert!(r.vr[0].abs() < 1e-15 && r.objective.abs() < 1e-30);
    }

    #[test]
    fn single_pmu_bus_recovers_measurement() {
        // a lone bus with shunt 0.5: PMU reading v = 1, i = 0.5 is exact
        let se = SeCase {
            grid: one_bus(0.5),
            devices: vec![Device::Pmu(PmuDevice {
                g_pmu: 10.0,
                vr: 1.0,
                vi: 0.0,
                ir: 0.5,
                ii: 0.0,
                sigma_rel: 0.0,
                perfect: true,
            })],
            truth: None,
            seed: 0,
        };
        let r = solve_linear_se(&se).unwrap();
        assert!((r.vr[0] - 1.0).abs() < 1e-14 && r.vi[0].abs() < 1e-14);
        assert!(r.objective < 1e-28);
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn pattern_is_independent_of_device_kind() {
        let y = build_split_admittance(&one_bus(0.1), None).unwrap();
        let a = assemble_kkt_from(&y, &[Stamp::Rtu { g: 1.0, b: 0.0, gamma: 1.0 }]).unwrap();
        let b = assemble_kkt_from(
            &y,
            &[Stamp::Pmu { g: 10.0, vr: 1.0, vi: 0.0, ir: 0.0, ii: 0.0 }],
        )
        .unwrap();
        assert!(a.matrix.same_pattern(&b.matrix));
    }

    #[test]
    fn device_count_mismatch() {
        let y = build_split_admittance(&one_bus(0.1), None).unwrap();
        assert!(matches!(assemble_kkt_from(&y, &[]), Err(Error::IndexMismatch(_))));
    }
}
