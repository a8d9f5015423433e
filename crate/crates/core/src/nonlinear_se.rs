//! Nonlinear ΔY-RTU estimator, solved by Newton-Raphson on the full
//! primal/adjoint system.
//!
//! Stacked unknowns `[vr; vi; λr; λi; ΔG; ΔB]` (6n). Rows, per bus k:
//!
//! ```text
//! KCL        (Y x)_k + draw_k                      RTU draw uses g+ΔG, b+ΔB
//! adjoint    (J(ΔY)ᵀ λ)_k + D_k (x_k − v_pmu,k)
//! stat ΔG    γ ΔG + λr vr + λi vi                  (ΔG_k itself at PMU buses)
//! stat ΔB    γ ΔB + λr vi − λi vr                  (ΔB_k itself at PMU buses)
//! ```

use serde::{Deserialize, Serialize};

use crate::casegen::SeCase;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, CscMatrix, LinearSolver, Triplets};
use crate::linear_se::{assemble_kkt_from, device_stamps, pmu_objective, solve_kkt, EstimateResult, Stamp};
use crate::network::{build_split_admittance, SplitAdmittance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlInit {
    FromLinear,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step length; halved on residual increase down to 1/8.
    pub damping: f64,
    pub init: NlInit,
}

impl Default for NlOptions {
    fn default() -> Self {
        NlOptions {
            tol: 1e-8,
            max_iter: 50,
            damping: 1.0,
            init: NlInit::FromLinear,
        }
    }
}

const MIN_STEP: f64 = 0.125;

#[derive(Debug, Clone, PartialEq)]
pub struct NlState {
    pub vr: Vec<f64>,
    pub vi: Vec<f64>,
    pub lambda_r: Vec<f64>,
    pub lambda_i: Vec<f64>,
    pub delta_g: Vec<f64>,
    pub delta_b: Vec<f64>,
}

impl NlState {
    pub fn zeros(n: usize) -> Self {
        NlState {
            vr: vec![0.0; n],
            vi: vec![0.0; n],
            lambda_r: vec![0.0; n],
            lambda_i: vec![0.0; n],
            delta_g: vec![0.0; n],
            delta_b: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.vr.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.vr, &self.vi, &self.lambda_r, &self.lambda_i, &self.delta_g, &self.delta_b]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    pub fn from_vec(z: &[f64]) -> Self {
        assert_eq!(z.len() % 6, 0);
        let n = z.len() / 6;
        let part = |k: usize| z[k * n..(k + 1) * n].to_vec();
        NlState {
            vr: part(0),
            vi: part(1),
            lambda_r: part(2),
            lambda_i: part(3),
            delta_g: part(4),
            delta_b: part(5),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        for v in [&self.vr, &self.vi, &self.lambda_r, &self.lambda_i, &self.delta_g, &self.delta_b] {
            if v.len() != n {
                return Err(Error::LengthMismatch { left: v.len(), right: n });
            }
        }
        Ok(())
    }
}

/// Full nonlinear KKT residual, stacked like the state.
pub fn residual_vector(y: &SplitAdmittance, stamps: &[Stamp], s: &NlState) -> Vec<f64> {
    let n = y.n();
    let (ir, ii) = y.currents(&s.vr, &s.vi);
    // Jᵀλ network part: the split matrix transposed
    let lt = y.blocks().mul_vec_transpose(&[s.lambda_r.as_slice(), s.lambda_i.as_slice()].concat());
    let mut f = vec![0.0; 6 * n];
    for (k, st) in stamps.iter().enumerate() {
        let (vr, vi) = (s.vr[k], s.vi[k]);
        let (lr, li) = (s.lambda_r[k], s.lambda_i[k]);
        let (dg, db) = (s.delta_g[k], s.delta_b[k]);
        match *st {
            Stamp::Pmu { g, vr: mr, vi: mi, ir: cr, ii: ci } => {
                f[k] = ir[k] + g * (vr - mr) - cr;
                f[n + k] = ii[k] + g * (vi - mi) - ci;
                f[2 * n + k] = lt[k] + g * lr + g * g * (vr - mr);
                f[3 * n + k] = lt[n + k] + g * li + g * g * (vi - mi);
                f[4 * n + k] = dg;
                f[5 * n + k] = db;
            }
            Stamp::Rtu { g, b, gamma } => {
                let (a, bb) = (g + dg, b + db);
                f[k] = ir[k] + a * vr + bb * vi;
                f[n + k] = ii[k] + a * vi - bb * vr;
                f[2 * n + k] = lt[k] + a * lr - bb * li;
                f[3 * n + k] = lt[n + k] + bb * lr + a * li;
                f[4 * n + k] = gamma * dg + lr * vr + li * vi;
                f[5 * n + k] = gamma * db + lr * vi - li * vr;
            }
        }
    }
    f
}

/// Max-abs nonlinear KKT residual of `s` for the case.
pub fn kkt_residual(se: &SeCase, s: &NlState) -> Result<f64> {
    s.check(se.n_buses())?;
    let y = build_split_admittance(&se.grid, None)?;
    let stamps = device_stamps(&se.devices)?;
    Ok(max_abs(&residual_vector(&y, &stamps, s)))
}

/// Newton Jacobian of [`residual_vector`]. The pattern depends only on the
/// network (explicit zeros are kept).
pub fn jacobian(y: &SplitAdmittance, stamps: &[Stamp], s: &NlState) -> CscMatrix {
    let n = y.n();
    let mut t = Triplets::with_capacity(6 * n, 6 * n, 2 * y.blocks().nnz() + 30 * n);
    y.stamp_into(&mut t, 0, 0, false);
    y.stamp_into(&mut t, 2 * n, 2 * n, true);
    for (k, st) in stamps.iter().enumerate() {
        let (r, i, lr_, li_, g_, b_) = (k, n + k, 2 * n + k, 3 * n + k, 4 * n + k, 5 * n + k);
        let (vr, vi) = (s.vr[k], s.vi[k]);
        let (lr, li) = (s.lambda_r[k], s.lambda_i[k]);
        // (a, b) local block, d adjoint gradient, and whether ΔY is live
        let (a, bb, d, gamma, live) = match *st {
            Stamp::Pmu { g, .. } => (g, 0.0, g * g, 1.0, 0.0),
            Stamp::Rtu { g, b, gamma } => (g + s.delta_g[k], b + s.delta_b[k], 0.0, gamma, 1.0),
        };
        // KCL
        t.push(r, r, a);
        t.push(r, i, bb);
        t.push(i, r, -bb);
        t.push(i, i, a);
        t.push(r, g_, live * vr);
        t.push(r, b_, live * vi);
        t.push(i, g_, live * vi);
        t.push(i, b_, -live * vr);
        // adjoint
        t.push(lr_, r, d);
        t.push(li_, i, d);
        t.push(lr_, lr_, a);
        t.push(lr_, li_, -bb);
        t.push(li_, lr_, bb);
        t.push(li_, li_, a);
        t.push(lr_, g_, live * lr);
        t.push(lr_, b_, -live * li);
        t.push(li_, g_, live * li);
        t.push(li_, b_, live * lr);
        // stationarity in ΔG, ΔB
        t.push(g_, r, live * lr);
        t.push(g_, i, live * li);
        t.push(g_, lr_, live * vr);
        t.push(g_, li_, live * vi);
        t.push(g_, g_, gamma);
        t.push(b_, r, -live * li);
        t.push(b_, i, live * lr);
        t.push(b_, lr_, live * vi);
        t.push(b_, li_, -live * vr);
        t.push(b_, b_, gamma);
    }
    t.to_csc()
}

/// `½Σ g²|V − V_pmu|² + ½Σ γ(ΔG² + ΔB²)`.
pub fn objective(stamps: &[Stamp], s: &NlState) -> f64 {
    let rtu: f64 = stamps
        .iter()
        .enumerate()
        .map(|(k, st)| match *st {
            Stamp::Rtu { gamma, .. } => 0.5 * gamma * (s.delta_g[k].powi(2) + s.delta_b[k].powi(2)),
            Stamp::Pmu { .. } => 0.0,
        })
        .sum();
    pmu_objective(stamps, &s.vr, &s.vi) + rtu
}

/// Admittance corrections reproducing correction currents at fixed voltage:
/// the cheapest ΔY that keeps a ΔI-feasible point feasible.
pub fn delta_y_from_currents(vr: f64, vi: f64, dir: f64, dii: f64) -> (f64, f64) {
    let m2 = vr * vr + vi * vi;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    ((dir * vr + dii * vi) / m2, (dir * vi - dii * vr) / m2)
}

pub fn solve_nonlinear_se(se: &SeCase, opt: &NlOptions) -> Result<EstimateResult> {
    if !(opt.tol > 0.0) || !(opt.damping > 0.0 && opt.damping <= 1.0) {
        return Err(Error::Config("tol must be positive and damping in (0, 1]".into()));
    }
    se.validate()?;
    let n = se.n_buses();
    let y = build_split_admittance(&se.grid, None)?;
    let stamps = device_stamps(&se.devices)?;

    let linear = solve_kkt(&assemble_kkt_from(&y, &stamps)?, &stamps, None)?;
    // baseline for the monotonicity check: the linear point with matching ΔY
    let mut baseline = NlState::zeros(n);
    baseline.vr.clone_from(&linear.vr);
    baseline.vi.clone_from(&linear.vi);
    for k in 0..n {
        if let Stamp::Rtu { .. } = stamps[k] {
            let (dg, db) =
                delta_y_from_currents(linear.vr[k], linear.vi[k], linear.delta_ir[k], linear.delta_ii[k]);
            baseline.delta_g[k] = dg;
            baseline.delta_b[k] = db;
        }
    }
    let baseline_objective = objective(&stamps, &baseline);

    let mut s = NlState::zeros(n);
    match opt.init {
        NlInit::FromLinear => {
            s.vr = linear.vr;
            s.vi = linear.vi;
        }
        NlInit::Flat => {
            s.vr = vec![1.0; n];
        }
    }

    let mut f = residual_vector(&y, &stamps, &s);
    let mut res = max_abs(&f);
    let mut solver: Option<LinearSolver> = None;
    let mut iterations = 0;
    while !(res < opt.tol) {
        if iterations == opt.max_iter {
            return Err(Error::NotConverged { iterations, residual: res });
        }
        let jac = jacobian(&y, &stamps, &s);
        let lin = solver.get_or_insert_with(|| LinearSolver::analyze(&jac));
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let dz = lin.solve(&jac, &neg)?.x;
        if dz.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { pivot: 0 });
        }
        let z0 = s.to_vec();
        let mut step = opt.damping;
        loop {
            let z: Vec<f64> = z0.iter().zip(&dz).map(|(a, d)| a + step * d).collect();
            let cand = NlState::from_vec(&z);
            let fc = residual_vector(&y, &stamps, &cand);
            let rc = max_abs(&fc);
            if rc < res || step <= MIN_STEP {
                s = cand;
                f = fc;
                res = rc;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        log::debug!("ΔY iteration {iterations}: residual {res:.3e}");
        if !res.is_finite() {
            return Err(Error::NotConverged { iterations, residual: res });
        }
    }

    let obj = objective(&stamps, &s);
    let monotone = obj <= baseline_objective * (1.0 + 1e-9) + 1e-15;
    if !monotone {
        log::warn!("ΔY objective {obj:.6e} above its linear initialization {baseline_objective:.6e}");
    }
    let mut dir = vec![0.0; n];
    let mut dii = vec![0.0; n];
    for k in 0..n {
        if let Stamp::Rtu { .. } = stamps[k] {
            let (dg, db) = (s.delta_g[k], s.delta_b[k]);
            dir[k] = dg * s.vr[k] + db * s.vi[k];
            dii[k] = dg * s.vi[k] - db * s.vr[k];
        }
    }
    Ok(EstimateResult {
        vr: s.vr,
        vi: s.vi,
        lambda_r: s.lambda_r,
        lambda_i: s.lambda_i,
        delta_ir: dir,
        delta_ii: dii,
        delta_g: s.delta_g,
        delta_b: s.delta_b,
        objective: obj,
        converged: monotone,
        iterations,
        residual: res,
    })
}
