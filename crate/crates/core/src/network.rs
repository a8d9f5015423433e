//! Split real/imaginary nodal admittance matrix.
//!
//! For bus voltages `V = V_R + j V_I` and network currents `I = Y V` with
//! `Y = G + jB`, the split form is
//!
//! ```text
//! [ I_R ]   [ G  -B ] [ V_R ]
//! [ I_I ] = [ B   G ] [ V_I ]
//! ```
//!
//! with rows and columns ordered `[all V_R; all V_I]` by bus position in the
//! case. Branches use the MATPOWER pi model: complex tap `t = tap·e^{j shift}`
//! on the from side, `Y_ff = (y + j b/2)/tap²`, `Y_tt = y + j b/2`,
//! `Y_ft = −y/conj(t)`, `Y_tf = −y/t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::error::{Error, Result};
use crate::linalg::{CscMatrix, Triplets};

#[derive(Debug, Clone)]
pub struct SplitAdmittance {
    n: usize,
    g: CscMatrix,
    b: CscMatrix,
    blocks: CscMatrix,
}

impl SplitAdmittance {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Real part of the complex bus admittance matrix.
    pub fn g(&self) -> &CscMatrix {
        &self.g
    }

    /// Imaginary part of the complex bus admittance matrix.
    pub fn b(&self) -> &CscMatrix {
        &self.b
    }

    /// The 2n×2n block matrix `[[G, −B], [B, G]]`.
    pub fn blocks(&self) -> &CscMatrix {
        &self.blocks
    }

    /// Network current leaving each bus, `(I_R, I_I)`.
    pub fn currents(&self, vr: &[f64], vi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut x = Vec::with_capacity(2 * n);
        x.extend_from_slice(vr);
        x.extend_from_slice(vi);
        let mut y = self.blocks.mul_vec(&x);
        let ii = y.split_off(n);
        (y, ii)
    }

    /// Adds `blocks` (or its transpose) into `t` at the given offset.
    pub fn stamp_into(&self, t: &mut Triplets, row0: usize, col0: usize, transpose: bool) {
        for j in 0..self.blocks.ncols {
            let (rows, vals) = self.blocks.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                if transpose {
                    t.push(row0 + j, col0 + i, v);
                } else {
                    t.push(row0 + i, col0 + j, v);
                }
            }
        }
    }
}

/// Per-branch series parameters replacing the case values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBranches {
    pub r: Vec<f64>,
    pub x: Vec<f64>,
}

/// Relative standard deviations of series parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub sigma_line_r: f64,
    pub sigma_line_x: f64,
    pub sigma_xfmr_r: f64,
    pub sigma_xfmr_x: f64,
}

impl PerturbationSpec {
    pub const ZERO: PerturbationSpec = PerturbationSpec {
        sigma_line_r: 0.0,
        sigma_line_x: 0.0,
        sigma_xfmr_r: 0.0,
        sigma_xfmr_x: 0.0,
    };

    /// Lines: 5 % on r, 0.5 % on x. Transformers: 0.5 % on r, 0.1 % on x.
    pub const TEMPERATURE: PerturbationSpec = PerturbationSpec {
        sigma_line_r: 0.05,
        sigma_line_x: 0.005,
        sigma_xfmr_r: 0.005,
        sigma_xfmr_x: 0.001,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_line_r,
            self.sigma_line_x,
            self.sigma_xfmr_r,
            self.sigma_xfmr_x,
        ];
        if all.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "perturbation sigmas must be non-negative: {self:?}"
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

/// Draws independent normal series parameters for every branch, in branch
/// order, from `rng`. Resistances are clamped at zero.
pub fn perturb_branches<R: Rng + ?Sized>(
    c: &GridCase,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> PerturbedBranches {
    let mut r = Vec::with_capacity(c.branches.len());
    let mut x = Vec::with_capacity(c.branches.len());
    for br in &c.branches {
        let (sr, sx) = if br.is_transformer() {
            (spec.sigma_xfmr_r, spec.sigma_xfmr_x)
        } else {
            (spec.sigma_line_r, spec.sigma_line_x)
        };
        let zr: f64 = rng.sample(StandardNormal);
        let zx: f64 = rng.sample(StandardNormal);
        let rr = (br.r + sr * br.r.abs() * zr).max(0.0);
        let mut xx = br.x + sx * br.x.abs() * zx;
        if br.x != 0.0 && xx == 0.0 {
            xx = br.x;
        }
        r.push(rr);
        x.push(xx);
    }
    PerturbedBranches { r, x }
}

/// Assembles the split admittance of `c`, optionally with perturbed series
/// parameters.
pub fn build_split_admittance(
    c: &GridCase,
    overlay: Option<&PerturbedBranches>,
) -> Result<SplitAdmittance> {
    let index = c.bus_index()?;
    let n = c.n_buses();
    if let Some(o) = overlay {
        if o.r.len() != c.branches.len() || o.x.len() != c.branches.len() {
            return Err(Error::IndexMismatch(format!(
                "overlay covers {} branches, case has {}",
                o.r.len(),
                c.branches.len()
            )));
        }
    }

    let mut gt = Triplets::with_capacity(n, n, n + 4 * c.branches.len());
    let mut bt = Triplets::with_capacity(n, n, n + 4 * c.branches.len());
    // every bus gets a diagonal entry so the pattern does not depend on values
    for (i, bus) in c.buses.iter().enumerate() {
        gt.push(i, i, bus.gs);
        bt.push(i, i, bus.bs);
    }
    for (k, br) in c.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let (r, x) = match overlay {
            Some(o) => (o.r[k], o.x[k]),
            None => (br.r, br.x),
        };
        if r == 0.0 && x == 0.0 {
            return Err(Error::DegenerateBranch { index: k });
        }
        let f = index[&br.from];
        let t = index[&br.to];
        let den = r * r + x * x;
        let (ys_re, ys_im) = (r / den, -x / den);
        let tap2 = br.tap * br.tap;
        let (cs, sn) = (br.shift.cos(), br.shift.sin());
        let half_b = br.b_chg / 2.0;

        // Y_ff, Y_tt
        gt.push(f, f, ys_re / tap2);
        bt.push(f, f, (ys_im + half_b) / tap2);
        gt.push(t, t, ys_re);
        bt.push(t, t, ys_im + half_b);
        // Y_ft = −y / (tap e^{−j shift}) = −y e^{j shift} / tap
        let (ft_re, ft_im) = (
            -(ys_re * cs - ys_im * sn) / br.tap,
            -(ys_re * sn + ys_im * cs) / br.tap,
        );
        // Y_tf = −y / (tap e^{j shift}) = −y e^{−j shift} / tap
        let (tf_re, tf_im) = (
            -(ys_re * cs + ys_im * sn) / br.tap,
            -(ys_im * cs - ys_re * sn) / br.tap,
        );
        gt.push(f, t, ft_re);
        bt.push(f, t, ft_im);
        gt.push(t, f, tf_re);
        bt.push(t, f, tf_im);
    }
    let g = gt.to_csc();
    let b = bt.to_csc();
    debug_assert!(g.same_pattern(&b));

    let mut blk = Triplets::with_capacity(2 * n, 2 * n, 4 * g.nnz());
    for j in 0..n {
        let (rows, gv) = g.col(j);
        let bv = b.col(j).1;
        for ((&i, &gij), &bij) in rows.iter().zip(gv).zip(bv) {
            blk.push(i, j, gij);
            blk.push(i, n + j, -bij);
            blk.push(n + i, j, bij);
            blk.push(n + i, n + j, gij);
        }
    }
    Ok(SplitAdmittance {
        n,
        g,
        b,
        blocks: blk.to_csc(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Branch, Bus, BusKind, Gen};
    use crate::rng::{Domain, StreamKey};

    fn bus(id: u32, kind: BusKind) -> Bus {
        Bus {
            id,
            kind,
            pd: 0.0,
            qd: 0.0,
            gs: 0.0,
            bs: 0.0,
            vm_init: 1.0,
            va_init: 0.0,
        }
    }

    fn line(from: u32, to: u32, r: f64, x: f64) -> Branch {
        Branch {
            from,
            to,
            r,
            x,
            b_chg: 0.0,
            tap: 1.0,
            shift: 0.0,
            in_service: true,
        }
    }

    fn two_bus(br: Branch) -> GridCase {
        GridCase {
            name: "t".into(),
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
            branches: vec![br],
            gens: vec![Gen {
                bus: 1,
                pg: 0.0,
                qg: 0.0,
                vset: 1.0,
                in_service: true,
            }],
        }
    }

    #[test]
    fn pure_reactance_series_admittance() {
        let y = build_split_admittance(&two_bus(line(1, 2, 0.0, 0.1)), None).unwrap();
        assert_eq!(y.g().get(0, 1), 0.0);
        assert!((y.b().get(0, 1) - 10.0).abs() < 1e-12);
        assert!((y.b().get(0, 0) + 10.0).abs() < 1e-12);
        // split layout: [[G, -B], [B, G]]
        assert!((y.blocks().get(0, 3) + 10.0).abs() < 1e-12);
        assert!((y.blocks().get(2, 1) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lossy_series_admittance() {
        // y = 1/(0.01 + j0.1) = (0.01 - j0.1)/0.0101
        let y = build_split_admittance(&two_bus(line(1, 2, 0.01, 0.1)), None).unwrap();
        let (g, b) = (0.01 / 0.0101, -0.1 / 0.0101);
        assert!((y.g().get(0, 0) - g).abs() < 1e-12);
        assert!((y.b().get(0, 0) - b).abs() < 1e-12);
        assert!((g - 0.990_099_009_900_990_1).abs() < 1e-15);
        assert!((b + 9.900_990_099_009_901).abs() < 1e-12);
    }

    #[test]
    fn out_of_service_branch_skipped() {
        let mut br = line(1, 2, 0.01, 0.1);
        br.in_service = false;
        let y = build_split_admittance(&two_bus(br), None).unwrap();
        assert_eq!(y.g().get(0, 1), 0.0);
        assert_eq!(y.b().get(0, 0), 0.0);
    }

    #[test]
    fn degenerate_overlay_rejected() {
        let c = two_bus(line(1, 2, 0.01, 0.1));
        let o = PerturbedBranches {
            r: vec![0.0],
            x: vec![0.0],
        };
        assert!(matches!(
            build_split_admittance(&c, Some(&o)),
            Err(Error::DegenerateBranch { index: 0 })
        ));
    }

    #[test]
    fn zero_spec_reproduces_parameters() {
        let c = two_bus(line(1, 2, 0.01, 0.1));
        let mut rng = StreamKey::new(1, Domain::MonteCarlo).stream(0, 0);
        let p = perturb_branches(&c, &PerturbationSpec::ZERO, &mut rng);
        assert_eq!(p.r, vec![0.01]);
        assert_eq!(p.x, vec![0.1]);
    }

    #[test]
    fn negative_resistance_draw_clamped() {
        let c = two_bus(line(1, 2, 0.01, 0.1));
        let spec = PerturbationSpec {
            sigma_line_r: 50.0,
            ..PerturbationSpec::ZERO
        };
        let key = StreamKey::new(3, Domain::MonteCarlo);
        let mut clamped = 0;
        for k in 0..200 {
            let p = perturb_branches(&c, &spec, &mut key.stream(k, 0));
            assert!(p.r[0] >= 0.0);
            clamped += usize::from(p.r[0] == 0.0);
        }
        assert!(clamped > 50);
    }
}
