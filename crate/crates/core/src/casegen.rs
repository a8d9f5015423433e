//! Synthetic state-estimation cases: device placement and measurement
//! synthesis around a power-flow truth.
//!
//! Every bus carries exactly one device. PMUs measure the bus voltage and
//! the net current injected into the network; RTUs measure the voltage
//! magnitude and the net complex power consumed at the bus (load minus
//! generation, so generation shows up as negative `p`).

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::error::{Error, Result};
use crate::network::build_split_admittance;
use crate::powerflow::PfSolution;
use crate::rng::{Domain, StreamKey};

/// Absolute floor for the noise of a channel whose mean is (near) zero.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Sampled RTU voltage magnitudes are kept at or above this value.
pub const VM_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuDevice {
    pub g_pmu: f64,
    pub vr: f64,
    pub vi: f64,
    pub ir: f64,
    pub ii: f64,
    pub sigma_rel: f64,
    pub perfect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtuDevice {
    pub vm: f64,
    pub p: f64,
    pub q: f64,
    pub sigma_vm_rel: f64,
    pub sigma_p_rel: f64,
    pub sigma_q_rel: f64,
    pub gamma: f64,
}

impl RtuDevice {
    /// Mean admittance `(g_m, b_m)` of this measurement.
    pub fn admittance(&self) -> Result<(f64, f64)> {
        rtu_admittance(self.vm, self.p, self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Device {
    Pmu(PmuDevice),
    Rtu(RtuDevice),
}

/// A measurement set over a known network.
#[derive(Debug, Clone, PartialEq)]
pub struct SeCase {
    pub grid: GridCase,
    /// One device per bus, in bus order.
    pub devices: Vec<Device>,
    /// True rectangular voltages, when known.
    pub truth: Option<(Vec<f64>, Vec<f64>)>,
    pub seed: u64,
}

impl SeCase {
    pub fn n_buses(&self) -> usize {
        self.grid.n_buses()
    }

    pub fn rtu_count(&self) -> usize {
        self.devices
            .iter()
            .filter(|d| matches!(d, Device::Rtu(_)))
            .count()
    }

    pub fn pmu_count(&self) -> usize {
        self.devices.len() - self.rtu_count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_buses();
        if self.devices.len() != n {
            return Err(Error::IndexMismatch(format!(
                "{} devices for {n} buses",
                self.devices.len()
            )));
        }
        for (i, d) in self.devices.iter().enumerate() {
            let bus = self.grid.buses[i].id;
            match d {
                Device::Pmu(p) if !(p.g_pmu > 0.0) => {
                    return Err(Error::Validation(format!("PMU at bus {bus}: g_pmu must be positive")))
                }
                Device::Rtu(r) if !(r.gamma > 0.0) => {
                    return Err(Error::Validation(format!("RTU at bus {bus}: gamma must be positive")))
                }
                Device::Rtu(r) if !(r.vm > 0.0) => {
                    return Err(Error::Validation(format!("RTU at bus {bus}: vm must be positive")))
                }
                _ => {}
            }
        }
        if let Some((vr, vi)) = &self.truth {
            if vr.len() != n || vi.len() != n {
                return Err(Error::LengthMismatch {
                    left: vr.len().min(vi.len()),
                    right: n,
                });
            }
        }
        Ok(())
    }
}

/// Statistical recipe for synthetic measurement sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub frac_pmu_perfect: f64,
    pub frac_pmu_noisy: f64,
    pub pmu_sigma_rel: f64,
    pub rtu_sigma_vm_rel: f64,
    pub rtu_sigma_pq_rel: f64,
    pub g_pmu: f64,
    /// Weight of a regular RTU.
    pub rtu_gamma: f64,
    /// Share of RTUs whose power readings are stale.
    pub degraded_frac: f64,
    pub degraded_sigma_mult: f64,
    pub degraded_weight_div: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            frac_pmu_perfect: 0.04,
            frac_pmu_noisy: 0.06,
            pmu_sigma_rel: 0.0002,
            rtu_sigma_vm_rel: 0.004,
            rtu_sigma_pq_rel: 0.01,
            g_pmu: 10.0,
            rtu_gamma: 1.0,
            degraded_frac: 0.0,
            degraded_sigma_mult: 10.0,
            degraded_weight_div: 10.0,
        }
    }
}

impl NoiseSpec {
    /// Same placement with every noise source switched off.
    pub fn noiseless(self) -> Self {
        NoiseSpec {
            pmu_sigma_rel: 0.0,
            rtu_sigma_vm_rel: 0.0,
            rtu_sigma_pq_rel: 0.0,
            ..self
        }
    }

    /// Weight divisor derived from the sigma multiplier, `mult^exponent`.
    pub fn with_weight_exponent(self, exponent: f64) -> Self {
        NoiseSpec {
            degraded_weight_div: self.degraded_sigma_mult.powf(exponent),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.frac_pmu_perfect)
            || !frac_ok(self.frac_pmu_noisy)
            || !frac_ok(self.degraded_frac)
        {
            return Err(Error::Config("fractions must lie in [0, 1]".into()));
        }
        if self.frac_pmu_perfect + self.frac_pmu_noisy > 1.0 {
            return Err(Error::Config("PMU fractions sum above 1".into()));
        }
        for (name, s) in [
            ("pmu_sigma_rel", self.pmu_sigma_rel),
            ("rtu_sigma_vm_rel", self.rtu_sigma_vm_rel),
            ("rtu_sigma_pq_rel", self.rtu_sigma_pq_rel),
            ("degraded_sigma_mult", self.degraded_sigma_mult),
        ] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        for (name, v) in [
            ("g_pmu", self.g_pmu),
            ("rtu_gamma", self.rtu_gamma),
            ("degraded_weight_div", self.degraded_weight_div),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    PerfectPmu,
    NoisyPmu,
    Rtu { degraded: bool },
}

fn class_count(frac: f64, n: usize) -> usize {
    // tolerate representation error such as 0.06 * 500 = 30.000000000000004
    ((frac * n as f64) + 1e-9).floor() as usize
}

/// Places devices: `floor(frac·n)` perfect and noisy PMUs drawn without
/// replacement, RTUs elsewhere, and a share of the RTUs flagged degraded.
pub fn assign_devices(c: &GridCase, spec: &NoiseSpec, seed: u64) -> Result<Vec<DeviceKind>> {
    spec.validate()?;
    let n = c.n_buses();
    let n_perfect = class_count(spec.frac_pmu_perfect, n);
    let n_noisy = class_count(spec.frac_pmu_noisy, n).min(n - n_perfect);
    let mut rng = StreamKey::new(seed, Domain::DeviceAssignment).stream(0, 0);

    let mut kinds = vec![DeviceKind::Rtu { degraded: false }; n];
    let picked = sample(&mut rng, n, n_perfect + n_noisy).into_vec();
    for (k, &i) in picked.iter().enumerate() {
        kinds[i] = if k < n_perfect {
            DeviceKind::PerfectPmu
        } else {
            DeviceKind::NoisyPmu
        };
    }
    let rtus: Vec<usize> = (0..n)
        .filter(|&i| matches!(kinds[i], DeviceKind::Rtu { .. }))
        .collect();
    let n_degraded = class_count(spec.degraded_frac, rtus.len());
    for k in sample(&mut rng, rtus.len(), n_degraded) {
        kinds[rtus[k]] = DeviceKind::Rtu { degraded: true };
    }
    Ok(kinds)
}

/// Mean RTU admittance `Y_m = S / V_M²`.
pub fn rtu_admittance(vm: f64, p: f64, q: f64) -> Result<(f64, f64)> {
    if !(vm > 0.0) {
        return Err(Error::ZeroVoltage(vm));
    }
    let v2 = vm * vm;
    Ok((p / v2, q / v2))
}

/// Standard deviation of a channel with relative sigma `rel` around `mean`.
pub fn channel_sigma(rel: f64, mean: f64) -> f64 {
    if rel == 0.0 {
        0.0
    } else {
        (rel * mean.abs()).max(SIGMA_FLOOR)
    }
}

pub(crate) fn noisy<R: Rng + ?Sized>(rng: &mut R, mean: f64, rel: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let s = channel_sigma(rel, mean);
    if s == 0.0 {
        mean
    } else {
        mean + s * z
    }
}

/// Builds a measurement set from a power-flow truth with the device map
/// from [`assign_devices`] for the same seed.
pub fn generate_se_case(pf: &PfSolution, c: &GridCase, spec: &NoiseSpec, seed: u64) -> Result<SeCase> {
    let kinds = assign_devices(c, spec, seed)?;
    generate_with_assignment(pf, c, spec, &kinds, seed)
}

/// Builds a measurement set for a fixed device map; `noise_seed` drives the
/// measurement errors only.
pub fn generate_with_assignment(
    pf: &PfSolution,
    c: &GridCase,
    spec: &NoiseSpec,
    kinds: &[DeviceKind],
    noise_seed: u64,
) -> Result<SeCase> {
    spec.validate()?;
    let n = c.n_buses();
    if kinds.len() != n || pf.vr.len() != n || pf.vi.len() != n {
        return Err(Error::IndexMismatch(format!(
            "case has {n} buses, assignment {}, solution {}",
            kinds.len(),
            pf.vr.len()
        )));
    }
    let y = build_split_admittance(c, None)?;
    let (ir, ii) = y.currents(&pf.vr, &pf.vi);
    let key = StreamKey::new(noise_seed, Domain::MeasurementNoise);

    let mut devices = Vec::with_capacity(n);
    for i in 0..n {
        let (vr, vi) = (pf.vr[i], pf.vi[i]);
        let vm = vr.hypot(vi);
        if vm == 0.0 {
            return Err(Error::ZeroVoltageTruth { bus: c.buses[i].id });
        }
        let mut rng = key.stream(0, i as u64);
        let device = match kinds[i] {
            DeviceKind::PerfectPmu => Device::Pmu(PmuDevice {
                g_pmu: spec.g_pmu,
                vr,
                vi,
                ir: ir[i],
                ii: ii[i],
                sigma_rel: 0.0,
                perfect: true,
            }),
            DeviceKind::NoisyPmu => {
                let rel = spec.pmu_sigma_rel;
                Device::Pmu(PmuDevice {
                    g_pmu: spec.g_pmu,
                    vr: noisy(&mut rng, vr, rel),
                    vi: noisy(&mut rng, vi, rel),
                    ir: noisy(&mut rng, ir[i], rel),
                    ii: noisy(&mut rng, ii[i], rel),
                    sigma_rel: rel,
                    perfect: false,
                })
            }
            DeviceKind::Rtu { degraded } => {
                // consumed power S = −V conj(I_net)
                let p = -(vr * ir[i] + vi * ii[i]);
                let q = -(vi * ir[i] - vr * ii[i]);
                let (mult, div) = if degraded {
                    (spec.degraded_sigma_mult, spec.degraded_weight_div)
                } else {
                    (1.0, 1.0)
                };
                let sigma_pq = spec.rtu_sigma_pq_rel * mult;
                Device::Rtu(RtuDevice {
                    vm: noisy(&mut rng, vm, spec.rtu_sigma_vm_rel).max(VM_FLOOR),
                    p: noisy(&mut rng, p, sigma_pq),
                    q: noisy(&mut rng, q, sigma_pq),
                    sigma_vm_rel: spec.rtu_sigma_vm_rel,
                    sigma_p_rel: sigma_pq,
                    sigma_q_rel: sigma_pq,
                    gamma: spec.rtu_gamma / div,
                })
            }
        };
        devices.push(device);
    }
    Ok(SeCase {
        grid: c.clone(),
        devices,
        truth: Some((pf.vr.clone(), pf.vi.clone())),
        seed: noise_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtu_admittance_examples() {
        assert_eq!(rtu_admittance(1.0, 1.0, 0.5).unwrap(), (1.0, 0.5));
        let (g, b) = rtu_admittance(1.05, 0.5, -0.2).unwrap();
        // direct evaluation: 0.5 / 1.1025, -0.2 / 1.1025
        assert!((g - 0.453_514_739_229_024_9).abs() < 1e-15);
        assert!((b + 0.181_405_895_691_609_97).abs() < 1e-15);
        assert_eq!(rtu_admittance(1.0, 0.0, 0.0).unwrap(), (0.0, 0.0));
        assert!(matches!(rtu_admittance(0.0, 1.0, 0.0), Err(Error::ZeroVoltage(_))));
    }

    #[test]
    fn rtu_model_draws_measured_power_at_any_angle() {
        let (vm, p, q) = (1.03, 0.7, -0.25);
        let (g, b) = rtu_admittance(vm, p, q).unwrap();
        for k in 0..16 {
            let th = -3.0 + 0.4 * k as f64;
            let (vr, vi) = (vm * th.cos(), vm * th.sin());
            // i = conj(g + jb) V
            let (ir, ii) = (g * vr + b * vi, g * vi - b * vr);
            // S = V conj(i)
            let (sp, sq) = (vr * ir + vi * ii, vi * ir - vr * ii);
            assert!((sp - p).abs() < 1e-12 && (sq - q).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_sigma_floor() {
        assert_eq!(channel_sigma(0.0, 5.0), 0.0);
        assert_eq!(channel_sigma(0.01, 0.0), SIGMA_FLOOR);
        assert!((channel_sigma(0.01, -2.0) - 0.02).abs() < 1e-18);
    }

    #[test]
    fn spec_validation() {
        let mut s = NoiseSpec::default();
        assert!(s.validate().is_ok());
        s.frac_pmu_perfect = 0.7;
        s.frac_pmu_noisy = 0.4;
        assert!(s.validate().is_err());
        let s = NoiseSpec {
            g_pmu: 0.0,
            ..NoiseSpec::default()
        };
        assert!(s.validate().is_err());
        let w = NoiseSpec::default().with_weight_exponent(2.0);
        assert!((w.degraded_weight_div - 100.0).abs() < 1e-12);
    }
}
