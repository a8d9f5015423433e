//! Probabilistic state estimation by simple random sampling.
//!
//! Sample `k` redraws every uncertain channel from the stream
//! `(seed, k, channel)` (channel = bus index; network parameters use
//! channel n), so a sample never depends on scheduling. Samples are grouped
//! in fixed-size blocks, each accumulated sequentially, and the block
//! accumulators are folded in block order: the summary is bit-identical for
//! any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::casegen::{noisy, Device, PmuDevice, RtuDevice, SeCase, VM_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::LinearSolver;
use crate::linear_se::{assemble_kkt_from, device_stamps, solve_kkt, EstimateResult};
use crate::network::{build_split_admittance, perturb_branches, PerturbationSpec, PerturbedBranches, SplitAdmittance};
use crate::rng::{Domain, StreamKey};
use crate::stats::{Histogram, MinMax, Welford};

/// Samples per accumulation block.
const BLOCK: usize = 32;

/// Share of failed samples above which a run is aborted.
const MAX_FAILED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub net_uncertainty: Option<PerturbationSpec>,
    pub histogram_bins: usize,
    pub pilot_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 10_000,
            seed: 0,
            threads: 0,
            net_uncertainty: None,
            histogram_bins: 64,
            pilot_samples: 500,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if self.histogram_bins < 2 {
            return Err(Error::Config("histogram_bins must be at least 2".into()));
        }
        if self.pilot_samples == 0 || self.pilot_samples > self.samples {
            return Err(Error::Config("pilot_samples must lie in [1, samples]".into()));
        }
        if let Some(p) = &self.net_uncertainty {
            p.validate()?;
        }
        Ok(())
    }
}

/// One Monte Carlo draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub devices: Vec<Device>,
    pub branches: Option<PerturbedBranches>,
}

/// Redraws every uncertain channel of `se` for sample `k`.
pub fn draw_sample(se: &SeCase, cfg: &McConfig, k: u64) -> Sample {
    let key = StreamKey::new(cfg.seed, Domain::MonteCarlo);
    let devices = se
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = key.stream(k, i as u64);
            match d {
                Device::Pmu(p) if p.perfect || p.sigma_rel == 0.0 => d.clone(),
                Device::Pmu(p) => Device::Pmu(PmuDevice {
                    vr: noisy(&mut rng, p.vr, p.sigma_rel),
                    vi: noisy(&mut rng, p.vi, p.sigma_rel),
                    ir: noisy(&mut rng, p.ir, p.sigma_rel),
                    ii: noisy(&mut rng, p.ii, p.sigma_rel),
                    ..p.clone()
                }),
                Device::Rtu(r) => Device::Rtu(RtuDevice {
                    vm: noisy(&mut rng, r.vm, r.sigma_vm_rel).max(VM_FLOOR),
                    p: noisy(&mut rng, r.p, r.sigma_p_rel),
                    q: noisy(&mut rng, r.q, r.sigma_q_rel),
                    ..r.clone()
                }),
            }
        })
        .collect();
    let branches = cfg.net_uncertainty.filter(|s| !s.is_zero()).map(|spec| {
        let mut rng = key.stream(k, se.devices.len() as u64);
        perturb_branches(&se.grid, &spec, &mut rng)
    });
    Sample { devices, branches }
}

/// Per-bus statistics of a bus quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Moments {
    fn from_acc(w: &[Welford], m: &[MinMax]) -> Self {
        Moments {
            mean: w.iter().map(|a| a.mean).collect(),
            std: w.iter().map(Welford::std).collect(),
            min: m.iter().map(|a| a.min).collect(),
            max: m.iter().map(|a| a.max).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub samples_requested: usize,
    pub samples_completed: usize,
    pub failed_samples: Vec<u64>,
    pub vm: Moments,
    pub va: Moments,
    pub vr: Moments,
    pub vi: Moments,
    pub vm_hist: Vec<Histogram>,
    pub va_hist: Vec<Histogram>,
    /// Deterministic linear solution at the measurement means.
    pub baseline_vr: Vec<f64>,
    pub baseline_vi: Vec<f64>,
}

/// Per-bus accumulators for one block of samples.
#[derive(Clone)]
struct Acc {
    completed: usize,
    failed: Vec<u64>,
    w: [Vec<Welford>; 4],
    m: [Vec<MinMax>; 4],
    vm_hist: Vec<Histogram>,
    va_hist: Vec<Histogram>,
}

impl Acc {
    fn new(n: usize, vm_proto: &[Histogram], va_proto: &[Histogram]) -> Self {
        Acc {
            completed: 0,
            failed: Vec::new(),
            w: std::array::from_fn(|_| vec![Welford::default(); n]),
            m: std::array::from_fn(|_| vec![MinMax::default(); n]),
            vm_hist: vm_proto.iter().map(Histogram::empty_like).collect(),
            va_hist: va_proto.iter().map(Histogram::empty_like).collect(),
        }
    }

    fn push(&mut self, vr: &[f64], vi: &[f64]) {
        self.completed += 1;
        for i in 0..vr.len() {
            let q = [vr[i].hypot(vi[i]), vi[i].atan2(vr[i]), vr[i], vi[i]];
            for (c, &x) in q.iter().enumerate() {
                self.w[c][i].push(x);
                self.m[c][i].push(x);
            }
            self.vm_hist[i].add(q[0]);
            self.va_hist[i].add(q[1]);
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.completed += o.completed;
        self.failed.extend_from_slice(&o.failed);
        for c in 0..4 {
            for (a, b) in self.w[c].iter_mut().zip(&o.w[c]) {
                a.merge(b);
            }
            for (a, b) in self.m[c].iter_mut().zip(&o.m[c]) {
                a.merge(b);
            }
        }
        for (a, b) in self.vm_hist.iter_mut().zip(&o.vm_hist) {
            a.merge(b);
        }
        for (a, b) in self.va_hist.iter_mut().zip(&o.va_hist) {
            a.merge(b);
        }
    }
}

/// Shared, immutable per-run solve context.
struct Engine<'a> {
    se: &'a SeCase,
    cfg: &'a McConfig,
    y: SplitAdmittance,
    solver: LinearSolver,
}

impl Engine<'_> {
    fn solve(&self, k: u64) -> Result<EstimateResult> {
        let s = draw_sample(self.se, self.cfg, k);
        let stamps = device_stamps(&s.devices)?;
        let perturbed;
        let y = match &s.branches {
            Some(b) => {
                perturbed = build_split_admittance(&self.se.grid, Some(b))?;
                &perturbed
            }
            None => &self.y,
        };
        let kkt = assemble_kkt_from(y, &stamps)?;
        solve_kkt(&kkt, &stamps, Some(&self.solver))
    }
}

pub fn run_mc(se: &SeCase, cfg: &McConfig) -> Result<McSummary> {
    cfg.validate()?;
    se.validate()?;
    if cfg.threads == 0 {
        return run_mc_in_pool(se, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_mc_in_pool(se, cfg))
}

fn run_mc_in_pool(se: &SeCase, cfg: &McConfig) -> Result<McSummary> {
    let n = se.n_buses();
    let y = build_split_admittance(&se.grid, None)?;
    let stamps = device_stamps(&se.devices)?;
    let kkt = assemble_kkt_from(&y, &stamps)?;
    let solver = LinearSolver::analyze(&kkt.matrix);
    let baseline = solve_kkt(&kkt, &stamps, Some(&solver))?;
    let engine = Engine { se, cfg, y, solver };

    // pilot: fix histogram ranges from the first samples
    let pilot: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..cfg.pilot_samples as u64)
        .into_par_iter()
        .map(|k| engine.solve(k).ok().map(|r| (r.vr, r.vi)))
        .collect();
    let mut pw_vm = vec![Welford::default(); n];
    let mut pw_va = vec![Welford::default(); n];
    for (vr, vi) in pilot.iter().flatten() {
        for i in 0..n {
            pw_vm[i].push(vr[i].hypot(vi[i]));
            pw_va[i].push(vi[i].atan2(vr[i]));
        }
    }
    if pw_vm.first().is_some_and(|w| w.n == 0) {
        return Err(Error::McAborted {
            failed: cfg.pilot_samples,
            total: cfg.pilot_samples,
        });
    }
    let bins = cfg.histogram_bins;
    let vm_proto: Vec<Histogram> = pw_vm.iter().map(|w| Histogram::centered(w.mean, 6.0 * w.std(), bins)).collect();
    let va_proto: Vec<Histogram> = pw_va.iter().map(|w| Histogram::centered(w.mean, 6.0 * w.std(), bins)).collect();

    let n_blocks = cfg.samples.div_ceil(BLOCK);
    let wave = (4 * rayon::current_num_threads()).max(1);
    let mut total = Acc::new(n, &vm_proto, &va_proto);
    let max_failed = (MAX_FAILED_FRACTION * cfg.samples as f64).floor() as usize;
    for first in (0..n_blocks).step_by(wave) {
        let last = (first + wave).min(n_blocks);
        let accs: Vec<Acc> = (first..last)
            .into_par_iter()
            .map(|b| {
                let mut acc = Acc::new(n, &vm_proto, &va_proto);
                let lo = b * BLOCK;
                let hi = ((b + 1) * BLOCK).min(cfg.samples);
                for k in lo..hi {
                    let solved = match pilot.get(k) {
                        Some(p) => p.clone(),
                        None => engine.solve(k as u64).ok().map(|r| (r.vr, r.vi)),
                    };
                    match solved {
                        Some((vr, vi)) => acc.push(&vr, &vi),
                        None => acc.failed.push(k as u64),
                    }
                }
                acc
            })
            .collect();
        for a in &accs {
            total.merge(a);
        }
        if total.failed.len() > max_failed {
            return Err(Error::McAborted {
                failed: total.failed.len(),
                total: cfg.samples,
            });
        }
    }
    if !total.failed.is_empty() {
        log::warn!("{} of {} samples failed and were skipped", total.failed.len(), cfg.samples);
    }

    Ok(McSummary {
        samples_requested: cfg.samples,
        samples_completed: total.completed,
        failed_samples: total.failed,
        vm: Moments::from_acc(&total.w[0], &total.m[0]),
        va: Moments::from_acc(&total.w[1], &total.m[1]),
        vr: Moments::from_acc(&total.w[2], &total.m[2]),
        vi: Moments::from_acc(&total.w[3], &total.m[3]),
        vm_hist: total.vm_hist,
        va_hist: total.va_hist,
        baseline_vr: baseline.vr,
        baseline_vi: baseline.vi,
    })
}

/// Histogram CSV: `bus,edge_0..edge_B,count_1..count_B`, one row per bus.
pub fn histograms_csv(se: &SeCase, hists: &[Histogram]) -> String {
    let bins = hists.first().map_or(0, Histogram::bins);
    let mut out = String::from("bus");
    for k in 0..=bins {
        out.push_str(&format!(",edge_{k}"));
    }
    for k in 1..=bins {
        out.push_str(&format!(",count_{k}"));
    }
    out.push('\n');
    for (bus, h) in se.grid.buses.iter().zip(hists) {
        out.push_str(&bus.id.to_string());
        for e in &h.edges {
            out.push_str(&format!(",{e:e}"));
        }
        for c in &h.counts {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}
