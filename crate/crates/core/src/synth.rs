//! Seeded synthetic transmission grids for tests and benchmarks.
//!
//! Buses are scattered over a unit square; each bus is tied to its nearest
//! already-placed neighbour (a connected spanning tree), then extra short
//! links mesh the network. Line impedances grow with length; a share of the
//! branches are off-nominal transformers. Generation is spread over PV buses
//! and balanced by a slack near the centre; every unit is dispatched to the
//! load nearest to it.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::case::{Branch, Bus, BusKind, Gen, GridCase};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_buses: usize,
    /// Extra meshing links per bus.
    pub mesh_ratio: f64,
    pub gen_fraction: f64,
    pub load_fraction: f64,
    pub transformer_fraction: f64,
    /// Range of line r/x ratios.
    pub rx_min: f64,
    pub rx_max: f64,
    /// Mean load per loaded bus (p.u.).
    pub mean_load: f64,
}

impl SynthSpec {
    pub fn new(n_buses: usize) -> Self {
        SynthSpec {
            n_buses,
            mesh_ratio: 0.6,
            gen_fraction: 0.15,
            load_fraction: 0.7,
            transformer_fraction: 0.1,
            rx_min: 0.15,
            rx_max: 0.45,
            mean_load: 0.1,
        }
    }
}

pub fn synthetic_grid(spec: &SynthSpec, seed: u64) -> Result<GridCase> {
    let n = spec.n_buses;
    if n < 2 {
        return Err(Error::Config("a synthetic grid needs at least 2 buses".into()));
    }
    let key = StreamKey::new(seed, Domain::Synthetic);
    let mut rng = key.stream(0, 0);
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let dist = |a: usize, b: usize| (pos[a].0 - pos[b].0).hypot(pos[a].1 - pos[b].1);
    // typical neighbour spacing, so impedances are size independent
    let spacing = 1.0 / (n as f64).sqrt();

    let mut links: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let j = (0..i)
            .min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)))
            .expect("i > 0");
        links.push((j, i));
    }
    let extra = (spec.mesh_ratio * n as f64).round() as usize;
    let mut added = 0;
    let mut attempts = 0;
    while added < extra && attempts < 50 * extra.max(1) {
        attempts += 1;
        let a = rng.random_range(0..n);
        // a random one of the four nearest buses
        let mut near: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        near.sort_by(|&p, &q| dist(a, p).total_cmp(&dist(a, q)));
        let b = near[rng.random_range(0..near.len().min(4))];
        let key = (a.min(b), a.max(b));
        if links.iter().any(|&(p, q)| (p.min(q), p.max(q)) == key) {
            continue;
        }
        links.push(key);
        added += 1;
    }

    let mut branches = Vec::with_capacity(links.len());
    for &(a, b) in &links {
        let len = dist(a, b) / spacing;
        let transformer = rng.random::<f64>() < spec.transformer_fraction;
        let br = if transformer {
            Branch {
                from: a as u32 + 1,
                to: b as u32 + 1,
                r: 0.002 + 0.003 * rng.random::<f64>(),
                x: 0.03 + 0.05 * rng.random::<f64>(),
                b_chg: 0.0,
                tap: 0.95 + 0.1 * rng.random::<f64>(),
                shift: 0.0,
                in_service: true,
            }
        } else {
            let x = 0.01 + 0.03 * len.min(3.0) + 0.01 * rng.random::<f64>();
            let rx = spec.rx_min + (spec.rx_max - spec.rx_min) * rng.random::<f64>();
            Branch {
                from: a as u32 + 1,
                to: b as u32 + 1,
                r: rx * x,
                x,
                b_chg: 0.5 * x,
                tap: 1.0,
                shift: 0.0,
                in_service: true,
            }
        };
        branches.push(br);
    }

    let centre = (0..n)
        .min_by(|&a, &b| {
            let da = (pos[a].0 - 0.5).hypot(pos[a].1 - 0.5);
            let db = (pos[b].0 - 0.5).hypot(pos[b].1 - 0.5);
            da.total_cmp(&db)
        })
        .expect("n ≥ 2");
    let n_gen = ((spec.gen_fraction * n as f64).round() as usize).clamp(1, n);
    let others: Vec<usize> = (0..n).filter(|&i| i != centre).collect();
    let mut gen_buses = vec![centre];
    gen_buses.extend(sample(&mut rng, others.len(), n_gen - 1).into_iter().map(|k| others[k]));

    let mut buses: Vec<Bus> = (0..n)
        .map(|i| Bus {
            id: i as u32 + 1,
            kind: BusKind::Pq,
            pd: 0.0,
            qd: 0.0,
            gs: 0.0,
            bs: 0.0,
            vm_init: 1.0,
            va_init: 0.0,
        })
        .collect();
    for bus in buses.iter_mut() {
        if rng.random::<f64>() < spec.load_fraction {
            let p = spec.mean_load * (0.4 + 1.2 * rng.random::<f64>());
            bus.pd = p;
            bus.qd = p * (0.1 + 0.3 * rng.random::<f64>());
        }
    }
    buses[centre].kind = BusKind::Slack;
    // each unit covers the load closest to it, keeping transfers local
    let mut served = vec![0.0; n_gen];
    for (i, bus) in buses.iter().enumerate() {
        let k = (0..n_gen)
            .min_by(|&a, &b| dist(i, gen_buses[a]).total_cmp(&dist(i, gen_buses[b])))
            .expect("n_gen ≥ 1");
        served[k] += bus.pd;
    }
    let mut gens = Vec::with_capacity(n_gen);
    for (k, &g) in gen_buses.iter().enumerate() {
        let vset = 1.0 + 0.05 * rng.random::<f64>();
        buses[g].vm_init = vset;
        let pg = if k == 0 {
            0.0
        } else {
            buses[g].kind = BusKind::Pv;
            served[k]
        };
        gens.push(Gen {
            bus: g as u32 + 1,
            pg,
            qg: 0.0,
            vset,
            in_service: true,
        });
    }
    let c = GridCase {
        name: format!("synth{n}_s{seed}"),
        base_mva: 100.0,
        buses,
        branches,
        gens,
    };
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let s = SynthSpec::new(60);
        let a = synthetic_grid(&s, 3).unwrap();
        let b = synthetic_grid(&s, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthetic_grid(&s, 4).unwrap());
        assert_eq!(a.n_buses(), 60);
        assert!(a.branches.len() >= 59);
        assert_eq!(a.buses.iter().filter(|b| b.kind == BusKind::Slack).count(), 1);
    }
}
