//! Seeded instance generators shared by the test suites and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DispatchGraph, VertexIdx, VertexKind};
use crate::model::{RequestId, VehicleId};

/// Shape of a random layered DAG.
#[derive(Debug, Clone, Copy)]
pub struct DagShape {
    pub max_inner: usize,
    pub max_k: usize,
    pub arc_probability: f64,
    /// Give vehicle empty trips a nonzero weight (forces every vehicle
    /// through the full augmentation loop).
    pub weighted_empty_trips: bool,
}

impl Default for DagShape {
    fn default() -> Self {
        Self { max_inner: 12, max_k: 3, arc_probability: 0.35, weighted_empty_trips: false }
    }
}

/// Random DAG with `k ≤ max_k` vehicles and at most `max_inner` non-terminal
/// vertices in total, signed weights, and every vehicle wired to the source
/// and the sink. Some inner vertices are rebalancing/capacity kinds so the
/// same instance exercises arc-disjoint sharing.
pub fn random_dag(seed: u64, shape: DagShape) -> DispatchGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=shape.max_k.min(shape.max_inner).max(1));
    let others = rng.random_range(0..=shape.max_inner - k);
    let mut kinds = vec![VertexKind::Source];
    kinds.extend((0..k as u32).map(|i| VertexKind::Vehicle(VehicleId(i))));
    for j in 0..others {
        kinds.push(match rng.random_range(0..4) {
            0 => VertexKind::Rebalancing(j as u32),
            1 => VertexKind::Capacity { cell: j as u32, index: 0 },
            _ => VertexKind::Request(RequestId(j as u64)),
        });
    }
    kinds.push(VertexKind::Sink);
    let sink = (kinds.len() - 1) as VertexIdx;
    let mut arcs = Vec::new();
    let mut weights = Vec::new();
    let weight = |rng: &mut ChaCha8Rng| (rng.random_range(-5.0..5.0f64) * 8.0).round() / 8.0 + rng.random_range(-1e-3..1e-3);
    for v in 1..=k as VertexIdx {
        arcs.push((0, v));
        weights.push(0.0);
    }
    for u in 1..sink {
        let is_vehicle = (u as usize) <= k;
        for v in (k as VertexIdx + 1).max(u + 1)..sink {
            if rng.random_bool(shape.arc_probability) {
                arcs.push((u, v));
                weights.push(weight(&mut rng));
            }
        }
        if is_vehicle {
            arcs.push((u, sink));
            weights.push(if shape.weighted_empty_trips { weight(&mut rng) } else { 0.0 });
        } else if rng.random_bool(0.8) {
            arcs.push((u, sink));
            weights.push(weight(&mut rng));
        }
    }
    DispatchGraph::from_arcs(kinds, arcs, weights).expect("generated graph is a valid DAG")
}
