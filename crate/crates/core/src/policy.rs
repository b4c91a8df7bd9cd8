//! Dispatching policies: greedy, sampling, the two learned pipelines and the
//! full-information bound, plus the decoder from paths to fleet decisions.

use serde::{Deserialize, Serialize};

use crate::demand::{sample_artificial_requests, RequestDistribution};
use crate::error::{DecodeError, PolicyError};
use crate::features::{model_features, predict_weights, FeatureContext, GraphFeatures, ModelWeights};
use crate::graph::{build_graph, sparsify, ArcIdx, BuildParams, DispatchGraph, GraphMode, VertexKind};
use crate::grid::RebalancingGrid;
use crate::kdspp::{solve, DisjointnessMode, PathSolution};
use crate::model::{reachable, FleetDecision, Objective, Request, SystemState, VehicleDecision, VehicleId, VehicleState};
use crate::travel::TravelTimeProvider;

pub const DEFAULT_DISCOUNT: f64 = 0.2;
pub const DEFAULT_SAMPLING_HORIZON_S: f64 = 600.0;
pub const DEFAULT_SB_HORIZON_S: f64 = 900.0;
pub const DEFAULT_CB_HORIZON_S: f64 = 900.0;

/// Arc cuts applied to every policy graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsification {
    pub t_max_s: f64,
    pub d_max_km: f64,
}

impl Sparsification {
    pub fn apply<T: crate::scalar::Scalar>(&self, g: &DispatchGraph<T>) -> DispatchGraph<T> {
        sparsify(g, self.t_max_s, self.d_max_km)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Greedy,
    Sampling { discount: f64, horizon_s: f64 },
    SampleBased { model: ModelWeights, horizon_s: f64 },
    CellBased { model: ModelWeights, grid: RebalancingGrid, n_capacity: u32, horizon_s: f64 },
    FullInformation,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Sampling { .. } => "sampling",
            PolicyKind::SampleBased { .. } => "sample_based",
            PolicyKind::CellBased { .. } => "cell_based",
            PolicyKind::FullInformation => "full_information",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub objective: Objective,
    pub sparsification: Option<Sparsification>,
    pub seed: u64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, objective: Objective) -> Self {
        Self { kind, objective, sparsification: None, seed: 0 }
    }

    pub fn greedy(objective: Objective) -> Self {
        Self::new(PolicyKind::Greedy, objective)
    }

    pub fn sampling(objective: Objective) -> Self {
        Self::new(PolicyKind::Sampling { discount: DEFAULT_DISCOUNT, horizon_s: DEFAULT_SAMPLING_HORIZON_S }, objective)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

/// Shared read-only inputs of every decision.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub tt: &'a TravelTimeProvider,
    pub dist: Option<&'a RequestDistribution>,
}

/// Independent 64-bit seed for item `index` of stream `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(base ^ mix(index))
}

/// `θ = revenue − cost · (deadhead + ride km)` on arcs into request
/// vertices, with the revenue of artificial requests scaled by `discount`.
pub fn reward_weights(graph: &DispatchGraph, objective: &Objective, discount: f64) -> Vec<f64> {
    graph
        .arcs()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.tail == graph.source() {
                return 0.0;
            }
            let dh = graph.info(i as ArcIdx).deadhead.km;
            match graph.kind(a.head) {
                VertexKind::Request(_) => objective.arc_value(graph.request(a.head).expect("request"), dh),
                VertexKind::ArtificialRequest(_) => {
                    let r = graph.request(a.head).expect("request");
                    discount * objective.revenue(r) - objective.cost_per_km * (dh + r.distance_km)
                }
                _ => 0.0,
            }
        })
        .collect()
}

/// A weighted policy graph ready for the solver.
#[derive(Debug, Clone)]
pub struct PolicyGraph {
    pub graph: DispatchGraph,
    pub mode: DisjointnessMode,
    /// Features of learned policies (normalized with the model's divisors).
    pub features: Option<GraphFeatures<f64>>,
}

fn need_dist<'a>(ctx: &PolicyContext<'a>, who: &'static str) -> Result<&'a RequestDistribution, PolicyError> {
    ctx.dist.ok_or(PolicyError::NeedsDistribution(who))
}

/// Builds the (unweighted) graph a policy optimizes over in `state`.
pub fn policy_structure(spec: &PolicySpec, state: &SystemState, ctx: &PolicyContext<'_>) -> Result<DispatchGraph, PolicyError> {
    let period_end = state.period_end();
    let sampled_graph = |horizon_s: f64, who: &'static str| -> Result<DispatchGraph, PolicyError> {
        let dist = need_dist(ctx, who)?;
        let horizon_end = period_end + horizon_s;
        let sampled = sample_artificial_requests(dist, period_end, horizon_end, derive_seed(spec.seed, state.epoch as u64));
        let params = BuildParams { horizon_end, grid: None, n_capacity: 0, sampled: &sampled };
        Ok(build_graph(state, GraphMode::SampleBased, &params, ctx.tt)?)
    };
    let graph = match &spec.kind {
        PolicyKind::Greedy | PolicyKind::FullInformation => build_graph(state, GraphMode::Base, &BuildParams::base(), ctx.tt)?,
        PolicyKind::Sampling { horizon_s, .. } => sampled_graph(*horizon_s, "sampling")?,
        PolicyKind::SampleBased { horizon_s, .. } => sampled_graph(*horizon_s, "sample_based")?,
        PolicyKind::CellBased { grid, n_capacity, horizon_s, .. } => {
            let params = BuildParams { horizon_end: period_end + horizon_s, grid: Some(grid), n_capacity: *n_capacity, sampled: &[] };
            build_graph(state, GraphMode::CellBased, &params, ctx.tt)?
        }
    };
    Ok(match &spec.sparsification {
        Some(s) => s.apply(&graph),
        None => graph,
    })
}

/// The graph of `spec` in `state` with the policy's arc weights.
pub fn policy_graph(spec: &PolicySpec, state: &SystemState, ctx: &PolicyContext<'_>) -> Result<PolicyGraph, PolicyError> {
    let graph = policy_structure(spec, state, ctx)?;
    let learned = |model: &ModelWeights, graph: DispatchGraph, who: &'static str| -> Result<PolicyGraph, PolicyError> {
        let dist = need_dist(ctx, who)?;
        let fctx = FeatureContext { state, dist, tt: ctx.tt, objective: &spec.objective };
        let features = model_features(model, &graph, &fctx)?;
        let weighted = predict_weights(model, &graph, &features)?;
        let mode = match graph.mode {
            GraphMode::CellBased => DisjointnessMode::ArcDisjoint,
            _ => DisjointnessMode::VertexDisjoint,
        };
        Ok(PolicyGraph { graph: weighted, mode, features: Some(features) })
    };
    match &spec.kind {
        PolicyKind::Greedy | PolicyKind::FullInformation => {
            let w = reward_weights(&graph, &spec.objective, 1.0);
            Ok(PolicyGraph { graph: graph.with_weights(w), mode: DisjointnessMode::VertexDisjoint, features: None })
        }
        PolicyKind::Sampling { discount, .. } => {
            let w = reward_weights(&graph, &spec.objective, *discount);
            Ok(PolicyGraph { graph: graph.with_weights(w), mode: DisjointnessMode::VertexDisjoint, features: None })
        }
        PolicyKind::SampleBased { model, .. } => learned(model, graph, "sample_based"),
        PolicyKind::CellBased { model, .. } => learned(model, graph, "cell_based"),
    }
}

/// One decision of `spec` in `state`.
pub fn decide(spec: &PolicySpec, state: &SystemState, ctx: &PolicyContext<'_>) -> Result<FleetDecision, PolicyError> {
    let pg = policy_graph(spec, state, ctx)?;
    let sol = solve(&pg.graph, pg.graph.k(), pg.mode)?;
    Ok(decode(&sol, &pg.graph, state)?)
}

/// Turns solver paths into a fleet decision: real requests of the current
/// period become the vehicle's trip (after any pending request), and the
/// first artificial or rebalancing vertex becomes the rebalancing target.
pub fn decode<T: crate::scalar::Scalar>(
    sol: &PathSolution<T>,
    graph: &DispatchGraph<T>,
    state: &SystemState,
) -> Result<FleetDecision, DecodeError> {
    let mut vehicles = Vec::with_capacity(sol.paths.len());
    for (pi, path) in sol.paths.iter().enumerate() {
        let Some(VertexKind::Vehicle(id)) = path.get(1).map(|v| graph.kind(*v)) else {
            return Err(DecodeError::NotVehiclePath(pi));
        };
        let vehicle = state.vehicle(id).ok_or(DecodeError::UnknownVehicle(id))?;
        let mut trip: Vec<Request> = vehicle.pending.into_iter().collect();
        let mut rebalance_to = None;
        for &v in &path[2..] {
            match graph.kind(v) {
                VertexKind::Request(rid) => {
                    let r = state.batch.iter().find(|r| r.id == rid).ok_or(DecodeError::UnknownRequest(rid))?;
                    trip.push(*r);
                }
                VertexKind::ArtificialRequest(_) => {
                    rebalance_to = graph.request(v).map(|r| r.origin);
                    break;
                }
                VertexKind::Rebalancing(cell) => {
                    rebalance_to = graph.cell_center(cell);
                    break;
                }
                _ => {}
            }
        }
        vehicles.push(VehicleDecision { vehicle: id, trip, rebalance_to });
    }
    Ok(FleetDecision { vehicles })
}

/// Offline optimum with every request known upfront.
#[derive(Debug, Clone)]
pub struct FullInfoResult {
    pub bound: f64,
    /// Each vehicle's requests in service order.
    pub trips: Vec<(VehicleId, Vec<Request>)>,
    pub graph_arcs: usize,
}

impl FullInfoResult {
    /// The first planned pickup of `vehicle` starting at or after `t`.
    pub fn next_pickup(&self, vehicle: VehicleId, t: f64) -> Option<&Request> {
        self.trips.iter().find(|(id, _)| *id == vehicle).and_then(|(_, trip)| trip.iter().find(|r| r.start_time >= t))
    }

    /// The offline plan restricted to one epoch: the requests of the current
    /// period, then a move toward the next planned pickup. Planned requests
    /// the vehicle can no longer reach are skipped.
    pub fn decision_at(&self, state: &SystemState, tt: &TravelTimeProvider) -> FleetDecision {
        let (now, end) = (state.now(), state.period_end());
        let vehicles = state
            .vehicles
            .iter()
            .map(|v| {
                let planned: &[Request] = self
                    .trips
                    .iter()
                    .find(|(id, _)| *id == v.id)
                    .map(|(_, t)| t.as_slice())
                    .unwrap_or(&[]);
                let (mut at, mut ready) = v.available(now);
                let mut trip: Vec<Request> = v.pending.into_iter().collect();
                for r in planned.iter().filter(|r| r.start_time >= now && r.start_time < end) {
                    if reachable(ready, tt.seconds(&at, &r.origin), r.start_time) {
                        trip.push(*r);
                        at = r.destination;
                        ready = r.arrival_time;
                    }
                }
                let rebalance_to = self.next_pickup(v.id, end).map(|r| r.origin);
                VehicleDecision { vehicle: v.id, trip, rebalance_to }
            })
            .collect();
        FleetDecision { vehicles }
    }
}

/// Solves the full-information problem over `requests` for a fleet that is
/// idle at `fleet`'s positions at the start of `epoch`.
pub fn full_information_bound(
    requests: &[Request],
    fleet: &[VehicleState],
    epoch: u32,
    period_s: f64,
    objective: &Objective,
    tt: &TravelTimeProvider,
    cuts: Option<Sparsification>,
) -> Result<FullInfoResult, PolicyError> {
    let state = SystemState::new(epoch, period_s, requests.to_vec(), fleet.to_vec());
    let mut graph = build_graph::<f64>(&state, GraphMode::Base, &BuildParams::base(), tt)?;
    if let Some(c) = cuts {
        graph = c.apply(&graph);
    }
    let w = reward_weights(&graph, objective, 1.0);
    let graph = graph.with_weights(w);
    let sol = solve(&graph, graph.k(), DisjointnessMode::VertexDisjoint)?;
    let trips = sol
        .paths
        .iter()
        .map(|p| {
            let VertexKind::Vehicle(id) = graph.kind(p[1]) else { unreachable!("solver paths start at a vehicle") };
            let reqs = p[2..].iter().filter_map(|v| graph.request(*v).copied()).collect();
            (id, reqs)
        })
        .collect();
    Ok(FullInfoResult { bound: sol.objective, trips, graph_arcs: graph.num_arcs() })
}
