//! The dispatching digraph: one vertex per vehicle and per request, arcs
//! wherever a vehicle can chain two legs on time, a dummy source feeding
//! every vehicle and a dummy sink collecting every trip. A source-sink path
//! is one vehicle's trip.
//!
//! Two extensions add rebalancing options for the prediction horizon:
//! sampled future requests as artificial vertices, or one rebalancing vertex
//! per grid cell followed by capacity vertices. In the cell-based variant
//! every request vertex is split into an entry and an exit vertex joined by a
//! single arc, so that arc-disjoint paths stay request-disjoint while they
//! share rebalancing vertices.
//!
//! Vertices are laid out in a topological order (source, vehicles, requests
//! by start time, rebalancing and capacity vertices, sink), so every arc
//! points from a lower to a higher index.

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::grid::{CellId, Location, RebalancingGrid};
use crate::model::{reachable, Request, RequestId, SystemState, VehicleId};
use crate::scalar::Scalar;
use crate::travel::{Leg, TravelTimeProvider};

pub type VertexIdx = u32;
pub type ArcIdx = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexKind {
    Source,
    Sink,
    Vehicle(VehicleId),
    Request(RequestId),
    /// Exit half of a split request vertex (cell-based graphs).
    RequestExit(RequestId),
    ArtificialRequest(RequestId),
    Rebalancing(CellId),
    Capacity { cell: CellId, index: u32 },
}

impl VertexKind {
    pub fn is_terminal(&self) -> bool {
        matches!(self, VertexKind::Source | VertexKind::Sink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Base,
    SampleBased,
    CellBased,
}

impl std::fmt::Display for GraphMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphMode::Base => "base",
            GraphMode::SampleBased => "sample_based",
            GraphMode::CellBased => "cell_based",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub tail: VertexIdx,
    pub head: VertexIdx,
}

/// Leg attributes of an arc, used by sparsification and features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArcInfo {
    /// Empty drive from the tail's end point to the head's start point.
    pub deadhead: Leg,
    /// Idle time before the head request starts (arcs into request vertices).
    pub gap_s: Option<f64>,
}

/// Where a path leaving a vertex starts from, and when.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub location: Location,
    pub ready_at: f64,
}

#[derive(Debug, Clone)]
pub struct BuildParams<'a> {
    /// End of the prediction horizon (absolute seconds).
    pub horizon_end: f64,
    pub grid: Option<&'a RebalancingGrid>,
    pub n_capacity: u32,
    /// Artificial requests for the sample-based extension.
    pub sampled: &'a [Request],
}

impl<'a> BuildParams<'a> {
    pub fn base() -> Self {
        Self { horizon_end: f64::NAN, grid: None, n_capacity: 0, sampled: &[] }
    }
}

#[derive(Debug, Clone)]
pub struct DispatchGraph<T = f64> {
    pub mode: GraphMode,
    kinds: Vec<VertexKind>,
    exits: Vec<Option<ExitPoint>>,
    request_of: Vec<Option<u32>>,
    requests: Vec<Request>,
    arcs: Vec<Arc>,
    info: Vec<ArcInfo>,
    weights: Vec<T>,
    source: VertexIdx,
    sink: VertexIdx,
    k: usize,
    /// Decision time, end of the system period, end of the prediction horizon.
    pub now: f64,
    pub period_end: f64,
    pub horizon_end: f64,
    cell_centers: Vec<(CellId, Location)>,
}

impl<T: Scalar> DispatchGraph<T> {
    /// Builds a graph from explicit parts; used for hand-made and randomized
    /// instances. Checks terminals, source wiring and acyclicity.
    pub fn from_arcs(kinds: Vec<VertexKind>, arcs: Vec<(VertexIdx, VertexIdx)>, weights: Vec<T>) -> Result<Self, GraphError> {
        if weights.len() != arcs.len() {
            return Err(GraphError::Invalid(format!("{} weights for {} arcs", weights.len(), arcs.len())));
        }
        let n = kinds.len();
        let arcs: Vec<Arc> = arcs.into_iter().map(|(tail, head)| Arc { tail, head }).collect();
        if arcs.iter().any(|a| a.tail as usize >= n || a.head as usize >= n) {
            return Err(GraphError::Invalid("arc endpoint out of range".into()));
        }
        let g = Self {
            mode: GraphMode::Base,
            exits: vec![None; n],
            request_of: vec![None; n],
            requests: Vec::new(),
            info: vec![ArcInfo::default(); arcs.len()],
            arcs,
            weights,
            source: 0,
            sink: 0,
            k: kinds.iter().filter(|k| matches!(k, VertexKind::Vehicle(_))).count(),
            now: 0.0,
            period_end: 0.0,
            horizon_end: 0.0,
            cell_centers: Vec::new(),
            kinds,
        };
        g.finish()
    }

    fn finish(mut self) -> Result<Self, GraphError> {
        let sources: Vec<_> = self.vertices_of(|k| matches!(k, VertexKind::Source)).collect();
        let sinks: Vec<_> = self.vertices_of(|k| matches!(k, VertexKind::Sink)).collect();
        if sources.len() != 1 || sinks.len() != 1 {
            return Err(GraphError::MissingTerminal);
        }
        self.source = sources[0];
        self.sink = sinks[0];
        for a in &self.arcs {
            if a.tail == self.source && !matches!(self.kinds[a.head as usize], VertexKind::Vehicle(_)) {
                return Err(GraphError::Invalid("source arc into a non-vehicle vertex".into()));
            }
            if a.head == self.source || a.tail == self.sink {
                return Err(GraphError::Invalid("arc into source or out of sink".into()));
            }
        }
        self.topological_order()?;
        Ok(self)
    }

    fn vertices_of<'a>(&'a self, pred: impl Fn(&VertexKind) -> bool + 'a) -> impl Iterator<Item = VertexIdx> + 'a {
        self.kinds.iter().enumerate().filter(move |(_, k)| pred(k)).map(|(i, _)| i as VertexIdx)
    }

    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn source(&self) -> VertexIdx {
        self.source
    }

    pub fn sink(&self) -> VertexIdx {
        self.sink
    }

    /// Number of vehicle vertices.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self, v: VertexIdx) -> VertexKind {
        self.kinds[v as usize]
    }

    pub fn kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: ArcIdx) -> Arc {
        self.arcs[a as usize]
    }

    pub fn info(&self, a: ArcIdx) -> &ArcInfo {
        &self.info[a as usize]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, a: ArcIdx) -> T {
        self.weights[a as usize]
    }

    pub fn set_weights(&mut self, weights: Vec<T>) {
        assert_eq!(weights.len(), self.arcs.len(), "one weight per arc");
        self.weights = weights;
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Self {
        self.set_weights(weights);
        self
    }

    /// Request (real or artificial) carried by a vertex.
    pub fn request(&self, v: VertexIdx) -> Option<&Request> {
        self.request_of[v as usize].map(|i| &self.requests[i as usize])
    }

    pub fn exit_point(&self, v: VertexIdx) -> Option<ExitPoint> {
        self.exits[v as usize]
    }

    /// Centers of the rebalancing cells present in the graph.
    pub fn cell_center(&self, cell: CellId) -> Option<Location> {
        self.cell_centers.iter().find(|(c, _)| *c == cell).map(|(_, l)| *l)
    }

    pub fn vehicle_vertices(&self) -> impl Iterator<Item = VertexIdx> + '_ {
        self.vertices_of(|k| matches!(k, VertexKind::Vehicle(_)))
    }

    pub fn non_terminal_count(&self) -> usize {
        self.kinds.iter().filter(|k| !k.is_terminal()).count()
    }

    /// Kahn's algorithm; ties broken by lowest vertex index.
    pub fn topological_order(&self) -> Result<Vec<VertexIdx>, GraphError> {
        let n = self.kinds.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<VertexIdx>> = vec![Vec::new(); n];
        for a in &self.arcs {
            indeg[a.head as usize] += 1;
            out[a.tail as usize].push(a.head);
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<VertexIdx>> =
            (0..n as VertexIdx).filter(|&v| indeg[v as usize] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &h in &out[v as usize] {
                indeg[h as usize] -= 1;
                if indeg[h as usize] == 0 {
                    ready.push(std::cmp::Reverse(h));
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(GraphError::Cyclic)
        }
    }

    /// Keeps only the arcs for which `keep` holds; vertices are untouched.
    pub fn retain_arcs(&self, mut keep: impl FnMut(ArcIdx, &Arc, &ArcInfo) -> bool) -> Self {
        let mut g = self.clone();
        g.arcs.clear();
        g.info.clear();
        g.weights.clear();
        for (i, (a, info)) in self.arcs.iter().zip(&self.info).enumerate() {
            if keep(i as ArcIdx, a, info) {
                g.arcs.push(*a);
                g.info.push(*info);
                g.weights.push(self.weights[i]);
            }
        }
        g
    }

    /// Converts the weight type, keeping structure.
    pub fn map_weights<U: Scalar>(&self, f: impl Fn(T) -> U) -> DispatchGraph<U> {
        DispatchGraph {
            mode: self.mode,
            kinds: self.kinds.clone(),
            exits: self.exits.clone(),
            request_of: self.request_of.clone(),
            requests: self.requests.clone(),
            arcs: self.arcs.clone(),
            info: self.info.clone(),
            weights: self.weights.iter().map(|w| f(*w)).collect(),
            source: self.source,
            sink: self.sink,
            k: self.k,
            now: self.now,
            period_end: self.period_end,
            horizon_end: self.horizon_end,
            cell_centers: self.cell_centers.clone(),
        }
    }
}

fn check_finite(what: &str, l: &Location) -> Result<(), GraphError> {
    if l.is_finite() {
        Ok(())
    } else {
        Err(GraphError::NonFinite(what.to_string()))
    }
}

/// Builds the dispatching digraph of a system state. All weights start at 0.
pub fn build_graph<T: Scalar>(
    state: &SystemState,
    mode: GraphMode,
    params: &BuildParams<'_>,
    tt: &TravelTimeProvider,
) -> Result<DispatchGraph<T>, GraphError> {
    if state.vehicles.is_empty() {
        return Err(GraphError::EmptyFleet);
    }
    for v in &state.vehicles {
        check_finite(&format!("vehicle {}", v.id), &v.location)?;
    }
    for r in state.batch.iter().chain(params.sampled) {
        check_finite(&format!("request {} origin", r.id), &r.origin)?;
        check_finite(&format!("request {} destination", r.id), &r.destination)?;
        if !r.start_time.is_finite() || !r.arrival_time.is_finite() {
            return Err(GraphError::NonFinite(format!("request {} times", r.id)));
        }
    }
    let now = state.now();
    let period_end = state.period_end();
    let sampled: &[Request] = match mode {
        GraphMode::SampleBased => {
            if !params.horizon_end.is_finite() {
                return Err(GraphError::MissingParameter("horizon_end"));
            }
            if let Some(r) = params
                .sampled
                .iter()
                .find(|r| r.start_time < period_end || r.start_time >= params.horizon_end)
            {
                return Err(GraphError::Invalid(format!(
                    "artificial request {} starts at {} outside the prediction horizon [{}, {})",
                    r.id, r.start_time, period_end, params.horizon_end
                )));
            }
            params.sampled
        }
        _ => &[],
    };
    let grid = match mode {
        GraphMode::CellBased => {
            if params.n_capacity < 1 {
                return Err(GraphError::MissingParameter("n_capacity >= 1"));
            }
            if !params.horizon_end.is_finite() {
                return Err(GraphError::MissingParameter("horizon_end"));
            }
            Some(params.grid.ok_or(GraphError::MissingParameter("grid"))?)
        }
        _ => None,
    };
    let split = mode == GraphMode::CellBased;

    let mut kinds = vec![VertexKind::Source];
    let mut exits = vec![None];
    let mut request_of = vec![None];

    for v in &state.vehicles {
        let (location, ready_at) = v.available(now);
        kinds.push(VertexKind::Vehicle(v.id));
        exits.push(Some(ExitPoint { location, ready_at }));
        request_of.push(None);
    }

    // Real and artificial requests interleaved by start time.
    let mut requests: Vec<(Request, bool)> = state
        .batch
        .iter()
        .map(|r| (*r, false))
        .chain(sampled.iter().map(|r| (*r, true)))
        .collect();
    requests.sort_by(|a, b| {
        a.0.start_time
            .total_cmp(&b.0.start_time)
            .then(a.1.cmp(&b.1))
            .then(a.0.id.cmp(&b.0.id))
    });
    // entry vertex and exit vertex (same vertex unless split) per request
    let mut req_vertices = Vec::with_capacity(requests.len());
    for (i, (r, artificial)) in requests.iter().enumerate() {
        let entry = kinds.len() as VertexIdx;
        kinds.push(if *artificial { VertexKind::ArtificialRequest(r.id) } else { VertexKind::Request(r.id) });
        let exit_point = Some(ExitPoint { location: r.destination, ready_at: r.arrival_time });
        if split {
            exits.push(None);
            request_of.push(Some(i as u32));
            kinds.push(VertexKind::RequestExit(r.id));
            exits.push(exit_point);
            request_of.push(Some(i as u32));
            req_vertices.push((entry, entry + 1));
        } else {
            exits.push(exit_point);
            request_of.push(Some(i as u32));
            req_vertices.push((entry, entry));
        }
    }

    let mut cell_centers = Vec::new();
    let mut reb_vertices = Vec::new();
    let mut cap_vertices = Vec::new();
    if let Some(grid) = grid {
        for cell in 0..grid.num_cells() as CellId {
            let center = grid.center(cell);
            reb_vertices.push((kinds.len() as VertexIdx, center));
            kinds.push(VertexKind::Rebalancing(cell));
            exits.push(Some(ExitPoint { location: center, ready_at: params.horizon_end }));
            request_of.push(None);
            cell_centers.push((cell, center));
        }
        for cell in 0..grid.num_cells() as CellId {
            let mut caps = Vec::with_capacity(params.n_capacity as usize);
            for index in 0..params.n_capacity {
                caps.push(kinds.len() as VertexIdx);
                kinds.push(VertexKind::Capacity { cell, index });
                exits.push(None);
                request_of.push(None);
            }
            cap_vertices.push(caps);
        }
    }
    let sink = kinds.len() as VertexIdx;
    kinds.push(VertexKind::Sink);
    exits.push(None);
    request_of.push(None);

    let mut arcs = Vec::new();
    let mut info = Vec::new();
    let mut push = |tail: VertexIdx, head: VertexIdx, i: ArcInfo| {
        arcs.push(Arc { tail, head });
        info.push(i);
    };

    // Arcs leaving a vehicle or request exit point: to later requests, to
    // rebalancing cells, to the sink.
    // Idle gaps are measured from the decision time for vehicles and from the
    // arrival time for requests.
    let connect = |from: ExitPoint, gap_from: f64, first_candidate: usize, push: &mut dyn FnMut(VertexIdx, VertexIdx, ArcInfo), tail: VertexIdx| {
        for (j, (r, _)) in requests.iter().enumerate().skip(first_candidate) {
            if r.start_time + crate::model::TIME_EPS < from.ready_at {
                continue;
            }
            let leg = tt.leg(&from.location, &r.origin);
            if reachable(from.ready_at, leg.seconds, r.start_time) {
                push(tail, req_vertices[j].0, ArcInfo { deadhead: leg, gap_s: Some(r.start_time - gap_from) });
            }
        }
        for (v, center) in &reb_vertices {
            let leg = tt.leg(&from.location, center);
            if reachable(from.ready_at, leg.seconds, params.horizon_end) {
                push(tail, *v, ArcInfo { deadhead: leg, gap_s: None });
            }
        }
        push(tail, sink, ArcInfo::default());
    };

    let source = 0;
    for vi in 1..=state.vehicles.len() {
        push(source, vi as VertexIdx, ArcInfo::default());
    }
    for vi in 1..=state.vehicles.len() {
        let from = exits[vi].expect("vehicle exit point");
        connect(from, now, 0, &mut push, vi as VertexIdx);
    }
    for (i, (r, _)) in requests.iter().enumerate() {
        let (entry, exit) = req_vertices[i];
        if split {
            push(entry, exit, ArcInfo::default());
        }
        let from = ExitPoint { location: r.destination, ready_at: r.arrival_time };
        connect(from, r.arrival_time, i + 1, &mut push, exit);
    }
    for (ci, (v, _)) in reb_vertices.iter().enumerate() {
        for cap in &cap_vertices[ci] {
            push(*v, *cap, ArcInfo::default());
        }
    }
    for caps in &cap_vertices {
        for cap in caps {
            push(*cap, sink, ArcInfo::default());
        }
    }

    let weights = vec![T::zero(); arcs.len()];
    let g = DispatchGraph {
        mode,
        kinds,
        exits,
        request_of,
        requests: requests.into_iter().map(|(r, _)| r).collect(),
        arcs,
        info,
        weights,
        source,
        sink,
        k: state.vehicles.len(),
        now,
        period_end,
        horizon_end: if mode == GraphMode::Base { period_end } else { params.horizon_end },
        cell_centers,
    };
    debug_assert!(g.arcs.iter().all(|a| a.tail < a.head), "vertex order is topological");
    g.finish()
}

/// Drops arcs with an idle gap above `t_max_s` before the next request, or an
/// empty drive longer than `d_max_km`. Both comparisons are strict.
pub fn sparsify<T: Scalar>(graph: &DispatchGraph<T>, t_max_s: f64, d_max_km: f64) -> DispatchGraph<T> {
    graph.retain_arcs(|_, _, info| {
        let temporal_ok = info.gap_s.is_none_or(|gap| gap <= t_max_s);
        let spatial_ok = info.deadhead.km <= d_max_km;
        temporal_ok && spatial_ok
    })
}
