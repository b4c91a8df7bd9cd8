//! Arc features and the linear arc-weight predictor.
//!
//! Every feature of an arc depends on its tail vertex only, its head vertex
//! only, or on the arc itself. Features are therefore stored in three
//! pieces: a tail block per vertex, a head block per vertex and a small block
//! per arc. Predicted weights are `tail score + head score + arc score`, so a
//! graph with millions of arcs needs only one dot product per vertex plus a
//! few multiplications per arc. Training evaluates weights through the same
//! code path, so learned and deployed weights agree bit for bit.
//!
//! Plain durations are in minutes, ratios per second, distances in
//! kilometres, rewards and costs in objective units. Ratios with a zero
//! denominator are 0.
//!
//! Cell statistics over the window `[period end, horizon end)`: idle vehicles
//! and batch pickups now, expected pickups and drop-offs from the calibrated
//! distribution, vehicles arriving with a customer, and vehicles available
//! to start from the cell (idle now plus arriving).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::RequestDistribution;
use crate::error::{FeatureError, IoError};
use crate::graph::{ArcIdx, DispatchGraph, GraphMode, VertexIdx, VertexKind};
use crate::grid::{CellId, Location};
use crate::model::{Objective, Request, SystemState};
use crate::scalar::Scalar;
use crate::travel::TravelTimeProvider;

/// Number of two-minute bins of the time-binned dropoff features.
pub const FUTURE_BINS: usize = 25;
pub const FUTURE_BIN_S: f64 = 120.0;

const CELL_LEN: usize = 8;
const REQUEST_LEN: usize = 9;
const DEADHEAD_LEN: usize = 5;
const TOUR_STATS_LEN: usize = 6;
const REB_LOCATION_LEN: usize = CELL_LEN + TOUR_STATS_LEN;
const REB_TOUR_LEN: usize = 2;
const CAPACITY_LEN: usize = REB_LOCATION_LEN + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSchema {
    SampleBased,
    CellBased,
}

const CELL_NAMES: [&str; CELL_LEN] = [
    "num vehicles",
    "num requests",
    "requests per vehicle",
    "vehicles per request",
    "est future starting requests",
    "est future arriving requests",
    "est future starting vehicles",
    "est future arriving vehicles",
];

const REQUEST_NAMES: [&str; REQUEST_LEN] = [
    "duration [min]",
    "reward per duration",
    "distance",
    "reward per distance",
    "reward per time till pickup",
    "reward per time till dropoff",
    "cost per duration",
    "cost per time till dropoff",
    "reward",
];

const DEADHEAD_NAMES: [&str; DEADHEAD_LEN] = [
    "distance to request",
    "duration to request [min]",
    "deadhead cost per duration",
    "deadhead cost per time till dropoff",
    "deadhead cost per distance",
];

const TOUR_STATS_NAMES: [&str; TOUR_STATS_LEN] = [
    "expected duration [min]",
    "expected reward per duration",
    "expected distance",
    "expected reward per distance",
    "expected cost per duration",
    "expected reward",
];

/// Slot offsets of one schema.
#[derive(Debug, Clone, Copy)]
struct Layout {
    len: usize,
    vehicle_cell: usize,
    request_cell: usize,
    request: usize,
    future_reward: Option<usize>,
    deadhead: usize,
    future_cost: Option<usize>,
    reb_location: Option<usize>,
    reb_tour: Option<usize>,
    capacity: Option<usize>,
}

const SB_LAYOUT: Layout = Layout {
    len: 80,
    vehicle_cell: 0,
    request_cell: 8,
    request: 16,
    future_reward: Some(25),
    deadhead: 50,
    future_cost: Some(55),
    reb_location: None,
    reb_tour: None,
    capacity: None,
};

const CB_LAYOUT: Layout = Layout {
    len: 61,
    vehicle_cell: 0,
    request_cell: 8,
    request: 16,
    future_reward: None,
    deadhead: 25,
    future_cost: None,
    reb_location: Some(30),
    reb_tour: Some(44),
    capacity: Some(46),
};

impl FeatureSchema {
    pub fn for_mode(mode: GraphMode) -> Option<Self> {
        match mode {
            GraphMode::SampleBased => Some(Self::SampleBased),
            GraphMode::CellBased => Some(Self::CellBased),
            GraphMode::Base => None,
        }
    }

    pub fn mode(&self) -> GraphMode {
        match self {
            Self::SampleBased => GraphMode::SampleBased,
            Self::CellBased => GraphMode::CellBased,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SampleBased => "sample_based",
            Self::CellBased => "cell_based",
        }
    }

    fn layout(&self) -> Layout {
        match self {
            Self::SampleBased => SB_LAYOUT,
            Self::CellBased => CB_LAYOUT,
        }
    }

    pub fn len(&self) -> usize {
        self.layout().len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether features are divided by their training standard deviation.
    pub fn normalized(&self) -> bool {
        matches!(self, Self::CellBased)
    }

    /// Human-readable slot names, in slot order.
    pub fn feature_names(&self) -> Vec<String> {
        let l = self.layout();
        let mut names = vec![String::new(); l.len];
        let mut put = |offset: usize, prefix: &str, items: &[String]| {
            for (i, n) in items.iter().enumerate() {
                names[offset + i] = format!("{prefix}: {n}");
            }
        };
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let bins = |what: &str| {
            (0..FUTURE_BINS)
                .map(|b| format!("{what} +[{},{})min", 2 * b, 2 * b + 2))
                .collect::<Vec<_>>()
        };
        put(l.vehicle_cell, "vehicle cell", &own(&CELL_NAMES));
        put(l.request_cell, "request cell", &own(&CELL_NAMES));
        put(l.request, "request", &own(&REQUEST_NAMES));
        put(l.deadhead, "deadhead", &own(&DEADHEAD_NAMES));
        if let Some(o) = l.future_reward {
            put(o, "request", &bins("est future reward at dropoff"));
        }
        if let Some(o) = l.future_cost {
            put(o, "deadhead", &bins("est future cost at dropoff"));
        }
        let mut location = own(&CELL_NAMES);
        location.extend(own(&TOUR_STATS_NAMES));
        if let Some(o) = l.reb_location {
            put(o, "rebalancing cell", &location);
        }
        if let Some(o) = l.reb_tour {
            put(o, "rebalancing tour", &own(&["distance to location", "duration to location [min]"]));
        }
        if let Some(o) = l.capacity {
            location.push("capacity index".to_string());
            put(o, "capacity", &location);
        }
        names
    }

    /// Slot of a named feature.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names().iter().position(|n| n == name)
    }

    /// Slot of the "reward" feature of the head request.
    pub fn reward_slot(&self) -> usize {
        self.layout().request + REQUEST_LEN - 1
    }
}

/// How an arc's feature vector is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArcClass {
    Zero,
    IntoRequest,
    IntoRebalancing,
    IntoCapacity,
}

/// Decomposed features of every arc of one graph.
#[derive(Debug, Clone)]
pub struct GraphFeatures<T> {
    pub schema: FeatureSchema,
    class: Vec<ArcClass>,
    /// Vehicle-cell block per vertex (tail role).
    tail: Vec<[T; CELL_LEN]>,
    /// Head block per vertex, with the global slot of each entry.
    head: Vec<Vec<T>>,
    head_slots: Vec<&'static [usize]>,
    /// Arc block (deadhead or rebalancing tour), padded.
    arc: Vec<[T; DEADHEAD_LEN]>,
    outside_grid: usize,
}

/// Inputs besides the graph that features are computed from.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub state: &'a SystemState,
    pub dist: &'a RequestDistribution,
    pub tt: &'a TravelTimeProvider,
    pub objective: &'a Objective,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 || !b.is_finite() {
        0.0
    } else {
        a / b
    }
}

struct CellTable {
    stats: Vec<[f64; CELL_LEN]>,
    tours: Vec<[f64; TOUR_STATS_LEN]>,
}

fn cell_table(ctx: &FeatureContext<'_>, now: f64, lo: f64, hi: f64, with_tours: bool) -> CellTable {
    let grid = &ctx.dist.grid;
    let n = grid.num_cells();
    let mut stats = vec![[0.0; CELL_LEN]; n];
    for v in &ctx.state.vehicles {
        let (loc, ready) = v.available(now);
        if ready <= now {
            if let Some(c) = grid.cell_of(&loc) {
                stats[c as usize][0] += 1.0;
            }
        }
        if let Some(p) = &v.pending {
            if p.arrival_time >= now && p.arrival_time < hi {
                if let Some(c) = grid.cell_of(&p.destination) {
                    stats[c as usize][7] += 1.0;
                }
            }
        }
    }
    for r in &ctx.state.batch {
        if let Some(c) = grid.cell_of(&r.origin) {
            stats[c as usize][1] += 1.0;
        }
    }
    let mut tours = vec![[0.0; TOUR_STATS_LEN]; if with_tours { n } else { 0 }];
    for c in 0..n {
        let w = ctx.dist.window(c as CellId, lo, hi);
        let s = &mut stats[c];
        s[2] = ratio(s[1], s[0]);
        s[3] = ratio(s[0], s[1]);
        s[4] = w.starts;
        s[5] = w.arrivals;
        s[6] = s[0] + s[7];
        if with_tours {
            tours[c] = [
                w.mean_duration_s / 60.0,
                ratio(w.mean_reward, w.mean_duration_s),
                w.mean_distance_km,
                ratio(w.mean_reward, w.mean_distance_km),
                ratio(ctx.objective.cost_per_km * w.mean_distance_km, w.mean_duration_s),
                w.mean_reward,
            ];
        }
    }
    CellTable { stats, tours }
}

fn request_block(r: &Request, now: f64, objective: &Objective) -> [f64; REQUEST_LEN] {
    let duration = r.duration();
    let reward = objective.revenue(r);
    let cost = objective.cost_per_km * r.distance_km;
    let to_pickup = r.start_time - now;
    let to_dropoff = r.arrival_time - now;
    [
        duration / 60.0,
        ratio(reward, duration),
        r.distance_km,
        ratio(reward, r.distance_km),
        ratio(reward, to_pickup),
        ratio(reward, to_dropoff),
        ratio(cost, duration),
        ratio(cost, to_dropoff),
        reward,
    ]
}

const fn range<const N: usize>(start: usize) -> [usize; N] {
    let mut out = [0; N];
    let mut i = 0;
    while i < N {
        out[i] = start + i;
        i += 1;
    }
    out
}

const fn concat<const A: usize, const B: usize, const N: usize>(a: [usize; A], b: [usize; B]) -> [usize; N] {
    let mut out = [0; N];
    let mut i = 0;
    while i < A {
        out[i] = a[i];
        i += 1;
    }
    while i < N {
        out[i] = b[i - A];
        i += 1;
    }
    out
}

// Head-block slot maps. SB request heads: request cell, request, future
// reward bins, future cost bins.
const SB_REQUEST_HEAD: [usize; 67] = concat::<42, 25, 67>(range::<42>(8), range::<25>(55));
const CB_REQUEST_HEAD: [usize; 17] = range::<17>(8);
const CB_REB_HEAD: [usize; REB_LOCATION_LEN] = range::<REB_LOCATION_LEN>(30);
const CB_CAPACITY_HEAD: [usize; CAPACITY_LEN] = range::<CAPACITY_LEN>(46);

impl<T: Scalar> GraphFeatures<T> {
    /// Feature vectors of every arc of `graph`. Feature values depend only on
    /// the graph, the state and the distribution.
    pub fn compute(graph: &DispatchGraph<T>, schema: FeatureSchema, ctx: &FeatureContext<'_>) -> Result<Self, FeatureError> {
        if FeatureSchema::for_mode(graph.mode) != Some(schema) {
            return Err(FeatureError::SchemaMismatch { model: schema.name().into(), graph: graph.mode.to_string() });
        }
        let now = graph.now;
        let (lo, hi) = (graph.period_end, graph.horizon_end);
        let objective = ctx.objective;
        let grid = &ctx.dist.grid;
        let cells = cell_table(ctx, now, lo, hi, schema == FeatureSchema::CellBased);
        let nv = graph.num_vertices();
        let mut outside = 0usize;
        let mut cell_of = |l: &Location| {
            let c = grid.cell_of(l);
            if c.is_none() {
                outside += 1;
            }
            c
        };
        let to_t = |xs: &[f64]| xs.iter().map(|x| T::of(*x)).collect::<Vec<T>>();

        let mut tail = vec![[T::zero(); CELL_LEN]; nv];
        let mut head: Vec<Vec<T>> = vec![Vec::new(); nv];
        let mut head_slots: Vec<&'static [usize]> = vec![&[]; nv];
        for v in 0..nv as VertexIdx {
            let kind = graph.kind(v);
            if let Some(exit) = graph.exit_point(v) {
                if matches!(kind, VertexKind::Vehicle(_) | VertexKind::Request(_) | VertexKind::RequestExit(_) | VertexKind::ArtificialRequest(_)) {
                    if let Some(c) = cell_of(&exit.location) {
                        tail[v as usize] = cells.stats[c as usize].map(T::of);
                    }
                }
            }
            match (kind, schema) {
                (VertexKind::Request(_) | VertexKind::ArtificialRequest(_), _) => {
                    let r = graph.request(v).expect("request vertex carries its request");
                    let mut block = Vec::with_capacity(67);
                    match cell_of(&r.origin) {
                        Some(c) => block.extend(cells.stats[c as usize]),
                        None => block.extend([0.0; CELL_LEN]),
                    }
                    block.extend(request_block(r, now, objective));
                    if schema == FeatureSchema::SampleBased {
                        let dropoff_cell = cell_of(&r.destination);
                        let mut rewards = [0.0; FUTURE_BINS];
                        let mut costs = [0.0; FUTURE_BINS];
                        if let Some(c) = dropoff_cell {
                            let reach_km = ctx.dist.mean_origin(c).map_or(0.0, |o| r.destination.distance_m(&o) / 1000.0);
                            for b in 0..FUTURE_BINS {
                                let from = r.arrival_time + b as f64 * FUTURE_BIN_S;
                                let w = ctx.dist.window(c, from, from + FUTURE_BIN_S);
                                rewards[b] = w.reward;
                                costs[b] = w.starts * objective.cost_per_km * reach_km;
                            }
                        }
                        block.extend(rewards);
                        block.extend(costs);
                        head_slots[v as usize] = &SB_REQUEST_HEAD;
                    } else {
                        head_slots[v as usize] = &CB_REQUEST_HEAD;
                    }
                    head[v as usize] = to_t(&block);
                }
                (VertexKind::Rebalancing(c), FeatureSchema::CellBased) => {
                    let mut block = cells.stats[c as usize].to_vec();
                    block.extend(cells.tours[c as usize]);
                    head[v as usize] = to_t(&block);
                    head_slots[v as usize] = &CB_REB_HEAD;
                }
                (VertexKind::Capacity { cell, index }, FeatureSchema::CellBased) => {
                    let mut block = cells.stats[cell as usize].to_vec();
                    block.extend(cells.tours[cell as usize]);
                    block.push(index as f64);
                    head[v as usize] = to_t(&block);
                    head_slots[v as usize] = &CB_CAPACITY_HEAD;
                }
                _ => {}
            }
        }

        let mut class = Vec::with_capacity(graph.num_arcs());
        let mut arc = Vec::with_capacity(graph.num_arcs());
        for (i, a) in graph.arcs().iter().enumerate() {
            let info = graph.info(i as ArcIdx);
            let (c, block) = match (graph.kind(a.tail), graph.kind(a.head)) {
                (VertexKind::Request(_), VertexKind::RequestExit(_)) => (ArcClass::Zero, [0.0; DEADHEAD_LEN]),
                (_, VertexKind::Request(_) | VertexKind::ArtificialRequest(_)) if a.tail != graph.source() => {
                    let r = graph.request(a.head).expect("request vertex carries its request");
                    let cost = objective.cost_per_km * info.deadhead.km;
                    (
                        ArcClass::IntoRequest,
                        [
                            info.deadhead.km,
                            info.deadhead.seconds / 60.0,
                            ratio(cost, info.deadhead.seconds),
                            ratio(cost, r.arrival_time - now),
                            ratio(cost, info.deadhead.km),
                        ],
                    )
                }
                (_, VertexKind::Rebalancing(_)) => {
                    (ArcClass::IntoRebalancing, [info.deadhead.km, info.deadhead.seconds / 60.0, 0.0, 0.0, 0.0])
                }
                (VertexKind::Rebalancing(_), VertexKind::Capacity { .. }) => (ArcClass::IntoCapacity, [0.0; DEADHEAD_LEN]),
                _ => (ArcClass::Zero, [0.0; DEADHEAD_LEN]),
            };
            class.push(c);
            arc.push(block.map(T::of));
        }
        if outside > 0 {
            log::warn!("{outside} feature lookups fell outside the rebalancing grid; their cell features are 0");
        }
        Ok(Self { schema, class, tail, head, head_slots, arc, outside_grid: outside })
    }

    pub fn num_arcs(&self) -> usize {
        self.class.len()
    }

    /// Lookups that fell outside the grid while computing the features.
    pub fn outside_grid(&self) -> usize {
        self.outside_grid
    }

    /// Calls `f(slot, value)` for every feature of arc `a` in a fixed order:
    /// tail block, head block, arc block.
    fn for_each(&self, graph_arc: (VertexIdx, VertexIdx), a: usize, mut f: impl FnMut(usize, T)) {
        let l = self.schema.layout();
        let (tail, head) = graph_arc;
        let c = self.class[a];
        if matches!(c, ArcClass::IntoRequest | ArcClass::IntoRebalancing) {
            for (j, x) in self.tail[tail as usize].iter().enumerate() {
                f(l.vehicle_cell + j, *x);
            }
        }
        if c != ArcClass::Zero {
            for (slot, x) in self.head_slots[head as usize].iter().zip(&self.head[head as usize]) {
                f(*slot, *x);
            }
        }
        match c {
            ArcClass::IntoRequest => {
                for (j, x) in self.arc[a].iter().enumerate() {
                    f(l.deadhead + j, *x);
                }
            }
            ArcClass::IntoRebalancing => {
                let o = l.reb_tour.expect("cell-based layout");
                f(o, self.arc[a][0]);
                f(o + 1, self.arc[a][1]);
            }
            _ => {}
        }
    }

    /// Dense feature vector of arc `a`.
    pub fn vector(&self, graph: &DispatchGraph<T>, a: ArcIdx) -> Vec<T> {
        let mut out = vec![T::zero(); self.schema.len()];
        let arc = graph.arc(a);
        self.for_each((arc.tail, arc.head), a as usize, |slot, x| out[slot] = x);
        out
    }

    /// Divides every stored feature by its slot's divisor.
    pub fn normalize(&mut self, divisors: &[T]) {
        let l = self.schema.layout();
        for t in &mut self.tail {
            for (j, x) in t.iter_mut().enumerate() {
                *x /= divisors[l.vehicle_cell + j];
            }
        }
        for (h, slots) in self.head.iter_mut().zip(&self.head_slots) {
            for (x, s) in h.iter_mut().zip(slots.iter()) {
                *x /= divisors[*s];
            }
        }
        for (block, c) in self.arc.iter_mut().zip(&self.class) {
            match c {
                ArcClass::IntoRequest => {
                    for (j, x) in block.iter_mut().enumerate() {
                        *x /= divisors[l.deadhead + j];
                    }
                }
                ArcClass::IntoRebalancing => {
                    let o = l.reb_tour.expect("cell-based layout");
                    block[0] /= divisors[o];
                    block[1] /= divisors[o + 1];
                }
                _ => {}
            }
        }
    }

    /// Predicted arc weights `θ_a = ⟨w, φ(a)⟩` for every arc.
    pub fn weights(&self, graph: &DispatchGraph<T>, w: &[T]) -> Vec<T> {
        let l = self.schema.layout();
        let dot = |slots: &[usize], xs: &[T]| {
            let mut acc = T::zero();
            for (s, x) in slots.iter().zip(xs) {
                acc += w[*s] * *x;
            }
            acc
        };
        let tail_slots: [usize; CELL_LEN] = range::<CELL_LEN>(l.vehicle_cell);
        let tail_score: Vec<T> = self.tail.iter().map(|t| dot(&tail_slots, t)).collect();
        let head_score: Vec<T> = self.head.iter().zip(&self.head_slots).map(|(h, s)| dot(s, h)).collect();
        let deadhead_slots: [usize; DEADHEAD_LEN] = range::<DEADHEAD_LEN>(l.deadhead);
        graph
            .arcs()
            .iter()
            .enumerate()
            .map(|(i, a)| match self.class[i] {
                ArcClass::Zero => T::zero(),
                ArcClass::IntoRequest => {
                    (tail_score[a.tail as usize] + head_score[a.head as usize]) + dot(&deadhead_slots, &self.arc[i])
                }
                ArcClass::IntoRebalancing => {
                    let o = l.reb_tour.expect("cell-based layout");
                    (tail_score[a.tail as usize] + head_score[a.head as usize]) + dot(&[o, o + 1], &self.arc[i][..REB_TOUR_LEN])
                }
                ArcClass::IntoCapacity => head_score[a.head as usize],
            })
            .collect()
    }

    /// `Φᵀy`: sum of the feature vectors of the selected arcs, accumulated in
    /// arc order.
    pub fn accumulate(&self, graph: &DispatchGraph<T>, y: &[bool], out: &mut [T]) {
        for (i, a) in graph.arcs().iter().enumerate() {
            if y[i] {
                self.for_each((a.tail, a.head), i, |slot, x| out[slot] += x);
            }
        }
    }

    /// Adds every arc's squared and plain feature values into running sums
    /// (for standard deviations over all featured arcs).
    pub fn moments(&self, graph: &DispatchGraph<T>, sum: &mut [f64], sum_sq: &mut [f64]) -> usize {
        let mut n = 0;
        for (i, a) in graph.arcs().iter().enumerate() {
            if self.class[i] == ArcClass::Zero {
                continue;
            }
            n += 1;
            self.for_each((a.tail, a.head), i, |slot, x| {
                let x = x.as_f64();
                sum[slot] += x;
                sum_sq[slot] += x * x;
            });
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "divisors", rename_all = "snake_case")]
pub enum Normalization<T> {
    None,
    PerFeatureStdDev(Vec<T>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub instances: usize,
    pub perturbations: usize,
    pub sigma: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

/// Parameter vector of the linear predictor plus feature normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights<T = f64> {
    pub schema: FeatureSchema,
    pub w: Vec<T>,
    pub normalization: Normalization<T>,
    #[serde(default)]
    pub metadata: TrainingMetadata,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn zeros(schema: FeatureSchema) -> Self {
        Self { schema, w: vec![T::zero(); schema.len()], normalization: Normalization::None, metadata: TrainingMetadata::default() }
    }

    /// Weight 1 on the head request's reward, 0 elsewhere.
    pub fn reward_only(schema: FeatureSchema) -> Self {
        let mut m = Self::zeros(schema);
        m.w[schema.reward_slot()] = T::one();
        m
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let expected = self.schema.len();
        if self.w.len() != expected {
            return Err(FeatureError::Length { got: self.w.len(), expected });
        }
        if let Normalization::PerFeatureStdDev(d) = &self.normalization {
            if d.len() != expected {
                return Err(FeatureError::Length { got: d.len(), expected });
            }
            if let Some(index) = d.iter().position(|x| !(*x > T::zero()) || !x.is_finite()) {
                return Err(FeatureError::BadDivisor { index });
            }
        }
        Ok(())
    }

    pub fn divisors(&self) -> Option<&[T]> {
        match &self.normalization {
            Normalization::None => None,
            Normalization::PerFeatureStdDev(d) => Some(d),
        }
    }
}

impl<T: Scalar + Serialize + serde::de::DeserializeOwned> ModelWeights<T> {
    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| IoError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| IoError::Parse { path: path.display().to_string(), line: e.line() as u64, message: e.to_string() })?;
        m.validate().map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
        Ok(m)
    }
}

/// Features of `graph`, normalized with the model's divisors if it has any.
pub fn model_features<T: Scalar>(
    model: &ModelWeights<T>,
    graph: &DispatchGraph<T>,
    ctx: &FeatureContext<'_>,
) -> Result<GraphFeatures<T>, FeatureError> {
    model.validate()?;
    let mut f = GraphFeatures::compute(graph, model.schema, ctx)?;
    if let Some(d) = model.divisors() {
        f.normalize(d);
    }
    Ok(f)
}

/// The graph with `θ = ⟨w, φ⟩` on every featured arc; source arcs, sink
/// arcs and request-split arcs keep weight 0.
pub fn predict_weights<T: Scalar>(
    model: &ModelWeights<T>,
    graph: &DispatchGraph<T>,
    features: &GraphFeatures<T>,
) -> Result<DispatchGraph<T>, FeatureError> {
    model.validate()?;
    if features.schema != model.schema || FeatureSchema::for_mode(graph.mode) != Some(model.schema) {
        return Err(FeatureError::SchemaMismatch { model: model.schema.name().into(), graph: graph.mode.to_string() });
    }
    if features.num_arcs() != graph.num_arcs() {
        return Err(FeatureError::Length { got: features.num_arcs(), expected: graph.num_arcs() });
    }
    Ok(graph.clone().with_weights(features.weights(graph, &model.w)))
}
