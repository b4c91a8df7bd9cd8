//! Imitation of full-information solutions: training-set construction, the
//! perturbed Fenchel-Young loss with its gradient, and BFGS training.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{RequestDistribution, SECONDS_PER_DAY};
use crate::error::{IoError, LearnError};
use crate::features::{FeatureContext, FeatureSchema, GraphFeatures, ModelWeights, Normalization, TrainingMetadata};
use crate::graph::{ArcIdx, DispatchGraph, GraphMode, VertexIdx, VertexKind};
use crate::kdspp::{is_feasible, solve, DisjointnessMode, PathSolution};
use crate::model::{advance, validate_decision, Request, SystemState};
use crate::policy::{derive_seed, full_information_bound, policy_structure, FullInfoResult, PolicyContext, PolicySpec};
use crate::scalar::dot;
use crate::sim::place_fleet;
use crate::travel::TravelTimeProvider;

pub const DEFAULT_PERTURBATIONS: usize = 50;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_EXTRACTION_PERIOD_S: f64 = 225.0;

/// Arc features of a training instance.
#[derive(Debug, Clone)]
pub enum InstanceFeatures {
    Graph(GraphFeatures<f64>),
    /// Row-major `num_arcs x dim` matrix.
    Dense { dim: usize, rows: Vec<f64> },
}

impl InstanceFeatures {
    pub fn dim(&self) -> usize {
        match self {
            InstanceFeatures::Graph(f) => f.schema.len(),
            InstanceFeatures::Dense { dim, .. } => *dim,
        }
    }

    pub fn weights(&self, graph: &DispatchGraph, w: &[f64]) -> Vec<f64> {
        match self {
            InstanceFeatures::Graph(f) => f.weights(graph, w),
            InstanceFeatures::Dense { dim, rows } => rows.chunks_exact(*dim).map(|r| dot(r, w)).collect(),
        }
    }

    /// Adds `Φᵀy` to `out`.
    pub fn accumulate(&self, graph: &DispatchGraph, y: &[bool], out: &mut [f64]) {
        match self {
            InstanceFeatures::Graph(f) => f.accumulate(graph, y, out),
            InstanceFeatures::Dense { dim, rows } => {
                for (row, _) in rows.chunks_exact(*dim).zip(y).filter(|(_, y)| **y) {
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
            }
        }
    }
}

/// One imitation target: a policy graph and the paths the full-information
/// solution takes through it.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub graph: DispatchGraph,
    pub features: InstanceFeatures,
    pub target: PathSolution,
    pub mode: DisjointnessMode,
    /// `(day, epoch)` the instance was extracted at.
    pub origin: (usize, u32),
}

impl TrainingInstance {
    pub fn new(
        graph: DispatchGraph,
        features: InstanceFeatures,
        target: PathSolution,
        mode: DisjointnessMode,
    ) -> Result<Self, LearnError> {
        if !is_feasible(&graph, &target, mode) {
            return Err(LearnError::Config("target is not a feasible path set of its graph".into()));
        }
        if let InstanceFeatures::Dense { dim, rows } = &features {
            if rows.len() != dim * graph.num_arcs() {
                return Err(LearnError::Config(format!("feature matrix has {} entries, expected {}", rows.len(), dim * graph.num_arcs())));
            }
        }
        Ok(Self { graph, features, target, mode, origin: (0, 0) })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// `Φᵀy*`.
    pub fn target_features(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.features.accumulate(&self.graph, &self.target.y, &mut out);
        out
    }

    /// Best path set under the predicted weights `θ(w)`.
    pub fn argmax(&self, w: &[f64]) -> Result<PathSolution, LearnError> {
        let weighted = self.graph.clone().with_weights(self.features.weights(&self.graph, w));
        Ok(solve(&weighted, weighted.k(), self.mode)?)
    }
}

/// Fixed Gaussian perturbations of the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub sigma: f64,
    pub z: Vec<Vec<f64>>,
}

impl PerturbationSet {
    pub fn new(m: usize, dim: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = (0..m).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        Self { sigma, z }
    }

    /// A single zero perturbation (the unperturbed loss).
    pub fn none(dim: usize) -> Self {
        Self { sigma: 1.0, z: vec![vec![0.0; dim]] }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn shifted(&self, w: &[f64], m: usize) -> Vec<f64> {
        w.iter().zip(&self.z[m]).map(|(w, z)| w + self.sigma * z).collect()
    }
}

/// `max_y θ(w + σZ_m)ᵀy` and `Φᵀŷ` for one perturbation.
fn perturbed_max(w: &[f64], inst: &TrainingInstance, p: &PerturbationSet, m: usize) -> Result<(f64, Vec<f64>), LearnError> {
    let shifted = p.shifted(w, m);
    let sol = inst.argmax(&shifted)?;
    let mut phi = vec![0.0; inst.dim()];
    inst.features.accumulate(&inst.graph, &sol.y, &mut phi);
    Ok((dot(&shifted, &phi), phi))
}

fn combine(w: &[f64], target: &[f64], terms: &[(f64, Vec<f64>)]) -> (f64, Vec<f64>) {
    let m = terms.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (v, phi) in terms {
        value += v;
        for (g, x) in grad.iter_mut().zip(phi) {
            *g += x;
        }
    }
    let loss = value / m - dot(w, target);
    for (g, t) in grad.iter_mut().zip(target) {
        *g = *g / m - t;
    }
    (loss, grad)
}

/// Sample-average perturbed Fenchel-Young loss of one instance and its
/// gradient in `w`.
pub fn perturbed_loss_and_gradient(
    w: &[f64],
    inst: &TrainingInstance,
    p: &PerturbationSet,
) -> Result<(f64, Vec<f64>), LearnError> {
    check_dim(w, inst, p)?;
    let terms = (0..p.len()).map(|m| perturbed_max(w, inst, p, m)).collect::<Result<Vec<_>, _>>()?;
    Ok(combine(w, &inst.target_features(), &terms))
}

fn check_dim(w: &[f64], inst: &TrainingInstance, p: &PerturbationSet) -> Result<(), LearnError> {
    if w.len() != inst.dim() || p.z.iter().any(|z| z.len() != w.len()) {
        return Err(LearnError::Config(format!("parameter dimension {} does not match features ({})", w.len(), inst.dim())));
    }
    if p.is_empty() {
        return Err(LearnError::Config("empty perturbation set".into()));
    }
    Ok(())
}

/// Mean loss and gradient over all instances. Solves run in parallel; the
/// reduction order is fixed.
pub fn mean_loss_and_gradient(
    w: &[f64],
    instances: &[TrainingInstance],
    p: &PerturbationSet,
) -> Result<(f64, Vec<f64>), LearnError> {
    if instances.is_empty() {
        return Err(LearnError::Empty);
    }
    for inst in instances {
        check_dim(w, inst, p)?;
    }
    let m = p.len();
    let terms: Vec<(f64, Vec<f64>)> = (0..instances.len() * m)
        .into_par_iter()
        .map(|j| perturbed_max(w, &instances[j / m], p, j % m))
        .collect::<Result<_, _>>()?;
    let n = instances.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (i, (inst, chunk)) in instances.iter().zip(terms.chunks_exact(m)).enumerate() {
        let (l, g) = combine(w, &inst.target_features(), chunk);
        if !l.is_finite() {
            return Err(LearnError::NonFinite { instance: i, loss: l });
        }
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub perturbations: usize,
    pub sigma: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { perturbations: DEFAULT_PERTURBATIONS, sigma: DEFAULT_SIGMA, max_iterations: 100, gradient_tolerance: 1e-6, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.perturbations == 0 {
            return Err(LearnError::Config("at least one perturbation is required".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LearnError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub gradient_norm: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub w: Vec<f64>,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// BFGS with a weak Wolfe bisection line search, which also handles the
/// piecewise-linear objectives met here. Returns the best point evaluated.
pub fn bfgs<E>(
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    x0: Vec<f64>,
    max_iterations: usize,
    gradient_tolerance: f64,
) -> Result<Fit, E> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_BISECTIONS: usize = 60;
    let started = Instant::now();
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut h: Vec<f64> = identity(n);
    let mut trace = vec![TraceRow { iteration: 0, loss: fx, gradient_norm: norm(&g), wall_s: started.elapsed().as_secs_f64() }];
    let mut first = true;

    for iteration in 1..=max_iterations {
        if norm(&g) <= gradient_tolerance {
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let (mut lo, mut hi, mut t) = (0.0, f64::INFINITY, 1.0);
        let mut accepted = None;
        for _ in 0..MAX_BISECTIONS {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + t * d).collect();
            let (ft, gt) = f(&xt)?;
            if !(ft <= fx + C1 * t * slope) {
                hi = t;
            } else if dot(&gt, &d) < C2 * slope {
                lo = t;
            } else {
                accepted = Some((xt, ft, gt));
                break;
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        }
        let Some((xt, ft, gt)) = accepted else { break };
        if !(ft < fx) {
            break;
        }
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        x = xt;
        fx = ft;
        g = gt;
        trace.push(TraceRow { iteration, loss: fx, gradient_norm: norm(&g), wall_s: started.elapsed().as_secs_f64() });
    }
    Ok(Fit { w: x, loss: fx, trace })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ` with `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Minimizes the mean perturbed loss from `w0` (zeros when `None`).
pub fn fit(instances: &[TrainingInstance], config: &TrainConfig, w0: Option<Vec<f64>>) -> Result<Fit, LearnError> {
    config.validate()?;
    let first = instances.first().ok_or(LearnError::Empty)?;
    let dim = first.dim();
    let p = PerturbationSet::new(config.perturbations, dim, config.sigma, config.seed);
    let x0 = w0.unwrap_or_else(|| vec![0.0; dim]);
    bfgs(|w| mean_loss_and_gradient(w, instances, &p), x0, config.max_iterations, config.gradient_tolerance)
}

/// Trains a model for `schema`; features of the instances must already be
/// normalized with `normalization`.
pub fn train(
    instances: &[TrainingInstance],
    config: &TrainConfig,
    schema: FeatureSchema,
    normalization: Normalization<f64>,
) -> Result<(ModelWeights, Vec<TraceRow>), LearnError> {
    if let Some(i) = instances.iter().position(|inst| inst.dim() != schema.len()) {
        return Err(LearnError::Config(format!("instance {i} does not match schema {}", schema.name())));
    }
    let fit = fit(instances, config, None)?;
    let metadata = TrainingMetadata {
        seed: config.seed,
        instances: instances.len(),
        perturbations: config.perturbations,
        sigma: config.sigma,
        iterations: fit.trace.len() - 1,
        final_loss: fit.loss,
    };
    Ok((ModelWeights { schema, w: fit.w, normalization, metadata }, fit.trace))
}

/// Writes the training trace as CSV.
pub fn write_trace(trace: &[TraceRow], out: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row).map_err(|e| IoError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| IoError::Format(e.to_string()))
}

/// How training instances are extracted from historical days. Window times
/// are seconds after midnight of each day.
#[derive(Debug, Clone)]
pub struct TrainingSetConfig {
    /// Learned policy whose graphs are imitated (its model is ignored).
    pub policy: PolicySpec,
    pub fleet_size: usize,
    pub period_s: f64,
    /// Core window (seconds after midnight) instances are taken from.
    pub core_start_s: f64,
    pub core_end_s: f64,
    /// Extra time simulated before and solved after the core window.
    pub warmup_s: f64,
    pub cooldown_s: f64,
    pub extraction_period_s: f64,
    /// Largest distance between a planned pickup and the artificial request
    /// it is mapped to.
    pub match_radius_m: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub instances: Vec<TrainingInstance>,
    pub normalization: Normalization<f64>,
    pub schema: FeatureSchema,
    /// Planned moves within the horizon that became rebalancing labels, and
    /// those left unmapped.
    pub mapped_moves: usize,
    pub unmapped_moves: usize,
}

/// Epochs at which instances are extracted on the day starting at
/// `day_offset_s`.
pub fn extraction_epochs(cfg: &TrainingSetConfig, day_offset_s: f64) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut t = day_offset_s + cfg.core_start_s;
    while t < day_offset_s + cfg.core_end_s {
        out.insert((t / cfg.period_s).floor() as u32);
        t += cfg.extraction_period_s;
    }
    out
}

struct Labeler<'a> {
    graph: &'a DispatchGraph,
    out: Vec<Vec<ArcIdx>>,
    vertex: HashMap<VertexKind, VertexIdx>,
    used_vertex: Vec<bool>,
    used_arc: Vec<bool>,
}

impl<'a> Labeler<'a> {
    fn new(graph: &'a DispatchGraph) -> Self {
        let mut out = vec![Vec::new(); graph.num_vertices()];
        for (i, a) in graph.arcs().iter().enumerate() {
            out[a.tail as usize].push(i as ArcIdx);
        }
        let vertex = graph.kinds().iter().enumerate().map(|(i, k)| (*k, i as VertexIdx)).collect();
        Self { graph, out, vertex, used_vertex: vec![false; graph.num_vertices()], used_arc: vec![false; graph.num_arcs()] }
    }

    fn arc(&self, u: VertexIdx, v: VertexIdx) -> Option<ArcIdx> {
        self.out[u as usize].iter().copied().find(|a| self.graph.arc(*a).head == v && !self.used_arc[*a as usize])
    }
}

/// Paths of the full-information plan through `graph` at `state`.
fn label(
    graph: &DispatchGraph,
    state: &SystemState,
    fi: &FullInfoResult,
    dist: &RequestDistribution,
    match_radius_m: f64,
    moves: &mut (usize, usize),
) -> PathSolution {
    let decision = fi_decision(fi, state);
    let mut lab = Labeler::new(graph);
    let mut paths = Vec::with_capacity(state.vehicles.len());
    for (v, trip) in state.vehicles.iter().zip(&decision) {
        let vv = lab.vertex[&VertexKind::Vehicle(v.id)];
        let mut path = vec![graph.source(), vv];
        let mut cur = vv;
        for r in trip {
            let Some(&rv) = lab.vertex.get(&VertexKind::Request(r.id)) else { break };
            if lab.arc(cur, rv).is_none() {
                break;
            }
            path.push(rv);
            cur = rv;
            if let Some(&exit) = lab.vertex.get(&VertexKind::RequestExit(r.id)) {
                path.push(exit);
                cur = exit;
            }
        }
        if let Some(next) = fi.next_pickup(v.id, state.period_end()).filter(|r| r.start_time < graph.horizon_end) {
            let before = path.len();
            match graph.mode {
                GraphMode::SampleBased => {
                    let best = lab.out[cur as usize]
                        .iter()
                        .map(|a| graph.arc(*a).head)
                        .filter(|h| matches!(graph.kind(*h), VertexKind::ArtificialRequest(_)) && !lab.used_vertex[*h as usize])
                        .map(|h| (graph.request(h).expect("artificial").origin.distance_m(&next.origin), h))
                        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    if let Some((_, h)) = best.filter(|(d, _)| *d <= match_radius_m) {
                        path.push(h);
                    }
                }
                GraphMode::CellBased => {
                    if let Some(&reb) = dist.grid.cell_of(&next.origin).and_then(|c| lab.vertex.get(&VertexKind::Rebalancing(c))) {
                        let free = lab.out[reb as usize]
                            .iter()
                            .copied()
                            .filter(|a| !lab.used_arc[*a as usize] && matches!(graph.kind(graph.arc(*a).head), VertexKind::Capacity { .. }))
                            .min_by_key(|a| match graph.kind(graph.arc(*a).head) {
                                VertexKind::Capacity { index, .. } => index,
                                _ => u32::MAX,
                            });
                        if let (Some(_), Some(cap)) = (lab.arc(cur, reb), free) {
                            path.push(reb);
                            path.push(graph.arc(cap).head);
                        }
                    }
                }
                GraphMode::Base => {}
            }
            if path.len() > before {
                moves.0 += 1;
            } else {
                moves.1 += 1;
            }
        }
        path.push(graph.sink());
        for w in path.windows(2) {
            let a = lab.arc(w[0], w[1]).expect("labelled arcs exist");
            lab.used_arc[a as usize] = true;
        }
        for &u in &path[2..path.len() - 1] {
            if !matches!(graph.kind(u), VertexKind::Rebalancing(_)) {
                lab.used_vertex[u as usize] = true;
            }
        }
        paths.push(path);
    }
    PathSolution { y: lab.used_arc, paths, objective: 0.0 }
}

/// New requests each vehicle serves this epoch under the offline plan.
fn fi_decision(fi: &FullInfoResult, state: &SystemState) -> Vec<Vec<Request>> {
    let (now, end) = (state.now(), state.period_end());
    state
        .vehicles
        .iter()
        .map(|v| {
            fi.trips
                .iter()
                .find(|(id, _)| *id == v.id)
                .map(|(_, t)| t.iter().filter(|r| r.start_time >= now && r.start_time < end).copied().collect())
                .unwrap_or_default()
        })
        .collect()
}

/// Builds imitation instances from historical days: per day, solves the
/// full-information problem over the window, replays its plan epoch by
/// epoch and labels the policy graph at every extraction epoch with the
/// plan's paths. Cell-based features are standardized over the whole set.
pub fn build_training_set(
    days: &[Vec<Request>],
    dist: &RequestDistribution,
    tt: &TravelTimeProvider,
    cfg: &TrainingSetConfig,
) -> Result<TrainingSet, LearnError> {
    let ctx = PolicyContext { tt, dist: Some(dist) };
    let schema_mode = policy_structure_mode(&cfg.policy)?;
    let schema = FeatureSchema::for_mode(schema_mode).ok_or_else(|| LearnError::Config("policy has no feature schema".into()))?;
    let mode = match schema_mode {
        GraphMode::CellBased => DisjointnessMode::ArcDisjoint,
        _ => DisjointnessMode::VertexDisjoint,
    };

    let per_day: Vec<(Vec<TrainingInstance>, (usize, usize))> = days
        .par_iter()
        .enumerate()
        .map(|(day, requests)| -> Result<_, LearnError> {
            let offset = requests.iter().map(|r| r.start_time).reduce(f64::min).map_or(0.0, |t| (t / SECONDS_PER_DAY).floor() * SECONDS_PER_DAY);
            let epochs = extraction_epochs(cfg, offset);
            let hi = offset + cfg.core_end_s + cfg.cooldown_s;
            let first_epoch = ((offset + cfg.core_start_s - cfg.warmup_s).max(0.0) / cfg.period_s).floor() as u32;
            let mut window: Vec<Request> =
                requests.iter().filter(|r| r.start_time >= first_epoch as f64 * cfg.period_s && r.start_time < hi).copied().collect();
            window.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then(a.id.cmp(&b.id)));
            let warmup: Vec<Request> = window.iter().filter(|r| r.start_time < offset + cfg.core_start_s).copied().collect();
            let fleet = place_fleet(&warmup, cfg.fleet_size, tt.area(), derive_seed(cfg.seed, day as u64));
            let fi = full_information_bound(&window, &fleet, first_epoch, cfg.period_s, &cfg.policy.objective, tt, cfg.policy.sparsification)
                .map_err(|e| LearnError::Config(format!("full-information solve on day {day}: {e}")))?;
            let mut spec = cfg.policy.clone();
            spec.seed = derive_seed(cfg.seed ^ 0x5A17, day as u64);

            let batch = |e: u32| -> Vec<Request> {
                let (a, b) = (e as f64 * cfg.period_s, (e + 1) as f64 * cfg.period_s);
                window.iter().filter(|r| r.start_time >= a && r.start_time < b).copied().collect()
            };
            let last = *epochs.iter().next_back().unwrap_or(&first_epoch);
            let mut state = SystemState::new(first_epoch, cfg.period_s, batch(first_epoch), fleet);
            let mut out = Vec::new();
            let mut moves = (0, 0);
            while state.epoch <= last {
                if epochs.contains(&state.epoch) {
                    let graph = policy_structure(&spec, &state, &ctx)
                        .map_err(|e| LearnError::Config(format!("day {day} epoch {}: {e}", state.epoch)))?;
                    let target = label(&graph, &state, &fi, dist, cfg.match_radius_m, &mut moves);
                    let fctx = FeatureContext { state: &state, dist, tt, objective: &cfg.policy.objective };
                    let features = GraphFeatures::compute(&graph, schema, &fctx)?;
                    let mut inst = TrainingInstance::new(graph, InstanceFeatures::Graph(features), target, mode)?;
                    inst.origin = (day, state.epoch);
                    out.push(inst);
                }
                let decision = fi.decision_at(&state, tt);
                debug_assert!(validate_decision(&state, &decision, tt).map(|r| r.is_ok()).unwrap_or(false));
                let next = batch(state.epoch + 1);
                state = advance(&state, &decision, next, tt, &cfg.policy.objective);
            }
            Ok((out, moves))
        })
        .collect::<Result<_, _>>()?;

    let mut instances = Vec::new();
    let (mut mapped, mut unmapped) = (0, 0);
    for (inst, (m, u)) in per_day {
        instances.extend(inst);
        mapped += m;
        unmapped += u;
    }
    let normalization = if schema.normalized() { standardize(&mut instances, schema) } else { Normalization::None };
    Ok(TrainingSet { instances, normalization, schema, mapped_moves: mapped, unmapped_moves: unmapped })
}

fn policy_structure_mode(spec: &PolicySpec) -> Result<GraphMode, LearnError> {
    use crate::policy::PolicyKind;
    match spec.kind {
        PolicyKind::SampleBased { .. } => Ok(GraphMode::SampleBased),
        PolicyKind::CellBased { .. } => Ok(GraphMode::CellBased),
        _ => Err(LearnError::Config(format!("policy {} is not learned", spec.name()))),
    }
}

/// Divides every feature by its standard deviation over all featured arcs
/// of the set (1 where the deviation is zero).
pub fn standardize(instances: &mut [TrainingInstance], schema: FeatureSchema) -> Normalization<f64> {
    let len = schema.len();
    let (mut sum, mut sum_sq, mut n) = (vec![0.0; len], vec![0.0; len], 0usize);
    for inst in instances.iter() {
        if let InstanceFeatures::Graph(f) = &inst.features {
            n += f.moments(&inst.graph, &mut sum, &mut sum_sq);
        }
    }
    let divisors: Vec<f64> = (0..len)
        .map(|j| {
            if n == 0 {
                return 1.0;
            }
            let mean = sum[j] / n as f64;
            let var = (sum_sq[j] / n as f64 - mean * mean).max(0.0);
            let sd = var.sqrt();
            if sd > 1e-12 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    for inst in instances.iter_mut() {
        if let InstanceFeatures::Graph(f) = &mut inst.features {
            f.normalize(&divisors);
        }
    }
    Normalization::PerFeatureStdDev(divisors)
}
