//! Maximum-weight k disjoint source-sink paths on a dispatch graph.
//!
//! The problem is solved as a min-cost flow of value k with costs `-θ`:
//! unit arc capacities, plus unit vertex capacities through vertex
//! splitting when paths must be vertex-disjoint. Initial potentials come from
//! one shortest-path pass in topological order (the network is a DAG, so
//! negative costs are fine there); every augmentation afterwards runs
//! Dijkstra on reduced costs and stops as soon as the sink is settled.
//!
//! When every vehicle owns a zero-weight source arc and a zero-weight sink
//! arc, a vehicle left without work contributes nothing, so augmentation
//! stops at the first path with nonnegative cost and the remaining vehicles
//! take empty trips. This keeps the number of shortest-path runs at the
//! number of vehicles that actually move.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::graph::{ArcIdx, DispatchGraph, VertexIdx, VertexKind};
use crate::scalar::{Ordered, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisjointnessMode {
    VertexDisjoint,
    ArcDisjoint,
}

/// k disjoint paths: arc indicators, the paths themselves, and `θᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution<T = f64> {
    pub y: Vec<bool>,
    /// One vertex sequence per vehicle vertex, in vehicle order.
    pub paths: Vec<Vec<VertexIdx>>,
    pub objective: T,
}

impl<T: Scalar> PathSolution<T> {
    pub fn selected_arcs(&self) -> impl Iterator<Item = ArcIdx> + '_ {
        self.y.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as ArcIdx)
    }

    /// `y` as 0/1 scalars.
    pub fn indicator(&self) -> Vec<T> {
        self.y.iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
    }
}

/// Smallest reduced cost over residual arcs reachable from the source under
/// the final potentials. Nonnegative (up to rounding) proves optimality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate<T> {
    pub min_reduced_cost: T,
    pub augmentations: usize,
}

fn check_graph<T: Scalar>(graph: &DispatchGraph<T>, k: usize) -> Result<Vec<VertexIdx>, SolveError> {
    if graph.k() != k {
        return Err(SolveError::WrongK { k, vehicles: graph.k() });
    }
    if graph.weights().len() != graph.num_arcs() {
        return Err(SolveError::WeightLength { got: graph.weights().len(), arcs: graph.num_arcs() });
    }
    Ok(graph.topological_order()?)
}

/// Vehicles that can always fall back to a zero-value empty trip.
fn empty_trips_are_free<T: Scalar>(graph: &DispatchGraph<T>) -> Option<Vec<(ArcIdx, ArcIdx)>> {
    let n = graph.num_vertices();
    let mut in_arc: Vec<Option<ArcIdx>> = vec![None; n];
    let mut in_degree = vec![0u32; n];
    let mut sink_arc: Vec<Option<ArcIdx>> = vec![None; n];
    for (i, a) in graph.arcs().iter().enumerate() {
        in_degree[a.head as usize] += 1;
        if a.tail == graph.source() {
            in_arc[a.head as usize] = Some(i as ArcIdx);
        }
        if a.head == graph.sink() && sink_arc[a.tail as usize].is_none() && graph.weight(i as ArcIdx) == T::zero() {
            sink_arc[a.tail as usize] = Some(i as ArcIdx);
        }
    }
    graph
        .vehicle_vertices()
        .map(|v| {
            let s = in_arc[v as usize]?;
            let t = sink_arc[v as usize]?;
            (in_degree[v as usize] == 1 && graph.weight(s) == T::zero()).then_some((s, t))
        })
        .collect()
}

/// Residual network with paired arcs `2e` (forward) and `2e + 1` (reverse).
struct Network<T> {
    head: Vec<u32>,
    cap: Vec<u32>,
    cost: Vec<T>,
    start: Vec<u32>,
    adj: Vec<u32>,
}

impl<T: Scalar> Network<T> {
    fn new(n: usize, arcs: &[(u32, u32, u32, T)]) -> Self {
        let mut head = Vec::with_capacity(2 * arcs.len());
        let mut cap = Vec::with_capacity(2 * arcs.len());
        let mut cost = Vec::with_capacity(2 * arcs.len());
        let mut degree = vec![0u32; n + 1];
        for &(u, v, c, w) in arcs {
            head.extend([v, u]);
            cap.extend([c, 0]);
            cost.extend([w, -w]);
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut start = vec![0u32; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + degree[i];
        }
        let mut fill = start.clone();
        let mut adj = vec![0u32; 2 * arcs.len()];
        for (e, &(u, v, _, _)) in arcs.iter().enumerate() {
            adj[fill[u as usize] as usize] = 2 * e as u32;
            fill[u as usize] += 1;
            adj[fill[v as usize] as usize] = 2 * e as u32 + 1;
            fill[v as usize] += 1;
        }
        Self { head, cap, cost, start, adj }
    }

    fn out(&self, u: u32) -> &[u32] {
        &self.adj[self.start[u as usize] as usize..self.start[u as usize + 1] as usize]
    }

    fn tail(&self, e: u32) -> u32 {
        self.head[(e ^ 1) as usize]
    }
}

struct FlowResult<T> {
    /// Flow on each graph arc.
    flow: Vec<bool>,
    certificate: Certificate<T>,
}

fn min_cost_flow<T: Scalar>(
    graph: &DispatchGraph<T>,
    order: &[VertexIdx],
    k: usize,
    mode: DisjointnessMode,
    stop_at_nonnegative: bool,
) -> Result<FlowResult<T>, SolveError> {
    let nv = graph.num_vertices();
    // network node of each vertex's entry and exit
    let mut node_in = vec![0u32; nv];
    let mut node_out = vec![0u32; nv];
    let mut net_arcs: Vec<(u32, u32, u32, T)> = Vec::with_capacity(graph.num_arcs() + nv);
    let mut n = 0u32;
    let mut net_order = Vec::with_capacity(2 * nv);
    for &v in order {
        let split = mode == DisjointnessMode::VertexDisjoint && !graph.kind(v).is_terminal();
        node_in[v as usize] = n;
        net_order.push(n);
        n += 1;
        if split {
            node_out[v as usize] = n;
            net_order.push(n);
            net_arcs.push((n - 1, n, 1, T::zero()));
            n += 1;
        } else {
            node_out[v as usize] = n - 1;
        }
    }
    let first_graph_arc = net_arcs.len();
    for (i, a) in graph.arcs().iter().enumerate() {
        net_arcs.push((node_out[a.tail as usize], node_in[a.head as usize], 1, -graph.weight(i as ArcIdx)));
    }
    let net = Network::new(n as usize, &net_arcs);
    let mut cap = net.cap.clone();
    let s = node_in[graph.source() as usize];
    let t = node_in[graph.sink() as usize];

    // Potentials: shortest distances from s in topological order.
    let inf = T::infinity();
    let mut pi = vec![inf; n as usize];
    pi[s as usize] = T::zero();
    for &u in &net_order {
        let du = pi[u as usize];
        if du == inf {
            continue;
        }
        for &e in net.out(u) {
            if cap[e as usize] > 0 {
                let v = net.head[e as usize] as usize;
                let nd = du + net.cost[e as usize];
                if nd < pi[v] {
                    pi[v] = nd;
                }
            }
        }
    }
    let reachable: Vec<bool> = pi.iter().map(|p| *p != inf).collect();
    for p in pi.iter_mut() {
        if *p == inf {
            *p = T::zero();
        }
    }

    let mut dist = vec![inf; n as usize];
    let mut parent = vec![u32::MAX; n as usize];
    let mut done = vec![false; n as usize];
    let mut touched: Vec<u32> = Vec::new();
    let mut heap: BinaryHeap<Reverse<(Ordered<T>, u32)>> = BinaryHeap::new();
    let mut sent = 0usize;
    while sent < k {
        for &u in &touched {
            dist[u as usize] = inf;
            parent[u as usize] = u32::MAX;
            done[u as usize] = false;
        }
        touched.clear();
        heap.clear();
        dist[s as usize] = T::zero();
        touched.push(s);
        heap.push(Reverse((Ordered(T::zero()), s)));
        while let Some(Reverse((Ordered(d), u))) = heap.pop() {
            if done[u as usize] {
                continue;
            }
            done[u as usize] = true;
            if u == t {
                break;
            }
            let pu = pi[u as usize];
            for &e in net.out(u) {
                if cap[e as usize] == 0 {
                    continue;
                }
                let v = net.head[e as usize];
                if done[v as usize] {
                    continue;
                }
                let rc = (net.cost[e as usize] + pu - pi[v as usize]).max(T::zero());
                let nd = d + rc;
                if nd < dist[v as usize] {
                    if dist[v as usize] == inf {
                        touched.push(v);
                    }
                    dist[v as usize] = nd;
                    parent[v as usize] = e;
                    heap.push(Reverse((Ordered(nd), v)));
                }
            }
        }
        if !done[t as usize] {
            break;
        }
        let dt = dist[t as usize];
        // pi += min(dist, dist_t) - dist_t; the constant shift is dropped so
        // that untouched vertices keep their potential.
        for &u in &touched {
            let du = dist[u as usize];
            if done[u as usize] && du < dt {
                pi[u as usize] += du - dt;
            }
        }

        let mut path_cost = T::zero();
        let mut v = t;
        while v != s {
            let e = parent[v as usize];
            path_cost += net.cost[e as usize];
            v = net.tail(e);
        }
        if stop_at_nonnegative && path_cost >= T::zero() {
            break;
        }
        let mut v = t;
        while v != s {
            let e = parent[v as usize];
            cap[e as usize] -= 1;
            cap[(e ^ 1) as usize] += 1;
            v = net.tail(e);
        }
        sent += 1;
    }
    if sent < k && !stop_at_nonnegative {
        return Err(SolveError::Infeasible(k));
    }

    let mut min_rc = inf;
    for u in 0..n {
        if !reachable[u as usize] {
            continue;
        }
        for &e in net.out(u) {
            if cap[e as usize] > 0 {
                let v = net.head[e as usize];
                let rc = net.cost[e as usize] + pi[u as usize] - pi[v as usize];
                if rc < min_rc {
                    min_rc = rc;
                }
            }
        }
    }
    let flow = (0..graph.num_arcs())
        .map(|i| cap[2 * (first_graph_arc + i)] == 0)
        .collect();
    Ok(FlowResult { flow, certificate: Certificate { min_reduced_cost: min_rc, augmentations: sent } })
}

/// Splits an arc flow into one path per vehicle: each walk leaves its vehicle
/// along the lowest-index arc that still carries flow.
fn decompose<T: Scalar>(
    graph: &DispatchGraph<T>,
    mut flow: Vec<bool>,
    empty: Option<&[(ArcIdx, ArcIdx)]>,
) -> PathSolution<T> {
    let n = graph.num_vertices();
    let mut out: Vec<Vec<ArcIdx>> = vec![Vec::new(); n];
    for (i, a) in graph.arcs().iter().enumerate() {
        out[a.tail as usize].push(i as ArcIdx);
    }
    let mut y = flow.clone();
    let mut paths = Vec::with_capacity(graph.k());
    for (vi, v) in graph.vehicle_vertices().enumerate() {
        let source_arc = out[graph.source() as usize]
            .iter()
            .copied()
            .find(|&a| graph.arc(a).head == v && flow[a as usize]);
        let mut path = vec![graph.source(), v];
        match source_arc {
            Some(a) => {
                flow[a as usize] = false;
                let mut u = v;
                while u != graph.sink() {
                    let a = out[u as usize]
                        .iter()
                        .copied()
                        .find(|&a| flow[a as usize])
                        .expect("flow is conserved");
                    flow[a as usize] = false;
                    u = graph.arc(a).head;
                    path.push(u);
                }
            }
            None => {
                let (s_arc, t_arc) = empty.expect("every vehicle carries flow")[vi];
                y[s_arc as usize] = true;
                y[t_arc as usize] = true;
                path.push(graph.sink());
            }
        }
        paths.push(path);
    }
    let mut objective = T::zero();
    for (i, &b) in y.iter().enumerate() {
        if b {
            objective += graph.weight(i as ArcIdx);
        }
    }
    PathSolution { y, paths, objective }
}

/// Exact maximum-weight set of `k` disjoint source-sink paths.
pub fn solve<T: Scalar>(graph: &DispatchGraph<T>, k: usize, mode: DisjointnessMode) -> Result<PathSolution<T>, SolveError> {
    solve_certified(graph, k, mode).map(|(s, _)| s)
}

/// Like [`solve`], also returning the reduced-cost certificate.
pub fn solve_certified<T: Scalar>(
    graph: &DispatchGraph<T>,
    k: usize,
    mode: DisjointnessMode,
) -> Result<(PathSolution<T>, Certificate<T>), SolveError> {
    let order = check_graph(graph, k)?;
    let empty = empty_trips_are_free(graph);
    let result = min_cost_flow(graph, &order, k, mode, empty.is_some())?;
    Ok((decompose(graph, result.flow, empty.as_deref()), result.certificate))
}

/// Exhaustive search over all k-tuples of disjoint paths; test oracle for
/// graphs with at most 16 non-terminal vertices.
pub fn brute_force_oracle<T: Scalar>(
    graph: &DispatchGraph<T>,
    k: usize,
    mode: DisjointnessMode,
) -> Result<PathSolution<T>, SolveError> {
    check_graph(graph, k)?;
    let inner = graph.non_terminal_count();
    if inner > 16 {
        return Err(SolveError::TooLarge(inner));
    }
    let n = graph.num_vertices();
    let mut out: Vec<Vec<ArcIdx>> = vec![Vec::new(); n];
    for (i, a) in graph.arcs().iter().enumerate() {
        out[a.tail as usize].push(i as ArcIdx);
    }
    let vehicles: Vec<VertexIdx> = graph.vehicle_vertices().collect();

    struct Search<'a, T> {
        graph: &'a DispatchGraph<T>,
        out: Vec<Vec<ArcIdx>>,
        vehicles: Vec<VertexIdx>,
        mode: DisjointnessMode,
        used_vertex: Vec<bool>,
        used_arc: Vec<bool>,
        current: Vec<Vec<ArcIdx>>,
        best: Option<(T, Vec<Vec<ArcIdx>>)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn vehicle(&mut self, i: usize, value: T) {
            if i == self.vehicles.len() {
                if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                    self.best = Some((value, self.current.clone()));
                }
                return;
            }
            let v = self.vehicles[i];
            let source_arcs: Vec<ArcIdx> = self.out[self.graph.source() as usize]
                .iter()
                .copied()
                .filter(|&a| self.graph.arc(a).head == v)
                .collect();
            for a in source_arcs {
                if self.take(a) {
                    self.current.push(vec![a]);
                    self.walk(i, v, value + self.graph.weight(a));
                    self.current.pop();
                    self.release(a);
                }
            }
        }

        fn walk(&mut self, i: usize, u: VertexIdx, value: T) {
            if u == self.graph.sink() {
                self.vehicle(i + 1, value);
                return;
            }
            for j in 0..self.out[u as usize].len() {
                let a = self.out[u as usize][j];
                if self.take(a) {
                    self.current.last_mut().expect("open path").push(a);
                    self.walk(i, self.graph.arc(a).head, value + self.graph.weight(a));
                    self.current.last_mut().expect("open path").pop();
                    self.release(a);
                }
            }
        }

        fn take(&mut self, a: ArcIdx) -> bool {
            let head = self.graph.arc(a).head;
            match self.mode {
                DisjointnessMode::ArcDisjoint => {
                    if self.used_arc[a as usize] {
                        return false;
                    }
                    self.used_arc[a as usize] = true;
                }
                DisjointnessMode::VertexDisjoint => {
                    if !self.graph.kind(head).is_terminal() {
                        if self.used_vertex[head as usize] {
                            return false;
                        }
                        self.used_vertex[head as usize] = true;
                    }
                    self.used_arc[a as usize] = true;
                }
            }
            true
        }

        fn release(&mut self, a: ArcIdx) {
            let head = self.graph.arc(a).head;
            self.used_arc[a as usize] = false;
            if self.mode == DisjointnessMode::VertexDisjoint && !self.graph.kind(head).is_terminal() {
                self.used_vertex[head as usize] = false;
            }
        }
    }

    let mut search = Search {
        graph,
        out,
        vehicles,
        mode,
        used_vertex: vec![false; n],
        used_arc: vec![false; graph.num_arcs()],
        current: Vec::new(),
        best: None,
    };
    search.vehicle(0, T::zero());
    let (_, arcs) = search.best.ok_or(SolveError::Infeasible(k))?;
    let mut y = vec![false; graph.num_arcs()];
    let mut objective = T::zero();
    let mut paths = Vec::with_capacity(arcs.len());
    for path_arcs in &arcs {
        let mut path = vec![graph.source()];
        for &a in path_arcs {
            y[a as usize] = true;
            path.push(graph.arc(a).head);
        }
        paths.push(path);
    }
    for (i, &b) in y.iter().enumerate() {
        if b {
            objective += graph.weight(i as ArcIdx);
        }
    }
    Ok(PathSolution { y, paths, objective })
}

/// Checks that `sol` is a set of k disjoint source-sink paths of `graph`
/// whose arcs are exactly `y`.
pub fn is_feasible<T: Scalar>(graph: &DispatchGraph<T>, sol: &PathSolution<T>, mode: DisjointnessMode) -> bool {
    if sol.y.len() != graph.num_arcs() || sol.paths.len() != graph.k() {
        return false;
    }
    let mut arc_of = std::collections::HashMap::new();
    for (i, a) in graph.arcs().iter().enumerate() {
        arc_of.entry((a.tail, a.head)).or_insert_with(Vec::new).push(i as ArcIdx);
    }
    let mut y = vec![false; graph.num_arcs()];
    let mut seen = vec![false; graph.num_vertices()];
    for path in &sol.paths {
        if path.len() < 3
            || path[0] != graph.source()
            || *path.last().expect("nonempty") != graph.sink()
            || !matches!(graph.kind(path[1]), VertexKind::Vehicle(_))
        {
            return false;
        }
        for w in path.windows(2) {
            let Some(arcs) = arc_of.get(&(w[0], w[1])) else { return false };
            let Some(&a) = arcs.iter().find(|&&a| !y[a as usize] && sol.y[a as usize]) else { return false };
            y[a as usize] = true;
        }
        if mode == DisjointnessMode::VertexDisjoint {
            for &v in &path[1..path.len() - 1] {
                if seen[v as usize] {
                    return false;
                }
                seen[v as usize] = true;
            }
        }
    }
    y == sol.y
}
