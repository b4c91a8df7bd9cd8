//! Closed-loop rolling-horizon evaluation of dispatching policies.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::RequestDistribution;
use crate::error::SimError;
use crate::grid::{BoundingBox, Location};
use crate::model::{advance_with_report, validate_decision, Objective, Request, SystemState, VehicleId, VehicleState};
use crate::policy::{decide, full_information_bound, FullInfoResult, PolicyContext, PolicyKind, PolicySpec};
use crate::travel::TravelTimeProvider;

/// One closed-loop run: the request stream, the fleet at the first epoch and
/// the epochs to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// All requests; only those starting within the simulated epochs are
    /// revealed.
    pub requests: Vec<Request>,
    pub fleet: Vec<VehicleState>,
    pub first_epoch: u32,
    pub epochs: u32,
    pub period_s: f64,
    pub objective: Objective,
    pub tt: Arc<TravelTimeProvider>,
    pub dist: Option<Arc<RequestDistribution>>,
    /// Record per-epoch vehicle positions.
    pub snapshots: bool,
}

impl Scenario {
    pub fn start_time(&self) -> f64 {
        self.first_epoch as f64 * self.period_s
    }

    pub fn end_time(&self) -> f64 {
        (self.first_epoch + self.epochs) as f64 * self.period_s
    }

    /// Requests revealed during the run, grouped by epoch.
    pub fn batches(&self) -> BTreeMap<u32, Vec<Request>> {
        let mut out: BTreeMap<u32, Vec<Request>> = (self.first_epoch..self.first_epoch + self.epochs).map(|e| (e, Vec::new())).collect();
        for r in &self.requests {
            let e = (r.start_time / self.period_s).floor();
            if e >= self.first_epoch as f64 && e < (self.first_epoch + self.epochs) as f64 {
                out.get_mut(&(e as u32)).expect("epoch in range").push(*r);
            }
        }
        for b in out.values_mut() {
            b.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then(a.id.cmp(&b.id)));
        }
        out
    }

    /// The revealed requests in start-time order.
    pub fn revealed(&self) -> Vec<Request> {
        self.batches().into_values().flatten().collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.epochs == 0 {
            return Err(SimError::Scenario("at least one epoch is required".into()));
        }
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(SimError::Scenario(format!("period must be positive, got {}", self.period_s)));
        }
        if self.fleet.is_empty() {
            return Err(SimError::Scenario("fleet is empty".into()));
        }
        let area = self.tt.area();
        if let Some(v) = self.fleet.iter().find(|v| !area.contains(&v.location)) {
            return Err(SimError::Scenario(format!("vehicle {} starts outside the operating area", v.id)));
        }
        Ok(())
    }

    fn context(&self) -> PolicyContext<'_> {
        PolicyContext { tt: &self.tt, dist: self.dist.as_deref() }
    }
}

/// Places `n` idle vehicles at origins drawn uniformly (with replacement)
/// from `warmup`, or uniformly over the area when there are none.
pub fn place_fleet(warmup: &[Request], n: usize, area: BoundingBox, seed: u64) -> Vec<VehicleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inside: Vec<Location> = warmup.iter().map(|r| r.origin).filter(|o| area.contains(o)).collect();
    (0..n)
        .map(|i| {
            let location = if inside.is_empty() {
                Location::new(rng.random_range(area.x_min..area.x_max), rng.random_range(area.y_min..area.y_max))
            } else {
                inside[rng.random_range(0..inside.len())]
            };
            VehicleState::idle(VehicleId(i as u32), location)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleStatus {
    Idle,
    Serving,
    Rebalancing,
}

/// A vehicle position at the start of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: u32,
    pub vehicle_id: u32,
    pub x: f64,
    pub y: f64,
    pub status: VehicleStatus,
}

/// Per-epoch totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub requests: usize,
    pub served: usize,
    pub reward: f64,
    pub km: f64,
}

/// Deterministic outcome of a run. Wall-clock measurements live in
/// [`Timing`] so that repeated runs compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub policy: String,
    pub reward: f64,
    pub requests: usize,
    pub served: usize,
    pub service_ratio: f64,
    pub km: f64,
    pub km_per_request: f64,
    pub km_per_vehicle: f64,
    pub fleet_size: usize,
    pub decisions_validated: usize,
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub decide_s_total: f64,
    pub decide_s_mean: f64,
    pub decide_s_max: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub timing: Timing,
    /// The offline bound, for full-information runs.
    pub bound: Option<f64>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY.copysign(a)
        }
    } else {
        a / b
    }
}

/// Runs `policy` on `scenario`. Every decision is validated before it is
/// applied; an infeasible one aborts the run.
pub fn run_simulation(scenario: &Scenario, policy: &PolicySpec) -> Result<SimOutcome, SimError> {
    scenario.validate()?;
    if policy.objective != scenario.objective {
        return Err(SimError::Scenario("policy and scenario objectives differ".into()));
    }
    let tt = &*scenario.tt;
    let ctx = scenario.context();
    let mut batches = scenario.batches();
    let fi: Option<FullInfoResult> = match policy.kind {
        PolicyKind::FullInformation => Some(full_information_bound(
            &scenario.revealed(),
            &scenario.fleet,
            scenario.first_epoch,
            scenario.period_s,
            &scenario.objective,
            tt,
            policy.sparsification,
        )?),
        _ => None,
    };

    let first = batches.remove(&scenario.first_epoch).unwrap_or_default();
    let mut state = SystemState::new(scenario.first_epoch, scenario.period_s, first, scenario.fleet.clone());
    let mut status = vec![VehicleStatus::Idle; state.vehicles.len()];
    let mut metrics = Metrics {
        policy: policy.name().to_string(),
        reward: 0.0,
        requests: 0,
        served: 0,
        service_ratio: 0.0,
        km: 0.0,
        km_per_request: 0.0,
        km_per_vehicle: 0.0,
        fleet_size: scenario.fleet.len(),
        decisions_validated: 0,
        epochs: Vec::with_capacity(scenario.epochs as usize),
        snapshots: Vec::new(),
    };
    let mut timing = Timing::default();

    for _ in 0..scenario.epochs {
        if scenario.snapshots {
            for (v, s) in state.vehicles.iter().zip(&status) {
                let s = if v.pending.is_some() { VehicleStatus::Serving } else { *s };
                metrics.snapshots.push(Snapshot { epoch: state.epoch, vehicle_id: v.id.0, x: v.location.x, y: v.location.y, status: s });
            }
        }
        let started = Instant::now();
        let decision = match &fi {
            Some(fi) => fi.decision_at(&state, tt),
            None => decide(policy, &state, &ctx)?,
        };
        let elapsed = started.elapsed().as_secs_f64();
        timing.decide_s_total += elapsed;
        timing.decide_s_max = timing.decide_s_max.max(elapsed);

        let report = validate_decision(&state, &decision, tt)?;
        if !report.is_ok() {
            return Err(SimError::Infeasible { epoch: state.epoch, report: report.to_string() });
        }
        metrics.decisions_validated += 1;

        let next = batches.remove(&(state.epoch + 1)).unwrap_or_default();
        let step = advance_with_report(&state, &decision, next, tt, &scenario.objective);
        let record = EpochRecord {
            epoch: state.epoch,
            requests: state.batch.len(),
            served: step.served.len(),
            reward: step.reward(),
            km: step.km(),
        };
        metrics.requests += record.requests;
        metrics.served += record.served;
        metrics.reward += record.reward;
        metrics.km += record.km;
        metrics.epochs.push(record);
        for (s, v) in status.iter_mut().zip(&step.vehicles) {
            *s = if v.rebalancing { VehicleStatus::Rebalancing } else { VehicleStatus::Idle };
        }
        state = step.next;
    }

    metrics.service_ratio = if metrics.requests == 0 { 0.0 } else { metrics.served as f64 / metrics.requests as f64 };
    metrics.km_per_request = if metrics.served == 0 { 0.0 } else { metrics.km / metrics.served as f64 };
    metrics.km_per_vehicle = metrics.km / metrics.fleet_size as f64;
    timing.decide_s_mean = timing.decide_s_total / scenario.epochs as f64;
    Ok(SimOutcome { metrics, timing, bound: fi.map(|f| f.bound) })
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub reward: f64,
    pub served: usize,
    pub service_ratio: f64,
    pub km_per_request: f64,
    pub km_per_vehicle: f64,
    pub reward_ratio: f64,
    pub served_ratio: f64,
    pub km_per_request_ratio: f64,
    pub km_per_vehicle_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub outcomes: Vec<SimOutcome>,
}

/// Runs every policy on the same scenario (in parallel) and reports each
/// against greedy. Greedy is added as the reference when missing.
pub fn compare_policies(scenario: &Scenario, policies: &[PolicySpec]) -> Result<Comparison, SimError> {
    let mut all: Vec<PolicySpec> = policies.to_vec();
    if !all.iter().any(|p| matches!(p.kind, PolicyKind::Greedy)) {
        all.insert(0, PolicySpec::greedy(scenario.objective));
    }
    let outcomes: Vec<SimOutcome> = all.par_iter().map(|p| run_simulation(scenario, p)).collect::<Result<_, _>>()?;
    let greedy = all.iter().position(|p| matches!(p.kind, PolicyKind::Greedy)).expect("greedy present");
    let base = outcomes[greedy].metrics.clone();
    let rows = outcomes
        .iter()
        .map(|o| {
            let m = &o.metrics;
            ComparisonRow {
                policy: m.policy.clone(),
                reward: m.reward,
                served: m.served,
                service_ratio: m.service_ratio,
                km_per_request: m.km_per_request,
                km_per_vehicle: m.km_per_vehicle,
                reward_ratio: ratio(m.reward, base.reward),
                served_ratio: ratio(m.served as f64, base.served as f64),
                km_per_request_ratio: ratio(m.km_per_request, base.km_per_request),
                km_per_vehicle_ratio: ratio(m.km_per_vehicle, base.km_per_vehicle),
            }
        })
        .collect();
    Ok(Comparison { rows, outcomes })
}
