//! Fleet-control domain model: requests, vehicle and system states, fleet
//! decisions, their feasibility rules and the system evolution between two
//! decision epochs.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::StructuralError;
use crate::grid::Location;
use crate::travel::TravelTimeProvider;

/// Slack allowed when comparing continuous times, in seconds.
pub const TIME_EPS: f64 = 1e-9;

/// Default system time period (one minute).
pub const DEFAULT_PERIOD_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A ride request: pick up at `origin` exactly at `start_time`, drop off at
/// `destination` at `arrival_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: Location,
    pub destination: Location,
    pub start_time: f64,
    pub arrival_time: f64,
    pub reward: f64,
    /// Driven distance of the ride itself.
    pub distance_km: f64,
}

impl Request {
    pub fn from_provider(
        id: RequestId,
        origin: Location,
        destination: Location,
        start_time: f64,
        reward: f64,
        tt: &TravelTimeProvider,
    ) -> Self {
        let leg = tt.leg(&origin, &destination);
        Self {
            id,
            origin,
            destination,
            start_time,
            arrival_time: start_time + leg.seconds,
            reward,
            distance_km: leg.km,
        }
    }

    pub fn duration(&self) -> f64 {
        self.arrival_time - self.start_time
    }
}

/// Whether a vehicle free at `ready_at` can cover a leg of `leg_seconds`
/// and be at the pickup by `start_time`.
#[inline]
pub fn reachable(ready_at: f64, leg_seconds: f64, start_time: f64) -> bool {
    ready_at + leg_seconds <= start_time + TIME_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Current position; while a request is pending this is its drop-off.
    pub location: Location,
    /// Request still being served at the decision time (at most one).
    pub pending: Option<Request>,
}

impl VehicleState {
    pub fn idle(id: VehicleId, location: Location) -> Self {
        Self { id, location, pending: None }
    }

    /// Where and when the vehicle can start its next leg.
    pub fn available(&self, now: f64) -> (Location, f64) {
        match &self.pending {
            Some(r) => (r.destination, r.arrival_time.max(now)),
            None => (self.location, now),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub epoch: u32,
    pub period_s: f64,
    /// Requests with start time in `[epoch * period, (epoch + 1) * period)`.
    pub batch: Vec<Request>,
    pub vehicles: Vec<VehicleState>,
}

impl SystemState {
    pub fn new(epoch: u32, period_s: f64, batch: Vec<Request>, vehicles: Vec<VehicleState>) -> Self {
        Self { epoch, period_s, batch, vehicles }
    }

    /// Decision time of this epoch in seconds.
    pub fn now(&self) -> f64 {
        self.epoch as f64 * self.period_s
    }

    pub fn period_end(&self) -> f64 {
        (self.epoch + 1) as f64 * self.period_s
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    /// Checks that request ids are unique across batch and pending requests.
    pub fn check_ids(&self) -> Result<(), StructuralError> {
        let mut seen = HashSet::new();
        let pending = self.vehicles.iter().filter_map(|v| v.pending.as_ref());
        for r in self.batch.iter().chain(pending) {
            if !seen.insert(r.id) {
                return Err(StructuralError::DuplicateRequestId(r.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleDecision {
    pub vehicle: VehicleId,
    /// Pending request (if any) followed by newly assigned requests.
    pub trip: Vec<Request>,
    pub rebalance_to: Option<Location>,
}

impl VehicleDecision {
    /// Keep serving whatever is pending and do nothing else.
    pub fn hold(v: &VehicleState) -> Self {
        Self { vehicle: v.id, trip: v.pending.iter().copied().collect(), rebalance_to: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetDecision {
    pub vehicles: Vec<VehicleDecision>,
}

impl FleetDecision {
    /// The all-empty decision: every vehicle finishes what it is doing.
    pub fn idle(state: &SystemState) -> Self {
        Self { vehicles: state.vehicles.iter().map(VehicleDecision::hold).collect() }
    }

    pub fn assigned_requests(&self) -> impl Iterator<Item = &Request> {
        self.vehicles.iter().flat_map(|d| d.trip.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    Profit,
    SatisfiedCustomers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub mode: ObjectiveMode,
    pub cost_per_km: f64,
}

impl Objective {
    pub const PROFIT_COST_PER_KM: f64 = 0.45;
    pub const CUSTOMERS_COST_PER_KM: f64 = 0.00001;

    pub fn profit() -> Self {
        Self { mode: ObjectiveMode::Profit, cost_per_km: Self::PROFIT_COST_PER_KM }
    }

    pub fn satisfied_customers() -> Self {
        Self { mode: ObjectiveMode::SatisfiedCustomers, cost_per_km: Self::CUSTOMERS_COST_PER_KM }
    }

    pub fn for_mode(mode: ObjectiveMode) -> Self {
        match mode {
            ObjectiveMode::Profit => Self::profit(),
            ObjectiveMode::SatisfiedCustomers => Self::satisfied_customers(),
        }
    }

    /// Revenue credited for serving `r`.
    pub fn revenue(&self, r: &Request) -> f64 {
        match self.mode {
            ObjectiveMode::Profit => r.reward,
            ObjectiveMode::SatisfiedCustomers => 1.0,
        }
    }

    /// Net value of serving `r` after an empty drive of `deadhead_km`.
    pub fn arc_value(&self, r: &Request, deadhead_km: f64) -> f64 {
        self.revenue(r) - self.cost_per_km * (deadhead_km + r.distance_km)
    }
}

/// Reward of a trip: revenue of its requests minus the driving cost of the
/// ride kilometers plus `deadhead_km` of empty driving.
pub fn trip_reward(trip: &[Request], deadhead_km: f64, objective: &Objective) -> f64 {
    if trip.is_empty() && deadhead_km == 0.0 {
        return 0.0;
    }
    let revenue: f64 = trip.iter().map(|r| objective.revenue(r)).sum();
    let served_km: f64 = trip.iter().map(|r| r.distance_km).sum();
    revenue - objective.cost_per_km * (served_km + deadhead_km)
}

/// Which feasibility rule a decision breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// (i) a request assigned to more than one vehicle.
    SharedRequest { request: RequestId, vehicles: Vec<VehicleId> },
    /// (ii) successor pickup cannot be reached after the previous drop-off.
    Succession { vehicle: VehicleId, previous: RequestId, next: RequestId, late_by_s: f64 },
    /// (iii) first new request cannot be reached from the current position.
    FirstReach { vehicle: VehicleId, request: RequestId, late_by_s: f64 },
    /// The pending request is missing or not first in the trip.
    PendingNotPrefix { vehicle: VehicleId },
    /// A new request was listed twice in one trip.
    RepeatedInTrip { vehicle: VehicleId, request: RequestId },
}

impl Violation {
    pub fn constraint(&self) -> &'static str {
        match self {
            Violation::SharedRequest { .. } | Violation::RepeatedInTrip { .. } => "i",
            Violation::Succession { .. } => "ii",
            Violation::FirstReach { .. } => "iii",
            Violation::PendingNotPrefix { .. } => "pending",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SharedRequest { request, vehicles } => {
                write!(f, "(i) {request} assigned to {} vehicles", vehicles.len())
            }
            Violation::Succession { vehicle, previous, next, late_by_s } => {
                write!(f, "(ii) {vehicle}: {next} after {previous} late by {late_by_s:.3}s")
            }
            Violation::FirstReach { vehicle, request, late_by_s } => {
                write!(f, "(iii) {vehicle}: {request} late by {late_by_s:.3}s")
            }
            Violation::PendingNotPrefix { vehicle } => {
                write!(f, "{vehicle}: pending request is not the trip prefix")
            }
            Violation::RepeatedInTrip { vehicle, request } => {
                write!(f, "(i) {vehicle}: {request} listed twice")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn index_decisions<'a>(
    state: &SystemState,
    decision: &'a FleetDecision,
) -> Result<HashMap<VehicleId, &'a VehicleDecision>, StructuralError> {
    let known: HashSet<VehicleId> = state.vehicles.iter().map(|v| v.id).collect();
    let mut by_vehicle = HashMap::with_capacity(decision.vehicles.len());
    for d in &decision.vehicles {
        if !known.contains(&d.vehicle) {
            return Err(StructuralError::UnknownVehicle(d.vehicle));
        }
        if by_vehicle.insert(d.vehicle, d).is_some() {
            return Err(StructuralError::DuplicateVehicle(d.vehicle));
        }
    }
    for v in &state.vehicles {
        if !by_vehicle.contains_key(&v.id) {
            return Err(StructuralError::MissingVehicle(v.id));
        }
    }
    Ok(by_vehicle)
}

/// Checks a fleet decision against the feasibility rules (i)-(iii).
///
/// Unknown vehicles or requests are structural errors; rule breaches are
/// returned in the report.
pub fn validate_decision(
    state: &SystemState,
    decision: &FleetDecision,
    tt: &TravelTimeProvider,
) -> Result<ValidationReport, StructuralError> {
    state.check_ids()?;
    let by_vehicle = index_decisions(state, decision)?;
    let batch: HashSet<RequestId> = state.batch.iter().map(|r| r.id).collect();
    let now = state.now();
    let mut report = ValidationReport::default();
    let mut owners: HashMap<RequestId, Vec<VehicleId>> = HashMap::new();

    for v in &state.vehicles {
        let d = by_vehicle[&v.id];
        let mut trip = d.trip.as_slice();
        if let Some(p) = &v.pending {
            match trip.first() {
                Some(first) if first.id == p.id => trip = &trip[1..],
                _ => report.violations.push(Violation::PendingNotPrefix { vehicle: v.id }),
            }
        }
        let mut seen_here = HashSet::new();
        for r in trip {
            if !batch.contains(&r.id) {
                return Err(StructuralError::UnknownRequest(r.id));
            }
            if !seen_here.insert(r.id) {
                report.violations.push(Violation::RepeatedInTrip { vehicle: v.id, request: r.id });
            }
            owners.entry(r.id).or_default().push(v.id);
        }

        let (mut at, mut ready) = v.available(now);
        let mut previous = v.pending.as_ref().map(|p| p.id);
        for r in trip {
            let leg = tt.leg(&at, &r.origin);
            if !reachable(ready, leg.seconds, r.start_time) {
                let late_by_s = ready + leg.seconds - r.start_time;
                report.violations.push(match previous {
                    Some(prev) => Violation::Succession { vehicle: v.id, previous: prev, next: r.id, late_by_s },
                    None => Violation::FirstReach { vehicle: v.id, request: r.id, late_by_s },
                });
            }
            at = r.destination;
            ready = r.arrival_time;
            previous = Some(r.id);
        }
    }

    let mut shared: Vec<_> = owners.into_iter().filter(|(_, vs)| vs.len() > 1).collect();
    shared.sort_by_key(|(id, _)| *id);
    for (request, vehicles) in shared {
        report.violations.insert(0, Violation::SharedRequest { request, vehicles });
    }
    Ok(report)
}

/// Per-vehicle accounting of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleStep {
    pub vehicle: VehicleId,
    pub reward: f64,
    pub km: f64,
    pub served: usize,
    pub rebalancing: bool,
}

/// Outcome of [`advance_with_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub next: SystemState,
    pub vehicles: Vec<VehicleStep>,
    pub served: Vec<RequestId>,
    pub dropped: Vec<RequestId>,
}

impl StepReport {
    pub fn reward(&self) -> f64 {
        self.vehicles.iter().map(|v| v.reward).sum()
    }

    pub fn km(&self) -> f64 {
        self.vehicles.iter().map(|v| v.km).sum()
    }
}

/// Evolves the system from epoch `t` to `t + 1` under a validated decision.
pub fn advance(
    state: &SystemState,
    decision: &FleetDecision,
    new_requests: Vec<Request>,
    tt: &TravelTimeProvider,
    objective: &Objective,
) -> SystemState {
    advance_with_report(state, decision, new_requests, tt, objective).next
}

/// [`advance`] plus the rewards, kilometers and request outcomes of the
/// epoch. Newly assigned requests are credited (revenue minus the cost of
/// the empty drive and the ride) when assigned; rebalancing kilometers are
/// charged as they are driven.
pub fn advance_with_report(
    state: &SystemState,
    decision: &FleetDecision,
    new_requests: Vec<Request>,
    tt: &TravelTimeProvider,
    objective: &Objective,
) -> StepReport {
    let now = state.now();
    let next_time = state.period_end();
    let by_vehicle: HashMap<VehicleId, &VehicleDecision> =
        decision.vehicles.iter().map(|d| (d.vehicle, d)).collect();

    let mut vehicles = Vec::with_capacity(state.vehicles.len());
    let mut steps = Vec::with_capacity(state.vehicles.len());
    let mut assigned = HashSet::new();
    let mut served = Vec::new();

    for v in &state.vehicles {
        let d = by_vehicle.get(&v.id);
        let new: &[Request] = match d {
            Some(d) => {
                let skip = usize::from(v.pending.is_some() && d.trip.first().map(|r| r.id) == v.pending.map(|p| p.id));
                &d.trip[skip..]
            }
            None => &[],
        };

        let (mut at, mut ready) = v.available(now);
        let mut last: Option<Request> = v.pending;
        let mut deadhead_km = 0.0;
        for r in new {
            deadhead_km += tt.leg(&at, &r.origin).km;
            at = r.destination;
            ready = r.arrival_time;
            last = Some(*r);
            assigned.insert(r.id);
            served.push(r.id);
        }
        let mut step = VehicleStep {
            vehicle: v.id,
            reward: trip_reward(new, deadhead_km, objective),
            km: deadhead_km + new.iter().map(|r| r.distance_km).sum::<f64>(),
            served: new.len(),
            rebalancing: false,
        };

        let next_state = match last.filter(|r| r.arrival_time > next_time) {
            Some(unfinished) => VehicleState { id: v.id, location: unfinished.destination, pending: Some(unfinished) },
            None => {
                let mut location = at;
                if let Some(target) = d.and_then(|d| d.rebalance_to) {
                    let leg = tt.leg(&at, &target);
                    let depart = ready.max(now);
                    let (reached, km) = if leg.seconds <= 0.0 || depart + leg.seconds <= next_time {
                        (target, leg.km)
                    } else {
                        let fraction = ((next_time - depart) / leg.seconds).clamp(0.0, 1.0);
                        (at.lerp(&target, fraction), leg.km * fraction)
                    };
                    location = reached;
                    step.km += km;
                    step.reward -= objective.cost_per_km * km;
                    step.rebalancing = km > 0.0;
                }
                VehicleState::idle(v.id, location)
            }
        };
        vehicles.push(next_state);
        steps.push(step);
    }

    let dropped = state.batch.iter().filter(|r| !assigned.contains(&r.id)).map(|r| r.id).collect();
    StepReport {
        next: SystemState::new(state.epoch + 1, state.period_s, new_requests, vehicles),
        vehicles: steps,
        served,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundingBox;

    // 36 km/h = 10 m/s keeps the arithmetic readable.
    fn tt() -> TravelTimeProvider {
        TravelTimeProvider::straight_line(BoundingBox::new(0.0, 0.0, 10_000.0, 10_000.0), 36.0)
    }

    fn req(id: u64, o: (f64, f64), d: (f64, f64), start: f64, reward: f64) -> Request {
        Request::from_provider(RequestId(id), Location::new(o.0, o.1), Location::new(d.0, d.1), start, reward, &tt())
    }

    #[test]
    fn empty_decision_is_feasible() {
        let state = SystemState::new(
            1,
            60.0,
            vec![req(1, (0.0, 0.0), (100.0, 0.0), 70.0, 5.0)],
            vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))],
        );
        let report = validate_decision(&state, &FleetDecision::idle(&state), &tt()).unwrap();
        assert!(report.is_ok());
    }

    #[test]
    fn shared_request_violates_i() {
        let r7 = req(7, (0.0, 0.0), (100.0, 0.0), 100.0, 5.0);
        let state = SystemState::new(
            1,
            60.0,
            vec![r7],
            vec![
                VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0)),
                VehicleState::idle(VehicleId(1), Location::new(0.0, 0.0)),
            ],
        );
        let decision = FleetDecision {
            vehicles: vec![
                VehicleDecision { vehicle: VehicleId(0), trip: vec![r7], rebalance_to: None },
                VehicleDecision { vehicle: VehicleId(1), trip: vec![r7], rebalance_to: None },
            ],
        };
        let report = validate_decision(&state, &decision, &tt()).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].constraint(), "i");
        assert!(matches!(&report.violations[0], Violation::SharedRequest { request, .. } if *request == RequestId(7)));
    }

    #[test]
    fn late_successor_violates_ii() {
        // r1 drops off at A = (600, 0) at a = 100 s; r2 starts at B = (1200, 0)
        // at s = 150 s; tau(A, B) = 60 s, and 100 + 60 > 150.
        let mut r1 = req(1, (0.0, 0.0), (600.0, 0.0), 40.0, 5.0);
        assert!((r1.arrival_time - 100.0).abs() < 1e-9);
        r1.arrival_time = 100.0;
        let r2 = req(2, (1200.0, 0.0), (1300.0, 0.0), 150.0, 5.0);
        assert!((tt().seconds(&r1.destination, &r2.origin) - 60.0).abs() < 1e-9);
        let mut state = SystemState::new(
            0,
            200.0,
            vec![r1, r2],
            vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))],
        );
        state.epoch = 0;
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision { vehicle: VehicleId(0), trip: vec![r1, r2], rebalance_to: None }],
        };
        let report = validate_decision(&state, &decision, &tt()).unwrap();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::Succession { previous, next, late_by_s, .. } => {
                assert_eq!((*previous, *next), (RequestId(1), RequestId(2)));
                assert!((late_by_s - 10.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unreachable_first_request_violates_iii() {
        // 1 km away with only 30 s to spare at 10 m/s.
        let r = req(3, (1000.0, 0.0), (1100.0, 0.0), 90.0, 5.0);
        let state = SystemState::new(1, 60.0, vec![r], vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))]);
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision { vehicle: VehicleId(0), trip: vec![r], rebalance_to: None }],
        };
        let report = validate_decision(&state, &decision, &tt()).unwrap();
        assert_eq!(report.violations[0].constraint(), "iii");
    }

    #[test]
    fn structural_errors_are_distinct() {
        let state = SystemState::new(1, 60.0, vec![], vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))]);
        let ghost = req(99, (0.0, 0.0), (10.0, 0.0), 61.0, 1.0);
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision { vehicle: VehicleId(0), trip: vec![ghost], rebalance_to: None }],
        };
        assert_eq!(
            validate_decision(&state, &decision, &tt()),
            Err(StructuralError::UnknownRequest(RequestId(99)))
        );
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision { vehicle: VehicleId(5), trip: vec![], rebalance_to: None }],
        };
        assert_eq!(
            validate_decision(&state, &decision, &tt()),
            Err(StructuralError::UnknownVehicle(VehicleId(5)))
        );
        assert_eq!(
            validate_decision(&state, &FleetDecision::default(), &tt()),
            Err(StructuralError::MissingVehicle(VehicleId(0)))
        );
    }

    #[test]
    fn trip_reward_profit_and_customers() {
        let mut r = req(1, (0.0, 0.0), (4000.0, 0.0), 60.0, 10.0);
        assert!((r.distance_km - 4.0).abs() < 1e-12);
        r.distance_km = 4.0;
        let profit = trip_reward(&[r], 0.0, &Objective::profit());
        assert!((profit - 8.2).abs() < 1e-12);

        let mut trip = vec![r, r, r];
        for t in &mut trip {
            t.distance_km = 3.0;
        }
        let customers = trip_reward(&trip, 3.0, &Objective::satisfied_customers());
        assert!((customers - 2.99988).abs() < 1e-12);

        assert_eq!(trip_reward(&[], 0.0, &Objective::profit()), 0.0);
    }

    #[test]
    fn finished_request_leaves_vehicle_idle_at_dropoff() {
        // Pickup at 60 s, 100 m ride -> arrival 70 s = t*period + 10 s.
        let r = req(1, (0.0, 0.0), (100.0, 0.0), 60.0, 5.0);
        assert!((r.arrival_time - 70.0).abs() < 1e-9);
        let state = SystemState::new(1, 60.0, vec![r], vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))]);
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision { vehicle: VehicleId(0), trip: vec![r], rebalance_to: None }],
        };
        let next = advance(&state, &decision, vec![], &tt(), &Objective::profit());
        assert_eq!(next.epoch, 2);
        assert_eq!(next.vehicles[0].pending, None);
        assert_eq!(next.vehicles[0].location, r.destination);
    }

    #[test]
    fn rebalancing_interpolates_along_leg() {
        // Target 3000 m away = 300 s = 5 minutes; after one minute the
        // vehicle has covered a fifth of the leg.
        let state = SystemState::new(1, 60.0, vec![], vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))]);
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision {
                vehicle: VehicleId(0),
                trip: vec![],
                rebalance_to: Some(Location::new(3000.0, 0.0)),
            }],
        };
        let report = advance_with_report(&state, &decision, vec![], &tt(), &Objective::profit());
        let v = &report.next.vehicles[0];
        assert!(v.pending.is_none());
        assert!((v.location.x - 600.0).abs() < 1e-9);
        assert!((report.km() - 0.6).abs() < 1e-12);
        assert!((report.reward() + 0.45 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn no_decision_only_ticks_the_clock() {
        let vehicles = vec![
            VehicleState::idle(VehicleId(0), Location::new(5.0, 5.0)),
            VehicleState::idle(VehicleId(1), Location::new(50.0, 5.0)),
        ];
        let state = SystemState::new(3, 60.0, vec![], vehicles.clone());
        let next = advance(&state, &FleetDecision::idle(&state), vec![], &tt(), &Objective::profit());
        assert_eq!(next, SystemState::new(4, 60.0, vec![], vehicles));
    }

    #[test]
    fn unfinished_request_becomes_pending() {
        // 2 km ride starting at 61 s ends at 261 s, past the next epoch.
        let r = req(1, (0.0, 0.0), (2000.0, 0.0), 61.0, 5.0);
        let state = SystemState::new(1, 60.0, vec![r], vec![VehicleState::idle(VehicleId(0), Location::new(0.0, 0.0))]);
        let decision = FleetDecision {
            vehicles: vec![VehicleDecision {
                vehicle: VehicleId(0),
                trip: vec![r],
                rebalance_to: Some(Location::new(0.0, 0.0)),
            }],
        };
        let report = advance_with_report(&state, &decision, vec![], &tt(), &Objective::profit());
        let v = &report.next.vehicles[0];
        assert_eq!(v.pending.map(|p| p.id), Some(RequestId(1)));
        assert_eq!(v.location, r.destination);
        assert_eq!(report.served, vec![RequestId(1)]);
        // the rebalancing leg never started
        assert!((report.km() - 2.0).abs() < 1e-12);

        // the induced pending prefix validates at the next epoch
        let hold = FleetDecision::idle(&report.next);
        assert!(validate_decision(&report.next, &hold, &tt()).unwrap().is_ok());
    }
}
