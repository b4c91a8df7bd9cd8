//! Empirical request distribution per rebalancing cell and time-of-day bin,
//! and Poisson sampling of artificial requests from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::DemandError;
use crate::grid::{CellId, Location, RebalancingGrid};
use crate::model::{Request, RequestId};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Artificial request ids live above this offset so they never collide with
/// ids from request files.
pub const ARTIFICIAL_ID_BASE: u64 = 1 << 62;

/// One observed request, stored relative to its cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestTemplate {
    pub origin_offset: Location,
    pub dest_cell: CellId,
    pub dest_offset: Location,
    pub duration_s: f64,
    pub reward: f64,
    pub distance_km: f64,
}

/// Aggregates of the distribution over a time window for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowSummary {
    /// Expected number of requests starting in the cell.
    pub starts: f64,
    /// Expected number of requests ending in the cell (by arrival time).
    pub arrivals: f64,
    /// Expected total reward of the starting requests.
    pub reward: f64,
    /// Means over the starting requests (0 when none are expected).
    pub mean_reward: f64,
    pub mean_duration_s: f64,
    pub mean_distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDistribution {
    pub grid: RebalancingGrid,
    pub bin_width_s: f64,
    /// Number of days the counts were collected over.
    pub days: f64,
    bins_per_day: usize,
    /// Observed requests per `(origin cell, start bin)`.
    templates: Vec<Vec<RequestTemplate>>,
    /// Observed drop-offs per `(destination cell, arrival bin)`.
    dropoffs: Vec<u32>,
    /// Sums of reward, duration and distance per `(origin cell, start bin)`.
    sums: Vec<[f64; 3]>,
    /// Mean origin of all requests per cell.
    mean_origin: Vec<Option<Location>>,
    /// Requests skipped during calibration because they left the grid.
    pub rejected: usize,
}

/// A piece of a time window falling inside a single time-of-day bin.
#[derive(Debug, Clone, Copy)]
struct Segment {
    bin: usize,
    start: f64,
    end: f64,
    fraction: f64,
}

impl RequestDistribution {
    fn empty(grid: RebalancingGrid, bin_width_s: f64, days: f64) -> Self {
        let bins_per_day = (SECONDS_PER_DAY / bin_width_s).ceil() as usize;
        let slots = grid.num_cells() * bins_per_day;
        Self {
            mean_origin: vec![None; grid.num_cells()],
            grid,
            bin_width_s,
            days,
            bins_per_day,
            templates: vec![Vec::new(); slots],
            dropoffs: vec![0; slots],
            sums: vec![[0.0; 3]; slots],
            rejected: 0,
        }
    }

    pub fn bins_per_day(&self) -> usize {
        self.bins_per_day
    }

    fn slot(&self, cell: CellId, bin: usize) -> usize {
        cell as usize * self.bins_per_day + bin
    }

    pub fn bin_of(&self, t: f64) -> usize {
        ((t.rem_euclid(SECONDS_PER_DAY) / self.bin_width_s) as usize).min(self.bins_per_day - 1)
    }

    /// Expected requests per day starting in `(cell, bin)`.
    pub fn rate(&self, cell: CellId, bin: usize) -> f64 {
        self.templates[self.slot(cell, bin)].len() as f64 / self.days
    }

    pub fn templates(&self, cell: CellId, bin: usize) -> &[RequestTemplate] {
        &self.templates[self.slot(cell, bin)]
    }

    pub fn mean_origin(&self, cell: CellId) -> Option<Location> {
        self.mean_origin[cell as usize]
    }

    pub fn total_observed(&self) -> usize {
        self.templates.iter().map(Vec::len).sum()
    }

    fn segments(&self, t_lo: f64, t_hi: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut t = t_lo;
        while t < t_hi {
            let tod = t.rem_euclid(SECONDS_PER_DAY);
            let bin = self.bin_of(t);
            let bin_start = bin as f64 * self.bin_width_s;
            let bin_end = ((bin + 1) as f64 * self.bin_width_s).min(SECONDS_PER_DAY);
            let end = t_hi.min(t + (bin_end - tod));
            if end <= t {
                break;
            }
            out.push(Segment { bin, start: t, end, fraction: (end - t) / (bin_end - bin_start) });
            t = end;
        }
        out
    }

    /// Expected request counts and attributes for `cell` over `[t_lo, t_hi)`.
    pub fn window(&self, cell: CellId, t_lo: f64, t_hi: f64) -> WindowSummary {
        let mut s = WindowSummary::default();
        let (mut duration, mut distance) = (0.0, 0.0);
        for seg in self.segments(t_lo, t_hi) {
            let scale = seg.fraction / self.days;
            let slot = self.slot(cell, seg.bin);
            let [reward, dur, dist] = self.sums[slot];
            s.starts += scale * self.templates[slot].len() as f64;
            s.reward += scale * reward;
            duration += scale * dur;
            distance += scale * dist;
            s.arrivals += scale * self.dropoffs[slot] as f64;
        }
        if s.starts > 0.0 {
            s.mean_reward = s.reward / s.starts;
            s.mean_duration_s = duration / s.starts;
            s.mean_distance_km = distance / s.starts;
        }
        s
    }
}

fn insert(dist: &mut RequestDistribution, r: &Request) {
    let (Some(oc), Some(dc)) = (dist.grid.cell_of(&r.origin), dist.grid.cell_of(&r.destination)) else {
        dist.rejected += 1;
        return;
    };
    let o_corner = dist.grid.corner(oc);
    let d_corner = dist.grid.corner(dc);
    let tpl = RequestTemplate {
        origin_offset: Location::new(r.origin.x - o_corner.x, r.origin.y - o_corner.y),
        dest_cell: dc,
        dest_offset: Location::new(r.destination.x - d_corner.x, r.destination.y - d_corner.y),
        duration_s: r.duration(),
        reward: r.reward,
        distance_km: r.distance_km,
    };
    let start_slot = dist.slot(oc, dist.bin_of(r.start_time));
    let arrival_slot = dist.slot(dc, dist.bin_of(r.arrival_time));
    dist.templates[start_slot].push(tpl);
    let sums = &mut dist.sums[start_slot];
    sums[0] += tpl.reward;
    sums[1] += tpl.duration_s;
    sums[2] += tpl.distance_km;
    dist.dropoffs[arrival_slot] += 1;
}

fn finish(mut dist: RequestDistribution) -> Result<RequestDistribution, DemandError> {
    if dist.total_observed() == 0 {
        return Err(DemandError::AllRejected(dist.rejected));
    }
    if dist.rejected > 0 {
        log::warn!("calibration skipped {} requests outside the grid", dist.rejected);
    }
    for cell in 0..dist.grid.num_cells() as CellId {
        let corner = dist.grid.corner(cell);
        let (mut n, mut x, mut y) = (0usize, 0.0, 0.0);
        for bin in 0..dist.bins_per_day {
            for tpl in dist.templates(cell, bin) {
                n += 1;
                x += corner.x + tpl.origin_offset.x;
                y += corner.y + tpl.origin_offset.y;
            }
        }
        dist.mean_origin[cell as usize] = (n > 0).then(|| Location::new(x / n as f64, y / n as f64));
    }
    Ok(dist)
}

fn check_bin_width(bin_width_s: f64) -> Result<(), DemandError> {
    if bin_width_s > 0.0 && bin_width_s.is_finite() {
        Ok(())
    } else {
        Err(DemandError::BinWidth(bin_width_s))
    }
}

/// Calibrates from a flat list of requests with absolute times; the number
/// of days is the span of calendar days touched by the start times.
pub fn calibrate_distribution(
    requests: &[Request],
    grid: &RebalancingGrid,
    bin_width_s: f64,
) -> Result<RequestDistribution, DemandError> {
    check_bin_width(bin_width_s)?;
    if requests.is_empty() {
        return Err(DemandError::Empty);
    }
    let day = |r: &Request| (r.start_time / SECONDS_PER_DAY).floor();
    let first = requests.iter().map(day).fold(f64::INFINITY, f64::min);
    let last = requests.iter().map(day).fold(f64::NEG_INFINITY, f64::max);
    let mut dist = RequestDistribution::empty(grid.clone(), bin_width_s, last - first + 1.0);
    for r in requests {
        insert(&mut dist, r);
    }
    finish(dist)
}

/// Calibrates from one request stream per day, each with times measured
/// from that day's midnight.
pub fn calibrate_from_days(
    days: &[Vec<Request>],
    grid: &RebalancingGrid,
    bin_width_s: f64,
) -> Result<RequestDistribution, DemandError> {
    check_bin_width(bin_width_s)?;
    if days.iter().all(Vec::is_empty) {
        return Err(DemandError::Empty);
    }
    let mut dist = RequestDistribution::empty(grid.clone(), bin_width_s, days.len() as f64);
    for day in days {
        for r in day {
            insert(&mut dist, r);
        }
    }
    finish(dist)
}

/// Draws one scenario of future requests starting in `[t_lo, t_hi)`.
///
/// Per cell and time bin overlapping the window, the count is Poisson with
/// the bin's daily rate scaled by the overlap; each request copies a
/// template observed in that bin and starts uniformly inside the overlap.
pub fn sample_artificial_requests(dist: &RequestDistribution, t_lo: f64, t_hi: f64, seed: u64) -> Vec<Request> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if !(t_hi > t_lo) {
        return out;
    }
    let segments = dist.segments(t_lo, t_hi);
    for cell in 0..dist.grid.num_cells() as CellId {
        let corner = dist.grid.corner(cell);
        for seg in &segments {
            let templates = dist.templates(cell, seg.bin);
            let lambda = templates.len() as f64 / dist.days * seg.fraction;
            if lambda <= 0.0 {
                continue;
            }
            let n = Poisson::new(lambda).expect("positive finite rate").sample(&mut rng) as u64;
            for _ in 0..n {
                let tpl = &templates[rng.random_range(0..templates.len())];
                let start = rng.random_range(seg.start..seg.end);
                let d_corner = dist.grid.corner(tpl.dest_cell);
                out.push(Request {
                    id: RequestId(ARTIFICIAL_ID_BASE + out.len() as u64),
                    origin: Location::new(corner.x + tpl.origin_offset.x, corner.y + tpl.origin_offset.y),
                    destination: Location::new(d_corner.x + tpl.dest_offset.x, d_corner.y + tpl.dest_offset.y),
                    start_time: start,
                    arrival_time: start + tpl.duration_s,
                    reward: tpl.reward,
                    distance_km: tpl.distance_km,
                });
            }
        }
    }
    out
}
