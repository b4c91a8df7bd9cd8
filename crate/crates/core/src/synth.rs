//! Seeded synthetic request streams with concentrated demand ("hot cells"),
//! used in place of recorded trip data.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::demand::SECONDS_PER_DAY;
use crate::grid::{BoundingBox, CellGrid, CellId, Location};
use crate::model::{Request, RequestId};
use crate::policy::derive_seed;
use crate::travel::TravelTimeProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_m: f64,
    pub hot_cell_fraction: f64,
    /// Share of pickups inside hot cells.
    pub hot_demand_share: f64,
    /// Share of drop-offs inside hot cells.
    pub hot_destination_share: f64,
    pub requests_per_hour: f64,
    /// Daily service window, seconds after midnight.
    pub day_start_s: f64,
    pub day_end_s: f64,
    pub days: u32,
    pub speed_kmh: f64,
    pub base_fare: f64,
    pub fare_per_km: f64,
    pub fare_per_min: f64,
    pub min_trip_m: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            width_m: 4000.0,
            height_m: 4000.0,
            cell_m: 500.0,
            hot_cell_fraction: 0.2,
            hot_demand_share: 0.8,
            hot_destination_share: 0.2,
            requests_per_hour: 240.0,
            day_start_s: 6.5 * 3600.0,
            day_end_s: 9.5 * 3600.0,
            days: 15,
            speed_kmh: 20.0,
            base_fare: 2.5,
            fare_per_km: 1.5,
            fare_per_min: 0.5,
            min_trip_m: 500.0,
        }
    }
}

/// A generated city: hot cells are fixed by the world seed, each day's
/// requests by a seed derived from it.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub grid: CellGrid,
    pub hot_cells: Vec<CellId>,
    cold_cells: Vec<CellId>,
    seed: u64,
}

impl SyntheticWorld {
    pub fn new(config: SyntheticConfig, seed: u64) -> Self {
        let grid = CellGrid::square(BoundingBox::new(0.0, 0.0, config.width_m, config.height_m), config.cell_m);
        let n = grid.num_cells();
        let hot = ((n as f64 * config.hot_cell_fraction).round() as usize).clamp(0, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hot_cells: Vec<CellId> = sample(&mut rng, n, hot).into_iter().map(|c| c as CellId).collect();
        hot_cells.sort_unstable();
        let cold_cells = (0..n as CellId).filter(|c| hot_cells.binary_search(c).is_err()).collect();
        Self { config, grid, hot_cells, cold_cells, seed }
    }

    pub fn area(&self) -> BoundingBox {
        self.grid.area
    }

    pub fn travel_times(&self) -> TravelTimeProvider {
        TravelTimeProvider::straight_line(self.area(), self.config.speed_kmh)
    }

    fn point(&self, rng: &mut ChaCha8Rng, hot_share: f64) -> Location {
        let pool = if !self.hot_cells.is_empty() && (self.cold_cells.is_empty() || rng.random_bool(hot_share)) {
            &self.hot_cells
        } else {
            &self.cold_cells
        };
        let cell = pool[rng.random_range(0..pool.len())];
        let c = self.grid.corner(cell);
        let w = self.grid.cell_width_m.min(self.area().x_max - c.x);
        let h = self.grid.cell_height_m.min(self.area().y_max - c.y);
        Location::new(c.x + rng.random_range(0.0..w), c.y + rng.random_range(0.0..h))
    }

    /// Requests of day `day`, with absolute times (`day` days after time 0)
    /// and ids unique across days.
    pub fn day(&self, day: u32) -> Vec<Request> {
        let cfg = &self.config;
        let tt = self.travel_times();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, day as u64));
        let hours = (cfg.day_end_s - cfg.day_start_s).max(0.0) / 3600.0;
        let mean = cfg.requests_per_hour * hours;
        if !(mean > 0.0) {
            return Vec::new();
        }
        let n = Poisson::new(mean).expect("positive rate").sample(&mut rng) as usize;
        let offset = day as f64 * SECONDS_PER_DAY;
        let mut raw: Vec<(f64, Location, Location)> = (0..n)
            .map(|_| {
                let start = offset + rng.random_range(cfg.day_start_s..cfg.day_end_s);
                let origin = self.point(&mut rng, cfg.hot_demand_share);
                let mut destination = self.point(&mut rng, cfg.hot_destination_share);
                for _ in 0..100 {
                    if origin.distance_m(&destination) >= cfg.min_trip_m {
                        break;
                    }
                    destination = self.point(&mut rng, cfg.hot_destination_share);
                }
                (start, origin, destination)
            })
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        raw.into_iter()
            .enumerate()
            .map(|(i, (start, o, d))| {
                let leg = tt.leg(&o, &d);
                let fare = cfg.base_fare + cfg.fare_per_km * leg.km + cfg.fare_per_min * leg.seconds / 60.0;
                let fare = (fare * 100.0).round() / 100.0;
                Request::from_provider(RequestId(day as u64 * 1_000_000 + i as u64), o, d, start, fare, &tt)
            })
            .collect()
    }

    /// One request stream per day.
    pub fn days(&self) -> Vec<Vec<Request>> {
        (0..self.config.days).map(|d| self.day(d)).collect()
    }
}

/// All days of a synthetic world as one stream plus its travel times.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> (Vec<Request>, TravelTimeProvider) {
    let world = SyntheticWorld::new(config.clone(), seed);
    (world.days().into_iter().flatten().collect(), world.travel_times())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_gives_no_requests() {
        let cfg = SyntheticConfig { requests_per_hour: 0.0, days: 2, ..SyntheticConfig::default() };
        assert!(generate_synthetic(&cfg, 1).0.is_empty());
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = SyntheticConfig { days: 2, ..SyntheticConfig::default() };
        assert_eq!(generate_synthetic(&cfg, 4).0, generate_synthetic(&cfg, 4).0);
        assert_ne!(generate_synthetic(&cfg, 4).0, generate_synthetic(&cfg, 5).0);
    }

    #[test]
    fn demand_concentrates_in_hot_cells() {
        let cfg = SyntheticConfig { days: 3, ..SyntheticConfig::default() };
        let world = SyntheticWorld::new(cfg, 7);
        assert_eq!(world.hot_cells.len(), 13);
        let all: Vec<Request> = world.days().into_iter().flatten().collect();
        let hot = all.iter().filter(|r| world.hot_cells.contains(&world.grid.cell_of(&r.origin).unwrap())).count();
        let share = hot as f64 / all.len() as f64;
        assert!((share - 0.8).abs() < 0.03, "share {share}");
        assert!(all.iter().all(|r| r.origin.distance_m(&r.destination) >= 500.0));
        assert!(all.iter().all(|r| r.reward > 0.0 && r.arrival_time > r.start_time));
        assert!(all.windows(2).all(|w| w[0].start_time <= w[1].start_time || w[0].id.0 / 1_000_000 != w[1].id.0 / 1_000_000));
    }
}
