//! Travel-time lookup between locations.
//!
//! Cross-cell pairs are answered from a precomputed `(cell, cell)` table;
//! same-cell pairs (and cross-cell pairs missing from the table) use the
//! straight-line distance driven at a fallback speed. A provider without a
//! table answers every pair with the straight-line model, which is a metric
//! and is what the synthetic worlds use.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::grid::{BoundingBox, CellGrid, CellId, Location};

/// Driving time and distance of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Leg {
    pub seconds: f64,
    pub km: f64,
}

impl Leg {
    pub const ZERO: Leg = Leg { seconds: 0.0, km: 0.0 };
}

pub const DEFAULT_LOOKUP_CELL_M: f64 = 500.0;
pub const DEFAULT_FALLBACK_KMH: f64 = 20.0;

#[derive(Debug)]
pub struct TravelTimeProvider {
    grid: CellGrid,
    fallback_speed_kmh: f64,
    table: Option<HashMap<(CellId, CellId), Leg>>,
    missing: AtomicU64,
}

impl Clone for TravelTimeProvider {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            fallback_speed_kmh: self.fallback_speed_kmh,
            table: self.table.clone(),
            missing: AtomicU64::new(self.missing.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for TravelTimeProvider {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.fallback_speed_kmh == other.fallback_speed_kmh
            && self.table == other.table
    }
}

impl TravelTimeProvider {
    /// Straight-line distance at constant speed for every pair.
    pub fn straight_line(area: BoundingBox, speed_kmh: f64) -> Self {
        Self::straight_line_on(CellGrid::square(area, DEFAULT_LOOKUP_CELL_M), speed_kmh)
    }

    /// Straight-line provider keeping `grid` as its lookup grid.
    pub fn straight_line_on(grid: CellGrid, speed_kmh: f64) -> Self {
        assert!(speed_kmh > 0.0, "speed must be positive");
        Self { grid, fallback_speed_kmh: speed_kmh, table: None, missing: AtomicU64::new(0) }
    }

    /// Table-backed provider over a lookup grid.
    pub fn with_table(
        grid: CellGrid,
        fallback_speed_kmh: f64,
        entries: impl IntoIterator<Item = ((CellId, CellId), Leg)>,
    ) -> Self {
        assert!(fallback_speed_kmh > 0.0, "speed must be positive");
        Self {
            grid,
            fallback_speed_kmh,
            table: Some(entries.into_iter().collect()),
            missing: AtomicU64::new(0),
        }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn area(&self) -> BoundingBox {
        self.grid.area
    }

    pub fn fallback_speed_kmh(&self) -> f64 {
        self.fallback_speed_kmh
    }

    pub fn has_table(&self) -> bool {
        self.table.is_some()
    }

    /// Table entries in deterministic (sorted) order.
    pub fn entries(&self) -> Vec<((CellId, CellId), Leg)> {
        let mut out: Vec<_> = self
            .table
            .iter()
            .flat_map(|t| t.iter().map(|(k, v)| (*k, *v)))
            .collect();
        out.sort_by_key(|(k, _)| *k);
        out
    }

    /// Number of cross-cell lookups that fell back to the straight-line model
    /// because the table had no entry.
    pub fn missing_lookups(&self) -> u64 {
        self.missing.load(Ordering::Relaxed)
    }

    pub fn straight_line_leg(&self, from: &Location, to: &Location) -> Leg {
        let km = from.distance_m(to) / 1000.0;
        Leg { seconds: km / self.fallback_speed_kmh * 3600.0, km }
    }

    /// Time and distance from `from` to `to`.
    pub fn leg(&self, from: &Location, to: &Location) -> Leg {
        if from == to {
            return Leg::ZERO;
        }
        let Some(table) = &self.table else {
            return self.straight_line_leg(from, to);
        };
        let a = self.grid.cell_of_clamped(from);
        let b = self.grid.cell_of_clamped(to);
        if a == b {
            return self.straight_line_leg(from, to);
        }
        match table.get(&(a, b)) {
            Some(leg) => *leg,
            None => {
                self.missing.fetch_add(1, Ordering::Relaxed);
                self.straight_line_leg(from, to)
            }
        }
    }

    pub fn seconds(&self, from: &Location, to: &Location) -> f64 {
        self.leg(from, to).seconds
    }
}
