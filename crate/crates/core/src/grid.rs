//! Planar operating area and the rectangular cell grids laid over it
//! (travel-time lookup cells, rebalancing cells).

use serde::{Deserialize, Serialize};

/// A point in the operating area, in meters east/north of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Straight-line distance in meters.
    pub fn distance_m(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point reached after travelling `fraction` of the way to `to`.
    pub fn lerp(&self, to: &Location, fraction: f64) -> Location {
        let f = fraction.clamp(0.0, 1.0);
        Location::new(self.x + (to.x - self.x) * f, self.y + (to.y - self.y) * f)
    }
}

/// Axis-aligned operating area `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn contains(&self, l: &Location) -> bool {
        l.is_finite() && l.x >= self.x_min && l.x < self.x_max && l.y >= self.y_min && l.y < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

pub type CellId = u32;

/// Equally sized rectangular cells covering a bounding box. Cell membership
/// uses half-open intervals, so a point on a shared edge belongs to the cell
/// to its right/top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub area: BoundingBox,
    pub cell_width_m: f64,
    pub cell_height_m: f64,
    cols: u32,
    rows: u32,
}

/// The grid used for rebalancing decisions and demand calibration.
pub type RebalancingGrid = CellGrid;

impl CellGrid {
    pub fn new(area: BoundingBox, cell_width_m: f64, cell_height_m: f64) -> Self {
        assert!(cell_width_m > 0.0 && cell_height_m > 0.0, "cell size must be positive");
        assert!(area.width() > 0.0 && area.height() > 0.0, "empty operating area");
        let cols = (area.width() / cell_width_m).ceil().max(1.0) as u32;
        let rows = (area.height() / cell_height_m).ceil().max(1.0) as u32;
        Self { area, cell_width_m, cell_height_m, cols, rows }
    }

    pub fn square(area: BoundingBox, cell_m: f64) -> Self {
        Self::new(area, cell_m, cell_m)
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn num_cells(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    pub fn cell_of(&self, l: &Location) -> Option<CellId> {
        if !self.area.contains(l) {
            return None;
        }
        let col = (((l.x - self.area.x_min) / self.cell_width_m).floor() as u32).min(self.cols - 1);
        let row = (((l.y - self.area.y_min) / self.cell_height_m).floor() as u32).min(self.rows - 1);
        Some(row * self.cols + col)
    }

    /// Cell of `l`, snapping points outside the area to the nearest border cell.
    pub fn cell_of_clamped(&self, l: &Location) -> CellId {
        let cx = ((l.x - self.area.x_min) / self.cell_width_m).floor();
        let cy = ((l.y - self.area.y_min) / self.cell_height_m).floor();
        let col = if cx.is_finite() { cx.clamp(0.0, (self.cols - 1) as f64) as u32 } else { 0 };
        let row = if cy.is_finite() { cy.clamp(0.0, (self.rows - 1) as f64) as u32 } else { 0 };
        row * self.cols + col
    }

    /// Lower-left corner of a cell.
    pub fn corner(&self, cell: CellId) -> Location {
        let col = cell % self.cols;
        let row = cell / self.cols;
        Location::new(
            self.area.x_min + col as f64 * self.cell_width_m,
            self.area.y_min + row as f64 * self.cell_height_m,
        )
    }

    pub fn center(&self, cell: CellId) -> Location {
        let c = self.corner(cell);
        Location::new(c.x + 0.5 * self.cell_width_m, c.y + 0.5 * self.cell_height_m)
    }
}
