//! Uniform cell-centred grids and fluid/solid cell masks.

use serde::{Deserialize, Serialize};

use crate::math::{Rect, Vec2};

/// A uniform Cartesian grid of `nx × ny` cells covering `extent`.
///
/// Cells are addressed `(i, j)` with `i` along x; flat storage is row-major
/// with `i` fastest (`idx = j * nx + i`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub extent: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl StructuredGrid {
    pub fn new(extent: Rect, nx: usize, ny: usize) -> Self {
        Self { extent, nx, ny }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.extent.width() / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.extent.height() / self.ny as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.extent.x_min + (i as f64 + 0.5) * self.dx(),
            self.extent.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Half-open index range of cells whose centres fall inside `r`, per axis.
    pub fn cells_within(&self, r: &Rect) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let xs = (0..self.nx).filter(|&i| {
            let c = self.cell_center(i, 0).x;
            c >= r.x_min && c <= r.x_max
        });
        let ys = (0..self.ny).filter(|&j| {
            let c = self.cell_center(0, j).y;
            c >= r.y_min && c <= r.y_max
        });
        (span(xs), span(ys))
    }
}

fn span(mut it: impl Iterator<Item = usize>) -> std::ops::Range<usize> {
    match it.next() {
        None => 0..0,
        Some(first) => {
            let last = it.last().unwrap_or(first);
            first..last + 1
        }
    }
}

/// Classification of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Fluid,
    /// Solid cell owned by the fin with this index.
    Fin(u16),
}

impl CellKind {
    #[inline]
    pub fn is_solid(self) -> bool {
        matches!(self, CellKind::Fin(_))
    }

    /// `0` for fluid, `id + 1` for fins; used by the exporters.
    pub fn code(self) -> u32 {
        match self {
            CellKind::Fluid => 0,
            CellKind::Fin(id) => id as u32 + 1,
        }
    }
}

/// Per-cell fluid/fin classification on a [`StructuredGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMask {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<CellKind>,
}

impl CellMask {
    pub fn all_fluid(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            cells: vec![CellKind::Fluid; nx * ny],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> CellKind {
        self.cells[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, kind: CellKind) {
        self.cells[j * self.nx + i] = kind;
    }

    #[inline]
    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_solid()
    }

    pub fn solid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_solid()).count()
    }

    pub fn is_all_fluid(&self) -> bool {
        self.solid_count() == 0
    }
}
