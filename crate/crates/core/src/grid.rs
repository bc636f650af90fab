use serde::{Deserialize, Serialize};

/// Partition of a frame into square tiles, edge tiles possibly smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
}

impl TileGrid {
    pub fn new(width: usize, height: usize, tile_size: usize) -> Self {
        assert!(tile_size > 0, "tile size must be positive");
        TileGrid { width, height, tile_size }
    }

    pub fn cols(&self) -> usize {
        self.width.div_ceil(self.tile_size)
    }

    pub fn rows(&self) -> usize {
        self.height.div_ceil(self.tile_size)
    }

    pub fn len(&self) -> usize {
        self.cols() * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel rectangle `(x0, y0, w, h)` of tile `index` (row-major).
    pub fn rect(&self, index: usize) -> (usize, usize, usize, usize) {
        let tx = index % self.cols();
        let ty = index / self.cols();
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, self.tile_size.min(self.width - x0), self.tile_size.min(self.height - y0))
    }

    #[inline]
    pub fn tile_of(&self, x: usize, y: usize) -> usize {
        (y / self.tile_size) * self.cols() + x / self.tile_size
    }
}

/// Row-major per-tile values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(cols: usize, rows: usize, value: T) -> Self {
        Grid { cols, rows, values: vec![value; cols * rows] }
    }
}

impl<T> Grid<T> {
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.values[row * self.cols + col]
    }

    pub fn matches(&self, grid: &TileGrid) -> bool {
        self.cols == grid.cols() && self.rows == grid.rows() && self.values.len() == grid.len()
    }
}
