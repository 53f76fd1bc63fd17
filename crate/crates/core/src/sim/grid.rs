use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }

    pub fn offset(self, facing: Facing) -> Cell {
        let (dr, dc) = facing.delta();
        Cell::new(self.row + dr, self.col + dc)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Facing {
    N,
    E,
    S,
    W,
}

impl Facing {
    pub const ALL: [Facing; 4] = [Facing::N, Facing::E, Facing::S, Facing::W];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Facing::N => (-1, 0),
            Facing::E => (0, 1),
            Facing::S => (1, 0),
            Facing::W => (0, -1),
        }
    }

    pub fn left(self) -> Facing {
        match self {
            Facing::N => Facing::W,
            Facing::W => Facing::S,
            Facing::S => Facing::E,
            Facing::E => Facing::N,
        }
    }

    pub fn right(self) -> Facing {
        match self {
            Facing::N => Facing::E,
            Facing::E => Facing::S,
            Facing::S => Facing::W,
            Facing::W => Facing::N,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub facing: Facing,
}

impl Pose {
    pub fn new(cell: Cell, facing: Facing) -> Self {
        Self { cell, facing }
    }

    pub fn faced_cell(self) -> Cell {
        self.cell.offset(self.facing)
    }
}

/// Occupancy grid: each cell is walkable or blocked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    width: i32,
    height: i32,
    walkable: Vec<bool>,
}

impl Grid {
    /// Builds a grid from rows of `'.'` (walkable) and `'#'` (blocked).
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Grid, String> {
        let height = rows.len();
        if height == 0 {
            return Err("grid has no rows".into());
        }
        let width = rows[0].as_ref().chars().count();
        if width == 0 {
            return Err("grid has empty rows".into());
        }
        let mut walkable = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(format!("row {r} has length {} instead of {width}", row.chars().count()));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '.' => walkable.push(true),
                    '#' => walkable.push(false),
                    other => return Err(format!("unexpected {other:?} at row {r}, col {c}")),
                }
            }
        }
        Ok(Grid {
            width: width as i32,
            height: height as i32,
            walkable,
        })
    }

    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| if self.is_walkable(Cell::new(r, c)) { '.' } else { '#' })
                    .collect()
            })
            .collect()
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.walkable.len()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row >= 0 && cell.col >= 0 && cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.in_bounds(cell)
            .then(|| (cell.row * self.width + cell.col) as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index as i32 / self.width, index as i32 % self.width)
    }

    pub fn is_walkable(&self, cell: Cell) -> bool {
        self.index(cell).is_some_and(|i| self.walkable[i])
    }

    pub fn walkable_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.walkable.len())
            .filter(|&i| self.walkable[i])
            .map(|i| self.cell_at(i))
    }

    /// Walkable 4-neighbours in N, E, S, W order.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        Facing::ALL
            .into_iter()
            .map(move |f| cell.offset(f))
            .filter(|&c| self.is_walkable(c))
    }

    /// True when no blocked cell lies strictly between `from` and `to` on the
    /// Bresenham line joining them. The endpoints themselves may be blocked.
    pub fn line_of_sight(&self, from: Cell, to: Cell) -> bool {
        let (mut r, mut c) = (from.row, from.col);
        let dr = (to.row - from.row).abs();
        let dc = (to.col - from.col).abs();
        let sr = if to.row > from.row { 1 } else { -1 };
        let sc = if to.col > from.col { 1 } else { -1 };
        let mut err = dc - dr;
        loop {
            if (r, c) == (to.row, to.col) {
                return true;
            }
            if (r, c) != (from.row, from.col) && !self.is_walkable(Cell::new(r, c)) {
                return false;
            }
            let e2 = 2 * err;
            if e2 > -dr {
                err -= dr;
                c += sc;
            }
            if e2 < dc {
                err += dc;
                r += sr;
            }
        }
    }

    pub fn pose_index(&self, pose: Pose) -> Option<usize> {
        self.index(pose.cell).map(|i| i * 4 + pose.facing.index())
    }

    pub fn pose_count(&self) -> usize {
        self.walkable.len() * 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let g = Grid::from_rows(&["###", "#.#", "###"]).unwrap();
        assert_eq!((g.width(), g.height()), (3, 3));
        assert!(g.is_walkable(Cell::new(1, 1)));
        assert!(!g.is_walkable(Cell::new(0, 1)));
        assert!(!g.is_walkable(Cell::new(-1, 1)));
        assert_eq!(g.to_rows(), vec!["###", "#.#", "###"]);
        assert!(Grid::from_rows(&["##", "#"]).is_err());
        assert!(Grid::from_rows(&["#x"]).is_err());
    }

    #[test]
    fn line_of_sight_blocked_by_interior_walls() {
        let g = Grid::from_rows(&[".....", "..#..", "....."]).unwrap();
        assert!(g.line_of_sight(Cell::new(1, 0), Cell::new(1, 1)));
        assert!(!g.line_of_sight(Cell::new(1, 0), Cell::new(1, 4)));
        // blocked endpoint is still visible
        assert!(g.line_of_sight(Cell::new(1, 0), Cell::new(1, 2)));
        assert!(g.line_of_sight(Cell::new(0, 0), Cell::new(0, 4)));
        assert!(g.line_of_sight(Cell::new(2, 2), Cell::new(2, 2)));
    }

    #[test]
    fn rotations_compose() {
        for f in Facing::ALL {
            assert_eq!(f.left().right(), f);
            assert_eq!(f.left().left().left().left(), f);
        }
    }
}
