//! Directional DAGs over an `H×W` grid of image units.
//!
//! Each [`Direction`] is handled in a local frame in which the sweep runs
//! from the top-left corner to the bottom-right one (the `SE` layout). The
//! other three directions reflect rows and/or columns into that frame, so
//! canonical orders are plain row-major orders in local coordinates.
//!
//! Dense predecessor sets are the dominance rectangles of the local frame
//! and are never stored; they are enumerated on demand.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Sweep from the top-left corner towards the bottom-right.
    SE,
    /// Sweep from the top-right corner towards the bottom-left.
    SW,
    /// Sweep from the bottom-left corner towards the top-right.
    NE,
    /// Sweep from the bottom-right corner towards the top-left.
    NW,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::SE, Direction::SW, Direction::NE, Direction::NW];

    /// (rows reflected, cols reflected) relative to the SE frame.
    pub fn reflection(self) -> (bool, bool) {
        match self {
            Direction::SE => (false, false),
            Direction::SW => (false, true),
            Direction::NE => (true, false),
            Direction::NW => (true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SE => "se",
            Direction::SW => "sw",
            Direction::NE => "ne",
            Direction::NW => "nw",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" => Ok(Direction::SE),
            "sw" => Ok(Direction::SW),
            "ne" => Ok(Direction::NE),
            "nw" => Ok(Direction::NW),
            other => Err(Error::invalid(format!("unknown direction `{other}`"))),
        }
    }
}

/// Parses `all` or a comma-separated list such as `se,nw`.
pub fn parse_directions(s: &str) -> Result<Vec<Direction>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Direction::ALL.to_vec());
    }
    let mut dirs = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let d: Direction = part.parse()?;
        if dirs.contains(&d) {
            return Err(Error::invalid(format!("direction `{d}` listed twice")));
        }
        dirs.push(d);
    }
    if dirs.is_empty() {
        return Err(Error::invalid("empty direction list"));
    }
    dirs.sort();
    Ok(dirs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("grid dims must be positive, got {rows}x{cols}")));
        }
        Ok(GridDims { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, v: VertexId) -> usize {
        v.row * self.cols + v.col
    }

    pub fn vertex(&self, index: usize) -> VertexId {
        VertexId { row: index / self.cols, col: index % self.cols }
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.len()).map(|i| self.vertex(i))
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Grid position of one image unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub row: usize,
    pub col: usize,
}

impl VertexId {
    pub const fn new(row: usize, col: usize) -> Self {
        VertexId { row, col }
    }
}

/// Maps between global grid coordinates and a direction's local SE frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Frame {
    dims: GridDims,
    flip_rows: bool,
    flip_cols: bool,
}

impl Frame {
    pub(crate) fn new(dims: GridDims, dir: Direction) -> Self {
        let (flip_rows, flip_cols) = dir.reflection();
        Frame { dims, flip_rows, flip_cols }
    }

    /// Global flat index of local `(i, j)`. The mapping is an involution.
    #[inline]
    pub(crate) fn global(&self, i: usize, j: usize) -> usize {
        let r = if self.flip_rows { self.dims.rows - 1 - i } else { i };
        let c = if self.flip_cols { self.dims.cols - 1 - j } else { j };
        r * self.dims.cols + c
    }

    #[inline]
    pub(crate) fn local(&self, v: VertexId) -> (usize, usize) {
        let i = if self.flip_rows { self.dims.rows - 1 - v.row } else { v.row };
        let j = if self.flip_cols { self.dims.cols - 1 - v.col } else { v.col };
        (i, j)
    }
}

/// Collects `vs` sorted in the canonical order of `dir`.
fn canonical_sort(frame: &Frame, dims: GridDims, vs: &mut [VertexId]) {
    vs.sort_by_key(|&v| {
        let (i, j) = frame.local(v);
        i * dims.cols + j
    });
}

/// Adjacent-predecessor DAG: every unit depends on its (up to) three
/// neighbours that precede it in the sweep.
#[derive(Clone, Debug)]
pub struct PlainDag {
    dims: GridDims,
    direction: Direction,
    preds: Vec<Vec<VertexId>>,
    topo: Vec<usize>,
}

pub fn build_plain_dag(dims: GridDims, dir: Direction) -> Result<PlainDag> {
    let dims = GridDims::new(dims.rows, dims.cols)?;
    let frame = Frame::new(dims, dir);
    let mut preds = vec![Vec::new(); dims.len()];
    for i in 0..dims.rows {
        for j in 0..dims.cols {
            let v = frame.global(i, j);
            let list = &mut preds[v];
            if i > 0 && j > 0 {
                list.push(dims.vertex(frame.global(i - 1, j - 1)));
            }
            if i > 0 {
                list.push(dims.vertex(frame.global(i - 1, j)));
            }
            if j > 0 {
                list.push(dims.vertex(frame.global(i, j - 1)));
            }
        }
    }
    let topo = canonical_topo(dims, dir);
    Ok(PlainDag { dims, direction: dir, preds, topo })
}

impl PlainDag {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn preds(&self, v: VertexId) -> &[VertexId] {
        &self.preds[self.dims.index(v)]
    }

    pub(crate) fn preds_by_index(&self, v: usize) -> &[VertexId] {
        &self.preds[v]
    }

    /// Canonical vertex order (global flat indices).
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    /// Directed edges `(pred, succ)`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.dims
            .vertices()
            .flat_map(move |v| self.preds(v).iter().map(move |&u| (u, v)))
    }
}

fn canonical_topo(dims: GridDims, dir: Direction) -> Vec<usize> {
    let frame = Frame::new(dims, dir);
    let mut topo = Vec::with_capacity(dims.len());
    for i in 0..dims.rows {
        for j in 0..dims.cols {
            topo.push(frame.global(i, j));
        }
    }
    topo
}

/// Dense DAG: every unit depends on all units in its dominance rectangle,
/// i.e. the transitive closure of [`PlainDag`].
#[derive(Clone, Debug)]
pub struct DenseDag {
    dims: GridDims,
    direction: Direction,
    frame: Frame,
    topo: Vec<usize>,
}

pub fn build_dense_dag(dims: GridDims, dir: Direction) -> Result<DenseDag> {
    let dims = GridDims::new(dims.rows, dims.cols)?;
    Ok(DenseDag {
        dims,
        direction: dir,
        frame: Frame::new(dims, dir),
        topo: canonical_topo(dims, dir),
    })
}

impl DenseDag {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Canonical vertex order (global flat indices).
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    pub fn pred_count(&self, v: VertexId) -> usize {
        let (i, j) = self.frame.local(v);
        (i + 1) * (j + 1) - 1
    }

    /// Dense predecessors of `v` in canonical order, as global flat indices.
    pub fn pred_indices(&self, v: VertexId) -> DensePreds {
        let (i, j) = self.frame.local(v);
        DensePreds { frame: self.frame, last_i: i, last_j: j, i: 0, j: 0 }
    }

    pub fn preds(&self, v: VertexId) -> Vec<VertexId> {
        self.pred_indices(v).map(|g| self.dims.vertex(g)).collect()
    }
}

/// Iterator over a dominance rectangle in local row-major order, excluding
/// its bottom-right corner.
#[derive(Clone, Debug)]
pub struct DensePreds {
    frame: Frame,
    last_i: usize,
    last_j: usize,
    i: usize,
    j: usize,
}

impl Iterator for DensePreds {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.i > self.last_i || (self.i == self.last_i && self.j >= self.last_j) {
            return None;
        }
        let g = self.frame.global(self.i, self.j);
        self.j += 1;
        if self.j > self.last_j {
            self.j = 0;
            self.i += 1;
        }
        Some(g)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let total = (self.last_i + 1) * (self.last_j + 1) - 1;
        let done = self.i * (self.last_j + 1) + self.j;
        let left = total.saturating_sub(done);
        (left, Some(left))
    }
}

impl ExactSizeIterator for DensePreds {}

/// Anti-diagonal levels: every predecessor of a vertex lies in an earlier
/// level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WavefrontSchedule {
    pub levels: Vec<Vec<VertexId>>,
}

pub fn wavefronts(dag: &DenseDag) -> WavefrontSchedule {
    let dims = dag.dims;
    let mut levels = vec![Vec::new(); dims.rows + dims.cols - 1];
    for i in 0..dims.rows {
        for j in 0..dims.cols {
            levels[i + j].push(dims.vertex(dag.frame.global(i, j)));
        }
    }
    WavefrontSchedule { levels }
}

/// Sorts a set of vertices into the canonical order of `dir`.
pub fn canonical_order(dims: GridDims, dir: Direction, vs: &mut [VertexId]) {
    canonical_sort(&Frame::new(dims, dir), dims, vs);
}
