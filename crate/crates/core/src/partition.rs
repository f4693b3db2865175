//! K-ary hierarchical partition of `[0,1]^d` into axis-aligned boxes.
//!
//! A cell at depth `h` is split along axis `h mod d` into `K` equal-width
//! children. Each cell carries `S` representative points laid out along that
//! same axis (the centres of `S` equal sub-intervals) and centred in every
//! other coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Position of a node in [`PartitionTree::nodes`].
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Leaf,
    Expanded,
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn unit(d: usize) -> Self {
        Self {
            low: vec![0.0; d],
            high: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.high[axis] - self.low[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Strict interior membership.
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.low.iter().zip(&self.high))
            .all(|(v, (l, h))| l < v && v < h)
    }

    /// Volume of the intersection with `other`.
    pub fn overlap(&self, other: &Bounds) -> f64 {
        (0..self.dim())
            .map(|a| (self.high[a].min(other.high[a]) - self.low[a].max(other.low[a])).max(0.0))
            .product()
    }
}

/// `S` representative points of `bounds`, spread along `axis`.
pub fn representatives_along(bounds: &Bounds, s: usize, axis: usize) -> Matrix {
    let centre = bounds.center();
    let w = bounds.width(axis) / s as f64;
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|j| {
            let mut p = centre.clone();
            p[axis] = bounds.low[axis] + (j as f64 + 0.5) * w;
            p
        })
        .collect();
    Matrix::from_rows(&rows).expect("rows have equal length")
}

/// Representative points of a root-level box: `S` sub-interval centres along axis 0.
pub fn representatives(bounds: &Bounds, s: usize) -> Matrix {
    representatives_along(bounds, s.max(1), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub depth: usize,
    pub index: u64,
    pub bounds: Bounds,
    /// `S x d`; rows are the representative points.
    pub reps: Matrix,
    pub draws: usize,
    pub status: CellStatus,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl Cell {
    pub fn reps(&self) -> &Matrix {
        &self.reps
    }

    pub fn is_leaf(&self) -> bool {
        self.status == CellStatus::Leaf
    }
}

/// `delta(h) = c * rho^h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterSchedule {
    pub c: f64,
    pub rho: f64,
}

impl DiameterSchedule {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("schedule c must be > 0, got {c}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule rho must be in (0,1), got {rho}"
            )));
        }
        Ok(Self { c, rho })
    }

    pub fn delta(&self, h: usize) -> f64 {
        self.c * self.rho.powi(h as i32)
    }
}

impl Default for DiameterSchedule {
    fn default() -> Self {
        Self { c: 14.0, rho: 0.5 }
    }
}

/// Adaptively grown K-ary tree of cells.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    k: usize,
    s: usize,
    d: usize,
    nodes: Vec<Cell>,
    /// Current leaves in creation order.
    leaves: Vec<NodeId>,
}

impl PartitionTree {
    /// Tree holding only the root `(0, 0)` covering `[0,1]^d`.
    pub fn new(k: usize, s: usize, d: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "branching factor K must be >= 2, got {k}"
            )));
        }
        if s < 1 || d < 1 {
            return Err(Error::InvalidParameter("S and d must be >= 1".into()));
        }
        let bounds = Bounds::unit(d);
        let root = Cell {
            depth: 0,
            index: 0,
            reps: representatives_along(&bounds, s, 0),
            bounds,
            draws: 0,
            status: CellStatus::Leaf,
            parent: None,
            children: Vec::new(),
        };
        Ok(Self {
            k,
            s,
            d,
            nodes: vec![root],
            leaves: vec![0],
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub const ROOT: NodeId = 0;

    pub fn node(&self, id: NodeId) -> &Cell {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Cell] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expanded(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf())
    }

    pub fn record_draw(&mut self, id: NodeId) {
        self.nodes[id].draws += 1;
    }

    /// Splits leaf `id` into `K` children and returns their ids.
    pub fn split(&mut self, id: NodeId) -> Result<Vec<NodeId>> {
        let cell = &self.nodes[id];
        if !cell.is_leaf() {
            return Err(Error::AlreadyExpanded {
                depth: cell.depth,
                index: cell.index,
            });
        }
        let depth = cell.depth;
        let axis = depth % self.d;
        let child_axis = (depth + 1) % self.d;
        let step = cell.bounds.width(axis) / self.k as f64;
        let low = cell.bounds.low[axis];
        let high = cell.bounds.high[axis];
        let base = cell.index * self.k as u64;
        let parent_bounds = cell.bounds.clone();

        let first = self.nodes.len();
        for j in 0..self.k {
            let mut bounds = parent_bounds.clone();
            bounds.low[axis] = low + j as f64 * step;
            // the last child ends exactly on the parent edge
            bounds.high[axis] = if j + 1 == self.k {
                high
            } else {
                low + (j + 1) as f64 * step
            };
            self.nodes.push(Cell {
                depth: depth + 1,
                index: base + j as u64,
                reps: representatives_along(&bounds, self.s, child_axis),
                bounds,
                draws: 0,
                status: CellStatus::Leaf,
                parent: Some(id),
                children: Vec::new(),
            });
        }
        let children: Vec<NodeId> = (first..first + self.k).collect();
        let parent = &mut self.nodes[id];
        parent.status = CellStatus::Expanded;
        parent.children = children.clone();
        self.leaves.retain(|&l| l != id);
        self.leaves.extend_from_slice(&children);
        Ok(children)
    }

    /// Id of the node with the given depth and index, if it exists.
    pub fn find(&self, depth: usize, index: u64) -> Option<NodeId> {
        self.nodes.iter().position(|c| c.depth == depth && c.index == index)
    }
}
