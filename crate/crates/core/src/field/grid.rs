use crate::error::{Error, Result};

/// Classification of a grid node relative to the computational domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Rectangle,
    /// Disk with the given center and radius, embedded in the bounding box.
    Disk { cx: f64, cy: f64, r: f64 },
}

/// Uniform tensor grid with an interior/boundary/exterior mask.
#[derive(Clone, Debug)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: [f64; 2],
    shape: Shape,
    mask: Vec<NodeKind>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.hx == other.hx
            && self.hy == other.hy
            && self.origin == other.origin
            && self.shape == other.shape
    }
}

impl Grid {
    pub fn rectangle(nx: usize, ny: usize, hx: f64, hy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 9 || ny < 9 {
            return Err(Error::InvalidGrid(format!("need at least 9x9 nodes, got {nx}x{ny}")));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got {hx}, {hy}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let mut mask = vec![NodeKind::Interior; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    mask[j * nx + i] = NodeKind::Boundary;
                }
            }
        }
        Ok(Grid { nx, ny, hx, hy, origin, shape: Shape::Rectangle, mask })
    }

    /// The unit square `[0,1]^2` with `n` nodes per side.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 9 {
            return Err(Error::InvalidGrid(format!("need at least 9 nodes per side, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        Self::rectangle(n, n, h, h, [0.0, 0.0])
    }

    /// Disk of radius `1/2 - 2h` centred in the unit square.
    ///
    /// A node is inside when its distance to the centre is at most the radius;
    /// inside nodes with an outside 4-neighbour are boundary nodes.
    pub fn unit_disk(n: usize) -> Result<Self> {
        let mut g = Self::unit_square(n)?;
        let r = 0.5 - 2.0 * g.hx;
        let (cx, cy) = (0.5, 0.5);
        let inside = |i: usize, j: usize| {
            let x = g.hx * i as f64 - cx;
            let y = g.hy * j as f64 - cy;
            (x * x + y * y).sqrt() <= r
        };
        for j in 0..n {
            for i in 0..n {
                g.mask[j * n + i] = if !inside(i, j) {
                    NodeKind::Exterior
                } else if inside(i - 1, j) && inside(i + 1, j) && inside(i, j - 1) && inside(i, j + 1) {
                    NodeKind::Interior
                } else {
                    NodeKind::Boundary
                };
            }
        }
        g.shape = Shape::Disk { cx, cy, r };
        Ok(g)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn h_max(&self) -> f64 {
        self.hx.max(self.hy)
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn is_rectangle(&self) -> bool {
        matches!(self.shape, Shape::Rectangle)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin[0] + self.hx * i as f64
    }
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin[1] + self.hy * j as f64
    }
    #[inline]
    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.x(i), self.y(j))
    }
    pub fn kind(&self, k: usize) -> NodeKind {
        self.mask[k]
    }
    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }
    pub fn is_interior(&self, k: usize) -> bool {
        self.mask[k] == NodeKind::Interior
    }
    pub fn is_boundary(&self, k: usize) -> bool {
        self.mask[k] == NodeKind::Boundary
    }
    pub fn in_domain(&self, k: usize) -> bool {
        self.mask[k] != NodeKind::Exterior
    }

    /// Side lengths of the bounding box.
    pub fn extent(&self) -> [f64; 2] {
        [self.hx * (self.nx - 1) as f64, self.hy * (self.ny - 1) as f64]
    }

    /// Index of the node closest to the centre of the bounding box.
    pub fn center_index(&self) -> usize {
        self.idx(self.nx / 2, self.ny / 2)
    }

    /// Node-count distance from the edge of the bounding box.
    pub fn edge_distance(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j)
    }

    /// Nodes inside the domain that are at least `collar` nodes from every
    /// boundary node (for rectangles, from the edge of the box).
    pub fn collar_mask(&self, collar: usize) -> Vec<bool> {
        match self.shape {
            Shape::Rectangle => (0..self.len()).map(|k| self.edge_distance(k) >= collar).collect(),
            Shape::Disk { cx, cy, r } => {
                let margin = collar as f64 * self.h_max();
                (0..self.len())
                    .map(|k| {
                        let (x, y) = self.point(k);
                        self.in_domain(k) && ((x - cx).hypot(y - cy) <= r - margin + 1e-12)
                    })
                    .collect()
            }
        }
    }

    /// Euclidean distance from each node to the domain boundary.
    pub fn boundary_distance(&self) -> Vec<f64> {
        match self.shape {
            Shape::Rectangle => {
                let [lx, ly] = self.extent();
                (0..self.len())
                    .map(|k| {
                        let (i, j) = self.ij(k);
                        let x = self.hx * i as f64;
                        let y = self.hy * j as f64;
                        x.min(y).min(lx - x).min(ly - y).max(0.0)
                    })
                    .collect()
            }
            Shape::Disk { cx, cy, r } => (0..self.len())
                .map(|k| {
                    let (x, y) = self.point(k);
                    (r - (x - cx).hypot(y - cy)).max(0.0)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_mask() {
        let g = Grid::unit_square(9).unwrap();
        assert_eq!(g.hx(), 0.125);
        let interior = g.mask().iter().filter(|&&m| m == NodeKind::Interior).count();
        assert_eq!(interior, 49);
        assert!(g.is_boundary(g.idx(0, 2)));
        assert!(g.is_interior(g.idx(1, 1)));
    }

    #[test]
    fn disk_mask_is_closed() {
        let g = Grid::unit_disk(65).unwrap();
        for k in 0..g.len() {
            if g.is_interior(k) {
                let (i, j) = g.ij(k);
                for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                    assert!(g.in_domain(g.idx(a, b)));
                }
            }
        }
        assert!(!g.in_domain(0));
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Grid::unit_square(8).is_err());
        assert!(Grid::rectangle(9, 9, 0.0, 0.1, [0.0, 0.0]).is_err());
    }
}
