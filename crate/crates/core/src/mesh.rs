//! Structured triangulation of the unit square and the aligned coarse
//! observation partition.
//!
//! Vertices are numbered row-major, `j * (N + 1) + i` for the lattice point
//! `(i / N, j / N)`. Square cell `(i, j)` has index `j * N + i` and is split by
//! its SW-NE diagonal into triangles `2 * cell` (below the diagonal) and
//! `2 * cell + 1` (above it), both counter-clockwise.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FineMesh {
    n: usize,
    h: f64,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

impl FineMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "mesh needs at least 2 subdivisions per side, got {n}"
            )));
        }
        let nf = n as f64;
        let stride = n + 1;
        let mut vertices = Vec::with_capacity(stride * stride);
        let mut boundary = Vec::with_capacity(stride * stride);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / nf, j as f64 / nf]);
                boundary.push(i == 0 || i == n || j == 0 || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let sw = j * stride + i;
                let se = sw + 1;
                let nw = sw + stride;
                let ne = nw + 1;
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }
        Ok(Self {
            n,
            h: 1.0 / nf,
            vertices,
            triangles,
            boundary,
        })
    }

    /// Subdivisions per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_coords(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.triangle_coords(t);
        [
            (p0[0] + p1[0] + p2[0]) / 3.0,
            (p0[1] + p1[1] + p2[1]) / 3.0,
        ]
    }

    /// Lattice position `(i, j)` of the square cell that holds triangle `t`.
    pub fn triangle_cell(&self, t: usize) -> (usize, usize) {
        let cell = t / 2;
        (cell % self.n, cell / self.n)
    }
}

pub fn build_fine_mesh(n: usize) -> Result<FineMesh> {
    FineMesh::new(n)
}

/// Square observation cells of width `H = k h`, numbered row-major
/// (`row * cells_per_side + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    k: usize,
    fine_n: usize,
    cells_per_side: usize,
    width: f64,
    cell_to_fine_triangles: Vec<Vec<usize>>,
    triangle_to_cell: Vec<usize>,
    coarse_vertices: Vec<[f64; 2]>,
}

impl CoarseGrid {
    pub fn new(mesh: &FineMesh, k: usize) -> Result<Self> {
        let n = mesh.n();
        if k == 0 || n % k != 0 {
            return Err(Error::InvalidConfig(format!(
                "coarsening ratio k = {k} must be positive and divide N = {n}"
            )));
        }
        let m = n / k;
        let mut cell_to_fine_triangles = vec![Vec::with_capacity(2 * k * k); m * m];
        let mut triangle_to_cell = Vec::with_capacity(mesh.triangles().len());
        for t in 0..mesh.triangles().len() {
            let (i, j) = mesh.triangle_cell(t);
            let cell = (j / k) * m + i / k;
            cell_to_fine_triangles[cell].push(t);
            triangle_to_cell.push(cell);
        }
        let mf = m as f64;
        let mut coarse_vertices = Vec::with_capacity((m + 1) * (m + 1));
        for j in 0..=m {
            for i in 0..=m {
                coarse_vertices.push([i as f64 / mf, j as f64 / mf]);
            }
        }
        Ok(Self {
            k,
            fine_n: n,
            cells_per_side: m,
            width: 1.0 / mf,
            cell_to_fine_triangles,
            triangle_to_cell,
            coarse_vertices,
        })
    }

    /// Coarsening ratio `H / h`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Cell width `H`.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn cell_area(&self) -> f64 {
        self.width * self.width
    }

    pub fn fine_triangles(&self, cell: usize) -> &[usize] {
        &self.cell_to_fine_triangles[cell]
    }

    pub fn cell_of_triangle(&self, t: usize) -> usize {
        self.triangle_to_cell[t]
    }

    pub fn coarse_vertices(&self) -> &[[f64; 2]] {
        &self.coarse_vertices
    }

    /// `(col, row)` of a cell index.
    pub fn cell_position(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells_per_side, cell / self.cells_per_side)
    }

    /// Cell containing `point`. Points on shared edges go to the cell with the
    /// larger lower-left corner (floor), clamped at `x = 1` / `y = 1`.
    pub fn locate_cell(&self, point: [f64; 2]) -> Result<usize> {
        let [x, y] = point;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { x, y });
        }
        let m = self.cells_per_side;
        let index = |s: f64| ((s * m as f64).floor() as usize).min(m - 1);
        Ok(index(y) * m + index(x))
    }
}

pub fn build_coarse_grid(mesh: &FineMesh, k: usize) -> Result<CoarseGrid> {
    CoarseGrid::new(mesh, k)
}

pub fn locate_cell(grid: &CoarseGrid, point: [f64; 2]) -> Result<usize> {
    grid.locate_cell(point)
}
