//! Degree-of-freedom numbering for the P2 velocity / P1 pressure pair.
//!
//! P2 nodes sit on the `(2N+1) x (2N+1)` lattice of spacing `h/2` and are
//! numbered row-major. Velocity dofs are component-major: component `c` of
//! node `i` is dof `c * num_nodes + i`. Pressure dofs are the mesh vertices in
//! mesh order.

use crate::mesh::FineMesh;

use super::basis::P2_EDGES;

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n: usize,
    side: usize,
    node_coords: Vec<[f64; 2]>,
    boundary_node: Vec<bool>,
    boundary_nodes: Vec<usize>,
    element_p2: Vec<[usize; 6]>,
    element_p1: Vec<[usize; 3]>,
    element_coords: Vec<[[f64; 2]; 3]>,
}

impl DofMap {
    pub fn new(mesh: &FineMesh) -> Self {
        let n = mesh.n();
        let side = 2 * n + 1;
        let denom = (2 * n) as f64;
        let mut node_coords = Vec::with_capacity(side * side);
        let mut boundary_node = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                node_coords.push([i as f64 / denom, j as f64 / denom]);
                boundary_node.push(i == 0 || j == 0 || i == side - 1 || j == side - 1);
            }
        }
        let boundary_nodes = (0..side * side).filter(|&i| boundary_node[i]).collect();

        let vstride = n + 1;
        let lattice = |v: usize| (2 * (v % vstride), 2 * (v / vstride));
        let mut element_p2 = Vec::with_capacity(mesh.triangles().len());
        let mut element_coords = Vec::with_capacity(mesh.triangles().len());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let l = tri.map(lattice);
            let mut dofs = [0; 6];
            for a in 0..3 {
                dofs[a] = l[a].1 * side + l[a].0;
            }
            for (e, &(a, b)) in P2_EDGES.iter().enumerate() {
                let (i, j) = ((l[a].0 + l[b].0) / 2, (l[a].1 + l[b].1) / 2);
                dofs[3 + e] = j * side + i;
            }
            element_p2.push(dofs);
            element_coords.push(mesh.triangle_coords(t));
        }
        Self {
            n,
            side,
            node_coords,
            boundary_node,
            boundary_nodes,
            element_p2,
            element_p1: mesh.triangles().to_vec(),
            element_coords,
        }
    }

    pub fn mesh_n(&self) -> usize {
        self.n
    }

    /// P2 nodes per velocity component, `(2N+1)^2`.
    pub fn num_nodes(&self) -> usize {
        self.side * self.side
    }

    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn num_pressure_dofs(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.element_p2.len()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node[node]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Boundary velocity dofs of both components, sorted.
    pub fn boundary_velocity_dofs(&self) -> Vec<usize> {
        let nn = self.num_nodes();
        let mut dofs: Vec<usize> = self.boundary_nodes.clone();
        dofs.extend(self.boundary_nodes.iter().map(|&i| i + nn));
        dofs
    }

    /// Per-velocity-dof boundary flag.
    pub fn velocity_boundary_mask(&self) -> Vec<bool> {
        let mut mask = self.boundary_node.clone();
        mask.extend_from_slice(&self.boundary_node);
        mask
    }

    pub fn element_nodes(&self, e: usize) -> &[usize; 6] {
        &self.element_p2[e]
    }

    pub fn element_pressure_dofs(&self, e: usize) -> &[usize; 3] {
        &self.element_p1[e]
    }

    pub fn element_coords(&self, e: usize) -> &[[f64; 2]; 3] {
        &self.element_coords[e]
    }

    /// Lattice index of the P2 node at doubled-lattice position `(i, j)`.
    pub fn lattice_node(&self, i: usize, j: usize) -> usize {
        j * self.side + i
    }
}

pub fn build_dofmap(mesh: &FineMesh) -> DofMap {
    DofMap::new(mesh)
}
