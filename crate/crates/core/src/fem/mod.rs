//! Reference bases, quadrature, element geometry and the P2/P1 dof map.

pub mod basis;
pub mod dofmap;
pub mod quadrature;

pub use basis::{eval_basis_p1, eval_basis_p2, p2_values};
pub use dofmap::{build_dofmap, DofMap};
pub use quadrature::{quadrature_rule, QuadratureRule};

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    origin: [f64; 2],
    jac: [[f64; 2]; 2],
    inv_t: [[f64; 2]; 2],
    det: f64,
}

impl AffineMap {
    pub fn new(coords: &[[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = *coords;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // (J^{-1})^T
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Self {
            origin: p0,
            jac,
            inv_t,
            det,
        }
    }

    /// Jacobian determinant (twice the triangle area).
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn to_physical(&self, bary: [f64; 3]) -> [f64; 2] {
        let (xi, eta) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jac[0][0] * xi + self.jac[0][1] * eta,
            self.origin[1] + self.jac[1][0] * xi + self.jac[1][1] * eta,
        ]
    }

    /// Maps a reference gradient to physical coordinates.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// P2 nodal interpolant of a vector field, in velocity-dof layout.
pub fn interpolate_p2(dofmap: &DofMap, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let nn = dofmap.num_nodes();
    let mut coeffs = vec![0.0; 2 * nn];
    for (i, c) in dofmap.node_coords().iter().enumerate() {
        let v = f(c[0], c[1]);
        coeffs[i] = v[0];
        coeffs[nn + i] = v[1];
    }
    coeffs
}

/// Value of the P2 field `coeffs` on element `e` at a barycentric point.
pub fn eval_p2_field(dofmap: &DofMap, coeffs: &[f64], e: usize, bary: [f64; 3]) -> [f64; 2] {
    let nn = dofmap.num_nodes();
    let phi = p2_values(bary);
    let nodes = dofmap.element_nodes(e);
    let mut v = [0.0; 2];
    for (a, &node) in nodes.iter().enumerate() {
        v[0] += phi[a] * coeffs[node];
        v[1] += phi[a] * coeffs[nn + node];
    }
    v
}

/// Value and physical gradient (`grad[c][d] = ∂_d v_c`) of a P2 field.
pub fn eval_p2_field_grad(
    dofmap: &DofMap,
    coeffs: &[f64],
    e: usize,
    bary: [f64; 3],
) -> ([f64; 2], [[f64; 2]; 2]) {
    let nn = dofmap.num_nodes();
    let map = AffineMap::new(dofmap.element_coords(e));
    let (phi, dphi) = eval_basis_p2(bary);
    let nodes = dofmap.element_nodes(e);
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for (a, &node) in nodes.iter().enumerate() {
        let gp = map.grad(dphi[a]);
        for c in 0..2 {
            let u = coeffs[c * nn + node];
            v[c] += phi[a] * u;
            g[c][0] += gp[0] * u;
            g[c][1] += gp[1] * u;
        }
    }
    (v, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_fine_mesh;

    #[test]
    fn affine_map_roundtrip() {
        let map = AffineMap::new(&[[0.2, 0.1], [0.5, 0.2], [0.3, 0.6]]);
        let p = map.to_physical([0.2, 0.3, 0.5]);
        assert!((p[0] - (0.2 * 0.2 + 0.3 * 0.5 + 0.5 * 0.3)).abs() < 1e-15);
        assert!((p[1] - (0.2 * 0.1 + 0.3 * 0.2 + 0.5 * 0.6)).abs() < 1e-15);
        // gradient of λ1 maps to the physical gradient of the hat at vertex 1
        let g = map.grad([1.0, 0.0]);
        let x = |b: [f64; 3]| map.to_physical(b);
        let (a, b) = (x([1.0, 0.0, 0.0]), x([0.0, 1.0, 0.0]));
        // λ1 goes from 0 to 1 along edge 0-1
        let d = [b[0] - a[0], b[1] - a[1]];
        assert!((g[0] * d[0] + g[1] * d[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn p2_interpolant_reproduces_quadratics() {
        let mesh = build_fine_mesh(3).unwrap();
        let d = build_dofmap(&mesh);
        let f = |x: f64, y: f64| [x * x - 2.0 * x * y + 0.5, y * y + x];
        let c = interpolate_p2(&d, f);
        for e in 0..d.num_elements() {
            let map = AffineMap::new(d.element_coords(e));
            for b in [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]] {
                let p = map.to_physical(b);
                let (v, g) = eval_p2_field_grad(&d, &c, e, b);
                let ex = f(p[0], p[1]);
                assert!((v[0] - ex[0]).abs() < 1e-14 && (v[1] - ex[1]).abs() < 1e-14);
                assert!((g[0][0] - (2.0 * p[0] - 2.0 * p[1])).abs() < 1e-12);
                assert!((g[1][1] - 2.0 * p[1]).abs() < 1e-12);
                assert_eq!(eval_p2_field(&d, &c, e, b), v);
            }
        }
    }
}
