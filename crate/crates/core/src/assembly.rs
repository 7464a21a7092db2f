//! Sparse operators of the semi-discrete nudged Navier–Stokes system.
//!
//! Velocity matrices act on the component-major P2 layout of [`DofMap`];
//! element loops run in element order and triplets are summed in a fixed
//! order, so every matrix is bitwise reproducible.

use crate::error::{Error, Result};
use crate::fem::{eval_basis_p1, eval_basis_p2, AffineMap, DofMap, QuadratureRule};
use crate::mesh::CoarseGrid;
use crate::observe::{InterpolantKind, ObservationOperator};
pub use crate::sparse::SparseMatrix;

/// Reference basis data tabulated at the points of one rule.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    pub phi: Vec<[f64; 6]>,
    pub dphi: Vec<[[f64; 2]; 6]>,
    pub psi: Vec<[f64; 3]>,
}

impl ReferenceTable {
    pub fn new(rule: &QuadratureRule) -> Self {
        let mut t = Self {
            weights: rule.weights().to_vec(),
            points: rule.points().to_vec(),
            phi: Vec::with_capacity(rule.len()),
            dphi: Vec::with_capacity(rule.len()),
            psi: Vec::with_capacity(rule.len()),
        };
        for &p in rule.points() {
            let (v, g) = eval_basis_p2(p);
            t.phi.push(v);
            t.dphi.push(g);
            t.psi.push(eval_basis_p1(p).0);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical P2 gradients at every point of the rule on one element.
    pub fn physical_gradients(&self, map: &AffineMap) -> Vec<[[f64; 2]; 6]> {
        self.dphi.iter().map(|g| g.map(|r| map.grad(r))).collect()
    }
}

fn element_loop_velocity(
    dofmap: &DofMap,
    rule: &QuadratureRule,
    mut local: impl FnMut(&ReferenceTable, &AffineMap, &[[[f64; 2]; 6]], &mut [[f64; 12]; 12]),
) -> SparseMatrix {
    let table = ReferenceTable::new(rule);
    let nn = dofmap.num_nodes();
    let nv = dofmap.num_velocity_dofs();
    let mut trip = Vec::with_capacity(dofmap.num_elements() * 144);
    for e in 0..dofmap.num_elements() {
        let map = AffineMap::new(dofmap.element_coords(e));
        let grads = table.physical_gradients(&map);
        let mut ke = [[0.0; 12]; 12];
        local(&table, &map, &grads, &mut ke);
        let nodes = dofmap.element_nodes(e);
        let global = |a: usize| (a / 6) * nn + nodes[a % 6];
        for (a, row) in ke.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((global(a), global(b), v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(nv, nv, &trip)
}

fn mirror_upper(ke: &mut [[f64; 12]; 12]) {
    for a in 0..12 {
        for b in 0..a {
            ke[a][b] = ke[b][a];
        }
    }
}

/// `(φ_j, φ_i)`, block diagonal over the two components.
pub fn assemble_mass(dofmap: &DofMap, rule: &QuadratureRule) -> SparseMatrix {
    element_loop_velocity(dofmap, rule, |t, map, _, ke| {
        for q in 0..t.len() {
            let w = t.weights[q] * map.det();
            for a in 0..6 {
                for b in a..6 {
                    let v = w * t.phi[q][a] * t.phi[q][b];
                    ke[a][b] += v;
                    ke[a + 6][b + 6] += v;
                }
            }
        }
        mirror_upper(ke);
    })
}

/// `(∇φ_j, ∇φ_i)`, without the viscosity.
pub fn assemble_stiffness(dofmap: &DofMap, rule: &QuadratureRule) -> SparseMatrix {
    element_loop_velocity(dofmap, rule, |t, map, g, ke| {
        for q in 0..t.len() {
            let w = t.weights[q] * map.det();
            for a in 0..6 {
                for b in a..6 {
                    let v = w * (g[q][a][0] * g[q][b][0] + g[q][a][1] * g[q][b][1]);
                    ke[a][b] += v;
                    ke[a + 6][b + 6] += v;
                }
            }
        }
        mirror_upper(ke);
    })
}

/// `(∇·φ_j, ∇·φ_i)`.
pub fn assemble_graddiv(dofmap: &DofMap, rule: &QuadratureRule) -> SparseMatrix {
    element_loop_velocity(dofmap, rule, |t, map, g, ke| {
        for q in 0..t.len() {
            let w = t.weights[q] * map.det();
            for a in 0..12 {
                for b in a..12 {
                    ke[a][b] += w * g[q][a % 6][a / 6] * g[q][b % 6][b / 6];
                }
            }
        }
        mirror_upper(ke);
    })
}

/// `(ψ_i, ∇·φ_j)`: pressure rows, velocity columns.
pub fn assemble_divergence(dofmap: &DofMap, rule: &QuadratureRule) -> SparseMatrix {
    let table = ReferenceTable::new(rule);
    let nn = dofmap.num_nodes();
    let mut trip = Vec::with_capacity(dofmap.num_elements() * 36);
    for e in 0..dofmap.num_elements() {
        let map = AffineMap::new(dofmap.element_coords(e));
        let g = table.physical_gradients(&map);
        let nodes = dofmap.element_nodes(e);
        let pdofs = dofmap.element_pressure_dofs(e);
        let mut de = [[0.0; 12]; 3];
        for q in 0..table.len() {
            let w = table.weights[q] * map.det();
            for (i, row) in de.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v += w * table.psi[q][i] * g[q][b % 6][b / 6];
                }
            }
        }
        for (i, row) in de.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                trip.push((pdofs[i], (b / 6) * nn + nodes[b % 6], v));
            }
        }
    }
    SparseMatrix::from_triplets(dofmap.num_pressure_dofs(), dofmap.num_velocity_dofs(), &trip)
}

/// `∫ ψ_i`, the pressure mean functional.
pub fn assemble_pressure_mean(dofmap: &DofMap, rule: &QuadratureRule) -> Vec<f64> {
    let table = ReferenceTable::new(rule);
    let mut m = vec![0.0; dofmap.num_pressure_dofs()];
    for e in 0..dofmap.num_elements() {
        let det = AffineMap::new(dofmap.element_coords(e)).det();
        let pdofs = dofmap.element_pressure_dofs(e);
        for q in 0..table.len() {
            for i in 0..3 {
                m[pdofs[i]] += table.weights[q] * det * table.psi[q][i];
            }
        }
    }
    m
}

/// Scalar 6x6 convection block on one element for the advecting field `w`
/// (velocity-dof layout): row `a` is the test function, column `b` the trial.
///
/// `c_ab = ∫ (w·∇φ_b) φ_a + ½ (∇·w) φ_b φ_a`
pub fn element_convection(
    table: &ReferenceTable,
    map: &AffineMap,
    grads: &[[[f64; 2]; 6]],
    w_local: &[[f64; 6]; 2],
) -> [[f64; 6]; 6] {
    let mut ce = [[0.0; 6]; 6];
    for q in 0..table.len() {
        let phi = &table.phi[q];
        let g = &grads[q];
        let mut wq = [0.0; 2];
        let mut div = 0.0;
        for a in 0..6 {
            wq[0] += w_local[0][a] * phi[a];
            wq[1] += w_local[1][a] * phi[a];
            div += w_local[0][a] * g[a][0] + w_local[1][a] * g[a][1];
        }
        let wt = table.weights[q] * map.det();
        let mut adv = [0.0; 6];
        for b in 0..6 {
            adv[b] = wq[0] * g[b][0] + wq[1] * g[b][1];
        }
        for a in 0..6 {
            let pa = wt * phi[a];
            for b in 0..6 {
                ce[a][b] += pa * (adv[b] + 0.5 * div * phi[b]);
            }
        }
    }
    ce
}

/// Local values of a velocity field on element `e`: `[component][local node]`.
pub fn gather_local(dofmap: &DofMap, field: &[f64], e: usize) -> [[f64; 6]; 2] {
    let nn = dofmap.num_nodes();
    let nodes = dofmap.element_nodes(e);
    [nodes.map(|n| field[n]), nodes.map(|n| field[nn + n])]
}

/// Matrix of `b_h(w, φ_j, φ_i) = ((w·∇)φ_j, φ_i) + ½((∇·w) φ_j, φ_i)`.
pub fn assemble_convection(dofmap: &DofMap, rule: &QuadratureRule, w: &[f64]) -> Result<SparseMatrix> {
    if w.len() != dofmap.num_velocity_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dofmap.num_velocity_dofs(),
            found: w.len(),
        });
    }
    let table = ReferenceTable::new(rule);
    let nn = dofmap.num_nodes();
    let nv = dofmap.num_velocity_dofs();
    let mut trip = Vec::with_capacity(dofmap.num_elements() * 72);
    for e in 0..dofmap.num_elements() {
        let map = AffineMap::new(dofmap.element_coords(e));
        let grads = table.physical_gradients(&map);
        let ce = element_convection(&table, &map, &grads, &gather_local(dofmap, w, e));
        let nodes = dofmap.element_nodes(e);
        for c in 0..2 {
            for a in 0..6 {
                for b in 0..6 {
                    trip.push((c * nn + nodes[a], c * nn + nodes[b], ce[a][b]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(nv, nv, &trip))
}

/// Nudging Gram matrix `(I_H φ_j, I_H φ_i)`.
pub fn assemble_nudging(dofmap: &DofMap, grid: &CoarseGrid, kind: InterpolantKind) -> Result<SparseMatrix> {
    ObservationOperator::new(kind, grid, dofmap)?.nudging_matrix()
}

/// `(f(·, t), φ_i)`.
pub fn assemble_load(
    dofmap: &DofMap,
    rule: &QuadratureRule,
    f: impl Fn(f64, f64, f64) -> [f64; 2],
    t: f64,
) -> Vec<f64> {
    let table = ReferenceTable::new(rule);
    let nn = dofmap.num_nodes();
    let mut load = vec![0.0; dofmap.num_velocity_dofs()];
    for e in 0..dofmap.num_elements() {
        let map = AffineMap::new(dofmap.element_coords(e));
        let nodes = dofmap.element_nodes(e);
        for q in 0..table.len() {
            let x = map.to_physical(table.points[q]);
            let fv = f(x[0], x[1], t);
            let w = table.weights[q] * map.det();
            for a in 0..6 {
                load[nodes[a]] += w * fv[0] * table.phi[q][a];
                load[nn + nodes[a]] += w * fv[1] * table.phi[q][a];
            }
        }
    }
    load
}

/// Symmetric elimination of homogeneous Dirichlet dofs: boundary rows and
/// columns are removed, a unit diagonal is inserted and the right-hand side
/// entries are zeroed.
pub fn apply_dirichlet(matrix: &SparseMatrix, rhs: &mut [f64], boundary: &[usize]) -> SparseMatrix {
    let mut is_bc = vec![false; matrix.rows().max(matrix.cols())];
    for &b in boundary {
        is_bc[b] = true;
    }
    let mut trip = Vec::with_capacity(matrix.nnz());
    for i in 0..matrix.rows() {
        if is_bc[i] {
            trip.push((i, i, 1.0));
            continue;
        }
        trip.extend(matrix.row(i).filter(|&(j, _)| !is_bc[j]).map(|(j, v)| (i, j, v)));
    }
    for &b in boundary {
        if b < rhs.len() {
            rhs[b] = 0.0;
        }
    }
    SparseMatrix::from_triplets(matrix.rows(), matrix.cols(), &trip)
}

/// Time-independent operators of the scheme.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub divergence: SparseMatrix,
    pub graddiv: SparseMatrix,
    pub nudging: SparseMatrix,
    pub pressure_mean: Vec<f64>,
}

impl OperatorSet {
    pub fn assemble(dofmap: &DofMap, rule: &QuadratureRule, observation: &ObservationOperator) -> Result<Self> {
        Ok(Self {
            mass: assemble_mass(dofmap, rule),
            stiffness: assemble_stiffness(dofmap, rule),
            divergence: assemble_divergence(dofmap, rule),
            graddiv: assemble_graddiv(dofmap, rule),
            nudging: observation.nudging_matrix()?,
            pressure_mean: assemble_pressure_mean(dofmap, rule),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_dofmap, eval_p2_field_grad, interpolate_p2, quadrature_rule};
    use crate::mesh::{build_coarse_grid, build_fine_mesh};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dofmap(n: usize) -> DofMap {
        build_dofmap(&build_fine_mesh(n).unwrap())
    }

    fn random_field(d: &DofMap, rng: &mut StdRng, zero_boundary: bool) -> Vec<f64> {
        let mask = d.velocity_boundary_mask();
        (0..d.num_velocity_dofs())
            .map(|i| if zero_boundary && mask[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect()
    }

    #[test]
    fn mass_sums_to_area_and_is_symmetric() {
        let d = dofmap(4);
        let m = assemble_mass(&d, &quadrature_rule(5).unwrap());
        let nn = d.num_nodes();
        let block: f64 = (0..nn).flat_map(|i| m.row(i).filter(|&(j, _)| j < nn).map(|(_, v)| v)).sum();
        assert!((block - 1.0).abs() < 1e-14);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn mass_is_positive_definite() {
        let d = dofmap(4);
        let m = assemble_mass(&d, &quadrature_rule(5).unwrap());
        let dense = faer::Mat::<f64>::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j));
        let eig = dense.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "{min}");
    }

    #[test]
    fn stiffness_kernel_is_constants() {
        let d = dofmap(4);
        let k = assemble_stiffness(&d, &quadrature_rule(5).unwrap());
        let c = interpolate_p2(&d, |_, _| [1.0, -2.0]);
        assert!(k.mul_vec(&c).iter().all(|v| v.abs() < 1e-13));
        for i in 0..k.rows() {
            let sum: f64 = k.row(i).map(|(_, v)| v).sum();
            assert!(sum.abs() < 1e-13);
        }
        assert!(k.asymmetry() < 1e-15);
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_field(&d, &mut rng, false);
            assert!(k.bilinear(&v, &v) >= 0.0);
        }
    }

    #[test]
    fn divergence_of_special_fields() {
        let d = dofmap(4);
        let rule = quadrature_rule(5).unwrap();
        let div = assemble_divergence(&d, &rule);
        assert_eq!((div.rows(), div.cols()), (25, 162));
        let c = interpolate_p2(&d, |_, _| [0.7, 0.2]);
        assert!(div.mul_vec(&c).iter().all(|v| v.abs() < 1e-13));
        let rot = interpolate_p2(&d, |x, y| [-y, x]);
        assert!(div.mul_vec(&rot).iter().all(|v| v.abs() < 1e-13));
        // ∫ ∇·(x, 0) = 1 with Σψ_i = 1
        let stretch = interpolate_p2(&d, |x, _| [x, 0.0]);
        let total: f64 = div.mul_vec(&stretch).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let m = assemble_pressure_mean(&d, &rule);
        for (a, b) in div.mul_vec(&stretch).iter().zip(&m) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn graddiv_annihilates_constants() {
        let d = dofmap(3);
        let g = assemble_graddiv(&d, &quadrature_rule(5).unwrap());
        let c = interpolate_p2(&d, |_, _| [3.0, 1.0]);
        assert!(g.mul_vec(&c).iter().all(|v| v.abs() < 1e-13));
        assert_eq!(g.asymmetry(), 0.0);
    }

    #[test]
    fn convection_zero_field() {
        let d = dofmap(3);
        let c = assemble_convection(&d, &quadrature_rule(5).unwrap(), &vec![0.0; d.num_velocity_dofs()]).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        assert!(assemble_convection(&d, &quadrature_rule(5).unwrap(), &[0.0; 3]).is_err());
    }

    #[test]
    fn convection_is_skew_for_discretely_zero_boundary_fields() {
        let rule = quadrature_rule(5).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        for n in [2, 4, 8] {
            let d = dofmap(n);
            for _ in 0..5 {
                let w = random_field(&d, &mut rng, true);
                let c = assemble_convection(&d, &rule, &w).unwrap();
                let sum = c.add_scaled(1.0, &c.transpose()).unwrap();
                assert!(sum.max_abs() <= 1e-12, "N = {n}: {}", sum.max_abs());
                let v = random_field(&d, &mut rng, false);
                assert!(c.bilinear(&v, &v).abs() <= 1e-12);
            }
        }
    }

    /// Independent quadrature of ‖v‖², ‖∇v‖², ‖∇·v‖² by pointwise evaluation.
    fn direct_norms(d: &DofMap, v: &[f64]) -> [f64; 3] {
        let rule = quadrature_rule(6).unwrap();
        let mut out = [0.0; 3];
        for e in 0..d.num_elements() {
            let det = AffineMap::new(d.element_coords(e)).det();
            for (p, w) in rule.points().iter().zip(rule.weights()) {
                let (val, g) = eval_p2_field_grad(d, v, e, *p);
                out[0] += w * det * (val[0] * val[0] + val[1] * val[1]);
                out[1] += w * det * g.iter().flatten().map(|x| x * x).sum::<f64>();
                out[2] += w * det * (g[0][0] + g[1][1]).powi(2);
            }
        }
        out
    }

    #[test]
    fn gram_consistency() {
        let rule = quadrature_rule(5).unwrap();
        let d = dofmap(4);
        let (m, k, g) = (assemble_mass(&d, &rule), assemble_stiffness(&d, &rule), assemble_graddiv(&d, &rule));
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..10 {
            let v = random_field(&d, &mut rng, false);
            let [l2, h1, dv] = direct_norms(&d, &v);
            assert!((m.bilinear(&v, &v) - l2).abs() < 1e-12);
            assert!((k.bilinear(&v, &v) - h1).abs() < 1e-12 * h1.max(1.0));
            assert!((g.bilinear(&v, &v) - dv).abs() < 1e-12 * dv.max(1.0));
        }
    }

    #[test]
    fn load_of_constant_forcing() {
        let d = dofmap(4);
        let rule = quadrature_rule(5).unwrap();
        let zero = assemble_load(&d, &rule, |_, _, _| [0.0, 0.0], 0.0);
        assert!(zero.iter().all(|&v| v == 0.0));
        let l = assemble_load(&d, &rule, |_, _, _| [1.0, 0.0], 0.0);
        let nn = d.num_nodes();
        assert!((l[..nn].iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(l[nn..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_matches_direct_quadrature() {
        use crate::manufactured::eval_f;
        let d = dofmap(8);
        let rule = quadrature_rule(5).unwrap();
        let nu = 1e-2;
        let l = assemble_load(&d, &rule, |x, y, t| eval_f(x, y, t, nu), 0.0);
        // oracle: per-element loop with explicit vertex interpolation and basis formulas
        let mut oracle = vec![0.0; d.num_velocity_dofs()];
        let nn = d.num_nodes();
        for e in 0..d.num_elements() {
            let [p0, p1, p2] = *d.element_coords(e);
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            for (b, w) in rule.points().iter().zip(rule.weights()) {
                let x = b[0] * p0[0] + b[1] * p1[0] + b[2] * p2[0];
                let y = b[0] * p0[1] + b[1] * p1[1] + b[2] * p2[1];
                let f = eval_f(x, y, 0.0, nu);
                let phi = [
                    b[0] * (2.0 * b[0] - 1.0),
                    b[1] * (2.0 * b[1] - 1.0),
                    b[2] * (2.0 * b[2] - 1.0),
                    4.0 * b[0] * b[1],
                    4.0 * b[1] * b[2],
                    4.0 * b[2] * b[0],
                ];
                for (a, &node) in d.element_nodes(e).iter().enumerate() {
                    oracle[node] += w * det * f[0] * phi[a];
                    oracle[nn + node] += w * det * f[1] * phi[a];
                }
            }
        }
        for (a, b) in l.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn dirichlet_elimination() {
        let d = dofmap(3);
        let rule = quadrature_rule(5).unwrap();
        let k = assemble_stiffness(&d, &rule);
        let bc = d.boundary_velocity_dofs();
        let mut rhs = vec![1.0; d.num_velocity_dofs()];
        let kd = apply_dirichlet(&k, &mut rhs, &bc);
        assert_eq!(kd.asymmetry(), 0.0);
        let mask = d.velocity_boundary_mask();
        for i in 0..kd.rows() {
            if mask[i] {
                assert_eq!(rhs[i], 0.0);
                assert_eq!(kd.row(i).collect::<Vec<_>>(), vec![(i, 1.0)]);
            } else {
                for (j, v) in kd.row(i) {
                    assert!(!mask[j]);
                    assert_eq!(v, k.get(i, j));
                }
            }
        }
    }

    #[test]
    fn nudging_matches_coarse_norm() {
        let mesh = build_fine_mesh(6).unwrap();
        let d = build_dofmap(&mesh);
        let grid = build_coarse_grid(&mesh, 3).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        for kind in [InterpolantKind::PiecewiseConstantAverage, InterpolantKind::CoarseLagrangeP1] {
            let b = assemble_nudging(&d, &grid, kind).unwrap();
            let op = ObservationOperator::new(kind, &grid, &d).unwrap();
            assert!(b.asymmetry() < 1e-15);
            for _ in 0..5 {
                let v = random_field(&d, &mut rng, false);
                let r = op.residual_norms(&d, &v).unwrap();
                assert!((b.bilinear(&v, &v) - r.interpolant.powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_assembly() {
        let d = dofmap(5);
        let rule = quadrature_rule(5).unwrap();
        let w = interpolate_p2(&d, |x, y| [x * y, x - y]);
        assert_eq!(assemble_convection(&d, &rule, &w).unwrap(), assemble_convection(&d, &rule, &w).unwrap());
        assert_eq!(assemble_graddiv(&d, &rule), assemble_graddiv(&d, &rule));
    }
}
