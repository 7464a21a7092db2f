//! Coarse observation operators `I_H` and empirical estimates of their
//! stability and approximation constants.
//!
//! Both operators are realised as `E`, a sparse map from velocity
//! coefficients to a coarse representation (two components per coarse
//! unknown, component-major), together with `W`, the Gram matrix of the coarse
//! basis. `‖I_H v‖₀² = (E v)ᵀ W (E v)` per component.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{eval_p2_field_grad, quadrature_rule, AffineMap, DofMap};
use crate::mesh::CoarseGrid;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterpolantKind {
    /// L²-orthogonal projection onto cellwise constants.
    PiecewiseConstantAverage,
    /// Nodal interpolation onto continuous P1 on the coarse squares, each split SW-NE.
    CoarseLagrangeP1,
}

impl InterpolantKind {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::PiecewiseConstantAverage => "pc",
            Self::CoarseLagrangeP1 => "lagrange",
        }
    }
}

impl FromStr for InterpolantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" | "piecewise-constant" => Ok(Self::PiecewiseConstantAverage),
            "lagrange" | "la" => Ok(Self::CoarseLagrangeP1),
            other => Err(Error::Parse(format!("unknown interpolant '{other}'"))),
        }
    }
}

/// Coarse values: per cell (piecewise constant) or per coarse vertex
/// (Lagrange), each carrying both velocity components.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseField {
    pub kind: InterpolantKind,
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct ObservationOperator {
    kind: InterpolantKind,
    num_coarse: usize,
    extract: SparseMatrix,
    gram: SparseMatrix,
    grid: CoarseGrid,
}

impl ObservationOperator {
    pub fn new(kind: InterpolantKind, grid: &CoarseGrid, dofmap: &DofMap) -> Result<Self> {
        if grid.fine_n() != dofmap.mesh_n() {
            return Err(Error::InvalidInput(format!(
                "coarse grid built on N = {} but dof map has N = {}",
                grid.fine_n(),
                dofmap.mesh_n()
            )));
        }
        let nn = dofmap.num_nodes();
        let nv = dofmap.num_velocity_dofs();
        let (num_coarse, extract, gram) = match kind {
            InterpolantKind::PiecewiseConstantAverage => {
                let rule = quadrature_rule(5)?;
                let nc = grid.num_cells();
                let inv_area = 1.0 / grid.cell_area();
                let mut trip = Vec::new();
                for cell in 0..nc {
                    for &t in grid.fine_triangles(cell) {
                        let map = AffineMap::new(dofmap.element_coords(t));
                        let nodes = dofmap.element_nodes(t);
                        let mut local = [0.0; 6];
                        for (p, w) in rule.points().iter().zip(rule.weights()) {
                            let phi = crate::fem::p2_values(*p);
                            for a in 0..6 {
                                local[a] += w * map.det() * phi[a];
                            }
                        }
                        for a in 0..6 {
                            for c in 0..2 {
                                trip.push((c * nc + cell, c * nn + nodes[a], inv_area * local[a]));
                            }
                        }
                    }
                }
                let extract = SparseMatrix::from_triplets(2 * nc, nv, &trip);
                let gram = SparseMatrix::from_triplets(
                    nc,
                    nc,
                    &(0..nc).map(|c| (c, c, grid.cell_area())).collect::<Vec<_>>(),
                );
                (nc, extract, gram)
            }
            InterpolantKind::CoarseLagrangeP1 => {
                let m = grid.cells_per_side();
                let k = grid.k();
                let ncv = (m + 1) * (m + 1);
                let mut trip = Vec::with_capacity(2 * ncv);
                for j in 0..=m {
                    for i in 0..=m {
                        let node = dofmap.lattice_node(2 * k * i, 2 * k * j);
                        for c in 0..2 {
                            trip.push((c * ncv + j * (m + 1) + i, c * nn + node, 1.0));
                        }
                    }
                }
                let extract = SparseMatrix::from_triplets(2 * ncv, nv, &trip);
                (ncv, extract, coarse_p1_mass(m))
            }
        };
        Ok(Self {
            kind,
            num_coarse,
            extract,
            gram,
            grid: grid.clone(),
        })
    }

    pub fn kind(&self) -> InterpolantKind {
        self.kind
    }

    pub fn grid(&self) -> &CoarseGrid {
        &self.grid
    }

    /// Coarse unknowns per component.
    pub fn num_coarse(&self) -> usize {
        self.num_coarse
    }

    /// `E`: velocity coefficients → stacked coarse values.
    pub fn extraction(&self) -> &SparseMatrix {
        &self.extract
    }

    /// `W`: coarse Gram matrix (one component).
    pub fn gram(&self) -> &SparseMatrix {
        &self.gram
    }

    /// Stacked coarse values `E v` (component-major).
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.extract.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.extract.cols(),
                found: field.len(),
            });
        }
        Ok(self.extract.mul_vec(field))
    }

    /// `(I_H a, I_H b)` from stacked coarse vectors.
    pub fn coarse_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let nc = self.num_coarse;
        self.gram.bilinear(&a[..nc], &b[..nc]) + self.gram.bilinear(&a[nc..], &b[nc..])
    }

    /// `Eᵀ W d` for stacked coarse data `d`.
    pub fn weighted_transpose(&self, coarse: &[f64]) -> Vec<f64> {
        let nc = self.num_coarse;
        let mut wd = self.gram.mul_vec(&coarse[..nc]);
        wd.extend(self.gram.mul_vec(&coarse[nc..]));
        let mut out = vec![0.0; self.extract.cols()];
        for (r, &v) in wd.iter().enumerate() {
            if v != 0.0 {
                for (j, e) in self.extract.row(r) {
                    out[j] += e * v;
                }
            }
        }
        out
    }

    /// Exact `I_H u` of a continuous field: cell averages by degree-8
    /// quadrature on the fine triangles, or point values at coarse vertices.
    pub fn observe_function(
        &self,
        dofmap: &DofMap,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Result<Vec<f64>> {
        let nc = self.num_coarse;
        let mut out = vec![0.0; 2 * nc];
        match self.kind {
            InterpolantKind::PiecewiseConstantAverage => {
                let rule = quadrature_rule(8)?;
                let inv_area = 1.0 / self.grid.cell_area();
                for cell in 0..nc {
                    let mut acc = [0.0; 2];
                    for &t in self.grid.fine_triangles(cell) {
                        let map = AffineMap::new(dofmap.element_coords(t));
                        for (p, w) in rule.points().iter().zip(rule.weights()) {
                            let x = map.to_physical(*p);
                            let v = f(x[0], x[1]);
                            acc[0] += w * map.det() * v[0];
                            acc[1] += w * map.det() * v[1];
                        }
                    }
                    out[cell] = acc[0] * inv_area;
                    out[nc + cell] = acc[1] * inv_area;
                }
            }
            InterpolantKind::CoarseLagrangeP1 => {
                for (i, x) in self.grid.coarse_vertices().iter().enumerate() {
                    let v = f(x[0], x[1]);
                    out[i] = v[0];
                    out[nc + i] = v[1];
                }
            }
        }
        Ok(out)
    }

    /// Value of the reconstructed coarse function at `point`.
    pub fn eval_coarse(&self, coarse: &[f64], point: [f64; 2]) -> Result<[f64; 2]> {
        let nc = self.num_coarse;
        let cell = self.grid.locate_cell(point)?;
        match self.kind {
            InterpolantKind::PiecewiseConstantAverage => Ok([coarse[cell], coarse[nc + cell]]),
            InterpolantKind::CoarseLagrangeP1 => {
                let m = self.grid.cells_per_side();
                let (ci, cj) = self.grid.cell_position(cell);
                let hc = self.grid.width();
                let s = (point[0] - ci as f64 * hc) / hc;
                let r = (point[1] - cj as f64 * hc) / hc;
                let sw = cj * (m + 1) + ci;
                let (se, nw, ne) = (sw + 1, sw + m + 1, sw + m + 2);
                // lower-right triangle (sw, se, ne) when s >= r, else (sw, ne, nw)
                let (nodes, weights) = if s >= r {
                    ([sw, se, ne], [1.0 - s, s - r, r])
                } else {
                    ([sw, ne, nw], [1.0 - r, s, r - s])
                };
                let mut v = [0.0; 2];
                for (node, w) in nodes.iter().zip(weights) {
                    v[0] += w * coarse[*node];
                    v[1] += w * coarse[nc + *node];
                }
                Ok(v)
            }
        }
    }

    /// Nudging Gram matrix `Eᵀ (W ⊗ I₂) E`, realising `(I_H φ_j, I_H φ_i)`.
    pub fn nudging_matrix(&self) -> Result<SparseMatrix> {
        let nc = self.num_coarse;
        let mut trip = Vec::new();
        for i in 0..nc {
            for (j, w) in self.gram.row(i) {
                for c in 0..2 {
                    trip.push((c * nc + i, c * nc + j, w));
                }
            }
        }
        let w2 = SparseMatrix::from_triplets(2 * nc, 2 * nc, &trip);
        let et = self.extract.transpose();
        et.matmul(&w2)?.matmul(&self.extract)
    }
}

/// P1 mass matrix on the `m x m` coarse squares split SW-NE.
fn coarse_p1_mass(m: usize) -> SparseMatrix {
    let hc = 1.0 / m as f64;
    let area = 0.5 * hc * hc;
    let stride = m + 1;
    let mut trip = Vec::with_capacity(18 * m * m);
    for j in 0..m {
        for i in 0..m {
            let sw = j * stride + i;
            let (se, nw, ne) = (sw + 1, sw + stride, sw + stride + 1);
            for tri in [[sw, se, ne], [sw, ne, nw]] {
                for a in 0..3 {
                    for b in 0..3 {
                        let f = if a == b { 2.0 } else { 1.0 };
                        trip.push((tri[a], tri[b], area * f / 12.0));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(stride * stride, stride * stride, &trip)
}

pub fn apply_interpolant(
    kind: InterpolantKind,
    grid: &CoarseGrid,
    dofmap: &DofMap,
    field: &[f64],
) -> Result<CoarseField> {
    let op = ObservationOperator::new(kind, grid, dofmap)?;
    let stacked = op.apply(field)?;
    let nc = op.num_coarse();
    Ok(CoarseField {
        kind,
        values: (0..nc).map(|i| [stacked[i], stacked[nc + i]]).collect(),
    })
}

/// `‖I_H v‖₀`, `‖v − I_H v‖₀`, `‖∇v‖₀` and `‖v‖₀` for a P2 field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub interpolant: f64,
    pub residual: f64,
    pub gradient: f64,
    pub field: f64,
}

impl ObservationOperator {
    /// Norms by fine-triangle quadrature, with `I_H v` evaluated pointwise as a
    /// function (each fine triangle lies inside one coarse triangle).
    pub fn residual_norms(&self, dofmap: &DofMap, field: &[f64]) -> Result<ResidualNorms> {
        let coarse = self.apply(field)?;
        let rule = quadrature_rule(6)?;
        let (mut ih, mut res, mut grad, mut full) = (0.0, 0.0, 0.0, 0.0);
        for e in 0..dofmap.num_elements() {
            let map = AffineMap::new(dofmap.element_coords(e));
            for (p, w) in rule.points().iter().zip(rule.weights()) {
                let wd = w * map.det();
                let x = map.to_physical(*p);
                let (v, g) = eval_p2_field_grad(dofmap, field, e, *p);
                let iv = self.eval_coarse(&coarse, x)?;
                for c in 0..2 {
                    ih += wd * iv[c] * iv[c];
                    res += wd * (v[c] - iv[c]).powi(2);
                    grad += wd * (g[c][0] * g[c][0] + g[c][1] * g[c][1]);
                    full += wd * v[c] * v[c];
                }
            }
        }
        Ok(ResidualNorms {
            interpolant: ih.sqrt(),
            residual: res.sqrt(),
            gradient: grad.sqrt(),
            field: full.sqrt(),
        })
    }
}

pub fn interpolant_residual_norms(
    kind: InterpolantKind,
    grid: &CoarseGrid,
    dofmap: &DofMap,
    field: &[f64],
) -> Result<ResidualNorms> {
    ObservationOperator::new(kind, grid, dofmap)?.residual_norms(dofmap, field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantQuality {
    /// sup ‖I_H v‖₀ / ‖v‖₀
    pub c0_measured: f64,
    /// sup ‖v − I_H v‖₀ / (H ‖∇v‖₀)
    pub ci_measured: f64,
    pub sample: String,
}

pub fn measure_constants(
    kind: InterpolantKind,
    grid: &CoarseGrid,
    dofmap: &DofMap,
    sample: &[Vec<f64>],
) -> Result<InterpolantQuality> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty field sample".into()));
    }
    let op = ObservationOperator::new(kind, grid, dofmap)?;
    let h_coarse = grid.width();
    let (mut c0, mut ci) = (0.0f64, 0.0f64);
    for field in sample {
        let r = op.residual_norms(dofmap, field)?;
        if r.field == 0.0 || r.gradient == 0.0 {
            return Err(Error::InvalidInput("sample contains a constant or zero field".into()));
        }
        c0 = c0.max(r.interpolant / r.field);
        ci = ci.max(r.residual / (h_coarse * r.gradient));
    }
    Ok(InterpolantQuality {
        c0_measured: c0,
        ci_measured: ci,
        sample: format!("{} fields, N = {}, H = {}", sample.len(), dofmap.mesh_n(), h_coarse),
    })
}

/// Smooth trigonometric fields at frequencies 1..=4 plus `random` fields with
/// uniformly random P2 coefficients in [-1, 1].
pub fn standard_sample(dofmap: &DofMap, random: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    let mut sample: Vec<Vec<f64>> = (1..=4)
        .map(|m| {
            let w = m as f64 * PI;
            crate::fem::interpolate_p2(dofmap, |x, y| {
                [(w * x).sin() * (w * y).sin(), (w * x).cos() * (2.0 * w * y).sin()]
            })
        })
        .collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let nv = dofmap.num_velocity_dofs();
    for _ in 0..random {
        sample.push((0..nv).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    sample
}

/// Logarithmic peaks `log(H / max(r, h))` centred on interior coarse vertices.
/// Their nodal values are unbounded relative to `‖∇v‖₀` as `H/h` grows.
pub fn peaked_sample(dofmap: &DofMap, grid: &CoarseGrid) -> Vec<Vec<f64>> {
    let h = 1.0 / dofmap.mesh_n() as f64;
    let hc = grid.width();
    let m = grid.cells_per_side();
    let mut out = Vec::new();
    for (j, i) in [(1, 1), (m / 2, m / 2), (m - 1, 1)] {
        if i == 0 || j == 0 || i >= m || j >= m {
            continue;
        }
        let centre = [i as f64 * hc, j as f64 * hc];
        out.push(crate::fem::interpolate_p2(dofmap, |x, y| {
            let r = ((x - centre[0]).powi(2) + (y - centre[1]).powi(2)).sqrt();
            let v = (hc / r.max(h)).ln().max(0.0);
            [v, -0.5 * v]
        }));
    }
    out
}
