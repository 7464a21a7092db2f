//! Property suite: discrete identities that need no long simulation.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::assembly::{assemble_convection, assemble_graddiv, assemble_mass, assemble_nudging, assemble_stiffness};
use crate::error::Result;
use crate::fem::{build_dofmap, eval_p2_field_grad, quadrature_rule, AffineMap, DofMap};
use crate::harness::studies::Gate;
use crate::manufactured::{eval_f, eval_grad_u, eval_p, eval_u};
use crate::mesh::{build_coarse_grid, build_fine_mesh};
use crate::observe::{measure_constants, standard_sample, InterpolantKind, ObservationOperator};
use crate::solver::{DIVERGENCE_TOL, MEAN_TOL};
use crate::timeloop::{Simulation, SimulationConfig};

/// One measured property and its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl PropertyCheck {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }

    pub fn gate(&self) -> Gate {
        Gate::new(
            self.name,
            self.passed(),
            format!("{:.3e} (tolerance {:.0e})", self.measured, self.tolerance),
        )
    }
}

fn random_field(d: &DofMap, rng: &mut StdRng, zero_boundary: bool) -> Vec<f64> {
    let mask = d.velocity_boundary_mask();
    (0..d.num_velocity_dofs())
        .map(|i| if zero_boundary && mask[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect()
}

/// `max |vᵀ C(w) v|` over 50 random pairs on N ∈ {2, 4, 8}, with `w`
/// vanishing on the boundary.
pub fn skew_symmetry(seed: u64) -> Result<f64> {
    let rule = quadrature_rule(5)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (i, n) in [2usize, 4, 8].into_iter().enumerate() {
        let d = build_dofmap(&build_fine_mesh(n)?);
        let pairs = if i == 2 { 16 } else { 17 };
        for _ in 0..pairs {
            let w = random_field(&d, &mut rng, true);
            let v = random_field(&d, &mut rng, false);
            worst = worst.max(assemble_convection(&d, &rule, &w)?.bilinear(&v, &v).abs());
        }
    }
    Ok(worst)
}

/// `‖v‖₀²`, `‖∇v‖₀²`, `‖∇·v‖₀²` by pointwise evaluation with a degree-6 rule.
fn direct_norms(d: &DofMap, v: &[f64]) -> Result<[f64; 3]> {
    let rule = quadrature_rule(6)?;
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
    Ok(out)
}

/// Largest relative gap between `vᵀ X v` and direct quadrature for
/// X = M, K, G and both nudging matrices B, over random fields at N = 6.
pub fn gram_consistency(seed: u64) -> Result<[f64; 4]> {
    let rule = quadrature_rule(5)?;
    let mesh = build_fine_mesh(6)?;
    let d = build_dofmap(&mesh);
    let grid = build_coarse_grid(&mesh, 3)?;
    let (m, k, g) = (assemble_mass(&d, &rule), assemble_stiffness(&d, &rule), assemble_graddiv(&d, &rule));
    let kinds = [InterpolantKind::PiecewiseConstantAverage, InterpolantKind::CoarseLagrangeP1];
    let mut nudging = Vec::new();
    for kind in kinds {
        nudging.push((assemble_nudging(&d, &grid, kind)?, ObservationOperator::new(kind, &grid, &d)?));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for _ in 0..10 {
        let v = random_field(&d, &mut rng, false);
        let [l2, h1, dv] = direct_norms(&d, &v)?;
        worst[0] = worst[0].max(rel(m.bilinear(&v, &v), l2));
        worst[1] = worst[1].max(rel(k.bilinear(&v, &v), h1));
        worst[2] = worst[2].max(rel(g.bilinear(&v, &v), dv));
        for (b, op) in &nudging {
            let ih = op.residual_norms(&d, &v)?.interpolant;
            worst[3] = worst[3].max(rel(b.bilinear(&v, &v), ih * ih));
        }
    }
    Ok(worst)
}

/// Pythagoras defect `|‖I_H v‖² + ‖v − I_H v‖² − ‖v‖²|` and measured `c₀`
/// of the piecewise-constant projection.
pub fn projection_properties(seed: u64) -> Result<(f64, f64)> {
    let mesh = build_fine_mesh(12)?;
    let d = build_dofmap(&mesh);
    let grid = build_coarse_grid(&mesh, 3)?;
    let kind = InterpolantKind::PiecewiseConstantAverage;
    let op = ObservationOperator::new(kind, &grid, &d)?;
    let sample = standard_sample(&d, 20, seed);
    let mut defect = 0.0f64;
    for v in &sample {
        let r = op.residual_norms(&d, v)?;
        defect = defect.max((r.interpolant.powi(2) + r.residual.powi(2) - r.field.powi(2)).abs());
    }
    let c0 = measure_constants(kind, &grid, &d, &sample)?.c0_measured;
    Ok((defect, c0))
}

/// `max |Q(x^a y^b) − a! b! / (a + b + 2)!|` over every supported rule and
/// every monomial within its degree.
pub fn quadrature_exactness() -> Result<f64> {
    let factorial = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let mut worst = 0.0f64;
    for degree in 1..=10 {
        let r = quadrature_rule(degree)?;
        for a in 0..=r.degree() as u32 {
            for b in 0..=(r.degree() as u32 - a) {
                let q = r.integrate_reference(|x, y| x.powi(a as i32) * y.powi(b as i32));
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                worst = worst.max((q - exact).abs());
            }
        }
    }
    Ok(worst)
}

/// `max |f − (∂ₜu − νΔu + (u·∇)u + ∇p)|` with the right side by central
/// differences of step 1e-4, at 200 random points.
pub fn forcing_residual(seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (x, y, t): (f64, f64, f64) = (rng.random(), rng.random(), 4.0 * rng.random::<f64>());
        let nu = [1.0, 1e-2, 1e-6][rng.random_range(0..3)];
        let u = eval_u(x, y, t);
        let f = eval_f(x, y, t, nu);
        let gp = [
            (eval_p(x + h, y, t) - eval_p(x - h, y, t)) / (2.0 * h),
            (eval_p(x, y + h, t) - eval_p(x, y - h, t)) / (2.0 * h),
        ];
        for c in 0..2 {
            let comp = |a: f64, b: f64| eval_u(a, b, t)[c];
            let gu = [
                (comp(x + h, y) - comp(x - h, y)) / (2.0 * h),
                (comp(x, y + h) - comp(x, y - h)) / (2.0 * h),
            ];
            let lap = (comp(x + h, y) + comp(x - h, y) + comp(x, y + h) + comp(x, y - h) - 4.0 * comp(x, y)) / (h * h);
            let dt = (eval_u(x, y, t + h)[c] - eval_u(x, y, t - h)[c]) / (2.0 * h);
            let fd = dt - nu * lap + u[0] * gu[0] + u[1] * gu[1] + gp[c];
            worst = worst.max((f[c] - fd).abs());
        }
    }
    worst
}

/// Largest `|∇·u|` at random points and largest `|u|` on a boundary sweep.
pub fn exact_solution_traces(seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut div = 0.0f64;
    for _ in 0..200 {
        let (x, y, t): (f64, f64, f64) = (rng.random(), rng.random(), 4.0 * rng.random::<f64>());
        let g = eval_grad_u(x, y, t);
        div = div.max((g[0][0] + g[1][1]).abs());
    }
    let mut trace = 0.0f64;
    for i in 0..=100 {
        let s = i as f64 / 100.0;
        let t = 0.037 * i as f64;
        for (x, y) in [(s, 0.0), (s, 1.0), (0.0, s), (1.0, s)] {
            let u = eval_u(x, y, t);
            trace = trace.max(u[0].abs()).max(u[1].abs());
        }
    }
    (div, trace)
}

/// Worst `‖D u‖_∞`, `|mᵀp|` and observed-error ratio over a 100-step run.
pub fn step_constraints() -> Result<(f64, f64, f64)> {
    let config = SimulationConfig {
        n: 6,
        k: 3,
        nu: 1e-2,
        mu: 0.05,
        dt: Some(0.01),
        t_final: 1.0,
        ..Default::default()
    };
    let mut sim = Simulation::new(config)?;
    let out = sim.run()?;
    let fold = |f: fn(&crate::timeloop::StepDiagnostics) -> f64| out.diagnostics.iter().map(f).fold(0.0, f64::max);
    Ok((fold(|d| d.div_residual), fold(|d| d.mean_residual), fold(|d| d.obs_ratio)))
}

/// The whole suite, in a fixed order.
pub fn run_property_suite(seed: u64) -> Result<Vec<PropertyCheck>> {
    let check = |name, measured, tolerance| PropertyCheck { name, measured, tolerance };
    let gram = gram_consistency(seed + 1)?;
    let (pythagoras, c0) = projection_properties(seed + 2)?;
    let (div, trace) = exact_solution_traces(seed + 4);
    let (step_div, step_mean, step_ratio) = step_constraints()?;
    Ok(vec![
        check("skew symmetry |v'C(w)v|", skew_symmetry(seed)?, 1e-12),
        check("Gram consistency M", gram[0], 1e-12),
        check("Gram consistency K", gram[1], 1e-12),
        check("Gram consistency G", gram[2], 1e-12),
        check("Gram consistency B", gram[3], 1e-12),
        check("projection Pythagoras", pythagoras, 1e-12),
        check("projection c0 - 1", c0 - 1.0, 1e-12),
        check("quadrature exactness", quadrature_exactness()?, 1e-14),
        check("forcing finite-difference residual", forcing_residual(seed + 3), 1e-5),
        check("exact divergence", div, 1e-13),
        check("exact boundary trace", trace, 1e-13),
        check("step divergence |Du|_inf", step_div, DIVERGENCE_TOL),
        check("step pressure mean |m'p|", step_mean, MEAN_TOL),
        check("step observed ratio - 1", step_ratio - 1.0, 1e-12),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = run_property_suite(17).unwrap();
        assert_eq!(checks.len(), 14);
        for c in &checks {
            assert!(c.passed(), "{}", c.gate().line());
        }
    }
}
