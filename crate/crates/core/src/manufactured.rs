//! Closed-form Navier–Stokes solution on the unit square and its forcing.
//!
//! The velocity is the curl of the stream function
//! `ψ = g(t) · 8 sin²(πx) · (y(1-y))²` with `g(t) = (6 + 4 cos 4t) / 10`, so
//! `u = (∂ψ/∂y, -∂ψ/∂x)` is divergence free and vanishes on the boundary.
//! The pressure is `p = g(t) sin(πx) cos(πy)`.
//!
//! Writing `S(x) = sin²(πx)` and `Q(y) = (y(1-y))²`:
//! `u₁ = 8g S Q'`, `u₂ = -8g S' Q`.

use std::f64::consts::PI;

/// Time amplitude `g(t)`.
pub fn amplitude(t: f64) -> f64 {
    (6.0 + 4.0 * (4.0 * t).cos()) / 10.0
}

pub fn amplitude_dt(t: f64) -> f64 {
    -1.6 * (4.0 * t).sin()
}

/// `S` and its first three derivatives.
fn s_derivs(x: f64) -> [f64; 4] {
    let s = (PI * x).sin();
    let (s2, c2) = (2.0 * PI * x).sin_cos();
    [s * s, PI * s2, 2.0 * PI * PI * c2, -4.0 * PI.powi(3) * s2]
}

/// `Q` and its first three derivatives.
fn q_derivs(y: f64) -> [f64; 4] {
    let w = y * (1.0 - y);
    [
        w * w,
        2.0 * w * (1.0 - 2.0 * y),
        2.0 * (1.0 - 6.0 * y + 6.0 * y * y),
        24.0 * y - 12.0,
    ]
}

/// Time-independent spatial profile `U(x, y)` with `u = g(t) U`.
pub fn velocity_profile(x: f64, y: f64) -> [f64; 2] {
    let s = s_derivs(x);
    let q = q_derivs(y);
    [8.0 * s[0] * q[1], -8.0 * s[1] * q[0]]
}

/// Gradient of the profile: `grad[c][d] = ∂_d U_c`.
pub fn velocity_profile_grad(x: f64, y: f64) -> [[f64; 2]; 2] {
    let s = s_derivs(x);
    let q = q_derivs(y);
    [
        [8.0 * s[1] * q[1], 8.0 * s[0] * q[2]],
        [-8.0 * s[2] * q[0], -8.0 * s[1] * q[1]],
    ]
}

pub fn velocity_profile_laplacian(x: f64, y: f64) -> [f64; 2] {
    let s = s_derivs(x);
    let q = q_derivs(y);
    [
        8.0 * (s[2] * q[1] + s[0] * q[3]),
        -8.0 * (s[3] * q[0] + s[1] * q[2]),
    ]
}

/// Pressure profile `P(x, y)` with `p = g(t) P`.
pub fn pressure_profile(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).cos()
}

pub fn pressure_profile_grad(x: f64, y: f64) -> [f64; 2] {
    let (sx, cx) = (PI * x).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    [PI * cx * cy, -PI * sx * sy]
}

pub fn eval_u(x: f64, y: f64, t: f64) -> [f64; 2] {
    let g = amplitude(t);
    velocity_profile(x, y).map(|v| g * v)
}

pub fn eval_grad_u(x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
    let g = amplitude(t);
    velocity_profile_grad(x, y).map(|r| r.map(|v| g * v))
}

pub fn eval_laplacian_u(x: f64, y: f64, t: f64) -> [f64; 2] {
    let g = amplitude(t);
    velocity_profile_laplacian(x, y).map(|v| g * v)
}

pub fn eval_dt_u(x: f64, y: f64, t: f64) -> [f64; 2] {
    let gt = amplitude_dt(t);
    velocity_profile(x, y).map(|v| gt * v)
}

pub fn eval_p(x: f64, y: f64, t: f64) -> f64 {
    amplitude(t) * pressure_profile(x, y)
}

pub fn eval_grad_p(x: f64, y: f64, t: f64) -> [f64; 2] {
    let g = amplitude(t);
    pressure_profile_grad(x, y).map(|v| g * v)
}

/// `f = ∂ₜu − νΔu + (u·∇)u + ∇p`.
pub fn eval_f(x: f64, y: f64, t: f64, nu: f64) -> [f64; 2] {
    let parts = ForcingParts::at(x, y);
    parts.combine(t, nu)
}

/// Spatial pieces of the forcing, so that
/// `f(t) = g'(t) U + g(t) (−νΔU + ∇P) + g(t)² (U·∇)U`.
#[derive(Debug, Clone, Copy)]
pub struct ForcingParts {
    pub profile: [f64; 2],
    pub laplacian: [f64; 2],
    pub pressure_grad: [f64; 2],
    pub advection: [f64; 2],
}

impl ForcingParts {
    pub fn at(x: f64, y: f64) -> Self {
        let u = velocity_profile(x, y);
        let g = velocity_profile_grad(x, y);
        Self {
            profile: u,
            laplacian: velocity_profile_laplacian(x, y),
            pressure_grad: pressure_profile_grad(x, y),
            advection: [
                u[0] * g[0][0] + u[1] * g[0][1],
                u[0] * g[1][0] + u[1] * g[1][1],
            ],
        }
    }

    pub fn combine(&self, t: f64, nu: f64) -> [f64; 2] {
        let g = amplitude(t);
        let gt = amplitude_dt(t);
        [0, 1].map(|c| {
            gt * self.profile[c]
                + g * (-nu * self.laplacian[c] + self.pressure_grad[c])
                + g * g * self.advection[c]
        })
    }
}

/// The manufactured pair, for callers that want a value type.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSolution;

impl ExactSolution {
    pub fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        eval_u(x, y, t)
    }

    pub fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        eval_p(x, y, t)
    }

    pub fn forcing(&self, x: f64, y: f64, t: f64, nu: f64) -> [f64; 2] {
        eval_f(x, y, t, nu)
    }

    /// `‖u(·, 0)‖²` in closed form: `16/35 + 16π²/315`, scaled by `g(t)²`.
    pub fn velocity_norm_sq(&self, t: f64) -> f64 {
        amplitude(t).powi(2) * (16.0 / 35.0 + 16.0 * PI * PI / 315.0)
    }
}
