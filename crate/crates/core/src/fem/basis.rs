//! Lagrange bases on the reference triangle. Gradients are with respect to
//! the reference coordinates `(ξ, η) = (λ1, λ2)`.
//!
//! P2 local numbering: vertices 0, 1, 2, then the midpoints of edges
//! (0,1), (1,2), (2,0).

const GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Local vertex pairs for the P2 edge functions 3, 4, 5.
pub const P2_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn eval_basis_p1(bary: [f64; 3]) -> ([f64; 3], [[f64; 2]; 3]) {
    (bary, GRAD_LAMBDA)
}

pub fn eval_basis_p2(bary: [f64; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let l = bary;
    let g = GRAD_LAMBDA;
    let mut values = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    for i in 0..3 {
        values[i] = l[i] * (2.0 * l[i] - 1.0);
        let s = 4.0 * l[i] - 1.0;
        grads[i] = [s * g[i][0], s * g[i][1]];
    }
    for (e, &(a, b)) in P2_EDGES.iter().enumerate() {
        values[3 + e] = 4.0 * l[a] * l[b];
        grads[3 + e] = [
            4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
            4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
        ];
    }
    (values, grads)
}

/// P2 values only (cheaper when gradients are not needed).
pub fn p2_values(bary: [f64; 3]) -> [f64; 6] {
    let l = bary;
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}
