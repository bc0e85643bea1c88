//! Outer-approximation cuts for rotated cone blocks.
//!
//! A block `sum_k p_k^2 <= a b` with `a, b >= 0` is handled through the
//! equivalent second-order form `||(2p, a-b)|| <= a + b`. Separation
//! linearizes the convex function `g(x) = ||(2p, a-b)|| - (a+b)` at the
//! violated point; because `g` is positively homogeneous the tangent cut
//! always has a zero right-hand side before constant sides are folded in.

use crate::model::{ConeBlock, ConeSide};

/// A valid linear inequality `coeffs . x <= rhs` for one cone block.
#[derive(Debug, Clone)]
pub struct Cut {
    pub coeffs: Vec<(u32, f64)>,
    pub rhs: f64,
    pub block: usize,
}

impl Cut {
    pub fn violation(&self, point: &[f64]) -> f64 {
        let lhs: f64 = self
            .coeffs
            .iter()
            .map(|&(c, v)| v * point[c as usize])
            .sum();
        lhs - self.rhs
    }
}

fn push_side(coeffs: &mut Vec<(u32, f64)>, rhs: &mut f64, side: &ConeSide, coef: f64) {
    match *side {
        ConeSide::Col(c) => coeffs.push((c, coef)),
        ConeSide::Const(v) => *rhs -= coef * v,
    }
}

/// Separate the block at `point`: returns a cut the point violates, or
/// `None` when the point satisfies the cone within `tol`.
pub fn separate_cone_cut(
    block: &ConeBlock,
    block_id: usize,
    point: &[f64],
    tol: f64,
) -> Option<Cut> {
    let side = |s: &ConeSide| -> f64 {
        match *s {
            ConeSide::Col(c) => point[c as usize],
            ConeSide::Const(v) => v,
        }
    };
    let a = side(&block.a);
    let b = side(&block.b);
    let mut p2 = 0.0;
    for &c in &block.p {
        let v = point[c as usize];
        p2 += v * v;
    }
    let nu = (4.0 * p2 + (a - b) * (a - b)).sqrt();
    let g = nu - (a + b);
    if g <= tol {
        return None;
    }

    let mut coeffs: Vec<(u32, f64)> = Vec::new();
    let mut rhs = 0.0;
    if nu > 1e-12 {
        for &c in &block.p {
            let grad = 4.0 * point[c as usize] / nu;
            if grad != 0.0 {
                coeffs.push((c, grad));
            }
        }
        push_side(&mut coeffs, &mut rhs, &block.a, (a - b) / nu - 1.0);
        push_side(&mut coeffs, &mut rhs, &block.b, -(a - b) / nu - 1.0);
    } else {
        // nondifferentiable apex: the point sits at p = 0, a = b with
        // a + b < 0; any unit subgradient reduces to requiring a + b >= 0
        push_side(&mut coeffs, &mut rhs, &block.a, -1.0);
        push_side(&mut coeffs, &mut rhs, &block.b, -1.0);
    }
    Some(Cut {
        coeffs,
        rhs,
        block: block_id,
    })
}

/// Tangent cuts at evenly spaced angles used to seed every block before the
/// root solve: `2 (cos t P + sin t Q) <= a + b`, valid by the arithmetic-
/// geometric mean bound.
pub fn seed_cuts(block: &ConeBlock, block_id: usize, count: usize) -> Vec<Cut> {
    let mut cuts = Vec::with_capacity(count);
    if block.p.len() != 2 || count == 0 {
        return cuts;
    }
    for k in 0..count {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
        let (s, c) = theta.sin_cos();
        let mut coeffs = vec![(block.p[0], 2.0 * c), (block.p[1], 2.0 * s)];
        let mut rhs = 0.0;
        push_side(&mut coeffs, &mut rhs, &block.a, -1.0);
        push_side(&mut coeffs, &mut rhs, &block.b, -1.0);
        cuts.push(Cut {
            coeffs,
            rhs,
            block: block_id,
        });
    }
    cuts
}
