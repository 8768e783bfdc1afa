//! Quadrature rules on triangles (barycentric points, weights summing to 1)
//! and on edges (parameter in [0, 1]).

use alloc::vec::Vec;

/// Edge-midpoint rule, exact for quadratics. Point `k` is the midpoint of
/// local edge `k`.
pub const EDGE_MIDPOINT: [([f64; 3], f64); 3] = [
    ([0.0, 0.5, 0.5], 1.0 / 3.0),
    ([0.5, 0.0, 0.5], 1.0 / 3.0),
    ([0.5, 0.5, 0.0], 1.0 / 3.0),
];

const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_34;
const W1: f64 = 0.132_394_152_788_506_18;
const W2: f64 = 0.125_939_180_544_827_15;

/// Seven-point rule exact for polynomials of degree 5.
pub const DEGREE5: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([A1, B1, B1], W1),
    ([B1, A1, B1], W1),
    ([B1, B1, A1], W1),
    ([A2, B2, B2], W2),
    ([B2, A2, B2], W2),
    ([B2, B2, A2], W2),
];

/// Three-point Gauss-Legendre rule on [0, 1].
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Degree-5 rule on each of the `k^2` congruent sub-triangles of a uniform
/// `k`-fold subdivision.
pub fn subdivided(k: usize) -> Vec<([f64; 3], f64)> {
    let k = k.max(1);
    let h = 1.0 / k as f64;
    let w = 1.0 / (k * k) as f64;
    let mut out = Vec::with_capacity(7 * k * k);
    let mut push = |c: [[f64; 2]; 3]| {
        for (b, wq) in DEGREE5 {
            let x = b[0] * c[0][0] + b[1] * c[1][0] + b[2] * c[2][0];
            let y = b[0] * c[0][1] + b[1] * c[1][1] + b[2] * c[2][1];
            out.push(([1.0 - x - y, x, y], wq * w));
        }
    };
    // (x, y) are the barycentric coordinates of vertices 1 and 2.
    for i in 0..k {
        for j in 0..k - i {
            let (x, y) = (i as f64 * h, j as f64 * h);
            push([[x, y], [x + h, y], [x, y + h]]);
            if i + j + 1 < k {
                push([[x + h, y], [x + h, y + h], [x, y + h]]);
            }
        }
    }
    out
}
