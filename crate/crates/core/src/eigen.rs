//! Eigendecomposition of real symmetric 3x3 matrices.
//!
//! Eigenvalues come from the closed-form trigonometric solution of the
//! characteristic cubic. Eigenvectors are taken from cross products of rows
//! of `A - λI`. Near a repeated root the trigonometric solution loses about
//! half the significant digits and the cross products are ill-conditioned,
//! so when two eigenvalues are closer than [`DEGENERACY_GAP`] (relative to
//! the spectral radius) a cyclic Jacobi iteration is used instead.

use crate::colour::{ColourVec, Sym3};
use std::f64::consts::PI;

/// Relative eigenvalue gap below which the Jacobi fallback is used.
pub const DEGENERACY_GAP: f64 = 1e-5;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigenvalues of `m`, sorted descending. Not clamped.
pub fn eigenvalues(m: &Sym3) -> [f64; 3] {
    let values = closed_form(m);
    if degenerate(&values) {
        jacobi(m).0
    } else {
        values
    }
}

fn degenerate(values: &[f64; 3]) -> bool {
    let scale = values[0].abs().max(values[2].abs());
    let gap = (values[0] - values[1]).min(values[1] - values[2]);
    scale == 0.0 || gap <= DEGENERACY_GAP * scale
}

/// Trigonometric roots of the characteristic cubic, sorted descending.
pub fn closed_form(m: &Sym3) -> [f64; 3] {
    let q = m.trace() / 3.0;
    let p1 = m.xy * m.xy + m.xz * m.xz + m.yz * m.yz;
    let (dx, dy, dz) = (m.xx - q, m.yy - q, m.zz - q);
    let p2 = dx * dx + dy * dy + dz * dz + 2.0 * p1;
    if p2 <= f64::MIN_POSITIVE {
        return [q, q, q];
    }
    let p = (p2 / 6.0).sqrt();
    let b = Sym3 {
        xx: dx / p,
        yy: dy / p,
        zz: dz / p,
        xy: m.xy / p,
        xz: m.xz / p,
        yz: m.yz / p,
    };
    let r = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    let mut out = [l1, l2, l3];
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Full decomposition: eigenvalues sorted descending and matching
/// orthonormal eigenvectors. Each eigenvector has its largest-magnitude
/// component positive.
pub fn decompose(m: &Sym3) -> ([f64; 3], [ColourVec; 3]) {
    let values = closed_form(m);
    let (values, vectors) = if degenerate(&values) {
        jacobi(m)
    } else {
        let e1 = null_vector(m, values[0]);
        let e3 = null_vector(m, values[2]);
        let e3 = (e3 - e1 * e1.dot(&e3)).normalized();
        let e2 = e3.cross(&e1).normalized();
        (values, [e1, e2, e3])
    };
    (values, vectors.map(canonical_sign))
}

/// Cyclic Jacobi eigendecomposition, sorted descending.
pub fn jacobi(m: &Sym3) -> ([f64; 3], [ColourVec; 3]) {
    let mut a = m.to_array();
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let norm: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= f64::EPSILON * 1e-2 * norm || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.map(|i| a[i][i]);
    let vectors = order.map(|i| ColourVec::new(v[0][i], v[1][i], v[2][i]).normalized());
    (values, vectors)
}

/// Unit vector spanning the null space of `m - λI`, assuming λ is simple.
fn null_vector(m: &Sym3, lambda: f64) -> ColourVec {
    let r0 = ColourVec::new(m.xx - lambda, m.xy, m.xz);
    let r1 = ColourVec::new(m.xy, m.yy - lambda, m.yz);
    let r2 = ColourVec::new(m.xz, m.yz, m.zz - lambda);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sq().total_cmp(&b.norm_sq()))
        .unwrap_or_default();
    best.normalized()
}

fn canonical_sign(v: ColourVec) -> ColourVec {
    let c = v.to_array();
    let mut idx = 0;
    for i in 1..3 {
        if c[i].abs() > c[idx].abs() {
            idx = i;
        }
    }
    if c[idx] < 0.0 {
        -v
    } else {
        v
    }
}
