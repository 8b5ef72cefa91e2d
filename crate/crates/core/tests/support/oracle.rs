//! Brute-force least-squares fits found by Nelder-Mead search over the model
//! parameters, without any eigendecomposition.

use colorseg::{ColourVec, Rank, RegionStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= 1e-15 * values[0].abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let xc = if fr < values[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}

fn unit(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Two unit vectors orthogonal to `d` and to each other.
fn complement(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let h = if d[0].abs() < 0.6 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = [d[1] * h[2] - d[2] * h[1], d[2] * h[0] - d[0] * h[2], d[0] * h[1] - d[1] * h[0]];
    let un = dot(u, u).sqrt();
    let u = [u[0] / un, u[1] / un, u[2] / un];
    let v = [d[1] * u[2] - d[2] * u[1], d[2] * u[0] - d[0] * u[2], d[0] * u[1] - d[1] * u[0]];
    (u, v)
}

/// Sum of squared distances to the point `x`.
fn point_cost(pts: &[[f64; 3]], x: &[f64]) -> f64 {
    pts.iter().map(|p| (0..3).map(|k| (p[k] - x[k]).powi(2)).sum::<f64>()).sum()
}

/// Line through `o + s·u + t·v` with direction `d(θ, φ)`; `x = [θ, φ, s, t]`.
fn line_cost(pts: &[[f64; 3]], anchor: [f64; 3], x: &[f64]) -> f64 {
    let d = unit(x[0], x[1]);
    let (u, v) = complement(d);
    let o: [f64; 3] = std::array::from_fn(|k| anchor[k] + x[2] * u[k] + x[3] * v[k]);
    pts.iter()
        .map(|p| {
            let r: [f64; 3] = std::array::from_fn(|k| p[k] - o[k]);
            let along = dot(r, d);
            dot(r, r) - along * along
        })
        .sum()
}

/// Plane `n(θ, φ)·p = c`; `x = [θ, φ, c]`.
fn plane_cost(pts: &[[f64; 3]], x: &[f64]) -> f64 {
    let n = unit(x[0], x[1]);
    pts.iter().map(|p| (dot(*p, n) - x[2]).powi(2)).sum()
}

fn multistart(f: &dyn Fn(&[f64]) -> f64, starts: Vec<Vec<f64>>) -> f64 {
    let mut best = f64::INFINITY;
    for s in starts {
        let (x, _) = nelder_mead(f, &s, 0.3, 4000);
        // restart from the optimum to escape premature collapse
        let (_, v) = nelder_mead(f, &x, 1e-3, 4000);
        best = best.min(v);
    }
    best
}

pub fn brute_force(pts: &[[f64; 3]], rank: Rank) -> f64 {
    let anchor: [f64; 3] = std::array::from_fn(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64);
    let angles: Vec<(f64, f64)> = (0..4)
        .flat_map(|i| (0..4).map(move |j| (0.2 + 0.7 * i as f64, 0.3 + 1.5 * j as f64)))
        .collect();
    match rank {
        Rank::Point => multistart(&|x| point_cost(pts, x), vec![vec![0.0; 3], anchor.to_vec()]),
        Rank::Line => multistart(
            &|x| line_cost(pts, anchor, x),
            angles.iter().map(|&(t, p)| vec![t, p, 0.0, 0.0]).collect(),
        ),
        Rank::Plane => multistart(
            &|x| plane_cost(pts, x),
            angles.iter().map(|&(t, p)| vec![t, p, dot(anchor, unit(t, p))]).collect(),
        ),
    }
}

/// Compares `rank_ssd` with the brute-force fits on `cases` random sets of
/// 1 to 10 points for every rank. Returns the worst relative deviation, or
/// the first case exceeding `tolerance`.
pub fn check_random_sets(seed: u64, cases: usize, tolerance: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let n = rng.random_range(1..=10);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let colours: Vec<ColourVec> = pts.iter().map(|p| ColourVec::new(p[0], p[1], p[2])).collect();
        let stats = RegionStats::from_pixels(&colours, &colours);
        let scale = point_cost(&pts, &brute_force_mean(&pts));
        for rank in [Rank::Point, Rank::Line, Rank::Plane] {
            let fast = stats.rank_ssd(rank).map_err(|e| e.to_string())?;
            let slow = brute_force(&pts, rank);
            if slow.max(fast) < 1e-15 * scale.max(1.0) {
                continue;
            }
            let err = (fast - slow).abs() / slow.max(1e-9 * scale).max(1e-300);
            worst = worst.max(err);
            if err > tolerance {
                return Err(format!("case {case}, n = {n}, {rank:?}: fast {fast:e} vs brute force {slow:e}"));
            }
        }
    }
    Ok(worst)
}

fn brute_force_mean(pts: &[[f64; 3]]) -> Vec<f64> {
    (0..3).map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64).collect()
}
