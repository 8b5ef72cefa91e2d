//! Model-guided gates around the merge stages.
//!
//! * Gaussian divergence isolation of rank-0 segments.
//! * The L/T cluster-shape test that decides which rank-2 merges are
//!   allowed.
//! * Absorption of off-scale (overexposed) regions.
//!
//! All thresholds here are in the same units as the colour coordinates
//! stored in the graph.

use crate::colour::{ColourVec, RegionStats, Sym3};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rag::{IsolationMarks, Rag};
use serde::{Deserialize, Serialize};

/// Covariance ridge: one 8-bit quantisation step in normalised units.
pub const KL_RIDGE: f64 = 1.0 / (255.0 * 255.0);

/// Symmetrised KL divergence `½[KL(a‖b) + KL(b‖a)]` between Gaussians
/// fitted to two segments (mean `μ`, covariance `S/n + ridge·I`).
pub fn gaussian_kl(a: &RegionStats, b: &RegionStats) -> Result<f64> {
    gaussian_kl_with_ridge(a, b, KL_RIDGE)
}

pub fn gaussian_kl_with_ridge(a: &RegionStats, b: &RegionStats, ridge: f64) -> Result<f64> {
    let (mean_a, cov_a) = gaussian(a, ridge)?;
    let (mean_b, cov_b) = gaussian(b, ridge)?;
    let singular = || Error::NumericalCorruption {
        value: 0.0,
        tolerance: ridge,
    };
    let inv_a = cov_a.inverse().ok_or_else(singular)?;
    let inv_b = cov_b.inverse().ok_or_else(singular)?;
    let d = mean_b - mean_a;
    // log-determinant terms cancel in the symmetrised form
    let traces = trace_of_product(&inv_b, &cov_a) + trace_of_product(&inv_a, &cov_b);
    let mahalanobis = d.dot(&(inv_a + inv_b).mul_vec(&d));
    Ok((0.25 * (traces + mahalanobis - 6.0)).max(0.0))
}

fn gaussian(st: &RegionStats, ridge: f64) -> Result<(ColourVec, Sym3)> {
    let mean = st.mean().ok_or(Error::EmptySegment)?;
    let cov = st.scatter()? * (1.0 / st.n as f64) + Sym3::IDENTITY * ridge;
    Ok((mean, cov))
}

fn trace_of_product(a: &Sym3, b: &Sym3) -> f64 {
    a.xx * b.xx + a.yy * b.yy + a.zz * b.zz + 2.0 * (a.xy * b.xy + a.xz * b.xz + a.yz * b.yz)
}

/// Marks a segment isolated when its smallest divergence to any neighbour
/// exceeds `sigma_g`. Segments without neighbours are isolated.
pub fn mark_isolated_rank0(rag: &Rag, sigma_g: f64) -> Result<IsolationMarks> {
    mark_isolated_rank0_with(rag, sigma_g, Execution::default())
}

pub fn mark_isolated_rank0_with(rag: &Rag, sigma_g: f64, exec: Execution) -> Result<IsolationMarks> {
    let vertices: Vec<u32> = rag.alive_vertices().collect();
    let flags = par::map_slice(exec, &vertices, |&v| -> Result<bool> {
        let mut d_min = f64::INFINITY;
        for &x in rag.neighbours(v) {
            d_min = d_min.min(gaussian_kl(rag.stats(v), rag.stats(x))?);
        }
        Ok(d_min > sigma_g)
    });
    let mut marks = IsolationMarks::default();
    for (v, flag) in vertices.into_iter().zip(flags) {
        if flag? {
            marks.isolated.insert(v);
        }
    }
    Ok(marks)
}

/// Straight-line segment along the major axis of a segment's dispersion
/// ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLineModel {
    pub center: ColourVec,
    pub direction: ColourVec,
    pub half_length: f64,
}

impl SegmentLineModel {
    pub fn endpoints(&self) -> [ColourVec; 2] {
        let off = self.direction * self.half_length;
        [self.center - off, self.center + off]
    }

    /// Euclidean distance from `p` to the closed segment.
    pub fn distance_to(&self, p: ColourVec) -> f64 {
        let t = (p - self.center).dot(&self.direction);
        let t = t.clamp(-self.half_length, self.half_length);
        (p - (self.center + self.direction * t)).norm()
    }
}

/// Centre `μ`, direction of the largest principal axis and half-length one
/// standard deviation along it (`√(λ₁/n)`).
pub fn line_model(st: &RegionStats) -> Result<SegmentLineModel> {
    let sp = st.spectrum()?;
    Ok(SegmentLineModel {
        center: sp.mean,
        direction: sp.vectors[0],
        half_length: (sp.values[0] / st.n as f64).sqrt(),
    })
}

/// True when some endpoint of either segment lies closer than `delta_l`
/// to the other segment.
pub fn lt_shape_test(a: &SegmentLineModel, b: &SegmentLineModel, delta_l: f64) -> bool {
    a.endpoints().iter().any(|&p| b.distance_to(p) < delta_l)
        || b.endpoints().iter().any(|&p| a.distance_to(p) < delta_l)
}

/// Locks every edge whose endpoints fail [`lt_shape_test`]. Vertex flags
/// are left empty.
pub fn lock_non_lt_edges(rag: &Rag, delta_l: f64) -> Result<IsolationMarks> {
    lock_non_lt_edges_with(rag, delta_l, Execution::default())
}

pub fn lock_non_lt_edges_with(rag: &Rag, delta_l: f64, exec: Execution) -> Result<IsolationMarks> {
    let vertices: Vec<u32> = rag.alive_vertices().collect();
    let models = par::map_slice(exec, &vertices, |&v| line_model(rag.stats(v)));
    let mut by_id = std::collections::HashMap::with_capacity(vertices.len());
    for (v, m) in vertices.into_iter().zip(models) {
        by_id.insert(v, m?);
    }
    let edges = rag.edges();
    let passes = par::map_slice(exec, &edges, |(u, v)| lt_shape_test(&by_id[u], &by_id[v], delta_l));
    Ok(IsolationMarks {
        isolated: Default::default(),
        locked_edges: edges
            .into_iter()
            .zip(passes)
            .filter(|(_, pass)| !pass)
            .map(|(e, _)| e)
            .collect(),
    })
}

/// Absorbs off-scale regions, those with mean original-space brightness
/// above `mu_b`.
///
/// * An off-scale region with exactly one neighbour merges into it.
/// * Two neighbours of an off-scale region that are not adjacent to each
///   other and pass the L/T test with `delta_l` are merged together with
///   it.
///
/// Regions are visited brightest first, neighbour pairs in ascending id
/// order; after every merge the scan restarts, until no rule fires.
/// Returns the number of pairwise merges.
pub fn off_scale_merge(rag: &mut Rag, mu_b: f64, delta_l: f64) -> Result<usize> {
    let mut merges = 0;
    loop {
        let mut candidates: Vec<(f64, u32)> = rag
            .alive_vertices()
            .filter_map(|v| {
                let b = rag.stats(v).mean_brightness()?;
                (b > mu_b).then_some((b, v))
            })
            .collect();
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut action = None;
        'scan: for &(_, r) in &candidates {
            let nb = rag.neighbours(r);
            if nb.len() == 1 {
                action = Some((r, nb[0], None));
                break;
            }
            let models = nb
                .iter()
                .map(|&x| line_model(rag.stats(x)))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !rag.are_adjacent(nb[i], nb[j]) && lt_shape_test(&models[i], &models[j], delta_l) {
                        action = Some((r, nb[i], Some(nb[j])));
                        break 'scan;
                    }
                }
            }
        }

        match action {
            None => return Ok(merges),
            Some((r, x, third)) => {
                let joined = rag.force_merge(r, x)?;
                merges += 1;
                if let Some(y) = third {
                    rag.force_merge(joined, y)?;
                    merges += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colour::Rank;
    use crate::grid::{Grid, LabelMap};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(r: f64, g: f64, b: f64) -> ColourVec {
        ColourVec::new(r, g, b)
    }

    fn st(px: &[ColourVec]) -> RegionStats {
        RegionStats::from_pixels(px, px)
    }

    fn line(center: ColourVec, direction: ColourVec, half_length: f64) -> SegmentLineModel {
        SegmentLineModel {
            center,
            direction: direction.normalized(),
            half_length,
        }
    }

    #[test]
    fn kl_of_identical_segments_is_zero() {
        let a = st(&[c(0.1, 0.2, 0.3), c(0.2, 0.1, 0.3), c(0.4, 0.4, 0.1)]);
        assert!(gaussian_kl(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn kl_is_symmetric() {
        let a = st(&[c(0.1, 0.2, 0.3), c(0.2, 0.1, 0.3)]);
        let b = st(&[c(0.5, 0.5, 0.1), c(0.6, 0.4, 0.2), c(0.7, 0.5, 0.0)]);
        assert_relative_eq!(gaussian_kl(&a, &b).unwrap(), gaussian_kl(&b, &a).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn kl_of_two_singletons() {
        // Σ = ridge·I on both sides: ½[KL + KL] = ½·|Δ|²/ridge
        let delta = c(3.0, -1.0, 2.0) * (1.0 / 255.0);
        let a = st(&[c(0.5, 0.5, 0.5)]);
        let b = st(&[c(0.5, 0.5, 0.5) + delta]);
        let expected = 0.5 * delta.norm_sq() / KL_RIDGE;
        assert_relative_eq!(gaussian_kl(&a, &b).unwrap(), expected, max_relative = 1e-9);
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        // independent check of the closed form: E_a[log p_a - log p_b]
        // sampled, averaged with the reverse direction
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (ma, sa) = (c(0.2, 0.3, 0.4), [0.05, 0.02, 0.03]);
        let (mb, sb) = (c(0.25, 0.28, 0.35), [0.03, 0.04, 0.02]);
        let logpdf = |x: ColourVec, m: ColourVec, s: [f64; 3]| {
            let d = (x - m).to_array();
            (0..3)
                .map(|i| -0.5 * (d[i] / s[i]).powi(2) - s[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum::<f64>()
        };
        let sample = |rng: &mut ChaCha8Rng, m: ColourVec, s: [f64; 3]| {
            let m = m.to_array();
            let v: Vec<f64> = (0..3).map(|i| Normal::new(m[i], s[i]).unwrap().sample(rng)).collect();
            c(v[0], v[1], v[2])
        };
        let n = 200_000;
        let mut kab = 0.0;
        let mut kba = 0.0;
        for _ in 0..n {
            let x = sample(&mut rng, ma, sa);
            kab += logpdf(x, ma, sa) - logpdf(x, mb, sb);
            let y = sample(&mut rng, mb, sb);
            kba += logpdf(y, mb, sb) - logpdf(y, ma, sa);
        }
        let mc = 0.5 * (kab + kba) / n as f64;
        // feed the exact moments through the stats path with no ridge
        let stats_of = |m: ColourVec, s: [f64; 3]| {
            let cov = Sym3 {
                xx: s[0] * s[0],
                yy: s[1] * s[1],
                zz: s[2] * s[2],
                ..Sym3::ZERO
            };
            let n = 1000.0;
            RegionStats {
                n: 1000,
                s: m * n,
                m: (cov + Sym3::outer(&m)) * n,
                bsum: 0.0,
            }
        };
        let closed = gaussian_kl_with_ridge(&stats_of(ma, sa), &stats_of(mb, sb), 0.0).unwrap();
        assert_relative_eq!(closed, mc, max_relative = 0.02);
    }

    fn chain_rag(px: &[ColourVec]) -> Rag {
        let g = Grid::from_vec(px.len(), 1, px.to_vec()).unwrap();
        Rag::from_pixels(&g, &g).unwrap()
    }

    #[test]
    fn isolation_of_identical_neighbours_and_lone_vertex() {
        let rag = chain_rag(&[c(0.3, 0.3, 0.3), c(0.3, 0.3, 0.3)]);
        assert!(mark_isolated_rank0(&rag, 1.0).unwrap().isolated.is_empty());
        let rag = chain_rag(&[c(0.3, 0.3, 0.3)]);
        assert_eq!(mark_isolated_rank0(&rag, 1.0).unwrap().isolated.len(), 1);
    }

    #[test]
    fn isolation_uses_minimum_divergence() {
        // singleton divergences are ½|Δ|²/ridge: pick steps giving 0.5 and 5.0
        let step = |d: f64| (2.0 * d * KL_RIDGE).sqrt();
        let p0 = c(0.5, 0.5, 0.5);
        let p1 = p0 + c(step(0.5), 0.0, 0.0);
        let p2 = p1 + c(0.0, step(5.0), 0.0);
        let rag = chain_rag(&[p2, p1, p0]);
        let marks = mark_isolated_rank0(&rag, 1.0).unwrap();
        assert_eq!(marks.isolated.into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn line_model_examples() {
        let m = line_model(&st(&[c(0.7, 0.1, 0.2)])).unwrap();
        assert_eq!(m.half_length, 0.0);
        assert_eq!(m.center, c(0.7, 0.1, 0.2));

        let m = line_model(&st(&[c(0.0, 0.0, 0.0), c(2.0, 0.0, 0.0)])).unwrap();
        assert_eq!(m.center, c(1.0, 0.0, 0.0));
        assert_relative_eq!(m.direction.r.abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.half_length, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.direction.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn line_model_of_uniform_points_on_a_line() {
        let n = 101;
        let len = 2.0;
        let pts: Vec<_> = (0..n).map(|i| c(0.1, 0.2, 0.3) + c(1.0, 1.0, 0.0).normalized() * (len * i as f64 / (n - 1) as f64)).collect();
        let m = line_model(&st(&pts)).unwrap();
        let mean = len / 2.0;
        let var: f64 = (0..n).map(|i| (len * i as f64 / (n - 1) as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        assert_relative_eq!(m.half_length, var.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn lt_shared_endpoint() {
        let a = line(c(1.0, 0.0, 0.0), c(1.0, 0.0, 0.0), 1.0);
        let b = line(c(0.0, 1.0, 0.0), c(0.0, 1.0, 0.0), 1.0);
        assert!(lt_shape_test(&a, &b, 1e-6));
    }

    #[test]
    fn lt_parallel_far_apart() {
        let a = line(c(0.0, 0.0, 0.0), c(1.0, 0.0, 0.0), 3.0);
        let b = line(c(0.0, 10.0, 0.0), c(1.0, 0.0, 0.0), 3.0);
        assert!(!lt_shape_test(&a, &b, 5.0));
        assert!(lt_shape_test(&a, &b, 10.0 + 1e-9));
    }

    #[test]
    fn lt_collinear_gap() {
        let a = line(c(0.0, 0.0, 0.0), c(1.0, 0.0, 0.0), 1.0);
        let b = line(c(4.0, 0.0, 0.0), c(1.0, 0.0, 0.0), 1.0);
        // gap between x = 1 and x = 3 is 2
        assert!(lt_shape_test(&a, &b, 2.1));
        assert!(!lt_shape_test(&a, &b, 1.9));
    }

    #[test]
    fn lt_degenerate_segment_reduces_to_point_distance() {
        let a = line(c(0.0, 0.0, 0.0), c(1.0, 0.0, 0.0), 2.0);
        let p = line(c(1.0, 0.5, 0.0), c(1.0, 0.0, 0.0), 0.0);
        assert!(lt_shape_test(&a, &p, 0.6));
        assert!(!lt_shape_test(&a, &p, 0.4));
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng) -> [ColourVec; 3] {
        let u = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5).normalized();
        let v = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let v = (v - u * u.dot(&v)).normalized();
        [u, v, u.cross(&v)]
    }

    #[test]
    fn lt_symmetric_and_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rnd = |rng: &mut ChaCha8Rng| c(rng.random(), rng.random(), rng.random());
        for _ in 0..500 {
            let a = line(rnd(&mut rng), rnd(&mut rng) - c(0.5, 0.5, 0.5), rng.random::<f64>() * 0.5);
            let b = line(rnd(&mut rng), rnd(&mut rng) - c(0.5, 0.5, 0.5), rng.random::<f64>() * 0.5);
            let delta = rng.random::<f64>() * 0.5;
            let res = lt_shape_test(&a, &b, delta);
            assert_eq!(res, lt_shape_test(&b, &a, delta));

            let rot = random_orthogonal(&mut rng);
            let shift = rnd(&mut rng);
            let apply = |p: ColourVec| c(rot[0].dot(&p), rot[1].dot(&p), rot[2].dot(&p));
            let move_model = |m: &SegmentLineModel| SegmentLineModel {
                center: apply(m.center) + shift,
                direction: apply(m.direction),
                half_length: m.half_length,
            };
            let (ma, mb) = (move_model(&a), move_model(&b));
            // distances agree to rounding; skip draws sitting on the threshold
            let d = a
                .endpoints()
                .iter()
                .map(|&p| b.distance_to(p))
                .chain(b.endpoints().iter().map(|&p| a.distance_to(p)))
                .fold(f64::INFINITY, f64::min);
            let dm = ma
                .endpoints()
                .iter()
                .map(|&p| mb.distance_to(p))
                .chain(mb.endpoints().iter().map(|&p| ma.distance_to(p)))
                .fold(f64::INFINITY, f64::min);
            assert!((d - dm).abs() < 1e-9);
            if (d - delta).abs() > 1e-9 {
                assert_eq!(res, lt_shape_test(&ma, &mb, delta));
            }
        }
    }

    fn labelled_rag(w: usize, h: usize, labels: &[u32], colours: &[ColourVec]) -> Rag {
        let labels = LabelMap::from_vec(w, h, labels.to_vec()).unwrap();
        let k = colours.len();
        let mut stats = vec![RegionStats::ZERO; k];
        for &l in labels.as_slice() {
            let p = colours[l as usize];
            stats[l as usize] += RegionStats::from_pixel(p, p);
        }
        Rag::build(&labels, stats).unwrap()
    }

    #[test]
    fn lock_parallel_clusters_keep_l_shape() {
        // two segments, each a 1-D ramp; parallel far apart vs sharing a corner
        let ramp = |base: ColourVec, dir: ColourVec| -> Vec<ColourVec> { (0..6).map(|i| base + dir * (0.05 * i as f64)).collect() };
        let build = |a: Vec<ColourVec>, b: Vec<ColourVec>| {
            let px: Vec<_> = a.into_iter().chain(b).collect();
            let labels: Vec<u32> = (0..12).map(|i| if i < 6 { 0 } else { 1 }).collect();
            let g = Grid::from_vec(12, 1, px.clone()).unwrap();
            let lm = LabelMap::from_vec(12, 1, labels.clone()).unwrap();
            let mut stats = vec![RegionStats::ZERO; 2];
            for (l, p) in labels.iter().zip(g.as_slice()) {
                stats[*l as usize] += RegionStats::from_pixel(*p, *p);
            }
            Rag::build(&lm, stats).unwrap()
        };
        let parallel = build(ramp(c(0.1, 0.1, 0.1), c(1.0, 0.0, 0.0)), ramp(c(0.1, 0.6, 0.1), c(1.0, 0.0, 0.0)));
        let marks = lock_non_lt_edges(&parallel, 0.1).unwrap();
        assert_eq!(marks.locked_edges.len(), 1);
        assert!(marks.isolated.is_empty());

        let corner = build(ramp(c(0.1, 0.1, 0.1), c(1.0, 0.0, 0.0)), ramp(c(0.35, 0.1, 0.1), c(0.0, 1.0, 0.0)));
        assert!(lock_non_lt_edges(&corner, 0.1).unwrap().locked_edges.is_empty());
    }

    #[test]
    fn off_scale_single_neighbour_absorbed() {
        // bright 1x1 blob in the middle of a matte 3x3 region
        let labels = [0, 0, 0, 0, 1, 0, 0, 0, 0];
        let mut rag = labelled_rag(3, 3, &labels, &[c(0.4, 0.3, 0.2), c(1.0, 1.0, 1.0)]);
        rag.reinitialise_ssd(Rank::Plane).unwrap();
        assert_eq!(off_scale_merge(&mut rag, 230.0 / 255.0, 0.1).unwrap(), 1);
        assert_eq!(rag.segment_count(), 1);
        assert_relative_eq!(rag.u_total(), rag.fresh_ssd(Rank::Plane).unwrap(), max_relative = 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn dark_region_untouched() {
        let labels = [0, 0, 0, 0, 1, 0, 0, 0, 0];
        let mut rag = labelled_rag(3, 3, &labels, &[c(0.4, 0.3, 0.2), c(0.1, 0.1, 0.1)]);
        assert_eq!(off_scale_merge(&mut rag, 230.0 / 255.0, 0.1).unwrap(), 0);
        assert_eq!(rag.segment_count(), 2);
    }

    #[test]
    fn off_scale_stripe_joins_two_halves() {
        // columns: left half (0), stripe (1), right half (2); background row (3)
        // below the halves but not the stripe, so halves touch only via 1 and 3
        #[rustfmt::skip]
        let labels = [
            0, 0, 1, 2, 2,
            0, 0, 1, 2, 2,
        ];
        let colours = [c(0.5, 0.2, 0.1), c(1.0, 1.0, 1.0), c(0.5, 0.2, 0.1)];
        let mut rag = labelled_rag(5, 2, &labels, &colours);
        assert_eq!(off_scale_merge(&mut rag, 230.0 / 255.0, 0.05).unwrap(), 2);
        assert_eq!(rag.segment_count(), 1);
    }

    #[test]
    fn off_scale_skips_adjacent_or_incompatible_pairs() {
        // stripe with two neighbours of very different colour: nothing fires
        let labels = [0, 0, 1, 2, 2, 0, 0, 1, 2, 2];
        let colours = [c(0.5, 0.2, 0.1), c(1.0, 1.0, 1.0), c(0.1, 0.2, 0.6)];
        let mut rag = labelled_rag(5, 2, &labels, &colours);
        assert_eq!(off_scale_merge(&mut rag, 230.0 / 255.0, 0.05).unwrap(), 0);

        // neighbours adjacent to each other: rule (ii) does not apply
        #[rustfmt::skip]
        let labels = [
            0, 1, 2,
            0, 0, 2,
        ];
        let colours = [c(0.5, 0.2, 0.1), c(1.0, 1.0, 1.0), c(0.5, 0.2, 0.1)];
        let mut rag = labelled_rag(3, 2, &labels, &colours);
        assert_eq!(off_scale_merge(&mut rag, 230.0 / 255.0, 0.05).unwrap(), 0);
        assert_eq!(rag.segment_count(), 3);
    }
}
