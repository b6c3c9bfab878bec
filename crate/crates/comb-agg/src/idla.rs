//! Internal DLA: particles released one at a time from the origin perform
//! simple random walks and settle on first stepping outside the current
//! cluster. Walks are simulated step by step; the teeth make excursion
//! shortcuts nontrivial and the model is defined through the plain walk.

use crate::cluster::CombCluster;
use crate::lattice::{degree, neighbor, GraphKind, Region, Vertex};
use crate::shape::ball_region;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Hard per-walk cap; recurrence guarantees finite stopping, the cap turns
/// a bug into a diagnostic instead of a hang.
pub const STEP_CAP: u64 = 10_000_000_000;

#[derive(Debug)]
pub enum IdlaError {
    InvalidParticleCount { n: u64 },
    InvalidEps { eps: f64 },
    OutsideBall { z: Vertex, n: u64 },
    StepCapExceeded { particle: u64, cap: u64 },
}

impl fmt::Display for IdlaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdlaError::InvalidParticleCount { n } => {
                write!(f, "particle count must be at least 1, got {n}")
            }
            IdlaError::InvalidEps { eps } => write!(f, "eps must lie in (0, 1), got {eps}"),
            IdlaError::OutsideBall { z, n } => {
                write!(f, "target {z} lies outside the mass-{n} ball")
            }
            IdlaError::StepCapExceeded { particle, cap } => {
                write!(f, "particle {particle} exceeded the {cap}-step cap")
            }
        }
    }
}

impl std::error::Error for IdlaError {}

/// Seeded walk randomness with independent sub-streams per particle index;
/// the stream cipher makes replay identical on every platform.
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn for_particle(master_seed: u64, particle: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(particle);
        RngStream { rng }
    }

    fn next_index(&mut self, d: usize) -> usize {
        self.rng.random_range(0..d)
    }
}

/// One step of the simple random walk: a uniformly random neighbor.
pub fn walk_step(v: Vertex, kind: GraphKind, rng: &mut RngStream) -> Vertex {
    let d = degree(v, kind);
    neighbor(v, kind, rng.next_index(d))
}

pub struct IdlaRun {
    pub n: u64,
    pub seed: u64,
    pub cluster: Region,
    /// Vertices in settling order; the i-th prefix is the cluster after i
    /// particles.
    pub order: Vec<Vertex>,
    /// Steps walked by each particle before settling.
    pub steps: Vec<u64>,
}

/// Grows the cluster with n sequential particles from the origin.
pub fn idla_run(n: u64, seed: u64) -> Result<IdlaRun, IdlaError> {
    if n == 0 {
        return Err(IdlaError::InvalidParticleCount { n });
    }
    let mut cluster = CombCluster::new();
    let mut order = Vec::with_capacity(n as usize);
    let mut steps = Vec::with_capacity(n as usize);
    for particle in 0..n {
        let mut rng = RngStream::for_particle(seed, particle);
        let mut pos = Vertex::ORIGIN;
        let mut walked = 0u64;
        while cluster.contains(pos) {
            if walked >= STEP_CAP {
                return Err(IdlaError::StepCapExceeded {
                    particle,
                    cap: STEP_CAP,
                });
            }
            pos = fast_comb_step(pos, &mut rng);
            walked += 1;
        }
        cluster.insert(pos);
        order.push(pos);
        steps.push(walked);
    }
    Ok(IdlaRun {
        n,
        seed,
        cluster: cluster.to_region(),
        order,
        steps,
    })
}

/// walk_step specialized to the comb for the hot loops.
#[inline]
fn fast_comb_step(v: Vertex, rng: &mut RngStream) -> Vertex {
    if v.y == 0 {
        match rng.next_index(4) {
            0 => Vertex::new(v.x + 1, 0),
            1 => Vertex::new(v.x, 1),
            2 => Vertex::new(v.x - 1, 0),
            _ => Vertex::new(v.x, -1),
        }
    } else if rng.next_index(2) == 0 {
        Vertex::new(v.x, v.y + 1)
    } else {
        Vertex::new(v.x, v.y - 1)
    }
}

/// Fraction of the mass-n(1−eps) ball covered by the cluster.
pub fn containment_fraction(run: &IdlaRun, eps: f64) -> Result<f64, IdlaError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(IdlaError::InvalidEps { eps });
    }
    let inner = ball_region(run.n as f64 * (1.0 - eps));
    let hit = inner.iter().filter(|&v| run.cluster.contains(v)).count();
    Ok(hit as f64 / inner.len() as f64)
}

/// O(1) membership for the mass-n ball, condensed to per-column heights.
struct BallMask {
    x_max: i64,
    heights: Vec<i64>,
}

impl BallMask {
    fn for_mass(n: u64) -> BallMask {
        let region = ball_region(n as f64);
        let x_max = region.iter().map(|v| v.x.abs()).max().unwrap_or(0);
        let mut heights = vec![0i64; (x_max + 1) as usize];
        for v in region.iter() {
            let h = &mut heights[v.x.unsigned_abs() as usize];
            *h = (*h).max(v.y.abs());
        }
        BallMask { x_max, heights }
    }

    fn contains(&self, v: Vertex) -> bool {
        v.x.abs() <= self.x_max && v.y.abs() <= self.heights[v.x.unsigned_abs() as usize]
    }
}

/// Monte Carlo estimate of the expected number of the n walks that visit z
/// before leaving the mass-n ball; averaged over trials. The mean matches
/// n·G(o,z)/G(z,z) with G the stopped Green function of the ball.
pub fn estimate_m(n: u64, z: Vertex, trials: u64, seed: u64) -> Result<f64, IdlaError> {
    if n == 0 {
        return Err(IdlaError::InvalidParticleCount { n });
    }
    let mask = BallMask::for_mass(n);
    if !mask.contains(z) {
        return Err(IdlaError::OutsideBall { z, n });
    }
    let mut total_hits = 0u64;
    for trial in 0..trials {
        for walk in 0..n {
            let mut rng = RngStream::for_particle(seed, trial * n + walk);
            let mut pos = Vertex::ORIGIN;
            let mut walked = 0u64;
            loop {
                if pos == z {
                    total_hits += 1;
                    break;
                }
                if !mask.contains(pos) {
                    break;
                }
                if walked >= STEP_CAP {
                    return Err(IdlaError::StepCapExceeded {
                        particle: walk,
                        cap: STEP_CAP,
                    });
                }
                pos = fast_comb_step(pos, &mut rng);
                walked += 1;
            }
        }
    }
    Ok(total_hits as f64 / trials as f64)
}

pub struct SymmetryReport {
    pub mean_right: f64,
    pub mean_left: f64,
    /// Standard error of mean_right − mean_left across seeds.
    pub diff_se: f64,
}

/// Mean x-extents of the cluster to the right and left over a range of
/// seeds; the walk law is mirror-symmetric, so the difference is zero in
/// expectation.
pub fn symmetry_report(n: u64, seeds: u64, base_seed: u64) -> Result<SymmetryReport, IdlaError> {
    assert!(seeds >= 2, "need at least two seeds for a standard error");
    let mut diffs = Vec::with_capacity(seeds as usize);
    let mut right_sum = 0.0;
    let mut left_sum = 0.0;
    for s in 0..seeds {
        let run = idla_run(n, base_seed + s)?;
        let right = run.order.iter().map(|v| v.x).max().unwrap() as f64;
        let left = -(run.order.iter().map(|v| v.x).min().unwrap()) as f64;
        right_sum += right;
        left_sum += left;
        diffs.push(right - left);
    }
    let m = seeds as f64;
    let mean_diff = diffs.iter().sum::<f64>() / m;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(SymmetryReport {
        mean_right: right_sum / m,
        mean_left: left_sum / m,
        diff_se: (var / m).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::stopped_green;
    use std::collections::HashSet;

    #[test]
    fn walk_step_uniform_on_backbone() {
        let mut rng = RngStream::for_particle(9, 0);
        let mut counts = [0u64; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let w = walk_step(Vertex::ORIGIN, GraphKind::Comb2, &mut rng);
            let i = match (w.x, w.y) {
                (1, 0) => 0,
                (0, 1) => 1,
                (-1, 0) => 2,
                (0, -1) => 3,
                _ => panic!("non-neighbor {w}"),
            };
            counts[i] += 1;
        }
        // 3σ band for a fair four-sided draw
        let sigma = (0.25 * 0.75 / draws as f64).sqrt();
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() <= 3.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn walk_step_uniform_on_tooth() {
        let mut rng = RngStream::for_particle(10, 0);
        let v = Vertex::new(2, 5);
        let mut up = 0u64;
        let draws = 100_000;
        for _ in 0..draws {
            let w = walk_step(v, GraphKind::Comb2, &mut rng);
            assert!(w == Vertex::new(2, 6) || w == Vertex::new(2, 4));
            if w.y == 6 {
                up += 1;
            }
        }
        let sigma = (0.25 / draws as f64).sqrt();
        assert!((up as f64 / draws as f64 - 0.5).abs() <= 3.0 * sigma);
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let mut a = RngStream::for_particle(1234, 7);
        let mut b = RngStream::for_particle(1234, 7);
        let mut pos_a = Vertex::ORIGIN;
        let mut pos_b = Vertex::ORIGIN;
        for _ in 0..1_000_000 {
            pos_a = walk_step(pos_a, GraphKind::Comb2, &mut a);
            pos_b = walk_step(pos_b, GraphKind::Comb2, &mut b);
            assert_eq!(pos_a, pos_b);
        }
    }

    #[test]
    fn single_particle_settles_at_origin() {
        let run = idla_run(1, 7).unwrap();
        assert_eq!(run.cluster.len(), 1);
        assert!(run.cluster.contains(Vertex::ORIGIN));
        assert_eq!(run.steps, vec![0]);
    }

    #[test]
    fn rejects_zero_particles() {
        assert!(matches!(
            idla_run(0, 7),
            Err(IdlaError::InvalidParticleCount { .. })
        ));
    }

    #[test]
    fn second_particle_lands_uniformly() {
        let mut counts = std::collections::HashMap::new();
        let runs = 100_000u64;
        for seed in 0..runs {
            let run = idla_run(2, seed).unwrap();
            *counts.entry(run.order[1]).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 4);
        let sigma = (0.25 * 0.75 / runs as f64).sqrt();
        for (&v, &c) in &counts {
            let freq = c as f64 / runs as f64;
            assert!((freq - 0.25).abs() <= 3.0 * sigma, "{v}: {freq}");
        }
    }

    #[test]
    fn cluster_is_nested_connected_and_sized() {
        let run = idla_run(500, 4242).unwrap();
        assert_eq!(run.cluster.len(), 500);
        assert_eq!(run.order.len(), 500);
        assert_eq!(run.order[0], Vertex::ORIGIN);
        let mut seen = HashSet::new();
        for (i, &v) in run.order.iter().enumerate() {
            assert!(seen.insert(v), "revisit of {v}");
            if i > 0 {
                // every addition touches the existing prefix, so each prefix
                // (each A_i) is connected
                let attached = crate::lattice::neighbors(v, GraphKind::Comb2)
                    .any(|w| seen.contains(&w) && w != v);
                assert!(attached, "{v} joined with no neighbor in the cluster");
            }
        }
    }

    #[test]
    fn containment_fraction_ranges() {
        let run = idla_run(200, 3).unwrap();
        let f = containment_fraction(&run, 0.5).unwrap();
        assert!((0.0..=1.0).contains(&f));
        // eps near 1 leaves only a few inner sites, always covered
        assert_eq!(containment_fraction(&run, 0.999).unwrap(), 1.0);
        assert!(containment_fraction(&run, 0.0).is_err());
        assert!(containment_fraction(&run, 1.0).is_err());
    }

    #[test]
    fn desk_scale_inner_ball_is_nearly_covered() {
        // full containment holds for most seeds at this scale (seed 42
        // grazes the inner boundary); the 20-seed campaign lives in the
        // acceptance suite
        let run = idla_run(10_000, 42).unwrap();
        let f = containment_fraction(&run, 0.15).unwrap();
        assert!(f >= 0.99, "seed 42 covers only {f:.4} of the inner ball");
    }

    #[test]
    fn estimate_m_at_origin_is_exact() {
        let est = estimate_m(50, Vertex::ORIGIN, 3, 99).unwrap();
        assert_eq!(est, 50.0);
    }

    #[test]
    fn estimate_m_rejects_outside_targets() {
        assert!(matches!(
            estimate_m(50, Vertex::new(100, 0), 2, 1),
            Err(IdlaError::OutsideBall { .. })
        ));
    }

    fn green_ratio(n: u64, z: Vertex) -> f64 {
        let ball = ball_region(n as f64);
        let from_o = stopped_green(&ball, Vertex::ORIGIN).unwrap();
        let from_z = stopped_green(&ball, z).unwrap();
        from_o.get(z) / from_z.get(z)
    }

    #[test]
    fn estimate_m_matches_green_ratio_backbone() {
        let (n, trials) = (200u64, 200u64);
        let z = Vertex::new(1, 0);
        let p = green_ratio(n, z);
        let expected = n as f64 * p;
        let se = (n as f64 * p * (1.0 - p) / trials as f64).sqrt();
        let est = estimate_m(n, z, trials, 2024).unwrap();
        assert!(
            (est - expected).abs() <= 4.0 * se,
            "est {est}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn estimate_m_matches_green_ratio_tooth() {
        let (n, trials) = (200u64, 200u64);
        let z = Vertex::new(0, 3);
        let p = green_ratio(n, z);
        let expected = n as f64 * p;
        let se = (n as f64 * p * (1.0 - p) / trials as f64).sqrt();
        let est = estimate_m(n, z, trials, 2025).unwrap();
        assert!(
            (est - expected).abs() <= 4.0 * se,
            "est {est}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn left_right_extents_agree_in_distribution() {
        let report = symmetry_report(1000, 1000, 77).unwrap();
        let gap = (report.mean_right - report.mean_left).abs();
        assert!(
            gap <= 3.0 * report.diff_se,
            "right {:.3} vs left {:.3}, se {:.4}",
            report.mean_right,
            report.mean_left,
            report.diff_se
        );
    }
}
