//! Analytic shape oracle. For total mass n the sandpile cluster is governed
//! by a parameter t solving n = (3/16)t³ + (5/12)t, a per-column tooth mass
//! n_x, the odometer majorant γ_n, and the limit ball
//! B_n = { |x|/k + (|y|/l)^{1/2} ≤ n^{1/3} }.

use crate::lattice::{GraphKind, Region, Vertex};
use std::fmt;

/// Backbone scale of the limit ball: max |x| is k·n^{1/3}. Equals (3/2)^{2/3}.
pub const K: f64 = 1.3103706971044482;
/// Tooth scale: the tooth at x reaches l·(n^{1/3} − |x|/k)². Equals ½(3/2)^{1/3}.
pub const L: f64 = 0.5723571212766659;

/// Shape data for one mass value: t is the unique real root of
/// n = (3/16)t³ + (5/12)t.
#[derive(Clone, Copy, Debug)]
pub struct ShapeSpec {
    pub n: f64,
    pub t: f64,
    pub k: f64,
    pub l: f64,
}

impl ShapeSpec {
    pub fn for_mass(n: f64) -> Result<ShapeSpec, ShapeError> {
        let t = solve_t(n)?;
        Ok(ShapeSpec { n, t, k: K, l: L })
    }

    /// Tooth mass profile n_x at real-valued column offset, symmetric in x.
    /// Strictly positive: the quadratic's minimum is 1/6, at |x| = 3t/4.
    pub fn mass_profile_real(&self, x: f64) -> f64 {
        let x = x.abs();
        2.0 / 3.0 * x * x - self.t * x + (9.0 * self.t * self.t + 4.0) / 24.0
    }

    pub fn mass_profile(&self, x: i64) -> f64 {
        self.mass_profile_real(x as f64)
    }

    /// Odometer majorant γ_n(x, y) = γ̃_{n_x}(y).
    pub fn gamma(&self, v: Vertex) -> f64 {
        gamma_line(self.mass_profile(v.x), v.y)
    }
}

/// Root of n = (3/16)t³ + (5/12)t by safeguarded Newton iteration. The
/// closed radical form ([`solve_t_radical`]) loses digits to cancellation at
/// small n, so the iteration is primary and the radical a cross-check.
pub fn solve_t(n: f64) -> Result<f64, ShapeError> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(ShapeError::NonpositiveMass { n });
    }
    // cubic(t) is strictly increasing; the root lies in (0, cbrt(16n/3)].
    let cubic = |t: f64| 3.0 / 16.0 * t * t * t + 5.0 / 12.0 * t;
    let mut lo = 0.0f64;
    let mut hi = (16.0 * n / 3.0).cbrt();
    if cubic(hi) < n {
        hi = hi * (1.0 + 1e-12) + 1e-300; // absorb cbrt rounding
    }
    let mut t = hi;
    for _ in 0..200 {
        let f = cubic(t) - n;
        if f > 0.0 {
            hi = t;
        } else if f < 0.0 {
            lo = t;
        } else {
            return Ok(t);
        }
        let deriv = 9.0 / 16.0 * t * t + 5.0 / 12.0;
        let mut next = t - f / deriv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi); // Newton left the bracket; bisect
        }
        if (next - t).abs() <= f64::EPSILON * t.abs() {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Cardano form of the same root: t = T − (20/27)/T with
/// T³ = 8n/3 + sqrt((8n/3)² + (20/27)³).
pub fn solve_t_radical(n: f64) -> Result<f64, ShapeError> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(ShapeError::NonpositiveMass { n });
    }
    let q = 8.0 * n / 3.0;
    let r = 20.0f64 / 27.0;
    let big_t = (q + (q * q + r * r * r).sqrt()).cbrt();
    Ok(big_t - r / big_t)
}

/// n_x for integer x; spec'd free-function form of [`ShapeSpec::mass_profile`].
pub fn mass_profile(x: i64, spec: &ShapeSpec) -> f64 {
    spec.mass_profile(x)
}

/// One-dimensional odometer majorant γ̃_n(y) = ½(|y| − n/2)². Its discrete
/// line Laplacian is ½(1 − n·δ₀) at every y.
pub fn gamma_line(n: f64, y: i64) -> f64 {
    let d = (y.abs() as f64) - n / 2.0;
    0.5 * d * d
}

/// γ_n on the comb; solves for t on every call. Hot paths should build one
/// [`ShapeSpec`] and use its method.
pub fn gamma(n: f64, v: Vertex) -> Result<f64, ShapeError> {
    Ok(ShapeSpec::for_mass(n)?.gamma(v))
}

/// Membership in B_n by double-precision evaluation: |x|/k + (|y|/l)^{1/2}
/// ≤ n^{1/3}, strict floating-point comparison with no tolerance band.
pub fn in_ball(n: f64, v: Vertex) -> bool {
    let r = n.cbrt();
    (v.x.abs() as f64) / K + ((v.y.abs() as f64) / L).sqrt() <= r
}

/// Exactly the vertices of B_n, as a Region on the comb.
pub fn ball_region(n: f64) -> Region {
    let r = n.cbrt();
    let mut region = Region::new(GraphKind::Comb2);
    let mut x_hi = (K * r).floor() as i64;
    while in_ball(n, Vertex::new(x_hi + 1, 0)) {
        x_hi += 1;
    }
    while x_hi >= 0 && !in_ball(n, Vertex::new(x_hi, 0)) {
        x_hi -= 1;
    }
    for x in -x_hi..=x_hi {
        let rem = r - (x.abs() as f64) / K;
        let mut y_hi = (L * rem * rem).floor() as i64;
        // the closed form and in_ball can disagree by an ulp; settle it by
        // the membership predicate, which is the contract
        while in_ball(n, Vertex::new(x, y_hi + 1)) {
            y_hi += 1;
        }
        while y_hi >= 0 && !in_ball(n, Vertex::new(x, y_hi)) {
            y_hi -= 1;
        }
        for y in -y_hi..=y_hi {
            region.insert(Vertex::new(x, y));
        }
    }
    region
}

/// Predicted cluster extents: the backbone reach x_max = 3t/4 (where the
/// tooth profile bottoms out) and the per-column tooth height n_x/2.
pub struct Extents {
    pub x_max: f64,
    spec: ShapeSpec,
}

impl Extents {
    pub fn tooth_height(&self, x: i64) -> f64 {
        self.spec.mass_profile(x) / 2.0
    }

    pub fn tooth_height_real(&self, x: f64) -> f64 {
        self.spec.mass_profile_real(x) / 2.0
    }
}

pub fn extents(n: f64) -> Result<Extents, ShapeError> {
    let spec = ShapeSpec::for_mass(n)?;
    Ok(Extents {
        x_max: 3.0 * spec.t / 4.0,
        spec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeError {
    NonpositiveMass { n: f64 },
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::NonpositiveMass { n } => {
                write!(f, "total mass must be positive, got {n}")
            }
        }
    }
}

impl std::error::Error for ShapeError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        // k = (3/2)^{2/3}, l = ½(3/2)^{1/3}, and the identities they satisfy
        assert!((K.powi(3) - 2.25).abs() < 1e-14);
        assert!((L - K * K / 3.0).abs() < 1e-15);
        assert!((K * L - 0.75).abs() < 1e-15);
        assert!((L * L - K / 4.0).abs() < 1e-15);
    }

    #[test]
    fn solve_t_exact_small_case() {
        // n = 3/16·8 + 5/12·2 = 3/2 + 5/6 = 7/3 has root t = 2
        let t = solve_t(7.0 / 3.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12, "t = {t}");
        let tr = solve_t_radical(7.0 / 3.0).unwrap();
        assert!((tr - 2.0).abs() < 1e-10);
    }

    #[test]
    fn solve_t_residual_and_radical_agreement() {
        for i in 0..100 {
            let n = 10f64.powf(9.0 * i as f64 / 99.0);
            let t = solve_t(n).unwrap();
            let residual = (n - (3.0 / 16.0 * t * t * t + 5.0 / 12.0 * t)).abs();
            assert!(residual <= 1e-10 * n, "n = {n}: residual {residual:.3e}");
            let tr = solve_t_radical(n).unwrap();
            assert!((t - tr).abs() <= 1e-10 * t.max(1.0), "n = {n}: {t} vs {tr}");
        }
    }

    #[test]
    fn solve_t_asymptotic_rate() {
        let n = 1e9f64;
        let t = solve_t(n).unwrap();
        let ratio = t / n.cbrt();
        assert!((ratio - 1.7471609294725978).abs() < 0.01 * 1.747);
    }

    #[test]
    fn solve_t_rejects_nonpositive() {
        assert!(solve_t(0.0).is_err());
        assert!(solve_t(-3.0).is_err());
        assert!(solve_t(f64::NAN).is_err());
    }

    #[test]
    fn mass_profile_at_t2() {
        let spec = ShapeSpec::for_mass(7.0 / 3.0).unwrap();
        assert!((spec.mass_profile(0) - 5.0 / 3.0).abs() < 1e-12);
        assert!((spec.mass_profile(1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((spec.mass_profile(2) - 1.0 / 3.0).abs() < 1e-12);
        assert!((spec.mass_profile(-1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mass_profile_minimum_is_one_sixth() {
        for n in [0.5, 7.0 / 3.0, 40.0, 1e4, 3e7] {
            let spec = ShapeSpec::for_mass(n).unwrap();
            let xstar = 3.0 * spec.t / 4.0;
            assert!((spec.mass_profile_real(xstar) - 1.0 / 6.0).abs() < 1e-9);
            for frac in [0.0, 0.3, 0.9, 1.1, 2.0] {
                assert!(spec.mass_profile_real(xstar * frac) >= 1.0 / 6.0 - 1e-9);
            }
        }
    }

    #[test]
    fn gamma_line_examples() {
        assert_eq!(gamma_line(4.0, 2), 0.0);
        assert_eq!(gamma_line(4.0, 0), 2.0);
        assert_eq!(gamma_line(2.0, 0), 0.5);
    }

    #[test]
    fn gamma_line_laplacian_identity() {
        // dyadic n: every operation below is exact in f64
        for n in [4.0, 2.0, 0.5, 3.25, 10.0] {
            for y in -50i64..=50 {
                let lap = 0.5 * (gamma_line(n, y + 1) + gamma_line(n, y - 1)) - gamma_line(n, y);
                let target = 0.5 * (1.0 - if y == 0 { n } else { 0.0 });
                assert_eq!(lap, target, "n = {n}, y = {y}");
            }
        }
        for n in [7.0 / 3.0, 0.123456, 931.7] {
            for y in -50i64..=50 {
                let lap = 0.5 * (gamma_line(n, y + 1) + gamma_line(n, y - 1)) - gamma_line(n, y);
                let target = 0.5 * (1.0 - if y == 0 { n } else { 0.0 });
                assert!((lap - target).abs() < 1e-12 * n.max(1.0));
            }
        }
    }

    #[test]
    fn gamma_origin_small_case() {
        // n = 7/3: n₀ = 5/3, γ = n₀²/8 = 25/72
        let g = gamma(7.0 / 3.0, Vertex::ORIGIN).unwrap();
        assert!((g - 25.0 / 72.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_small_at_tooth_tip() {
        for n in [7.0 / 3.0, 17.0, 500.0, 1e4, 1e6] {
            let spec = ShapeSpec::for_mass(n).unwrap();
            let x_hi = (3.0 * spec.t / 4.0).ceil() as i64 + 2;
            for x in -x_hi..=x_hi {
                let tip = (spec.mass_profile(x) / 2.0).round() as i64;
                let g = spec.gamma(Vertex::new(x, tip));
                assert!(g <= 0.5 + 1e-12, "n = {n}, x = {x}: gamma {g}");
            }
        }
    }

    #[test]
    fn gamma_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let n = rng.random_range(0.01..1e6);
            let spec = ShapeSpec::for_mass(n).unwrap();
            let v = Vertex::new(rng.random_range(-300..=300), rng.random_range(-3000..=3000));
            assert!(spec.gamma(v) >= 0.0);
        }
    }

    #[test]
    fn recursion_identities() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let t: f64 = rng.random_range(0.0..100.0) + 1e-6;
            let n = 3.0 / 16.0 * t * t * t + 5.0 / 12.0 * t;
            let spec = ShapeSpec { n, t, k: K, l: L };
            let nx = |x: i64| spec.mass_profile(x);
            // n₀ = n + ¼n₁² − ¼n₀²
            let lhs0 = nx(0);
            let rhs0 = n + 0.25 * nx(1) * nx(1) - 0.25 * nx(0) * nx(0);
            let scale0 = [lhs0.abs(), n.abs(), 0.25 * nx(1) * nx(1), 0.25 * nx(0) * nx(0), 1.0]
                .into_iter()
                .fold(0.0f64, f64::max);
            assert!((lhs0 - rhs0).abs() <= 1e-12 * scale0, "t = {t}");
            // n_x = ⅛n_{x−1}² − ¼n_x² + ⅛n_{x+1}²
            for x in 1i64..=50 {
                let lhs = nx(x);
                let rhs = 0.125 * nx(x - 1) * nx(x - 1) - 0.25 * nx(x) * nx(x)
                    + 0.125 * nx(x + 1) * nx(x + 1);
                let scale = [lhs.abs(), 0.125 * nx(x - 1) * nx(x - 1), 1.0]
                    .into_iter()
                    .fold(0.0f64, f64::max);
                assert!((lhs - rhs).abs() <= 1e-12 * scale, "t = {t}, x = {x}");
            }
        }
    }

    #[test]
    fn gamma_comb_laplacian_window() {
        // Δγ_n = (1/d)(1 − n·δ_o) across a 200×200 window
        for n in [7.0 / 3.0, 313.7, 1000.0] {
            let spec = ShapeSpec::for_mass(n).unwrap();
            let g = |x: i64, y: i64| spec.gamma(Vertex::new(x, y));
            for x in -100i64..=100 {
                for y in -100i64..=100 {
                    let (lap, target) = if y == 0 {
                        (
                            0.25 * (g(x + 1, 0) + g(x - 1, 0) + g(x, 1) + g(x, -1) - 4.0 * g(x, 0)),
                            0.25 * (1.0 - if x == 0 { n } else { 0.0 }),
                        )
                    } else {
                        (
                            0.5 * (g(x, y + 1) + g(x, y - 1) - 2.0 * g(x, y)),
                            0.5,
                        )
                    };
                    assert!(
                        (lap - target).abs() <= 1e-9,
                        "n = {n}, ({x},{y}): {:.3e}",
                        (lap - target).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn ball_membership_examples() {
        for (v, inside) in [
            (Vertex::new(13, 0), true),
            (Vertex::new(14, 0), false),
            (Vertex::new(0, 57), true),
            (Vertex::new(0, 58), false),
            (Vertex::new(5, 21), true),
            (Vertex::new(5, 22), false),
        ] {
            assert_eq!(in_ball(1000.0, v), inside, "{v}");
        }
    }

    #[test]
    fn ball_region_matches_predicate_and_symmetry() {
        let n = 1000.0;
        let b = ball_region(n);
        for v in b.iter() {
            assert!(in_ball(n, v));
            assert!(b.contains(Vertex::new(-v.x, v.y)));
            assert!(b.contains(Vertex::new(v.x, -v.y)));
        }
        // no member vertex missing: scan a box just past the extremes
        let r = n.cbrt();
        let x_cap = (K * r).ceil() as i64 + 1;
        let y_cap = (L * r * r).ceil() as i64 + 1;
        let mut count = 0usize;
        for x in -x_cap..=x_cap {
            for y in -y_cap..=y_cap {
                if in_ball(n, Vertex::new(x, y)) {
                    assert!(b.contains(Vertex::new(x, y)));
                    count += 1;
                }
            }
        }
        assert_eq!(count, b.len());
    }

    #[test]
    fn extents_examples() {
        let e = extents(7.0 / 3.0).unwrap();
        assert!((e.x_max - 1.5).abs() < 1e-12);
        assert!((e.tooth_height(0) - 5.0 / 6.0).abs() < 1e-12);

        let e6 = extents(1e6).unwrap();
        assert!((e6.x_max - K * 100.0).abs() <= 2.0);
    }

    #[test]
    fn gamma_bounded_at_backbone_reach() {
        // the majorant stays small (bounded well below 1) at the column
        // where the profile bottoms out, across scales
        for n in [10.0, 1e3, 1e5, 1e7, 1e9] {
            let spec = ShapeSpec::for_mass(n).unwrap();
            let x = (3.0 * spec.t / 4.0).floor() as i64;
            let g = spec.gamma(Vertex::new(x, 0));
            assert!(g <= 0.5, "n = {n}: gamma {g}");
        }
    }
}
