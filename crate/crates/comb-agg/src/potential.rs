//! Discrete potential theory on comb regions: a Dirichlet solver that
//! condenses each tooth onto the backbone, stopped Green functions, the
//! closed-form pair f_n/g_n behind the thin-tooth estimates, the exact
//! interval Green function, and generating-function evaluations of the
//! potential kernel.

use crate::csvio;
use crate::lattice::{degree, neighbors, GraphKind, Region, Vertex};
use crate::shape::{ball_region, K};
use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;

/// Solution field over a finite region; zero outside by convention.
#[derive(Clone, Debug)]
pub struct Field {
    kind: GraphKind,
    map: HashMap<Vertex, f64>,
}

impl Field {
    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Value at v; vertices outside the domain read as 0.
    pub fn get(&self, v: Vertex) -> f64 {
        self.map.get(&v).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.map.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        self.map.iter().map(|(&v, &x)| (v, x))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        csvio::write_value_csv(out, self.iter())
    }
}

#[derive(Debug)]
pub enum PotentialError {
    /// The solver only handles regions whose backbone cells form one
    /// interval and whose tooth cells are contiguous runs rooted on it.
    NotCombConvex { reason: String },
    OutsideRegion { v: Vertex },
    OutsideInterval { b: i64, y: i64 },
    ResidualTooLarge { residual: f64, tol: f64 },
    ZOutOfRange { z: f64 },
    HorizonTooLarge { t_max: usize, cap: usize },
    RatioUndefined { v: Vertex, g: f64 },
    NonpositiveMass { n: f64 },
}

impl fmt::Display for PotentialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialError::NotCombConvex { reason } => {
                write!(f, "region is not comb-convex: {reason}")
            }
            PotentialError::OutsideRegion { v } => write!(f, "vertex {v} is outside the region"),
            PotentialError::OutsideInterval { b, y } => {
                write!(f, "y = {y} outside the interval [-{b}, {b}]")
            }
            PotentialError::ResidualTooLarge { residual, tol } => {
                write!(f, "solver residual {residual:.3e} exceeds tolerance {tol:.3e}")
            }
            PotentialError::ZOutOfRange { z } => write!(f, "z = {z} not in (0, 1)"),
            PotentialError::HorizonTooLarge { t_max, cap } => {
                write!(f, "t_max = {t_max} exceeds the exact-window cap {cap}")
            }
            PotentialError::RatioUndefined { v, g } => {
                write!(f, "denominator field is {g:.3e} at {v}; ratio undefined")
            }
            PotentialError::NonpositiveMass { n } => {
                write!(f, "total mass must be positive, got {n}")
            }
        }
    }
}

impl std::error::Error for PotentialError {}

// ---------------------------------------------------------------------------
// Dirichlet solver

/// Comb region in condensed form: backbone interval [x0, x1], tooth run
/// lengths per column. Covers every region the pipelines produce (balls,
/// clusters, trimmed balls); anything else is rejected.
struct CondensedComb {
    x0: i64,
    up: Vec<i64>,
    dn: Vec<i64>,
}

impl CondensedComb {
    fn from_region(region: &Region) -> Result<CondensedComb, PotentialError> {
        let mut backbone: Vec<i64> = region.iter().filter(|v| v.y == 0).map(|v| v.x).collect();
        if backbone.is_empty() {
            return Err(PotentialError::NotCombConvex {
                reason: "no backbone cells".into(),
            });
        }
        backbone.sort_unstable();
        let (x0, x1) = (backbone[0], backbone[backbone.len() - 1]);
        if backbone.len() as i64 != x1 - x0 + 1 {
            return Err(PotentialError::NotCombConvex {
                reason: "backbone cells do not form one interval".into(),
            });
        }
        let width = (x1 - x0 + 1) as usize;
        let mut up_cells: Vec<Vec<i64>> = vec![Vec::new(); width];
        let mut dn_cells: Vec<Vec<i64>> = vec![Vec::new(); width];
        for v in region.iter() {
            if v.y == 0 {
                continue;
            }
            if v.x < x0 || v.x > x1 {
                return Err(PotentialError::NotCombConvex {
                    reason: format!("tooth cell {v} has no backbone root"),
                });
            }
            let col = (v.x - x0) as usize;
            if v.y > 0 {
                up_cells[col].push(v.y);
            } else {
                dn_cells[col].push(-v.y);
            }
        }
        let mut up = vec![0i64; width];
        let mut dn = vec![0i64; width];
        for col in 0..width {
            for (cells, h) in [(&mut up_cells[col], &mut up[col]), (&mut dn_cells[col], &mut dn[col])] {
                cells.sort_unstable();
                for (i, &y) in cells.iter().enumerate() {
                    if y != i as i64 + 1 {
                        return Err(PotentialError::NotCombConvex {
                            reason: format!(
                                "tooth at x = {} skips height {} (found {})",
                                x0 + col as i64,
                                i + 1,
                                y
                            ),
                        });
                    }
                }
                *h = cells.len() as i64;
            }
        }
        Ok(CondensedComb { x0, up, dn })
    }

    fn width(&self) -> usize {
        self.up.len()
    }
}

/// In-place Thomas solve of a tridiagonal system with unit off-diagonals:
/// sub = super = 1, main diagonal `diag`, right-hand side `rhs`.
fn thomas_unit_offdiag(diag: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut denom = diag[0];
    scratch[0] = 1.0 / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - scratch[i - 1];
        scratch[i] = 1.0 / denom;
        rhs[i] = (rhs[i] - rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Solves Δφ = rhs on the region with φ = 0 outside; the max-norm residual
/// is verified against `tol` (one refinement pass is attempted first).
/// Teeth are eliminated analytically onto the backbone, so the cost is
/// linear in the region size and the computation is deterministic.
pub fn dirichlet_solve<F: Fn(Vertex) -> f64>(
    region: &Region,
    rhs: F,
    tol: f64,
) -> Result<Field, PotentialError> {
    let mut field = solve_raw(region, &rhs)?;
    let mut residual = max_residual(region, &field, &rhs);
    if residual > tol {
        // one pass of iterative refinement: solve for the correction
        let defect: HashMap<Vertex, f64> = region
            .iter()
            .map(|z| (z, laplacian(&field, z) - rhs(z)))
            .collect();
        let correction = solve_raw(region, &|z| -defect.get(&z).copied().unwrap_or(0.0))?;
        for (v, c) in correction.map {
            *field.map.get_mut(&v).expect("same domain") += c;
        }
        residual = max_residual(region, &field, &rhs);
        if residual > tol {
            return Err(PotentialError::ResidualTooLarge { residual, tol });
        }
    }
    Ok(field)
}

fn laplacian(field: &Field, z: Vertex) -> f64 {
    let d = degree(z, field.kind) as f64;
    let fz = field.get(z);
    neighbors(z, field.kind).map(|w| field.get(w) - fz).sum::<f64>() / d
}

fn max_residual<F: Fn(Vertex) -> f64>(region: &Region, field: &Field, rhs: &F) -> f64 {
    region
        .iter()
        .map(|z| (laplacian(field, z) - rhs(z)).abs())
        .fold(0.0, f64::max)
}

fn solve_raw<F: Fn(Vertex) -> f64>(region: &Region, rhs: &F) -> Result<Field, PotentialError> {
    match region.kind() {
        GraphKind::Line => solve_line(region, rhs),
        GraphKind::Comb2 => solve_comb(region, rhs),
    }
}

fn solve_line<F: Fn(Vertex) -> f64>(region: &Region, rhs: &F) -> Result<Field, PotentialError> {
    let mut xs: Vec<i64> = region.iter().map(|v| v.x).collect();
    if xs.is_empty() {
        return Ok(Field {
            kind: GraphKind::Line,
            map: HashMap::new(),
        });
    }
    xs.sort_unstable();
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    if xs.len() as i64 != x1 - x0 + 1 {
        return Err(PotentialError::NotCombConvex {
            reason: "line region is not one interval".into(),
        });
    }
    let width = xs.len();
    // d = 2 everywhere: φ(x−1) − 2φ(x) + φ(x+1) = 2·rhs(x)
    let diag = vec![-2.0; width];
    let mut b: Vec<f64> = (0..width)
        .map(|i| 2.0 * rhs(Vertex::new(x0 + i as i64, 0)))
        .collect();
    let mut scratch = Vec::new();
    thomas_unit_offdiag(&diag, &mut b, &mut scratch);
    let map = b
        .into_iter()
        .enumerate()
        .map(|(i, phi)| (Vertex::new(x0 + i as i64, 0), phi))
        .collect();
    Ok(Field {
        kind: GraphKind::Line,
        map,
    })
}

fn solve_comb<F: Fn(Vertex) -> f64>(region: &Region, rhs: &F) -> Result<Field, PotentialError> {
    let cc = CondensedComb::from_region(region)?;
    let width = cc.width();
    let mut scratch = Vec::new();
    // per-column particular solutions on the teeth (root value 0), kept for
    // the back-substitution; the homogeneous part is linear with slope
    // determined by the run length
    let mut part_up: Vec<Vec<f64>> = Vec::with_capacity(width);
    let mut part_dn: Vec<Vec<f64>> = Vec::with_capacity(width);
    let mut diag = Vec::with_capacity(width);
    let mut b = Vec::with_capacity(width);
    for col in 0..width {
        let x = cc.x0 + col as i64;
        let mut row_diag = -4.0;
        let mut row_rhs = 4.0 * rhs(Vertex::new(x, 0));
        for (h, sign, store) in [
            (cc.up[col], 1i64, &mut part_up),
            (cc.dn[col], -1i64, &mut part_dn),
        ] {
            if h == 0 {
                store.push(Vec::new());
                continue;
            }
            let m = h as usize;
            let tooth_diag = vec![-2.0; m];
            let mut tooth_rhs: Vec<f64> = (1..=h)
                .map(|y| 2.0 * rhs(Vertex::new(x, sign * y)))
                .collect();
            thomas_unit_offdiag(&tooth_diag, &mut tooth_rhs, &mut scratch);
            // tooth value = particular + β·(h+1−y)/(h+1) where β = φ(x,0)
            row_diag += h as f64 / (h as f64 + 1.0);
            row_rhs -= tooth_rhs[0];
            store.push(tooth_rhs);
        }
        diag.push(row_diag);
        b.push(row_rhs);
    }
    thomas_unit_offdiag(&diag, &mut b, &mut scratch);
    let mut map = HashMap::with_capacity(region.len());
    for col in 0..width {
        let x = cc.x0 + col as i64;
        let beta = b[col];
        map.insert(Vertex::new(x, 0), beta);
        for (h, sign, part) in [
            (cc.up[col], 1i64, &part_up[col]),
            (cc.dn[col], -1i64, &part_dn[col]),
        ] {
            let hf = h as f64;
            for y in 1..=h {
                let hom = (hf + 1.0 - y as f64) / (hf + 1.0);
                map.insert(Vertex::new(x, sign * y), part[(y - 1) as usize] + hom * beta);
            }
        }
    }
    Ok(Field {
        kind: GraphKind::Comb2,
        map,
    })
}

// ---------------------------------------------------------------------------
// Green functions

/// Stopped Green function G(y, ·) of the walk killed on leaving the region:
/// solve Δh = −δ_y/d(y) on the region, then G(y, z) = h(z)·d(z). The
/// reversibility identity G(y,z)/d(z) = G(z,y)/d(y) holds to solver
/// tolerance.
pub fn stopped_green(region: &Region, y: Vertex) -> Result<Field, PotentialError> {
    if !region.contains(y) {
        return Err(PotentialError::OutsideRegion { v: y });
    }
    let dy = degree(y, region.kind()) as f64;
    let h = dirichlet_solve(
        region,
        |z| if z == y { -1.0 / dy } else { 0.0 },
        DEFAULT_SOLVE_TOL,
    )?;
    let map = h
        .map
        .into_iter()
        .map(|(z, hz)| (z, hz * degree(z, region.kind()) as f64))
        .collect();
    Ok(Field {
        kind: region.kind(),
        map,
    })
}

/// Green function G(y,y) of the line walk killed outside [−b, b]:
/// exactly ((b+1)² − y²)/(b+1). Large b drops the +1s to b² − y² over b.
pub fn interval_green(b: i64, y: i64) -> Result<f64, PotentialError> {
    if y.abs() > b {
        return Err(PotentialError::OutsideInterval { b, y });
    }
    let bf = (b + 1) as f64;
    let yf = y as f64;
    Ok((bf * bf - yf * yf) / bf)
}

// ---------------------------------------------------------------------------
// closed forms

/// Coefficient of the cubic term in c₁, fixed by the backbone condition at
/// the center of the shifted frame (K³ = (9/4)n collapses the two forms).
fn shifted_cubic_coeff(n: f64) -> f64 {
    let kn = K * n.cbrt();
    (5.0 * kn + 18.0 * n) / (18.0 * (1.0 + 3.0 * kn * kn))
}

/// Closed form in the shifted frame: s measures backbone distance in from
/// the ball edge (s = K·n^{1/3} − |x|), y runs up the tooth.
/// g^t(s, y) = ½(y − y²) + c₁(s) + y·c₂(s) with
/// c₁(s) = −s⁴/18 + b·s³ − s²/36 and c₂(s) = ½(s²/3 − 1) − 3c₁(s)/s²
/// (continuity value −5/12 at s = 0).
pub fn g_closed_form_shifted(n: f64, s: f64, y: f64) -> f64 {
    assert!(n > 0.0, "total mass must be positive");
    let b = shifted_cubic_coeff(n);
    let c1 = -s.powi(4) / 18.0 + b * s.powi(3) - s * s / 36.0;
    let c2 = if s == 0.0 {
        -5.0 / 12.0
    } else {
        0.5 * (s * s / 3.0 - 1.0) - 3.0 * c1 / (s * s)
    };
    let ya = y.abs();
    0.5 * (ya - ya * ya) + c1 + ya * c2
}

/// The closed form pulled back to lattice coordinates.
pub fn g_closed_form(n: f64, v: Vertex) -> f64 {
    let s = K * n.cbrt() - (v.x.abs() as f64);
    g_closed_form_shifted(n, s, v.y.abs() as f64)
}

/// The two Dirichlet solutions on ball_region(n) whose ratio the
/// boundary-hitting estimates bound: the first has source strength 1 − n·δ_o
/// (normalized by degree), the second −1 − n·δ_o.
pub fn lambda_fields(n: f64, tol: f64) -> Result<(Field, Field), PotentialError> {
    if !(n > 0.0) {
        return Err(PotentialError::NonpositiveMass { n });
    }
    let ball = ball_region(n);
    let f = dirichlet_solve(
        &ball,
        |z| {
            let d = degree(z, GraphKind::Comb2) as f64;
            (1.0 - if z == Vertex::ORIGIN { n } else { 0.0 }) / d
        },
        tol,
    )?;
    let g = dirichlet_solve(
        &ball,
        |z| {
            let d = degree(z, GraphKind::Comb2) as f64;
            (-1.0 - if z == Vertex::ORIGIN { n } else { 0.0 }) / d
        },
        tol,
    )?;
    Ok((f, g))
}

/// λ_n(v) = f_n(v)/g_n(v), both taken from the numeric solves.
pub fn lambda_ratio(n: f64, v: Vertex) -> Result<f64, PotentialError> {
    let (f, g) = lambda_fields(n, DEFAULT_SOLVE_TOL)?;
    if !f.contains(v) {
        return Err(PotentialError::OutsideRegion { v });
    }
    let gv = g.get(v);
    if gv <= 0.0 {
        return Err(PotentialError::RatioUndefined { v, g: gv });
    }
    Ok(f.get(v) / gv)
}

// ---------------------------------------------------------------------------
// potential kernel generating functions

/// F₁, F₂ and G(o,o|z) evaluated from their radical formulas.
#[derive(Clone, Copy, Debug)]
pub struct KernelPoint {
    pub z: f64,
    pub f1: f64,
    pub f2: f64,
    pub g: f64,
}

/// Generating-function building blocks at |z| < 1: F₁ for a tooth step,
/// F₂ for a backbone step, G(o,o|z) for returns to the origin.
pub fn kernel_eval(z: f64) -> Result<KernelPoint, PotentialError> {
    if !(z > 0.0 && z < 1.0) {
        return Err(PotentialError::ZOutOfRange { z });
    }
    let w = (1.0 - z * z).sqrt();
    let f1 = (1.0 - w) / z;
    let root = (1.0 - z * z + w).sqrt();
    let f2 = (1.0 + w - std::f64::consts::SQRT_2 * root) / z;
    let g = std::f64::consts::SQRT_2 / root;
    Ok(KernelPoint { z, f1, f2, g })
}

/// Abel-type evaluation A(x, o | z) = G(o,o|z)·(1 − F₁^{|y|} F₂^{|x|}).
/// As z ↑ 1 this tends to 2|x| for backbone displacements; only evaluations
/// at z < 1 are computed, no genuine-limit claim.
pub fn a_gf(v: Vertex, z: f64) -> Result<f64, PotentialError> {
    let kp = kernel_eval(z)?;
    let tooth = kp.f1.powf(v.y.abs() as f64);
    let backbone = kp.f2.powf(v.x.abs() as f64);
    Ok(kp.g * (1.0 - tooth * backbone))
}

/// Power-series coefficients of G(o,o|z) through degree t_max; the t-th
/// coefficient is the t-step return probability at the origin.
pub fn green_series_coeffs(t_max: usize) -> Vec<f64> {
    let deg = t_max + 1;
    // w − 1 where w = sqrt(1 − z²), even powers only
    let mut w_minus_1 = vec![0.0; deg];
    let mut half_binom = 1.0f64; // binom(1/2, j) running product
    for j in 1..=(t_max / 2) {
        half_binom *= (0.5 - (j as f64 - 1.0)) / j as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        w_minus_1[2 * j] = half_binom * sign;
    }
    // ŝ/2 with ŝ = (w − 1) − z²; then G = Σ binom(−1/2, j)(ŝ/2)^j
    let mut shat_half = w_minus_1;
    if deg > 2 {
        shat_half[2] -= 1.0;
    }
    for c in shat_half.iter_mut() {
        *c *= 0.5;
    }
    let mut coeffs = vec![0.0; deg];
    coeffs[0] = 1.0;
    let mut power = vec![0.0; deg]; // (ŝ/2)^j, truncated
    power[0] = 1.0;
    let mut neg_half_binom = 1.0f64;
    for j in 1..=(t_max / 2) {
        power = poly_mul_trunc(&power, &shat_half, deg);
        neg_half_binom *= (-0.5 - (j as f64 - 1.0)) / j as f64;
        for (c, p) in coeffs.iter_mut().zip(power.iter()) {
            *c += neg_half_binom * p;
        }
    }
    coeffs
}

fn poly_mul_trunc(a: &[f64], b: &[f64], deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; deg];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().take(deg - i).enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Exact t-step return probabilities p_t(o, o) by forward dynamics on the
/// window |x|, |y| ≤ t_max (the walk cannot leave it in t_max steps).
pub fn return_prob_dp(t_max: usize) -> Result<Vec<f64>, PotentialError> {
    const CAP: usize = 64;
    if t_max > CAP {
        return Err(PotentialError::HorizonTooLarge { t_max, cap: CAP });
    }
    let side = 2 * t_max + 1;
    let idx = |x: i64, y: i64| (x + t_max as i64) as usize * side + (y + t_max as i64) as usize;
    let mut cur = vec![0.0f64; side * side];
    let mut next = vec![0.0f64; side * side];
    cur[idx(0, 0)] = 1.0;
    let mut probs = Vec::with_capacity(t_max + 1);
    probs.push(1.0);
    let t_cap = t_max as i64;
    for _ in 1..=t_max {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in -t_cap..=t_cap {
            for y in -t_cap..=t_cap {
                let p = cur[idx(x, y)];
                if p == 0.0 {
                    continue;
                }
                let share = p / degree(Vertex::new(x, y), GraphKind::Comb2) as f64;
                for w in neighbors(Vertex::new(x, y), GraphKind::Comb2) {
                    if w.x.abs() <= t_cap && w.y.abs() <= t_cap {
                        next[idx(w.x, w.y)] += share;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        probs.push(cur[idx(0, 0)]);
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region_boundary;
    use crate::shape::in_ball;

    fn ball(n: f64) -> Region {
        ball_region(n)
    }

    #[test]
    fn single_vertex_dirichlet() {
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN]);
        let phi = dirichlet_solve(&r, |_| -0.25, 1e-12).unwrap();
        assert!((phi.get(Vertex::ORIGIN) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_field() {
        let phi = dirichlet_solve(&ball(200.0), |_| 0.0, 1e-12).unwrap();
        for (_, v) in phi.iter() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn solver_linearity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let region = ball(150.0);
        let rhs1: HashMap<Vertex, f64> = region
            .iter()
            .map(|v| (v, rng.random_range(-1.0..1.0)))
            .collect();
        let rhs2: HashMap<Vertex, f64> = region
            .iter()
            .map(|v| (v, rng.random_range(-1.0..1.0)))
            .collect();
        let p1 = dirichlet_solve(&region, |v| rhs1[&v], 1e-10).unwrap();
        let p2 = dirichlet_solve(&region, |v| rhs2[&v], 1e-10).unwrap();
        let p12 = dirichlet_solve(&region, |v| rhs1[&v] + rhs2[&v], 1e-10).unwrap();
        for v in region.iter() {
            assert!(
                (p12.get(v) - p1.get(v) - p2.get(v)).abs() < 1e-8,
                "linearity fails at {v}"
            );
        }
    }

    #[test]
    fn rejects_non_convex_regions() {
        // detached tooth cell
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN, Vertex::new(0, 2)]);
        assert!(matches!(
            dirichlet_solve(&r, |_| 0.0, 1e-10),
            Err(PotentialError::NotCombConvex { .. })
        ));
        // backbone gap
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN, Vertex::new(2, 0)]);
        assert!(dirichlet_solve(&r, |_| 0.0, 1e-10).is_err());
    }

    #[test]
    fn green_on_singleton() {
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN]);
        let g = stopped_green(&r, Vertex::ORIGIN).unwrap();
        assert!((g.get(Vertex::ORIGIN) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn green_on_two_site_region() {
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN, Vertex::new(0, 1)]);
        let g = stopped_green(&r, Vertex::ORIGIN).unwrap();
        assert!((g.get(Vertex::ORIGIN) - 8.0 / 7.0).abs() < 1e-12);
        assert!((g.get(Vertex::new(0, 1)) - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn green_requires_source_inside() {
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN]);
        assert!(matches!(
            stopped_green(&r, Vertex::new(1, 0)),
            Err(PotentialError::OutsideRegion { .. })
        ));
    }

    #[test]
    fn green_reversibility_on_sampled_pairs() {
        use rand::{seq::IndexedRandom, SeedableRng};
        let region = ball(500.0);
        let verts = region.sorted_vertices();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        for _ in 0..50 {
            let &y = verts.choose(&mut rng).unwrap();
            let &z = verts.choose(&mut rng).unwrap();
            let gy = stopped_green(&region, y).unwrap();
            let gz = stopped_green(&region, z).unwrap();
            let lhs = gy.get(z) / degree(z, GraphKind::Comb2) as f64;
            let rhs = gz.get(y) / degree(y, GraphKind::Comb2) as f64;
            assert!((lhs - rhs).abs() <= 1e-9, "pair {y} {z}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn interval_green_small_cases() {
        assert_eq!(interval_green(1, 0).unwrap(), 2.0);
        assert_eq!(interval_green(1, 1).unwrap(), 1.5);
        assert_eq!(interval_green(100, 0).unwrap(), 101.0);
        assert!(interval_green(3, 4).is_err());
    }

    #[test]
    fn interval_green_matches_line_solver() {
        let b = 100i64;
        let region = Region::from_vertices(
            GraphKind::Line,
            (-b..=b).map(|x| Vertex::new(x, 0)),
        );
        for y in [-100, -37, 0, 1, 55, 100] {
            let g = stopped_green(&region, Vertex::new(y, 0)).unwrap();
            let exact = interval_green(b, y).unwrap();
            assert!(
                (g.get(Vertex::new(y, 0)) - exact).abs() <= 1e-10,
                "y = {y}"
            );
        }
    }

    #[test]
    fn shifted_form_tooth_recursion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(26);
        let n = 1e4;
        for _ in 0..100 {
            let s: f64 = rng.random_range(0.5..50.0);
            let y: f64 = rng.random_range(1.0..200.0);
            let g = |yy: f64| g_closed_form_shifted(n, s, yy);
            let resid = 2.0 * g(y) - g(y + 1.0) - g(y - 1.0) - 1.0;
            assert!(resid.abs() <= 1e-9, "s = {s}, y = {y}: {resid:.3e}");
        }
    }

    #[test]
    fn shifted_form_boundary_zeros() {
        for n in [1e3, 1e5] {
            for s in [3.0f64, 6.0, 9.0, 30.0] {
                let v = g_closed_form_shifted(n, s, s * s / 3.0);
                assert!(v.abs() <= 1e-9, "n = {n}, s = {s}: {v:.3e}");
            }
        }
    }

    #[test]
    fn closed_form_tracks_numeric_solution() {
        // relative sup-discrepancy over the 0.8n ball, normalized by the
        // numeric sup; must shrink as n grows (the closed form is asymptotic)
        let mut prev = f64::INFINITY;
        for n in [1e3, 1e4] {
            let (_, g) = lambda_fields(n, 1e-9).unwrap();
            let inner = ball(0.8 * n);
            let mut sup_diff = 0.0f64;
            let mut sup_g = 0.0f64;
            for v in inner.iter() {
                sup_diff = sup_diff.max((g_closed_form(n, v) - g.get(v)).abs());
                sup_g = sup_g.max(g.get(v).abs());
            }
            let rel = sup_diff / sup_g;
            assert!(rel < prev, "n = {n}: {rel} not below {prev}");
            assert!(rel < 0.05, "n = {n}: {rel}");
            prev = rel;
        }
    }

    #[test]
    fn lambda_ratio_at_origin_small_n() {
        // the two fields share the point source; the denominator field is
        // strictly larger, so the ratio lives in (0, 1) and is far from the
        // boundary values (~0.08) at the center
        let r = lambda_ratio(1000.0, Vertex::ORIGIN).unwrap();
        assert!((r - 0.5895).abs() < 0.01, "ratio {r}");
        assert!(r > 0.5 && r <= 1.0);
    }

    #[test]
    fn lambda_ratio_rejects_outside_and_degenerate() {
        assert!(matches!(
            lambda_ratio(100.0, Vertex::new(500, 0)),
            Err(PotentialError::OutsideRegion { .. })
        ));
    }

    #[test]
    fn denominator_dominates_numerator() {
        // g − f is superharmonic with zero boundary values, hence ≥ 0
        let (f, g) = lambda_fields(1000.0, 1e-10).unwrap();
        for (v, fv) in f.iter() {
            assert!(g.get(v) - fv >= -1e-8, "g < f at {v}");
        }
    }

    #[test]
    fn minimum_principle_on_denominator_field() {
        // superharmonic inside, so the minimum over the ball sits on the
        // inner boundary
        let n = 1000.0;
        let (_, g) = lambda_fields(n, 1e-10).unwrap();
        let region = ball(n);
        let (_, inner) = region_boundary(&region);
        let min_all = region
            .iter()
            .map(|v| g.get(v))
            .fold(f64::INFINITY, f64::min);
        let min_inner = inner
            .iter()
            .map(|v| g.get(v))
            .fold(f64::INFINITY, f64::min);
        assert!(min_all >= min_inner - 1e-9);
    }

    #[test]
    fn kernel_point_ranges() {
        for i in 1..100 {
            let z = i as f64 / 100.0;
            let kp = kernel_eval(z).unwrap();
            assert!(kp.f1 > 0.0 && kp.f1 < 1.0, "F1 at z = {z}");
            assert!(kp.f2 > 0.0 && kp.f2 < 1.0, "F2 at z = {z}");
            assert!(kp.g >= 1.0, "G at z = {z}");
        }
        assert!(kernel_eval(0.0).is_err());
        assert!(kernel_eval(1.0).is_err());
        assert!(kernel_eval(-0.5).is_err());
    }

    #[test]
    fn two_step_return_probability() {
        // all 16 two-step paths from the origin: 4 of them return
        // (E then W, W then E, N then S, S then N), each with weight
        // 1/4 · 1/2 for the tooth moves or 1/4 · 1/4 along the backbone:
        // 2·(1/16) + 2·(1/8) = 3/8
        let coeffs = green_series_coeffs(4);
        assert_eq!(coeffs[0], 1.0);
        assert_eq!(coeffs[1], 0.0);
        assert!((coeffs[2] - 0.375).abs() < 1e-15);
        let dp = return_prob_dp(4).unwrap();
        assert_eq!(dp[0], 1.0);
        assert_eq!(dp[1], 0.0);
        assert!((dp[2] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn series_matches_dp_to_depth_40() {
        let coeffs = green_series_coeffs(40);
        let dp = return_prob_dp(40).unwrap();
        for t in 0..=40 {
            assert!(
                (coeffs[t] - dp[t]).abs() <= 1e-10,
                "t = {t}: series {} dp {}",
                coeffs[t],
                dp[t]
            );
        }
    }

    #[test]
    fn series_sums_to_kernel_value() {
        // geometric tail: Σ_{t>64} p_t z^t ≤ z^65/(1−z), far below 1e−10 at z = 1/2
        let z = 0.5f64;
        let dp = return_prob_dp(64).unwrap();
        let partial: f64 = dp
            .iter()
            .enumerate()
            .map(|(t, &p)| p * z.powi(t as i32))
            .sum();
        let g = kernel_eval(z).unwrap().g;
        assert!((partial - g).abs() <= 1e-10, "{partial} vs {g}");
    }

    #[test]
    fn dp_horizon_capped() {
        assert!(return_prob_dp(64).is_ok());
        assert!(matches!(
            return_prob_dp(65),
            Err(PotentialError::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn abel_values_approach_graph_limits() {
        // backbone displacement (1,0): limit 2; tooth displacement (0,5): limit 0
        let mut prev = f64::INFINITY;
        for k in 2..=6 {
            let z = 1.0 - 10f64.powi(-k);
            let a = a_gf(Vertex::new(1, 0), z).unwrap();
            assert!((a - 2.0).abs() < (prev - 2.0).abs() + 1e-12, "k = {k}");
            prev = a;
        }
        assert!((a_gf(Vertex::new(1, 0), 1.0 - 1e-6).unwrap() - 2.0).abs() < 0.06);
        let mut prev = f64::INFINITY;
        for k in 2..=6 {
            let a = a_gf(Vertex::new(0, 5), 1.0 - 10f64.powi(-k)).unwrap();
            assert!(a < prev, "k = {k}: {a} not below {prev}");
            prev = a;
        }
    }

    #[test]
    fn field_csv_has_17_digit_values() {
        let r = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN]);
        let phi = dirichlet_solve(&r, |_| -0.25, 1e-12).unwrap();
        let mut buf = Vec::new();
        phi.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x,y,value\n0,0,2.5000000000000000e-1\n");
    }

    #[test]
    fn lambda_boundary_minimum_matches_oracle() {
        // trimmed ball, ε = 0.2: the minimum of f/g over the inner boundary
        // sits at the x-extreme teeth; value pinned by an independent
        // sparse-matrix solve
        let n = 1e5;
        let eps = 0.2;
        let (f, g) = lambda_fields(n, 1e-9).unwrap();
        let trimmed = trimmed_ball(n, eps);
        let (_, inner) = region_boundary(&trimmed);
        let mut min_ratio = f64::INFINITY;
        let mut argmin = Vertex::ORIGIN;
        for v in inner.iter() {
            let ratio = f.get(v) / g.get(v);
            if ratio < min_ratio {
                min_ratio = ratio;
                argmin = v;
            }
        }
        assert!((min_ratio - 0.01700).abs() < 0.0005, "min {min_ratio} at {argmin}");
        assert_eq!(argmin.x.abs(), 48, "minimizer at the x-extreme teeth, got {argmin}");
    }

    // |x| ≤ (1−ε)k·n^{1/3}, |y| ≤ (1−ε)l·(n^{1/3} − |x|/k)²
    fn trimmed_ball(n: f64, eps: f64) -> Region {
        let r = n.cbrt();
        let mut region = Region::new(GraphKind::Comb2);
        let x_hi = ((1.0 - eps) * K * r).floor() as i64;
        for x in -x_hi..=x_hi {
            let rem = r - (x.abs() as f64) / K;
            let y_hi = ((1.0 - eps) * crate::shape::L * rem * rem).floor() as i64;
            for y in -y_hi..=y_hi {
                region.insert(Vertex::new(x, y));
            }
        }
        region
    }

    #[test]
    fn ratio_trend_at_center_tooth_top() {
        // at the center tooth top of the trimmed ball the ratio rises with n
        // toward its thin-tooth limit 3ε/(8−3ε) ≈ 0.0811 at ε = 0.2
        let eps = 0.2;
        let limit = 3.0 * eps / (8.0 - 3.0 * eps);
        let mut prev = 0.0;
        for n in [1e3, 1e4] {
            let (f, g) = lambda_fields(n, 1e-9).unwrap();
            let y_top = ((1.0 - eps) * crate::shape::L * n.cbrt() * n.cbrt()).floor() as i64;
            let v = Vertex::new(0, y_top);
            let ratio = f.get(v) / g.get(v);
            assert!(ratio > prev, "n = {n}: {ratio} not above {prev}");
            assert!((ratio - limit).abs() < 0.01, "n = {n}: {ratio} vs {limit}");
            prev = ratio;
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let region = ball(300.0);
        let a = dirichlet_solve(&region, |v| if v == Vertex::ORIGIN { -3.0 } else { 0.25 }, 1e-10)
            .unwrap();
        let b = dirichlet_solve(&region, |v| if v == Vertex::ORIGIN { -3.0 } else { 0.25 }, 1e-10)
            .unwrap();
        for (v, av) in a.iter() {
            assert_eq!(av.to_bits(), b.get(v).to_bits(), "at {v}");
        }
    }

    #[test]
    fn residuals_meet_default_tolerance_at_scale() {
        let n = 1e4;
        let ball_n = ball(n);
        let f = dirichlet_solve(
            &ball_n,
            |z| {
                let d = degree(z, GraphKind::Comb2) as f64;
                (1.0 - if z == Vertex::ORIGIN { n } else { 0.0 }) / d
            },
            DEFAULT_SOLVE_TOL,
        )
        .unwrap();
        // spot check interior membership is sane too
        assert!(f.iter().all(|(v, _)| in_ball(n, v)));
    }
}
