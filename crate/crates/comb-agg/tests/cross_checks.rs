//! Identities that tie the modules together: the sandpile odometer against
//! the Dirichlet solver, and the two obstacle-problem fields against the
//! shape scale.

use comb_agg::potential::{dirichlet_solve, lambda_fields};
use comb_agg::sandpile::{relax_point_mass, RelaxOptions};
use comb_agg::shape::{ball_region, L};
use comb_agg::{GraphKind, Vertex};

/// The odometer solves Δu = (1 − n·δ_o)/d on the cluster with zero outside;
/// the solver recovers it from scratch.
#[test]
fn odometer_solves_its_dirichlet_problem() {
    let n = 1e3;
    let opts = RelaxOptions {
        stop_tol: 1e-10,
        ..RelaxOptions::default()
    };
    let result = relax_point_mass(GraphKind::Comb2, n, &opts).unwrap();
    let rhs = |z: Vertex| {
        let d = comb_agg::lattice::degree(z, GraphKind::Comb2) as f64;
        (1.0 - if z == Vertex::ORIGIN { n } else { 0.0 }) / d
    };
    let f = dirichlet_solve(&result.cluster, rhs, 1e-9).unwrap();
    let mut sup = 0.0f64;
    for v in result.cluster.iter() {
        sup = sup.max((f.get(v) - result.odometer.u(v)).abs());
    }
    assert!(sup <= 1e-6, "solver and odometer disagree by {sup:.3e}");
}

/// g − f stays nonnegative across the whole ball at the larger desk scale
/// (the small-scale version lives with the solver's unit tests).
#[test]
fn denominator_dominates_at_scale() {
    let (f, g) = lambda_fields(1e4, 1e-9).unwrap();
    let mut worst = f64::INFINITY;
    for (v, fv) in f.iter() {
        worst = worst.min(g.get(v) - fv);
    }
    assert!(worst >= -1e-8, "min(g − f) = {worst:.3e}");
}

/// At the central tooth top of the mass-0.8n ball the gap (g − f) scales
/// like n^{4/3}; the normalized value decreases toward its thin-tooth limit
/// (≈ 0.0541) from above.
#[test]
fn excess_gap_tracks_the_shape_scale() {
    let mut values = Vec::new();
    for n in [1e3, 1e4, 1e5] {
        let (f, g) = lambda_fields(n, 1e-9).unwrap();
        let y_top = ball_region(0.8 * n)
            .iter()
            .filter(|v| v.x == 0)
            .map(|v| v.y)
            .max()
            .unwrap();
        let v = Vertex::new(0, y_top);
        values.push((g.get(v) - f.get(v)) / n.powf(4.0 / 3.0));
    }
    assert!(
        values.windows(2).all(|w| w[1] < w[0]),
        "normalized gaps {values:?} do not decrease"
    );
    let last = values[2];
    assert!(
        (0.050..=0.060).contains(&last),
        "limit value {last:.4} outside [0.050, 0.060]"
    );
    // sanity on the expected heights: y_top tracks l·(0.8n)^{2/3}
    let y = ball_region(0.8e5).iter().filter(|v| v.x == 0).map(|v| v.y).max().unwrap();
    assert!((y as f64 - L * 0.8e5f64.powf(2.0 / 3.0)).abs() <= 1.0);
}
