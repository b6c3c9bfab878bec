//! Randomized structural properties of the public surface: the comb metric
//! against a breadth-first oracle, CSV round-trips, the cubic root solver,
//! rotor cycling and ball membership.

use comb_agg::lattice::{comb_distance, degree, neighbors};
use comb_agg::rotor::{rotor_step, RotorPreset, RotorState};
use comb_agg::shape::{ball_region, gamma_line, in_ball, solve_t, solve_t_radical};
use comb_agg::{GraphKind, Region, Vertex};
use proptest::prelude::*;
use std::collections::{HashMap, HashSet, VecDeque};

/// Breadth-first distances on the comb from `a`, exact within the box that
/// contains every geodesic between test vertices (paths never overshoot the
/// endpoints' columns by more than the detour through the backbone).
fn bfs_distance(a: Vertex, b: Vertex) -> u64 {
    let cap = 2 * (a.x.abs() + a.y.abs() + b.x.abs() + b.y.abs() + 2);
    let mut dist: HashMap<Vertex, u64> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(a, 0);
    queue.push_back(a);
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if v == b {
            return dv;
        }
        for w in neighbors(v, GraphKind::Comb2) {
            if w.x.abs() <= cap && w.y.abs() <= cap && !dist.contains_key(&w) {
                dist.insert(w, dv + 1);
                queue.push_back(w);
            }
        }
    }
    unreachable!("comb is connected");
}

fn vertex_strategy() -> impl Strategy<Value = Vertex> {
    (-8i64..=8, -8i64..=8).prop_map(|(x, y)| Vertex::new(x, y))
}

proptest! {
    #[test]
    fn comb_distance_matches_breadth_first(a in vertex_strategy(), b in vertex_strategy()) {
        prop_assert_eq!(comb_distance(a, b), bfs_distance(a, b));
    }

    #[test]
    fn comb_distance_is_a_metric(
        a in vertex_strategy(),
        b in vertex_strategy(),
        c in vertex_strategy(),
    ) {
        prop_assert_eq!(comb_distance(a, a), 0);
        prop_assert_eq!(comb_distance(a, b), comb_distance(b, a));
        prop_assert!(comb_distance(a, c) <= comb_distance(a, b) + comb_distance(b, c));
        prop_assert!(a == b || comb_distance(a, b) > 0);
    }

    #[test]
    fn region_csv_round_trips(verts in prop::collection::vec(vertex_strategy(), 0..25)) {
        let region = Region::from_vertices(GraphKind::Comb2, verts);
        let mut buf = Vec::new();
        region.write_csv(&mut buf).unwrap();
        let back = Region::read_csv(GraphKind::Comb2, buf.as_slice()).unwrap();
        prop_assert_eq!(back.sorted_vertices(), region.sorted_vertices());
    }

    #[test]
    fn cubic_root_inverts_and_grows(e1 in -6.0f64..9.0, e2 in -6.0f64..9.0) {
        let (n1, n2) = (10f64.powf(e1), 10f64.powf(e2));
        let t1 = solve_t(n1).unwrap();
        let back = 3.0 / 16.0 * t1 * t1 * t1 + 5.0 / 12.0 * t1;
        prop_assert!((back - n1).abs() <= 1e-12 * n1.max(1.0), "round trip {back} vs {n1}");
        let radical = solve_t_radical(n1).unwrap();
        prop_assert!((radical - t1).abs() <= 1e-10 * t1.max(1.0), "{radical} vs {t1}");
        if n1 < n2 {
            prop_assert!(t1 < solve_t(n2).unwrap());
        }
    }

    #[test]
    fn rotor_cycles_through_every_neighbor(
        v in vertex_strategy(),
        toward_origin in any::<bool>(),
    ) {
        let preset = if toward_origin { RotorPreset::TowardOrigin } else { RotorPreset::AllFirst };
        let mut state = RotorState::new(GraphKind::Comb2, preset);
        let start = state.index_of(v);
        let d = degree(v, GraphKind::Comb2);
        let targets: HashSet<Vertex> = (0..d).map(|_| rotor_step(&mut state, v)).collect();
        prop_assert_eq!(targets.len(), d, "a full cycle hits each neighbor once");
        let all: HashSet<Vertex> = neighbors(v, GraphKind::Comb2).collect();
        prop_assert_eq!(targets, all);
        prop_assert_eq!(state.index_of(v), start, "index returns after d steps");
    }

    #[test]
    fn ball_region_agrees_with_membership(n in 1.0f64..2000.0) {
        let region = ball_region(n);
        for v in region.iter() {
            prop_assert!(in_ball(n, v), "{v} listed but outside");
        }
        let x_max = region.iter().map(|v| v.x).max().unwrap();
        prop_assert!(!in_ball(n, Vertex::new(x_max + 1, 0)), "backbone not maximal");
        for x in 0..=x_max {
            let top = region.iter().filter(|v| v.x == x).map(|v| v.y).max().unwrap();
            prop_assert!(!in_ball(n, Vertex::new(x, top + 1)), "tooth {x} not maximal");
        }
    }

    #[test]
    fn line_majorant_has_constant_laplacian(n in 0.0f64..1e6, y in 1i64..1000) {
        let lap = 0.5 * (gamma_line(n, y + 1) + gamma_line(n, y - 1)) - gamma_line(n, y);
        let scale = gamma_line(n, y + 1).max(1.0);
        prop_assert!((lap - 0.5).abs() <= 1e-9 * scale, "Δγ̃ = {lap} at y = {y}, n = {n}");
    }
}
