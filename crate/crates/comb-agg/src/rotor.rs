//! Rotor-router walks and aggregation. A rotor at each vertex cycles
//! through the fixed neighbor order; a particle first advances the rotor at
//! its position, then moves to the neighbor now pointed at. Aggregation
//! releases particles from the origin; each settles on first reaching an
//! unoccupied vertex. Everything here is exact integer dynamics.

use crate::cluster::CombCluster;
use crate::idla::STEP_CAP;
use crate::lattice::{
    comb_distance, degree, neighbor, neighbors, region_boundary, CsvError, GraphKind, Region,
    Vertex,
};
use crate::potential::{stopped_green, PotentialError};
use crate::sandpile::{relax_point_mass, RelaxOptions, SandpileError};
use crate::shape::{ball_region, ShapeError, ShapeSpec, L};
use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

/// Above this particle count, line aggregation switches from step-by-step
/// simulation to the interval flow solver (identical results, see
/// line_aggregate_flow).
const LINE_STEP_LIMIT: u64 = 3000;

#[derive(Debug)]
pub enum RotorError {
    InvalidParticleCount { n: u64 },
    StepCapExceeded { particle: u64, cap: u64 },
    OutsideRegion { v: Vertex },
    /// The interval flow solver failed to locate a consistent cluster; this
    /// indicates a bug, not a property of the model.
    FlowSolverStuck { n: u64 },
    Potential(PotentialError),
    Sandpile(SandpileError),
    Shape(ShapeError),
}

impl fmt::Display for RotorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotorError::InvalidParticleCount { n } => {
                write!(f, "particle count must be at least 1, got {n}")
            }
            RotorError::StepCapExceeded { particle, cap } => {
                write!(f, "particle {particle} exceeded the {cap}-step cap")
            }
            RotorError::OutsideRegion { v } => write!(f, "vertex {v} is outside the region"),
            RotorError::FlowSolverStuck { n } => {
                write!(f, "interval flow solver found no consistent cluster for n = {n}")
            }
            RotorError::Potential(e) => write!(f, "{e}"),
            RotorError::Sandpile(e) => write!(f, "{e}"),
            RotorError::Shape(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RotorError {}

impl From<PotentialError> for RotorError {
    fn from(e: PotentialError) -> RotorError {
        RotorError::Potential(e)
    }
}

impl From<SandpileError> for RotorError {
    fn from(e: SandpileError) -> RotorError {
        RotorError::Sandpile(e)
    }
}

impl From<ShapeError> for RotorError {
    fn from(e: ShapeError) -> RotorError {
        RotorError::Shape(e)
    }
}

/// Named initial rotor configurations. Custom entries override the
/// all-first base (index 0 everywhere); indices are reduced mod degree on
/// read.
#[derive(Clone, Debug)]
pub enum RotorPreset {
    /// Every rotor at index 0 (E on the backbone and the line, N on teeth).
    AllFirst,
    /// Every rotor points along its shortest path to the origin; at the
    /// origin itself the rotor sits at index 0.
    TowardOrigin,
    Custom(HashMap<Vertex, u8>),
}

impl RotorPreset {
    fn base_index(&self, v: Vertex, kind: GraphKind) -> u8 {
        match self {
            RotorPreset::AllFirst => 0,
            RotorPreset::TowardOrigin => toward_origin_index(v, kind),
            RotorPreset::Custom(map) => map
                .get(&v)
                .map(|&i| i % degree(v, kind) as u8)
                .unwrap_or(0),
        }
    }
}

fn toward_origin_index(v: Vertex, kind: GraphKind) -> u8 {
    match kind {
        GraphKind::Line => {
            if v.x > 0 {
                1 // W
            } else {
                0 // E; also the convention at the origin
            }
        }
        GraphKind::Comb2 => {
            if v.y > 0 {
                1 // S
            } else if v.y < 0 {
                0 // N
            } else if v.x > 0 {
                2 // W
            } else {
                0 // E; also the convention at the origin
            }
        }
    }
}

/// Rotor configuration: explicit entries over a preset background.
#[derive(Clone, Debug)]
pub struct RotorState {
    kind: GraphKind,
    preset: RotorPreset,
    map: HashMap<Vertex, u8>,
}

impl RotorState {
    pub fn new(kind: GraphKind, preset: RotorPreset) -> RotorState {
        RotorState {
            kind,
            preset,
            map: HashMap::new(),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Current rotor index at v (explicit entry, else the preset value).
    pub fn index_of(&self, v: Vertex) -> u8 {
        self.map
            .get(&v)
            .copied()
            .unwrap_or_else(|| self.preset.base_index(v, self.kind))
    }

    pub fn set_index(&mut self, v: Vertex, index: u8) {
        self.map.insert(v, index % degree(v, self.kind) as u8);
    }

    /// Vertices with explicit entries (those the dynamics have touched).
    pub fn touched(&self) -> impl Iterator<Item = (Vertex, u8)> + '_ {
        self.map.iter().map(|(&v, &i)| (v, i))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut rows: Vec<(Vertex, u8)> = self.touched().collect();
        rows.sort_unstable_by_key(|&(v, _)| v);
        out.write_all(b"x,y,index\n")?;
        for (v, i) in rows {
            writeln!(out, "{},{},{}", v.x, v.y, i)?;
        }
        Ok(())
    }
}

/// Parses a rotor dump (`x,y,index` header) into an override map for
/// RotorPreset::Custom.
pub fn read_rotor_csv<R: BufRead>(input: R) -> Result<HashMap<Vertex, u8>, CsvError> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == "x,y,index" => {}
        Some((_, Ok(h))) => {
            return Err(CsvError::Malformed {
                line: 1,
                reason: format!("expected header \"x,y,index\", got \"{h}\""),
            })
        }
        Some((_, Err(e))) => return Err(CsvError::Io(e)),
        None => {
            return Err(CsvError::Malformed {
                line: 1,
                reason: "empty input".into(),
            })
        }
    }
    let mut map = HashMap::new();
    for (idx, line) in lines {
        let line = line.map_err(CsvError::Io)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = |reason: String| CsvError::Malformed {
            line: idx + 1,
            reason,
        };
        let x = parts
            .next()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .ok_or_else(|| bad(format!("bad x in \"{line}\"")))?;
        let y = parts
            .next()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .ok_or_else(|| bad(format!("bad y in \"{line}\"")))?;
        let i = parts
            .next()
            .and_then(|s| s.trim().parse::<u8>().ok())
            .ok_or_else(|| bad(format!("bad index in \"{line}\"")))?;
        if parts.next().is_some() {
            return Err(bad(format!("too many fields in \"{line}\"")));
        }
        map.insert(Vertex::new(x, y), i);
    }
    Ok(map)
}

/// Advances the rotor at v and returns the neighbor it now points at.
pub fn rotor_step(state: &mut RotorState, v: Vertex) -> Vertex {
    let d = degree(v, state.kind) as u8;
    let i = (state.index_of(v) + 1) % d;
    state.map.insert(v, i);
    neighbor(v, state.kind, i as usize)
}

pub struct RotorRun {
    pub n: u64,
    pub cluster: Region,
    /// Emission counts u_R; vertices that never emitted are absent.
    pub odometer: HashMap<Vertex, u64>,
    /// Final configuration, explicit on every cluster vertex.
    pub rotors: RotorState,
}

impl RotorRun {
    pub fn emissions(&self, v: Vertex) -> u64 {
        self.odometer.get(&v).copied().unwrap_or(0)
    }

    pub fn total_emissions(&self) -> u64 {
        self.odometer.values().sum()
    }
}

/// Deterministic rotor aggregation of n particles released at the origin.
pub fn rotor_aggregate(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    if n == 0 {
        return Err(RotorError::InvalidParticleCount { n });
    }
    match initial.kind {
        GraphKind::Comb2 => comb_aggregate(n, initial),
        GraphKind::Line => {
            if n <= LINE_STEP_LIMIT {
                line_aggregate_steps(n, initial)
            } else {
                line_aggregate_flow(n, initial)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// comb engine: dense per-column rotor and odometer storage over the
// condensed cluster, so the hot loop does no hashing

#[derive(Default)]
struct PayCol {
    bb_rot: u8,
    bb_odo: u64,
    up_rot: Vec<u8>,
    up_odo: Vec<u64>,
    dn_rot: Vec<u8>,
    dn_odo: Vec<u64>,
}

struct CombEngine<'a> {
    cluster: CombCluster,
    east: Vec<PayCol>,
    west: Vec<PayCol>,
    initial: &'a RotorState,
}

impl<'a> CombEngine<'a> {
    fn new(initial: &'a RotorState) -> CombEngine<'a> {
        CombEngine {
            cluster: CombCluster::new(),
            east: Vec::new(),
            west: Vec::new(),
            initial,
        }
    }

    fn occupy(&mut self, v: Vertex) {
        self.cluster.insert(v);
        let init = self.initial.index_of(v);
        if v.y == 0 {
            let col = PayCol {
                bb_rot: init,
                ..PayCol::default()
            };
            if v.x >= 0 {
                self.east.push(col);
            } else {
                self.west.push(col);
            }
        } else {
            let col = if v.x >= 0 {
                &mut self.east[v.x as usize]
            } else {
                &mut self.west[(-v.x - 1) as usize]
            };
            if v.y > 0 {
                col.up_rot.push(init);
                col.up_odo.push(0);
            } else {
                col.dn_rot.push(init);
                col.dn_odo.push(0);
            }
        }
    }

    #[inline]
    fn step(&mut self, v: Vertex) -> Vertex {
        let col = if v.x >= 0 {
            &mut self.east[v.x as usize]
        } else {
            &mut self.west[(-v.x - 1) as usize]
        };
        if v.y == 0 {
            let r = (col.bb_rot + 1) & 3;
            col.bb_rot = r;
            col.bb_odo += 1;
            match r {
                0 => Vertex::new(v.x + 1, 0),
                1 => Vertex::new(v.x, 1),
                2 => Vertex::new(v.x - 1, 0),
                _ => Vertex::new(v.x, -1),
            }
        } else {
            let i = (v.y.abs() - 1) as usize;
            let (rot, odo) = if v.y > 0 {
                (&mut col.up_rot[i], &mut col.up_odo[i])
            } else {
                (&mut col.dn_rot[i], &mut col.dn_odo[i])
            };
            let r = (*rot + 1) & 1;
            *rot = r;
            *odo += 1;
            if r == 0 {
                Vertex::new(v.x, v.y + 1)
            } else {
                Vertex::new(v.x, v.y - 1)
            }
        }
    }

    fn into_run(self, n: u64) -> RotorRun {
        let mut odometer = HashMap::new();
        let mut rotors = RotorState::new(GraphKind::Comb2, self.initial.preset.clone());
        let mut emit = |x: i64, col: &PayCol| {
            let bb = Vertex::new(x, 0);
            rotors.map.insert(bb, col.bb_rot);
            if col.bb_odo > 0 {
                odometer.insert(bb, col.bb_odo);
            }
            for (i, (&r, &m)) in col.up_rot.iter().zip(&col.up_odo).enumerate() {
                let v = Vertex::new(x, i as i64 + 1);
                rotors.map.insert(v, r);
                if m > 0 {
                    odometer.insert(v, m);
                }
            }
            for (i, (&r, &m)) in col.dn_rot.iter().zip(&col.dn_odo).enumerate() {
                let v = Vertex::new(x, -(i as i64) - 1);
                rotors.map.insert(v, r);
                if m > 0 {
                    odometer.insert(v, m);
                }
            }
        };
        for (i, col) in self.east.iter().enumerate() {
            emit(i as i64, col);
        }
        for (i, col) in self.west.iter().enumerate() {
            emit(-(i as i64) - 1, col);
        }
        RotorRun {
            n,
            cluster: self.cluster.to_region(),
            odometer,
            rotors,
        }
    }
}

fn comb_aggregate(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    let mut engine = CombEngine::new(initial);
    for particle in 0..n {
        let mut pos = Vertex::ORIGIN;
        let mut walked = 0u64;
        while engine.cluster.contains(pos) {
            if walked >= STEP_CAP {
                return Err(RotorError::StepCapExceeded {
                    particle,
                    cap: STEP_CAP,
                });
            }
            pos = engine.step(pos);
            walked += 1;
        }
        engine.occupy(pos);
    }
    Ok(engine.into_run(n))
}

// ---------------------------------------------------------------------------
// line engines

struct LineArrays {
    offset: i64,
    rot: Vec<u8>,
    odo: Vec<u64>,
    lo: i64,
    hi: i64,
    occupied_any: bool,
}

impl LineArrays {
    fn idx(&self, x: i64) -> usize {
        (x + self.offset) as usize
    }
}

fn line_aggregate_steps(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    let half = n as i64 + 1;
    let mut a = LineArrays {
        offset: half,
        rot: vec![0; (2 * half + 1) as usize],
        odo: vec![0; (2 * half + 1) as usize],
        lo: 0,
        hi: -1, // empty interval
        occupied_any: false,
    };
    for particle in 0..n {
        let mut pos = 0i64;
        let mut walked = 0u64;
        while a.occupied_any && a.lo <= pos && pos <= a.hi {
            if walked >= STEP_CAP {
                return Err(RotorError::StepCapExceeded {
                    particle,
                    cap: STEP_CAP,
                });
            }
            let i = a.idx(pos);
            let r = (a.rot[i] + 1) & 1;
            a.rot[i] = r;
            a.odo[i] += 1;
            pos += if r == 0 { 1 } else { -1 };
            walked += 1;
        }
        // settle
        let i = a.idx(pos);
        a.rot[i] = initial.index_of(Vertex::new(pos, 0));
        if !a.occupied_any {
            a.occupied_any = true;
            a.lo = pos;
            a.hi = pos;
        } else if pos < a.lo {
            a.lo = pos;
        } else {
            a.hi = pos;
        }
    }
    Ok(line_run_from_arrays(n, initial, &a))
}

fn line_run_from_arrays(n: u64, initial: &RotorState, a: &LineArrays) -> RotorRun {
    let mut cluster = Region::new(GraphKind::Line);
    let mut odometer = HashMap::new();
    let mut rotors = RotorState::new(GraphKind::Line, initial.preset.clone());
    for x in a.lo..=a.hi {
        let v = Vertex::new(x, 0);
        cluster.insert(v);
        let i = a.idx(x);
        rotors.map.insert(v, a.rot[i]);
        if a.odo[i] > 0 {
            odometer.insert(v, a.odo[i]);
        }
    }
    RotorRun {
        n,
        cluster,
        odometer,
        rotors,
    }
}

/// Eastward emissions among m from a vertex with initial index i0: emission
/// j leaves along index (i0 + j) mod 2, and E is index 0.
fn east_count(m: i64, i0: u8) -> i64 {
    m / 2 + if m % 2 == 1 && i0 == 1 { 1 } else { 0 }
}

/// Exact line aggregation without stepping.
///
/// The cluster is an interval of exactly n cells around the origin, each
/// absorbing one particle, so conservation forces the net particle flux
/// across every edge in closed form. Per-cell emission counts are then
/// determined up to one parity choice per cell, consistent with the
/// boundary (no emissions leave the interval). Such profiles are not
/// unique: they differ by phantom circulations, closed loops of emissions
/// no actual particle performs, and the true odometer is the
/// pointwise-least of them. The least one is constructed exactly:
/// nonnegativity of the directed emission counts confines the parity
/// prefix sums to windows computed right to left, and the pointwise-least
/// path through the windows is taken greedily left to right. An accepted
/// profile must additionally balance exactly, leak nothing, and admit no
/// subtractable circulation, so a returned run equals the step-by-step
/// result; the tests cross-validate the two engines and the uniqueness of
/// the accepted interval.
fn line_aggregate_flow(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    let a0 = (n as i64 - 1) / 2;
    let span = (n as i64).min(4096);
    let mut candidates = Vec::with_capacity(2 * span as usize + 1);
    candidates.push(a0);
    for k in 1..=span {
        candidates.push(a0 + k);
        candidates.push(a0 - k);
    }
    for a in candidates {
        let b = n as i64 - 1 - a;
        if a < 0 || b < 0 {
            continue;
        }
        if let Some(m) = solve_interval_flow(n, a, initial) {
            let width = n as usize;
            let mut arrays = LineArrays {
                offset: a,
                rot: vec![0; width],
                odo: vec![0; width],
                lo: -a,
                hi: b,
                occupied_any: true,
            };
            for (i, &mx) in m.iter().enumerate() {
                let v = Vertex::new(i as i64 - a, 0);
                let i0 = initial.index_of(v);
                arrays.rot[i] = ((i0 as u64 + mx) % 2) as u8;
                arrays.odo[i] = mx;
            }
            return Ok(line_run_from_arrays(n, initial, &arrays));
        }
    }
    Err(RotorError::FlowSolverStuck { n })
}

/// Emission profile for the candidate interval [-a, n-1-a], or None if no
/// consistent profile exists on it.
///
/// With W and E the westward and eastward emission counts of a cell,
/// m = W + E and the parity term s = E - W is 0 for even m and otherwise
/// +1 or -1 according to the cell's initial index. The flux recurrence
/// W(i+1) = W(i) + s(i) - G(i) (G the known net flux) turns westward
/// counts into W(i) = C(i) - P(i) with C, P the prefix sums of s and G, so
/// the whole profile is a function of the parity path C. Minimizing C
/// pointwise minimizes m pointwise.
fn solve_interval_flow(n: u64, a: i64, initial: &RotorState) -> Option<Vec<u64>> {
    let w = n as usize;
    let origin = a as usize;
    let i0: Vec<u8> = (0..w)
        .map(|i| initial.index_of(Vertex::new(i as i64 - a, 0)))
        .collect();
    let sigma = |i: usize| -> i64 {
        if i0[i] == 1 {
            1
        } else {
            -1
        }
    };
    // net eastward flux across the east edge of cell i: everything west of
    // that edge absorbs one each, minus the source if the origin is west
    let g: Vec<i64> = (0..w)
        .map(|i| if i >= origin { n as i64 } else { 0 } - (i as i64 + 1))
        .collect();
    let mut p = vec![0i64; w + 1];
    for i in 0..w {
        p[i + 1] = p[i] + g[i];
    }
    // the parity path C starts at 0; zeroing the east leak pins its end
    let t = p[w - 1];
    // feasible windows for C(i), right to left: the next window shifted
    // back through the step set {0, sigma}, floored by W(i) >= 0 and
    // E(i-1) >= 0
    let mut lo = vec![0i64; w + 1];
    let mut hi = vec![0i64; w + 1];
    lo[w] = t;
    hi[w] = t;
    for i in (1..w).rev() {
        let s = sigma(i);
        lo[i] = (lo[i + 1] - s.max(0)).max(p[i].max(p[i - 1]));
        hi[i] = hi[i + 1] - s.min(0);
        if lo[i] > hi[i] {
            return None;
        }
    }
    if lo[1] - sigma(0).max(0) > 0 || hi[1] - sigma(0).min(0) < 0 {
        return None; // C(0) = 0 cannot reach the first window
    }
    // pointwise-least path: take the smallest in-window step each time
    let mut m = Vec::with_capacity(w);
    let mut c = 0i64;
    for i in 0..w {
        let s = sigma(i);
        let next = (c + s.min(0)).max(lo[i + 1]);
        if next > c + s.max(0) || next > hi[i + 1] {
            return None;
        }
        m.push(2 * (c - p[i]) + (next - c));
        c = next;
    }
    // belt and braces: least and exactly balanced, or the interval is wrong
    if find_removable(&m, &i0).is_some() {
        return None;
    }
    if !certify_profile(n, origin, &m, &i0) {
        return None;
    }
    Some(m.into_iter().map(|v| v as u64).collect())
}

/// Locates a subtractable phantom circulation: a span [p, q] shedding one
/// eastward emission at p, one westward at q, and one of each strictly
/// between. One exists iff the profile is not the pointwise-least
/// consistent one.
fn find_removable(m: &[i64], i0: &[u8]) -> Option<(usize, usize)> {
    // p can shed an east emission iff east_count drops with m[p];
    // q can shed a west emission iff the west count drops with m[q]
    let can_start = |i: usize| m[i] >= 1 && (m[i] % 2 == 0) == (i0[i] == 0);
    let can_end = |i: usize| m[i] >= 1 && (m[i] % 2 == 1) == (i0[i] == 0);
    let mut start: Option<usize> = None;
    for i in 0..m.len() {
        if let Some(p) = start {
            if can_end(i) {
                return Some((p, i));
            }
        }
        if can_start(i) {
            start = Some(i);
        } else if m[i] < 2 {
            start = None; // breaks the interior of any span over i
        }
    }
    None
}

/// Exact-balance check: every cell absorbs one particle, nothing leaks.
fn certify_profile(n: u64, origin: usize, m: &[i64], i0: &[u8]) -> bool {
    let w = m.len();
    let e: Vec<i64> = (0..w).map(|i| east_count(m[i], i0[i])).collect();
    if m.iter().any(|&v| v < 0) {
        return false;
    }
    if m[0] - e[0] != 0 || e[w - 1] != 0 {
        return false;
    }
    for i in 0..w {
        let mut inflow = if i == origin { n as i64 } else { 0 };
        if i > 0 {
            inflow += e[i - 1];
        }
        if i + 1 < w {
            inflow += m[i + 1] - e[i + 1];
        }
        if inflow != m[i] + 1 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// reference engines used by the order-independence and cross-validation
// tests

/// Sequential aggregation through the public rotor_step on sparse state.
#[cfg(test)]
pub(crate) fn aggregate_reference(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    if n == 0 {
        return Err(RotorError::InvalidParticleCount { n });
    }
    let mut state = initial.clone();
    let mut occupied = Region::new(initial.kind);
    let mut odometer: HashMap<Vertex, u64> = HashMap::new();
    for particle in 0..n {
        let mut pos = Vertex::ORIGIN;
        let mut walked = 0u64;
        while occupied.contains(pos) {
            if walked >= STEP_CAP {
                return Err(RotorError::StepCapExceeded {
                    particle,
                    cap: STEP_CAP,
                });
            }
            *odometer.entry(pos).or_insert(0) += 1;
            pos = rotor_step(&mut state, pos);
            walked += 1;
        }
        occupied.insert(pos);
    }
    for v in occupied.iter() {
        let i = state.index_of(v);
        state.map.insert(v, i);
    }
    Ok(RotorRun {
        n,
        cluster: occupied,
        odometer,
        rotors: state,
    })
}

/// Round-robin routing: all particles advance one step per round. Settles
/// into the same final state as sequential release.
#[cfg(test)]
pub(crate) fn aggregate_round_robin(n: u64, initial: &RotorState) -> Result<RotorRun, RotorError> {
    if n == 0 {
        return Err(RotorError::InvalidParticleCount { n });
    }
    let mut state = initial.clone();
    let mut occupied = Region::new(initial.kind);
    let mut odometer: HashMap<Vertex, u64> = HashMap::new();
    let mut live: Vec<Vertex> = vec![Vertex::ORIGIN; n as usize];
    let mut rounds = 0u64;
    while !live.is_empty() {
        if rounds >= STEP_CAP {
            return Err(RotorError::StepCapExceeded {
                particle: 0,
                cap: STEP_CAP,
            });
        }
        rounds += 1;
        let mut still = Vec::with_capacity(live.len());
        for pos in live {
            if occupied.contains(pos) {
                *odometer.entry(pos).or_insert(0) += 1;
                still.push(rotor_step(&mut state, pos));
            } else {
                occupied.insert(pos);
            }
        }
        live = still;
    }
    for v in occupied.iter() {
        let i = state.index_of(v);
        state.map.insert(v, i);
    }
    Ok(RotorRun {
        n,
        cluster: occupied,
        odometer,
        rotors: state,
    })
}

// ---------------------------------------------------------------------------
// weight audit

/// Replays the aggregation and rechecks, after every settled particle, that
/// the combined particle and rotor weight still equals its initial value
/// n·h(o). Particle weight sums h over current particle positions; the
/// rotor weight of a vertex after m emissions is
/// m·h(x) − Σ_{j=1..m} h(neighbor at index (i0+j) mod d). Both are
/// recomputed from scratch at each checkpoint, so drift exposes any
/// bookkeeping error in emission counts or rotor indices. Returns the
/// largest |deviation| seen.
pub fn weight_audit<F: Fn(Vertex) -> f64>(
    n: u64,
    initial: &RotorState,
    h: F,
) -> Result<f64, RotorError> {
    if n == 0 {
        return Err(RotorError::InvalidParticleCount { n });
    }
    let kind = initial.kind;
    let mut state = initial.clone();
    let mut occupied = Region::new(kind);
    let mut emissions: HashMap<Vertex, u64> = HashMap::new();
    let mut settled: Vec<Vertex> = Vec::new();
    let w0 = n as f64 * h(Vertex::ORIGIN);
    let mut max_drift = 0.0f64;
    for particle in 0..n {
        let mut pos = Vertex::ORIGIN;
        let mut walked = 0u64;
        while occupied.contains(pos) {
            if walked >= STEP_CAP {
                return Err(RotorError::StepCapExceeded {
                    particle,
                    cap: STEP_CAP,
                });
            }
            *emissions.entry(pos).or_insert(0) += 1;
            pos = rotor_step(&mut state, pos);
            walked += 1;
        }
        occupied.insert(pos);
        settled.push(pos);
        // checkpoint: particles settled so far, the rest still at the origin
        let unreleased = n - particle - 1;
        let w_p = settled.iter().map(|&v| h(v)).sum::<f64>()
            + unreleased as f64 * h(Vertex::ORIGIN);
        let mut w_r = 0.0;
        for (&x, &m) in &emissions {
            w_r += rotor_weight(x, m, initial, kind, &h);
        }
        max_drift = max_drift.max((w_p + w_r - w0).abs());
    }
    Ok(max_drift)
}

fn rotor_weight<F: Fn(Vertex) -> f64>(
    x: Vertex,
    m: u64,
    initial: &RotorState,
    kind: GraphKind,
    h: &F,
) -> f64 {
    let d = degree(x, kind) as u64;
    let i0 = initial.index_of(x) as u64;
    let full_cycles = m / d;
    let s_all: f64 = neighbors(x, kind).map(&h).sum();
    let mut sent = full_cycles as f64 * s_all;
    for j in full_cycles * d + 1..=m {
        sent += h(neighbor(x, kind, ((i0 + j) % d) as usize));
    }
    m as f64 * h(x) - sent
}

// ---------------------------------------------------------------------------
// tree identity machinery

pub struct Wtilde {
    /// Sum over ordered pairs (x, z∼x) with x in the region; G vanishes on
    /// the complement.
    pub full: f64,
    /// Terms with both endpoints inside only.
    pub restricted: f64,
}

/// Double sum Σ_{x∈S} Σ_{z∼x} |G(y,x)/d(x) − G(y,z)/d(z)| of the stopped
/// Green function started at y. The full and restricted variants differ by
/// the total exit flux, which is 1.
pub fn wtilde(y: Vertex, region: &Region) -> Result<Wtilde, RotorError> {
    let g = stopped_green(region, y)?;
    let kind = region.kind();
    let mut full = 0.0;
    let mut restricted = 0.0;
    for x in region.iter() {
        let gx = g.get(x) / degree(x, kind) as f64;
        for z in neighbors(x, kind) {
            let inside = region.contains(z);
            let gz = if inside {
                g.get(z) / degree(z, kind) as f64
            } else {
                0.0
            };
            let term = (gx - gz).abs();
            full += term;
            if inside {
                restricted += term;
            }
        }
    }
    Ok(Wtilde { full, restricted })
}

/// Expected comb distance from y to the exit position of the walk stopped
/// on leaving the region.
pub fn expected_exit_distance(y: Vertex, region: &Region) -> Result<f64, RotorError> {
    let g = stopped_green(region, y)?;
    let kind = region.kind();
    let (outer, _) = region_boundary(region);
    let mut expectation = 0.0;
    for w in outer.iter() {
        let mut hit = 0.0;
        for x in neighbors(w, kind) {
            if region.contains(x) {
                hit += g.get(x) / degree(x, kind) as f64;
            }
        }
        expectation += hit * comb_distance(y, w) as f64;
    }
    Ok(expectation)
}

/// Runs the divisible sandpile with mass n and the rotor aggregation with n
/// particles, then returns the minimum over the sandpile cluster of
/// u_R(y)/d(y) + wtilde_full(y) − u_n(y). The inequality puts this at ≥ 0
/// up to relaxation tolerance.
pub fn check_rotor_bound(
    n: u64,
    initial: &RotorState,
    stop_tol: f64,
) -> Result<f64, RotorError> {
    let opts = RelaxOptions {
        stop_tol,
        ..RelaxOptions::default()
    };
    let sand = relax_point_mass(initial.kind, n as f64, &opts)?;
    let run = rotor_aggregate(n, initial)?;
    let mut min_slack = f64::INFINITY;
    for y in sand.cluster.iter() {
        let d = degree(y, initial.kind) as f64;
        let wt = wtilde(y, &sand.cluster)?;
        let slack = run.emissions(y) as f64 / d + wt.full - sand.odometer.u(y);
        min_slack = min_slack.min(slack);
    }
    Ok(min_slack)
}

/// Vertices of the mass-n ball where the sandpile odometer bound exceeds
/// twice the worst exit distance, i.e. γ_n(x,y) − 2(|x| + |y| + l·n^{2/3})
/// is strictly positive; rotor aggregation provably covers this set.
pub fn rotor_inner_region(n: f64) -> Result<Region, RotorError> {
    let spec = ShapeSpec::for_mass(n)?;
    let reach = 2.0 * L * n.cbrt() * n.cbrt();
    let mut region = Region::new(GraphKind::Comb2);
    for v in ball_region(n).iter() {
        let margin = spec.gamma(v) - 2.0 * (v.x.abs() + v.y.abs()) as f64 - reach;
        if margin > 0.0 {
            region.insert(v);
        }
    }
    Ok(region)
}

/// On the line, the mass-⌊n/3⌋ sandpile cluster is contained in the
/// n-particle rotor cluster.
pub fn line_regular_check(n: u64, preset: &RotorPreset) -> Result<bool, RotorError> {
    if n == 0 {
        return Err(RotorError::InvalidParticleCount { n });
    }
    let run = rotor_aggregate(n, &RotorState::new(GraphKind::Line, preset.clone()))?;
    let mass = n / 3;
    if mass == 0 {
        return Ok(true);
    }
    let sand = relax_point_mass(GraphKind::Line, mass as f64, &RelaxOptions::default())?;
    let contained = sand.cluster.iter().all(|v| run.cluster.contains(v));
    Ok(contained)
}
