//! Divisible sandpile. A site with mass above 1 topples: it keeps 1 and
//! splits the excess equally among its neighbors. Repeating this from any
//! finite initial mass converges to a limit that does not depend on the
//! toppling order, and the odometer (total mass emitted per site) is the
//! object the shape theory controls.
//!
//! Two literal site-by-site schedules are provided ([`Schedule`]); they are
//! what the abelian-property test compares. Relaxing a large point mass that
//! way is diffusion-limited along the teeth (the slow mode decays like one
//! part in tooth-length² per sweep), so [`relax_point_mass`] instead topples
//! each tooth in closed form and iterates only the backbone. Block topplings
//! are limits of legal toppling sequences, so by the abelian property the
//! result is the same limit; the cross-validation tests check exactly that.

use crate::csvio;
use crate::lattice::{degree, CsvError, GraphKind, Region, Vertex};
use crate::shape::{K, L};
use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

/// Sparse nonnegative mass μ over vertices.
#[derive(Clone, Debug)]
pub struct MassField {
    kind: GraphKind,
    map: HashMap<Vertex, f64>,
}

impl MassField {
    pub fn new(kind: GraphKind) -> Self {
        MassField {
            kind,
            map: HashMap::new(),
        }
    }

    /// n·δ_v, the standard initial condition.
    pub fn point(kind: GraphKind, v: Vertex, mass: f64) -> Self {
        let mut f = MassField::new(kind);
        f.set(v, mass);
        f
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn get(&self, v: Vertex) -> f64 {
        self.map.get(&v).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, v: Vertex, value: f64) {
        if value == 0.0 {
            self.map.remove(&v);
        } else {
            self.map.insert(v, value);
        }
    }

    pub fn add(&mut self, v: Vertex, delta: f64) {
        *self.map.entry(v).or_insert(0.0) += delta;
    }

    pub fn total(&self) -> f64 {
        self.map.values().sum()
    }

    pub fn support(&self) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        self.map
            .iter()
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, &m)| (v, m))
    }

    pub fn support_len(&self) -> usize {
        self.map.values().filter(|&&m| m > 0.0).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        csvio::write_value_csv(out, self.support())
    }

    pub fn read_csv<R: BufRead>(kind: GraphKind, input: R) -> Result<Self, CsvError> {
        let mut f = MassField::new(kind);
        for (v, val) in csvio::read_value_csv(input)? {
            f.set(v, val);
        }
        Ok(f)
    }
}

/// Odometer: v(z) is the total mass z has emitted, u(z) = v(z)/d(z).
#[derive(Clone, Debug)]
pub struct OdometerField {
    kind: GraphKind,
    map: HashMap<Vertex, f64>,
}

impl OdometerField {
    pub fn new(kind: GraphKind) -> Self {
        OdometerField {
            kind,
            map: HashMap::new(),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn v(&self, z: Vertex) -> f64 {
        self.map.get(&z).copied().unwrap_or(0.0)
    }

    pub fn u(&self, z: Vertex) -> f64 {
        self.v(z) / degree(z, self.kind) as f64
    }

    pub fn add(&mut self, z: Vertex, emitted: f64) {
        *self.map.entry(z).or_insert(0.0) += emitted;
    }

    pub fn support(&self) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        self.map
            .iter()
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, &m)| (v, m))
    }

    /// The value column holds the emitted mass v; u is v/degree.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        csvio::write_value_csv(out, self.support())
    }
}

/// One toppling at v: excess α = max(μ(v) − 1, 0) leaves v, α/d to each
/// neighbor, and v's odometer grows by α. No-op on stable sites.
pub fn topple(field: &mut MassField, v: Vertex, odo: &mut OdometerField) -> f64 {
    let alpha = field.get(v) - 1.0;
    if alpha <= 0.0 {
        return 0.0;
    }
    field.set(v, 1.0);
    odo.add(v, alpha);
    let share = alpha / degree(v, field.kind) as f64;
    for w in crate::lattice::neighbors(v, field.kind) {
        field.add(w, share);
    }
    alpha
}

/// Site-by-site toppling orders for [`relax`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Schedule {
    /// Boustrophedon sweeps (forward lexicographic, then reverse) over the
    /// current bounding box. Exists for the abelian comparison.
    SweepBox,
    /// FIFO queue of sites whose excess is at least stop_tol/|support|.
    /// The faster of the two literal schedules.
    UnstableQueue,
}

#[derive(Clone, Copy, Debug)]
pub struct RelaxOptions {
    /// Stop once total excess Σ max(μ−1, 0) falls below this.
    pub stop_tol: f64,
    /// μ ≥ 1 − cluster_tol counts as a full (cluster) site.
    pub cluster_tol: f64,
    /// Hard bound on topplings; exceeding it is an error, not a hang.
    pub toppling_cap: u64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            stop_tol: 1e-8,
            cluster_tol: 1e-6,
            toppling_cap: 1_000_000_000,
        }
    }
}

#[derive(Debug)]
pub struct SandpileResult {
    pub mass: MassField,
    pub odometer: OdometerField,
    pub cluster: Region,
    pub iterations: u64,
    pub residual_excess: f64,
}

#[derive(Debug)]
pub enum SandpileError {
    InvalidTolerance {
        stop_tol: f64,
    },
    /// Mass tried to leave the safety box derived from ball_region(2n);
    /// the shape theorem says that cannot happen, so the state is corrupt.
    SafetyBoxExceeded {
        at: Vertex,
    },
    TopplingCapExceeded {
        cap: u64,
        residual_excess: f64,
    },
}

impl fmt::Display for SandpileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SandpileError::InvalidTolerance { stop_tol } => {
                write!(f, "stop_tol must be positive, got {stop_tol}")
            }
            SandpileError::SafetyBoxExceeded { at } => {
                write!(f, "mass escaped the safety box at {at}")
            }
            SandpileError::TopplingCapExceeded {
                cap,
                residual_excess,
            } => write!(
                f,
                "toppling cap {cap} exceeded with total excess {residual_excess:.3e} remaining"
            ),
        }
    }
}

impl std::error::Error for SandpileError {}

/// Relax μ₀ with a literal site-by-site schedule until the total excess
/// drops below stop_tol.
pub fn relax(
    mu0: &MassField,
    schedule: Schedule,
    stop_tol: f64,
) -> Result<SandpileResult, SandpileError> {
    relax_with(
        mu0,
        schedule,
        &RelaxOptions {
            stop_tol,
            ..RelaxOptions::default()
        },
    )
}

pub fn relax_with(
    mu0: &MassField,
    schedule: Schedule,
    opts: &RelaxOptions,
) -> Result<SandpileResult, SandpileError> {
    if !(opts.stop_tol > 0.0) {
        return Err(SandpileError::InvalidTolerance {
            stop_tol: opts.stop_tol,
        });
    }
    let mut grid = DenseGrid::for_field(mu0);
    let result = match schedule {
        Schedule::SweepBox => grid.run_sweeps(opts),
        Schedule::UnstableQueue => grid.run_queue(opts),
    };
    result.map(|(iterations, residual)| grid.into_result(mu0.kind, opts, iterations, residual))
}

/// Sup over vertices of |u_A − u_B| for the two schedules from the same
/// start; the abelian property says this is bounded by the stopping slack.
pub fn abelian_check(
    mu0: &MassField,
    schedule_a: Schedule,
    schedule_b: Schedule,
    stop_tol: f64,
) -> Result<f64, SandpileError> {
    let a = relax(mu0, schedule_a, stop_tol)?;
    let b = relax(mu0, schedule_b, stop_tol)?;
    Ok(sup_odometer_diff(&a.odometer, &b.odometer))
}

pub fn sup_odometer_diff(a: &OdometerField, b: &OdometerField) -> f64 {
    let mut sup = 0.0f64;
    for (z, _) in a.support() {
        sup = sup.max((a.u(z) - b.u(z)).abs());
    }
    for (z, _) in b.support() {
        sup = sup.max((a.u(z) - b.u(z)).abs());
    }
    sup
}

// ---------------------------------------------------------------------------
// dense scratch state for the literal schedules

struct DenseGrid {
    kind: GraphKind,
    xlo: i64,
    ylo: i64,
    w: usize,
    h: usize,
    mass: Vec<f64>,
    odo: Vec<f64>,
    entered: Vec<bool>,
    support_n: usize,
}

impl DenseGrid {
    /// Scratch box: the initial support's bounding box padded by the
    /// extents of ball_region(2·total mass). Everything the relaxation can
    /// touch fits; leaving it is the SafetyBoxExceeded error.
    fn for_field(mu0: &MassField) -> DenseGrid {
        let total: f64 = mu0.total().max(1.0);
        let (mut xlo, mut xhi, mut ylo, mut yhi) = (0i64, 0i64, 0i64, 0i64);
        for (v, _) in mu0.support() {
            xlo = xlo.min(v.x);
            xhi = xhi.max(v.x);
            ylo = ylo.min(v.y);
            yhi = yhi.max(v.y);
        }
        let (xpad, ypad) = match mu0.kind {
            GraphKind::Comb2 => {
                let r = (2.0 * total).cbrt();
                ((K * r).ceil() as i64 + 2, (L * r * r).ceil() as i64 + 2)
            }
            GraphKind::Line => ((total + 2.0).ceil() as i64, 0),
        };
        xlo -= xpad;
        xhi += xpad;
        if mu0.kind == GraphKind::Line {
            ylo = 0;
            yhi = 0;
        } else {
            ylo -= ypad;
            yhi += ypad;
        }
        let w = (xhi - xlo + 1) as usize;
        let h = (yhi - ylo + 1) as usize;
        let mut grid = DenseGrid {
            kind: mu0.kind,
            xlo,
            ylo,
            w,
            h,
            mass: vec![0.0; w * h],
            odo: vec![0.0; w * h],
            entered: vec![false; w * h],
            support_n: 0,
        };
        for (v, m) in mu0.support() {
            let i = grid.idx(v.x, v.y);
            grid.mass[i] = m;
            grid.enter(i);
        }
        grid
    }

    fn idx(&self, x: i64, y: i64) -> usize {
        debug_assert!(self.in_box(x, y));
        (x - self.xlo) as usize * self.h + (y - self.ylo) as usize
    }

    fn vertex_at(&self, i: usize) -> Vertex {
        Vertex::new(self.xlo + (i / self.h) as i64, self.ylo + (i % self.h) as i64)
    }

    fn in_box(&self, x: i64, y: i64) -> bool {
        x >= self.xlo
            && x < self.xlo + self.w as i64
            && y >= self.ylo
            && y < self.ylo + self.h as i64
    }

    fn enter(&mut self, i: usize) {
        if !self.entered[i] {
            self.entered[i] = true;
            self.support_n += 1;
        }
    }

    fn neighbor_indices(&self, v: Vertex, out: &mut [usize; 4]) -> Result<usize, SandpileError> {
        let d = degree(v, self.kind);
        for (slot, w) in crate::lattice::neighbors(v, self.kind).enumerate() {
            if !self.in_box(w.x, w.y) {
                return Err(SandpileError::SafetyBoxExceeded { at: w });
            }
            out[slot] = self.idx(w.x, w.y);
        }
        Ok(d)
    }

    /// Topple site i if unstable; returns its excess (0 if stable).
    fn topple_at(&mut self, i: usize) -> Result<f64, SandpileError> {
        let alpha = self.mass[i] - 1.0;
        if alpha <= 0.0 {
            return Ok(0.0);
        }
        let v = self.vertex_at(i);
        let mut nbr = [0usize; 4];
        let d = self.neighbor_indices(v, &mut nbr)?;
        self.mass[i] = 1.0;
        self.odo[i] += alpha;
        let share = alpha / d as f64;
        for &j in &nbr[..d] {
            self.mass[j] += share;
            self.enter(j);
        }
        Ok(alpha)
    }

    fn total_excess(&self) -> f64 {
        self.mass.iter().map(|&m| (m - 1.0).max(0.0)).sum()
    }

    fn run_sweeps(&mut self, opts: &RelaxOptions) -> Result<(u64, f64), SandpileError> {
        let cells = self.mass.len();
        let mut iterations = 0u64;
        loop {
            for i in 0..cells {
                if self.topple_at(i)? > 0.0 {
                    iterations += 1;
                }
            }
            for i in (0..cells).rev() {
                if self.topple_at(i)? > 0.0 {
                    iterations += 1;
                }
            }
            if iterations > opts.toppling_cap {
                return Err(SandpileError::TopplingCapExceeded {
                    cap: opts.toppling_cap,
                    residual_excess: self.total_excess(),
                });
            }
            let excess = self.total_excess();
            if excess < opts.stop_tol {
                return Ok((iterations, excess));
            }
        }
    }

    fn run_queue(&mut self, opts: &RelaxOptions) -> Result<(u64, f64), SandpileError> {
        use std::collections::VecDeque;
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut queued = vec![false; self.mass.len()];
        let mut iterations = 0u64;
        loop {
            // (re)seed from a full scan; the loop below keeps the queue
            // closed under newly unstable sites, the rescan guards the
            // total-excess contract when the threshold shrank mid-run
            let threshold = opts.stop_tol / self.support_n as f64;
            for i in 0..self.mass.len() {
                if self.mass[i] - 1.0 >= threshold && !queued[i] {
                    queued[i] = true;
                    queue.push_back(i);
                }
            }
            if queue.is_empty() {
                return Ok((iterations, self.total_excess()));
            }
            while let Some(i) = queue.pop_front() {
                queued[i] = false;
                let threshold = opts.stop_tol / self.support_n as f64;
                if self.mass[i] - 1.0 < threshold {
                    continue;
                }
                let v = self.vertex_at(i);
                let mut nbr = [0usize; 4];
                let d = self.neighbor_indices(v, &mut nbr)?;
                self.topple_at(i)?;
                iterations += 1;
                if iterations > opts.toppling_cap {
                    return Err(SandpileError::TopplingCapExceeded {
                        cap: opts.toppling_cap,
                        residual_excess: self.total_excess(),
                    });
                }
                let threshold = opts.stop_tol / self.support_n as f64;
                for &j in &nbr[..d] {
                    if self.mass[j] - 1.0 >= threshold && !queued[j] {
                        queued[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            if self.total_excess() < opts.stop_tol {
                return Ok((iterations, self.total_excess()));
            }
        }
    }

    fn into_result(
        self,
        kind: GraphKind,
        opts: &RelaxOptions,
        iterations: u64,
        residual_excess: f64,
    ) -> SandpileResult {
        let mut mass = MassField::new(kind);
        let mut odometer = OdometerField::new(kind);
        let mut cluster = Region::new(kind);
        for i in 0..self.mass.len() {
            if !self.entered[i] {
                continue;
            }
            let v = self.vertex_at(i);
            if self.mass[i] > 0.0 {
                mass.set(v, self.mass[i]);
            }
            if self.odo[i] > 0.0 {
                odometer.add(v, self.odo[i]);
            }
            if self.mass[i] >= 1.0 - opts.cluster_tol {
                cluster.insert(v);
            }
        }
        SandpileResult {
            mass,
            odometer,
            cluster,
            iterations,
            residual_excess,
        }
    }
}

// ---------------------------------------------------------------------------
// condensed-tooth engine

/// Tooth state: cells 1..=h hold exactly 1, cell h+1 holds partial ∈ [0,1),
/// everything above is empty. Odometer kept as per-height linear segments.
struct Tooth {
    h: i64,
    partial: f64,
    /// (height while active, Σ2q, Σ−2q/(h+1)); v(y) = Σ over segments with
    /// seg.0 ≥ y of seg.1 + seg.2·y.
    segs: Vec<(i64, f64, f64)>,
}

impl Tooth {
    fn new() -> Tooth {
        Tooth {
            h: 0,
            partial: 0.0,
            segs: Vec::new(),
        }
    }

    /// Feed mass q in at the root and equilibrate the whole tooth: interior
    /// cells stay at 1 and transport, the partial top absorbs 1/(h+1) per
    /// unit, the root gets h/(h+1) back. Exactly the limit of the legal
    /// toppling sequence inside the tooth; returns the mass handed back.
    fn push(&mut self, mut q: f64) -> f64 {
        let mut ret = 0.0;
        while q > 0.0 {
            if self.h == 0 {
                let room = 1.0 - self.partial;
                if q < room {
                    self.partial += q;
                    return ret;
                }
                q = (q - room).max(0.0);
                self.partial = 0.0;
                self.h = 1;
                self.segs.push((1, 0.0, 0.0));
                continue;
            }
            let hf = self.h as f64;
            let cap = (1.0 - self.partial) * (hf + 1.0);
            if cap <= 0.0 {
                // rounding filled the top exactly; promote and go around
                self.partial = 0.0;
                self.h += 1;
                self.segs.push((self.h, 0.0, 0.0));
                continue;
            }
            let seg = self.segs.last_mut().expect("h >= 1 implies a segment");
            if q < cap {
                ret += q * hf / (hf + 1.0);
                self.partial += q / (hf + 1.0);
                seg.1 += 2.0 * q;
                seg.2 -= 2.0 * q / (hf + 1.0);
                return ret;
            }
            ret += cap * hf / (hf + 1.0);
            seg.1 += 2.0 * cap;
            seg.2 -= 2.0 * cap / (hf + 1.0);
            q = (q - cap).max(0.0);
            self.partial = 0.0;
            self.h += 1;
            self.segs.push((self.h, 0.0, 0.0));
        }
        ret
    }

    /// Odometer v(y) for y = 1..=h, from the segment suffix sums.
    fn odometer_profile(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.h as usize];
        let (mut c0, mut c1) = (0.0, 0.0);
        let mut si = self.segs.len();
        for y in (1..=self.h).rev() {
            while si > 0 && self.segs[si - 1].0 >= y {
                si -= 1;
                c0 += self.segs[si].1;
                c1 += self.segs[si].2;
            }
            v[(y - 1) as usize] = c0 + c1 * y as f64;
        }
        v
    }
}

/// Relax n·δ_o by block topplings: teeth equilibrate in closed form, only
/// the backbone iterates. Same limit as [`relax`] (abelian property), but
/// the runtime is a few backbone sweeps per digit of tolerance instead of a
/// diffusion time per tooth. `iterations` counts backbone block topplings.
pub fn relax_point_mass(
    kind: GraphKind,
    n: f64,
    opts: &RelaxOptions,
) -> Result<SandpileResult, SandpileError> {
    if !(opts.stop_tol > 0.0) {
        return Err(SandpileError::InvalidTolerance {
            stop_tol: opts.stop_tol,
        });
    }
    match kind {
        GraphKind::Comb2 => relax_point_comb(n, opts),
        GraphKind::Line => relax_point_line(n, opts),
    }
}

fn relax_point_comb(n: f64, opts: &RelaxOptions) -> Result<SandpileResult, SandpileError> {
    let r = (2.0 * n.max(1.0)).cbrt();
    let xcap = (K * r).ceil() as i64 + 2;
    let ycap = (L * r * r).ceil() as i64 + 2;
    let width = (2 * xcap + 1) as usize;
    let off = xcap;
    let mut bb = vec![0.0f64; width];
    let mut vbb = vec![0.0f64; width];
    let mut up: Vec<Tooth> = (0..width).map(|_| Tooth::new()).collect();
    let mut dn: Vec<Tooth> = (0..width).map(|_| Tooth::new()).collect();
    bb[off as usize] = n;
    let (mut lo, mut hi) = (0i64, 0i64); // active column range, centered
    let mut iterations = 0u64;
    loop {
        let sweep = |x: i64,
                         bb: &mut [f64],
                         vbb: &mut [f64],
                         up: &mut [Tooth],
                         dn: &mut [Tooth],
                         lo: &mut i64,
                         hi: &mut i64,
                         iterations: &mut u64|
         -> Result<(), SandpileError> {
            let i = (x + off) as usize;
            let e = bb[i] - 1.0;
            if e <= 0.0 {
                return Ok(());
            }
            if x - 1 < -xcap || x + 1 > xcap {
                return Err(SandpileError::SafetyBoxExceeded {
                    at: Vertex::new(x, 0),
                });
            }
            bb[i] = 1.0;
            vbb[i] += e;
            *iterations += 1;
            let quarter = 0.25 * e;
            bb[i - 1] += quarter;
            bb[i + 1] += quarter;
            *lo = (*lo).min(x - 1);
            *hi = (*hi).max(x + 1);
            let ret = up[i].push(quarter) + dn[i].push(quarter);
            if up[i].h > ycap || dn[i].h > ycap {
                return Err(SandpileError::SafetyBoxExceeded {
                    at: Vertex::new(x, up[i].h.max(dn[i].h)),
                });
            }
            bb[i] += ret;
            Ok(())
        };
        let (l0, h0) = (lo, hi);
        for x in l0..=h0 {
            sweep(x, &mut bb, &mut vbb, &mut up, &mut dn, &mut lo, &mut hi, &mut iterations)?;
        }
        for x in (l0..=h0).rev() {
            sweep(x, &mut bb, &mut vbb, &mut up, &mut dn, &mut lo, &mut hi, &mut iterations)?;
        }
        if iterations > opts.toppling_cap {
            let residual: f64 = bb.iter().map(|&m| (m - 1.0).max(0.0)).sum();
            return Err(SandpileError::TopplingCapExceeded {
                cap: opts.toppling_cap,
                residual_excess: residual,
            });
        }
        let excess: f64 = bb[(lo + off) as usize..=(hi + off) as usize]
            .iter()
            .map(|&m| (m - 1.0).max(0.0))
            .sum();
        if excess < opts.stop_tol {
            return Ok(condensed_result(
                GraphKind::Comb2,
                &bb,
                &vbb,
                &up,
                &dn,
                off,
                lo,
                hi,
                opts,
                iterations,
                excess,
            ));
        }
    }
}

fn relax_point_line(n: f64, opts: &RelaxOptions) -> Result<SandpileResult, SandpileError> {
    let cap = (n.max(1.0) + 2.0).ceil() as i64;
    let mut origin = n;
    let mut v0 = 0.0f64;
    let mut east = Tooth::new();
    let mut west = Tooth::new();
    let mut iterations = 0u64;
    loop {
        let e = origin - 1.0;
        if e < opts.stop_tol {
            break;
        }
        origin = 1.0;
        v0 += e;
        iterations += 1;
        if iterations > opts.toppling_cap {
            return Err(SandpileError::TopplingCapExceeded {
                cap: opts.toppling_cap,
                residual_excess: e,
            });
        }
        origin += east.push(0.5 * e) + west.push(0.5 * e);
        if east.h > cap || west.h > cap {
            return Err(SandpileError::SafetyBoxExceeded {
                at: Vertex::new(east.h.max(west.h), 0),
            });
        }
    }
    let residual = (origin - 1.0).max(0.0);
    let mut mass = MassField::new(GraphKind::Line);
    let mut odometer = OdometerField::new(GraphKind::Line);
    let mut cluster = Region::new(GraphKind::Line);
    let keep = |m: f64| m >= 1.0 - opts.cluster_tol;
    if origin > 0.0 {
        mass.set(Vertex::ORIGIN, origin);
    }
    if v0 > 0.0 {
        odometer.add(Vertex::ORIGIN, v0);
    }
    if keep(origin) {
        cluster.insert(Vertex::ORIGIN);
    }
    for (tooth, sign) in [(&east, 1i64), (&west, -1i64)] {
        let profile = tooth.odometer_profile();
        for y in 1..=tooth.h {
            let v = Vertex::new(sign * y, 0);
            mass.set(v, 1.0);
            cluster.insert(v);
            let emitted = profile[(y - 1) as usize];
            if emitted > 0.0 {
                odometer.add(v, emitted);
            }
        }
        if tooth.partial > 0.0 {
            let v = Vertex::new(sign * (tooth.h + 1), 0);
            mass.set(v, tooth.partial);
            if keep(tooth.partial) {
                cluster.insert(v);
            }
        }
    }
    Ok(SandpileResult {
        mass,
        odometer,
        cluster,
        iterations,
        residual_excess: residual,
    })
}

#[allow(clippy::too_many_arguments)]
fn condensed_result(
    kind: GraphKind,
    bb: &[f64],
    vbb: &[f64],
    up: &[Tooth],
    dn: &[Tooth],
    off: i64,
    lo: i64,
    hi: i64,
    opts: &RelaxOptions,
    iterations: u64,
    residual_excess: f64,
) -> SandpileResult {
    let mut mass = MassField::new(kind);
    let mut odometer = OdometerField::new(kind);
    let mut cluster = Region::new(kind);
    let keep = |m: f64| m >= 1.0 - opts.cluster_tol;
    for x in lo..=hi {
        let i = (x + off) as usize;
        if bb[i] > 0.0 {
            mass.set(Vertex::new(x, 0), bb[i]);
        }
        if vbb[i] > 0.0 {
            odometer.add(Vertex::new(x, 0), vbb[i]);
        }
        if keep(bb[i]) {
            cluster.insert(Vertex::new(x, 0));
        }
        for (tooth, sign) in [(&up[i], 1i64), (&dn[i], -1i64)] {
            let profile = tooth.odometer_profile();
            for y in 1..=tooth.h {
                let v = Vertex::new(x, sign * y);
                mass.set(v, 1.0);
                cluster.insert(v);
                let emitted = profile[(y - 1) as usize];
                if emitted > 0.0 {
                    odometer.add(v, emitted);
                }
            }
            if tooth.partial > 0.0 {
                let v = Vertex::new(x, sign * (tooth.h + 1));
                mass.set(v, tooth.partial);
                if keep(tooth.partial) {
                    cluster.insert(v);
                }
            }
        }
    }
    SandpileResult {
        mass,
        odometer,
        cluster,
        iterations,
        residual_excess,
    }
}
