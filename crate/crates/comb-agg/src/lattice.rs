//! Comb lattice geometry: the two-dimensional comb `C2` (a backbone copy of
//! the integers with a tooth attached at every site) and the plain integer
//! line, which several constructions reduce to.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};

/// Lattice site. `y = 0` is the backbone; `(x, y)` with `y != 0` sits on the
/// tooth attached at `(x, 0)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Vertex {
    pub x: i64,
    pub y: i64,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    pub fn new(x: i64, y: i64) -> Self {
        Vertex { x, y }
    }

    pub fn is_backbone(self) -> bool {
        self.y == 0
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Which graph the coordinates live on. `Line` ignores teeth entirely and
/// keeps `y = 0` throughout.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GraphKind {
    Comb2,
    Line,
}

/// Number of neighbors: 4 on the comb backbone, 2 on teeth and on the line.
pub fn degree(v: Vertex, kind: GraphKind) -> usize {
    match kind {
        GraphKind::Comb2 => {
            if v.y == 0 {
                4
            } else {
                2
            }
        }
        GraphKind::Line => 2,
    }
}

/// The `i`-th neighbor in the fixed cyclic order: backbone E, N, W, S;
/// teeth N, S; line E, W. Rotor walks index into exactly this order.
///
/// Panics if `i >= degree(v, kind)`.
pub fn neighbor(v: Vertex, kind: GraphKind, i: usize) -> Vertex {
    let Vertex { x, y } = v;
    match kind {
        GraphKind::Comb2 if y == 0 => match i {
            0 => Vertex::new(x + 1, 0),
            1 => Vertex::new(x, 1),
            2 => Vertex::new(x - 1, 0),
            3 => Vertex::new(x, -1),
            _ => panic!("neighbor index {i} out of range for backbone vertex"),
        },
        GraphKind::Comb2 => match i {
            0 => Vertex::new(x, y + 1),
            1 => Vertex::new(x, y - 1),
            _ => panic!("neighbor index {i} out of range for tooth vertex"),
        },
        GraphKind::Line => match i {
            0 => Vertex::new(x + 1, 0),
            1 => Vertex::new(x - 1, 0),
            _ => panic!("neighbor index {i} out of range for line vertex"),
        },
    }
}

/// Iterator over `neighbor(v, kind, 0..degree)`, in order.
pub fn neighbors(v: Vertex, kind: GraphKind) -> Neighbors {
    Neighbors {
        v,
        kind,
        i: 0,
        d: degree(v, kind),
    }
}

pub struct Neighbors {
    v: Vertex,
    kind: GraphKind,
    i: usize,
    d: usize,
}

impl Iterator for Neighbors {
    type Item = Vertex;

    fn next(&mut self) -> Option<Vertex> {
        if self.i < self.d {
            let w = neighbor(self.v, self.kind, self.i);
            self.i += 1;
            Some(w)
        } else {
            None
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.d - self.i;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for Neighbors {}

/// Graph distance on the comb. Same tooth: walk along it. Otherwise every
/// path descends to the backbone, crosses, and climbs: |y_a| + |x_a - x_b| + |y_b|.
pub fn comb_distance(a: Vertex, b: Vertex) -> u64 {
    if a.x == b.x {
        a.y.abs_diff(b.y)
    } else {
        a.y.unsigned_abs() + a.x.abs_diff(b.x) + b.y.unsigned_abs()
    }
}

/// Finite vertex set on a fixed graph.
#[derive(Clone, Debug)]
pub struct Region {
    kind: GraphKind,
    set: HashSet<Vertex>,
}

impl Region {
    pub fn new(kind: GraphKind) -> Self {
        Region {
            kind,
            set: HashSet::new(),
        }
    }

    pub fn from_vertices<I: IntoIterator<Item = Vertex>>(kind: GraphKind, verts: I) -> Self {
        Region {
            kind,
            set: verts.into_iter().collect(),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.set.contains(&v)
    }

    /// Inserts `v`; true if it was new.
    pub fn insert(&mut self, v: Vertex) -> bool {
        self.set.insert(v)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.set.iter().copied()
    }

    /// Vertices in lexicographic (x, y) order; also the CSV row order.
    pub fn sorted_vertices(&self) -> Vec<Vertex> {
        let mut v: Vec<Vertex> = self.set.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// CSV with header `x,y`, one vertex per line, LF endings, sorted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"x,y\n")?;
        for v in self.sorted_vertices() {
            writeln!(out, "{},{}", v.x, v.y)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn read_csv<R: BufRead>(kind: GraphKind, input: R) -> Result<Region, CsvError> {
        let mut lines = input.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim_end() == "x,y" => {}
            Some((_, Ok(h))) => {
                return Err(CsvError::Malformed {
                    line: 1,
                    reason: format!("expected header `x,y`, got `{h}`"),
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
        let mut set = HashSet::new();
        for (idx, line) in lines {
            let line = line.map_err(CsvError::Io)?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            set.insert(parse_vertex_row(line, idx + 1)?);
        }
        Ok(Region { kind, set })
    }
}

fn parse_vertex_row(line: &str, lineno: usize) -> Result<Vertex, CsvError> {
    let mut parts = line.split(',');
    let (Some(xs), Some(ys), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(CsvError::Malformed {
            line: lineno,
            reason: format!("expected two fields, got `{line}`"),
        });
    };
    let parse = |s: &str| -> Result<i64, CsvError> {
        s.trim().parse().map_err(|_| CsvError::Malformed {
            line: lineno,
            reason: format!("not an integer: `{s}`"),
        })
    };
    Ok(Vertex::new(parse(xs)?, parse(ys)?))
}

/// Outer boundary (outside, adjacent to the region) and inner boundary
/// (inside, adjacent to the complement).
pub fn region_boundary(r: &Region) -> (Region, Region) {
    let mut outer = Region::new(r.kind);
    let mut inner = Region::new(r.kind);
    for v in r.iter() {
        let mut on_inner = false;
        for w in neighbors(v, r.kind) {
            if !r.contains(w) {
                on_inner = true;
                outer.insert(w);
            }
        }
        if on_inner {
            inner.insert(v);
        }
    }
    (outer, inner)
}

#[derive(Debug)]
pub enum CsvError {
    Io(io::Error),
    Malformed { line: usize, reason: String },
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvError::Io(e) => write!(f, "csv read failed: {e}"),
            CsvError::Malformed { line, reason } => {
                write!(f, "malformed csv at line {line}: {reason}")
            }
        }
    }
}

impl std::error::Error for CsvError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CsvError::Io(e) => Some(e),
            CsvError::Malformed { .. } => None,
        }
    }
}

impl From<io::Error> for CsvError {
    fn from(e: io::Error) -> Self {
        CsvError::Io(e)
    }
}
