//! Condensed occupied-set representation shared by the aggregation models.
//!
//! Both random and rotor aggregation grow their cluster one vertex at a
//! time, always at a frontier cell: a tooth extends by one at its tip, the
//! backbone extends by one at either end. The cluster therefore stays
//! "comb-convex" (one backbone interval, contiguous tooth runs rooted on
//! it), which gives O(1) membership tests and O(1) growth with no hashing
//! in the walk hot loops.

use crate::lattice::{GraphKind, Region, Vertex};

#[derive(Clone, Copy, Default)]
struct Column {
    up: i64,
    dn: i64,
}

#[derive(Clone)]
pub(crate) struct CombCluster {
    east: Vec<Column>, // x = 0, 1, 2, ...
    west: Vec<Column>, // x = -1, -2, ...
    len: usize,
}

impl CombCluster {
    pub(crate) fn new() -> CombCluster {
        CombCluster {
            east: Vec::new(),
            west: Vec::new(),
            len: 0,
        }
    }

    fn column(&self, x: i64) -> Option<&Column> {
        if x >= 0 {
            self.east.get(x as usize)
        } else {
            self.west.get((-x - 1) as usize)
        }
    }

    pub(crate) fn contains(&self, v: Vertex) -> bool {
        match self.column(v.x) {
            None => false,
            Some(c) => {
                if v.y == 0 {
                    true
                } else if v.y > 0 {
                    v.y <= c.up
                } else {
                    -v.y <= c.dn
                }
            }
        }
    }

    /// Adds a frontier vertex. Panics if v is not a legal growth site; the
    /// aggregation rules only ever produce legal ones.
    pub(crate) fn insert(&mut self, v: Vertex) {
        if v.y == 0 {
            if v.x >= 0 {
                assert!(v.x as usize == self.east.len(), "non-contiguous backbone at {v}");
                self.east.push(Column::default());
            } else {
                assert!((-v.x - 1) as usize == self.west.len(), "non-contiguous backbone at {v}");
                self.west.push(Column::default());
            }
        } else {
            let col = if v.x >= 0 {
                self.east.get_mut(v.x as usize)
            } else {
                self.west.get_mut((-v.x - 1) as usize)
            }
            .unwrap_or_else(|| panic!("tooth growth at {v} without backbone root"));
            if v.y > 0 {
                assert!(v.y == col.up + 1, "non-contiguous tooth at {v}");
                col.up += 1;
            } else {
                assert!(-v.y == col.dn + 1, "non-contiguous tooth at {v}");
                col.dn += 1;
            }
        }
        self.len += 1;
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.len
    }

    #[cfg(test)]
    pub(crate) fn x_min(&self) -> i64 {
        -(self.west.len() as i64)
    }

    #[cfg(test)]
    pub(crate) fn x_max(&self) -> i64 {
        self.east.len() as i64 - 1
    }

    pub(crate) fn to_region(&self) -> Region {
        let mut region = Region::new(GraphKind::Comb2);
        for (i, c) in self.east.iter().enumerate() {
            push_column(&mut region, i as i64, c);
        }
        for (i, c) in self.west.iter().enumerate() {
            push_column(&mut region, -(i as i64) - 1, c);
        }
        region
    }
}

fn push_column(region: &mut Region, x: i64, c: &Column) {
    for y in -c.dn..=c.up {
        region.insert(Vertex::new(x, y));
    }
}
