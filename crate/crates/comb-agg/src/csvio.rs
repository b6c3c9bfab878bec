//! Numeric CSV plumbing shared by the field dumps: `x,y,value` rows with
//! 17-significant-digit doubles, LF endings, sorted lexicographically.

use crate::lattice::{CsvError, Vertex};
use std::io::{self, BufRead, Write};

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_value_csv<W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (Vertex, f64)>,
) -> io::Result<()> {
    let mut rows: Vec<(Vertex, f64)> = rows.into_iter().collect();
    rows.sort_unstable_by_key(|&(v, _)| v);
    out.write_all(b"x,y,value\n")?;
    for (v, val) in rows {
        writeln!(out, "{},{},{}", v.x, v.y, fmt17(val))?;
    }
    Ok(())
}

pub(crate) fn read_value_csv<R: BufRead>(input: R) -> Result<Vec<(Vertex, f64)>, CsvError> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == "x,y,value" => {}
        Some((_, Ok(h))) => {
            return Err(CsvError::Malformed {
                line: 1,
                reason: format!("expected header `x,y,value`, got `{h}`"),
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
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(CsvError::Io)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut parts = line.split(',');
        let (Some(xs), Some(ys), Some(vs), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(CsvError::Malformed {
                line: lineno,
                reason: format!("expected three fields, got `{line}`"),
            });
        };
        let x: i64 = xs.trim().parse().map_err(|_| CsvError::Malformed {
            line: lineno,
            reason: format!("not an integer: `{xs}`"),
        })?;
        let y: i64 = ys.trim().parse().map_err(|_| CsvError::Malformed {
            line: lineno,
            reason: format!("not an integer: `{ys}`"),
        })?;
        let val: f64 = vs.trim().parse().map_err(|_| CsvError::Malformed {
            line: lineno,
            reason: format!("not a number: `{vs}`"),
        })?;
        rows.push((Vertex::new(x, y), val));
    }
    Ok(rows)
}
