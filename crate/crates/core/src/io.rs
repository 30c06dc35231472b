//! Plain-text exports: dense operators, eigenvalue lists, sparse triplets, vectors,
//! reconstruction tables and PGM masks. Floats are written with 17 significant digits.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::monotone::{ReconstructionResult, Verdict};
use crate::ntd::SymOp;
use crate::sparse::SparseSym;

/// Formats a float so that it round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Dense CSV with a header line `# label=<label>,k=<k>,dim=<n>,basis=<id>`.
pub fn write_symop<W: Write>(op: &SymOp, mut w: W) -> Result<()> {
    writeln!(
        w,
        "# label={},k={},dim={},basis={}",
        op.label,
        fmt_f64(op.k),
        op.dim(),
        op.basis_id
    )?;
    for i in 0..op.dim() {
        let row: Vec<String> = (0..op.dim()).map(|j| fmt_f64(op.matrix[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_symop<R: BufRead>(r: R) -> Result<SymOp> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let body = header.strip_prefix("# ").ok_or(Error::Parse {
        line: 1,
        message: "header must start with '# '".into(),
    })?;
    let (mut label, mut k, mut dim, mut basis) = (None, None, None, None);
    for field in body.split(',') {
        let (key, value) = field.split_once('=').ok_or(Error::Parse {
            line: 1,
            message: format!("malformed header field '{field}'"),
        })?;
        let bad = |what: &str| Error::Parse {
            line: 1,
            message: format!("invalid {what} '{value}'"),
        };
        match key {
            "label" => label = Some(value.to_string()),
            "k" => k = Some(value.parse::<f64>().map_err(|_| bad("k"))?),
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("dim"))?),
            "basis" => basis = Some(value.parse::<u64>().map_err(|_| bad("basis"))?),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown header key '{key}'"),
                })
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 1,
        message: format!("header lacks '{what}'"),
    };
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let mut data = Vec::with_capacity(dim * dim);
    let mut rows = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if vals.len() != dim {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {dim} columns, found {}", vals.len()),
            });
        }
        data.extend(vals);
        rows += 1;
    }
    if rows != dim {
        return Err(Error::Parse {
            line: rows + 2,
            message: format!("expected {dim} rows, found {rows}"),
        });
    }
    SymOp::new(
        label.ok_or_else(|| missing("label"))?,
        k.ok_or_else(|| missing("k"))?,
        basis.ok_or_else(|| missing("basis"))?,
        DMatrix::from_row_slice(dim, dim, &data),
    )
}

/// `index,value` lines after an `index,value` header.
pub fn write_eigenvalues<W: Write>(values: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{}", fmt_f64(*v))?;
    }
    Ok(())
}

/// Full symmetric matrix as `row,col,value` triplets (both triangles).
pub fn write_triplets<W: Write>(a: &SparseSym, mut w: W) -> Result<()> {
    writeln!(w, "row,col,value")?;
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * a.nnz_upper());
    for (i, j, v) in a.upper_entries() {
        entries.push((i, j, v));
        if i != j {
            entries.push((j, i, v));
        }
    }
    entries.sort_by_key(|&(i, j, _)| (i, j));
    for (i, j, v) in entries {
        writeln!(w, "{i},{j},{}", fmt_f64(v))?;
    }
    Ok(())
}

/// One value per line.
pub fn write_vector<W: Write>(v: &[f64], mut w: W) -> Result<()> {
    for x in v {
        writeln!(w, "{}", fmt_f64(*x))?;
    }
    Ok(())
}

pub fn write_reconstruction_csv<W: Write>(res: &ReconstructionResult, mut w: W) -> Result<()> {
    writeln!(w, "pixel,x0,x1,y0,y1,negative_count,indeterminate_count,d_max,verdict")?;
    for (i, (rect, t)) in res.rects.iter().zip(&res.tests).enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{}",
            fmt_f64(rect.x0),
            fmt_f64(rect.x1),
            fmt_f64(rect.y0),
            fmt_f64(rect.y1),
            t.negative_count,
            t.indeterminate_count,
            t.d_allowed,
            t.verdict.as_str()
        )?;
    }
    Ok(())
}

pub fn verdict_gray(v: Verdict) -> u8 {
    match v {
        Verdict::Accepted => 255,
        Verdict::Rejected => 0,
        Verdict::Ambiguous => 128,
    }
}

/// ASCII PGM (P2) of a row-major `nx × ny` mask, pixel row `j = 0` at the bottom of the domain
/// and therefore written last.
pub fn write_pgm<W: Write>(mask: &[Verdict], nx: usize, ny: usize, mut w: W) -> Result<()> {
    if mask.len() != nx * ny {
        return Err(Error::DimensionMismatch {
            expected: nx * ny,
            got: mask.len(),
        });
    }
    writeln!(w, "P2")?;
    writeln!(w, "{nx} {ny}")?;
    writeln!(w, "255")?;
    for j in (0..ny).rev() {
        let row: Vec<String> = (0..nx).map(|i| verdict_gray(mask[j * nx + i]).to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symop_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -2e-17, -2e-17, std::f64::consts::PI]);
        let op = SymOp::new("Lambda(q)", 1.5, 42, m).unwrap();
        let mut buf = Vec::new();
        write_symop(&op, &mut buf).unwrap();
        let back = read_symop(buf.as_slice()).unwrap();
        assert_eq!(back, op);
    }

    #[test]
    fn symop_parse_errors_carry_lines() {
        let text = "# label=a,k=1,dim=2,basis=3\n1,2\n3\n";
        match read_symop(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pgm_layout() {
        let mask = [Verdict::Accepted, Verdict::Rejected, Verdict::Ambiguous, Verdict::Accepted];
        let mut buf = Vec::new();
        write_pgm(&mask, 2, 2, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "P2\n2 2\n255\n128 255\n255 0\n");
    }

    #[test]
    fn triplets_cover_both_triangles() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]);
        let mut buf = Vec::new();
        write_triplets(&a, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
