//! Plain-text H-representation: a `dim rows` header, then one `a_1 ... a_dim b`
//! line per half-space `a . x <= b`.

use std::fmt::Write as _;

use super::{GeometryError, Polytope};

pub fn write_hrep(poly: &Polytope) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", poly.dim(), poly.num_rows());
    for (a, b) in poly.rows() {
        let mut line = String::new();
        for v in a.iter().chain(std::iter::once(&b)) {
            if !line.is_empty() {
                line.push(' ');
            }
            let _ = write!(line, "{v:.16e}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn parse_hrep(text: &str) -> Result<Polytope, GeometryError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(GeometryError::Parse {
        line: 1,
        message: "missing `dim rows` header".into(),
    })?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| GeometryError::Parse {
            line: hline,
            message: e.to_string(),
        })?;
    let [dim, rows] = nums[..] else {
        return Err(GeometryError::Parse {
            line: hline,
            message: "header must be `dim rows`".into(),
        });
    };
    let mut normals = Vec::with_capacity(dim * rows);
    let mut offsets = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (ln, line) = lines.next().ok_or(GeometryError::Parse {
            line: hline,
            message: format!("expected {rows} rows"),
        })?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeometryError::Parse {
                line: ln,
                message: e.to_string(),
            })?;
        if vals.len() != dim + 1 {
            return Err(GeometryError::Parse {
                line: ln,
                message: format!("expected {} numbers, found {}", dim + 1, vals.len()),
            });
        }
        normals.extend_from_slice(&vals[..dim]);
        offsets.push(vals[dim]);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(GeometryError::Parse {
            line: ln,
            message: "trailing data after declared rows".into(),
        });
    }
    Polytope::new(dim, normals, offsets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_is_exact() {
        let p = Polytope::from_rows(
            2,
            &[(vec![0.1, -1.0 / 3.0], 2.0f64.sqrt()), (vec![-1e-9, 7.0], 1e12)],
        )
        .unwrap();
        let text = write_hrep(&p);
        assert!(text.starts_with("2 2\n"));
        assert_eq!(parse_hrep(&text).unwrap(), p);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_hrep("2 1\n1.0 oops 3\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }));
        let err = parse_hrep("1 2\n1 1\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { .. }));
    }
}
