use super::{is_empty, norm2, reduce, GeometryError, Polytope};

/// Hard cap on the reduced polytope after each elimination step.
pub const MAX_INTERMEDIATE_ROWS: usize = 2000;
/// Hard cap on the raw pairwise combinations of one step, before reduction.
pub const MAX_RAW_COMBINATIONS: usize = 250_000;

/// Orthogonal projection onto the coordinates in `keep` (in their original order)
/// by Fourier–Motzkin elimination, reducing after every eliminated coordinate.
pub fn project(poly: &Polytope, keep: &[usize]) -> Result<Polytope, GeometryError> {
    let dim = poly.dim();
    if keep.is_empty() {
        return Err(GeometryError::Malformed("projection needs at least one kept coordinate".into()));
    }
    let mut seen = vec![false; dim];
    for &k in keep {
        if k >= dim || seen[k] {
            return Err(GeometryError::Malformed(format!(
                "invalid kept coordinate {k} for dimension {dim}"
            )));
        }
        seen[k] = true;
    }
    if is_empty(poly)? {
        return Ok(Polytope::empty(keep.len()));
    }

    // `coords[c]` is the original index of current column c.
    let mut coords: Vec<usize> = (0..dim).collect();
    let mut current = reduce(poly)?;
    loop {
        let droppable: Vec<usize> = (0..coords.len()).filter(|&c| !keep.contains(&coords[c])).collect();
        if droppable.is_empty() {
            break;
        }
        // Eliminate the coordinate that creates the fewest combined rows.
        let col = *droppable
            .iter()
            .min_by_key(|&&c| {
                let (pos, neg) = sign_counts(&current, c);
                (pos * neg) as isize - (pos + neg) as isize
            })
            .expect("non-empty");
        let eliminated = eliminate(&current, col, coords[col])?;
        let eliminated_coord = coords.remove(col);
        current = if is_empty(&eliminated)? {
            return Ok(Polytope::empty(keep.len()));
        } else {
            reduce(&eliminated)?
        };
        if current.num_rows() > MAX_INTERMEDIATE_ROWS {
            return Err(GeometryError::RowCapExceeded {
                cap: MAX_INTERMEDIATE_ROWS,
                rows: current.num_rows(),
                coordinate: eliminated_coord,
            });
        }
    }

    // Reorder columns into the order requested by `keep`.
    let order: Vec<usize> = keep
        .iter()
        .map(|k| coords.iter().position(|c| c == k).expect("kept coordinate survives"))
        .collect();
    let mut out = Polytope::universe(keep.len());
    let mut row = vec![0.0; keep.len()];
    for (a, b) in current.rows() {
        for (dst, &src) in order.iter().enumerate() {
            row[dst] = a[src];
        }
        out.push_row(&row, b);
    }
    Ok(out)
}

fn sign_counts(poly: &Polytope, col: usize) -> (usize, usize) {
    poly.rows().fold((0, 0), |(p, n), (a, _)| {
        if a[col] > 0.0 {
            (p + 1, n)
        } else if a[col] < 0.0 {
            (p, n + 1)
        } else {
            (p, n)
        }
    })
}

fn eliminate(poly: &Polytope, col: usize, original: usize) -> Result<Polytope, GeometryError> {
    let dim = poly.dim();
    let zero_tol = 1e-13;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut out = Polytope::universe(dim - 1);
    let mut buf = vec![0.0; dim - 1];
    for r in 0..poly.num_rows() {
        let c = poly.row(r)[col];
        if c > zero_tol {
            pos.push(r);
        } else if c < -zero_tol {
            neg.push(r);
        } else {
            drop_column(poly.row(r), col, &mut buf);
            out.push_row(&buf, poly.offset(r));
        }
    }
    let total = out.num_rows() + pos.len() * neg.len();
    if total > MAX_RAW_COMBINATIONS {
        return Err(GeometryError::RowCapExceeded {
            cap: MAX_RAW_COMBINATIONS,
            rows: total,
            coordinate: original,
        });
    }
    let mut combined = vec![0.0; dim];
    for &p in &pos {
        let ap = poly.row(p);
        let cp = ap[col];
        for &n in &neg {
            let an = poly.row(n);
            let cn = -an[col];
            for k in 0..dim {
                combined[k] = cn * ap[k] + cp * an[k];
            }
            combined[col] = 0.0;
            let b = cn * poly.offset(p) + cp * poly.offset(n);
            drop_column(&combined, col, &mut buf);
            let norm = norm2(&buf);
            if norm <= 1e-12 {
                // 0 <= b: either trivially true or a certificate of emptiness.
                if b < -1e-12 {
                    return Ok(Polytope::empty(dim - 1));
                }
                continue;
            }
            buf.iter_mut().for_each(|v| *v /= norm);
            out.push_row(&buf, b / norm);
        }
    }
    Ok(out)
}

fn drop_column(row: &[f64], col: usize, out: &mut [f64]) {
    let mut k = 0;
    for (c, &v) in row.iter().enumerate() {
        if c != col {
            out[k] = v;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::contains;

    #[test]
    fn eliminating_dominated_coupling() {
        // 0 <= x <= 1, 0 <= u <= 1, x + u <= 1.5  onto x  ->  0 <= x <= 1
        let p = Polytope::from_rows(
            2,
            &[
                (vec![1.0, 0.0], 1.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, 1.0], 1.0),
                (vec![0.0, -1.0], 0.0),
                (vec![1.0, 1.0], 1.5),
            ],
        )
        .unwrap();
        let x = project(&p, &[0]).unwrap();
        let expect = Polytope::from_box(&[0.0], &[1.0]).unwrap();
        assert!(contains(&x, &expect).unwrap() && contains(&expect, &x).unwrap());
        assert_eq!(x.num_rows(), 2);
    }

    #[test]
    fn cube_onto_square() {
        let cube = Polytope::from_box(&[0.0; 3], &[1.0; 3]).unwrap();
        let sq = project(&cube, &[0, 1]).unwrap();
        let expect = Polytope::from_box(&[0.0; 2], &[1.0; 2]).unwrap();
        assert!(contains(&sq, &expect).unwrap() && contains(&expect, &sq).unwrap());
    }

    #[test]
    fn one_step_reach_interval() {
        // |u| <= 1, |x + u| <= 2 over (x, u)  ->  |x| <= 3
        let p = Polytope::from_rows(
            2,
            &[
                (vec![0.0, 1.0], 1.0),
                (vec![0.0, -1.0], 1.0),
                (vec![1.0, 1.0], 2.0),
                (vec![-1.0, -1.0], 2.0),
            ],
        )
        .unwrap();
        let x = project(&p, &[0]).unwrap();
        let expect = Polytope::from_box(&[-3.0], &[3.0]).unwrap();
        assert!(contains(&x, &expect).unwrap() && contains(&expect, &x).unwrap());
    }

    #[test]
    fn keep_order_is_respected() {
        let b = Polytope::from_box(&[0.0, 10.0, 20.0], &[1.0, 11.0, 21.0]).unwrap();
        let p = project(&b, &[2, 0]).unwrap();
        assert!(p.contains_point(&[20.5, 0.5], 1e-12));
        assert!(!p.contains_point(&[0.5, 20.5], 1e-6));
    }

    #[test]
    fn empty_projects_to_empty() {
        let p = project(&Polytope::empty(3), &[1]).unwrap();
        assert_eq!(p.dim(), 1);
        assert!(is_empty(&p).unwrap());
    }

    #[test]
    fn invalid_keep_is_rejected() {
        let cube = Polytope::from_box(&[0.0; 3], &[1.0; 3]).unwrap();
        assert!(project(&cube, &[]).is_err());
        assert!(project(&cube, &[3]).is_err());
        assert!(project(&cube, &[0, 0]).is_err());
    }
}
