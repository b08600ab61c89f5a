use misc_core::geometry::{chebyshev_center, contains, is_empty, lp_solve, parse_hrep, project, reduce, write_hrep};
use misc_core::{LpStatus, Polytope, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bounded polytope around the origin: `k` tangent lines at random radii,
/// with angles spread so consecutive normals are less than π apart.
fn random_polygon(rng: &mut ChaCha8Rng, k: usize) -> Polytope {
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let rows: Vec<(Vec<f64>, f64)> = (0..k)
        .map(|i| {
            let jitter = rng.random_range(-0.2..0.2);
            let th = phase + (i as f64 + 0.5 + jitter) * std::f64::consts::TAU / k as f64;
            (vec![th.cos(), th.sin()], rng.random_range(0.5..3.0))
        })
        .collect();
    Polytope::from_rows(2, &rows).unwrap()
}

/// Every pairwise intersection that satisfies all rows.
fn vertices(p: &Polytope) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for i in 0..p.num_rows() {
        for j in i + 1..p.num_rows() {
            let (a, b) = (p.row(i), p.row(j));
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (p.offset(i) * b[1] - a[1] * p.offset(j)) / det;
            let y = (a[0] * p.offset(j) - p.offset(i) * b[0]) / det;
            if p.contains_point(&[x, y], 1e-9) {
                out.push([x, y]);
            }
        }
    }
    out
}

#[test]
fn lp_agrees_with_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let k = rng.random_range(3..=8);
        let poly = random_polygon(&mut rng, k);
        let cost = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let best = vertices(&poly).iter().map(|v| cost[0] * v[0] + cost[1] * v[1]).fold(f64::NEG_INFINITY, f64::max);
        let sol = lp_solve(&cost, &poly, Sense::Max).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - best).abs() <= 1e-8, "lp {} vs vertices {best}", sol.objective);
        assert!(poly.contains_point(sol.point.as_ref().unwrap(), 1e-8));
    }
}

#[test]
fn hexagon_with_tangent_redundant_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hex = random_polygon(&mut rng, 6);
    let mut rows: Vec<(Vec<f64>, f64)> = hex.rows().map(|(a, b)| (a.to_vec(), b)).collect();
    // Positive combinations of adjacent rows touch the hexagon at a vertex.
    for k in 0..20 {
        let (i, j) = (k % 6, (k + 1) % 6);
        let (l1, l2) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let a = vec![l1 * hex.row(i)[0] + l2 * hex.row(j)[0], l1 * hex.row(i)[1] + l2 * hex.row(j)[1]];
        rows.push((a, l1 * hex.offset(i) + l2 * hex.offset(j)));
    }
    let padded = Polytope::from_rows(2, &rows).unwrap();
    let reduced = reduce(&padded).unwrap();
    assert_eq!(reduced.num_rows(), 6);
    assert!(contains(&reduced, &hex).unwrap() && contains(&hex, &reduced).unwrap());
}

/// A random bounded polytope in `dim` dimensions containing the origin.
fn random_polytope(rng: &mut ChaCha8Rng, dim: usize) -> Polytope {
    let mut p = Polytope::from_box(&vec![-2.0; dim], &vec![2.0; dim]).unwrap();
    for _ in 0..rng.random_range(3..10) {
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.push_row(&a, rng.random_range(0.2..1.5));
    }
    p
}

/// Random convex combination of LP maximisers in random directions.
fn sample_point(rng: &mut ChaCha8Rng, p: &Polytope) -> Vec<f64> {
    let mut acc = vec![0.0; p.dim()];
    let mut total = 0.0;
    for _ in 0..4 {
        let c: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = lp_solve(&c, p, Sense::Max).unwrap().point.unwrap();
        let w = rng.random_range(0.05..1.0);
        total += w;
        acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
    }
    acc.iter().map(|a| a / total).collect()
}

#[test]
fn projection_soundness_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut forward, mut lifted) = (0, 0);
    for _ in 0..50 {
        let dim = rng.random_range(3..=4);
        let poly = random_polytope(&mut rng, dim);
        let mut keep: Vec<usize> = (0..dim).filter(|_| rng.random_bool(0.6)).collect();
        if keep.is_empty() || keep.len() == dim {
            keep = vec![0, dim - 1];
        }
        let proj = project(&poly, &keep).unwrap();
        assert_eq!(proj.dim(), keep.len());
        for _ in 0..10 {
            let p = sample_point(&mut rng, &poly);
            let q: Vec<f64> = keep.iter().map(|&k| p[k]).collect();
            assert!(proj.contains_point(&q, 1e-7), "projection lost {q:?}");
            forward += 1;
        }
        for _ in 0..10 {
            let q = sample_point(&mut rng, &proj);
            let mut fiber = poly.clone();
            for (slot, &k) in keep.iter().enumerate() {
                let mut e = vec![0.0; dim];
                e[k] = 1.0;
                fiber.push_row(&e, q[slot] + 1e-9);
                e[k] = -1.0;
                fiber.push_row(&e, -q[slot] + 1e-9);
            }
            assert!(!is_empty(&fiber).unwrap(), "no lift for {q:?}");
            lifted += 1;
        }
    }
    assert_eq!((forward, lifted), (500, 500));
}

#[test]
fn hrep_text_format() {
    let tri = Polytope::from_rows(2, &[(vec![-1.0, 0.0], 0.0), (vec![0.0, -1.0], 0.0), (vec![1.0, 1.0], 1.0)]).unwrap();
    let text = write_hrep(&tri);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("2 3"));
    let first: Vec<f64> = lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(first, vec![-1.0, 0.0, 0.0]);
    assert_eq!(parse_hrep(&text).unwrap(), tri);
    let (c, r) = chebyshev_center(&tri).unwrap();
    assert!((r - (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-9);
    assert!((c[0] - r).abs() < 1e-9 && (c[1] - r).abs() < 1e-9);
}

fn arb_polytope() -> impl Strategy<Value = Polytope> {
    (any::<u64>(), 2usize..=3).prop_map(|(seed, dim)| random_polytope(&mut ChaCha8Rng::seed_from_u64(seed), dim))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reduce_is_idempotent(p in arb_polytope()) {
        let once = reduce(&p).unwrap();
        let twice = reduce(&once).unwrap();
        prop_assert_eq!(once.num_rows(), twice.num_rows());
        prop_assert!(contains(&once, &p).unwrap() && contains(&p, &once).unwrap());
    }

    #[test]
    fn containment_is_a_partial_order(seed in any::<u64>(), scale in 1.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polytope(&mut rng, 2);
        prop_assert!(contains(&p, &p).unwrap());
        // A scaled copy about the origin (which is inside) is a superset.
        let mut big = Polytope::universe(2);
        for (a, b) in p.rows() {
            big.push_row(a, b * scale);
        }
        prop_assert!(contains(&big, &p).unwrap());
        if contains(&p, &big).unwrap() {
            // Mutual containment only when the sets coincide.
            let tight = reduce(&p).unwrap().rows().all(|(a, b)| lp_solve(a, &big, Sense::Max).unwrap().objective <= b + 1e-7);
            prop_assert!(tight);
        }
        let mut bigger = Polytope::universe(2);
        for (a, b) in p.rows() {
            bigger.push_row(a, b * scale * 1.5);
        }
        prop_assert!(contains(&bigger, &big).unwrap() && contains(&bigger, &p).unwrap());
    }
}
