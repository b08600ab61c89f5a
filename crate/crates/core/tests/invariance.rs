mod common;

use common::{default_atlas, toy_environment};
use misc_core::geometry::{chebyshev_center, contains, is_empty, lp_solve};
use misc_core::invariance::{
    admissible_pairs, build_atlas, compute_cis, pre_set, verify_entry, AdmissiblePair, CisAtlas, CisConfig, CisError,
    LinearSystem,
};
use misc_core::world::{default_environment, Rect};
use misc_core::{LpStatus, Polytope, Sense};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent one-step check: does some `u ∈ U` put `A x + B u` in `target`?
fn one_step_feasible(sys: &LinearSystem, x: &[f64], target: &Polytope, controls: &Polytope, slack: f64) -> bool {
    let (n, m) = (sys.n(), sys.m());
    let (a, b) = (sys.a(), sys.b());
    let ax: Vec<f64> = (0..n).map(|r| (0..n).map(|c| a[(r, c)] * x[c]).sum()).collect();
    let mut u_poly = controls.clone();
    for (row, off) in target.rows() {
        let rb: Vec<f64> = (0..m).map(|k| (0..n).map(|r| row[r] * b[(r, k)]).sum()).collect();
        let rax: f64 = (0..n).map(|r| row[r] * ax[r]).sum();
        u_poly.push_row(&rb, off - rax + slack);
    }
    lp_solve(&vec![0.0; m], &u_poly, Sense::Min).unwrap().status == LpStatus::Optimal
}

/// Largest `t` with `c + t d` inside `p`.
fn ray_exit(p: &Polytope, c: &[f64], d: &[f64]) -> f64 {
    p.rows()
        .filter_map(|(a, b)| {
            let ad: f64 = a.iter().zip(d).map(|(x, y)| x * y).sum();
            let ac: f64 = a.iter().zip(c).map(|(x, y)| x * y).sum();
            (ad > 1e-12).then(|| (b - ac) / ad)
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let d: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    d.iter().map(|v| v / norm).collect()
}

fn braking_system() -> LinearSystem {
    LinearSystem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]), DMatrix::from_row_slice(2, 1, &[0.0, 0.1])).unwrap()
}

/// Brakes as hard as allowed until at rest; returns the smallest distance to
/// the position bounds `[-10, 0]` along the way (negative when violated).
fn braking_margin(pos: f64, vel: f64) -> f64 {
    let (mut p, mut v) = (pos, vel);
    let mut margin = f64::INFINITY;
    for _ in 0..1000 {
        margin = margin.min(-p).min(p + 10.0);
        if v == 0.0 {
            break;
        }
        let a = (-v / 0.1).clamp(-1.0, 1.0);
        p += 0.1 * v;
        v += 0.1 * a;
        if v.abs() < 1e-12 {
            v = 0.0;
        }
    }
    margin
}

#[test]
fn braking_cis_matches_bang_bang_oracle() {
    let sys = braking_system();
    let pair = AdmissiblePair {
        obstacle: 0,
        face: 0,
        state_region: Polytope::from_box(&[-10.0, -5.0], &[0.0, 5.0]).unwrap(),
        control_region: Polytope::from_box(&[-1.0], &[1.0]).unwrap(),
    };
    let run = compute_cis(&sys, &pair, &CisConfig::default()).unwrap();
    assert!(!run.empty);
    let s = &run.set;
    assert!(!s.contains_point(&[-0.1, 2.0], 1e-9));
    assert!(s.contains_point(&[-3.0, 1.0], 1e-9));
    let pre = pre_set(&sys, s, &pair.control_region).unwrap();
    assert!(contains(&pre, s).unwrap() && contains(&pair.state_region, s).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 1000 {
        let (p, v) = (rng.random_range(-10.0..0.0), rng.random_range(-5.0..5.0));
        let margin = braking_margin(p, v);
        if margin.abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let inside = s.contains_point(&[p, v], 1e-9);
        // States that cannot stop in time are never in any invariant set.
        if margin < 0.0 {
            assert!(!inside, "({p}, {v}) cannot brake but is in S");
        } else if run.lambda == 1.0 {
            // The plain fixed point is the maximal invariant set.
            assert!(inside, "({p}, {v}) can brake but is not in S");
        }
    }
}

#[test]
fn double_integrator_pre_set_by_sampling() {
    let sys = LinearSystem::damped_double_integrator(0.02, 0.1);
    let target = Polytope::from_box(&[0.0, 0.0, -1.0, -1.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
    let controls = Polytope::from_box(&[-10.0, -10.0], &[10.0, 10.0]).unwrap();
    let pre = pre_set(&sys, &target, &controls).unwrap();
    let (c, r) = chebyshev_center(&pre).unwrap();
    assert!(r > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let d = random_direction(&mut rng, 4);
        let t = ray_exit(&pre, &c, &d);
        let s = rng.random_range(0.0..0.999) * t;
        let inside: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + s * b).collect();
        assert!(one_step_feasible(&sys, &inside, &target, &controls, 1e-9), "{inside:?} should be in Pre");
        let outside: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + (t + 1e-4) * b).collect();
        assert!(!one_step_feasible(&sys, &outside, &target, &controls, 0.0), "{outside:?} should not be in Pre");
    }
}

#[test]
fn default_atlas_is_complete_and_certified() {
    let env = default_environment();
    let sys = env.system();
    let atlas = default_atlas();
    assert_eq!(atlas.len(), 20);
    let left_of_o1 = atlas.get(0, 0).unwrap();
    assert!(!left_of_o1.empty);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (pair, entry) in admissible_pairs(&env).iter().zip(&atlas.entries) {
        assert_eq!((pair.obstacle, pair.face), (entry.obstacle, entry.face));
        assert!(verify_entry(&sys, pair, entry).unwrap());
        if entry.empty {
            // Only faces whose admissible region misses the workspace come out empty.
            assert!(is_empty(&pair.state_region).unwrap(), "face ({}, {}) emptied out", entry.obstacle, entry.face);
            continue;
        }
        assert!(contains(&pair.state_region, &entry.set).unwrap());
        let (c, _) = chebyshev_center(&entry.set).unwrap();
        for _ in 0..1000 {
            let d = random_direction(&mut rng, 4);
            let t = ray_exit(&entry.set, &c, &d);
            let s = rng.random_range(0.0..=1.0) * t;
            let x: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            assert!(one_step_feasible(&sys, &x, &entry.set, &pair.control_region, 1e-9));
        }
        // Fixed point: S = Pre(S) ∩ region.
        let fixed = pre_set(&sys, &entry.set, &pair.control_region).unwrap().intersect(&pair.state_region).unwrap();
        assert!(contains(&fixed, &entry.set).unwrap() && contains(&entry.set, &fixed).unwrap());
    }
}

#[test]
fn atlas_build_is_deterministic() {
    let env = default_environment();
    let again = build_atlas(&env.system(), &env, &CisConfig::default()).unwrap();
    let first = default_atlas();
    assert_eq!(first.system_hash, again.system_hash);
    assert_eq!(first.entries, again.entries);
    for e in again.entries.iter().filter(|e| !e.empty) {
        assert_eq!(e.set, e.set.canonical());
    }
}

#[test]
fn cache_roundtrip_and_refusal() {
    let env = default_environment();
    let atlas = default_atlas();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.cis.json");
    atlas.save(&path).unwrap();
    assert_eq!(&CisAtlas::load_for(&path, &env).unwrap(), atlas);

    let mut moved = env.clone();
    moved.start = [7.2, 98.1];
    assert!(matches!(CisAtlas::load_for(&path, &moved), Err(CisError::HashMismatch { .. })));
    let mut damped = env.clone();
    damped.gamma = 0.2;
    assert!(matches!(CisAtlas::load_for(&path, &damped), Err(CisError::HashMismatch { .. })));

    let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
    assert!(matches!(CisAtlas::from_json(&text), Err(CisError::Version { found: 9 })));
    assert!(matches!(CisAtlas::from_json("{ not json"), Err(CisError::Format(_))));
}

#[test]
fn zero_obstacles_give_an_empty_atlas() {
    let mut env = toy_environment();
    env.obstacles.clear();
    let atlas = build_atlas(&env.system(), &env, &CisConfig::default()).unwrap();
    assert!(atlas.is_empty());
}

#[test]
fn obstacle_spanning_the_workspace_records_empty_faces() {
    let mut env = toy_environment();
    env.obstacles = vec![Rect::new(-5.0, 45.0, -5.0, 20.0)];
    env.start = [20.0, 30.0];
    let atlas = build_atlas(&env.system(), &env, &CisConfig::default()).unwrap();
    assert_eq!(atlas.len(), 4);
    let empty: Vec<bool> = atlas.entries.iter().map(|e| e.empty).collect();
    assert_eq!(empty, vec![true, true, true, false]);
    assert!(atlas.get(0, 3).unwrap().set.contains_point(&[20.0, 30.0, 0.0, 0.0], 1e-9));
}
