#![allow(dead_code)]

use std::sync::OnceLock;

use misc_core::invariance::{build_atlas, CisAtlas, CisConfig};
use misc_core::world::{default_environment, Environment, Goal, Limits, Rect};

pub fn default_atlas() -> &'static CisAtlas {
    static ATLAS: OnceLock<CisAtlas> = OnceLock::new();
    ATLAS.get_or_init(|| {
        let env = default_environment();
        build_atlas(&env.system(), &env, &CisConfig::default()).expect("default atlas certifies")
    })
}

/// One square obstacle in the middle of a 40 x 40 room.
pub fn toy_environment() -> Environment {
    Environment {
        workspace: Rect::new(0.0, 40.0, 0.0, 40.0),
        obstacles: vec![Rect::new(15.0, 25.0, 15.0, 25.0)],
        goals: vec![Goal {
            center: [35.0, 35.0],
            radius: 2.0,
        }],
        start: [5.0, 5.0],
        agent_radius: 1.0,
        limits: Limits { vmax: 20.0, amax: 40.0 },
        goal_speed_max: 0.9,
        dt: 0.02,
        gamma: 0.1,
    }
}

pub fn toy_atlas() -> &'static CisAtlas {
    static ATLAS: OnceLock<CisAtlas> = OnceLock::new();
    ATLAS.get_or_init(|| {
        let env = toy_environment();
        build_atlas(&env.system(), &env, &CisConfig::default()).expect("toy atlas certifies")
    })
}

/// True when `x` lies in at least one non-empty entry per obstacle.
pub fn in_atlas_union(atlas: &CisAtlas, obstacles: usize, x: &[f64], tol: f64) -> bool {
    (0..obstacles).all(|i| {
        atlas
            .entries
            .iter()
            .filter(|e| e.obstacle == i && !e.empty)
            .any(|e| e.set.contains_point(x, tol))
    })
}
