//! Offline control-invariant sets, one per obstacle face.
//!
//! Each face `(i, j)` defines an admissible region `P ∩ {T_ij x <= t_ij}`.
//! [`compute_cis`] runs the fixed point `S <- S ∩ Pre(S)` from that region and
//! only returns a set once `S ⊆ Pre(S)` has been verified by LP containment.
//! If plain iteration does not settle within the cap, a λ-contractive variant
//! (successor required in `λ·S` around the Chebyshev centre) is tried.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{self, chebyshev_center, contains, is_empty, project, reduce, GeometryError, Polytope};
use crate::world::Environment;

/// Version tag written into every `*.cis.json` cache.
pub const CIS_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CisError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("uncertified after {iterations} iterations (lambda {lambda})")]
    Uncertified {
        iterations: usize,
        lambda: f64,
        last: Box<Polytope>,
    },
    #[error("uncertified faces: {}", .faces.iter().map(|(i, j)| format!("({i},{j})")).collect::<Vec<_>>().join(", "))]
    UncertifiedFaces { faces: Vec<(usize, usize)> },
    #[error("invalid environment: {0}")]
    Environment(String),
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("cache version {found} unsupported (expected {CIS_FILE_VERSION})")]
    Version { found: u32 },
    #[error("atlas digest {atlas} does not match environment digest {env}")]
    HashMismatch { atlas: String, env: String },
}

/// `x+ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, CisError> {
        if !a.is_square() || a.nrows() != b.nrows() || b.ncols() == 0 || a.nrows() == 0 {
            return Err(CisError::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(CisError::Dimension("non-finite system matrix".into()));
        }
        Ok(Self { a, b })
    }

    /// Per-axis damped double integrator with state `[X, Y, vx, vy]` and input `[ax, ay]`.
    pub fn damped_double_integrator(dt: f64, gamma: f64) -> Self {
        let damp = 1.0 - gamma * dt;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, dt,   0.0,
            0.0, 1.0, 0.0,  dt,
            0.0, 0.0, damp, 0.0,
            0.0, 0.0, 0.0,  damp,
        ]);
        let h = 0.5 * dt * dt;
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(4, 2, &[
            h,   0.0,
            0.0, h,
            dt,  0.0,
            0.0, dt,
        ]);
        Self { a, b }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        (0..n)
            .map(|r| {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += self.a[(r, c)] * x[c];
                }
                for c in 0..m {
                    acc += self.b[(r, c)] * u[c];
                }
                acc
            })
            .collect()
    }

    /// Row-major `(A, B)` entries, used for digests.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let a = (0..self.n()).flat_map(|r| (0..self.n()).map(move |c| (r, c))).map(|rc| self.a[rc]).collect();
        let b = (0..self.n()).flat_map(|r| (0..self.m()).map(move |c| (r, c))).map(|rc| self.b[rc]).collect();
        (a, b)
    }
}

/// Admissible state-control pairs for one obstacle face.
#[derive(Debug, Clone)]
pub struct AdmissiblePair {
    pub obstacle: usize,
    pub face: usize,
    pub state_region: Polytope,
    pub control_region: Polytope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CisConfig {
    pub max_iterations: usize,
    pub lambda: f64,
}

impl Default for CisConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            lambda: 0.999,
        }
    }
}

/// Result of one certified fixed-point run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CisEntry {
    pub obstacle: usize,
    pub face: usize,
    /// Canonical H-rep (unit normals, rows sorted).
    pub set: Polytope,
    pub empty: bool,
    pub iterations: usize,
    /// `1.0` for the plain fixed point, `< 1` when the contractive retry was used.
    pub lambda: f64,
}

/// One certified entry per obstacle face, ordered by `(obstacle, face)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CisAtlas {
    pub version: u32,
    pub system_hash: String,
    pub created_unix: u64,
    pub entries: Vec<CisEntry>,
}

impl CisAtlas {
    pub fn get(&self, obstacle: usize, face: usize) -> Option<&CisEntry> {
        self.entries
            .binary_search_by(|e| (e.obstacle, e.face).cmp(&(obstacle, face)))
            .ok()
            .map(|k| &self.entries[k])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String, CisError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CisError> {
        let atlas: CisAtlas = serde_json::from_str(text)?;
        if atlas.version != CIS_FILE_VERSION {
            return Err(CisError::Version { found: atlas.version });
        }
        Ok(atlas)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CisError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads a cache and refuses it unless its digest matches `env`.
    pub fn load_for(path: &std::path::Path, env: &Environment) -> Result<Self, CisError> {
        let atlas = Self::from_json(&std::fs::read_to_string(path)?)?;
        atlas.check_matches(env)?;
        Ok(atlas)
    }

    pub fn check_matches(&self, env: &Environment) -> Result<(), CisError> {
        let expected = system_hash(&env.system(), env);
        if self.system_hash != expected {
            return Err(CisError::HashMismatch {
                atlas: self.system_hash.clone(),
                env: expected,
            });
        }
        Ok(())
    }
}

/// SHA-256 over the system matrices and the canonical environment JSON.
pub fn system_hash(sys: &LinearSystem, env: &Environment) -> String {
    let (a, b) = sys.coefficients();
    let mut h = Sha256::new();
    h.update(b"misc-cis-v1");
    for v in a.iter().chain(&b) {
        h.update(v.to_le_bytes());
    }
    h.update(serde_json::to_vec(env).expect("environment serialises"));
    hex::encode(h.finalize())
}

/// `Pre(S) = {x : ∃u ∈ U, A x + B u ∈ S}`, exact and reduced.
pub fn pre_set(sys: &LinearSystem, target: &Polytope, controls: &Polytope) -> Result<Polytope, CisError> {
    lifted_pre(sys, target, controls).and_then(|lifted| {
        let keep: Vec<usize> = (0..sys.n()).collect();
        Ok(project(&lifted, &keep)?)
    })
}

/// The `(x, u)` polytope whose projection onto `x` is `Pre(S)`.
fn lifted_pre(sys: &LinearSystem, target: &Polytope, controls: &Polytope) -> Result<Polytope, CisError> {
    let (n, m) = (sys.n(), sys.m());
    if target.dim() != n || controls.dim() != m {
        return Err(CisError::Dimension(format!(
            "target dim {} / controls dim {} for system ({n}, {m})",
            target.dim(),
            controls.dim()
        )));
    }
    let mut lifted = Polytope::universe(n + m);
    let mut row = vec![0.0; n + m];
    for (a, b) in target.rows() {
        for c in 0..n {
            row[c] = (0..n).map(|r| a[r] * sys.a[(r, c)]).sum();
        }
        for c in 0..m {
            row[n + c] = (0..n).map(|r| a[r] * sys.b[(r, c)]).sum();
        }
        lifted.push_row(&row, b);
    }
    for (g, h) in controls.rows() {
        row[..n].iter_mut().for_each(|v| *v = 0.0);
        row[n..].copy_from_slice(g);
        lifted.push_row(&row, h);
    }
    Ok(lifted)
}

/// Outcome of [`compute_cis`].
#[derive(Debug, Clone)]
pub struct CisRun {
    pub set: Polytope,
    pub empty: bool,
    pub iterations: usize,
    pub lambda: f64,
}

/// Shrinks `S` towards its Chebyshev centre: `λ S + (1 - λ) c`.
fn contracted(set: &Polytope, lambda: f64) -> Result<Polytope, CisError> {
    let (center, _) = chebyshev_center(set)?;
    let mut out = Polytope::universe(set.dim());
    for (a, b) in set.rows() {
        let ac = geometry::dot(a, &center);
        out.push_row(a, ac + lambda * (b - ac));
    }
    Ok(out)
}


fn fixed_point(
    sys: &LinearSystem,
    pair: &AdmissiblePair,
    lambda: f64,
    cap: usize,
) -> Result<Result<CisRun, (usize, Polytope)>, CisError> {
    let mut current = reduce(&pair.state_region)?;
    for it in 1..=cap {
        let target = if lambda < 1.0 { contracted(&current, lambda)? } else { current.clone() };
        let pre = pre_set(sys, &target, &pair.control_region)?;
        if contains(&pre, &current)? {
            tracing::debug!(obstacle = pair.obstacle, face = pair.face, it, rows = current.num_rows(), "certified");
            return Ok(Ok(CisRun {
                set: current.canonical(),
                empty: false,
                iterations: it,
                lambda,
            }));
        }
        let next = current.intersect(&pre)?;
        if is_empty(&next)? {
            return Ok(Ok(CisRun {
                set: Polytope::empty(current.dim()),
                empty: true,
                iterations: it,
                lambda,
            }));
        }
        let next = reduce(&next)?;
        if !contains(&current, &next)? {
            return Err(CisError::Geometry(GeometryError::NumericalFailure(format!(
                "fixed-point iterate {it} is not nested in its predecessor"
            ))));
        }
        current = next;
    }
    Ok(Err((cap, current)))
}

/// Certified control-invariant subset of `pair.state_region`.
pub fn compute_cis(sys: &LinearSystem, pair: &AdmissiblePair, config: &CisConfig) -> Result<CisRun, CisError> {
    if is_empty(&pair.state_region)? {
        return Err(CisError::Geometry(GeometryError::Empty));
    }
    match fixed_point(sys, pair, 1.0, config.max_iterations)? {
        Ok(run) => return Ok(run),
        Err(_) => tracing::info!(obstacle = pair.obstacle, face = pair.face, "retrying with contraction"),
    }
    match fixed_point(sys, pair, config.lambda, config.max_iterations)? {
        Ok(run) => {
            // λS ⊆ S, so invariance of the returned set must also hold without contraction.
            let pre = pre_set(sys, &run.set, &pair.control_region)?;
            if run.empty || contains(&pre, &run.set)? {
                Ok(run)
            } else {
                Err(CisError::Uncertified {
                    iterations: run.iterations,
                    lambda: config.lambda,
                    last: Box::new(run.set),
                })
            }
        }
        Err((iterations, last)) => Err(CisError::Uncertified {
            iterations,
            lambda: config.lambda,
            last: Box::new(last),
        }),
    }
}

/// Admissible regions for every face of every obstacle, in `(i, j)` order.
pub fn admissible_pairs(env: &Environment) -> Vec<AdmissiblePair> {
    let p = env.state_polytope();
    let u = env.control_polytope();
    let mut out = Vec::new();
    for (i, faces) in env.obstacle_faces().into_iter().enumerate() {
        for (j, face) in faces.into_iter().enumerate() {
            let mut region = p.clone();
            region.push_row(&face.normal, face.offset);
            out.push(AdmissiblePair {
                obstacle: i,
                face: j,
                state_region: region,
                control_region: u.clone(),
            });
        }
    }
    out
}

/// Runs [`compute_cis`] for every face. Faces whose admissible region is empty
/// are recorded as explicitly empty entries.
pub fn build_atlas(sys: &LinearSystem, env: &Environment, config: &CisConfig) -> Result<CisAtlas, CisError> {
    env.validate().map_err(|e| CisError::Environment(e.to_string()))?;
    let pairs = admissible_pairs(env);
    let results: Vec<Result<CisEntry, CisError>> = pairs
        .iter()
        .map(|pair| {
            if is_empty(&pair.state_region)? {
                return Ok(CisEntry {
                    obstacle: pair.obstacle,
                    face: pair.face,
                    set: Polytope::empty(sys.n()),
                    empty: true,
                    iterations: 0,
                    lambda: 1.0,
                });
            }
            let run = compute_cis(sys, pair, config)?;
            Ok(CisEntry {
                obstacle: pair.obstacle,
                face: pair.face,
                set: run.set,
                empty: run.empty,
                iterations: run.iterations,
                lambda: run.lambda,
            })
        })
        .collect();

    let mut entries = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (pair, res) in pairs.iter().zip(results) {
        match res {
            Ok(e) => entries.push(e),
            Err(CisError::Uncertified { .. }) => failed.push((pair.obstacle, pair.face)),
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        return Err(CisError::UncertifiedFaces { faces: failed });
    }
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(CisAtlas {
        version: CIS_FILE_VERSION,
        system_hash: system_hash(sys, env),
        created_unix,
        entries,
    })
}

/// Per-obstacle grouping of atlas entries: `groups[i][j]`.
pub fn group_entries(atlas: &CisAtlas) -> BTreeMap<usize, Vec<&CisEntry>> {
    let mut out: BTreeMap<usize, Vec<&CisEntry>> = BTreeMap::new();
    for e in &atlas.entries {
        out.entry(e.obstacle).or_default().push(e);
    }
    out
}

/// Re-checks the two certification conditions of an entry.
pub fn verify_entry(sys: &LinearSystem, pair: &AdmissiblePair, entry: &CisEntry) -> Result<bool, CisError> {
    if entry.empty || geometry::is_empty(&entry.set)? {
        return Ok(true);
    }
    let pre = pre_set(sys, &entry.set, &pair.control_region)?;
    Ok(contains(&pair.state_region, &entry.set)? && contains(&pre, &entry.set)?)
}
