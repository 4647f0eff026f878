//! Searches over `(x, deg_vector, CD)` for models that hit a target EI or
//! degeneracy.
//!
//! Candidates are ordered by deg vector (FD, then ΣCD, ascending), then by
//! `x` descending along a 1001-point grid, then by CD partition. Every search
//! returns the first match in that order, regardless of how the work is
//! scheduled across threads.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::cqe::closed_determinism_unchecked;
use crate::error::{CeError, Result};
use crate::synth::{cd_count, check_x, expand_cd, CdArray, DegVector, Kernel, KernelNeeds};
use crate::tpm::{check_variable_count, CausalMetrics};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const GRID_POINTS: usize = 1001;

/// `linspace(1, 0.5, 1001)`.
pub fn x_grid() -> Vec<f64> {
    let last = (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| 1.0 - 0.5 * (i as f64) / last)
        .collect()
}

/// Every searchable deg vector for `n` variables, in canonical order.
///
/// A one-variable model has none.
pub fn enumerate_deg_vectors(n: u32) -> Vec<DegVector> {
    if n < 2 {
        return Vec::new();
    }
    let states = 1usize << n;
    let mut out = Vec::new();
    for fd in 1..=states / 2 {
        for cd_sum in 1..=states {
            if fd > 1 && cd_sum < 2 * fd {
                continue;
            }
            out.push(DegVector { fd, cd_sum });
        }
    }
    out
}

/// How determinism is obtained for each candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Row divergences of the generated matrix.
    Tpm,
    /// The closed form in `x`.
    #[default]
    Cqe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub x: f64,
    pub dv: DegVector,
    pub cd: CdArray,
    pub metrics: CausalMetrics,
    /// Candidates a sequential scan evaluates up to and including the match.
    pub iterations: u64,
}

/// Candidate with the smallest EI gap, reported when nothing matches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosestMiss {
    pub x: f64,
    pub dv: DegVector,
    pub cd: CdArray,
    pub ei: f64,
    pub gap: f64,
}

/// Outcome of one target within a batched search.
#[derive(Debug, Clone, PartialEq)]
pub enum Search {
    Found(SolverResult),
    NotFound {
        closest: Option<ClosestMiss>,
        iterations: u64,
    },
}

impl Search {
    pub fn into_result(self) -> Result<SolverResult> {
        match self {
            Search::Found(r) => Ok(r),
            Search::NotFound { .. } => Err(CeError::NotFound),
        }
    }

    pub fn found(&self) -> Option<&SolverResult> {
        match self {
            Search::Found(r) => Some(r),
            Search::NotFound { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub method: Method,
    /// Restricts the search to these deg vectors, kept in the given order.
    pub deg_vectors: Option<Vec<DegVector>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            method: Method::Cqe,
            deg_vectors: None,
        }
    }
}

/// Position of a candidate in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Index {
    dv: usize,
    x: usize,
    cd: usize,
}

#[derive(Debug, Clone)]
struct Hit {
    at: Index,
    cd: CdArray,
    det: f64,
    deg: f64,
}

#[derive(Debug, Clone)]
struct Near {
    gap: f64,
    at: Index,
    cd: CdArray,
    ei: f64,
}

fn better_near(a: &Near, b: &Near) -> bool {
    a.gap < b.gap || (a.gap == b.gap && a.at < b.at)
}

fn validate_request(n: u32, targets: &[f64], opts: &SolverOptions) -> Result<()> {
    check_variable_count(n)?;
    if !(opts.tolerance > 0.0) {
        return Err(CeError::OutOfDomain {
            name: "tolerance",
            value: opts.tolerance,
            range: "(0, inf)",
        });
    }
    for &t in targets {
        if !(0.0..=f64::from(n)).contains(&t) {
            return Err(CeError::OutOfDomain {
                name: "ei_target",
                value: t,
                range: "[0, n]",
            });
        }
    }
    if let Some(dvs) = &opts.deg_vectors {
        for dv in dvs {
            dv.validate(n)?;
        }
    }
    Ok(())
}

/// Solves several EI targets in one pass over the candidate space.
///
/// Each entry of the result equals what a separate single-target search
/// would return.
pub fn solve_many(n: u32, targets: &[f64], opts: &SolverOptions) -> Result<Vec<Search>> {
    validate_request(n, targets, opts)?;
    let dvs = opts
        .deg_vectors
        .clone()
        .unwrap_or_else(|| enumerate_deg_vectors(n));
    let grid = x_grid();
    let needs = KernelNeeds {
        blocks: dvs.iter().any(|d| *d != DegVector::SYMMETRIC),
        row_kl: opts.method == Method::Tpm,
    };
    let nf = f64::from(n);
    let tol = opts.tolerance;
    // best deg-vector index matched so far per target; later ones cannot win
    let bound: Vec<AtomicUsize> = targets
        .iter()
        .map(|_| AtomicUsize::new(usize::MAX))
        .collect();

    let per_x: Vec<(Vec<Option<Hit>>, Vec<Option<Near>>)> = grid
        .par_iter()
        .enumerate()
        .map(|(xi, &x)| {
            let mut hits: Vec<Option<Hit>> = vec![None; targets.len()];
            let mut near: Vec<Option<Near>> = vec![None; targets.len()];
            let kernel = Kernel::new(n, x, needs).expect("grid points are in range");
            let closed = closed_determinism_unchecked(x);
            let mut scratch = Vec::with_capacity(1usize << n);
            for (di, &dv) in dvs.iter().enumerate() {
                let live = |t: usize, hits: &[Option<Hit>]| {
                    hits[t].is_none() && di <= bound[t].load(Ordering::Relaxed)
                };
                if !(0..targets.len()).any(|t| live(t, &hits)) {
                    // bounds only shrink and di only grows
                    break;
                }
                for (ci, cd) in expand_cd(n, dv).expect("validated").enumerate() {
                    let det = match opts.method {
                        Method::Cqe => closed,
                        Method::Tpm => kernel.matrix_determinism(cd.parts()),
                    };
                    let deg = kernel.degeneracy(cd.parts(), &mut scratch);
                    let ei = nf * (det - deg);
                    let at = Index {
                        dv: di,
                        x: xi,
                        cd: ci,
                    };
                    for (t, &target) in targets.iter().enumerate() {
                        if !live(t, &hits) {
                            continue;
                        }
                        let gap = (target - ei).abs();
                        if gap < tol {
                            hits[t] = Some(Hit {
                                at,
                                cd: cd.clone(),
                                det,
                                deg,
                            });
                            bound[t].fetch_min(di, Ordering::Relaxed);
                        } else if near[t].as_ref().is_none_or(|b| gap < b.gap) {
                            near[t] = Some(Near {
                                gap,
                                at,
                                cd: cd.clone(),
                                ei,
                            });
                        }
                    }
                }
            }
            (hits, near)
        })
        .collect();

    let counts: Vec<u64> = dvs.iter().map(|&d| cd_count(d)).collect();
    let g = GRID_POINTS as u64;
    let before: Vec<u64> = counts
        .iter()
        .scan(0u64, |acc, &c| {
            let v = *acc;
            *acc += c * g;
            Some(v)
        })
        .collect();
    let total: u64 = counts.iter().sum::<u64>() * g;

    let mut out = Vec::with_capacity(targets.len());
    for t in 0..targets.len() {
        let best_hit = per_x
            .iter()
            .filter_map(|(h, _)| h[t].as_ref())
            .min_by_key(|h| h.at);
        if let Some(h) = best_hit {
            let at = h.at;
            out.push(Search::Found(SolverResult {
                x: grid[at.x],
                dv: dvs[at.dv],
                cd: h.cd.clone(),
                metrics: CausalMetrics::from_parts(n, h.det, h.deg),
                iterations: before[at.dv] + at.x as u64 * counts[at.dv] + at.cd as u64 + 1,
            }));
            continue;
        }
        let mut best: Option<&Near> = None;
        for (_, near) in &per_x {
            if let Some(c) = near[t].as_ref() {
                if best.is_none_or(|b| better_near(c, b)) {
                    best = Some(c);
                }
            }
        }
        out.push(Search::NotFound {
            closest: best.map(|b| ClosestMiss {
                x: grid[b.at.x],
                dv: dvs[b.at.dv],
                cd: b.cd.clone(),
                ei: b.ei,
                gap: b.gap,
            }),
            iterations: total,
        });
    }
    Ok(out)
}

/// Single-target search with explicit options.
pub fn solve(n: u32, ei_target: f64, opts: &SolverOptions) -> Result<Search> {
    Ok(solve_many(n, &[ei_target], opts)?
        .pop()
        .expect("one target"))
}

fn solve_with(n: u32, ei_target: f64, tolerance: f64, method: Method) -> Result<SolverResult> {
    let opts = SolverOptions {
        tolerance,
        method,
        deg_vectors: None,
    };
    solve(n, ei_target, &opts)?.into_result()
}

/// First candidate whose matrix-derived EI is within `tolerance` of the target.
pub fn tpm_solver(n_test: u32, ei_target: f64, tolerance: f64) -> Result<SolverResult> {
    solve_with(n_test, ei_target, tolerance, Method::Tpm)
}

/// As [`tpm_solver`], with determinism taken from the closed form in `x`.
pub fn cqe_solver(n_test: u32, ei_target: f64, tolerance: f64) -> Result<SolverResult> {
    solve_with(n_test, ei_target, tolerance, Method::Cqe)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorMatch {
    pub dv: DegVector,
    pub cd: CdArray,
    pub degeneracy: f64,
}

/// First deg vector (and CD) whose TPM at `x` has the target degeneracy.
pub fn vector_generator(
    n_test: u32,
    degeneracy_target: f64,
    x: f64,
    tolerance: f64,
) -> Result<VectorMatch> {
    check_variable_count(n_test)?;
    check_x(x)?;
    if !(0.0..=1.0).contains(&degeneracy_target) {
        return Err(CeError::OutOfDomain {
            name: "degeneracy",
            value: degeneracy_target,
            range: "[0, 1]",
        });
    }
    let kernel = Kernel::new(
        n_test,
        x,
        KernelNeeds {
            blocks: true,
            row_kl: false,
        },
    )?;
    let mut scratch = Vec::new();
    for dv in enumerate_deg_vectors(n_test) {
        for cd in expand_cd(n_test, dv)? {
            let deg = kernel.degeneracy(cd.parts(), &mut scratch);
            if (deg - degeneracy_target).abs() < tolerance {
                return Ok(VectorMatch {
                    dv,
                    cd,
                    degeneracy: deg,
                });
            }
        }
    }
    Err(CeError::NotFound)
}
