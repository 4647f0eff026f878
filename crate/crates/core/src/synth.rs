//! Synthetic TPM generation.
//!
//! Asymmetry comes from a [`DegVector`]: `fd` degenerate future states that
//! absorb `cd_sum` redundant current states between them. Uncertainty comes
//! from a single probability `x`: every variable of the next state copies
//! the deterministic target bit with probability `x` and flips otherwise.
//!
//! The pipeline is [`asymmetric_tpm_set`] → [`states_to_vam`] →
//! [`vam_to_tpm`]; [`generate`] composes the three.

use serde::Serialize;

use crate::cqe::polynomial_count;
use crate::error::{CeError, Result};
use crate::tpm::{check_variable_count, kl_from_uniform, Tpm};

/// Asymmetry control pair `[FD, ΣCD]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DegVector {
    pub fd: usize,
    pub cd_sum: usize,
}

impl DegVector {
    /// `[1, 1]`: no redundant states, the identity skeleton.
    pub const SYMMETRIC: DegVector = DegVector { fd: 1, cd_sum: 1 };

    pub fn new(n: u32, fd: usize, cd_sum: usize) -> Result<Self> {
        let dv = DegVector { fd, cd_sum };
        dv.validate(n)?;
        Ok(dv)
    }

    pub fn validate(&self, n: u32) -> Result<()> {
        check_variable_count(n)?;
        let states = 1usize << n;
        let bad = |reason| {
            Err(CeError::InvalidDegVector {
                fd: self.fd,
                cd_sum: self.cd_sum,
                n,
                reason,
            })
        };
        if self.fd == 0 || self.cd_sum == 0 {
            return bad("both entries must be positive");
        }
        if self.fd > states / 2 {
            return bad("fd exceeds half the state count");
        }
        if self.cd_sum > states {
            return bad("cd_sum exceeds the state count");
        }
        if self.fd > 1 && self.cd_sum < 2 * self.fd {
            return bad("cd_sum must be at least 2*fd when fd > 1");
        }
        Ok(())
    }

    /// The first partition in canonical order, `[cd_sum - 2(fd-1), 2, …, 2]`.
    pub fn first_cd(&self) -> CdArray {
        let mut parts = vec![2; self.fd];
        parts[0] = self.cd_sum - 2 * (self.fd - 1);
        CdArray { parts }
    }
}

impl std::fmt::Display for DegVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.fd, self.cd_sum)
    }
}

impl std::str::FromStr for DegVector {
    type Err = CeError;

    /// Accepts `FD,SUMCD` with optional brackets.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let mut it = inner.split(',').map(str::trim);
        let parse = |t: Option<&str>| {
            t.and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| CeError::Parse(format!("expected FD,SUMCD, got {s:?}")))
        };
        let fd = parse(it.next())?;
        let cd_sum = parse(it.next())?;
        if it.next().is_some() {
            return Err(CeError::Parse(format!("expected FD,SUMCD, got {s:?}")));
        }
        Ok(DegVector { fd, cd_sum })
    }
}

/// Sizes of the redundant blocks, one per degenerate future state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct CdArray {
    parts: Vec<usize>,
}

impl CdArray {
    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn sum(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Target state of every current state under this block layout.
    ///
    /// Blocks are laid out consecutively from state 0 and each block's
    /// states all move to the block's first state; the rest are fixed.
    pub fn targets(&self, states: usize) -> Vec<usize> {
        let mut targets: Vec<usize> = (0..states).collect();
        let mut start = 0;
        for &p in &self.parts {
            targets[start..start + p].fill(start);
            start += p;
        }
        targets
    }

    /// Compact label used in file names, e.g. `6-2`.
    pub fn label(&self) -> String {
        let s: Vec<String> = self.parts.iter().map(usize::to_string).collect();
        s.join("-")
    }
}

/// Every nonincreasing array of length `fd` with entries in `0..=delta_max`.
///
/// Arrays are built nondecreasing by recursion and reversed on output, so
/// `gap(2, 1)` yields `[0,0], [1,0], [1,1]`.
pub fn gap(fd: usize, delta_max: usize) -> Vec<Vec<usize>> {
    fn helper(current: &mut Vec<usize>, remaining: usize, delta: usize, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            out.push(current.iter().rev().copied().collect());
            return;
        }
        let start = current.last().copied().unwrap_or(0);
        for i in start..=delta {
            current.push(i);
            helper(current, remaining - 1, delta, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    helper(&mut Vec::with_capacity(fd), fd, delta_max, &mut out);
    out
}

/// Lazy iterator over the CD partitions of a deg vector, in lexicographically
/// decreasing order.
#[derive(Debug, Clone)]
pub struct CdPartitions {
    next: Option<Vec<usize>>,
    min_part: usize,
}

impl Iterator for CdPartitions {
    type Item = CdArray;

    fn next(&mut self) -> Option<CdArray> {
        let current = self.next.take()?;
        self.next = successor(&current, self.min_part);
        Some(CdArray { parts: current })
    }
}

/// Lexicographic predecessor among nonincreasing arrays with the same length,
/// sum and minimum part.
fn successor(parts: &[usize], min_part: usize) -> Option<Vec<usize>> {
    let len = parts.len();
    let mut tail: usize = parts[len - 1];
    for i in (0..len.saturating_sub(1)).rev() {
        tail += parts[i];
        let cap = parts[i] - 1;
        let slots = len - 1 - i;
        let rest = tail - cap;
        if cap >= min_part && rest <= cap * slots {
            let mut next = parts[..i].to_vec();
            next.push(cap);
            let mut remaining = rest;
            for k in (0..slots).rev() {
                let take = cap.min(remaining - min_part * k);
                next.push(take);
                remaining -= take;
            }
            return Some(next);
        }
    }
    None
}

/// All nonincreasing partitions of `cd_sum` into `fd` parts, each at least 2
/// when `fd > 1`.
pub fn expand_cd(n: u32, dv: DegVector) -> Result<CdPartitions> {
    dv.validate(n)?;
    let min_part = if dv.fd > 1 { 2 } else { dv.cd_sum };
    Ok(CdPartitions {
        next: Some(dv.first_cd().parts),
        min_part,
    })
}

/// Number of CD partitions of `dv` without enumerating them.
pub fn cd_count(dv: DegVector) -> u64 {
    if dv.fd == 1 {
        return 1;
    }
    // partitions of cd_sum - 2fd into at most fd parts
    let total = dv.cd_sum - 2 * dv.fd;
    let mut table = vec![0u64; total + 1];
    table[0] = 1;
    for part in 1..=dv.fd {
        for s in part..=total {
            table[s] += table[s - part];
        }
    }
    table[total]
}

/// One deterministic TPM per CD partition of `dv`.
pub fn asymmetric_tpm_set(n: u32, dv: DegVector) -> Result<Vec<Tpm>> {
    let states = 1usize << n;
    expand_cd(n, dv)?
        .map(|cd| Tpm::from_targets(&cd.targets(states)))
        .collect()
}

/// Variable activation matrix: `entries[i][c] = P(v_i = 1 | do(S_t = c))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vam {
    n: u32,
    cols: usize,
    entries: Vec<f64>,
}

impl Vam {
    pub fn new(n: u32, entries: Vec<Vec<f64>>) -> Result<Self> {
        check_variable_count(n)?;
        let cols = 1usize << n;
        if entries.len() != n as usize {
            return Err(CeError::Shape {
                rows: entries.len(),
                expected: n as usize,
            });
        }
        let mut flat = Vec::with_capacity(n as usize * cols);
        for (row, r) in entries.iter().enumerate() {
            if r.len() != cols {
                return Err(CeError::RowLength {
                    row,
                    cols: r.len(),
                    expected: cols,
                });
            }
            for (col, &value) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(CeError::EntryOutOfRange { row, col, value });
                }
            }
            flat.extend_from_slice(r);
        }
        Ok(Vam {
            n,
            cols,
            entries: flat,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `P(v_i = 1)` given current state `c`.
    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.entries[i * self.cols + c]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

/// Value of variable `i` (0 = most significant) in state `s` of an
/// `n`-variable model.
#[inline]
pub fn bit(n: u32, s: usize, i: usize) -> bool {
    (s >> (n as usize - 1 - i)) & 1 == 1
}

pub(crate) fn check_x(x: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&x) {
        return Err(CeError::OutOfDomain {
            name: "x",
            value: x,
            range: "[0.5, 1]",
        });
    }
    Ok(())
}

/// Softens a deterministic TPM into a VAM: each target bit is kept with
/// probability `x`.
pub fn states_to_vam(tpm: &Tpm, x: f64) -> Result<Vam> {
    check_x(x)?;
    let targets = tpm.targets()?;
    let n = tpm.n();
    let cols = tpm.states();
    let mut entries = vec![0.0; n as usize * cols];
    for (c, &f) in targets.iter().enumerate() {
        for i in 0..n as usize {
            entries[i * cols + c] = if bit(n, f, i) { x } else { 1.0 - x };
        }
    }
    Ok(Vam { n, cols, entries })
}

/// Joint next-state distribution assuming variables are conditionally
/// independent given the current state.
pub fn vam_to_tpm(vam: &Vam) -> Tpm {
    let n = vam.n;
    let states = vam.cols;
    let mut data = vec![0.0; states * states];
    for c in 0..states {
        let row = &mut data[c * states..(c + 1) * states];
        for (f, slot) in row.iter_mut().enumerate() {
            let mut p = 1.0;
            for i in 0..n as usize {
                let on = vam.get(i, c);
                p *= if bit(n, f, i) { on } else { 1.0 - on };
            }
            *slot = p;
        }
    }
    Tpm::from_flat(n, data).expect("products of bit marginals form a stochastic matrix")
}

/// One stochastic TPM per CD partition of `dv`, with uncertainty set by `x`.
pub fn generate(n: u32, x: f64, dv: DegVector) -> Result<Vec<Tpm>> {
    check_x(x)?;
    asymmetric_tpm_set(n, dv)?
        .iter()
        .map(|t| Ok(vam_to_tpm(&states_to_vam(t, x)?)))
        .collect()
}

/// The symmetric generated TPM at a fixed `x`, with the sums needed to score
/// any block layout without building its matrix.
///
/// Row `f` is `x^(n-d)(1-x)^d` with `d` the Hamming distance to `f`. A
/// generated TPM for a block layout has row `c` equal to row `target(c)` of
/// this kernel, so its column average and row divergences follow from sums
/// over kernel rows.
#[derive(Debug, Clone)]
pub struct Kernel {
    n: u32,
    x: f64,
    states: usize,
    rows: Vec<f64>,
    colsum: Vec<f64>,
    /// `prefix[m]` = sum of rows `0..m`; empty unless requested.
    prefix: Vec<f64>,
    /// KL of each row from uniform; empty unless requested.
    row_kl: Vec<f64>,
    row_kl_prefix: Vec<f64>,
}

/// Which derived sums a [`Kernel`] should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelNeeds {
    /// Needed to score layouts with nontrivial blocks.
    pub blocks: bool,
    /// Needed for matrix-derived determinism.
    pub row_kl: bool,
}

impl Kernel {
    pub fn new(n: u32, x: f64, needs: KernelNeeds) -> Result<Self> {
        check_variable_count(n)?;
        check_x(x)?;
        let states = 1usize << n;
        let pow: Vec<f64> = (0..=n)
            .map(|d| x.powi((n - d) as i32) * (1.0 - x).powi(d as i32))
            .collect();
        let mut rows = Vec::new();
        let mut colsum;
        if needs.blocks || needs.row_kl {
            rows = vec![0.0; states * states];
            for (f, row) in rows.chunks_mut(states).enumerate() {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = pow[(f ^ j).count_ones() as usize];
                }
            }
            colsum = vec![0.0; states];
            for row in rows.chunks(states) {
                for (a, &p) in colsum.iter_mut().zip(row) {
                    *a += p;
                }
            }
        } else {
            // every column sees C(n, d) rows at distance d
            let total: f64 = (0..=n)
                .map(|d| {
                    polynomial_count(n, d).expect("n <= MAX_VARIABLES") as f64 * pow[d as usize]
                })
                .sum();
            colsum = vec![total; states];
        }
        let mut prefix = Vec::new();
        if needs.blocks {
            prefix = vec![0.0; (states + 1) * states];
            for m in 0..states {
                let (done, rest) = prefix.split_at_mut((m + 1) * states);
                let prev = &done[m * states..];
                let row = &rows[m * states..(m + 1) * states];
                for ((out, &a), &b) in rest[..states].iter_mut().zip(prev).zip(row) {
                    *out = a + b;
                }
            }
        }
        let mut row_kl = Vec::new();
        let mut row_kl_prefix = Vec::new();
        if needs.row_kl {
            row_kl = rows.chunks(states).map(kl_from_uniform).collect();
            row_kl_prefix = std::iter::once(0.0)
                .chain(row_kl.iter().scan(0.0, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                }))
                .collect();
        }
        Ok(Kernel {
            n,
            x,
            states,
            rows,
            colsum,
            prefix,
            row_kl,
            row_kl_prefix,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// Panics if the kernel was built with neither block nor row sums.
    pub fn row(&self, f: usize) -> &[f64] {
        assert!(!self.rows.is_empty(), "kernel built without rows");
        &self.rows[f * self.states..(f + 1) * self.states]
    }

    fn prefix_row(&self, m: usize) -> &[f64] {
        &self.prefix[m * self.states..(m + 1) * self.states]
    }

    /// Column-average distribution of the TPM generated for `parts`.
    pub fn effect_distribution(&self, parts: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.colsum);
        let mut start = 0;
        for &p in parts {
            if p > 1 {
                assert!(!self.prefix.is_empty(), "kernel built without block sums");
                let head = self.row(start);
                let lo = self.prefix_row(start);
                let hi = self.prefix_row(start + p);
                let scale = p as f64;
                for (k, o) in out.iter_mut().enumerate() {
                    *o += scale * head[k] - (hi[k] - lo[k]);
                }
            }
            start += p;
        }
        let inv = 1.0 / self.states as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    /// Degeneracy of the TPM generated for `parts`.
    pub fn degeneracy(&self, parts: &[usize], scratch: &mut Vec<f64>) -> f64 {
        self.effect_distribution(parts, scratch);
        kl_from_uniform(scratch) / f64::from(self.n)
    }

    /// Determinism of the TPM generated for `parts`, averaged from the
    /// divergences of its actual rows.
    pub fn matrix_determinism(&self, parts: &[usize]) -> f64 {
        assert!(
            !self.row_kl.is_empty(),
            "kernel built without row divergences"
        );
        let mut total = self.row_kl_prefix[self.states];
        let mut start = 0;
        for &p in parts {
            if p > 1 {
                let block = self.row_kl_prefix[start + p] - self.row_kl_prefix[start];
                total += p as f64 * self.row_kl[start] - block;
            }
            start += p;
        }
        total / self.states as f64 / f64::from(self.n)
    }
}
