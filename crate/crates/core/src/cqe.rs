//! Closed-form determinism of symmetric synthetic TPMs and the conditions'
//! quantification equation built on it.
//!
//! Every row of a generated TPM holds `C(n, i)` copies of `x^i (1-x)^(n-i)`,
//! so its divergence from uniform collapses to `n · (1 - H2(x))` and
//! determinism no longer depends on `n` or on the block layout.

use serde::Serialize;

use crate::error::{CeError, Result};
use crate::synth::check_x;

/// Bisection stops once the bracket on `x` is narrower than this.
pub const BISECTION_TOLERANCE: f64 = 1e-12;

/// Multiplicity of each monomial `x^i (1-x)^(n-i)` in one generated row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowPolynomialSpec {
    pub n: u32,
    /// `(i, multiplicity)` for `i = 0..=n`.
    pub terms: Vec<(u32, u64)>,
}

impl RowPolynomialSpec {
    /// `Σ multiplicity · x^i (1-x)^(n-i)`; 1 for every `x`.
    pub fn total_mass(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(i, m)| m as f64 * x.powi(i as i32) * (1.0 - x).powi((self.n - i) as i32))
            .sum()
    }
}

pub fn row_polynomial_set(n: u32) -> Result<RowPolynomialSpec> {
    if n == 0 {
        return Err(CeError::OutOfDomain {
            name: "n",
            value: 0.0,
            range: "n >= 1",
        });
    }
    let terms = (0..=n)
        .map(|i| polynomial_count(n, i).map(|m| (i, m)))
        .collect::<Result<_>>()?;
    Ok(RowPolynomialSpec { n, terms })
}

/// `Π_{k=1..min(i, n-i)} (n-k+1)/k`, i.e. `C(n, i)`, in exact integers.
pub fn polynomial_count(n: u32, i: u32) -> Result<u64> {
    if i > n {
        return Err(CeError::OutOfDomain {
            name: "i",
            value: f64::from(i),
            range: "0..=n",
        });
    }
    let k_max = i.min(n - i) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for k in 1..=k_max {
        // acc * (n-k+1) is divisible by k at every step
        acc = acc * (n - k + 1) / k;
    }
    u64::try_from(acc).map_err(|_| CeError::OutOfDomain {
        name: "n",
        value: n as f64,
        range: "binomial fits in 64 bits",
    })
}

/// `p · log2 p` with the continuous extension at 0.
fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// `1 + (1-x)log2(1-x) + x log2 x`: one minus the binary entropy of `x`.
pub fn closed_determinism(x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(closed_determinism_unchecked(x))
}

pub(crate) fn closed_determinism_unchecked(x: f64) -> f64 {
    (1.0 + plogp(1.0 - x) + plogp(x)).clamp(0.0, 1.0)
}

/// Divergence of one generated row from uniform, in bits.
pub fn row_kl(n: u32, x: f64) -> Result<f64> {
    Ok(f64::from(n) * closed_determinism(x)?)
}

/// `-log2 x` bits.
pub fn uncertainty(x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(CeError::OutOfDomain {
            name: "x",
            value: x,
            range: "(0, 1]",
        });
    }
    Ok(-x.log2() + 0.0)
}

/// `[closed_determinism(x) − deg] − ei/n`; zero when `(x, deg)` attains `ei`.
pub fn cqe_residual(x: f64, deg: f64, ei: f64, n: u32) -> Result<f64> {
    Ok(closed_determinism(x)? - deg - ei / f64::from(n))
}

/// The unique `x ∈ [0.5, 1]` with `closed_determinism(x) = target`.
pub fn solve_x_for_determinism(target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(CeError::OutOfDomain {
            name: "determinism",
            value: target,
            range: "[0, 1]",
        });
    }
    if target == 0.0 {
        return Ok(0.5);
    }
    if target == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if closed_determinism_unchecked(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
