//! Transition probability matrices and the effective-information metrics
//! computed from them.
//!
//! A [`Tpm`] over `n` binary variables has `N = 2^n` states. Row `i` is the
//! distribution of the next state under the intervention `do(S_t = i)`.
//! State indices put variable `v_0` in the most significant bit, so for
//! `n = 2` the states `0..4` read `00, 01, 10, 11`.
//!
//! Interventions are always drawn from the uniform distribution, which makes
//! the matrix alone determine every metric here.

use serde::{Deserialize, Serialize};

use crate::error::{CeError, Result};

/// Largest supported variable count (`N = 2048` states).
pub const MAX_VARIABLES: u32 = 11;

/// Row sums may deviate from 1 by at most this much.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A row-stochastic matrix over `2^n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct Tpm {
    n: u32,
    states: usize,
    data: Vec<f64>,
}

impl Tpm {
    /// Builds a matrix from row-major data, validating every invariant.
    ///
    /// Rows whose sum is within [`ROW_SUM_TOLERANCE`] of 1 are rescaled to
    /// sum to 1; anything further off is rejected. Entries may overshoot
    /// `[0, 1]` by the same tolerance and are clamped.
    pub fn from_flat(n: u32, mut data: Vec<f64>) -> Result<Self> {
        check_variable_count(n)?;
        let states = 1usize << n;
        if data.len() != states * states {
            return Err(CeError::Shape {
                rows: data.len() / states.max(1),
                expected: states,
            });
        }
        for (row, chunk) in data.chunks_mut(states).enumerate() {
            let mut sum = 0.0;
            for (col, value) in chunk.iter_mut().enumerate() {
                if !(-ROW_SUM_TOLERANCE..=1.0 + ROW_SUM_TOLERANCE).contains(value) {
                    return Err(CeError::EntryOutOfRange {
                        row,
                        col,
                        value: *value,
                    });
                }
                *value = value.clamp(0.0, 1.0);
                sum += *value;
            }
            let deviation = (sum - 1.0).abs();
            if deviation > ROW_SUM_TOLERANCE {
                return Err(CeError::RowSum { row, sum });
            }
            if deviation > 0.0 {
                chunk.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(Tpm { n, states, data })
    }

    /// Builds a matrix from nested rows; `n` is inferred from the row count.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = variables_for_states(rows.len())?;
        let states = rows.len();
        let mut data = Vec::with_capacity(states * states);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != states {
                return Err(CeError::RowLength {
                    row,
                    cols: r.len(),
                    expected: states,
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, data)
    }

    /// Deterministic matrix where state `i` moves to `targets[i]`.
    pub fn from_targets(targets: &[usize]) -> Result<Self> {
        let n = variables_for_states(targets.len())?;
        let states = targets.len();
        let mut data = vec![0.0; states * states];
        for (i, &t) in targets.iter().enumerate() {
            if t >= states {
                return Err(CeError::Shape {
                    rows: t + 1,
                    expected: states,
                });
            }
            data[i * states + t] = 1.0;
        }
        Ok(Tpm { n, states, data })
    }

    pub fn identity(n: u32) -> Result<Self> {
        check_variable_count(n)?;
        let targets: Vec<usize> = (0..1usize << n).collect();
        Self::from_targets(&targets)
    }

    /// Every row uniform: the fully stochastic model.
    pub fn uniform(n: u32) -> Result<Self> {
        check_variable_count(n)?;
        let states = 1usize << n;
        Ok(Tpm {
            n,
            states,
            data: vec![1.0 / states as f64; states * states],
        })
    }

    /// Number of binary variables.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of states, `2^n`.
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.states..(i + 1) * self.states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.states)
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.states + to]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// For a deterministic matrix, the target state of every row.
    pub fn targets(&self) -> Result<Vec<usize>> {
        self.rows()
            .enumerate()
            .map(|(i, row)| {
                let mut hit = None;
                for (j, &p) in row.iter().enumerate() {
                    if p == 1.0 && hit.is_none() {
                        hit = Some(j);
                    } else if p != 0.0 {
                        return Err(CeError::NotDeterministic(i));
                    }
                }
                hit.ok_or(CeError::NotDeterministic(i))
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.targets().is_ok()
    }

    /// Largest `|row sum - 1|` over all rows.
    pub fn max_row_deviation(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Column average of the rows: the effect distribution under uniform
    /// interventions.
    pub fn effect_distribution(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.states];
        for row in self.rows() {
            for (a, &p) in avg.iter_mut().zip(row) {
                *a += p;
            }
        }
        let scale = 1.0 / self.states as f64;
        avg.iter_mut().for_each(|a| *a *= scale);
        avg
    }

    pub fn metrics(&self) -> CausalMetrics {
        CausalMetrics::from_parts(self.n, determinism(self), degeneracy(self))
    }
}

pub(crate) fn check_variable_count(n: u32) -> Result<()> {
    if n == 0 || n > MAX_VARIABLES {
        return Err(CeError::VariableCount {
            n,
            max: MAX_VARIABLES,
        });
    }
    Ok(())
}

/// `log2(states)` when `states` is a supported power of two.
pub fn variables_for_states(states: usize) -> Result<u32> {
    if states < 2 || !states.is_power_of_two() {
        return Err(CeError::NotPowerOfTwo(states));
    }
    let n = states.trailing_zeros();
    check_variable_count(n)?;
    Ok(n)
}

/// Determinism, degeneracy and the effective information they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalMetrics {
    pub determinism: f64,
    pub degeneracy: f64,
    pub eff: f64,
    /// Bits.
    pub ei: f64,
}

impl CausalMetrics {
    pub fn from_parts(n: u32, determinism: f64, degeneracy: f64) -> Self {
        let eff = determinism - degeneracy;
        CausalMetrics {
            determinism,
            degeneracy,
            eff,
            ei: f64::from(n) * eff,
        }
    }
}

/// `Σ p_i log2(p_i / q_i)` in bits, with `0 · log2 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CeError::DimensionMismatch(p.len(), q.len()));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(CeError::UndefinedDivergence(i));
            }
            sum += pi * (pi / qi).log2();
        }
    }
    Ok(sum.max(0.0))
}

/// KL divergence of `p` from the uniform distribution over `p.len()` states.
pub fn kl_from_uniform(p: &[f64]) -> f64 {
    let states = p.len() as f64;
    let sum: f64 = p
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * (pi * states).log2())
        .sum();
    sum.max(0.0)
}

/// Mean row divergence from uniform, normalized by `log2 N`.
pub fn determinism(tpm: &Tpm) -> f64 {
    let total: f64 = tpm.rows().map(kl_from_uniform).sum();
    total / tpm.states() as f64 / f64::from(tpm.n())
}

/// Divergence of the column-average distribution from uniform, normalized by
/// `log2 N`.
pub fn degeneracy(tpm: &Tpm) -> f64 {
    kl_from_uniform(&tpm.effect_distribution()) / f64::from(tpm.n())
}

pub fn effectiveness(tpm: &Tpm) -> f64 {
    determinism(tpm) - degeneracy(tpm)
}

/// Effective information in bits: `n · (determinism − degeneracy)`.
pub fn effective_information(tpm: &Tpm) -> f64 {
    f64::from(tpm.n()) * effectiveness(tpm)
}

/// `EI(macro) − EI(micro)`; positive values signal causal emergence.
pub fn delta_ei(micro: &Tpm, macro_: &Tpm) -> Result<f64> {
    if macro_.n() >= micro.n() {
        return Err(CeError::NotCoarser {
            micro_n: micro.n(),
            macro_n: macro_.n(),
        });
    }
    Ok(effective_information(macro_) - effective_information(micro))
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORM4: [f64; 4] = [0.25; 4];

    fn fig2_micro() -> Tpm {
        let third = 1.0 / 3.0;
        Tpm::from_rows(&[
            vec![third, third, third, 0.0],
            vec![third, third, third, 0.0],
            vec![third, third, third, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&UNIFORM4, &UNIFORM4).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0, 0.0, 0.0], &UNIFORM4).unwrap() - 2.0).abs() < 1e-15);
        let third = 1.0 / 3.0;
        let v = kl_divergence(&[third, third, third, 0.0], &UNIFORM4).unwrap();
        assert!((v - (4.0f64 / 3.0).log2()).abs() < 1e-15);
        assert!((v - 0.415037).abs() < 1e-6);
    }

    #[test]
    fn kl_errors() {
        assert_eq!(
            kl_divergence(&[1.0], &UNIFORM4),
            Err(CeError::DimensionMismatch(1, 4))
        );
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(CeError::UndefinedDivergence(1))
        );
        // q may vanish where p does
        assert!((kl_divergence(&[1.0, 0.0], &[1.0, 0.0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn determinism_examples() {
        assert_eq!(determinism(&Tpm::identity(2).unwrap()), 1.0);
        assert_eq!(determinism(&Tpm::uniform(2).unwrap()), 0.0);
        let expected = (3.0 * (4.0f64 / 3.0).log2() + 2.0) / 8.0;
        assert!((determinism(&fig2_micro()) - expected).abs() < 1e-15);
        assert!((expected - 0.405639).abs() < 1e-6);
    }

    #[test]
    fn degeneracy_examples() {
        for n in 1..=6 {
            assert_eq!(degeneracy(&Tpm::identity(n).unwrap()), 0.0);
        }
        let sink = Tpm::from_targets(&[3, 3, 3, 3]).unwrap();
        assert!((degeneracy(&sink) - 1.0).abs() < 1e-15);
        let fig4 = Tpm::from_targets(&[1, 1, 1, 3]).unwrap();
        assert!((degeneracy(&fig4) - 0.75 * 3f64.log2() / 2.0).abs() < 1e-15);
        assert!((degeneracy(&fig4) - 0.594).abs() < 5e-4);
    }

    #[test]
    fn effectiveness_and_ei() {
        assert_eq!(effectiveness(&Tpm::identity(3).unwrap()), 1.0);
        assert_eq!(effectiveness(&Tpm::uniform(3).unwrap()), 0.0);
        assert!((effectiveness(&fig2_micro()) - 0.405639).abs() < 1e-6);
        assert!((effective_information(&fig2_micro()) - 0.81).abs() < 5e-3);
        let fig4 = Tpm::from_targets(&[1, 1, 1, 3]).unwrap();
        assert!((effective_information(&fig4) - 0.81).abs() < 5e-3);
        for n in 1..=MAX_VARIABLES.min(8) {
            assert_eq!(
                effective_information(&Tpm::identity(n).unwrap()),
                f64::from(n)
            );
        }
    }

    #[test]
    fn delta_ei_examples() {
        let macro_ = Tpm::identity(1).unwrap();
        let d = delta_ei(&fig2_micro(), &macro_).unwrap();
        assert!((d - 0.19).abs() < 5e-3);
        let d = delta_ei(&Tpm::identity(2).unwrap(), &macro_).unwrap();
        assert_eq!(d, -1.0);
        assert_eq!(
            delta_ei(&macro_, &macro_),
            Err(CeError::NotCoarser {
                micro_n: 1,
                macro_n: 1
            })
        );
    }

    #[test]
    fn construction_rejects_bad_rows() {
        let err = Tpm::from_rows(&[vec![0.5, 0.4], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, CeError::RowSum { row: 0, .. }));
        let err = Tpm::from_rows(&[vec![1.5, -0.5], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(
            err,
            CeError::EntryOutOfRange { row: 0, col: 0, .. }
        ));
        assert_eq!(
            Tpm::from_rows(&vec![vec![1.0, 0.0, 0.0]; 3]).unwrap_err(),
            CeError::NotPowerOfTwo(3)
        );
        let err = Tpm::from_rows(&[vec![1.0, 0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, CeError::RowLength { row: 1, .. }));
    }

    #[test]
    fn construction_renormalizes_tiny_drift() {
        let t = Tpm::from_rows(&[vec![0.5, 0.5 + 4e-13], vec![0.0, 1.0]]).unwrap();
        assert!(t.max_row_deviation() < 1e-15);
    }

    #[test]
    fn doubly_stochastic_has_zero_degeneracy() {
        let t = Tpm::from_rows(&[
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.0, 0.5],
        ])
        .unwrap();
        assert!(degeneracy(&t).abs() < 1e-15);
    }

    #[test]
    fn targets_of_deterministic_matrix() {
        let t = Tpm::from_targets(&[1, 1, 1, 3]).unwrap();
        assert_eq!(t.targets().unwrap(), vec![1, 1, 1, 3]);
        assert_eq!(fig2_micro().targets(), Err(CeError::NotDeterministic(0)));
    }
}
