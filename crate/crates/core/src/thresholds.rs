//! Uncertainty and degeneracy thresholds for causal emergence.
//!
//! With a symmetric macro model on `n_M` variables as the counterpart:
//!
//! * the absolute threshold (AT) is the micro uncertainty at which the
//!   micro EI drops to `n_M`, the most any such macro model can carry;
//! * the equivalent threshold (ET) is the macro uncertainty at which the
//!   macro EI equals a given micro EI;
//! * the degeneracy boundary (DB) is the micro degeneracy beyond which a
//!   deterministic micro model already loses to a deterministic macro one.
//!
//! Coarse-graining pays off when the uncertainty it removes exceeds AT − ET.

use serde::Serialize;

use crate::cqe::{closed_determinism, solve_x_for_determinism, uncertainty};
use crate::error::{CeError, Result};
use crate::synth::{Kernel, KernelNeeds};

fn check_pair(n_micro: u32, n_macro: u32) -> Result<()> {
    if n_macro == 0 || n_macro >= n_micro {
        return Err(CeError::NotCoarser {
            micro_n: n_micro,
            macro_n: n_macro,
        });
    }
    Ok(())
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(CeError::OutOfDomain {
            name,
            value: v,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// `−log2 x` for the `x` whose closed-form determinism equals `det`.
fn uncertainty_for_determinism(det: f64) -> Result<f64> {
    uncertainty(solve_x_for_determinism(det)?)
}

/// Micro uncertainty (bits) at which the micro EI equals `n_macro`.
///
/// Zero once `deg_micro` reaches the degeneracy boundary.
pub fn absolute_threshold(n_micro: u32, n_macro: u32, deg_micro: f64) -> Result<f64> {
    check_pair(n_micro, n_macro)?;
    check_unit("deg_micro", deg_micro)?;
    let target = f64::from(n_macro) / f64::from(n_micro) + deg_micro;
    if target >= 1.0 {
        return Ok(0.0);
    }
    uncertainty_for_determinism(target)
}

/// Macro uncertainty (bits) at which a symmetric macro model matches
/// `ei_micro`.
pub fn equivalent_threshold(ei_micro: f64, n_macro: u32) -> Result<f64> {
    equivalent_threshold_with_degeneracy(ei_micro, n_macro, 0.0)
}

/// As [`equivalent_threshold`] for a macro model with degeneracy `deg_macro`.
pub fn equivalent_threshold_with_degeneracy(
    ei_micro: f64,
    n_macro: u32,
    deg_macro: f64,
) -> Result<f64> {
    if n_macro == 0 {
        return Err(CeError::OutOfDomain {
            name: "n_macro",
            value: 0.0,
            range: "n_macro >= 1",
        });
    }
    check_unit("deg_macro", deg_macro)?;
    if !(ei_micro >= 0.0) || ei_micro > f64::from(n_macro) {
        return Err(CeError::OutOfDomain {
            name: "ei_micro",
            value: ei_micro,
            range: "[0, n_macro]",
        });
    }
    let target = ei_micro / f64::from(n_macro) + deg_macro;
    if target > 1.0 {
        return Err(CeError::OutOfDomain {
            name: "ei_micro / n_macro + deg_macro",
            value: target,
            range: "[0, 1]",
        });
    }
    uncertainty_for_determinism(target)
}

/// `1 − n_macro / n_micro`.
pub fn degeneracy_boundary(n_micro: u32, n_macro: u32) -> Result<f64> {
    check_pair(n_micro, n_macro)?;
    Ok(1.0 - f64::from(n_macro) / f64::from(n_micro))
}

/// Whether removing `delta_uncertainty` bits is enough for emergence.
pub fn ce_condition(delta_uncertainty: f64, at: f64, et: f64) -> bool {
    delta_uncertainty > at - et
}

/// Micro EI of a model with closed-form determinism at uncertainty `u` bits.
pub fn micro_ei(n_micro: u32, uncertainty_bits: f64, deg_micro: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&uncertainty_bits) {
        return Err(CeError::OutOfDomain {
            name: "uncertainty",
            value: uncertainty_bits,
            range: "[0, 1]",
        });
    }
    let x = (-uncertainty_bits).exp2();
    Ok(f64::from(n_micro) * (closed_determinism(x)? - deg_micro))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub n_micro: u32,
    pub n_macro: u32,
    pub deg_micro: f64,
    pub at_bits: f64,
    pub et_bits: f64,
    pub db: f64,
    pub ce_margin: f64,
}

impl ThresholdReport {
    /// Thresholds for a micro model at `micro_uncertainty` bits and
    /// degeneracy `deg_micro`, against a symmetric macro model.
    pub fn new(n_micro: u32, n_macro: u32, deg_micro: f64, micro_uncertainty: f64) -> Result<Self> {
        let at_bits = absolute_threshold(n_micro, n_macro, deg_micro)?;
        let ei = micro_ei(n_micro, micro_uncertainty, deg_micro)?;
        let et_bits = equivalent_threshold(ei.clamp(0.0, f64::from(n_macro)), n_macro)?;
        Ok(ThresholdReport {
            n_micro,
            n_macro,
            deg_micro,
            at_bits,
            et_bits,
            db: degeneracy_boundary(n_micro, n_macro)?,
            ce_margin: at_bits - et_bits,
        })
    }
}

/// One table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Empty,
}

/// Rectangular table with named columns, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Numeric column by name; `None` for empty cells.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[idx] {
                    Cell::Int(v) => Some(v as f64),
                    Cell::Num(v) => Some(v),
                    Cell::Empty => None,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Num(v) => format!("{v:.precision$}"),
                    Cell::Empty => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parameters for [`sweep`]; each figure reads only the fields it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub figure: u32,
    /// Variable count for the determinism curve.
    pub n: u32,
    pub n_micro: u32,
    pub n_macro: u32,
    pub points: usize,
    /// Micro uncertainties in bits for the ET series.
    pub uncertainties: Vec<f64>,
}

impl SweepSpec {
    pub fn new(figure: u32) -> Self {
        SweepSpec {
            figure,
            n: 4,
            n_micro: 3,
            n_macro: 2,
            points: if figure == 9 { 1001 } else { 101 },
            uncertainties: vec![0.12, 0.25, 0.42],
        }
    }
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let last = (points - 1) as f64;
    (0..points).map(|i| a + (b - a) * i as f64 / last).collect()
}

fn num_or_empty(r: Result<f64>) -> Cell {
    r.map(Cell::Num).unwrap_or(Cell::Empty)
}

/// Data series behind the threshold figures.
///
/// * 9: closed-form vs matrix determinism along `x ∈ [1, 0.5]`.
/// * 11: AT for micro `n = 3..=11` against a 2-variable macro.
/// * 12: AT for an 11-variable micro against macro `n = 2..=10`.
/// * 14: ET and AT for micro models at the given uncertainties.
/// * 15: deterministic micro EI vs degeneracy, with the boundary.
/// * 16: AT and per-uncertainty ET as micro degeneracy runs from 0 to DB.
pub fn sweep(spec: &SweepSpec) -> Result<Table> {
    if spec.points == 0 {
        return Err(CeError::OutOfDomain {
            name: "points",
            value: 0.0,
            range: "points >= 1",
        });
    }
    let (nm, nma) = (spec.n_micro, spec.n_macro);
    match spec.figure {
        9 => {
            let mut t = Table::new(&[
                "x",
                "uncertainty_bits",
                "closed_determinism",
                "matrix_determinism",
            ]);
            for x in linspace(1.0, 0.5, spec.points) {
                let k = Kernel::new(
                    spec.n,
                    x,
                    KernelNeeds {
                        blocks: false,
                        row_kl: true,
                    },
                )?;
                t.rows.push(vec![
                    Cell::Num(x),
                    Cell::Num(uncertainty(x)?),
                    Cell::Num(closed_determinism(x)?),
                    Cell::Num(k.matrix_determinism(&[1])),
                ]);
            }
            Ok(t)
        }
        11 | 12 => {
            let mut t = Table::new(&["n_micro", "n_macro", "at_bits"]);
            let pairs: Vec<(u32, u32)> = if spec.figure == 11 {
                (3..=11).map(|m| (m, 2)).collect()
            } else {
                (2..=10).map(|m| (11, m)).collect()
            };
            for (a, b) in pairs {
                t.rows.push(vec![
                    Cell::Int(a.into()),
                    Cell::Int(b.into()),
                    Cell::Num(absolute_threshold(a, b, 0.0)?),
                ]);
            }
            Ok(t)
        }
        14 => {
            let mut t = Table::new(&[
                "n_micro",
                "n_macro",
                "micro_uncertainty_bits",
                "ei_micro",
                "et_bits",
                "at_bits",
                "at_minus_et",
            ]);
            let at = absolute_threshold(nm, nma, 0.0)?;
            for &u in &spec.uncertainties {
                let ei = micro_ei(nm, u, 0.0)?;
                let et = equivalent_threshold(ei, nma);
                t.rows.push(vec![
                    Cell::Int(nm.into()),
                    Cell::Int(nma.into()),
                    Cell::Num(u),
                    Cell::Num(ei),
                    num_or_empty(et.clone()),
                    Cell::Num(at),
                    num_or_empty(et.map(|e| at - e)),
                ]);
            }
            Ok(t)
        }
        15 => {
            let db = degeneracy_boundary(nm, nma)?;
            let mut t = Table::new(&[
                "n_micro",
                "n_macro",
                "deg_micro",
                "ei_micro",
                "ei_macro_max",
                "db",
            ]);
            for deg in linspace(0.0, 1.0, spec.points) {
                t.rows.push(vec![
                    Cell::Int(nm.into()),
                    Cell::Int(nma.into()),
                    Cell::Num(deg),
                    Cell::Num(f64::from(nm) * (1.0 - deg)),
                    Cell::Num(f64::from(nma)),
                    Cell::Num(db),
                ]);
            }
            Ok(t)
        }
        16 => {
            let db = degeneracy_boundary(nm, nma)?;
            let mut cols = vec![
                "n_micro".to_string(),
                "n_macro".into(),
                "deg_micro".into(),
                "at_bits".into(),
            ];
            cols.extend(spec.uncertainties.iter().map(|u| format!("et_bits_u{u}")));
            let mut t = Table {
                columns: cols,
                rows: Vec::new(),
            };
            for deg in linspace(0.0, db, spec.points) {
                let deg = deg.min(db);
                let mut row = vec![
                    Cell::Int(nm.into()),
                    Cell::Int(nma.into()),
                    Cell::Num(deg),
                    Cell::Num(absolute_threshold(nm, nma, deg)?),
                ];
                for &u in &spec.uncertainties {
                    let ei = micro_ei(nm, u, deg)?;
                    row.push(num_or_empty(equivalent_threshold(ei, nma)));
                }
                t.rows.push(row);
            }
            Ok(t)
        }
        other => Err(CeError::UnknownFigure(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpm::{degeneracy, effective_information, Tpm};

    #[test]
    fn absolute_threshold_examples() {
        let at = absolute_threshold(3, 2, 0.0).unwrap();
        assert!((at - 0.0915).abs() < 5e-4);
        assert_eq!(absolute_threshold(3, 2, 1.0 / 3.0).unwrap(), 0.0);
        assert_eq!(absolute_threshold(3, 2, 0.5).unwrap(), 0.0);
        let x = solve_x_for_determinism(2.0 / 11.0).unwrap();
        assert_eq!(absolute_threshold(11, 2, 0.0).unwrap(), -x.log2());
        assert!(absolute_threshold(3, 3, 0.0).is_err());
        assert!(absolute_threshold(3, 2, -0.1).is_err());
    }

    #[test]
    fn equivalent_threshold_examples() {
        assert_eq!(equivalent_threshold(2.0, 2).unwrap(), 0.0);
        assert_eq!(equivalent_threshold(0.0, 2).unwrap(), 1.0);
        let ei = micro_ei(3, 0.25, 0.0).unwrap();
        let et = equivalent_threshold(ei, 2).unwrap();
        assert!(et < 0.25);
        assert!(equivalent_threshold(2.5, 2).is_err());
        assert!(equivalent_threshold(-0.5, 2).is_err());
    }

    #[test]
    fn degeneracy_boundary_examples() {
        assert!((degeneracy_boundary(3, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(degeneracy_boundary(4, 3).unwrap(), 0.25);
        assert_eq!(degeneracy_boundary(2, 1).unwrap(), 0.5);
        assert!(degeneracy_boundary(2, 2).is_err());
    }

    #[test]
    fn boundary_model_has_macro_ei() {
        // states collapse in pairs onto eight targets
        let targets: Vec<usize> = (0..16).map(|s| s & !1).collect();
        let t = Tpm::from_targets(&targets).unwrap();
        let deg = degeneracy(&t);
        // deterministic micro with degeneracy 0.25 carries exactly 3 bits
        assert!((deg - 0.25).abs() < 1e-12);
        assert!((effective_information(&t) - 3.0).abs() < 1e-12);
        assert_eq!(degeneracy_boundary(4, 3).unwrap(), deg);
    }

    #[test]
    fn ce_condition_examples() {
        assert!(ce_condition(0.2, 0.0915, 0.05));
        assert!(!ce_condition(0.0, 0.0915, 0.05));
        assert!(ce_condition(1e-9, 0.3, 0.3));
    }

    #[test]
    fn at_monotone_in_scales() {
        for nm in 3..=11 {
            for nma in 1..nm - 1 {
                let lo = absolute_threshold(nm, nma, 0.0).unwrap();
                let hi = absolute_threshold(nm, nma + 1, 0.0).unwrap();
                assert!(hi < lo, "nm={nm} nma={nma}");
            }
        }
        for nma in 1..=9 {
            for nm in nma + 1..11 {
                assert!(
                    absolute_threshold(nm + 1, nma, 0.0).unwrap()
                        > absolute_threshold(nm, nma, 0.0).unwrap()
                );
            }
        }
    }

    #[test]
    fn et_below_micro_uncertainty() {
        for nm in 2..=11u32 {
            for nma in 1..nm {
                for k in 1..=19 {
                    let u = 0.05 * f64::from(k);
                    let ei = micro_ei(nm, u, 0.0).unwrap();
                    if ei > f64::from(nma) {
                        continue;
                    }
                    assert!(
                        equivalent_threshold(ei, nma).unwrap() < u,
                        "nm={nm} nma={nma} u={u}"
                    );
                }
            }
        }
    }

    #[test]
    fn report_fields_agree() {
        let r = ThresholdReport::new(3, 2, 0.0, 0.25).unwrap();
        assert_eq!(r.ce_margin, r.at_bits - r.et_bits);
        assert!((r.db - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.at_bits >= 0.0 && r.et_bits >= 0.0);
    }

    #[test]
    fn sweep_shapes() {
        let t = sweep(&SweepSpec::new(11)).unwrap();
        assert_eq!(t.rows.len(), 9);
        let at = t.column("at_bits").unwrap();
        for (row, a) in (3..=11).zip(at) {
            assert_eq!(a.unwrap(), absolute_threshold(row, 2, 0.0).unwrap());
        }
        let t = sweep(&SweepSpec::new(12)).unwrap();
        assert_eq!(t.rows.len(), 9);
        let t = sweep(&SweepSpec::new(15)).unwrap();
        let db = t.column("db").unwrap();
        assert!((db[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let t = sweep(&SweepSpec::new(9)).unwrap();
        assert_eq!(t.rows.len(), 1001);
        for r in &t.rows {
            if let (Cell::Num(a), Cell::Num(b)) = (r[2], r[3]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert_eq!(sweep(&SweepSpec::new(10)), Err(CeError::UnknownFigure(10)));
    }

    #[test]
    fn fig16_series_directions() {
        let t = sweep(&SweepSpec::new(16)).unwrap();
        let at: Vec<f64> = t
            .column("at_bits")
            .unwrap()
            .into_iter()
            .map(Option::unwrap)
            .collect();
        assert!((at[0] - 0.0915).abs() < 5e-4);
        assert_eq!(*at.last().unwrap(), 0.0);
        assert!(at.windows(2).all(|w| w[1] <= w[0]));
        let et = t.column("et_bits_u0.25").unwrap();
        let present: Vec<f64> = et.into_iter().flatten().collect();
        assert!(present.len() > 1);
        assert!(present.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn csv_rendering() {
        let t = sweep(&SweepSpec::new(11)).unwrap();
        let csv = t.to_csv(4);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n_micro,n_macro,at_bits"));
        assert_eq!(lines.next(), Some("3,2,0.0916"));
    }
}
