//! Training corpus linking model metrics to the generator parameters that
//! produced them, plus the feature transforms and CSV files a regressor reads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqe::closed_determinism_unchecked;
use crate::error::{CeError, Result};
use crate::solvers::{enumerate_deg_vectors, x_grid};
use crate::synth::{DegVector, Kernel, KernelNeeds};

/// Features are clamped to this before a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
pub const TRAIN_COUNT: usize = 360;
pub const TEST_COUNT: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub n: u32,
    pub determinism: f64,
    pub degeneracy: f64,
    pub ei: f64,
    pub x: f64,
    pub fd: usize,
    pub cd_sum: usize,
}

/// `samples_per_dv` grid values of `x` for every deg vector of `n` variables.
///
/// Each deg vector draws its own `x` subsample from a ChaCha stream keyed by
/// `seed` and the vector's position, and uses its first CD partition. Records
/// come back by deg vector, then `x` descending.
pub fn generate_dataset(n: u32, samples_per_dv: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    if !(2..=crate::tpm::MAX_VARIABLES).contains(&n) {
        return Err(CeError::VariableCount {
            n,
            max: crate::tpm::MAX_VARIABLES,
        });
    }
    let grid = x_grid();
    let dvs = enumerate_deg_vectors(n);
    let take = samples_per_dv.min(grid.len());

    let picks: Vec<Vec<usize>> = (0..dvs.len())
        .into_par_iter()
        .map(|di| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(di as u64);
            let mut xs = index::sample(&mut rng, grid.len(), take).into_vec();
            xs.sort_unstable();
            xs
        })
        .collect();

    let mut by_x: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (di, xs) in picks.iter().enumerate() {
        for &xi in xs {
            by_x.entry(xi).or_default().push(di);
        }
    }
    let needs = KernelNeeds {
        blocks: dvs.iter().any(|d| *d != DegVector::SYMMETRIC),
        row_kl: false,
    };
    let nf = f64::from(n);
    let mut records: Vec<(usize, usize, DatasetRecord)> = by_x
        .into_par_iter()
        .flat_map_iter(|(xi, members)| {
            let x = grid[xi];
            let kernel = Kernel::new(n, x, needs).expect("grid points are in range");
            let det = closed_determinism_unchecked(x);
            let mut scratch = Vec::new();
            members
                .into_iter()
                .map(|di| {
                    let dv = dvs[di];
                    let deg = kernel.degeneracy(dv.first_cd().parts(), &mut scratch);
                    let rec = DatasetRecord {
                        n,
                        determinism: det,
                        degeneracy: deg,
                        ei: nf * (det - deg),
                        x,
                        fd: dv.fd,
                        cd_sum: dv.cd_sum,
                    };
                    (di, xi, rec)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    records.sort_unstable_by_key(|r| (r.0, r.1));
    Ok(records.into_iter().map(|r| r.2).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Format {
    #[value(name = "Orig")]
    Orig,
    #[value(name = "Exp")]
    Exp,
    #[value(name = "Log")]
    Log,
    #[value(name = "Neg_Orig")]
    NegOrig,
    #[value(name = "Neg_Exp")]
    NegExp,
    #[value(name = "Neg_Log")]
    NegLog,
}

impl Format {
    pub const ALL: [Format; 6] = [
        Format::Orig,
        Format::Exp,
        Format::Log,
        Format::NegOrig,
        Format::NegExp,
        Format::NegLog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Format::Orig => "Orig",
            Format::Exp => "Exp",
            Format::Log => "Log",
            Format::NegOrig => "Neg_Orig",
            Format::NegExp => "Neg_Exp",
            Format::NegLog => "Neg_Log",
        }
    }

    pub fn is_negated(self) -> bool {
        matches!(self, Format::NegOrig | Format::NegExp | Format::NegLog)
    }

    /// Transform a single feature value.
    pub fn apply(self, v: f64) -> f64 {
        let base = match self {
            Format::Orig | Format::NegOrig => v,
            Format::Exp | Format::NegExp => v.exp(),
            Format::Log | Format::NegLog => v.max(LOG_FLOOR).ln(),
        };
        if self.is_negated() {
            -base + 0.0
        } else {
            base
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = CeError;

    fn from_str(s: &str) -> Result<Self> {
        Format::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CeError::Parse(format!("unknown format {s:?}")))
    }
}

/// `(n, degeneracy, ei)` under `fmt`. Every feature is floored at
/// [`LOG_FLOOR`] before a logarithm, since `ei` can be 0 as well.
pub fn format_features(rec: &DatasetRecord, fmt: Format) -> [f64; 3] {
    [f64::from(rec.n), rec.degeneracy, rec.ei].map(|v| fmt.apply(v))
}

/// Seeded shuffle, then the first `train_count` and next `test_count`.
pub fn split<T: Clone>(
    records: &[T],
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let needed = train_count + test_count;
    if records.len() < needed {
        return Err(CeError::TooFewRecords {
            needed,
            have: records.len(),
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ids: &[usize]| ids.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..train_count]),
        pick(&order[train_count..needed]),
    ))
}

pub const CSV_COLUMNS: [&str; 7] = ["n", "degeneracy", "ei", "x", "fd", "cd_sum", "determinism"];

/// One row as written: transformed features, then the untouched target and
/// generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub features: [f64; 3],
    pub x: f64,
    pub fd: usize,
    pub cd_sum: usize,
    pub determinism: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub format: Format,
    pub n: u32,
    pub log_floor: f64,
    pub seed: u64,
    pub rows: Vec<CsvRow>,
}

pub fn write_csv<W: Write>(
    out: W,
    records: &[DatasetRecord],
    n: u32,
    fmt: Format,
    seed: u64,
) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "# format={fmt} n={n} log_floor={LOG_FLOOR:e} seed={seed}"
    )?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CeError::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for rec in records {
        let [a, b, c] = format_features(rec, fmt);
        w.write_record([
            a.to_string(),
            b.to_string(),
            c.to_string(),
            rec.x.to_string(),
            rec.fd.to_string(),
            rec.cd_sum.to_string(),
            rec.determinism.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<DatasetFile> {
    let mut input = input;
    let mut header = String::new();
    input.read_line(&mut header)?;
    let meta = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| CeError::Parse("missing '# format=...' header".into()))?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for kv in meta.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CeError::Parse(format!("bad header field {kv:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| CeError::Parse(format!("header lacks {k}")))
    };
    let num = |k: &str, v: &str| CeError::Parse(format!("bad {k} {v:?}"));
    let format: Format = get("format")?.parse()?;
    let n: u32 = get("n")?
        .parse()
        .map_err(|_| num("n", get("n").unwrap_or("")))?;
    let log_floor: f64 = get("log_floor")?
        .parse()
        .map_err(|_| num("log_floor", ""))?;
    let seed: u64 = get("seed")?.parse().map_err(|_| num("seed", ""))?;

    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let cols: Vec<String> = r
        .headers()
        .map_err(|e| CeError::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if cols != CSV_COLUMNS {
        return Err(CeError::Parse(format!("unexpected columns {cols:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CeError::Parse(e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| {
                CeError::Parse(format!("row {line}: bad {} {:?}", CSV_COLUMNS[i], &rec[i]))
            })
        };
        let u = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| {
                CeError::Parse(format!("row {line}: bad {} {:?}", CSV_COLUMNS[i], &rec[i]))
            })
        };
        rows.push(CsvRow {
            features: [f(0)?, f(1)?, f(2)?],
            x: f(3)?,
            fd: u(4)?,
            cd_sum: u(5)?,
            determinism: f(6)?,
        });
    }
    Ok(DatasetFile {
        format,
        n,
        log_floor,
        seed,
        rows,
    })
}
