//! `ce-quant` command line.
//!
//! Exit codes: 0 success, 1 bad input, 2 search found nothing.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::coarse::{apply_mapping, best_macro, CoarseMapping, LogicAggregation};
use crate::cqe::uncertainty;
use crate::dataset::{generate_dataset, write_csv, Format};
use crate::error::{CeError, Result};
use crate::io::{read_mapping, read_tpm, tpm_to_csv, tpm_to_json};
use crate::solvers::{
    solve, vector_generator, Method, Search, SolverOptions, SolverResult, DEFAULT_TOLERANCE,
};
use crate::synth::{expand_cd, generate, DegVector};
use crate::thresholds::{
    absolute_threshold, degeneracy_boundary, equivalent_threshold_with_degeneracy, sweep,
    SweepSpec, Table,
};
use crate::tpm::{effective_information, CausalMetrics, Tpm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_FOUND: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "ce-quant",
    version,
    about = "Numerical conditions for causal emergence"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t)]
    pub format: OutputFormat,
    /// Decimal places for printed numbers.
    #[arg(long, global = true, default_value_t = 6)]
    pub precision: usize,
    /// Worker threads for parallel searches.
    #[arg(long, global = true, env = "CE_QUANT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic TPM for (x, deg vector).
    GenTpm(GenTpmArgs),
    /// Determinism, degeneracy and EI of a TPM file.
    Ei {
        #[arg(long)]
        tpm: PathBuf,
    },
    /// Closed-form vs matrix determinism along the x grid.
    DetCurve {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find (x, deg vector, CD) reaching a target EI.
    Solve(SolveArgs),
    /// Find the first deg vector reaching a target degeneracy at fixed x.
    VectorGen {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        deg: f64,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Absolute threshold, equivalent threshold or degeneracy boundary.
    Threshold {
        #[command(subcommand)]
        kind: ThresholdKind,
    },
    /// Data series behind a threshold figure, as CSV.
    Sweep {
        #[arg(long)]
        figure: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the figure's default point count.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Coarse-grain a TPM by a mapping file or gate expression.
    Coarsen {
        #[arg(long)]
        tpm: PathBuf,
        /// Mapping JSON file, or an expression like `M1=AND(m0,m1);M2=OR(m2)`.
        #[arg(long)]
        map: String,
        /// Write the macro TPM here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search for the highest-EI macro model.
    SearchMacro {
        #[arg(long)]
        tpm: PathBuf,
        #[arg(long)]
        n_macro: u32,
        /// Lift the size guard.
        #[arg(long)]
        allow_large: bool,
    },
    /// Write training CSVs, one per feature format.
    Dataset(DatasetArgs),
}

#[derive(Debug, Args)]
pub struct GenTpmArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    x: f64,
    /// `FD,SUMCD`.
    #[arg(long, default_value = "1,1")]
    deg: DegVector,
    /// One file per CD partition, written into `--out` (a directory).
    #[arg(long)]
    all: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    ei: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t)]
    method: Method,
    /// Restrict to these deg vectors, e.g. `--deg 1,1`.
    #[arg(long)]
    deg: Vec<DegVector>,
}

#[derive(Debug, Subcommand)]
pub enum ThresholdKind {
    /// Micro uncertainty at which micro EI falls to the macro maximum.
    At {
        #[arg(long)]
        micro: u32,
        #[arg(long = "macro")]
        macro_: u32,
        #[arg(long, default_value_t = 0.0)]
        deg: f64,
    },
    /// Macro uncertainty at which a symmetric macro model matches `--ei`.
    Et {
        #[arg(long)]
        ei: f64,
        #[arg(long = "macro")]
        macro_: u32,
        #[arg(long, default_value_t = 0.0)]
        deg: f64,
    },
    /// Micro degeneracy past which no uncertainty is needed.
    Db {
        #[arg(long)]
        micro: u32,
        #[arg(long = "macro")]
        macro_: u32,
    },
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Variable counts, e.g. `--n 2 --n 3`.
    #[arg(long, required = true)]
    n: Vec<u32>,
    #[arg(long, default_value_t = 1)]
    samples_per_dv: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Feature formats to write; all six by default.
    #[arg(long, value_enum)]
    features: Vec<Format>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

struct Printer {
    format: OutputFormat,
    precision: usize,
}

impl Printer {
    fn round(&self, v: f64) -> f64 {
        let scale = 10f64.powi(self.precision as i32);
        (v * scale).round() / scale + 0.0
    }

    fn num(&self, v: f64) -> String {
        format!("{:.*}", self.precision, v + 0.0)
    }

    fn value(&self, v: f64) -> Value {
        json!(self.round(v))
    }

    /// Prints ordered key/value pairs as text lines, one JSON object, or a
    /// one-row CSV.
    fn record(&self, out: &mut dyn Write, fields: &[(&str, Field)]) -> Result<()> {
        match self.format {
            OutputFormat::Text => {
                let width = fields.iter().map(|f| f.0.len()).max().unwrap_or(0);
                for (k, v) in fields {
                    writeln!(out, "{k:<width$}  {}", v.text(self))?;
                }
            }
            OutputFormat::Json => {
                let mut m = Map::new();
                for (k, v) in fields {
                    m.insert((*k).to_string(), v.json(self));
                }
                writeln!(out, "{}", Value::Object(m))?;
            }
            OutputFormat::Csv => {
                let keys: Vec<&str> = fields.iter().map(|f| f.0).collect();
                let vals: Vec<String> = fields.iter().map(|f| f.1.text(self)).collect();
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&keys)
                    .map_err(|e| CeError::Io(e.to_string()))?;
                w.write_record(&vals)
                    .map_err(|e| CeError::Io(e.to_string()))?;
                let bytes = w.into_inner().map_err(|e| CeError::Io(e.to_string()))?;
                out.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    fn table(&self, out: &mut dyn Write, table: &Table) -> Result<()> {
        out.write_all(table.to_csv(self.precision).as_bytes())?;
        Ok(())
    }
}

enum Field {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
    Json(Value),
}

impl Field {
    fn text(&self, p: &Printer) -> String {
        match self {
            Field::Num(v) => p.num(*v),
            Field::Int(v) => v.to_string(),
            Field::Bool(v) => v.to_string(),
            Field::Str(s) => s.clone(),
            Field::Json(v) => v.to_string(),
        }
    }

    fn json(&self, p: &Printer) -> Value {
        match self {
            Field::Num(v) => p.value(*v),
            Field::Int(v) => json!(v),
            Field::Bool(v) => json!(v),
            Field::Str(s) => json!(s),
            Field::Json(v) => v.clone(),
        }
    }
}

fn metric_fields(m: &CausalMetrics) -> Vec<(&'static str, Field)> {
    vec![
        ("ei", Field::Num(m.ei)),
        ("determinism", Field::Num(m.determinism)),
        ("degeneracy", Field::Num(m.degeneracy)),
        ("effectiveness", Field::Num(m.eff)),
    ]
}

fn write_or_print(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CeError::Io(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn tpm_text(tpm: &Tpm, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => tpm_to_csv(tpm),
        _ => tpm_to_json(tpm) + "\n",
    }
}

fn parse_mapping(spec: &str, micro: &Tpm) -> Result<(CoarseMapping, Option<LogicAggregation>)> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok((read_mapping(path)?, None));
    }
    let agg: LogicAggregation = spec.parse()?;
    Ok((agg.mapping(micro.n())?, Some(agg)))
}

fn solver_fields(r: &SolverResult) -> Vec<(&'static str, Field)> {
    vec![
        ("x", Field::Num(r.x)),
        (
            "uncertainty_bits",
            Field::Num(uncertainty(r.x).unwrap_or(f64::NAN)),
        ),
        ("fd", Field::Int(r.dv.fd as u64)),
        ("cd_sum", Field::Int(r.dv.cd_sum as u64)),
        ("cd", Field::Json(json!(r.cd.parts()))),
        ("determinism", Field::Num(r.metrics.determinism)),
        ("degeneracy", Field::Num(r.metrics.degeneracy)),
        ("ei", Field::Num(r.metrics.ei)),
        ("iterations", Field::Int(r.iterations)),
    ]
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let p = Printer {
        format: cli.format,
        precision: cli.precision,
    };
    match &cli.command {
        Command::GenTpm(a) => {
            a.deg.validate(a.n)?;
            if a.all {
                let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("."));
                fs::create_dir_all(&dir)?;
                let ext = if p.format == OutputFormat::Csv {
                    "csv"
                } else {
                    "json"
                };
                let tpms = generate(a.n, a.x, a.deg)?;
                for (cd, tpm) in expand_cd(a.n, a.deg)?.zip(&tpms) {
                    let name = format!(
                        "tpm_n{}_x{}_fd{}_cd{}.{ext}",
                        a.n,
                        a.x,
                        a.deg.fd,
                        cd.label()
                    );
                    let path = dir.join(name);
                    write_or_print(out, Some(&path), &tpm_text(tpm, p.format))?;
                    writeln!(out, "{}", path.display())?;
                }
            } else {
                let tpm = &generate(a.n, a.x, a.deg)?[0];
                write_or_print(out, a.out.as_deref(), &tpm_text(tpm, p.format))?;
            }
        }
        Command::Ei { tpm } => {
            let t = read_tpm(tpm)?;
            let mut fields = vec![("n", Field::Int(u64::from(t.n())))];
            fields.extend(metric_fields(&t.metrics()));
            p.record(out, &fields)?;
        }
        Command::DetCurve {
            n,
            points,
            out: path,
        } => {
            let mut spec = SweepSpec::new(9);
            spec.n = *n;
            spec.points = *points;
            let table = sweep(&spec)?;
            let text = table.to_csv(p.precision);
            write_or_print(out, path.as_deref(), &text)?;
        }
        Command::Solve(a) => {
            let opts = SolverOptions {
                tolerance: a.tolerance,
                method: a.method,
                deg_vectors: (!a.deg.is_empty()).then(|| a.deg.clone()),
            };
            match solve(a.n, a.ei, &opts)? {
                Search::Found(r) => p.record(out, &solver_fields(&r))?,
                Search::NotFound {
                    closest,
                    iterations,
                } => {
                    writeln!(err, "no candidate within {} of EI {}", a.tolerance, a.ei)?;
                    let mut fields = vec![("found", Field::Bool(false))];
                    if let Some(c) = closest {
                        fields.extend([
                            ("x", Field::Num(c.x)),
                            ("fd", Field::Int(c.dv.fd as u64)),
                            ("cd_sum", Field::Int(c.dv.cd_sum as u64)),
                            ("cd", Field::Json(json!(c.cd.parts()))),
                            ("ei", Field::Num(c.ei)),
                            ("gap", Field::Num(c.gap)),
                        ]);
                    }
                    fields.push(("iterations", Field::Int(iterations)));
                    p.record(out, &fields)?;
                    return Ok(EXIT_NOT_FOUND);
                }
            }
        }
        Command::VectorGen {
            n,
            deg,
            x,
            tolerance,
        } => match vector_generator(*n, *deg, *x, *tolerance) {
            Ok(m) => p.record(
                out,
                &[
                    ("fd", Field::Int(m.dv.fd as u64)),
                    ("cd_sum", Field::Int(m.dv.cd_sum as u64)),
                    ("cd", Field::Json(json!(m.cd.parts()))),
                    ("degeneracy", Field::Num(m.degeneracy)),
                ],
            )?,
            Err(CeError::NotFound) => {
                writeln!(
                    err,
                    "no deg vector within {tolerance} of degeneracy {deg} at x = {x}"
                )?;
                return Ok(EXIT_NOT_FOUND);
            }
            Err(e) => return Err(e),
        },
        Command::Threshold { kind } => {
            let (name, v) = match kind {
                ThresholdKind::At { micro, macro_, deg } => {
                    ("at_bits", absolute_threshold(*micro, *macro_, *deg)?)
                }
                ThresholdKind::Et { ei, macro_, deg } => (
                    "et_bits",
                    equivalent_threshold_with_degeneracy(*ei, *macro_, *deg)?,
                ),
                ThresholdKind::Db { micro, macro_ } => {
                    ("db", degeneracy_boundary(*micro, *macro_)?)
                }
            };
            if p.format == OutputFormat::Text {
                writeln!(out, "{}", p.num(v))?;
            } else {
                p.record(out, &[(name, Field::Num(v))])?;
            }
        }
        Command::Sweep {
            figure,
            out: path,
            points,
        } => {
            let mut spec = SweepSpec::new(*figure);
            if let Some(k) = points {
                spec.points = *k;
            }
            let table = sweep(&spec)?;
            match path {
                Some(_) => write_or_print(out, path.as_deref(), &table.to_csv(p.precision))?,
                None => p.table(out, &table)?,
            }
        }
        Command::Coarsen {
            tpm,
            map,
            out: path,
        } => {
            let micro = read_tpm(tpm)?;
            let (cm, agg) = parse_mapping(map, &micro)?;
            let macro_ = apply_mapping(&micro, &cm)?;
            let micro_ei = effective_information(&micro);
            let m = macro_.metrics();
            if let Some(path) = path {
                write_or_print(out, Some(path), &tpm_text(&macro_, p.format))?;
            }
            let mut fields = vec![
                ("mapping", Field::Json(json!(cm.map()))),
                ("macro_n", Field::Int(u64::from(macro_.n()))),
                ("micro_ei", Field::Num(micro_ei)),
            ];
            if let Some(agg) = agg {
                fields.insert(0, ("expression", Field::Str(agg.to_string())));
            }
            fields.extend(metric_fields(&m));
            fields.push(("delta_ei", Field::Num(m.ei - micro_ei)));
            fields.push(("emerges", Field::Bool(m.ei - micro_ei > 0.0)));
            fields.push(("rows", Field::Json(json!(macro_.to_rows()))));
            p.record(out, &fields)?;
        }
        Command::SearchMacro {
            tpm,
            n_macro,
            allow_large,
        } => {
            let micro = read_tpm(tpm)?;
            let r = best_macro(&micro, *n_macro, *allow_large)?;
            p.record(
                out,
                &[
                    ("mapping", Field::Json(json!(r.mapping.map()))),
                    ("macro_ei", Field::Num(r.macro_tpm_ei)),
                    ("micro_ei", Field::Num(r.micro_ei)),
                    ("delta_ei", Field::Num(r.delta_ei())),
                    ("emerges", Field::Bool(r.emerges())),
                    (
                        "mappings_scored",
                        Field::Int(u64::try_from(r.mappings_scored).unwrap_or(u64::MAX)),
                    ),
                ],
            )?;
        }
        Command::Dataset(a) => {
            let formats = if a.features.is_empty() {
                Format::ALL.to_vec()
            } else {
                a.features.clone()
            };
            fs::create_dir_all(&a.out_dir)?;
            for &n in &a.n {
                let recs = generate_dataset(n, a.samples_per_dv, a.seed)?;
                for &fmt in &formats {
                    let path = a.out_dir.join(format!("dataset_n{n}_{fmt}.csv"));
                    let mut buf = Vec::new();
                    write_csv(&mut buf, &recs, n, fmt, a.seed)?;
                    fs::write(&path, buf)
                        .map_err(|e| CeError::Io(format!("{}: {e}", path.display())))?;
                    writeln!(out, "{} ({} records)", path.display(), recs.len())?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
