//! TPM file formats.
//!
//! JSON is `{"n": 2, "rows": [[...], ...]}`. CSV is `N` lines of `N`
//! comma-separated probabilities with no header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coarse::CoarseMapping;
use crate::error::{CeError, Result};
use crate::tpm::Tpm;

#[derive(Serialize, Deserialize)]
struct TpmJson {
    n: u32,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpmFormat {
    Json,
    Csv,
}

impl TpmFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TpmFormat::Csv,
            _ => TpmFormat::Json,
        }
    }
}

pub fn tpm_from_json(text: &str) -> Result<Tpm> {
    let parsed: TpmJson = serde_json::from_str(text).map_err(|e| CeError::Parse(e.to_string()))?;
    let tpm = Tpm::from_rows(&parsed.rows)?;
    if tpm.n() != parsed.n {
        return Err(CeError::Shape {
            rows: parsed.rows.len(),
            expected: 1usize << parsed.n.min(31),
        });
    }
    Ok(tpm)
}

pub fn tpm_to_json(tpm: &Tpm) -> String {
    let doc = TpmJson {
        n: tpm.n(),
        rows: tpm.to_rows(),
    };
    serde_json::to_string(&doc).expect("finite floats serialize")
}

pub fn tpm_from_csv(text: &str) -> Result<Tpm> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CeError::Parse(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| CeError::Parse(format!("row {i}: cannot parse {field:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Tpm::from_rows(&rows)
}

pub fn tpm_to_csv(tpm: &Tpm) -> String {
    let mut out = String::new();
    for row in tpm.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_tpm(path: &Path) -> Result<Tpm> {
    let text =
        fs::read_to_string(path).map_err(|e| CeError::Io(format!("{}: {e}", path.display())))?;
    match TpmFormat::from_path(path) {
        TpmFormat::Json => tpm_from_json(&text),
        TpmFormat::Csv => tpm_from_csv(&text),
    }
}

pub fn write_tpm(path: &Path, tpm: &Tpm, format: TpmFormat) -> Result<()> {
    let text = match format {
        TpmFormat::Json => tpm_to_json(tpm),
        TpmFormat::Csv => tpm_to_csv(tpm),
    };
    fs::write(path, text).map_err(|e| CeError::Io(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MappingJson {
    Bare(Vec<usize>),
    Full {
        micro_states: Option<usize>,
        macro_states: Option<usize>,
        map: Vec<usize>,
    },
}

/// Accepts `[0, 0, 0, 1]` or `{"macro_states": 2, "map": [...]}`.
pub fn mapping_from_json(text: &str) -> Result<CoarseMapping> {
    let parsed: MappingJson =
        serde_json::from_str(text).map_err(|e| CeError::Parse(e.to_string()))?;
    match parsed {
        MappingJson::Bare(map) => CoarseMapping::from_map(map),
        MappingJson::Full {
            micro_states,
            macro_states,
            map,
        } => {
            let micro = micro_states.unwrap_or(map.len());
            let macro_ = macro_states.unwrap_or_else(|| map.iter().max().map_or(0, |m| m + 1));
            CoarseMapping::new(micro, macro_, map)
        }
    }
}

pub fn read_mapping(path: &Path) -> Result<CoarseMapping> {
    let text =
        fs::read_to_string(path).map_err(|e| CeError::Io(format!("{}: {e}", path.display())))?;
    mapping_from_json(&text)
}
