//! Coarse-graining micro models into macro models.
//!
//! A [`CoarseMapping`] assigns every micro state to a macro state. The macro
//! TPM treats an intervention on macro state `A` as a uniform intervention
//! over the micro states in `A`, so its row `A` is the average of those micro
//! rows with columns summed per macro state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CeError, Result};
use crate::synth::bit;
use crate::tpm::{effective_information, variables_for_states, Tpm};

/// Default brute-force limits for [`best_macro`].
pub const MAX_SEARCH_VARIABLES: u32 = 4;
pub const MAX_SEARCH_MAPPINGS: u128 = 5_000_000;

/// Surjective assignment of micro states to macro states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoarseMapping {
    micro_states: usize,
    macro_states: usize,
    map: Vec<usize>,
}

impl CoarseMapping {
    pub fn new(micro_states: usize, macro_states: usize, map: Vec<usize>) -> Result<Self> {
        if macro_states == 0 || macro_states >= micro_states {
            return Err(CeError::InvalidMapping(format!(
                "{macro_states} macro states is not a coarsening of {micro_states}"
            )));
        }
        if map.len() != micro_states {
            return Err(CeError::InvalidMapping(format!(
                "map has {} entries, expected {micro_states}",
                map.len()
            )));
        }
        let mut seen = vec![false; macro_states];
        for (s, &m) in map.iter().enumerate() {
            if m >= macro_states {
                return Err(CeError::InvalidMapping(format!(
                    "micro state {s} maps to {m}, beyond {macro_states} macro states"
                )));
            }
            seen[m] = true;
        }
        if let Some(missing) = seen.iter().position(|&v| !v) {
            return Err(CeError::InvalidMapping(format!(
                "macro state {missing} is never reached"
            )));
        }
        Ok(CoarseMapping {
            micro_states,
            macro_states,
            map,
        })
    }

    /// Infers the macro state count from the largest label.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let macro_states = map.iter().max().map_or(0, |m| m + 1);
        Self::new(map.len(), macro_states, map)
    }

    pub fn micro_states(&self) -> usize {
        self.micro_states
    }

    pub fn macro_states(&self) -> usize {
        self.macro_states
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// Same grouping with macro labels permuted by `sigma`.
    pub fn relabel(&self, sigma: &[usize]) -> Result<Self> {
        let map = self.map.iter().map(|&m| sigma[m]).collect();
        Self::new(self.micro_states, self.macro_states, map)
    }

    /// Micro states in each macro state.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.macro_states];
        for (s, &m) in self.map.iter().enumerate() {
            blocks[m].push(s);
        }
        blocks
    }
}

/// Macro TPM induced by `cm` on `micro`.
pub fn apply_mapping(micro: &Tpm, cm: &CoarseMapping) -> Result<Tpm> {
    if cm.micro_states != micro.states() {
        return Err(CeError::InvalidMapping(format!(
            "mapping covers {} micro states, TPM has {}",
            cm.micro_states,
            micro.states()
        )));
    }
    let n_macro = variables_for_states(cm.macro_states)?;
    let k = cm.macro_states;
    let mut data = vec![0.0; k * k];
    for (a, block) in cm.blocks().iter().enumerate() {
        let out = &mut data[a * k..(a + 1) * k];
        for &s in block {
            for (j, &p) in micro.row(s).iter().enumerate() {
                out[cm.map[j]] += p;
            }
        }
        let inv = 1.0 / block.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
    Tpm::from_flat(n_macro, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    And,
    Or,
}

impl Gate {
    fn eval(self, bits: impl Iterator<Item = bool>) -> bool {
        let mut bits = bits;
        match self {
            Gate::And => bits.all(|b| b),
            Gate::Or => bits.any(|b| b),
        }
    }
}

/// One macro variable: a gate over a group of micro variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateGroup {
    pub name: String,
    pub gate: Gate,
    /// Micro variable indices, 0 = most significant.
    pub vars: Vec<usize>,
}

/// Groups of micro variables merged by logic gates, in macro-variable order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicAggregation {
    pub groups: Vec<GateGroup>,
}

impl LogicAggregation {
    /// Checks that the groups partition the `n_micro` variables and merge at
    /// least two of them.
    pub fn validate(&self, n_micro: u32) -> Result<()> {
        let n = n_micro as usize;
        let mut used = vec![false; n];
        for g in &self.groups {
            if g.vars.is_empty() {
                return Err(CeError::InvalidAggregation(format!(
                    "{} has no inputs",
                    g.name
                )));
            }
            for &v in &g.vars {
                if v >= n {
                    return Err(CeError::InvalidAggregation(format!(
                        "{} references m{v} but the model has {n} variables",
                        g.name
                    )));
                }
                if used[v] {
                    return Err(CeError::InvalidAggregation(format!(
                        "m{v} appears in more than one group"
                    )));
                }
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|&u| !u) {
            return Err(CeError::InvalidAggregation(format!(
                "m{v} is not in any group"
            )));
        }
        if !self.groups.iter().any(|g| g.vars.len() >= 2) {
            return Err(CeError::InvalidAggregation(
                "no group merges two or more variables".into(),
            ));
        }
        Ok(())
    }

    /// State mapping induced by evaluating every gate on each micro state.
    pub fn mapping(&self, n_micro: u32) -> Result<CoarseMapping> {
        self.validate(n_micro)?;
        let k = self.groups.len();
        let map = (0..1usize << n_micro)
            .map(|s| {
                self.groups.iter().enumerate().fold(0usize, |acc, (gi, g)| {
                    let on = g.gate.eval(g.vars.iter().map(|&v| bit(n_micro, s, v)));
                    acc | (usize::from(on) << (k - 1 - gi))
                })
            })
            .collect();
        CoarseMapping::new(1 << n_micro, 1 << k, map)
    }
}

impl FromStr for LogicAggregation {
    type Err = CeError;

    /// Parses `M1=AND(m0,m1);M2=OR(m2)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| CeError::InvalidAggregation(msg);
        let mut groups = Vec::new();
        for clause in s.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (name, rhs) = clause
                .split_once('=')
                .ok_or_else(|| bad(format!("expected NAME=GATE(...), got {clause:?}")))?;
            let rhs = rhs.trim();
            let open = rhs
                .find('(')
                .ok_or_else(|| bad(format!("missing '(' in {clause:?}")))?;
            let body = rhs[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| bad(format!("missing ')' in {clause:?}")))?;
            let gate = match rhs[..open].trim().to_ascii_uppercase().as_str() {
                "AND" => Gate::And,
                "OR" => Gate::Or,
                other => return Err(bad(format!("unknown gate {other:?}"))),
            };
            let vars = body
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    v.trim_start_matches(|c: char| c.is_ascii_alphabetic())
                        .parse::<usize>()
                        .map_err(|_| bad(format!("bad variable {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            groups.push(GateGroup {
                name: name.trim().to_string(),
                gate,
                vars,
            });
        }
        if groups.is_empty() {
            return Err(bad("empty expression".into()));
        }
        Ok(LogicAggregation { groups })
    }
}

impl fmt::Display for LogicAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            let gate = match g.gate {
                Gate::And => "AND",
                Gate::Or => "OR",
            };
            let vars: Vec<String> = g.vars.iter().map(|v| format!("m{v}")).collect();
            write!(f, "{}={}({})", g.name, gate, vars.join(","))?;
        }
        Ok(())
    }
}

pub fn logic_aggregate(micro: &Tpm, agg: &LogicAggregation) -> Result<(CoarseMapping, Tpm)> {
    let cm = agg.mapping(micro.n())?;
    let macro_ = apply_mapping(micro, &cm)?;
    Ok((cm, macro_))
}

/// Surjective mappings of `micro_states` onto exactly `macro_states` labels,
/// one per set partition, as restricted-growth strings in lexicographic order.
#[derive(Debug, Clone)]
pub struct Mappings {
    micro_states: usize,
    macro_states: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for Mappings {
    type Item = CoarseMapping;

    fn next(&mut self) -> Option<CoarseMapping> {
        let current = self.next.take()?;
        self.next = rgs_successor(&current, self.macro_states);
        Some(CoarseMapping {
            micro_states: self.micro_states,
            macro_states: self.macro_states,
            map: current,
        })
    }
}

fn rgs_successor(a: &[usize], k: usize) -> Option<Vec<usize>> {
    let n = a.len();
    // prefix_max[i] = max(a[0..i])
    let mut prefix_max = vec![0usize; n];
    for i in 1..n {
        prefix_max[i] = prefix_max[i - 1].max(a[i - 1]);
    }
    for i in (1..n).rev() {
        let bumped = a[i] + 1;
        if bumped > prefix_max[i] + 1 || bumped >= k {
            continue;
        }
        let top = prefix_max[i].max(bumped);
        let missing = k - 1 - top;
        let tail = n - 1 - i;
        if tail < missing {
            continue;
        }
        let mut next = a[..i].to_vec();
        next.push(bumped);
        next.extend(std::iter::repeat_n(0, tail - missing));
        next.extend(top + 1..k);
        return Some(next);
    }
    None
}

pub fn enumerate_mappings(micro_states: usize, macro_states: usize) -> Result<Mappings> {
    if macro_states == 0 || macro_states >= micro_states {
        return Err(CeError::InvalidMapping(format!(
            "{macro_states} macro states is not a coarsening of {micro_states}"
        )));
    }
    let mut first = vec![0; micro_states - macro_states + 1];
    first.extend(1..macro_states);
    Ok(Mappings {
        micro_states,
        macro_states,
        next: Some(first),
    })
}

/// Stirling number of the second kind, saturating at `u128::MAX`.
pub fn stirling2(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = (j as u128)
                .saturating_mul(row[j])
                .saturating_add(row[j - 1]);
        }
        row[0] = 0;
    }
    row[k]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroSearch {
    pub mapping: CoarseMapping,
    pub macro_tpm_ei: f64,
    pub micro_ei: f64,
    pub mappings_scored: u128,
}

impl MacroSearch {
    pub fn delta_ei(&self) -> f64 {
        self.macro_tpm_ei - self.micro_ei
    }

    pub fn emerges(&self) -> bool {
        self.delta_ei() > 0.0
    }
}

/// Mapping onto `n_macro` variables with the highest macro EI.
///
/// Ties go to the earliest mapping in enumeration order. Refuses micro models
/// above [`MAX_SEARCH_VARIABLES`] or searches above [`MAX_SEARCH_MAPPINGS`]
/// unless `allow_large` is set.
pub fn best_macro(micro: &Tpm, n_macro: u32, allow_large: bool) -> Result<MacroSearch> {
    if n_macro == 0 || n_macro >= micro.n() {
        return Err(CeError::NotCoarser {
            micro_n: micro.n(),
            macro_n: n_macro,
        });
    }
    let k = 1usize << n_macro;
    let count = stirling2(micro.states(), k);
    if !allow_large && (micro.n() > MAX_SEARCH_VARIABLES || count > MAX_SEARCH_MAPPINGS) {
        return Err(CeError::TooLarge {
            n: micro.n(),
            mappings: count,
        });
    }
    let mut best: Option<(CoarseMapping, f64)> = None;
    for cm in enumerate_mappings(micro.states(), k)? {
        let ei = effective_information(&apply_mapping(micro, &cm)?);
        if best.as_ref().is_none_or(|(_, b)| ei > b + 1e-12) {
            best = Some((cm, ei));
        }
    }
    let (mapping, macro_tpm_ei) = best.expect("at least one mapping");
    Ok(MacroSearch {
        mapping,
        macro_tpm_ei,
        micro_ei: effective_information(micro),
        mappings_scored: count,
    })
}
