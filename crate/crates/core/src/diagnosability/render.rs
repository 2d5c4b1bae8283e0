//! Text output of diagnosability matrices.
//!
//! Entries print as `𝐓` (every valid mode), `𝐅` (no mode), a macro name or
//! its negation `¬name`, or otherwise as a sum of products over the mode
//! variables, with invalid modes used as don't-cares.

use std::collections::{BTreeMap, BTreeSet};

use crate::boolfn::{BoolFn, Formula, Manager};

use super::{Column, DiagnosabilityMatrix};

/// Named mode sets used when printing entries. Names containing `{k}` are
/// templates expanded for every instance index found among the manager's
/// variables; each expanded template also yields `<name>_all`, the
/// conjunction of its instances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroTable {
    pub definitions: BTreeMap<String, String>,
}

impl MacroTable {
    /// The bypass macros of the battery models.
    pub fn battery() -> Self {
        let mut definitions = BTreeMap::new();
        definitions.insert("bypass".to_string(), "!forward & !backward".to_string());
        definitions.insert("bypass_{k}".to_string(), "!c[{k}].forward & !c[{k}].backward".to_string());
        MacroTable { definitions }
    }

    pub fn with(mut self, extra: &BTreeMap<String, String>) -> Self {
        self.definitions.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        self
    }

    /// Expands templates and keeps the macros whose variables all exist in
    /// `mgr`, in a fixed order: plain macros, then instances by index, then
    /// the `_all` conjunctions.
    pub fn expand(&self, mgr: &mut Manager) -> Result<Vec<(String, BoolFn)>, String> {
        let names: Vec<String> = mgr.variables().map(|v| mgr.var_name(v).to_string()).collect();
        let mut indices = BTreeSet::new();
        for n in &names {
            let mut rest = n.as_str();
            while let Some(open) = rest.find('[') {
                let Some(close) = rest[open..].find(']') else { break };
                if let Ok(k) = rest[open + 1..open + close].parse::<i64>() {
                    indices.insert(k);
                }
                rest = &rest[open + close..];
            }
        }
        let known = |f: &Formula| f.variables().iter().all(|v| names.contains(v));
        let mut out = Vec::new();
        let mut all = Vec::new();
        for (name, body) in &self.definitions {
            if name.contains("{k}") {
                let mut parts = Vec::new();
                for k in &indices {
                    let f: Formula = body.replace("{k}", &k.to_string()).parse()?;
                    if known(&f) {
                        let fun = f.build(mgr).map_err(|e| e.to_string())?;
                        out.push((name.replace("{k}", &k.to_string()), fun));
                        parts.push(fun);
                    }
                }
                if !parts.is_empty() {
                    let conj = mgr.and_all(parts);
                    all.push((name.replace("{k}", "all").replace("_all_all", "_all"), conj));
                }
            } else {
                let f: Formula = body.parse()?;
                if known(&f) {
                    out.push((name.clone(), f.build(mgr).map_err(|e| e.to_string())?));
                }
            }
        }
        out.extend(all);
        Ok(out)
    }
}

pub struct Renderer {
    macros: Vec<(String, BoolFn)>,
}

impl Renderer {
    pub fn new(mgr: &mut Manager, table: &MacroTable) -> Result<Self, String> {
        Ok(Renderer {
            macros: table.expand(mgr)?,
        })
    }

    /// Text of one entry; `invariant` is the set of valid modes.
    pub fn entry(&self, mgr: &mut Manager, invariant: BoolFn, f: BoolFn) -> String {
        let f = mgr.and(f, invariant);
        if mgr.is_false(f) {
            return "𝐅".to_string();
        }
        if f == invariant {
            return "𝐓".to_string();
        }
        for (name, m) in &self.macros {
            let pos = mgr.and(*m, invariant);
            if pos == f {
                return name.clone();
            }
            let neg = mgr.diff(invariant, *m);
            if neg == f {
                return format!("¬{name}");
            }
        }
        let upper = mgr.implies(invariant, f);
        let cubes = mgr.isop(f, upper);
        cubes
            .iter()
            .map(|cube| {
                cube.iter()
                    .map(|&(v, pos)| {
                        let n = mgr.var_name(v);
                        if pos {
                            n.to_string()
                        } else {
                            format!("¬{n}")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ∧ ")
            })
            .collect::<Vec<_>>()
            .join(" ∨ ")
    }

    fn cells(&self, mgr: &mut Manager, m: &DiagnosabilityMatrix) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once(String::new())
            .chain(std::iter::once("NF".to_string()))
            .chain(m.faults.iter().cloned())
            .collect::<Vec<_>>()];
        for (i, f) in m.faults.iter().enumerate() {
            let mut row = vec![f.clone()];
            for col in m.columns() {
                row.push(self.entry(mgr, m.invariant, m.get(i, col)));
            }
            rows.push(row);
        }
        rows
    }

    /// Aligned UTF-8 grid, header row first.
    pub fn table(&self, mgr: &mut Manager, m: &DiagnosabilityMatrix) -> String {
        let rows = self.cells(mgr, m);
        let ncol = rows[0].len();
        let width: Vec<usize> = (0..ncol)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (r, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| format!("{s}{}", " ".repeat(width[c] - s.chars().count())))
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if r == 0 {
                let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }

    /// One `fault,column,entry` line per entry, after a header.
    pub fn csv(&self, mgr: &mut Manager, m: &DiagnosabilityMatrix) -> String {
        let mut out = String::from("fault,column,entry\n");
        for (i, f) in m.faults.iter().enumerate() {
            for col in m.columns() {
                let name = match col {
                    Column::NoFault => "NF",
                    Column::Fault(j) => &m.faults[j],
                };
                let text = self.entry(mgr, m.invariant, m.get(i, col));
                out.push_str(&format!("\"{f}\",\"{name}\",\"{text}\"\n"));
            }
        }
        out
    }

    /// JSON matrix document with a `rendered` copy of every entry added.
    pub fn json(&self, mgr: &mut Manager, m: &DiagnosabilityMatrix) -> serde_json::Value {
        let mut doc = m.to_json(mgr);
        let mut rendered = serde_json::Map::new();
        for (i, f) in m.faults.iter().enumerate() {
            let mut row = serde_json::Map::new();
            for col in m.columns() {
                let name = match col {
                    Column::NoFault => "NF".to_string(),
                    Column::Fault(j) => m.faults[j].clone(),
                };
                row.insert(name, self.entry(mgr, m.invariant, m.get(i, col)).into());
            }
            rendered.insert(f.clone(), row.into());
        }
        doc["rendered"] = rendered.into();
        doc
    }
}
