//! JSON network and scenario files.
//!
//! A network file lists variables in order. Each carries its parents by name,
//! one rate matrix per parent instantiation and its initial CPT. Instantiations
//! are enumerated in mixed-radix order over the parents as listed, the first
//! parent most significant; `index` states the position and `context` spells
//! the instantiation out. Both are optional on input and checked when present.
//!
//! ```json
//! {
//!   "format": "ctbn/1",
//!   "variables": [
//!     {
//!       "name": "Hungry",
//!       "values": ["no", "yes"],
//!       "parents": [],
//!       "dynamics": [{"index": 0, "rates": [[-1.0, 1.0], [2.0, -2.0]]}],
//!       "initial": {"parents": [], "rows": [{"index": 0, "probs": [0.5, 0.5]}]}
//!     }
//!   ]
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exact::{Evidence, Observation, QuerySpec};
use crate::experiment::{parse_recalc, Grid};
use crate::indexer::{StateIndexer, VarId};
use crate::linalg::{from_rows, rows_of};
use crate::marginalize::MarginalizationMethod;
use crate::markov::validate_intensity;
use crate::model::{Ctbn, CtbnBuilder};

pub const NETWORK_FORMAT: &str = "ctbn/1";
pub const SCENARIO_FORMAT: &str = "ctbn-scenario/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    variables: Vec<VariableDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDoc {
    name: String,
    values: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
    dynamics: Vec<ComponentDoc>,
    initial: InitialDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<String>,
    rates: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    #[serde(default)]
    parents: Vec<String>,
    rows: Vec<RowDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<String>,
    probs: Vec<f64>,
}

fn check_format(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!("unsupported format '{found}', expected '{expected}'")));
    }
    Ok(())
}

/// `A=a1, B=b0` for the instantiation at `index` of `parents` (first most significant).
fn context_label(parents: &[(&str, &[String])], index: usize) -> String {
    let mut digits = vec![0; parents.len()];
    let mut rest = index;
    for (k, (_, values)) in parents.iter().enumerate().rev() {
        digits[k] = rest % values.len();
        rest /= values.len();
    }
    parents
        .iter()
        .zip(digits)
        .map(|((name, values), d)| format!("{name}={}", values[d]))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_key(
    what: &str,
    k: usize,
    index: Option<usize>,
    context: Option<&str>,
    parents: &[(&str, &[String])],
) -> Result<()> {
    if let Some(i) = index {
        if i != k {
            return Err(Error::Parse(format!("{what}[{k}] is labelled with index {i}")));
        }
    }
    if let Some(c) = context {
        let expected = context_label(parents, k);
        if c != expected {
            return Err(Error::Parse(format!("{what}[{k}] is labelled '{c}' but stands for '{expected}'")));
        }
    }
    Ok(())
}

fn resolve_parents<'d>(doc: &'d NetworkDoc, names: &[String], field: &str) -> Result<(Vec<VarId>, Vec<(&'d str, &'d [String])>)> {
    let mut ids = Vec::with_capacity(names.len());
    let mut labels = Vec::with_capacity(names.len());
    for name in names {
        let i = doc
            .variables
            .iter()
            .position(|v| &v.name == name)
            .ok_or_else(|| Error::Parse(format!("{field} names unknown variable '{name}'")))?;
        ids.push(VarId(i));
        labels.push((doc.variables[i].name.as_str(), doc.variables[i].values.as_slice()));
    }
    Ok((ids, labels))
}

fn build_network(doc: &NetworkDoc) -> Result<Ctbn> {
    check_format(&doc.format, NETWORK_FORMAT)?;
    let mut builder = CtbnBuilder::new();
    for v in &doc.variables {
        let values: Vec<&str> = v.values.iter().map(String::as_str).collect();
        builder.variable(&v.name, &values);
    }
    for (i, v) in doc.variables.iter().enumerate() {
        let at = |e: Error| e.context(format!("variable '{}' (variables[{i}])", v.name));
        let subject = StateIndexer::single(VarId(i), v.values.len().max(1)).map_err(at)?;
        let (parents, labels) = resolve_parents(doc, &v.parents, "parents").map_err(at)?;
        let mut components = Vec::with_capacity(v.dynamics.len());
        for (k, c) in v.dynamics.iter().enumerate() {
            let in_component = |e: Error| at(e.context(format!("dynamics[{k}]")));
            check_key("dynamics", k, c.index, c.context.as_deref(), &labels).map_err(at)?;
            let m = from_rows(&c.rates).map_err(in_component)?;
            validate_intensity(&m, &subject).map_err(in_component)?;
            components.push(m);
        }
        builder.dynamics(VarId(i), &parents, components);
        let (init_parents, init_labels) = resolve_parents(doc, &v.initial.parents, "initial.parents").map_err(at)?;
        let mut rows = Vec::with_capacity(v.initial.rows.len());
        for (k, r) in v.initial.rows.iter().enumerate() {
            check_key("initial.rows", k, r.index, r.context.as_deref(), &init_labels).map_err(at)?;
            rows.push(r.probs.clone());
        }
        builder.initial(VarId(i), &init_parents, rows);
    }
    builder.build()
}

/// Parses and validates a network from JSON text.
pub fn parse_network(text: &str) -> Result<Ctbn> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build_network(&doc)
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Ctbn> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    parse_network(&text).map_err(|e| e.context(path.display().to_string()))
}

fn network_doc(model: &Ctbn) -> NetworkDoc {
    let vars = model.variables();
    let labels = |indexer: &StateIndexer| -> Vec<(&str, &[String])> {
        indexer.vars().iter().map(|p| (vars[p.0].name.as_str(), vars[p.0].values.as_slice())).collect()
    };
    let keyed = |labels: &[(&str, &[String])], k: usize| {
        (Some(k), if labels.is_empty() { None } else { Some(context_label(labels, k)) })
    };
    let variables = model
        .var_ids()
        .map(|x| {
            let cim = model.cim(x);
            let dyn_labels = labels(cim.conditioning());
            let dynamics = cim
                .components()
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    let (index, context) = keyed(&dyn_labels, k);
                    ComponentDoc { index, context, rates: rows_of(q.entries()) }
                })
                .collect();
            let init = model.initial();
            let init_labels = labels(init.parents(x));
            let rows = init
                .cpt(x)
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    let (index, context) = keyed(&init_labels, k);
                    RowDoc { index, context, probs: row.as_slice().to_vec() }
                })
                .collect();
            VariableDoc {
                name: vars[x.0].name.clone(),
                values: vars[x.0].values.clone(),
                parents: dyn_labels.iter().map(|(n, _)| n.to_string()).collect(),
                dynamics,
                initial: InitialDoc { parents: init_labels.iter().map(|(n, _)| n.to_string()).collect(), rows },
            }
        })
        .collect();
    NetworkDoc { format: NETWORK_FORMAT.to_string(), description: None, variables }
}

/// The canonical text of a network: parents in declaration order, keys in a
/// fixed order, numbers in shortest round-trip form, rows on one line each.
pub fn to_canonical_json(model: &Ctbn) -> String {
    let value = serde_json::to_value(network_doc(model)).expect("network documents always serialize");
    let mut out = String::new();
    write_value(&value, 0, &mut out);
    out.push('\n');
    out
}

/// Canonical text of already-parsed JSON network text.
pub fn canonicalize(text: &str) -> Result<String> {
    Ok(to_canonical_json(&parse_network(text)?))
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| " ".repeat(n);
    match v {
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, val)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(val, indent + 2, out);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                out.push_str(&item.to_string());
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                write_value(item, indent + 2, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    format: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    initial: Vec<AssignmentDoc>,
    #[serde(default)]
    evidence: Vec<ObservationDoc>,
    #[serde(default)]
    queries: Vec<QueryDoc>,
    #[serde(default)]
    config: ConfigDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    variable: String,
    value: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationDoc {
    time: f64,
    variable: String,
    value: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryDoc {
    time: f64,
    variables: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    method: Option<MarginalizationMethod>,
    tstar: Option<f64>,
    recalc: Option<Value>,
    grid: Option<String>,
}

/// Settings a scenario may carry; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioSettings {
    pub method: Option<MarginalizationMethod>,
    pub tstar: Option<f64>,
    /// `Some(None)` asks explicitly for no recalculation.
    pub recalc: Option<Option<f64>>,
    pub grid: Option<Grid>,
}

/// A scenario with every name resolved against one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub description: Option<String>,
    pub initial: Vec<(VarId, usize)>,
    pub evidence: Evidence,
    pub queries: Vec<QuerySpec>,
    pub settings: ScenarioSettings,
}

impl Scenario {
    pub fn empty() -> Self {
        Self {
            description: None,
            initial: Vec::new(),
            evidence: Evidence::empty(),
            queries: Vec::new(),
            settings: ScenarioSettings::default(),
        }
    }

    /// The network with this scenario's initial assignment imposed.
    pub fn apply_initial(&self, model: &Ctbn) -> Result<Ctbn> {
        if self.initial.is_empty() {
            return Ok(model.clone());
        }
        model.with_initial_overrides(&self.initial)
    }
}

fn resolve(model: &Ctbn, var: &str, value: &str) -> Result<(VarId, usize)> {
    let x = model.var_by_name(var)?;
    Ok((x, model.value_index(x, value)?))
}

pub fn parse_scenario(model: &Ctbn, text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    check_format(&doc.format, SCENARIO_FORMAT)?;
    let initial = doc
        .initial
        .iter()
        .enumerate()
        .map(|(k, a)| resolve(model, &a.variable, &a.value).map_err(|e| e.context(format!("initial[{k}]"))))
        .collect::<Result<Vec<_>>>()?;
    let observations = doc
        .evidence
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let (var, value) = resolve(model, &o.variable, &o.value).map_err(|e| e.context(format!("evidence[{k}]")))?;
            Ok(Observation { time: o.time, var, value })
        })
        .collect::<Result<Vec<_>>>()?;
    let evidence = Evidence::new(model, observations)?;
    let mut queries = Vec::with_capacity(doc.queries.len());
    for (k, q) in doc.queries.iter().enumerate() {
        if !(q.time >= 0.0 && q.time.is_finite()) {
            return Err(Error::InvalidConfig(format!("queries[{k}] has invalid time {}", q.time)));
        }
        let targets = q
            .variables
            .iter()
            .map(|n| model.var_by_name(n))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.context(format!("queries[{k}]")))?;
        queries.push(QuerySpec { time: q.time, targets, given: Vec::new() });
    }
    let recalc = match &doc.config.recalc {
        None => None,
        Some(Value::Null) => Some(None),
        Some(Value::Number(n)) => Some(parse_recalc(&n.to_string())?),
        Some(Value::String(s)) => Some(parse_recalc(s)?),
        Some(other) => return Err(Error::Parse(format!("config.recalc must be a number or string, got {other}"))),
    };
    let settings = ScenarioSettings {
        method: doc.config.method,
        tstar: doc.config.tstar,
        recalc,
        grid: doc.config.grid.as_deref().map(str::parse).transpose()?,
    };
    Ok(Scenario { description: doc.description, initial, evidence, queries, settings })
}

pub fn read_scenario(model: &Ctbn, path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    parse_scenario(model, &text).map_err(|e| e.context(path.display().to_string()))
}
