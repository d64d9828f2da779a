//! Accuracy sweeps: KL divergence between the exact joint and the clique
//! tree's product-form joint over a time grid, for several marginalization
//! methods and recalculation intervals.

use std::collections::hash_map::{Entry, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::cliquetree::{ApproxConfig, CliqueTree};
use crate::error::{Error, Result};
use crate::exact::{Evidence, ExactEngine};
use crate::kl::kl_divergence;
use crate::linalg::{Matrix, ProbVector};
use crate::marginalize::MarginalizationMethod;
use crate::model::Ctbn;

/// Evenly spaced times `start, start+step, ..., stop` (stop included when it
/// lies on the grid).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { start: 0.1, stop: 6.0, step: 0.1 }
    }
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || start < 0.0 || step <= 0.0 || stop < start {
            return Err(Error::InvalidConfig(format!("bad time grid {start}:{stop}:{step}")));
        }
        Ok(Self { start, stop, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!("grid '{s}' is not start:stop:step")));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad number '{p}' in grid '{s}'")));
        Grid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Parses a recalculation interval; `inf`, `none` and `0` mean never.
pub fn parse_recalc(s: &str) -> Result<Option<f64>> {
    match s.trim() {
        "inf" | "none" | "never" => Ok(None),
        other => {
            let d: f64 = other.parse().map_err(|_| Error::InvalidConfig(format!("bad recalculation interval '{s}'")))?;
            if d.is_nan() || d < 0.0 {
                return Err(Error::InvalidConfig(format!("bad recalculation interval '{s}'")));
            }
            Ok(if d == 0.0 || d.is_infinite() { None } else { Some(d) })
        }
    }
}

pub fn format_recalc(d: Option<f64>) -> String {
    d.map_or_else(|| "inf".to_string(), |d| d.to_string())
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub methods: Vec<MarginalizationMethod>,
    pub tstar: f64,
    pub recalcs: Vec<Option<f64>>,
    pub grid: Grid,
    pub base: ApproxConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            methods: vec![MarginalizationMethod::Linear, MarginalizationMethod::Subsystem],
            tstar: 0.0,
            recalcs: vec![None, Some(1.0), Some(0.1)],
            grid: Grid::default(),
            base: ApproxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlRow {
    pub method: MarginalizationMethod,
    pub tstar: f64,
    pub recalc: Option<f64>,
    pub t: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlSummary {
    pub method: MarginalizationMethod,
    pub tstar: f64,
    pub recalc: Option<f64>,
    pub mean_kl: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<KlRow>,
    pub summaries: Vec<KlSummary>,
}

impl ExperimentOutput {
    pub fn mean(&self, method: MarginalizationMethod, recalc: Option<f64>) -> Option<f64> {
        self.summaries.iter().find(|s| s.method == method && s.recalc == recalc).map(|s| s.mean_kl)
    }

    /// CSV with a header, one row per grid point and one `mean` row per configuration.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "method,tstar,recalc,t,kl")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.method, r.tstar, format_recalc(r.recalc), r.t, r.kl)?;
        }
        for s in &self.summaries {
            writeln!(out, "{},{},{},mean,{}", s.method, s.tstar, format_recalc(s.recalc), s.mean_kl)?;
        }
        Ok(())
    }
}

/// Exact filtered joints at every grid point, each using the evidence up to that time.
pub fn exact_reference(model: &Ctbn, evidence: &Evidence, grid: &[f64], cap: usize) -> Result<Vec<ProbVector>> {
    let size = model.joint_size();
    if size > cap as u128 {
        return Err(Error::CapExceeded { size, cap }
            .context("the exact reference needs the full joint; use a smaller model"));
    }
    let engine = ExactEngine::new(model, cap)?;
    let mut kernels: HashMap<u64, Matrix> = HashMap::new();
    let mut advance = |p: ProbVector, dt: f64| -> Result<ProbVector> {
        if dt <= 0.0 {
            return Ok(p);
        }
        // grid steps agree up to rounding, so one kernel serves them all
        let key = (dt * 1e12).round() as u64;
        let kernel = match kernels.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(v) => v.insert(engine.intensity().transition_matrix(dt)?),
        };
        p.propagate(kernel)
    };
    let groups = evidence.groups();
    let mut next = 0;
    let mut p = engine.initial().clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        if t < now {
            return Err(Error::InvalidConfig("grid times must be nondecreasing".into()));
        }
        while next < groups.len() && groups[next].0 <= t {
            let (at, obs) = &groups[next];
            p = engine.condition(&advance(p, at - now)?, obs)?;
            now = *at;
            next += 1;
        }
        p = advance(p, t - now)?;
        now = t;
        out.push(p.clone());
    }
    Ok(out)
}

/// Approximate filtered joints at every grid point from one sweep of a tree.
pub fn approximate_sweep(model: &Ctbn, evidence: &Evidence, grid: &[f64], config: ApproxConfig) -> Result<Vec<ProbVector>> {
    let mut tree = CliqueTree::build(model, config)?;
    let groups = evidence.groups();
    let mut next = 0;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        while next < groups.len() && groups[next].0 <= t {
            tree.advance_to(groups[next].0)?;
            tree.incorporate(&groups[next].1)?;
            next += 1;
        }
        tree.advance_to(t)?;
        out.push(tree.calibrated_joint()?);
    }
    Ok(out)
}

pub fn run_experiment(model: &Ctbn, evidence: &Evidence, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let grid = spec.grid.points();
    let exact = exact_reference(model, evidence, &grid, spec.base.cap)?;
    let configs: Vec<(MarginalizationMethod, Option<f64>)> =
        spec.methods.iter().flat_map(|&m| spec.recalcs.iter().map(move |&d| (m, d))).collect();
    let results: Vec<Vec<KlRow>> = configs
        .par_iter()
        .map(|&(method, recalc)| {
            let config = ApproxConfig { method, tstar: spec.tstar, recalc, ..spec.base.clone() };
            let approx = approximate_sweep(model, evidence, &grid, config)?;
            grid.iter()
                .zip(exact.iter().zip(&approx))
                .map(|(&t, (p, q))| {
                    Ok(KlRow { method, tstar: spec.tstar, recalc, t, kl: kl_divergence(p.as_slice(), q.as_slice())? })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut output = ExperimentOutput::default();
    for ((method, recalc), rows) in configs.into_iter().zip(results) {
        let mean_kl = rows.iter().map(|r| r.kl).sum::<f64>() / rows.len().max(1) as f64;
        output.summaries.push(KlSummary { method, tstar: spec.tstar, recalc, mean_kl });
        output.rows.extend(rows);
    }
    Ok(output)
}
