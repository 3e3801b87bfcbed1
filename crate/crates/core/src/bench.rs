//! Parameter sweeps over path length and binning threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{compare, run, EngineParams, ErrorReport, MiniBuckets, PathLength, Stats};
use crate::error::Result;
use crate::factor::VariableId;
use crate::model::{Evidence, Model, QuerySet};
use crate::scalar::Scalar;

pub const CSV_HEADER: &str = "sweep,use_bisimulation,path_length,epsilon,minibuckets,repetitions,\
mean_wall_ms,mults,adds,intermediate_factors,blocks,incorrect,total,fraction_incorrect";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub path_lengths: Vec<PathLength>,
    pub epsilons: Vec<f64>,
    pub repetitions: usize,
    pub minibuckets: MiniBuckets,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            path_lengths: vec![
                PathLength::Finite(0),
                PathLength::Finite(1),
                PathLength::Finite(2),
                PathLength::Finite(3),
                PathLength::Infinite,
            ],
            epsilons: vec![0.0, 0.01, 0.1],
            repetitions: 3,
            minibuckets: MiniBuckets::Off,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// `path-length` or `epsilon`: which parameter the row varies.
    pub sweep: &'static str,
    pub params: EngineParams,
    pub repetitions: usize,
    pub mean_wall_ms: f64,
    pub stats: Stats,
    pub error: ErrorReport,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let p = &self.params;
        format!(
            "{},{},{},{},{},{},{:.3},{},{},{},{},{},{},{}",
            self.sweep,
            p.use_bisimulation,
            p.path_length,
            p.epsilon,
            p.minibuckets,
            self.repetitions,
            self.mean_wall_ms,
            self.stats.mults,
            self.stats.adds,
            self.stats.intermediate_factors,
            self.stats.blocks,
            self.error.incorrect,
            self.error.total,
            self.error.fraction
        )
    }
}

/// Runs one row per path length (epsilon 0) and one per epsilon (infinite
/// path length), each repeated `repetitions` times, and scores every row
/// against exact lifted inference.
pub fn sweep<T: Scalar>(
    model: &Model<T>,
    queries: &QuerySet,
    evidence: &Evidence,
    cfg: &SweepConfig,
    order: Option<&[VariableId]>,
) -> Result<Vec<SweepRow>> {
    let mut settings: Vec<(&'static str, EngineParams)> = Vec::new();
    let base = EngineParams {
        minibuckets: cfg.minibuckets,
        ..EngineParams::exact()
    };
    for &pl in &cfg.path_lengths {
        settings.push(("path-length", EngineParams { path_length: pl, ..base }));
    }
    for &eps in &cfg.epsilons {
        settings.push(("epsilon", EngineParams { epsilon: eps, ..base }));
    }
    if settings.is_empty() {
        return Ok(Vec::new());
    }
    let reference = run(model, queries, evidence, &EngineParams::exact(), order)?;
    let reps = cfg.repetitions.max(1);
    let mut rows = Vec::with_capacity(settings.len());
    for (sweep, params) in settings {
        let mut total_ms = 0.0;
        let mut last = None;
        for _ in 0..reps {
            let r = run(model, queries, evidence, &params, order)?;
            total_ms += r.stats.wall_ms;
            last = Some(r);
        }
        let r = last.expect("at least one repetition");
        rows.push(SweepRow {
            sweep,
            params,
            repetitions: reps,
            mean_wall_ms: total_ms / reps as f64,
            error: compare(&r.marginals, &reference.marginals)?,
            stats: r.stats,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}
