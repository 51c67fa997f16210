use serde::{Deserialize, Serialize};

use super::{replay_swing, std_hint, BdpResult, StoppingProblem, SwingProblem};
use crate::error::Result;
use crate::tree::QuantTree;

/// One line of the per-layer report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer: usize,
    pub value_min: f64,
    pub value_max: f64,
    /// Stopping only: space-separated nodes where exercising is optimal.
    pub exercise_nodes: String,
    /// Swing only: range of cumulative consumption after the decision on
    /// this layer, over states reached under the optimal policy.
    pub consumption_min: Option<usize>,
    pub consumption_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub price: f64,
    pub std_hint: f64,
    pub wall_ms: f64,
    pub rows: Vec<ReportRow>,
    /// Swing only: range of total consumption over all tree paths.
    pub total_consumption: Option<(usize, usize)>,
}

impl PriceReport {
    /// The `price,std_hint,wall_ms` summary line.
    pub fn summary_line(&self) -> String {
        format!("{},{},{:.3}", self.price, self.std_hint, self.wall_ms)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Problem<'a> {
    Stopping(&'a StoppingProblem),
    Swing(&'a SwingProblem),
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    })
}

pub fn price_report(result: &BdpResult, tree: &QuantTree, problem: Problem<'_>) -> PriceReport {
    let mut rows = Vec::with_capacity(result.layers.len());
    let mut total_consumption = None;
    let mut m_after_root = 0;
    match problem {
        Problem::Stopping(_) => {
            for (k, layer) in result.layers.iter().enumerate() {
                let (value_min, value_max) = min_max(layer.values.iter().copied());
                let nodes: Vec<String> = (0..layer.nodes())
                    .filter(|&i| layer.decision(i, 0) == Some(1))
                    .map(|i| i.to_string())
                    .collect();
                rows.push(ReportRow {
                    layer: k,
                    value_min,
                    value_max,
                    exercise_nodes: nodes.join(" "),
                    consumption_min: None,
                    consumption_max: None,
                });
            }
        }
        Problem::Swing(p) => {
            let replay = replay_swing(tree, p, result);
            for (k, layer) in result.layers.iter().enumerate() {
                let (value_min, value_max) = min_max(layer.values.iter().copied());
                let band = replay.bands.get(k).copied().flatten();
                rows.push(ReportRow {
                    layer: k,
                    value_min,
                    value_max,
                    exercise_nodes: String::new(),
                    consumption_min: band.map(|b| b.0),
                    consumption_max: band.map(|b| b.1),
                });
            }
            total_consumption = replay.totals;
            m_after_root = result.layers[0].decision(0, 0).unwrap_or(0) as usize;
        }
    }
    PriceReport {
        price: result.price,
        std_hint: std_hint(tree, result, m_after_root),
        wall_ms: result.wall.as_secs_f64() * 1e3,
        rows,
        total_consumption,
    }
}

pub fn write_report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
