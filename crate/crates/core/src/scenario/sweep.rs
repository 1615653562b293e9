//! Severity over a grid of pedestrian speed caps and horizons.

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::run::{run_scenario, RunReport};
use super::{ScenarioError, SeverityClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub horizon: f64,
    pub max_pedestrian_speed: f64,
    pub report: RunReport,
}

/// Row-major results: one row per horizon, one column per speed cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub horizons: Vec<f64>,
    pub speeds: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn severity(&self, row: usize, col: usize) -> SeverityClass {
        self.cells[row * self.speeds.len() + col].report.severity
    }

    /// Severity never decreases to the right along a row or down a column.
    pub fn is_monotone(&self) -> bool {
        let (rows, cols) = (self.horizons.len(), self.speeds.len());
        (0..rows).all(|r| {
            (0..cols).all(|c| {
                let s = self.severity(r, c);
                (c + 1 == cols || s <= self.severity(r, c + 1)) && (r + 1 == rows || s <= self.severity(r + 1, c))
            })
        })
    }

    /// Plain-text table: rows `T`, columns pedestrian speed cap.
    pub fn table(&self) -> String {
        let width = 16;
        let mut out = format!("{:<10}", "");
        for v in &self.speeds {
            out.push_str(&format!("{:<width$}", format!("v={v} m/s")));
        }
        out.push('\n');
        for (r, t) in self.horizons.iter().enumerate() {
            out.push_str(&format!("{:<10}", format!("T={t} s")));
            for c in 0..self.speeds.len() {
                out.push_str(&format!("{:<width$}", self.severity(r, c).label()));
            }
            out.push('\n');
        }
        out
    }
}

/// Run `scenario` once per (horizon, speed cap) pair; `progress` sees each
/// finished cell.
pub fn sweep(
    scenario: &Scenario,
    speeds: &[f64],
    horizons: &[f64],
    mut progress: impl FnMut(&SweepCell),
) -> Result<SweepReport, ScenarioError> {
    let mut cells = Vec::with_capacity(speeds.len() * horizons.len());
    for &horizon in horizons {
        for &speed in speeds {
            let mut s = scenario.clone();
            s.config.horizon = horizon;
            s.config.max_pedestrian_speed = speed;
            let out = run_scenario(&s)?;
            let cell = SweepCell {
                horizon,
                max_pedestrian_speed: speed,
                report: out.report,
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    Ok(SweepReport {
        horizons: horizons.to_vec(),
        speeds: speeds.to_vec(),
        cells,
    })
}
