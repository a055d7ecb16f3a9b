//! Calibration of the reference ladder designs.
//!
//! Component values are fixed; what remains free is where the 450 MHz
//! series/shunt offset sits and how many resonant stages each design has.
//! [`calibrate_designs`] scans both and returns the candidate whose worst
//! normalised margin against the target figures of merit is largest. The
//! preset constants in [`crate::ladder`] are frozen from its output.

use crate::error::{Error, Result};
use crate::ladder::{build_network, LadderParams, StageKind};
use crate::metrics::{analyze, FilterMetrics};
use crate::netcore::FrequencyGrid;

/// Closed interval a metric must fall in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const fn around(center: f64, tol: f64) -> Self {
        Self {
            lo: center - tol,
            hi: center + tol,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Distance to the nearest edge over the half-width; negative outside.
    fn margin(&self, v: f64) -> f64 {
        (v - self.lo).min(self.hi - v) / (0.5 * (self.hi - self.lo))
    }
}

/// Figures of merit one design must reproduce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignTargets {
    pub il_db: Window,
    /// Fractions, not percent.
    pub fbw_3db: Window,
    pub fbw_4db: Window,
    /// Upper bound on out-of-band `|S21|`, dB.
    pub oob_max_db: f64,
    /// dB of headroom below `oob_max_db` that counts as a full margin.
    pub oob_scale_db: f64,
}

impl DesignTargets {
    pub fn margin(&self, m: &FilterMetrics) -> f64 {
        let oob = m
            .oob_rejection_db
            .map_or(-1.0, |v| (self.oob_max_db - v) / self.oob_scale_db);
        [
            self.il_db.margin(m.il_db),
            self.fbw_3db.margin(m.fbw_3db),
            self.fbw_4db.margin(m.fbw_4db),
            oob,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn met_by(&self, m: &FilterMetrics) -> bool {
        self.il_db.contains(m.il_db)
            && self.fbw_3db.contains(m.fbw_3db)
            && self.fbw_4db.contains(m.fbw_4db)
            && m.oob_rejection_db.is_some_and(|v| v <= self.oob_max_db)
    }
}

/// Table values with the accepted reproduction tolerances.
pub const DESIGN_A_TARGETS: DesignTargets = DesignTargets {
    il_db: Window::around(1.7, 0.4),
    fbw_3db: Window::around(0.10, 0.015),
    fbw_4db: Window::around(0.087, 0.015),
    oob_max_db: -11.0,
    oob_scale_db: 10.0,
};

pub const DESIGN_B_TARGETS: DesignTargets = DesignTargets {
    il_db: Window::around(2.7, 0.6),
    fbw_3db: Window::around(0.085, 0.015),
    fbw_4db: Window::around(0.06, 0.015),
    oob_max_db: -20.0,
    oob_scale_db: 10.0,
};

/// Search space of the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpace {
    pub centers: Vec<f64>,
    pub design_a_orders: Vec<usize>,
    pub design_b_orders: Vec<usize>,
    pub first_stage: Vec<StageKind>,
}

impl Default for CalibrationSpace {
    fn default() -> Self {
        Self {
            // 4.20 .. 5.00 GHz in 25 MHz steps
            centers: (0..=32).map(|k| 4.20e9 + 25e6 * k as f64).collect(),
            design_a_orders: vec![2, 3, 4, 5],
            design_b_orders: vec![5, 6, 7, 8, 9],
            first_stage: vec![StageKind::Series, StageKind::Shunt],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub center: f64,
    pub design_a_order: usize,
    pub design_a_first: StageKind,
    pub design_b_order: usize,
    pub design_b_first: StageKind,
    /// Worst normalised margin over both designs (> 0 means all targets met).
    pub margin: f64,
    pub design_a: FilterMetrics,
    pub design_b: FilterMetrics,
}

/// Scans `space` and returns the best-margin candidate whose Design B is
/// higher order and lossier than Design A.
pub fn calibrate_designs(grid: &FrequencyGrid, space: &CalibrationSpace) -> Result<Calibration> {
    let mut best: Option<Calibration> = None;
    for &center in &space.centers {
        let params = LadderParams::centered(center);
        let eval = |n: usize, first: StageKind| -> Option<FilterMetrics> {
            let spec = params.ladder(n, first).ok()?;
            analyze(&build_network(&spec, grid).ok()?).ok()
        };
        let mut a_cands = Vec::new();
        let mut b_cands = Vec::new();
        for &first in &space.first_stage {
            for &n in &space.design_a_orders {
                if let Some(m) = eval(n, first) {
                    a_cands.push((n, first, m));
                }
            }
            for &n in &space.design_b_orders {
                if let Some(m) = eval(n, first) {
                    b_cands.push((n, first, m));
                }
            }
        }
        for (na, fa, ma) in &a_cands {
            let margin_a = DESIGN_A_TARGETS.margin(ma);
            for (nb, fb, mb) in &b_cands {
                if nb <= na || mb.il_db <= ma.il_db {
                    continue;
                }
                let margin = margin_a.min(DESIGN_B_TARGETS.margin(mb));
                if best.as_ref().is_none_or(|b| margin > b.margin) {
                    best = Some(Calibration {
                        center,
                        design_a_order: *na,
                        design_a_first: *fa,
                        design_b_order: *nb,
                        design_b_first: *fb,
                        margin,
                        design_a: ma.clone(),
                        design_b: mb.clone(),
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Calibration("no candidate could be evaluated".into()))
}
