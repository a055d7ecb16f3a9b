//! Filter figures of merit extracted from a swept S-matrix.
//!
//! The 3 dB band is peak-relative; the 4 dB band is the absolute
//! `|S21| >= -4 dB` interval around the peak. Band edges are refined by
//! linear interpolation between grid points.

use crate::error::{Error, Result};
use crate::netcore::{group_delay, SMatrix};
use crate::report::Report;

/// Peak-relative drop defining the passband.
pub const PASSBAND_DROP_DB: f64 = 3.0;
/// Absolute level defining the 4 dB bandwidth.
pub const ABS_BAND_LEVEL_DB: f64 = -4.0;
/// Guard band between passband and rejection windows, in units of the
/// 3 dB fractional bandwidth.
pub const OOB_GUARD_FACTOR: f64 = 1.5;
/// Rejection windows are clipped to `[LOW * f0, HIGH * f0]`.
pub const OOB_SPAN_LOW: f64 = 0.80;
pub const OOB_SPAN_HIGH: f64 = 1.20;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterMetrics {
    /// Passband centre, Hz.
    pub f0: f64,
    /// Minimum in-band loss, dB (positive).
    pub il_db: f64,
    pub fbw_3db: f64,
    pub fbw_4db: f64,
    /// Highest `|S21|` in the rejection windows, dB; `None` when the sweep
    /// has no points there.
    pub oob_rejection_db: Option<f64>,
    /// Peak-to-valley of in-band ripples, dB.
    pub ripple_db: f64,
    pub gd_variation_s: f64,
    pub passband: (f64, f64),
    /// More than one disjoint region above the 3 dB threshold.
    pub multimodal: bool,
    /// Passband points without a defined group delay.
    pub gd_gaps: usize,
}

impl FilterMetrics {
    pub fn report(&self) -> Report {
        let mut r = Report::new();
        r.push("f0_hz", self.f0)
            .push("il_db", self.il_db)
            .push("fbw_3db", self.fbw_3db)
            .push("fbw_4db", self.fbw_4db)
            .push(
                "oob_rejection_db",
                self.oob_rejection_db
                    .map_or_else(|| "none".to_string(), |v| v.to_string()),
            )
            .push("ripple_db", self.ripple_db)
            .push("gd_variation_s", self.gd_variation_s)
            .push("passband_lo_hz", self.passband.0)
            .push("passband_hi_hz", self.passband.1)
            .push("multimodal", self.multimodal)
            .push("gd_gaps", self.gd_gaps);
        r
    }
}

/// Contiguous run of grid indices with interpolated edge frequencies.
#[derive(Debug, Clone, Copy)]
struct Band {
    first: usize,
    last: usize,
    lo: f64,
    hi: f64,
}

fn crossing(f: &[f64], db: &[f64], i: usize, j: usize, level: f64) -> f64 {
    let t = (level - db[i]) / (db[j] - db[i]);
    f[i] + t * (f[j] - f[i])
}

fn band_from_run(f: &[f64], db: &[f64], first: usize, last: usize, level: f64) -> Result<Band> {
    let n = f.len();
    if first == 0 || last == n - 1 {
        return Err(Error::Analysis(format!(
            "band above {level:.3} dB reaches the sweep edge; widen the sweep"
        )));
    }
    Ok(Band {
        first,
        last,
        lo: crossing(f, db, first - 1, first, level),
        hi: crossing(f, db, last, last + 1, level),
    })
}

fn runs_above(db: &[f64], level: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < db.len() {
        if db[i] >= level {
            let start = i;
            while i < db.len() && db[i] >= level {
                i += 1;
            }
            runs.push((start, i - 1));
        } else {
            i += 1;
        }
    }
    runs
}

/// Peak minus the deepest interior local minimum over `db[first..=last]`.
fn ripple(db: &[f64], first: usize, last: usize) -> f64 {
    let peak = db[first..=last]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut deepest: Option<f64> = None;
    for k in first + 1..last {
        if db[k] < db[k - 1] && db[k] <= db[k + 1] {
            deepest = Some(deepest.map_or(db[k], |d: f64| d.min(db[k])));
        }
    }
    deepest.map_or(0.0, |d| peak - d)
}

/// In-band ripple of `|S21|` between `f_lo` and `f_hi`.
pub fn ripple_in_window(s: &SMatrix, f_lo: f64, f_hi: f64) -> Result<f64> {
    let f = s.grid().points();
    let idx: Vec<usize> = (0..f.len())
        .filter(|&i| f[i] >= f_lo && f[i] <= f_hi)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Analysis(format!(
            "fewer than 3 grid points in [{f_lo}, {f_hi}] Hz"
        )));
    }
    Ok(ripple(&s.s21_db(), idx[0], idx[idx.len() - 1]))
}

pub fn analyze(s: &SMatrix) -> Result<FilterMetrics> {
    let f = s.grid().points();
    let db = s.s21_db();
    let (ipk, peak) = db
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Analysis("no finite |S21| samples".into()))?;

    let level = peak - PASSBAND_DROP_DB;
    let runs = runs_above(&db, level);
    let multimodal = runs.len() > 1;
    let mut best: Option<Band> = None;
    for &(a, b) in &runs {
        let band = band_from_run(f, &db, a, b, level)?;
        if best.is_none_or(|x| band.hi - band.lo > x.hi - x.lo) {
            best = Some(band);
        }
    }
    let band = best.ok_or_else(|| Error::Analysis("no passband found".into()))?;
    let f0 = 0.5 * (band.lo + band.hi);
    let fbw_3db = (band.hi - band.lo) / f0;

    let fbw_4db = if peak >= ABS_BAND_LEVEL_DB {
        let (a, b) = runs_above(&db, ABS_BAND_LEVEL_DB)
            .into_iter()
            .find(|&(a, b)| a <= ipk && ipk <= b)
            .expect("peak lies in its own run");
        let b4 = band_from_run(f, &db, a, b, ABS_BAND_LEVEL_DB)?;
        (b4.hi - b4.lo) / f0
    } else {
        0.0
    };

    let guard = OOB_GUARD_FACTOR * fbw_3db;
    let (lo_a, lo_b) = (OOB_SPAN_LOW * f0, f0 * (1.0 - guard));
    let (hi_a, hi_b) = (f0 * (1.0 + guard), OOB_SPAN_HIGH * f0);
    let oob_rejection_db = f
        .iter()
        .zip(&db)
        .filter(|(&x, _)| (x >= lo_a && x <= lo_b) || (x >= hi_a && x <= hi_b))
        .map(|(_, &v)| v)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });

    let gd = group_delay(s)?;
    let mut in_band: Vec<f64> = gd[band.first..=band.last]
        .iter()
        .flatten()
        .copied()
        .collect();
    let gd_gaps = (band.last - band.first + 1) - in_band.len();
    // delay at the interpolated band edges, so the spread does not depend
    // on where the grid happens to fall
    for (i, j, fe) in [
        (band.first - 1, band.first, band.lo),
        (band.last, band.last + 1, band.hi),
    ] {
        if let (Some(a), Some(b)) = (gd[i], gd[j]) {
            in_band.push(a + (fe - f[i]) / (f[j] - f[i]) * (b - a));
        }
    }
    let gd_variation_s = if in_band.is_empty() {
        0.0
    } else {
        let max = in_band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = in_band.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    };

    Ok(FilterMetrics {
        f0,
        il_db: -peak,
        fbw_3db,
        fbw_4db,
        oob_rejection_db,
        ripple_db: ripple(&db, band.first, band.last),
        gd_variation_s,
        passband: (band.lo, band.hi),
        multimodal,
        gd_gaps,
    })
}
