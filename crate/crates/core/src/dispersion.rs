//! Electrode-gap to resonance mapping for lithographic frequency setting.
//!
//! The resonance follows `f(G) = sqrt(f_t^2 + (c_lat / G)^2)`: a thickness
//! asymptote `f_t` stiffened by a lateral term that falls off with the gap.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionModel {
    /// Thickness-mode asymptote, Hz.
    pub f_t: f64,
    /// Lateral stiffening coefficient, Hz*um.
    pub c_lat: f64,
}

/// One calibration point: electrode gap in um and measured series resonance in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub gap_um: f64,
    pub fs: f64,
}

impl DispersionModel {
    pub fn new(f_t: f64, c_lat: f64) -> Result<Self> {
        if !(f_t.is_finite() && f_t > 0.0 && c_lat.is_finite() && c_lat > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dispersion constants must be positive, got f_t={f_t} c_lat={c_lat}"
            )));
        }
        Ok(Self { f_t, c_lat })
    }

    /// Exact fit through two anchors.
    pub fn calibrate(a: Anchor, b: Anchor) -> Result<Self> {
        for x in [a, b] {
            if !(x.gap_um.is_finite() && x.gap_um > 0.0 && x.fs.is_finite() && x.fs > 0.0) {
                return Err(Error::Calibration(format!(
                    "anchor ({} um, {} Hz) must be positive",
                    x.gap_um, x.fs
                )));
            }
        }
        if a.gap_um == b.gap_um {
            return Err(Error::Calibration("anchors share the same gap".into()));
        }
        let (near, far) = if a.gap_um < b.gap_um { (a, b) } else { (b, a) };
        if near.fs <= far.fs {
            return Err(Error::Calibration(format!(
                "resonance must fall as the gap grows: {} Hz at {} um vs {} Hz at {} um",
                near.fs, near.gap_um, far.fs, far.gap_um
            )));
        }
        // Linear in (f_t^2, c_lat^2): f^2 = f_t^2 + c_lat^2 / G^2.
        let (g1, g2) = (near.gap_um * near.gap_um, far.gap_um * far.gap_um);
        let (f1, f2) = (near.fs * near.fs, far.fs * far.fs);
        let ft2 = (f1 * g1 - f2 * g2) / (g1 - g2);
        let c2 = (f1 - ft2) * g1;
        if !(ft2 > 0.0 && c2 > 0.0) {
            return Err(Error::Calibration(format!(
                "anchors imply a non-physical model (f_t^2 = {ft2:e}, c_lat^2 = {c2:e})"
            )));
        }
        Self::new(ft2.sqrt(), c2.sqrt())
    }

    pub fn fs_from_gap(&self, gap_um: f64) -> Result<f64> {
        if !(gap_um.is_finite() && gap_um > 0.0) {
            return Err(Error::Domain(format!(
                "gap must be positive, got {gap_um} um"
            )));
        }
        Ok(self.f_t.hypot(self.c_lat / gap_um))
    }

    pub fn gap_for_target(&self, fs_target: f64) -> Result<f64> {
        if !fs_target.is_finite() || fs_target <= self.f_t {
            return Err(Error::Domain(format!(
                "{fs_target} Hz is unreachable; resonance approaches {} Hz only as the gap grows without bound",
                self.f_t
            )));
        }
        Ok(self.c_lat / ((fs_target - self.f_t) * (fs_target + self.f_t)).sqrt())
    }
}
