//! Modified Butterworth-Van Dyke (MBVD) resonator model.
//!
//! A static capacitance `c0` in parallel with a motional R-L-C branch and any
//! number of spurious motional branches, all behind optional series
//! parasitics `rs` and `ls`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::netcore::{FrequencyGrid, C64};

/// `8 / pi^2`: converts coupling to the fractional capacitance ratio.
pub const COUPLING_FACTOR: f64 = 8.0 / (PI * PI);

/// Minimum relative separation between two motional resonances.
pub const MIN_BRANCH_SEPARATION: f64 = 1e-3;

/// Behavioral description of a resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorSpec {
    /// Series resonance in Hz.
    pub fs: f64,
    /// Electromechanical coupling, `(pi^2/8) (fp^2 - fs^2) / fp^2`.
    pub kt2: f64,
    /// Mechanical quality factor.
    pub q: f64,
    /// Static capacitance in F.
    pub c0: f64,
}

impl ResonatorSpec {
    pub fn new(fs: f64, kt2: f64, q: f64, c0: f64) -> Result<Self> {
        let spec = Self { fs, kt2, q, c0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidInput(format!(
                "fs must be positive, got {}",
                self.fs
            )));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidInput(format!(
                "q must be positive, got {}",
                self.q
            )));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "c0 must be positive, got {}",
                self.c0
            )));
        }
        check_coupling(self.kt2)
    }

    /// Anti-resonance implied by the coupling convention.
    pub fn fp(&self) -> Result<f64> {
        check_coupling(self.kt2)?;
        Ok(self.fs / (1.0 - COUPLING_FACTOR * self.kt2).sqrt())
    }
}

fn check_coupling(kt2: f64) -> Result<()> {
    if !kt2.is_finite() || kt2 <= 0.0 {
        return Err(Error::Domain(format!("kt2 must be positive, got {kt2}")));
    }
    if kt2 * COUPLING_FACTOR >= 1.0 {
        return Err(Error::Domain(format!(
            "kt2 = {kt2} is at or above pi^2/8; anti-resonance undefined"
        )));
    }
    Ok(())
}

/// Series R-L-C motional branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionalBranch {
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

impl MotionalBranch {
    pub fn resonance(&self) -> f64 {
        1.0 / (2.0 * PI * (self.l * self.c).sqrt())
    }

    pub fn admittance(&self, omega: f64) -> C64 {
        let z = C64::new(self.r, omega * self.l - 1.0 / (omega * self.c));
        1.0 / z
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "{what}: r must be >= 0, got {}",
                self.r
            )));
        }
        if !(self.l.is_finite() && self.l > 0.0 && self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "{what}: l and c must be positive, got l={} c={}",
                self.l, self.c
            )));
        }
        Ok(())
    }
}

/// Circuit-level resonator model.
#[derive(Debug, Clone, PartialEq)]
pub struct MbvdModel {
    pub c0: f64,
    /// Main motional branch; `None` is a bare static capacitance.
    pub main: Option<MotionalBranch>,
    pub spurious: Vec<MotionalBranch>,
    /// Series resistance of electrodes and leads (ohm).
    pub rs: f64,
    /// Series inductance of electrodes and leads (H).
    pub ls: f64,
}

/// Phenomenological spurious mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spur {
    pub freq: f64,
    pub kt2: f64,
    pub q: f64,
}

impl MbvdModel {
    pub fn static_capacitor(c0: f64) -> Result<Self> {
        let m = Self {
            c0,
            main: None,
            spurious: Vec::new(),
            rs: 0.0,
            ls: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "c0 must be positive, got {}",
                self.c0
            )));
        }
        if !(self.rs.is_finite() && self.rs >= 0.0 && self.ls.is_finite() && self.ls >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "rs and ls must be >= 0, got rs={} ls={}",
                self.rs, self.ls
            )));
        }
        if let Some(m) = &self.main {
            m.validate("main branch")?;
        }
        for (k, b) in self.spurious.iter().enumerate() {
            b.validate(&format!("spurious branch {k}"))?;
        }
        let freqs: Vec<f64> = self.branch_resonances();
        for i in 0..freqs.len() {
            for j in i + 1..freqs.len() {
                if too_close(freqs[i], freqs[j]) {
                    return Err(Error::InvalidInput(format!(
                        "motional resonances {} Hz and {} Hz are within {}%",
                        freqs[i],
                        freqs[j],
                        MIN_BRANCH_SEPARATION * 100.0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resonances of the main branch (first, if present) then the spurs.
    pub fn branch_resonances(&self) -> Vec<f64> {
        self.main
            .iter()
            .chain(&self.spurious)
            .map(MotionalBranch::resonance)
            .collect()
    }

    /// Series resonance of the main branch.
    pub fn fs(&self) -> Option<f64> {
        self.main.map(|m| m.resonance())
    }

    pub fn admittance_at(&self, omega: f64) -> C64 {
        let mut inner = C64::new(0.0, omega * self.c0);
        for b in self.main.iter().chain(&self.spurious) {
            inner += b.admittance(omega);
        }
        if self.rs == 0.0 && self.ls == 0.0 {
            return inner;
        }
        1.0 / (C64::new(self.rs, omega * self.ls) + 1.0 / inner)
    }

    pub fn impedance_at(&self, omega: f64) -> C64 {
        1.0 / self.admittance_at(omega)
    }

    pub fn with_parasitics(mut self, rs: f64, ls: f64) -> Result<Self> {
        self.rs = rs;
        self.ls = ls;
        self.validate()?;
        Ok(self)
    }
}

fn too_close(a: f64, b: f64) -> bool {
    (a - b).abs() < MIN_BRANCH_SEPARATION * a.min(b)
}

/// Motional branch that reproduces coupling `kt2` at resonance `fs` on top
/// of static capacitance `c0`.
fn motional_for(fs: f64, kt2: f64, q: f64, c0: f64) -> MotionalBranch {
    let ratio = COUPLING_FACTOR * kt2;
    // fp^2/fs^2 - 1 == ratio / (1 - ratio)
    let c = c0 * ratio / (1.0 - ratio);
    let ws = 2.0 * PI * fs;
    let l = 1.0 / (ws * ws * c);
    MotionalBranch {
        r: ws * l / q,
        l,
        c,
    }
}

/// MBVD elements for a behavioral spec, without spurs or parasitics.
pub fn derive_mbvd(spec: &ResonatorSpec) -> Result<MbvdModel> {
    spec.validate()?;
    Ok(MbvdModel {
        c0: spec.c0,
        main: Some(motional_for(spec.fs, spec.kt2, spec.q, spec.c0)),
        spurious: Vec::new(),
        rs: 0.0,
        ls: 0.0,
    })
}

/// Complex admittance of `model` at every grid point.
pub fn admittance(model: &MbvdModel, grid: &FrequencyGrid) -> Vec<C64> {
    grid.omegas().map(|w| model.admittance_at(w)).collect()
}

/// Appends one motional branch per spur, sharing the model's `c0`.
pub fn with_spurious(model: &MbvdModel, spurs: &[Spur]) -> Result<MbvdModel> {
    let mut out = model.clone();
    for (k, s) in spurs.iter().enumerate() {
        if !(s.freq.is_finite() && s.freq > 0.0 && s.q.is_finite() && s.q > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spur {k}: frequency and q must be positive"
            )));
        }
        check_coupling(s.kt2)?;
        for existing in out.branch_resonances() {
            if too_close(existing, s.freq) {
                return Err(Error::InvalidInput(format!(
                    "spur {k} at {} Hz is indistinguishable from a branch at {existing} Hz",
                    s.freq
                )));
            }
        }
        out.spurious
            .push(motional_for(s.freq, s.kt2, s.q, model.c0));
    }
    Ok(out)
}

/// Geometry record of an IDT resonator. `c0` is recorded, not computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorLayout {
    /// Film thickness, nm.
    pub thickness_nm: f64,
    /// Electrode width, um.
    pub electrode_width_um: f64,
    /// Electrode gap, um.
    pub gap_um: f64,
    /// Aperture length, um.
    pub length_um: f64,
    /// Electrode thickness, nm.
    pub electrode_thickness_nm: f64,
    pub electrodes: u32,
    pub c0: f64,
}

impl ResonatorLayout {
    pub fn new(
        thickness_nm: f64,
        electrode_width_um: f64,
        gap_um: f64,
        length_um: f64,
        electrode_thickness_nm: f64,
        electrodes: u32,
        c0: f64,
    ) -> Result<Self> {
        let vals = [
            thickness_nm,
            electrode_width_um,
            gap_um,
            length_um,
            electrode_thickness_nm,
            c0,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) || electrodes == 0 {
            return Err(Error::InvalidInput(
                "layout values must all be positive".into(),
            ));
        }
        Ok(Self {
            thickness_nm,
            electrode_width_um,
            gap_um,
            length_um,
            electrode_thickness_nm,
            electrodes,
            c0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design_a_series() -> ResonatorSpec {
        ResonatorSpec::new(4.725e9, 0.28, 200.0, 380e-15).unwrap()
    }

    #[test]
    fn derive_matches_closed_form() {
        let m = derive_mbvd(&design_a_series()).unwrap();
        let b = m.main.unwrap();
        assert!((b.c - 111.57e-15).abs() < 0.05e-15, "cm {}", b.c);
        assert!((b.l - 10.169e-9).abs() < 0.005e-9, "lm {}", b.l);
        assert!((b.r - 1.5095).abs() < 0.001, "rm {}", b.r);
        assert!((b.resonance() - 4.725e9).abs() < 1.0);
        let fp = design_a_series().fp().unwrap();
        assert!((fp - 5.37404e9).abs() < 1e5, "fp {fp}");
    }

    #[test]
    fn weak_coupling_degenerates_to_c0() {
        let m = derive_mbvd(&ResonatorSpec::new(4.725e9, 1e-12, 200.0, 380e-15).unwrap()).unwrap();
        assert!(m.main.unwrap().c < 1e-24);
        let w = 2.0 * PI * 3e9;
        let y = m.admittance_at(w);
        assert!((y - C64::new(0.0, w * 380e-15)).norm() < 1e-9 * y.norm());
    }

    #[test]
    fn coupling_bound_is_a_domain_error() {
        let bad = ResonatorSpec {
            fs: 1e9,
            kt2: 1.0 / COUPLING_FACTOR,
            q: 100.0,
            c0: 1e-13,
        };
        assert!(matches!(derive_mbvd(&bad), Err(Error::Domain(_))));
        assert!(matches!(
            ResonatorSpec::new(1e9, 1.3, 100.0, 1e-13),
            Err(Error::Domain(_))
        ));
        assert!(ResonatorSpec::new(1e9, 0.9, 100.0, 1e-13).is_ok());
        assert!(ResonatorSpec::new(-1.0, 0.2, 100.0, 1e-13).is_err());
        assert!(ResonatorSpec::new(1e9, 0.2, 0.0, 1e-13).is_err());
        assert!(ResonatorSpec::new(1e9, 0.2, 10.0, 0.0).is_err());
    }

    #[test]
    fn dc_limit_is_capacitive() {
        let m = derive_mbvd(&design_a_series()).unwrap();
        let w = 2.0 * PI * 1e3;
        let y = m.admittance_at(w);
        // the motional branch degenerates to its capacitor far below fs
        let c_total = 380e-15 + m.main.unwrap().c;
        assert!((y.im - w * c_total).abs() < 1e-6 * w * c_total);
        assert!(y.re.abs() < 1e-9 * y.im);
    }

    #[test]
    fn sweep_extrema_at_fs_and_fp() {
        let m = derive_mbvd(&design_a_series()).unwrap();
        let fp = design_a_series().fp().unwrap();
        let extrema = |step: f64| {
            let n = ((5.6e9 - 4.5e9) / step).round() as usize + 1;
            let g = FrequencyGrid::linspace(4.5e9, 5.6e9, n).unwrap();
            let mag: Vec<f64> = admittance(&m, &g).iter().map(|v| v.norm()).collect();
            let imax = (0..n).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
            let imin = (0..n).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
            (g.points()[imax], g.points()[imin], mag[imax])
        };
        let (fmax, fmin, _) = extrema(0.5e6);
        assert!((fmax - 4.725e9).abs() <= 0.5e6);
        assert!((fmin - fp).abs() <= 0.5e6);
        // C0 loading pulls the q = 200 extrema ~0.2 MHz off the motional values
        let (fmax, fmin, peak) = extrema(0.1e6);
        assert!((fmax - 4.725e9).abs() <= 0.25e6, "{fmax}");
        assert!((fmin - fp).abs() <= 0.25e6, "{fmin}");
        let expect = (C64::new(1.0 / m.main.unwrap().r, 2.0 * PI * 4.725e9 * 380e-15)).norm();
        assert!((peak - expect).abs() / expect < 0.01);
    }

    #[test]
    fn spur_adds_extremum_pair() {
        let base = derive_mbvd(&design_a_series()).unwrap();
        let spurred = with_spurious(
            &base,
            &[Spur {
                freq: 4.9e9,
                kt2: 0.01,
                q: 500.0,
            }],
        )
        .unwrap();
        assert_eq!(spurred.spurious.len(), 1);
        let g = FrequencyGrid::linspace(4.8e9, 5.0e9, 2001).unwrap();
        let count_extrema = |m: &MbvdModel| {
            let mag: Vec<f64> = admittance(m, &g).iter().map(|v| v.norm()).collect();
            mag.windows(3)
                .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
                .count()
        };
        assert_eq!(count_extrema(&base), 0);
        assert_eq!(count_extrema(&spurred), 2);
        assert_eq!(with_spurious(&base, &[]).unwrap(), base);
    }

    #[test]
    fn duplicate_spurs_rejected() {
        let base = derive_mbvd(&design_a_series()).unwrap();
        let near_fs = Spur {
            freq: 4.726e9,
            kt2: 0.01,
            q: 500.0,
        };
        assert!(with_spurious(&base, &[near_fs]).is_err());
        let a = Spur {
            freq: 4.9e9,
            kt2: 0.01,
            q: 500.0,
        };
        let b = Spur {
            freq: 4.9002e9,
            ..a
        };
        assert!(with_spurious(&base, &[a, b]).is_err());
        let strong = Spur { kt2: 1.3, ..a };
        assert!(matches!(
            with_spurious(&base, &[strong]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lossless_susceptance_increases_between_resonances() {
        let mut m = derive_mbvd(&design_a_series()).unwrap();
        m.main.as_mut().unwrap().r = 0.0;
        let g = FrequencyGrid::linspace(4.7255e9, 5.3735e9, 4001).unwrap();
        let b: Vec<f64> = admittance(&m, &g).iter().map(|y| y.im).collect();
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn higher_q_lowers_rm_and_raises_peak() {
        let w = 2.0 * PI * 4.725e9;
        let mut prev: Option<(f64, f64)> = None;
        for q in [50.0, 100.0, 200.0, 430.0, 1000.0] {
            let m = derive_mbvd(&ResonatorSpec {
                q,
                ..design_a_series()
            })
            .unwrap();
            let rm = m.main.unwrap().r;
            let y = m.admittance_at(w).norm();
            if let Some((prm, py)) = prev {
                assert!(rm < prm && y > py);
            }
            prev = Some((rm, y));
        }
    }

    #[test]
    fn parasitics_enter_in_series() {
        let m = derive_mbvd(&design_a_series())
            .unwrap()
            .with_parasitics(4.0, 0.2e-9)
            .unwrap();
        let w = 2.0 * PI * 4.0e9;
        let bare = MbvdModel {
            rs: 0.0,
            ls: 0.0,
            ..m.clone()
        };
        let expect = 1.0 / (C64::new(4.0, w * 0.2e-9) + 1.0 / bare.admittance_at(w));
        assert!((m.admittance_at(w) - expect).norm() < 1e-15);
        assert!(m.clone().with_parasitics(-1.0, 0.0).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(ResonatorLayout::new(500.0, 0.5, 1.5, 80.0, 50.0, 50, 380e-15).is_ok());
        assert!(ResonatorLayout::new(500.0, 0.5, 1.5, 80.0, 50.0, 0, 380e-15).is_err());
        assert!(ResonatorLayout::new(500.0, -0.5, 1.5, 80.0, 50.0, 50, 380e-15).is_err());
    }
}
