//! Ladder filter assembly and the two reference designs.

use crate::error::{Error, Result};
use crate::netcore::{
    abcd_to_s, cascade, parallel_combine, series_element, shunt_element, FrequencyGrid, SMatrix,
    TwoPortAbcd, C64,
};
use crate::resonator::{derive_mbvd, MbvdModel, ResonatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageKind {
    Series,
    Shunt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub kind: StageKind,
    pub resonator: MbvdModel,
    /// Identical copies connected in parallel.
    pub multiplicity: u32,
    /// Lead inductance in series with each copy, H.
    pub inductance: f64,
}

impl Stage {
    /// Impedance of one copy including its lead inductance.
    fn copy_impedance(&self, omega: f64) -> C64 {
        self.resonator.impedance_at(omega) + C64::new(0.0, omega * self.inductance)
    }

    fn validate(&self, idx: usize) -> Result<()> {
        if self.multiplicity == 0 {
            return Err(Error::InvalidInput(format!(
                "stage {idx}: multiplicity must be >= 1"
            )));
        }
        if !(self.inductance.is_finite() && self.inductance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "stage {idx}: inductance must be >= 0, got {}",
                self.inductance
            )));
        }
        self.resonator
            .validate()
            .map_err(|e| Error::InvalidInput(format!("stage {idx}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderSpec {
    pub stages: Vec<Stage>,
    /// Port reference impedance, ohm.
    pub z0: f64,
    /// Input-to-output feedthrough capacitance, F.
    pub cp: f64,
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidInput(
                "ladder needs at least one stage".into(),
            ));
        }
        if !(self.z0.is_finite() && self.z0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "z0 must be positive, got {}",
                self.z0
            )));
        }
        if !(self.cp.is_finite() && self.cp >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "cp must be >= 0, got {}",
                self.cp
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(())
    }

    /// Stage kinds as a compact string, e.g. `"SPS"`.
    pub fn topology(&self) -> String {
        self.stages
            .iter()
            .map(|s| match s.kind {
                StageKind::Series => 'S',
                StageKind::Shunt => 'P',
            })
            .collect()
    }
}

/// ABCD network of the ladder including the feedthrough path.
pub fn build_abcd(spec: &LadderSpec, grid: &FrequencyGrid) -> Result<TwoPortAbcd> {
    spec.validate()?;
    let mut sections = Vec::with_capacity(spec.stages.len());
    for stage in &spec.stages {
        let m = f64::from(stage.multiplicity);
        let section = match stage.kind {
            StageKind::Series => {
                let z: Vec<C64> = grid.omegas().map(|w| stage.copy_impedance(w) / m).collect();
                series_element(grid, &z)?
            }
            StageKind::Shunt => {
                let y: Vec<C64> = grid.omegas().map(|w| m / stage.copy_impedance(w)).collect();
                shunt_element(grid, &y)?
            }
        };
        sections.push(section);
    }
    let ladder = cascade(grid, &sections)?;
    if spec.cp == 0.0 {
        return Ok(ladder);
    }
    let zc: Vec<C64> = grid
        .omegas()
        .map(|w| 1.0 / C64::new(0.0, w * spec.cp))
        .collect();
    parallel_combine(&ladder, &series_element(grid, &zc)?)
}

/// S-parameters of the ladder at its port impedance.
pub fn build_network(spec: &LadderSpec, grid: &FrequencyGrid) -> Result<SMatrix> {
    abcd_to_s(&build_abcd(spec, grid)?, spec.z0)
}

/// Offset between series and shunt resonances, Hz.
pub const FREQUENCY_OFFSET_HZ: f64 = 450e6;
/// Midpoint of the series/shunt resonance pair, Hz.
///
/// Frozen from [`crate::calibration::calibrate_designs`] on the default
/// 2001-point 3.5-5.5 GHz grid: the centre with the widest worst-case
/// margin on IL, 3 dB FBW, 4 dB FBW and rejection for both designs.
pub const SPLIT_CENTER_HZ: f64 = 4.45e9;
pub const SERIES_C0: f64 = 380e-15;
/// Static capacitance of one shunt position (both parallel copies).
pub const SHUNT_C0_TOTAL: f64 = 320e-15;
pub const SHUNT_MULTIPLICITY: u32 = 2;
pub const KT2: f64 = 0.28;
/// Average Q of resonators embedded in the fabricated filters.
pub const FILTER_Q: f64 = 200.0;
pub const RS_OHM: f64 = 4.0;
pub const LS_SERIES: f64 = 0.2e-9;
pub const LS_SHUNT: f64 = 0.3e-9;
pub const CP: f64 = 15e-15;
pub const Z0: f64 = 50.0;
/// Resonant stages of Design A, alternating and starting with a series
/// resonator (S-P-S-P-S). Frozen from the calibration scan.
pub const DESIGN_A_STAGES: usize = 5;
/// Resonant stages of Design B (S-P-S-P-S-P-S-P-S). Frozen from the
/// calibration scan.
pub const DESIGN_B_STAGES: usize = 9;

/// Shared electrical parameters from which alternating ladders are built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderParams {
    pub fs_series: f64,
    pub fs_shunt: f64,
    pub kt2: f64,
    pub q: f64,
    pub c0_series: f64,
    /// Per physical shunt copy.
    pub c0_shunt: f64,
    pub shunt_multiplicity: u32,
    pub rs: f64,
    pub ls_series: f64,
    pub ls_shunt: f64,
    pub cp: f64,
    pub z0: f64,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self::centered(SPLIT_CENTER_HZ)
    }
}

impl LadderParams {
    /// Reference parameters with the resonance pair placed around `center`.
    pub fn centered(center: f64) -> Self {
        Self {
            fs_series: center + FREQUENCY_OFFSET_HZ / 2.0,
            fs_shunt: center - FREQUENCY_OFFSET_HZ / 2.0,
            kt2: KT2,
            q: FILTER_Q,
            c0_series: SERIES_C0,
            c0_shunt: SHUNT_C0_TOTAL / f64::from(SHUNT_MULTIPLICITY),
            shunt_multiplicity: SHUNT_MULTIPLICITY,
            rs: RS_OHM,
            ls_series: LS_SERIES,
            ls_shunt: LS_SHUNT,
            cp: CP,
            z0: Z0,
        }
    }

    pub fn series_resonator(&self) -> Result<MbvdModel> {
        derive_mbvd(&ResonatorSpec::new(
            self.fs_series,
            self.kt2,
            self.q,
            self.c0_series,
        )?)?
        .with_parasitics(self.rs, 0.0)
    }

    pub fn shunt_resonator(&self) -> Result<MbvdModel> {
        derive_mbvd(&ResonatorSpec::new(
            self.fs_shunt,
            self.kt2,
            self.q,
            self.c0_shunt,
        )?)?
        .with_parasitics(self.rs, 0.0)
    }

    /// Alternating ladder of `n` resonant stages beginning with `first`.
    pub fn ladder(&self, n: usize, first: StageKind) -> Result<LadderSpec> {
        let series = self.series_resonator()?;
        let shunt = self.shunt_resonator()?;
        let stages = (0..n)
            .map(|i| {
                let kind = match (first, i % 2) {
                    (StageKind::Series, 0) | (StageKind::Shunt, 1) => StageKind::Series,
                    _ => StageKind::Shunt,
                };
                match kind {
                    StageKind::Series => Stage {
                        kind,
                        resonator: series.clone(),
                        multiplicity: 1,
                        inductance: self.ls_series,
                    },
                    StageKind::Shunt => Stage {
                        kind,
                        resonator: shunt.clone(),
                        multiplicity: self.shunt_multiplicity,
                        inductance: self.ls_shunt,
                    },
                }
            })
            .collect();
        let spec = LadderSpec {
            stages,
            z0: self.z0,
            cp: self.cp,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The lower-order reference design.
pub fn preset_design_a() -> LadderSpec {
    LadderParams::default()
        .ladder(DESIGN_A_STAGES, StageKind::Series)
        .expect("reference parameters are valid")
}

/// The higher-order reference design.
pub fn preset_design_b() -> LadderSpec {
    LadderParams::default()
        .ladder(DESIGN_B_STAGES, StageKind::Series)
        .expect("reference parameters are valid")
}

/// Default sweep used for the reference designs.
pub fn default_grid() -> FrequencyGrid {
    FrequencyGrid::linspace(3.5e9, 5.5e9, 2001).expect("static grid is valid")
}
