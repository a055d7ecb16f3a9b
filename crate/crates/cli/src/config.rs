//! JSON run configuration. Every object rejects unknown keys.

use a1filter::fitting::{Algorithm, FitOptions, FreeParam, Template};
use a1filter::ladder::{
    preset_design_a, preset_design_b, LadderParams, LadderSpec, Stage, StageKind, DESIGN_A_STAGES,
    DESIGN_B_STAGES,
};
use a1filter::resonator::{derive_mbvd, with_spurious, ResonatorSpec, Spur};
use a1filter::tsio::{DataFormat, FreqUnit};
use a1filter::{Error, FrequencyGrid, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: Option<GridConfig>,
    /// Reference design "A" or "B".
    pub design: Option<String>,
    pub ladder: Option<LadderConfig>,
    pub network: Option<NetworkConfig>,
    pub output: Option<OutputConfig>,
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::linspace(self.start_hz, self.stop_hz, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Series,
    Shunt,
}

impl From<Kind> for StageKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Series => StageKind::Series,
            Kind::Shunt => StageKind::Shunt,
        }
    }
}

/// Alternating ladder from shared parameters; omitted values take the
/// reference values.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub stages: usize,
    pub first: Option<Kind>,
    pub fs_series_hz: Option<f64>,
    pub fs_shunt_hz: Option<f64>,
    pub kt2: Option<f64>,
    pub q: Option<f64>,
    pub c0_series_f: Option<f64>,
    pub c0_shunt_f: Option<f64>,
    pub shunt_multiplicity: Option<u32>,
    pub rs_ohm: Option<f64>,
    pub ls_series_h: Option<f64>,
    pub ls_shunt_h: Option<f64>,
    pub cp_f: Option<f64>,
    pub z0_ohm: Option<f64>,
}

impl LadderConfig {
    pub fn params(&self) -> LadderParams {
        let mut p = LadderParams::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.fs_series, self.fs_series_hz);
        set(&mut p.fs_shunt, self.fs_shunt_hz);
        set(&mut p.kt2, self.kt2);
        set(&mut p.q, self.q);
        set(&mut p.c0_series, self.c0_series_f);
        set(&mut p.c0_shunt, self.c0_shunt_f);
        set(&mut p.rs, self.rs_ohm);
        set(&mut p.ls_series, self.ls_series_h);
        set(&mut p.ls_shunt, self.ls_shunt_h);
        set(&mut p.cp, self.cp_f);
        set(&mut p.z0, self.z0_ohm);
        if let Some(m) = self.shunt_multiplicity {
            p.shunt_multiplicity = m;
        }
        p
    }

    pub fn first(&self) -> StageKind {
        self.first.unwrap_or(Kind::Series).into()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpurConfig {
    pub freq_hz: f64,
    pub kt2: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub fs_hz: f64,
    pub kt2: f64,
    pub q: f64,
    pub c0_f: f64,
    #[serde(default)]
    pub rs_ohm: f64,
    #[serde(default)]
    pub ls_h: f64,
    #[serde(default)]
    pub spurs: Vec<SpurConfig>,
}

impl ResonatorConfig {
    fn spec(&self) -> Result<ResonatorSpec> {
        ResonatorSpec::new(self.fs_hz, self.kt2, self.q, self.c0_f)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kind: Kind,
    pub resonator: ResonatorConfig,
    #[serde(default = "one")]
    pub multiplicity: u32,
    #[serde(default)]
    pub inductance_h: f64,
}

fn one() -> u32 {
    1
}

fn fifty() -> f64 {
    50.0
}

/// Arbitrary stage list.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "fifty")]
    pub z0_ohm: f64,
    #[serde(default)]
    pub cp_f: f64,
    pub stages: Vec<StageConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub prefix: Option<String>,
    pub format: Option<String>,
    pub unit: Option<String>,
}

impl OutputConfig {
    pub fn format(&self) -> Result<DataFormat> {
        self.format
            .as_deref()
            .map_or(Ok(DataFormat::Ma), str::parse)
    }

    pub fn unit(&self) -> Result<FreqUnit> {
        match self.unit.as_deref() {
            None => Ok(FreqUnit::GHz),
            Some(u) => FreqUnit::ALL
                .into_iter()
                .find(|x| x.to_string().eq_ignore_ascii_case(u))
                .ok_or_else(|| Error::InvalidInput(format!("output.unit: unknown unit '{u}'"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeConfig {
    pub name: String,
    pub initial: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub band_hz: [f64; 2],
    #[serde(default = "unit_weight")]
    pub in_band: f64,
    pub out_of_band: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateName {
    Ladder,
    Resonator,
}

/// One fit job. A ladder template starts from `design` or `ladder`; a
/// resonator template from `resonator` and is compared on the admittance
/// of a shunt element.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub template: TemplateName,
    pub resonator: Option<ResonatorConfig>,
    pub free: Vec<FreeConfig>,
    pub algorithm: Option<AlgorithmName>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub weights: Option<WeightConfig>,
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            algorithm: match self.algorithm.unwrap_or(AlgorithmName::LevenbergMarquardt) {
                AlgorithmName::LevenbergMarquardt => Algorithm::LevenbergMarquardt,
                AlgorithmName::NelderMead => Algorithm::NelderMead {
                    restarts: self.restarts.unwrap_or(4),
                },
            },
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol: self.tol.unwrap_or(d.tol),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    pub fn free_params(&self, template: &Template) -> Result<Vec<FreeParam>> {
        self.free
            .iter()
            .map(|f| {
                let initial = match f.initial {
                    Some(v) => v,
                    None => template.get(&f.name)?,
                };
                let mut p = FreeParam::around(f.name.clone(), initial);
                if let Some(lo) = f.lower {
                    p.lower = lo;
                }
                if let Some(hi) = f.upper {
                    p.upper = hi;
                }
                Ok(p)
            })
            .collect()
    }

    pub fn weights(&self, grid: &FrequencyGrid) -> Option<Vec<f64>> {
        self.weights.map(|w| {
            grid.points()
                .iter()
                .map(|f| {
                    if (w.band_hz[0]..=w.band_hz[1]).contains(f) {
                        w.in_band
                    } else {
                        w.out_of_band
                    }
                })
                .collect()
        })
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("config: {e}"),
        })
    }

    fn design_params(&self) -> Result<Option<(LadderParams, usize, StageKind)>> {
        let sources = [
            self.design.is_some(),
            self.ladder.is_some(),
            self.network.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(Error::InvalidInput(
                "config: give at most one of 'design', 'ladder' and 'network'".into(),
            ));
        }
        if let Some(d) = &self.design {
            let n = match d.as_str() {
                "A" | "a" => DESIGN_A_STAGES,
                "B" | "b" => DESIGN_B_STAGES,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "config: design must be \"A\" or \"B\", got \"{d}\""
                    )))
                }
            };
            return Ok(Some((LadderParams::default(), n, StageKind::Series)));
        }
        Ok(self
            .ladder
            .as_ref()
            .map(|l| (l.params(), l.stages, l.first())))
    }

    /// The filter to simulate.
    pub fn filter(&self) -> Result<LadderSpec> {
        if let Some((p, n, first)) = self.design_params()? {
            return p.ladder(n, first);
        }
        let Some(net) = &self.network else {
            return Err(Error::InvalidInput(
                "config: one of 'design', 'ladder' or 'network' is required".into(),
            ));
        };
        let stages = net
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let r = &s.resonator;
                let spurs: Vec<Spur> = r
                    .spurs
                    .iter()
                    .map(|x| Spur {
                        freq: x.freq_hz,
                        kt2: x.kt2,
                        q: x.q,
                    })
                    .collect();
                let model = with_spurious(&derive_mbvd(&r.spec()?)?, &spurs)?
                    .with_parasitics(r.rs_ohm, r.ls_h)
                    .map_err(|e| Error::InvalidInput(format!("stage {i}: {e}")))?;
                Ok(Stage {
                    kind: s.kind.into(),
                    resonator: model,
                    multiplicity: s.multiplicity,
                    inductance: s.inductance_h,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = LadderSpec {
            stages,
            z0: net.z0_ohm,
            cp: net.cp_f,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Starting template of the fit job.
    pub fn template(&self) -> Result<(Template, &FitConfig)> {
        let fit = self
            .fit
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("config: 'fit' section is required".into()))?;
        let t = match fit.template {
            TemplateName::Ladder => {
                let (params, stages, first) = self.design_params()?.ok_or_else(|| {
                    Error::InvalidInput(
                        "config: a ladder template starts from 'design' or 'ladder'".into(),
                    )
                })?;
                params.ladder(stages, first)?;
                Template::Ladder {
                    params,
                    stages,
                    first,
                }
            }
            TemplateName::Resonator => {
                let r = fit.resonator.as_ref().ok_or_else(|| {
                    Error::InvalidInput(
                        "config: fit.resonator is required for this template".into(),
                    )
                })?;
                if !r.spurs.is_empty() {
                    return Err(Error::InvalidInput(
                        "config: fit.resonator does not take spurs".into(),
                    ));
                }
                Template::Resonator {
                    spec: r.spec()?,
                    rs: r.rs_ohm,
                    ls: r.ls_h,
                }
            }
        };
        Ok((t, fit))
    }
}

/// Presets keyed by the `--design` flag.
pub fn preset(name: &str) -> Result<LadderSpec> {
    match name {
        "A" | "a" => Ok(preset_design_a()),
        "B" | "b" => Ok(preset_design_b()),
        _ => Err(Error::InvalidInput(format!(
            "--design must be A or B, got '{name}'"
        ))),
    }
}
