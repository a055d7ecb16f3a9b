//! Parameter extraction from swept admittance and least-squares fitting of
//! circuit templates to observed responses.
//!
//! Fits run in log-parameter space inside box bounds. Two optimizers are
//! available: damped Gauss-Newton (Levenberg-Marquardt) with a central
//! difference Jacobian, and a bounded Nelder-Mead simplex with seeded
//! restarts. Both accept a step only when the cost does not increase.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ladder::{build_network, LadderParams, StageKind};
use crate::netcore::{unwrap_phase, FrequencyGrid, SMatrix, SPoint, C64};
use crate::report::Report;
use crate::resonator::{admittance, derive_mbvd, ResonatorSpec, COUPLING_FACTOR};

/// Fewer samples than this inside the `fs/Q` window triggers a warning.
pub const MIN_POINTS_PER_LINEWIDTH: usize = 5;
/// Relative step (log space) below which a fit is considered converged.
pub const STEP_TOL: f64 = 1e-10;

fn vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    // parabola through three (possibly unevenly spaced) points
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a == 0.0 || !a.is_finite() {
        return x[1];
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * a);
    v.clamp(x[0], x[2])
}

fn check_len(y: &[C64], grid: &FrequencyGrid) -> Result<()> {
    if y.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} admittance values for a {}-point grid",
            y.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Resonance (largest `|Y|`) and anti-resonance (smallest `|Y|` above it),
/// refined by a parabola through `log|Y|`.
pub fn extract_fs_fp(y: &[C64], grid: &FrequencyGrid) -> Result<(f64, f64)> {
    check_len(y, grid)?;
    let f = grid.points();
    let n = f.len();
    let l: Vec<f64> = y.iter().map(|v| v.norm().ln()).collect();
    let imax = (0..n)
        .max_by(|&a, &b| l[a].total_cmp(&l[b]))
        .expect("grid is non-empty");
    if imax == 0 || imax == n - 1 {
        return Err(Error::Extraction(
            "|Y| maximum lies on the sweep boundary; widen the sweep".into(),
        ));
    }
    let imin = (imax + 1..n)
        .min_by(|&a, &b| l[a].total_cmp(&l[b]))
        .expect("imax is interior");
    if imin == n - 1 {
        return Err(Error::Extraction(
            "|Y| minimum lies on the sweep boundary; widen the sweep".into(),
        ));
    }
    let refine = |i: usize| vertex([f[i - 1], f[i], f[i + 1]], [l[i - 1], l[i], l[i + 1]]);
    Ok((refine(imax), refine(imin)))
}

/// Coupling coefficient from a resonance pair; 0 when they coincide.
pub fn extract_kt2(fs: f64, fp: f64) -> Result<f64> {
    if !(fs > 0.0 && fp.is_finite()) || fp < fs {
        return Err(Error::Domain(format!(
            "need 0 < fs <= fp, got fs = {fs}, fp = {fp}"
        )));
    }
    Ok((fp * fp - fs * fs) / (fp * fp) / COUPLING_FACTOR)
}

/// Quality factor estimates at one resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    /// From the phase slope of the admittance with `C0` removed,
    /// `(fs/2)|dphi/df|` at the conductance peak.
    pub q: f64,
    /// From the half-power width of the `Re(Y)` peak, when both crossings
    /// fall inside the sweep.
    pub q_width: Option<f64>,
    /// Samples within `fs/q` of `fs`.
    pub points_in_linewidth: usize,
    /// Set when the sweep is too coarse to resolve the resonance.
    pub warning: Option<String>,
}

/// Motional branch and static capacitance recovered from the conductance
/// peak. `G = Re(Y)` is untouched by a lossless `C0`, so its peak sits at the
/// motional resonance with height `1/R`, and its half-power width is `R/L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionalEstimate {
    pub fs: f64,
    pub fp: f64,
    pub c0: f64,
    pub branch: crate::resonator::MotionalBranch,
    pub kt2: f64,
}

struct Peak {
    f: f64,
    g: f64,
    /// Half-power crossings.
    edges: Option<(f64, f64)>,
}

fn conductance_peak(y: &[C64], f: &[f64], near: f64) -> Option<Peak> {
    let g: Vec<f64> = y.iter().map(|v| v.re).collect();
    let n = g.len();
    // climb to the local maximum nearest the hint
    let mut i = f.partition_point(|&x| x < near).min(n - 1);
    if i > 0 && (near - f[i - 1]) < (f[i] - near) {
        i -= 1;
    }
    loop {
        if i + 1 < n && g[i + 1] > g[i] {
            i += 1;
        } else if i > 0 && g[i - 1] > g[i] {
            i -= 1;
        } else {
            break;
        }
    }
    if i == 0 || i == n - 1 || g[i].is_nan() || g[i] <= 0.0 {
        return None;
    }
    let (x, v) = ([f[i - 1], f[i], f[i + 1]], [g[i - 1], g[i], g[i + 1]]);
    let fv = vertex(x, v);
    // value of the same parabola at its vertex
    let d1 = (v[1] - v[0]) / (x[1] - x[0]);
    let a = ((v[2] - v[1]) / (x[2] - x[1]) - d1) / (x[2] - x[0]);
    let gv = v[0] + d1 * (fv - x[0]) + a * (fv - x[0]) * (fv - x[1]);
    let half = 0.5 * gv;
    let lo = (1..=i).rev().find(|&k| g[k - 1] < half);
    let hi = (i..n - 1).find(|&k| g[k + 1] < half);
    let cross = |a: usize, b: usize| f[a] + (half - g[a]) / (g[b] - g[a]) * (f[b] - f[a]);
    let edges = lo
        .zip(hi)
        .map(|(lo, hi)| (cross(lo - 1, lo), cross(hi, hi + 1)));
    Some(Peak {
        f: fv,
        g: gv,
        edges,
    })
}

/// Static capacitance left after removing the estimated motional branch,
/// taken as the median over samples more than ten linewidths away.
fn static_capacitance(
    y: &[C64],
    f: &[f64],
    fs: f64,
    branch: &crate::resonator::MotionalBranch,
    q: f64,
) -> Option<f64> {
    let mut c: Vec<f64> = f
        .iter()
        .zip(y)
        .filter(|(&x, _)| (x - fs).abs() > 10.0 * fs / q)
        .map(|(&x, v)| {
            let w = 2.0 * PI * x;
            (v.im - branch.admittance(w).im) / w
        })
        .collect();
    if c.is_empty() {
        return None;
    }
    c.sort_by(f64::total_cmp);
    Some(c[c.len() / 2])
}

/// De-embedded motional estimate around the resonance nearest `fs_hint`.
pub fn extract_motional(y: &[C64], grid: &FrequencyGrid, fs_hint: f64) -> Result<MotionalEstimate> {
    check_len(y, grid)?;
    let f = grid.points();
    let peak = conductance_peak(y, f, fs_hint).ok_or_else(|| {
        Error::Extraction("no interior conductance peak near the resonance".into())
    })?;
    let (lo, hi) = peak.edges.ok_or_else(|| {
        Error::Extraction("conductance peak is not resolved inside the sweep".into())
    })?;
    let r = 1.0 / peak.g;
    let ws = 2.0 * PI * peak.f;
    let l = r / (2.0 * PI * (hi - lo));
    let branch = crate::resonator::MotionalBranch {
        r,
        l,
        c: 1.0 / (ws * ws * l),
    };
    let q = peak.f / (hi - lo);
    let c0 = static_capacitance(y, f, peak.f, &branch, q)
        .filter(|c| *c > 0.0)
        .ok_or_else(|| {
            Error::Extraction("static capacitance not observable in the sweep".into())
        })?;
    let ratio = branch.c / (c0 + branch.c);
    Ok(MotionalEstimate {
        fs: peak.f,
        fp: peak.f * (1.0 + branch.c / c0).sqrt(),
        c0,
        branch,
        kt2: ratio / COUPLING_FACTOR,
    })
}

pub fn extract_q(y: &[C64], grid: &FrequencyGrid, fs: f64) -> Result<QEstimate> {
    check_len(y, grid)?;
    let f = grid.points();
    let n = f.len();
    if !(fs > f[0] && fs < f[n - 1]) {
        return Err(Error::Extraction(format!(
            "fs = {fs} Hz is not inside the sweep"
        )));
    }
    // remove C0 when it can be estimated; otherwise use the raw admittance
    let motional = extract_motional(y, grid, fs).ok();
    let (at, c0) = motional.map_or((fs, 0.0), |m| (m.fs, m.c0));
    let phase = unwrap_phase(
        &f.iter()
            .zip(y)
            .map(|(&x, v)| (v - C64::new(0.0, 2.0 * PI * x * c0)).arg())
            .collect::<Vec<_>>(),
    );
    let slope = |i: usize| -> f64 {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        (phase[b] - phase[a]) / (f[b] - f[a])
    };
    // interpolate the central-difference slope to the resonance
    let k = (f.partition_point(|&x| x <= at).max(1) - 1).min(n - 2);
    let t = (at - f[k]) / (f[k + 1] - f[k]);
    let dphi = (1.0 - t) * slope(k) + t * slope(k + 1);
    let q = 0.5 * at * dphi.abs();

    let q_width = conductance_peak(y, f, fs).and_then(|p| p.edges.map(|(lo, hi)| p.f / (hi - lo)));
    let points_in_linewidth = if q.is_finite() && q > 0.0 {
        let half = 0.5 * at / q;
        f.iter().filter(|&&x| (x - at).abs() <= half).count()
    } else {
        0
    };
    let warning = (points_in_linewidth < MIN_POINTS_PER_LINEWIDTH).then(|| {
        format!(
            "only {points_in_linewidth} sample(s) within fs/Q of fs; Q estimate is not resolved"
        )
    });
    Ok(QEstimate {
        q,
        q_width,
        points_in_linewidth,
        warning,
    })
}

/// The whole extraction chain on one admittance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// `|Y|` maximum.
    pub fs: f64,
    /// `|Y|` minimum above `fs`.
    pub fp: f64,
    /// Coupling from the `|Y|` extrema pair. Biased when `kt2 * Q` is small,
    /// because `C0` and loss pull the extrema off the motional values.
    pub kt2_extrema: f64,
    /// Coupling from the de-embedded motional estimate.
    pub kt2: f64,
    pub motional: MotionalEstimate,
    pub q: QEstimate,
}

pub fn extract_all(y: &[C64], grid: &FrequencyGrid) -> Result<Extraction> {
    let (fs, fp) = extract_fs_fp(y, grid)?;
    let motional = extract_motional(y, grid, fs)?;
    Ok(Extraction {
        fs,
        fp,
        kt2_extrema: extract_kt2(fs, fp)?,
        kt2: motional.kt2,
        motional,
        q: extract_q(y, grid, fs)?,
    })
}

/// Circuit whose response is fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum Template {
    /// Alternating ladder built from shared parameters.
    Ladder {
        params: LadderParams,
        stages: usize,
        first: StageKind,
    },
    /// One resonator with series parasitics, compared on admittance.
    Resonator {
        spec: ResonatorSpec,
        rs: f64,
        ls: f64,
    },
}

const LADDER_PARAMS: &[&str] = &[
    "fs_series",
    "fs_shunt",
    "kt2",
    "q",
    "c0_series",
    "c0_shunt",
    "rs",
    "ls_series",
    "ls_shunt",
    "cp",
];
const RESONATOR_PARAMS: &[&str] = &["fs", "kt2", "q", "c0", "rs", "ls"];

impl Template {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            Template::Ladder { .. } => LADDER_PARAMS,
            Template::Resonator { .. } => RESONATOR_PARAMS,
        }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let v = match self {
            Template::Ladder { params: p, .. } => match name {
                "fs_series" => p.fs_series,
                "fs_shunt" => p.fs_shunt,
                "kt2" => p.kt2,
                "q" => p.q,
                "c0_series" => p.c0_series,
                "c0_shunt" => p.c0_shunt,
                "rs" => p.rs,
                "ls_series" => p.ls_series,
                "ls_shunt" => p.ls_shunt,
                "cp" => p.cp,
                _ => return Err(unknown(name, LADDER_PARAMS)),
            },
            Template::Resonator { spec, rs, ls } => match name {
                "fs" => spec.fs,
                "kt2" => spec.kt2,
                "q" => spec.q,
                "c0" => spec.c0,
                "rs" => *rs,
                "ls" => *ls,
                _ => return Err(unknown(name, RESONATOR_PARAMS)),
            },
        };
        Ok(v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match self {
            Template::Ladder { params: p, .. } => match name {
                "fs_series" => &mut p.fs_series,
                "fs_shunt" => &mut p.fs_shunt,
                "kt2" => &mut p.kt2,
                "q" => &mut p.q,
                "c0_series" => &mut p.c0_series,
                "c0_shunt" => &mut p.c0_shunt,
                "rs" => &mut p.rs,
                "ls_series" => &mut p.ls_series,
                "ls_shunt" => &mut p.ls_shunt,
                "cp" => &mut p.cp,
                _ => return Err(unknown(name, LADDER_PARAMS)),
            },
            Template::Resonator { spec, rs, ls } => match name {
                "fs" => &mut spec.fs,
                "kt2" => &mut spec.kt2,
                "q" => &mut spec.q,
                "c0" => &mut spec.c0,
                "rs" => rs,
                "ls" => ls,
                _ => return Err(unknown(name, RESONATOR_PARAMS)),
            },
        };
        *slot = value;
        Ok(())
    }

    /// Response samples compared against [`Observed::samples`].
    fn response(&self, grid: &FrequencyGrid) -> Result<Vec<C64>> {
        match self {
            Template::Ladder {
                params,
                stages,
                first,
            } => {
                let s = build_network(&params.ladder(*stages, *first)?, grid)?;
                Ok(s_samples(&s))
            }
            Template::Resonator { spec, rs, ls } => {
                spec.validate()?;
                let m = derive_mbvd(spec)?.with_parasitics(*rs, *ls)?;
                Ok(admittance(&m, grid))
            }
        }
    }

    /// Two-port response of the template; a resonator is placed in shunt
    /// across a 50 ohm line.
    pub fn network(&self, grid: &FrequencyGrid) -> Result<SMatrix> {
        match self {
            Template::Ladder {
                params,
                stages,
                first,
            } => build_network(&params.ladder(*stages, *first)?, grid),
            Template::Resonator { spec, rs, ls } => {
                // shunt element across a 50 ohm line
                let m = derive_mbvd(spec)?.with_parasitics(*rs, *ls)?;
                let spec = crate::ladder::LadderSpec {
                    stages: vec![crate::ladder::Stage {
                        kind: StageKind::Shunt,
                        resonator: m,
                        multiplicity: 1,
                        inductance: 0.0,
                    }],
                    z0: 50.0,
                    cp: 0.0,
                };
                build_network(&spec, grid)
            }
        }
    }
}

fn unknown(name: &str, known: &[&str]) -> Error {
    Error::Fit(format!(
        "unknown parameter '{name}' (expected one of {})",
        known.join(", ")
    ))
}

/// S21 samples followed by S11 samples.
fn s_samples(s: &SMatrix) -> Vec<C64> {
    let p = s.points();
    p.iter()
        .map(|x| x.s21)
        .chain(p.iter().map(|x| x.s11))
        .collect()
}

/// Data a template is fitted to.
#[derive(Debug, Clone, PartialEq)]
pub enum Observed {
    /// Compared on S21 and S11.
    Network(SMatrix),
    Admittance {
        grid: FrequencyGrid,
        y: Vec<C64>,
    },
}

impl Observed {
    pub fn grid(&self) -> &FrequencyGrid {
        match self {
            Observed::Network(s) => s.grid(),
            Observed::Admittance { grid, .. } => grid,
        }
    }

    fn samples(&self) -> Vec<C64> {
        match self {
            Observed::Network(s) => s_samples(s),
            Observed::Admittance { y, .. } => y.clone(),
        }
    }
}

/// One free parameter with its start value and box.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(name: impl Into<String>, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            initial,
            lower,
            upper,
        }
    }

    /// Free parameter starting at `initial` with a box of one decade each way.
    pub fn around(name: impl Into<String>, initial: f64) -> Self {
        Self::new(name, initial, initial / 10.0, initial * 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    LevenbergMarquardt,
    /// Simplex descent; the first run starts from the initial guess and
    /// `restarts` further runs start from seeded random points.
    NelderMead {
        restarts: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub algorithm: Algorithm,
    pub max_iter: usize,
    /// Relative cost change treated as convergence.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LevenbergMarquardt,
            max_iter: 200,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// RMS weighted complex error, `sqrt(sum w|e|^2 / sum w)`.
    pub residual: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Parameter ended on (within 1e-6 relative of) a bound.
    pub saturated: Vec<bool>,
    /// Residual after each accepted iteration, starting with the initial one.
    pub history: Vec<f64>,
    pub fitted: Template,
}

impl FitResult {
    pub fn report(&self) -> Report {
        let mut r = Report::new();
        for ((name, v), sat) in self.names.iter().zip(&self.values).zip(&self.saturated) {
            r.push(name.clone(), v);
            if *sat {
                r.push(format!("{name}_saturated"), true);
            }
        }
        r.push("residual", self.residual)
            .push("iterations", self.iterations)
            .push("evaluations", self.evaluations)
            .push("converged", self.converged);
        r
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Objective in unit-box coordinates `x` in `[0, 1]^n` (log-scaled).
struct Problem<'a> {
    template: &'a Template,
    grid: &'a FrequencyGrid,
    target: Vec<C64>,
    /// Square roots of the weights, repeated once per sample block.
    sqrt_w: Vec<f64>,
    weight_sum: f64,
    names: Vec<String>,
    log_lo: Vec<f64>,
    log_span: Vec<f64>,
    evaluations: std::cell::Cell<usize>,
}

impl Problem<'_> {
    fn values(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| (self.log_lo[i] + xi.clamp(0.0, 1.0) * self.log_span[i]).exp())
            .collect()
    }

    fn instantiate(&self, x: &[f64]) -> Result<Template> {
        let mut t = self.template.clone();
        for (name, v) in self.names.iter().zip(self.values(x)) {
            t.set(name, v)?;
        }
        Ok(t)
    }

    /// Weighted residual vector, real and imaginary parts interleaved.
    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.evaluations.set(self.evaluations.get() + 1);
        let model = self.instantiate(x).ok()?.response(self.grid).ok()?;
        let mut r = Vec::with_capacity(2 * model.len());
        for ((m, o), w) in model.iter().zip(&self.target).zip(&self.sqrt_w) {
            let e = (m - o) * *w;
            r.push(e.re);
            r.push(e.im);
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn cost(&self, x: &[f64]) -> f64 {
        self.residuals(x)
            .map_or(f64::INFINITY, |r| r.iter().map(|v| v * v).sum())
    }

    fn rms(&self, cost: f64) -> f64 {
        (cost / self.weight_sum).sqrt()
    }
}

/// Weighted least-squares fit of `template` to `observed`.
///
/// `weights` holds one non-negative value per grid point (uniform when
/// `None`); for network data it applies to both S21 and S11.
pub fn fit_model(
    observed: &Observed,
    template: &Template,
    free: &[FreeParam],
    weights: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if free.is_empty() {
        return Err(Error::Fit("no free parameters".into()));
    }
    let grid = observed.grid();
    let target = observed.samples();
    let blocks = target.len() / grid.len();
    let w: Vec<f64> = match weights {
        Some(w) if w.len() != grid.len() => {
            return Err(Error::Dimension(format!(
                "{} weights for a {}-point grid",
                w.len(),
                grid.len()
            )))
        }
        Some(w) => {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::Fit(
                    "weights must be finite, >= 0 and not all zero".into(),
                ));
            }
            w.to_vec()
        }
        None => vec![1.0; grid.len()],
    };
    let mut names = Vec::new();
    let (mut log_lo, mut log_span, mut x0) = (Vec::new(), Vec::new(), Vec::new());
    for p in free {
        template.get(&p.name)?;
        if names.contains(&p.name) {
            return Err(Error::Fit(format!("parameter '{}' listed twice", p.name)));
        }
        if !(p.lower > 0.0 && p.upper > p.lower && p.upper.is_finite()) {
            return Err(Error::Fit(format!(
                "parameter '{}' needs finite bounds with 0 < lower < upper",
                p.name
            )));
        }
        if !(p.initial >= p.lower && p.initial <= p.upper) {
            return Err(Error::Fit(format!(
                "initial value {} of '{}' is outside [{}, {}]",
                p.initial, p.name, p.lower, p.upper
            )));
        }
        let (lo, hi) = (p.lower.ln(), p.upper.ln());
        names.push(p.name.clone());
        log_lo.push(lo);
        log_span.push(hi - lo);
        x0.push((p.initial.ln() - lo) / (hi - lo));
    }
    let sqrt_w: Vec<f64> = (0..blocks)
        .flat_map(|_| w.iter().map(|v| v.sqrt()))
        .collect();
    let problem = Problem {
        template,
        grid,
        target,
        sqrt_w,
        weight_sum: blocks as f64 * w.iter().sum::<f64>(),
        names,
        log_lo,
        log_span,
        evaluations: std::cell::Cell::new(0),
    };
    let c0 = problem.cost(&x0);
    if !c0.is_finite() {
        return Err(Error::Fit(
            "residual is not finite at the initial guess".into(),
        ));
    }
    let run = match opts.algorithm {
        Algorithm::LevenbergMarquardt => levenberg_marquardt(&problem, x0, c0, opts),
        Algorithm::NelderMead { restarts } => {
            nelder_mead_restarts(&problem, x0, c0, restarts, opts)
        }
    };
    if !run.cost.is_finite() {
        return Err(Error::Fit("residual became non-finite".into()));
    }
    let values = problem.values(&run.x);
    let saturated = run
        .x
        .iter()
        .zip(&problem.log_span)
        .map(|(&x, &span)| (x * span).abs() < 1e-6 || ((1.0 - x) * span).abs() < 1e-6)
        .collect();
    Ok(FitResult {
        names: problem.names.clone(),
        values,
        residual: problem.rms(run.cost),
        iterations: run.iterations,
        evaluations: problem.evaluations.get(),
        converged: run.converged,
        saturated,
        history: run.history.iter().map(|&c| problem.rms(c)).collect(),
        fitted: problem.instantiate(&run.x)?,
    })
}

struct Run {
    x: Vec<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
    /// Costs after each accepted step.
    history: Vec<f64>,
}

fn project(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn levenberg_marquardt(p: &Problem, mut x: Vec<f64>, mut cost: f64, opts: &FitOptions) -> Run {
    let n = x.len();
    let h = 1e-6;
    let mut lambda = 1e-3;
    let mut history = vec![cost];
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut r = p.residuals(&x).unwrap_or_default();
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // central-difference Jacobian, one column per parameter
        let mut jac: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 0..n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            match (p.residuals(&xp), p.residuals(&xm)) {
                (Some(a), Some(b)) => {
                    jac.push(a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * h)).collect())
                }
                _ => {
                    // one-sided toward the feasible side
                    let (xa, ra) = match p.residuals(&xp) {
                        Some(a) => (h, a),
                        None => (-h, p.residuals(&xm).unwrap_or_else(|| r.clone())),
                    };
                    jac.push(ra.iter().zip(&r).map(|(u, v)| (u - v) / xa).collect());
                }
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for a in 0..n {
            jtr[a] = jac[a].iter().zip(&r).map(|(u, v)| u * v).sum();
            for b in a..n {
                let s: f64 = jac[a].iter().zip(&jac[b]).map(|(u, v)| u * v).sum();
                jtj[a][b] = s;
                jtj[b][a] = s;
            }
        }
        loop {
            let mut m = jtj.clone();
            for k in 0..n {
                m[k][k] += lambda * jtj[k][k].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(delta) = solve(m, rhs) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break;
                }
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let step = trial
                .iter()
                .zip(&x)
                .zip(&p.log_span)
                .map(|((a, b), s)| ((a - b) * s).abs())
                .fold(0.0, f64::max);
            if step < STEP_TOL {
                converged = true;
                break;
            }
            let c = p.cost(&trial);
            if c <= cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                x = trial;
                cost = c;
                r = p.residuals(&x).unwrap_or_default();
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                converged = rel < opts.tol || cost == 0.0;
                break;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                break;
            }
        }
        if lambda > 1e20 {
            break;
        }
    }
    Run {
        x,
        cost,
        iterations,
        converged,
        history,
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn nelder_mead_restarts(
    p: &Problem,
    x0: Vec<f64>,
    c0: f64,
    restarts: usize,
    opts: &FitOptions,
) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = nelder_mead(p, x0, c0, opts);
    let mut iterations = best.iterations;
    let mut history = best.history.clone();
    for _ in 0..restarts {
        let start: Vec<f64> = (0..best.x.len()).map(|_| rng.random::<f64>()).collect();
        let c = p.cost(&start);
        let run = nelder_mead(p, start, c, opts);
        iterations += run.iterations;
        if run.cost < best.cost {
            best = run;
            history.push(best.cost);
        }
    }
    Run {
        iterations,
        history,
        ..best
    }
}

fn nelder_mead(p: &Problem, x0: Vec<f64>, c0: f64, opts: &FitOptions) -> Run {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), c0)];
    for k in 0..n {
        let mut v = x0.clone();
        v[k] = if v[k] + 0.05 <= 1.0 {
            v[k] + 0.05
        } else {
            v[k] - 0.05
        };
        let c = p.cost(&v);
        simplex.push((v, c));
    }
    let mut history = vec![c0];
    let mut converged = false;
    let mut iterations = 0;
    let at = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        let mut v: Vec<f64> = a.iter().zip(b).map(|(u, w)| u + t * (w - u)).collect();
        project(&mut v);
        v
    };
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        let size = simplex[1..]
            .iter()
            .flat_map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .zip(&p.log_span)
                    .map(|((a, b), s)| ((a - b) * s).abs())
            })
            .fold(0.0, f64::max);
        if (hi - lo) <= opts.tol * lo.abs() || lo == 0.0 || size < STEP_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].0.clone();
        let refl = at(&centroid, &worst, -1.0);
        let cr = p.cost(&refl);
        if cr < simplex[0].1 {
            let exp = at(&centroid, &worst, -2.0);
            let ce = p.cost(&exp);
            simplex[n] = if ce < cr { (exp, ce) } else { (refl, cr) };
        } else if cr < simplex[n - 1].1 {
            simplex[n] = (refl, cr);
        } else {
            let (pt, c) = if cr < simplex[n].1 {
                let v = at(&centroid, &refl, 0.5);
                let c = p.cost(&v);
                (v, c)
            } else {
                let v = at(&centroid, &worst, 0.5);
                let c = p.cost(&v);
                (v, c)
            };
            if c < simplex[n].1.min(cr) {
                simplex[n] = (pt, c);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let v = at(&best, &item.0, 0.5);
                    let c = p.cost(&v);
                    *item = (v, c);
                }
            }
        }
        let b = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        if b < *history.last().expect("seeded with c0") {
            history.push(b);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, cost) = simplex.swap_remove(0);
    Run {
        x,
        cost,
        iterations,
        converged,
        history,
    }
}

/// Copy of `s` with every entry multiplied by `1 + sigma (n1 + j n2)`,
/// `n1, n2` standard normal draws from a seeded stream.
pub fn add_noise(s: &SMatrix, sigma: f64, seed: u64) -> SMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = move || {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        C64::new(1.0 + sigma * a, sigma * b)
    };
    s.map_points(|_, p| SPoint {
        s11: p.s11 * g(),
        s21: p.s21 * g(),
        s12: p.s12 * g(),
        s22: p.s22 * g(),
    })
}
