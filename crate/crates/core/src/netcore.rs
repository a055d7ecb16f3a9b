//! Two-port network algebra over a frequency grid.
//!
//! Networks are carried as per-point ABCD matrices. Series and shunt
//! elements, cascades and parallel connections are all expressed in ABCD
//! form; S-parameters are produced at a real reference impedance.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Series resistance (ohm) inserted into both through paths when a parallel
/// connection meets `|Ba + Bb| < SINGULAR_B_OHM`.
pub const PERTURBATION_OHM: f64 = 1e-12;
pub const SINGULAR_B_OHM: f64 = 1e-18;

/// Ordered list of sweep frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "frequency grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, &f) in points.iter().enumerate() {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "frequency point {i} is not a positive finite value: {f}"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "frequency grid not strictly increasing at index {}: {} -> {}",
                i + 1,
                points[i],
                points[i + 1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "linspace needs at least 2 points, got {n}"
            )));
        }
        let step = (stop - start) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        // pin the last point so it is exactly `stop`
        points[n - 1] = stop;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn stop(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|f| 2.0 * PI * f)
    }

    /// Same grid with every frequency multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|f| f * factor).collect())
    }
}

/// One ABCD (transmission) matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Abcd {
    pub const IDENTITY: Abcd = Abcd {
        a: C64::new(1.0, 0.0),
        b: C64::new(0.0, 0.0),
        c: C64::new(0.0, 0.0),
        d: C64::new(1.0, 0.0),
    };

    pub fn series(z: C64) -> Self {
        Abcd {
            b: z,
            ..Self::IDENTITY
        }
    }

    pub fn shunt(y: C64) -> Self {
        Abcd {
            c: y,
            ..Self::IDENTITY
        }
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Mul for Abcd {
    type Output = Abcd;

    fn mul(self, r: Abcd) -> Abcd {
        Abcd {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

/// A two-port network sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPortAbcd {
    grid: FrequencyGrid,
    points: Vec<Abcd>,
    /// Determinant per point, carried through every operation rather than
    /// recomputed as `AD - BC`, which cancels badly when entries are large.
    dets: Vec<C64>,
    /// Grid indices where a singular parallel connection was perturbed.
    perturbed: Vec<usize>,
}

impl TwoPortAbcd {
    pub fn from_points(grid: &FrequencyGrid, points: Vec<Abcd>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} ABCD points for a {}-point grid",
                points.len(),
                grid.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite ABCD entry at {} Hz",
                grid.points()[i]
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            dets: points.iter().map(Abcd::det).collect(),
            points,
            perturbed: Vec::new(),
        })
    }

    pub fn identity(grid: &FrequencyGrid) -> Self {
        Self {
            grid: grid.clone(),
            points: vec![Abcd::IDENTITY; grid.len()],
            dets: vec![C64::new(1.0, 0.0); grid.len()],
            perturbed: Vec::new(),
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn points(&self) -> &[Abcd] {
        &self.points
    }

    pub fn perturbed(&self) -> &[usize] {
        &self.perturbed
    }

    /// Tracked determinant per point (exactly 1 for reciprocal builds).
    pub fn dets(&self) -> &[C64] {
        &self.dets
    }

    fn check_grid(&self, other: &TwoPortAbcd) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Dimension(format!(
                "networks sampled on different grids ({} vs {} points)",
                self.grid.len(),
                other.grid.len()
            )));
        }
        Ok(())
    }
}

fn check_values(grid: &FrequencyGrid, values: &[C64], what: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} {what} values for a {}-point grid",
            values.len(),
            grid.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite {what} at {} Hz",
            grid.points()[i]
        )));
    }
    Ok(())
}

/// Series impedance `z` (ohm) between the ports: `[[1, Z], [0, 1]]`.
pub fn series_element(grid: &FrequencyGrid, z: &[C64]) -> Result<TwoPortAbcd> {
    check_values(grid, z, "impedance")?;
    TwoPortAbcd::from_points(grid, z.iter().map(|&z| Abcd::series(z)).collect())
}

/// Shunt admittance `y` (S) to ground: `[[1, 0], [Y, 1]]`.
pub fn shunt_element(grid: &FrequencyGrid, y: &[C64]) -> Result<TwoPortAbcd> {
    check_values(grid, y, "admittance")?;
    TwoPortAbcd::from_points(grid, y.iter().map(|&y| Abcd::shunt(y)).collect())
}

/// Chains `networks` port 2 to port 1, in list order.
pub fn cascade(grid: &FrequencyGrid, networks: &[TwoPortAbcd]) -> Result<TwoPortAbcd> {
    let mut out = TwoPortAbcd::identity(grid);
    for n in networks {
        out.check_grid(n)?;
        for (acc, p) in out.points.iter_mut().zip(&n.points) {
            *acc = *acc * *p;
        }
        for (acc, d) in out.dets.iter_mut().zip(&n.dets) {
            *acc *= *d;
        }
        out.perturbed.extend_from_slice(&n.perturbed);
    }
    out.perturbed.sort_unstable();
    out.perturbed.dedup();
    Ok(out)
}

/// Parallel connection of two two-ports (admittance matrices add).
///
/// Evaluated in closed ABCD form, which equals converting both networks to
/// Y, summing, and converting back, but stays finite when one of the two
/// `B` entries is zero. Points where `Ba + Bb` vanishes get
/// [`PERTURBATION_OHM`] added to both `B` entries and are recorded in
/// [`TwoPortAbcd::perturbed`].
pub fn parallel_combine(a: &TwoPortAbcd, b: &TwoPortAbcd) -> Result<TwoPortAbcd> {
    a.check_grid(b)?;
    let mut perturbed: Vec<usize> = a.perturbed.iter().chain(&b.perturbed).copied().collect();
    let mut points = Vec::with_capacity(a.points.len());
    let mut dets = Vec::with_capacity(a.points.len());
    for (i, (pa, pb)) in a.points.iter().zip(&b.points).enumerate() {
        let (mut ba, mut bb) = (pa.b, pb.b);
        if (ba + bb).norm() < SINGULAR_B_OHM {
            ba += PERTURBATION_OHM;
            bb += PERTURBATION_OHM;
            perturbed.push(i);
        }
        let sum = ba + bb;
        let (da, db) = (a.dets[i], b.dets[i]);
        let det = (da * bb + db * ba) / sum;
        let aa = (pa.a * bb + pb.a * ba) / sum;
        let b_ = ba * bb / sum;
        let d = (pa.d * bb + pb.d * ba) / sum;
        // Two equivalent forms for C; take the one with less cancellation.
        let corr = (pa.a - pb.a) * (pa.d - pb.d) / sum;
        let direct = pa.c + pb.c - corr;
        let direct_scale = pa.c.norm() + pb.c.norm() + corr.norm();
        let via_det_scale = (aa.norm() * d.norm() + det.norm()) / b_.norm();
        let c = if via_det_scale < direct_scale {
            (aa * d - det) / b_
        } else {
            direct
        };
        points.push(Abcd { a: aa, b: b_, c, d });
        dets.push(det);
    }
    perturbed.sort_unstable();
    perturbed.dedup();
    let mut out = TwoPortAbcd::from_points(&a.grid, points)?;
    out.dets = dets;
    out.perturbed = perturbed;
    Ok(out)
}

/// S-parameters of one frequency point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SPoint {
    pub s11: C64,
    pub s12: C64,
    pub s21: C64,
    pub s22: C64,
}

/// Two-port S-parameters on a grid, referenced to a real impedance `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    grid: FrequencyGrid,
    z0: f64,
    points: Vec<SPoint>,
    perturbed: Vec<usize>,
}

impl SMatrix {
    pub fn new(grid: FrequencyGrid, z0: f64, points: Vec<SPoint>) -> Result<Self> {
        if !(z0.is_finite() && z0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference impedance must be positive, got {z0}"
            )));
        }
        if points.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} S-parameter points for a {}-point grid",
                points.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            z0,
            points,
            perturbed: Vec::new(),
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn points(&self) -> &[SPoint] {
        &self.points
    }

    pub fn perturbed(&self) -> &[usize] {
        &self.perturbed
    }

    pub fn s21(&self) -> Vec<C64> {
        self.points.iter().map(|p| p.s21).collect()
    }

    pub fn s11(&self) -> Vec<C64> {
        self.points.iter().map(|p| p.s11).collect()
    }

    /// `20 log10 |S21|` per point.
    pub fn s21_db(&self) -> Vec<f64> {
        self.points.iter().map(|p| to_db(p.s21)).collect()
    }

    /// Copy with each S-parameter transformed by `f(freq_hz, point)`.
    pub fn map_points(&self, mut f: impl FnMut(f64, &SPoint) -> SPoint) -> Self {
        let points = self
            .grid
            .points()
            .iter()
            .zip(&self.points)
            .map(|(&fr, p)| f(fr, p))
            .collect();
        Self {
            grid: self.grid.clone(),
            z0: self.z0,
            points,
            perturbed: self.perturbed.clone(),
        }
    }

    /// Same S-parameters attached to a rescaled frequency axis.
    pub fn with_grid(&self, grid: FrequencyGrid) -> Result<Self> {
        Self::new(grid, self.z0, self.points.clone())
    }
}

pub fn to_db(x: C64) -> f64 {
    20.0 * x.norm().log10()
}

/// Converts an ABCD network to S-parameters referenced to `z0` on both ports.
pub fn abcd_to_s(n: &TwoPortAbcd, z0: f64) -> Result<SMatrix> {
    if !(z0.is_finite() && z0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reference impedance must be positive, got {z0}"
        )));
    }
    let mut points = Vec::with_capacity(n.points.len());
    for ((p, det), &f) in n.points.iter().zip(&n.dets).zip(n.grid.points()) {
        let bz = p.b / z0;
        let cz = p.c * z0;
        let delta = p.a + bz + cz + p.d;
        if delta.norm() == 0.0 || !delta.is_finite() {
            return Err(Error::Singular {
                freq_hz: f,
                what: "ABCD to S denominator is zero".into(),
            });
        }
        points.push(SPoint {
            s11: (p.a + bz - cz - p.d) / delta,
            s12: 2.0 * det / delta,
            s21: 2.0 / delta,
            s22: (-p.a + bz - cz + p.d) / delta,
        });
    }
    let mut s = SMatrix::new(n.grid.clone(), z0, points)?;
    s.perturbed = n.perturbed.clone();
    Ok(s)
}

/// Removes 2*pi jumps between consecutive samples.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in phase {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}

/// Group delay of S21 in seconds, `-(1/2pi) d(phase)/df`.
///
/// Central differences in the interior, one-sided at the ends. Points where
/// the stencil touches a sample with `|S21| = 0` are returned as `None`.
pub fn group_delay(s: &SMatrix) -> Result<Vec<Option<f64>>> {
    let f = s.grid.points();
    let n = f.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "group delay needs at least 3 points, got {n}"
        )));
    }
    let s21 = s.s21();
    let valid: Vec<bool> = s21
        .iter()
        .map(|x| x.norm() > 0.0 && x.is_finite())
        .collect();

    // Unwrap each run of valid samples on its own; gaps break continuity.
    let mut phase = vec![f64::NAN; n];
    let mut i = 0;
    while i < n {
        if !valid[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && valid[i] {
            i += 1;
        }
        let raw: Vec<f64> = s21[start..i].iter().map(|x| x.arg()).collect();
        phase[start..i].copy_from_slice(&unwrap_phase(&raw));
    }

    let slope = |lo: usize, hi: usize| -> Option<f64> {
        if valid[lo] && valid[hi] && (lo..=hi).all(|k| valid[k]) {
            Some(-(phase[hi] - phase[lo]) / (f[hi] - f[lo]) / (2.0 * PI))
        } else {
            None
        }
    };
    Ok((0..n)
        .map(|k| match k {
            0 => slope(0, 1),
            k if k == n - 1 => slope(n - 2, n - 1),
            k => slope(k - 1, k + 1),
        })
        .collect())
}
