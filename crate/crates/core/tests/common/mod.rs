//! Shared helpers for the integration tests, including a nodal-analysis
//! solver that shares no code with the ABCD path.

#![allow(dead_code)]

use std::f64::consts::PI;

use a1filter::ladder::{LadderSpec, StageKind};
use a1filter::netcore::{FrequencyGrid, SPoint, C64};
use a1filter::resonator::{MbvdModel, MotionalBranch};
use rand::Rng;

/// Series R-L-C impedance written out from the element values.
fn rlc(b: &MotionalBranch, w: f64) -> C64 {
    C64::new(b.r, w * b.l - 1.0 / (w * b.c))
}

/// Impedance of one resonator copy from its raw elements.
fn resonator_z(m: &MbvdModel, w: f64) -> C64 {
    let mut y = C64::new(0.0, w * m.c0);
    for b in m.main.iter().chain(&m.spurious) {
        y += rlc(b, w).inv();
    }
    y.inv() + C64::new(m.rs, w * m.ls)
}

/// Dense complex solve with partial pivoting.
fn solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// S-parameters of `spec` by modified nodal analysis with matched
/// terminations: a Norton source of `2/z0` drives one port, so that
/// `S_ii = V_i - 1` and `S_ji = V_j`.
pub fn mna_s(spec: &LadderSpec, grid: &FrequencyGrid) -> Vec<SPoint> {
    // node 0 is port 1; each series stage opens a new node
    let mut edges: Vec<(usize, Option<usize>, usize)> = Vec::new();
    let mut node = 0;
    for (k, st) in spec.stages.iter().enumerate() {
        match st.kind {
            StageKind::Series => {
                edges.push((node, Some(node + 1), k));
                node += 1;
            }
            StageKind::Shunt => edges.push((node, None, k)),
        }
    }
    let nodes = node + 1;
    let p2 = node;
    let z0 = spec.z0;
    grid.points()
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let zero = C64::new(0.0, 0.0);
            let mut y = vec![vec![zero; nodes]; nodes];
            let mut stamp = |a: usize, b: Option<usize>, adm: C64| {
                y[a][a] += adm;
                if let Some(b) = b {
                    y[b][b] += adm;
                    y[a][b] -= adm;
                    y[b][a] -= adm;
                }
            };
            for &(a, b, k) in &edges {
                let st = &spec.stages[k];
                let z = resonator_z(&st.resonator, w) + C64::new(0.0, w * st.inductance);
                stamp(a, b, z.inv() * st.multiplicity as f64);
            }
            if spec.cp > 0.0 {
                stamp(0, Some(p2), C64::new(0.0, w * spec.cp));
            }
            let g = C64::new(1.0 / z0, 0.0);
            y[0][0] += g;
            y[p2][p2] += g;
            let drive = |port: usize| {
                let mut rhs = vec![zero; nodes];
                rhs[port] = C64::new(2.0 / z0, 0.0);
                solve(y.clone(), rhs)
            };
            let v1 = drive(0);
            let v2 = drive(p2);
            let one = C64::new(1.0, 0.0);
            SPoint {
                s11: v1[0] - one,
                s21: v1[p2],
                s12: v2[0],
                s22: v2[p2] - one,
            }
        })
        .collect()
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Random MBVD resonator in a physical range.
pub fn random_resonator(rng: &mut impl Rng) -> MbvdModel {
    use a1filter::resonator::{derive_mbvd, with_spurious, ResonatorSpec, Spur};
    let spec = ResonatorSpec::new(
        rng.random_range(3.5e9..5.5e9),
        rng.random_range(0.05..0.45),
        rng.random_range(50.0..2000.0),
        rng.random_range(50e-15..1000e-15),
    )
    .unwrap();
    let mut m = derive_mbvd(&spec).unwrap();
    if rng.random_bool(0.3) {
        let spur = Spur {
            freq: spec.fs * rng.random_range(1.05..1.3),
            kt2: rng.random_range(0.002..0.02),
            q: rng.random_range(100.0..1000.0),
        };
        m = with_spurious(&m, &[spur]).unwrap();
    }
    m.with_parasitics(rng.random_range(0.0..8.0), rng.random_range(0.0..0.5e-9))
        .unwrap()
}

/// Random ladder of 1..=6 stages with at least one series stage.
pub fn random_ladder(rng: &mut impl Rng) -> LadderSpec {
    use a1filter::ladder::Stage;
    let n = rng.random_range(1..=6);
    let series_at = rng.random_range(0..n);
    let stages = (0..n)
        .map(|k| Stage {
            kind: if k == series_at || rng.random_bool(0.5) {
                StageKind::Series
            } else {
                StageKind::Shunt
            },
            resonator: random_resonator(rng),
            multiplicity: rng.random_range(1..=3),
            inductance: rng.random_range(0.0..0.5e-9),
        })
        .collect();
    LadderSpec {
        stages,
        z0: 50.0,
        cp: if rng.random_bool(0.5) {
            rng.random_range(1e-15..40e-15)
        } else {
            0.0
        },
    }
}

/// Same ladder with every resistive element removed.
pub fn lossless(spec: &LadderSpec) -> LadderSpec {
    let mut out = spec.clone();
    for st in &mut out.stages {
        st.resonator.rs = 0.0;
        for b in st
            .resonator
            .main
            .iter_mut()
            .chain(st.resonator.spurious.iter_mut())
        {
            b.r = 0.0;
        }
    }
    out
}
