//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use a1filter::fitting::{
    add_noise, extract_all, fit_model, FitOptions, FreeParam, Observed, Template,
};
use a1filter::ladder::{
    build_network, default_grid, preset_design_a, preset_design_b, LadderParams, LadderSpec,
    StageKind, DESIGN_A_STAGES,
};
use a1filter::metrics::{analyze, ripple_in_window, FilterMetrics};
use a1filter::netcore::{FrequencyGrid, SMatrix, SPoint, C64};
use a1filter::resonator::{admittance, derive_mbvd, with_spurious, ResonatorSpec, Spur};
use a1filter::tsio::{self, DataFormat, FreqUnit};
use a1filter::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn simulate(spec: &LadderSpec) -> (SMatrix, FilterMetrics) {
    let s = build_network(spec, &default_grid()).expect("preset builds");
    let m = analyze(&s).expect("preset has a passband");
    (s, m)
}

fn within(v: f64, center: f64, tol: f64) -> bool {
    (v - center).abs() <= tol
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (s, m) = simulate(&preset_design_a());
    let runtime = t.elapsed().as_secs_f64();
    let _ = s;
    let oob = m.oob_rejection_db.unwrap_or(f64::INFINITY);
    let pass = within(m.il_db, 1.7, 0.4)
        && within(m.fbw_3db * 100.0, 10.0, 1.5)
        && oob <= -11.0
        && m.ripple_db <= 1.0
        && runtime < 1.0;
    outcome(
        pass,
        format!(
            "IL {:.3} dB (1.7 +/- 0.4), FBW {:.2}% (10 +/- 1.5), OoB {:.2} dB (<= -11), ripple {:.3} dB (<= 1), runtime {:.3} s (< 1)",
            m.il_db,
            m.fbw_3db * 100.0,
            oob,
            m.ripple_db,
            runtime
        ),
    )
}

fn criterion_2() -> Outcome {
    let (_, a) = simulate(&preset_design_a());
    let (_, b) = simulate(&preset_design_b());
    let oob = b.oob_rejection_db.unwrap_or(f64::INFINITY);
    let pass = within(b.il_db, 2.7, 0.6)
        && within(b.fbw_3db * 100.0, 8.5, 1.5)
        && oob <= -20.0
        && b.il_db > a.il_db;
    outcome(
        pass,
        format!(
            "IL {:.3} dB (2.7 +/- 0.6), FBW {:.2}% (8.5 +/- 1.5), OoB {:.2} dB (<= -20), IL_B {:.3} > IL_A {:.3}",
            b.il_db,
            b.fbw_3db * 100.0,
            oob,
            b.il_db,
            a.il_db
        ),
    )
}

fn criterion_3() -> Outcome {
    let (_, a) = simulate(&preset_design_a());
    let (_, b) = simulate(&preset_design_b());
    let pass = within(a.fbw_4db * 100.0, 8.7, 1.5) && within(b.fbw_4db * 100.0, 6.0, 1.5);
    outcome(
        pass,
        format!(
            "A {:.2}% (8.7 +/- 1.5), B {:.2}% (6 +/- 1.5)",
            a.fbw_4db * 100.0,
            b.fbw_4db * 100.0
        ),
    )
}

/// Largest delay change between neighbouring passband samples.
fn max_delay_step(s: &SMatrix, m: &FilterMetrics) -> Option<f64> {
    let gd = a1filter::netcore::group_delay(s).ok()?;
    let f = s.grid().points();
    let band: Vec<Option<f64>> = f
        .iter()
        .zip(&gd)
        .filter(|(&x, _)| x >= m.passband.0 && x <= m.passband.1)
        .map(|(_, g)| *g)
        .collect();
    let vals: Option<Vec<f64>> = band.into_iter().collect();
    let vals = vals?;
    if vals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(
        vals.windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max),
    )
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec) in [("A", preset_design_a()), ("B", preset_design_b())] {
        let (s, m) = simulate(&spec);
        let step = max_delay_step(&s, &m);
        // smooth: defined everywhere in band, no jump above 0.5 ns per 1 MHz sample
        let ok = m.gd_variation_s <= 5e-9 && m.gd_gaps == 0 && step.is_some_and(|d| d <= 0.5e-9);
        pass &= ok;
        parts.push(format!(
            "{name}: variation {:.3} ns (<= 5), gaps {}, max step {} ns (<= 0.5)",
            m.gd_variation_s * 1e9,
            m.gd_gaps,
            step.map_or("undefined".to_string(), |d| format!("{:.4}", d * 1e9))
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let spec = ResonatorSpec::new(4.725e9, 0.28, 430.0, 380e-15).unwrap();
    let n = ((5.6e9_f64 - 4.5e9) / 0.1e6).round() as usize + 1;
    let g = FrequencyGrid::linspace(4.5e9, 5.6e9, n).unwrap();
    let y = admittance(&derive_mbvd(&spec).unwrap(), &g);
    match extract_all(&y, &g) {
        Ok(e) => {
            let kt2_err = (e.kt2 / 0.28 - 1.0).abs();
            let kt2_ext_err = (e.kt2_extrema / 0.28 - 1.0).abs();
            let q_err = (e.q.q / 430.0 - 1.0).abs();
            outcome(
                kt2_err < 0.01 && kt2_ext_err < 0.01 && q_err < 0.05,
                format!(
                    "kt2 {:.5} ({:.3}% err, extrema pair {:.3}%; < 1%), Q {:.1} ({:.2}% err; < 5%)",
                    e.kt2,
                    kt2_err * 100.0,
                    kt2_ext_err * 100.0,
                    e.q.q,
                    q_err * 100.0
                ),
            )
        }
        Err(err) => outcome(false, format!("extraction failed: {err}")),
    }
}

fn with_spurs(spec: &LadderSpec, spurs: &[Spur]) -> LadderSpec {
    let mut out = spec.clone();
    for st in &mut out.stages {
        st.resonator = with_spurious(&st.resonator, spurs).unwrap();
    }
    out
}

fn criterion_6() -> Outcome {
    let base = preset_design_a();
    let (_, m) = simulate(&base);
    let (lo, hi) = m.passband;
    let spurs: Vec<Spur> = [(0.25, 0.008), (0.5, 0.005), (0.75, 0.006)]
        .iter()
        .map(|&(t, kt2)| Spur {
            freq: lo + t * (hi - lo),
            kt2,
            q: 500.0,
        })
        .collect();
    let g = default_grid();
    let clean = build_network(&base, &g).unwrap();
    let spurious = build_network(&with_spurs(&base, &spurs), &g).unwrap();
    let r0 = ripple_in_window(&clean, lo, hi).unwrap();
    let r1 = ripple_in_window(&spurious, lo, hi).unwrap();
    outcome(
        spurs.len() >= 3 && spurs.iter().all(|s| s.kt2 >= 0.005) && r1 - r0 >= 2.0,
        format!(
            "{} spurs in band, ripple {:.3} dB -> {:.3} dB (increase {:.3} dB, >= 2)",
            spurs.len(),
            r0,
            r1,
            r1 - r0
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = FrequencyGrid::linspace(3.0e9, 6.0e9, 301).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let spec = common::random_ladder(&mut rng);
        let s = build_network(&spec, &g).unwrap();
        let oracle = common::mna_s(&spec, &g);
        for (p, o) in s.points().iter().zip(&oracle) {
            worst = worst
                .max(common::rel_err(p.s11, o.s11))
                .max(common::rel_err(p.s21, o.s21));
        }
    }
    outcome(
        worst <= 1e-9,
        format!("50 random ladders, worst relative S11/S21 deviation {worst:.2e} (<= 1e-9)"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // offset so no sample lands exactly on a lossless resonance
    let g = FrequencyGrid::linspace(3.0e9 + 0.137e6, 6.0e9 + 0.137e6, 601).unwrap();
    let mut specs: Vec<LadderSpec> = vec![preset_design_a(), preset_design_b()];
    specs.extend((0..30).map(|_| common::random_ladder(&mut rng)));
    let (mut energy, mut recip): (f64, f64) = (0.0, 0.0);
    for spec in &specs {
        let s = build_network(spec, &g).unwrap();
        for p in s.points() {
            recip = recip.max(common::rel_err(p.s12, p.s21));
        }
        let l = build_network(&common::lossless(spec), &g).unwrap();
        for p in l.points() {
            energy = energy.max((p.s11.norm_sqr() + p.s21.norm_sqr() - 1.0).abs());
            recip = recip.max(common::rel_err(p.s12, p.s21));
        }
    }
    outcome(
        energy <= 1e-10 && recip <= 1e-9,
        format!(
            "{} builds, worst ||S11|^2+|S21|^2-1| {energy:.2e} (<= 1e-10), worst |S12-S21| rel {recip:.2e} (<= 1e-9)",
            specs.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let template = Template::Ladder {
        params: LadderParams::default(),
        stages: DESIGN_A_STAGES,
        first: StageKind::Series,
    };
    let truth = template.network(&default_grid()).unwrap();
    let mut worst = [0.0f64; 3];
    let mut converged = 0;
    for seed in 0..20 {
        let obs = Observed::Network(add_noise(&truth, 0.01, seed));
        let free = [
            FreeParam::around("q", 300.0),
            FreeParam::around("rs", 6.0),
            FreeParam::around("cp", 25e-15),
        ];
        let opts = FitOptions {
            seed,
            ..Default::default()
        };
        match fit_model(&obs, &template, &free, None, &opts) {
            Ok(r) => {
                for (w, (v, t)) in worst
                    .iter_mut()
                    .zip(r.values.iter().zip([200.0, 4.0, 15e-15]))
                {
                    *w = w.max((v / t - 1.0).abs());
                }
                converged += usize::from(r.converged);
            }
            Err(_) => worst = [f64::INFINITY; 3],
        }
    }
    outcome(
        worst[0] <= 0.02 && worst[1] <= 0.05 && worst[2] <= 0.05 && converged == 20,
        format!(
            "worst errors Q {:.2}% (<= 2), Rs {:.2}% (<= 5), Cp {:.2}% (<= 5); converged {converged}/20",
            worst[0] * 100.0,
            worst[1] * 100.0,
            worst[2] * 100.0
        ),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng) -> SMatrix {
    let n = rng.random_range(2..40);
    let mut f = rng.random_range(1e3..5e9);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(f);
        f += rng.random_range(1e2..1e8);
    }
    let mut c = || {
        C64::from_polar(
            10f64.powf(rng.random_range(-6.0..0.5)),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        )
    };
    let points = (0..n)
        .map(|_| SPoint {
            s11: c(),
            s21: c(),
            s12: c(),
            s22: c(),
        })
        .collect();
    let z0 = [50.0, 75.0, 100.0, 12.5][rng.random_range(0..4)];
    SMatrix::new(FrequencyGrid::new(pts).unwrap(), z0, points).unwrap()
}

fn parse_line(text: &str) -> Option<usize> {
    match tsio::parse(text) {
        Err(Error::Parse { line, .. }) => Some(line),
        _ => None,
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut combos = std::collections::BTreeSet::new();
    for k in 0..100 {
        let s = random_matrix(&mut rng);
        let fmt = DataFormat::ALL[k % 3];
        let unit = FreqUnit::ALL[(k / 3) % 4];
        combos.insert((fmt.to_string(), unit.to_string()));
        let text = tsio::write(&s, fmt, unit);
        let Ok((back, doc)) = tsio::parse(&text) else {
            return outcome(
                false,
                format!("document {k} ({fmt}, {unit}) failed to parse"),
            );
        };
        if doc.options.format != fmt || doc.options.unit != unit || back.z0() != s.z0() {
            return outcome(
                false,
                format!("document {k}: option line did not round trip"),
            );
        }
        for (a, b) in back.grid().points().iter().zip(s.grid().points()) {
            worst = worst.max((a - b).abs() / b);
        }
        for (p, q) in back.points().iter().zip(s.points()) {
            for (x, y) in [
                (p.s11, q.s11),
                (p.s21, q.s21),
                (p.s12, q.s12),
                (p.s22, q.s22),
            ] {
                worst = worst.max(common::rel_err(x, y));
            }
        }
    }
    let head = "! malformed\n# GHz S RI R 50\n1 0 0 1 0 1 0 0 0\n";
    let malformed: [(&str, String, usize); 8] = [
        (
            "non-monotonic frequency",
            format!("{head}0.5 0 0 1 0 1 0 0 0\n"),
            4,
        ),
        (
            "repeated frequency",
            format!("{head}1 0 0 1 0 1 0 0 0\n"),
            4,
        ),
        ("too few columns", format!("{head}2 0 0 1 0 1 0 0\n"), 4),
        (
            "too many columns",
            format!("{head}2 0 0 1 0 1 0 0 0 0\n"),
            4,
        ),
        (
            "unknown format token",
            "! c\n# GHz S XX R 50\n".to_string(),
            2,
        ),
        (
            "non-numeric value",
            format!("{head}2 0 0 one 0 1 0 0 0\n"),
            4,
        ),
        ("non-positive reference", "# GHz S RI R -5\n".to_string(), 1),
        (
            "option line after data",
            format!("{head}# MHz S MA R 50\n"),
            4,
        ),
    ];
    let mut bad = Vec::new();
    for (name, text, line) in &malformed {
        if parse_line(text) != Some(*line) {
            bad.push(*name);
        }
    }
    outcome(
        worst <= 1e-9 && bad.is_empty() && combos.len() == 12,
        format!(
            "100 documents over {} format/unit pairs, worst relative deviation {worst:.2e} (<= 1e-9); {}/{} malformed inputs rejected at the right line{}",
            combos.len(),
            malformed.len() - bad.len(),
            malformed.len(),
            if bad.is_empty() { String::new() } else { format!(" (missed: {})", bad.join(", ")) }
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("Design A reproduction", criterion_1),
        ("Design B reproduction", criterion_2),
        ("4 dB fractional bandwidth", criterion_3),
        ("group delay", criterion_4),
        ("resonator round trip", criterion_5),
        ("spurious emulation", criterion_6),
        ("network-analysis oracle", criterion_7),
        ("conservation", criterion_8),
        ("fit recovery", criterion_9),
        ("Touchstone round trip", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {}: {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!("acceptance: {}/10 criteria pass", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
