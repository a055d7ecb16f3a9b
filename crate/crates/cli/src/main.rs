//! `a1filter`: simulate, measure, fit and convert ladder filter responses.
//!
//! Exit codes: 0 ok, 1 output could not be written, 2 invalid input or
//! config, 3 numerical failure, 4 fit did not converge.

mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use a1filter::dispersion::{Anchor, DispersionModel};
use a1filter::fitting::{fit_model, Observed, Template};
use a1filter::ladder::{build_network, default_grid};
use a1filter::metrics::analyze;
use a1filter::netcore::{group_delay, SMatrix, C64};
use a1filter::tsio::{self, DataFormat, FreqUnit, TouchstoneDocument};
use a1filter::{Error, FrequencyGrid};
use clap::{ArgGroup, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "a1filter", version, about = "MBVD ladder filter simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep a reference design or a configured filter.
    #[command(group(ArgGroup::new("source").required(true).args(["design", "config"])))]
    Simulate {
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// start,stop,n in Hz
        #[arg(long)]
        grid: Option<String>,
        /// Output path prefix
        #[arg(long)]
        out: Option<String>,
    },
    /// Figures of merit of a Touchstone file.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also print a CSV header and row
        #[arg(long)]
        csv: bool,
    },
    /// Fit a circuit template to a Touchstone file.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Rewrite a Touchstone file in another data format or as CSV.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        /// RI, MA, DB or csv
        #[arg(long)]
        format: String,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gap to resonance mapping from two anchors.
    #[command(group(ArgGroup::new("query").required(true).args(["target_fs", "gap"])))]
    Dispersion {
        /// g1,f1,g2,f2 (um, Hz)
        #[arg(long)]
        anchors: String,
        #[arg(long)]
        target_fs: Option<f64>,
        #[arg(long)]
        gap: Option<f64>,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Singular { .. } | Error::Analysis(_) | Error::Extraction(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        msg: msg.into(),
    }
}

type Outcome = std::result::Result<(), Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| fail(1, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn load_touchstone(path: &Path) -> std::result::Result<(SMatrix, TouchstoneDocument), Failure> {
    tsio::parse(&read(path)?).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn parse_list(s: &str, n: usize, what: &str) -> std::result::Result<Vec<f64>, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| fail(2, format!("{what}: {e}")))?;
    if v.len() != n {
        return Err(fail(
            2,
            format!(
                "{what}: expected {n} comma-separated values, got {}",
                v.len()
            ),
        ));
    }
    Ok(v)
}

fn parse_grid(s: &str) -> std::result::Result<FrequencyGrid, Failure> {
    let v = parse_list(s, 3, "--grid")?;
    if v[2] < 2.0 || v[2].fract() != 0.0 {
        return Err(fail(
            2,
            format!("--grid: point count must be an integer >= 2, got {}", v[2]),
        ));
    }
    if v[1] <= v[0] {
        return Err(fail(
            2,
            format!(
                "--grid: stop {} must be above start {} (frequencies must increase)",
                v[1], v[0]
            ),
        ));
    }
    Ok(FrequencyGrid::linspace(v[0], v[1], v[2] as usize)?)
}

fn load_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    RunConfig::from_json(&read(path)?).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn report_text(r: &a1filter::report::Report) -> String {
    r.entries()
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

fn print_report(r: &a1filter::report::Report) {
    emit(&report_text(r));
}

fn simulate(
    design: Option<String>,
    cfg: Option<PathBuf>,
    grid: Option<String>,
    out: Option<String>,
) -> Outcome {
    let cfg = cfg.as_deref().map(load_config).transpose()?;
    let spec = match (&design, &cfg) {
        (Some(d), _) => config::preset(d)?,
        (None, Some(c)) => c.filter()?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let grid = match (grid, cfg.as_ref().and_then(|c| c.grid)) {
        (Some(g), _) => parse_grid(&g)?,
        (None, Some(g)) => g.build()?,
        (None, None) => default_grid(),
    };
    let output = cfg.as_ref().and_then(|c| c.output.clone());
    let prefix = out
        .or_else(|| output.as_ref().and_then(|o| o.prefix.clone()))
        .ok_or_else(|| fail(2, "an output prefix is required (--out or output.prefix)"))?;
    // Hz and RI reproduce the in-memory sweep bit for bit
    let (format, unit) = match &output {
        Some(o) => (
            o.format
                .as_ref()
                .map_or(Ok(DataFormat::Ri), |_| o.format())?,
            o.unit.as_ref().map_or(Ok(FreqUnit::Hz), |_| o.unit())?,
        ),
        None => (DataFormat::Ri, FreqUnit::Hz),
    };

    let s = build_network(&spec, &grid)?;
    let comments = vec![format!(
        " {} stages, {}",
        spec.stages.len(),
        spec.topology()
    )];
    write(
        Path::new(&format!("{prefix}.s2p")),
        &tsio::write_with_comments(&s, format, unit, &comments),
    )?;
    write(
        Path::new(&format!("{prefix}.csv")),
        &tsio::export_csv(&s, true)?,
    )?;
    let ghz: Vec<f64> = grid.points().iter().map(|f| f / 1e9).collect();
    let db: Vec<Option<f64>> = s.s21_db().into_iter().map(Some).collect();
    write(
        Path::new(&format!("{prefix}_s21.svg")),
        &svg::line_chart("|S21|", "Frequency (GHz)", "|S21| (dB)", &ghz, &db),
    )?;
    let gd: Vec<Option<f64>> = group_delay(&s)?
        .into_iter()
        .map(|t| t.map(|t| t * 1e9))
        .collect();
    write(
        Path::new(&format!("{prefix}_gd.svg")),
        &svg::line_chart("Group delay", "Frequency (GHz)", "Delay (ns)", &ghz, &gd),
    )?;
    // the sweep is useful even when it has no passband to measure
    let m = analyze(&s).map_err(|e| {
        let mut f = Failure::from(e);
        f.msg = format!("sweep written to {prefix}.*, but {}", f.msg);
        f
    })?;
    print_report(&m.report());
    Ok(())
}

fn metrics(input: &Path, csv: bool) -> Outcome {
    let (s, _) = load_touchstone(input)?;
    let r = analyze(&s)?.report();
    let mut text = report_text(&r);
    if csv {
        text.push_str(&format!("{}\n{}\n", r.csv_header(), r.csv_row()));
    }
    emit(&text);
    Ok(())
}

/// Admittance of a shunt element from the through response of the fixture.
fn shunt_admittance(s: &SMatrix) -> std::result::Result<Vec<C64>, Failure> {
    let z0 = s.z0();
    s.points()
        .iter()
        .zip(s.grid().points())
        .map(|(p, f)| {
            if p.s21.norm() < 1e-15 {
                return Err(fail(
                    3,
                    format!("S21 vanishes at {f} Hz; admittance undefined"),
                ));
            }
            Ok((C64::new(2.0, 0.0) / p.s21 - 2.0) / z0)
        })
        .collect()
}

fn fit(input: &Path, cfg_path: &Path) -> Outcome {
    let cfg = load_config(cfg_path)?;
    let (s, doc) = load_touchstone(input)?;
    let (template, job) = cfg.template()?;
    let observed = match template {
        Template::Ladder { .. } => Observed::Network(s.clone()),
        Template::Resonator { .. } => Observed::Admittance {
            grid: s.grid().clone(),
            y: shunt_admittance(&s)?,
        },
    };
    let free = job.free_params(&template)?;
    let weights = job.weights(s.grid());
    let r = fit_model(
        &observed,
        &template,
        &free,
        weights.as_deref(),
        &job.options(),
    )?;
    print_report(&r.report());

    let fitted = r.fitted.network(s.grid())?;
    let stem = input
        .file_stem()
        .and_then(|x| x.to_str())
        .unwrap_or("input");
    let out = input.with_file_name(format!("{stem}_fit.s2p"));
    let comments = vec![format!(" fitted model, residual {:e}", r.residual)];
    write(
        &out,
        &tsio::write_with_comments(&fitted, doc.options.format, doc.options.unit, &comments),
    )?;
    if !r.converged {
        return Err(fail(
            4,
            format!(
                "fit did not converge after {} iterations (residual {:e})",
                r.iterations, r.residual
            ),
        ));
    }
    Ok(())
}

fn convert(input: &Path, format: &str, out: Option<&Path>) -> Outcome {
    let (s, doc) = load_touchstone(input)?;
    let text = if format.eq_ignore_ascii_case("csv") {
        tsio::export_csv(&s, true)?
    } else {
        let f: DataFormat = format.parse()?;
        tsio::write_with_comments(&s, f, doc.options.unit, &doc.comments)
    };
    match out {
        Some(p) => write(p, &text),
        None => {
            emit(&text);
            Ok(())
        }
    }
}

fn dispersion(anchors: &str, target_fs: Option<f64>, gap: Option<f64>) -> Outcome {
    let v = parse_list(anchors, 4, "--anchors")?;
    let m = DispersionModel::calibrate(
        Anchor {
            gap_um: v[0],
            fs: v[1],
        },
        Anchor {
            gap_um: v[2],
            fs: v[3],
        },
    )?;
    let mut r = a1filter::report::Report::new();
    r.push("f_t_hz", m.f_t).push("c_lat_hz_um", m.c_lat);
    if let Some(f) = target_fs {
        r.push("target_fs_hz", f)
            .push("gap_um", m.gap_for_target(f)?);
    }
    if let Some(g) = gap {
        r.push("gap_um", g).push("fs_hz", m.fs_from_gap(g)?);
    }
    print_report(&r);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Simulate {
            design,
            config,
            grid,
            out,
        } => simulate(design, config, grid, out),
        Cmd::Metrics { input, csv } => metrics(&input, csv),
        Cmd::Fit { input, config } => fit(&input, &config),
        Cmd::Convert { input, format, out } => convert(&input, &format, out.as_deref()),
        Cmd::Dispersion {
            anchors,
            target_fs,
            gap,
        } => dispersion(&anchors, target_fs, gap),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
