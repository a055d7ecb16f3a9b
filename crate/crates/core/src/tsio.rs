//! Touchstone v1 two-port files and CSV sweep exports.
//!
//! Data rows hold the frequency followed by S11, S21, S12, S22, each as a
//! pair in the format named by the option line. Angles are in degrees.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::netcore::{group_delay, to_db, FrequencyGrid, SMatrix, SPoint, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    #[default]
    GHz,
}

impl FreqUnit {
    pub const ALL: [FreqUnit; 4] = [FreqUnit::Hz, FreqUnit::KHz, FreqUnit::MHz, FreqUnit::GHz];

    pub fn multiplier(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }
}

impl fmt::Display for FreqUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreqUnit::Hz => "Hz",
            FreqUnit::KHz => "kHz",
            FreqUnit::MHz => "MHz",
            FreqUnit::GHz => "GHz",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    /// Real and imaginary parts.
    Ri,
    /// Magnitude and angle.
    #[default]
    Ma,
    /// Magnitude in dB and angle.
    Db,
}

impl DataFormat {
    pub const ALL: [DataFormat; 3] = [DataFormat::Ri, DataFormat::Ma, DataFormat::Db];

    fn encode(self, z: C64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
            DataFormat::Db => (to_db(z), z.arg().to_degrees()),
        }
    }

    fn decode(self, a: f64, b: f64) -> C64 {
        match self {
            DataFormat::Ri => C64::new(a, b),
            DataFormat::Ma => C64::from_polar(a, b.to_radians()),
            DataFormat::Db => C64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Ok(DataFormat::Ri),
            "MA" => Ok(DataFormat::Ma),
            "DB" => Ok(DataFormat::Db),
            _ => Err(Error::InvalidInput(format!("unknown data format '{s}'"))),
        }
    }
}

/// Option line contents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLine {
    pub unit: FreqUnit,
    pub format: DataFormat,
    /// Reference resistance, ohm.
    pub r: f64,
}

impl Default for OptionLine {
    fn default() -> Self {
        Self {
            unit: FreqUnit::GHz,
            format: DataFormat::Ma,
            r: 50.0,
        }
    }
}

impl fmt::Display for OptionLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "# {} S {} R {}", self.unit, self.format, self.r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchstoneDocument {
    pub options: OptionLine,
    /// Comment text without the leading `!`, in file order.
    pub comments: Vec<String>,
    /// Frequency (in `options.unit`) followed by the eight data columns.
    pub rows: Vec<[f64; 9]>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_option_line(body: &str, line: usize) -> Result<OptionLine> {
    let mut opt = OptionLine::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opt.unit = FreqUnit::Hz,
            "KHZ" => opt.unit = FreqUnit::KHz,
            "MHZ" => opt.unit = FreqUnit::MHz,
            "GHZ" => opt.unit = FreqUnit::GHz,
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err(perr(line, format!("unsupported parameter type '{tok}'")))
            }
            "RI" => opt.format = DataFormat::Ri,
            "MA" => opt.format = DataFormat::Ma,
            "DB" => opt.format = DataFormat::Db,
            "R" => {
                let v = tokens
                    .next()
                    .ok_or_else(|| perr(line, "'R' without a reference resistance"))?;
                let r: f64 = v
                    .parse()
                    .map_err(|_| perr(line, format!("invalid reference resistance '{v}'")))?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(perr(
                        line,
                        format!("reference resistance must be > 0, got {v}"),
                    ));
                }
                opt.r = r;
            }
            _ => return Err(perr(line, format!("unknown option token '{tok}'"))),
        }
    }
    Ok(opt)
}

/// Parses a two-port Touchstone v1 document.
pub fn parse(text: &str) -> Result<(SMatrix, TouchstoneDocument)> {
    let mut options: Option<OptionLine> = None;
    let mut comments = Vec::new();
    let mut rows: Vec<[f64; 9]> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let (body, comment) = match raw.find('!') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            comments.push(c.to_string());
        }
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('#') {
            if !rows.is_empty() {
                return Err(perr(line, "option line after data"));
            }
            // later option lines are ignored, as in Touchstone v1
            if options.is_none() {
                options = Some(parse_option_line(rest, line)?);
            }
            continue;
        }
        if body.starts_with('[') {
            return Err(perr(line, "Touchstone v2 keywords are not supported"));
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(perr(
                line,
                format!("expected 9 numeric columns, found {}", fields.len()),
            ));
        }
        let mut row = [0.0_f64; 9];
        for (k, tok) in fields.iter().enumerate() {
            row[k] = tok
                .parse()
                .map_err(|_| perr(line, format!("invalid number '{tok}' in column {}", k + 1)))?;
        }
        if !(row[0].is_finite() && row[0] > 0.0) {
            return Err(perr(
                line,
                format!("frequency must be positive, got {}", fields[0]),
            ));
        }
        if let Some(prev) = rows.last() {
            if row[0] <= prev[0] {
                return Err(perr(
                    line,
                    format!(
                        "frequency {} does not increase (previous {})",
                        fields[0], prev[0]
                    ),
                ));
            }
        }
        rows.push(row);
    }
    let options = options.unwrap_or_default();
    if rows.len() < 2 {
        return Err(perr(
            last_line.max(1),
            format!("need at least 2 data rows, found {}", rows.len()),
        ));
    }
    let mult = options.unit.multiplier();
    let grid = FrequencyGrid::new(rows.iter().map(|r| r[0] * mult).collect())
        .map_err(|e| perr(last_line, e.to_string()))?;
    let fmt = options.format;
    let points = rows
        .iter()
        .map(|r| SPoint {
            s11: fmt.decode(r[1], r[2]),
            s21: fmt.decode(r[3], r[4]),
            s12: fmt.decode(r[5], r[6]),
            s22: fmt.decode(r[7], r[8]),
        })
        .collect();
    let s = SMatrix::new(grid, options.r, points).map_err(|e| perr(last_line, e.to_string()))?;
    Ok((
        s,
        TouchstoneDocument {
            options,
            comments,
            rows,
        },
    ))
}

/// Serialises `s` with 17 significant digits.
pub fn write(s: &SMatrix, format: DataFormat, unit: FreqUnit) -> String {
    write_with_comments(s, format, unit, &[])
}

pub fn write_with_comments(
    s: &SMatrix,
    format: DataFormat,
    unit: FreqUnit,
    comments: &[String],
) -> String {
    let mut out = String::new();
    for c in comments {
        out.push('!');
        out.push_str(c);
        out.push('\n');
    }
    let opt = OptionLine {
        unit,
        format,
        r: s.z0(),
    };
    out.push_str(&opt.to_string());
    out.push('\n');
    let mult = unit.multiplier();
    for (f, p) in s.grid().points().iter().zip(s.points()) {
        out.push_str(&format!("{:.16e}", f / mult));
        for z in [p.s11, p.s21, p.s12, p.s22] {
            let (a, b) = format.encode(z);
            out.push_str(&format!(" {a:.16e} {b:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub const CSV_HEADER: &str =
    "freq_hz,s11_re,s11_im,s21_re,s21_im,s12_re,s12_im,s22_re,s22_im,s21_db,gd_ns";

/// CSV export, one row per point. Without metric columns the last two
/// fields (`s21_db`, `gd_ns`) are omitted; an undefined delay is left empty.
pub fn export_csv(s: &SMatrix, with_metrics_columns: bool) -> Result<String> {
    let mut out = String::new();
    if with_metrics_columns {
        out.push_str(CSV_HEADER);
    } else {
        out.push_str(
            CSV_HEADER
                .rsplitn(3, ',')
                .last()
                .expect("header has columns"),
        );
    }
    out.push('\n');
    // delay needs three points; shorter sweeps leave the column empty
    let gd = if with_metrics_columns && s.grid().len() >= 3 {
        group_delay(s)?
    } else {
        vec![None; s.grid().len()]
    };
    for (i, (f, p)) in s.grid().points().iter().zip(s.points()).enumerate() {
        out.push_str(&format!("{f:.16e}"));
        for z in [p.s11, p.s21, p.s12, p.s22] {
            out.push_str(&format!(",{:.16e},{:.16e}", z.re, z.im));
        }
        if with_metrics_columns {
            out.push_str(&format!(",{:.16e},", to_db(p.s21)));
            if let Some(t) = gd[i] {
                out.push_str(&format!("{:.16e}", t * 1e9));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn through_row_in_ri() {
        let (s, doc) =
            parse("# GHz S RI R 50\n4.5 0 0 1 0 0 1 0 0\n4.6 0 0 1 0 0 1 0 0\n").unwrap();
        assert_eq!(s.grid().points()[0], 4.5e9);
        assert_eq!(s.points()[0].s21, C64::new(1.0, 0.0));
        assert_eq!(doc.options.format, DataFormat::Ri);
    }

    #[test]
    fn ma_quarter_turn() {
        let (s, _) = parse("# MHz S MA R 50\n1 0 0 1 90 0 0 0 0\n2 0 0 1 90 0 0 0 0\n").unwrap();
        let z = s.points()[0].s21;
        assert!(z.re.abs() < 1e-15 && (z.im - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bare_option_line_means_defaults() {
        let (s, doc) = parse("#\n1 0 0 0.5 0 0 0 0 0\n2 0 0 0.5 0 0 0 0 0\n").unwrap();
        assert_eq!(doc.options, OptionLine::default());
        assert_eq!(s.grid().points()[1], 2e9);
        assert_eq!(s.z0(), 50.0);
    }

    #[test]
    fn options_in_any_order_and_case() {
        let (s, doc) = parse("# db r 75 khz s\n1 0 0 0 0 0 0 0 0\n2 0 0 0 0 0 0 0 0\n").unwrap();
        assert_eq!(doc.options.unit, FreqUnit::KHz);
        assert_eq!(doc.options.format, DataFormat::Db);
        assert_eq!(s.z0(), 75.0);
    }

    #[test]
    fn db_column_of_half() {
        let g = FrequencyGrid::linspace(1e9, 2e9, 2).unwrap();
        let p = SPoint {
            s11: C64::new(0.0, 0.0),
            s21: C64::new(0.5, 0.0),
            s12: C64::new(0.5, 0.0),
            s22: C64::new(0.0, 0.0),
        };
        let s = SMatrix::new(g, 50.0, vec![p; 2]).unwrap();
        let text = write(&s, DataFormat::Db, FreqUnit::GHz);
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert!((row[3] + 6.0206).abs() < 1e-4);
        let csv = export_csv(&s, true).unwrap();
        let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields.len(), 11);
        assert!((fields[9].parse::<f64>().unwrap() + 6.0206).abs() < 1e-4);
    }

    #[test]
    fn comments_are_kept() {
        let text =
            "! first\n# GHz S RI R 50 ! trailing\n1 0 0 0 0 0 0 0 0\n2 0 0 0 0 0 0 0 0 ! row\n";
        let (_, doc) = parse(text).unwrap();
        assert_eq!(doc.comments, vec![" first", " trailing", " row"]);
    }

    fn line_of(text: &str) -> usize {
        match parse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_carry_lines() {
        assert_eq!(
            line_of("# GHz S RI R 50\n1 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n"),
            3
        );
        assert_eq!(line_of("# GHz S RI R 50\n1 0 0 0 0 0 0 0\n"), 2);
        assert_eq!(line_of("! c\n# GHz S XY R 50\n"), 2);
        assert_eq!(
            line_of("# GHz S RI R 50\n1 0 0 0 0 0 0 0 0\n2 0 0 0 x 0 0 0 0\n"),
            3
        );
        assert_eq!(line_of("# GHz S RI R 0\n"), 1);
        assert_eq!(line_of("# GHz Z RI R 50\n"), 1);
        assert_eq!(line_of("# GHz S RI R 50\n1 0 0 0 0 0 0 0 0\n"), 2);
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("1 0 0 0 0 0 0 0 0\n# GHz S RI\n"), 2);
        let Err(Error::Parse { msg, .. }) = parse("# GHz S QQ R 50\n") else {
            panic!()
        };
        assert!(msg.contains("'QQ'"));
    }

    #[test]
    fn csv_without_metric_columns() {
        let (s, _) = parse("# GHz S RI R 50\n1 0 0 1 0 1 0 0 0\n2 0 0 1 0 1 0 0 0\n").unwrap();
        let csv = export_csv(&s, false).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "freq_hz,s11_re,s11_im,s21_re,s21_im,s12_re,s12_im,s22_re,s22_im"
        );
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 9);
    }
}
