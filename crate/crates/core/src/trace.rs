//! Trace files: `#`-prefixed metadata lines followed by a CSV table with one
//! row per iteration. Numbers use Rust's shortest round-trip formatting, so
//! parsing a file recovers every value exactly.

use std::io::Write;

use crate::adjoint::{ParamKind, ParameterVector};
use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::optim::IterationTrace;
use crate::wave::wrap_phase;

pub const FIXED_COLUMNS: [&str; 4] = ["iteration", "g", "gradient_norm", "step"];

/// Ordered `key: value` metadata written above the table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceHeader {
    pub entries: Vec<(String, String)>,
}

impl TraceHeader {
    pub fn new(scenario: &str, hash: &str, seed: u64) -> Self {
        TraceHeader {
            entries: vec![
                ("scenario".into(), scenario.into()),
                ("hash".into(), hash.into()),
                ("seed".into(), seed.to_string()),
            ],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// One column name per tunable, with 1-based vertex and lead numbers.
pub fn parameter_columns(params: &ParameterVector, graph: &MetricGraph) -> Vec<String> {
    params
        .entries()
        .iter()
        .map(|p| match p.kind {
            ParamKind::BondLength(b) => {
                let bond = graph.bond(b);
                format!("dL_{}_{}_cm", bond.n + 1, bond.m + 1)
            }
            ParamKind::ShifterTravel(b) => {
                let bond = graph.bond(b);
                format!("shifter_{}_{}_mm", bond.n + 1, bond.m + 1)
            }
            ParamKind::Amplitude(l) => format!("A_{}", l + 1),
            ParamKind::Phase(l) => format!("theta_{}_deg", l + 1),
        })
        .collect()
}

/// Converts realized SI parameter values to display units: bond changes in
/// cm relative to the starting length, shifter travel in mm, phases in degrees.
pub fn display_values(params: &ParameterVector, values: &[f64]) -> Vec<f64> {
    params
        .entries()
        .iter()
        .zip(values)
        .map(|(p, &v)| match p.kind {
            ParamKind::BondLength(_) => (v - p.value) * 100.0,
            ParamKind::ShifterTravel(_) => v * 1000.0,
            ParamKind::Amplitude(_) => v,
            ParamKind::Phase(_) => wrap_phase(v).to_degrees(),
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_trace<W: Write>(
    mut out: W,
    header: &TraceHeader,
    trace: &IterationTrace,
    params: &ParameterVector,
    graph: &MetricGraph,
) -> Result<()> {
    for (k, v) in &header.entries {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let columns: Vec<String> = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(parameter_columns(params, graph))
        .collect();
    w.write_record(&columns).map_err(csv_err)?;
    for r in &trace.records {
        let mut row = vec![
            r.iteration.to_string(),
            r.value.to_string(),
            r.gradient_norm.to_string(),
            r.step.to_string(),
        ];
        row.extend(display_values(params, &r.params).iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub header: TraceHeader,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParsedTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn g_series(&self) -> Vec<f64> {
        self.column("g").unwrap_or_default()
    }
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace> {
    let mut header = TraceHeader::default();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else { break };
        body_start += line.len();
        let rest = rest.trim();
        match rest.split_once(':') {
            Some((k, v)) => header.entries.push((k.trim().to_string(), v.trim().to_string())),
            None => return Err(Error::Io(format!("malformed trace header line {line:?}"))),
        }
    }
    let mut reader = csv::Reader::from_reader(&text.as_bytes()[body_start..]);
    let columns: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if columns.len() < FIXED_COLUMNS.len() || columns.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Io(format!("trace columns must start with {FIXED_COLUMNS:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Io(format!("trace row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(ParsedTrace { header, columns, rows })
}

/// Static line plot of `g` against iteration. Uses a log axis when every
/// value is positive and they span more than two decades.
pub fn render_svg(title: &str, iterations: &[f64], values: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 56.0;
    let points: Vec<(f64, f64)> = iterations
        .iter()
        .zip(values)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let positive = points.iter().all(|p| p.1 > 0.0);
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let log = positive && !points.is_empty() && hi / lo > 100.0;
    let ty = |y: f64| if log { y.log10() } else { y };
    let (mut y0, mut y1) = if points.is_empty() {
        (0.0, 1.0)
    } else {
        (ty(lo), ty(hi))
    };
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let x1 = points.last().map(|p| p.0).unwrap_or(1.0).max(1.0);
    let sx = |x: f64| PAD + x / x1 * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (ty(y) - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let label = |v: f64| if log { format!("1e{v:.1}") } else { format!("{v:.4}") };
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect width="100%" height="100%" fill="white"/>
<text x="{tx}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>
<line x1="{PAD}" y1="{yb}" x2="{xr}" y2="{yb}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{yb}" stroke="black"/>
<text x="{tx}" y="{xl}" text-anchor="middle" font-family="sans-serif" font-size="12">iteration (0 to {x1})</text>
<text x="4" y="{PAD}" font-family="sans-serif" font-size="11">{top}</text>
<text x="4" y="{yb}" font-family="sans-serif" font-size="11">{bottom}</text>
<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>
</svg>
"##,
        tx = W / 2.0,
        yb = H - PAD,
        xr = W - PAD,
        xl = H - PAD / 3.0,
        top = label(y1),
        bottom = label(y0),
        title = title.replace('&', "&amp;").replace('<', "&lt;"),
        pts = path.join(" "),
    )
}
