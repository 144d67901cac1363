//! Deterministic SVG line charts from the CSV artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 84.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 4000;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    LoglogV,
    States,
    Positions,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::LoglogV => "loglog_V",
            PlotKind::States => "states",
            PlotKind::Positions => "positions",
        }
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loglog_V" | "loglog_v" => Ok(PlotKind::LoglogV),
            "states" => Ok(PlotKind::States),
            "positions" => Ok(PlotKind::Positions),
            _ => Err(format!("unknown plot kind `{s}` (expected loglog_V, states or positions)")),
        }
    }
}

/// Linear or base-10 logarithmic map from data to pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
    pub px_lo: f64,
    pub px_hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Axis {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if log { 0.5 } else { lo.abs().max(1.0) * 0.05 };
            lo -= pad;
            hi += pad;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log, px_lo, px_hi }
    }

    fn scaled(&self, v: f64) -> f64 {
        if self.log {
            v.log10()
        } else {
            v
        }
    }

    pub fn to_px(&self, v: f64) -> f64 {
        self.px_lo + (self.scaled(v) - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    pub fn from_px(&self, px: f64) -> f64 {
        let s = self.lo + (px - self.px_lo) / (self.px_hi - self.px_lo) * (self.hi - self.lo);
        if self.log {
            10f64.powf(s)
        } else {
            s
        }
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0) as i32;
            (self.lo as i32..=self.hi as i32).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            let span = self.hi - self.lo;
            let raw = span / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last).map(|k| k as f64 * step).collect()
        }
    }

    fn label(&self, v: f64) -> String {
        if self.log {
            format!("1e{}", v.log10().round() as i64)
        } else if v == 0.0 {
            "0".into()
        } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
            format!("{v:.1e}")
        } else {
            let s = format!("{v:.4}");
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Circles drawn at these points, one per series.
    pub markers: Vec<(f64, f64)>,
}

impl Chart {
    fn usable(&self, p: &(f64, f64)) -> bool {
        p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0) && (!self.log_y || p.1 > 0.0)
    }

    pub fn axes(&self) -> (Axis, Axis) {
        let pts = || self.series.iter().flat_map(|s| s.points.iter()).chain(&self.markers).filter(|p| self.usable(p));
        let x = Axis::fit(pts().map(|p| p.0), self.log_x, LEFT, WIDTH - RIGHT);
        let y = Axis::fit(pts().map(|p| p.1), self.log_y, HEIGHT - BOTTOM, TOP);
        (x, y)
    }

    pub fn render(&self, provenance: Option<&str>) -> String {
        let (xa, ya) = self.axes();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        if let Some(p) = provenance {
            let _ = writeln!(s, "<desc>{}</desc>", escape(p));
        }
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        for t in xa.ticks() {
            let px = xa.to_px(t);
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{y1:.2}" x2="{px:.2}" y2="{y0:.2}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 18.0, xa.label(t));
        }
        for t in ya.ticks() {
            let py = ya.to_px(t);
            let _ = writeln!(s, r##"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, ya.label(t));
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<&(f64, f64)> = series.points.iter().filter(|p| self.usable(p)).collect();
            let stride = pts.len().div_ceil(MAX_POINTS).max(1);
            let mut coords = String::new();
            for (i, p) in pts.iter().enumerate() {
                if i % stride == 0 || i + 1 == pts.len() {
                    let _ = write!(coords, "{:.2},{:.2} ", xa.to_px(p.0), ya.to_px(p.1));
                }
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                coords.trim_end(),
                escape(&series.name)
            );
        }
        for (k, m) in self.markers.iter().enumerate() {
            if self.usable(m) {
                let color = PALETTE[k % PALETTE.len()];
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, xa.to_px(m.0), ya.to_px(m.1));
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn parse(text: &str) -> Result<Table, CliError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Input(format!("csv header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Input(format!("csv row {}: {e}", k + 2)))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| CliError::Input(format!("csv row {}: `{f}` is not a number", k + 2))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, names: &[&str], kind: PlotKind) -> Result<Vec<usize>, CliError> {
        names
            .iter()
            .map(|n| {
                self.col(n).ok_or_else(|| {
                    CliError::Input(format!("{} plot needs a `{n}` column; header is {:?}", kind.name(), self.header))
                })
            })
            .collect()
    }
}

/// Builds the chart of `kind` from CSV text.
pub fn chart_from_csv(text: &str, kind: PlotKind, title: &str) -> Result<Chart, CliError> {
    let table = Table::parse(text)?;
    match kind {
        PlotKind::LoglogV => {
            let t = table.require(&["t"], kind)?[0];
            let v = table
                .col("meanV")
                .or_else(|| table.col("V"))
                .ok_or_else(|| CliError::Input(format!("loglog_V plot needs a `meanV` or `V` column; header is {:?}", table.header)))?;
            Ok(Chart {
                title: title.into(),
                x_label: "t".into(),
                y_label: table.header[v].clone(),
                log_x: true,
                log_y: true,
                series: vec![Series { name: table.header[v].clone(), points: table.rows.iter().map(|r| (r[t], r[v])).collect() }],
                markers: vec![],
            })
        }
        PlotKind::States => {
            let t = table.require(&["t"], kind)?[0];
            let cols: Vec<usize> = (0..table.header.len()).filter(|&k| table.header[k].starts_with("x_")).collect();
            if cols.is_empty() {
                return Err(CliError::Input(format!("states plot needs x_1.. columns; header is {:?}", table.header)));
            }
            Ok(Chart {
                title: title.into(),
                x_label: "t".into(),
                y_label: "state".into(),
                log_x: false,
                log_y: false,
                series: cols
                    .iter()
                    .map(|&c| Series { name: table.header[c].clone(), points: table.rows.iter().map(|r| (r[t], r[c])).collect() })
                    .collect(),
                markers: vec![],
            })
        }
        PlotKind::Positions => {
            let c = table.require(&["l", "agent", "px", "py"], kind)?;
            let mut paths: BTreeMap<i64, Vec<(f64, f64, f64)>> = BTreeMap::new();
            for r in &table.rows {
                paths.entry(r[c[1]] as i64).or_default().push((r[c[0]], r[c[2]], r[c[3]]));
            }
            let mut series = Vec::new();
            let mut markers = Vec::new();
            for (agent, mut p) in paths {
                p.sort_by(|a, b| a.0.total_cmp(&b.0));
                markers.push((p[0].1, p[0].2));
                series.push(Series { name: format!("agent {agent}"), points: p.iter().map(|q| (q.1, q.2)).collect() });
            }
            Ok(Chart {
                title: title.into(),
                x_label: "x (km)".into(),
                y_label: "y (km)".into(),
                log_x: false,
                log_y: false,
                series,
                markers,
            })
        }
    }
}

/// SVG for `kind` from CSV text.
pub fn emit_plot(text: &str, kind: PlotKind, title: &str, provenance: Option<&str>) -> Result<String, CliError> {
    Ok(chart_from_csv(text, kind, title)?.render(provenance))
}
