//! Minimal hand-written SVG (and plain text) charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use edgelab_core::analyzer::{read_samples, SampleClass};
use edgelab_core::config;
use edgelab_core::kpis::{boxplot_stats, demanded_throughput, ecdf, Verdict};
use edgelab_core::BoxplotStats64;
use edgelab_core::model::{Encoder, Resolution, Tech, VideoConfig};

use crate::PlotKind;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Classes drawn on a CDF when none is requested: the raw measurements.
const RAW_CLASSES: [SampleClass; 7] = [
    SampleClass::CtrlRtt,
    SampleClass::TcpRtt,
    SampleClass::FrameLatency,
    SampleClass::OwdCtrl,
    SampleClass::OwdPacket,
    SampleClass::OwdFrame,
    SampleClass::Processing,
];

pub fn render(kind: PlotKind, input: &Path, class: Option<&str>, level: f64, ascii: bool) -> Result<String> {
    let class = class.map(|c| c.parse::<SampleClass>().map_err(anyhow::Error::msg)).transpose()?;
    match kind {
        PlotKind::Cdf => {
            if !(level > 0.0 && level < 1.0) {
                bail!("--level must lie in (0, 1)");
            }
            let series = load_series(input, class)?;
            Ok(if ascii { cdf_text(&series, level) } else { cdf_svg(&series, level) })
        }
        PlotKind::Box => {
            let series = if input.is_dir() {
                let class = class.unwrap_or(SampleClass::FrameLatency);
                load_sweep(input, class)?
            } else {
                load_series(input, class)?
            };
            let boxes = series
                .iter()
                .map(|(name, xs)| Ok((name.clone(), boxplot_stats(xs)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(if ascii { box_text(&boxes) } else { box_svg(&boxes) })
        }
        PlotKind::Throughput => {
            let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let cfg = config::parse(&text).with_context(|| format!("{}", input.display()))?;
            let current = cfg.video.map(|v| v.config).unwrap_or_default();
            let bars = throughput_bars(&current);
            Ok(if ascii { throughput_text(&bars) } else { throughput_svg(&bars) })
        }
    }
}

type Series = Vec<(String, Vec<f64>)>;

fn load_series(path: &Path, class: Option<SampleClass>) -> Result<Series> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = read_samples(&text)?;
    let wanted: Vec<SampleClass> = match class {
        Some(c) => vec![c],
        None => RAW_CLASSES.to_vec(),
    };
    let series: Series = wanted
        .into_iter()
        .map(|c| {
            let xs: Vec<f64> = records.iter().filter(|r| r.class == c).map(|r| r.value_ms).collect();
            (c.as_str().to_string(), xs)
        })
        .filter(|(_, xs)| !xs.is_empty())
        .collect();
    if series.is_empty() {
        bail!("{} holds no samples for the requested class", path.display());
    }
    Ok(series)
}

/// One series per scenario subdirectory holding a `samples.ndjson`.
fn load_sweep(dir: &Path, class: SampleClass) -> Result<Series> {
    let mut series = Vec::new();
    for (tech, range) in config::SWEEP {
        let name = format!("{}-{}", tech.label(), range.as_str());
        let path = dir.join(&name).join("samples.ndjson");
        if !path.is_file() {
            continue;
        }
        let mut s = load_series(&path, Some(class))?;
        series.push((name, s.remove(0).1));
    }
    if series.is_empty() {
        bail!("{} contains no scenario samples", dir.display());
    }
    Ok(series)
}

struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Axis {
    fn fit(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let raw = (hi - lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        Axis { lo: (lo / step).floor() * step, hi: (hi / step).ceil() * step, step }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

struct Canvas {
    out: String,
    x: Axis,
    y: Axis,
}

impl Canvas {
    fn new(title: &str, x: Axis, y: Axis, xlabel: &str, ylabel: &str) -> Self {
        let mut c = Canvas { out: String::new(), x, y };
        let _ = writeln!(
            c.out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(c.out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(c.out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
        for t in c.x.ticks() {
            let px = c.px(t);
            let _ = writeln!(c.out, r##"<line x1="{px:.1}" y1="{TOP}" x2="{px:.1}" y2="{}" stroke="#eee"/>"##, H - BOTTOM);
            let _ = writeln!(c.out, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, tick_label(t));
        }
        for t in c.y.ticks() {
            let py = c.py(t);
            let _ = writeln!(c.out, r##"<line x1="{LEFT}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#eee"/>"##, W - RIGHT);
            let _ = writeln!(c.out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick_label(t));
        }
        let _ = writeln!(
            c.out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        let _ = writeln!(c.out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 20.0, esc(xlabel));
        let _ = writeln!(
            c.out,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            esc(ylabel)
        );
        c
    }

    fn px(&self, v: f64) -> f64 {
        self.x.map(v, LEFT, W - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        self.y.map(v, H - BOTTOM, TOP)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dash: Option<&str>) {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            path.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + i as f64 * 16.0;
            let x = W - RIGHT - 150.0;
            let _ = writeln!(self.out, r#"<rect x="{x}" y="{}" width="12" height="3" fill="{color}"/>"#, y - 4.0);
            let _ = writeln!(self.out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, esc(name));
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn bounds(series: &Series) -> (f64, f64) {
    series
        .iter()
        .flat_map(|(_, xs)| xs.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn cdf_svg(series: &Series, level: f64) -> String {
    let (lo, hi) = bounds(series);
    let mut c = Canvas::new("Empirical CDF", Axis::fit(lo.min(0.0), hi), Axis::fit(0.0, 1.0), "latency (ms)", "P(X <= x)");
    let mut legend = Vec::new();
    for (i, (name, xs)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let e = ecdf(xs).expect("non-empty series");
        // step function: horizontal run to each sample, then the jump
        let mut pts = vec![(e.values()[0], 0.0)];
        for (x, p) in e.points() {
            pts.push((x, pts.last().map(|q| q.1).unwrap_or(0.0)));
            pts.push((x, p));
        }
        c.polyline(&pts, color, None);
        let at = e.percentile(level).expect("valid level");
        legend.push((format!("{name} (p{} {at:.2})", tick_label(level * 100.0)), color));
    }
    let (x0, x1) = (c.x.lo, c.x.hi);
    c.polyline(&[(x0, level), (x1, level)], "#555", Some("6 4"));
    let _ = writeln!(c.out, r##"<text x="{}" y="{:.1}" fill="#555">{level}</text>"##, LEFT + 4.0, c.py(level) - 4.0);
    c.legend(&legend);
    c.finish()
}

fn cdf_text(series: &Series, level: f64) -> String {
    let mut s = String::from("class           n        p50        p90     p-level     max\n");
    for (name, xs) in series {
        let e = ecdf(xs).expect("non-empty series");
        let p = |q: f64| e.percentile(q).expect("valid level");
        let _ = writeln!(
            s,
            "{name:<13} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>8.3}",
            e.len(),
            p(0.5),
            p(0.9),
            p(level),
            p(1.0)
        );
    }
    let _ = writeln!(s, "p-level = {level}");
    s
}

fn box_svg(boxes: &[(String, BoxplotStats64)]) -> String {
    let lo = boxes.iter().map(|(_, b)| b.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|(_, b)| b.max).fold(f64::NEG_INFINITY, f64::max);
    let n = boxes.len() as f64;
    let mut c = Canvas::new("Latency distribution", Axis::fit(0.0, n), Axis::fit(lo.min(0.0), hi), "", "latency (ms)");
    // the x axis is categorical: hide numeric tick labels by drawing over them
    let _ = writeln!(
        c.out,
        r#"<rect x="{}" y="{}" width="{}" height="22" fill="white"/>"#,
        LEFT - 20.0,
        H - BOTTOM + 2.0,
        W - LEFT - RIGHT + 40.0
    );
    for (i, (name, b)) in boxes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mid = i as f64 + 0.5;
        let half = 0.2;
        let (xl, xr, xm) = (c.px(mid - half), c.px(mid + half), c.px(mid));
        let (yq1, yq3) = (c.py(b.q1), c.py(b.q3));
        let _ = writeln!(
            c.out,
            r#"<rect x="{xl:.1}" y="{yq3:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            xr - xl,
            (yq1 - yq3).max(0.5)
        );
        let ym = c.py(b.median);
        let _ = writeln!(c.out, r#"<line x1="{xl:.1}" y1="{ym:.1}" x2="{xr:.1}" y2="{ym:.1}" stroke="{color}" stroke-width="2"/>"#);
        for (from, to) in [(b.q1, b.whisker_lo), (b.q3, b.whisker_hi)] {
            let (y0, y1) = (c.py(from), c.py(to));
            let _ = writeln!(c.out, r#"<line x1="{xm:.1}" y1="{y0:.1}" x2="{xm:.1}" y2="{y1:.1}" stroke="{color}"/>"#);
            let _ = writeln!(
                c.out,
                r#"<line x1="{:.1}" y1="{y1:.1}" x2="{:.1}" y2="{y1:.1}" stroke="{color}"/>"#,
                c.px(mid - half / 2.0),
                c.px(mid + half / 2.0)
            );
        }
        for &o in &b.outliers {
            let _ = writeln!(c.out, r#"<circle cx="{xm:.1}" cy="{:.1}" r="2" fill="none" stroke="{color}"/>"#, c.py(o));
        }
        let _ = writeln!(c.out, r#"<text x="{xm:.1}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, esc(name));
    }
    c.finish()
}

fn box_text(boxes: &[(String, BoxplotStats64)]) -> String {
    let mut s = String::from("series             min   whisk_lo         q1     median         q3   whisk_hi        max  outliers\n");
    for (name, b) in boxes {
        let _ = writeln!(
            s,
            "{name:<13} {:>8.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>9}",
            b.min,
            b.whisker_lo,
            b.q1,
            b.median,
            b.q3,
            b.whisker_hi,
            b.max,
            b.outliers.len()
        );
    }
    s
}

struct Bar {
    label: String,
    mbps: f64,
    current: bool,
}

/// Demand of every encoder and resolution at the configured frame rate.
fn throughput_bars(current: &VideoConfig) -> Vec<Bar> {
    let mut bars = Vec::new();
    for enc in [Encoder::Mjpeg, Encoder::H264] {
        for res in Resolution::ALL {
            let mut v = VideoConfig::new(enc, res);
            v.fps = current.fps;
            let is_current = enc == current.encoder && res == current.resolution;
            if is_current {
                v.mean_frame_bytes = current.mean_frame_bytes;
            }
            bars.push(Bar {
                label: format!("{} {}", enc.as_str(), res.as_str()),
                mbps: demanded_throughput(&v).demand_mbps,
                current: is_current,
            });
        }
    }
    bars
}

fn caps() -> [(Tech, f64); 2] {
    [Tech::FourG, Tech::FiveG].map(|t| (t, t.default_bandwidth_cap()))
}

fn throughput_svg(bars: &[Bar]) -> String {
    let top = bars.iter().map(|b| b.mbps).fold(0.0, f64::max).max(caps()[1].1 * 1.1);
    let n = bars.len() as f64;
    let mut c = Canvas::new("Demanded video throughput", Axis::fit(0.0, n), Axis::fit(0.0, top), "", "Mbit/s");
    let _ = writeln!(
        c.out,
        r#"<rect x="{}" y="{}" width="{}" height="22" fill="white"/>"#,
        LEFT - 20.0,
        H - BOTTOM + 2.0,
        W - LEFT - RIGHT + 40.0
    );
    for (i, b) in bars.iter().enumerate() {
        let (xl, xr) = (c.px(i as f64 + 0.15), c.px(i as f64 + 0.85));
        let (y0, y1) = (c.py(0.0), c.py(b.mbps));
        let fill = if b.current { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(c.out, r#"<rect x="{xl:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="{fill}"/>"#, xr - xl, y0 - y1);
        let _ = writeln!(
            c.out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            (xl + xr) / 2.0,
            H - BOTTOM + 16.0,
            esc(&b.label)
        );
    }
    let (x0, x1) = (c.x.lo, c.x.hi);
    for (tech, cap) in caps() {
        c.polyline(&[(x0, cap), (x1, cap)], "#555", Some("6 4"));
        let _ = writeln!(
            c.out,
            r##"<text x="{}" y="{:.1}" fill="#555">{} cap {cap} Mbit/s</text>"##,
            LEFT + 4.0,
            c.py(cap) - 4.0,
            tech.label()
        );
    }
    c.finish()
}

fn throughput_text(bars: &[Bar]) -> String {
    let mut s = String::new();
    for b in bars {
        let d = demanded_throughput_verdicts(b.mbps);
        let _ = writeln!(
            s,
            "{}{:<12} {:>8.2} Mbit/s  4G {:<7} 5G {}",
            if b.current { "*" } else { " " },
            b.label,
            b.mbps,
            d[0],
            d[1]
        );
    }
    for (tech, cap) in caps() {
        let _ = writeln!(s, "{} cap {cap} Mbit/s", tech.label());
    }
    s
}

fn demanded_throughput_verdicts(mbps: f64) -> [&'static str; 2] {
    let t = edgelab_core::kpis::throughput_verdicts(mbps);
    let word = |tech| match t.verdict(tech) {
        Some(Verdict::Fits) => "FITS",
        Some(Verdict::Exceeds) => "EXCEEDS",
        None => "?",
    };
    [word(Tech::FourG), word(Tech::FiveG)]
}
