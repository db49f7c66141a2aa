//! Minimal SVG rendering of the CSV outputs: scatter plots with an
//! identity line, and line charts with optional log axes.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Result<Axis> {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).collect();
        if vals.is_empty() {
            return Err(Error::Data("nothing to plot".into()));
        }
        let map = |v: f64| if log { v.log10() } else { v };
        let mut lo = vals.iter().copied().map(map).fold(f64::INFINITY, f64::min);
        let mut hi = vals.iter().copied().map(map).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Ok(Axis {
            lo: lo - pad,
            hi: hi + pad,
            log,
        })
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6 + 1).max(1);
            return (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect();
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).collect()
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    svg: String,
    x: Axis,
    y: Axis,
}

impl Canvas {
    fn new(x: Axis, y: Axis, title: &str, x_label: &str, y_label: &str) -> Canvas {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let mut c = Canvas { svg, x, y };
        c.axes(x_label, y_label);
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + self.x.unit(v) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - self.y.unit(v) * (H - TOP - BOTTOM)
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in self.x.ticks() {
            let p = self.px(t);
            let _ = writeln!(
                self.svg,
                r#"<line x1="{p:.1}" y1="{y0}" x2="{p:.1}" y2="{}" stroke="black"/><text x="{p:.1}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 19.0,
                label(t)
            );
        }
        for t in self.y.ticks() {
            let p = self.py(t);
            let _ = writeln!(
                self.svg,
                r#"<line x1="{}" y1="{p:.1}" x2="{x0}" y2="{p:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            self.svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.svg,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Scatter of `(x, y)` pairs with the `y = x` line.
pub fn scatter_svg(points: &[(f64, f64)], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    let all = points.iter().flat_map(|&(a, b)| [a, b]);
    let axis = Axis::fit(all, false)?;
    let mut c = Canvas::new(axis, axis, title, x_label, y_label);
    let (lo, hi) = (axis.lo, axis.hi);
    let _ = writeln!(
        c.svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
        c.px(lo),
        c.py(lo),
        c.px(hi),
        c.py(hi)
    );
    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = writeln!(
            c.svg,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            c.px(x),
            c.py(y),
            COLORS[0]
        );
    }
    Ok(c.finish())
}

/// One polyline with markers per named series.
pub fn lines_svg(
    series: &[(String, Vec<(f64, f64)>)],
    title: &str,
    x_label: &str,
    y_label: &str,
    log_x: bool,
    log_y: bool,
) -> Result<String> {
    let x = Axis::fit(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)), log_x)?;
    let y = Axis::fit(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)), log_y)?;
    let mut c = Canvas::new(x, y, title, x_label, y_label);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let keep = |&&(a, b): &&(f64, f64)| a.is_finite() && b.is_finite() && (!log_x || a > 0.0) && (!log_y || b > 0.0);
        let path: Vec<String> = pts
            .iter()
            .filter(keep)
            .map(|&(a, b)| format!("{:.1},{:.1}", c.px(a), c.py(b)))
            .collect();
        let _ = writeln!(
            c.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for &(a, b) in pts.iter().filter(keep) {
            let _ = writeln!(c.svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, c.px(a), c.py(b));
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            c.svg,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            LEFT + 10.0,
            LEFT + 30.0,
            LEFT + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    Ok(c.finish())
}

fn parse_rows(csv: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines.map(|l| l.split(',').map(|s| s.trim().trim_matches('"').to_string()).collect()).collect();
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Result<Vec<f64>> {
    let i = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Data(format!("CSV lacks column {name}")))?;
    Ok(rows
        .iter()
        .map(|r| r.get(i).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN))
        .collect())
}

/// Renders any CSV produced by the pipeline: prediction scatter, training
/// log, footprint table or ablation table.
pub fn render_csv(csv: &str) -> Result<String> {
    let (header, rows) = parse_rows(csv)?;
    let has = |c: &str| header.iter().any(|h| h == c);
    if has("k_true_mD") && has("k_pred_mD") {
        let t = column(&header, &rows, "k_true_mD")?;
        let p = column(&header, &rows, "k_pred_mD")?;
        let pts: Vec<(f64, f64)> = t.into_iter().zip(p).collect();
        return scatter_svg(&pts, "Predicted vs simulated permeability", "true k (mD)", "predicted k (mD)");
    }
    if has("train_mse") && has("valid_mse") {
        let e = column(&header, &rows, "epoch")?;
        let series = ["train_mse", "valid_mse"]
            .iter()
            .map(|c| Ok((c.to_string(), e.iter().copied().zip(column(&header, &rows, c)?).collect())))
            .collect::<Result<Vec<_>>>()?;
        return lines_svg(&series, "Training log", "epoch", "MSE (normalized)", false, true);
    }
    if has("tokens") && has("bytes") {
        let mi = header.iter().position(|h| h == "model").ok_or_else(|| Error::Data("CSV lacks column model".into()))?;
        let tokens = column(&header, &rows, "tokens")?;
        let bytes = column(&header, &rows, "bytes")?;
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for (k, r) in rows.iter().enumerate() {
            let name = r.get(mi).cloned().unwrap_or_default();
            match series.iter_mut().find(|s| s.0 == name) {
                Some(s) => s.1.push((tokens[k], bytes[k])),
                None => series.push((name, vec![(tokens[k], bytes[k])])),
            }
        }
        return lines_svg(&series, "Activation memory vs token count", "tokens", "bytes", true, true);
    }
    if has("grid") && has("r2") {
        let r2 = column(&header, &rows, "r2")?;
        let gi = header.iter().position(|h| h == "grid").expect("checked");
        let vi = header.iter().position(|h| h == "value").ok_or_else(|| Error::Data("CSV lacks column value".into()))?;
        let grid = rows.first().and_then(|r| r.get(gi)).cloned().unwrap_or_default();
        let values: Vec<String> = rows.iter().map(|r| r.get(vi).cloned().unwrap_or_default()).collect();
        let pts = (0..r2.len()).map(|i| (i as f64 + 1.0, r2[i])).collect();
        let title = format!("Ablation over {grid}: {}", values.join(", "));
        return lines_svg(&[(grid.clone(), pts)], &title, &format!("{grid} (grid index)"), "test R²", false, false);
    }
    Err(Error::Usage(format!("unrecognized CSV columns {header:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_contains_points_and_labels() {
        let svg = render_csv("id,k_true_mD,k_pred_mD\na,20,22\nb,100,90\nc,180,185\n").unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("true k (mD)") && svg.contains("predicted k (mD)"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn log_axes_use_decades() {
        let a = Axis::fit([1e2, 1e6].into_iter(), true).unwrap();
        assert_eq!(a.ticks().len(), 5);
        let svg = render_csv("model,patch,tokens,elements,bytes\nvim,8,512,10,80\nvim,4,4096,80,640\nvim,2,32768,640,5120\nvit,8,512,20,160\nvit,4,4096,900,7200\n").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn unknown_table_is_rejected() {
        assert!(render_csv("a,b\n1,2\n").is_err());
        assert!(render_csv("").is_err());
    }
}
