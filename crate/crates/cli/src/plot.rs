//! Numeric CSV tables and deterministic SVG line plots.

use std::fmt::Write as _;

use crate::CliError;

/// Header plus numeric rows; `true`/`false` cells read as 1/0.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table, CliError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CliError::Usage("CSV has no header".into()))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != columns.len() {
                return Err(CliError::Usage(format!(
                    "CSV row {} has {} cells, header has {}",
                    i + 2,
                    cells.len(),
                    columns.len()
                )));
            }
            let row = cells
                .iter()
                .map(|c| match *c {
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    other => other
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("CSV row {}: '{other}': {e}", i + 2))),
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn index(&self, name: &str) -> Result<usize, CliError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown column '{name}' (available: {})",
                self.columns.join(", ")
            ))
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Pad a degenerate interval so the axis has non-zero extent.
fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else if lo == 0.0 {
        (-1.0, 1.0)
    } else {
        let d = lo.abs() * 0.5;
        (lo - d, hi + d)
    }
}

/// Render `ys` against `x` as a standalone SVG document. With `log`, the y
/// axis is base 10 and non-positive values break the line.
pub fn render_svg(
    x_name: &str,
    x: &[f64],
    series: &[(String, Vec<f64>)],
    log: bool,
) -> String {
    let map_y = |v: f64| -> Option<f64> {
        if !v.is_finite() {
            None
        } else if log {
            (v > 0.0).then(|| v.log10())
        } else {
            Some(v)
        }
    };
    let (x0, x1) = widen_or(range(x.iter().copied()), (0.0, 1.0));
    let ys = series.iter().flat_map(|(_, s)| s.iter().filter_map(|v| map_y(*v)));
    let (y0, y1) = if log {
        let (lo, hi) = range(ys).unwrap_or((-1.0, 0.0));
        let (lo, hi) = (lo.floor(), hi.ceil());
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    } else {
        widen_or(range(ys), (-1.0, 1.0))
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let py = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let xp = px(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 20.0,
            tick_label(xv)
        );
    }
    let y_ticks: Vec<f64> = if log {
        let step = ((y1 - y0) / 8.0).ceil().max(1.0);
        let mut t = Vec::new();
        let mut v = y0;
        while v <= y1 + 1e-9 {
            t.push(v);
            v += step;
        }
        t
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for yv in y_ticks {
        let yp = py(yv);
        let label = if log { format!("1e{}", yv as i64) } else { tick_label(yv) };
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{yp:.2}" x2="{LEFT:.2}" y2="{yp:.2}" stroke="black"/>"#,
            LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_name)
    );

    for (k, (name, ys)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (xv, yv) in x.iter().zip(ys) {
            match (xv.is_finite(), map_y(*yv)) {
                (true, Some(m)) => runs.last_mut().expect("non-empty").push((px(*xv), py(m))),
                _ => {
                    if !runs.last().expect("non-empty").is_empty() {
                        runs.push(Vec::new());
                    }
                }
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 15.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn widen_or(r: Option<(f64, f64)>, default: (f64, f64)) -> (f64, f64) {
    match r {
        Some((lo, hi)) => widen(lo, hi),
        None => default,
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_booleans_and_rejects_ragged_rows() {
        let t = Table::parse("t,ok\n0,true\n1,false\n").unwrap();
        assert_eq!(t.column("ok").unwrap(), vec![1.0, 0.0]);
        assert!(Table::parse("a,b\n1\n").is_err());
        assert!(matches!(t.column("nope"), Err(CliError::Usage(_))));
    }

    #[test]
    fn deterministic_and_flat_series() {
        let x = vec![0.0, 0.5, 1.0];
        let s = vec![("kinetic".to_string(), vec![0.0; 3])];
        let a = render_svg("t", &x, &s, false);
        assert_eq!(a, render_svg("t", &x, &s, false));
        // a zero series sits on the middle of the [-1, 1] axis
        let mid = format!("{:.2}", TOP + (HEIGHT - TOP - BOTTOM) / 2.0);
        assert!(a.contains(&format!("{:.2},{mid}", LEFT)));
    }

    #[test]
    fn log_axis_breaks_on_non_positive() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let s = vec![("d".to_string(), vec![1.0, 0.1, 0.0, 0.001])];
        let svg = render_svg("t", &x, &s, true);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">1e-3<"));
    }

    #[test]
    fn exponential_is_straight_on_log_axis() {
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|t| (-0.2 * t).exp()).collect();
        let svg = render_svg("t", &x, &[("d".into(), y)], true);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts: Vec<(f64, f64)> = line
            .split("points=\"")
            .nth(1)
            .unwrap()
            .trim_end_matches("\"/>")
            .split(' ')
            .map(|p| {
                let (a, b) = p.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect();
        let slope = |i: usize| (pts[i + 1].1 - pts[i].1) / (pts[i + 1].0 - pts[i].0);
        for i in 1..pts.len() - 1 {
            assert!((slope(i) - slope(0)).abs() < 1e-2);
        }
    }
}
