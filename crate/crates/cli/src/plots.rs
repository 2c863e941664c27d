//! Static SVG charts rendered from the emitted CSV data files. Plots are a
//! pure function of the data files: the `plot` subcommand re-reads the CSVs
//! and reproduces the figures without rerunning anything.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_R: f64 = 40.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 72.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One named curve: x, y, and a CI band.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64, f64)>, // (x, y, ci_lo, ci_hi)
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_x: bool,
    log_y: bool,
}

impl Frame {
    fn tx(&self, x: f64) -> f64 {
        let (a, b, v) = if self.log_x {
            (self.x_min.log10(), self.x_max.log10(), x.log10())
        } else {
            (self.x_min, self.x_max, x)
        };
        let t = if b > a { (v - a) / (b - a) } else { 0.5 };
        MARGIN_L + t * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn ty(&self, y: f64) -> f64 {
        let (a, b, v) = if self.log_y {
            (self.y_min.log10(), self.y_max.log10(), y.log10())
        } else {
            (self.y_min, self.y_max, y)
        };
        let t = if b > a { (v - a) / (b - a) } else { 0.5 };
        HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs();
    if (1e-3..1e4).contains(&mag) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.1e}")
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="Helvetica, Arial, sans-serif">"#
    );
    s.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        s,
        r#"<text x="{}" y="26" font-size="17" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    s
}

fn draw_axes(s: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = write!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = write!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        xml_escape(x_label)
    );
    let _ = write!(
        s,
        r#"<text x="22" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 22 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(y_label)
    );
    // Ticks.
    let ticks = |lo: f64, hi: f64, log: bool| -> Vec<f64> {
        if log {
            let a = lo.log10().floor() as i32;
            let b = hi.log10().ceil() as i32;
            (a..=b).map(|e| 10f64.powi(e)).filter(|&v| v >= lo * 0.999 && v <= hi * 1.001).collect()
        } else {
            let span = hi - lo;
            if span <= 0.0 {
                vec![lo]
            } else {
                (0..=4).map(|i| lo + span * i as f64 / 4.0).collect()
            }
        }
    };
    for v in ticks(frame.x_min, frame.x_max, frame.log_x) {
        let x = frame.tx(v);
        let _ = write!(
            s,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            fmt_tick(v)
        );
    }
    for v in ticks(frame.y_min, frame.y_max, frame.log_y) {
        let y = frame.ty(v);
        let _ = write!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
}

fn draw_legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 8.0 + 20.0 * i as f64;
        let x = WIDTH - MARGIN_R - 200.0;
        let _ = write!(
            s,
            r#"<rect x="{x}" y="{}" width="14" height="14" fill="{}"/><text x="{}" y="{}" font-size="13">{}</text>"#,
            y - 11.0,
            COLORS[i % COLORS.len()],
            x + 20.0,
            y,
            xml_escape(name)
        );
    }
}

/// Log-y (and log-x) line chart with shaded 95% CI bands. Non-positive values
/// are clamped to a floor one decade below the smallest positive value.
pub fn line_chart_log(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> String {
    let mut min_pos = f64::INFINITY;
    for sr in series {
        for &(_, y, lo, hi) in &sr.points {
            for v in [y, lo, hi] {
                if v > 0.0 {
                    min_pos = min_pos.min(v);
                }
            }
        }
    }
    if !min_pos.is_finite() {
        min_pos = 1e-12;
    }
    let floor = (min_pos / 10.0).max(1e-300);
    let clamp = |v: f64| if v > 0.0 { v } else { floor };

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut y_max = f64::NEG_INFINITY;
    for sr in series {
        for &(_, y, _, hi) in &sr.points {
            y_max = y_max.max(clamp(y)).max(clamp(hi));
        }
    }
    let frame = Frame {
        x_min,
        x_max: x_max.max(x_min * 1.0001),
        y_min: floor,
        y_max: (y_max * 2.0).max(floor * 10.0),
        log_x: true,
        log_y: true,
    };

    let mut svg = svg_open(title);
    draw_axes(&mut svg, &frame, x_label, y_label);
    for (i, sr) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // CI band.
        let mut band = String::new();
        for &(x, _, lo, _) in &sr.points {
            let _ = write!(band, "{},{} ", frame.tx(x), frame.ty(clamp(lo)));
        }
        for &(x, _, _, hi) in sr.points.iter().rev() {
            let _ = write!(band, "{},{} ", frame.tx(x), frame.ty(clamp(hi)));
        }
        let _ = write!(
            svg,
            r#"<polygon points="{}" fill="{color}" opacity="0.15"/>"#,
            band.trim_end()
        );
        // Curve.
        let mut line = String::new();
        for &(x, y, _, _) in &sr.points {
            let _ = write!(line, "{},{} ", frame.tx(x), frame.ty(clamp(y)));
        }
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
        for &(x, y, _, _) in &sr.points {
            let _ = write!(
                svg,
                r#"<circle cx="{}" cy="{}" r="3.5" fill="{color}"/>"#,
                frame.tx(x),
                frame.ty(clamp(y))
            );
        }
    }
    draw_legend(&mut svg, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>");
    svg
}

/// Scatter of (true, estimated) pairs with the y = x reference line.
pub fn scatter_with_diagonal(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64, String)],
) -> String {
    let mut hi = points
        .iter()
        .flat_map(|&(x, y, _)| [x, y])
        .fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() || hi <= 0.0 {
        hi = 1.0;
    }
    let frame =
        Frame { x_min: 0.0, x_max: hi * 1.1, y_min: 0.0, y_max: hi * 1.1, log_x: false, log_y: false };
    let mut svg = svg_open(title);
    draw_axes(&mut svg, &frame, x_label, y_label);
    let _ = write!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1.5"/>"#,
        frame.tx(0.0),
        frame.ty(0.0),
        frame.tx(hi * 1.1),
        frame.ty(hi * 1.1)
    );
    for (i, (x, y, label)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = write!(
            svg,
            r#"<circle cx="{}" cy="{}" r="5" fill="{color}" opacity="0.8"><title>{}</title></circle>"#,
            frame.tx(*x),
            frame.ty(*y),
            xml_escape(label)
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Grouped bar chart with error whiskers on a log-y axis.
pub fn grouped_bars_log(
    title: &str,
    x_label: &str,
    y_label: &str,
    group_labels: &[String],
    bar_names: &[String],
    values: &[Vec<(f64, f64, f64)>], // [group][bar] = (value, ci_lo, ci_hi)
) -> String {
    let mut min_pos = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for group in values {
        for &(v, lo, hi) in group {
            for u in [v, lo, hi] {
                if u > 0.0 {
                    min_pos = min_pos.min(u);
                    max_v = max_v.max(u);
                }
            }
        }
    }
    if !min_pos.is_finite() {
        min_pos = 1e-12;
        max_v = 1.0;
    }
    let floor = min_pos / 10.0;
    let frame = Frame {
        x_min: 0.0,
        x_max: 1.0,
        y_min: floor,
        y_max: max_v * 2.0,
        log_x: false,
        log_y: true,
    };
    let clamp = |v: f64| if v > 0.0 { v } else { floor };
    let mut svg = svg_open(title);
    draw_axes(&mut svg, &frame, x_label, y_label);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let group_w = plot_w / group_labels.len() as f64;
    let bar_w = group_w * 0.8 / bar_names.len() as f64;
    let y0 = HEIGHT - MARGIN_B;
    for (g, group) in values.iter().enumerate() {
        let gx = MARGIN_L + g as f64 * group_w;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            y0 + 20.0,
            xml_escape(&group_labels[g])
        );
        for (b, &(v, lo, hi)) in group.iter().enumerate() {
            let color = COLORS[b % COLORS.len()];
            let x = gx + group_w * 0.1 + b as f64 * bar_w;
            let y = frame.ty(clamp(v));
            let _ = write!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{}" height="{}" fill="{color}" opacity="0.85"/>"#,
                bar_w * 0.92,
                (y0 - y).max(0.0)
            );
            if hi > lo {
                let cx = x + bar_w * 0.46;
                let _ = write!(
                    svg,
                    r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/>"#,
                    frame.ty(clamp(lo)),
                    frame.ty(clamp(hi))
                );
            }
        }
    }
    draw_legend(&mut svg, &bar_names.iter().map(String::as_str).collect::<Vec<_>>());
    svg.push_str("</svg>");
    svg
}

// ---- CSV-driven rendering -------------------------------------------------

fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(str::to_string).collect(),
        None => return Ok((vec![], vec![])),
    };
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column '{name}' missing from CSV"))
}

fn f(row: &[String], i: usize) -> f64 {
    row[i].parse().unwrap_or(f64::NAN)
}

/// Renders every figure for the experiment directory from its CSV artifacts.
/// Returns the written SVG paths; empty (with a stderr warning) when there is
/// no data to plot.
pub fn emit_plots_for_dir(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let meta_path = dir.join("run_meta.json");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let kind = meta["kind"].as_str().unwrap_or_default().to_string();
    let summary = dir.join("summary.csv");
    let (header, rows) = read_csv(&summary)?;
    if rows.is_empty() {
        eprintln!("warning: {} has no data rows; no plots emitted", summary.display());
        return Ok(vec![]);
    }
    let mut written = Vec::new();
    let mut save = |name: &str, svg: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, svg)?;
        written.push(path);
        Ok(())
    };

    match kind.as_str() {
        "true_ratio_mse" | "dice_mse_sweep" => {
            let (ie, ib) = (col(&header, "estimator"), col(&header, "batch_size"));
            let (im, ilo, ihi) =
                (col(&header, "mse"), col(&header, "mse_ci_lo"), col(&header, "mse_ci_hi"));
            let mut names: Vec<String> = Vec::new();
            for row in &rows {
                if !names.contains(&row[ie]) {
                    names.push(row[ie].clone());
                }
            }
            let series: Vec<Series> = names
                .iter()
                .map(|name| Series {
                    name: name.clone(),
                    points: rows
                        .iter()
                        .filter(|r| &r[ie] == name)
                        .map(|r| (f(r, ib), f(r, im), f(r, ilo), f(r, ihi)))
                        .collect(),
                })
                .collect();
            save(
                "mse_vs_batch.svg",
                line_chart_log(
                    "MSE vs batch size (95% CI)",
                    "batch size (trajectories)",
                    "MSE",
                    &series,
                ),
            )?;
        }
        "ratio_correlation" => {
            let (ix, ia) = (col(&header, "abstract_state"), col(&header, "action"));
            let (it, ie) = (col(&header, "d_true"), col(&header, "d_est_mean"));
            let points: Vec<(f64, f64, String)> = rows
                .iter()
                .map(|r| (f(r, it), f(r, ie), format!("(x={}, a={})", r[ix], r[ia])))
                .collect();
            save(
                "correlation.svg",
                scatter_with_diagonal(
                    "Estimated vs true abstract occupancy",
                    "true d",
                    "estimated d",
                    &points,
                ),
            )?;
        }
        "violation_suite" => {
            let iv = col(&header, "variant");
            let (im, ilo, ihi) = (
                col(&header, "block_error_mean"),
                col(&header, "block_error_ci_lo"),
                col(&header, "block_error_ci_hi"),
            );
            let groups: Vec<String> = rows.iter().map(|r| r[iv].clone()).collect();
            let values: Vec<Vec<(f64, f64, f64)>> =
                rows.iter().map(|r| vec![(f(r, im), f(r, ilo), f(r, ihi))]).collect();
            save(
                "violation_errors.svg",
                grouped_bars_log(
                    "Ratio-estimation error by variant (95% CI)",
                    "variant",
                    "mean |d_est - d_true| on merged block",
                    &groups,
                    &["abstract_dice".to_string()],
                    &values,
                ),
            )?;
            // Per-variant correlation scatters from the companion CSV.
            let corr = dir.join("violation_correlation.csv");
            if corr.exists() {
                let (ch, cr) = read_csv(&corr)?;
                let civ = col(&ch, "variant");
                let (cix, cia) = (col(&ch, "abstract_state"), col(&ch, "action"));
                let (cit, cie) = (col(&ch, "d_true"), col(&ch, "d_est_mean"));
                let mut variants: Vec<String> = Vec::new();
                for r in &cr {
                    if !variants.contains(&r[civ]) {
                        variants.push(r[civ].clone());
                    }
                }
                for variant in variants {
                    let points: Vec<(f64, f64, String)> = cr
                        .iter()
                        .filter(|r| r[civ] == variant)
                        .map(|r| (f(r, cit), f(r, cie), format!("(x={}, a={})", r[cix], r[cia])))
                        .collect();
                    save(
                        &format!("correlation_{variant}.svg"),
                        scatter_with_diagonal(
                            &format!("Estimated vs true abstract occupancy: {variant}"),
                            "true d",
                            "estimated d",
                            &points,
                        ),
                    )?;
                }
            }
        }
        "hyperparam_grid" => {
            let (ie, ia) = (col(&header, "estimator"), col(&header, "alpha_nu"));
            let (im, ilo, ihi) =
                (col(&header, "mse"), col(&header, "mse_ci_lo"), col(&header, "mse_ci_hi"));
            let mut alphas: Vec<String> = Vec::new();
            let mut names: Vec<String> = Vec::new();
            for r in &rows {
                if !alphas.contains(&r[ia]) {
                    alphas.push(r[ia].clone());
                }
                if !names.contains(&r[ie]) {
                    names.push(r[ie].clone());
                }
            }
            let values: Vec<Vec<(f64, f64, f64)>> = alphas
                .iter()
                .map(|alpha| {
                    names
                        .iter()
                        .map(|name| {
                            rows.iter()
                                .find(|r| &r[ia] == alpha && &r[ie] == name)
                                .map(|r| (f(r, im), f(r, ilo), f(r, ihi)))
                                .unwrap_or((f64::NAN, f64::NAN, f64::NAN))
                        })
                        .collect()
                })
                .collect();
            save(
                "hyperparam_mse.svg",
                grouped_bars_log(
                    "MSE across learning rates (95% CI)",
                    "learning rate",
                    "MSE",
                    &alphas,
                    &names,
                    &values,
                ),
            )?;
        }
        _ => {
            // The theorem suite is a pass/fail report; nothing to draw.
        }
    }
    Ok(written)
}
