//! Learning-curve plots: a self-contained SVG with, per run directory, the
//! across-seed mean return as a line and the seed min-max range as a shaded
//! band, both against environment steps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const GRID_POINTS: usize = 160;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One seed's learning curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
}

/// All seeds of one run directory.
#[derive(Debug, Clone)]
pub struct Group {
    pub label: String,
    pub seeds: Vec<Series>,
}

/// A group resampled onto a common step grid.
#[derive(Debug, Clone)]
pub struct Band {
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn read_series(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse(format!("{}: empty csv", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse(format!("{}: no '{name}' column", path.display())))
    };
    let (step_i, ret_i) = (col("step")?, col("return_mean")?);
    let mut steps = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Parse(format!("{}: bad row '{line}'", path.display())))
        };
        let (s, v) = (get(step_i)?, get(ret_i)?);
        // rows before the first finished episode carry no return yet
        if v.is_finite() {
            steps.push(s);
            values.push(v);
        }
    }
    Ok(Series { steps, values })
}

/// Collect plot groups: `dir` is either one run directory or a directory of
/// run directories, each holding `seed<k>.csv` files.
pub fn load_groups(dir: &Path) -> Result<Vec<Group>> {
    let seed_csvs = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "csv")
                    && p.file_stem().is_some_and(|s| s.to_string_lossy().starts_with("seed"))
            })
            .collect();
        v.sort();
        Ok(v)
    };
    let label_of = |d: &Path| d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());

    let own = seed_csvs(dir)?;
    let mut groups = Vec::new();
    if own.is_empty() {
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for sub in subdirs {
            let csvs = seed_csvs(&sub)?;
            if !csvs.is_empty() {
                let seeds = csvs.iter().map(|p| read_series(p)).collect::<Result<Vec<_>>>()?;
                groups.push(Group { label: label_of(&sub), seeds });
            }
        }
    } else {
        let seeds = own.iter().map(|p| read_series(p)).collect::<Result<Vec<_>>>()?;
        groups.push(Group { label: label_of(dir), seeds });
    }
    groups.retain(|g| g.seeds.iter().any(|s| !s.steps.is_empty()));
    if groups.is_empty() {
        return Err(Error::InvalidInput(format!("no seed csv files with data under {}", dir.display())));
    }
    Ok(groups)
}

/// Step-function value of a series at `x`: the last recorded value at or
/// before `x`, if any.
fn value_at(series: &Series, x: f64) -> Option<f64> {
    match series.steps.partition_point(|&s| s <= x) {
        0 => None,
        i => Some(series.values[i - 1]),
    }
}

/// Resample a group onto `GRID_POINTS` evenly spaced steps.
pub fn band(group: &Group, x_max: f64) -> Band {
    let mut out = Band { xs: Vec::new(), mean: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for i in 0..=GRID_POINTS {
        let x = x_max * i as f64 / GRID_POINTS as f64;
        let vals: Vec<f64> = group.seeds.iter().filter_map(|s| value_at(s, x)).collect();
        if vals.is_empty() {
            continue;
        }
        out.xs.push(x);
        out.mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
        out.lo.push(vals.iter().cloned().fold(f64::INFINITY, f64::min));
        out.hi.push(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1.0 || v == 0.0 {
        let s = format!("{v:.1}");
        s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the groups as a complete SVG document.
pub fn render_svg(groups: &[Group]) -> Result<String> {
    let x_max = groups
        .iter()
        .flat_map(|g| g.seeds.iter().filter_map(|s| s.steps.last().copied()))
        .fold(0.0f64, f64::max);
    if x_max <= 0.0 {
        return Err(Error::InvalidInput("nothing to plot: no recorded steps".into()));
    }
    let bands: Vec<Band> = groups.iter().map(|g| band(g, x_max)).collect();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for b in &bands {
        y_min = b.lo.iter().cloned().fold(y_min, f64::min);
        y_max = b.hi.iter().cloned().fold(y_max, f64::max);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-6);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let px = |x: f64| MARGIN_L + (x / x_max) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();

    // axes with ticks
    let axis_style = "stroke=\"#333\" stroke-width=\"1\"";
    writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" {axis_style}/>",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    )
    .unwrap();
    writeln!(svg, "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" {axis_style}/>", HEIGHT - MARGIN_B)
        .unwrap();
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (x_max * f, y_min + (y_max - y_min) * f);
        writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" {axis_style}/><text x=\"{0}\" y=\"{3}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">{4}</text>",
            px(x),
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0,
            HEIGHT - MARGIN_B + 20.0,
            fmt_tick(x)
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{MARGIN_L}\" y2=\"{0}\" {axis_style}/><text x=\"{2}\" y=\"{3}\" font-size=\"12\" text-anchor=\"end\" fill=\"#333\">{4}</text>",
            py(y),
            MARGIN_L - 5.0,
            MARGIN_L - 9.0,
            py(y) + 4.0,
            fmt_tick(y)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#333\">environment steps</text>",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 16 {0})\">episode return</text>",
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0
    )
    .unwrap();

    for (gi, (group, b)) in groups.iter().zip(&bands).enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        if b.xs.len() > 1 {
            let mut pts = String::new();
            for (x, hi) in b.xs.iter().zip(&b.hi) {
                write!(pts, "{:.2},{:.2} ", px(*x), py(*hi)).unwrap();
            }
            for (x, lo) in b.xs.iter().zip(&b.lo).rev() {
                write!(pts, "{:.2},{:.2} ", px(*x), py(*lo)).unwrap();
            }
            writeln!(svg, "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>", pts.trim())
                .unwrap();
            let mut line = String::new();
            for (x, m) in b.xs.iter().zip(&b.mean) {
                write!(line, "{:.2},{:.2} ", px(*x), py(*m)).unwrap();
            }
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
                line.trim()
            )
            .unwrap();
        }
        let ly = MARGIN_T + 8.0 + 18.0 * gi as f64;
        writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2.5\"/><text x=\"{2}\" y=\"{3}\" font-size=\"12\" fill=\"#333\">{4}</text>",
            MARGIN_L + 10.0,
            MARGIN_L + 34.0,
            MARGIN_L + 40.0,
            ly + 4.0,
            escape(&group.label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Plot every run under `in_dir` into the SVG file at `out`.
pub fn plot(in_dir: &Path, out: &Path) -> Result<usize> {
    let groups = load_groups(in_dir)?;
    std::fs::write(out, render_svg(&groups)?)?;
    Ok(groups.len())
}
