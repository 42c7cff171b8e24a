//! Figures and a text summary rendered from a run directory's CSV files.
//!
//! Nothing here touches models: every plotted or printed number is read from
//! a CSV written by an earlier job, so re-rendering is cheap and the output
//! bytes depend only on those files.

use std::fmt::Write as _;
use std::path::Path;

use super::svg::{color, padded_range, Svg};
use crate::error::{Error, Result};
use crate::io::{self, parse_f64, Table};

pub const SWEEP_CSV: &str = "sweep/sweep.csv";
pub const SELECTED_CURVES_CSV: &str = "sweep/selected/curves.csv";
pub const TOY_LATENT_CSV: &str = "toy/latent_cloud.csv";
pub const TOY_OUTPUT_CSV: &str = "toy/output_cloud.csv";
pub const TOY_SUMMARY_CSV: &str = "toy/summary.csv";
pub const CONTOUR_LATENT_CSV: &str = "contours/latent_summary.csv";
pub const CONTOUR_SAMPLES_CSV: &str = "contours/latent_samples.csv";
pub const CONTOUR_OUTPUT_CSV: &str = "contours/output_mean_summary.csv";
pub const CONTOUR_SUMMARY_CSV: &str = "contours/summary.csv";
pub const DENSITY_RAMP_CSV: &str = "density/ramp_points.csv";
pub const DENSITY_HISTOGRAM_CSV: &str = "density/ramp_histogram.csv";
pub const DENSITY_UNIFORM_CSV: &str = "density/uniform_points.csv";
pub const DENSITY_SUMMARY_CSV: &str = "density/summary.csv";

pub const REQUIRED: [&str; 13] = [
    SWEEP_CSV,
    SELECTED_CURVES_CSV,
    TOY_LATENT_CSV,
    TOY_OUTPUT_CSV,
    TOY_SUMMARY_CSV,
    CONTOUR_LATENT_CSV,
    CONTOUR_SAMPLES_CSV,
    CONTOUR_OUTPUT_CSV,
    CONTOUR_SUMMARY_CSV,
    DENSITY_RAMP_CSV,
    DENSITY_HISTOGRAM_CSV,
    DENSITY_UNIFORM_CSV,
    DENSITY_SUMMARY_CSV,
];

pub const FIGURES: [&str; 5] = [
    "calibration_curves.svg",
    "sweep.svg",
    "toy_scatter.svg",
    "contours.svg",
    "density.svg",
];

/// `metric, value` table.
pub fn summary_table(entries: &[(&str, f64)]) -> Table {
    let mut t = Table::new(["metric", "value"]);
    for (k, v) in entries {
        t.push(vec![k.to_string(), io::fmt(*v)]);
    }
    t
}

/// Reads a `metric, value` table into ordered pairs.
pub fn read_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    let t = Table::read(path)?;
    let (k, v) = match (t.column("metric"), t.column("value")) {
        (Some(k), Some(v)) => (k, v),
        _ => {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: "expected metric,value columns".into(),
            })
        }
    };
    t.rows
        .iter()
        .map(|r| Ok((r[k].clone(), parse_f64(&r[v], path)?)))
        .collect()
}

fn load(run: &Path, rel: &str) -> Result<(Table, std::path::PathBuf)> {
    let p = run.join(rel);
    Ok((Table::read(&p)?, p))
}

fn columns(run: &Path, rel: &str, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (t, p) = load(run, rel)?;
    names.iter().map(|n| t.floats(n, &p)).collect()
}

/// Renders every figure plus `summary.txt` into `run/report/`.
pub fn render_report(run: &Path) -> Result<()> {
    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|r| !run.join(r).is_file())
        .map(|r| r.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let out = run.join("report");
    io::ensure_dir(&out)?;
    let figures = [
        calibration_figure(run)?,
        sweep_figure(run)?,
        toy_figure(run)?,
        contour_figure(run)?,
        density_figure(run)?,
    ];
    for (name, svg) in FIGURES.iter().zip(figures) {
        let p = out.join(name);
        std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
    }
    let p = out.join("summary.txt");
    std::fs::write(&p, summary_text(run)?).map_err(|e| Error::io(&p, e))
}

fn calibration_figure(run: &Path) -> Result<String> {
    let c = columns(run, SELECTED_CURVES_CSV, &["dim", "level", "observed"])?;
    let mut dims: Vec<usize> = c[0].iter().map(|&d| d as usize).collect();
    dims.dedup();
    dims.sort_unstable();
    dims.dedup();
    let mut svg = Svg::new(520.0, 460.0);
    let p = svg.panel(
        (0.0, 0.0),
        (520.0, 460.0),
        (0.0, 1.0),
        (0.0, 1.0),
        "Selected model, test split",
        "expected confidence",
        "observed coverage",
    );
    svg.polyline(&p, &[(0.0, 0.0), (1.0, 1.0)], "diagonal", "black", true);
    let mut legend = Vec::new();
    for &d in &dims {
        let pts: Vec<(f64, f64)> = (0..c[0].len())
            .filter(|&i| c[0][i] as usize == d)
            .map(|i| (c[1][i], c[2][i]))
            .collect();
        svg.polyline(&p, &pts, "series", color(d), false);
        legend.push((format!("z{d}"), color(d)));
    }
    svg.legend(70.0, 50.0, &legend);
    Ok(svg.finish())
}

fn sweep_figure(run: &Path) -> Result<String> {
    let c = columns(
        run,
        SWEEP_CSV,
        &["keep_rate", "validation_error", "test_error", "selected"],
    )?;
    let n = c[0].len();
    let ymax = c[1].iter().chain(&c[2]).copied().fold(0.0, f64::max);
    let mut svg = Svg::new(640.0, 400.0);
    let p = svg.panel(
        (0.0, 0.0),
        (640.0, 400.0),
        (-0.5, n as f64 - 0.5),
        (0.0, ymax * 1.1 + 1e-9),
        "Calibration error by keep rate",
        "keep rate (index)",
        "mean calibration error",
    );
    for i in 0..n {
        let x = i as f64;
        let val_color = if c[3][i] > 0.5 { "#d62728" } else { "#1f77b4" };
        svg.bar(&p, x - 0.38, x, c[1][i], val_color);
        svg.bar(&p, x, x + 0.38, c[2][i], "#aaaaaa");
    }
    let mut row = String::new();
    for (i, k) in c[0].iter().enumerate() {
        let _ = write!(row, "{}{i}={k:.3}", if i > 0 { " " } else { "" });
    }
    svg.text(55.0, 392.0, &row);
    svg.legend(
        480.0,
        50.0,
        &[
            ("validation".into(), "#1f77b4"),
            ("selected".into(), "#d62728"),
            ("test".into(), "#aaaaaa"),
        ],
    );
    Ok(svg.finish())
}

fn cloud(run: &Path, rel: &str) -> Result<Vec<(f64, f64)>> {
    let (t, p) = load(run, rel)?;
    if t.header.len() != 3 {
        return Err(Error::Format {
            path: p,
            reason: "expected sample plus two value columns".into(),
        });
    }
    let a = t.floats(&t.header[1], &p)?;
    let b = t.floats(&t.header[2], &p)?;
    Ok(a.into_iter().zip(b).collect())
}

fn toy_figure(run: &Path) -> Result<String> {
    let latent = cloud(run, TOY_LATENT_CSV)?;
    let output = cloud(run, TOY_OUTPUT_CSV)?;
    let header = Table::read(&run.join(TOY_LATENT_CSV))?.header;
    let xr = padded_range(latent.iter().chain(&output).map(|p| p.0));
    let yr = padded_range(latent.iter().chain(&output).map(|p| p.1));
    let mut svg = Svg::new(900.0, 420.0);
    for (i, (pts, title)) in [(&latent, "Latent-space residuals"), (&output, "Output-space residuals")]
        .into_iter()
        .enumerate()
    {
        let p = svg.panel(
            (450.0 * i as f64, 0.0),
            (450.0, 420.0),
            xr,
            yr,
            title,
            &header[1],
            &header[2],
        );
        svg.points(&p, pts, color(i));
    }
    Ok(svg.finish())
}

fn contour_xy(angles: &[f64], radii: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = angles
        .iter()
        .zip(radii)
        .map(|(a, r)| (r * a.cos(), r * a.sin()))
        .collect();
    if let Some(&first) = pts.first() {
        pts.push(first);
    }
    pts
}

fn contour_figure(run: &Path) -> Result<String> {
    let lat = columns(run, CONTOUR_LATENT_CSV, &["angle", "mean_radius", "sd_radius"])?;
    let out = columns(run, CONTOUR_OUTPUT_CSV, &["angle", "mean_radius", "sd_radius"])?;
    let samples = columns(run, CONTOUR_SAMPLES_CSV, &["sample", "angle", "radius"])?;
    let rmax = lat[1]
        .iter()
        .zip(&lat[2])
        .chain(out[1].iter().zip(&out[2]))
        .map(|(m, s)| m + 2.0 * s)
        .chain(samples[2].iter().copied())
        .fold(1.0, f64::max)
        * 1.05;
    let r = (-rmax, rmax);
    let mut svg = Svg::new(900.0, 440.0);
    let p = svg.panel(
        (0.0, 0.0),
        (450.0, 440.0),
        r,
        r,
        "Contours, latent-residual samples",
        "dx [px]",
        "dy [px]",
    );
    let mut start = 0;
    while start < samples[0].len() {
        let id = samples[0][start];
        let end = (start..samples[0].len())
            .find(|&i| samples[0][i] != id)
            .unwrap_or(samples[0].len());
        svg.polyline(
            &p,
            &contour_xy(&samples[1][start..end], &samples[2][start..end]),
            "sample",
            "#9ecae1",
            false,
        );
        start = end;
    }
    svg.polyline(&p, &contour_xy(&lat[0], &lat[1]), "mean", "#08519c", false);
    let q = svg.panel(
        (450.0, 0.0),
        (450.0, 440.0),
        r,
        r,
        "Mean-image contours, output residuals",
        "dx [px]",
        "dy [px]",
    );
    for (sign, class) in [(-2.0, "band"), (2.0, "band")] {
        let radii: Vec<f64> = out[1].iter().zip(&out[2]).map(|(m, s)| m + sign * s).collect();
        svg.polyline(&q, &contour_xy(&out[0], &radii), class, "#fdae6b", true);
    }
    svg.polyline(&q, &contour_xy(&out[0], &out[1]), "mean", "#a63603", false);
    Ok(svg.finish())
}

fn density_figure(run: &Path) -> Result<String> {
    let ramp = columns(run, DENSITY_RAMP_CSV, &["value", "sd"])?;
    let uni = columns(run, DENSITY_UNIFORM_CSV, &["value", "sd"])?;
    let hist = columns(run, DENSITY_HISTOGRAM_CSV, &["bin_lo", "bin_hi", "count"])?;
    let mut svg = Svg::new(900.0, 420.0);
    let yr = padded_range(ramp[1].iter().chain(&uni[1]).copied().chain([0.0]));
    let p = svg.panel(
        (0.0, 0.0),
        (450.0, 420.0),
        (0.0, 1.0),
        yr,
        "Predictive sd along the ramp coordinate",
        "input value",
        "posterior sd",
    );
    svg.polyline(
        &p,
        &ramp[0].iter().copied().zip(ramp[1].iter().copied()).collect::<Vec<_>>(),
        "series",
        color(3),
        false,
    );
    svg.polyline(
        &p,
        &uni[0].iter().copied().zip(uni[1].iter().copied()).collect::<Vec<_>>(),
        "series",
        color(0),
        true,
    );
    svg.legend(320.0, 50.0, &[("ramp".into(), color(3)), ("uniform".into(), color(0))]);
    let cmax = hist[2].iter().copied().fold(1.0, f64::max);
    let q = svg.panel(
        (450.0, 0.0),
        (450.0, 420.0),
        (0.0, 1.0),
        (0.0, cmax * 1.1),
        "Training samples (ramp dataset)",
        "input value",
        "count",
    );
    for i in 0..hist[0].len() {
        svg.bar(&q, hist[0][i], hist[1][i], hist[2][i], "#9e9ac8");
    }
    Ok(svg.finish())
}

fn summary_text(run: &Path) -> Result<String> {
    let mut s = String::new();
    let c = columns(
        run,
        SWEEP_CSV,
        &["keep_rate", "validation_error", "test_error", "selected"],
    )?;
    let _ = writeln!(s, "keep-rate sweep");
    let _ = writeln!(s, "  keep_rate  validation  test");
    for i in 0..c[0].len() {
        let mark = if c[3][i] > 0.5 { "  <- selected" } else { "" };
        let _ = writeln!(s, "  {:<9}  {:<10.4}  {:.4}{mark}", c[0][i], c[1][i], c[2][i]);
    }
    for (title, rel) in [
        ("residual-method comparison", TOY_SUMMARY_CSV),
        ("contours", CONTOUR_SUMMARY_CSV),
        ("training density", DENSITY_SUMMARY_CSV),
    ] {
        let _ = writeln!(s, "\n{title}");
        for (k, v) in read_summary(&run.join(rel))? {
            let _ = writeln!(s, "  {k}: {v}");
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        match render_report(dir.path()) {
            Err(Error::MissingArtifacts(m)) => assert_eq!(m.len(), REQUIRED.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        summary_table(&[("a", 0.25), ("b", -3.0)]).write(&p).unwrap();
        assert_eq!(
            read_summary(&p).unwrap(),
            vec![("a".to_string(), 0.25), ("b".to_string(), -3.0)]
        );
    }
}
