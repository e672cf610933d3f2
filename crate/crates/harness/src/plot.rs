//! Radar plots of per-parameter accuracy, rendered as self-contained SVG.
//!
//! Every polygon carries its numbers in `data-label` / `data-values`
//! attributes (six decimal places), so downstream tooling can parse the
//! figures back without a raster pipeline. Rendering is deterministic: the
//! same aggregates always produce the same bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sipe_core::{CoreError, Result};

use crate::config::EstimatorKind;
use crate::score::ScoreReport;

/// Seed-minimum, seed-mean, seed-maximum polygon colors.
pub const MIN_COLOR: &str = "#1f77b4";
pub const MEAN_COLOR: &str = "#2ca02c";
pub const MAX_COLOR: &str = "#ff7f0e";

/// Cycle for overlaying several runs in one figure.
pub const COMPARE_PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const SIZE: f64 = 640.0;
const CX: f64 = 320.0;
const CY: f64 = 330.0;
const RADIUS: f64 = 235.0;

#[derive(Debug, Clone)]
pub struct RadarSeries {
    pub label: String,
    pub color: String,
    pub values: Vec<f64>,
}

fn axis_point(k: usize, n: usize, r: f64) -> (f64, f64) {
    let angle = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    (CX + r * angle.cos(), CY + r * angle.sin())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Render one radar chart. Values are drawn clamped to [0, 1] (accuracy can
/// dip below zero against out-of-range truths); the attributes keep the raw
/// numbers. One or two axes degenerate to marked points, which is fine.
pub fn radar_svg(title: &str, axes: &[String], series: &[RadarSeries]) -> Result<String> {
    if axes.is_empty() {
        return Err(CoreError::EmptyInput("radar axes".into()));
    }
    if series.is_empty() {
        return Err(CoreError::EmptyInput("radar series".into()));
    }
    for s in series {
        if s.values.len() != axes.len() {
            return Err(CoreError::shape(
                format!("radar series `{}`", s.label),
                axes.len(),
                s.values.len(),
            ));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!("radar series `{}`", s.label)));
        }
    }
    let n = axes.len();
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"sans-serif\">\n"
    );
    let _ = write!(svg, "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<text x=\"{CX:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{}</text>\n",
        xml_escape(title)
    );

    // concentric grid at 0.25 steps
    for ring in 1..=4 {
        let r = RADIUS * ring as f64 / 4.0;
        let pts: Vec<String> = (0..n.max(3))
            .map(|k| {
                let (x, y) = axis_point(k, n.max(3), r);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = write!(
            svg,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n",
            pts.join(" ")
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#888888\">{:.2}</text>\n",
            CX + 4.0,
            CY - r - 3.0,
            ring as f64 / 4.0
        );
    }

    // axis spokes and labels
    for (k, name) in axes.iter().enumerate() {
        let (x, y) = axis_point(k, n, RADIUS);
        let _ = write!(
            svg,
            "<line x1=\"{CX:.2}\" y1=\"{CY:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" \
             stroke=\"#aaaaaa\" stroke-width=\"1\"/>\n"
        );
        let (lx, ly) = axis_point(k, n, RADIUS + 16.0);
        let anchor = if (lx - CX).abs() < 1.0 {
            "middle"
        } else if lx > CX {
            "start"
        } else {
            "end"
        };
        let _ = write!(
            svg,
            "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"{anchor}\" font-size=\"11\">{}</text>\n",
            xml_escape(name)
        );
    }

    for s in series {
        let pts: Vec<(f64, f64)> = s
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| axis_point(k, n, RADIUS * v.clamp(0.0, 1.0)))
            .collect();
        let pts_attr: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let vals: Vec<String> = s.values.iter().map(|v| format!("{v:.6}")).collect();
        let _ = write!(
            svg,
            "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.12\" stroke=\"{}\" \
             stroke-width=\"2\" data-label=\"{}\" data-values=\"{}\"/>\n",
            pts_attr.join(" "),
            s.color,
            s.color,
            xml_escape(&s.label),
            vals.join(",")
        );
        for (x, y) in &pts {
            let _ = write!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\"/>\n", s.color);
        }
    }

    // legend, upper left
    for (i, s) in series.iter().enumerate() {
        let y = 46.0 + 18.0 * i as f64;
        let _ = write!(
            svg,
            "<rect x=\"12\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            s.color
        );
        let _ = write!(
            svg,
            "<text x=\"30\" y=\"{y:.1}\" font-size=\"12\">{}</text>\n",
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn param_names(env_id: &str) -> Result<Vec<String>> {
    Ok(sipe_core::sim::env_spec(env_id)?
        .space
        .params()
        .iter()
        .map(|p| p.name.clone())
        .collect())
}

/// One figure per (environment, estimator) aggregate: min, mean, and max
/// polygons over seeds. Cells whose seeds all failed produce no figure.
/// Returns (file stem, svg) pairs.
pub fn report_plots(report: &ScoreReport) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for agg in &report.aggregates {
        let (Some(min), Some(mean), Some(max)) =
            (&agg.per_param_min, &agg.per_param_mean, &agg.per_param_max)
        else {
            continue;
        };
        let axes = param_names(&agg.env_id)?;
        let series = vec![
            RadarSeries { label: "min".into(), color: MIN_COLOR.into(), values: min.clone() },
            RadarSeries { label: "mean".into(), color: MEAN_COLOR.into(), values: mean.clone() },
            RadarSeries { label: "max".into(), color: MAX_COLOR.into(), values: max.clone() },
        ];
        let title = format!("{} / {}", agg.env_id, agg.estimator);
        let svg = radar_svg(&title, &axes, &series)?;
        out.push((format!("{}--{}", agg.env_id, agg.estimator), svg));
    }
    if out.is_empty() {
        return Err(CoreError::EmptyInput("score report has no plottable cells".into()));
    }
    Ok(out)
}

fn coverage(report: &ScoreReport) -> BTreeSet<(String, EstimatorKind)> {
    report
        .aggregates
        .iter()
        .map(|a| (a.env_id.clone(), a.estimator))
        .collect()
}

/// Overlay the seed-mean polygons of several runs, one figure per
/// (environment, estimator) pair. The runs must cover identical pairs.
pub fn compare_plots(reports: &[ScoreReport]) -> Result<Vec<(String, String)>> {
    if reports.len() < 2 {
        return Err(CoreError::invalid("plot comparison", "needs at least two runs"));
    }
    let base = coverage(&reports[0]);
    for r in &reports[1..] {
        let cov = coverage(r);
        if cov != base {
            let missing: Vec<String> = base
                .symmetric_difference(&cov)
                .map(|(e, k)| format!("{e}/{k}"))
                .collect();
            return Err(CoreError::invalid(
                "plot comparison",
                format!(
                    "runs {} and {} cover different cells: {}",
                    reports[0].run.run_id,
                    r.run.run_id,
                    missing.join(", ")
                ),
            ));
        }
    }
    let mut out = Vec::new();
    for (env_id, est) in &base {
        let axes = param_names(env_id)?;
        let mut series = Vec::new();
        for (i, r) in reports.iter().enumerate() {
            let agg = r.aggregate_for(env_id, *est).expect("coverage checked");
            let Some(mean) = &agg.per_param_mean else {
                return Err(CoreError::invalid(
                    "plot comparison",
                    format!("run {} has no surviving seeds for {env_id}/{est}", r.run.run_id),
                ));
            };
            series.push(RadarSeries {
                label: r.run.run_id.clone(),
                color: COMPARE_PALETTE[i % COMPARE_PALETTE.len()].into(),
                values: mean.clone(),
            });
        }
        let title = format!("{env_id} / {est} (mean over seeds)");
        out.push((format!("{env_id}--{est}--compare"), radar_svg(&title, &axes, &series)?));
    }
    Ok(out)
}

/// Pull `(label, values)` pairs back out of a rendered figure.
pub fn parse_radar_values(svg: &str) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for chunk in svg.split("data-label=\"").skip(1) {
        let Some(label_end) = chunk.find('"') else { continue };
        let label = &chunk[..label_end];
        let Some(rest) = chunk[label_end..].split("data-values=\"").nth(1) else { continue };
        let Some(vals_end) = rest.find('"') else { continue };
        let values: Vec<f64> =
            rest[..vals_end].split(',').filter_map(|v| v.parse().ok()).collect();
        out.push((label.to_string(), values));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_survive_a_parse_back() {
        let axes = vec!["mass".to_string(), "damping".to_string(), "length".to_string()];
        let series = vec![
            RadarSeries { label: "min".into(), color: MIN_COLOR.into(), values: vec![0.512, 0.7071, 0.3] },
            RadarSeries { label: "mean".into(), color: MEAN_COLOR.into(), values: vec![0.8, 0.85, 0.9] },
        ];
        let svg = radar_svg("t", &axes, &series).unwrap();
        let parsed = parse_radar_values(&svg);
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].0, "min");
        for (want, got) in series[0].values.iter().zip(&parsed[0].1) {
            assert!((want - got).abs() < 1e-3);
        }
    }

    #[test]
    fn degenerate_axis_counts_still_render() {
        let axes = vec!["only".to_string()];
        let series =
            vec![RadarSeries { label: "mean".into(), color: MEAN_COLOR.into(), values: vec![0.4] }];
        let svg = radar_svg("one", &axes, &series).unwrap();
        assert!(svg.contains("data-values=\"0.400000\""));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let axes = vec!["a".to_string(), "b".to_string()];
        let series =
            vec![RadarSeries { label: "x".into(), color: "#000000".into(), values: vec![0.4] }];
        assert!(radar_svg("t", &axes, &series).is_err());
        assert!(radar_svg("t", &[], &[]).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let axes = vec!["a".to_string(), "b".to_string(), "c".to_string(), "d".to_string()];
        let series = vec![RadarSeries {
            label: "mean".into(),
            color: MEAN_COLOR.into(),
            values: vec![0.25, 0.5, 0.75, 1.0],
        }];
        let one = radar_svg("same", &axes, &series).unwrap();
        let two = radar_svg("same", &axes, &series).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn out_of_range_values_clamp_in_geometry_but_not_in_data() {
        let axes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let series = vec![RadarSeries {
            label: "mean".into(),
            color: MEAN_COLOR.into(),
            values: vec![-0.25, 1.5, 0.5],
        }];
        let svg = radar_svg("t", &axes, &series).unwrap();
        let parsed = parse_radar_values(&svg);
        assert!((parsed[0].1[0] + 0.25).abs() < 1e-9);
        assert!((parsed[0].1[1] - 1.5).abs() < 1e-9);
    }
}
