//! Minimal deterministic SVG scatter plots for 2-D data.

use std::fmt::Write;

use w1ot::Tensor;

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 46.0;

const SOURCE_FILL: &str = "#4878cf";
const TARGET_FILL: &str = "#ee854a";
const PRED_FILL: &str = "#6acc65";
const RAY_STROKE: &str = "#9aa0a6";

struct Bounds {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Bounds {
    fn of(clouds: &[&Tensor]) -> Bounds {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for cloud in clouds {
            for i in 0..cloud.rows() {
                for j in 0..2 {
                    lo[j] = lo[j].min(cloud.get(i, j));
                    hi[j] = hi[j].max(cloud.get(i, j));
                }
            }
        }
        // Pad 5% per axis; guard degenerate spans.
        for j in 0..2 {
            let span = (hi[j] - lo[j]).max(1e-9);
            lo[j] -= 0.05 * span;
            hi[j] += 0.05 * span;
        }
        Bounds { lo, hi }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = MARGIN + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * (WIDTH - 2.0 * MARGIN);
        let sy = HEIGHT
            - MARGIN
            - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * (HEIGHT - 2.0 * MARGIN);
        (sx, sy)
    }
}

fn push_points(out: &mut String, bounds: &Bounds, cloud: &Tensor, fill: &str) {
    for i in 0..cloud.rows() {
        let (x, y) = bounds.map(cloud.get(i, 0), cloud.get(i, 1));
        writeln!(out, r#"  <circle cx="{x:.2}" cy="{y:.2}" r="2.6" fill="{fill}" fill-opacity="0.75"/>"#)
            .expect("string write");
    }
}

/// Renders source/target (and optionally transported) 2-D clouds. With
/// `rays`, draws a segment from each source row to the matching pred row.
pub fn scatter_svg(
    source: &Tensor,
    target: &Tensor,
    pred: Option<&Tensor>,
    rays: bool,
) -> Result<String, CliError> {
    for (name, cloud) in [("source", source), ("target", target)] {
        if cloud.cols() != 2 {
            return Err(CliError::usage(format!(
                "plot needs 2-D data but {name} has {} columns; select two columns first",
                cloud.cols()
            )));
        }
    }
    if let Some(p) = pred {
        if p.cols() != 2 {
            return Err(CliError::usage(format!(
                "plot needs 2-D data but pred has {} columns; select two columns first",
                p.cols()
            )));
        }
        if rays && p.rows() != source.rows() {
            return Err(CliError::usage(format!(
                "rays need one pred row per source row: {} vs {}",
                p.rows(),
                source.rows()
            )));
        }
    }

    let mut clouds = vec![source, target];
    if let Some(p) = pred {
        clouds.push(p);
    }
    let bounds = Bounds::of(&clouds);

    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).expect("string write");
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .expect("string write");
    writeln!(out, r#"  <rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)
        .expect("string write");

    if rays {
        let p = pred.expect("rays require pred");
        for i in 0..source.rows() {
            let (x1, y1) = bounds.map(source.get(i, 0), source.get(i, 1));
            let (x2, y2) = bounds.map(p.get(i, 0), p.get(i, 1));
            writeln!(
                out,
                r#"  <line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{RAY_STROKE}" stroke-width="0.6" stroke-opacity="0.5"/>"#
            )
            .expect("string write");
        }
    }

    push_points(&mut out, &bounds, source, SOURCE_FILL);
    push_points(&mut out, &bounds, target, TARGET_FILL);
    if let Some(p) = pred {
        push_points(&mut out, &bounds, p, PRED_FILL);
    }

    let mut legend = vec![("source", SOURCE_FILL), ("target", TARGET_FILL)];
    if pred.is_some() {
        legend.push(("transported", PRED_FILL));
    }
    for (k, (label, fill)) in legend.into_iter().enumerate() {
        let y = 18.0 + 16.0 * k as f64;
        writeln!(out, r#"  <circle cx="14" cy="{:.2}" r="4" fill="{fill}"/>"#, y - 4.0)
            .expect("string write");
        writeln!(
            out,
            r#"  <text x="24" y="{y:.2}" font-family="sans-serif" font-size="12">{label}</text>"#
        )
        .expect("string write");
    }
    writeln!(out, "</svg>").expect("string write");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_deterministic_and_counts_match() {
        let s = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let t = Tensor::from_rows(&[vec![2.0, 0.0], vec![3.0, 1.0]]).unwrap();
        let p = Tensor::from_rows(&[vec![2.1, 0.1], vec![2.9, 0.9]]).unwrap();
        let a = scatter_svg(&s, &t, Some(&p), true).unwrap();
        let b = scatter_svg(&s, &t, Some(&p), true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("<line ").count(), 2);
        // 2 + 2 + 2 data points plus 3 legend markers.
        assert_eq!(a.matches("<circle ").count(), 9);

        let no_pred = scatter_svg(&s, &t, None, false).unwrap();
        assert_eq!(no_pred.matches("<line ").count(), 0);
        assert_eq!(no_pred.matches("<circle ").count(), 6);
    }

    #[test]
    fn non_2d_rejected_with_guidance() {
        let bad = Tensor::zeros(3, 5);
        let ok = Tensor::zeros(3, 2);
        let err = scatter_svg(&bad, &ok, None, false).unwrap_err();
        match err {
            CliError::Usage(m) => assert!(m.contains("two columns"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
