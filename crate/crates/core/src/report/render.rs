use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::csv_err;
use crate::auv::SuccessCurve;
use crate::error::{Result, TideError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFormat {
    Svg,
    Csv,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 500.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 350.0;

/// Renders success curves sharing one horizon as CSV or SVG. Output is a
/// pure function of the input.
pub fn render_curve(curves: &[(String, SuccessCurve)], format: CurveFormat) -> Result<Vec<u8>> {
    let Some((_, first)) = curves.first() else {
        return Err(TideError::EmptyInput);
    };
    let t_max = first.t_max();
    if let Some((_, c)) = curves.iter().find(|(_, c)| c.t_max() != t_max) {
        return Err(TideError::MismatchedHorizons {
            expected: t_max,
            found: c.t_max(),
        });
    }
    match format {
        CurveFormat::Csv => render_csv(curves, t_max),
        CurveFormat::Svg => Ok(render_svg(curves, t_max).into_bytes()),
    }
}

fn render_csv(curves: &[(String, SuccessCurve)], t_max: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("t".to_string()).chain(curves.iter().map(|(label, _)| label.clone()));
    w.write_record(header).map_err(csv_err)?;
    for t in 0..=t_max {
        let row = std::iter::once(t.to_string()).chain(curves.iter().map(|(_, c)| format!("{:.6}", c.values()[t])));
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| TideError::Io(e.into_error()))
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn render_svg(curves: &[(String, SuccessCurve)], t_max: usize) -> String {
    let x = |t: usize| LEFT + (RIGHT - LEFT) * t as f64 / t_max as f64;
    let y = |p: f64| BOTTOM - (BOTTOM - TOP) * p;
    let mut s = String::new();
    // writes to a String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);

    for i in 0..=4 {
        let p = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{RIGHT}" y2="{yy:.2}" stroke="#e0e0e0"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{p:.2}</text>"##,
            yy = y(p),
            tx = LEFT - 6.0,
            ty = y(p) + 4.0,
        );
    }
    let step = t_max.div_ceil(10).max(1);
    for t in (0..=t_max).step_by(step) {
        let _ = writeln!(
            s,
            r##"<line x1="{xx:.2}" y1="{BOTTOM}" x2="{xx:.2}" y2="{yy:.2}" stroke="#000000"/><text x="{xx:.2}" y="{ty:.2}" text-anchor="middle">{t}</text>"##,
            xx = x(t),
            yy = BOTTOM + 4.0,
            ty = BOTTOM + 16.0,
        );
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{LEFT},{TOP} {LEFT},{BOTTOM} {RIGHT},{BOTTOM}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">turn</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">cumulative success rate</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    );

    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .values()
            .iter()
            .enumerate()
            .map(|(t, &p)| format!("{:.2},{:.2}", x(t), y(p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            RIGHT + 16.0,
            ly - 10.0,
            RIGHT + 34.0,
            ly,
            escape_xml(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(p: &[f64], n: usize) -> SuccessCurve {
        SuccessCurve::from_values(p.to_vec(), n).unwrap()
    }

    #[test]
    fn csv_format_contract() {
        let out = render_curve(&[("m".into(), curve(&[0.0, 1.0, 1.0], 1))], CurveFormat::Csv).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t,m\n0,0.000000\n1,1.000000\n2,1.000000\n"
        );
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        let out = render_curve(&[("a,b".into(), curve(&[0.0, 0.5], 2))], CurveFormat::Csv).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("t,\"a,b\"\n"));
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let curves = vec![
            ("<m&1>".to_string(), curve(&[0.0, 0.5, 0.75], 4)),
            ("m2".to_string(), curve(&[0.0, 0.25, 1.0], 4)),
        ];
        let a = render_curve(&curves, CurveFormat::Svg).unwrap();
        let b = render_curve(&curves, CurveFormat::Svg).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("&lt;m&amp;1&gt;"));
        assert!(text.contains(PALETTE[0]) && text.contains(PALETTE[1]));
        assert!(text.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(
            render_curve(&[], CurveFormat::Csv),
            Err(TideError::EmptyInput)
        ));
        let curves = vec![
            ("a".into(), curve(&[0.0, 1.0], 1)),
            ("b".into(), curve(&[0.0, 0.0, 1.0], 1)),
        ];
        assert!(matches!(
            render_curve(&curves, CurveFormat::Svg),
            Err(TideError::MismatchedHorizons { expected: 1, found: 2 })
        ));
    }
}
