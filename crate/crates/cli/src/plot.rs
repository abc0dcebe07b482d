//! Plot-ready data (`.dat`, gnuplot block layout) and a static SVG rendering
//! for profile, scan, cascade and path artifacts. Output depends only on the
//! input text, so identical artifacts give identical plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Reference curves are drawn dashed.
    pub reference: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn rows(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines.next().ok_or("empty artifact")?.split(',').map(|s| s.trim().to_string()).collect();
    let body: Vec<Vec<String>> = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
    if let Some(r) = body.iter().find(|r| r.len() != header.len()) {
        return Err(format!("row {:?} does not match the header", r.join(",")));
    }
    Ok((header, body))
}

fn num(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

/// Recognizes the artifact by its CSV header.
pub fn from_artifact(text: &str) -> Result<Plot, String> {
    let (header, body) = rows(text)?;
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    match h.as_slice() {
        ["coord", "density"] => Ok(Plot {
            title: "heat kernel profile".into(),
            x_label: "coordinate".into(),
            y_label: "density".into(),
            series: vec![Series {
                name: "p_t".into(),
                points: body.iter().map(|r| Ok((num(&r[0])?, num(&r[1])?))).collect::<Result<_, String>>()?,
                reference: false,
            }],
        }),
        ["n", "gap", "gap_se", "tail_hs"] => Ok(Plot {
            title: "projection cascade".into(),
            x_label: "n".into(),
            y_label: "gap".into(),
            series: vec![Series {
                name: "gap".into(),
                points: body.iter().map(|r| Ok((num(&r[0])?, num(&r[1])?))).collect::<Result<_, String>>()?,
                reference: false,
            }],
        }),
        ["n", "alphas", "t", "field", ..] if h.contains(&"ratio") => {
            let ratio = h.iter().position(|c| *c == "ratio").expect("checked");
            let mut groups: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
            let mut ts = Vec::new();
            for r in &body {
                let t = num(&r[2])?;
                ts.push(t);
                groups.entry((r[3].clone(), r[1].clone())).or_default().push((t, num(&r[ratio])?));
            }
            let mut series: Vec<Series> = groups
                .into_iter()
                .map(|((field, alphas), mut points)| {
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series { name: format!("{field} [{alphas}]"), points, reference: false }
                })
                .collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            series.push(Series { name: "2t".into(), points: ts.iter().map(|&t| (t, 2.0 * t)).collect(), reference: true });
            Ok(Plot { title: "log-Sobolev ratio".into(), x_label: "t".into(), y_label: "ratio".into(), series })
        }
        ["k", "x1", "y1", .., "a"] => Ok(Plot {
            title: "horizontal path".into(),
            x_label: "x1".into(),
            y_label: "y1".into(),
            series: vec![Series {
                name: "path".into(),
                points: body.iter().map(|r| Ok((num(&r[1])?, num(&r[2])?))).collect::<Result<_, String>>()?,
                reference: false,
            }],
        }),
        _ => Err(format!("unrecognized artifact header {:?}", header.join(","))),
    }
}

/// Two-column blocks separated by blank lines, one per series.
pub fn to_dat(plot: &Plot) -> String {
    let mut s = format!("# {}\n# {} {}\n", plot.title, plot.x_label, plot.y_label);
    for (i, series) in plot.series.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# {}", series.name);
        for (x, y) in &series.points {
            let _ = writeln!(s, "{x} {y}");
        }
    }
    s
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub fn to_svg(plot: &Plot) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 200.0, 40.0, 50.0);
    let finite = plot.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (pw, ph) = (w - left - right, h - top - bottom);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(&plot.title));
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick(xv));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, left - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, escape(&plot.x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, top + ph / 2.0, top + ph / 2.0, escape(&plot.y_label));
    for (i, series) in plot.series.iter().enumerate() {
        let colour = if series.reference { "black" } else { PALETTE[i % PALETTE.len()] };
        let dash = if series.reference { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
        let ly = top + 14.0 + 16.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="1.5"{dash}/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_artifact() {
        let p = from_artifact("coord,density\n0,0.125\n1,0.01\n").unwrap();
        assert_eq!(p.series[0].points, vec![(0.0, 0.125), (1.0, 0.01)]);
        assert_eq!(to_dat(&p), "# heat kernel profile\n# coordinate density\n# p_t\n0 0.125\n1 0.01\n");
        let svg = to_svg(&p);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg, to_svg(&p));
    }

    #[test]
    fn scan_artifact_groups_by_field_and_context() {
        let csv = "n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se\n\
                   1,1,1,exp_x1:1,1,0,1,0,2.01,0.1\n1,1,0.5,exp_x1:1,1,0,1,0,0.99,0.1\n";
        let p = from_artifact(csv).unwrap();
        assert_eq!(p.series.len(), 2);
        assert_eq!(p.series[0].points, vec![(0.5, 0.99), (1.0, 2.01)]);
        assert!(p.series[1].reference);
    }

    #[test]
    fn unknown_or_ragged_artifacts() {
        assert!(from_artifact("a,b\n1,2\n").is_err());
        assert!(from_artifact("coord,density\n1\n").is_err());
        assert!(from_artifact("").is_err());
    }
}
