use std::fmt::Write;

use super::EvaluationReport;

/// Per-run accuracy table followed by the mean confusion matrix.
pub fn report_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("run,default_accuracy,balanced_accuracy\n");
    for (i, r) in report.runs.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", r.default_accuracy, r.balanced_accuracy);
    }
    let _ = writeln!(
        out,
        "mean,{},{}\n",
        report.mean_default_accuracy, report.mean_balanced_accuracy
    );
    out.push_str("true\\predicted");
    for c in 0..report.n_classes {
        let _ = write!(out, ",{}", class_label(report, c));
    }
    out.push('\n');
    for (t, row) in report.mean_confusion.iter().enumerate() {
        out.push_str(&class_label(report, t));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn class_label(report: &EvaluationReport, c: usize) -> String {
    report
        .class_names
        .get(c)
        .cloned()
        .unwrap_or_else(|| c.to_string())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Row-normalized confusion heat map as a standalone SVG document.
pub fn confusion_svg(matrix: &[Vec<f64>], names: &[String], title: &str) -> String {
    let n = matrix.len();
    let cell = 36.0;
    let margin = 170.0;
    let size = margin + cell * n as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="16" font-size="13">{}</text>"#, margin, escape(title));
    for (t, row) in matrix.iter().enumerate() {
        let total: f64 = row.iter().sum();
        let name = names.get(t).cloned().unwrap_or_else(|| t.to_string());
        let y = margin + cell * t as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 4.0,
            y + cell * 0.6,
            escape(&name)
        );
        for (p, &v) in row.iter().enumerate() {
            let frac = if total > 0.0 { v / total } else { 0.0 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let x = margin + cell * p as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#999"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{:.2}</text>"#,
                x + cell / 2.0,
                y + cell * 0.6,
                frac
            );
        }
    }
    for p in 0..n {
        let name = names.get(p).cloned().unwrap_or_else(|| p.to_string());
        let x = margin + cell * p as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text transform="translate({x},{}) rotate(-60)">{}</text>"#,
            margin - 4.0,
            escape(&name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box plot (quartiles, whiskers at min/max) of each group on a `[0, 1]` axis.
pub fn boxplot_svg(groups: &[(String, Vec<f64>)], title: &str) -> String {
    let (w, h) = (90.0 * groups.len().max(1) as f64 + 80.0, 320.0);
    let (top, bottom) = (30.0, h - 50.0);
    let y = |v: f64| bottom - (bottom - top) * v.clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="60" y="16" font-size="13">{}</text>"#, escape(title));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="50" x2="{}" y1="{2}" y2="{2}" stroke="#ddd"/><text x="44" y="{}" text-anchor="end">{v:.1}</text>"##,
            w - 10.0,
            y(v),
            y(v) + 3.0
        );
    }
    for (i, (name, vals)) in groups.iter().enumerate() {
        let cx = 60.0 + 90.0 * i as f64 + 45.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            escape(name)
        );
        let mut v: Vec<f64> = vals.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let _ = writeln!(
            s,
            r#"<line x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="black"/>"#,
            y(lo),
            y(hi)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="40" height="{}" fill="#9cf" stroke="black"/>"##,
            cx - 20.0,
            y(q3),
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{2}" y2="{2}" stroke="black" stroke-width="2"/>"#,
            cx - 20.0,
            cx + 20.0,
            y(q2)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RunMetrics;

    #[test]
    fn csv_has_one_row_per_run() {
        let runs = vec![
            RunMetrics::from_pairs(2, &[(0, 0), (1, 0)]).unwrap(),
            RunMetrics::from_pairs(2, &[(0, 0), (1, 1)]).unwrap(),
        ];
        let rep = EvaluationReport::from_runs(2, runs).unwrap();
        let csv = report_csv(&rep);
        assert!(csv.starts_with("run,default_accuracy,balanced_accuracy\n0,0.5,0.5\n1,1,1\nmean,0.75,0.75"));
        assert!(csv.contains("\n1,0.5,0.5\n"));
    }

    #[test]
    fn svgs_are_well_formed_enough() {
        let c = confusion_svg(&[vec![2.0, 1.0], vec![0.0, 3.0]], &["a<b".into()], "t");
        assert!(c.starts_with("<svg") && c.trim_end().ends_with("</svg>"));
        assert!(c.contains("a&lt;b") && c.contains("0.67"));
        let b = boxplot_svg(&[("ae".into(), vec![0.7, 0.8, 0.9]), ("nn".into(), vec![])], "auc");
        assert_eq!(b.matches("<rect").count(), 1);
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.5), 0.5);
    }
}
