use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// ROC points from `(0, 0)` to `(1, 1)`; tied scores form one diagonal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Option<RocCurve>> {
    if scores.len() != positive.len() {
        return Err(Error::Argument("scores and labels differ in length".into()));
    }
    let p = positive.iter().filter(|&&x| x).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        fpr.push(fp as f64 / n as f64);
        tpr.push(tp as f64 / p as f64);
    }
    Ok(Some(RocCurve { fpr, tpr }))
}

impl RocCurve {
    /// TPR at `x`, taking the top of vertical segments and interpolating
    /// linearly across diagonal ones.
    pub fn tpr_at(&self, x: f64) -> f64 {
        let i = self.fpr.iter().rposition(|&f| f <= x).unwrap_or(0);
        if self.fpr[i] == x || i + 1 == self.fpr.len() {
            return self.tpr[i];
        }
        let (x0, x1) = (self.fpr[i], self.fpr[i + 1]);
        let (y0, y1) = (self.tpr[i], self.tpr[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Mean and population standard deviation of TPR across curves on a
/// uniform FPR grid (vertical averaging).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRoc {
    pub fpr: Vec<f64>,
    pub mean_tpr: Vec<f64>,
    pub std_tpr: Vec<f64>,
}

pub fn vertical_average(curves: &[RocCurve], grid_points: usize) -> Result<AveragedRoc> {
    if curves.is_empty() || grid_points < 2 {
        return Err(Error::Argument("need at least one curve and two grid points".into()));
    }
    let fpr: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
    let k = curves.len() as f64;
    let mut mean_tpr = Vec::with_capacity(grid_points);
    let mut std_tpr = Vec::with_capacity(grid_points);
    for &x in &fpr {
        let ys: Vec<f64> = curves.iter().map(|c| c.tpr_at(x)).collect();
        let m = ys.iter().sum::<f64>() / k;
        mean_tpr.push(m);
        std_tpr.push((ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / k).sqrt());
    }
    Ok(AveragedRoc { fpr, mean_tpr, std_tpr })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One mean curve with a +-1 std band per class, in a square SVG.
pub fn write_roc_svg(path: &Path, title: &str, classes: &[(String, AveragedRoc)]) -> Result<()> {
    let (size, pad) = (360.0, 40.0);
    let px = |x: f64| pad + x * size;
    let py = |y: f64| pad + (1.0 - y) * size;
    let mut svg = String::new();
    let total = size + 2.0 * pad;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = total + 120.0,
        h = total
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-size="14" font-family="sans-serif">{}</text>"#,
        pad, title
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif">false positive rate</text>"#,
        pad + size / 2.0 - 45.0,
        total - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {})">true positive rate</text>"#,
        pad + size / 2.0 + 45.0,
        pad + size / 2.0 + 45.0
    );
    for (k, (code, roc)) in classes.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = roc.fpr.iter().zip(roc.mean_tpr.iter().zip(&roc.std_tpr));
        let mut band: Vec<String> = upper
            .clone()
            .map(|(x, (m, s))| format!("{:.2},{:.2}", px(*x), py((m + s).min(1.0))))
            .collect();
        band.extend(
            upper
                .rev()
                .map(|(x, (m, s))| format!("{:.2},{:.2}", px(*x), py((m - s).max(0.0)))),
        );
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = roc
            .fpr
            .iter()
            .zip(&roc.mean_tpr)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = pad + 16.0 * k as f64 + 10.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-size="12" font-family="sans-serif" fill="{color}">{code}</text>"#,
            total + 8.0
        );
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}
