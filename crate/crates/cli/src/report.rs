//! Rendering sweep CSVs as accuracy-vs-alpha curve data, grouped by variant.

use std::collections::BTreeMap;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub accuracy: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Curve {
    pub variant: String,
    pub points: Vec<CurvePoint>,
}

fn column(header: &[&str], name: &str) -> Result<usize, String> {
    header
        .iter()
        .position(|h| *h == name)
        .ok_or_else(|| format!("sweep CSV is missing column '{name}'"))
}

/// Parse a sweep CSV and group its rows into per-variant alpha curves.
pub fn curves_from_csv(csv: &str) -> Result<Vec<Curve>, String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| "empty CSV".to_string())?
        .split(',')
        .collect();
    let method = column(&header, "method")?;
    let sigma_prime = column(&header, "sigma_prime")?;
    let softmax = column(&header, "softmax")?;
    let sigma = column(&header, "sigma")?;
    let l2 = column(&header, "l2_normalize")?;
    let lle_k = column(&header, "lle_k")?;
    let lle_dim = column(&header, "lle_dim")?;
    let alpha = column(&header, "alpha")?;
    let accuracy = column(&header, "accuracy")?;
    let ci95 = column(&header, "ci95")?;

    let mut groups: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(format!(
                "row {}: {} fields, header has {}",
                line_no + 2,
                fields.len(),
                header.len()
            ));
        }
        let parse = |idx: usize| -> Result<f64, String> {
            fields[idx]
                .parse::<f64>()
                .map_err(|e| format!("row {}: bad number '{}': {e}", line_no + 2, fields[idx]))
        };
        let mut variant = format!(
            "{} {}/softmax={}/{}",
            fields[method], fields[sigma_prime], fields[softmax], fields[sigma]
        );
        if fields[method] == "cbm-lle" {
            variant.push_str(&format!(
                " l2={} k={} dim={}",
                fields[l2], fields[lle_k], fields[lle_dim]
            ));
        }
        groups.entry(variant).or_default().push(CurvePoint {
            alpha: parse(alpha)?,
            accuracy: parse(accuracy)?,
            ci95: parse(ci95)?,
        });
    }
    Ok(groups
        .into_iter()
        .map(|(variant, mut points)| {
            points.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
            Curve { variant, points }
        })
        .collect())
}

pub fn render_table(curves: &[Curve]) -> String {
    let mut out = String::new();
    for curve in curves {
        out.push_str(&format!("# {}\n", curve.variant));
        out.push_str("alpha    accuracy   ci95\n");
        for p in &curve.points {
            out.push_str(&format!(
                "{:<8.2} {:<10.4} {:.4}\n",
                p.alpha, p.accuracy, p.ci95
            ));
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(curves: &[Curve]) -> String {
    let mut out = String::from("variant,alpha,accuracy,ci95\n");
    for curve in curves {
        for p in &curve.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                curve.variant, p.alpha, p.accuracy, p.ci95
            ));
        }
    }
    out
}
