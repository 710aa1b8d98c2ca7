//! Metric rows, the CSV schema, the slope-report JSON, and hand-rolled
//! log-log SVG plots.

use chaoslab::chaosmetrics::ConvergenceReport;
use chaoslab::grid::fmt_f64;
use serde::{Deserialize, Serialize};

/// One row of the fixed CSV schema
/// `experiment,n,metric,value,std_error` (blank `n` / `std_error` when not
/// applicable, '.' decimal, scientific notation below 1e-4).
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub experiment: String,
    pub n: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

impl MetricRow {
    pub fn new(experiment: &str, n: Option<u64>, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            n,
            metric: metric.to_string(),
            value,
            std_error: None,
        }
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("experiment,n,metric,value,std_error\n");
    for r in rows {
        let n = r.n.map(|v| v.to_string()).unwrap_or_default();
        let se = r.std_error.map(|v| fmt_f64(&v)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.experiment,
            n,
            r.metric,
            fmt_f64(&r.value),
            se
        ));
    }
    out
}

/// Serializable mirror of the library's fit output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeReport {
    pub ns: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci_lo: f64,
    pub slope_ci_hi: f64,
}

impl From<&ConvergenceReport> for SlopeReport {
    fn from(r: &ConvergenceReport) -> Self {
        Self {
            ns: r.ns.clone(),
            errors: r.errors.clone(),
            std_errors: r.std_errors.clone(),
            slope: r.slope,
            intercept: r.intercept,
            slope_ci_lo: r.slope_ci.0,
            slope_ci_hi: r.slope_ci.1,
        }
    }
}

pub fn slope_report_json(r: &SlopeReport) -> String {
    serde_json::to_string_pretty(r).expect("slope report serializes")
}

/// Log-log scatter of (N, error) with the fitted power law, as a
/// self-contained SVG polyline plot.
pub fn loglog_svg(title: &str, r: &SlopeReport) -> String {
    let (w, h) = (480.0f64, 360.0f64);
    let (ml, mr, mt, mb) = (60.0f64, 20.0f64, 40.0f64, 50.0f64);
    let xs: Vec<f64> = r.ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = r.errors.iter().map(|v| v.ln()).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0).max(1e-12) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0).max(1e-12) * (h - mt - mb);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        title
    ));
    // axes
    svg.push_str(&format!(
        "<polyline points=\"{},{} {},{} {},{}\" fill=\"none\" stroke=\"black\"/>\n",
        ml,
        mt,
        ml,
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log N</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">log error</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));
    // tick labels at the data extremes
    for (&n, &x) in r.ns.iter().zip(&xs) {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            px(x),
            h - mb + 16.0,
            n as u64
        ));
    }
    // fitted line
    let fit = |x: f64| r.intercept + r.slope * x;
    svg.push_str(&format!(
        "<polyline points=\"{},{} {},{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
        px(x0),
        py(fit(x0)),
        px(x1),
        py(fit(x1))
    ));
    // data points
    for (&x, &y) in xs.iter().zip(&ys) {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"crimson\"/>\n",
            px(x),
            py(y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">slope = {:.4}</text>\n",
        w - mr - 6.0,
        mt + 16.0,
        r.slope
    ));
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let hi = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_schema_and_small_value_formatting() {
        let rows = vec![
            MetricRow::new("demo", Some(64), "err", 0.5).with_se(0.25),
            MetricRow::new("demo", None, "tiny", 5e-6),
        ];
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "experiment,n,metric,value,std_error");
        assert_eq!(lines[1], "demo,64,err,0.5,0.25");
        assert_eq!(lines[2], "demo,,tiny,5e-6,");
    }

    #[test]
    fn svg_contains_points_and_slope() {
        let rep = SlopeReport {
            ns: vec![64.0, 256.0],
            errors: vec![0.1, 0.025],
            std_errors: vec![0.0, 0.0],
            slope: -1.0,
            intercept: 1.0,
            slope_ci_lo: -1.1,
            slope_ci_hi: -0.9,
        };
        let svg = loglog_svg("demo", &rep);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("slope = -1.0000"));
    }
}
