//! Uniform-grid scalar fields in 1–3 dimensions.
//!
//! Values live at cell centers: cell `(k_1,..,k_d)` sits at
//! `origin[i] + (k_i + 0.5) * spacing[i]`. All quadrature is midpoint rule,
//! so the mass of a density field is `sum(values) * prod(spacing)` exactly.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("spacing must be positive on every axis, got {0}")]
    BadSpacing(f64),
    #[error("values length {got} does not match shape product {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("density must be nonnegative, found {value} at flat index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("density mass {0} deviates from 1 beyond tolerance {1}")]
    BadMass(f64, f64),
    #[error("malformed grid CSV: {0}")]
    Parse(String),
}

/// Scalar field on a uniform grid, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub time_label: Option<f64>,
}

impl GridField {
    pub fn new(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        for &s in &spacing {
            if !(s > 0.0) {
                return Err(GridError::BadSpacing(s));
            }
        }
        let want: usize = shape.iter().product();
        if values.len() != want {
            return Err(GridError::ShapeMismatch {
                got: values.len(),
                want,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self {
            origin,
            spacing,
            shape,
            values,
            time_label: None,
        })
    }

    /// 1D field sampling `f` at cell centers of `[a, b)` split into `n` cells.
    pub fn sample_1d(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = (b - a) / n as f64;
        let values = (0..n).map(|k| f(a + (k as f64 + 0.5) * dx)).collect();
        Self {
            origin: vec![a],
            spacing: vec![dx],
            shape: vec![n],
            values,
            time_label: None,
        }
    }

    /// `d`-dimensional field sampling `f` at cell centers of the box
    /// `[a_i, b_i)` split into `n_i` cells per axis.
    pub fn sample_nd(bounds: &[(f64, f64)], ns: &[usize], f: impl Fn(&[f64]) -> f64) -> Self {
        assert_eq!(bounds.len(), ns.len());
        let d = bounds.len();
        let spacing: Vec<f64> = bounds
            .iter()
            .zip(ns)
            .map(|(&(a, b), &n)| (b - a) / n as f64)
            .collect();
        let origin: Vec<f64> = bounds.iter().map(|&(a, _)| a).collect();
        let total: usize = ns.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        for _ in 0..total {
            for i in 0..d {
                x[i] = origin[i] + (idx[i] as f64 + 0.5) * spacing[i];
            }
            values.push(f(&x));
            // row-major increment: last axis fastest
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < ns[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        Self {
            origin,
            spacing,
            shape: ns.to_vec(),
            values,
            time_label: None,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time_label = Some(t);
        self
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Volume element of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Cell-center coordinate along `axis` for index `k`.
    pub fn center(&self, axis: usize, k: usize) -> f64 {
        self.origin[axis] + (k as f64 + 0.5) * self.spacing[axis]
    }

    /// Midpoint-rule integral of the field.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule L1 norm.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }

    /// Validates the density invariants: nonnegative values and unit mass
    /// within `tol`.
    pub fn check_density(&self, tol: f64) -> Result<(), GridError> {
        for (i, &v) in self.values.iter().enumerate() {
            if v < -1e-12 {
                return Err(GridError::NegativeDensity { index: i, value: v });
            }
        }
        let m = self.mass();
        if (m - 1.0).abs() > tol {
            return Err(GridError::BadMass(m, tol));
        }
        Ok(())
    }

    /// Linear interpolation of a 1D field at `x`, constant-extrapolated with
    /// the edge values outside the grid.
    pub fn interp_1d(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        let n = self.shape[0];
        let dx = self.spacing[0];
        let u = (x - self.origin[0]) / dx - 0.5;
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let k = u.floor() as usize;
        let w = u - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out
    }

    /// Fixed-schema CSV serialization: header rows for origin, spacing,
    /// shape and time_label, then one `value,<v>` row per cell in row-major
    /// order.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let join = |xs: &[f64]| {
            xs.iter()
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "origin,{}", join(&self.origin));
        let _ = writeln!(s, "spacing,{}", join(&self.spacing));
        let _ = writeln!(
            s,
            "shape,{}",
            self.shape
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        match self.time_label {
            Some(t) => {
                let _ = writeln!(s, "time_label,{}", fmt_f64(&t));
            }
            None => {
                let _ = writeln!(s, "time_label,none");
            }
        }
        for v in &self.values {
            let _ = writeln!(s, "value,{}", fmt_f64(v));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut origin = None;
        let mut spacing = None;
        let mut shape: Option<Vec<usize>> = None;
        let mut time_label = None;
        let mut values = Vec::new();
        let parse_f64s = |rest: &[&str]| -> Result<Vec<f64>, GridError> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| GridError::Parse(format!("bad float {t:?}: {e}")))
                })
                .collect()
        };
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split(',').collect();
            match toks[0] {
                "origin" => origin = Some(parse_f64s(&toks[1..])?),
                "spacing" => spacing = Some(parse_f64s(&toks[1..])?),
                "shape" => {
                    shape = Some(
                        toks[1..]
                            .iter()
                            .map(|t| {
                                t.parse::<usize>().map_err(|e| {
                                    GridError::Parse(format!("bad shape {t:?}: {e}"))
                                })
                            })
                            .collect::<Result<_, _>>()?,
                    )
                }
                "time_label" => {
                    if toks.get(1) != Some(&"none") {
                        time_label = Some(parse_f64s(&toks[1..2])?[0]);
                    }
                }
                "value" => values.push(parse_f64s(&toks[1..2])?[0]),
                other => {
                    return Err(GridError::Parse(format!(
                        "line {}: unknown row tag {other:?}",
                        ln + 1
                    )))
                }
            }
        }
        let mut g = GridField::new(
            origin.ok_or_else(|| GridError::Parse("missing origin row".into()))?,
            spacing.ok_or_else(|| GridError::Parse("missing spacing row".into()))?,
            shape.ok_or_else(|| GridError::Parse("missing shape row".into()))?,
            values,
        )?;
        g.time_label = time_label;
        Ok(g)
    }
}

/// Deterministic float formatting shared by all CSV emitters: plain decimal
/// representation, switching to scientific notation below 1e-4 in magnitude.
pub fn fmt_f64(v: &f64) -> String {
    if *v == 0.0 {
        "0".to_string()
    } else if v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Time-indexed sequence of 1D grid fields on a shared grid.
#[derive(Debug, Clone)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
}

impl DensityPath {
    pub fn new(times: Vec<f64>, fields: Vec<GridField>) -> Self {
        assert_eq!(times.len(), fields.len());
        Self { times, fields }
    }

    /// Index of the last snapshot with time <= t, or None if t precedes the
    /// first snapshot beyond tolerance.
    fn bracket(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() || t < self.times[0] - 1e-9 {
            return None;
        }
        let mut lo = 0usize;
        for (i, &s) in self.times.iter().enumerate() {
            if s <= t + 1e-9 {
                lo = i;
            } else {
                break;
            }
        }
        Some(lo)
    }

    /// Density value at (t, x), linear in time between snapshots.
    /// Fails hard if `t` is not covered by the snapshot range.
    pub fn at(&self, t: f64, x: f64) -> Result<f64, GridError> {
        let lo = self.bracket(t).ok_or_else(|| {
            GridError::Parse(format!("no density snapshot covers time {t}"))
        })?;
        if lo + 1 >= self.times.len() {
            if t > *self.times.last().unwrap() + 1e-9 {
                return Err(GridError::Parse(format!(
                    "no density snapshot covers time {t}"
                )));
            }
            return Ok(self.fields[lo].interp_1d(x));
        }
        let (t0, t1) = (self.times[lo], self.times[lo + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(self.fields[lo].interp_1d(x) * (1.0 - w) + self.fields[lo + 1].interp_1d(x) * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_is_midpoint_rule() {
        let g = GridField::sample_1d(0.0, 1.0, 128, |_| 2.0);
        assert!((g.mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let g = GridField::sample_1d(-1.0, 1.0, 16, |x| x * x).with_time(0.25);
        let back = GridField::from_csv(&g.to_csv()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn interp_hits_cell_centers() {
        let g = GridField::sample_1d(0.0, 1.0, 10, |x| 3.0 * x);
        let x = g.center(0, 4);
        assert!((g.interp_1d(x) - 3.0 * x).abs() < 1e-12);
    }

    #[test]
    fn density_check_rejects_bad_mass() {
        let g = GridField::sample_1d(0.0, 1.0, 8, |_| 2.0);
        assert!(g.check_density(1e-6).is_err());
    }
}
