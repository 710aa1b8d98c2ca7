//! Mixed Lebesgue norms with a chosen integration order, localized norms
//! with smooth cutoffs, index-set membership, and Hölder/Young inequality
//! checkers on grids.
//!
//! A mixed norm is the iterated integral taken axis by axis: the innermost
//! axis is reduced with the last exponent, the next with the second-to-last,
//! and so on. Infinite exponents are realized as grid suprema, which is
//! exact for piecewise-constant fields. All integrals are midpoint sums, so
//! the discrete Hölder and Young inequalities hold exactly (up to roundoff).

use thiserror::Error;

use crate::grid::GridField;

#[derive(Debug, Error)]
pub enum MixedLpError {
    #[error("exponent vector length {got} does not match field dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("exponents must be positive, got {0}")]
    BadExponent(f64),
    #[error("order {0:?} is not a permutation of the axes")]
    BadPermutation(Vec<usize>),
    #[error("exponent relation violated on axis {axis}: |{lhs} - {rhs}| > 1e-12")]
    ExponentRelation { axis: usize, lhs: f64, rhs: f64 },
    #[error("fields must share origin, spacing and shape")]
    GridMismatch,
    #[error("center lattice does not cover the support of f: cell at {0:?} is farther than r from every center")]
    CoverageGap(Vec<f64>),
}

/// Per-axis exponent vector, entries in (0, inf], plus an optional time
/// exponent for the space-time index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndex {
    pub p: Vec<f64>,
    pub q: Option<f64>,
}

impl MultiIndex {
    pub fn new(p: Vec<f64>) -> Result<Self, MixedLpError> {
        for &e in &p {
            if !(e > 0.0) {
                return Err(MixedLpError::BadExponent(e));
            }
        }
        Ok(Self { p, q: None })
    }

    pub fn uniform(d: usize, e: f64) -> Self {
        Self::new(vec![e; d]).expect("positive exponent")
    }

    /// Reciprocal sum |1/p| with 1/inf = 0.
    pub fn recip_sum(&self) -> f64 {
        self.p.iter().map(|&e| if e.is_infinite() { 0.0 } else { 1.0 / e }).sum()
    }
}

/// Integration order: `order[0]` is the innermost axis (reduced first, with
/// the last exponent), `order[d-1]` the outermost. Axes are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PermOrder {
    pub order: Vec<usize>,
}

impl PermOrder {
    pub fn new(order: Vec<usize>) -> Result<Self, MixedLpError> {
        let d = order.len();
        let mut seen = vec![false; d];
        for &a in &order {
            if a >= d || seen[a] {
                return Err(MixedLpError::BadPermutation(order));
            }
            seen[a] = true;
        }
        Ok(Self { order })
    }

    /// Innermost axis last-indexed first: (d-1, d-2, ..., 0), which reduces
    /// the fastest-varying storage axis first.
    pub fn natural(d: usize) -> Self {
        Self {
            order: (0..d).rev().collect(),
        }
    }
}

/// Reduces `values` (row-major, `shape`) along `axis` with the L^e norm
/// weighted by `dx`; e = inf takes the supremum of |.|.
fn reduce_axis(values: &[f64], shape: &[usize], axis: usize, e: f64, dx: f64) -> Vec<f64> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut acc = 0.0f64;
            if e.is_infinite() {
                for k in 0..len {
                    acc = acc.max(values[base + k * inner].abs());
                }
                out.push(acc);
            } else {
                for k in 0..len {
                    acc += values[base + k * inner].abs().powf(e);
                }
                out.push((acc * dx).powf(1.0 / e));
            }
        }
    }
    out
}

/// Iterated mixed norm of `f` with exponents `p` taken in the integration
/// order `perm`: the innermost axis gets `p[d-1]`, the outermost `p[0]`.
pub fn mixed_norm(f: &GridField, p: &MultiIndex, perm: &PermOrder) -> Result<f64, MixedLpError> {
    let d = f.dim();
    if p.p.len() != d {
        return Err(MixedLpError::DimMismatch { got: p.p.len(), want: d });
    }
    if perm.order.len() != d {
        return Err(MixedLpError::BadPermutation(perm.order.clone()));
    }
    PermOrder::new(perm.order.clone())?;
    let mut values = f.values.clone();
    let mut shape = f.shape.clone();
    let mut spacing = f.spacing.clone();
    let mut live: Vec<usize> = (0..d).collect();
    for (stage, &axis) in perm.order.iter().enumerate() {
        let pos = live
            .iter()
            .position(|&a| a == axis)
            .ok_or_else(|| MixedLpError::BadPermutation(perm.order.clone()))?;
        let e = p.p[d - 1 - stage];
        values = reduce_axis(&values, &shape, pos, e, spacing[pos]);
        shape.remove(pos);
        spacing.remove(pos);
        live.remove(pos);
    }
    debug_assert_eq!(values.len(), 1);
    Ok(values[0])
}

/// Smooth cutoff profile: 1 on the unit ball, 0 outside radius 2, C^inf in
/// between via the standard exp(-1/t) partition.
pub fn chi_profile(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let h = |t: f64| (-1.0 / t).exp();
        let a = h(2.0 - s);
        let b = h(s - 1.0);
        a / (a + b)
    }
}

/// Cutoff radius plus the lattice of cutoff centers.
#[derive(Debug, Clone)]
pub struct LocalizationConfig {
    pub r: f64,
    pub centers: Vec<Vec<f64>>,
}

impl LocalizationConfig {
    /// Uniform lattice with spacing r covering the box `bounds`.
    pub fn lattice(r: f64, bounds: &[(f64, f64)]) -> Self {
        assert!(r > 0.0);
        let d = bounds.len();
        let counts: Vec<usize> = bounds
            .iter()
            .map(|&(a, b)| ((b - a) / r).ceil() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        let mut centers = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            centers.push(
                (0..d)
                    .map(|i| bounds[i].0 + idx[i] as f64 * r)
                    .collect::<Vec<f64>>(),
            );
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        Self { r, centers }
    }
}

/// `max_z` of the mixed norm of `chi((x - z)/r) * f`. Rejects lattices that
/// leave part of the support of `f` farther than r from every center.
pub fn localized_mixed_norm(
    f: &GridField,
    p: &MultiIndex,
    perm: &PermOrder,
    loc: &LocalizationConfig,
) -> Result<f64, MixedLpError> {
    let d = f.dim();
    let cell = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            x[i] = f.center(i, rem % f.shape[i]);
            rem /= f.shape[i];
        }
        x
    };
    // coverage check over the support
    for (flat, &v) in f.values.iter().enumerate() {
        if v != 0.0 {
            let x = cell(flat);
            let covered = loc.centers.iter().any(|z| {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= loc.r + 1e-12
            });
            if !covered {
                return Err(MixedLpError::CoverageGap(x));
            }
        }
    }
    let mut best = 0.0f64;
    for z in &loc.centers {
        let mut g = f.clone();
        for (flat, v) in g.values.iter_mut().enumerate() {
            if *v != 0.0 {
                let x = cell(flat);
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                *v *= chi_profile(d2.sqrt() / loc.r);
            }
        }
        best = best.max(mixed_norm(&g, p, perm)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSet {
    Io,
    I1,
    I2,
}

/// Membership in the strict index sets:
/// Io: q > 2, all p_i > 2, |1/p| + 2/q < 1;
/// I1: q > 1, all p_i > 1, |1/p| + 2/q < 1;
/// I2: q > 1, all p_i > 1, |1/p| + 2/q < 2.
pub fn index_check(q: f64, p: &MultiIndex, which: IndexSet) -> bool {
    let total = p.recip_sum() + if q.is_infinite() { 0.0 } else { 2.0 / q };
    match which {
        IndexSet::Io => q > 2.0 && p.p.iter().all(|&e| e > 2.0) && total < 1.0,
        IndexSet::I1 => q > 1.0 && p.p.iter().all(|&e| e > 1.0) && total < 1.0,
        IndexSet::I2 => q > 1.0 && p.p.iter().all(|&e| e > 1.0) && total < 2.0,
    }
}

fn recip(e: f64) -> f64 {
    if e.is_infinite() {
        0.0
    } else {
        1.0 / e
    }
}

fn check_relation(
    p: &MultiIndex,
    r: &MultiIndex,
    q: &MultiIndex,
    offset: f64,
) -> Result<(), MixedLpError> {
    for i in 0..p.p.len() {
        let lhs = recip(p.p[i]) + recip(r.p[i]);
        let rhs = offset + recip(q.p[i]);
        if (lhs - rhs).abs() > 1e-12 {
            return Err(MixedLpError::ExponentRelation { axis: i, lhs, rhs });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Hölder: with 1/p + 1/r = 1/q componentwise,
/// `|| f g ||_q <= || f ||_p || g ||_r` in the shared integration order.
pub fn holder_check(
    f: &GridField,
    g: &GridField,
    p: &MultiIndex,
    r: &MultiIndex,
    q: &MultiIndex,
    perm: &PermOrder,
) -> Result<InequalityCheck, MixedLpError> {
    if f.shape != g.shape || f.spacing != g.spacing || f.origin != g.origin {
        return Err(MixedLpError::GridMismatch);
    }
    check_relation(p, r, q, 0.0)?;
    let mut prod = f.clone();
    for (v, w) in prod.values.iter_mut().zip(&g.values) {
        *v *= w;
    }
    let lhs = mixed_norm(&prod, q, perm)?;
    let rhs = mixed_norm(f, p, perm)? * mixed_norm(g, r, perm)?;
    Ok(InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-8),
    })
}

/// Periodic (circular) convolution on the shared grid, with the cell volume
/// as quadrature weight.
pub fn periodic_convolve(f: &GridField, g: &GridField) -> Result<GridField, MixedLpError> {
    if f.shape != g.shape || f.spacing != g.spacing {
        return Err(MixedLpError::GridMismatch);
    }
    let d = f.dim();
    let n = f.len();
    let vol = f.cell_volume();
    let decode = |flat: usize| -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0usize; d];
        for i in (0..d).rev() {
            idx[i] = rem % f.shape[i];
            rem /= f.shape[i];
        }
        idx
    };
    let encode = |idx: &[usize]| -> usize {
        let mut flat = 0usize;
        for i in 0..d {
            flat = flat * f.shape[i] + idx[i];
        }
        flat
    };
    let mut out = f.clone();
    for k in 0..n {
        let ki = decode(k);
        let mut acc = 0.0;
        for j in 0..n {
            let ji = decode(j);
            let diff: Vec<usize> = (0..d)
                .map(|i| (ki[i] + f.shape[i] - ji[i]) % f.shape[i])
                .collect();
            acc += f.values[j] * g.values[encode(&diff)];
        }
        out.values[k] = acc * vol;
    }
    Ok(out)
}

/// Young: with 1/p + 1/r = 1 + 1/q componentwise,
/// `|| f * g ||_q <= || f ||_p || g ||_r` for the periodic convolution.
pub fn young_check(
    f: &GridField,
    g: &GridField,
    p: &MultiIndex,
    r: &MultiIndex,
    q: &MultiIndex,
    perm: &PermOrder,
) -> Result<InequalityCheck, MixedLpError> {
    check_relation(p, r, q, 1.0)?;
    let conv = periodic_convolve(f, g)?;
    let lhs = mixed_norm(&conv, q, perm)?;
    let rhs = mixed_norm(f, p, perm)? * mixed_norm(g, r, perm)?;
    Ok(InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-6),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss2d(nx: usize) -> GridField {
        GridField::sample_nd(&[(-6.0, 6.0), (-6.0, 6.0)], &[nx, nx], |x| {
            (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp() / (2.0 * std::f64::consts::PI)
        })
    }

    #[test]
    fn unit_box_indicator_is_one() {
        let f = GridField::sample_nd(&[(0.0, 1.0), (0.0, 1.0)], &[32, 32], |_| 1.0);
        for p in [
            MultiIndex::uniform(2, 1.0),
            MultiIndex::uniform(2, 2.0),
            MultiIndex::new(vec![3.0, 1.5]).unwrap(),
        ] {
            for perm in [PermOrder::new(vec![0, 1]).unwrap(), PermOrder::new(vec![1, 0]).unwrap()] {
                let v = mixed_norm(&f, &p, &perm).unwrap();
                assert!((v - 1.0).abs() < 1e-12, "p={:?} perm={:?} v={v}", p, perm);
            }
        }
    }

    #[test]
    fn separable_fields_factor() {
        let g = |x: f64| (-x * x).exp();
        let h = |y: f64| 1.0 / (1.0 + y * y);
        let f = GridField::sample_nd(&[(-5.0, 5.0), (-5.0, 5.0)], &[256, 256], |x| {
            g(x[0]) * h(x[1])
        });
        let p = MultiIndex::new(vec![2.0, 3.0]).unwrap();
        // natural order: axis 1 innermost gets p[1]=3, axis 0 gets p[0]=2
        let v = mixed_norm(&f, &p, &PermOrder::natural(2)).unwrap();
        let gx = GridField::sample_1d(-5.0, 5.0, 256, g);
        let hy = GridField::sample_1d(-5.0, 5.0, 256, h);
        let ng = mixed_norm(&gx, &MultiIndex::uniform(1, 2.0), &PermOrder::natural(1)).unwrap();
        let nh = mixed_norm(&hy, &MultiIndex::uniform(1, 3.0), &PermOrder::natural(1)).unwrap();
        assert!((v - ng * nh).abs() < 1e-6 * ng * nh);
    }

    #[test]
    fn mixed_22_equals_plain_l2() {
        let f = gauss2d(256);
        let v = mixed_norm(&f, &MultiIndex::uniform(2, 2.0), &PermOrder::natural(2)).unwrap();
        // direct 2D quadrature of the L2 norm
        let direct = (f.values.iter().map(|v| v * v).sum::<f64>() * f.cell_volume()).sqrt();
        assert!((v - direct).abs() < 1e-12 * direct.max(1.0));
        // closed form: ||phi_2d||_2 = 1/(2 sqrt(pi)) for the standard gaussian
        let exact = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert!((v - exact).abs() < 1e-4);
    }

    #[test]
    fn infinite_exponent_is_supremum() {
        let f = GridField::sample_nd(&[(0.0, 1.0), (0.0, 1.0)], &[16, 16], |x| x[0] + 2.0 * x[1]);
        let p = MultiIndex::new(vec![f64::INFINITY, f64::INFINITY]).unwrap();
        let v = mixed_norm(&f, &p, &PermOrder::natural(2)).unwrap();
        assert_eq!(v, f.linf());
    }

    #[test]
    fn permutation_order_changes_the_value() {
        // projections of a rectangle-like support differ, so the two
        // integration orders give values apart by far more than 1%
        let f = GridField::sample_nd(&[(0.0, 1.0), (0.0, 1.0)], &[64, 64], |x| {
            let rect = if x[0] < 0.3 && x[1] < 0.9 { 1.0 } else { 0.0 };
            let bump = if x[0] > 0.5 && x[0] < 0.6 && x[1] > 0.95 { 0.5 } else { 0.0 };
            rect + bump
        });
        let p = MultiIndex::new(vec![1.0, f64::INFINITY]).unwrap();
        let a = mixed_norm(&f, &p, &PermOrder::new(vec![1, 0]).unwrap()).unwrap();
        let b = mixed_norm(&f, &p, &PermOrder::new(vec![0, 1]).unwrap()).unwrap();
        assert!((a - b).abs() > 0.01 * a.max(b), "a={a}, b={b}");
    }

    #[test]
    fn homogeneity() {
        let f = gauss2d(64);
        let p = MultiIndex::new(vec![1.5, 4.0]).unwrap();
        let perm = PermOrder::natural(2);
        let base = mixed_norm(&f, &p, &perm).unwrap();
        let scaled = mixed_norm(&f.map(|v| -3.5 * v), &p, &perm).unwrap();
        assert!((scaled - 3.5 * base).abs() < 1e-12 * scaled);
    }

    #[test]
    fn index_check_examples() {
        let p8 = MultiIndex::uniform(2, 8.0);
        assert!(index_check(8.0, &p8, IndexSet::Io));
        let p4 = MultiIndex::uniform(2, 4.0);
        assert!(!index_check(4.0, &p4, IndexSet::Io));
        assert!(index_check(4.0, &p4, IndexSet::I2));
        assert!(!index_check(2.0, &p8, IndexSet::Io));
    }

    #[test]
    fn holder_equality_with_unit_g() {
        let f = gauss2d(64);
        let g = f.map(|_| 1.0);
        let p = MultiIndex::uniform(2, 2.0);
        let r = MultiIndex::new(vec![f64::INFINITY, f64::INFINITY]).unwrap();
        let q = MultiIndex::uniform(2, 2.0);
        let out = holder_check(&f, &g, &p, &r, &q, &PermOrder::natural(2)).unwrap();
        assert!(out.pass);
        assert!((out.lhs - out.rhs).abs() < 1e-12 * out.rhs);
    }

    #[test]
    fn holder_rejects_bad_exponents() {
        let f = gauss2d(16);
        let p = MultiIndex::uniform(2, 2.0);
        let q = MultiIndex::uniform(2, 2.0);
        assert!(matches!(
            holder_check(&f, &f, &p, &p, &q, &PermOrder::natural(2)),
            Err(MixedLpError::ExponentRelation { .. })
        ));
    }

    #[test]
    fn young_delta_identity() {
        // g = discrete delta (mass 1 in one cell), r = 1: f * g = f
        let f = GridField::sample_1d(0.0, 1.0, 32, |x| (6.0 * x).sin().abs());
        let mut g = f.map(|_| 0.0);
        g.values[0] = 1.0 / g.spacing[0];
        let p = MultiIndex::uniform(1, 2.0);
        let r = MultiIndex::uniform(1, 1.0);
        let q = MultiIndex::uniform(1, 2.0);
        let out = young_check(&f, &g, &p, &r, &q, &PermOrder::natural(1)).unwrap();
        assert!(out.pass);
        assert!((out.lhs - mixed_norm(&f, &q, &PermOrder::natural(1)).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn young_gaussian_peak_bound() {
        // q = inf, p = r = 2: peak of f*g bounded by ||f||_2 ||g||_2
        let f = GridField::sample_1d(-8.0, 8.0, 256, |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt());
        let out = young_check(
            &f,
            &f,
            &MultiIndex::uniform(1, 2.0),
            &MultiIndex::uniform(1, 2.0),
            &MultiIndex::new(vec![f64::INFINITY]).unwrap(),
            &PermOrder::natural(1),
        )
        .unwrap();
        assert!(out.pass);
        // closed form: peak of N(0,1)*N(0,1) is the N(0,2) peak at 0
        let exact = 1.0 / (2.0 * (std::f64::consts::PI).sqrt());
        assert!((out.lhs - exact).abs() < 1e-3);
    }

    #[test]
    fn localized_norm_single_ball_support() {
        // f supported inside |x| <= r around one center: cutoff is identity
        let f = GridField::sample_1d(-2.0, 2.0, 256, |x| {
            if x.abs() < 0.5 {
                (1.0 - 4.0 * x * x).max(0.0)
            } else {
                0.0
            }
        });
        let loc = LocalizationConfig {
            r: 1.0,
            centers: vec![vec![0.0]],
        };
        let p = MultiIndex::uniform(1, 2.0);
        let perm = PermOrder::natural(1);
        let lv = localized_mixed_norm(&f, &p, &perm, &loc).unwrap();
        let v = mixed_norm(&f, &p, &perm).unwrap();
        assert!((lv - v).abs() < 1e-12);
    }

    #[test]
    fn localized_norm_rejects_uncovered_support() {
        let f = GridField::sample_1d(-2.0, 2.0, 64, |_| 1.0);
        let loc = LocalizationConfig {
            r: 0.5,
            centers: vec![vec![0.0]],
        };
        assert!(matches!(
            localized_mixed_norm(&f, &MultiIndex::uniform(1, 2.0), &PermOrder::natural(1), &loc),
            Err(MixedLpError::CoverageGap(_))
        ));
    }

    #[test]
    fn chi_profile_shape() {
        assert_eq!(chi_profile(0.5), 1.0);
        assert_eq!(chi_profile(1.0), 1.0);
        assert_eq!(chi_profile(2.0), 0.0);
        assert_eq!(chi_profile(3.0), 0.0);
        let mid = chi_profile(1.5);
        assert!(mid > 0.0 && mid < 1.0);
        // monotone on the transition band
        assert!(chi_profile(1.2) > chi_profile(1.4));
    }
}
