//! Interaction kernels, drift envelopes, mollifier families and the
//! convolution operators that assemble particle drifts.
//!
//! Every kernel obeys the diagonal-zero convention `eval(t, x, x) = 0`;
//! singular kernels extend it to their whole singular set. Built-in kernels
//! ignore `t`.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::GridField;
use crate::particles::ParticleEnsemble;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel requires dimension {want}, got {got}")]
    Dimension { want: String, got: usize },
    #[error("power kernel needs alpha in (0,1), got {0}; for d = 1 use make_axis_kernel")]
    BadAlpha(f64),
    #[error("axis kernel exponents must lie in (0, 1/2) with sum < 1, got {0:?}")]
    BadAxisAlphas(Vec<f64>),
    #[error("non-finite coordinate on particle {index}")]
    NonFiniteParticle { index: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("density mass {0} deviates from 1 by more than 1e-3")]
    BadDensityMass(f64),
}

type PairFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// Shape of a built-in kernel; used to pick O(N) / O(N log N) bulk paths.
#[derive(Clone)]
pub enum KernelKind {
    /// 1D indicator of `x - y > 0` (strict, so the diagonal is zero).
    Rank,
    /// `c(t,x,y) / |x-y|^alpha`, zero on the diagonal.
    Power { alpha: f64, c: Arc<PairFn> },
    /// `c(t,x,y) / prod_i |x_i-y_i|^{alpha_i}`, zero on every axis-coincidence set.
    Axis { alphas: Vec<f64>, c: Arc<PairFn> },
    /// `phi_eps(x - y)` for a mollifier family, diagonal forced to zero.
    Mollified { family: MollifierFamily, eps: f64 },
    /// 1D `sin(x - y)`.
    SmoothSin,
    Zero,
    Custom(Arc<PairFn>),
}

impl std::fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            KernelKind::Rank => "Rank",
            KernelKind::Power { .. } => "Power",
            KernelKind::Axis { .. } => "Axis",
            KernelKind::Mollified { .. } => "Mollified",
            KernelKind::SmoothSin => "SmoothSin",
            KernelKind::Zero => "Zero",
            KernelKind::Custom(_) => "Custom",
        };
        f.write_str(name)
    }
}

/// Evaluatable interaction kernel `phi(t, x, y)` with metadata.
#[derive(Debug, Clone)]
pub struct InteractionKernel {
    pub kind: KernelKind,
    pub dim: usize,
    pub is_bounded: bool,
    pub sup_norm: Option<f64>,
    pub singular_exponents: Option<Vec<f64>>,
}

impl InteractionKernel {
    /// Always true; kept as a field-like accessor to document the convention.
    pub fn diag_zero(&self) -> bool {
        true
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        match &self.kind {
            KernelKind::Rank => {
                if x[0] - y[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Power { alpha, c } => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 == 0.0 {
                    0.0
                } else {
                    c(t, x, y) / r2.sqrt().powf(*alpha)
                }
            }
            KernelKind::Axis { alphas, c } => {
                let mut denom = 1.0;
                for (i, a) in alphas.iter().enumerate() {
                    let s = (x[i] - y[i]).abs();
                    if s == 0.0 {
                        return 0.0;
                    }
                    denom *= s.powf(*a);
                }
                c(t, x, y) / denom
            }
            KernelKind::Mollified { family, eps } => {
                if x == y {
                    0.0
                } else {
                    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                    family.eval_at_eps(*eps, &diff)
                }
            }
            KernelKind::SmoothSin => (x[0] - y[0]).sin(),
            KernelKind::Zero => 0.0,
            KernelKind::Custom(f) => {
                if x == y {
                    0.0
                } else {
                    f(t, x, y)
                }
            }
        }
    }
}

/// Rank-based interaction: `phi(x, y) = 1_{x - y > 0}` in d = 1.
pub fn make_rank_kernel() -> InteractionKernel {
    InteractionKernel {
        kind: KernelKind::Rank,
        dim: 1,
        is_bounded: true,
        sup_norm: Some(1.0),
        singular_exponents: None,
    }
}

/// `sin(x - y)` in d = 1; the smooth bounded kernel of the rate experiments.
pub fn make_smooth_sin_kernel() -> InteractionKernel {
    InteractionKernel {
        kind: KernelKind::SmoothSin,
        dim: 1,
        is_bounded: true,
        sup_norm: Some(1.0),
        singular_exponents: None,
    }
}

pub fn make_zero_kernel(dim: usize) -> InteractionKernel {
    InteractionKernel {
        kind: KernelKind::Zero,
        dim,
        is_bounded: true,
        sup_norm: Some(0.0),
        singular_exponents: None,
    }
}

/// `c(t,x,y)/|x-y|^alpha` for d >= 2 and alpha in (0,1).
pub fn make_power_kernel(
    dim: usize,
    alpha: f64,
    c: Arc<PairFn>,
) -> Result<InteractionKernel, KernelError> {
    if dim < 2 {
        return Err(KernelError::Dimension {
            want: ">= 2".into(),
            got: dim,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(KernelError::BadAlpha(alpha));
    }
    Ok(InteractionKernel {
        kind: KernelKind::Power { alpha, c },
        dim,
        is_bounded: false,
        sup_norm: None,
        singular_exponents: Some(vec![alpha]),
    })
}

/// `c(t,x,y)/prod |x_i-y_i|^{alpha_i}` with alpha_i in (0,1/2), sum < 1.
pub fn make_axis_kernel(
    alphas: Vec<f64>,
    c: Arc<PairFn>,
) -> Result<InteractionKernel, KernelError> {
    let ok = !alphas.is_empty()
        && alphas.iter().all(|a| *a > 0.0 && *a < 0.5)
        && alphas.iter().sum::<f64>() < 1.0;
    if !ok {
        return Err(KernelError::BadAxisAlphas(alphas));
    }
    let dim = alphas.len();
    Ok(InteractionKernel {
        kind: KernelKind::Axis {
            alphas: alphas.clone(),
            c,
        },
        dim,
        is_bounded: false,
        sup_norm: None,
        singular_exponents: Some(alphas),
    })
}

/// `phi_eps(x - y)` as an interaction kernel (moderate regime).
pub fn make_mollified_kernel(family: MollifierFamily, eps: f64) -> InteractionKernel {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
    let dim = family.dim;
    let sup = family.sup_norm / eps.powi(dim as i32);
    InteractionKernel {
        kind: KernelKind::Mollified { family, eps },
        dim,
        is_bounded: true,
        sup_norm: Some(sup),
        singular_exponents: None,
    }
}

/// Probability density with support in the unit ball, plus its scaling
/// `phi_eps(x) = eps^{-d} phi(x/eps)`.
#[derive(Clone)]
pub struct MollifierFamily {
    pub base: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub dim: usize,
    pub sup_norm: f64,
    /// True for the box profile; unlocks the sorted-window bulk path.
    pub is_box: bool,
}

impl std::fmt::Debug for MollifierFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MollifierFamily")
            .field("dim", &self.dim)
            .field("sup_norm", &self.sup_norm)
            .field("is_box", &self.is_box)
            .finish()
    }
}

impl MollifierFamily {
    pub fn eval_base(&self, x: &[f64]) -> f64 {
        (self.base)(x)
    }

    pub fn eval_at_eps(&self, eps: f64, x: &[f64]) -> f64 {
        assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
        let scaled: Vec<f64> = x.iter().map(|v| v / eps).collect();
        (self.base)(&scaled) / eps.powi(self.dim as i32)
    }
}

/// 1D box mollifier `phi(x) = 1/2` on `[-1, 1]`.
pub fn make_box_mollifier() -> MollifierFamily {
    MollifierFamily {
        base: Arc::new(|x: &[f64]| if x[0].abs() <= 1.0 { 0.5 } else { 0.0 }),
        dim: 1,
        sup_norm: 0.5,
        is_box: true,
    }
}

/// Outer drift `F(t, x, r)` with declared Lipschitz constant in `r` and a
/// growth majorant `|F| <= growth(t,x) + lipschitz_r * |r|`.
#[derive(Clone)]
pub struct DriftEnvelope {
    pub kind: DriftKind,
    pub lipschitz_r: f64,
    pub growth: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
}

#[derive(Clone)]
pub enum DriftKind {
    Zero,
    /// `F(t,x,r) = scale * r` along every coordinate of a 1D state.
    Linear { scale: f64 },
    /// `F(t,x,r) = amp * tanh(r)`; bounded and Lipschitz.
    TanhScale { amp: f64 },
    Custom(Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>),
}

impl std::fmt::Debug for DriftEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.kind {
            DriftKind::Zero => "Zero",
            DriftKind::Linear { .. } => "Linear",
            DriftKind::TanhScale { .. } => "TanhScale",
            DriftKind::Custom(_) => "Custom",
        };
        f.debug_struct("DriftEnvelope")
            .field("kind", &name)
            .field("lipschitz_r", &self.lipschitz_r)
            .finish()
    }
}

impl DriftEnvelope {
    pub fn zero() -> Self {
        Self {
            kind: DriftKind::Zero,
            lipschitz_r: 0.0,
            growth: Arc::new(|_, _| 0.0),
        }
    }

    /// `F(t,x,r) = r` (the Burgers / rate-experiment envelope).
    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    pub fn linear(scale: f64) -> Self {
        Self {
            kind: DriftKind::Linear { scale },
            lipschitz_r: scale.abs(),
            growth: Arc::new(|_, _| 0.0),
        }
    }

    /// Bounded envelope `amp * tanh(r)` used in the moderate experiments.
    pub fn tanh_scale(amp: f64) -> Self {
        Self {
            kind: DriftKind::TanhScale { amp },
            lipschitz_r: amp.abs(),
            growth: Arc::new(move |_, _| amp.abs()),
        }
    }

    pub fn custom(
        f: Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>,
        lipschitz_r: f64,
        growth: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    ) -> Self {
        Self {
            kind: DriftKind::Custom(f),
            lipschitz_r,
            growth,
        }
    }

    /// Writes `F(t, x, r)` into `out` (one entry per state coordinate).
    pub fn eval(&self, t: f64, x: &[f64], r: f64, out: &mut [f64]) {
        match &self.kind {
            DriftKind::Zero => out.fill(0.0),
            DriftKind::Linear { scale } => out.fill(scale * r),
            DriftKind::TanhScale { amp } => out.fill(amp * r.tanh()),
            DriftKind::Custom(f) => f(t, x, r, out),
        }
    }

    /// Scalar fast path for 1D states.
    #[inline]
    pub fn eval_1d(&self, t: f64, x: f64, r: f64) -> f64 {
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Linear { scale } => scale * r,
            DriftKind::TanhScale { amp } => amp * r.tanh(),
            DriftKind::Custom(f) => {
                let mut out = [0.0];
                f(t, &[x], r, &mut out);
                out[0]
            }
        }
    }
}

/// `(phi_t (*) eta)(x) = (1/N) sum_j phi(t, x, X^j)`, with the diagonal-zero
/// convention killing self-interaction terms.
pub fn empirical_convolve(
    kernel: &InteractionKernel,
    t: f64,
    x: &[f64],
    ensemble: &ParticleEnsemble,
) -> Result<f64, KernelError> {
    if ensemble.n == 0 {
        return Err(KernelError::EmptyEnsemble);
    }
    let d = ensemble.dim;
    let mut acc = 0.0;
    for j in 0..ensemble.n {
        let y = ensemble.particle(j);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFiniteParticle { index: j });
        }
        acc += kernel.eval(t, x, y);
    }
    debug_assert_eq!(x.len(), d);
    Ok(acc / ensemble.n as f64)
}

/// Empirical convolution evaluated at every particle, using structure-aware
/// bulk paths where the kernel admits one:
///
/// * rank kernel — sort once, O(N log N);
/// * sin kernel — trigonometric sufficient statistics, O(N);
/// * 1D box mollifier — sorted window counting, O(N log N);
/// * otherwise — generic O(N^2) pairwise evaluation.
pub fn empirical_convolve_all(
    kernel: &InteractionKernel,
    t: f64,
    ensemble: &ParticleEnsemble,
) -> Result<Vec<f64>, KernelError> {
    if ensemble.n == 0 {
        return Err(KernelError::EmptyEnsemble);
    }
    let n = ensemble.n;
    let nf = n as f64;
    if let Some(j) = ensemble
        .positions
        .iter()
        .position(|v| !v.is_finite())
        .map(|flat| flat / ensemble.dim)
    {
        return Err(KernelError::NonFiniteParticle { index: j });
    }
    match &kernel.kind {
        KernelKind::Zero => Ok(vec![0.0; n]),
        KernelKind::Rank => {
            let xs = &ensemble.positions;
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_unstable_by(|&a, &b| {
                xs[a as usize].partial_cmp(&xs[b as usize]).unwrap()
            });
            // ranks count strictly smaller values; ties share a rank.
            let mut out = vec![0.0; n];
            let mut i = 0usize;
            while i < n {
                let mut j = i;
                while j + 1 < n && xs[order[j + 1] as usize] == xs[order[i] as usize] {
                    j += 1;
                }
                for k in i..=j {
                    out[order[k] as usize] = i as f64 / nf;
                }
                i = j + 1;
            }
            Ok(out)
        }
        KernelKind::SmoothSin => {
            let xs = &ensemble.positions;
            let mut sum_sin = 0.0;
            let mut sum_cos = 0.0;
            for &x in xs {
                sum_sin += x.sin();
                sum_cos += x.cos();
            }
            Ok(xs
                .iter()
                .map(|&x| (x.sin() * sum_cos - x.cos() * sum_sin) / nf)
                .collect())
        }
        KernelKind::Mollified { family, eps } if family.is_box && ensemble.dim == 1 => {
            let xs = &ensemble.positions;
            let mut sorted = xs.clone();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let height = 0.5 / eps;
            let mut out = Vec::with_capacity(n);
            let mut lo = 0usize;
            let mut hi = 0usize;
            // window counts for the *sorted* values, re-looked-up per particle
            // via binary search to keep output order aligned with input order.
            let mut counts = vec![0usize; n];
            for (i, &x) in sorted.iter().enumerate() {
                while sorted[lo] < x - eps {
                    lo += 1;
                }
                while hi < n && sorted[hi] <= x + eps {
                    hi += 1;
                }
                counts[i] = hi - lo - 1; // excluding self (diagonal zero)
            }
            for &x in xs {
                let i = sorted.partition_point(|&v| v < x);
                out.push(counts[i] as f64 * height / nf);
            }
            Ok(out)
        }
        _ => {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let xi = ensemble.particle(i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += kernel.eval(t, xi, ensemble.particle(j));
                }
                out.push(acc / nf);
            }
            Ok(out)
        }
    }
}

/// Midpoint-rule quadrature of `int phi_t(x, y) rho(y) dy` on the density's
/// grid. Rejects densities whose mass is off by more than 1e-3.
pub fn measure_convolve(
    kernel: &InteractionKernel,
    t: f64,
    x: &[f64],
    density: &GridField,
) -> Result<f64, KernelError> {
    let mass = density.mass();
    if (mass - 1.0).abs() > 1e-3 {
        return Err(KernelError::BadDensityMass(mass));
    }
    Ok(measure_convolve_unchecked(kernel, t, x, density))
}

fn measure_convolve_unchecked(
    kernel: &InteractionKernel,
    t: f64,
    x: &[f64],
    density: &GridField,
) -> f64 {
    let d = density.dim();
    let vol = density.cell_volume();
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0f64; d];
    for &v in &density.values {
        for i in 0..d {
            y[i] = density.center(i, idx[i]);
        }
        acc += kernel.eval(t, x, &y) * v;
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < density.shape[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    acc * vol
}

/// Measure convolution evaluated at every cell center of a 1D density grid,
/// with O(n) paths for the rank (cumulative mass) and sin (trig moments)
/// kernels; generic kernels fall back to O(n^2) quadrature.
pub fn measure_convolve_grid(
    kernel: &InteractionKernel,
    t: f64,
    density: &GridField,
) -> Result<Vec<f64>, KernelError> {
    let mass = density.mass();
    if (mass - 1.0).abs() > 1e-3 {
        return Err(KernelError::BadDensityMass(mass));
    }
    let n = density.len();
    let vol = density.cell_volume();
    match &kernel.kind {
        KernelKind::Zero => Ok(vec![0.0; n]),
        KernelKind::Rank if density.dim() == 1 => {
            // (phi (*) rho)(x_k) = mass strictly below x_k; with cell
            // centers, the k-th center sees cells 0..k fully.
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(n);
            for &v in &density.values {
                out.push(acc);
                acc += v * vol;
            }
            Ok(out)
        }
        KernelKind::SmoothSin if density.dim() == 1 => {
            let mut ms = 0.0;
            let mut mc = 0.0;
            for (k, &v) in density.values.iter().enumerate() {
                let y = density.center(0, k);
                ms += y.sin() * v;
                mc += y.cos() * v;
            }
            ms *= vol;
            mc *= vol;
            Ok((0..n)
                .map(|k| {
                    let x = density.center(0, k);
                    x.sin() * mc - x.cos() * ms
                })
                .collect())
        }
        _ => {
            let mut out = Vec::with_capacity(n);
            let d = density.dim();
            let mut idx = vec![0usize; d];
            let mut x = vec![0.0f64; d];
            for _ in 0..n {
                for i in 0..d {
                    x[i] = density.center(i, idx[i]);
                }
                out.push(measure_convolve_unchecked(kernel, t, &x, density));
                for i in (0..d).rev() {
                    idx[i] += 1;
                    if idx[i] < density.shape[i] {
                        break;
                    }
                    idx[i] = 0;
                }
            }
            Ok(out)
        }
    }
}

/// Particle drift `b(t, x, eta) = F(t, x, (phi_t (*) eta)(x))`.
pub fn assemble_drift(
    envelope: &DriftEnvelope,
    kernel: &InteractionKernel,
    t: f64,
    x: &[f64],
    ensemble: &ParticleEnsemble,
) -> Result<Vec<f64>, KernelError> {
    let r = empirical_convolve(kernel, t, x, ensemble)?;
    let mut out = vec![0.0; x.len()];
    envelope.eval(t, x, r, &mut out);
    Ok(out)
}

/// Count of ordered particle pairs closer than `tol`; the near-singular
/// encounter diagnostic for raw singular-kernel simulation.
pub fn count_near_singular(ensemble: &ParticleEnsemble, tol: f64) -> usize {
    let n = ensemble.n;
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = ensemble
                .particle(i)
                .iter()
                .zip(ensemble.particle(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() < tol {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(xs: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::from_positions_1d(xs.to_vec(), 0.0)
    }

    #[test]
    fn rank_kernel_examples() {
        let k = make_rank_kernel();
        assert_eq!(k.eval(0.0, &[1.0], &[0.5]), 1.0);
        assert_eq!(k.eval(0.0, &[0.3], &[0.3]), 0.0);
        assert_eq!(k.eval(0.0, &[-1.0], &[2.0]), 0.0);
    }

    #[test]
    fn power_kernel_examples() {
        let one: Arc<PairFn> = Arc::new(|_, _, _| 1.0);
        let k = make_power_kernel(2, 0.5, one.clone()).unwrap();
        assert_eq!(k.eval(0.0, &[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(k.eval(0.0, &[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let two: Arc<PairFn> = Arc::new(|_, _, _| 2.0);
        let k2 = make_power_kernel(2, 0.5, two).unwrap();
        assert!((k2.eval(0.0, &[4.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-14);
        assert!(make_power_kernel(1, 0.5, one.clone()).is_err());
        assert!(make_power_kernel(2, 1.5, one).is_err());
    }

    #[test]
    fn axis_kernel_examples() {
        let one: Arc<PairFn> = Arc::new(|_, _, _| 1.0);
        let k = make_axis_kernel(vec![0.25, 0.25], one.clone()).unwrap();
        assert!((k.eval(0.0, &[1.0, 1.0], &[0.0, 0.0]) - 1.0).abs() < 1e-14);
        assert_eq!(k.eval(0.0, &[1.0, 0.5], &[1.0, 0.0]), 0.0);
        assert!((k.eval(0.0, &[16.0, 1.0], &[0.0, 0.0]) - 0.5).abs() < 1e-14);
        assert!(make_axis_kernel(vec![0.6, 0.25], one.clone()).is_err());
        assert!(make_axis_kernel(vec![0.4, 0.4, 0.4], one).is_err());
    }

    #[test]
    fn box_mollifier_examples() {
        let m = make_box_mollifier();
        assert!((m.eval_at_eps(0.5, &[0.0]) - 1.0).abs() < 1e-14);
        assert_eq!(m.eval_at_eps(0.5, &[0.6]), 0.0);
        assert!((m.eval_at_eps(0.1, &[-0.1]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_convolve_examples() {
        let k = make_rank_kernel();
        let e = ens(&[0.0, 1.0, 2.0]);
        let v1 = empirical_convolve(&k, 0.0, &[1.0], &e).unwrap();
        assert!((v1 - 1.0 / 3.0).abs() < 1e-14);
        let v2 = empirical_convolve(&k, 0.0, &[2.0], &e).unwrap();
        assert!((v2 - 2.0 / 3.0).abs() < 1e-14);
        let single = ens(&[0.7]);
        assert_eq!(empirical_convolve(&k, 0.0, &[0.7], &single).unwrap(), 0.0);
    }

    #[test]
    fn empirical_convolve_rejects_non_finite() {
        let k = make_rank_kernel();
        let e = ens(&[0.0, f64::NAN, 2.0]);
        match empirical_convolve(&k, 0.0, &[1.0], &e) {
            Err(KernelError::NonFiniteParticle { index }) => assert_eq!(index, 1),
            other => panic!("expected NonFiniteParticle, got {other:?}"),
        }
    }

    #[test]
    fn bulk_matches_pointwise_for_rank_sin_box() {
        let xs: Vec<f64> = (0..57).map(|i| ((i * 37) % 101) as f64 * 0.13 - 5.0).collect();
        let e = ens(&xs);
        for k in [
            make_rank_kernel(),
            make_smooth_sin_kernel(),
            make_mollified_kernel(make_box_mollifier(), 0.7),
        ] {
            let bulk = empirical_convolve_all(&k, 0.0, &e).unwrap();
            for (i, &x) in xs.iter().enumerate() {
                let point = empirical_convolve(&k, 0.0, &[x], &e).unwrap();
                assert!(
                    (bulk[i] - point).abs() < 1e-12,
                    "{:?} mismatch at {i}: {} vs {}",
                    k.kind,
                    bulk[i],
                    point
                );
            }
        }
    }

    #[test]
    fn measure_convolve_examples() {
        let k = make_rank_kernel();
        let rho = GridField::sample_1d(0.0, 1.0, 400, |_| 1.0);
        let top = measure_convolve(&k, 0.0, &[1.0], &rho).unwrap();
        assert!((top - 1.0).abs() < 5e-3);
        let mid = measure_convolve(&k, 0.0, &[0.5], &rho).unwrap();
        assert!((mid - 0.5).abs() < 5e-3);
        let z = make_zero_kernel(1);
        assert_eq!(measure_convolve(&z, 0.0, &[0.3], &rho).unwrap(), 0.0);
    }

    #[test]
    fn measure_convolve_rejects_bad_mass() {
        let k = make_rank_kernel();
        let rho = GridField::sample_1d(0.0, 1.0, 64, |_| 1.01);
        assert!(matches!(
            measure_convolve(&k, 0.0, &[0.5], &rho),
            Err(KernelError::BadDensityMass(_))
        ));
    }

    #[test]
    fn measure_convolve_grid_matches_pointwise() {
        let rho = GridField::sample_1d(-4.0, 4.0, 128, |x| {
            (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        });
        // renormalize the truncated gaussian to unit mass
        let m = rho.mass();
        let rho = rho.map(|v| v / m);
        for k in [make_rank_kernel(), make_smooth_sin_kernel()] {
            let grid = measure_convolve_grid(&k, 0.0, &rho).unwrap();
            for j in [0usize, 17, 64, 127] {
                let x = rho.center(0, j);
                let point = measure_convolve(&k, 0.0, &[x], &rho).unwrap();
                let tol = match k.kind {
                    // the cumulative fast path places the jump at the cell
                    // center rather than resolving the half cell
                    KernelKind::Rank => rho.linf() * rho.spacing[0],
                    _ => 1e-10,
                };
                assert!(
                    (grid[j] - point).abs() <= tol + 1e-12,
                    "{:?} mismatch at {j}: {} vs {}",
                    k.kind,
                    grid[j],
                    point
                );
            }
        }
    }

    #[test]
    fn assemble_drift_examples() {
        let e = ens(&[0.0, 1.0, 2.0]);
        let rank = make_rank_kernel();
        let d = assemble_drift(&DriftEnvelope::identity(), &rank, 0.0, &[2.0], &e).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-14);
        let z = assemble_drift(&DriftEnvelope::zero(), &rank, 0.0, &[2.0], &e).unwrap();
        assert_eq!(z, vec![0.0]);
        let mollified = make_mollified_kernel(make_box_mollifier(), 0.5);
        let e2 = ens(&[0.0, 0.4, 2.0]);
        let d2 =
            assemble_drift(&DriftEnvelope::identity(), &mollified, 0.0, &[0.0], &e2).unwrap();
        assert!((d2[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_nullity_on_random_points() {
        let one: Arc<PairFn> = Arc::new(|_, _, _| 1.0);
        let kernels = vec![
            make_rank_kernel(),
            make_smooth_sin_kernel(),
            make_zero_kernel(1),
            make_mollified_kernel(make_box_mollifier(), 0.3),
        ];
        for k in &kernels {
            for i in 0..50 {
                let x = [(i as f64) * 0.37 - 9.0];
                assert_eq!(k.eval(0.1 * i as f64, &x, &x), 0.0);
            }
        }
        let k2 = make_power_kernel(2, 0.4, one).unwrap();
        for i in 0..50 {
            let x = [(i as f64) * 0.37 - 9.0, (i as f64) * 0.11];
            assert_eq!(k2.eval(0.0, &x, &x), 0.0);
        }
    }

    #[test]
    fn mollifier_mass_across_eps() {
        let m = make_box_mollifier();
        for eps in [0.9999, 0.5, 0.1, 0.01] {
            // midpoint quadrature on a grid aligned with the support
            let n = 100_000usize;
            let a = -1.5;
            let b = 1.5;
            let dx = (b - a) / n as f64;
            let mass: f64 = (0..n)
                .map(|k| m.eval_at_eps(eps, &[a + (k as f64 + 0.5) * dx]) * dx)
                .sum();
            assert!((mass - 1.0).abs() < 1e-2, "eps={eps} mass={mass}");
        }
        // base profile integrates to one within 1e-8 on an aligned grid
        let n = 200_000usize;
        let dx = 2.0 / n as f64;
        let mass: f64 = (0..n)
            .map(|k| m.eval_base(&[-1.0 + (k as f64 + 0.5) * dx]) * dx)
            .sum();
        assert!((mass - 1.0).abs() < 1e-8);
    }
}
