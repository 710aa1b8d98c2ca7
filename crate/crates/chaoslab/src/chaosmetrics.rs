//! Statistical measurement layer: distances between empirical and reference
//! laws, discrete relative entropy with its inequality suite, the
//! exponential-moment statistic for centered empirical convolutions, and
//! strong-error / convergence-rate extraction.
//!
//! Total variation follows the full-variation convention: the distance
//! between mutually singular probability measures is 2.

use thiserror::Error;

use crate::grid::GridField;
use crate::kernels::{empirical_convolve, measure_convolve, InteractionKernel, KernelError};
use crate::particles::{CoupledPaths, Mu0Spec, ParticleEnsemble};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid discrete measure: {0}")]
    BadMeasure(String),
    #[error("need at least {want} replicas, got {got}")]
    TooFewReplicas { got: usize, want: usize },
    #[error("measure on E^N is not permutation-symmetric (weights differ at state {0})")]
    NotSymmetric(usize),
    #[error("rate fit needs >= 4 points with at least two distinct N values")]
    DegenerateDesign,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Probability measure on finitely many labeled atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: Vec<u64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<u64>, weights: Vec<f64>) -> Result<Self, MetricError> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(MetricError::BadMeasure(format!(
                "{} atoms vs {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let mut seen = atoms.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(MetricError::BadMeasure("duplicate atoms".into()));
        }
        if let Some(&w) = weights.iter().find(|&&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(MetricError::BadMeasure(format!("bad weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MetricError::BadMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { atoms, weights })
    }

    /// Measure on atoms 0..k with the given weights.
    pub fn indexed(weights: Vec<f64>) -> Result<Self, MetricError> {
        let atoms = (0..weights.len() as u64).collect();
        Self::new(atoms, weights)
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            atoms: (0..k as u64).collect(),
            weights: vec![1.0 / k as f64; k],
        }
    }

    fn weight_of(&self, atom: u64) -> f64 {
        self.atoms
            .iter()
            .position(|&a| a == atom)
            .map(|i| self.weights[i])
            .unwrap_or(0.0)
    }

    /// Union of atom supports, sorted.
    fn common_atoms(&self, other: &Self) -> Vec<u64> {
        let mut all: Vec<u64> = self.atoms.iter().chain(&other.atoms).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Equal-weight sample of 1D points.
#[derive(Debug, Clone)]
pub struct EmpiricalSample {
    pub points: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(points: Vec<f64>) -> Result<Self, MetricError> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(MetricError::EmptySample);
        }
        Ok(Self { points })
    }

    pub fn from_ensemble_1d(e: &ParticleEnsemble) -> Result<Self, MetricError> {
        assert_eq!(e.dim, 1);
        Self::new(e.positions.clone())
    }
}

/// Exact W1 between equal-weight empirical measures: mean absolute gap of
/// sorted samples. Unequal counts are handled by reading both empirical
/// quantile functions at the finer common rank grid.
pub fn wasserstein1_1d(a: &EmpiricalSample, b: &EmpiricalSample) -> Result<f64, MetricError> {
    let mut xs = a.points.clone();
    let mut ys = b.points.clone();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return Ok(xs.iter().zip(&ys).map(|(p, q)| (p - q).abs()).sum::<f64>() / n);
    }
    let m = xs.len().max(ys.len());
    let quantile = |sorted: &[f64], u: f64| -> f64 {
        let idx = ((u * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
        sorted[idx]
    };
    let mut acc = 0.0;
    for i in 0..m {
        let u = (i as f64 + 0.5) / m as f64;
        acc += (quantile(&xs, u) - quantile(&ys, u)).abs();
    }
    Ok(acc / m as f64)
}

/// Bin masses of a sample over `bins` uniform bins on [lo, hi]; points
/// outside are clamped into the edge bins so masses always sum to 1.
pub fn histogram_masses(points: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut mass = vec![0.0; bins];
    let w = (hi - lo) / bins as f64;
    let frac = 1.0 / points.len() as f64;
    for &x in points {
        let k = (((x - lo) / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        mass[k] += frac;
    }
    mass
}

/// Bin masses of a 1D density over the same uniform binning, assigning each
/// grid cell's mass to the bin containing its center.
pub fn density_bin_masses(rho: &GridField, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    debug_assert_eq!(rho.dim(), 1);
    let mut mass = vec![0.0; bins];
    let w = (hi - lo) / bins as f64;
    let vol = rho.cell_volume();
    for (j, &v) in rho.values.iter().enumerate() {
        let x = rho.center(0, j);
        let k = (((x - lo) / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        mass[k] += v * vol;
    }
    // renormalize truncation/quadrature slack so TV compares probabilities
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        for m in &mut mass {
            *m /= total;
        }
    }
    mass
}

/// Full-variation distance of two mass vectors on a common binning.
pub fn tv_from_masses(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Histogram TV between two samples on a shared uniform binning spanning
/// both; value in [0, 2].
pub fn tv_histogram(
    a: &EmpiricalSample,
    b: &EmpiricalSample,
    bins: usize,
) -> Result<f64, MetricError> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let lo = a
        .points
        .iter()
        .chain(&b.points)
        .fold(f64::INFINITY, |m, &x| m.min(x));
    let hi = a
        .points
        .iter()
        .chain(&b.points)
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let pa = histogram_masses(&a.points, lo, hi, bins);
    let pb = histogram_masses(&b.points, lo, hi, bins);
    Ok(tv_from_masses(&pa, &pb))
}

/// Histogram TV between a sample and a reference density, binned over the
/// density's grid span.
pub fn tv_sample_vs_density(
    sample: &EmpiricalSample,
    rho: &GridField,
    bins: usize,
) -> Result<f64, MetricError> {
    if sample.points.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let lo = rho.origin[0];
    let hi = rho.origin[0] + rho.spacing[0] * rho.shape[0] as f64;
    let p = histogram_masses(&sample.points, lo, hi, bins);
    let q = density_bin_masses(rho, lo, hi, bins);
    Ok(tv_from_masses(&p, &q))
}

/// H(mu | nu) = sum mu_i log(mu_i / nu_i); +inf when mu charges an atom nu
/// misses.
pub fn relative_entropy_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut h = 0.0;
    for (i, &a) in mu.atoms.iter().enumerate() {
        let m = mu.weights[i];
        if m <= 0.0 {
            continue;
        }
        let n = nu.weight_of(a);
        if n <= 0.0 {
            return f64::INFINITY;
        }
        h += m * (m / n).ln();
    }
    h.max(0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Pinsker: ||mu - nu||_var^2 <= 2 H(mu|nu), with the full-variation norm.
pub fn pinsker_check(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> InequalityCheck {
    let tv: f64 = mu
        .common_atoms(nu)
        .iter()
        .map(|&a| (mu.weight_of(a) - nu.weight_of(a)).abs())
        .sum();
    let lhs = tv * tv;
    let rhs = 2.0 * relative_entropy_discrete(mu, nu);
    InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-12,
    }
}

/// Weighted Pinsker:
/// |<mu - nu, f>|^2 <= 2 (1 + log int e^{f^2} dnu) H(mu|nu).
pub fn weighted_pinsker_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: impl Fn(u64) -> f64,
) -> InequalityCheck {
    let atoms = mu.common_atoms(nu);
    let pairing: f64 = atoms
        .iter()
        .map(|&a| (mu.weight_of(a) - nu.weight_of(a)) * f(a))
        .sum();
    let lhs = pairing * pairing;
    let exp_int: f64 = nu
        .atoms
        .iter()
        .zip(&nu.weights)
        .map(|(&a, &w)| w * (f(a) * f(a)).exp())
        .sum();
    let rhs = 2.0 * (1.0 + exp_int.ln()) * relative_entropy_discrete(mu, nu);
    InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-12,
    }
}

fn decode_state(mut flat: usize, e_size: usize, n: usize) -> Vec<usize> {
    let mut s = vec![0usize; n];
    for i in (0..n).rev() {
        s[i] = flat % e_size;
        flat /= e_size;
    }
    s
}

fn encode_state(s: &[usize], e_size: usize) -> usize {
    s.iter().fold(0usize, |acc, &c| acc * e_size + c)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q: Vec<usize> = p.iter().map(|&v| v).collect();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Dimensional entropy bound for marginals of a symmetric measure on E^N:
/// H(muN^{(k)} | mu^{tensor k}) <= (2k/N) H(muN | mu^{tensor N}),
/// both sides computed by exhaustive summation (|E| <= 4, N <= 5). `muN`
/// must be indexed over E^N in row-major order (coordinate N-1 fastest).
pub fn marginal_entropy_bound_check(
    mu_n: &DiscreteMeasure,
    e_size: usize,
    n: usize,
    mu: &DiscreteMeasure,
    k: usize,
) -> Result<InequalityCheck, MetricError> {
    assert!(e_size <= 4 && n <= 5 && k >= 1 && k <= n, "brute-force regime only");
    let states = e_size.pow(n as u32);
    if mu_n.weights.len() != states {
        return Err(MetricError::BadMeasure(format!(
            "expected {} states, got {}",
            states,
            mu_n.weights.len()
        )));
    }
    if mu.weights.len() != e_size {
        return Err(MetricError::BadMeasure(format!(
            "expected {} base atoms, got {}",
            e_size,
            mu.weights.len()
        )));
    }
    // symmetry probe: weights invariant under coordinate permutations
    for perm in permutations(n) {
        for flat in 0..states {
            let s = decode_state(flat, e_size, n);
            let permuted: Vec<usize> = (0..n).map(|i| s[perm[i]]).collect();
            let other = encode_state(&permuted, e_size);
            if (mu_n.weights[flat] - mu_n.weights[other]).abs() > 1e-12 {
                return Err(MetricError::NotSymmetric(flat));
            }
        }
    }
    // k-marginal over the first k coordinates
    let kst = e_size.pow(k as u32);
    let mut marg = vec![0.0f64; kst];
    for flat in 0..states {
        let s = decode_state(flat, e_size, n);
        marg[encode_state(&s[..k], e_size)] += mu_n.weights[flat];
    }
    let entropy_vs_product = |weights: &[f64], m: usize| -> f64 {
        let mut h = 0.0;
        for (flat, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let s = decode_state(flat, e_size, m);
            let prod: f64 = s.iter().map(|&c| mu.weights[c]).product();
            if prod <= 0.0 {
                return f64::INFINITY;
            }
            h += w * (w / prod).ln();
        }
        h.max(0.0)
    };
    let lhs = entropy_vs_product(&marg, k);
    let rhs = (2.0 * k as f64 / n as f64) * entropy_vs_product(&mu_n.weights, n);
    Ok(InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-10,
    })
}

/// Chaos statistic at order two: 2D histogram TV between the law of the
/// first two particles across replicas and the product of the reference
/// marginal with itself.
pub fn kac_chaos_statistic(
    pairs: &[(f64, f64)],
    reference: &GridField,
    bins: usize,
) -> Result<f64, MetricError> {
    if pairs.len() < 100 {
        return Err(MetricError::TooFewReplicas {
            got: pairs.len(),
            want: 100,
        });
    }
    let lo = reference.origin[0];
    let hi = reference.origin[0] + reference.spacing[0] * reference.shape[0] as f64;
    let w = (hi - lo) / bins as f64;
    let mut emp = vec![0.0f64; bins * bins];
    let frac = 1.0 / pairs.len() as f64;
    for &(x, y) in pairs {
        let i = (((x - lo) / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        let j = (((y - lo) / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        emp[i * bins + j] += frac;
    }
    let marg = density_bin_masses(reference, lo, hi, bins);
    let mut tv = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            tv += (emp[i * bins + j] - marg[i] * marg[j]).abs();
        }
    }
    Ok(tv)
}

#[derive(Debug, Clone, Copy)]
pub struct ExpMomentEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Set when lambda exceeds 1/(16 e^2 ||phi||_inf^2); the bound is only
    /// claimed below that threshold.
    pub lambda_above_threshold: bool,
}

/// Monte Carlo estimate of `E exp(lambda N |(phibar (*) eta)(xi_1)|^2)` for
/// iid xi from mu0, where phibar(x,y) = phi(x,y) - (phi (*) mu0)(x). The
/// centering uses the known initial density on `mu0_grid`, not an empirical
/// plug-in.
pub fn exp_moment_lemma55(
    kernel: &InteractionKernel,
    mu0: &Mu0Spec,
    mu0_grid: &GridField,
    n: usize,
    lambda: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<ExpMomentEstimate, MetricError> {
    let above = match kernel.sup_norm {
        Some(s) if s > 0.0 => {
            lambda > 1.0 / (16.0 * std::f64::consts::E.powi(2) * s * s) + 1e-15
        }
        _ => false,
    };
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for rep in 0..mc_reps {
        let rep_seed = derive_seed(seed, rep as u64);
        let ens = crate::particles::sample_initial(
            mu0,
            n,
            rep_seed,
            &crate::particles::Correlation::Iid,
        )
        .map_err(|e| MetricError::BadMeasure(e.to_string()))?;
        let x1 = [ens.positions[0]];
        let emp = empirical_convolve(kernel, 0.0, &x1, &ens)?;
        let centered = emp - measure_convolve(kernel, 0.0, &x1, mu0_grid)?;
        let v = (lambda * n as f64 * centered * centered).exp();
        sum += v;
        sum2 += v * v;
    }
    let m = mc_reps as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0);
    Ok(ExpMomentEstimate {
        estimate: mean,
        std_error: (var / m).sqrt(),
        lambda_above_threshold: above,
    })
}

/// `(sup_t |X^{N,1}_t - X_t|)^{2 gamma}` over the shared time grid.
pub fn strong_error_path(coupled: &CoupledPaths, gamma: f64) -> f64 {
    coupled.sup_distance().powf(2.0 * gamma)
}

/// Fitted convergence rate over an N-sweep.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub ns: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% band (lo, hi) for the slope.
    pub slope_ci: (f64, f64),
}

/// Weighted least squares of log(error) on log(N). Weights come from the
/// delta-method variance (se/mean)^2; zero standard errors fall back to
/// equal weights.
pub fn rate_fit(points: &[(f64, f64, f64)]) -> Result<ConvergenceReport, MetricError> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if points.len() < 4 || distinct.len() < 2 {
        return Err(MetricError::DegenerateDesign);
    }
    if points.iter().any(|&(n, e, _)| !(n > 0.0) || !(e > 0.0)) {
        return Err(MetricError::BadMeasure(
            "rate fit needs positive N and errors".into(),
        ));
    }
    let all_se_positive = points.iter().all(|&(_, _, s)| s > 0.0);
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(n, e, s)| {
            let w = if all_se_positive {
                let sl = s / e;
                1.0 / (sl * sl)
            } else {
                1.0
            };
            (n.ln(), e.ln(), w)
        })
        .collect();
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let sx: f64 = data.iter().map(|d| d.2 * d.0).sum();
    let sy: f64 = data.iter().map(|d| d.2 * d.1).sum();
    let sxx: f64 = data.iter().map(|d| d.2 * d.0 * d.0).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * d.0 * d.1).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let var_slope = if all_se_positive {
        sw / det
    } else {
        // residual-based variance with equal weights
        let nn = data.len() as f64;
        let ss: f64 = data
            .iter()
            .map(|d| {
                let r = d.1 - (intercept + slope * d.0);
                r * r
            })
            .sum();
        let sigma2 = ss / (nn - 2.0).max(1.0);
        sigma2 * sw / det
    };
    let half = 1.96 * var_slope.max(0.0).sqrt();
    Ok(ConvergenceReport {
        ns: points.iter().map(|p| p.0).collect(),
        errors: points.iter().map(|p| p.1).collect(),
        std_errors: points.iter().map(|p| p.2).collect(),
        slope,
        intercept,
        slope_ci: (slope - half, slope + half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::indexed(w.to_vec()).unwrap()
    }

    #[test]
    fn wasserstein_examples() {
        let a = EmpiricalSample::new(vec![0.0]).unwrap();
        let b = EmpiricalSample::new(vec![1.0]).unwrap();
        assert_eq!(wasserstein1_1d(&a, &b).unwrap(), 1.0);
        let c = EmpiricalSample::new(vec![0.0, 2.0]).unwrap();
        let d = EmpiricalSample::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(wasserstein1_1d(&c, &d).unwrap(), 1.0);
        assert_eq!(wasserstein1_1d(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn tv_examples() {
        let a = EmpiricalSample::new(vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(tv_histogram(&a, &a, 8).unwrap(), 0.0);
        let b = EmpiricalSample::new(vec![10.0, 11.0, 12.0]).unwrap();
        assert_eq!(tv_histogram(&a, &b, 4).unwrap(), 2.0);
        assert!((tv_from_masses(&[0.75, 0.25], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_examples() {
        let u = DiscreteMeasure::uniform(2);
        assert_eq!(relative_entropy_discrete(&u, &u), 0.0);
        let delta = meas(&[1.0, 0.0]);
        assert!((relative_entropy_discrete(&delta, &u) - 2.0f64.ln()).abs() < 1e-14);
        let p = meas(&[0.75, 0.25]);
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((relative_entropy_discrete(&p, &u) - expect).abs() < 1e-14);
        assert!((expect - 0.13081).abs() < 5e-6);
        // disjoint support -> infinity
        let q = meas(&[0.0, 1.0]);
        assert!(relative_entropy_discrete(&delta, &q).is_infinite());
    }

    #[test]
    fn pinsker_example() {
        let p = meas(&[0.75, 0.25]);
        let u = DiscreteMeasure::uniform(2);
        let out = pinsker_check(&p, &u);
        assert!(out.pass);
        assert!((out.lhs - 0.25).abs() < 1e-12);
        assert!((out.rhs - 0.26162).abs() < 1e-5);
    }

    #[test]
    fn weighted_pinsker_degenerate_cases() {
        let p = meas(&[0.6, 0.4]);
        let u = DiscreteMeasure::uniform(2);
        let zero = weighted_pinsker_check(&p, &u, |_| 0.0);
        assert_eq!(zero.lhs, 0.0);
        assert!(zero.pass);
        let same = weighted_pinsker_check(&u, &u, |a| a as f64);
        assert_eq!(same.lhs, 0.0);
        assert!(same.pass);
    }

    #[test]
    fn marginal_bound_product_case() {
        // product law: both entropies vanish
        let mu = meas(&[0.3, 0.7]);
        let n = 3;
        let mut w = vec![0.0; 8];
        for flat in 0..8 {
            let s = decode_state(flat, 2, n);
            w[flat] = s.iter().map(|&c| mu.weights[c]).product();
        }
        let mu_n = DiscreteMeasure::indexed(w).unwrap();
        let out = marginal_entropy_bound_check(&mu_n, 2, n, &mu, 2).unwrap();
        assert!(out.pass);
        assert!(out.lhs.abs() < 1e-12 && out.rhs.abs() < 1e-12);
    }

    #[test]
    fn marginal_bound_mixture_case() {
        // mixture of two product laws on {0,1}^4, k = 2 and k = N
        let a = [0.2, 0.8];
        let b = [0.7, 0.3];
        let n = 4;
        let mut w = vec![0.0; 16];
        for flat in 0..16 {
            let s = decode_state(flat, 2, n);
            let pa: f64 = s.iter().map(|&c| a[c]).product();
            let pb: f64 = s.iter().map(|&c| b[c]).product();
            w[flat] = 0.5 * pa + 0.5 * pb;
        }
        let mu_n = DiscreteMeasure::indexed(w).unwrap();
        let mu = meas(&[0.45, 0.55]);
        for k in [2usize, 4] {
            let out = marginal_entropy_bound_check(&mu_n, 2, n, &mu, k).unwrap();
            assert!(out.pass, "k={k}: lhs={} rhs={}", out.lhs, out.rhs);
            assert!(out.lhs > 0.0);
        }
    }

    #[test]
    fn marginal_bound_rejects_asymmetry() {
        let mut w = vec![0.0; 4];
        w[encode_state(&[0, 1], 2)] = 1.0;
        let mu_n = DiscreteMeasure::indexed(w).unwrap();
        let mu = DiscreteMeasure::uniform(2);
        assert!(matches!(
            marginal_entropy_bound_check(&mu_n, 2, 2, &mu, 1),
            Err(MetricError::NotSymmetric(_))
        ));
    }

    #[test]
    fn exp_moment_zero_kernel_is_one() {
        let k = crate::kernels::make_zero_kernel(1);
        let mu0 = Mu0Spec::Uniform { a: 0.0, b: 1.0 };
        let grid = mu0.to_grid(0.0, 1.0, 64);
        let out = exp_moment_lemma55(&k, &mu0, &grid, 50, 0.1, 200, 7).unwrap();
        assert_eq!(out.estimate, 1.0);
        assert_eq!(out.std_error, 0.0);
    }

    #[test]
    fn strong_error_examples() {
        let same = CoupledPaths {
            times: vec![0.0, 0.1],
            particle: vec![1.0, 2.0],
            limit: vec![1.0, 2.0],
        };
        assert_eq!(strong_error_path(&same, 1.0), 0.0);
        let off = CoupledPaths {
            times: vec![0.0, 0.1],
            particle: vec![1.5, 2.5],
            limit: vec![1.0, 2.0],
        };
        assert!((strong_error_path(&off, 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_exact_power_laws() {
        for (expo, want) in [(-1.0f64, -1.0f64), (-0.5, -0.5)] {
            let pts: Vec<(f64, f64, f64)> = [64.0f64, 128.0, 256.0, 512.0, 1024.0]
                .iter()
                .map(|&n| (n, 3.0 * n.powf(expo), 0.0))
                .collect();
            let rep = rate_fit(&pts).unwrap();
            assert!((rep.slope - want).abs() < 1e-12);
            assert!((rep.intercept - 3.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_fit_rejects_degenerate() {
        let pts = vec![(64.0, 1.0, 0.1); 5];
        assert!(matches!(rate_fit(&pts), Err(MetricError::DegenerateDesign)));
        assert!(rate_fit(&[(64.0, 1.0, 0.1), (128.0, 0.5, 0.1)]).is_err());
    }
}
