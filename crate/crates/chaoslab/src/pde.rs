//! Deterministic reference solutions in 1D: a conservative finite-volume
//! solver for the nonlinear Fokker–Planck equation, the Burgers-type CDF
//! equation with a Hopf–Cole oracle, the Gaussian heat semigroup, Picard
//! density iteration for the mean-field limit, and the backward parabolic
//! equation of the drift-removal (Zvonkin) study.
//!
//! Sign convention: a particle system `dX = F(.,X,r) dt + sigma dW` has
//! forward equation `d rho/dt = d^2((sigma^2/2) rho)/dx^2 - d(F rho)/dx`,
//! and its CDF `V` solves `dV/dt = a V'' - G(V)'` with `G(V) = int_0^V g`.
//! All solvers use that sign throughout.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{DensityPath, GridField};
use crate::kernels::{measure_convolve_grid, DriftEnvelope, InteractionKernel, KernelError};

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("CFL violation: dt = {dt} exceeds dx^2/(2 a_max) = {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("advective CFL violation at step {step}: |v| dt/dx = {courant}")]
    AdvectiveCfl { step: u64, courant: f64 },
    #[error("density went negative ({value}) at cell {cell}, step {step}")]
    NegativeDensity { cell: usize, step: u64, value: f64 },
    #[error("CDF output left [0,1] or lost monotonicity at cell {cell}, step {step}")]
    MonotonicityLost { cell: usize, step: u64 },
    #[error("initial CDF must be nondecreasing from 0 to 1")]
    NotACdf,
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("quadrature failed to converge below 1e-8 after {0} nodes")]
    QuadratureDiverged(usize),
    #[error("Picard iteration diverged: contraction gap grew for 3 consecutive iterates")]
    PicardDiverged,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    ZeroFlux,
}

/// Discretization of the advective flux. Upwind is monotone (positivity and
/// maximum principles hold up to roundoff); central is second-order and
/// monotone whenever the cell Peclet number v dx / a stays below 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advection {
    Upwind,
    Central,
}

#[derive(Debug, Clone)]
pub struct PdeScheme {
    pub dt: f64,
    pub t_end: f64,
    pub boundary: Boundary,
    pub advection: Advection,
    /// Record every k-th step; 0 records only the initial and final states.
    pub snapshot_stride: usize,
}

impl PdeScheme {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            boundary: Boundary::Periodic,
            advection: Advection::Upwind,
            snapshot_stride: 0,
        }
    }

    pub fn with_advection(mut self, a: Advection) -> Self {
        self.advection = a;
        self
    }

    pub fn with_boundary(mut self, b: Boundary) -> Self {
        self.boundary = b;
        self
    }

    pub fn with_stride(mut self, s: usize) -> Self {
        self.snapshot_stride = s;
        self
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).ceil() as u64
    }

    fn check_cfl(&self, dx: f64, a_max: f64) -> Result<(), PdeError> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(PdeError::BadInput(format!(
                "need 0 < dt <= t_end, got dt={}, t_end={}",
                self.dt, self.t_end
            )));
        }
        if a_max > 0.0 {
            let limit = dx * dx / (2.0 * a_max);
            if self.dt > limit * (1.0 + 1e-12) {
                return Err(PdeError::Cfl { dt: self.dt, limit });
            }
        }
        Ok(())
    }
}

/// Diffusion coefficient a(x) in flux form `d^2(a rho)/dx^2`.
#[derive(Clone)]
pub enum Diffusion {
    Const(f64),
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        max: f64,
    },
}

impl std::fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diffusion::Const(a) => write!(f, "Diffusion::Const({a})"),
            Diffusion::Custom { max, .. } => write!(f, "Diffusion::Custom(max={max})"),
        }
    }
}

impl Diffusion {
    fn at(&self, x: f64) -> f64 {
        match self {
            Diffusion::Const(a) => *a,
            Diffusion::Custom { f, .. } => f(x),
        }
    }

    fn max(&self) -> f64 {
        match self {
            Diffusion::Const(a) => *a,
            Diffusion::Custom { max, .. } => *max,
        }
    }
}

/// How the drift argument r(t, x) of `F(t, x, r)` is produced.
#[derive(Debug, Clone)]
pub enum FpDriftMode<'a> {
    /// Density-dependent (Nemytskii): r = rho_t(x).
    Local,
    /// Measure convolution: r = (phi (*) rho_t)(x).
    Nonlocal(&'a InteractionKernel),
}

/// One conservative finite-volume step of
/// `d rho/dt = d^2(a rho)/dx^2 - d(v rho)/dx` with cell velocities `v`.
/// Returns the maximal advective Courant number seen.
fn fv_step(
    rho: &mut [f64],
    v: &[f64],
    a_cells: &[f64],
    dx: f64,
    dt: f64,
    boundary: Boundary,
    advection: Advection,
) -> f64 {
    let n = rho.len();
    let mut flux = vec![0.0f64; n + 1]; // flux[i] = interface between cells i-1 and i
    let mut max_courant = 0.0f64;
    let interface = |i_left: usize, i_right: usize, max_c: &mut f64| -> f64 {
        let vl = v[i_left];
        let vr = v[i_right];
        let vi = 0.5 * (vl + vr);
        *max_c = max_c.max(vi.abs() * dt / dx);
        let adv = match advection {
            Advection::Upwind => {
                if vi >= 0.0 {
                    vi * rho[i_left]
                } else {
                    vi * rho[i_right]
                }
            }
            Advection::Central => vi * 0.5 * (rho[i_left] + rho[i_right]),
        };
        let diff = (a_cells[i_right] * rho[i_right] - a_cells[i_left] * rho[i_left]) / dx;
        adv - diff
    };
    for i in 1..n {
        flux[i] = interface(i - 1, i, &mut max_courant);
    }
    match boundary {
        Boundary::Periodic => {
            let f = interface(n - 1, 0, &mut max_courant);
            flux[0] = f;
            flux[n] = f;
        }
        Boundary::ZeroFlux => {
            flux[0] = 0.0;
            flux[n] = 0.0;
        }
    }
    for i in 0..n {
        rho[i] += dt / dx * (flux[i] - flux[i + 1]);
    }
    max_courant
}

fn record_path(
    path_times: &mut Vec<f64>,
    path_fields: &mut Vec<GridField>,
    template: &GridField,
    rho: &[f64],
    t: f64,
) {
    let mut g = template.clone();
    g.values = rho.to_vec();
    g.time_label = Some(t);
    path_times.push(t);
    path_fields.push(g);
}

/// Nonlinear Fokker–Planck solve of
/// `d rho/dt = d^2(a rho)/dx^2 - d(F(t, x, r) rho)/dx` with r from `mode`.
pub fn solve_nonlinear_fp(
    rho0: &GridField,
    envelope: &DriftEnvelope,
    a: &Diffusion,
    scheme: &PdeScheme,
    mode: &FpDriftMode,
) -> Result<DensityPath, PdeError> {
    if rho0.dim() != 1 {
        return Err(PdeError::BadInput("solver is 1D".into()));
    }
    rho0.check_density(1e-6)
        .map_err(|e| PdeError::BadInput(e.to_string()))?;
    let dx = rho0.spacing[0];
    scheme.check_cfl(dx, a.max())?;
    let n = rho0.len();
    let a_cells: Vec<f64> = (0..n).map(|i| a.at(rho0.center(0, i))).collect();
    let mut rho = rho0.values.clone();
    let mut times = Vec::new();
    let mut fields = Vec::new();
    record_path(&mut times, &mut fields, rho0, &rho, 0.0);
    let steps = scheme.steps();
    let mut grid_buf = rho0.clone();
    for step in 0..steps {
        let t = step as f64 * scheme.dt;
        // drift argument per cell
        let rs: Vec<f64> = match mode {
            FpDriftMode::Local => rho.clone(),
            FpDriftMode::Nonlocal(kernel) => {
                grid_buf.values.clone_from(&rho);
                measure_convolve_grid(kernel, t, &grid_buf)?
            }
        };
        let v: Vec<f64> = (0..n)
            .map(|i| envelope.eval_1d(t, rho0.center(0, i), rs[i]))
            .collect();
        let courant = fv_step(&mut rho, &v, &a_cells, dx, scheme.dt, scheme.boundary, scheme.advection);
        if courant > 1.0 {
            return Err(PdeError::AdvectiveCfl { step, courant });
        }
        if let Some(cell) = rho.iter().position(|&r| r < -1e-12) {
            return Err(PdeError::NegativeDensity {
                cell,
                step,
                value: rho[cell],
            });
        }
        let done = step + 1 == steps;
        if done || (scheme.snapshot_stride > 0 && (step + 1) % scheme.snapshot_stride as u64 == 0) {
            let t_next = (step + 1) as f64 * scheme.dt;
            if times.last().map(|&tl| tl < t_next).unwrap_or(true) {
                record_path(&mut times, &mut fields, rho0, &rho, t_next);
            }
        }
    }
    Ok(DensityPath::new(times, fields))
}

/// Burgers-type equation for the CDF:
/// `dV/dt = V'' - G(V)'` with `G(V) = int_0^V g(r) dr` (diffusion constant 1,
/// matching sigma = sqrt(2) for the particles). Dirichlet ends pinned to the
/// initial edge values.
pub fn solve_burgers_cdf(
    v0: &GridField,
    g: impl Fn(f64) -> f64,
    scheme: &PdeScheme,
) -> Result<DensityPath, PdeError> {
    if v0.dim() != 1 {
        return Err(PdeError::BadInput("solver is 1D".into()));
    }
    let n = v0.len();
    let vals = &v0.values;
    let monotone = vals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    if !monotone || vals[0] < -1e-9 || vals[n - 1] > 1.0 + 1e-9 {
        return Err(PdeError::NotACdf);
    }
    let dx = v0.spacing[0];
    scheme.check_cfl(dx, 1.0)?;
    let mut v = vals.clone();
    let mut times = Vec::new();
    let mut fields = Vec::new();
    record_path(&mut times, &mut fields, v0, &v, 0.0);
    let steps = scheme.steps();
    let (left, right) = (v[0], v[n - 1]);
    for step in 0..steps {
        let mut next = v.clone();
        for i in 1..n - 1 {
            let lap = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
            let c = g(v[i]);
            let dvx = match scheme.advection {
                Advection::Central => (v[i + 1] - v[i - 1]) / (2.0 * dx),
                Advection::Upwind => {
                    // transport speed c in dV/dt + c dV/dx = V''
                    if c >= 0.0 {
                        (v[i] - v[i - 1]) / dx
                    } else {
                        (v[i + 1] - v[i]) / dx
                    }
                }
            };
            next[i] = v[i] + scheme.dt * (lap - c * dvx);
        }
        next[0] = left;
        next[n - 1] = right;
        for i in 0..n {
            let bad_range = next[i] < -1e-10 || next[i] > 1.0 + 1e-10;
            let bad_mono = i + 1 < n && next[i + 1] < next[i] - 1e-10;
            if bad_range || bad_mono {
                return Err(PdeError::MonotonicityLost { cell: i, step });
            }
        }
        v = next;
        let done = step + 1 == steps;
        if done || (scheme.snapshot_stride > 0 && (step + 1) % scheme.snapshot_stride as u64 == 0) {
            let t_next = (step + 1) as f64 * scheme.dt;
            if times.last().map(|&tl| tl < t_next).unwrap_or(true) {
                record_path(&mut times, &mut fields, v0, &v, t_next);
            }
        }
    }
    Ok(DensityPath::new(times, fields))
}

/// Hopf–Cole closed form for `dV/dt = V'' - V V'` (the g(r) = r case):
/// `V(x,t) = int (x-y)/t w(x,y) dy / int w(x,y) dy` with
/// `w = exp(-(x-y)^2/(4t) - Psi0(y)/2)`, `Psi0(y) = int_0^y V0`. Quadrature
/// is refined until the result moves by less than 1e-8.
pub fn cole_hopf_exact(v0: &GridField, t: f64) -> Result<GridField, PdeError> {
    if v0.dim() != 1 {
        return Err(PdeError::BadInput("solver is 1D".into()));
    }
    if t < 0.0 {
        return Err(PdeError::BadInput(format!("need t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(v0.clone().with_time(0.0));
    }
    let n = v0.len();
    let a = v0.origin[0];
    let b = a + v0.spacing[0] * n as f64;
    // integration window: the grid padded by several diffusion lengths, with
    // the profile constant-extrapolated by the edge values
    let pad = 8.0 * (2.0 * t).sqrt();
    let (ya, yb) = (a - pad, b + pad);
    let eval = |nodes: usize| -> Vec<f64> {
        let dy = (yb - ya) / nodes as f64;
        // Psi0 cumulative on the quadrature grid (midpoint cumulative sum,
        // anchored so Psi0(ya) = 0 — the anchor cancels in the ratio)
        let mut psi = Vec::with_capacity(nodes);
        let mut acc = 0.0;
        for k in 0..nodes {
            let y = ya + (k as f64 + 0.5) * dy;
            acc += v0.interp_1d(y) * dy;
            psi.push(acc - 0.5 * v0.interp_1d(y) * dy);
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = v0.center(0, i);
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..nodes {
                let y = ya + (k as f64 + 0.5) * dy;
                let e = (-(x - y) * (x - y) / (4.0 * t) - 0.5 * psi[k]).exp();
                num += (x - y) / t * e;
                den += e;
            }
            out.push(num / den);
        }
        out
    };
    let mut nodes = 2048usize;
    let mut prev = eval(nodes);
    loop {
        nodes *= 2;
        let cur = eval(nodes);
        let gap = prev
            .iter()
            .zip(&cur)
            .fold(0.0f64, |m, (p, c)| m.max((p - c).abs()));
        if gap < 1e-8 {
            let mut g = v0.clone();
            g.values = cur;
            return Ok(g.with_time(t));
        }
        if nodes > 1 << 20 {
            return Err(PdeError::QuadratureDiverged(nodes));
        }
        prev = cur;
    }
}

/// Gaussian heat semigroup `P_t f = g_t * f` with
/// `g_t(x) = (2 pi t)^{-d/2} exp(-|x|^2/(2t))`, applied axis by axis
/// (the kernel is separable). Discrete weights are renormalized so that
/// constants are preserved exactly; the field is constant-extrapolated by
/// its edge values beyond the grid.
pub fn heat_semigroup_apply(f: &GridField, t: f64) -> Result<GridField, PdeError> {
    if !(t > 0.0) {
        return Err(PdeError::BadInput(format!("need t > 0, got {t}")));
    }
    let d = f.dim();
    let mut out = f.clone();
    for axis in 0..d {
        let dx = f.spacing[axis];
        let reach = ((8.0 * t.sqrt() / dx).ceil() as usize).max(1);
        let mut w = Vec::with_capacity(2 * reach + 1);
        for k in -(reach as i64)..=(reach as i64) {
            let x = k as f64 * dx;
            w.push((-x * x / (2.0 * t)).exp());
        }
        let total: f64 = w.iter().sum();
        for wk in &mut w {
            *wk /= total;
        }
        let len = f.shape[axis];
        let inner: usize = f.shape[axis + 1..].iter().product();
        let outer: usize = f.shape[..axis].iter().product();
        let src = out.values.clone();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                for c in 0..len {
                    // written as center + sum of weighted differences so that
                    // constants survive the convolution bit-exactly
                    let center = src[base + c * inner];
                    let mut acc = 0.0;
                    for (j, wk) in w.iter().enumerate() {
                        let k = c as i64 + j as i64 - reach as i64;
                        let k = k.clamp(0, len as i64 - 1) as usize;
                        acc += wk * (src[base + k * inner] - center);
                    }
                    out.values[base + c * inner] = center + acc;
                }
            }
        }
    }
    Ok(out)
}

/// Picard iteration for the mean-field limit: `rho^0_t == rho0` frozen in
/// time, then each iterate solves the LINEAR Fokker–Planck equation with
/// drift `F(t, x, r^{n-1}(t, x))` read off the previous iterate. Returns the
/// final iterate's path and the contraction log
/// `Gamma_n = sup_t (||rho^n_t - rho^{n-1}_t||_inf + ||.||_L1)`.
pub fn picard_density_iteration(
    rho0: &GridField,
    envelope: &DriftEnvelope,
    a: &Diffusion,
    scheme: &PdeScheme,
    mode: &FpDriftMode,
    n_iters: usize,
) -> Result<(DensityPath, Vec<f64>), PdeError> {
    if rho0.dim() != 1 {
        return Err(PdeError::BadInput("solver is 1D".into()));
    }
    rho0.check_density(1e-6)
        .map_err(|e| PdeError::BadInput(e.to_string()))?;
    if n_iters == 0 {
        return Err(PdeError::BadInput("need n_iters >= 1".into()));
    }
    let dx = rho0.spacing[0];
    scheme.check_cfl(dx, a.max())?;
    let n = rho0.len();
    let steps = scheme.steps();
    let a_cells: Vec<f64> = (0..n).map(|i| a.at(rho0.center(0, i))).collect();
    // previous iterate stored at every step; iterate 0 is rho0 frozen in time
    let mut prev: Vec<Vec<f64>> = (0..=steps).map(|_| rho0.values.clone()).collect();
    let mut gammas = Vec::with_capacity(n_iters);
    let mut grid_buf = rho0.clone();
    let mut grow_streak = 0usize;
    let mut last_path: Vec<Vec<f64>> = prev.clone();
    for _iter in 1..=n_iters {
        let mut rho = rho0.values.clone();
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(steps as usize + 1);
        cur.push(rho.clone());
        for step in 0..steps {
            let t = step as f64 * scheme.dt;
            let frozen = &prev[step as usize];
            let rs: Vec<f64> = match mode {
                FpDriftMode::Local => frozen.clone(),
                FpDriftMode::Nonlocal(kernel) => {
                    grid_buf.values.clone_from(frozen);
                    measure_convolve_grid(kernel, t, &grid_buf)?
                }
            };
            let v: Vec<f64> = (0..n)
                .map(|i| envelope.eval_1d(t, rho0.center(0, i), rs[i]))
                .collect();
            let courant =
                fv_step(&mut rho, &v, &a_cells, dx, scheme.dt, scheme.boundary, scheme.advection);
            if courant > 1.0 {
                return Err(PdeError::AdvectiveCfl { step, courant });
            }
            if let Some(cell) = rho.iter().position(|&r| r < -1e-12) {
                return Err(PdeError::NegativeDensity {
                    cell,
                    step,
                    value: rho[cell],
                });
            }
            cur.push(rho.clone());
        }
        let gamma = prev
            .iter()
            .zip(&cur)
            .map(|(p, c)| {
                let mut linf = 0.0f64;
                let mut l1 = 0.0f64;
                for (a, b) in p.iter().zip(c) {
                    let d = (a - b).abs();
                    linf = linf.max(d);
                    l1 += d;
                }
                linf + l1 * dx
            })
            .fold(0.0f64, f64::max);
        if let Some(&last) = gammas.last() {
            if gamma > last {
                grow_streak += 1;
                if grow_streak >= 3 {
                    return Err(PdeError::PicardDiverged);
                }
            } else {
                grow_streak = 0;
            }
        }
        gammas.push(gamma);
        last_path = cur.clone();
        prev = cur;
    }
    // package the final iterate, decimated by the snapshot stride
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for (k, vals) in last_path.iter().enumerate() {
        let is_end = k == 0 || k as u64 == steps;
        let on_stride =
            scheme.snapshot_stride > 0 && k as u64 % scheme.snapshot_stride as u64 == 0;
        if is_end || on_stride {
            let t = k as f64 * scheme.dt;
            if times.last().map(|&tl| tl < t).unwrap_or(true) {
                record_path(&mut times, &mut fields, rho0, vals, t);
            }
        }
    }
    Ok((DensityPath::new(times, fields), gammas))
}

/// Backward parabolic solve of
/// `du/dt + a u'' + b u' - lambda u + b = 0`, `u(T, .) = 0`, by time
/// reversal and a fully implicit tridiagonal step (unconditionally stable,
/// so the CFL precheck does not apply). Dirichlet zero at the ends; the
/// domain should comfortably contain the support of `b`. Returns the
/// solution path (in backward time order from t = T down to 0) and
/// `sup_{t,x} |u'|`.
pub fn solve_zvonkin_backward(
    b: &GridField,
    a: f64,
    lambda: f64,
    scheme: &PdeScheme,
) -> Result<(DensityPath, f64), PdeError> {
    if b.dim() != 1 {
        return Err(PdeError::BadInput("solver is 1D".into()));
    }
    if !(a > 0.0) || lambda < 0.0 {
        return Err(PdeError::BadInput(format!(
            "need a > 0 and lambda >= 0, got a={a}, lambda={lambda}"
        )));
    }
    let n = b.len();
    if n < 3 {
        return Err(PdeError::BadInput("need at least 3 cells".into()));
    }
    let dx = b.spacing[0];
    let dt = scheme.dt;
    if !(dt > 0.0) || scheme.t_end < dt {
        return Err(PdeError::BadInput("need 0 < dt <= t_end".into()));
    }
    let steps = scheme.steps();
    let mut u = vec![0.0f64; n];
    let mut grad_sup = 0.0f64;
    let grad_of = |u: &[f64]| -> f64 {
        let mut g = 0.0f64;
        for i in 0..n {
            let d = if i == 0 {
                (u[1] - u[0]) / dx
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / dx
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * dx)
            };
            g = g.max(d.abs());
        }
        g
    };
    let mut times = Vec::new();
    let mut fields = Vec::new();
    record_path(&mut times, &mut fields, b, &u, scheme.t_end);
    // implicit step in reversed time s = T - t:
    // (I - dt (a D2 + b D - lambda)) u_new = u + dt b
    let mut lower = vec![0.0f64; n];
    let mut diag = vec![0.0f64; n];
    let mut upper = vec![0.0f64; n];
    for i in 0..n {
        let bi = b.values[i];
        lower[i] = -dt * (a / (dx * dx) - bi / (2.0 * dx));
        diag[i] = 1.0 + dt * (2.0 * a / (dx * dx) + lambda);
        upper[i] = -dt * (a / (dx * dx) + bi / (2.0 * dx));
    }
    let mut cp = vec![0.0f64; n];
    let mut dp = vec![0.0f64; n];
    for step in 0..steps {
        // Thomas algorithm with Dirichlet-zero ghost cells
        let mut rhs: Vec<f64> = (0..n).map(|i| u[i] + dt * b.values[i]).collect();
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * cp[i - 1];
            cp[i] = upper[i] / m;
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
        }
        rhs[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = dp[i] - cp[i] * rhs[i + 1];
        }
        u = rhs;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(PdeError::BadInput(format!(
                "implicit solve produced non-finite values at step {step}"
            )));
        }
        grad_sup = grad_sup.max(grad_of(&u));
        let done = step + 1 == steps;
        if done || (scheme.snapshot_stride > 0 && (step + 1) % scheme.snapshot_stride as u64 == 0) {
            let t = scheme.t_end - (step + 1) as f64 * dt;
            record_path(&mut times, &mut fields, b, &u, t.max(0.0));
        }
    }
    times.reverse();
    fields.reverse();
    Ok((DensityPath { times, fields }, grad_sup))
}

/// grad_sup(lambda) over a lambda grid, for the decay study.
pub fn zvonkin_lambda_sweep(
    b: &GridField,
    a: f64,
    lambdas: &[f64],
    scheme: &PdeScheme,
) -> Result<Vec<f64>, PdeError> {
    lambdas
        .iter()
        .map(|&l| solve_zvonkin_backward(b, a, l, scheme).map(|(_, g)| g))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_density(var: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn normalized(g: GridField) -> GridField {
        let m = g.mass();
        g.map(|v| v / m)
    }

    #[test]
    fn fp_heat_equation_variance_growth() {
        // F = 0, a = 1: d rho/dt = rho'', variance grows by 2t
        let rho0 = normalized(GridField::sample_1d(-12.0, 12.0, 480, gaussian_density(1.0)));
        let dx = rho0.spacing[0];
        let scheme = PdeScheme::new(0.4 * dx * dx, 0.25);
        let path =
            solve_nonlinear_fp(&rho0, &DriftEnvelope::zero(), &Diffusion::Const(1.0), &scheme, &FpDriftMode::Local)
                .unwrap();
        let fin = path.fields.last().unwrap();
        let expect = GridField::sample_1d(-12.0, 12.0, 480, gaussian_density(1.5));
        let err = fin
            .values
            .iter()
            .zip(&expect.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 5.0 * dx * dx, "err={err}, dx^2={}", dx * dx);
    }

    #[test]
    fn fp_zero_diffusion_zero_drift_is_static() {
        let rho0 = normalized(GridField::sample_1d(-4.0, 4.0, 64, gaussian_density(1.0)));
        let scheme = PdeScheme::new(1e-3, 0.1);
        let path = solve_nonlinear_fp(
            &rho0,
            &DriftEnvelope::zero(),
            &Diffusion::Const(0.0),
            &scheme,
            &FpDriftMode::Local,
        )
        .unwrap();
        assert_eq!(path.fields.last().unwrap().values, rho0.values);
    }

    #[test]
    fn fp_mass_conservation_and_max_principle() {
        // Burgers drift F(r) = r, a = 1, uniform bump initial state
        let rho0 = normalized(GridField::sample_1d(-6.0, 6.0, 240, |x| {
            if x.abs() < 1.0 {
                0.5
            } else {
                0.0
            }
        }));
        let dx = rho0.spacing[0];
        let scheme = PdeScheme::new(0.4 * dx * dx, 0.2).with_stride(100);
        let path = solve_nonlinear_fp(
            &rho0,
            &DriftEnvelope::identity(),
            &Diffusion::Const(1.0),
            &scheme,
            &FpDriftMode::Local,
        )
        .unwrap();
        let sup0 = rho0.linf();
        for f in &path.fields {
            assert!((f.mass() - 1.0).abs() < 1e-10);
            assert!(f.linf() <= sup0 * (1.0 + 1e-8));
        }
    }

    #[test]
    fn fp_rejects_cfl_violation() {
        let rho0 = normalized(GridField::sample_1d(-4.0, 4.0, 64, gaussian_density(1.0)));
        let scheme = PdeScheme::new(1.0, 2.0);
        assert!(matches!(
            solve_nonlinear_fp(
                &rho0,
                &DriftEnvelope::zero(),
                &Diffusion::Const(1.0),
                &scheme,
                &FpDriftMode::Local
            ),
            Err(PdeError::Cfl { .. })
        ));
    }

    fn std_normal_cdf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26-style erf approximation, |err| < 1.5e-7
        let z = x / std::f64::consts::SQRT_2;
        let t = 1.0 / (1.0 + 0.3275911 * z.abs());
        let poly = t
            * (0.254829592
                + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        let erf = 1.0 - poly * (-z * z).exp();
        let erf = if z >= 0.0 { erf } else { -erf };
        0.5 * (1.0 + erf)
    }

    #[test]
    fn burgers_cdf_linear_case_is_heat_flow() {
        // g = 0: dV/dt = V'', so N(0,1) CDF becomes N(0, 1+2t) CDF
        let v0 = GridField::sample_1d(-10.0, 10.0, 400, |x| std_normal_cdf(x));
        let dx = v0.spacing[0];
        let t_end = 0.25;
        let scheme = PdeScheme::new(0.4 * dx * dx, t_end).with_advection(Advection::Central);
        let path = solve_burgers_cdf(&v0, |_| 0.0, &scheme).unwrap();
        let fin = path.fields.last().unwrap();
        let s = (1.0 + 2.0 * t_end).sqrt();
        let err = (0..fin.len()).fold(0.0f64, |m, i| {
            let x = fin.center(0, i);
            m.max((fin.values[i] - std_normal_cdf(x / s)).abs())
        });
        assert!(err < 2.0 * dx, "err={err}, dx={dx}");
    }

    #[test]
    fn burgers_cdf_constants_are_stationary() {
        for c in [0.0, 1.0] {
            let v0 = GridField::sample_1d(0.0, 1.0, 32, |_| c);
            let scheme = PdeScheme::new(1e-4, 0.01);
            let path = solve_burgers_cdf(&v0, |r| r, &scheme).unwrap();
            assert_eq!(path.fields.last().unwrap().values, v0.values);
        }
    }

    #[test]
    fn burgers_cdf_rejects_non_monotone() {
        let v0 = GridField::sample_1d(0.0, 1.0, 8, |x| if x < 0.5 { 0.8 } else { 0.2 });
        let scheme = PdeScheme::new(1e-5, 0.001);
        assert!(matches!(
            solve_burgers_cdf(&v0, |r| r, &scheme),
            Err(PdeError::NotACdf)
        ));
    }

    #[test]
    fn cole_hopf_identity_and_constants() {
        let v0 = GridField::sample_1d(-5.0, 5.0, 64, |x| std_normal_cdf(x));
        let same = cole_hopf_exact(&v0, 0.0).unwrap();
        assert_eq!(same.values, v0.values);
        let c = GridField::sample_1d(-5.0, 5.0, 32, |_| 0.4);
        let evolved = cole_hopf_exact(&c, 0.3).unwrap();
        for v in &evolved.values {
            assert!((v - 0.4).abs() < 1e-8);
        }
    }

    #[test]
    fn burgers_solver_matches_cole_hopf() {
        let v0 = GridField::sample_1d(-12.0, 12.0, 384, |x| std_normal_cdf(x));
        let dx = v0.spacing[0];
        let t_end = 0.25;
        let scheme = PdeScheme::new(0.4 * dx * dx, t_end).with_advection(Advection::Central);
        let numeric = solve_burgers_cdf(&v0, |r| r, &scheme).unwrap();
        let exact = cole_hopf_exact(&v0, t_end).unwrap();
        let fin = numeric.fields.last().unwrap();
        let err = fin
            .values
            .iter()
            .zip(&exact.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 2.0 * dx, "err={err}, 2dx={}", 2.0 * dx);
    }

    #[test]
    fn heat_semigroup_preserves_constants_exactly() {
        let f = GridField::sample_1d(0.0, 1.0, 50, |_| 3.25);
        let out = heat_semigroup_apply(&f, 0.07).unwrap();
        for v in &out.values {
            assert_eq!(*v, 3.25);
        }
        assert!(heat_semigroup_apply(&f, 0.0).is_err());
    }

    #[test]
    fn heat_semigroup_gaussian_variance() {
        let f = GridField::sample_1d(-12.0, 12.0, 1200, gaussian_density(1.0));
        let t = 0.5;
        let out = heat_semigroup_apply(&f, t).unwrap();
        let expect = GridField::sample_1d(-12.0, 12.0, 1200, gaussian_density(1.5));
        let err = out
            .values
            .iter()
            .zip(&expect.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-4, "err={err}");
    }

    #[test]
    fn heat_semigroup_indicator_closed_form() {
        // P_t 1_[0,1] at x=0.5, t=0.01: 1 - 2 * (1 - Phi(5)) ~ 1 - 5.733e-7
        let f = GridField::sample_1d(-1.0, 2.0, 1200, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        let out = heat_semigroup_apply(&f, 0.01).unwrap();
        let i = ((0.5 - out.origin[0]) / out.spacing[0] - 0.5).round() as usize;
        let expect = 1.0 - 2.0 * (1.0 - std_normal_cdf(5.0));
        assert!((out.values[i] - expect).abs() < 1e-6);
    }

    #[test]
    fn picard_fixed_point_with_zero_drift() {
        let rho0 = normalized(GridField::sample_1d(-8.0, 8.0, 160, gaussian_density(1.0)));
        let dx = rho0.spacing[0];
        let scheme = PdeScheme::new(0.4 * dx * dx, 0.05);
        let (_, gammas) = picard_density_iteration(
            &rho0,
            &DriftEnvelope::zero(),
            &Diffusion::Const(1.0),
            &scheme,
            &FpDriftMode::Local,
            4,
        )
        .unwrap();
        // iterate 1 moves off the frozen initialization; afterwards nothing changes
        for &g in &gammas[1..] {
            assert!(g.abs() < 1e-13, "gammas={gammas:?}");
        }
    }

    #[test]
    fn zvonkin_zero_drift_gives_zero() {
        let b = GridField::sample_1d(-2.0, 2.0, 64, |_| 0.0);
        let scheme = PdeScheme::new(1e-3, 0.5);
        let (path, grad) = solve_zvonkin_backward(&b, 0.5, 10.0, &scheme).unwrap();
        assert_eq!(grad, 0.0);
        assert!(path.fields.last().unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zvonkin_lambda_decay_small_case() {
        let b = GridField::sample_1d(-4.0, 4.0, 128, |x| if x.abs() < 1.0 { 1.0 } else { 0.0 });
        let scheme = PdeScheme::new(1e-3, 0.5);
        let grads = zvonkin_lambda_sweep(&b, 0.5, &[1.0, 10.0, 100.0, 1000.0], &scheme).unwrap();
        for w in grads.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "grads={grads:?}");
        }
        assert!(grads[3] <= 0.5, "grad_sup(1000)={}", grads[3]);
    }
}
