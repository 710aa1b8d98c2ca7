//! The nine experiment drivers. Every driver produces an ordered list of
//! metric rows; replica-level parallelism always reduces in replica order,
//! so worker count never changes the CSV bytes.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use chaoslab::chaosmetrics::{
    density_bin_masses, exp_moment_lemma55, marginal_entropy_bound_check, pinsker_check, rate_fit,
    tv_sample_vs_density, weighted_pinsker_check, ConvergenceReport, DiscreteMeasure,
    EmpiricalSample,
};
use chaoslab::grid::GridField;
use chaoslab::kernels::{
    make_box_mollifier, make_mollified_kernel, measure_convolve, DriftEnvelope, InteractionKernel,
};
use chaoslab::mixedlp::{
    holder_check, localized_mixed_norm, mixed_norm, young_check, LocalizationConfig, MultiIndex,
    PermOrder,
};
use chaoslab::particles::{
    sample_initial, simulate_coupled_limit, simulate_particle_system, Correlation, LimitDriftTable,
    Mu0Spec, SimConfig,
};
use chaoslab::pde::{
    cole_hopf_exact, heat_semigroup_apply, picard_density_iteration, solve_burgers_cdf,
    solve_nonlinear_fp, solve_zvonkin_backward, zvonkin_lambda_sweep, Advection, Diffusion,
    FpDriftMode, PdeScheme,
};
use chaoslab::rng::{derive_seed, draw_u64, draw_uniform};

use crate::config::{ConfigError, ExperimentConfig};
use crate::manifest::{config_hash, RunManifest, StageSeed};
use crate::report::{loglog_svg, rows_to_csv, slope_report_json, MetricRow, SlopeReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation error: {0}")]
    Sim(String),
    #[error("pde error: {0}")]
    Pde(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<chaoslab::particles::SimError> for HarnessError {
    fn from(e: chaoslab::particles::SimError) -> Self {
        HarnessError::Sim(e.to_string())
    }
}
impl From<chaoslab::pde::PdeError> for HarnessError {
    fn from(e: chaoslab::pde::PdeError) -> Self {
        HarnessError::Pde(e.to_string())
    }
}
impl From<chaoslab::kernels::KernelError> for HarnessError {
    fn from(e: chaoslab::kernels::KernelError) -> Self {
        HarnessError::Sim(e.to_string())
    }
}
impl From<chaoslab::chaosmetrics::MetricError> for HarnessError {
    fn from(e: chaoslab::chaosmetrics::MetricError) -> Self {
        HarnessError::Metric(e.to_string())
    }
}
impl From<chaoslab::mixedlp::MixedLpError> for HarnessError {
    fn from(e: chaoslab::mixedlp::MixedLpError) -> Self {
        HarnessError::Metric(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub report: Option<SlopeReport>,
    pub svg: Option<String>,
    pub stage_seeds: Vec<StageSeed>,
}

impl ExperimentOutput {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            report: None,
            svg: None,
            stage_seeds: Vec::new(),
        }
    }
}

/// Runs the named experiment on a dedicated pool (replica-ordered
/// reductions keep the output independent of `threads`).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentOutput, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    match cfg.experiment.as_str() {
        "strong_rate" => strong_rate(cfg),
        "rank_burgers" => rank_burgers(cfg),
        "moderate" => moderate(cfg),
        "lemma55" => lemma55(cfg),
        "entropy_suite" => entropy_suite(cfg),
        "mixedlp_suite" => mixedlp_suite(cfg),
        "zvonkin" => zvonkin(cfg),
        "picard" => picard(cfg),
        "tv_marginal" => tv_marginal(cfg),
        other => Err(ConfigError::UnknownExperiment(other.to_string()).into()),
    }
}

/// Executes and persists one run: metric CSV, optional slope JSON and SVG,
/// then the manifest naming every output file.
pub fn execute_run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunManifest, HarnessError> {
    let t0 = Instant::now();
    let out = run_experiment(cfg, threads)?;
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    std::fs::write(out_dir.join("metrics.csv"), rows_to_csv(&out.rows))?;
    outputs.push("metrics.csv".to_string());
    if let Some(rep) = &out.report {
        std::fs::write(out_dir.join("report.json"), slope_report_json(rep))?;
        outputs.push("report.json".to_string());
    }
    if let Some(svg) = &out.svg {
        std::fs::write(out_dir.join("plot.svg"), svg)?;
        outputs.push("plot.svg".to_string());
    }
    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        config_sha256: config_hash(&cfg.source),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        stage_seeds: out.stage_seeds,
        wall_time_secs: t0.elapsed().as_secs_f64(),
        outputs,
    };
    std::fs::write(out_dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}

// ---------------------------------------------------------------- helpers

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn normalized(g: GridField) -> GridField {
    let mass = g.mass();
    g.map(|v| v / mass)
}

/// Explicit diffusion dt: largest stable step that divides t_end evenly.
fn stable_dt(dx: f64, a: f64, t_end: f64, requested: Option<f64>) -> (f64, usize) {
    let cap = requested.unwrap_or(0.4 * dx * dx / a.max(1e-12));
    let steps = (t_end / cap).ceil().max(1.0) as usize;
    (t_end / steps as f64, steps)
}

fn std_normal_cdf(x: f64) -> f64 {
    // Abramowitz–Stegun 7.1.26 via erf, |error| < 1.5e-7
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    let erf = if z >= 0.0 { erf } else { -erf };
    0.5 * (1.0 + erf)
}

fn mu0_cdf(mu0: &Mu0Spec, x: f64) -> f64 {
    match mu0 {
        Mu0Spec::Gaussian { mean, std } => std_normal_cdf((x - mean) / std),
        Mu0Spec::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        Mu0Spec::Bimodal { m1, s1, m2, s2, w } => {
            w * std_normal_cdf((x - m1) / s1) + (1.0 - w) * std_normal_cdf((x - m2) / s2)
        }
    }
}

fn sim_config(
    sim: &crate::config::SimCfg,
    n: usize,
    seed: u64,
) -> SimConfig {
    let mut sc = SimConfig::new(n, sim.t_end, sim.dt, sim.sigma, seed);
    if let Some(b) = sim.pair_budget {
        sc.pair_budget = b;
    }
    sc
}

fn stage_seed(cfg: &ExperimentConfig, idx: u64) -> u64 {
    derive_seed(cfg.seed, 100 + idx)
}

fn fit_rows(
    experiment: &str,
    points: &[(f64, f64, f64)],
    out: &mut ExperimentOutput,
    title: &str,
) -> Result<Option<ConvergenceReport>, HarnessError> {
    if points.len() < 4 {
        return Ok(None);
    }
    let fit = rate_fit(points)?;
    out.rows
        .push(MetricRow::new(experiment, None, "slope", fit.slope));
    out.rows
        .push(MetricRow::new(experiment, None, "slope_ci_lo", fit.slope_ci.0));
    out.rows
        .push(MetricRow::new(experiment, None, "slope_ci_hi", fit.slope_ci.1));
    let rep = SlopeReport::from(&fit);
    out.svg = Some(loglog_svg(title, &rep));
    out.report = Some(rep);
    Ok(Some(fit))
}

// ------------------------------------------------------------ experiments

/// Synchronous-coupling strong error E sup_t |X^{N,1} - X|^2 over an
/// N-sweep against the mean-field limit, with a fitted log-log slope.
pub fn strong_rate(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sim = cfg.sim()?;
    let ns = cfg.sweep_ns()?;
    let kernel = cfg.kernel()?;
    let envelope = cfg.drift()?;
    let mu0 = cfg.mu0()?;
    let a = 0.5 * sim.sigma * sim.sigma;

    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-10.0, 10.0]);
    let nx = pde.nx.unwrap_or(512);
    let dx = (hi - lo) / nx as f64;
    let rho0 = normalized(mu0.to_grid(lo, hi, nx));
    let (dt_pde, steps) = stable_dt(dx, a, sim.t_end, pde.dt);
    let stride = (steps / 200).max(1);
    let scheme = PdeScheme::new(dt_pde, sim.t_end)
        .with_advection(Advection::Central)
        .with_stride(stride);
    let path = solve_nonlinear_fp(
        &rho0,
        &envelope,
        &Diffusion::Const(a),
        &scheme,
        &FpDriftMode::Nonlocal(&kernel),
    )?;
    let table = LimitDriftTable::from_convolution(&kernel, &path)?;

    let mut out = ExperimentOutput::new();
    let mut points = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        let seed_n = stage_seed(cfg, ni as u64);
        out.stage_seeds.push(StageSeed {
            stage: format!("n={n}"),
            seed: seed_n,
        });
        let errs: Vec<f64> = (0..sim.replicas)
            .into_par_iter()
            .map(|rep| -> Result<f64, HarnessError> {
                let seed = derive_seed(seed_n, rep as u64);
                let sc = sim_config(sim, n, seed);
                let init = sample_initial(&mu0, n, seed, &Correlation::Iid)?;
                let coupled = simulate_coupled_limit(&sc, &kernel, &envelope, &table, init)?;
                let d = coupled.sup_distance();
                Ok(d * d)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (m, se) = mean_se(&errs);
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "mean_sup_sq_error", m).with_se(se));
        points.push((n as f64, m, se));
    }
    fit_rows(&cfg.experiment, &points, &mut out, "strong error vs N")?;
    Ok(out)
}

/// Rank-interaction particles against the Burgers CDF equation: KS distance
/// of the empirical CDF at T, plus the PDE-vs-closed-form check.
pub fn rank_burgers(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sim = cfg.sim()?;
    let ns = cfg.sweep_ns()?;
    let kernel = cfg.kernel()?;
    let envelope = cfg.drift()?;
    let mu0 = cfg.mu0()?;

    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-12.0, 12.0]);
    let nx = pde.nx.unwrap_or(512);
    let dx = (hi - lo) / nx as f64;
    let v0 = GridField::sample_1d(lo, hi, nx, |x| mu0_cdf(&mu0, x));
    // the CDF equation carries unit diffusion (particle sigma = sqrt(2))
    let (dt_pde, _) = stable_dt(dx, 1.0, sim.t_end, pde.dt);
    let scheme = PdeScheme::new(dt_pde, sim.t_end).with_advection(Advection::Central);
    let env_g = envelope.clone();
    let path = solve_burgers_cdf(&v0, move |r| env_g.eval_1d(0.0, 0.0, r), &scheme)?;
    let v_end = path.fields.last().expect("nonempty path").clone();

    let mut out = ExperimentOutput::new();
    // cross-check the PDE against the closed-form solution (identity g only
    // is classical Burgers; the formula is used exactly in that regime)
    let exact = cole_hopf_exact(&v0, sim.t_end)?;
    let pde_gap = v_end
        .values
        .iter()
        .zip(&exact.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "pde_vs_exact_sup", pde_gap));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "pde_tolerance", 2.0 * dx));

    for (ni, &n) in ns.iter().enumerate() {
        let seed_n = stage_seed(cfg, ni as u64);
        out.stage_seeds.push(StageSeed {
            stage: format!("n={n}"),
            seed: seed_n,
        });
        let kss: Vec<f64> = (0..sim.replicas)
            .into_par_iter()
            .map(|rep| -> Result<f64, HarnessError> {
                let seed = derive_seed(seed_n, rep as u64);
                let sc = sim_config(sim, n, seed);
                let init = sample_initial(&mu0, n, seed, &Correlation::Iid)?;
                let path = simulate_particle_system(&sc, &kernel, &envelope, init)?;
                let mut xs = path.terminal().positions.clone();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut ks = 0.0f64;
                for (i, &x) in xs.iter().enumerate() {
                    let f = v_end.interp_1d(x);
                    ks = ks.max((f - i as f64 / n as f64).abs());
                    ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
                }
                Ok(ks)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (m, se) = mean_se(&kss);
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "mean_ks_distance", m).with_se(se));
    }
    Ok(out)
}

/// Moderate interaction: mollified kernel with a slowly shrinking width
/// against the density-dependent limit, coupled strong error per N.
pub fn moderate(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sim = cfg.sim()?;
    let ns = cfg.sweep_ns()?;
    let envelope = cfg.drift()?;
    let mu0 = cfg.mu0()?;
    let a = 0.5 * sim.sigma * sim.sigma;

    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-8.0, 8.0]);
    let nx = pde.nx.unwrap_or(512);
    let dx = (hi - lo) / nx as f64;
    let rho0 = normalized(mu0.to_grid(lo, hi, nx));
    let (dt_pde, steps) = stable_dt(dx, a, sim.t_end, pde.dt);
    let stride = (steps / 200).max(1);
    let scheme = PdeScheme::new(dt_pde, sim.t_end)
        .with_advection(Advection::Central)
        .with_stride(stride);
    let path = solve_nonlinear_fp(
        &rho0,
        &envelope,
        &Diffusion::Const(a),
        &scheme,
        &FpDriftMode::Local,
    )?;
    let table = LimitDriftTable::from_density(&path);

    let eps_of = |n: usize| 1.0 / (n as f64).ln().sqrt();
    let mut out = ExperimentOutput::new();
    for (ni, &n) in ns.iter().enumerate() {
        let seed_n = stage_seed(cfg, ni as u64);
        out.stage_seeds.push(StageSeed {
            stage: format!("n={n}"),
            seed: seed_n,
        });
        let eps = eps_of(n);
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "eps", eps));
        let errs: Vec<f64> = (0..sim.replicas)
            .into_par_iter()
            .map(|rep| -> Result<f64, HarnessError> {
                let seed = derive_seed(seed_n, rep as u64);
                let sc = sim_config(sim, n, seed);
                let kernel = make_mollified_kernel(make_box_mollifier(), eps);
                let init = sample_initial(&mu0, n, seed, &Correlation::Iid)?;
                let coupled = simulate_coupled_limit(&sc, &kernel, &envelope, &table, init)?;
                let d = coupled.sup_distance();
                Ok(d * d)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (m, se) = mean_se(&errs);
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "mean_sup_sq_error", m).with_se(se));
    }
    Ok(out)
}

/// Exponential-moment bound: Monte Carlo at the configured N plus an
/// exhaustive two-particle quadrature cross-check.
pub fn lemma55(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let kernel = cfg.kernel()?;
    let mu0 = cfg.mu0()?;
    let p = cfg.params();
    let n = p.n.unwrap_or(1000);
    let sup = kernel.sup_norm.unwrap_or(1.0).max(1e-12);
    let lambda = p
        .lambda
        .unwrap_or(1.0 / (16.0 * std::f64::consts::E.powi(2) * sup * sup));
    let reps = p.mc_reps.unwrap_or(10_000);
    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([0.0, 1.0]);
    let grid = normalized(mu0.to_grid(lo, hi, pde.nx.unwrap_or(4096)));

    let mut out = ExperimentOutput::new();
    let seed_mc = stage_seed(cfg, 0);
    out.stage_seeds.push(StageSeed { stage: "mc".into(), seed: seed_mc });
    let est = exp_moment_lemma55(&kernel, &mu0, &grid, n, lambda, reps, seed_mc)?;
    out.rows.push(
        MetricRow::new(&cfg.experiment, Some(n as u64), "exp_moment", est.estimate)
            .with_se(est.std_error),
    );
    out.rows.push(MetricRow::new(&cfg.experiment, None, "lambda", lambda));
    out.rows.push(MetricRow::new(&cfg.experiment, None, "bound", 6.0));
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        None,
        "lambda_above_threshold",
        if est.lambda_above_threshold { 1.0 } else { 0.0 },
    ));

    // two-particle cross-check: exhaustive quadrature over mu0 x mu0
    let seed2 = stage_seed(cfg, 1);
    out.stage_seeds.push(StageSeed { stage: "mc_n2".into(), seed: seed2 });
    let est2 = exp_moment_lemma55(&kernel, &mu0, &grid, 2, lambda, 2 * reps, seed2)?;
    let quad = two_particle_quadrature(&kernel, &grid, lambda)?;
    out.rows.push(
        MetricRow::new(&cfg.experiment, Some(2), "exp_moment", est2.estimate)
            .with_se(est2.std_error),
    );
    out.rows
        .push(MetricRow::new(&cfg.experiment, Some(2), "quadrature", quad));
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        Some(2),
        "crosscheck_gap",
        (est2.estimate - quad).abs(),
    ));
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        Some(2),
        "crosscheck_limit",
        3.0 * est2.std_error,
    ));
    Ok(out)
}

/// E exp(lambda * 2 * |(phibar (*) eta)(xi_1)|^2) for N = 2 by midpoint
/// quadrature over the density grid.
fn two_particle_quadrature(
    kernel: &InteractionKernel,
    grid: &GridField,
    lambda: f64,
) -> Result<f64, HarnessError> {
    let m = grid.len();
    let dx = grid.spacing[0];
    let xs: Vec<f64> = (0..m).map(|i| grid.center(0, i)).collect();
    // centering term (phi (*) mu0)(x) at every node
    let mut centers = vec![0.0f64; m];
    for i in 0..m {
        centers[i] = measure_convolve(kernel, 0.0, &[xs[i]], grid)?;
    }
    let mut total = 0.0;
    let mut wsum = 0.0;
    for i in 0..m {
        let wi = grid.values[i] * dx;
        if wi == 0.0 {
            continue;
        }
        for j in 0..m {
            let wj = grid.values[j] * dx;
            if wj == 0.0 {
                continue;
            }
            // empirical convolution at xi_1 for the pair (x_i, x_j); the
            // diagonal term vanishes by convention
            let emp = 0.5 * kernel.eval(0.0, &[xs[i]], &[xs[j]]);
            let c = emp - centers[i];
            total += wi * wj * (lambda * 2.0 * c * c).exp();
            wsum += wi * wj;
        }
    }
    Ok(total / wsum)
}

/// Randomized inequality trials: Pinsker, weighted Pinsker, and the
/// symmetric-marginal entropy bound on small exhaustive state spaces.
pub fn entropy_suite(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let trials = cfg.params().trials.unwrap_or(10_000);
    let seed = stage_seed(cfg, 0);
    let slack = 1e-10;

    let rand_measure = |stream: u64, base: u64, k: usize| -> DiscreteMeasure {
        let raw: Vec<f64> = (0..k)
            .map(|i| 0.02 + draw_uniform(seed, stream, base + i as u64))
            .collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let drift = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        DiscreteMeasure::indexed(w).expect("normalized weights")
    };

    let pin0_viol: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mu = rand_measure(0, t * 64, 8);
            let nu = rand_measure(1, t * 64, 8);
            let c = pinsker_check(&mu, &nu);
            u64::from(c.lhs > c.rhs + slack)
        })
        .sum();

    let pin1_viol: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mu = rand_measure(2, t * 64, 8);
            let nu = rand_measure(3, t * 64, 8);
            let f: Vec<f64> = (0..8)
                .map(|i| -2.0 + 4.0 * draw_uniform(seed, 4, t * 64 + i))
                .collect();
            let c = weighted_pinsker_check(&mu, &nu, |a| f[a as usize]);
            u64::from(c.lhs > c.rhs + slack)
        })
        .sum();

    let bb4_viol: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = t * 64;
            let e_size = 2 + (draw_u64(seed, 5, base) % 3) as usize; // 2..4
            let n = 2 + (draw_u64(seed, 5, base + 1) % 4) as usize; // 2..5
            let k = 1 + (draw_u64(seed, 5, base + 2) as usize) % n;
            let w = 0.1 + 0.8 * draw_uniform(seed, 5, base + 3);
            let draw_law = |off: u64| -> Vec<f64> {
                let raw: Vec<f64> = (0..e_size)
                    .map(|i| 0.05 + draw_uniform(seed, 6, base + off + i as u64))
                    .collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            };
            let a = draw_law(8);
            let b = draw_law(16);
            let states = e_size.pow(n as u32);
            let mut weights = vec![0.0f64; states];
            for (flat, wt) in weights.iter_mut().enumerate() {
                let mut rem = flat;
                let mut pa = 1.0;
                let mut pb = 1.0;
                for _ in 0..n {
                    let c = rem % e_size;
                    rem /= e_size;
                    pa *= a[c];
                    pb *= b[c];
                }
                *wt = w * pa + (1.0 - w) * pb;
            }
            let total: f64 = weights.iter().sum();
            weights[0] += 1.0 - total;
            let mu_n = DiscreteMeasure::indexed(weights).expect("mixture law");
            let marg: Vec<f64> = (0..e_size)
                .map(|c| w * a[c] + (1.0 - w) * b[c])
                .collect();
            let mu = DiscreteMeasure::indexed(marg).expect("marginal law");
            match marginal_entropy_bound_check(&mu_n, e_size, n, &mu, k) {
                Ok(c) => u64::from(c.lhs > c.rhs + slack),
                Err(_) => 1,
            }
        })
        .sum();

    let mut out = ExperimentOutput::new();
    out.stage_seeds.push(StageSeed { stage: "trials".into(), seed });
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "trials", trials as f64));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "pinsker_violations", pin0_viol as f64));
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        None,
        "weighted_pinsker_violations",
        pin1_viol as f64,
    ));
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        None,
        "marginal_bound_violations",
        bb4_viol as f64,
    ));
    Ok(out)
}

/// Mixed-norm machinery: randomized Hölder/Young trials, separable
/// factorization, the singular-kernel refinement study, and the heat
/// semigroup decay exponents.
pub fn mixedlp_suite(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let trials = cfg.params().trials.unwrap_or(1000);
    let seed = stage_seed(cfg, 0);
    let mut out = ExperimentOutput::new();
    out.stage_seeds.push(StageSeed { stage: "trials".into(), seed });

    // (a) randomized inequality trials
    let holder_viol: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = t * 256;
            let shape = vec![8usize, 8];
            let mk = |off: u64| {
                let vals: Vec<f64> = (0..64)
                    .map(|i| 3.0 * draw_uniform(seed, 0, base + off + i))
                    .collect();
                GridField::new(vec![0.0, 0.0], vec![0.25, 0.25], shape.clone(), vals)
                    .expect("field")
            };
            let f = mk(0);
            let g = mk(64);
            let pe = 1.1 + 4.9 * draw_uniform(seed, 1, base);
            let re = 1.1 + 4.9 * draw_uniform(seed, 1, base + 1);
            let qe = 1.0 / (1.0 / pe + 1.0 / re);
            let perm = if t % 2 == 0 {
                PermOrder::natural(2)
            } else {
                PermOrder::new(vec![0, 1]).expect("perm")
            };
            let c = holder_check(
                &f,
                &g,
                &MultiIndex::uniform(2, pe),
                &MultiIndex::uniform(2, re),
                &MultiIndex::uniform(2, qe),
                &perm,
            )
            .expect("holder inputs valid");
            u64::from(!c.pass)
        })
        .sum();

    let young_viol: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = t * 256;
            let mk = |off: u64| {
                let vals: Vec<f64> = (0..32)
                    .map(|i| 3.0 * draw_uniform(seed, 2, base + off + i))
                    .collect();
                GridField::new(vec![0.0], vec![1.0 / 32.0], vec![32], vals).expect("field")
            };
            let f = mk(0);
            let g = mk(32);
            // keep 1/q = 1/p + 1/r - 1 well inside (0, 1]
            let pe = 1.0 + 1.5 * draw_uniform(seed, 3, base);
            let re = 1.0 + 1.5 * draw_uniform(seed, 3, base + 2);
            let qr = 1.0 / pe + 1.0 / re - 1.0;
            if qr <= 0.05 {
                return 0u64; // exponent triple outside the admissible wedge
            }
            let c = young_check(
                &f,
                &g,
                &MultiIndex::uniform(1, pe),
                &MultiIndex::uniform(1, re),
                &MultiIndex::uniform(1, 1.0 / qr),
                &PermOrder::natural(1),
            )
            .expect("young inputs valid");
            u64::from(!c.pass)
        })
        .sum();

    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "trials", trials as f64));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "holder_violations", holder_viol as f64));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "young_violations", young_viol as f64));

    // (b) separable factorization
    let gx = |x: f64| (-x * x).exp();
    let hy = |y: f64| 1.0 / (1.0 + y * y);
    let f2 = GridField::sample_nd(&[(-2.0, 2.0), (-2.0, 2.0)], &[64, 64], |x| gx(x[0]) * hy(x[1]));
    let p2 = MultiIndex::new(vec![2.5, 1.7]).expect("index");
    let joint = mixed_norm(&f2, &p2, &PermOrder::natural(2))?;
    let g1 = GridField::sample_1d(-2.0, 2.0, 64, gx);
    let h1 = GridField::sample_1d(-2.0, 2.0, 64, hy);
    let split = mixed_norm(&g1, &MultiIndex::uniform(1, 2.5), &PermOrder::natural(1))?
        * mixed_norm(&h1, &MultiIndex::uniform(1, 1.7), &PermOrder::natural(1))?;
    out.rows.push(MetricRow::new(
        &cfg.experiment,
        None,
        "separable_gap",
        (joint - split).abs(),
    ));

    // (c) refinement study of the truncated |x|^{-1/2} kernel in d = 2:
    // convergent localized norm for p = 3, divergent growth for p = 6
    let loc = LocalizationConfig::lattice(1.0, &[(-1.5, 1.5), (-1.5, 1.5)]);
    let mut p3 = Vec::new();
    let mut p6 = Vec::new();
    for &m in &[64usize, 128, 256] {
        let n = 3 * m;
        let f = GridField::sample_nd(&[(-1.5, 1.5), (-1.5, 1.5)], &[n, n], |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r <= 1.0 && r > 0.0 {
                1.0 / r.sqrt()
            } else {
                0.0
            }
        });
        let v3 =
            localized_mixed_norm(&f, &MultiIndex::uniform(2, 3.0), &PermOrder::natural(2), &loc)?;
        let v6 =
            localized_mixed_norm(&f, &MultiIndex::uniform(2, 6.0), &PermOrder::natural(2), &loc)?;
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(m as u64), "loc_norm_p3", v3));
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(m as u64), "loc_norm_p6", v6));
        p3.push(v3);
        p6.push(v6);
    }
    let p3_ratio_max = p3
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0f64, f64::max);
    let p6_growth = p6.last().unwrap() / p6[0];
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "p3_refinement_ratio_max", p3_ratio_max));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "p6_refinement_growth", p6_growth));

    // (d) semigroup decay: at each probe time apply the heat flow to the
    // L^p-normalized Gaussian bump whose variance matches that time; the
    // sup norm then scales exactly like t^{-1/(2p)}
    for &p in &[2.0f64, 4.0] {
        let mut pts = Vec::new();
        for &t in &[0.01f64, 0.02, 0.04, 0.08, 0.16] {
            let bump = GridField::sample_1d(-4.0, 4.0, 1024, |x| (-0.5 * x * x / t).exp());
            let norm = mixed_norm(&bump, &MultiIndex::uniform(1, p), &PermOrder::natural(1))?;
            let bump = bump.map(|v| v / norm);
            let flowed = heat_semigroup_apply(&bump, t)?;
            pts.push((t, flowed.linf(), 0.0));
        }
        let fit = rate_fit(&pts)?;
        out.rows.push(MetricRow::new(
            &cfg.experiment,
            None,
            &format!("semigroup_slope_p{}", p as u64),
            fit.slope,
        ));
        out.rows.push(MetricRow::new(
            &cfg.experiment,
            None,
            &format!("semigroup_target_p{}", p as u64),
            -1.0 / (2.0 * p),
        ));
    }
    Ok(out)
}

/// Gradient-smallness of the drift-removing transformation as the
/// penalization grows, with a fine-grid oracle comparison.
pub fn zvonkin(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let p = cfg.params();
    let lambdas = p.lambdas.unwrap_or_else(|| vec![1.0, 10.0, 100.0, 1000.0]);
    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-4.0, 4.0]);
    let nx = pde.nx.unwrap_or(128);
    let dx = (hi - lo) / nx as f64;
    let a = 0.5;
    let t_end = 0.5;
    let dt = pde.dt.unwrap_or(2e-4);
    let step_drift = |x: f64| if x.abs() < 1.0 { 1.0 } else { 0.0 };
    let b = GridField::sample_1d(lo, hi, nx, step_drift);
    let scheme = PdeScheme::new(dt, t_end);
    let grads = zvonkin_lambda_sweep(&b, a, &lambdas, &scheme)?;

    let mut out = ExperimentOutput::new();
    for (l, g) in lambdas.iter().zip(&grads) {
        out.rows.push(MetricRow::new(
            &cfg.experiment,
            None,
            &format!("grad_sup_lambda{}", *l as u64),
            *g,
        ));
    }

    // dx/8 fine-grid oracle for the largest lambda
    let lambda_max = *lambdas.last().expect("nonempty lambdas");
    let (coarse_path, _) = solve_zvonkin_backward(&b, a, lambda_max, &scheme)?;
    let u0 = &coarse_path.fields[0];
    let nf = nx * 8;
    let bf = GridField::sample_1d(lo, hi, nf, step_drift);
    let fine_scheme = PdeScheme::new(dt / 4.0, t_end);
    let (fine_path, _) = solve_zvonkin_backward(&bf, a, lambda_max, &fine_scheme)?;
    let uf = &fine_path.fields[0];
    let mut err = 0.0f64;
    for i in 0..nx {
        let f = 0.5 * (uf.values[8 * i + 3] + uf.values[8 * i + 4]);
        err = err.max((u0.values[i] - f).abs());
    }
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "oracle_sup_err", err));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "oracle_tolerance", 5.0 * dx * dx));
    Ok(out)
}

/// Picard iteration toward the nonlinear solve: the contraction log and the
/// gap between the final iterate and the direct solution.
pub fn picard(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let p = cfg.params();
    let n_iters = p.n_iters.unwrap_or(6);
    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-8.0, 8.0]);
    let nx = pde.nx.unwrap_or(256);
    let dx = (hi - lo) / nx as f64;
    let a = 1.0;
    let t_end = 0.25;
    let envelope = DriftEnvelope::identity();
    let mu0 = Mu0Spec::Gaussian { mean: 0.0, std: 1.0 };
    let rho0 = normalized(mu0.to_grid(lo, hi, nx));
    let (dt, _) = stable_dt(dx, a, t_end, pde.dt);
    let scheme = PdeScheme::new(dt, t_end).with_advection(Advection::Central);

    let (iter_path, gammas) = picard_density_iteration(
        &rho0,
        &envelope,
        &Diffusion::Const(a),
        &scheme,
        &FpDriftMode::Local,
        n_iters,
    )?;
    let direct = solve_nonlinear_fp(
        &rho0,
        &envelope,
        &Diffusion::Const(a),
        &scheme,
        &FpDriftMode::Local,
    )?;
    let fi = iter_path.fields.last().expect("iterate path");
    let fd = direct.fields.last().expect("direct path");
    let gap = fi
        .values
        .iter()
        .zip(&fd.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    let mut out = ExperimentOutput::new();
    for (i, g) in gammas.iter().enumerate() {
        out.rows.push(MetricRow::new(
            &cfg.experiment,
            None,
            &format!("gamma_{}", i + 1),
            *g,
        ));
    }
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "final_gap", gap));
    out.rows
        .push(MetricRow::new(&cfg.experiment, None, "gap_tolerance", 2.0 * dx));
    Ok(out)
}

/// Histogram total variation between the pooled particle marginal at T and
/// the limit density, with the analytic sampling noise floor recorded.
pub fn tv_marginal(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sim = cfg.sim()?;
    let ns = cfg.sweep_ns()?;
    let kernel = cfg.kernel()?;
    let envelope = cfg.drift()?;
    let mu0 = cfg.mu0()?;
    let a = 0.5 * sim.sigma * sim.sigma;
    let bins = cfg.params().bins.unwrap_or(24);

    let pde = cfg.pde();
    let [lo, hi] = pde.domain.unwrap_or([-6.0, 6.0]);
    let nx = pde.nx.unwrap_or(384);
    let dx = (hi - lo) / nx as f64;
    let rho0 = normalized(mu0.to_grid(lo, hi, nx));
    let (dt_pde, _) = stable_dt(dx, a, sim.t_end, pde.dt);
    let scheme = PdeScheme::new(dt_pde, sim.t_end).with_advection(Advection::Central);
    let path = solve_nonlinear_fp(
        &rho0,
        &envelope,
        &Diffusion::Const(a),
        &scheme,
        &FpDriftMode::Nonlocal(&kernel),
    )?;
    let rho_t = path.fields.last().expect("density path").clone();

    let mut out = ExperimentOutput::new();
    let mut points = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        let seed_n = stage_seed(cfg, ni as u64);
        out.stage_seeds.push(StageSeed {
            stage: format!("n={n}"),
            seed: seed_n,
        });
        // all N particles per replica are draws from the same one-particle
        // marginal (exchangeability), so the whole ensemble is pooled
        let pooled: Vec<Vec<f64>> = (0..sim.replicas)
            .into_par_iter()
            .map(|rep| -> Result<Vec<f64>, HarnessError> {
                let seed = derive_seed(seed_n, rep as u64);
                let sc = sim_config(sim, n, seed);
                let init = sample_initial(&mu0, n, seed, &Correlation::Iid)?;
                let path = simulate_particle_system(&sc, &kernel, &envelope, init)?;
                Ok(path.terminal().positions.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let all: Vec<f64> = pooled.into_iter().flatten().collect();
        let m_pts = all.len() as f64;
        let sample = EmpiricalSample::new(all).map_err(|e| HarnessError::Metric(e.to_string()))?;
        let tv = tv_sample_vs_density(&sample, &rho_t, bins)?;
        // expected TV between a multinomial draw of this size from rho_T
        // itself and rho_T: the resolution floor of the estimator
        let q = density_bin_masses(&rho_t, lo, hi, bins);
        let floor: f64 = q
            .iter()
            .map(|&p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * m_pts)).sqrt())
            .sum();
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "tv_marginal", tv));
        out.rows
            .push(MetricRow::new(&cfg.experiment, Some(n as u64), "noise_floor", floor));
        points.push((n as f64, tv, 0.0));
    }
    fit_rows(&cfg.experiment, &points, &mut out, "marginal TV vs N")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_dt_divides_horizon() {
        let (dt, steps) = stable_dt(0.05, 0.5, 1.0, None);
        assert!((dt * steps as f64 - 1.0).abs() < 1e-12);
        assert!(dt <= 0.4 * 0.05 * 0.05 / 0.5 + 1e-15);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((std_normal_cdf(1.96) - 0.9750021).abs() < 1e-5);
        assert!((std_normal_cdf(-1.0) - 0.1586553).abs() < 1e-5);
    }

    #[test]
    fn zvonkin_experiment_defaults_run() {
        let cfg = ExperimentConfig::from_str("experiment = \"zvonkin\"\nseed = 3\n").unwrap();
        let out = run_experiment(&cfg, Some(2)).unwrap();
        let grads: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.metric.starts_with("grad_sup"))
            .map(|r| r.value)
            .collect();
        assert_eq!(grads.len(), 4);
        assert!(grads.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn two_particle_quadrature_zero_kernel_is_one() {
        let kernel = chaoslab::kernels::make_zero_kernel(1);
        let grid = normalized(
            Mu0Spec::Uniform { a: 0.0, b: 1.0 }.to_grid(0.0, 1.0, 64),
        );
        let v = two_particle_quadrature(&kernel, &grid, 0.05).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}
