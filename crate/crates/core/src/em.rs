//! Population, sample, and stochastic gradient-EM iterations.
//!
//! The gradient of the auxiliary objective at the current estimate has
//! component `i` equal to `E[w_i(X; mu)(X - mu_i)]`; the sample version
//! replaces the expectation by the average over observed points. One
//! iteration moves every component by `step_size` times its gradient
//! component. At the true means the gradient is exactly
//! `pi_i (mu_i^* - mu_i) = 0`, which [`oracle_gradient_q`] evaluates in
//! closed form for any estimate.
//!
//! Population expectations are intractable for two or more components, so
//! population runs draw one fixed mega-sample per run and reuse it every
//! iteration (common random numbers); the trajectory is then a deterministic
//! function of the seed.

use std::io::Write;

use crate::assign::min_cost_assignment;
use crate::mixture::{ln_weights, resp_into};
use crate::stacked::dist2;
use crate::{exec, rng, Error, MixtureConfig, Result, Stacked};

/// Iterates whose largest coordinate magnitude crosses this guard are
/// declared diverged instead of running to overflow.
pub const DIVERGENCE_GUARD: f64 = 1e8;

/// `2 / (pi_min + pi_max)`, the rate-optimal constant step.
pub fn default_step_size(weights: &[f64]) -> f64 {
    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().cloned().fold(0.0f64, f64::max);
    2.0 / (lo + hi)
}

/// Iteration state of a gradient-EM run.
#[derive(Clone, Debug)]
pub struct EmState {
    pub means_est: Stacked,
    pub iteration: usize,
    pub step_size: f64,
}

impl EmState {
    /// State at iteration 0 with the default step size for `config`.
    pub fn new(config: &MixtureConfig, init_means: Stacked) -> Self {
        Self { means_est: init_means, iteration: 0, step_size: default_step_size(config.weights()) }
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }
}

/// Monte-Carlo estimate of the population gradient.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    /// Stacked per-component gradient estimate.
    pub grad: Stacked,
    /// Points used.
    pub mc_samples: usize,
    /// Per-component scalar standard error: square root of the estimated
    /// covariance trace of the component's mean vector.
    pub std_err: Vec<f64>,
}

impl GradientEstimate {
    /// Standard error of the full stacked estimate.
    pub fn stacked_std_err(&self) -> f64 {
        self.std_err.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIters => "max_iters",
            TerminalStatus::Diverged => "diverged",
        }
    }
}

/// One recorded iteration: errors are measured against the reference means
/// under the component matching fixed at initialization.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub t: usize,
    pub err_per_component: Vec<f64>,
    pub err_total: f64,
    pub grad_norm: f64,
}

/// Full run record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub status: TerminalStatus,
    /// `matching[i]` is the reference component assigned to estimate `i`.
    pub matching: Vec<usize>,
    pub final_means: Stacked,
    pub step_size: f64,
}

impl Trajectory {
    pub fn final_error(&self) -> f64 {
        self.records.last().expect("trajectory has records").err_total
    }

    pub fn log_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.err_total.ln()).collect()
    }

    /// CSV with columns `t,err_total,err_1..err_M,grad_norm,status`; the
    /// status column repeats the terminal status on every row.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = self.matching.len();
        write!(w, "t,err_total")?;
        for i in 1..=m {
            write!(w, ",err_{i}")?;
        }
        writeln!(w, ",grad_norm,status")?;
        for r in &self.records {
            write!(w, "{},{}", r.t, r.err_total)?;
            for e in &r.err_per_component {
                write!(w, ",{e}")?;
            }
            writeln!(w, ",{},{}", r.grad_norm, self.status.as_str())?;
        }
        Ok(())
    }
}

/// Where one run's gradients come from.
#[derive(Clone, Copy, Debug)]
pub enum GradientSource<'a> {
    /// Monte-Carlo population gradient on a mega-sample drawn once from the
    /// model and reused every iteration.
    Population { mc_samples: usize, seed: u64 },
    /// Empirical gradient on a fixed observed sample.
    Sample { points: &'a Stacked },
}

/// Options for [`run_gradient_em`].
#[derive(Clone, Debug)]
pub struct EmOptions {
    /// Overrides `2 / (pi_min + pi_max)` when set.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop when successive iterates move less than this.
    pub tol: f64,
    /// Error bookkeeping reference; the true means when unset.
    pub error_reference: Option<Stacked>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { step_size: None, max_iters: 500, tol: 1e-8, error_reference: None }
    }
}

/// Closed-form gradient of the oracle objective: component `i` equals
/// `pi_i (mu_i^* - mu_i)`. Assumes the model has been centered.
pub fn oracle_gradient_q(config: &MixtureConfig, means_est: &Stacked) -> Result<Stacked> {
    check_means_shape(config, means_est)?;
    let mut grad = config.means().sub(means_est)?;
    for (i, w) in config.weights().iter().enumerate() {
        for v in grad.row_mut(i) {
            *v *= w;
        }
    }
    Ok(grad)
}

/// Empirical gradient on `points`: component `i` is
/// `(1/n) sum_j w_i(x_j; mu)(x_j - mu_i)`.
pub fn sample_gradient(points: &Stacked, weights: &[f64], means_est: &Stacked) -> Result<Stacked> {
    Ok(gradient_accumulate(points, weights, means_est)?.0)
}

/// [`sample_gradient`] plus per-component standard errors from the
/// per-point variance.
pub fn sample_gradient_with_stderr(
    points: &Stacked,
    weights: &[f64],
    means_est: &Stacked,
) -> Result<GradientEstimate> {
    let n = points.rows();
    let (grad, sumsq) = gradient_accumulate(points, weights, means_est)?;
    let std_err = (0..means_est.rows())
        .map(|i| {
            let mean_sq = sumsq[i] / n as f64;
            let var = (mean_sq - grad.row(i).iter().map(|v| v * v).sum::<f64>()).max(0.0);
            (var / n as f64).sqrt()
        })
        .collect();
    Ok(GradientEstimate { grad, mc_samples: n, std_err })
}

/// Monte-Carlo population gradient: draws `mc_samples` fresh points from the
/// model (deterministic in `seed`) shared across all components.
///
/// # Panics
/// When `mc_samples < 1000`; below that the variance estimate is not worth
/// reporting.
pub fn population_gradient(
    config: &MixtureConfig,
    means_est: &Stacked,
    mc_samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    assert!(mc_samples >= 1000, "population gradient needs at least 1000 samples");
    check_means_shape(config, means_est)?;
    let sample = config.sample(mc_samples, seed);
    sample_gradient_with_stderr(sample.points(), config.weights(), means_est)
}

fn check_means_shape(config: &MixtureConfig, means_est: &Stacked) -> Result<()> {
    if means_est.rows() != config.components() || means_est.dim() != config.dim() {
        return Err(Error::DimensionMismatch(format!(
            "means estimate {}x{} for a {}x{} model",
            means_est.rows(),
            means_est.dim(),
            config.components(),
            config.dim()
        )));
    }
    Ok(())
}

/// Shared accumulation pass: per-component gradient sums and squared-norm
/// sums, chunked with in-order reduction.
fn gradient_accumulate(
    points: &Stacked,
    weights: &[f64],
    means_est: &Stacked,
) -> Result<(Stacked, Vec<f64>)> {
    let m = means_est.rows();
    let d = means_est.dim();
    if weights.len() != m {
        return Err(Error::DimensionMismatch(format!("{} weights for {m} means", weights.len())));
    }
    if points.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} under means of dimension {d}",
            points.dim()
        )));
    }
    let n = points.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let ln_w = ln_weights(weights);
    let (mut grad_sum, sumsq) = exec::reduce_chunks(
        n,
        |range| {
            let mut grad = vec![0.0; m * d];
            let mut sumsq = vec![0.0; m];
            let mut w = vec![0.0; m];
            for j in range {
                let x = points.row(j);
                resp_into(&ln_w, means_est, x, &mut w);
                for i in 0..m {
                    let wi = w[i];
                    let mu = means_est.row(i);
                    let g = &mut grad[i * d..(i + 1) * d];
                    let mut sq = 0.0;
                    for k in 0..d {
                        let v = wi * (x[k] - mu[k]);
                        g[k] += v;
                        sq += v * v;
                    }
                    sumsq[i] += sq;
                }
            }
            (grad, sumsq)
        },
        |(mut ga, mut sa), (gb, sb)| {
            for (a, b) in ga.iter_mut().zip(&gb) {
                *a += b;
            }
            for (a, b) in sa.iter_mut().zip(&sb) {
                *a += b;
            }
            (ga, sa)
        },
    )
    .expect("n >= 1");
    for v in &mut grad_sum {
        *v /= n as f64;
    }
    Ok((Stacked::from_flat(d, grad_sum)?, sumsq))
}

/// Assignment of estimated components to true components minimizing the total
/// squared distance; `perm[i]` is the true index for estimate `i`.
pub fn match_components(est: &Stacked, truth: &Stacked) -> Result<Vec<usize>> {
    if est.rows() != truth.rows() || est.dim() != truth.dim() {
        return Err(Error::DimensionMismatch("component matching".into()));
    }
    Ok(min_cost_assignment(est.rows(), |i, j| dist2(est.row(i), truth.row(j))))
}

fn error_record(
    t: usize,
    means: &Stacked,
    reference: &Stacked,
    matching: &[usize],
    grad_norm: f64,
) -> IterationRecord {
    let err_per_component: Vec<f64> = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| dist2(means.row(i), reference.row(j)).sqrt())
        .collect();
    let err_total = err_per_component.iter().map(|e| e * e).sum::<f64>().sqrt();
    IterationRecord { t, err_per_component, err_total, grad_norm }
}

/// Run gradient EM from `init_means` until the iterates move less than
/// `opts.tol`, `opts.max_iters` steps elapse, or the run diverges. Every
/// visited iterate is recorded; non-finite gradients and runaway coordinates
/// end the run with [`TerminalStatus::Diverged`] rather than a crash.
pub fn run_gradient_em(
    config: &MixtureConfig,
    source: GradientSource<'_>,
    init_means: &Stacked,
    opts: &EmOptions,
) -> Result<Trajectory> {
    check_means_shape(config, init_means)?;
    if !init_means.is_finite() {
        return Err(Error::NonFinite("initial means".into()));
    }
    let reference = opts.error_reference.clone().unwrap_or_else(|| config.means().clone());
    check_means_shape(config, &reference)?;
    let matching = match_components(init_means, &reference)?;

    let mega;
    let points: &Stacked = match source {
        GradientSource::Population { mc_samples, seed } => {
            assert!(mc_samples >= 1000, "population gradient needs at least 1000 samples");
            mega = config.sample(mc_samples, seed).into_points();
            &mega
        }
        GradientSource::Sample { points } => points,
    };

    let mut state = EmState::new(config, init_means.clone());
    if let Some(s) = opts.step_size {
        state.step_size = s;
    }
    let mut records = Vec::new();
    let status = loop {
        let grad = sample_gradient(points, config.weights(), &state.means_est)?;
        let finite = grad.is_finite();
        let grad_norm = if finite { grad.norm() } else { f64::NAN };
        records.push(error_record(state.iteration, &state.means_est, &reference, &matching, grad_norm));
        if !finite {
            break TerminalStatus::Diverged;
        }
        if state.iteration >= opts.max_iters {
            break TerminalStatus::MaxIters;
        }
        let mut next = state.means_est.clone();
        next.add_scaled(&grad, state.step_size)?;
        if !next.is_finite() || next.max_abs() > DIVERGENCE_GUARD {
            break TerminalStatus::Diverged;
        }
        let moved = next.distance(&state.means_est)?;
        state.means_est = next;
        state.iteration += 1;
        if moved < opts.tol {
            let g = sample_gradient(points, config.weights(), &state.means_est)?;
            records.push(error_record(
                state.iteration,
                &state.means_est,
                &reference,
                &matching,
                g.norm(),
            ));
            break TerminalStatus::Converged;
        }
    };
    Ok(Trajectory {
        records,
        status,
        matching,
        final_means: state.means_est,
        step_size: state.step_size,
    })
}

/// Empirical auxiliary objective `Q_n(eval | base)` on `points`: the
/// responsibility-weighted expected complete-data log likelihood, a function
/// of `eval` with responsibilities taken at `base`.
pub fn empirical_q(
    points: &Stacked,
    weights: &[f64],
    base: &Stacked,
    eval: &Stacked,
) -> Result<f64> {
    if base.rows() != eval.rows() || base.dim() != eval.dim() {
        return Err(Error::DimensionMismatch("base vs eval means".into()));
    }
    let m = base.rows();
    let d = base.dim() as f64;
    let n = points.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let ln_w = ln_weights(weights);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let total = exec::reduce_chunks(
        n,
        |range| {
            let mut acc = 0.0;
            let mut w = vec![0.0; m];
            for j in range {
                let x = points.row(j);
                resp_into(&ln_w, base, x, &mut w);
                for i in 0..m {
                    acc += w[i] * (-0.5 * dist2(x, eval.row(i)) - 0.5 * d * ln_2pi);
                }
            }
            acc
        },
        |a, b| a + b,
    )
    .expect("n >= 1");
    Ok(total / n as f64)
}

/// Step-size schedule for stochastic runs.
#[derive(Clone, Copy, Debug)]
pub enum StepSchedule {
    Constant(f64),
    /// `s_t = c / (t + 2)`.
    InverseT { c: f64 },
}

impl StepSchedule {
    fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(c) => c,
            StepSchedule::InverseT { c } => c / (t as f64 + 2.0),
        }
    }
}

/// `3 / (2 (pi_min - gamma_est))`, the classical decaying-schedule constant
/// with the gradient-stability estimate plugged in. Heuristic default; the
/// exact constant is not pinned down by theory.
pub fn inverse_t_schedule_constant(pi_min: f64, gamma_est: f64) -> Result<f64> {
    if !(pi_min > gamma_est && gamma_est >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "schedule needs 0 <= gamma_est < pi_min, got {gamma_est} vs {pi_min}"
        )));
    }
    Ok(1.5 / (pi_min - gamma_est))
}

/// Where stochastic batches come from.
#[derive(Clone, Copy, Debug)]
pub enum BatchSource<'a> {
    /// Fresh draws from the model each iteration.
    Model,
    /// Batches resampled from a fixed point set; batches at least as large as
    /// the set use the whole set unchanged.
    FixedSample { points: &'a Stacked },
}

/// Options for [`stochastic_em_run`].
#[derive(Clone, Debug)]
pub struct StochasticOptions {
    /// Radius of the per-component projection ball around the initial means.
    pub projection_radius: f64,
    pub batch: usize,
    pub max_iters: usize,
    pub schedule: StepSchedule,
    pub seed: u64,
    /// Record every k-th iteration (iteration 0 and the final state are
    /// always recorded).
    pub record_every: usize,
}

/// Project each row of `x` onto the ball of `radius` around the matching row
/// of `centers`. A point outside lands exactly on the boundary along its ray.
pub fn project_rows_into_balls(x: &mut Stacked, centers: &Stacked, radius: f64) {
    debug_assert_eq!(x.rows(), centers.rows());
    for i in 0..x.rows() {
        let c = centers.row(i);
        let row = x.row_mut(i);
        let d = dist2(row, c).sqrt();
        if d > radius {
            let scale = radius / d;
            for (v, &ck) in row.iter_mut().zip(c) {
                *v = ck + (*v - ck) * scale;
            }
        }
    }
}

/// Projected stochastic gradient EM: at iteration t, take a batch gradient
/// step with `schedule.at(t)` and project every component back into the ball
/// of `projection_radius` around its initial position.
pub fn stochastic_em_run(
    config: &MixtureConfig,
    source: BatchSource<'_>,
    init_means: &Stacked,
    opts: &StochasticOptions,
) -> Result<Trajectory> {
    check_means_shape(config, init_means)?;
    if !init_means.is_finite() {
        return Err(Error::NonFinite("initial means".into()));
    }
    if !(opts.projection_radius > 0.0) {
        return Err(Error::InvalidArgument("projection radius must be positive".into()));
    }
    if opts.batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    let record_every = opts.record_every.max(1);
    let matching = match_components(init_means, config.means())?;
    let reference = config.means();
    let d = config.dim();

    let mut means = init_means.clone();
    let mut records = Vec::new();
    let mut scratch = Stacked::zeros(opts.batch, d);
    let mut status = TerminalStatus::MaxIters;
    for t in 0..opts.max_iters {
        let batch_points: &Stacked = match source {
            BatchSource::Model => {
                let seed = rng::derive_seed(opts.seed, rng::domain::STOCHASTIC_BATCH, t as u64);
                scratch = config.sample(opts.batch, seed).into_points();
                &scratch
            }
            BatchSource::FixedSample { points } => {
                if opts.batch >= points.rows() {
                    points
                } else {
                    let mut r = rng::stream_rng(
                        rng::derive_seed(opts.seed, rng::domain::STOCHASTIC_BATCH, t as u64),
                        0,
                    );
                    for b in 0..opts.batch {
                        let j = rand::Rng::random_range(&mut r, 0..points.rows());
                        scratch.row_mut(b).copy_from_slice(points.row(j));
                    }
                    &scratch
                }
            }
        };
        let grad = sample_gradient(batch_points, config.weights(), &means)?;
        if !grad.is_finite() {
            records.push(error_record(t, &means, reference, &matching, f64::NAN));
            status = TerminalStatus::Diverged;
            break;
        }
        if t % record_every == 0 {
            records.push(error_record(t, &means, reference, &matching, grad.norm()));
        }
        means.add_scaled(&grad, opts.schedule.at(t))?;
        project_rows_into_balls(&mut means, init_means, opts.projection_radius);
        if !means.is_finite() || means.max_abs() > DIVERGENCE_GUARD {
            status = TerminalStatus::Diverged;
            break;
        }
    }
    records.push(error_record(opts.max_iters, &means, reference, &matching, f64::NAN));
    Ok(Trajectory { records, status, matching, final_means: means, step_size: opts.schedule.at(0) })
}

/// Each row of `truth` displaced by exactly `radius` in an independent
/// uniformly random direction. The standard in-region initializer.
pub fn init_means_at_radius(truth: &Stacked, radius: f64, seed: u64) -> Stacked {
    let mut out = truth.clone();
    for i in 0..out.rows() {
        let mut r = rng::stream_rng(rng::derive_seed(seed, rng::domain::INIT, i as u64), 0);
        let u = rng::unit_vector(&mut r, out.dim());
        let row = out.row_mut(i);
        for (v, uk) in row.iter_mut().zip(&u) {
            *v += radius * uk;
        }
    }
    out
}
