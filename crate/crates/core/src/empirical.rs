//! Monte-Carlo estimation of the empirical Rademacher complexity of the
//! gradient function class and of the sup gradient deviation over the
//! contraction region.
//!
//! Both quantities are suprema over the product-of-balls region
//! `A = prod_i B(mu_i^*, a)` of averages of
//! `f(x; mu, u) = w_c(x; mu) <x - mu_c, u>`. The sup is nonconcave, so it is
//! estimated from below by multistart projected gradient ascent with the
//! analytic gradient in `mu`, backtracking line search, and per-component
//! ball projection. Optimizer settings ride along in the result so
//! under-optimization is auditable.

use serde::Serialize;

use crate::mixture::{ln_weights, resp_into};
use crate::stacked::dot;
use crate::{exec, rng, stats, Error, MixtureConfig, Result, Stacked};

/// Settings and context of the sup optimizer, reported with every estimate.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizerMeta {
    pub multistarts: usize,
    pub max_ascent_iters: usize,
    pub region_radius: f64,
    /// Fixed direction, for the Rademacher functional.
    pub direction: Option<Vec<f64>>,
    /// Size of the direction net behind the covering surrogate, when used.
    pub covering_net: Option<usize>,
}

/// A sup-type Monte-Carlo estimate.
#[derive(Clone, Debug, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    /// Spread over replications (0 for single-shot estimates).
    pub std_err: f64,
    pub replications: usize,
    /// Monte-Carlo noise floor of the population reference, when one is
    /// involved; subtract in quadrature for scaling fits.
    pub noise_floor: Option<f64>,
    /// `2 max_j sup_mu <Delta(mu), u_j>` over a 1/2-net of directions.
    pub covering_surrogate: Option<f64>,
    pub meta: OptimizerMeta,
}

// ---------------------------------------------------------------------------
// Region and ascent machinery
// ---------------------------------------------------------------------------

struct BallRegion<'a> {
    centers: &'a Stacked,
    radius: f64,
}

impl BallRegion<'_> {
    fn project(&self, x: &mut Stacked) {
        crate::em::project_rows_into_balls(x, self.centers, self.radius);
    }
}

trait Objective: Sync {
    fn value(&self, mu: &Stacked) -> f64;
    /// Returns the value and writes the gradient.
    fn value_grad(&self, mu: &Stacked, grad: &mut Stacked) -> f64;
}

/// Projected gradient ascent with Armijo backtracking. Returns the best
/// iterate and its value.
fn projected_ascent<O: Objective>(
    region: &BallRegion<'_>,
    obj: &O,
    start: &Stacked,
    max_iters: usize,
) -> (f64, Stacked) {
    let mut x = start.clone();
    region.project(&mut x);
    let mut grad = Stacked::zeros(x.rows(), x.dim());
    let mut v = obj.value_grad(&x, &mut grad);
    let mut step = region.radius.max(1e-6);
    let mut stalled = 0u32;
    for _ in 0..max_iters {
        let mut s = step;
        let mut accepted = false;
        for _ in 0..24 {
            // Skip candidate evaluation once the trial step cannot move us.
            if s * grad.norm() < 1e-13 * (1.0 + x.norm()) {
                break;
            }
            let mut cand = x.clone();
            cand.add_scaled(&grad, s).expect("same shape");
            region.project(&mut cand);
            let delta = cand.sub(&x).expect("same shape");
            if delta.norm() < 1e-13 * (1.0 + x.norm()) {
                s *= 0.5;
                continue;
            }
            let gain = dot(grad.as_slice(), delta.as_slice());
            let cv = obj.value(&cand);
            if cv > v && cv >= v + 1e-4 * gain.max(0.0) {
                let improvement = cv - v;
                x = cand;
                v = obj.value_grad(&x, &mut grad);
                step = (s * 2.0).min(1e6);
                accepted = true;
                // Stop once gains fall below a tenth of a percent; the sup
                // feeds medians over seeds, not a high-precision optimum.
                stalled = if improvement <= 1e-3 * (1e-12 + v.abs()) { stalled + 1 } else { 0 };
                break;
            }
            s *= 0.5;
        }
        if !accepted || stalled >= 2 {
            break;
        }
    }
    (v, x)
}

/// Start layout: the component truth, region-boundary points, then random
/// interior points.
fn ascent_starts(region: &BallRegion<'_>, count: usize, seed: u64) -> Vec<Stacked> {
    let mut out = Vec::with_capacity(count.max(1));
    out.push(region.centers.clone());
    let boundary = (count.saturating_sub(1)) / 2;
    for k in 1..count {
        let mut r = rng::stream_rng(rng::derive_seed(seed, rng::domain::ASCENT_STARTS, k as u64), 0);
        let mut x = region.centers.clone();
        for i in 0..x.rows() {
            let u = rng::unit_vector(&mut r, x.dim());
            let scale = if k <= boundary {
                region.radius
            } else {
                region.radius * rand::Rng::random_range(&mut r, 0.0..1.0)
            };
            let row = x.row_mut(i);
            for (v, uk) in row.iter_mut().zip(&u) {
                *v += scale * uk;
            }
        }
        out.push(x);
    }
    out
}

// ---------------------------------------------------------------------------
// Shared kernels
// ---------------------------------------------------------------------------

/// Points with per-point coefficients `scale * signs[j]` (all `scale` when
/// `signs` is `None`).
#[derive(Clone, Copy)]
struct WeightedPoints<'a> {
    points: &'a Stacked,
    signs: Option<&'a [f64]>,
    scale: f64,
}

/// `sum_j alpha_j w_c(x_j; mu) <x_j - mu_c, u>` over all sets.
fn signed_proj_value(
    sets: &[WeightedPoints<'_>],
    ln_w: &[f64],
    means: &Stacked,
    comp: usize,
    u: &[f64],
) -> f64 {
    let m = means.rows();
    let mut total = 0.0;
    for set in sets {
        let part = exec::reduce_chunks(
            set.points.rows(),
            |range| {
                let mut acc = 0.0;
                let mut w = vec![0.0; m];
                let mu_c = means.row(comp);
                for j in range {
                    let x = set.points.row(j);
                    resp_into(ln_w, means, x, &mut w);
                    let t: f64 = x.iter().zip(mu_c).zip(u).map(|((xk, mk), uk)| (xk - mk) * uk).sum();
                    let alpha = set.signs.map_or(1.0, |s| s[j]);
                    acc += alpha * w[comp] * t;
                }
                acc
            },
            |a, b| a + b,
        )
        .unwrap_or(0.0);
        total += part * set.scale;
    }
    total
}

/// Value plus gradient in `mu` of [`signed_proj_value`]:
/// `d/d mu_k = sum_j alpha_j [ w_c (delta_{ck} - w_k) t_j (x_j - mu_k)
///                             - delta_{ck} w_c u ]`.
fn signed_proj_value_grad(
    sets: &[WeightedPoints<'_>],
    ln_w: &[f64],
    means: &Stacked,
    comp: usize,
    u: &[f64],
    grad: &mut Stacked,
) -> f64 {
    let m = means.rows();
    let d = means.dim();
    let mut total = 0.0;
    for g in grad.as_mut_slice() {
        *g = 0.0;
    }
    for set in sets {
        let (val, part_grad) = exec::reduce_chunks(
            set.points.rows(),
            |range| {
                let mut acc = 0.0;
                let mut g = vec![0.0; m * d];
                let mut w = vec![0.0; m];
                let mu_c = means.row(comp);
                for j in range {
                    let x = set.points.row(j);
                    resp_into(ln_w, means, x, &mut w);
                    let t: f64 =
                        x.iter().zip(mu_c).zip(u).map(|((xk, mk), uk)| (xk - mk) * uk).sum();
                    let alpha = set.signs.map_or(1.0, |s| s[j]);
                    let wc = w[comp];
                    acc += alpha * wc * t;
                    let awt = alpha * wc * t;
                    for k in 0..m {
                        let coef = if k == comp { awt * (1.0 - w[k]) } else { -awt * w[k] };
                        let mu_k = means.row(k);
                        let gk = &mut g[k * d..(k + 1) * d];
                        for (idx, (xk, mk)) in x.iter().zip(mu_k).enumerate() {
                            gk[idx] += coef * (xk - mk);
                        }
                    }
                    let gc = &mut g[comp * d..(comp + 1) * d];
                    let awc = alpha * wc;
                    for (gk, uk) in gc.iter_mut().zip(u) {
                        *gk -= awc * uk;
                    }
                }
                (acc, g)
            },
            |(va, mut ga), (vb, gb)| {
                for (a, b) in ga.iter_mut().zip(&gb) {
                    *a += b;
                }
                (va + vb, ga)
            },
        )
        .unwrap_or((0.0, vec![0.0; m * d]));
        total += val * set.scale;
        for (g, p) in grad.as_mut_slice().iter_mut().zip(&part_grad) {
            *g += set.scale * p;
        }
    }
    total
}

/// `Delta(mu) = sum_j alpha_j w_c(x_j; mu) (x_j - mu_c)` over all sets.
fn deviation_vector(
    sets: &[WeightedPoints<'_>],
    ln_w: &[f64],
    means: &Stacked,
    comp: usize,
) -> Vec<f64> {
    let m = means.rows();
    let d = means.dim();
    let mut total = vec![0.0; d];
    for set in sets {
        let part = exec::reduce_chunks(
            set.points.rows(),
            |range| {
                let mut acc = vec![0.0; d];
                let mut w = vec![0.0; m];
                let mu_c = means.row(comp);
                for j in range {
                    let x = set.points.row(j);
                    resp_into(ln_w, means, x, &mut w);
                    let alpha = set.signs.map_or(1.0, |s| s[j]);
                    let awc = alpha * w[comp];
                    for (k, (xk, mk)) in x.iter().zip(mu_c).enumerate() {
                        acc[k] += awc * (xk - mk);
                    }
                }
                acc
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        )
        .unwrap_or(vec![0.0; d]);
        for (t, p) in total.iter_mut().zip(&part) {
            *t += set.scale * p;
        }
    }
    total
}

/// |signed average| for one draw of Rademacher signs and a fixed direction.
struct AbsSignedAverage<'a> {
    sets: [WeightedPoints<'a>; 1],
    ln_w: &'a [f64],
    comp: usize,
    u: &'a [f64],
}

impl Objective for AbsSignedAverage<'_> {
    fn value(&self, mu: &Stacked) -> f64 {
        signed_proj_value(&self.sets, self.ln_w, mu, self.comp, self.u).abs()
    }

    fn value_grad(&self, mu: &Stacked, grad: &mut Stacked) -> f64 {
        let v = signed_proj_value_grad(&self.sets, self.ln_w, mu, self.comp, self.u, grad);
        if v < 0.0 {
            for g in grad.as_mut_slice() {
                *g = -*g;
            }
        }
        v.abs()
    }
}

/// `||Delta(mu)||`; the gradient uses the exact norm derivative through the
/// normalized deviation direction.
struct DeviationNorm<'a> {
    sets: [WeightedPoints<'a>; 2],
    ln_w: &'a [f64],
    comp: usize,
}

impl Objective for DeviationNorm<'_> {
    fn value(&self, mu: &Stacked) -> f64 {
        let delta = deviation_vector(&self.sets, self.ln_w, mu, self.comp);
        delta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn value_grad(&self, mu: &Stacked, grad: &mut Stacked) -> f64 {
        let delta = deviation_vector(&self.sets, self.ln_w, mu, self.comp);
        let n = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-300 {
            for g in grad.as_mut_slice() {
                *g = 0.0;
            }
            return 0.0;
        }
        let u: Vec<f64> = delta.iter().map(|v| v / n).collect();
        signed_proj_value_grad(&self.sets, self.ln_w, mu, self.comp, &u, grad)
    }
}

/// `<Delta(mu), u>` for a fixed direction, for the covering surrogate.
struct DirectionalDeviation<'a> {
    sets: [WeightedPoints<'a>; 2],
    ln_w: &'a [f64],
    comp: usize,
    u: &'a [f64],
}

impl Objective for DirectionalDeviation<'_> {
    fn value(&self, mu: &Stacked) -> f64 {
        signed_proj_value(&self.sets, self.ln_w, mu, self.comp, self.u)
    }

    fn value_grad(&self, mu: &Stacked, grad: &mut Stacked) -> f64 {
        signed_proj_value_grad(&self.sets, self.ln_w, mu, self.comp, self.u, grad)
    }
}

// ---------------------------------------------------------------------------
// Rademacher complexity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RademacherOptions {
    pub multistarts: usize,
    /// Fresh sign draws averaged into the estimate.
    pub replications: usize,
    pub max_ascent_iters: usize,
    pub seed: u64,
}

impl Default for RademacherOptions {
    fn default() -> Self {
        Self { multistarts: 16, replications: 8, max_ascent_iters: 200, seed: 0 }
    }
}

/// Empirical Rademacher complexity of the class
/// `{ x -> w_c(x; mu) <x - mu_c, u> : mu in A }` on the given points, for one
/// direction `u`: per replication, fresh signs and
/// `sup_{mu in A} |(1/n) sum_j eps_j f(x_j; mu, u)|` by multistart ascent;
/// the estimate is the replication mean.
pub fn empirical_rademacher(
    points: &Stacked,
    config: &MixtureConfig,
    region_radius: f64,
    component: usize,
    direction: &[f64],
    opts: &RademacherOptions,
) -> Result<SupEstimate> {
    validate_region_inputs(points, config, region_radius, component)?;
    if direction.len() != config.dim() {
        return Err(Error::DimensionMismatch("direction dimension".into()));
    }
    let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (dn - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |u| = {dn}")));
    }
    if opts.replications == 0 || opts.multistarts == 0 {
        return Err(Error::InvalidArgument("need at least one replication and start".into()));
    }
    let n = points.rows();
    let ln_w = ln_weights(config.weights());
    let region = BallRegion { centers: config.means(), radius: region_radius };

    let signs: Vec<Vec<f64>> = (0..opts.replications)
        .map(|rep| {
            let mut r = rng::stream_rng(
                rng::derive_seed(opts.seed, rng::domain::RADEMACHER_SIGNS, rep as u64),
                0,
            );
            (0..n).map(|_| if rand::Rng::random::<bool>(&mut r) { 1.0 } else { -1.0 }).collect()
        })
        .collect();
    let starts: Vec<Vec<Stacked>> = (0..opts.replications)
        .map(|rep| {
            ascent_starts(
                &region,
                opts.multistarts,
                rng::derive_seed(opts.seed, rng::domain::ASCENT_STARTS, rep as u64),
            )
        })
        .collect();

    let ms = opts.multistarts;
    let vals = exec::map_collect(opts.replications * ms, |idx| {
        let rep = idx / ms;
        let start = idx % ms;
        let obj = AbsSignedAverage {
            sets: [WeightedPoints { points, signs: Some(&signs[rep]), scale: 1.0 / n as f64 }],
            ln_w: &ln_w,
            comp: component,
            u: direction,
        };
        projected_ascent(&region, &obj, &starts[rep][start], opts.max_ascent_iters).0
    });
    let rep_vals: Vec<f64> = (0..opts.replications)
        .map(|rep| vals[rep * ms..(rep + 1) * ms].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let value = stats::mean(&rep_vals);
    let std_err = stats::sd(&rep_vals) / (opts.replications as f64).sqrt();
    Ok(SupEstimate {
        value,
        std_err,
        replications: opts.replications,
        noise_floor: None,
        covering_surrogate: None,
        meta: OptimizerMeta {
            multistarts: ms,
            max_ascent_iters: opts.max_ascent_iters,
            region_radius,
            direction: Some(direction.to_vec()),
            covering_net: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Sup gradient deviation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DeviationOptions {
    pub multistarts: usize,
    pub max_ascent_iters: usize,
    /// Size of the independent mega-sample standing in for the population
    /// gradient.
    pub mega_samples: usize,
    /// Also compute the direction-net surrogate (d <= 4 only).
    pub covering_check: bool,
    pub seed: u64,
}

impl Default for DeviationOptions {
    fn default() -> Self {
        Self { multistarts: 16, max_ascent_iters: 200, mega_samples: 1_000_000, covering_check: false, seed: 0 }
    }
}

/// `sup_{mu in A} ||G^(c)(mu) - G_n^(c)(mu)||` with the population side
/// estimated on a fresh mega-sample drawn from the model.
pub fn sup_gradient_deviation(
    points: &Stacked,
    config: &MixtureConfig,
    region_radius: f64,
    component: usize,
    opts: &DeviationOptions,
) -> Result<SupEstimate> {
    let mega = config
        .sample(opts.mega_samples, rng::derive_seed(opts.seed, rng::domain::DEVIATION_MEGA, 0))
        .into_points();
    sup_gradient_deviation_against(points, config, &mega, region_radius, component, opts)
}

/// [`sup_gradient_deviation`] against an explicit population mega-sample
/// (reused across calls for common-random-number comparisons).
pub fn sup_gradient_deviation_against(
    points: &Stacked,
    config: &MixtureConfig,
    mega: &Stacked,
    region_radius: f64,
    component: usize,
    opts: &DeviationOptions,
) -> Result<SupEstimate> {
    validate_region_inputs(points, config, region_radius, component)?;
    if mega.dim() != config.dim() || mega.rows() == 0 {
        return Err(Error::DimensionMismatch("mega-sample shape".into()));
    }
    if opts.multistarts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    let ln_w = ln_weights(config.weights());
    let region = BallRegion { centers: config.means(), radius: region_radius };
    let sets = [
        WeightedPoints { points: mega, signs: None, scale: 1.0 / mega.rows() as f64 },
        WeightedPoints { points, signs: None, scale: -1.0 / points.rows() as f64 },
    ];
    let starts = ascent_starts(
        &region,
        opts.multistarts,
        rng::derive_seed(opts.seed, rng::domain::ASCENT_STARTS, 0),
    );
    let results = exec::map_collect(starts.len(), |s| {
        let obj = DeviationNorm { sets, ln_w: &ln_w, comp: component };
        projected_ascent(&region, &obj, &starts[s], opts.max_ascent_iters)
    });
    let mut best_val = f64::NEG_INFINITY;
    let mut best_mu = config.means().clone();
    for (v, mu) in &results {
        if *v > best_val {
            best_val = *v;
            best_mu = mu.clone();
        }
    }
    let noise_floor = population_noise_floor(mega, &ln_w, &best_mu, component);

    let covering_surrogate = if opts.covering_check && config.dim() <= 4 {
        let net = direction_net(config.dim(), rng::derive_seed(opts.seed, rng::domain::DIRECTION_NET, 0));
        let dir_vals = exec::map_collect(net.len() * starts.len(), |idx| {
            let dir = idx / starts.len();
            let start = idx % starts.len();
            let obj = DirectionalDeviation { sets, ln_w: &ln_w, comp: component, u: &net[dir] };
            projected_ascent(&region, &obj, &starts[start], opts.max_ascent_iters).0
        });
        let best_dir = net
            .iter()
            .enumerate()
            .map(|(dir, _)| {
                dir_vals[dir * starts.len()..(dir + 1) * starts.len()]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Some(2.0 * best_dir)
    } else {
        None
    };
    let net_len = covering_surrogate.map(|_| direction_net_len(config.dim()));
    Ok(SupEstimate {
        value: best_val,
        std_err: 0.0,
        replications: 1,
        noise_floor: Some(noise_floor),
        covering_surrogate,
        meta: OptimizerMeta {
            multistarts: opts.multistarts,
            max_ascent_iters: opts.max_ascent_iters,
            region_radius,
            direction: None,
            covering_net: net_len,
        },
    })
}

/// Monte-Carlo standard error of the mega-sample gradient component at `mu`:
/// sqrt of the covariance trace of `w_c(y)(y - mu_c)` over the draw size.
fn population_noise_floor(mega: &Stacked, ln_w: &[f64], mu: &Stacked, comp: usize) -> f64 {
    let m = mu.rows();
    let d = mu.dim();
    let n = mega.rows();
    let (sum, sumsq) = exec::reduce_chunks(
        n,
        |range| {
            let mut s = vec![0.0; d];
            let mut sq = vec![0.0; d];
            let mut w = vec![0.0; m];
            let mu_c = mu.row(comp);
            for j in range {
                let x = mega.row(j);
                resp_into(ln_w, mu, x, &mut w);
                for (k, (xk, mk)) in x.iter().zip(mu_c).enumerate() {
                    let v = w[comp] * (xk - mk);
                    s[k] += v;
                    sq[k] += v * v;
                }
            }
            (s, sq)
        },
        |(mut sa, mut qa), (sb, qb)| {
            for (a, b) in sa.iter_mut().zip(&sb) {
                *a += b;
            }
            for (a, b) in qa.iter_mut().zip(&qb) {
                *a += b;
            }
            (sa, qa)
        },
    )
    .expect("mega is non-empty");
    let nf = n as f64;
    let trace: f64 = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, sq)| {
            let mean = s / nf;
            (sq / nf - mean * mean).max(0.0)
        })
        .sum();
    (trace / nf).sqrt()
}

fn direction_net_len(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 13,
        3 => 60,
        _ => 700,
    }
}

/// Deterministic 1/2-net of the unit sphere for small d. For d = 1 and 2 the
/// covering radius is exact by construction; for d = 3 and 4 the sizes stay
/// under e^{2d} and give measured covering radii well below 1/2.
fn direction_net(d: usize, seed: u64) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..13)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 13.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci sphere.
            let n = 60;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        4 => {
            let mut rng = rng::stream_rng(seed, 0);
            (0..700).map(|_| rng::unit_vector(&mut rng, 4)).collect()
        }
        _ => panic!("direction net only built for d <= 4"),
    }
}

fn validate_region_inputs(
    points: &Stacked,
    config: &MixtureConfig,
    region_radius: f64,
    component: usize,
) -> Result<()> {
    if points.dim() != config.dim() {
        return Err(Error::DimensionMismatch("points vs model dimension".into()));
    }
    if points.rows() == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    if component >= config.components() {
        return Err(Error::InvalidArgument(format!("component {component} out of range")));
    }
    if !(region_radius.is_finite() && region_radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad region radius {region_radius}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scaling study
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingQuantity {
    Rademacher,
    Deviation,
    /// Returns 1.0 regardless of the data; calibrates the harness (fitted
    /// slope must be 0).
    Constant,
}

impl ScalingQuantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingQuantity::Rademacher => "rademacher",
            ScalingQuantity::Deviation => "deviation",
            ScalingQuantity::Constant => "constant",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalingOptions {
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    /// Independent sample draws per cell; cells report the median over them.
    pub seeds: usize,
    /// Region radius as a fraction of the model's R_min.
    pub region_radius_frac: f64,
    pub component: usize,
    pub multistarts: usize,
    pub replications: usize,
    pub max_ascent_iters: usize,
    pub mega_samples: usize,
    pub seed: u64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            n_grid: vec![2000, 8000, 32000],
            d_grid: vec![2, 4, 8],
            seeds: 20,
            region_radius_frac: 0.2,
            component: 0,
            multistarts: 8,
            replications: 4,
            max_ascent_iters: 120,
            mega_samples: 400_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    N,
    D,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingCell {
    pub n: usize,
    pub d: usize,
    pub median: f64,
    pub iqr: f64,
    pub sweep: Sweep,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingTable {
    pub quantity: ScalingQuantity,
    pub cells: Vec<ScalingCell>,
    /// Log-log slope of the n-sweep medians against n.
    pub n_slope: f64,
}

impl ScalingTable {
    pub fn n_sweep(&self) -> Vec<&ScalingCell> {
        self.cells.iter().filter(|c| c.sweep == Sweep::N).collect()
    }

    pub fn d_sweep(&self) -> Vec<&ScalingCell> {
        self.cells.iter().filter(|c| c.sweep == Sweep::D).collect()
    }

    /// CSV columns `quantity,n,d,median,iqr,slope_fit`; the slope value is
    /// carried on n-sweep rows and NaN elsewhere.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "quantity,n,d,median,iqr,slope_fit")?;
        for c in &self.cells {
            let slope = if c.sweep == Sweep::N { self.n_slope } else { f64::NAN };
            writeln!(w, "{},{},{},{},{},{}", self.quantity.as_str(), c.n, c.d, c.median, c.iqr, slope)?;
        }
        Ok(())
    }
}

fn cell_tag(kind: u64, n: usize, d: usize, s: usize) -> u64 {
    (kind << 56) | ((n as u64 & 0xffff_ffff) << 24) | ((d as u64 & 0xffff) << 8) | (s as u64 & 0xff)
}

/// Median scaling of a sup estimate over an n-sweep (at the first d) and a
/// d-sweep (at the first n). `family(d)` builds the model at dimension d;
/// both grids need at least 3 entries.
pub fn scaling_study<F>(
    family: F,
    quantity: ScalingQuantity,
    opts: &ScalingOptions,
) -> Result<ScalingTable>
where
    F: Fn(usize) -> Result<MixtureConfig>,
{
    if opts.n_grid.len() < 3 || opts.d_grid.len() < 3 {
        return Err(Error::InvalidArgument("scaling grids need at least 3 entries per axis".into()));
    }
    if opts.seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let d0 = opts.d_grid[0];
    let n0 = opts.n_grid[0];
    let mut layout: Vec<(usize, usize, Sweep)> =
        opts.n_grid.iter().map(|&n| (n, d0, Sweep::N)).collect();
    layout.extend(opts.d_grid.iter().map(|&d| (n0, d, Sweep::D)));

    let mut cells = Vec::with_capacity(layout.len());
    for (n, d, sweep) in layout {
        let values = if quantity == ScalingQuantity::Constant {
            vec![1.0; opts.seeds]
        } else {
            let config = family(d)?;
            let stats_ = config.separation_stats()?;
            let radius = opts.region_radius_frac * stats_.r_min;
            let mega = if quantity == ScalingQuantity::Deviation {
                Some(config.sample(
                    opts.mega_samples,
                    rng::derive_seed(opts.seed, rng::domain::DEVIATION_MEGA, cell_tag(1, n, d, 0)),
                ))
            } else {
                None
            };
            let mut direction = vec![0.0; d];
            direction[0] = 1.0;
            let mut vals = Vec::with_capacity(opts.seeds);
            for s in 0..opts.seeds {
                let points_seed =
                    rng::derive_seed(opts.seed, rng::domain::SCALING, cell_tag(2, n, d, s));
                let est_seed =
                    rng::derive_seed(opts.seed, rng::domain::SCALING, cell_tag(3, n, d, s));
                let sample = config.sample(n, points_seed);
                let v = match quantity {
                    ScalingQuantity::Rademacher => {
                        empirical_rademacher(
                            sample.points(),
                            &config,
                            radius,
                            opts.component,
                            &direction,
                            &RademacherOptions {
                                multistarts: opts.multistarts,
                                replications: opts.replications,
                                max_ascent_iters: opts.max_ascent_iters,
                                seed: est_seed,
                            },
                        )?
                        .value
                    }
                    ScalingQuantity::Deviation => {
                        let est = sup_gradient_deviation_against(
                            sample.points(),
                            &config,
                            mega.as_ref().expect("mega present").points(),
                            radius,
                            opts.component,
                            &DeviationOptions {
                                multistarts: opts.multistarts,
                                max_ascent_iters: opts.max_ascent_iters,
                                mega_samples: opts.mega_samples,
                                covering_check: false,
                                seed: est_seed,
                            },
                        )?;
                        // Remove the reference sample's own noise in quadrature.
                        let floor = est.noise_floor.unwrap_or(0.0);
                        (est.value * est.value - floor * floor).max(0.0).sqrt()
                    }
                    ScalingQuantity::Constant => unreachable!(),
                };
                vals.push(v);
            }
            vals
        };
        cells.push(ScalingCell {
            n,
            d,
            median: stats::median(&values),
            iqr: stats::iqr(&values),
            sweep,
        });
    }
    let ns: Vec<f64> = cells.iter().filter(|c| c.sweep == Sweep::N).map(|c| c.n as f64).collect();
    let meds: Vec<f64> =
        cells.iter().filter(|c| c.sweep == Sweep::N).map(|c| c.median).collect();
    let n_slope = stats::log_log_slope(&ns, &meds);
    Ok(ScalingTable { quantity, cells, n_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::arc_layout;
    use approx::assert_relative_eq;

    fn small_config() -> MixtureConfig {
        arc_layout(3, 2, 5.0, 1.5, &[1.0 / 3.0; 3]).unwrap()
    }

    #[test]
    fn signed_projection_gradient_matches_finite_differences() {
        let cfg = small_config();
        let pts = cfg.sample(200, 3);
        let n = pts.points().rows();
        let mut r = rng::stream_rng(9, 0);
        let signs: Vec<f64> =
            (0..n).map(|_| if rand::Rng::random::<bool>(&mut r) { 1.0 } else { -1.0 }).collect();
        let ln_w = ln_weights(cfg.weights());
        let u = [0.6, 0.8];
        let sets = [WeightedPoints { points: pts.points(), signs: Some(&signs), scale: 1.0 / n as f64 }];
        let mut mu = cfg.means().clone();
        for (i, v) in mu.as_mut_slice().iter_mut().enumerate() {
            *v += 0.1 * (i as f64 + 1.0) / 7.0;
        }
        let mut grad = Stacked::zeros(mu.rows(), mu.dim());
        let base = signed_proj_value_grad(&sets, &ln_w, &mu, 0, &u, &mut grad);
        assert_relative_eq!(base, signed_proj_value(&sets, &ln_w, &mu, 0, &u), epsilon = 1e-12);
        let h = 1e-6;
        for idx in 0..mu.rows() * mu.dim() {
            let mut hi = mu.clone();
            hi.as_mut_slice()[idx] += h;
            let mut lo = mu.clone();
            lo.as_mut_slice()[idx] -= h;
            let fd = (signed_proj_value(&sets, &ln_w, &hi, 0, &u)
                - signed_proj_value(&sets, &ln_w, &lo, 0, &u))
                / (2.0 * h);
            let g = grad.as_slice()[idx];
            assert!(
                (fd - g).abs() <= 1e-5 * (1.0 + g.abs()),
                "coordinate {idx}: fd {fd} vs analytic {g}"
            );
        }
    }

    #[test]
    fn deviation_norm_gradient_matches_finite_differences() {
        let cfg = small_config();
        let mega = cfg.sample(500, 4);
        let pts = cfg.sample(120, 5);
        let ln_w = ln_weights(cfg.weights());
        let sets = [
            WeightedPoints { points: mega.points(), signs: None, scale: 1.0 / 500.0 },
            WeightedPoints { points: pts.points(), signs: None, scale: -1.0 / 120.0 },
        ];
        let obj = DeviationNorm { sets, ln_w: &ln_w, comp: 1 };
        let mut mu = cfg.means().clone();
        for (i, v) in mu.as_mut_slice().iter_mut().enumerate() {
            *v += 0.05 * ((i % 3) as f64 - 1.0);
        }
        let mut grad = Stacked::zeros(mu.rows(), mu.dim());
        let v0 = obj.value_grad(&mu, &mut grad);
        assert_relative_eq!(v0, obj.value(&mu), epsilon = 1e-12);
        let h = 1e-6;
        for idx in 0..mu.rows() * mu.dim() {
            let mut hi = mu.clone();
            hi.as_mut_slice()[idx] += h;
            let mut lo = mu.clone();
            lo.as_mut_slice()[idx] -= h;
            let fd = (obj.value(&hi) - obj.value(&lo)) / (2.0 * h);
            let g = grad.as_slice()[idx];
            assert!(
                (fd - g).abs() <= 1e-4 * (1.0 + g.abs()),
                "coordinate {idx}: fd {fd} vs analytic {g}"
            );
        }
    }

    #[test]
    fn degenerate_region_single_point_single_sample() {
        // n = 1, M = 1, a = 0: the estimate is exactly |<x - mu, u>|.
        let cfg = MixtureConfig::from_rows(vec![1.0], &[vec![1.0, -2.0]]).unwrap();
        let s = cfg.sample(1, 77);
        let x = s.points().row(0).to_vec();
        let u = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let est = empirical_rademacher(
            s.points(),
            &cfg,
            0.0,
            0,
            &u,
            &RademacherOptions { multistarts: 3, replications: 5, max_ascent_iters: 50, seed: 1 },
        )
        .unwrap();
        let expected = ((x[0] - 1.0) * u[0] + (x[1] + 2.0) * u[1]).abs();
        assert_relative_eq!(est.value, expected, epsilon = 1e-12);
        assert_relative_eq!(est.std_err, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rademacher_nondecreasing_in_region_radius() {
        let cfg = small_config();
        let s = cfg.sample(400, 11);
        let u = [1.0, 0.0];
        let opts = RademacherOptions { multistarts: 6, replications: 4, max_ascent_iters: 80, seed: 2 };
        let small = empirical_rademacher(s.points(), &cfg, 0.5, 0, &u, &opts).unwrap();
        let large = empirical_rademacher(s.points(), &cfg, 1.0, 0, &u, &opts).unwrap();
        assert!(large.value >= small.value - 1e-12, "{} < {}", large.value, small.value);
    }

    #[test]
    fn multistart_doubling_is_stable() {
        let cfg = small_config();
        let s = cfg.sample(600, 13);
        let u = [0.0, 1.0];
        let base = empirical_rademacher(
            s.points(),
            &cfg,
            1.0,
            0,
            &u,
            &RademacherOptions { multistarts: 8, replications: 4, max_ascent_iters: 120, seed: 3 },
        )
        .unwrap();
        let doubled = empirical_rademacher(
            s.points(),
            &cfg,
            1.0,
            0,
            &u,
            &RademacherOptions { multistarts: 16, replications: 4, max_ascent_iters: 120, seed: 3 },
        )
        .unwrap();
        let rel = (doubled.value - base.value).abs() / base.value.max(1e-12);
        assert!(rel < 0.05, "doubling multistarts moved the estimate by {rel}");
    }

    #[test]
    fn deviation_zero_when_sample_is_the_reference() {
        let cfg = small_config();
        let s = cfg.sample(2000, 21);
        let est = sup_gradient_deviation_against(
            s.points(),
            &cfg,
            s.points(),
            1.0,
            0,
            &DeviationOptions { multistarts: 4, max_ascent_iters: 40, mega_samples: 0, covering_check: false, seed: 4 },
        )
        .unwrap();
        assert!(est.value.abs() < 1e-12, "deviation {} on identical measures", est.value);
    }

    #[test]
    fn deviation_below_covering_surrogate() {
        let cfg = small_config();
        let mega = cfg.sample(20_000, 31);
        let opts = DeviationOptions {
            multistarts: 4,
            max_ascent_iters: 60,
            mega_samples: 0,
            covering_check: true,
            seed: 5,
        };
        for seed in 0..5u64 {
            let s = cfg.sample(500, 100 + seed);
            let est = sup_gradient_deviation_against(s.points(), &cfg, mega.points(), 1.0, 0, &opts)
                .unwrap();
            let surrogate = est.covering_surrogate.expect("d = 2 surrogate");
            assert!(
                est.value <= surrogate + 1e-9,
                "seed {seed}: direct {} above surrogate {surrogate}",
                est.value
            );
        }
    }

    #[test]
    fn direction_nets_cover() {
        // Probe the covering radius numerically.
        for d in [1usize, 2, 3] {
            let net = direction_net(d, 9);
            assert!(net.len() <= (2.0 * d as f64).exp().ceil() as usize);
            let mut rng = rng::stream_rng(55, d as u64);
            for _ in 0..2000 {
                let v = rng::unit_vector(&mut rng, d);
                let mind = net
                    .iter()
                    .map(|u| {
                        v.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(mind <= 0.5 + 1e-9, "d = {d}: covering radius {mind}");
            }
        }
    }

    #[test]
    fn sign_symmetry_of_direction() {
        // Estimates at u and -u are identically distributed; compare two
        // replication sets with a rank-sum test at the 1% level.
        let cfg = small_config();
        let opts = RademacherOptions { multistarts: 4, replications: 1, max_ascent_iters: 60, seed: 0 };
        let mut at_u = Vec::new();
        let mut at_neg = Vec::new();
        for k in 0..20u64 {
            let s = cfg.sample(300, 500 + k);
            let mut o = opts.clone();
            o.seed = 1000 + k;
            at_u.push(empirical_rademacher(s.points(), &cfg, 1.0, 0, &[1.0, 0.0], &o).unwrap().value);
            let s2 = cfg.sample(300, 900 + k);
            o.seed = 2000 + k;
            at_neg
                .push(empirical_rademacher(s2.points(), &cfg, 1.0, 0, &[-1.0, 0.0], &o).unwrap().value);
        }
        // Mann-Whitney U with the normal approximation.
        let n1 = at_u.len() as f64;
        let n2 = at_neg.len() as f64;
        let mut rank_sum = 0.0;
        for a in &at_u {
            for b in &at_neg {
                if a > b {
                    rank_sum += 1.0;
                } else if a == b {
                    rank_sum += 0.5;
                }
            }
        }
        let mean = n1 * n2 / 2.0;
        let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
        let z = (rank_sum - mean) / sd;
        assert!(z.abs() < 2.576, "rank-sum z = {z} rejects sign symmetry at 1%");
    }

    #[test]
    fn constant_probe_has_zero_slope() {
        let table = scaling_study(
            |d| arc_layout(3, d, 5.0, 1.5, &[1.0 / 3.0; 3]),
            ScalingQuantity::Constant,
            &ScalingOptions {
                n_grid: vec![100, 200, 400],
                d_grid: vec![2, 3, 4],
                seeds: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(table.n_slope.abs() < 0.05, "constant slope {}", table.n_slope);
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("quantity,n,d,median,iqr,slope_fit"));
        assert_eq!(text.lines().count(), 1 + 6);
    }

    #[test]
    fn scaling_grids_validated() {
        let err = scaling_study(
            |d| arc_layout(3, d, 5.0, 1.5, &[1.0 / 3.0; 3]),
            ScalingQuantity::Constant,
            &ScalingOptions { n_grid: vec![100, 200], d_grid: vec![2, 3, 4], ..Default::default() },
        );
        assert!(err.is_err());
    }
}
