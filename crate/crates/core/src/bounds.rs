//! Closed-form convergence certificates and an empirical gradient-stability
//! verifier.
//!
//! The central quantity is the gradient-stability constant
//!
//! ```text
//! gamma(a) = M^2 (2k + 4) (2 R_max + d0)^2 exp(-(R_min/2 - a)^2 sqrt(d0) / 8)
//! ```
//!
//! valid for per-component radii `a < R_min / 2` with `d0 = min(d, M)` and
//! `k = pi_max / pi_min`. When `gamma < pi_min` the iteration contracts with
//! factor `zeta = (pi_max - pi_min + 2 gamma) / (pi_max + pi_min) < 1` at the
//! default step size.

use serde::Serialize;

use crate::em::{oracle_gradient_q, sample_gradient_with_stderr};
use crate::{exec, rng, Error, MixtureConfig, Result, SeparationStats, Stacked};

/// Contraction factor, or the flag that no contraction is certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaRate {
    Contractive(f64),
    NotContractive,
}

impl ZetaRate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            ZetaRate::Contractive(z) => Some(z),
            ZetaRate::NotContractive => None,
        }
    }

    pub fn is_contractive(&self) -> bool {
        matches!(self, ZetaRate::Contractive(_))
    }
}

/// `gamma(a)` as displayed above. Errors outside `0 <= a < R_min / 2`.
pub fn gamma_gs(stats: &SeparationStats, m: usize, radius_a: f64) -> Result<f64> {
    if !(radius_a.is_finite() && radius_a >= 0.0 && radius_a < stats.r_min / 2.0) {
        return Err(Error::OutsideAdmissibleRadius);
    }
    let d0 = stats.d0 as f64;
    let mf = m as f64;
    let base = mf * mf * (2.0 * stats.kappa + 4.0) * (2.0 * stats.r_max + d0).powi(2);
    Ok(base * (-(stats.r_min / 2.0 - radius_a).powi(2) * d0.sqrt() / 8.0).exp())
}

/// `(pi_max - pi_min + 2 gamma) / (pi_max + pi_min)` when `gamma < pi_min`;
/// `NotContractive` otherwise (a tie at `gamma == pi_min` is not contractive).
pub fn zeta_rate(pi_min: f64, pi_max: f64, gamma: f64) -> Result<ZetaRate> {
    if !(pi_min.is_finite() && pi_max.is_finite() && 0.0 < pi_min && pi_min <= pi_max && pi_max <= 1.0)
    {
        return Err(Error::InvalidArgument(format!("invalid weights {pi_min}, {pi_max}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid gamma {gamma}")));
    }
    if gamma >= pi_min {
        return Ok(ZetaRate::NotContractive);
    }
    Ok(ZetaRate::Contractive((pi_max - pi_min + 2.0 * gamma) / (pi_max + pi_min)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadiusMode {
    /// The explicit closed form
    /// `R_min/2 - sqrt(d0) max(4 sqrt(2 [ln(R_min/4)]_+), 8 sqrt(3))`.
    Explicit,
    /// The largest radius in `[0, R_min/2)` with `gamma(a) < pi_min`, located
    /// by bisection to 1e-10.
    Solved,
}

/// Contraction radius certificate. Errors with
/// [`Error::SeparationTooSmall`] when no positive admissible radius exists.
pub fn contraction_radius(
    stats: &SeparationStats,
    m: usize,
    pi_min: f64,
    mode: RadiusMode,
) -> Result<f64> {
    if !(pi_min > 0.0 && pi_min <= 1.0) {
        return Err(Error::InvalidArgument(format!("invalid pi_min {pi_min}")));
    }
    match mode {
        RadiusMode::Explicit => {
            let log_clamp = (stats.r_min / 4.0).ln().max(0.0);
            let inner = (4.0 * (2.0 * log_clamp).sqrt()).max(8.0 * 3f64.sqrt());
            let a = stats.r_min / 2.0 - (stats.d0 as f64).sqrt() * inner;
            if a > 0.0 {
                Ok(a)
            } else {
                Err(Error::SeparationTooSmall)
            }
        }
        RadiusMode::Solved => {
            if gamma_gs(stats, m, 0.0)? >= pi_min {
                return Err(Error::SeparationTooSmall);
            }
            // gamma is increasing in a and exceeds pi_min at the cap (its
            // prefactor is at least 6), so the boundary lies inside.
            let mut lo = 0.0;
            let mut hi = stats.r_min / 2.0 * (1.0 - 1e-12);
            if gamma_gs(stats, m, hi)? < pi_min {
                return Ok(hi);
            }
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if gamma_gs(stats, m, mid)? < pi_min {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo > 0.0 {
                Ok(lo)
            } else {
                Err(Error::SeparationTooSmall)
            }
        }
    }
}

/// The big-O radius shape `R_min/2 - c_a sqrt(d0 ln(max(M^2 k / pi_min,
/// R_max, d0)))`, with the unspecified constant exposed as `c_a`. Reported
/// alongside the explicit form; may be negative.
pub fn radius_big_o_shape(stats: &SeparationStats, m: usize, pi_min: f64, c_a: f64) -> f64 {
    let d0 = stats.d0 as f64;
    let arg = (m as f64 * m as f64 * stats.kappa / pi_min).max(stats.r_max).max(d0);
    stats.r_min / 2.0 - c_a * (d0 * arg.ln().max(0.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode {
    /// `c max(M^3 (1+R_max)^3 sqrt(d) max(1, ln k) / sqrt(n),
    ///        (1+R_max) d ln(n)^{5/2} / sqrt(n))`,
    /// the union-bound route with its log factors instantiated.
    Original,
    /// `c M^{3/2} (1+3 R_max)^3 max(1, ln k) sqrt(d ln(n) / n)`,
    /// the martingale route.
    Improved,
}

/// Uniform sample-deviation bound shape, scaled by the user-supplied
/// constant. Needs `n >= 2`.
pub fn eps_unif(
    stats: &SeparationStats,
    m: usize,
    d: usize,
    n: usize,
    constant_c: f64,
    mode: EpsMode,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
    }
    if !(constant_c > 0.0 && constant_c.is_finite()) {
        return Err(Error::InvalidArgument(format!("constant must be positive, got {constant_c}")));
    }
    let mf = m as f64;
    let df = d as f64;
    let nf = n as f64;
    let log_k = stats.kappa.ln().max(1.0);
    let v = match mode {
        EpsMode::Original => {
            let rademacher = mf.powi(3) * (1.0 + stats.r_max).powi(3) * df.sqrt() * log_k / nf.sqrt();
            let mcdiarmid = (1.0 + stats.r_max) * df * nf.ln().powf(2.5) / nf.sqrt();
            rademacher.max(mcdiarmid)
        }
        EpsMode::Improved => {
            mf.powf(1.5) * (1.0 + 3.0 * stats.r_max).powi(3) * log_k * (df * nf.ln() / nf).sqrt()
        }
    };
    Ok(constant_c * v)
}

/// Restarts needed so uniform-from-data initialization lands every component
/// in its radius-`a` ball at least once with probability `1 - delta`
/// (equal-weights analysis): `ceil(ln(1/delta) / sqrt(2 pi M) *
/// (e / (1 - e^{-a sqrt(d)/2}))^M)`. Saturates at `u64::MAX`.
pub fn restart_count(m: usize, radius_a: f64, d: usize, delta: f64) -> Result<u64> {
    if !(radius_a > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius_a}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1], got {delta}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("no components".into()));
    }
    let p_ball = 1.0 - (-radius_a * (d as f64).sqrt() / 2.0).exp();
    let t = (1.0 / delta).ln() / (2.0 * std::f64::consts::PI * m as f64).sqrt()
        * (std::f64::consts::E / p_ball).powi(m as i32);
    Ok(t.ceil() as u64)
}

/// Inputs snapshot carried by a [`BoundReport`].
#[derive(Clone, Debug, Serialize)]
pub struct BoundInputs {
    pub m: usize,
    pub d: usize,
    pub d0: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub kappa: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub radius_a: f64,
    pub n: usize,
    pub c_a: f64,
    pub c_eps: f64,
    pub delta: f64,
}

/// Tunable constants for [`bound_report`].
#[derive(Clone, Copy, Debug)]
pub struct BoundConstants {
    /// Constant in the big-O radius shape.
    pub c_a: f64,
    /// Constant scaling the uniform deviation bound.
    pub c_eps: f64,
    /// Failure probability for the restart count.
    pub delta: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c_a: 1.0, c_eps: 1.0, delta: 0.05 }
    }
}

/// Every closed-form certificate evaluated on one model.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub zeta: ZetaRate,
    /// Solved contraction radius (or the override it was evaluated at).
    pub radius_a: f64,
    /// Explicit closed-form radius when positive.
    pub radius_explicit: Option<f64>,
    /// Big-O radius shape at `c_a`; may be negative.
    pub radius_big_o_shape: f64,
    pub eps_unif_improved: f64,
    pub eps_unif_original: f64,
    pub restart_count: u64,
    pub inputs: BoundInputs,
}

/// Evaluate every bound on `config` at sample size `n`. The radius defaults
/// to the solved certificate; `radius_override` evaluates the report at a
/// caller-chosen radius instead (which may yield a not-contractive zeta).
pub fn bound_report(
    config: &MixtureConfig,
    n: usize,
    constants: &BoundConstants,
    radius_override: Option<f64>,
) -> Result<BoundReport> {
    let stats = config.separation_stats()?;
    let m = config.components();
    let pi_min = config.pi_min();
    let radius_a = match radius_override {
        Some(a) => a,
        None => contraction_radius(&stats, m, pi_min, RadiusMode::Solved)?,
    };
    let gamma = gamma_gs(&stats, m, radius_a)?;
    let zeta = zeta_rate(pi_min, config.pi_max(), gamma)?;
    Ok(BoundReport {
        gamma,
        zeta,
        radius_a,
        radius_explicit: contraction_radius(&stats, m, pi_min, RadiusMode::Explicit).ok(),
        radius_big_o_shape: radius_big_o_shape(&stats, m, pi_min, constants.c_a),
        eps_unif_improved: eps_unif(&stats, m, config.dim(), n, constants.c_eps, EpsMode::Improved)?,
        eps_unif_original: eps_unif(&stats, m, config.dim(), n, constants.c_eps, EpsMode::Original)?,
        restart_count: restart_count(m, radius_a, config.dim(), constants.delta)?,
        inputs: BoundInputs {
            m,
            d: config.dim(),
            d0: stats.d0,
            r_min: stats.r_min,
            r_max: stats.r_max,
            kappa: stats.kappa,
            pi_min,
            pi_max: config.pi_max(),
            radius_a,
            n,
            c_a: constants.c_a,
            c_eps: constants.c_eps,
            delta: constants.delta,
        },
    })
}

/// One probed point of the empirical gradient-stability check.
#[derive(Clone, Debug, Serialize)]
pub struct GsTrial {
    /// Stacked distance of the trial means from the truth.
    pub displacement: f64,
    /// `||grad_MC - grad_oracle|| / displacement`; NaN when skipped.
    pub ratio: f64,
    /// Monte-Carlo standard error of the ratio.
    pub std_err: f64,
    /// True when the trial point fell outside the region (or on the truth)
    /// and was not evaluated.
    pub skipped: bool,
}

/// Outcome of [`verify_gs_empirical`].
#[derive(Clone, Debug, Serialize)]
pub struct GsReport {
    /// Largest observed deviation ratio.
    pub gamma_hat: f64,
    /// Standard error attached to the maximizing trial.
    pub std_err: f64,
    /// Closed-form `gamma(a)` the estimate is compared against.
    pub gamma_bound: f64,
    /// `gamma_hat + 4 std_err <= gamma_bound`.
    pub pass: bool,
    pub radius_a: f64,
    pub mc_samples: usize,
    pub trials: Vec<GsTrial>,
}

/// Default probe layout: per component, 8 trial points displacing that
/// component alone by radii `{a/4, a/2, 3a/4, a (1 - 1e-6)}` (two random
/// directions each), all other components at truth.
pub fn default_gs_trial_points(config: &MixtureConfig, radius_a: f64, seed: u64) -> Vec<Stacked> {
    let fractions = [0.25, 0.5, 0.75, 1.0 - 1e-6];
    let mut out = Vec::new();
    for i in 0..config.components() {
        for rep in 0..2u64 {
            for (fi, &f) in fractions.iter().enumerate() {
                let idx = ((i as u64) << 32) | (rep << 8) | fi as u64;
                let mut r = rng::stream_rng(rng::derive_seed(seed, rng::domain::GS_TRIALS, idx), 0);
                let u = rng::unit_vector(&mut r, config.dim());
                let mut trial = config.means().clone();
                let row = trial.row_mut(i);
                for (v, uk) in row.iter_mut().zip(&u) {
                    *v += f * radius_a * uk;
                }
                out.push(trial);
            }
        }
    }
    out
}

/// Empirical gradient-stability check on an explicit mega-sample: for every
/// admissible trial point, the Monte-Carlo self-consistent gradient minus the
/// oracle gradient, as a ratio to the trial's displacement.
pub fn verify_gs_on_points(
    config: &MixtureConfig,
    radius_a: f64,
    trial_points: &[Stacked],
    mega: &Stacked,
) -> Result<GsReport> {
    let stats = config.separation_stats()?;
    let bound = gamma_gs(&stats, config.components(), radius_a)?;
    let truth = config.means();
    let trials: Vec<GsTrial> = exec::map_collect(trial_points.len(), |ti| {
        let trial = &trial_points[ti];
        let per_comp = match trial.row_distances(truth) {
            Ok(d) => d,
            Err(_) => {
                return GsTrial { displacement: f64::NAN, ratio: f64::NAN, std_err: f64::NAN, skipped: true }
            }
        };
        let displacement = per_comp.iter().map(|e| e * e).sum::<f64>().sqrt();
        let outside = per_comp.iter().any(|&e| e > radius_a);
        if outside || displacement == 0.0 {
            return GsTrial { displacement, ratio: f64::NAN, std_err: f64::NAN, skipped: true };
        }
        let est = sample_gradient_with_stderr(mega, config.weights(), trial)
            .expect("shapes checked above");
        let oracle = oracle_gradient_q(config, trial).expect("shapes checked above");
        let dev = est.grad.sub(&oracle).expect("same shape").norm();
        GsTrial {
            displacement,
            ratio: dev / displacement,
            std_err: est.stacked_std_err() / displacement,
            skipped: false,
        }
    });
    let mut gamma_hat = f64::NEG_INFINITY;
    let mut std_err = f64::NAN;
    for t in trials.iter().filter(|t| !t.skipped) {
        if t.ratio > gamma_hat {
            gamma_hat = t.ratio;
            std_err = t.std_err;
        }
    }
    if !gamma_hat.is_finite() {
        return Err(Error::InvalidArgument("no admissible trial points".into()));
    }
    Ok(GsReport {
        gamma_hat,
        std_err,
        gamma_bound: bound,
        pass: gamma_hat + 4.0 * std_err <= bound,
        radius_a,
        mc_samples: mega.rows(),
        trials,
    })
}

/// [`verify_gs_on_points`] with a mega-sample of `mc_samples` points drawn
/// from the model (one draw shared by every trial point).
pub fn verify_gs_empirical(
    config: &MixtureConfig,
    radius_a: f64,
    trial_points: &[Stacked],
    mc_samples: usize,
    seed: u64,
) -> Result<GsReport> {
    let mega =
        config.sample(mc_samples, rng::derive_seed(seed, rng::domain::GS_MEGA, 0)).into_points();
    verify_gs_on_points(config, radius_a, trial_points, &mega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::arc_layout;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stats(r_min: f64, r_max: f64, kappa: f64, d0: usize) -> SeparationStats {
        SeparationStats { r_min, r_max, kappa, d0, max_center_norm: r_max }
    }

    #[test]
    fn gamma_hand_value() {
        // M = 3, kappa = 1, d0 = 2, R_max = 15, R_min = 10, a = 0.
        let s = stats(10.0, 15.0, 1.0, 2);
        let got = gamma_gs(&s, 3, 0.0).unwrap();
        let expected = 9.0 * 6.0 * 1024.0 * (-25.0 * 2f64.sqrt() / 8.0).exp();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        assert!((got / 6.65e2 - 1.0).abs() < 0.01, "got {got}");
    }

    #[test]
    fn gamma_boundary_limit() {
        let s = stats(10.0, 15.0, 1.0, 2);
        let base = 9.0 * 6.0 * 1024.0;
        let near = gamma_gs(&s, 3, 5.0 * (1.0 - 1e-10)).unwrap();
        assert_relative_eq!(near, base, max_relative = 1e-6);
        assert!(matches!(gamma_gs(&s, 3, 5.0), Err(Error::OutsideAdmissibleRadius)));
        assert!(gamma_gs(&s, 3, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn gamma_monotonicity(
            r_min in 0.5f64..40.0,
            extra in 0.0f64..30.0,
            kappa in 1.0f64..20.0,
            d0 in 1usize..12,
            m in 2usize..8,
            a_frac in 0.0f64..0.98,
            bump in 0.01f64..2.0,
        ) {
            let r_max = r_min + extra;
            let s = stats(r_min, r_max, kappa, d0);
            let a = a_frac * r_min / 2.0;
            let g = gamma_gs(&s, m, a).unwrap();
            // Nonincreasing in R_min (shrinking R_min, a kept admissible).
            let smaller = stats(r_min * 0.9, r_max, kappa, d0);
            if a < smaller.r_min / 2.0 {
                prop_assert!(gamma_gs(&smaller, m, a).unwrap() >= g);
            }
            // Nondecreasing in a, kappa, R_max, M.
            let a2 = (a + bump).min(r_min / 2.0 * 0.999);
            if a2 >= a {
                prop_assert!(gamma_gs(&s, m, a2).unwrap() >= g);
            }
            prop_assert!(gamma_gs(&stats(r_min, r_max, kappa + bump, d0), m, a).unwrap() >= g);
            prop_assert!(gamma_gs(&stats(r_min, r_max + bump, kappa, d0), m, a).unwrap() >= g);
            prop_assert!(gamma_gs(&s, m + 1, a).unwrap() >= g);
        }
    }

    #[test]
    fn zeta_values_and_flags() {
        assert_eq!(zeta_rate(0.5, 0.5, 0.0).unwrap(), ZetaRate::Contractive(0.0));
        let z = zeta_rate(0.1, 0.6, 0.0).unwrap().value().unwrap();
        assert_relative_eq!(z, 0.5 / 0.7, max_relative = 1e-12);
        assert_relative_eq!(z, 0.714286, epsilon = 1e-6);
        // Boundary: gamma = pi_min is not contractive.
        assert_eq!(zeta_rate(0.2, 0.5, 0.2).unwrap(), ZetaRate::NotContractive);
        assert!(zeta_rate(0.0, 0.5, 0.1).is_err());
        assert!(zeta_rate(0.6, 0.5, 0.1).is_err());
        assert!(zeta_rate(0.2, 1.5, 0.1).is_err());
        assert!(zeta_rate(0.2, 0.5, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn zeta_in_unit_interval_when_contractive(
            pi_min in 0.01f64..0.5,
            spread in 0.0f64..0.5,
            g_frac in 0.0f64..0.999,
        ) {
            let pi_max = (pi_min + spread).min(1.0);
            let gamma = g_frac * pi_min;
            let z = zeta_rate(pi_min, pi_max, gamma).unwrap().value().unwrap();
            prop_assert!((0.0..1.0).contains(&z));
        }
    }

    #[test]
    fn radius_explicit_hand_value_and_clamp() {
        // R_min = 4 clamps the log term to zero and goes negative.
        let s4 = stats(4.0, 4.0, 1.0, 1);
        assert!(matches!(
            contraction_radius(&s4, 2, 0.5, RadiusMode::Explicit),
            Err(Error::SeparationTooSmall)
        ));
        // d0 = 2, R_min = 80: the 8 sqrt(3) branch wins over 4 sqrt(2 ln 20).
        let s80 = stats(80.0, 100.0, 1.0, 2);
        assert!(4.0 * (2.0 * 20f64.ln()).sqrt() < 8.0 * 3f64.sqrt());
        let a = contraction_radius(&s80, 3, 1.0 / 3.0, RadiusMode::Explicit).unwrap();
        assert_relative_eq!(a, 40.0 - 8.0 * 6f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(a, 20.40, epsilon = 5e-3);
    }

    #[test]
    fn radius_solved_is_maximal_admissible() {
        let s = stats(20.0 * 2f64.sqrt(), 30.0 * 2f64.sqrt(), 1.0, 2);
        let pi_min = 1.0 / 3.0;
        let a = contraction_radius(&s, 3, pi_min, RadiusMode::Solved).unwrap();
        assert!(a > 0.0 && a < s.r_min / 2.0);
        assert!(gamma_gs(&s, 3, a).unwrap() < pi_min);
        // A hair beyond the solved radius the certificate fails.
        let beyond = (a + 1e-6).min(s.r_min / 2.0 * (1.0 - 1e-12));
        assert!(gamma_gs(&s, 3, beyond).unwrap() >= pi_min);
    }

    #[test]
    fn radius_solved_small_separation_errors() {
        let s = stats(3.0, 4.5, 1.0, 2);
        assert!(matches!(
            contraction_radius(&s, 3, 1.0 / 3.0, RadiusMode::Solved),
            Err(Error::SeparationTooSmall)
        ));
    }

    proptest! {
        #[test]
        fn radius_solved_postcondition(
            r_min in 15.0f64..120.0,
            ratio in 1.0f64..2.0,
            kappa in 1.0f64..6.0,
            d0 in 1usize..6,
            m in 2usize..6,
        ) {
            let s = stats(r_min, r_min * ratio, kappa, d0);
            let pi_min = 1.0 / (kappa * m as f64); // consistent-ish weight floor
            if let Ok(a) = contraction_radius(&s, m, pi_min, RadiusMode::Solved) {
                let g = gamma_gs(&s, m, a).unwrap();
                prop_assert!(g < pi_min);
                let z = zeta_rate(pi_min, kappa * pi_min, g).unwrap();
                prop_assert!(z.is_contractive());
                prop_assert!(z.value().unwrap() < 1.0);
            }
        }
    }

    #[test]
    fn big_o_shape_behaves() {
        let s = stats(40.0, 60.0, 2.0, 2);
        let a1 = radius_big_o_shape(&s, 3, 0.2, 1.0);
        let a2 = radius_big_o_shape(&s, 3, 0.2, 2.0);
        assert!(a1 < s.r_min / 2.0);
        assert!(a2 < a1); // larger constant shrinks the radius
    }

    #[test]
    fn eps_unif_improved_values() {
        // M = 1, kappa = 1, c = 1, d = 1 collapses to (1+3R)^3 sqrt(ln n / n).
        let s = stats(2.0, 2.0, 1.0, 1);
        let n = 5000;
        let got = eps_unif(&s, 1, 1, n, 1.0, EpsMode::Improved).unwrap();
        let expected = (1.0 + 3.0 * s.r_max).powi(3) * ((n as f64).ln() / n as f64).sqrt();
        assert_relative_eq!(got, expected, max_relative = 1e-12);

        // M^{3/2}: M = 4 vs M = 1 is a factor of exactly 8.
        let m4 = eps_unif(&s, 4, 1, n, 1.0, EpsMode::Improved).unwrap();
        assert_relative_eq!(m4 / got, 8.0, max_relative = 1e-12);

        // Quadrupling n multiplies by sqrt(ln(4n)/ln(n)) / 2.
        let at4n = eps_unif(&s, 1, 1, 4 * n, 1.0, EpsMode::Improved).unwrap();
        let factor = ((4.0 * n as f64).ln() / (n as f64).ln()).sqrt() / 2.0;
        assert_relative_eq!(at4n / got, factor, max_relative = 1e-12);
    }

    #[test]
    fn eps_unif_original_takes_the_larger_branch() {
        // Tiny M and R_max: the dimension branch with its log power wins.
        let s = stats(2.0, 2.0, 1.0, 1);
        let n = 1000usize;
        let d = 50;
        let got = eps_unif(&s, 1, d, n, 1.0, EpsMode::Original).unwrap();
        let nf = n as f64;
        let dim_branch = (1.0 + s.r_max) * d as f64 * nf.ln().powf(2.5) / nf.sqrt();
        assert_relative_eq!(got, dim_branch, max_relative = 1e-12);
        // Huge M: the complexity branch wins.
        let got = eps_unif(&s, 50, 2, n, 1.0, EpsMode::Original).unwrap();
        let comp_branch = 50f64.powi(3) * (1.0 + s.r_max).powi(3) * 2f64.sqrt() / nf.sqrt();
        assert_relative_eq!(got, comp_branch, max_relative = 1e-12);
        assert!(eps_unif(&s, 1, 2, 1, 1.0, EpsMode::Improved).is_err());
        assert!(eps_unif(&s, 1, 2, 100, 0.0, EpsMode::Improved).is_err());
    }

    #[test]
    fn restart_count_values() {
        // a sqrt(d) huge: the ball probability saturates at 1.
        let t = restart_count(2, 1e9, 1, 0.05).unwrap();
        let expected = (20f64.ln() * std::f64::consts::E.powi(2)
            / (4.0 * std::f64::consts::PI).sqrt())
        .ceil() as u64;
        assert_eq!(t, expected);
        assert_eq!(t, 7);
        assert_eq!(restart_count(2, 1e9, 1, 1.0).unwrap(), 0);
        // Nondecreasing as delta shrinks.
        let mut last = 0;
        for delta in [0.5, 0.1, 0.01, 1e-4] {
            let t = restart_count(3, 2.0, 2, delta).unwrap();
            assert!(t >= last);
            last = t;
        }
        assert!(restart_count(3, 0.0, 2, 0.1).is_err());
        assert!(restart_count(3, 1.0, 2, 0.0).is_err());
    }

    #[test]
    fn bound_report_assembles_and_serializes() {
        let cfg = arc_layout(3, 2, 20.0 * 2f64.sqrt(), 1.5, &[1.0 / 3.0; 3]).unwrap();
        let report = bound_report(&cfg, 12_000, &BoundConstants::default(), None).unwrap();
        assert!(report.zeta.is_contractive());
        assert!(report.radius_a > 0.0);
        assert!(report.eps_unif_improved > 0.0);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"gamma\""));
        assert!(json.contains("\"restart_count\""));

        // An override radius near the cap loses the certificate.
        let stats_ = cfg.separation_stats().unwrap();
        let big = stats_.r_min / 2.0 * 0.999;
        let loose = bound_report(&cfg, 12_000, &BoundConstants::default(), Some(big)).unwrap();
        assert_eq!(loose.zeta, ZetaRate::NotContractive);
    }

    #[test]
    fn gs_trials_layout() {
        let cfg = arc_layout(3, 2, 10.0, 1.5, &[1.0 / 3.0; 3]).unwrap();
        let a = 2.0;
        let trials = default_gs_trial_points(&cfg, a, 7);
        assert_eq!(trials.len(), 24);
        for t in &trials {
            let per = t.row_distances(cfg.means()).unwrap();
            let moved: Vec<f64> = per.iter().cloned().filter(|&e| e > 0.0).collect();
            assert_eq!(moved.len(), 1, "exactly one component displaced");
            assert!(moved[0] <= a * (1.0 - 1e-7) + 1e-12);
            assert!(moved[0] >= 0.25 * a - 1e-12);
        }
    }

    #[test]
    fn verify_gs_skips_truth_and_outside_points() {
        let cfg = arc_layout(3, 2, 20.0 * 2f64.sqrt(), 1.5, &[1.0 / 3.0; 3]).unwrap();
        let stats_ = cfg.separation_stats().unwrap();
        let a = contraction_radius(&stats_, 3, cfg.pi_min(), RadiusMode::Solved).unwrap();
        let mut outside = cfg.means().clone();
        outside.row_mut(0)[0] += 2.0 * a;
        let mut inside = cfg.means().clone();
        inside.row_mut(1)[1] += 0.5 * a;
        let trials = vec![cfg.means().clone(), outside, inside];
        let report = verify_gs_empirical(&cfg, a, &trials, 50_000, 3).unwrap();
        assert!(report.trials[0].skipped);
        assert!(report.trials[1].skipped);
        assert!(!report.trials[2].skipped);
        assert!(report.gamma_hat.is_finite());
    }

    #[test]
    fn verify_gs_passes_at_high_separation() {
        let cfg = arc_layout(3, 2, 20.0 * 2f64.sqrt(), 1.5, &[1.0 / 3.0; 3]).unwrap();
        let stats_ = cfg.separation_stats().unwrap();
        let a = contraction_radius(&stats_, 3, cfg.pi_min(), RadiusMode::Solved).unwrap();
        let trials = default_gs_trial_points(&cfg, a, 11);
        let report = verify_gs_empirical(&cfg, a, &trials, 200_000, 13).unwrap();
        assert!(
            report.pass,
            "gamma_hat {} + 4 * {} vs bound {}",
            report.gamma_hat, report.std_err, report.gamma_bound
        );
    }

    #[test]
    fn verify_gs_ratios_rotation_invariant() {
        let cfg = arc_layout(3, 2, 16.0, 1.4, &[1.0 / 3.0; 3]).unwrap();
        let a = 2.0;
        let trials = default_gs_trial_points(&cfg, a, 17);
        let mega = cfg.sample(50_000, 19).into_points();
        let base = verify_gs_on_points(&cfg, a, &trials, &mega).unwrap();

        let theta = 0.7f64;
        let rot = |p: &[f64]| {
            vec![
                theta.cos() * p[0] - theta.sin() * p[1],
                theta.sin() * p[0] + theta.cos() * p[1],
            ]
        };
        let rot_stack = |s: &Stacked| {
            Stacked::from_rows(&s.iter_rows().map(rot).collect::<Vec<_>>()).unwrap()
        };
        let cfg_r = crate::MixtureConfig::new(cfg.weights().to_vec(), rot_stack(cfg.means()))
            .unwrap();
        let trials_r: Vec<Stacked> = trials.iter().map(|t| rot_stack(t)).collect();
        let mega_r = rot_stack(&mega);
        let rotated = verify_gs_on_points(&cfg_r, a, &trials_r, &mega_r).unwrap();

        assert_relative_eq!(base.gamma_hat, rotated.gamma_hat, max_relative = 1e-9);
        for (x, y) in base.trials.iter().zip(&rotated.trials) {
            if !x.skipped {
                assert_relative_eq!(x.ratio, y.ratio, max_relative = 1e-9);
            }
        }
    }
}
