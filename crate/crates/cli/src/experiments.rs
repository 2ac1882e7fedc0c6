//! Experiment runners: each takes a validated spec, runs deterministically
//! under the master seed, and writes CSV/SVG/JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gem_core::bounds::{
    bound_report, contraction_radius, default_gs_trial_points, verify_gs_empirical,
    BoundConstants, RadiusMode, ZetaRate,
};
use gem_core::em::{
    default_step_size, init_means_at_radius, inverse_t_schedule_constant, run_gradient_em,
    stochastic_em_run, BatchSource, EmOptions, GradientSource, StepSchedule, StochasticOptions,
    Trajectory,
};
use gem_core::empirical::{scaling_study, ScalingOptions, ScalingQuantity, Sweep};
use gem_core::rng::{derive_seed, domain, stream_rng, unit_vector};
use gem_core::stats::{fit_decay_slope, mean, median, sd};
use gem_core::{exec, Error, MixtureConfig, Stacked};

use crate::spec::{ExperimentSpec, Kind};
use crate::svg::{line_chart, Chart, Series};
use crate::AppError;

pub struct Ctx {
    pub seed: u64,
    pub out: PathBuf,
    pub against_best_fixed_point: bool,
}

fn runtime(e: impl std::fmt::Display) -> AppError {
    AppError::Runtime(e.to_string())
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<PathBuf, AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    fs::write(path, bytes).map_err(runtime)?;
    Ok(path.to_path_buf())
}

/// Initialization radius for in-region starts: half the solved contraction
/// radius when the certificate exists, a quarter of the separation otherwise.
fn default_init_radius(cfg: &MixtureConfig) -> Result<f64, AppError> {
    let stats = cfg.separation_stats().map_err(runtime)?;
    Ok(match contraction_radius(&stats, cfg.components(), cfg.pi_min(), RadiusMode::Solved) {
        Ok(a) => a / 2.0,
        Err(Error::SeparationTooSmall) => stats.r_min / 4.0,
        Err(e) => return Err(runtime(e)),
    })
}

/// Reference means for error bookkeeping: the truth, or the fixed point of a
/// truth-initialized run on the same sample.
fn error_reference(
    cfg: &MixtureConfig,
    points: &Stacked,
    against_best_fixed_point: bool,
    opts: &EmOptions,
) -> Result<Option<Stacked>, AppError> {
    if !against_best_fixed_point {
        return Ok(None);
    }
    let traj = run_gradient_em(
        cfg,
        GradientSource::Sample { points },
        cfg.means(),
        &EmOptions { error_reference: None, ..opts.clone() },
    )
    .map_err(runtime)?;
    Ok(Some(traj.final_means))
}

fn pad_mean_sd(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut means = Vec::with_capacity(len);
    let mut sds = Vec::with_capacity(len);
    for t in 0..len {
        let col: Vec<f64> = curves
            .iter()
            .map(|c| *c.get(t).unwrap_or_else(|| c.last().expect("non-empty curve")))
            .collect();
        means.push(mean(&col));
        sds.push(sd(&col));
    }
    (means, sds)
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    label: &str,
    ctx: &Ctx,
) -> Result<Vec<PathBuf>, AppError> {
    match spec.kind {
        Kind::Convergence => run_convergence(spec, label, ctx),
        Kind::RegionProbe => run_region_probe(spec, label, ctx),
        Kind::Bounds => run_bounds(spec, label, ctx),
        Kind::VerifyGs => run_verify_gs(spec, label, ctx),
        Kind::DeviationScaling => run_scaling(spec, label, ctx, ScalingQuantity::Deviation),
        Kind::RademacherScaling => run_scaling(spec, label, ctx, ScalingQuantity::Rademacher),
        Kind::Stochastic => run_stochastic(spec, label, ctx),
    }
}

fn em_options(spec: &ExperimentSpec) -> EmOptions {
    EmOptions {
        step_size: None,
        max_iters: spec.max_iters.unwrap_or(300),
        tol: spec.tol.unwrap_or(1e-8),
        error_reference: None,
    }
}

fn meta_json(label: &str, ctx: &Ctx, spec: &ExperimentSpec, extra: serde_json::Value) -> String {
    let mut root = serde_json::json!({
        "experiment": label,
        "kind": spec.kind.as_str(),
        "seed": ctx.seed,
        "n": spec.n,
        "trials": spec.trials,
        "against_best_fixed_point": ctx.against_best_fixed_point,
    });
    if let (Some(obj), Some(add)) = (root.as_object_mut(), extra.as_object()) {
        for (k, v) in add {
            obj.insert(k.clone(), v.clone());
        }
    }
    serde_json::to_string_pretty(&root).expect("meta serializes") + "\n"
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

fn run_convergence(
    spec: &ExperimentSpec,
    label: &str,
    ctx: &Ctx,
) -> Result<Vec<PathBuf>, AppError> {
    let snr_grid: Vec<f64> = if spec.snr_grid.is_empty() {
        vec![1.0, 2.0, 3.0, 4.0, 5.0]
    } else {
        spec.snr_grid.clone()
    };
    if !spec.model.is_generator() {
        return Err(AppError::Spec("convergence sweeps an SNR grid; use a generator model".into()));
    }
    // Build every model up front so an infeasible layout fails before any run.
    let configs: Vec<MixtureConfig> = snr_grid
        .iter()
        .map(|&snr| spec.model.build(Some(snr)))
        .collect::<Result<_, _>>()?;

    let opts = em_options(spec);
    let mut curves_csv = String::from("snr,t,mean_log_err,sd_log_err\n");
    let mut summary_csv = String::from("snr,slope,contraction_factor,init_radius,n,trials\n");
    let mut series = Vec::new();
    for (cfg, &snr) in configs.iter().zip(&snr_grid) {
        let init_radius = default_init_radius(cfg)?;
        let curves: Vec<Vec<f64>> = exec::map_collect(spec.trials, |t| {
            let t = t as u64;
            let sample = cfg.sample(spec.n, derive_seed(ctx.seed, domain::TRIAL, t));
            let init = init_means_at_radius(
                cfg.means(),
                init_radius,
                derive_seed(ctx.seed, domain::INIT, t),
            );
            let mut o = opts.clone();
            o.error_reference =
                error_reference(cfg, sample.points(), ctx.against_best_fixed_point, &opts)
                    .expect("reference run");
            run_gradient_em(cfg, GradientSource::Sample { points: sample.points() }, &init, &o)
                .expect("run succeeds")
                .log_errors()
        });
        let (mean_curve, sd_curve) = pad_mean_sd(&curves);
        for (t, (m, s)) in mean_curve.iter().zip(&sd_curve).enumerate() {
            writeln!(curves_csv, "{snr},{t},{m},{s}").unwrap();
        }
        let slope = fit_decay_slope(&mean_curve);
        writeln!(
            summary_csv,
            "{snr},{slope},{},{init_radius},{},{}",
            slope.exp(),
            spec.n,
            spec.trials
        )
        .unwrap();
        series.push(Series {
            label: format!("SNR {snr}"),
            points: mean_curve.iter().enumerate().map(|(t, &y)| (t as f64, y)).collect(),
        });
    }
    let svg = line_chart(
        &Chart {
            title: "sample gradient EM: log error vs iteration".into(),
            x_label: "iteration".into(),
            y_label: "mean log ||mu_t - mu*||".into(),
            log_x: false,
            log_y: false,
        },
        &series,
    );
    let meta = meta_json(
        label,
        ctx,
        spec,
        serde_json::json!({
            "snr_grid": snr_grid,
            "step_size": configs.first().map(|c| default_step_size(c.weights())),
            "max_iters": opts.max_iters,
            "tol": opts.tol,
        }),
    );
    Ok(vec![
        write_artifact(&ctx.out.join(format!("{label}_curves.csv")), curves_csv.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_summary.csv")), summary_csv.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}.svg")), svg.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_meta.json")), meta.as_bytes())?,
    ])
}

// ---------------------------------------------------------------------------
// region probe
// ---------------------------------------------------------------------------

fn run_region_probe(
    spec: &ExperimentSpec,
    label: &str,
    ctx: &Ctx,
) -> Result<Vec<PathBuf>, AppError> {
    let cfg = spec.model.build(None)?;
    if cfg.components() < 3 {
        return Err(AppError::Spec("region probe needs at least 3 components".into()));
    }
    let stats = cfg.separation_stats().map_err(runtime)?;
    let r_min = stats.r_min;
    let d = cfg.dim();
    let eps_grid = spec
        .eps_grid
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.01, 0.025, 0.05, 0.1, 0.2, 0.35, 0.5]);
    let opts = em_options(spec);

    // Straddle axis between components 2 and 3.
    let axis_len: f64 =
        (0..d).map(|k| (cfg.mean(2)[k] - cfg.mean(1)[k]).powi(2)).sum::<f64>().sqrt();
    let axis: Vec<f64> = (0..d).map(|k| (cfg.mean(2)[k] - cfg.mean(1)[k]) / axis_len).collect();
    let mid: Vec<f64> = (0..d).map(|k| 0.5 * (cfg.mean(1)[k] + cfg.mean(2)[k])).collect();

    let mut probe_csv = String::from("eps_over_rmin,trial,final_err,final_err_over_rmin,status\n");
    let mut summary_csv = String::from("eps_over_rmin,median_final_err,median_err_over_rmin\n");
    let mut med_points = Vec::new();
    for &eps in &eps_grid {
        let finals: Vec<(f64, &'static str)> = exec::map_collect(spec.trials, |t| {
            let t = t as u64;
            let sample = cfg.sample(spec.n, derive_seed(ctx.seed, domain::TRIAL, t));
            let mut r = stream_rng(derive_seed(ctx.seed, domain::INIT, t), 0);
            let dir = unit_vector(&mut r, d);
            let mut init = cfg.means().clone();
            for k in 0..d {
                init.row_mut(0)[k] = cfg.mean(0)[k] + 0.01 * r_min * dir[k];
                init.row_mut(1)[k] = mid[k] - eps * r_min * axis[k];
                init.row_mut(2)[k] = mid[k] + eps * r_min * axis[k];
            }
            // Components beyond the straddling pair start near their truth.
            for i in 3..cfg.components() {
                for k in 0..d {
                    init.row_mut(i)[k] = cfg.mean(i)[k] + 0.01 * r_min * dir[k];
                }
            }
            let mut o = opts.clone();
            o.error_reference =
                error_reference(&cfg, sample.points(), ctx.against_best_fixed_point, &opts)
                    .expect("reference run");
            let traj =
                run_gradient_em(&cfg, GradientSource::Sample { points: sample.points() }, &init, &o)
                    .expect("run succeeds");
            (traj.final_error(), traj.status.as_str())
        });
        for (t, (err, status)) in finals.iter().enumerate() {
            writeln!(probe_csv, "{eps},{t},{err},{},{status}", err / r_min).unwrap();
        }
        let med = median(&finals.iter().map(|(e, _)| *e).collect::<Vec<_>>());
        writeln!(summary_csv, "{eps},{med},{}", med / r_min).unwrap();
        med_points.push((eps, med / r_min));
    }
    let svg = line_chart(
        &Chart {
            title: "final error vs initialization offset".into(),
            x_label: "eps / R_min".into(),
            y_label: "median final error / R_min".into(),
            log_x: false,
            log_y: false,
        },
        &[Series { label: "median".into(), points: med_points }],
    );
    let meta = meta_json(
        label,
        ctx,
        spec,
        serde_json::json!({
            "eps_grid": eps_grid,
            "r_min": r_min,
            "max_iters": opts.max_iters,
            "tol": opts.tol,
        }),
    );
    Ok(vec![
        write_artifact(&ctx.out.join(format!("{label}_probe.csv")), probe_csv.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_summary.csv")), summary_csv.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}.svg")), svg.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_meta.json")), meta.as_bytes())?,
    ])
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

fn run_bounds(spec: &ExperimentSpec, label: &str, ctx: &Ctx) -> Result<Vec<PathBuf>, AppError> {
    let cfg = spec.model.build(None)?;
    let constants =
        BoundConstants { delta: spec.delta.unwrap_or(0.05), ..BoundConstants::default() };
    let report = match bound_report(&cfg, spec.n, &constants, spec.region_radius) {
        Ok(r) => r,
        Err(Error::SeparationTooSmall) => {
            println!("separation too small for certificate");
            let body = serde_json::json!({ "certificate": "none",
                "reason": "separation too small for certificate" });
            let path = write_artifact(
                &ctx.out.join(format!("{label}_report.json")),
                (serde_json::to_string_pretty(&body).unwrap() + "\n").as_bytes(),
            )?;
            return Ok(vec![path]);
        }
        Err(e) => return Err(runtime(e)),
    };

    let mut table = String::new();
    let mut row = |k: &str, v: String| {
        table.push_str(&format!("{k:<28} {v}\n"));
    };
    row("components M", report.inputs.m.to_string());
    row("dimension d", report.inputs.d.to_string());
    row("R_min", format!("{:.6}", report.inputs.r_min));
    row("R_max", format!("{:.6}", report.inputs.r_max));
    row("kappa", format!("{:.6}", report.inputs.kappa));
    row("gamma", format!("{:.6e}", report.gamma));
    let zeta_str = match report.zeta {
        ZetaRate::Contractive(z) => format!("{z:.6}"),
        ZetaRate::NotContractive => "not-contractive".into(),
    };
    row("zeta", zeta_str);
    row("radius a", format!("{:.6}", report.radius_a));
    row(
        "radius a (explicit)",
        report.radius_explicit.map_or("n/a".into(), |a| format!("{a:.6}")),
    );
    row("eps_unif (improved)", format!("{:.6e}", report.eps_unif_improved));
    row("restart count T", report.restart_count.to_string());

    let mut artifacts = Vec::new();
    let mut companion = serde_json::json!(null);
    if report.zeta.is_contractive() {
        // Companion population run. Iterates start (and stay) within half the
        // region radius, so the rate that predicts their decay is zeta
        // evaluated there; the reachable target is the larger of the stopping
        // tolerance and the run's own statistical floor.
        let stats = cfg.separation_stats().map_err(runtime)?;
        let gamma_run =
            gem_core::bounds::gamma_gs(&stats, cfg.components(), report.radius_a / 2.0)
                .map_err(runtime)?;
        let zeta_run =
            gem_core::bounds::zeta_rate(cfg.pi_min(), cfg.pi_max(), gamma_run).map_err(runtime)?;
        let opts = em_options(spec);
        let mc = spec.mc_samples.unwrap_or(200_000).max(1000);
        let init = init_means_at_radius(
            cfg.means(),
            report.radius_a / 2.0,
            derive_seed(ctx.seed, domain::INIT, 0),
        );
        let traj = run_gradient_em(
            &cfg,
            GradientSource::Population { mc_samples: mc, seed: derive_seed(ctx.seed, domain::TRIAL, 0) },
            &init,
            &opts,
        )
        .map_err(runtime)?;
        let err0 = traj.records[0].err_total;
        let floor = traj.final_error();
        let target = opts.tol.max(floor * (1.0 + 1e-9));
        let predicted = match zeta_run {
            ZetaRate::Contractive(z) if z > 0.0 && target < err0 => {
                ((target / err0).ln() / z.ln()).ceil().max(1.0) as u64
            }
            ZetaRate::Contractive(_) => 1,
            ZetaRate::NotContractive => 0,
        };
        let measured = traj
            .records
            .iter()
            .find(|r| r.err_total <= target)
            .map(|r| r.t)
            .unwrap_or_else(|| traj.records.last().expect("records").t)
            as u64;
        let zeta_run_str = match zeta_run {
            ZetaRate::Contractive(z) => format!("{z:.6e}"),
            ZetaRate::NotContractive => "not-contractive".into(),
        };
        row("zeta at init radius a/2", zeta_run_str);
        if predicted > 0 {
            row("predicted iterations", predicted.to_string());
        } else {
            row("predicted iterations", "n/a".into());
        }
        row(
            "measured iterations",
            format!("{measured} ({})", traj.status.as_str()),
        );
        companion = serde_json::json!({
            "mc_samples": mc,
            "tol": opts.tol,
            "initial_error": err0,
            "statistical_floor": floor,
            "target_error": target,
            "zeta_at_init_radius": zeta_run,
            "predicted_iterations": predicted,
            "measured_iterations": measured,
            "status": traj.status,
        });
        let mut csv = Vec::new();
        traj.write_csv(&mut csv).map_err(runtime)?;
        artifacts
            .push(write_artifact(&ctx.out.join(format!("{label}_trajectory.csv")), &csv)?);
    }
    print!("{table}");
    let body = serde_json::json!({ "report": report, "companion_run": companion });
    artifacts.push(write_artifact(
        &ctx.out.join(format!("{label}_report.json")),
        (serde_json::to_string_pretty(&body).unwrap() + "\n").as_bytes(),
    )?);
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// verify-gs
// ---------------------------------------------------------------------------

fn run_verify_gs(spec: &ExperimentSpec, label: &str, ctx: &Ctx) -> Result<Vec<PathBuf>, AppError> {
    let cfg = spec.model.build(None)?;
    let stats = cfg.separation_stats().map_err(runtime)?;
    let radius = match spec.region_radius {
        Some(a) => a,
        None => match contraction_radius(&stats, cfg.components(), cfg.pi_min(), RadiusMode::Solved)
        {
            Ok(a) => a,
            Err(Error::SeparationTooSmall) => {
                println!("separation too small for certificate");
                let body = serde_json::json!({ "certificate": "none",
                    "reason": "separation too small for certificate" });
                let path = write_artifact(
                    &ctx.out.join(format!("{label}_report.json")),
                    (serde_json::to_string_pretty(&body).unwrap() + "\n").as_bytes(),
                )?;
                return Ok(vec![path]);
            }
            Err(e) => return Err(runtime(e)),
        },
    };
    let mc = spec.mc_samples.unwrap_or(1_000_000);
    let trials = default_gs_trial_points(&cfg, radius, ctx.seed);
    let report = verify_gs_empirical(&cfg, radius, &trials, mc, ctx.seed).map_err(runtime)?;
    println!(
        "gamma_hat {:.6e} + 4 * {:.6e} vs gamma(a) {:.6e} at a = {:.6}: {}",
        report.gamma_hat,
        report.std_err,
        report.gamma_bound,
        radius,
        if report.pass { "PASS" } else { "FAIL" }
    );
    let mut trials_csv = String::from("trial,displacement,ratio,std_err,skipped\n");
    for (i, t) in report.trials.iter().enumerate() {
        writeln!(trials_csv, "{i},{},{},{},{}", t.displacement, t.ratio, t.std_err, t.skipped)
            .unwrap();
    }
    Ok(vec![
        write_artifact(
            &ctx.out.join(format!("{label}_report.json")),
            (serde_json::to_string_pretty(&report).unwrap() + "\n").as_bytes(),
        )?,
        write_artifact(&ctx.out.join(format!("{label}_trials.csv")), trials_csv.as_bytes())?,
    ])
}

// ---------------------------------------------------------------------------
// scaling studies
// ---------------------------------------------------------------------------

fn run_scaling(
    spec: &ExperimentSpec,
    label: &str,
    ctx: &Ctx,
    quantity: ScalingQuantity,
) -> Result<Vec<PathBuf>, AppError> {
    let defaults = ScalingOptions::default();
    let opts = ScalingOptions {
        n_grid: spec.n_grid.clone().unwrap_or(defaults.n_grid),
        d_grid: spec.d_grid.clone().unwrap_or(defaults.d_grid),
        seeds: spec.trials,
        region_radius_frac: spec.region_radius_frac.unwrap_or(defaults.region_radius_frac),
        component: 0,
        multistarts: spec.multistarts.unwrap_or(defaults.multistarts),
        replications: spec.replications.unwrap_or(defaults.replications),
        max_ascent_iters: spec.max_ascent_iters.unwrap_or(defaults.max_ascent_iters),
        mega_samples: spec.mega_samples.unwrap_or(defaults.mega_samples),
        seed: ctx.seed,
    };
    let model = spec.model.clone();
    let table = scaling_study(
        move |d| {
            model
                .with_dim(d)
                .and_then(|m| m.build(None))
                .map_err(|e| Error::InvalidArgument(e.to_string()))
        },
        quantity,
        &opts,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(msg) => AppError::Spec(msg),
        other => runtime(other),
    })?;
    println!("{} n-sweep log-log slope: {:.4}", quantity.as_str(), table.n_slope);

    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(runtime)?;
    let n_series = Series {
        label: format!("median (d = {})", opts.d_grid[0]),
        points: table
            .cells
            .iter()
            .filter(|c| c.sweep == Sweep::N)
            .map(|c| (c.n as f64, c.median))
            .collect(),
    };
    let svg_n = line_chart(
        &Chart {
            title: format!("{} vs sample size", quantity.as_str()),
            x_label: "n".into(),
            y_label: "median estimate".into(),
            log_x: true,
            log_y: true,
        },
        &[n_series],
    );
    let d_series = Series {
        label: format!("median (n = {})", opts.n_grid[0]),
        points: table
            .cells
            .iter()
            .filter(|c| c.sweep == Sweep::D)
            .map(|c| (c.d as f64, c.median))
            .collect(),
    };
    let svg_d = line_chart(
        &Chart {
            title: format!("{} vs dimension", quantity.as_str()),
            x_label: "d".into(),
            y_label: "median estimate".into(),
            log_x: false,
            log_y: true,
        },
        &[d_series],
    );
    let meta = meta_json(
        label,
        ctx,
        spec,
        serde_json::json!({
            "quantity": quantity.as_str(),
            "n_grid": opts.n_grid,
            "d_grid": opts.d_grid,
            "multistarts": opts.multistarts,
            "replications": opts.replications,
            "max_ascent_iters": opts.max_ascent_iters,
            "mega_samples": opts.mega_samples,
            "region_radius_frac": opts.region_radius_frac,
            "n_slope": table.n_slope,
        }),
    );
    Ok(vec![
        write_artifact(&ctx.out.join(format!("{label}_scaling.csv")), &csv)?,
        write_artifact(&ctx.out.join(format!("{label}_n.svg")), svg_n.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_d.svg")), svg_d.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_meta.json")), meta.as_bytes())?,
    ])
}

// ---------------------------------------------------------------------------
// stochastic
// ---------------------------------------------------------------------------

fn run_stochastic(
    spec: &ExperimentSpec,
    label: &str,
    ctx: &Ctx,
) -> Result<Vec<PathBuf>, AppError> {
    let cfg = spec.model.build(None)?;
    let projection_radius = match spec.projection_radius {
        Some(r) => r,
        None => {
            let stats = cfg.separation_stats().map_err(|_| {
                AppError::Spec(
                    "single-component stochastic runs need an explicit projection_radius".into(),
                )
            })?;
            match contraction_radius(&stats, cfg.components(), cfg.pi_min(), RadiusMode::Solved) {
                Ok(a) => a / 2.0,
                Err(_) => {
                    return Err(AppError::Spec(
                        "no contraction certificate; set projection_radius explicitly".into(),
                    ))
                }
            }
        }
    };
    let schedule_c = match spec.schedule_c {
        Some(c) => c,
        None => inverse_t_schedule_constant(cfg.pi_min(), 0.0).map_err(runtime)?,
    };
    let max_iters = spec.max_iters.unwrap_or(10_000);
    let batch = spec.batch.unwrap_or(1);
    let init = init_means_at_radius(
        cfg.means(),
        projection_radius / 2.0,
        derive_seed(ctx.seed, domain::INIT, 0),
    );

    let trajs: Vec<Trajectory> = exec::map_collect(spec.trials, |t| {
        stochastic_em_run(
            &cfg,
            BatchSource::Model,
            &init,
            &StochasticOptions {
                projection_radius,
                batch,
                max_iters,
                schedule: StepSchedule::InverseT { c: schedule_c },
                seed: derive_seed(ctx.seed, domain::TRIAL, t as u64),
                record_every: 1,
            },
        )
        .expect("run succeeds")
    });
    // Log-spaced checkpoints of the mean squared error.
    let lo = 1.0f64.max(max_iters as f64 / 100.0);
    let checkpoints: Vec<usize> = (0..=24)
        .map(|k| (lo * (max_iters as f64 / lo).powf(k as f64 / 24.0)).round() as usize)
        .map(|t| t.min(max_iters - 1))
        .collect();
    let mut csv = String::from("t,mean_sq_err\n");
    let mut pts = Vec::new();
    let mut last = usize::MAX;
    for &t in &checkpoints {
        if t == last {
            continue;
        }
        last = t;
        let ms = mean(
            &trajs.iter().map(|tr| tr.records[t].err_total.powi(2)).collect::<Vec<_>>(),
        );
        writeln!(csv, "{t},{ms}").unwrap();
        pts.push((t as f64, ms));
    }
    let slope = gem_core::stats::log_log_slope(
        &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
        &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    println!("stochastic squared-error log-log slope: {slope:.4}");
    let svg = line_chart(
        &Chart {
            title: "stochastic gradient EM: squared error vs iteration".into(),
            x_label: "t".into(),
            y_label: "mean squared error".into(),
            log_x: true,
            log_y: true,
        },
        &[Series { label: "mean over seeds".into(), points: pts }],
    );
    let meta = meta_json(
        label,
        ctx,
        spec,
        serde_json::json!({
            "projection_radius": projection_radius,
            "schedule_c": schedule_c,
            "batch": batch,
            "max_iters": max_iters,
            "slope": slope,
        }),
    );
    Ok(vec![
        write_artifact(&ctx.out.join(format!("{label}_curve.csv")), csv.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}.svg")), svg.as_bytes())?,
        write_artifact(&ctx.out.join(format!("{label}_meta.json")), meta.as_bytes())?,
    ])
}
