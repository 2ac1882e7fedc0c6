//! Planar-arc center layouts hitting prescribed separation extremes.

use crate::{Error, MixtureConfig, Result, Stacked};

/// Place `m` centers on a planar arc (coordinates beyond the first two are
/// zero), scale so the minimum pairwise distance is `r_min` and the maximum
/// is `ratio * r_min` within 1e-6 relative, then center under `weights`.
///
/// For `d == 1` the centers are collinear and equally spaced, which pins the
/// ratio to `m - 1`; other ratios are rejected as infeasible. For `m == 2`
/// the ratio must be 1.
pub fn arc_layout(
    m: usize,
    d: usize,
    r_min: f64,
    ratio: f64,
    weights: &[f64],
) -> Result<MixtureConfig> {
    if m < 2 {
        return Err(Error::NeedTwoComponents);
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(r_min.is_finite() && r_min > 0.0) {
        return Err(Error::InvalidArgument(format!("r_min must be positive, got {r_min}")));
    }
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must be at least 1, got {ratio}")));
    }
    if weights.len() != m {
        return Err(Error::DimensionMismatch(format!("{} weights for {m} components", weights.len())));
    }

    let unit = if m == 2 {
        if (ratio - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "two components have ratio exactly 1".into(),
            ));
        }
        vec![(0.0, 0.0), (1.0, 0.0)]
    } else if d == 1 {
        let line_ratio = (m - 1) as f64;
        if (ratio - line_ratio).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "a 1-d line of {m} equally spaced centers has ratio {line_ratio}"
            )));
        }
        (0..m).map(|k| (k as f64, 0.0)).collect()
    } else {
        solve_arc(m, ratio)?
    };

    let (u_min, _) = extremes(&unit);
    let scale = r_min / u_min;
    let mut rows = Vec::with_capacity(m);
    for &(x, y) in &unit {
        let mut row = vec![0.0; d];
        row[0] = scale * x;
        if d > 1 {
            row[1] = scale * y;
        }
        rows.push(row);
    }
    let cfg = MixtureConfig::new(weights.to_vec(), Stacked::from_rows(&rows)?)?.center_means();

    let stats = cfg.separation_stats()?;
    let ratio_err = (stats.r_max / stats.r_min - ratio).abs() / ratio;
    let rmin_err = (stats.r_min - r_min).abs() / r_min;
    if ratio_err > 1e-6 || rmin_err > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "layout infeasible: achieved r_min {} and ratio {}",
            stats.r_min,
            stats.r_max / stats.r_min
        )));
    }
    Ok(cfg)
}

/// Equally spaced points on an arc of total angle `theta` on the unit circle.
fn arc_points(m: usize, theta: f64) -> Vec<(f64, f64)> {
    (0..m)
        .map(|k| {
            let a = theta * k as f64 / (m - 1) as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

fn extremes(pts: &[(f64, f64)]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..pts.len() {
        for j in 0..i {
            let dx = pts[i].0 - pts[j].0;
            let dy = pts[i].1 - pts[j].1;
            let d = (dx * dx + dy * dy).sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (lo, hi)
}

/// Bisect the arc angle: the achieved ratio decreases from `m - 1` (flat arc)
/// down to its full-circle value as the angle grows.
fn solve_arc(m: usize, ratio: f64) -> Result<Vec<(f64, f64)>> {
    let theta_max = 2.0 * std::f64::consts::PI * (m - 1) as f64 / m as f64;
    let ratio_at = |theta: f64| {
        let (lo, hi) = extremes(&arc_points(m, theta));
        hi / lo
    };
    let (r_lo_end, r_hi_end) = (ratio_at(theta_max), (m - 1) as f64);
    if ratio < r_lo_end - 1e-9 || ratio >= r_hi_end {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} infeasible for {m} components on an arc (feasible range [{r_lo_end:.6}, {r_hi_end}))"
        )));
    }
    let mut lo = 1e-9;
    let mut hi = theta_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid) > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(arc_points(m, 0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn three_component_paper_shape() {
        let w = vec![1.0 / 3.0; 3];
        let cfg = arc_layout(3, 2, 5.0, 1.5, &w).unwrap();
        let s = cfg.separation_stats().unwrap();
        assert_relative_eq!(s.r_min, 5.0, max_relative = 1e-6);
        assert_relative_eq!(s.r_max / s.r_min, 1.5, max_relative = 1e-6);
        assert!(cfg.is_centered(1e-9));
    }

    #[test]
    fn equilateral_at_ratio_one() {
        let w = vec![1.0 / 3.0; 3];
        let cfg = arc_layout(3, 2, 10.0, 1.0, &w).unwrap();
        let s = cfg.separation_stats().unwrap();
        assert_relative_eq!(s.r_min, 10.0, max_relative = 1e-6);
        assert_relative_eq!(s.r_max, 10.0, max_relative = 1e-6);
    }

    #[test]
    fn higher_dimension_pads_zeros_before_centering() {
        let w = vec![0.25; 4];
        let cfg = arc_layout(4, 7, 3.0, 1.8, &w).unwrap();
        assert_eq!(cfg.dim(), 7);
        let s = cfg.separation_stats().unwrap();
        assert_relative_eq!(s.r_min, 3.0, max_relative = 1e-6);
        assert_relative_eq!(s.r_max / s.r_min, 1.8, max_relative = 1e-6);
        // Centered means stay planar: only the first two coordinates move.
        for row in cfg.means().iter_rows() {
            for v in &row[2..] {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn infeasible_ratios_rejected() {
        let w = vec![1.0 / 3.0; 3];
        assert!(arc_layout(3, 2, 5.0, 2.5, &w).is_err());
        assert!(arc_layout(3, 2, 5.0, 0.9, &w).is_err());
        let w2 = vec![0.5, 0.5];
        assert!(arc_layout(2, 2, 5.0, 1.5, &w2).is_err());
        assert!(arc_layout(2, 2, 5.0, 1.0, &w2).is_ok());
    }

    #[test]
    fn one_dimensional_line() {
        let w = vec![1.0 / 3.0; 3];
        let cfg = arc_layout(3, 1, 4.0, 2.0, &w).unwrap();
        let s = cfg.separation_stats().unwrap();
        assert_relative_eq!(s.r_min, 4.0, max_relative = 1e-9);
        assert_relative_eq!(s.r_max, 8.0, max_relative = 1e-9);
        assert!(arc_layout(3, 1, 4.0, 1.5, &w).is_err());
    }

    #[test]
    fn unbalanced_weights_shift_the_centering() {
        let cfg = arc_layout(3, 2, 5.0, 1.5, &[0.6, 0.3, 0.1]).unwrap();
        assert!(cfg.is_centered(1e-9));
        let s = cfg.separation_stats().unwrap();
        assert_relative_eq!(s.kappa, 6.0, epsilon = 1e-12);
    }
}
