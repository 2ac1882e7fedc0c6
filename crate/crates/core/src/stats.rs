//! Small summary-statistics helpers shared by the experiment harnesses.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 points.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linearly interpolated quantile of a sorted slice, q in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median over non-finite values"));
    quantile_sorted(&v, 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("iqr over non-finite values"));
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

/// Least-squares line through `(xs, ys)`: returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Per-iteration slope of a decaying log-error curve, fitted on the segment
/// before the curve flattens out.
///
/// `ys[t]` is the log error at iteration t. The plateau level is the median
/// of the tail; the fit stops at the first point that gets within 5% of the
/// initial drop from the plateau. Curves with no visible drop are fitted
/// whole.
pub fn fit_decay_slope(ys: &[f64]) -> f64 {
    assert!(ys.len() >= 2);
    let tail = ys.len().div_ceil(5).max(3).min(ys.len());
    let plateau = median(&ys[ys.len() - tail..]);
    let drop = ys[0] - plateau;
    let end = if drop <= 0.1 {
        ys.len()
    } else {
        let cut = plateau + 0.05 * drop;
        let hit = ys.iter().position(|&y| y <= cut).unwrap_or(ys.len());
        hit.max(3).min(ys.len())
    };
    let ts: Vec<f64> = (0..end).map(|t| t as f64).collect();
    linear_fit(&ts, &ys[..end]).0
}
