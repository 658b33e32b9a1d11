//! Small least-squares and envelope helpers used by the diagnostics.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y = intercept + slope * x`. Needs two distinct
/// abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys).take(n) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

/// Fit of `log(value)` against time, ignoring non-positive values.
pub fn log_linear_fit(times: &[f64], values: &[f64]) -> Option<LinearFit> {
    let (ts, logs): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    linear_fit(&ts, &logs)
}

/// Average slope of the upper concave envelope of `points` over the part of
/// the x-range above the fraction `from` (0.75 = top quartile).
pub fn upper_hull_slope(points: &[(f64, f64)], from: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b unless it lies strictly above the chord from a to p.
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        if hull.last().is_some_and(|h| h.0 == p.0) {
            hull.pop();
        }
        hull.push(p);
    }
    let (x0, x1) = (hull[0].0, hull[hull.len() - 1].0);
    if x1 == x0 {
        return f64::NAN;
    }
    let xq = x0 + from.clamp(0.0, 1.0) * (x1 - x0);
    let eval = |x: f64| {
        let k = hull.partition_point(|h| h.0 < x).clamp(1, hull.len() - 1);
        let (a, b) = (hull[k - 1], hull[k]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    };
    if x1 - xq <= 0.0 {
        let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
        return (b.1 - a.1) / (b.0 - a.0);
    }
    (hull[hull.len() - 1].1 - eval(xq)) / (x1 - xq)
}
