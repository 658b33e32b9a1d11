//! Total male and female mass under constant rates:
//!
//! ```text
//! M' = lambda - (D_m + U_mm M + U_mf F) M
//! F' = lambda - (D_f + U_fm M + U_ff F) F,    lambda = (p_f F + p_m M) / 2
//! ```
//!
//! The population persists iff `p_m / D_m + p_f / D_f > 2`; then the system
//! has exactly one positive stationary point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{step_count, step_span, Scheme};
use crate::rates::ConstantRates;

/// Relative residual required of a stationary point.
pub const STATIONARY_TOLERANCE: f64 = 1e-10;

const MAX_ITERATIONS: usize = 500;
const TAU_MIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalsState {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl TotalsState {
    pub fn new(m: f64, f: f64) -> Self {
        Self { m, f }
    }

    /// Birth rate `(p_f F + p_m M) / 2`.
    pub fn lambda(&self, r: &ConstantRates) -> f64 {
        0.5 * (r.p_f * self.f + r.p_m * self.m)
    }

    /// `M / F`, if there are females.
    pub fn sex_ratio(&self) -> Option<f64> {
        (self.f > 0.0).then(|| self.m / self.f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Persistence,
    Extinction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StationaryResult {
    Persistent { m_bar: f64, f_bar: f64, residual: f64 },
    ExtinctOnly,
}

pub fn totals_rhs(s: TotalsState, r: &ConstantRates) -> (f64, f64) {
    let lambda = s.lambda(r);
    (
        lambda - (r.d_m + r.u_mm * s.m + r.u_mf * s.f) * s.m,
        lambda - (r.d_f + r.u_fm * s.m + r.u_ff * s.f) * s.f,
    )
}

/// Largest component of the right-hand side relative to the birth and death
/// fluxes it balances.
pub fn relative_residual(s: TotalsState, r: &ConstantRates) -> f64 {
    let lambda = s.lambda(r);
    let (dm, df) = totals_rhs(s, r);
    let death_m = (r.d_m + r.u_mm * s.m + r.u_mf * s.f) * s.m;
    let death_f = (r.d_f + r.u_fm * s.m + r.u_ff * s.f) * s.f;
    let scale = lambda.max(death_m).max(death_f).max(f64::MIN_POSITIVE);
    dm.abs().max(df.abs()) / scale
}

/// Boundary case `p_m / D_m + p_f / D_f = 2` counts as extinction.
pub fn classify(r: &ConstantRates) -> Classification {
    if r.p_m / r.d_m + r.p_f / r.d_f > 2.0 {
        Classification::Persistence
    } else {
        Classification::Extinction
    }
}

fn jacobian(s: TotalsState, r: &ConstantRates) -> [[f64; 2]; 2] {
    [
        [
            0.5 * r.p_m - r.d_m - 2.0 * r.u_mm * s.m - r.u_mf * s.f,
            0.5 * r.p_f - r.u_mf * s.m,
        ],
        [
            0.5 * r.p_m - r.u_fm * s.f,
            0.5 * r.p_f - r.d_f - r.u_fm * s.m - 2.0 * r.u_ff * s.f,
        ],
    ]
}

/// Side length of the box `(0, B]^2` that contains the positive root.
pub fn search_box(r: &ConstantRates) -> f64 {
    let min_u = r.u_ff.min(r.u_fm).min(r.u_mf).min(r.u_mm);
    (r.p_m + r.p_f) / (2.0 * min_u)
}

/// Positive root reached from `start` by pseudo-transient continuation: damped
/// Newton steps on `(I / tau - J) delta = G`, with `tau` grown as the residual
/// falls and steps halved to stay in the open quadrant.
pub fn stationary_from(r: &ConstantRates, start: TotalsState) -> Result<TotalsState> {
    let mut s = start;
    let mut rel = relative_residual(s, r);
    let mut tau = TAU_MIN;
    for _ in 0..MAX_ITERATIONS {
        if rel < STATIONARY_TOLERANCE * 1e-2 {
            return Ok(s);
        }
        let g = totals_rhs(s, r);
        let j = jacobian(s, r);
        let a = [[1.0 / tau - j[0][0], -j[0][1]], [-j[1][0], 1.0 / tau - j[1][1]]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let mut dm = (g.0 * a[1][1] - g.1 * a[0][1]) / det;
        let mut df = (a[0][0] * g.1 - a[1][0] * g.0) / det;
        while !(s.m + dm > 0.0 && s.f + df > 0.0) {
            dm *= 0.5;
            df *= 0.5;
            if dm.abs().max(df.abs()) < f64::MIN_POSITIVE {
                break;
            }
        }
        s = TotalsState::new(s.m + dm, s.f + df);
        let next = relative_residual(s, r);
        // The relative residual does not shrink while leaving the unstable
        // origin, so tau is kept at least at its starting value there.
        tau = (tau * rel / next.max(f64::MIN_POSITIVE)).clamp(TAU_MIN, 1e12);
        rel = next;
    }
    let residual = relative_residual(s, r);
    if residual < STATIONARY_TOLERANCE {
        Ok(s)
    } else {
        Err(Error::ConvergenceFailure {
            m: s.m,
            f: s.f,
            residual,
        })
    }
}

/// The unique positive stationary point in the persistence regime, found from
/// a 4 x 4 grid of starts in the search box; `ExtinctOnly` otherwise.
pub fn stationary_point(r: &ConstantRates) -> Result<StationaryResult> {
    r.validate_strict()?;
    if classify(r) == Classification::Extinction {
        return Ok(StationaryResult::ExtinctOnly);
    }
    let b = search_box(r);
    let mut best: Option<(TotalsState, f64)> = None;
    let mut failure = None;
    for i in 0..4 {
        for j in 0..4 {
            let start = TotalsState::new(b * (i as f64 + 0.5) / 4.0, b * (j as f64 + 0.5) / 4.0);
            match stationary_from(r, start) {
                Ok(s) => {
                    let res = relative_residual(s, r);
                    if best.is_none_or(|(_, b)| res < b) {
                        best = Some((s, res));
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
    }
    match (best, failure) {
        (Some((s, residual)), _) => Ok(StationaryResult::Persistent {
            m_bar: s.m,
            f_bar: s.f,
            residual,
        }),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("sixteen starts were tried"),
    }
}

/// RK4 trajectory sampled at every step, including `t = 0`.
pub fn integrate_totals(
    s0: TotalsState,
    r: &ConstantRates,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, TotalsState)>> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidParameters(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let steps = step_count(t_end, dt);
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = vec![s0.m, s0.f];
    out.push((0.0, s0));
    for k in 0..steps {
        let (t, h) = step_span(t_end, dt, k, steps);
        y = Scheme::Rk4.step(t, &y, h, |_, y| {
            let (a, b) = totals_rhs(TotalsState::new(y[0], y[1]), r);
            Ok(vec![a, b])
        })?;
        out.push((t + h, TotalsState::new(y[0], y[1])));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_examples() {
        let r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        assert_eq!(totals_rhs(TotalsState::new(0.0, 0.0), &r), (0.0, 0.0));
        let (a, b) = totals_rhs(TotalsState::new(1.3, 1.3), &r);
        assert_eq!(a, b);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify(&ConstantRates::symmetric(1.0, 1.0, 0.25)),
            Classification::Extinction
        );
        assert_eq!(
            classify(&ConstantRates::symmetric(2.0, 1.0, 0.25)),
            Classification::Persistence
        );
        let mut r = ConstantRates::symmetric(0.0, 7.0, 0.25);
        r.p_f = 3.0;
        r.d_f = 1.0;
        assert_eq!(classify(&r), Classification::Persistence);
    }

    #[test]
    fn symmetric_root() {
        let r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        match stationary_point(&r).unwrap() {
            StationaryResult::Persistent { m_bar, f_bar, residual } => {
                assert!((m_bar - 2.0).abs() < 1e-12);
                assert!((f_bar - 2.0).abs() < 1e-12);
                assert!(residual < 1e-10);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            stationary_point(&ConstantRates::symmetric(1.0, 1.0, 0.25)).unwrap(),
            StationaryResult::ExtinctOnly
        );
    }

    #[test]
    fn lopsided_root_is_stationary() {
        let r = ConstantRates {
            p_f: 3.0,
            p_m: 0.0,
            d_f: 1.0,
            d_m: 0.4,
            u_ff: 0.1,
            u_fm: 0.7,
            u_mf: 0.05,
            u_mm: 0.3,
        };
        let StationaryResult::Persistent { m_bar, f_bar, .. } = stationary_point(&r).unwrap() else {
            panic!("expected persistence");
        };
        let (a, b) = totals_rhs(TotalsState::new(m_bar, f_bar), &r);
        assert!(a.abs() < 1e-10 && b.abs() < 1e-10);
    }

    #[test]
    fn fixed_point_is_kept() {
        let r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        let traj = integrate_totals(TotalsState::new(2.0, 2.0), &r, 100.0, 0.01).unwrap();
        assert!(traj.iter().all(|(_, s)| (s.m - 2.0).abs() < 1e-8 && (s.f - 2.0).abs() < 1e-8));
    }
}
