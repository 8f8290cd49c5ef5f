//! Adaptive time steppers for autonomous systems `dy/dt = f(y)`.
//!
//! Two schemes are provided: the explicit Dormand–Prince 5(4) pair and a
//! variable-step BDF2 with a quadratic-extrapolation predictor for the error
//! estimate. Both visit a list of output times exactly and call a projection
//! hook after every accepted step.

use crate::{Error, Result};

/// Outcome of the post-step projection.
pub(crate) enum Projection {
    /// State accepted; the value is the mass removed by clipping.
    Accept(f64),
    /// State unusable; retry with a smaller step.
    Reject,
}

pub(crate) trait System {
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
    /// Solves `y − c f(y) = b` for `y`.
    fn implicit_solve(&self, c: f64, b: &[f64], y: &mut [f64]);
    fn project(&self, y: &mut [f64]) -> Projection;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub clip_budget: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub clipped: f64,
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], ctl: &StepControl) -> f64 {
    err.iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| e.abs() / (ctl.atol + ctl.rtol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

fn initial_step<S: System>(sys: &S, y: &[f64], span: f64) -> f64 {
    let mut dy = vec![0.0; y.len()];
    sys.rhs(y, &mut dy);
    let d0 = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let d1 = dy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = if d1 > 0.0 { 1e-3 * d0 / d1 } else { span };
    h.min(span).max(span * 1e-12)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "output times must be finite, non-negative and strictly increasing".into(),
        ));
    }
    Ok(())
}

struct Driver<'a> {
    ctl: &'a StepControl,
    stats: Stats,
    t: f64,
}

impl Driver<'_> {
    fn accept(&mut self, clipped: f64) -> Result<()> {
        self.stats.accepted += 1;
        self.stats.clipped += clipped;
        if self.stats.clipped > self.ctl.clip_budget {
            return Err(Error::ClipBudgetExceeded {
                accumulated: self.stats.clipped,
                budget: self.ctl.clip_budget,
            });
        }
        Ok(())
    }

    fn guard(&self, h: f64) -> Result<()> {
        let steps = self.stats.accepted + self.stats.rejected;
        if steps >= self.ctl.max_steps || h <= 8.0 * f64::EPSILON * self.t.max(f64::MIN_POSITIVE) {
            return Err(Error::StepSizeCollapse {
                time: self.t,
                step: h,
            });
        }
        Ok(())
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4); returns the state at every grid time.
pub(crate) fn dopri45<S: System>(
    sys: &S,
    y0: &[f64],
    grid: &[f64],
    ctl: &StepControl,
) -> Result<(Vec<Vec<f64>>, Stats)> {
    check_grid(grid)?;
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut err = vec![0.0; n];
    sys.rhs(&y, &mut k[0]);
    let mut drv = Driver {
        ctl,
        stats: Stats::default(),
        t: 0.0,
    };
    let mut h = initial_step(
        sys,
        &y,
        grid.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE),
    );
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        while drv.t < target {
            drv.guard(h)?;
            let planned = h;
            let last = drv.t + h >= target * (1.0 - 4.0 * f64::EPSILON);
            let step = if last { target - drv.t } else { h };
            for s in 0..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..=s].iter().enumerate() {
                        acc += a * k[j][i];
                    }
                    tmp[i] = y[i] + step * acc;
                }
                let (_, tail) = k.split_at_mut(s + 1);
                sys.rhs(&tmp, &mut tail[0]);
            }
            // tmp now holds the fifth-order solution, k[6] = f(tmp)
            for i in 0..n {
                err[i] = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            }
            let en = error_norm(&err, &y, &tmp, ctl);
            let fac = if en > 0.0 { 0.9 * en.powf(-0.2) } else { 5.0 };
            if en <= 1.0 {
                match sys.project(&mut tmp) {
                    Projection::Accept(clip) => {
                        drv.accept(clip)?;
                        drv.t = if last { target } else { drv.t + step };
                        std::mem::swap(&mut y, &mut tmp);
                        if clip > 0.0 {
                            sys.rhs(&y, &mut k[0]);
                        } else {
                            k.swap(0, 6);
                        }
                        h = step * fac.clamp(0.2, 5.0);
                        if last {
                            // a step shortened to hit the grid says nothing about the next one
                            h = h.max(planned);
                        }
                    }
                    Projection::Reject => {
                        drv.stats.rejected += 1;
                        h = 0.5 * step;
                    }
                }
            } else {
                drv.stats.rejected += 1;
                h = step * fac.clamp(0.2, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok((out, drv.stats))
}

/// Variable-step BDF2, started with backward Euler.
pub(crate) fn bdf2<S: System>(
    sys: &S,
    y0: &[f64],
    grid: &[f64],
    ctl: &StepControl,
) -> Result<(Vec<Vec<f64>>, Stats)> {
    check_grid(grid)?;
    let n = y0.len();
    // history, newest last: (t, y)
    let mut hist: Vec<(f64, Vec<f64>)> = vec![(0.0, y0.to_vec())];
    let mut drv = Driver {
        ctl,
        stats: Stats::default(),
        t: 0.0,
    };
    let mut h = initial_step(
        sys,
        y0,
        grid.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE),
    );
    let mut b = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut pred = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        while drv.t < target {
            drv.guard(h)?;
            let last = drv.t + h >= target * (1.0 - 4.0 * f64::EPSILON);
            let step = if last { target - drv.t } else { h };
            let t_new = drv.t + step;
            let (t_n, y_n) = hist.last().map(|(t, y)| (*t, y.as_slice())).unwrap();
            let order;
            let est;
            if hist.len() < 3 {
                // backward Euler, explicit Euler as predictor
                order = 1;
                sys.rhs(y_n, &mut f);
                for i in 0..n {
                    pred[i] = y_n[i] + step * f[i];
                }
                y_new.copy_from_slice(y_n);
                sys.implicit_solve(step, y_n, &mut y_new);
                est = 0.5;
            } else {
                order = 2;
                let (t_m, y_m) = (&hist[hist.len() - 2].0, &hist[hist.len() - 2].1);
                let (t_mm, y_mm) = (&hist[hist.len() - 3].0, &hist[hist.len() - 3].1);
                let w = step / (t_n - t_m);
                let a1 = (1.0 + w).powi(2) / (1.0 + 2.0 * w);
                let a2 = w * w / (1.0 + 2.0 * w);
                let c = step * (1.0 + w) / (1.0 + 2.0 * w);
                // quadratic extrapolation through the last three points
                let l0 = (t_new - t_m) * (t_new - t_mm) / ((t_n - t_m) * (t_n - t_mm));
                let l1 = (t_new - t_n) * (t_new - t_mm) / ((t_m - t_n) * (t_m - t_mm));
                let l2 = (t_new - t_n) * (t_new - t_m) / ((t_mm - t_n) * (t_mm - t_m));
                for i in 0..n {
                    b[i] = a1 * y_n[i] - a2 * y_m[i];
                    pred[i] = l0 * y_n[i] + l1 * y_m[i] + l2 * y_mm[i];
                }
                y_new.copy_from_slice(&pred);
                sys.implicit_solve(c, &b, &mut y_new);
                est = 2.0 / 11.0;
            }
            let diff: Vec<f64> = y_new
                .iter()
                .zip(&pred)
                .map(|(a, p)| est * (a - p))
                .collect();
            let en = error_norm(&diff, y_n, &y_new, ctl);
            let expo = -1.0 / (order as f64 + 1.0);
            let fac = if en > 0.0 { 0.9 * en.powf(expo) } else { 2.0 };
            if en <= 1.0 {
                match sys.project(&mut y_new) {
                    Projection::Accept(clip) => {
                        drv.accept(clip)?;
                        drv.t = if last { target } else { t_new };
                        hist.push((drv.t, y_new.clone()));
                        if hist.len() > 3 {
                            hist.remove(0);
                        }
                        // step ratios above 2 endanger zero-stability
                        h = step * fac.clamp(0.2, 2.0);
                    }
                    Projection::Reject => {
                        drv.stats.rejected += 1;
                        h = 0.5 * step;
                    }
                }
            } else {
                drv.stats.rejected += 1;
                h = step * fac.clamp(0.2, 1.0);
            }
        }
        out.push(hist.last().unwrap().1.clone());
    }
    Ok((out, drv.stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `dy/dt = −k y`
    struct Decay(f64);

    impl System for Decay {
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
        fn implicit_solve(&self, c: f64, b: &[f64], y: &mut [f64]) {
            y[0] = b[0] / (1.0 + c * self.0);
        }
        fn project(&self, _: &mut [f64]) -> Projection {
            Projection::Accept(0.0)
        }
    }

    const CTL: StepControl = StepControl {
        rtol: 1e-10,
        atol: 1e-14,
        max_steps: 1_000_000,
        clip_budget: 1e-8,
    };

    #[test]
    fn exponential_decay() {
        let grid = [0.5, 1.0, 3.0];
        let (rk, _) = dopri45(&Decay(2.0), &[1.0], &grid, &CTL).unwrap();
        let (bd, _) = bdf2(&Decay(2.0), &[1.0], &grid, &CTL).unwrap();
        for (i, t) in grid.iter().enumerate() {
            let exact = (-2.0 * t).exp();
            assert!((rk[i][0] - exact).abs() < 1e-10, "{} {}", rk[i][0], exact);
            assert!((bd[i][0] - exact).abs() < 1e-7, "{} {}", bd[i][0], exact);
        }
    }

    #[test]
    fn stiff_decay_needs_implicit_steps() {
        let ctl = StepControl {
            rtol: 1e-6,
            atol: 1e-10,
            max_steps: 10_000,
            ..CTL
        };
        let grid = [1e3];
        assert!(matches!(
            dopri45(&Decay(1e6), &[1.0], &grid, &ctl),
            Err(Error::StepSizeCollapse { .. })
        ));
        let (bd, stats) = bdf2(&Decay(1e6), &[1.0], &grid, &ctl).unwrap();
        assert!(bd[0][0].abs() < 1e-12);
        assert!(stats.accepted < 10_000);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(dopri45(&Decay(1.0), &[1.0], &[1.0, 0.5], &CTL).is_err());
    }
}
