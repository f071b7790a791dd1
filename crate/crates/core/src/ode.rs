//! The limiting two-dimensional dynamical system
//!
//! ```text
//! x'(t) = (gamma - beta) x(t) - y(t) phi(x(t))
//! y'(t) = y(t) psi(x(t))
//! ```
//!
//! integrated with an adaptive Dormand–Prince 5(4) pair that lands exactly on
//! the requested sample grid, plus the first integral available when `phi` is
//! linear, bracketed equilibrium search and Jacobians.

use serde::Serialize;
use thiserror::Error;

use crate::hazards::DomainError;
use crate::quad;
use crate::responses::ResponseSet;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("conservation law requires a linear functional response phi(x) = c x")]
    NonLinearPhi,
    #[error("initial data must be strictly positive")]
    NonPositiveStart,
    #[error("right-hand side is not locally Lipschitz on the density range (probe at x = {x})")]
    LipschitzProbe { x: f64 },
}

/// Integration failure carrying the partial solution up to the failure time.
#[derive(Debug)]
pub struct OdeFailure {
    pub partial: OdeSolution,
    pub reason: String,
}

impl std::fmt::Display for OdeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "integration aborted: {}", self.reason)
    }
}

pub struct LimitSystem {
    responses: ResponseSet,
    prey_net: f64,
}

impl LimitSystem {
    pub fn new(responses: ResponseSet, prey_net: f64) -> Result<Self, OdeError> {
        let sys = LimitSystem { responses, prey_net };
        // Finite-difference Lipschitz probe: finite difference quotients of
        // phi and psi must stay finite across the admissible range.
        let grid = sys.responses.x_range().probe_grid(17);
        for w in grid.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let dphi = (sys.responses.phi(x1)? - sys.responses.phi(x0)?) / (x1 - x0);
            let dpsi = (sys.responses.psi(x1)? - sys.responses.psi(x0)?) / (x1 - x0);
            if !dphi.is_finite() || !dpsi.is_finite() {
                return Err(OdeError::LipschitzProbe { x: x0 });
            }
        }
        Ok(sys)
    }

    pub fn responses(&self) -> &ResponseSet {
        &self.responses
    }

    pub fn prey_net(&self) -> f64 {
        self.prey_net
    }

    pub fn rhs(&self, x: f64, y: f64) -> Result<(f64, f64), DomainError> {
        let phi = self.responses.phi(x)?;
        let psi = self.responses.psi(x)?;
        Ok((self.prey_net * x - y * phi, y * psi))
    }

    /// Adaptive DP5(4) with positivity-preserving step rejection; the solver
    /// steps exactly onto every requested grid time.
    pub fn integrate(
        &self,
        x0: f64,
        y0: f64,
        grid: &[f64],
        rel_tol: f64,
        record_conservation: bool,
    ) -> Result<OdeSolution, OdeFailure> {
        assert!(!grid.is_empty() && grid[0] >= 0.0);
        assert!(grid.windows(2).all(|w| w[1] > w[0]), "grid must increase");
        let mut sol = OdeSolution {
            times: Vec::with_capacity(grid.len()),
            x: Vec::with_capacity(grid.len()),
            y: Vec::with_capacity(grid.len()),
            conservation: if record_conservation { Some(Vec::new()) } else { None },
            steps: 0,
            rejected_steps: 0,
            max_step_error: 0.0,
            dense: Vec::new(),
        };
        if x0 <= 0.0 && y0 < 0.0 {
            return Err(OdeFailure {
                partial: sol,
                reason: "nonpositive initial data".into(),
            });
        }

        let mut t = 0.0;
        let mut x = x0;
        let mut y = y0;
        let mut f = match self.rhs(x, y) {
            Ok(f) => f,
            Err(e) => {
                return Err(OdeFailure {
                    partial: sol,
                    reason: e.to_string(),
                })
            }
        };
        let record = |sol: &mut OdeSolution, t: f64, x: f64, y: f64, f: (f64, f64)| {
            sol.dense.push(DensePoint { t, x, y, fx: f.0, fy: f.1 });
        };
        record(&mut sol, t, x, y, f);

        let t_final = *grid.last().unwrap();
        let mut h = (t_final / 100.0).min(0.1).max(1e-6);
        let mut next_grid = 0usize;

        // Capture grid point at t = 0 if requested.
        if grid[next_grid] == 0.0 {
            self.push_sample(&mut sol, 0.0, x, y);
            next_grid += 1;
        }

        let mut steps_guard = 0u64;
        while t < t_final {
            steps_guard += 1;
            if steps_guard > 50_000_000 {
                return Err(OdeFailure {
                    partial: sol,
                    reason: "step budget exhausted".into(),
                });
            }
            let target = grid[next_grid.min(grid.len() - 1)];
            let mut h_try = h.min(target - t).max(1e-15);

            let attempt = self.dp_step(t, x, y, f, h_try);
            let (x_new, y_new, f_new, err) = match attempt {
                Ok(v) => v,
                Err(e) => {
                    return Err(OdeFailure {
                        partial: sol,
                        reason: e.to_string(),
                    })
                }
            };

            let scale_x = 1e-12 + rel_tol * x.abs().max(x_new.abs());
            let scale_y = 1e-12 + rel_tol * y.abs().max(y_new.abs());
            let err_norm =
                ((err.0 / scale_x).powi(2) * 0.5 + (err.1 / scale_y).powi(2) * 0.5).sqrt();
            let positive_ok = x_new > 0.0 && y_new >= 0.0;

            if err_norm <= 1.0 && positive_ok {
                t += h_try;
                x = x_new;
                y = y_new;
                f = f_new;
                sol.steps += 1;
                sol.max_step_error = sol.max_step_error.max(err_norm * rel_tol);
                record(&mut sol, t, x, y, f);
                while next_grid < grid.len() && (grid[next_grid] - t).abs() <= 1e-12 * (1.0 + t) {
                    self.push_sample(&mut sol, grid[next_grid], x, y);
                    next_grid += 1;
                }
            } else {
                sol.rejected_steps += 1;
                if !positive_ok {
                    h_try *= 0.5;
                    h = h_try;
                    if h < 1e-14 * (1.0 + t) {
                        return Err(OdeFailure {
                            partial: sol,
                            reason: format!("step collapse near the positivity boundary at t = {t}"),
                        });
                    }
                    continue;
                }
            }
            // PI-free controller: classical fifth-root rule with clamps.
            let factor = if err_norm > 0.0 {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (h_try * factor).max(1e-14);
            if h < 1e-14 * (1.0 + t) {
                return Err(OdeFailure {
                    partial: sol,
                    reason: format!("step size collapse at t = {t}"),
                });
            }
        }
        Ok(sol)
    }

    fn push_sample(&self, sol: &mut OdeSolution, t: f64, x: f64, y: f64) {
        sol.times.push(t);
        sol.x.push(x);
        sol.y.push(y);
        if let Some(cons) = &mut sol.conservation {
            cons.push(self.conservation(x, y).unwrap_or(f64::NAN));
        }
    }

    /// One Dormand–Prince 5(4) step; returns the 5th-order solution, the new
    /// derivative (FSAL) and the embedded error estimate.
    #[allow(clippy::type_complexity)]
    fn dp_step(
        &self,
        _t: f64,
        x: f64,
        y: f64,
        f1: (f64, f64),
        h: f64,
    ) -> Result<(f64, f64, (f64, f64), (f64, f64)), DomainError> {
        const A21: f64 = 1.0 / 5.0;
        const A31: f64 = 3.0 / 40.0;
        const A32: f64 = 9.0 / 40.0;
        const A41: f64 = 44.0 / 45.0;
        const A42: f64 = -56.0 / 15.0;
        const A43: f64 = 32.0 / 9.0;
        const A51: f64 = 19372.0 / 6561.0;
        const A52: f64 = -25360.0 / 2187.0;
        const A53: f64 = 64448.0 / 6561.0;
        const A54: f64 = -212.0 / 729.0;
        const A61: f64 = 9017.0 / 3168.0;
        const A62: f64 = -355.0 / 33.0;
        const A63: f64 = 46732.0 / 5247.0;
        const A64: f64 = 49.0 / 176.0;
        const A65: f64 = -5103.0 / 18656.0;
        const B1: f64 = 35.0 / 384.0;
        const B3: f64 = 500.0 / 1113.0;
        const B4: f64 = 125.0 / 192.0;
        const B5: f64 = -2187.0 / 6784.0;
        const B6: f64 = 11.0 / 84.0;
        // 4th-order weights for the error estimate.
        const E1: f64 = 71.0 / 57600.0;
        const E3: f64 = -71.0 / 16695.0;
        const E4: f64 = 71.0 / 1920.0;
        const E5: f64 = -17253.0 / 339200.0;
        const E6: f64 = 22.0 / 525.0;
        const E7: f64 = -1.0 / 40.0;

        let eval = |x: f64, y: f64| self.rhs(x.max(1e-300), y);

        let k1 = f1;
        let k2 = eval(x + h * A21 * k1.0, y + h * A21 * k1.1)?;
        let k3 = eval(
            x + h * (A31 * k1.0 + A32 * k2.0),
            y + h * (A31 * k1.1 + A32 * k2.1),
        )?;
        let k4 = eval(
            x + h * (A41 * k1.0 + A42 * k2.0 + A43 * k3.0),
            y + h * (A41 * k1.1 + A42 * k2.1 + A43 * k3.1),
        )?;
        let k5 = eval(
            x + h * (A51 * k1.0 + A52 * k2.0 + A53 * k3.0 + A54 * k4.0),
            y + h * (A51 * k1.1 + A52 * k2.1 + A53 * k3.1 + A54 * k4.1),
        )?;
        let k6 = eval(
            x + h * (A61 * k1.0 + A62 * k2.0 + A63 * k3.0 + A64 * k4.0 + A65 * k5.0),
            y + h * (A61 * k1.1 + A62 * k2.1 + A63 * k3.1 + A64 * k4.1 + A65 * k5.1),
        )?;
        let x5 = x + h * (B1 * k1.0 + B3 * k3.0 + B4 * k4.0 + B5 * k5.0 + B6 * k6.0);
        let y5 = y + h * (B1 * k1.1 + B3 * k3.1 + B4 * k4.1 + B5 * k5.1 + B6 * k6.1);
        let k7 = eval(x5, y5)?;
        let err = (
            h * (E1 * k1.0 + E3 * k3.0 + E4 * k4.0 + E5 * k5.0 + E6 * k6.0 + E7 * k7.0),
            h * (E1 * k1.1 + E3 * k3.1 + E4 * k4.1 + E5 * k5.1 + E6 * k6.1 + E7 * k7.1),
        );
        Ok((x5, y5, k7, err))
    }

    /// First integral for linear `phi(x) = c x`:
    /// `L(x, y) = lambda ln y - c y - int_e^x psi(v)/v dv` with
    /// `lambda = gamma - beta`. Constant along orbits for any `psi`.
    pub fn conservation(&self, x: f64, y: f64) -> Result<f64, OdeError> {
        let Some(c) = self.responses.linear_phi_coeff() else {
            return Err(OdeError::NonLinearPhi);
        };
        let lambda = self.prey_net;
        let integral = match self
            .responses
            .closed()
            .and_then(|cf| Some((cf.psi_over_v_antiderivative(x)?, cf.psi_over_v_antiderivative(std::f64::consts::E)?)))
        {
            Some((at_x, at_e)) => at_x - at_e,
            None => {
                let set = &self.responses;
                quad::integrate(
                    |v| set.psi(v).unwrap_or(f64::NAN) / v,
                    std::f64::consts::E,
                    x,
                    1e-12,
                )
            }
        };
        Ok(lambda * y.ln() - c * y - integral)
    }

    /// Brent root of `psi` on `[lo, hi]`; `None` without a sign change.
    pub fn find_equilibrium(&self, lo: f64, hi: f64) -> Result<Option<Equilibrium>, DomainError> {
        let f_lo = self.responses.psi(lo)?;
        let f_hi = self.responses.psi(hi)?;
        if f_lo == 0.0 {
            return Ok(Some(self.equilibrium_at(lo)?));
        }
        if f_hi == 0.0 {
            return Ok(Some(self.equilibrium_at(hi)?));
        }
        if f_lo * f_hi > 0.0 {
            return Ok(None);
        }
        let x_star = brent(|x| self.responses.psi(x), lo, hi, f_lo, f_hi, 1e-12)?;
        Ok(Some(self.equilibrium_at(x_star)?))
    }

    fn equilibrium_at(&self, x_star: f64) -> Result<Equilibrium, DomainError> {
        let y_star = self.prey_net * x_star / self.responses.phi(x_star)?;
        let jac = self.jacobian(x_star, y_star, JacobianMode::Analytic)?;
        Ok(Equilibrium {
            x: x_star,
            y: y_star,
            jacobian: jac,
            eigenvalues: eigenvalues_2x2(jac),
        })
    }

    /// Jacobian of the right-hand side:
    /// `[[lambda - y phi'(x), -phi(x)], [y psi'(x), psi(x)]]`.
    pub fn jacobian(
        &self,
        x: f64,
        y: f64,
        mode: JacobianMode,
    ) -> Result<[[f64; 2]; 2], DomainError> {
        match mode {
            JacobianMode::Analytic => Ok([
                [
                    self.prey_net - y * self.responses.phi_prime(x)?,
                    -self.responses.phi(x)?,
                ],
                [y * self.responses.psi_prime(x)?, self.responses.psi(x)?],
            ]),
            JacobianMode::FiniteDifference => {
                let hx = 1e-6 * (1.0 + x.abs());
                let hy = 1e-6 * (1.0 + y.abs());
                let fxp = self.rhs(x + hx, y)?;
                let fxm = self.rhs(x - hx, y)?;
                let fyp = self.rhs(x, y + hy)?;
                let fym = self.rhs(x, y - hy)?;
                Ok([
                    [(fxp.0 - fxm.0) / (2.0 * hx), (fyp.0 - fym.0) / (2.0 * hy)],
                    [(fxp.1 - fxm.1) / (2.0 * hx), (fyp.1 - fym.1) / (2.0 * hy)],
                ])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Equilibrium {
    pub x: f64,
    pub y: f64,
    pub jacobian: [[f64; 2]; 2],
    /// Eigenvalues as (re, im) pairs; stability is reported, never asserted.
    pub eigenvalues: [(f64, f64); 2],
}

#[derive(Debug, Clone, Copy)]
pub struct DensePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub conservation: Option<Vec<f64>>,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Largest accepted per-step error estimate (absolute, tolerance units).
    pub max_step_error: f64,
    dense: Vec<DensePoint>,
}

impl OdeSolution {
    /// Cubic-Hermite evaluation between accepted steps. Grid times are exact
    /// solver states; interpolation only serves off-grid queries.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let d = &self.dense;
        if t <= d[0].t {
            return (d[0].x, d[0].y);
        }
        if t >= d[d.len() - 1].t {
            let p = &d[d.len() - 1];
            return (p.x, p.y);
        }
        let i = d.partition_point(|p| p.t <= t) - 1;
        let (p0, p1) = (&d[i], &d[i + 1]);
        let h = p1.t - p0.t;
        let s = (t - p0.t) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (
            h00 * p0.x + h10 * h * p0.fx + h01 * p1.x + h11 * h * p1.fx,
            h00 * p0.y + h10 * h * p0.fy + h01 * p1.y + h11 * h * p1.fy,
        )
    }
}

fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [((tr + r) / 2.0, 0.0), ((tr - r) / 2.0, 0.0)]
    } else {
        let r = (-disc).sqrt() / 2.0;
        [(tr / 2.0, r), (tr / 2.0, -r)]
    }
}

/// Classical Brent–Dekker root finder on a bracketing interval.
fn brent<E>(
    f: impl Fn(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    rel_tol: f64,
) -> Result<f64, E> {
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() <= rel_tol * (1.0 + b.abs()) {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // Inverse quadratic interpolation.
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let cond = !((lo.min(b) < s && s < lo.max(b))
            && (!mflag || (s - b).abs() < (b - c).abs() / 2.0)
            && (mflag || (s - b).abs() < d.abs() / 2.0));
        if cond {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s)?;
        d = c - b;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}
