//! Primal-dual interior point solver for smooth NLPs of the form
//!
//!   min f(x)  s.t.  g(x) = 0,  h(x) <= 0.
//!
//! The barrier parameter follows a monotone schedule: each outer iteration
//! solves the perturbed KKT conditions to a tolerance proportional to the
//! current mu, then shrinks mu by 0.2. Newton steps are damped by a
//! fraction-to-boundary rule (0.995) and halved when the KKT residual grows
//! immodestly. Slacks are re-synchronized with the constraint values when a
//! step collapses, and the inequality multipliers are kept inside a box
//! around mu/z, which keeps degenerate instances from running away.

use crate::numerics::{lu_factorize, SparseMatrix};
use log::{debug, trace};

/// Problem callbacks. Jacobians are dense-row-count sparse triplet matrices
/// with shape (n_constraints, n_vars); the Hessian is the full symmetric
/// Lagrangian Hessian including the objective term.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    /// f and its gradient.
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// g, h, dg, dh evaluated at x.
    fn constraints(&self, x: &[f64]) -> ConstraintEval;
    /// Hessian of f + lam'g + mu'h.
    fn lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> SparseMatrix;
}

pub struct ConstraintEval {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub dg: SparseMatrix,
    pub dh: SparseMatrix,
}

#[derive(Debug, Clone)]
pub struct IpmOptions {
    pub tolerance: f64,
    pub mu_initial: f64,
    /// Inner loop stops when the scaled KKT error falls below kappa_eps * mu.
    pub kappa_eps: f64,
    /// Barrier reduction factor per outer iteration.
    pub kappa_mu: f64,
    pub tau_min: f64,
    pub max_iterations: usize,
    pub max_inner: usize,
    pub mu_min: f64,
    pub mu_safeguard: f64,
    pub max_backtracks: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tolerance: 1e-6,
            mu_initial: 1.0,
            kappa_eps: 10.0,
            kappa_mu: 0.2,
            tau_min: 0.995,
            max_iterations: 500,
            max_inner: 80,
            mu_min: 1e-12,
            mu_safeguard: 1e10,
            max_backtracks: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IpmStatus {
    Optimal,
    /// Stationary for the infeasibility measure but primal-infeasible.
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: IpmStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
}

struct Eval {
    f: f64,
    df: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    dg: SparseMatrix,
    dh: SparseMatrix,
}

fn evaluate(p: &dyn NlpProblem, x: &[f64]) -> Eval {
    let (f, df) = p.objective(x);
    let c = p.constraints(x);
    Eval {
        f,
        df,
        g: c.g,
        h: c.h,
        dg: c.dg,
        dh: c.dh,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient of the Lagrangian: df + dg' lam + dh' mu.
fn lagrangian_gradient(e: &Eval, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = e.df.clone();
    let gt = e.dg.transpose_mat_vec(lam).expect("dg shape");
    let ht = e.dh.transpose_mat_vec(mu).expect("dh shape");
    for i in 0..lx.len() {
        lx[i] += gt[i] + ht[i];
    }
    lx
}

/// Scaled KKT errors in the style of production barrier codes: gradient and
/// complementarity are divided by a multiplier-size scale so that runaway
/// duals do not mask convergence.
fn kkt_errors(e: &Eval, lam: &[f64], mu: &[f64], z: &[f64], bmu: f64) -> KktResiduals {
    let n_mult = (lam.len() + mu.len()).max(1);
    let mult_sum: f64 = lam.iter().map(|v| v.abs()).sum::<f64>()
        + mu.iter().map(|v| v.abs()).sum::<f64>();
    let sd = (mult_sum / (100.0 * n_mult as f64)).max(1.0);
    let sc = if mu.is_empty() {
        1.0
    } else {
        (mu.iter().map(|v| v.abs()).sum::<f64>() / (100.0 * mu.len() as f64)).max(1.0)
    };
    let lx = lagrangian_gradient(e, lam, mu);
    let e_grad = inf_norm(&lx) / sd;
    let e_g = inf_norm(&e.g);
    let e_h = e.h.iter().fold(0.0f64, |m, &v| m.max(v));
    let e_comp = z
        .iter()
        .zip(mu)
        .fold(0.0f64, |m, (&zi, &mi)| m.max((zi * mi - bmu).abs()))
        / sc;
    KktResiduals {
        stationarity: e_grad,
        primal: e_g.max(e_h.max(0.0)),
        complementarity: e_comp,
    }
}

/// Unscaled inf-norm of the full perturbed KKT system, used by the step
/// acceptance test.
fn kkt_raw_norm(e: &Eval, lam: &[f64], mu: &[f64], z: &[f64], bmu: f64) -> f64 {
    let lx = lagrangian_gradient(e, lam, mu);
    let mut m = inf_norm(&lx).max(inf_norm(&e.g));
    for (i, &hi) in e.h.iter().enumerate() {
        m = m.max((hi + z[i]).abs());
        m = m.max((z[i] * mu[i] - bmu).abs());
    }
    m
}

/// Solve the NLP from the given starting point.
pub fn solve(problem: &dyn NlpProblem, x0: &[f64], opts: &IpmOptions) -> IpmResult {
    let nx = problem.num_vars();
    let neq = problem.num_eq();
    let niq = problem.num_ineq();
    assert_eq!(x0.len(), nx);

    let mut x = x0.to_vec();
    let mut e = evaluate(problem, &x);
    let mut z: Vec<f64> = e.h.iter().map(|&hi| (-hi).max(1.0)).collect();
    let mut mu: Vec<f64> = z
        .iter()
        .map(|&zi| (opts.mu_initial / zi).max(opts.mu_initial / opts.mu_safeguard))
        .collect();
    let mut lam = vec![0.0; neq];
    let mut bmu = opts.mu_initial;
    let mut it = 0usize;

    let fail = |x: Vec<f64>, f: f64, it: usize, res: KktResiduals, status: IpmStatus| IpmResult {
        x,
        objective: f,
        status,
        iterations: it,
        residuals: res,
        lam: Vec::new(),
        mu: Vec::new(),
    };

    while it < opts.max_iterations {
        // inner loop at fixed barrier parameter
        let mut inner = 0usize;
        while inner < opts.max_inner && it < opts.max_iterations {
            let errs = kkt_errors(&e, &lam, &mu, &z, bmu);
            let err_mu = errs
                .stationarity
                .max(errs.primal)
                .max(errs.complementarity);
            if err_mu <= opts.kappa_eps * bmu {
                break;
            }
            inner += 1;
            it += 1;

            // assemble the condensed KKT system
            //   [ Lxx + dh' diag(mu/z) dh   dg' ] [dx  ]   [ -N ]
            //   [ dg                        0   ] [dlam] = [ -g ]
            let lxx = problem.lagrangian_hessian(&x, &lam, &mu);
            let mut n_vec = lagrangian_gradient(&e, &lam, &mu);
            {
                // N = Lx + dh' (mu .* h + bmu) ./ z
                let t: Vec<f64> = e
                    .h
                    .iter()
                    .enumerate()
                    .map(|(i, &hi)| (mu[i] * hi + bmu) / z[i])
                    .collect();
                let ht = e.dh.transpose_mat_vec(&t).expect("dh shape");
                for i in 0..nx {
                    n_vec[i] += ht[i];
                }
            }

            let mut rhs = Vec::with_capacity(nx + neq);
            rhs.extend(n_vec.iter().map(|v| -v));
            rhs.extend(e.g.iter().map(|v| -v));

            // group dh entries by constraint row once per iteration
            let mut dh_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); niq];
            for &(r, c, v) in e.dh.entries() {
                dh_rows[r].push((c, v));
            }

            let mut delta = 0.0f64;
            let mut sol: Option<Vec<f64>> = None;
            for _ in 0..12 {
                let mut kkt = SparseMatrix::new(nx + neq, nx + neq);
                for &(r, c, v) in lxx.entries() {
                    kkt.push(r, c, v);
                }
                // dh' diag(mu/z) dh
                for (r, row) in dh_rows.iter().enumerate() {
                    let w = mu[r] / z[r];
                    for &(ci, vi) in row {
                        for &(cj, vj) in row {
                            kkt.push(ci, cj, vi * vj * w);
                        }
                    }
                }
                for &(r, c, v) in e.dg.entries() {
                    kkt.push(nx + r, c, v);
                    kkt.push(c, nx + r, v);
                }
                if delta > 0.0 {
                    for i in 0..nx {
                        kkt.push(i, i, delta);
                    }
                    for i in 0..neq {
                        kkt.push(nx + i, nx + i, -delta);
                    }
                }
                match lu_factorize(&kkt).and_then(|f| f.solve(&rhs)) {
                    Ok(cand)
                        if cand.iter().all(|v| v.is_finite())
                            && inf_norm(&cand) <= 1e6 * (1.0 + inf_norm(&x)) =>
                    {
                        sol = Some(cand);
                        break;
                    }
                    _ => {
                        delta = if delta == 0.0 { 1e-8 } else { delta * 100.0 };
                    }
                }
            }
            let sol = match sol {
                Some(s) => s,
                None => {
                    let errs = kkt_errors(&e, &lam, &mu, &z, 0.0);
                    return fail(x, e.f, it, errs, IpmStatus::NumericalFailure);
                }
            };
            let dx = &sol[..nx];
            let dlam = &sol[nx..];
            // dz = -h - z - dh dx ; dmu = -mu + (bmu - mu .* dz) ./ z
            let dh_dx = e.dh.mat_vec(dx).expect("dh shape");
            let dz: Vec<f64> = (0..niq).map(|i| -e.h[i] - z[i] - dh_dx[i]).collect();
            let dmu: Vec<f64> = (0..niq)
                .map(|i| -mu[i] + (bmu - mu[i] * dz[i]) / z[i])
                .collect();

            let tau = opts.tau_min.max(1.0 - bmu);
            let mut ap = 1.0f64;
            for i in 0..niq {
                if dz[i] < 0.0 {
                    ap = ap.min(tau * z[i] / -dz[i]);
                }
            }
            let mut ad = 1.0f64;
            for i in 0..niq {
                if dmu[i] < 0.0 {
                    ad = ad.min(tau * mu[i] / -dmu[i]);
                }
            }

            // damped acceptance: halve the step while the residual explodes
            let r0 = kkt_raw_norm(&e, &lam, &mu, &z, bmu);
            let mut accepted = false;
            for _ in 0..opts.max_backtracks {
                let xt: Vec<f64> = x.iter().zip(dx).map(|(xi, di)| xi + ap * di).collect();
                let zt: Vec<f64> = z.iter().zip(&dz).map(|(zi, di)| zi + ap * di).collect();
                let lamt: Vec<f64> = lam.iter().zip(dlam).map(|(li, di)| li + ad * di).collect();
                let mut_t: Vec<f64> = mu.iter().zip(&dmu).map(|(mi, di)| mi + ad * di).collect();
                let et = evaluate(problem, &xt);
                let finite = xt.iter().all(|v| v.is_finite())
                    && et.g.iter().all(|v| v.is_finite())
                    && et.h.iter().all(|v| v.is_finite());
                if finite {
                    let r1 = kkt_raw_norm(&et, &lamt, &mut_t, &zt, bmu);
                    if r1 <= 10.0 * r0 + 10.0 * bmu {
                        x = xt;
                        z = zt;
                        lam = lamt;
                        mu = mut_t;
                        e = et;
                        accepted = true;
                        break;
                    }
                }
                ap *= 0.5;
                ad *= 0.5;
            }
            // repair: re-sync slacks when a step collapses or drifts apart
            if !accepted || ap < 1e-8 || {
                let drift = e
                    .h
                    .iter()
                    .zip(&z)
                    .fold(0.0f64, |m, (&hi, &zi)| m.max((hi + zi).abs()));
                drift > 100.0 * (1.0 + bmu)
            } {
                for i in 0..niq {
                    z[i] = (-e.h[i]).max(1e-10).max(bmu / mu[i].max(1.0));
                }
            }
            for i in 0..niq {
                z[i] = z[i].max(1e-12);
                let lo = bmu / (opts.mu_safeguard * z[i]);
                let hi = bmu * opts.mu_safeguard / z[i];
                mu[i] = mu[i].clamp(lo, hi).min(1e12);
            }
            trace!(
                "ipm it {} mu {:.3e} ap {:.2e} ad {:.2e} f {:.6e}",
                it,
                bmu,
                ap,
                ad,
                e.f
            );
        }

        // outer convergence test against mu = 0
        let errs = kkt_errors(&e, &lam, &mu, &z, 0.0);
        let overall = errs
            .stationarity
            .max(errs.primal)
            .max(errs.complementarity);
        debug!(
            "ipm outer: it {} mu {:.3e} stat {:.3e} primal {:.3e} comp {:.3e} f {:.6e}",
            it, bmu, errs.stationarity, errs.primal, errs.complementarity, e.f
        );
        if overall <= opts.tolerance {
            return IpmResult {
                x,
                objective: e.f,
                status: IpmStatus::Optimal,
                iterations: it,
                residuals: errs,
                lam,
                mu,
            };
        }
        if bmu <= opts.mu_min {
            let status = if errs.primal > opts.tolerance && errs.stationarity <= 1e-4 {
                IpmStatus::Infeasible
            } else {
                IpmStatus::IterationLimit
            };
            return fail(x, e.f, it, errs, status);
        }
        bmu = (opts.kappa_mu * bmu).min(bmu.powf(1.5)).max(opts.mu_min);
    }

    let errs = kkt_errors(&e, &lam, &mu, &z, 0.0);
    let status = if errs.primal > opts.tolerance && errs.stationarity <= 1e-4 {
        IpmStatus::Infeasible
    } else {
        IpmStatus::IterationLimit
    };
    fail(x, e.f, it, errs, status)
}
