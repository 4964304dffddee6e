//! AC OPF in polar coordinates.
//!
//! Variables are x = (theta, v, pg, qg). Equalities are the nodal active and
//! reactive power balances plus the pinned slack angle; inequalities are the
//! squared apparent-power limits at both ends of every masked branch and the
//! finite variable bounds. First and second derivatives are exact.

use super::nlp::{self, ConstraintEval, IpmStatus, NlpProblem};
use super::{OpfError, OpfProblem, OpfSolution, OpfStart};
use crate::grid_model::{build_admittance, branch_flow, AdmittanceMatrix, Network};
use crate::numerics::SparseMatrix;
use log::debug;

pub struct AcOpfBuilder<'a> {
    net: &'a Network,
    adm: AdmittanceMatrix,
    /// merged Y entries (i, k, g, b)
    y: Vec<(usize, usize, f64, f64)>,
    /// in-service generator indices in case order
    gens: Vec<usize>,
    /// masked branch indices with their per-unit squared limits
    limits: Vec<(usize, f64)>,
    /// (variable, sign, bound): sign*x - bound <= 0
    bound_rows: Vec<(usize, f64, f64)>,
    slack: usize,
    nb: usize,
    ng: usize,
    /// index-lexicographic cost perturbation in $/MWh
    tie_break: f64,
}

impl<'a> AcOpfBuilder<'a> {
    pub fn new(net: &'a Network, mask: &super::LimitMask) -> Result<Self, OpfError> {
        let adm = build_admittance(net)?;
        let mut ymap: std::collections::HashMap<(usize, usize), (f64, f64)> =
            std::collections::HashMap::new();
        for &(r, c, v) in adm.g.entries() {
            ymap.entry((r, c)).or_insert((0.0, 0.0)).0 += v;
        }
        for &(r, c, v) in adm.b.entries() {
            ymap.entry((r, c)).or_insert((0.0, 0.0)).1 += v;
        }
        let mut y: Vec<(usize, usize, f64, f64)> = ymap
            .into_iter()
            .map(|((r, c), (g, b))| (r, c, g, b))
            .collect();
        y.sort_unstable_by_key(|e| (e.0, e.1));

        let gens: Vec<usize> = net
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service)
            .map(|(i, _)| i)
            .collect();
        let slack = net.slack_index().expect("validated network");
        let nb = net.n_buses();
        let ng = gens.len();

        let mut limits = Vec::new();
        for k in mask.iter() {
            let br = &net.branches[k];
            if !br.in_service {
                continue;
            }
            if br.s_limit_mva <= 0.0 {
                return Err(OpfError::MaskUnratedBranch(k));
            }
            let lim = net.mw_to_pu(br.s_limit_mva);
            limits.push((k, lim * lim));
        }

        let mut bound_rows = Vec::new();
        for (i, bus) in net.buses.iter().enumerate() {
            bound_rows.push((nb + i, 1.0, bus.v_max));
            bound_rows.push((nb + i, -1.0, -bus.v_min));
        }
        for (j, &gi) in gens.iter().enumerate() {
            let g = &net.generators[gi];
            bound_rows.push((2 * nb + j, 1.0, net.mw_to_pu(g.p_max_mw)));
            bound_rows.push((2 * nb + j, -1.0, -net.mw_to_pu(g.p_min_mw)));
            bound_rows.push((2 * nb + ng + j, 1.0, net.mw_to_pu(g.q_max_mvar)));
            bound_rows.push((2 * nb + ng + j, -1.0, -net.mw_to_pu(g.q_min_mvar)));
        }

        Ok(AcOpfBuilder {
            net,
            adm,
            y,
            gens,
            limits,
            bound_rows,
            slack,
            nb,
            ng,
            tie_break: 1e-9,
        })
    }

    pub fn start_vector(&self, start: &OpfStart) -> Vec<f64> {
        let nb = self.nb;
        let ng = self.ng;
        let mut x = vec![0.0; 2 * nb + 2 * ng];
        for i in 0..nb {
            x[nb + i] = 1.0;
        }
        for (j, &gi) in self.gens.iter().enumerate() {
            let g = &self.net.generators[gi];
            let bi = self.net.bus_index(g.bus).unwrap();
            x[nb + bi] = g.v_setpoint;
            x[2 * nb + j] = self.net.mw_to_pu(g.p_mw);
            x[2 * nb + ng + j] = self.net.mw_to_pu(g.q_mvar);
        }
        match start {
            OpfStart::Flat => {}
            OpfStart::PfWarm(va, vm) => {
                x[..nb].copy_from_slice(va);
                x[nb..2 * nb].copy_from_slice(vm);
            }
            OpfStart::Given(sol) => {
                x[..nb].copy_from_slice(&sol.angles_rad);
                x[nb..2 * nb].copy_from_slice(&sol.magnitudes);
                for j in 0..ng {
                    x[2 * nb + j] = self.net.mw_to_pu(sol.p_gen_mw[j]);
                    x[2 * nb + ng + j] = self.net.mw_to_pu(sol.q_gen_mvar[j]);
                }
            }
        }
        x
    }

    fn injections(&self, va: &[f64], vm: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nb = self.nb;
        let mut p = vec![0.0; nb];
        let mut q = vec![0.0; nb];
        for &(i, k, gv, bv) in &self.y {
            let th = va[i] - va[k];
            let (sn, cs) = th.sin_cos();
            p[i] += vm[i] * vm[k] * (gv * cs + bv * sn);
            q[i] += vm[i] * vm[k] * (gv * sn - bv * cs);
        }
        (p, q)
    }

    /// Per-branch flow quantities and derivative helpers at one end.
    ///
    /// Returns (p, q, dp[4], dq[4]) with the gradient ordered as
    /// (theta_self, theta_other, v_self, v_other).
    #[allow(clippy::many_single_char_names)]
    fn end_flow(
        g_ss: f64,
        b_ss: f64,
        g_so: f64,
        b_so: f64,
        v_s: f64,
        v_o: f64,
        th: f64,
    ) -> (f64, f64, [f64; 4], [f64; 4]) {
        let (sn, cs) = th.sin_cos();
        let kc = g_so * cs + b_so * sn;
        let ks = g_so * sn - b_so * cs;
        let p = v_s * v_s * g_ss + v_s * v_o * kc;
        let q = -v_s * v_s * b_ss + v_s * v_o * ks;
        let dp = [
            -v_s * v_o * ks,
            v_s * v_o * ks,
            2.0 * v_s * g_ss + v_o * kc,
            v_s * kc,
        ];
        let dq = [
            v_s * v_o * kc,
            -v_s * v_o * kc,
            -2.0 * v_s * b_ss + v_o * ks,
            v_s * ks,
        ];
        (p, q, dp, dq)
    }

    /// 4x4 second-derivative blocks of p and q at one end, same ordering.
    fn end_flow_hessians(
        g_ss: f64,
        b_ss: f64,
        g_so: f64,
        b_so: f64,
        v_s: f64,
        v_o: f64,
        th: f64,
    ) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let (sn, cs) = th.sin_cos();
        let kc = g_so * cs + b_so * sn;
        let ks = g_so * sn - b_so * cs;
        let d2p = [
            [-v_s * v_o * kc, v_s * v_o * kc, -v_o * ks, -v_s * ks],
            [v_s * v_o * kc, -v_s * v_o * kc, v_o * ks, v_s * ks],
            [-v_o * ks, v_o * ks, 2.0 * g_ss, kc],
            [-v_s * ks, v_s * ks, kc, 0.0],
        ];
        let d2q = [
            [-v_s * v_o * ks, v_s * v_o * ks, v_o * kc, v_s * kc],
            [v_s * v_o * ks, -v_s * v_o * ks, -v_o * kc, -v_s * kc],
            [v_o * kc, -v_o * kc, -2.0 * b_ss, ks],
            [v_s * kc, -v_s * kc, ks, 0.0],
        ];
        (d2p, d2q)
    }

    fn branch_ends(&self, k: usize) -> (usize, usize) {
        let br = &self.net.branches[k];
        (
            self.net.bus_index(br.from_bus).unwrap(),
            self.net.bus_index(br.to_bus).unwrap(),
        )
    }
}

impl NlpProblem for AcOpfBuilder<'_> {
    fn num_vars(&self) -> usize {
        2 * self.nb + 2 * self.ng
    }

    fn num_eq(&self) -> usize {
        2 * self.nb + 1
    }

    fn num_ineq(&self) -> usize {
        2 * self.limits.len() + self.bound_rows.len()
    }

    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let base = self.net.base_mva;
        let mut f = 0.0;
        let mut df = vec![0.0; self.num_vars()];
        for (j, &gi) in self.gens.iter().enumerate() {
            let cost = &self.net.costs[gi];
            let p_mw = x[2 * self.nb + j] * base;
            let b_eff = cost.b + self.tie_break * (gi as f64 + 1.0);
            f += cost.a * p_mw * p_mw + b_eff * p_mw + cost.c;
            df[2 * self.nb + j] = (2.0 * cost.a * p_mw + b_eff) * base;
        }
        (f, df)
    }

    fn constraints(&self, x: &[f64]) -> ConstraintEval {
        let nb = self.nb;
        let ng = self.ng;
        let (va, vm) = (&x[..nb], &x[nb..2 * nb]);
        let (p_inj, q_inj) = self.injections(va, vm);

        let mut g = vec![0.0; 2 * nb + 1];
        for i in 0..nb {
            let bus = &self.net.buses[i];
            g[i] = p_inj[i] + self.net.mw_to_pu(bus.p_load_mw);
            g[nb + i] = q_inj[i] + self.net.mw_to_pu(bus.q_load_mvar);
        }
        for (j, _) in self.gens.iter().enumerate() {
            let gi = &self.net.generators[self.gens[j]];
            let bi = self.net.bus_index(gi.bus).unwrap();
            g[bi] -= x[2 * nb + j];
            g[nb + bi] -= x[2 * nb + ng + j];
        }
        g[2 * nb] = va[self.slack];

        let mut dg = SparseMatrix::new(2 * nb + 1, self.num_vars());
        for &(i, k, gv, bv) in &self.y {
            if i == k {
                dg.push(i, nb + i, 2.0 * vm[i] * gv);
                dg.push(nb + i, nb + i, -2.0 * vm[i] * bv);
                continue;
            }
            let th = va[i] - va[k];
            let (sn, cs) = th.sin_cos();
            let c = gv * cs + bv * sn;
            let s = gv * sn - bv * cs;
            let (vi, vk) = (vm[i], vm[k]);
            dg.push(i, k, vi * vk * s);
            dg.push(i, i, -vi * vk * s);
            dg.push(i, nb + k, vi * c);
            dg.push(i, nb + i, vk * c);
            dg.push(nb + i, k, -vi * vk * c);
            dg.push(nb + i, i, vi * vk * c);
            dg.push(nb + i, nb + k, vi * s);
            dg.push(nb + i, nb + i, vk * s);
        }
        for (j, &gi) in self.gens.iter().enumerate() {
            let bi = self.net.bus_index(self.net.generators[gi].bus).unwrap();
            dg.push(bi, 2 * nb + j, -1.0);
            dg.push(nb + bi, 2 * nb + ng + j, -1.0);
        }
        dg.push(2 * nb, self.slack, 1.0);

        let niq = self.num_ineq();
        let mut h = vec![0.0; niq];
        let mut dh = SparseMatrix::new(niq, self.num_vars());
        let mut row = 0;
        for &(k, lim2) in &self.limits {
            let yb = &self.adm.branches[k];
            let (f_idx, t_idx) = self.branch_ends(k);
            for (g_ss, b_ss, g_so, b_so, s_idx, o_idx) in [
                (yb.g_ff, yb.b_ff, yb.g_ft, yb.b_ft, f_idx, t_idx),
                (yb.g_tt, yb.b_tt, yb.g_tf, yb.b_tf, t_idx, f_idx),
            ] {
                let th = va[s_idx] - va[o_idx];
                let (p, q, dp, dq) =
                    Self::end_flow(g_ss, b_ss, g_so, b_so, vm[s_idx], vm[o_idx], th);
                h[row] = p * p + q * q - lim2;
                let cols = [s_idx, o_idx, nb + s_idx, nb + o_idx];
                for a in 0..4 {
                    dh.push(row, cols[a], 2.0 * (p * dp[a] + q * dq[a]));
                }
                row += 1;
            }
        }
        for &(var, sign, bound) in &self.bound_rows {
            h[row] = sign * x[var] - bound;
            dh.push(row, var, sign);
            row += 1;
        }

        ConstraintEval { g, h, dg, dh }
    }

    fn lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> SparseMatrix {
        let nb = self.nb;
        let base = self.net.base_mva;
        let (va, vm) = (&x[..nb], &x[nb..2 * nb]);
        let mut hess = SparseMatrix::new(self.num_vars(), self.num_vars());

        // objective curvature
        for (j, &gi) in self.gens.iter().enumerate() {
            let a = self.net.costs[gi].a;
            if a != 0.0 {
                hess.push(2 * nb + j, 2 * nb + j, 2.0 * a * base * base);
            }
        }

        // power balance terms
        for &(i, k, gv, bv) in &self.y {
            let wp = lam[i];
            let wq = lam[nb + i];
            if i == k {
                let v = wp * 2.0 * gv - wq * 2.0 * bv;
                if v != 0.0 {
                    hess.push(nb + i, nb + i, v);
                }
                continue;
            }
            let th = va[i] - va[k];
            let (sn, cs) = th.sin_cos();
            let c = gv * cs + bv * sn;
            let s = gv * sn - bv * cs;
            let (vi, vk) = (vm[i], vm[k]);

            let tt = wp * (-vi * vk * c) + wq * (-vi * vk * s);
            hess.push(i, i, tt);
            hess.push(k, k, tt);
            hess.push(i, k, -tt);
            hess.push(k, i, -tt);

            let vi_ti = wp * (-vk * s) + wq * (vk * c);
            hess.push(nb + i, i, vi_ti);
            hess.push(i, nb + i, vi_ti);
            let vi_tk = wp * (vk * s) + wq * (-vk * c);
            hess.push(nb + i, k, vi_tk);
            hess.push(k, nb + i, vi_tk);
            let vk_ti = wp * (-vi * s) + wq * (vi * c);
            hess.push(nb + k, i, vk_ti);
            hess.push(i, nb + k, vk_ti);
            let vk_tk = wp * (vi * s) + wq * (-vi * c);
            hess.push(nb + k, k, vk_tk);
            hess.push(k, nb + k, vk_tk);

            let vv = wp * c + wq * s;
            hess.push(nb + i, nb + k, vv);
            hess.push(nb + k, nb + i, vv);
        }

        // flow limit terms
        let mut row = 0;
        for &(k, _) in &self.limits {
            let yb = &self.adm.branches[k];
            let (f_idx, t_idx) = self.branch_ends(k);
            for (g_ss, b_ss, g_so, b_so, s_idx, o_idx) in [
                (yb.g_ff, yb.b_ff, yb.g_ft, yb.b_ft, f_idx, t_idx),
                (yb.g_tt, yb.b_tt, yb.g_tf, yb.b_tf, t_idx, f_idx),
            ] {
                let w = mu[row];
                row += 1;
                if w == 0.0 {
                    continue;
                }
                let th = va[s_idx] - va[o_idx];
                let (p, q, dp, dq) =
                    Self::end_flow(g_ss, b_ss, g_so, b_so, vm[s_idx], vm[o_idx], th);
                let (d2p, d2q) =
                    Self::end_flow_hessians(g_ss, b_ss, g_so, b_so, vm[s_idx], vm[o_idx], th);
                let cols = [s_idx, o_idx, nb + s_idx, nb + o_idx];
                for a in 0..4 {
                    for b in 0..4 {
                        let v = 2.0
                            * (dp[a] * dp[b] + dq[a] * dq[b] + p * d2p[a][b] + q * d2q[a][b]);
                        if v != 0.0 {
                            hess.push(cols[a], cols[b], w * v);
                        }
                    }
                }
            }
        }
        // bound rows are linear: no curvature
        hess
    }
}

/// Map an IPM result back into grid quantities.
fn to_solution(
    net: &Network,
    builder: &AcOpfBuilder,
    res: nlp::IpmResult,
    clean_objective: bool,
) -> OpfSolution {
    let nb = builder.nb;
    let ng = builder.ng;
    let va = res.x[..nb].to_vec();
    let vm = res.x[nb..2 * nb].to_vec();
    let p_gen: Vec<f64> = (0..ng)
        .map(|j| net.pu_to_mw(res.x[2 * nb + j]))
        .collect();
    let q_gen: Vec<f64> = (0..ng)
        .map(|j| net.pu_to_mw(res.x[2 * nb + ng + j]))
        .collect();
    let flows = (0..net.n_branches())
        .map(|k| branch_flow(net, &builder.adm, &va, &vm, k))
        .collect();
    let objective = if clean_objective {
        // report the unperturbed cost
        builder
            .gens
            .iter()
            .zip(&p_gen)
            .map(|(&gi, &p)| net.costs[gi].eval(p))
            .sum()
    } else {
        res.objective
    };
    OpfSolution {
        angles_rad: va,
        magnitudes: vm,
        p_gen_mw: p_gen,
        q_gen_mvar: q_gen,
        objective,
        status: res.status.into(),
        kkt_residuals: res.residuals,
        iterations: res.iterations,
        wall_time_s: 0.0,
        flows,
    }
}

fn residual_score(r: &nlp::IpmResult) -> f64 {
    r.residuals
        .stationarity
        .max(r.residuals.primal)
        .max(r.residuals.complementarity)
}

pub(super) fn solve(problem: &OpfProblem, start: &OpfStart) -> Result<OpfSolution, OpfError> {
    let builder = AcOpfBuilder::new(problem.net, &problem.mask)?;
    let x0 = builder.start_vector(start);
    let direct = nlp::solve(&builder, &x0, &problem.options);
    if direct.status == IpmStatus::Optimal || !problem.restoration {
        return Ok(to_solution(problem.net, &builder, direct, true));
    }

    // relax the masked limits and tighten back in, warm starting each stage
    debug!("ac opf: direct solve failed, entering limit relaxation chain");
    let stages = [1.05, 1.02, 1.01, 1.005, 1.002, 1.001, 1.0];
    let mut x = x0;
    let mut best = direct;
    for (si, &scale) in stages.iter().enumerate() {
        let mut net_relaxed = problem.net.clone();
        for k in problem.mask.iter() {
            net_relaxed.branches[k].s_limit_mva *= scale;
        }
        let relaxed_builder = AcOpfBuilder::new(&net_relaxed, &problem.mask)?;
        let mut opts = problem.options.clone();
        if si > 0 {
            opts.mu_initial = 1e-2;
        }
        let res = nlp::solve(&relaxed_builder, &x, &opts);
        if res.status == IpmStatus::Optimal {
            x = res.x.clone();
            if scale == 1.0 {
                return Ok(to_solution(problem.net, &builder, res, true));
            }
        } else if scale == 1.0 && residual_score(&res) < residual_score(&best) {
            // keep whichever unrelaxed attempt came closest
            best = res;
        }
    }
    Ok(to_solution(problem.net, &builder, best, true))
}
