//! DC OPF: the B-theta linearization solved as a convex QP through the same
//! interior point core as the AC problem.
//!
//! Variables are x = (theta, pg). Nodal balance is linear, branch flows are
//! b (theta_f - theta_t - shift), and masked branches contribute a pair of
//! inequalities for the two flow directions.

use super::nlp::{self, ConstraintEval, NlpProblem};
use super::{OpfError, OpfProblem, OpfSolution};
use crate::grid_model::{BranchFlow, Network};
use crate::numerics::SparseMatrix;

struct DcOpf<'a> {
    net: &'a Network,
    gens: Vec<usize>,
    /// (branch index, susceptance, from, to, shift, limit_pu)
    masked: Vec<(usize, f64, usize, usize, f64, f64)>,
    bound_rows: Vec<(usize, f64, f64)>,
    slack: usize,
    nb: usize,
    ng: usize,
    tie_break: f64,
}

impl<'a> DcOpf<'a> {
    fn new(problem: &'a OpfProblem) -> Result<Self, OpfError> {
        let net = problem.net;
        let nb = net.n_buses();
        let gens: Vec<usize> = net
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service)
            .map(|(i, _)| i)
            .collect();
        let ng = gens.len();
        let slack = net.slack_index().expect("validated network");

        let mut masked = Vec::new();
        for k in problem.mask.iter() {
            let br = &net.branches[k];
            if !br.in_service {
                continue;
            }
            if br.s_limit_mva <= 0.0 {
                return Err(OpfError::MaskUnratedBranch(k));
            }
            let b = 1.0 / (br.reactance * br.tap());
            masked.push((
                k,
                b,
                net.bus_index(br.from_bus).unwrap(),
                net.bus_index(br.to_bus).unwrap(),
                br.shift_rad(),
                net.mw_to_pu(br.s_limit_mva),
            ));
        }

        let mut bound_rows = Vec::new();
        for (j, &gi) in gens.iter().enumerate() {
            let g = &net.generators[gi];
            bound_rows.push((nb + j, 1.0, net.mw_to_pu(g.p_max_mw)));
            bound_rows.push((nb + j, -1.0, -net.mw_to_pu(g.p_min_mw)));
        }

        Ok(DcOpf {
            net,
            gens,
            masked,
            bound_rows,
            slack,
            nb,
            ng,
            tie_break: 1e-9,
        })
    }

    /// Laplacian-style triplets of the B' matrix plus fixed injections.
    fn balance_terms(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let net = self.net;
        let nb = self.nb;
        let mut triplets = Vec::new();
        let mut fixed = vec![0.0; nb];
        for (i, bus) in net.buses.iter().enumerate() {
            fixed[i] += net.mw_to_pu(bus.p_load_mw) + net.mw_to_pu(bus.gs_mw);
        }
        for br in net.branches.iter().filter(|b| b.in_service) {
            let f = net.bus_index(br.from_bus).unwrap();
            let t = net.bus_index(br.to_bus).unwrap();
            let b = 1.0 / (br.reactance * br.tap());
            triplets.push((f, f, b));
            triplets.push((t, t, b));
            triplets.push((f, t, -b));
            triplets.push((t, f, -b));
            let shift = br.shift_rad();
            if shift != 0.0 {
                fixed[f] -= b * shift;
                fixed[t] += b * shift;
            }
        }
        (triplets, fixed)
    }
}

impl NlpProblem for DcOpf<'_> {
    fn num_vars(&self) -> usize {
        self.nb + self.ng
    }

    fn num_eq(&self) -> usize {
        self.nb + 1
    }

    fn num_ineq(&self) -> usize {
        2 * self.masked.len() + self.bound_rows.len()
    }

    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let base = self.net.base_mva;
        let mut f = 0.0;
        let mut df = vec![0.0; self.num_vars()];
        for (j, &gi) in self.gens.iter().enumerate() {
            let cost = &self.net.costs[gi];
            let p_mw = x[self.nb + j] * base;
            let b_eff = cost.b + self.tie_break * (gi as f64 + 1.0);
            f += cost.a * p_mw * p_mw + b_eff * p_mw + cost.c;
            df[self.nb + j] = (2.0 * cost.a * p_mw + b_eff) * base;
        }
        (f, df)
    }

    fn constraints(&self, x: &[f64]) -> ConstraintEval {
        let nb = self.nb;
        let (triplets, fixed) = self.balance_terms();
        let theta = &x[..nb];

        let mut g = fixed;
        for &(r, c, v) in &triplets {
            g[r] += v * theta[c];
        }
        for (j, &gi) in self.gens.iter().enumerate() {
            let bi = self.net.bus_index(self.net.generators[gi].bus).unwrap();
            g[bi] -= x[nb + j];
        }
        g.push(theta[self.slack]);

        let mut dg = SparseMatrix::new(nb + 1, self.num_vars());
        for &(r, c, v) in &triplets {
            dg.push(r, c, v);
        }
        for (j, &gi) in self.gens.iter().enumerate() {
            let bi = self.net.bus_index(self.net.generators[gi].bus).unwrap();
            dg.push(bi, nb + j, -1.0);
        }
        dg.push(nb, self.slack, 1.0);

        let niq = self.num_ineq();
        let mut h = vec![0.0; niq];
        let mut dh = SparseMatrix::new(niq, self.num_vars());
        let mut row = 0;
        for &(_, b, f_idx, t_idx, shift, lim) in &self.masked {
            let flow = b * (theta[f_idx] - theta[t_idx] - shift);
            h[row] = flow - lim;
            dh.push(row, f_idx, b);
            dh.push(row, t_idx, -b);
            row += 1;
            h[row] = -flow - lim;
            dh.push(row, f_idx, -b);
            dh.push(row, t_idx, b);
            row += 1;
        }
        for &(var, sign, bound) in &self.bound_rows {
            h[row] = sign * x[var] - bound;
            dh.push(row, var, sign);
            row += 1;
        }

        ConstraintEval { g, h, dg, dh }
    }

    fn lagrangian_hessian(&self, _x: &[f64], _lam: &[f64], _mu: &[f64]) -> SparseMatrix {
        let base = self.net.base_mva;
        let mut hess = SparseMatrix::new(self.num_vars(), self.num_vars());
        for (j, &gi) in self.gens.iter().enumerate() {
            let a = self.net.costs[gi].a;
            if a != 0.0 {
                hess.push(self.nb + j, self.nb + j, 2.0 * a * base * base);
            }
        }
        hess
    }
}

pub(super) fn solve(problem: &OpfProblem) -> Result<OpfSolution, OpfError> {
    let dc = DcOpf::new(problem)?;
    let nb = dc.nb;
    let ng = dc.ng;

    // start at the case dispatch clipped into bounds, flat angles
    let mut x0 = vec![0.0; nb + ng];
    for (j, &gi) in dc.gens.iter().enumerate() {
        let g = &problem.net.generators[gi];
        x0[nb + j] = problem
            .net
            .mw_to_pu(g.p_mw)
            .clamp(problem.net.mw_to_pu(g.p_min_mw), problem.net.mw_to_pu(g.p_max_mw));
    }
    let res = nlp::solve(&dc, &x0, &problem.options);

    let theta = res.x[..nb].to_vec();
    let p_gen: Vec<f64> = (0..ng)
        .map(|j| problem.net.pu_to_mw(res.x[nb + j]))
        .collect();
    let net = problem.net;
    let flows: Vec<BranchFlow> = net
        .branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return BranchFlow::default();
            }
            let f = net.bus_index(br.from_bus).unwrap();
            let t = net.bus_index(br.to_bus).unwrap();
            let b = 1.0 / (br.reactance * br.tap());
            let p = net.pu_to_mw(b * (theta[f] - theta[t] - br.shift_rad()));
            BranchFlow {
                p_from_mw: p,
                q_from_mvar: 0.0,
                p_to_mw: -p,
                q_to_mvar: 0.0,
            }
        })
        .collect();

    let objective = dc
        .gens
        .iter()
        .zip(&p_gen)
        .map(|(&gi, &p)| net.costs[gi].eval(p))
        .sum();

    Ok(OpfSolution {
        angles_rad: theta,
        magnitudes: vec![1.0; nb],
        p_gen_mw: p_gen,
        q_gen_mvar: vec![0.0; ng],
        objective,
        status: res.status.into(),
        kkt_residuals: res.residuals,
        iterations: res.iterations,
        wall_time_s: 0.0,
        flows,
    })
}
