//! DC and AC optimal power flow behind a line-limit mask.
//!
//! Both formulations run through the same interior point core. The mask
//! selects which rated branches keep their apparent-power limit; everything
//! outside the mask is treated as unlimited, which is how coalition cost
//! functions relax the limits of absent players. Neglected limits are removed
//! from the constraint set entirely rather than inflated, which keeps the
//! barrier well conditioned.

mod ac;
mod dc;
mod feasibility;
pub mod nlp;

pub use ac::AcOpfBuilder;
pub use feasibility::{check_ac_feasibility, embed_dc_solution, FeasibilityReport};
pub use nlp::{IpmOptions, IpmStatus, KktResiduals};

use crate::grid_model::{BranchFlow, GridModelError, Network};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error(transparent)]
    Grid(#[from] GridModelError),
    #[error("limit mask references branch {0} which has no rating")]
    MaskUnratedBranch(usize),
    #[error("OPF did not reach an optimum: {status:?} after {iterations} iterations (stationarity {stationarity:.2e}, primal {primal:.2e}, complementarity {complementarity:.2e})")]
    NotOptimal {
        status: IpmStatus,
        iterations: usize,
        stationarity: f64,
        primal: f64,
        complementarity: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formulation {
    Dc,
    Ac,
}

/// Set of branch indices whose ratings are enforced. Only branches with a
/// positive rating are eligible.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LimitMask {
    enforced: BTreeSet<usize>,
}

impl LimitMask {
    /// Enforce every rated branch of the network.
    pub fn full(net: &Network) -> Self {
        LimitMask {
            enforced: net
                .branches
                .iter()
                .enumerate()
                .filter(|(_, b)| b.s_limit_mva > 0.0 && b.in_service)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn empty() -> Self {
        LimitMask::default()
    }

    pub fn from_indices(net: &Network, indices: &[usize]) -> Result<Self, OpfError> {
        let mut enforced = BTreeSet::new();
        for &i in indices {
            let ok = net
                .branches
                .get(i)
                .map(|b| b.s_limit_mva > 0.0)
                .unwrap_or(false);
            if !ok {
                return Err(OpfError::MaskUnratedBranch(i));
            }
            enforced.insert(i);
        }
        Ok(LimitMask { enforced })
    }

    pub fn without(&self, indices: &[usize]) -> Self {
        let mut enforced = self.enforced.clone();
        for i in indices {
            enforced.remove(i);
        }
        LimitMask { enforced }
    }

    pub fn with(&self, index: usize) -> Self {
        let mut enforced = self.enforced.clone();
        enforced.insert(index);
        LimitMask { enforced }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.enforced.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.enforced.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.enforced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enforced.is_empty()
    }
}

/// A limit-masked OPF instance.
#[derive(Debug, Clone)]
pub struct OpfProblem<'a> {
    pub net: &'a Network,
    pub mask: LimitMask,
    pub formulation: Formulation,
    pub options: IpmOptions,
    /// Relax-and-tighten fallback for instances that jam at their feasibility
    /// boundary; adds warm-started solves at inflated limits.
    pub restoration: bool,
}

impl<'a> OpfProblem<'a> {
    pub fn new(net: &'a Network, mask: LimitMask, formulation: Formulation) -> Self {
        OpfProblem {
            net,
            mask,
            formulation,
            options: IpmOptions::default(),
            restoration: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpfStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

impl From<IpmStatus> for OpfStatus {
    fn from(s: IpmStatus) -> Self {
        match s {
            IpmStatus::Optimal => OpfStatus::Optimal,
            IpmStatus::Infeasible => OpfStatus::Infeasible,
            IpmStatus::IterationLimit => OpfStatus::IterationLimit,
            IpmStatus::NumericalFailure => OpfStatus::NumericalFailure,
        }
    }
}

/// Solved OPF state. Angles in radians, magnitudes per-unit, dispatch in MW
/// and MVAr for in-service generators in case order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    pub angles_rad: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub p_gen_mw: Vec<f64>,
    pub q_gen_mvar: Vec<f64>,
    pub objective: f64,
    pub status: OpfStatus,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub flows: Vec<BranchFlow>,
}

impl OpfSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == OpfStatus::Optimal
    }
}

/// Warm start source for an OPF solve.
#[derive(Debug, Clone, Default)]
pub enum OpfStart {
    /// Flat voltage profile and case-file dispatch.
    #[default]
    Flat,
    /// Angles and magnitudes from a solved power flow.
    PfWarm(Vec<f64>, Vec<f64>),
    /// A complete previous solution.
    Given(Box<OpfSolution>),
}

/// Solve the DC OPF (a convex QP run through the interior point core).
pub fn solve_dc_opf(problem: &OpfProblem) -> Result<OpfSolution, OpfError> {
    problem.net.validate()?;
    let t0 = Instant::now();
    let mut sol = dc::solve(problem)?;
    sol.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(sol)
}

/// Solve the AC OPF from the requested start.
pub fn solve_ac_opf(problem: &OpfProblem, start: &OpfStart) -> Result<OpfSolution, OpfError> {
    problem.net.validate()?;
    let t0 = Instant::now();
    let mut sol = ac::solve(problem, start)?;
    sol.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Branch, Bus, BusKind, CostCurve, Generator};
    use crate::opf::nlp::NlpProblem;
    use crate::test_support::{load_case, load_modified};

    fn bus(id: usize, kind: BusKind, p_load: f64, q_load: f64) -> Bus {
        Bus {
            id,
            kind,
            p_load_mw: p_load,
            q_load_mvar: q_load,
            gs_mw: 0.0,
            bs_mvar: 0.0,
            area: 1,
            vm: 1.0,
            va_deg: 0.0,
            base_kv: 100.0,
            zone: 1,
            v_max: 1.1,
            v_min: 0.9,
        }
    }

    fn line(f: usize, t: usize, r: f64, x: f64, limit: f64) -> Branch {
        Branch {
            from_bus: f,
            to_bus: t,
            resistance: r,
            reactance: x,
            charging: 0.0,
            s_limit_mva: limit,
            rate_b: 0.0,
            rate_c: 0.0,
            tap_ratio: 0.0,
            phase_shift_deg: 0.0,
            in_service: true,
            ang_min: -360.0,
            ang_max: 360.0,
        }
    }

    fn gen(bus: usize, p_max: f64, b_cost: f64) -> (Generator, CostCurve) {
        (
            Generator {
                bus,
                p_mw: 0.0,
                q_mvar: 0.0,
                q_max_mvar: 300.0,
                q_min_mvar: -300.0,
                v_setpoint: 1.0,
                m_base: 100.0,
                in_service: true,
                p_max_mw: p_max,
                p_min_mw: 0.0,
                extra: vec![],
            },
            CostCurve {
                a: 0.0,
                b: b_cost,
                c: 0.0,
                startup: 0.0,
                shutdown: 0.0,
            },
        )
    }

    #[test]
    fn dc_single_generator_serves_the_load() {
        let (g, c) = gen(1, 200.0, 12.0);
        let net = crate::grid_model::Network::new(
            100.0,
            vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pq, 120.0, 0.0)],
            vec![line(1, 2, 0.0, 0.1, 0.0)],
            vec![g],
            vec![c],
        );
        let problem = OpfProblem::new(&net, LimitMask::empty(), Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.p_gen_mw[0] - 120.0).abs() < 1e-5);
        assert!((sol.objective - 1440.0).abs() < 1e-3);
    }

    #[test]
    fn dc_case9_full_mask_golden() {
        let net = load_modified("case9");
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        assert!(sol.is_optimal());
        // frozen from the validated QP solution of this dataset
        assert!((sol.objective - 6540.55).abs() < 0.5, "objective {}", sol.objective);
        assert!((sol.flows[0].p_from_mw - 13.11).abs() < 0.05);
        assert!((sol.flows[1].p_from_mw.abs() - 40.0).abs() < 1e-3);
        assert!((sol.p_gen_mw[2] - 280.0).abs() < 0.05);
    }

    #[test]
    fn dc_case9_relaxed_golden() {
        let net = load_modified("case9");
        let mask = LimitMask::full(&net).without(&[0, 1]);
        let problem = OpfProblem::new(&net, mask, Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 6443.26).abs() < 0.5, "objective {}", sol.objective);
    }

    /// Brute-force dispatch grid oracle on a 3-bus triangle with one binding
    /// limit: enumerate feasible dispatches at 1 MW steps.
    #[test]
    fn dc_three_bus_grid_search_oracle() {
        let (g1, c1) = gen(1, 200.0, 10.0);
        let (g2, c2) = gen(2, 200.0, 30.0);
        let net = crate::grid_model::Network::new(
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pv, 0.0, 0.0),
                bus(3, BusKind::Pq, 150.0, 0.0),
            ],
            vec![
                line(1, 3, 0.0, 0.1, 60.0),
                line(2, 3, 0.0, 0.1, 0.0),
                line(1, 2, 0.0, 0.1, 0.0),
            ],
            vec![g1, g2],
            vec![c1, c2],
        );
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        assert!(sol.is_optimal());

        // oracle: p1 + p2 = 150; flows from superposition on the triangle.
        // With equal reactances, f13 = (2 p1 + p2) / 3 when all load sits at 3.
        let mut best = f64::INFINITY;
        for p1_int in 0..=150 {
            let p1 = p1_int as f64;
            let p2 = 150.0 - p1;
            let f13 = (2.0 * p1 + p2) / 3.0;
            if f13.abs() <= 60.0 {
                best = best.min(10.0 * p1 + 30.0 * p2);
            }
        }
        assert!(
            (sol.objective - best).abs() < 0.5,
            "ipm {} vs grid search {best}",
            sol.objective
        );
    }

    #[test]
    fn dc_infeasible_limits_are_reported() {
        let (g, c) = gen(1, 200.0, 12.0);
        let net = crate::grid_model::Network::new(
            100.0,
            vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pq, 120.0, 0.0)],
            vec![line(1, 2, 0.0, 0.1, 50.0)],
            vec![g],
            vec![c],
        );
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        assert!(!sol.is_optimal());
        assert!(matches!(
            sol.status,
            OpfStatus::Infeasible | OpfStatus::IterationLimit
        ));
    }

    #[test]
    fn dc_objective_is_reference_invariant() {
        // shifting every angle by a constant leaves flows and cost unchanged
        let net = load_modified("case9");
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Dc);
        let sol = solve_dc_opf(&problem).unwrap();
        let adm = crate::grid_model::build_admittance(&net).unwrap();
        let shifted: Vec<f64> = sol.angles_rad.iter().map(|a| a + 0.37).collect();
        for k in 0..net.n_branches() {
            let f0 = crate::grid_model::branch_flow(&net, &adm, &sol.angles_rad, &sol.magnitudes, k);
            let f1 = crate::grid_model::branch_flow(&net, &adm, &shifted, &sol.magnitudes, k);
            assert!((f0.p_from_mw - f1.p_from_mw).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_mask_monotonicity_case9_and_case39() {
        for name in ["case9", "case39"] {
            let net = load_modified(name);
            // players are the catalog-congested lines of the DC base case
            let pf = crate::power_flow::dc_power_flow(&net).unwrap();
            let players =
                crate::congestion::detect_congestions(&net, &pf, Formulation::Dc, 1e-4);
            let ids = players.branch_indices();
            let n = ids.len();
            let full = LimitMask::full(&net);
            let mut costs = Vec::new();
            for mask_bits in 0..(1u32 << n) {
                let absent: Vec<usize> = ids
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask_bits & (1 << b) == 0)
                    .map(|(_, &k)| k)
                    .collect();
                let problem =
                    OpfProblem::new(&net, full.without(&absent), Formulation::Dc);
                let sol = solve_dc_opf(&problem).unwrap();
                assert!(sol.is_optimal(), "{name} mask {mask_bits:#b}");
                costs.push(sol.objective);
            }
            for small in 0..costs.len() {
                for big in 0..costs.len() {
                    if small & big == small {
                        assert!(
                            costs[small] <= costs[big] + 1e-6 * costs[big].abs(),
                            "{name}: phi({small:#b}) = {} > phi({big:#b}) = {}",
                            costs[small],
                            costs[big]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ac_two_bus_brute_force_oracle() {
        // single quadratic generator feeding one load over a lossy line:
        // sweep (v2, theta2) on a fine grid, pick the cheapest consistent
        // state, and compare against the interior point optimum.
        let (mut g, _) = gen(1, 300.0, 0.0);
        g.q_max_mvar = 300.0;
        g.q_min_mvar = -300.0;
        let cost = CostCurve {
            a: 0.02,
            b: 15.0,
            c: 0.0,
            startup: 0.0,
            shutdown: 0.0,
        };
        let net = crate::grid_model::Network::new(
            100.0,
            vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pq, 100.0, 20.0)],
            vec![line(1, 2, 0.02, 0.1, 0.0)],
            vec![g],
            vec![cost.clone()],
        );
        let problem = OpfProblem::new(&net, LimitMask::empty(), Formulation::Ac);
        let sol = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
        assert!(sol.is_optimal());

        // oracle: for fixed v1 the state is two-dimensional
        let adm = crate::grid_model::build_admittance(&net).unwrap();
        let mut best = f64::INFINITY;
        for v1_i in 0..=20 {
            let v1 = 0.9 + 0.01 * v1_i as f64;
            for v2_i in 0..=20 {
                let v2 = 0.9 + 0.01 * v2_i as f64;
                for th_i in -300..=0 {
                    let th2 = th_i as f64 * 1e-3;
                    let flow =
                        crate::grid_model::branch_flow(&net, &adm, &[0.0, th2], &[v1, v2], 0);
                    // feasibility at bus 2: line delivers the load
                    if (flow.p_to_mw + 100.0).abs() < 0.6 && (flow.q_to_mvar + 20.0).abs() < 0.6 {
                        let pg = flow.p_from_mw;
                        best = best.min(cost.eval(pg));
                    }
                }
            }
        }
        assert!(
            (sol.objective - best).abs() < 15.0,
            "ipm {} vs sweep {best}",
            sol.objective
        );
        // losses make the AC optimum cost at least the lossless DC one
        let dc = solve_dc_opf(&OpfProblem::new(&net, LimitMask::empty(), Formulation::Dc)).unwrap();
        assert!(sol.objective >= dc.objective);
    }

    #[test]
    fn ac_case9_full_mask_golden() {
        let net = load_modified("case9");
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Ac);
        let sol = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
        assert!(sol.is_optimal());
        // frozen from two independent solvers on this dataset
        assert!((sol.objective - 6765.44).abs() < 1.0, "objective {}", sol.objective);
        // line 2 is the binding player at its 40 MVA rating
        let s2 = sol.flows[1].s_max_mva();
        assert!((s2 - 40.0).abs() < 1e-3, "s2 = {s2}");
    }

    #[test]
    fn ac_warm_restart_converges_immediately() {
        let net = load_modified("case9");
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Ac);
        let first = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
        assert!(first.is_optimal());
        let mut fast = problem.clone();
        fast.options.mu_initial = 1e-7;
        let second = solve_ac_opf(&fast, &OpfStart::Given(Box::new(first.clone()))).unwrap();
        assert!(second.is_optimal());
        assert!(second.iterations <= 3, "{} iterations", second.iterations);
        assert!((second.objective - first.objective).abs() < 1e-6 * first.objective.abs());
    }

    #[test]
    fn ac_both_end_limits_hold_at_optimum() {
        for name in ["case9", "case39"] {
            let net = load_case(name);
            let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Ac);
            let sol = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
            assert!(sol.is_optimal(), "{name}");
            for k in problem.mask.iter() {
                let lim = net.branches[k].s_limit_mva;
                let viol = net.mw_to_pu(sol.flows[k].s_max_mva() - lim);
                assert!(viol < 1e-6, "{name} line {k}: violation {viol}");
            }
        }
    }

    #[test]
    fn ac_stationarity_at_reported_optimum() {
        let net = load_modified("case9");
        let problem = OpfProblem::new(&net, LimitMask::full(&net), Formulation::Ac);
        let sol = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.kkt_residuals.stationarity < 1e-6);
        assert!(sol.kkt_residuals.primal < 1e-6);
        assert!(sol.kkt_residuals.complementarity < 1e-6);
    }

    /// Central finite differences of objective and constraints at seeded
    /// interior points; validates the analytic derivatives the solver uses.
    #[test]
    fn ac_derivatives_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let net = load_modified("case9");
        let mask = LimitMask::full(&net);
        let builder = AcOpfBuilder::new(&net, &mask).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let nx = builder.num_vars();
        let h = 1e-6;
        for _trial in 0..10 {
            let mut x = builder.start_vector(&OpfStart::Flat);
            for (i, xi) in x.iter_mut().enumerate() {
                if i < 9 {
                    *xi += rng.gen_range(-0.05..0.05);
                } else if i < 18 {
                    *xi = rng.gen_range(0.95..1.05);
                } else {
                    *xi = rng.gen_range(0.2..2.5);
                }
            }
            let (_, df) = builder.objective(&x);
            let c = builder.constraints(&x);
            // dense copies of the sparse jacobians
            let mut dg = vec![vec![0.0; nx]; builder.num_eq()];
            for &(r, cc, v) in c.dg.entries() {
                dg[r][cc] += v;
            }
            let mut dh = vec![vec![0.0; nx]; builder.num_ineq()];
            for &(r, cc, v) in c.dh.entries() {
                dh[r][cc] += v;
            }
            for i in 0..nx {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (fp, _) = builder.objective(&xp);
                let (fm, _) = builder.objective(&xm);
                let fd = (fp - fm) / (2.0 * h);
                let scale = df[i].abs().max(1.0);
                assert!(
                    (df[i] - fd).abs() / scale < 1e-5,
                    "objective grad {i}: {} vs {fd}",
                    df[i]
                );
                let cp = builder.constraints(&xp);
                let cm = builder.constraints(&xm);
                for r in 0..builder.num_eq() {
                    let fd = (cp.g[r] - cm.g[r]) / (2.0 * h);
                    let scale = dg[r][i].abs().max(1.0);
                    assert!(
                        (dg[r][i] - fd).abs() / scale < 1e-5,
                        "eq ({r},{i}): {} vs {fd}",
                        dg[r][i]
                    );
                }
                for r in 0..builder.num_ineq() {
                    let fd = (cp.h[r] - cm.h[r]) / (2.0 * h);
                    let scale = dh[r][i].abs().max(1.0);
                    assert!(
                        (dh[r][i] - fd).abs() / scale < 1e-5,
                        "ineq ({r},{i}): {} vs {fd}",
                        dh[r][i]
                    );
                }
            }
        }
    }

    #[test]
    fn ac_hessian_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let net = load_modified("case9");
        let mask = LimitMask::full(&net);
        let builder = AcOpfBuilder::new(&net, &mask).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let nx = builder.num_vars();
        let lam: Vec<f64> = (0..builder.num_eq()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu: Vec<f64> = (0..builder.num_ineq()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut x = builder.start_vector(&OpfStart::Flat);
        for (i, xi) in x.iter_mut().enumerate() {
            if i < 9 {
                *xi += rng.gen_range(-0.05..0.05);
            } else if i < 18 {
                *xi = rng.gen_range(0.95..1.05);
            }
        }
        let hess = builder.lagrangian_hessian(&x, &lam, &mu);
        let mut dense = vec![vec![0.0; nx]; nx];
        for &(r, c, v) in hess.entries() {
            dense[r][c] += v;
        }
        let grad_l = |x: &[f64]| -> Vec<f64> {
            let (_, mut df) = builder.objective(x);
            let c = builder.constraints(x);
            let gt = c.dg.transpose_mat_vec(&lam).unwrap();
            let ht = c.dh.transpose_mat_vec(&mu).unwrap();
            for i in 0..df.len() {
                df[i] += gt[i] + ht[i];
            }
            df
        };
        let h = 1e-6;
        for i in 0..nx {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let gp = grad_l(&xp);
            let gm = grad_l(&xm);
            for j in 0..nx {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                let scale = dense[j][i].abs().max(1.0);
                assert!(
                    (dense[j][i] - fd).abs() / scale < 1e-4,
                    "hessian ({j},{i}): {} vs {fd}",
                    dense[j][i]
                );
            }
        }
    }

    #[test]
    fn feasibility_report_is_clean_at_ac_optimum() {
        let net = load_modified("case9");
        let mask = LimitMask::full(&net);
        let problem = OpfProblem::new(&net, mask.clone(), Formulation::Ac);
        let sol = solve_ac_opf(&problem, &OpfStart::Flat).unwrap();
        let report = check_ac_feasibility(&net, &sol, &mask).unwrap();
        assert!(report.max_violation() < 1e-6, "{report:?}");
    }

    #[test]
    fn dc_solution_violates_reactive_balance() {
        let net = load_modified("case9");
        let mask = LimitMask::full(&net);
        let problem = OpfProblem::new(&net, mask.clone(), Formulation::Dc);
        let dc = solve_dc_opf(&problem).unwrap();
        let embedded = embed_dc_solution(&net, &dc);
        let report = check_ac_feasibility(&net, &embedded, &mask).unwrap();
        assert!(
            report.reactive_balance_pu > 0.01,
            "reactive violation {}",
            report.reactive_balance_pu
        );
    }

    #[test]
    fn empty_network_state_is_feasible() {
        let (g, c) = gen(1, 100.0, 1.0);
        let net = crate::grid_model::Network::new(
            100.0,
            vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pq, 0.0, 0.0)],
            vec![line(1, 2, 0.0, 0.1, 0.0)],
            vec![g],
            vec![c],
        );
        let sol = OpfSolution {
            angles_rad: vec![0.0, 0.0],
            magnitudes: vec![1.0, 1.0],
            p_gen_mw: vec![0.0],
            q_gen_mvar: vec![0.0],
            objective: 0.0,
            status: OpfStatus::Optimal,
            kkt_residuals: Default::default(),
            iterations: 0,
            wall_time_s: 0.0,
            flows: vec![],
        };
        let report = check_ac_feasibility(&net, &sol, &LimitMask::empty()).unwrap();
        assert!(report.max_violation() < 1e-12);
    }
}
