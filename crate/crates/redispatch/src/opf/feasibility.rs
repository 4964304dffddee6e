//! Feasibility audit of a candidate operating point against the full AC
//! constraint set: nodal balances, flow definitions and limits, box bounds.
//!
//! DC solutions carry no voltage or reactive information, so they are
//! embedded at flat magnitudes with the reactive load spread over the
//! generators in proportion to their active dispatch before checking.

use super::OpfSolution;
use crate::grid_model::{build_admittance, branch_flow, GridModelError, Network};
use crate::power_flow::injections_from_admittance;
use serde::{Deserialize, Serialize};

/// Worst violation per constraint family, all in per-unit of the system base.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub active_balance_pu: f64,
    pub reactive_balance_pu: f64,
    pub line_limit_pu: f64,
    pub worst_line: Option<usize>,
    pub voltage_bound_pu: f64,
    pub p_bound_pu: f64,
    pub q_bound_pu: f64,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.active_balance_pu
            .max(self.reactive_balance_pu)
            .max(self.line_limit_pu)
            .max(self.voltage_bound_pu)
            .max(self.p_bound_pu)
            .max(self.q_bound_pu)
    }
}

/// Fill in the voltage magnitudes and reactive dispatch a DC solution lacks.
pub fn embed_dc_solution(net: &Network, dc: &OpfSolution) -> OpfSolution {
    let mut out = dc.clone();
    out.magnitudes = vec![1.0; net.n_buses()];
    let total_q_load: f64 = net.buses.iter().map(|b| b.q_load_mvar).sum();
    let total_p: f64 = dc.p_gen_mw.iter().sum();
    let ng = dc.p_gen_mw.len();
    out.q_gen_mvar = if total_p.abs() > 1e-12 {
        dc.p_gen_mw
            .iter()
            .map(|&p| total_q_load * p / total_p)
            .collect()
    } else {
        vec![total_q_load / ng.max(1) as f64; ng]
    };
    out
}

/// Evaluate every constraint family at the candidate point and report the
/// worst violation of each.
pub fn check_ac_feasibility(
    net: &Network,
    candidate: &OpfSolution,
    mask: &super::LimitMask,
) -> Result<FeasibilityReport, GridModelError> {
    let adm = build_admittance(net)?;
    let nb = net.n_buses();
    let (p_inj, q_inj) = injections_from_admittance(&adm, &candidate.angles_rad, &candidate.magnitudes);

    // nodal balance residuals
    let mut p_gen_bus = vec![0.0; nb];
    let mut q_gen_bus = vec![0.0; nb];
    let active: Vec<usize> = net
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service)
        .map(|(i, _)| i)
        .collect();
    for (j, &gi) in active.iter().enumerate() {
        let bi = net.bus_index(net.generators[gi].bus).unwrap();
        p_gen_bus[bi] += candidate.p_gen_mw.get(j).copied().unwrap_or(0.0);
        q_gen_bus[bi] += candidate.q_gen_mvar.get(j).copied().unwrap_or(0.0);
    }
    let mut report = FeasibilityReport::default();
    for i in 0..nb {
        let bus = &net.buses[i];
        let p_res = p_inj[i] - net.mw_to_pu(p_gen_bus[i] - bus.p_load_mw);
        let q_res = q_inj[i] - net.mw_to_pu(q_gen_bus[i] - bus.q_load_mvar);
        report.active_balance_pu = report.active_balance_pu.max(p_res.abs());
        report.reactive_balance_pu = report.reactive_balance_pu.max(q_res.abs());
    }

    // masked flow limits, both ends
    for k in mask.iter() {
        let br = &net.branches[k];
        if !br.in_service || br.s_limit_mva <= 0.0 {
            continue;
        }
        let flow = branch_flow(net, &adm, &candidate.angles_rad, &candidate.magnitudes, k);
        let s = flow.s_max_mva();
        let excess = net.mw_to_pu(s - br.s_limit_mva);
        if excess > report.line_limit_pu {
            report.line_limit_pu = excess;
            report.worst_line = Some(k);
        }
    }

    // box bounds
    for (i, bus) in net.buses.iter().enumerate() {
        let v = candidate.magnitudes[i];
        let viol = (bus.v_min - v).max(v - bus.v_max).max(0.0);
        report.voltage_bound_pu = report.voltage_bound_pu.max(viol);
    }
    for (j, &gi) in active.iter().enumerate() {
        let g = &net.generators[gi];
        if let Some(&p) = candidate.p_gen_mw.get(j) {
            let viol = (g.p_min_mw - p).max(p - g.p_max_mw).max(0.0);
            report.p_bound_pu = report.p_bound_pu.max(net.mw_to_pu(viol));
        }
        if let Some(&q) = candidate.q_gen_mvar.get(j) {
            let viol = (g.q_min_mvar - q).max(q - g.q_max_mvar).max(0.0);
            report.q_bound_pu = report.q_bound_pu.max(net.mw_to_pu(viol));
        }
    }
    report.line_limit_pu = report.line_limit_pu.max(0.0);
    Ok(report)
}
