//! Base-case network solution at a fixed dispatch: Newton-Raphson AC power
//! flow in polar coordinates and the linear B-theta DC power flow.
//!
//! The market-clearing stage of the allocation pipeline is a plain power
//! flow: generator outputs come from the case data and the slack bus absorbs
//! the imbalance. Reactive limits on PV buses are not enforced by default;
//! constraint enforcement is the job of the OPF stage.

use crate::grid_model::{
    build_admittance, branch_flow, AdmittanceMatrix, BranchFlow, BusKind, GridModelError, Network,
};
use crate::numerics::{lu_factorize, NumericsError, SparseMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Grid(#[from] GridModelError),
    #[error("network has no slack bus")]
    NoSlack,
    #[error("singular system: {0}")]
    Singular(#[from] NumericsError),
    #[error("Newton iteration diverged after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    Diverged { iterations: usize, mismatch: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub angles_rad: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    pub flows: Vec<BranchFlow>,
    pub iterations: usize,
    pub converged: bool,
    pub max_mismatch_pu: f64,
    /// Mismatch after each Newton iteration, for convergence diagnostics.
    pub mismatch_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Start {
    Flat,
    Warm(Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PfOptions {
    pub tolerance_pu: f64,
    pub max_iterations: usize,
    /// Enforce generator reactive limits by switching PV buses to PQ.
    pub enforce_q_limits: bool,
    pub start: Start,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tolerance_pu: 1e-8,
            max_iterations: 30,
            enforce_q_limits: false,
            start: Start::Flat,
        }
    }
}

/// Net scheduled injection per bus in per-unit (generation minus load),
/// counting in-service generators only.
fn scheduled_injections(net: &Network) -> (Vec<f64>, Vec<f64>) {
    let n = net.n_buses();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (i, bus) in net.buses.iter().enumerate() {
        p[i] -= net.mw_to_pu(bus.p_load_mw);
        q[i] -= net.mw_to_pu(bus.q_load_mvar);
    }
    for gen in net.generators.iter().filter(|g| g.in_service) {
        let i = net.bus_index(gen.bus).expect("validated network");
        p[i] += net.mw_to_pu(gen.p_mw);
        q[i] += net.mw_to_pu(gen.q_mvar);
    }
    (p, q)
}

/// Linear DC power flow: B' theta = P with the slack angle fixed at zero.
pub fn dc_power_flow(net: &Network) -> Result<PowerFlowSolution, PowerFlowError> {
    net.validate()?;
    let n = net.n_buses();
    let slack = net.slack_index().ok_or(PowerFlowError::NoSlack)?;

    // reduced B' has slack row/col replaced with the identity to pin theta=0
    let mut bmat = SparseMatrix::new(n, n);
    // per-branch susceptance and fixed shift injections
    let mut p_inj = {
        let (p, _) = scheduled_injections(net);
        p
    };
    for bus in net.buses.iter() {
        // shunt conductance consumes active power at v=1
        if bus.gs_mw != 0.0 {
            let i = net.bus_index(bus.id).unwrap();
            p_inj[i] -= net.mw_to_pu(bus.gs_mw);
        }
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        let b = 1.0 / (br.reactance * br.tap());
        bmat.push(f, f, b);
        bmat.push(t, t, b);
        bmat.push(f, t, -b);
        bmat.push(t, f, -b);
        let shift_inj = -b * br.shift_rad();
        // a phase shifter injects at the from end and withdraws at the to end
        p_inj[f] -= shift_inj;
        p_inj[t] += shift_inj;
    }

    let mut rhs = p_inj.clone();
    rhs[slack] = 0.0;
    let mut reduced = SparseMatrix::new(n, n);
    for &(r, c, v) in bmat.entries() {
        if r != slack && c != slack {
            reduced.push(r, c, v);
        }
    }
    reduced.push(slack, slack, 1.0);

    let factorization = lu_factorize(&reduced)?;
    let theta = factorization.solve(&rhs)?;

    let mut flows = Vec::with_capacity(net.n_branches());
    let mut slack_p = 0.0;
    for br in net.branches.iter() {
        if !br.in_service {
            flows.push(BranchFlow::default());
            continue;
        }
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        let b = 1.0 / (br.reactance * br.tap());
        let p = b * (theta[f] - theta[t] - br.shift_rad());
        let p_mw = net.pu_to_mw(p);
        flows.push(BranchFlow {
            p_from_mw: p_mw,
            q_from_mvar: 0.0,
            p_to_mw: -p_mw,
            q_to_mvar: 0.0,
        });
        if f == slack {
            slack_p += p_mw;
        }
        if t == slack {
            slack_p -= p_mw;
        }
    }
    // slack output covers its own load and shunt consumption
    let slack_bus = &net.buses[slack];
    let slack_p_mw = slack_p + slack_bus.p_load_mw + slack_bus.gs_mw;

    Ok(PowerFlowSolution {
        angles_rad: theta,
        magnitudes: vec![1.0; n],
        slack_p_mw,
        slack_q_mvar: 0.0,
        flows,
        iterations: 0,
        converged: true,
        max_mismatch_pu: 0.0,
        mismatch_history: Vec::new(),
    })
}

/// Active and reactive injections implied by the admittance matrix at a
/// voltage state, in per-unit. Returns (P, Q).
pub fn injections_from_admittance(
    adm: &AdmittanceMatrix,
    angles: &[f64],
    magnitudes: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let y = merge_admittance(adm, angles.len());
    calc_injections(&y, angles, magnitudes)
}

/// Full Newton-Raphson AC power flow.
pub fn ac_power_flow(net: &Network, opts: &PfOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    net.validate()?;
    let n = net.n_buses();
    let slack = net.slack_index().ok_or(PowerFlowError::NoSlack)?;
    let adm = build_admittance(net)?;

    // merged Y entries for fast row iteration
    let y = merge_admittance(&adm, n);

    let (p_sched, q_sched) = scheduled_injections(net);
    let mut kind: Vec<BusKind> = net.buses.iter().map(|b| b.kind).collect();

    let (mut va, mut vm) = match &opts.start {
        Start::Flat => (vec![0.0; n], vec![1.0; n]),
        Start::Warm(a, m) => (a.clone(), m.clone()),
    };
    // PV and slack magnitudes come from generator setpoints
    for gen in net.generators.iter().filter(|g| g.in_service) {
        let i = net.bus_index(gen.bus).unwrap();
        if kind[i] != BusKind::Pq {
            vm[i] = gen.v_setpoint;
        }
    }

    let mut q_sched = q_sched;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut grew = 0usize;
    let mut last_mismatch = f64::INFINITY;

    loop {
        // mismatch
        let (p_calc, q_calc) = calc_injections(&y, &va, &vm);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if kind[i] != BusKind::Slack {
                worst = worst.max((p_calc[i] - p_sched[i]).abs());
            }
            if kind[i] == BusKind::Pq {
                worst = worst.max((q_calc[i] - q_sched[i]).abs());
            }
        }
        history.push(worst);
        if worst < opts.tolerance_pu {
            if opts.enforce_q_limits {
                if let Some(changed) =
                    enforce_q_limits(net, &kind, &q_calc, &mut q_sched)
                {
                    kind = changed;
                    continue;
                }
            }
            break;
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(
                net, &adm, va, vm, iterations, false, worst, history, slack,
            ));
        }
        if worst > last_mismatch {
            grew += 1;
            if grew >= 3 {
                return Err(PowerFlowError::Diverged {
                    iterations,
                    mismatch: worst,
                });
            }
        } else {
            grew = 0;
        }
        last_mismatch = worst;

        // index maps for the reduced Newton system
        let pvpq: Vec<usize> = (0..n).filter(|&i| kind[i] != BusKind::Slack).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| kind[i] == BusKind::Pq).collect();
        let mut pos_ang = vec![usize::MAX; n];
        for (j, &i) in pvpq.iter().enumerate() {
            pos_ang[i] = j;
        }
        let mut pos_mag = vec![usize::MAX; n];
        for (j, &i) in pq.iter().enumerate() {
            pos_mag[i] = pvpq.len() + j;
        }

        let dim = pvpq.len() + pq.len();
        let mut jac = SparseMatrix::new(dim, dim);
        let mut rhs = vec![0.0; dim];
        for (j, &i) in pvpq.iter().enumerate() {
            rhs[j] = -(p_calc[i] - p_sched[i]);
        }
        for (j, &i) in pq.iter().enumerate() {
            rhs[pvpq.len() + j] = -(q_calc[i] - q_sched[i]);
        }

        // polar Jacobian entries from the merged Y pattern
        for &(i, k, gv, bv) in &y {
            let row_p = pos_ang[i];
            let row_q = pos_mag[i];
            let vi = vm[i];
            if i == k {
                // self-admittance contributes only to the dV columns
                if row_p != usize::MAX && pos_mag[i] != usize::MAX {
                    jac.push(row_p, pos_mag[i], 2.0 * vi * gv);
                }
                if row_q != usize::MAX {
                    jac.push(row_q, pos_mag[i], -2.0 * vi * bv);
                }
                continue;
            }
            let th = va[i] - va[k];
            let (sn, cs) = th.sin_cos();
            let vk = vm[k];
            let c = gv * cs + bv * sn;
            let s = gv * sn - bv * cs;
            if row_p != usize::MAX {
                if pos_ang[k] != usize::MAX {
                    jac.push(row_p, pos_ang[k], vi * vk * s);
                }
                jac.push(row_p, row_p, -vi * vk * s);
                if pos_mag[k] != usize::MAX {
                    jac.push(row_p, pos_mag[k], vi * c);
                }
                if pos_mag[i] != usize::MAX {
                    jac.push(row_p, pos_mag[i], vk * c);
                }
            }
            if row_q != usize::MAX {
                if pos_ang[k] != usize::MAX {
                    jac.push(row_q, pos_ang[k], -vi * vk * c);
                }
                jac.push(row_q, pos_ang[i], vi * vk * c);
                if pos_mag[k] != usize::MAX {
                    jac.push(row_q, pos_mag[k], vi * s);
                }
                jac.push(row_q, pos_mag[i], vk * s);
            }
        }

        let factorization = lu_factorize(&jac)?;
        let dx = factorization.solve(&rhs)?;
        for (j, &i) in pvpq.iter().enumerate() {
            va[i] += dx[j];
        }
        for (j, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + j];
        }
        iterations += 1;
    }

    let worst = *history.last().unwrap_or(&0.0);
    Ok(finish(
        net, &adm, va, vm, iterations, true, worst, history, slack,
    ))
}

fn merge_admittance(adm: &AdmittanceMatrix, n: usize) -> Vec<(usize, usize, f64, f64)> {
    use std::collections::HashMap;
    let mut map: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for &(r, c, v) in adm.g.entries() {
        map.entry((r, c)).or_insert((0.0, 0.0)).0 += v;
    }
    for &(r, c, v) in adm.b.entries() {
        map.entry((r, c)).or_insert((0.0, 0.0)).1 += v;
    }
    let mut out: Vec<(usize, usize, f64, f64)> = map
        .into_iter()
        .map(|((r, c), (g, b))| (r, c, g, b))
        .collect();
    out.sort_unstable_by_key(|e| (e.0, e.1));
    let _ = n;
    out
}

fn calc_injections(y: &[(usize, usize, f64, f64)], va: &[f64], vm: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = va.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for &(i, k, gv, bv) in y {
        let th = va[i] - va[k];
        let (sn, cs) = th.sin_cos();
        p[i] += vm[i] * vm[k] * (gv * cs + bv * sn);
        q[i] += vm[i] * vm[k] * (gv * sn - bv * cs);
    }
    (p, q)
}

/// Switch PV buses whose reactive output leaves its limits to PQ. Returns
/// the new classification when anything changed.
fn enforce_q_limits(
    net: &Network,
    kind: &[BusKind],
    q_calc: &[f64],
    q_sched: &mut [f64],
) -> Option<Vec<BusKind>> {
    let mut changed = false;
    let mut new_kind = kind.to_vec();
    for (i, bus) in net.buses.iter().enumerate() {
        if kind[i] != BusKind::Pv {
            continue;
        }
        let mut q_min = 0.0;
        let mut q_max = 0.0;
        for gen in net.generators.iter().filter(|g| g.in_service) {
            if net.bus_index(gen.bus) == Some(i) {
                q_min += net.mw_to_pu(gen.q_min_mvar);
                q_max += net.mw_to_pu(gen.q_max_mvar);
            }
        }
        let q_gen = q_calc[i] + net.mw_to_pu(bus.q_load_mvar);
        if q_gen > q_max {
            new_kind[i] = BusKind::Pq;
            q_sched[i] = q_max - net.mw_to_pu(bus.q_load_mvar);
            changed = true;
        } else if q_gen < q_min {
            new_kind[i] = BusKind::Pq;
            q_sched[i] = q_min - net.mw_to_pu(bus.q_load_mvar);
            changed = true;
        }
    }
    changed.then_some(new_kind)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    net: &Network,
    adm: &AdmittanceMatrix,
    va: Vec<f64>,
    vm: Vec<f64>,
    iterations: usize,
    converged: bool,
    worst: f64,
    history: Vec<f64>,
    slack: usize,
) -> PowerFlowSolution {
    let flows: Vec<BranchFlow> = (0..net.n_branches())
        .map(|k| branch_flow(net, adm, &va, &vm, k))
        .collect();
    let (p_calc, q_calc) = {
        let y = merge_admittance(adm, net.n_buses());
        calc_injections(&y, &va, &vm)
    };
    let slack_bus = &net.buses[slack];
    let slack_p_mw = net.pu_to_mw(p_calc[slack]) + slack_bus.p_load_mw;
    let slack_q_mvar = net.pu_to_mw(q_calc[slack]) + slack_bus.q_load_mvar;
    PowerFlowSolution {
        angles_rad: va,
        magnitudes: vm,
        slack_p_mw,
        slack_q_mvar,
        flows,
        iterations,
        converged,
        max_mismatch_pu: worst,
        mismatch_history: history,
    }
}
