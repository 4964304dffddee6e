//! Typed network model and bus admittance construction.
//!
//! Quantities are stored in the units of the MATPOWER case format (MW, MVAr,
//! MVA, per-unit impedances on the system base) so that files round-trip
//! exactly; the solvers convert to per-unit vectors at their boundary.
//! Electrically the network is the usual Pi-branch model with off-nominal
//! taps, phase shifts, line charging and bus shunts.

use crate::numerics::SparseMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridModelError {
    #[error("bus {0} referenced but not defined")]
    UnknownBus(usize),
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("in-service branch {index} ({from}-{to}) has zero reactance")]
    ZeroImpedanceBranch { index: usize, from: usize, to: usize },
    #[error("branch {index} connects bus {bus} to itself")]
    SelfLoop { index: usize, bus: usize },
    #[error("network is not connected after removing out-of-service elements ({unreached} of {total} buses unreachable)")]
    Disconnected { unreached: usize, total: usize },
    #[error("bus {bus}: voltage bounds {v_min}..{v_max} invalid")]
    BadVoltageBounds { bus: usize, v_min: f64, v_max: f64 },
    #[error("generator {index}: active power bounds {p_min}..{p_max} invalid")]
    BadGenBounds { index: usize, p_min: f64, p_max: f64 },
    #[error("cost curve {index}: negative quadratic coefficient {a}")]
    ConcaveCost { index: usize, a: f64 },
    #[error("dimension mismatch: {context} expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number as it appears in the case file.
    pub id: usize,
    pub kind: BusKind,
    pub p_load_mw: f64,
    pub q_load_mvar: f64,
    /// Shunt conductance, MW consumed at v = 1 pu.
    pub gs_mw: f64,
    /// Shunt susceptance, MVAr injected at v = 1 pu.
    pub bs_mvar: f64,
    pub area: usize,
    pub vm: f64,
    pub va_deg: f64,
    pub base_kv: f64,
    pub zone: usize,
    pub v_max: f64,
    pub v_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// External bus numbers.
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
    pub reactance: f64,
    pub charging: f64,
    /// Long-term MVA rating; 0 means unlimited.
    pub s_limit_mva: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal tap ratio at the from end; 0 means nominal (1.0).
    pub tap_ratio: f64,
    pub phase_shift_deg: f64,
    pub in_service: bool,
    pub ang_min: f64,
    pub ang_max: f64,
}

impl Branch {
    pub fn tap(&self) -> f64 {
        if self.tap_ratio == 0.0 {
            1.0
        } else {
            self.tap_ratio
        }
    }

    pub fn shift_rad(&self) -> f64 {
        self.phase_shift_deg.to_radians()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// External bus number.
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub q_max_mvar: f64,
    pub q_min_mvar: f64,
    pub v_setpoint: f64,
    pub m_base: f64,
    pub in_service: bool,
    pub p_max_mw: f64,
    pub p_min_mw: f64,
    /// Trailing MATPOWER columns (Pc1..apf), preserved for round trips.
    pub extra: Vec<f64>,
}

/// Quadratic generation cost a p^2 + b p + c with p in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub startup: f64,
    pub shutdown: f64,
}

impl CostCurve {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.a * p_mw * p_mw + self.b * p_mw + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub costs: Vec<CostCurve>,
    #[serde(skip)]
    bus_index: HashMap<usize, usize>,
}

impl Network {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        costs: Vec<CostCurve>,
    ) -> Self {
        let bus_index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Network {
            base_mva,
            buses,
            branches,
            generators,
            costs,
            bus_index,
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal index of an external bus number.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    /// Rebuild the id map after buses were edited.
    pub fn reindex(&mut self) {
        self.bus_index = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn mw_to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    pub fn pu_to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    /// Check the structural invariants: id references, one slack, nonzero
    /// reactances, connectivity of the in-service subnetwork.
    pub fn validate(&self) -> Result<(), GridModelError> {
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack_count != 1 {
            return Err(GridModelError::SlackCount(slack_count));
        }
        for bus in &self.buses {
            if !(bus.v_min > 0.0 && bus.v_min <= bus.v_max) {
                return Err(GridModelError::BadVoltageBounds {
                    bus: bus.id,
                    v_min: bus.v_min,
                    v_max: bus.v_max,
                });
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            let f = self
                .bus_index(br.from_bus)
                .ok_or(GridModelError::UnknownBus(br.from_bus))?;
            let t = self
                .bus_index(br.to_bus)
                .ok_or(GridModelError::UnknownBus(br.to_bus))?;
            if f == t {
                return Err(GridModelError::SelfLoop {
                    index: i,
                    bus: br.from_bus,
                });
            }
            if br.in_service && br.reactance == 0.0 {
                return Err(GridModelError::ZeroImpedanceBranch {
                    index: i,
                    from: br.from_bus,
                    to: br.to_bus,
                });
            }
        }
        for (i, gen) in self.generators.iter().enumerate() {
            if self.bus_index(gen.bus).is_none() {
                return Err(GridModelError::UnknownBus(gen.bus));
            }
            if gen.p_min_mw > gen.p_max_mw || gen.q_min_mvar > gen.q_max_mvar {
                return Err(GridModelError::BadGenBounds {
                    index: i,
                    p_min: gen.p_min_mw,
                    p_max: gen.p_max_mw,
                });
            }
        }
        for (i, cost) in self.costs.iter().enumerate() {
            if cost.a < 0.0 {
                return Err(GridModelError::ConcaveCost { index: i, a: cost.a });
            }
        }
        // connectivity over in-service branches
        let n = self.n_buses();
        if n > 0 {
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
            for br in self.branches.iter().filter(|b| b.in_service) {
                let f = self.bus_index(br.from_bus).unwrap();
                let t = self.bus_index(br.to_bus).unwrap();
                adj[f].push(t);
                adj[t].push(f);
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut reached = 1;
            while let Some(v) = stack.pop() {
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        reached += 1;
                        stack.push(u);
                    }
                }
            }
            if reached != n {
                return Err(GridModelError::Disconnected {
                    unreached: n - reached,
                    total: n,
                });
            }
        }
        Ok(())
    }
}

/// Per-branch 2x2 admittance block of the Pi model, in rectangular parts.
#[derive(Debug, Clone, Copy, Default)]
pub struct BranchAdmittance {
    pub g_ff: f64,
    pub b_ff: f64,
    pub g_ft: f64,
    pub b_ft: f64,
    pub g_tf: f64,
    pub b_tf: f64,
    pub g_tt: f64,
    pub b_tt: f64,
}

/// Bus admittance matrix Y = G + jB plus the per-branch blocks the flow
/// equations need.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub g: SparseMatrix,
    pub b: SparseMatrix,
    pub branches: Vec<BranchAdmittance>,
}

/// Assemble the bus admittance matrix. Out-of-service branches contribute
/// nothing; their per-branch block is zero.
pub fn build_admittance(net: &Network) -> Result<AdmittanceMatrix, GridModelError> {
    let n = net.n_buses();
    let mut g = SparseMatrix::new(n, n);
    let mut b = SparseMatrix::new(n, n);
    let mut blocks = Vec::with_capacity(net.n_branches());

    for (i, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            blocks.push(BranchAdmittance::default());
            continue;
        }
        if br.reactance == 0.0 {
            return Err(GridModelError::ZeroImpedanceBranch {
                index: i,
                from: br.from_bus,
                to: br.to_bus,
            });
        }
        let f = net
            .bus_index(br.from_bus)
            .ok_or(GridModelError::UnknownBus(br.from_bus))?;
        let t = net
            .bus_index(br.to_bus)
            .ok_or(GridModelError::UnknownBus(br.to_bus))?;

        let denom = br.resistance * br.resistance + br.reactance * br.reactance;
        let ys_g = br.resistance / denom;
        let ys_b = -br.reactance / denom;
        let half_charge = br.charging / 2.0;
        let tap = br.tap();
        let shift = br.shift_rad();
        let (cs, sn) = (shift.cos(), shift.sin());

        // yff = (ys + j bc/2) / tap^2
        let g_ff = ys_g / (tap * tap);
        let b_ff = (ys_b + half_charge) / (tap * tap);
        // yft = -ys / (tap e^{-j shift}),  ytf = -ys / (tap e^{+j shift})
        let g_ft = -(ys_g * cs - ys_b * sn) / tap;
        let b_ft = -(ys_b * cs + ys_g * sn) / tap;
        let g_tf = -(ys_g * cs + ys_b * sn) / tap;
        let b_tf = -(ys_b * cs - ys_g * sn) / tap;
        let g_tt = ys_g;
        let b_tt = ys_b + half_charge;

        g.push(f, f, g_ff);
        b.push(f, f, b_ff);
        g.push(t, t, g_tt);
        b.push(t, t, b_tt);
        g.push(f, t, g_ft);
        b.push(f, t, b_ft);
        g.push(t, f, g_tf);
        b.push(t, f, b_tf);

        blocks.push(BranchAdmittance {
            g_ff,
            b_ff,
            g_ft,
            b_ft,
            g_tf,
            b_tf,
            g_tt,
            b_tt,
        });
    }

    for (i, bus) in net.buses.iter().enumerate() {
        if bus.gs_mw != 0.0 {
            g.push(i, i, bus.gs_mw / net.base_mva);
        }
        if bus.bs_mvar != 0.0 {
            b.push(i, i, bus.bs_mvar / net.base_mva);
        }
    }

    Ok(AdmittanceMatrix {
        g,
        b,
        branches: blocks,
    })
}

/// Total generation cost in $/h for a dispatch in MW.
pub fn generation_cost(net: &Network, p_g_mw: &[f64]) -> Result<f64, GridModelError> {
    let active: Vec<usize> = net
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service)
        .map(|(i, _)| i)
        .collect();
    if p_g_mw.len() != active.len() {
        return Err(GridModelError::Dimension {
            context: "generation_cost dispatch",
            expected: active.len(),
            got: p_g_mw.len(),
        });
    }
    Ok(active
        .iter()
        .zip(p_g_mw)
        .map(|(&gi, &p)| net.costs[gi].eval(p))
        .sum())
}

/// Active/reactive/apparent flow of one branch at both ends, in MW/MVAr/MVA.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
}

impl BranchFlow {
    pub fn s_from_mva(&self) -> f64 {
        self.p_from_mw.hypot(self.q_from_mvar)
    }

    pub fn s_to_mva(&self) -> f64 {
        self.p_to_mw.hypot(self.q_to_mvar)
    }

    pub fn s_max_mva(&self) -> f64 {
        self.s_from_mva().max(self.s_to_mva())
    }
}

/// Evaluate the flow equations for one branch at a solved voltage state.
pub fn branch_flow(
    net: &Network,
    adm: &AdmittanceMatrix,
    angles_rad: &[f64],
    magnitudes: &[f64],
    branch: usize,
) -> BranchFlow {
    let br = &net.branches[branch];
    if !br.in_service {
        return BranchFlow::default();
    }
    let y = &adm.branches[branch];
    let f = net.bus_index(br.from_bus).expect("validated network");
    let t = net.bus_index(br.to_bus).expect("validated network");
    let (vf, vt) = (magnitudes[f], magnitudes[t]);
    let th = angles_rad[f] - angles_rad[t];
    let (cs, sn) = (th.cos(), th.sin());

    let p_from = vf * vf * y.g_ff + vf * vt * (y.g_ft * cs + y.b_ft * sn);
    let q_from = -vf * vf * y.b_ff + vf * vt * (y.g_ft * sn - y.b_ft * cs);
    // seen from the to end the angle difference flips sign
    let p_to = vt * vt * y.g_tt + vt * vf * (y.g_tf * cs - y.b_tf * sn);
    let q_to = -vt * vt * y.b_tt + vt * vf * (-y.g_tf * sn - y.b_tf * cs);

    BranchFlow {
        p_from_mw: net.pu_to_mw(p_from),
        q_from_mvar: net.pu_to_mw(q_from),
        p_to_mw: net.pu_to_mw(p_to),
        q_to_mvar: net.pu_to_mw(q_to),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{load_case, load_modified};

    fn two_bus_reactance_net(status: bool) -> Network {
        let buses = vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                p_load_mw: 0.0,
                q_load_mvar: 0.0,
                gs_mw: 0.0,
                bs_mvar: 0.0,
                area: 1,
                vm: 1.0,
                va_deg: 0.0,
                base_kv: 100.0,
                zone: 1,
                v_max: 1.1,
                v_min: 0.9,
            },
            Bus {
                id: 2,
                kind: BusKind::Pq,
                p_load_mw: 0.0,
                q_load_mvar: 0.0,
                gs_mw: 0.0,
                bs_mvar: 0.0,
                area: 1,
                vm: 1.0,
                va_deg: 0.0,
                base_kv: 100.0,
                zone: 1,
                v_max: 1.1,
                v_min: 0.9,
            },
        ];
        let branches = vec![Branch {
            from_bus: 1,
            to_bus: 2,
            resistance: 0.0,
            reactance: 1.0,
            charging: 0.0,
            s_limit_mva: 0.0,
            rate_b: 0.0,
            rate_c: 0.0,
            tap_ratio: 0.0,
            phase_shift_deg: 0.0,
            in_service: status,
            ang_min: -360.0,
            ang_max: 360.0,
        }];
        Network::new(100.0, buses, branches, vec![], vec![])
    }

    #[test]
    fn pure_reactance_admittance() {
        let net = two_bus_reactance_net(true);
        let adm = build_admittance(&net).unwrap();
        let g = adm.g.to_csc().unwrap();
        let b = adm.b.to_csc().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.get(i, j), 0.0, "G[{i}][{j}]");
            }
        }
        assert!((b.get(0, 0) - (-1.0)).abs() < 1e-15);
        assert!((b.get(1, 1) - (-1.0)).abs() < 1e-15);
        assert!((b.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((b.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_service_branch_contributes_nothing() {
        let net = two_bus_reactance_net(false);
        let adm = build_admittance(&net).unwrap();
        assert!(adm.g.entries().is_empty());
        assert!(adm.b.entries().is_empty());
    }

    /// Independent element-by-element assembly in complex arithmetic; the
    /// oracle for the production builder.
    fn assemble_dense_oracle(net: &Network) -> Vec<Vec<(f64, f64)>> {
        let n = net.n_buses();
        let mut y = vec![vec![(0.0, 0.0); n]; n];
        let cadd = |a: (f64, f64), b: (f64, f64)| (a.0 + b.0, a.1 + b.1);
        let cmul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
        let cdiv = |a: (f64, f64), b: (f64, f64)| {
            let d = b.0 * b.0 + b.1 * b.1;
            ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
        };
        for br in net.branches.iter().filter(|b| b.in_service) {
            let f = net.bus_index(br.from_bus).unwrap();
            let t = net.bus_index(br.to_bus).unwrap();
            let ys = cdiv((1.0, 0.0), (br.resistance, br.reactance));
            let ysh = (0.0, br.charging / 2.0);
            let tap = br.tap();
            let sh = br.shift_rad();
            let tap_c = (tap * sh.cos(), tap * sh.sin());
            let tap_conj = (tap_c.0, -tap_c.1);
            let t2 = (tap * tap, 0.0);
            let yff = cdiv(cadd(ys, ysh), t2);
            let ytt = cadd(ys, ysh);
            let yft = cdiv(cmul((-1.0, 0.0), ys), tap_conj);
            let ytf = cdiv(cmul((-1.0, 0.0), ys), tap_c);
            y[f][f] = cadd(y[f][f], yff);
            y[t][t] = cadd(y[t][t], ytt);
            y[f][t] = cadd(y[f][t], yft);
            y[t][f] = cadd(y[t][f], ytf);
        }
        for (i, bus) in net.buses.iter().enumerate() {
            y[i][i] = cadd(y[i][i], (bus.gs_mw / net.base_mva, bus.bs_mvar / net.base_mva));
        }
        y
    }

    #[test]
    fn case9_admittance_matches_independent_assembly() {
        let net = load_case("case9");
        let adm = build_admittance(&net).unwrap();
        let oracle = assemble_dense_oracle(&net);
        let g = adm.g.to_csc().unwrap();
        let b = adm.b.to_csc().unwrap();
        let n = net.n_buses();
        for i in 0..n {
            for j in 0..n {
                assert!((g.get(i, j) - oracle[i][j].0).abs() < 1e-12);
                assert!((b.get(i, j) - oracle[i][j].1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn case39_admittance_matches_independent_assembly() {
        // case39 exercises taps; the oracle covers the transformer model
        let net = load_case("case39");
        let adm = build_admittance(&net).unwrap();
        let oracle = assemble_dense_oracle(&net);
        let g = adm.g.to_csc().unwrap();
        let b = adm.b.to_csc().unwrap();
        for i in 0..net.n_buses() {
            for j in 0..net.n_buses() {
                assert!((g.get(i, j) - oracle[i][j].0).abs() < 1e-12);
                assert!((b.get(i, j) - oracle[i][j].1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn admittance_is_sum_of_single_branch_matrices() {
        let net = load_case("case9");
        let full = build_admittance(&net).unwrap();
        let g_full = full.g.to_csc().unwrap();
        let b_full = full.b.to_csc().unwrap();
        let n = net.n_buses();
        let mut g_sum = vec![vec![0.0; n]; n];
        let mut b_sum = vec![vec![0.0; n]; n];
        for k in 0..net.n_branches() {
            let mut single = net.clone();
            for (i, br) in single.branches.iter_mut().enumerate() {
                br.in_service = i == k;
            }
            for bus in single.buses.iter_mut() {
                bus.gs_mw = 0.0;
                bus.bs_mvar = 0.0;
            }
            let adm = build_admittance(&single).unwrap();
            for &(r, c, v) in adm.g.entries() {
                g_sum[r][c] += v;
            }
            for &(r, c, v) in adm.b.entries() {
                b_sum[r][c] += v;
            }
        }
        // shunt-only network adds the shunts
        let mut shunts_only = net.clone();
        for br in shunts_only.branches.iter_mut() {
            br.in_service = false;
        }
        let adm = build_admittance(&shunts_only).unwrap();
        for &(r, c, v) in adm.g.entries() {
            g_sum[r][c] += v;
        }
        for &(r, c, v) in adm.b.entries() {
            b_sum[r][c] += v;
        }
        for i in 0..n {
            for j in 0..n {
                assert!((g_full.get(i, j) - g_sum[i][j]).abs() < 1e-13);
                assert!((b_full.get(i, j) - b_sum[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn generation_cost_trivials() {
        let mut net = two_bus_reactance_net(true);
        net.generators = vec![
            Generator {
                bus: 1,
                p_mw: 0.0,
                q_mvar: 0.0,
                q_max_mvar: 10.0,
                q_min_mvar: -10.0,
                v_setpoint: 1.0,
                m_base: 100.0,
                in_service: true,
                p_max_mw: 100.0,
                p_min_mw: 0.0,
                extra: vec![],
            },
            Generator {
                bus: 2,
                p_mw: 0.0,
                q_mvar: 0.0,
                q_max_mvar: 10.0,
                q_min_mvar: -10.0,
                v_setpoint: 1.0,
                m_base: 100.0,
                in_service: true,
                p_max_mw: 100.0,
                p_min_mw: 0.0,
                extra: vec![],
            },
        ];
        net.costs = vec![
            CostCurve { a: 0.0, b: 0.0, c: 5.0, startup: 0.0, shutdown: 0.0 },
            CostCurve { a: 0.0, b: 0.0, c: 7.0, startup: 0.0, shutdown: 0.0 },
        ];
        assert_eq!(generation_cost(&net, &[0.0, 0.0]).unwrap(), 12.0);
        assert!(generation_cost(&net, &[0.0]).is_err());
    }

    #[test]
    fn case9_linear_costs_at_ten_megawatts() {
        let net = load_modified("case9");
        // (30 + 25 + 20) $/MWh at 10 MW each
        let cost = generation_cost(&net, &[10.0, 10.0, 10.0]).unwrap();
        assert!((cost - 750.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_cost_matches_symbolic_evaluation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut net = two_bus_reactance_net(true);
        net.generators = vec![Generator {
            bus: 1,
            p_mw: 0.0,
            q_mvar: 0.0,
            q_max_mvar: 10.0,
            q_min_mvar: -10.0,
            v_setpoint: 1.0,
            m_base: 100.0,
            in_service: true,
            p_max_mw: 100.0,
            p_min_mw: 0.0,
            extra: vec![],
        }];
        for _ in 0..50 {
            let (a, b, c): (f64, f64, f64) = (
                rng.gen_range(0.0..1.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-100.0..100.0),
            );
            let p: f64 = rng.gen_range(-50.0..200.0);
            net.costs = vec![CostCurve { a, b, c, startup: 0.0, shutdown: 0.0 }];
            let direct = a * p * p + b * p + c;
            assert_eq!(generation_cost(&net, &[p]).unwrap(), direct);
        }
    }

    #[test]
    fn lossless_symmetric_state_has_zero_flow() {
        let net = two_bus_reactance_net(true);
        let adm = build_admittance(&net).unwrap();
        let flow = branch_flow(&net, &adm, &[0.3, 0.3], &[1.0, 1.0], 0);
        assert!(flow.p_from_mw.abs() < 1e-12);
        assert!(flow.p_to_mw.abs() < 1e-12);
    }

    #[test]
    fn two_bus_flow_matches_hand_formula() {
        let mut net = two_bus_reactance_net(true);
        net.branches[0].reactance = 0.1;
        let adm = build_admittance(&net).unwrap();
        let theta = 0.1;
        let flow = branch_flow(&net, &adm, &[theta, 0.0], &[1.0, 1.0], 0);
        // p = v1 v2 b sin(theta) with b = 1/x
        let expected = net.pu_to_mw(theta.sin() / 0.1);
        assert!((flow.p_from_mw - expected).abs() < 1e-9);
    }

    #[test]
    fn per_unit_round_trip_is_tight() {
        let net = load_case("case9");
        for mw in [0.0, 1.0, 315.0, 123.456789, 1e-7, 98765.4321] {
            let back = net.pu_to_mw(net.mw_to_pu(mw));
            assert!((back - mw).abs() <= 1e-12 * mw.abs().max(1.0));
        }
    }

    #[test]
    fn validation_catches_structural_problems() {
        let mut net = two_bus_reactance_net(true);
        net.buses[1].kind = BusKind::Slack;
        assert!(matches!(net.validate(), Err(GridModelError::SlackCount(2))));

        let mut net = two_bus_reactance_net(true);
        net.branches[0].reactance = 0.0;
        assert!(matches!(
            net.validate(),
            Err(GridModelError::ZeroImpedanceBranch { .. })
        ));

        let mut net = two_bus_reactance_net(true);
        net.branches[0].in_service = false;
        assert!(matches!(
            net.validate(),
            Err(GridModelError::Disconnected { .. })
        ));
    }
}
