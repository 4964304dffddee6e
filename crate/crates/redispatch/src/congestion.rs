//! Player-set determination: lines whose base-case flow exceeds their rating.
//!
//! The congestion set is computed once from the market-clearing power flow
//! and stays fixed for the whole allocation game. DC flows are compared by
//! active power magnitude, AC flows by the larger apparent power of the two
//! line ends.

use crate::grid_model::Network;
use crate::opf::Formulation;
use crate::power_flow::PowerFlowSolution;
use serde::{Deserialize, Serialize};

/// One congested line of the game, with the observed base-case flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestedLine {
    /// 0-based branch index.
    pub branch: usize,
    pub limit_mva: f64,
    pub flow_mva: f64,
    pub overload_mva: f64,
}

/// Ordered list of players, ascending by branch index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CongestionSet {
    pub players: Vec<CongestedLine>,
}

impl CongestionSet {
    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn branch_indices(&self) -> Vec<usize> {
        self.players.iter().map(|p| p.branch).collect()
    }

    /// 1-based line numbers, the way case files and reports count them.
    pub fn line_numbers(&self) -> Vec<usize> {
        self.players.iter().map(|p| p.branch + 1).collect()
    }
}

/// Compare base-case flows against ratings. Lines without a rating never
/// become players; `tolerance_rel` suppresses flutter at exactly binding
/// limits.
pub fn detect_congestions(
    net: &Network,
    pf: &PowerFlowSolution,
    formulation: Formulation,
    tolerance_rel: f64,
) -> CongestionSet {
    let mut players = Vec::new();
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service || br.s_limit_mva <= 0.0 {
            continue;
        }
        let flow = match formulation {
            Formulation::Dc => pf.flows[k].p_from_mw.abs(),
            Formulation::Ac => pf.flows[k].s_max_mva(),
        };
        if flow > br.s_limit_mva * (1.0 + tolerance_rel) {
            players.push(CongestedLine {
                branch: k,
                limit_mva: br.s_limit_mva,
                flow_mva: flow,
                overload_mva: flow - br.s_limit_mva,
            });
        }
    }
    players.sort_by_key(|p| p.branch);
    CongestionSet { players }
}
