//! The cooperative game over congested lines and its Shapley values.
//!
//! Players are the congested lines of the base case. The characteristic
//! function maps a coalition to the optimal system cost of an OPF in which
//! the limits of coalition members (and of every non-player line) are
//! enforced while limits of absent players are dropped. With all 2^n
//! coalition costs evaluated, the Shapley value of a player is the
//! factorially weighted average of its marginal cost contributions.

use crate::congestion::CongestionSet;
use crate::grid_model::Network;
use crate::opf::{
    solve_ac_opf, solve_dc_opf, Formulation, IpmOptions, LimitMask, OpfError, OpfProblem,
    OpfSolution, OpfStart,
};
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("{players} players exceed the enumeration cap of {cap} (override the cap to proceed)")]
    CapExceeded { players: usize, cap: usize },
    #[error("characteristic OPF for coalition {coalition:#b} failed: {source}")]
    Characteristic {
        coalition: u64,
        #[source]
        source: OpfError,
    },
    #[error("player line {0} is not mapped to an operator")]
    UnmappedPlayer(usize),
}

/// Coalition of players encoded as a bitmask: bit k set means the k-th
/// player (ascending branch index) keeps its limit.
pub type Coalition = u64;

/// The game state: fixed player set plus the memoized characteristic costs.
pub struct Game<'a> {
    pub net: &'a Network,
    pub players: CongestionSet,
    pub formulation: Formulation,
    pub enumeration_cap: usize,
    pub opf_options: IpmOptions,
    /// Start each coalition solve from the grand-coalition optimum.
    pub warm_start: bool,
    cache: Mutex<HashMap<Coalition, f64>>,
    grand_solution: Mutex<Option<OpfSolution>>,
}

impl<'a> Game<'a> {
    pub fn new(net: &'a Network, players: CongestionSet, formulation: Formulation) -> Self {
        Game {
            net,
            players,
            formulation,
            enumeration_cap: 20,
            opf_options: IpmOptions::default(),
            warm_start: true,
            cache: Mutex::new(HashMap::new()),
            grand_solution: Mutex::new(None),
        }
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    fn grand_coalition(&self) -> Coalition {
        if self.n_players() == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_players()) - 1
        }
    }

    /// Limit mask for a coalition: every rated non-player line plus the
    /// coalition members; absent players are relaxed.
    pub fn mask_for(&self, coalition: Coalition) -> LimitMask {
        let absent: Vec<usize> = self
            .players
            .players
            .iter()
            .enumerate()
            .filter(|(bit, _)| coalition & (1 << bit) == 0)
            .map(|(_, p)| p.branch)
            .collect();
        LimitMask::full(self.net).without(&absent)
    }

    fn solve_masked(&self, mask: LimitMask) -> Result<OpfSolution, OpfError> {
        let mut problem = OpfProblem::new(self.net, mask, self.formulation);
        problem.options = self.opf_options.clone();
        let sol = match self.formulation {
            Formulation::Dc => solve_dc_opf(&problem)?,
            Formulation::Ac => {
                let start = if self.warm_start {
                    self.grand_solution
                        .lock()
                        .unwrap()
                        .as_ref()
                        .map(|s| OpfStart::Given(Box::new(s.clone())))
                        .unwrap_or_default()
                } else {
                    OpfStart::Flat
                };
                solve_ac_opf(&problem, &start)?
            }
        };
        if !sol.is_optimal() {
            return Err(OpfError::NotOptimal {
                status: match sol.status {
                    crate::opf::OpfStatus::Infeasible => crate::opf::IpmStatus::Infeasible,
                    crate::opf::OpfStatus::IterationLimit => crate::opf::IpmStatus::IterationLimit,
                    _ => crate::opf::IpmStatus::NumericalFailure,
                },
                iterations: sol.iterations,
                stationarity: sol.kkt_residuals.stationarity,
                primal: sol.kkt_residuals.primal,
                complementarity: sol.kkt_residuals.complementarity,
            });
        }
        Ok(sol)
    }

    /// Memoized characteristic cost of one coalition.
    pub fn characteristic_cost(&self, coalition: Coalition) -> Result<f64, ShapleyError> {
        debug_assert!(coalition <= self.grand_coalition());
        if let Some(&cost) = self.cache.lock().unwrap().get(&coalition) {
            return Ok(cost);
        }
        let sol = self
            .solve_masked(self.mask_for(coalition))
            .map_err(|source| ShapleyError::Characteristic { coalition, source })?;
        let cost = sol.objective;
        if coalition == self.grand_coalition() {
            *self.grand_solution.lock().unwrap() = Some(sol);
        }
        self.cache.lock().unwrap().insert(coalition, cost);
        Ok(cost)
    }

    /// Number of cached characteristic values.
    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    /// Export the characteristic cache as a bitmask -> cost table.
    pub fn export_cache(&self) -> HashMap<String, f64> {
        self.cache
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    }

    /// Import a previously exported cache; ignores malformed keys.
    pub fn import_cache(&self, table: &HashMap<String, f64>) {
        let mut cache = self.cache.lock().unwrap();
        for (k, v) in table {
            if let Ok(mask) = k.parse::<u64>() {
                if mask <= self.grand_coalition() {
                    cache.insert(mask, *v);
                }
            }
        }
    }

    /// Evaluate every coalition, fanning the independent solves out over the
    /// current rayon pool. The grand coalition runs first so warm starts
    /// have a solution to start from.
    pub fn evaluate_all(&self) -> Result<(), ShapleyError> {
        let n = self.n_players();
        if n > self.enumeration_cap {
            return Err(ShapleyError::CapExceeded {
                players: n,
                cap: self.enumeration_cap,
            });
        }
        self.characteristic_cost(self.grand_coalition())?;
        use rayon::prelude::*;
        let coalitions: Vec<Coalition> = (0..(1u64 << n)).collect();
        let results: Vec<Result<f64, ShapleyError>> = coalitions
            .par_iter()
            .map(|&c| self.characteristic_cost(c))
            .collect();
        for r in results {
            r?;
        }
        Ok(())
    }
}

/// Shapley allocation of the total redispatch cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Per-player value, ascending branch index order.
    pub shapley_values: Vec<f64>,
    /// Cost of the grand coalition (all limits enforced).
    pub total_system_cost: f64,
    /// Cost with every player limit relaxed.
    pub baseline_cost: f64,
    /// Total redispatch cost: grand minus baseline.
    pub total_redispatch_cost: f64,
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Shapley weight |S|! (n - |S| - 1)! / n!.
pub fn coalition_weight(subset_size: usize, n_players: usize) -> f64 {
    let num = factorial(subset_size) * factorial(n_players - subset_size - 1);
    num as f64 / factorial(n_players) as f64
}

/// Exact Shapley values by full coalition enumeration.
pub fn shapley_values(game: &Game) -> Result<Allocation, ShapleyError> {
    let n = game.n_players();
    if n > game.enumeration_cap {
        return Err(ShapleyError::CapExceeded {
            players: n,
            cap: game.enumeration_cap,
        });
    }
    game.evaluate_all()?;
    let grand = game.characteristic_cost(game.grand_coalition())?;
    let baseline = game.characteristic_cost(0)?;

    let mut values = vec![0.0; n];
    for (bit, value) in values.iter_mut().enumerate() {
        let member = 1u64 << bit;
        for coalition in 0..(1u64 << n) {
            if coalition & member != 0 {
                continue;
            }
            let size = coalition.count_ones() as usize;
            let w = coalition_weight(size, n);
            let with = game.characteristic_cost(coalition | member)?;
            let without = game.characteristic_cost(coalition)?;
            *value += w * (with - without);
        }
    }

    let total_redispatch = grand - baseline;
    let efficiency_gap = (values.iter().sum::<f64>() - total_redispatch).abs();
    if efficiency_gap > 1e-6 * grand.abs().max(1.0) {
        warn!(
            "shapley efficiency gap {:.3e} exceeds tolerance; cache may be inconsistent",
            efficiency_gap
        );
    }
    for (bit, v) in values.iter().enumerate() {
        if *v < -1e-6 * grand.abs().max(1.0) {
            warn!(
                "player {} (line {}) has negative value {:.4}; pure limit relaxation should not shrink the feasible set",
                bit,
                game.players.players[bit].branch + 1,
                v
            );
        }
    }

    Ok(Allocation {
        shapley_values: values,
        total_system_cost: grand,
        baseline_cost: baseline,
        total_redispatch_cost: total_redispatch,
    })
}

/// Sum per-player values into per-operator totals.
pub fn group_by_operator(
    players: &CongestionSet,
    allocation: &Allocation,
    zone_map: &HashMap<usize, String>,
) -> Result<HashMap<String, f64>, ShapleyError> {
    let mut totals: HashMap<String, f64> = HashMap::new();
    for (i, player) in players.players.iter().enumerate() {
        let op = zone_map
            .get(&player.branch)
            .ok_or(ShapleyError::UnmappedPlayer(player.branch))?;
        *totals.entry(op.clone()).or_insert(0.0) += allocation.shapley_values[i];
    }
    Ok(totals)
}

/// Shapley values of an explicitly tabulated characteristic function; the
/// driver for synthetic games in tests and for cache-replayed games.
pub fn shapley_from_table(n: usize, phi: &dyn Fn(Coalition) -> f64) -> Vec<f64> {
    let mut values = vec![0.0; n];
    for (bit, value) in values.iter_mut().enumerate() {
        let member = 1u64 << bit;
        for coalition in 0..(1u64 << n) {
            if coalition & member != 0 {
                continue;
            }
            let w = coalition_weight(coalition.count_ones() as usize, n);
            *value += w * (phi(coalition | member) - phi(coalition));
        }
    }
    values
}
