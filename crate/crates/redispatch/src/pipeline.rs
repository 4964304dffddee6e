//! End-to-end orchestration: load case, apply its modification, run the
//! market-clearing power flow, detect congestions, evaluate the coalition
//! game, and render the allocation report.

use crate::case_io::{self, CaseIoError};
use crate::congestion::{detect_congestions, CongestionSet};
use crate::grid_model::Network;
use crate::opf::{Formulation, IpmOptions};
use crate::power_flow::{ac_power_flow, dc_power_flow, PfOptions, PowerFlowError, PowerFlowSolution};
use crate::shapley::{shapley_values, Allocation, Game, ShapleyError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("load stage: {0}")]
    Load(#[from] CaseIoError),
    #[error("load stage: cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("load stage: unknown builtin case '{0}' and no such file")]
    UnknownCase(String),
    #[error("power flow stage: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("power flow stage: did not converge within {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    PfNotConverged { iterations: usize, mismatch: f64 },
    #[error("allocation stage: {0}")]
    Shapley(#[from] ShapleyError),
    #[error("validation stage: {0}")]
    Grid(#[from] crate::grid_model::GridModelError),
}

/// Where the case comes from: a builtin name resolved against the data
/// directory (with its catalog modification applied) or an explicit path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CaseSource {
    Builtin(String),
    Path(PathBuf),
}

/// Market-clearing dispatch for the power-flow stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketClearing {
    /// The Pg columns of the (modified) case.
    BaseDispatch,
    /// Dispatch from an OPF with all player limits relaxed.
    OpfDispatch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: CaseSource,
    pub formulation: Formulation,
    pub pf_tolerance_pu: f64,
    pub pf_max_iterations: usize,
    pub opf_tolerance: f64,
    pub congestion_tolerance_rel: f64,
    pub enumeration_cap: usize,
    pub workers: usize,
    pub warm_start: bool,
    pub market_clearing: MarketClearing,
    /// Directory searched for builtin case files.
    pub data_dir: PathBuf,
}

impl RunConfig {
    pub fn new(case: CaseSource, formulation: Formulation) -> Self {
        RunConfig {
            case,
            formulation,
            pf_tolerance_pu: 1e-8,
            pf_max_iterations: 30,
            opf_tolerance: 1e-6,
            congestion_tolerance_rel: 1e-4,
            enumeration_cap: 20,
            workers: 1,
            warm_start: true,
            market_clearing: MarketClearing::BaseDispatch,
            data_dir: PathBuf::from("data"),
        }
    }
}

/// One row of the final comparison table plus run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationReport {
    pub case_name: String,
    pub formulation: Formulation,
    pub n_buses: usize,
    pub n_branches: usize,
    /// 1-based player line numbers.
    pub congested_lines: Vec<usize>,
    pub overloads_mva: Vec<f64>,
    pub total_system_cost: f64,
    pub total_redispatch_cost: f64,
    pub shapley_values: Vec<f64>,
    pub stage_seconds: StageTimings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub power_flow: f64,
    pub detection: f64,
    pub game: f64,
    pub total: f64,
}

/// Everything the pipeline produced, for callers that want to inspect
/// intermediates rather than just the report.
pub struct PipelineArtifacts {
    pub network: Network,
    pub power_flow: PowerFlowSolution,
    pub congestion: CongestionSet,
    pub allocation: Allocation,
    pub characteristic_cache: HashMap<String, f64>,
    pub report: AllocationReport,
}

/// Resolve and load the case, applying the catalog modification for
/// builtin names.
pub fn load_case(cfg: &RunConfig) -> Result<(String, Network), PipelineError> {
    let (name, text, modification) = match &cfg.case {
        CaseSource::Builtin(name) => {
            let path = cfg.data_dir.join(format!("{name}.m"));
            let text = std::fs::read_to_string(&path).map_err(|source| {
                if case_io::catalog_lookup(name).is_none() {
                    PipelineError::UnknownCase(name.clone())
                } else {
                    PipelineError::Io {
                        path: path.display().to_string(),
                        source,
                    }
                }
            })?;
            (name.clone(), text, case_io::catalog_lookup(name))
        }
        CaseSource::Path(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "case".to_string());
            (name, text, None)
        }
    };
    let net = case_io::parse_matpower_case(&text)?;
    let net = match modification {
        Some(m) => case_io::apply_modifications(&net, &m)?,
        None => net,
    };
    net.validate()?;
    Ok((name, net))
}

fn market_clearing_network(cfg: &RunConfig, net: &Network) -> Result<Network, PipelineError> {
    match cfg.market_clearing {
        MarketClearing::BaseDispatch => Ok(net.clone()),
        MarketClearing::OpfDispatch => {
            // dispatch from an OPF with no line limits enforced at all
            let mut problem = crate::opf::OpfProblem::new(
                net,
                crate::opf::LimitMask::empty(),
                cfg.formulation,
            );
            problem.options.tolerance = cfg.opf_tolerance;
            let sol = match cfg.formulation {
                Formulation::Dc => crate::opf::solve_dc_opf(&problem),
                Formulation::Ac => crate::opf::solve_ac_opf(&problem, &Default::default()),
            }
            .map_err(|e| {
                PipelineError::Shapley(ShapleyError::Characteristic {
                    coalition: 0,
                    source: e,
                })
            })?;
            let mut out = net.clone();
            let mut j = 0;
            for gen in out.generators.iter_mut().filter(|g| g.in_service) {
                gen.p_mw = sol.p_gen_mw[j];
                gen.q_mvar = sol.q_gen_mvar[j];
                j += 1;
            }
            Ok(out)
        }
    }
}

/// Execute the full pipeline and keep every intermediate artifact.
pub fn run_pipeline_detailed(cfg: &RunConfig) -> Result<PipelineArtifacts, PipelineError> {
    let t_total = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (case_name, net) = load_case(cfg)?;
    timings.load = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let clearing_net = market_clearing_network(cfg, &net)?;
    let pf = match cfg.formulation {
        Formulation::Dc => dc_power_flow(&clearing_net)?,
        Formulation::Ac => ac_power_flow(
            &clearing_net,
            &PfOptions {
                tolerance_pu: cfg.pf_tolerance_pu,
                max_iterations: cfg.pf_max_iterations,
                ..Default::default()
            },
        )?,
    };
    if !pf.converged {
        return Err(PipelineError::PfNotConverged {
            iterations: pf.iterations,
            mismatch: pf.max_mismatch_pu,
        });
    }
    timings.power_flow = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let congestion = detect_congestions(&net, &pf, cfg.formulation, cfg.congestion_tolerance_rel);
    timings.detection = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut game = Game::new(&net, congestion.clone(), cfg.formulation);
    game.enumeration_cap = cfg.enumeration_cap;
    game.warm_start = cfg.warm_start;
    game.opf_options = IpmOptions {
        tolerance: cfg.opf_tolerance,
        ..Default::default()
    };
    let allocation = if congestion.is_empty() {
        // no congestion means no game: total cost is the unmasked optimum
        let baseline = game.characteristic_cost(0)?;
        Allocation {
            shapley_values: vec![],
            total_system_cost: baseline,
            baseline_cost: baseline,
            total_redispatch_cost: 0.0,
        }
    } else if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("rayon pool");
        pool.install(|| shapley_values(&game))?
    } else {
        shapley_values(&game)?
    };
    timings.game = t.elapsed().as_secs_f64();
    timings.total = t_total.elapsed().as_secs_f64();

    let report = AllocationReport {
        case_name,
        formulation: cfg.formulation,
        n_buses: net.n_buses(),
        n_branches: net.n_branches(),
        congested_lines: congestion.line_numbers(),
        overloads_mva: congestion.players.iter().map(|p| p.overload_mva).collect(),
        total_system_cost: allocation.total_system_cost,
        total_redispatch_cost: allocation.total_redispatch_cost,
        shapley_values: allocation.shapley_values.clone(),
        stage_seconds: timings,
    };
    Ok(PipelineArtifacts {
        characteristic_cache: game.export_cache(),
        network: net,
        power_flow: pf,
        congestion,
        allocation,
        report,
    })
}

/// Execute the pipeline and return only the report row.
pub fn run_pipeline(cfg: &RunConfig) -> Result<AllocationReport, PipelineError> {
    run_pipeline_detailed(cfg).map(|a| a.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

fn fmt_hms(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{}:{:02}:{:02}", s / 3600, (s % 3600) / 60, s % 60)
}

fn fmt_money(v: f64) -> String {
    format!("{:.1}", v)
}

fn fmt_values(values: &[f64]) -> String {
    let inner = values
        .iter()
        .map(|v| fmt_money(*v))
        .collect::<Vec<_>>()
        .join(",");
    format!("({inner})")
}

fn fmt_lines(lines: &[usize]) -> String {
    let inner = lines
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",");
    format!("({inner})")
}

/// Render a report. Currency is rounded to 0.1 $, runtimes to whole seconds.
pub fn emit_report(report: &AllocationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Csv => {
            let mut out = String::from(
                "case,formulation,lines,congested_lines,total_system_cost,total_redispatch_cost,shapley_values,runtime\n",
            );
            out.push_str(&format!(
                "{},{:?},{},\"{}\",{},{},\"{}\",{}\n",
                report.case_name,
                report.formulation,
                report.n_branches,
                fmt_lines(&report.congested_lines),
                fmt_money(report.total_system_cost),
                fmt_money(report.total_redispatch_cost),
                fmt_values(&report.shapley_values),
                fmt_hms(report.stage_seconds.total),
            ));
            out
        }
        ReportFormat::Table => {
            let header = format!(
                "{:<10} {:<6} {:<18} {:>18} {:>22} {:<24} {:>10}",
                "Case",
                "Lines",
                "Congested Lines",
                "Total system costs",
                "Total redispatch costs",
                "Shapley Values",
                "Runtime"
            );
            let row = format!(
                "{:<10} {:<6} {:<18} {:>18} {:>22} {:<24} {:>10}",
                report.case_name,
                report.n_branches,
                fmt_lines(&report.congested_lines),
                fmt_money(report.total_system_cost),
                fmt_money(report.total_redispatch_cost),
                fmt_values(&report.shapley_values),
                fmt_hms(report.stage_seconds.total),
            );
            format!("{header}\n{row}\n")
        }
    }
}

/// Render the network as Graphviz DOT: generation buses green, load buses
/// red, edge width proportional to loading, player lines highlighted.
pub fn export_graph(
    net: &Network,
    flows: &[crate::grid_model::BranchFlow],
    players: &CongestionSet,
) -> String {
    let mut out = String::from("graph grid {\n  layout=neato;\n  node [style=filled];\n");
    let mut net_injection = vec![0.0; net.n_buses()];
    for (i, bus) in net.buses.iter().enumerate() {
        net_injection[i] -= bus.p_load_mw;
    }
    for gen in net.generators.iter().filter(|g| g.in_service) {
        net_injection[net.bus_index(gen.bus).unwrap()] += gen.p_mw;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        let color = if net_injection[i] > 1e-9 {
            "palegreen"
        } else if net_injection[i] < -1e-9 {
            "lightcoral"
        } else {
            "lightgray"
        };
        out.push_str(&format!("  b{} [label=\"{}\", fillcolor={}];\n", bus.id, bus.id, color));
    }
    let s_max = flows
        .iter()
        .map(|f| f.s_max_mva())
        .fold(1e-9f64, f64::max);
    let player_set: std::collections::BTreeSet<usize> =
        players.players.iter().map(|p| p.branch).collect();
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let s = flows.get(k).map(|f| f.s_max_mva()).unwrap_or(0.0);
        let width = 0.5 + 4.0 * s / s_max;
        let color = if player_set.contains(&k) { "red" } else { "steelblue" };
        out.push_str(&format!(
            "  b{} -- b{} [penwidth={:.2}, color={}];\n",
            br.from_bus, br.to_bus, width, color
        ));
    }
    out.push_str("}\n");
    out
}
