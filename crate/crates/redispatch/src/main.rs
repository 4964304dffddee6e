use clap::{Parser, Subcommand, ValueEnum};
use redispatch::pipeline::{
    emit_report, export_graph, run_pipeline_detailed, CaseSource, MarketClearing, ReportFormat,
    RunConfig,
};
use redispatch::opf::Formulation;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "redispatch", about = "Shapley-value redispatch cost allocation over DC/AC OPF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Dc,
    Ac,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClearingArg {
    Base,
    Opf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the allocation pipeline on one case.
    Run {
        /// Builtin case name (case9, case39, ...) or a path to a MATPOWER file.
        #[arg(long)]
        case: String,
        #[arg(long, value_enum, default_value = "dc")]
        formulation: FormulationArg,
        /// Parallel workers for the coalition fan-out.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Player-count cap for exact enumeration.
        #[arg(long, default_value_t = 20)]
        max_players: usize,
        #[arg(long, value_enum, default_value = "table")]
        report: ReportArg,
        /// Write a Graphviz DOT rendering of the solved network here.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Persist the characteristic-function cache as JSON here.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Directory containing builtin case files.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Market clearing model for the power-flow stage.
        #[arg(long, value_enum, default_value = "base")]
        market_clearing: ClearingArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            case,
            formulation,
            workers,
            max_players,
            report,
            graph,
            cache,
            data_dir,
            market_clearing,
        } => {
            let source = if case.ends_with(".m") || case.contains('/') {
                CaseSource::Path(PathBuf::from(&case))
            } else {
                CaseSource::Builtin(case.clone())
            };
            let mut cfg = RunConfig::new(
                source,
                match formulation {
                    FormulationArg::Dc => Formulation::Dc,
                    FormulationArg::Ac => Formulation::Ac,
                },
            );
            cfg.workers = workers.max(1);
            cfg.enumeration_cap = max_players;
            cfg.data_dir = data_dir;
            cfg.market_clearing = match market_clearing {
                ClearingArg::Base => MarketClearing::BaseDispatch,
                ClearingArg::Opf => MarketClearing::OpfDispatch,
            };

            let artifacts = match run_pipeline_detailed(&cfg) {
                Ok(a) => a,
                Err(err) => {
                    eprintln!("error: {err}");
                    use redispatch::pipeline::PipelineError as E;
                    let code = match &err {
                        E::Load(_) | E::Io { .. } | E::UnknownCase(_) => 2,
                        E::PowerFlow(_) | E::PfNotConverged { .. } => 3,
                        E::Shapley(redispatch::shapley::ShapleyError::CapExceeded {
                            ..
                        }) => 5,
                        E::Shapley(_) => 4,
                        E::Grid(_) => 2,
                    };
                    return ExitCode::from(code);
                }
            };

            let fmt = match report {
                ReportArg::Table => ReportFormat::Table,
                ReportArg::Json => ReportFormat::Json,
                ReportArg::Csv => ReportFormat::Csv,
            };
            print!("{}", emit_report(&artifacts.report, fmt));

            if let Some(path) = graph {
                let dot = export_graph(
                    &artifacts.network,
                    &artifacts.power_flow.flows,
                    &artifacts.congestion,
                );
                if let Err(e) = std::fs::write(&path, dot) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            if let Some(path) = cache {
                let json = serde_json::to_string_pretty(&artifacts.characteristic_cache)
                    .expect("cache serializes");
                if let Err(e) = std::fs::write(&path, json) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            ExitCode::SUCCESS
        }
    }
}
