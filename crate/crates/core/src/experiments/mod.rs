//! Scenario runner: configuration, reference experiments and output.

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;

pub use commands::{
    evaluate, label_untested, simulate_scenario, solve_scenario, EvalOutput, SimulateOutput,
    SolveOutput,
};
pub use config::{
    ProfileDirective, ProfileKind, Scenario, ScenarioConfig, SimConfig, SweepParam, SweepSpec,
};
pub use figures::{
    run_fig4, run_fig5, run_fig6, run_fig7, Fig4Result, Fig4Row, Fig5Result, Fig5Row, Fig6Result,
    Fig6Row, Fig7Result, Fig7Row,
};
pub use output::{read_csv, render, write_csv, OutputFormat, Tabular};
