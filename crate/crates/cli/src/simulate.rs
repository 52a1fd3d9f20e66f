//! Simulation subcommands: run one scenario cell or a whole study table and
//! emit summaries as JSON plus a formatted text table.

use crate::CliError;
use clap::Args;
use isocrit_sim::{run_replications, table_preset, Scale, ScenarioConfig, SimulationSummary};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario: a preset cell like "table1" or "table5:3" (table:cell), or
    /// a path to a ScenarioConfig JSON file
    #[arg(long)]
    pub scenario: String,
    /// Override the configured replication count
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the configured seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON summary here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateReport {
    schema: u32,
    scenario: String,
    config: ScenarioConfig,
    summary: SimulationSummary,
    elapsed_seconds: f64,
}

fn parse_preset(spec: &str, seed: u64) -> Result<Option<ScenarioConfig>, CliError> {
    let Some(rest) = spec.strip_prefix("table") else {
        return Ok(None);
    };
    let (id_str, cell_str) = match rest.split_once(':') {
        Some((id, cell)) => (id, cell),
        None => (rest, "0"),
    };
    let (Ok(id), Ok(cell)) = (id_str.parse::<u8>(), cell_str.parse::<usize>()) else {
        return Ok(None);
    };
    let table = table_preset(id, Scale::Full, seed)
        .ok_or_else(|| CliError::usage(format!("unknown table id {id} (expected 1..=11)")))?;
    let cell = table
        .cells
        .get(cell)
        .ok_or_else(|| {
            CliError::usage(format!(
                "table {id} has {} cells, index {cell} is out of range",
                table.cells.len()
            ))
        })?
        .clone();
    Ok(Some(cell.config))
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(1);
    let mut config = match parse_preset(&args.scenario, seed)? {
        Some(config) => config,
        None => {
            let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
                CliError::usage(format!(
                    "'{}' is neither a tableN[:cell] preset nor a readable config file: {e}",
                    args.scenario
                ))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("invalid scenario file: {e}")))?
        }
    };
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::usage(format!("invalid scenario: {e}")))?;

    let start = std::time::Instant::now();
    let summary =
        run_replications(&config).map_err(|e| CliError::usage(format!("simulation failed: {e}")))?;
    let report = SimulateReport {
        schema: 1,
        scenario: args.scenario.clone(),
        config,
        summary,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report).expect("summary serializes");
    match &args.out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TableArgs {
    /// Table number, 1 through 11
    #[arg(long)]
    pub table: u8,
    /// full = 10,000 replications per cell; desk = 2,000
    #[arg(long, default_value = "desk")]
    pub scale: String,
    /// Base seed shared by every cell (common random numbers)
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the per-cell replication count (debugging aid)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Write the JSON results here as well
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TableReport {
    schema: u32,
    table: u8,
    title: String,
    scale: String,
    seed: u64,
    cells: Vec<CellReport>,
    elapsed_seconds: f64,
}

#[derive(Serialize)]
struct CellReport {
    group: String,
    label: String,
    config: ScenarioConfig,
    summary: SimulationSummary,
}

pub fn run_table(args: &TableArgs) -> Result<(), CliError> {
    let scale = match args.scale.as_str() {
        "full" => Scale::Full,
        "desk" => Scale::Desk,
        other => {
            return Err(CliError::usage(format!(
                "unknown scale '{other}' (expected full or desk)"
            )))
        }
    };
    let table = table_preset(args.table, scale, args.seed)
        .ok_or_else(|| CliError::usage(format!("unknown table id {} (expected 1..=11)", args.table)))?;

    let start = std::time::Instant::now();
    let mut cells = Vec::with_capacity(table.cells.len());
    for cell in &table.cells {
        let mut config = cell.config.clone();
        if let Some(reps) = args.reps {
            config.replications = reps;
        }
        let summary = run_replications(&config)
            .map_err(|e| CliError::usage(format!("cell {}: {e}", cell.label)))?;
        cells.push(CellReport {
            group: cell.group.clone(),
            label: cell.label.clone(),
            config,
            summary,
        });
    }
    let elapsed = start.elapsed().as_secs_f64();

    print_table(&table.title, &cells);
    println!(
        "({} replications per cell, seed {}, {elapsed:.1}s)",
        cells[0].config.replications, args.seed
    );

    if let Some(path) = &args.out {
        let report = TableReport {
            schema: 1,
            table: args.table,
            title: table.title.clone(),
            scale: args.scale.clone(),
            seed: args.seed,
            cells,
            elapsed_seconds: elapsed,
        };
        let json = serde_json::to_string_pretty(&report).expect("table serializes");
        std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn print_table(title: &str, cells: &[CellReport]) {
    println!("{title}");
    let width = 13usize;
    let mut header1 = format!("{:<28}", "");
    let mut header2 = format!("{:<28}", "");
    let mut last_group = "";
    for cell in cells {
        let group = if cell.group == last_group {
            ""
        } else {
            last_group = &cell.group;
            &cell.group
        };
        header1.push_str(&format!("{group:>width$}"));
        header2.push_str(&format!("{:>width$}", cell.label));
    }
    println!("{header1}");
    println!("{header2}");

    // a starred cell means the test was unavailable on at least one replicate
    let starred = |prop: Option<f64>, unavailable: usize| -> String {
        match prop {
            Some(p) if unavailable == 0 => format!("{p:.3}"),
            Some(p) => format!("{p:.3}*"),
            None => "*".to_string(),
        }
    };
    let print_row = |name: &str, values: Vec<String>| {
        let mut line = format!("{name:<28}");
        for v in values {
            line.push_str(&format!("{v:>width$}"));
        }
        println!("{line}");
    };
    let summaries = || cells.iter().map(|c| &c.summary);
    print_row(
        "CIC_s",
        summaries()
            .map(|s| format!("{:.3}", s.prop_unconstrained_cic))
            .collect(),
    );
    print_row(
        "Wald",
        summaries()
            .map(|s| starred(s.prop_unconstrained_wald, s.unavailable_count))
            .collect(),
    );
    print_row(
        "Conditional",
        summaries()
            .map(|s| starred(s.prop_unconstrained_conditional, s.unavailable_count))
            .collect(),
    );
    print_row(
        "MSE(con)/MSE(unc)",
        summaries()
            .map(|s| format!("{:.3}", s.ratio_constrained))
            .collect(),
    );
    print_row(
        "MSE(adapt)/MSE(unc)",
        summaries()
            .map(|s| format!("{:.3}", s.ratio_adaptive))
            .collect(),
    );
}
