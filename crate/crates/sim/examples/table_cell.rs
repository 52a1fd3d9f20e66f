//! Run a single preset table cell and print its summary row.
//!
//! Usage: table_cell <table-id> <cell-index> [reps] [seed]

use isocrit_sim::{run_replications, table_preset, Scale};

fn main() {
    let mut args = std::env::args().skip(1);
    let id: u8 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let cell: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let reps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let table = table_preset(id, Scale::Desk, seed).expect("table id in 1..=11");
    let mut config = table.cells[cell].config.clone();
    config.replications = reps;
    let start = std::time::Instant::now();
    let s = run_replications(&config).expect("valid preset");
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "table {id} [{} | {}] reps={} seed={seed}",
        table.cells[cell].group, table.cells[cell].label, config.replications
    );
    println!(
        "  cic={:.4} (se {:.4})  wald={:?}  cond={:?}",
        s.prop_unconstrained_cic, s.se_prop_cic, s.prop_unconstrained_wald,
        s.prop_unconstrained_conditional
    );
    println!(
        "  ratio_con={:.4} (se {:.4})  ratio_adapt={:.4}  unavailable={}  failed={}  [{elapsed:.1}s]",
        s.ratio_constrained, s.se_ratio_constrained, s.ratio_adaptive, s.unavailable_count,
        s.failed_replicates
    );
}
