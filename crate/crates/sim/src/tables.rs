//! Named scenario presets reproducing the simulation study grids: eleven
//! tables over sigmoid shapes, population sizes, designs, and violation
//! magnitudes. Cell order follows the published column order.

use crate::scenario::{
    DesignChoice, EstimatorFlavorConfig, PopulationDist, ScenarioConfig, Shape, Sigmoid,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scale {
    /// 10,000 replications, as published.
    Full,
    /// 2,000 replications for desk-scale runs; Monte Carlo errors widen
    /// accordingly and are reported alongside.
    Desk,
}

impl Scale {
    pub fn replications(&self) -> usize {
        match self {
            Scale::Full => 10_000,
            Scale::Desk => 2_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableCell {
    pub label: String,
    pub group: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableSpec {
    pub id: u8,
    pub title: String,
    pub cells: Vec<TableCell>,
}

/// The (1/8, 1/4, 1/4, 3/8) informative split of the total sample size over
/// the four z-ranked strata.
pub fn informative_allocation(n: usize) -> Vec<usize> {
    debug_assert_eq!(n % 8, 0);
    vec![n / 8, n / 4, n / 4, n - n / 8 - n / 4 - n / 4]
}

fn stsi_cell(
    group: &str,
    label: &str,
    num_domains: usize,
    sigmoid: Sigmoid,
    shape: Shape,
    dist: PopulationDist,
    population_size: usize,
    n_total: usize,
    reps: usize,
    seed: u64,
) -> TableCell {
    TableCell {
        label: label.to_string(),
        group: group.to_string(),
        config: ScenarioConfig {
            num_domains,
            sigmoid,
            shape,
            dist,
            population_size,
            strata: 4,
            design: DesignChoice::StratifiedSrswor {
                allocation: informative_allocation(n_total),
            },
            replications: reps,
            seed,
            flavor: EstimatorFlavorConfig::Hajek,
            penalty_constant: 2.0,
            conditional_draws: 10_000,
        },
    }
}

fn cluster_cell(
    group: &str,
    label: &str,
    shape: Shape,
    sampled: usize,
    reps: usize,
    seed: u64,
) -> TableCell {
    TableCell {
        label: label.to_string(),
        group: group.to_string(),
        config: ScenarioConfig {
            num_domains: 4,
            sigmoid: Sigmoid::S1,
            shape,
            dist: PopulationDist::Normal { sigma: 3.0 },
            population_size: 10_000,
            strata: 4,
            design: DesignChoice::Cluster {
                clusters: 100,
                sampled,
            },
            replications: reps,
            seed,
            flavor: EstimatorFlavorConfig::Hajek,
            penalty_constant: 2.0,
            conditional_draws: 10_000,
        },
    }
}

/// Build the named table preset. Seeds are shared across a table's cells so
/// ladders over violation size run under common random numbers.
pub fn table_preset(id: u8, scale: Scale, seed: u64) -> Option<TableSpec> {
    let reps = scale.replications();
    let normal = PopulationDist::Normal { sigma: 3.0 };
    let shape_grid = [
        ("Monotone", Shape::Monotone),
        ("Flat", Shape::Flat),
        ("Non-monotone", Shape::NonMonotone),
    ];
    let spec = match id {
        1..=3 => {
            let (title, shape) = match id {
                1 => ("Monotone scenario, S1, D=4, stratified SRSWOR", Shape::Monotone),
                2 => ("Flat scenario, S1, D=4, stratified SRSWOR", Shape::Flat),
                _ => (
                    "Non-monotone scenario, S1, D=4, stratified SRSWOR",
                    Shape::NonMonotone,
                ),
            };
            let mut cells = Vec::new();
            for &(big_n, ns) in &[
                (10_000usize, [200usize, 1000, 2000]),
                (20_000, [400, 2000, 4000]),
                (40_000, [800, 4000, 8000]),
            ] {
                for &n in &ns {
                    cells.push(stsi_cell(
                        &format!("N={big_n}"),
                        &format!("n={n}"),
                        4,
                        Sigmoid::S1,
                        shape,
                        normal,
                        big_n,
                        n,
                        reps,
                        seed,
                    ));
                }
            }
            TableSpec {
                id,
                title: title.to_string(),
                cells,
            }
        }
        4 => {
            let mut cells = Vec::new();
            for (group, shape) in shape_grid {
                for n in [200, 1000, 2000] {
                    cells.push(stsi_cell(
                        group,
                        &format!("n={n}"),
                        4,
                        Sigmoid::S1,
                        shape,
                        PopulationDist::ChiSquared,
                        10_000,
                        n,
                        reps,
                        seed,
                    ));
                }
            }
            TableSpec {
                id,
                title: "Skewed case: chi-square populations, S1, D=4".to_string(),
                cells,
            }
        }
        5 => {
            let mut cells = Vec::new();
            for (group, shape) in shape_grid {
                for r in [2, 10, 20] {
                    cells.push(cluster_cell(group, &format!("r={r}"), shape, r, reps, seed));
                }
            }
            TableSpec {
                id,
                title: "Correlated case: single-stage cluster sampling, S1, D=4".to_string(),
                cells,
            }
        }
        6 => {
            let mut cells = Vec::new();
            for t in [3.0, 4.0, 5.0] {
                for r in [2, 10, 20] {
                    cells.push(cluster_cell(
                        &format!("t={t}"),
                        &format!("r={r}"),
                        Shape::PullDown { multiple: t },
                        r,
                        reps,
                        seed,
                    ));
                }
            }
            TableSpec {
                id,
                title: "Increasing monotonicity violation, cluster sampling, S1, D=4".to_string(),
                cells,
            }
        }
        7 => {
            let mut cells = Vec::new();
            for (group, shape) in shape_grid {
                for n in [400, 2000, 4000] {
                    cells.push(stsi_cell(
                        group,
                        &format!("n={n}"),
                        8,
                        Sigmoid::S2,
                        shape,
                        normal,
                        20_000,
                        n,
                        reps,
                        seed,
                    ));
                }
            }
            TableSpec {
                id,
                title: "8-domain case, S2, stratified SRSWOR".to_string(),
                cells,
            }
        }
        8..=11 => {
            let (num_domains, sigma, population_size, n_total) = match id {
                8 => (5usize, 0.5, 1_000usize, 200usize),
                9 => (5, 1.0, 1_000, 200),
                10 => (20, 0.5, 4_000, 800),
                _ => (20, 1.0, 4_000, 800),
            };
            let mut cells = Vec::new();
            for delta in [-0.45, -0.30, -0.15, 0.0, 0.15, 0.30, 0.45] {
                let group = if delta < 0.0 {
                    "Monotone"
                } else if delta == 0.0 {
                    "Flat"
                } else {
                    "Non-monotone"
                };
                cells.push(stsi_cell(
                    group,
                    &format!("delta={delta}"),
                    num_domains,
                    Sigmoid::S3,
                    Shape::DeltaShift { delta },
                    PopulationDist::Normal { sigma },
                    population_size,
                    n_total,
                    reps,
                    seed,
                ));
            }
            TableSpec {
                id,
                title: format!("S3 study, D={num_domains}, sigma={sigma}"),
                cells,
            }
        }
        _ => return None,
    };
    Some(spec)
}
