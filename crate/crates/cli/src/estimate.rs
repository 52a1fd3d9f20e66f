//! The applied estimation workflow: ingest a survey CSV, map domains, run
//! the Hajek + isotonic + criterion chain, and emit a JSON (and optionally
//! CSV) report with pointwise 95% Wald confidence intervals.

use crate::CliError;
use clap::Args;
use isocrit_core::pipeline::{analyze_sample, AnalysisOptions, SampleAnalysis};
use isocrit_core::{
    ac_hat, ChosenEstimator, DesignSample, EstimatorFlavor, JointSpec, SampledUnit,
    StratumAllocation, TestResult,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// 95% normal quantile used for the Wald intervals.
const Z95: f64 = 1.959964;

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Input CSV (UTF-8, header row)
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding the study variable
    #[arg(long)]
    pub value_col: String,
    /// Column holding the survey weight w_k (interpreted as 1/pi_k)
    #[arg(long)]
    pub weight_col: String,
    /// Column holding the domain label (ordered numerically when all labels
    /// parse as numbers, lexicographically otherwise)
    #[arg(long, conflicts_with_all = ["bin_col", "bin_edges"])]
    pub domain_col: Option<String>,
    /// Numeric column to bin into domains (requires --bin-edges)
    #[arg(long, requires = "bin_edges")]
    pub bin_col: Option<String>,
    /// Ascending bin edges a,b,c,... defining domains [a,b), [b,c), ...;
    /// the last bin includes its right edge
    #[arg(long, value_delimiter = ',', requires = "bin_col")]
    pub bin_edges: Vec<f64>,
    /// Stratum label column; enables exact stratified-SRSWOR joint
    /// probabilities (weights must be constant within each stratum)
    #[arg(long)]
    pub stratum_col: Option<String>,
    /// Penalty constant multiplying the criterion's trace term
    #[arg(long, default_value_t = 2.0)]
    pub penalty_constant: f64,
    /// Monte Carlo draws for the conditional test (0 disables it)
    #[arg(long, default_value_t = 10_000)]
    pub conditional_draws: usize,
    /// Seed for the conditional test's Monte Carlo draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the estimates table as CSV
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    schema: u32,
    config: ConfigEcho,
    estimates: Vec<EstimateRow>,
    ci: Vec<CiRow>,
    cic: CicJson,
    tests: TestsJson,
    flags: Vec<String>,
    elapsed_seconds: f64,
}

#[derive(Serialize)]
struct ConfigEcho {
    input: String,
    value_col: String,
    weight_col: String,
    domain_col: Option<String>,
    bin_col: Option<String>,
    bin_edges: Option<Vec<f64>>,
    stratum_col: Option<String>,
    covariance_mode: String,
    estimator: String,
    penalty_constant: f64,
    conditional_draws: usize,
    seed: u64,
}

#[derive(Serialize)]
struct EstimateRow {
    domain: usize,
    label: String,
    n: usize,
    n_hat: f64,
    unconstrained: f64,
    constrained: f64,
}

#[derive(Serialize)]
struct Interval {
    lo: f64,
    hi: f64,
    half_width: f64,
    variance: f64,
}

#[derive(Serialize)]
struct CiRow {
    domain: usize,
    label: String,
    unconstrained: Interval,
    constrained: Interval,
}

#[derive(Serialize)]
struct CicJson {
    sse: f64,
    trace: f64,
    constrained: f64,
    unconstrained: f64,
    chosen: String,
    penalty_constant: f64,
}

#[derive(Serialize)]
struct TestsJson {
    wald: TestJson,
    conditional: Option<TestJson>,
}

#[derive(Serialize)]
struct TestJson {
    available: bool,
    q: Option<f64>,
    df: usize,
    blocks: usize,
    p_value: Option<f64>,
    p0: Option<f64>,
}

impl TestJson {
    fn from_result(t: &TestResult) -> Self {
        let available = t.p_value.is_some();
        Self {
            available,
            q: available.then_some(t.q),
            df: t.df,
            blocks: t.blocks,
            p_value: t.p_value,
            p0: t.p0,
        }
    }
}

struct Row {
    value: f64,
    weight: f64,
    domain_key: String,
    bin_value: Option<f64>,
    stratum: Option<String>,
}

pub fn run(args: &EstimateArgs) -> Result<(), CliError> {
    let start = std::time::Instant::now();
    if args.domain_col.is_none() && args.bin_col.is_none() {
        return Err(CliError::usage(
            "either --domain-col or --bin-col with --bin-edges is required",
        ));
    }
    let rows = read_rows(args)?;
    if rows.is_empty() {
        return Err(CliError::usage("input contains no data rows"));
    }

    let (labels, domain_of) = assign_domains(args, &rows)?;
    let num_domains = labels.len();

    let mut flags: Vec<String> = Vec::new();
    let (units, joint, covariance_mode) = build_sample(args, &rows, &domain_of, &mut flags)?;
    let sample = DesignSample::new(units, num_domains, joint)
        .map_err(|e| CliError::usage(format!("invalid sample: {e}")))?;

    let counts = isocrit_core::domain_counts(&sample);
    if let Some(d) = counts.sampled.iter().position(|&n| n == 0) {
        return Err(CliError::empty_domain(format!(
            "domain '{}' is empty after binning",
            labels[d]
        )));
    }

    let options = AnalysisOptions {
        flavor: EstimatorFlavor::Hajek,
        penalty_constant: args.penalty_constant,
        conditional_draws: args.conditional_draws,
        seed: args.seed,
        pop_domain_sizes: None,
    };
    let analysis = analyze_sample(&sample, &options)
        .map_err(|e| CliError::usage(format!("estimation failed: {e}")))?;

    for &d in &analysis.single_unit_domains {
        flags.push(format!(
            "degenerate-ci: domain '{}' has a single sampled unit",
            labels[d]
        ));
    }

    let report = build_report(
        args,
        &sample,
        &analysis,
        &labels,
        &counts.sampled,
        covariance_mode,
        flags,
        start.elapsed().as_secs_f64(),
    )?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv_out {
        write_csv(path, &report)?;
    }
    Ok(())
}

fn read_rows(args: &EstimateArgs) -> Result<Vec<Row>, CliError> {
    let mut reader = csv::Reader::from_path(&args.input)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.input.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("malformed CSV header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(format!("missing column '{name}'")))
    };
    let value_idx = col(&args.value_col)?;
    let weight_idx = col(&args.weight_col)?;
    let domain_idx = args.domain_col.as_deref().map(col).transpose()?;
    let bin_idx = args.bin_col.as_deref().map(col).transpose()?;
    let stratum_idx = args.stratum_col.as_deref().map(col).transpose()?;

    let parse_f64 = |field: &str, what: &str, line: usize| -> Result<f64, CliError> {
        field.trim().parse::<f64>().map_err(|_| {
            CliError::usage(format!("row {line}: cannot parse {what} '{field}' as a number"))
        })
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| CliError::usage(format!("row {line}: {e}")))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let value = parse_f64(get(value_idx), "value", line)?;
        let weight = parse_f64(get(weight_idx), "weight", line)?;
        if !(weight >= 1.0) {
            return Err(CliError::usage(format!(
                "row {line}: weight {weight} must be >= 1 (weights are 1/pi)"
            )));
        }
        let bin_value = bin_idx
            .map(|idx| parse_f64(get(idx), "bin value", line))
            .transpose()?;
        rows.push(Row {
            value,
            weight,
            domain_key: domain_idx.map(|idx| get(idx).trim().to_string()).unwrap_or_default(),
            bin_value,
            stratum: stratum_idx.map(|idx| get(idx).trim().to_string()),
        });
    }
    Ok(rows)
}

/// Returns ordered domain labels and the per-row domain index.
fn assign_domains(
    args: &EstimateArgs,
    rows: &[Row],
) -> Result<(Vec<String>, Vec<usize>), CliError> {
    if args.bin_col.is_some() {
        let edges = &args.bin_edges;
        if edges.len() < 2 {
            return Err(CliError::usage("--bin-edges needs at least two edges"));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::usage("--bin-edges must be strictly ascending"));
        }
        let num_domains = edges.len() - 1;
        let labels: Vec<String> = (0..num_domains)
            .map(|i| format!("{}-{}", edges[i], edges[i + 1]))
            .collect();
        let mut domain_of = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let x = row.bin_value.expect("bin column parsed");
            if x < edges[0] || x > edges[num_domains] {
                return Err(CliError::usage(format!(
                    "row {}: bin value {x} outside the edge range [{}, {}]",
                    i + 2,
                    edges[0],
                    edges[num_domains]
                )));
            }
            let mut d = edges[1..].partition_point(|&e| e <= x);
            d = d.min(num_domains - 1); // right edge of the last bin is closed
            domain_of.push(d);
        }
        Ok((labels, domain_of))
    } else {
        let mut labels: Vec<String> = rows
            .iter()
            .map(|r| r.domain_key.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let all_numeric: Option<Vec<f64>> = labels
            .iter()
            .map(|l| l.parse::<f64>().ok())
            .collect();
        if let Some(nums) = all_numeric {
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|&a, &b| nums[a].partial_cmp(&nums[b]).unwrap());
            labels = order.iter().map(|&i| labels[i].clone()).collect();
        }
        let index: BTreeMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let domain_of = rows.iter().map(|r| index[r.domain_key.as_str()]).collect();
        Ok((labels, domain_of))
    }
}

fn build_sample(
    args: &EstimateArgs,
    rows: &[Row],
    domain_of: &[usize],
    flags: &mut Vec<String>,
) -> Result<(Vec<SampledUnit>, JointSpec, String), CliError> {
    if args.stratum_col.is_none() {
        flags.push("independent-approximation: no joint inclusion probabilities supplied; off-diagonal design covariances treated as zero".into());
        let units = rows
            .iter()
            .zip(domain_of)
            .map(|(r, &d)| SampledUnit {
                value: r.value,
                inclusion_prob: 1.0 / r.weight,
                domain: d,
                group: 0,
            })
            .collect();
        return Ok((
            units,
            JointSpec::IndependentApprox,
            "independent-approximation".to_string(),
        ));
    }

    // exact stratified-SRSWOR joints: constant weights within each stratum
    let mut stratum_labels: Vec<String> = rows
        .iter()
        .map(|r| r.stratum.clone().expect("stratum column parsed"))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    stratum_labels.sort();
    let stratum_index: BTreeMap<&str, usize> = stratum_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut counts = vec![0usize; stratum_labels.len()];
    let mut weights = vec![f64::NAN; stratum_labels.len()];
    for row in rows {
        let h = stratum_index[row.stratum.as_deref().unwrap()];
        counts[h] += 1;
        if weights[h].is_nan() {
            weights[h] = row.weight;
        } else if (row.weight - weights[h]).abs() > 1e-9 * weights[h] {
            return Err(CliError::usage(format!(
                "stratum '{}' has non-constant weights; exact stratified joints need one weight per stratum",
                row.stratum.as_deref().unwrap()
            )));
        }
    }
    let mut strata = Vec::with_capacity(stratum_labels.len());
    for (h, label) in stratum_labels.iter().enumerate() {
        let implied = weights[h] * counts[h] as f64;
        let population = implied.round() as usize;
        if population < counts[h] {
            return Err(CliError::usage(format!(
                "stratum '{label}': weights imply population {implied:.2} below its sample size {}",
                counts[h]
            )));
        }
        if (implied - population as f64).abs() > 1e-6 * implied {
            flags.push(format!(
                "stratum-size-rounded: '{label}' implied {implied:.3}, using {population}"
            ));
        }
        strata.push(StratumAllocation {
            population,
            sample: counts[h],
        });
    }
    let units = rows
        .iter()
        .zip(domain_of)
        .map(|(r, &d)| {
            let h = stratum_index[r.stratum.as_deref().unwrap()];
            SampledUnit {
                value: r.value,
                inclusion_prob: strata[h].sample as f64 / strata[h].population as f64,
                domain: d,
                group: h,
            }
        })
        .collect();
    Ok((
        units,
        JointSpec::StratifiedSrswor { strata },
        "exact-stratified".to_string(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    args: &EstimateArgs,
    sample: &DesignSample,
    analysis: &SampleAnalysis,
    labels: &[String],
    sampled_counts: &[usize],
    covariance_mode: String,
    mut flags: Vec<String>,
    elapsed_seconds: f64,
) -> Result<Report, CliError> {
    let d = labels.len();
    let mut estimates = Vec::with_capacity(d);
    let mut ci = Vec::with_capacity(d);
    for dom in 0..d {
        let var_unc = ac_hat(sample, (dom, dom), (dom, dom))
            .map_err(|e| CliError::usage(format!("variance estimation failed: {e}")))?;
        let block = analysis.partition.blocks()[analysis.partition.block_of(dom)];
        let var_con = ac_hat(sample, block, block)
            .map_err(|e| CliError::usage(format!("variance estimation failed: {e}")))?;
        for (what, v) in [("unconstrained", var_unc), ("constrained", var_con)] {
            if v < 0.0 {
                flags.push(format!(
                    "negative-variance-clamped: {what} domain '{}'",
                    labels[dom]
                ));
            }
        }
        let interval = |center: f64, variance: f64| {
            let hw = Z95 * variance.max(0.0).sqrt();
            Interval {
                lo: center - hw,
                hi: center + hw,
                half_width: hw,
                variance,
            }
        };
        estimates.push(EstimateRow {
            domain: dom + 1,
            label: labels[dom].clone(),
            n: sampled_counts[dom],
            n_hat: analysis.estimate.weights[dom],
            unconstrained: analysis.estimate.means[dom],
            constrained: analysis.theta[dom],
        });
        ci.push(CiRow {
            domain: dom + 1,
            label: labels[dom].clone(),
            unconstrained: interval(analysis.estimate.means[dom], var_unc),
            constrained: interval(analysis.theta[dom], var_con),
        });
    }

    Ok(Report {
        schema: 1,
        config: ConfigEcho {
            input: args.input.display().to_string(),
            value_col: args.value_col.clone(),
            weight_col: args.weight_col.clone(),
            domain_col: args.domain_col.clone(),
            bin_col: args.bin_col.clone(),
            bin_edges: args.bin_col.is_some().then(|| args.bin_edges.clone()),
            stratum_col: args.stratum_col.clone(),
            covariance_mode,
            estimator: "hajek".to_string(),
            penalty_constant: args.penalty_constant,
            conditional_draws: args.conditional_draws,
            seed: args.seed,
        },
        estimates,
        ci,
        cic: CicJson {
            sse: analysis.cic.sse_term,
            trace: analysis.cic.trace_term,
            constrained: analysis.cic.cic_constrained,
            unconstrained: analysis.cic.cic_unconstrained,
            chosen: match analysis.cic.chosen {
                ChosenEstimator::Constrained => "constrained".to_string(),
                ChosenEstimator::Unconstrained => "unconstrained".to_string(),
            },
            penalty_constant: analysis.cic.penalty_constant,
        },
        tests: TestsJson {
            wald: TestJson::from_result(&analysis.wald),
            conditional: analysis.conditional.as_ref().map(TestJson::from_result),
        },
        flags,
        elapsed_seconds,
    })
}

fn write_csv(path: &PathBuf, report: &Report) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([
            "domain",
            "label",
            "n",
            "n_hat",
            "unconstrained",
            "constrained",
            "ci_unconstrained_lo",
            "ci_unconstrained_hi",
            "ci_constrained_lo",
            "ci_constrained_hi",
        ])
        .and_then(|()| {
            for (row, ci) in report.estimates.iter().zip(&report.ci) {
                writer.write_record([
                    row.domain.to_string(),
                    row.label.clone(),
                    row.n.to_string(),
                    row.n_hat.to_string(),
                    row.unconstrained.to_string(),
                    row.constrained.to_string(),
                    ci.unconstrained.lo.to_string(),
                    ci.unconstrained.hi.to_string(),
                    ci.constrained.lo.to_string(),
                    ci.constrained.hi.to_string(),
                ])?;
            }
            writer.flush()?;
            Ok(())
        })
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}
