//! Command-line tool for estimating and comparing mean survival times of
//! uncured sub-populations between two right-censored samples.

mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mstu_core::cure::fit_logistic_cox;
use mstu_core::data::{
    parse_csv_sample, parse_csv_two_sample, validate_dataset, CsvSchema,
};
use mstu_core::inference::{asymptotic_inference, cure_fraction_test, permutation_inference};
use mstu_core::inference_sp::{
    bootstrap_coef_se, compare_conditional_mst, fit_both, permutation_inference_sp,
};
use mstu_core::km::{fit_km, fit_pooled};
use mstu_core::mst::two_sample_estimate;
use mstu_core::sim::{monte_carlo_table, setting, McTask, SettingId};
use mstu_core::{
    EmConfig, Error, ErrorKind, InferenceResult, PermutationPlan, TwoSampleDataset, SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(
    name = "mstu",
    about = "Two-sample comparison of mean survival times of uncured sub-populations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV file (header row required)
    #[arg(long)]
    input: PathBuf,
    /// Name of the follow-up time column
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Name of the status column (1 = event, 0 = censored)
    #[arg(long, default_value = "status")]
    status_col: String,
}

#[derive(Args)]
struct RandomArgs {
    /// Master seed; derived from system entropy (and printed) when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: MSTU_WORKERS or all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Nonparametric two-sample comparison: diagnostics, cure-fraction test,
    /// and asymptotic plus permutation inference on the difference of mean
    /// survival times of the uncured
    CompareNp {
        #[command(flatten)]
        input: InputArgs,
        /// Name of the two-level group column
        #[arg(long, default_value = "group")]
        group_col: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Number of random permutations
        #[arg(long, default_value_t = 500)]
        permutations: usize,
        /// Enumerate all group splits instead of sampling
        #[arg(long)]
        exhaustive: bool,
        /// Refuse exhaustive enumeration above this many splits
        #[arg(long, default_value_t = mstu_core::resampling::DEFAULT_EXHAUSTIVE_CAP)]
        exhaustive_cap: u64,
        /// Null value of the difference
        #[arg(long, default_value_t = 0.0)]
        m0: f64,
        #[command(flatten)]
        random: RandomArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Fit the logistic-Cox mixture cure model on a single sample and emit
    /// the fitted parameters as JSON
    FitCure {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated incidence covariate columns
        #[arg(long, value_delimiter = ',')]
        x_cols: Vec<String>,
        /// Comma-separated latency covariate columns
        #[arg(long, value_delimiter = ',')]
        z_cols: Vec<String>,
        /// EM convergence tolerance
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Maximum EM iterations
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Semiparametric comparison of covariate-conditional mean survival
    /// times of the uncured between two groups
    CompareSp {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "group")]
        group_col: String,
        #[arg(long, value_delimiter = ',')]
        x_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        z_cols: Vec<String>,
        /// Latency covariate value, comma-separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap replicates for variances (0 suppresses inference)
        #[arg(long, default_value_t = 100)]
        boot: usize,
        /// Permutation replicates (0 skips the permutation test)
        #[arg(long, default_value_t = 500)]
        permutations: usize,
        #[arg(long, default_value_t = 0.0)]
        m0: f64,
        #[command(flatten)]
        random: RandomArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the Monte Carlo study for a built-in simulation setting
    Simulate {
        /// Setting id: I.1 .. I.9, II.1 .. II.3
        #[arg(long)]
        setting: String,
        #[arg(long, default_value_t = 200)]
        n1: usize,
        #[arg(long, default_value_t = 200)]
        n2: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Permutation replicates per replication (I settings)
        #[arg(long, default_value_t = 500)]
        permutations: usize,
        /// Bootstrap replicates per replication (II settings)
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
        /// Directory for the CSV and text artifacts
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        random: RandomArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Export per-group survival step curves as CSV plus an SVG overlay plot
    Curves {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "group")]
        group_col: String,
        /// Output directory (default: current directory)
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the pooled-sample curve
        #[arg(long)]
        pooled: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Inference => 3,
                ErrorKind::Em => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn workers_from(random: &RandomArgs) -> usize {
    random
        .workers
        .or_else(|| std::env::var("MSTU_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Resolve the master seed, printing it when it had to be generated.
fn seed_from(random: &RandomArgs) -> u64 {
    match random.seed {
        Some(s) => s,
        None => {
            let s = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0)
                ^ std::process::id() as u64;
            eprintln!("no --seed given; using seed {s}");
            s
        }
    }
}

fn read_two_sample(input: &InputArgs, group_col: &str, x: &[String], z: &[String]) -> Result<TwoSampleDataset, Error> {
    let file = fs::File::open(&input.input)?;
    let schema = CsvSchema::new(&input.time_col, &input.status_col)
        .with_group(group_col)
        .with_covariates(x.to_vec(), z.to_vec());
    parse_csv_two_sample(file, &schema)
}

fn inference_rows(results: &[(&str, &InferenceResult)]) -> String {
    let mut s =
        String::from("method,estimate,ci_lower,ci_upper,p_two_sided,p_greater,p_less,b,discarded\n");
    for (name, r) in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            name,
            r.estimate,
            r.ci_lower,
            r.ci_upper,
            r.p_two_sided,
            r.p_greater,
            r.p_less,
            r.n_replicates_used,
            r.n_replicates_discarded
        ));
    }
    s
}

fn text_inference(name: &str, r: &InferenceResult) -> String {
    format!(
        "{name}: estimate {:.4}, {:.0}% CI [{:.4}, {:.4}], p two-sided {:.4} (greater {:.4}, less {:.4})",
        r.estimate,
        100.0 * (1.0 - r.alpha),
        r.ci_lower,
        r.ci_upper,
        r.p_two_sided,
        r.p_greater,
        r.p_less
    )
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::CompareNp {
            input,
            group_col,
            alpha,
            permutations,
            exhaustive,
            exhaustive_cap,
            m0,
            random,
            format,
        } => {
            let ds = read_two_sample(&input, &group_col, &[], &[])?;
            let diag = validate_dataset(&ds)?;
            let workers = workers_from(&random);
            let seed = seed_from(&random);

            let f1 = fit_km(&ds.sample1)?;
            let f2 = fit_km(&ds.sample2)?;
            // a degenerate cure-fraction test (no cure mass in either group)
            // does not invalidate the mean-survival comparison
            let cure = cure_fraction_test(&f1, &f2, alpha);
            let observed = two_sample_estimate(&f1, &f2)?;
            let asy = asymptotic_inference(&observed, alpha, m0)?;
            let perm = if exhaustive {
                let plan = PermutationPlan::Exhaustive { cap: exhaustive_cap };
                Some(permutation_inference(&ds, alpha, &plan, m0, workers)?)
            } else if permutations > 0 {
                let plan = PermutationPlan::Random { b: permutations, seed };
                Some(permutation_inference(&ds, alpha, &plan, m0, workers)?)
            } else {
                None
            };

            match format {
                Format::Json => {
                    let cure_json = match &cure {
                        Ok(c) => c.to_json(),
                        Err(e) => json!({ "error": e.to_string() }),
                    };
                    let doc = json!({
                        "schema_version": SCHEMA_VERSION,
                        "command": "compare-np",
                        "diagnostics": diag,
                        "cure_fractions": [f1.cure_fraction, f2.cure_fraction],
                        "cure_fraction_test": cure_json,
                        "asymptotic": asy.to_json(),
                        "permutation": perm.as_ref().map(InferenceResult::to_json),
                    });
                    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
                }
                Format::Csv => {
                    let mut rows: Vec<(&str, &InferenceResult)> = Vec::new();
                    if let Ok(c) = &cure {
                        rows.push(("cure_fraction_test", c));
                    }
                    rows.push(("asymptotic", &asy));
                    if let Some(p) = &perm {
                        rows.push(("permutation", p));
                    }
                    print!("{}", inference_rows(&rows));
                }
                Format::Text => {
                    for d in [&diag.sample1, &diag.sample2] {
                        println!(
                            "group '{}': n={}, events={}, censoring {:.1}%, plateau {} ({:.1}%){}",
                            d.label,
                            d.n,
                            d.events,
                            100.0 * d.censoring_rate,
                            d.plateau_size,
                            100.0 * d.plateau_fraction,
                            if d.follow_up_warning { "  [warning: short plateau]" } else { "" }
                        );
                    }
                    match &cure {
                        Ok(c) => println!(
                            "cure fractions: {:.4} vs {:.4}; equality test p = {:.4}",
                            f1.cure_fraction, f2.cure_fraction, c.p_two_sided
                        ),
                        Err(e) => println!(
                            "cure fractions: {:.4} vs {:.4}; equality test unavailable ({e})",
                            f1.cure_fraction, f2.cure_fraction
                        ),
                    }
                    println!("{}", text_inference("asymptotic ", &asy));
                    if let Some(p) = &perm {
                        println!("{}", text_inference("permutation", p));
                    }
                }
            }
            Ok(())
        }

        Command::FitCure { input, x_cols, z_cols, tol, max_iter } => {
            let file = fs::File::open(&input.input)?;
            let schema = CsvSchema::new(&input.time_col, &input.status_col)
                .with_covariates(x_cols, z_cols);
            let sample = parse_csv_sample(file, &schema)?;
            let config = EmConfig { tol, max_iter, ..EmConfig::default() };
            let fit = fit_logistic_cox(&sample, &config)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            let mut doc = fit.to_json();
            doc["schema_version"] = json!(SCHEMA_VERSION);
            doc["command"] = json!("fit-cure");
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            Ok(())
        }

        Command::CompareSp {
            input,
            group_col,
            x_cols,
            z_cols,
            z,
            alpha,
            boot,
            permutations,
            m0,
            random,
            format,
        } => {
            if z.len() != z_cols.len() {
                return Err(Error::Validation(format!(
                    "--z has dimension {}, but {} latency columns were declared",
                    z.len(),
                    z_cols.len()
                )));
            }
            let ds = read_two_sample(&input, &group_col, &x_cols, &z_cols)?;
            let workers = workers_from(&random);
            let seed = seed_from(&random);
            let config = EmConfig::default();
            let (f1, f2) = fit_both(&ds, &config)?;

            let mut parameters = Vec::new();
            let mut warning = None;
            if boot == 0 {
                warning = Some("--boot 0: no variance estimates, inference suppressed".to_string());
                for (label, fit) in [(&ds.sample1.label, &f1), (&ds.sample2.label, &f2)] {
                    parameters.push(json!({
                        "group": label,
                        "gamma": fit.gamma,
                        "beta": fit.beta,
                    }));
                }
            } else {
                for (sample, fit) in [(&ds.sample1, &f1), (&ds.sample2, &f2)] {
                    let (gse, bse, failures) =
                        bootstrap_coef_se(sample, boot, seed, &config, workers)?;
                    let pvals = |coefs: &[f64], ses: &[f64]| -> Vec<f64> {
                        coefs
                            .iter()
                            .zip(ses)
                            .map(|(&c, &s)| mstu_core::normal::p_two_sided(c / s))
                            .collect()
                    };
                    parameters.push(json!({
                        "group": sample.label,
                        "gamma": fit.gamma,
                        "gamma_se": gse,
                        "gamma_p": pvals(&fit.gamma, &gse),
                        "beta": fit.beta,
                        "beta_se": bse,
                        "beta_p": pvals(&fit.beta, &bse),
                        "bootstrap_failures": failures,
                    }));
                }
            }

            let mut inference_block = json!(null);
            let mut text_lines = Vec::new();
            let mut table: Vec<(&str, InferenceResult)> = Vec::new();
            if boot > 0 {
                let (res, asy) =
                    compare_conditional_mst(&ds, &z, alpha, boot, seed, &config, workers, m0)?;
                text_lines.push(format!("m_z estimate {:.4} (sigma_z {:.4})", res.m_z, res.sigma_z));
                text_lines.push(text_inference("asymptotic ", &asy));
                let mut block = json!({
                    "conditional": res.to_json(),
                    "asymptotic": asy.to_json(),
                });
                table.push(("asymptotic", asy));
                if permutations > 0 {
                    let plan = PermutationPlan::Random { b: permutations, seed };
                    let (_, perm) = permutation_inference_sp(
                        &ds, &z, alpha, &plan, boot, &config, workers, m0,
                    )?;
                    text_lines.push(text_inference("permutation", &perm));
                    block["permutation"] = perm.to_json();
                    table.push(("permutation", perm));
                }
                inference_block = block;
            }

            match format {
                Format::Json => {
                    let doc = json!({
                        "schema_version": SCHEMA_VERSION,
                        "command": "compare-sp",
                        "z": z,
                        "parameters": parameters,
                        "inference": inference_block,
                        "warning": warning,
                    });
                    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
                }
                Format::Csv => {
                    let rows: Vec<(&str, &InferenceResult)> =
                        table.iter().map(|(n, r)| (*n, r)).collect();
                    print!("{}", inference_rows(&rows));
                }
                Format::Text => {
                    for p in &parameters {
                        println!("{p}");
                    }
                    if let Some(w) = &warning {
                        println!("warning: {w}");
                    }
                    for line in &text_lines {
                        println!("{line}");
                    }
                }
            }
            Ok(())
        }

        Command::Simulate {
            setting: setting_id,
            n1,
            n2,
            reps,
            alpha,
            permutations,
            bootstrap,
            out,
            random,
            format,
        } => {
            let id: SettingId = setting_id.parse()?;
            let spec = setting::<f64>(id);
            let workers = workers_from(&random);
            let seed = seed_from(&random);
            let task = if id.is_semiparametric() {
                McTask::Semiparametric { b_boot: bootstrap }
            } else {
                McTask::Nonparametric { b_perm: permutations }
            };
            let report = monte_carlo_table(&spec, n1, n2, reps, alpha, &task, seed, workers)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let stem = format!("simulation_{}_{}x{}_seed{}", report.setting, n1, n2, seed);
                fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
                fs::write(dir.join(format!("{stem}.txt")), report.to_text())?;
            }
            match format {
                Format::Json => {
                    let mut doc = serde_json::to_value(&report).expect("serializable");
                    doc["schema_version"] = json!(SCHEMA_VERSION);
                    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
                }
                Format::Csv => print!("{}", report.to_csv()),
                Format::Text => print!("{}", report.to_text()),
            }
            Ok(())
        }

        Command::Curves { input, group_col, out, pooled } => {
            let ds = read_two_sample(&input, &group_col, &[], &[])?;
            let f1 = fit_km(&ds.sample1)?;
            let f2 = fit_km(&ds.sample2)?;
            fs::create_dir_all(&out)?;
            for (label, fit) in [(&ds.sample1.label, &f1), (&ds.sample2.label, &f2)] {
                let mut buf = Vec::new();
                fit.write_curve_csv(&mut buf)?;
                fs::write(out.join(format!("curve_{label}.csv")), buf)?;
            }
            let mut fits = vec![(ds.sample1.label.clone(), &f1), (ds.sample2.label.clone(), &f2)];
            let pooled_fit;
            if pooled {
                pooled_fit = fit_pooled(&ds)?;
                let mut buf = Vec::new();
                pooled_fit.write_curve_csv(&mut buf)?;
                fs::write(out.join("curve_pooled.csv"), buf)?;
                fits.push(("pooled".to_string(), &pooled_fit));
            }
            fs::write(out.join("curves.svg"), svg::survival_curves(&fits))?;
            println!(
                "wrote curves for groups '{}' and '{}' to {}",
                ds.sample1.label,
                ds.sample2.label,
                out.display()
            );
            Ok(())
        }
    }
}
