use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use scn_core::calibration::{calibrate, stationarity_adjust, CalibrationOptions, KernelMethod};
use scn_core::engine::{run, EngineConfig, SectorMode, StubLaw};
use scn_core::esri::{compute_esri, EsriConfig, EssentialnessTable, Propagation};
use scn_core::io::{self, RunManifest};
use scn_core::linkfilter::{activity_timeline, filter_with_rule, FilterRule, LinkInterval};
use scn_core::netstats::{snapshot_stats, BinnedCurve};
use scn_core::params::ModelParams;
use scn_core::synthbench::{canonical_intervals, generate_transactions, random_link_intervals, seed_network, SeedRecipe, TransactionConfig};
use scn_core::{Error, FirmId};

#[derive(Parser)]
#[command(name = "scn", version, about = "Supply-network filtering, calibration, simulation and risk analysis")]
struct Cli {
    /// Random seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Skip malformed input rows instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract stable links from a transaction CSV.
    Filter(FilterArgs),
    /// Estimate model parameters from link intervals and a firm table.
    Calibrate(CalibrateArgs),
    /// Run the network evolution model.
    Simulate(SimulateArgs),
    /// Degree distributions, knn, clustering and tail fits of a snapshot.
    Stats(StatsArgs),
    /// Systemic-risk index of every firm in a snapshot.
    Esri(EsriArgs),
    /// Synthetic transactions through the filter, compared with the truth.
    Roundtrip(RoundtripArgs),
}

#[derive(Args)]
struct FilterArgs {
    /// CSV `supplier_id,buyer_id,month,amount`.
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_transactions: usize,
    #[arg(long, default_value_t = 6)]
    window: i64,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV `supplier_id,buyer_id,entry_month,exit_month`.
    intervals: PathBuf,
    /// CSV `firm_id,sector`.
    firms: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::SectorNormalized)]
    kernel: KernelArg,
    /// Largest in/out degree kept in the entry table.
    #[arg(long, default_value_t = 3)]
    k_cap: usize,
    /// Months after the cohort month covered by the decay fit.
    #[arg(long, default_value_t = 24)]
    decay_months: i64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    InverseCensus,
    SectorNormalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum PeriodArg {
    A,
    B,
    C,
}

#[derive(Args)]
struct SimulateArgs {
    /// Parameter JSON as written by `calibrate`.
    #[arg(long, conflicts_with = "period")]
    params: Option<PathBuf>,
    /// Built-in parameter set.
    #[arg(long, value_enum)]
    period: Option<PeriodArg>,
    /// Seed network edge list; a synthetic seed is generated when absent.
    #[arg(long)]
    seed_edges: Option<PathBuf>,
    #[arg(long, requires = "seed_edges")]
    seed_firms: Option<PathBuf>,
    /// Firms in the synthetic seed network.
    #[arg(long, default_value_t = 18_000)]
    seed_size: usize,
    /// Run configuration JSON (see README).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    /// Adjust the exit probability for a stationary firm count first.
    #[arg(long)]
    stationarity_adjust: bool,
    /// Also write the link history (canonical intervals) and the table of
    /// every firm ever present, ready for `calibrate`.
    #[arg(long)]
    history: bool,
}

/// Run configuration; every field is optional in the JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    steps: usize,
    burn_in: usize,
    snapshot_every: usize,
    max_resample: u32,
    stub_law: StubLaw,
    sector_mode: SectorMode,
    /// Months per trial in the stationarity bisection.
    trial_steps: usize,
    /// Degree-law exponent of the synthetic configuration-model seed.
    seed_exponent: f64,
    seed_max_degree: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            burn_in: 50,
            snapshot_every: 50,
            max_resample: 20,
            stub_law: StubLaw::default(),
            sector_mode: SectorMode::default(),
            trial_steps: 50,
            seed_exponent: 2.2,
            seed_max_degree: 2000,
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    /// Edge list `supplier_id,buyer_id`.
    edges: PathBuf,
    #[arg(long)]
    firms: Option<PathBuf>,
    /// Step report CSV for the N/L fluctuation moments.
    #[arg(long)]
    steps: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    window: usize,
}

#[derive(Args)]
struct EsriArgs {
    edges: PathBuf,
    #[arg(long)]
    firms: Option<PathBuf>,
    /// CSV `input_sector,firm_sector,class`; sections A-F essential when absent.
    #[arg(long)]
    essentialness: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PropagationArg::Separate)]
    propagation: PropagationArg,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropagationArg {
    Separate,
    Coupled,
    SupplyOnly,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 60)]
    months: i64,
    #[arg(long, default_value_t = 5_000)]
    firms: u64,
    /// Unlinked pairs with sub-threshold trading.
    #[arg(long, default_value_t = 0)]
    noise_pairs: usize,
}

#[derive(Serialize)]
struct FilterSummary {
    transactions: usize,
    pairs_in: usize,
    intervals_out: usize,
    linked_pairs: usize,
    rejected_pair_share: f64,
    skipped_rows: usize,
}

#[derive(Serialize)]
struct RoundtripSummary {
    truth_intervals: usize,
    recovered_intervals: usize,
    exact: usize,
    missing: usize,
    spurious: usize,
    transactions: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numerical(_)) => 3,
        Some(Error::InsufficientData { .. }) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Filter(a) => cmd_filter(cli, a),
        Command::Calibrate(a) => cmd_calibrate(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Stats(a) => cmd_stats(cli, a),
        Command::Esri(a) => cmd_esri(cli, a),
        Command::Roundtrip(a) => cmd_roundtrip(cli, a),
    }
}

fn cmd_filter(cli: &Cli, a: &FilterArgs) -> anyhow::Result<()> {
    let manifest = RunManifest::start("filter", &[&a.input], None, cli.seed, &cli.out);
    let parsed = io::read_transactions(io::open(&a.input)?, cli.lenient)?;
    for issue in &parsed.issues {
        eprintln!("warning: line {}: {}", issue.line, issue.message);
    }
    let rule = FilterRule {
        min_transactions: a.min_transactions,
        window: a.window,
    };
    let tx = parsed.rows;
    let intervals = filter_with_rule(&tx, rule);
    io::write_intervals(io::create(&cli.out.join("intervals.csv"))?, &intervals)?;
    let range = match (tx.iter().map(|t| t.month).min(), tx.iter().map(|t| t.month).max()) {
        (Some(lo), Some(hi)) => lo..hi + 1,
        _ => 0..0,
    };
    io::write_timeline(io::create(&cli.out.join("timeline.csv"))?, &activity_timeline(&intervals, range))?;
    let pairs: HashSet<(FirmId, FirmId)> = tx.iter().map(|t| (t.supplier, t.buyer)).collect();
    let linked: HashSet<(FirmId, FirmId)> = intervals.iter().map(|i| (i.supplier, i.buyer)).collect();
    let summary = FilterSummary {
        transactions: tx.len(),
        pairs_in: pairs.len(),
        intervals_out: intervals.len(),
        linked_pairs: linked.len(),
        rejected_pair_share: if pairs.is_empty() { 0.0 } else { 1.0 - linked.len() as f64 / pairs.len() as f64 },
        skipped_rows: parsed.issues.len(),
    };
    println!(
        "pairs in: {}, intervals out: {}, rejected pair share: {:.4}",
        summary.pairs_in, summary.intervals_out, summary.rejected_pair_share
    );
    io::write_json(&cli.out.join("filter_summary.json"), &summary)?;
    manifest.finish(&cli.out)?;
    Ok(())
}

fn cmd_calibrate(cli: &Cli, a: &CalibrateArgs) -> anyhow::Result<()> {
    let manifest = RunManifest::start("calibrate", &[&a.intervals, &a.firms], None, cli.seed, &cli.out);
    let parsed = io::read_intervals(io::open(&a.intervals)?, cli.lenient)?;
    for issue in &parsed.issues {
        eprintln!("warning: line {}: {}", issue.line, issue.message);
    }
    let table = io::read_firm_table(io::open(&a.firms)?, None)?;
    let opts = CalibrationOptions {
        kernel_method: match a.kernel {
            KernelArg::InverseCensus => KernelMethod::InverseCensus,
            KernelArg::SectorNormalized => KernelMethod::SectorNormalized,
        },
        k_cap: a.k_cap,
        decay_dt_max: a.decay_months,
        ..CalibrationOptions::default()
    };
    let report = calibrate(&parsed.rows, &table.sector_map(), &table.labels, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    io::write_json(&cli.out.join("params.json"), &report.params)?;
    io::write_json(&cli.out.join("report.json"), &report)?;
    let p = &report.params;
    println!(
        "N_entry {:.1}, p_ex {:.4}, alpha0 {:.4}, alpha {:.3}, beta {:.3}, p_term {:.4}",
        p.n_entry_mean, p.p_node_exit, p.alpha0, p.alpha, p.beta, p.p_term
    );
    manifest.finish(&cli.out)?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(io::read_json(p).with_context(|| format!("reading {}", p.display()))?),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = Vec::new();
    inputs.extend(a.params.as_deref());
    inputs.extend(a.seed_edges.as_deref());
    inputs.extend(a.seed_firms.as_deref());
    let manifest = RunManifest::start("simulate", &inputs, a.config.as_deref(), cli.seed, &cli.out);
    let mut rc = load_config(a.config.as_deref())?;
    if let Some(s) = a.steps {
        rc.steps = s;
    }
    let mut params: ModelParams = match (&a.params, a.period) {
        (Some(p), _) => io::read_json(p)?,
        (None, Some(PeriodArg::B)) => ModelParams::period_b(),
        (None, Some(PeriodArg::C)) => ModelParams::period_c(),
        (None, _) => ModelParams::period_a(),
    };
    params.validate()?;
    let (state, labels) = match &a.seed_edges {
        Some(e) => {
            let net = io::read_network(e, a.seed_firms.as_deref())?;
            if net.labels.len() != params.sector_labels.len() {
                bail!(Error::Inconsistent(format!(
                    "seed network has {} sectors, parameters {}",
                    net.labels.len(),
                    params.sector_labels.len()
                )));
            }
            (net.state, net.labels)
        }
        None => {
            let recipe = SeedRecipe::Configuration {
                exponent: rc.seed_exponent,
                max_degree: rc.seed_max_degree,
            };
            let st = seed_network(a.seed_size, &params.sector_dist, &recipe, cli.seed)?;
            (st, params.sector_labels.clone())
        }
    };
    if a.stationarity_adjust {
        let adj = stationarity_adjust(&params, &state, cli.seed, rc.trial_steps)?;
        println!(
            "stationarity: p_ex {:.5} -> {:.5} (mean dN {:.2}, {} trials)",
            params.p_node_exit, adj.params.p_node_exit, adj.mean_delta_n, adj.evaluations
        );
        params = adj.params;
        io::write_json(&cli.out.join("params_adjusted.json"), &params)?;
    }
    let cfg = EngineConfig {
        params,
        seed: cli.seed,
        max_resample: rc.max_resample,
        steps: rc.steps,
        burn_in: rc.burn_in,
        snapshot_every: rc.snapshot_every,
        stub_law: rc.stub_law,
        sector_mode: rc.sector_mode,
        record_history: a.history,
    };
    let out = run(&state, &cfg)?;
    if let Some(h) = &out.history {
        let ivs = canonical_intervals(&h.intervals, FilterRule::default());
        io::write_intervals(io::create(&cli.out.join("history_intervals.csv"))?, &ivs)?;
        let mut w = io::create(&cli.out.join("history_firms.csv"))?;
        writeln!(w, "firm_id,sector")?;
        for f in &h.firms {
            writeln!(w, "{},{}", f.id, labels[f.sector.index()])?;
        }
        w.flush()?;
    }
    let snap_dir = cli.out.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for s in &out.snapshots {
        io::write_network(&snap_dir, &format!("step{:05}", s.step), &s.state, &labels)?;
    }
    io::write_step_reports(io::create(&cli.out.join("steps.csv"))?, &out.reports)?;
    io::write_json(&cli.out.join("run_config.json"), &rc)?;
    println!(
        "{} steps, {} snapshots, final N {} L {}",
        out.reports.len(),
        out.snapshots.len(),
        out.final_state.firm_count(),
        out.final_state.link_count()
    );
    manifest.finish(&cli.out)?;
    Ok(())
}

fn curve_rows(c: &BinnedCurve) -> Vec<(String, String)> {
    c.means
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|v| (format!("{}", (c.lower[i] + c.upper[i]) as f64 / 2.0), v.to_string())))
        .collect()
}

fn cmd_stats(cli: &Cli, a: &StatsArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.edges];
    inputs.extend(a.firms.as_deref());
    let manifest = RunManifest::start("stats", &inputs, None, cli.seed, &cli.out);
    let net = io::read_network(&a.edges, a.firms.as_deref())?;
    let reports = a.steps.as_ref().map(|p| io::read_step_reports(io::open(p)?)).transpose()?;
    let stats = snapshot_stats(&net.state, reports.as_deref().map(|r| (r, a.window)));
    io::write_json(&cli.out.join("stats.json"), &stats)?;
    for (name, ccdf) in [("ccdf_total", &stats.ccdf_k), ("ccdf_in", &stats.ccdf_in), ("ccdf_out", &stats.ccdf_out)] {
        let rows = ccdf.iter().map(|(k, p)| (k.to_string(), p.to_string()));
        io::write_curve(io::create(&cli.out.join(format!("{name}.csv")))?, ["k", "ccdf"], rows)?;
    }
    io::write_curve(io::create(&cli.out.join("knn.csv"))?, ["k", "knn"], curve_rows(&stats.knn))?;
    io::write_curve(io::create(&cli.out.join("clustering.csv"))?, ["k", "clustering"], curve_rows(&stats.clustering))?;
    println!("N {} L {} mean degree {:.3}", stats.n, stats.l, stats.mean_degree);
    manifest.finish(&cli.out)?;
    Ok(())
}

fn cmd_esri(cli: &Cli, a: &EsriArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.edges];
    inputs.extend(a.firms.as_deref());
    inputs.extend(a.essentialness.as_deref());
    let manifest = RunManifest::start("esri", &inputs, None, cli.seed, &cli.out);
    let net = io::read_network(&a.edges, a.firms.as_deref())?;
    let table = match &a.essentialness {
        Some(p) => io::read_essentialness(io::open(p)?, &net.labels)?,
        None => EssentialnessTable::default_for(&net.labels),
    };
    let cfg = EsriConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        propagation: match a.propagation {
            PropagationArg::Separate => Propagation::Separate,
            PropagationArg::Coupled => Propagation::Coupled,
            PropagationArg::SupplyOnly => Propagation::SupplyOnly,
        },
    };
    let result = compute_esri(&net.state, &table, &cfg)?;
    io::write_esri(io::create(&cli.out.join("esri.csv"))?, &result)?;
    if !result.non_converged.is_empty() {
        eprintln!("warning: {} cascades hit the iteration limit", result.non_converged.len());
    }
    let p = result.profile();
    if let Some(top) = p.values.first() {
        println!("{} firms, highest ESRI {:.4e} (firm {})", p.len(), top, p.firms[0]);
    }
    manifest.finish(&cli.out)?;
    Ok(())
}

fn cmd_roundtrip(cli: &Cli, a: &RoundtripArgs) -> anyhow::Result<()> {
    let manifest = RunManifest::start("roundtrip", &[], None, cli.seed, &cli.out);
    let start = 2015 * 12;
    let months = start..start + a.months;
    let truth = random_link_intervals(a.pairs, a.firms, months.clone(), cli.seed)?;
    let firms: Vec<FirmId> = (0..a.firms).map(FirmId).collect();
    let txc = TransactionConfig {
        noise_pairs: a.noise_pairs,
        ..TransactionConfig::default()
    };
    let tx = generate_transactions(&truth, &firms, months, &txc, cli.seed)?;
    io::write_transactions(io::create(&cli.out.join("transactions.csv"))?, &tx)?;
    io::write_intervals(io::create(&cli.out.join("truth_intervals.csv"))?, &truth)?;
    let got = filter_with_rule(&tx, FilterRule::default());
    io::write_intervals(io::create(&cli.out.join("intervals.csv"))?, &got)?;
    let want: HashSet<LinkInterval> = truth.iter().copied().collect();
    let have: HashSet<LinkInterval> = got.iter().copied().collect();
    let summary = RoundtripSummary {
        truth_intervals: want.len(),
        recovered_intervals: have.len(),
        exact: want.intersection(&have).count(),
        missing: want.difference(&have).count(),
        spurious: have.difference(&want).count(),
        transactions: tx.len(),
    };
    io::write_json(&cli.out.join("roundtrip.json"), &summary)?;
    println!(
        "truth {} recovered {} exact {} missing {} spurious {}",
        summary.truth_intervals, summary.recovered_intervals, summary.exact, summary.missing, summary.spurious
    );
    manifest.finish(&cli.out)?;
    if summary.missing > 0 || summary.spurious > 0 {
        bail!(Error::Inconsistent("filter output differs from the ground truth".into()));
    }
    Ok(())
}
