#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod figures;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use gridshare::config::{parse_policies, ExperimentConfig};
use gridshare::engine::trace_csv;
use gridshare::metrics::{
    adfd_csv, delaydist_csv, fleet_for_seed, fod_csv, outcomes_csv, run_cell, summary_csv, sweep,
    MetricsReport, SweepTable,
};
use gridshare::oracle::{audit_trace, parse_trace, verify_campaign, violations_csv};
use gridshare::policies::{PolicyKind, PolicySpec};
use gridshare::workload::fleet_csv;

use output::OutputDir;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gridshare",
    version,
    about = "Slot-based EV charging under a shared grid budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one (policy, SDR, seed) cell.
    Simulate(SimulateArgs),
    /// Run the policy x SDR x seed grid and write tables and figures.
    Sweep(SweepArgs),
    /// Brute-force and audit random tiny instances, or audit a trace file.
    Verify(VerifyArgs),
    /// Write the generated fleet for one seed as CSV.
    DumpFleet(DumpFleetArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// key=value config bundle; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    arrivals_per_day: Option<f64>,
    /// Charger preset: home-110-15 or dryer-220-30.
    #[arg(long)]
    charger: Option<String>,
    /// Run 15 A circuits at 13 A.
    #[arg(long)]
    derate_13a: bool,
    /// Charge FCFS and RR vehicles to full without trip distances.
    #[arg(long)]
    simple: bool,
    /// Order FDFS by least slack instead of earliest departure.
    #[arg(long)]
    fdfs_slack: bool,
    /// Derive miles per slot from the charger's kW instead of its nominal rating.
    #[arg(long)]
    physical_rate: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "minmax-dt")]
    policy: PolicyKind,
    #[arg(long, default_value_t = 1.2)]
    sdr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the per-slot selection trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated policy names, or `all`.
    #[arg(long)]
    policies: Option<String>,
    /// Comma-separated SDR values.
    #[arg(long)]
    sdr_grid: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Audit this trace file instead of running the campaign.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Policy that produced `--trace`.
    #[arg(long, default_value = "minmax-dt")]
    policy: PolicyKind,
    #[arg(long)]
    simple: bool,
    #[arg(long)]
    fdfs_slack: bool,
    /// Miles per slot used when the trace was produced.
    #[arg(long, default_value_t = 0.5)]
    miles_per_slot: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DumpFleetArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|cause| {
        cause
            .downcast_ref::<gridshare::Error>()
            .is_some_and(gridshare::Error::is_config_error)
            || cause.is::<UsageError>()
    });
    if config {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Verify(args) => verify(args),
        Command::DumpFleet(args) => dump_fleet(args),
    }
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("GRIDSHARE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| UsageError(format!("GRIDSHARE_THREADS: not a count: {v:?}")).into()),
        Err(_) => Ok(None),
    }
}

fn build_config(common: &CommonArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let here = Path::new(".");
    if let Some(days) = common.days {
        cfg.set("days", &days.to_string(), here)?;
    }
    if let Some(e) = common.arrivals_per_day {
        cfg.set("arrivals_per_day", &e.to_string(), here)?;
    }
    if common.physical_rate {
        cfg.set("charger_rating", "physical", here)?;
    }
    if let Some(name) = &common.charger {
        cfg.set("charger", name, here)?;
    }
    if common.derate_13a {
        cfg.set("derate_13a", "true", here)?;
    }
    if common.simple {
        cfg.simple = true;
    }
    if common.fdfs_slack {
        cfg.set("fdfs_order", "least-slack", here)?;
    }
    Ok(cfg)
}

fn write_config_echo(out: &OutputDir, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    out.write("arrival_profile.txt", &cfg.scenario.profile.to_text())?;
    out.write("load_shape.txt", &cfg.scenario.shape.to_text())?;
    out.write(
        "resolved-config",
        &cfg.render("arrival_profile.txt", "load_shape.txt"),
    )
}

fn summary_line(r: &MetricsReport) -> String {
    let adfd = r
        .adfd_minutes
        .map_or_else(|| "NA".to_string(), |m| format!("{m:.1}"));
    format!(
        "{} sdr={} seed={} n={} delayed={} fod={:.4} adfd_min={}",
        r.policy, r.sdr, r.seed, r.n_measured, r.n_delayed, r.fod, adfd
    )
}

fn write_tables(out: &OutputDir, table: &SweepTable, bin_width: f64) -> anyhow::Result<()> {
    out.write("fod.csv", &fod_csv(table))?;
    out.write("adfd.csv", &adfd_csv(table))?;
    out.write("delaydist.csv", &delaydist_csv(table, bin_width)?)?;
    out.write("summary.csv", &summary_csv(table))
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = build_config(&args.common)?;
    cfg.policies = vec![args.policy];
    cfg.sdr_grid = vec![args.sdr];
    cfg.seeds = vec![args.seed];
    cfg.trace = args.trace || cfg.trace;
    cfg.validate()?;
    let policy = cfg.policy_specs()[0];

    let out = OutputDir::create(&args.common.out)?;
    write_config_echo(&out, &cfg)?;
    let cell = run_cell(&cfg.scenario, policy, args.sdr, args.seed, cfg.trace)?;
    println!("{}", summary_line(&cell.report));

    let table = SweepTable::from_reports(vec![cell.report.clone()]);
    write_tables(&out, &table, cfg.scenario.bin_width_min)?;
    out.write("outcomes.csv", &outcomes_csv(&cell.run.outcomes))?;
    if let Some(rows) = &cell.run.trace {
        out.write("trace.csv", &trace_csv(rows))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = build_config(&args.common)?;
    let here = Path::new(".");
    if let Some(p) = &args.policies {
        cfg.policies = parse_policies(p)?;
    }
    if let Some(g) = &args.sdr_grid {
        cfg.set("sdr_grid", g, here)?;
    }
    if let Some(s) = &args.seeds {
        cfg.set("seeds", s, here)?;
    }
    cfg.validate()?;
    let threads = threads_from_env()?;

    let out = OutputDir::create(&args.common.out)?;
    write_config_echo(&out, &cfg)?;
    let table = sweep(&cfg, threads, |r| println!("{}", summary_line(r)))?;
    write_tables(&out, &table, cfg.scenario.bin_width_min)?;

    let labels: Vec<String> = cfg.policy_specs().iter().map(PolicySpec::label).collect();
    let figs = figures::render_all(&table, &labels, &cfg.sdr_grid, cfg.scenario.bin_width_min);
    for warning in &figs.warnings {
        eprintln!("warning: {warning}");
    }
    out.write("fig1.svg", &figs.fod)?;
    out.write("fig2.svg", &figs.adfd)?;
    out.write("fig3.svg", &figs.delay_dist)?;
    println!(
        "{} cells written to {}",
        table.reports.len(),
        args.common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let out = OutputDir::create(&args.out)?;
    if let Some(path) = &args.trace {
        let mut policy = if args.simple {
            PolicySpec::simple(args.policy)?
        } else {
            PolicySpec::new(args.policy)
        };
        if args.fdfs_slack {
            policy = policy.with_fdfs_order(gridshare::policies::FdfsOrder::LeastSlack);
        }
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| UsageError(format!("{e:#}")))?;
        let rows = parse_trace(&text)?;
        let violations = audit_trace(&rows, &policy, args.miles_per_slot);
        out.write("violations.csv", &violations_csv(&violations))?;
        println!(
            "audited {} rows of {}: {} violations",
            rows.len(),
            policy.label(),
            violations.len()
        );
        return Ok(if violations.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_RUNTIME)
        });
    }

    if args.instances == 0 {
        bail!(UsageError("--instances must be positive".into()));
    }
    let report = verify_campaign(args.instances, args.seed)?;
    let flat: Vec<_> = report
        .violations
        .iter()
        .map(|(_, _, v)| v.clone())
        .collect();
    out.write("violations.csv", &violations_csv(&flat))?;

    let mut cx = String::from("instance,minmax_dt_max_delay,optimum\n");
    for c in &report.counterexamples {
        cx.push_str(&format!("{},{},{}\n", c.index, c.minmax_dt, c.optimum));
    }
    out.write("counterexamples.csv", &cx)?;

    println!(
        "instances={} optimal={} counterexamples={} dominated={} violations={}",
        report.instances,
        report.optimal,
        report.counterexamples.len(),
        report.dominated.len(),
        report.violations.len()
    );
    let passed = if report.counterexamples.is_empty() {
        report.all_optimal()
    } else {
        println!("minmax-dt missed the optimum; falling back to the no-worse-than-others check");
        report.never_dominated()
    };
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    })
}

fn dump_fleet(args: DumpFleetArgs) -> anyhow::Result<ExitCode> {
    let cfg = build_config(&args.common)?;
    cfg.validate()?;
    let fleet = fleet_for_seed(&cfg.scenario, args.seed)?;
    let out = OutputDir::create(&args.common.out)?;
    write_config_echo(&out, &cfg)?;
    out.write("fleet.csv", &fleet_csv(&fleet))?;
    println!("seed={} vehicles={}", args.seed, fleet.len());
    Ok(ExitCode::SUCCESS)
}
