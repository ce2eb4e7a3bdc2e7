//! Experiment runner: wraps the `taxsim` library behind subcommands that
//! read a TOML configuration, run deterministic (seeded) computations, and
//! emit CSV tables plus a JSON summary and a checksummed manifest per run.
//!
//! Exit codes: 0 success, 1 validation error (flags or config), 2 property
//! violation (a checked invariant failed), 3 runtime error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use taxsim::config::{
    parse_config, ExperimentConfig, ExperimentKind, FixtureName, MarketSpec, StrategySpec,
};
use taxsim::efficient::{closed_form_tax, feedback_strategy, FeedbackRule};
use taxsim::lot_ledger::{ledger_step, LotLedger};
use taxsim::paths::{gen_crr_indexed, gen_gbm_indexed};
use taxsim::report::{fmt_float, write_json, write_manifest, CsvTable};
use taxsim::tax_flow::{tax_process_elementary, ElementaryStrategy, TaxFlow};
use taxsim::verify::run_all;
use taxsim::wealth::{compare_dividend_policies, DividendModel};
use taxsim::{DividendPath, Error, PricePath, ReturnPath};

#[derive(Parser)]
#[command(
    name = "taxflow",
    version,
    about = "Capital-gains tax flows of trading strategies under the exact tax basis with automatic wash sales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Export the wash-adjusted lot ledger and the tax flow of one scenario
    Ledger {
        #[command(flatten)]
        common: Common,
        /// Named scenario (figure2 | figure3); default when no config is given
        #[arg(long)]
        fixture: Option<String>,
        /// Override the tax rate
        #[arg(long)]
        alpha: Option<f64>,
        /// Grid index at which to export the ledger (default: final)
        #[arg(long)]
        time: Option<usize>,
    },
    /// Batch Monte Carlo of tax flows on the configured market
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Pathwise comparison of a dividend-paying stock with its retained twin
    CompareDividends {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form vs. engine tax for a feedback strategy, per path
    Efficient {
        #[command(flatten)]
        common: Common,
    },
    /// Mesh-refinement study: Cauchy distances and closed-form errors
    Converge {
        #[command(flatten)]
        common: Common,
        /// Market model (crr | gbm) when no config is given
        #[arg(long)]
        model: Option<String>,
        /// Feedback rule (linear | power) when no config is given
        #[arg(long)]
        g: Option<String>,
        /// Number of dyadic refinement levels
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Run the full invariant suite; nonzero exit on any violation
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure modes mapped onto the documented exit codes.
enum Failure {
    Validation(String),
    Violation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Violation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Violation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::BudgetExceeded { .. } | Error::Io(_) => Failure::Runtime(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ledger {
            common,
            fixture,
            alpha,
            time,
        } => {
            let fallback = format!(
                "experiment = \"ledger\"\n\n[market]\nmodel = \"fixture\"\nfixture = \"{}\"\n",
                fixture.as_deref().unwrap_or("figure2")
            );
            let (mut cfg, echo) = load_config(&common, ExperimentKind::Ledger, Some(&fallback))?;
            if let Some(name) = &fixture {
                if common.config.is_some() {
                    return Err(Failure::Validation(
                        "--fixture cannot override an explicit --config".into(),
                    ));
                }
                let _ = name; // already embedded in the fallback document
            }
            if let Some(a) = alpha {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Failure::Validation(format!(
                        "alpha: must lie strictly between 0 and 1, got {a}"
                    )));
                }
                cfg.alpha = a;
            }
            run_ledger(&cfg, &echo, time)
        }
        Command::Simulate { common } => {
            let (cfg, echo) = load_config(&common, ExperimentKind::Simulate, None)?;
            run_simulate(&cfg, &echo)
        }
        Command::CompareDividends { common } => {
            let (cfg, echo) = load_config(&common, ExperimentKind::CompareDividends, None)?;
            run_compare(&cfg, &echo)
        }
        Command::Efficient { common } => {
            let (cfg, echo) = load_config(&common, ExperimentKind::Efficient, None)?;
            run_efficient(&cfg, &echo)
        }
        Command::Converge {
            common,
            model,
            g,
            levels,
        } => {
            if common.config.is_some() && (model.is_some() || g.is_some()) {
                return Err(Failure::Validation(
                    "--model/--g cannot override an explicit --config".into(),
                ));
            }
            let fallback = format!(
                "experiment = \"converge\"\n\n[market]\nmodel = \"{}\"\n\n[strategy]\nkind = \"feedback\"\nrule = \"{}\"\n",
                model.as_deref().unwrap_or("crr"),
                g.as_deref().unwrap_or("linear")
            );
            let (mut cfg, echo) = load_config(&common, ExperimentKind::Converge, Some(&fallback))?;
            if let Some(l) = levels {
                if l == 0 {
                    return Err(Failure::Validation("levels: must be >= 1".into()));
                }
                cfg.converge.levels = l;
            }
            run_converge(&cfg, &echo)
        }
        Command::Verify { common } => {
            let fallback = "experiment = \"verify\"\n\n[market]\nmodel = \"fixture\"\nfixture = \"figure2\"\n".to_string();
            let (cfg, echo) = load_config(&common, ExperimentKind::Verify, Some(&fallback))?;
            run_verify(&cfg, &echo)
        }
    }
}

/// Read and validate the configuration, apply flag overrides, and return it
/// together with the exact document echoed into the manifest.
fn load_config(
    common: &Common,
    kind: ExperimentKind,
    fallback: Option<&str>,
) -> Result<(ExperimentConfig, String), Failure> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path).map_err(|e| {
            Failure::Validation(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => match fallback {
            Some(f) => f.to_string(),
            None => {
                return Err(Failure::Validation(format!(
                    "the {} command requires --config FILE",
                    kind.name()
                )))
            }
        },
    };
    let mut cfg = parse_config(&text).map_err(|e| Failure::Validation(e.to_string()))?;
    if cfg.kind != kind {
        return Err(Failure::Validation(format!(
            "config declares experiment \"{}\" but the {} command was invoked",
            cfg.kind.name(),
            kind.name()
        )));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    Ok((cfg, text))
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// CSV columns (t, S, phi, Pi_left, Pi, Pi_right) for one scenario.
fn taxflow_table(prices: &PricePath, phi: &ElementaryStrategy, pi: &TaxFlow) -> CsvTable {
    let mut table = CsvTable::new(["t", "S", "phi", "Pi_left", "Pi", "Pi_right"]);
    for k in 0..prices.len() {
        table.push_floats([
            prices.grid.times()[k],
            prices.values[k],
            phi.value(k),
            pi.left[k],
            pi.at[k],
            pi.right[k],
        ]);
    }
    table
}

fn run_ledger(cfg: &ExperimentConfig, echo: &str, time: Option<usize>) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let (prices, dividends) = cfg.market_path(0)?;
    let phi = cfg.strategy(&prices)?;
    let t = time.unwrap_or(prices.len() - 1);
    if t >= prices.len() {
        return Err(Failure::Validation(format!(
            "time: index {t} out of range (grid has {} points)",
            prices.len()
        )));
    }

    // replay the lot ledger up to and including the trade at index t
    let discrete = phi.to_discrete();
    let mut ledger = LotLedger::new();
    for k in 0..=t {
        let (next, _) = ledger_step(&ledger, prices.values[k], discrete.delta(k), cfg.alpha)?;
        ledger = next;
    }
    let mut lots = CsvTable::new(["purchase_index", "size", "basis", "book_profit"]);
    for lot in &ledger.lots {
        lots.push_row([
            lot.purchase_index.to_string(),
            fmt_float(lot.size),
            fmt_float(lot.basis),
            fmt_float(prices.values[t] - lot.basis),
        ]);
    }
    let ledger_path = dir.join("ledger.csv");
    lots.write(&ledger_path)?;

    let pi = tax_process_elementary(&phi, &prices, &dividends, cfg.alpha)?;
    let flow_path = dir.join("taxflow.csv");
    taxflow_table(&prices, &phi, &pi).write(&flow_path)?;

    println!(
        "accumulated tax after each trading date: {:?}",
        pi.right.iter().copied().collect::<Vec<f64>>()
    );
    println!("ledger at t={t}: {} lots, position {}", ledger.lots.len(), {
        ledger.lots.iter().map(|l| l.size).sum::<f64>()
    });
    write_manifest(&dir, "ledger", cfg.seed, echo, &[ledger_path, flow_path])?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    paths: usize,
    terminal_tax_mean: f64,
    terminal_tax_q05: f64,
    terminal_tax_q50: f64,
    terminal_tax_q95: f64,
}

fn run_simulate(cfg: &ExperimentConfig, echo: &str) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let mut terminal = Vec::with_capacity(cfg.batch);
    let mut first: Option<(PricePath, ElementaryStrategy, TaxFlow)> = None;
    for i in 0..cfg.batch {
        let (prices, dividends) = cfg.market_path(i as u64)?;
        let phi = cfg.strategy(&prices)?;
        let pi = tax_process_elementary(&phi, &prices, &dividends, cfg.alpha)?;
        terminal.push(*pi.right.last().unwrap());
        if first.is_none() {
            first = Some((prices, phi, pi));
        }
    }
    let (prices, phi, pi) = first.unwrap();
    let flow_path = dir.join("taxflow.csv");
    taxflow_table(&prices, &phi, &pi).write(&flow_path)?;

    let mut sorted = terminal.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let summary = SimulateSummary {
        paths: cfg.batch,
        terminal_tax_mean: terminal.iter().sum::<f64>() / cfg.batch as f64,
        terminal_tax_q05: quantile(&sorted, 0.05),
        terminal_tax_q50: quantile(&sorted, 0.50),
        terminal_tax_q95: quantile(&sorted, 0.95),
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    println!(
        "{} paths; terminal tax median {:.6}, mean {:.6}",
        cfg.batch, summary.terminal_tax_q50, summary.terminal_tax_mean
    );
    write_manifest(&dir, "simulate", cfg.seed, echo, &[flow_path, summary_path])?;
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    min_gap: f64,
    max_gap: f64,
    min_tax_gap: f64,
    violations: usize,
}

fn run_compare(cfg: &ExperimentConfig, echo: &str) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let (prices, dividends) = cfg.market_path(0)?;
    let phi = cfg.strategy(&prices)?;

    // reconstruct the return model that reproduces the observed cum-dividend
    // path: dR_k = (S_k + dD_k - S_{k-1}) / S_{k-1}
    let s0 = prices.values[0] + dividends.cumulative[0];
    let mut increments = Vec::with_capacity(prices.len() - 1);
    for k in 1..prices.len() {
        let prev = prices.values[k - 1];
        if prev > 0.0 {
            increments.push((prices.values[k] + dividends.increment(k) - prev) / prev);
        } else if prices.values[k] == 0.0 && dividends.increment(k) == 0.0 {
            increments.push(0.0);
        } else {
            return Err(Failure::Validation(format!(
                "market.prices: price revives from 0 at index {k}"
            )));
        }
    }
    let returns = ReturnPath::new(prices.grid.clone(), increments)?;
    let model = DividendModel::new(returns, dividends, s0)?;
    let rates = cfg.rates(&prices.grid)?;
    let c = compare_dividend_policies(&phi, &model, &rates, cfg.alpha, cfg.v0)?;

    let mut table = CsvTable::new([
        "t", "S_D", "S_0", "phi_D", "phi_0", "Pi_D", "Pi_0", "V_D", "V_0", "gap",
    ]);
    for k in 0..prices.len() {
        table.push_floats([
            prices.grid.times()[k],
            c.s_d.values[k],
            c.s_0.values[k],
            phi.value(k),
            c.phi_0.value(k),
            c.pi_d.at[k],
            c.pi_0.at[k],
            c.wealth_d.v_at[k],
            c.wealth_0.v_at[k],
            c.wealth_0.v_at[k] - c.wealth_d.v_at[k],
        ]);
    }
    let table_path = dir.join("comparison.csv");
    table.write(&table_path)?;
    let summary = CompareSummary {
        min_gap: c.min_wealth_gap,
        max_gap: c.max_wealth_gap,
        min_tax_gap: c.min_tax_gap,
        violations: c.violations,
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    println!(
        "wealth gap (no-dividend minus dividend) in [{:.6}, {:.6}], {} violations",
        c.min_wealth_gap, c.max_wealth_gap, c.violations
    );
    write_manifest(
        &dir,
        "compare-dividends",
        cfg.seed,
        echo,
        &[table_path, summary_path],
    )?;
    if c.violations > 0 {
        return Err(Failure::Violation(format!(
            "retaining dividends failed to dominate on {} grid points",
            c.violations
        )));
    }
    Ok(())
}

fn feedback_rule(cfg: &ExperimentConfig) -> Result<FeedbackRule, Failure> {
    match &cfg.strategy {
        StrategySpec::Feedback(rule) => Ok(rule.clone()),
        _ => Err(Failure::Validation(
            "strategy: this experiment needs a feedback rule".into(),
        )),
    }
}

#[derive(Serialize)]
struct EfficientSummary {
    paths: usize,
    median_abs_error: f64,
}

fn run_efficient(cfg: &ExperimentConfig, echo: &str) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let rule = feedback_rule(cfg)?;
    let mut table = CsvTable::new(["n", "mesh", "engine_Pi_T", "closed_form_Pi_T", "abs_error"]);
    let mut errors = Vec::with_capacity(cfg.batch);
    for i in 0..cfg.batch {
        let (prices, dividends) = cfg.market_path(i as u64)?;
        if !dividends.is_zero() {
            return Err(Failure::Validation(
                "dividends: closed-form comparison requires a dividend-free market".into(),
            ));
        }
        let phi = feedback_strategy(&rule, &prices)?;
        let engine = *tax_process_elementary(&phi, &prices, &dividends, cfg.alpha)?
            .right
            .last()
            .unwrap();
        let closed = *closed_form_tax(&rule, &prices, cfg.alpha, false)?
            .pi
            .last()
            .unwrap();
        let err = (engine - closed).abs();
        errors.push(err);
        table.push_floats([
            (prices.len() - 1) as f64,
            prices.grid.mesh(),
            engine,
            closed,
            err,
        ]);
    }
    let table_path = dir.join("efficient.csv");
    table.write(&table_path)?;
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let summary = EfficientSummary {
        paths: cfg.batch,
        median_abs_error: quantile(&errors, 0.5),
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    println!(
        "{} paths; median |engine - closed form| = {:.3e}",
        cfg.batch, summary.median_abs_error
    );
    write_manifest(&dir, "efficient", cfg.seed, echo, &[table_path, summary_path])?;
    Ok(())
}

/// Generate path `index` of the configured random market with `steps` steps.
fn market_at_resolution(
    cfg: &ExperimentConfig,
    steps: usize,
    index: u64,
) -> Result<PricePath, Failure> {
    match &cfg.market {
        MarketSpec::Crr {
            s0,
            sigma,
            horizon,
            ..
        } => Ok(gen_crr_indexed(*s0, *sigma, steps, *horizon, cfg.seed, index)?),
        MarketSpec::Gbm {
            s0,
            mu,
            sigma,
            horizon,
            ..
        } => Ok(gen_gbm_indexed(
            *s0, *mu, *sigma, steps, *horizon, cfg.seed, index,
        )?),
        _ => Err(Failure::Validation(
            "market.model: refinement studies need a crr or gbm market".into(),
        )),
    }
}

/// Feedback response sampled only every `stride` fine steps.
fn sampled_feedback(
    rule: &FeedbackRule,
    prices: &PricePath,
    stride: usize,
) -> Result<ElementaryStrategy, Failure> {
    let n = prices.len() - 1;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    for k in 1..=n {
        let j = ((k - 1) / stride) * stride;
        values.push(rule.g(prices.values[j]));
    }
    let terminal = rule.g(prices.values[n]);
    Ok(ElementaryStrategy::new(
        prices.grid.clone(),
        values,
        terminal,
    )?)
}

fn run_converge(cfg: &ExperimentConfig, echo: &str) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let rule = feedback_rule(cfg)?;
    let levels = cfg.converge.levels;
    let base = cfg.converge.base_steps;

    // closed-form error per level, each level on freshly generated paths
    let mut closed = CsvTable::new(["n", "mesh", "engine_Pi_T", "closed_form_Pi_T", "abs_error"]);
    for level in 0..levels {
        let n = base << level;
        let mut engines = Vec::with_capacity(cfg.batch);
        let mut forms = Vec::with_capacity(cfg.batch);
        let mut errors = Vec::with_capacity(cfg.batch);
        let mut mesh = 0.0;
        for i in 0..cfg.batch {
            let prices = market_at_resolution(cfg, n, i as u64)?;
            mesh = prices.grid.mesh();
            let phi = feedback_strategy(&rule, &prices)?;
            let dividends = DividendPath::zero(&prices.grid);
            let engine = *tax_process_elementary(&phi, &prices, &dividends, cfg.alpha)?
                .right
                .last()
                .unwrap();
            let cf = *closed_form_tax(&rule, &prices, cfg.alpha, false)?
                .pi
                .last()
                .unwrap();
            engines.push(engine);
            forms.push(cf);
            errors.push((engine - cf).abs());
        }
        for v in [&mut engines, &mut forms, &mut errors] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        closed.push_floats([
            n as f64,
            mesh,
            quantile(&engines, 0.5),
            quantile(&forms, 0.5),
            quantile(&errors, 0.5),
        ]);
    }
    let closed_path = dir.join("closed_form.csv");
    closed.write(&closed_path)?;

    // Cauchy evidence: distance between tax flows of successive samplings on
    // the same fine path, quantiles over the batch
    let mut conv = CsvTable::new(["n", "mesh", "sup_distance_q50", "sup_distance_q95"]);
    if levels >= 2 {
        let fine = base << (levels - 1);
        let mut dists = vec![Vec::with_capacity(cfg.batch); levels - 1];
        for i in 0..cfg.batch {
            let prices = market_at_resolution(cfg, fine, i as u64)?;
            let dividends = DividendPath::zero(&prices.grid);
            let mut flows = Vec::with_capacity(levels);
            for level in 0..levels {
                let stride = 1usize << (levels - 1 - level);
                let phi = sampled_feedback(&rule, &prices, stride)?;
                flows.push(tax_process_elementary(&phi, &prices, &dividends, cfg.alpha)?);
            }
            for level in 0..levels - 1 {
                dists[level].push(flows[level].up_distance(&flows[level + 1])?);
            }
        }
        for (level, d) in dists.iter_mut().enumerate() {
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = base << (level + 1);
            conv.push_floats([
                n as f64,
                cfg.market_horizon() / fine as f64,
                quantile(d, 0.5),
                quantile(d, 0.95),
            ]);
        }
    }
    let conv_path = dir.join("convergence.csv");
    conv.write(&conv_path)?;
    println!(
        "{} levels x {} paths; reports in {}",
        levels,
        cfg.batch,
        dir.display()
    );
    write_manifest(
        &dir,
        "converge",
        cfg.seed,
        echo,
        &[closed_path, conv_path],
    )?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    passed: usize,
    failed: usize,
    checks: Vec<VerifyEntry>,
}

#[derive(Serialize)]
struct VerifyEntry {
    name: String,
    passed: bool,
    detail: String,
}

fn run_verify(cfg: &ExperimentConfig, echo: &str) -> Result<(), Failure> {
    let dir = ensure_out_dir(cfg)?;
    let results = run_all();
    let mut failed = 0usize;
    let mut entries = Vec::with_capacity(results.len());
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:<28} {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
        entries.push(VerifyEntry {
            name: r.name.to_string(),
            passed: r.passed,
            detail: r.detail.clone(),
        });
    }
    let report = VerifyReport {
        passed: results.len() - failed,
        failed,
        checks: entries,
    };
    let report_path = dir.join("verify.json");
    write_json(&report_path, &report)?;
    write_manifest(&dir, "verify", cfg.seed, echo, &[report_path])?;
    if failed > 0 {
        return Err(Failure::Violation(format!(
            "{failed} of {} checks failed",
            results.len()
        )));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}

/// Nearest-rank quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

trait MarketHorizon {
    fn market_horizon(&self) -> f64;
}

impl MarketHorizon for ExperimentConfig {
    fn market_horizon(&self) -> f64 {
        match &self.market {
            MarketSpec::Crr { horizon, .. }
            | MarketSpec::Gbm { horizon, .. }
            | MarketSpec::Jump { horizon, .. } => *horizon,
            MarketSpec::Explicit { times, prices } => times
                .as_ref()
                .and_then(|t| t.last().copied())
                .unwrap_or((prices.len() - 1) as f64),
            MarketSpec::Fixture(FixtureName::Figure2) => 4.0,
            MarketSpec::Fixture(FixtureName::Figure3) => 3.0,
        }
    }
}
