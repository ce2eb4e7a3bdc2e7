//! Experiment configuration: TOML parsing, validation, and realization of
//! the configured market, strategy, and rate objects.
//!
//! Parsing is strict: unknown keys are errors, and semantic validation
//! collects every violation (referenced by field path) instead of stopping
//! at the first. The named fixtures `figure2` and `figure3` provide the two
//! hand-checked ledger scenarios used throughout the test suite.

use serde::Deserialize;

use crate::efficient::FeedbackRule;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lot_ledger::DiscreteStrategy;
use crate::paths::{
    gen_crr_indexed, gen_gbm_indexed, gen_jump_diffusion, DividendPath, JumpLaw, PricePath,
    RatePath,
};
use crate::tax_flow::ElementaryStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ledger,
    Simulate,
    CompareDividends,
    Efficient,
    Converge,
    Verify,
}

impl ExperimentKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "ledger" => Some(Self::Ledger),
            "simulate" => Some(Self::Simulate),
            "compare-dividends" => Some(Self::CompareDividends),
            "efficient" => Some(Self::Efficient),
            "converge" => Some(Self::Converge),
            "verify" => Some(Self::Verify),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ledger => "ledger",
            Self::Simulate => "simulate",
            Self::CompareDividends => "compare-dividends",
            Self::Efficient => "efficient",
            Self::Converge => "converge",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureName {
    Figure2,
    Figure3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarketSpec {
    Crr {
        s0: f64,
        sigma: f64,
        steps: usize,
        horizon: f64,
    },
    Gbm {
        s0: f64,
        mu: f64,
        sigma: f64,
        steps: usize,
        horizon: f64,
    },
    Jump {
        s0: f64,
        mu: f64,
        sigma: f64,
        intensity: f64,
        jump_min: f64,
        jump_max: f64,
        steps: usize,
        horizon: f64,
    },
    Explicit {
        prices: Vec<f64>,
        times: Option<Vec<f64>>,
    },
    Fixture(FixtureName),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    /// Positions after trading at each grid time.
    Explicit(Vec<f64>),
    Feedback(FeedbackRule),
    BuyHold { shares: f64, liquidate: bool },
    Fixture(FixtureName),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergeParams {
    pub levels: usize,
    pub base_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub alpha: f64,
    pub seed: u64,
    pub batch: usize,
    pub out_dir: String,
    pub v0: f64,
    pub rate: f64,
    pub market: MarketSpec,
    pub strategy: StrategySpec,
    /// Cumulative dividends per share (explicit markets only).
    pub dividends: Option<Vec<f64>>,
    pub converge: ConvergeParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    alpha: Option<f64>,
    seed: Option<u64>,
    batch: Option<usize>,
    out_dir: Option<String>,
    v0: Option<f64>,
    market: Option<RawMarket>,
    strategy: Option<RawStrategy>,
    dividends: Option<RawDividends>,
    rates: Option<RawRates>,
    converge: Option<RawConverge>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    model: String,
    fixture: Option<String>,
    s0: Option<f64>,
    mu: Option<f64>,
    sigma: Option<f64>,
    intensity: Option<f64>,
    jump_min: Option<f64>,
    jump_max: Option<f64>,
    steps: Option<usize>,
    horizon: Option<f64>,
    prices: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: String,
    fixture: Option<String>,
    positions: Option<Vec<f64>>,
    rule: Option<String>,
    a: Option<f64>,
    b: Option<f64>,
    p: Option<f64>,
    points: Option<Vec<[f64; 2]>>,
    shares: Option<f64>,
    liquidate: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDividends {
    cumulative: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    constant: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverge {
    levels: Option<usize>,
    base_steps: Option<usize>,
}

fn parse_fixture(name: &str, field: &str, violations: &mut Vec<String>) -> Option<FixtureName> {
    match name {
        "figure2" => Some(FixtureName::Figure2),
        "figure3" => Some(FixtureName::Figure3),
        other => {
            violations.push(format!("{field}: unknown fixture \"{other}\""));
            None
        }
    }
}

/// Parse and fully validate a TOML experiment config. All semantic
/// violations are collected and reported together, referenced by field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut v: Vec<String> = Vec::new();

    let kind = ExperimentKind::parse(&raw.experiment).unwrap_or_else(|| {
        v.push(format!(
            "experiment: unknown kind \"{}\" (expected ledger | simulate | compare-dividends | efficient | converge | verify)",
            raw.experiment
        ));
        ExperimentKind::Verify
    });

    let alpha = raw.alpha.unwrap_or(0.25);
    if !(alpha > 0.0 && alpha < 1.0) {
        v.push(format!("alpha: must lie strictly between 0 and 1, got {alpha}"));
    }
    let batch = raw.batch.unwrap_or(100);
    if batch == 0 {
        v.push("batch: must be >= 1".into());
    }
    let v0 = raw.v0.unwrap_or(1000.0);
    let rate = match &raw.rates {
        Some(r) => {
            if !(r.constant >= 0.0) {
                v.push(format!("rates.constant: must be >= 0, got {}", r.constant));
            }
            r.constant
        }
        None => 0.0,
    };

    let market = match &raw.market {
        None => {
            v.push("market: section is required".into());
            MarketSpec::Fixture(FixtureName::Figure2)
        }
        Some(m) => build_market_spec(m, &mut v),
    };

    let strategy = match &raw.strategy {
        None => match &market {
            MarketSpec::Fixture(f) => StrategySpec::Fixture(*f),
            _ => {
                v.push("strategy: section is required for non-fixture markets".into());
                StrategySpec::BuyHold {
                    shares: 1.0,
                    liquidate: true,
                }
            }
        },
        Some(s) => build_strategy_spec(s, &mut v),
    };

    if let (MarketSpec::Fixture(mf), StrategySpec::Fixture(sf)) = (&market, &strategy) {
        if mf != sf {
            v.push("strategy.fixture: does not match market.fixture".into());
        }
    }

    let dividends = raw.dividends.as_ref().map(|d| d.cumulative.clone());
    if let Some(d) = &dividends {
        if !matches!(market, MarketSpec::Explicit { .. }) {
            v.push("dividends: only allowed with an explicit market".into());
        }
        if d.windows(2).any(|w| w[1] < w[0]) || d.first().is_some_and(|x| *x < 0.0) {
            v.push("dividends.cumulative: must be nonnegative and nondecreasing".into());
        }
    }

    let converge = ConvergeParams {
        levels: raw.converge.as_ref().and_then(|c| c.levels).unwrap_or(6),
        base_steps: raw
            .converge
            .as_ref()
            .and_then(|c| c.base_steps)
            .unwrap_or(50),
    };
    if converge.levels == 0 {
        v.push("converge.levels: must be >= 1".into());
    }
    if converge.base_steps == 0 {
        v.push("converge.base_steps: must be >= 1".into());
    }
    if kind == ExperimentKind::Converge && !matches!(strategy, StrategySpec::Feedback(_)) {
        v.push("strategy: converge experiments need a feedback rule".into());
    }

    if !v.is_empty() {
        return Err(Error::Config(v.join("\n")));
    }
    Ok(ExperimentConfig {
        kind,
        alpha,
        seed: raw.seed.unwrap_or(42),
        batch,
        out_dir: raw.out_dir.unwrap_or_else(|| "out".into()),
        v0,
        rate,
        market,
        strategy,
        dividends,
        converge,
    })
}

fn build_market_spec(m: &RawMarket, v: &mut Vec<String>) -> MarketSpec {
    let s0 = m.s0.unwrap_or(100.0);
    let sigma = m.sigma.unwrap_or(0.2);
    let steps = m.steps.unwrap_or(100);
    let horizon = m.horizon.unwrap_or(1.0);
    if !(s0 >= 0.0) {
        v.push(format!("market.s0: must be >= 0, got {s0}"));
    }
    if !(sigma >= 0.0) {
        v.push(format!("market.sigma: must be >= 0, got {sigma}"));
    }
    if steps == 0 {
        v.push("market.steps: must be >= 1".into());
    }
    if !(horizon > 0.0) {
        v.push(format!("market.horizon: must be > 0, got {horizon}"));
    }
    match m.model.as_str() {
        "crr" => MarketSpec::Crr {
            s0,
            sigma,
            steps,
            horizon,
        },
        "gbm" => MarketSpec::Gbm {
            s0,
            mu: m.mu.unwrap_or(0.0),
            sigma,
            steps,
            horizon,
        },
        "jump" => {
            let jump_min = m.jump_min.unwrap_or(-0.1);
            let jump_max = m.jump_max.unwrap_or(0.1);
            let intensity = m.intensity.unwrap_or(1.0);
            if !(jump_min > -1.0) || jump_max < jump_min {
                v.push("market.jump_min/jump_max: need -1 < jump_min <= jump_max".into());
            }
            if !(intensity >= 0.0) {
                v.push(format!("market.intensity: must be >= 0, got {intensity}"));
            }
            MarketSpec::Jump {
                s0,
                mu: m.mu.unwrap_or(0.0),
                sigma,
                intensity,
                jump_min,
                jump_max,
                steps,
                horizon,
            }
        }
        "explicit" => {
            let prices = m.prices.clone().unwrap_or_else(|| {
                v.push("market.prices: required for explicit model".into());
                vec![1.0, 1.0]
            });
            if prices.len() < 2 {
                v.push("market.prices: need at least 2 values".into());
            }
            if prices.iter().any(|p| !(*p >= 0.0)) {
                v.push("market.prices: all values must be >= 0".into());
            }
            if let Some(times) = &m.times {
                if times.len() != prices.len() {
                    v.push("market.times: length must match market.prices".into());
                }
            }
            MarketSpec::Explicit {
                prices,
                times: m.times.clone(),
            }
        }
        "fixture" => match &m.fixture {
            Some(name) => parse_fixture(name, "market.fixture", v)
                .map(MarketSpec::Fixture)
                .unwrap_or(MarketSpec::Fixture(FixtureName::Figure2)),
            None => {
                v.push("market.fixture: required for fixture model".into());
                MarketSpec::Fixture(FixtureName::Figure2)
            }
        },
        other => {
            v.push(format!(
                "market.model: unknown model \"{other}\" (expected crr | gbm | jump | explicit | fixture)"
            ));
            MarketSpec::Fixture(FixtureName::Figure2)
        }
    }
}

fn build_strategy_spec(s: &RawStrategy, v: &mut Vec<String>) -> StrategySpec {
    match s.kind.as_str() {
        "explicit" => {
            let positions = s.positions.clone().unwrap_or_else(|| {
                v.push("strategy.positions: required for explicit strategies".into());
                vec![0.0]
            });
            if positions.iter().any(|p| !(*p >= 0.0)) {
                v.push("strategy.positions: short selling is forbidden (negative entry)".into());
            }
            StrategySpec::Explicit(positions)
        }
        "feedback" => {
            let rule = match s.rule.as_deref() {
                Some("linear") => FeedbackRule::Linear {
                    a: s.a.unwrap_or(1.0),
                    b: s.b.unwrap_or(0.0),
                },
                Some("power") => FeedbackRule::Power {
                    a: s.a.unwrap_or(1.0),
                    p: s.p.unwrap_or(1.0),
                },
                Some("tabulated") => FeedbackRule::Tabulated {
                    points: s
                        .points
                        .clone()
                        .unwrap_or_else(|| {
                            v.push("strategy.points: required for tabulated rules".into());
                            vec![[0.0, 0.0], [1.0, 1.0]]
                        })
                        .into_iter()
                        .map(|[a, b]| (a, b))
                        .collect(),
                },
                Some(other) => {
                    v.push(format!(
                        "strategy.rule: unknown rule \"{other}\" (expected linear | power | tabulated)"
                    ));
                    FeedbackRule::Linear { a: 1.0, b: 0.0 }
                }
                None => {
                    v.push("strategy.rule: required for feedback strategies".into());
                    FeedbackRule::Linear { a: 1.0, b: 0.0 }
                }
            };
            if let Err(e) = rule.validate() {
                v.push(format!("strategy: {e}"));
            }
            StrategySpec::Feedback(rule)
        }
        "buy-hold" => {
            let shares = s.shares.unwrap_or(1.0);
            if !(shares >= 0.0) {
                v.push(format!("strategy.shares: must be >= 0, got {shares}"));
            }
            StrategySpec::BuyHold {
                shares,
                liquidate: s.liquidate.unwrap_or(true),
            }
        }
        "fixture" => match &s.fixture {
            Some(name) => parse_fixture(name, "strategy.fixture", v)
                .map(StrategySpec::Fixture)
                .unwrap_or(StrategySpec::Fixture(FixtureName::Figure2)),
            None => {
                v.push("strategy.fixture: required for fixture strategies".into());
                StrategySpec::Fixture(FixtureName::Figure2)
            }
        },
        other => {
            v.push(format!(
                "strategy.kind: unknown kind \"{other}\" (expected explicit | feedback | buy-hold | fixture)"
            ));
            StrategySpec::BuyHold {
                shares: 1.0,
                liquidate: true,
            }
        }
    }
}

/// Prices and cumulative dividends of the named fixture.
pub fn fixture_market(name: FixtureName) -> (PricePath, DividendPath) {
    match name {
        FixtureName::Figure2 => {
            let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
            let prices =
                PricePath::new(grid.clone(), vec![100.0, 103.0, 104.0, 105.0, 102.0]).unwrap();
            (prices, DividendPath::zero(&grid))
        }
        FixtureName::Figure3 => {
            let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
            let prices =
                PricePath::new(grid.clone(), vec![4500.0, 5500.0, 5800.0, 4800.0]).unwrap();
            let dividends =
                DividendPath::new(grid, vec![0.0, 0.0, 0.0, 1000.0]).unwrap();
            (prices, dividends)
        }
    }
}

/// Positions after trading at each grid time for the named fixture.
pub fn fixture_strategy(name: FixtureName) -> DiscreteStrategy {
    match name {
        FixtureName::Figure2 => {
            DiscreteStrategy::new(vec![9.0, 10.0, 14.0, 10.0, 10.0]).unwrap()
        }
        FixtureName::Figure3 => DiscreteStrategy::new(vec![45.0, 100.0, 100.0, 120.0]).unwrap(),
    }
}

impl ExperimentConfig {
    /// Realize the configured market for one Monte Carlo path index.
    pub fn market_path(&self, path_index: u64) -> Result<(PricePath, DividendPath)> {
        let prices = match &self.market {
            MarketSpec::Crr {
                s0,
                sigma,
                steps,
                horizon,
            } => gen_crr_indexed(*s0, *sigma, *steps, *horizon, self.seed, path_index)?,
            MarketSpec::Gbm {
                s0,
                mu,
                sigma,
                steps,
                horizon,
            } => gen_gbm_indexed(*s0, *mu, *sigma, *steps, *horizon, self.seed, path_index)?,
            MarketSpec::Jump {
                s0,
                mu,
                sigma,
                intensity,
                jump_min,
                jump_max,
                steps,
                horizon,
            } => gen_jump_diffusion(
                *s0,
                *mu,
                *sigma,
                *intensity,
                JumpLaw {
                    min: *jump_min,
                    max: *jump_max,
                },
                *steps,
                *horizon,
                self.seed.wrapping_add(path_index),
            )?,
            MarketSpec::Explicit { prices, times } => {
                let grid = match times {
                    Some(t) => TimeGrid::new(t.clone())?,
                    None => TimeGrid::uniform(prices.len() - 1, (prices.len() - 1) as f64)?,
                };
                PricePath::new(grid, prices.clone())?
            }
            MarketSpec::Fixture(f) => return Ok(fixture_market(*f)),
        };
        let dividends = match &self.dividends {
            Some(cumulative) => DividendPath::new(prices.grid.clone(), cumulative.clone())?,
            None => DividendPath::zero(&prices.grid),
        };
        Ok((prices, dividends))
    }

    /// Realize the configured strategy on a concrete price path.
    pub fn strategy(&self, prices: &PricePath) -> Result<ElementaryStrategy> {
        match &self.strategy {
            StrategySpec::Explicit(positions) => {
                let d = DiscreteStrategy::new(positions.clone())?;
                ElementaryStrategy::from_discrete(&d, &prices.grid)
            }
            StrategySpec::Feedback(rule) => crate::efficient::feedback_strategy(rule, prices),
            StrategySpec::BuyHold { shares, liquidate } => {
                ElementaryStrategy::buy_and_hold(prices.grid.clone(), *shares, *liquidate)
            }
            StrategySpec::Fixture(f) => {
                ElementaryStrategy::from_discrete(&fixture_strategy(*f), &prices.grid)
            }
        }
    }

    pub fn rates(&self, grid: &TimeGrid) -> Result<RatePath> {
        RatePath::constant(grid, self.rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ledger_config_fills_defaults() {
        let cfg = parse_config(
            r#"
experiment = "ledger"

[market]
model = "fixture"
fixture = "figure2"
"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Ledger);
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.batch, 100);
        assert_eq!(cfg.strategy, StrategySpec::Fixture(FixtureName::Figure2));
        let (prices, d) = cfg.market_path(0).unwrap();
        assert_eq!(prices.values, vec![100.0, 103.0, 104.0, 105.0, 102.0]);
        assert!(d.is_zero());
        let phi = cfg.strategy(&prices).unwrap();
        assert_eq!(phi.values(), &[0.0, 9.0, 10.0, 14.0, 10.0]);
    }

    #[test]
    fn alpha_bound_violation_is_named() {
        let err = parse_config(
            r#"
experiment = "ledger"
alpha = 1.2

[market]
model = "fixture"
fixture = "figure2"
"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha"), "{msg}");
        assert!(msg.contains("between 0 and 1"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(
            r#"
experiment = "ledger"
alpah = 0.2

[market]
model = "fixture"
fixture = "figure2"
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn all_violations_reported_together() {
        let err = parse_config(
            r#"
experiment = "nope"
alpha = -3
batch = 0

[market]
model = "mystery"
"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        for needle in ["experiment", "alpha", "batch", "market.model"] {
            assert!(msg.contains(needle), "missing {needle} in {msg}");
        }
    }

    #[test]
    fn explicit_market_and_strategy() {
        let cfg = parse_config(
            r#"
experiment = "simulate"
alpha = 0.4

[market]
model = "explicit"
prices = [100.0, 103.0, 101.0]

[strategy]
kind = "explicit"
positions = [1.0, 2.0, 0.0]

[dividends]
cumulative = [0.0, 0.0, 1.0]
"#,
        )
        .unwrap();
        let (prices, d) = cfg.market_path(0).unwrap();
        assert_eq!(prices.values, vec![100.0, 103.0, 101.0]);
        assert_eq!(d.increment(2), 1.0);
        let phi = cfg.strategy(&prices).unwrap();
        assert_eq!(phi.terminal(), 0.0);
    }

    #[test]
    fn feedback_rule_round_trip() {
        let cfg = parse_config(
            r#"
experiment = "converge"

[market]
model = "crr"
sigma = 0.2
steps = 50

[strategy]
kind = "feedback"
rule = "linear"
a = 1.0
"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.strategy,
            StrategySpec::Feedback(FeedbackRule::Linear { a, b }) if a == 1.0 && b == 0.0
        ));
        let (prices, _) = cfg.market_path(3).unwrap();
        assert_eq!(prices.len(), 51);
    }

    #[test]
    fn seeded_market_reproducible_per_index() {
        let cfg = parse_config(
            r#"
experiment = "simulate"

[market]
model = "gbm"
sigma = 0.3

[strategy]
kind = "buy-hold"
shares = 2.0
"#,
        )
        .unwrap();
        let (a, _) = cfg.market_path(7).unwrap();
        let (b, _) = cfg.market_path(7).unwrap();
        let (c, _) = cfg.market_path(8).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }
}
