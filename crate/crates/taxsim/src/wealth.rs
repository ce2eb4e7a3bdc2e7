//! Self-financing wealth with taxed interest and dividend-policy comparison.
//!
//! A dividend model is a return process, a cumulative dividend process, and
//! an initial price; the cum-dividend price solves `S_k = S_{k-1}(1 + dR_k)
//! - dD_k` and is absorbed at zero. Holding the same return exposure without
//! dividends gives the twin price `S0`; mapping a strategy through the price
//! ratio preserves trading gains but defers taxation, which is why the
//! no-dividend wealth dominates pathwise when interest rates are nonnegative.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::{DividendPath, PricePath, RatePath, ReturnPath};
use crate::tax_flow::{tax_process_elementary, ElementaryStrategy, TaxFlow};

/// Return process, dividend process, and initial price defining a market.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendModel {
    pub returns: ReturnPath,
    pub dividends: DividendPath,
    pub s0: f64,
}

impl DividendModel {
    pub fn new(returns: ReturnPath, dividends: DividendPath, s0: f64) -> Result<Self> {
        if !returns.grid.same_grid(&dividends.grid) {
            return Err(Error::GridMismatch(
                "returns and dividends on different grids".into(),
            ));
        }
        if !(s0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("negative s0 {s0}")));
        }
        Ok(DividendModel {
            returns,
            dividends,
            s0,
        })
    }

    /// Same returns with all dividends suppressed.
    pub fn without_dividends(&self) -> DividendModel {
        DividendModel {
            returns: self.returns.clone(),
            dividends: DividendPath::zero(&self.returns.grid),
            s0: self.s0,
        }
    }
}

/// Cum-dividend price recursion `S_k = S_{k-1}(1 + dR_k) - dD_k`, with
/// `S_0 = s0 - D_0`, absorbed once it (or its left limit) hits zero.
/// A dividend exceeding the available price is inadmissible.
pub fn solve_dividend_sde(model: &DividendModel) -> Result<PricePath> {
    let grid = &model.returns.grid;
    let mut values = Vec::with_capacity(grid.len());
    let mut s = model.s0 - model.dividends.cumulative[0];
    if s < 0.0 {
        return Err(Error::InadmissibleDividend { index: 0, price: s });
    }
    values.push(s);
    for k in 1..grid.len() {
        if s > 0.0 {
            s = s * (1.0 + model.returns.increments[k - 1]) - model.dividends.increment(k);
        } else if model.dividends.increment(k) > 0.0 {
            s = -model.dividends.increment(k);
        }
        if s < 0.0 {
            return Err(Error::InadmissibleDividend { index: k, price: s });
        }
        values.push(s);
    }
    PricePath::new(grid.clone(), values)
}

/// True iff `S_D / S_0` (0 where `S_0` is absorbed) is nonincreasing, which
/// cum-dividend prices sharing the return process always satisfy. Also
/// cross-checks the explicit product form `S_D = S_0 * (1 - sum dD / S_0)`
/// reconstructed from the two paths.
pub fn ratio_monotone_check(s_d: &PricePath, s_0: &PricePath) -> Result<bool> {
    if !s_d.grid.same_grid(&s_0.grid) {
        return Err(Error::GridMismatch("prices on different grids".into()));
    }
    let mut prev = f64::INFINITY;
    let mut factor = 1.0; // running product-form factor
    for k in 0..s_d.len() {
        let ratio = if s_0.values[k] > 0.0 {
            s_d.values[k] / s_0.values[k]
        } else {
            0.0
        };
        if ratio > prev + 1e-12 {
            return Ok(false);
        }
        prev = ratio;
        if s_0.values[k] > 0.0 {
            // dD_k implied by the two paths sharing dR_k
            let dd = if k == 0 {
                s_0.values[0] - s_d.values[0]
            } else if s_0.values[k - 1] > 0.0 {
                s_d.values[k - 1] * s_0.values[k] / s_0.values[k - 1] - s_d.values[k]
            } else {
                0.0
            };
            factor -= dd / s_0.values[k];
            let reconstructed = s_0.values[k] * factor;
            let scale = s_0.values[k].abs().max(1.0);
            if (reconstructed - s_d.values[k]).abs() > 1e-9 * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Map a strategy on the dividend-paying asset to the no-dividend twin:
/// `phi0 = phiD * (S_D left limit / S_0 left limit)`, 0 after absorption.
/// Reinvesting the dividend stream this way replicates the trading gains.
pub fn map_strategy_no_dividends(
    phi_d: &ElementaryStrategy,
    s_d: &PricePath,
    s_0: &PricePath,
) -> Result<ElementaryStrategy> {
    if !phi_d.grid.same_grid(&s_d.grid) || !s_d.grid.same_grid(&s_0.grid) {
        return Err(Error::GridMismatch("strategy/price grids differ".into()));
    }
    let n = phi_d.grid.len();
    // left limit at index k is the value at k-1 for cadlag prices
    let ratio_left = |k: usize| {
        if k == 0 {
            1.0
        } else if s_0.values[k - 1] > 0.0 {
            s_d.values[k - 1] / s_0.values[k - 1]
        } else {
            0.0
        }
    };
    let phi: Vec<f64> = (0..n).map(|k| phi_d.value(k) * ratio_left(k)).collect();
    let terminal_ratio = if s_0.values[n - 1] > 0.0 {
        s_d.values[n - 1] / s_0.values[n - 1]
    } else {
        0.0
    };
    ElementaryStrategy::new(
        phi_d.grid.clone(),
        phi,
        phi_d.terminal() * terminal_ratio,
    )
}

/// Bank account and total wealth as laglad triples.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub grid: TimeGrid,
    pub x_left: Vec<f64>,
    pub x_at: Vec<f64>,
    pub x_right: Vec<f64>,
    pub v_left: Vec<f64>,
    pub v_at: Vec<f64>,
    pub v_right: Vec<f64>,
    pub alpha: f64,
    pub v0: f64,
}

/// Self-financing wealth: trades settle against the bank account at the
/// prevailing price, interest accrues left-point per interval and is taxed
/// immediately (factor `(1 - alpha) X r dt`), gross dividends arrive in X,
/// and all tax payments leave X at their jump times. `V = X + phi * S` on
/// every side.
pub fn self_financing_wealth(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    rates: &RatePath,
    alpha: f64,
    v0: f64,
) -> Result<WealthPath> {
    if !phi.grid.same_grid(&rates.grid) {
        return Err(Error::GridMismatch("rates on a different grid".into()));
    }
    let pi = tax_process_elementary(phi, prices, dividends, alpha)?;
    Ok(wealth_from_tax_flow(phi, prices, dividends, rates, &pi, alpha, v0))
}

pub(crate) fn wealth_from_tax_flow(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    rates: &RatePath,
    pi: &TaxFlow,
    alpha: f64,
    v0: f64,
) -> WealthPath {
    let n = phi.grid.len();
    let times = phi.grid.times();
    let s = &prices.values;
    let mut w = WealthPath {
        grid: phi.grid.clone(),
        x_left: Vec::with_capacity(n),
        x_at: Vec::with_capacity(n),
        x_right: Vec::with_capacity(n),
        v_left: Vec::with_capacity(n),
        v_at: Vec::with_capacity(n),
        v_right: Vec::with_capacity(n),
        alpha,
        v0,
    };
    let mut x = v0;
    for k in 0..n {
        let (x_left, x_at) = if k == 0 {
            (v0, v0)
        } else {
            let dt = times[k] - times[k - 1];
            let x_left = x + (1.0 - alpha) * x * rates.rates[k - 1] * dt;
            let x_at =
                x_left + phi.value(k) * dividends.increment(k) - (pi.at[k] - pi.left[k]);
            (x_left, x_at)
        };
        let x_right = x_at - s[k] * phi.delta_plus(k) - (pi.right[k] - pi.at[k]);
        let s_left = if k == 0 { s[0] } else { s[k - 1] };
        w.x_left.push(x_left);
        w.x_at.push(x_at);
        w.x_right.push(x_right);
        w.v_left.push(x_left + phi.value(k) * s_left);
        w.v_at.push(x_at + phi.value(k) * s[k]);
        w.v_right.push(x_right + phi.right_value(k) * s[k]);
        x = x_right;
    }
    w
}

/// Max absolute residual of the cumulative self-financing identity
/// `X_t = v0 - sum of trade costs + accrued taxed interest + dividend income
/// - Pi_t` against the recursion in [`self_financing_wealth`].
pub fn self_financing_residual(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    rates: &RatePath,
    alpha: f64,
    v0: f64,
) -> Result<f64> {
    let w = self_financing_wealth(phi, prices, dividends, rates, alpha, v0)?;
    let pi = tax_process_elementary(phi, prices, dividends, alpha)?;
    let times = phi.grid.times();
    let mut trades = 0.0;
    let mut interest = 0.0;
    let mut income = 0.0;
    let mut residual: f64 = 0.0;
    for k in 0..phi.grid.len() {
        if k > 0 {
            interest += (1.0 - alpha) * w.x_right[k - 1] * rates.rates[k - 1] * (times[k] - times[k - 1]);
            income += phi.value(k) * dividends.increment(k);
        }
        let x_at = v0 - trades + interest + income - pi.at[k];
        residual = residual.max((x_at - w.x_at[k]).abs());
        trades += prices.values[k] * phi.delta_plus(k);
        let x_right = v0 - trades + interest + income - pi.right[k];
        residual = residual.max((x_right - w.x_right[k]).abs());
    }
    Ok(residual)
}

/// Pathwise comparison of holding the dividend-paying asset against the
/// mapped strategy on the no-dividend twin.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendComparison {
    pub s_d: PricePath,
    pub s_0: PricePath,
    pub phi_0: ElementaryStrategy,
    pub pi_d: TaxFlow,
    pub pi_0: TaxFlow,
    pub wealth_d: WealthPath,
    pub wealth_0: WealthPath,
    /// min over grid points and sides of `V_0 - V_D`.
    pub min_wealth_gap: f64,
    pub max_wealth_gap: f64,
    /// min over grid points and sides of `Pi_D - Pi_0`.
    pub min_tax_gap: f64,
    /// grid points/sides where either gap drops below -1e-9.
    pub violations: usize,
}

pub fn compare_dividend_policies(
    phi_d: &ElementaryStrategy,
    model: &DividendModel,
    rates: &RatePath,
    alpha: f64,
    v0: f64,
) -> Result<DividendComparison> {
    let s_d = solve_dividend_sde(model)?;
    let s_0 = solve_dividend_sde(&model.without_dividends())?;
    let phi_0 = map_strategy_no_dividends(phi_d, &s_d, &s_0)?;
    let zero = DividendPath::zero(&s_0.grid);
    let pi_d = tax_process_elementary(phi_d, &s_d, &model.dividends, alpha)?;
    let pi_0 = tax_process_elementary(&phi_0, &s_0, &zero, alpha)?;
    let wealth_d = self_financing_wealth(phi_d, &s_d, &model.dividends, rates, alpha, v0)?;
    let wealth_0 = self_financing_wealth(&phi_0, &s_0, &zero, rates, alpha, v0)?;
    let mut min_wealth_gap = f64::INFINITY;
    let mut max_wealth_gap = f64::NEG_INFINITY;
    let mut min_tax_gap = f64::INFINITY;
    let mut violations = 0;
    for k in 0..s_d.len() {
        let sides = [
            (wealth_0.v_left[k] - wealth_d.v_left[k], pi_d.left[k] - pi_0.left[k]),
            (wealth_0.v_at[k] - wealth_d.v_at[k], pi_d.at[k] - pi_0.at[k]),
            (wealth_0.v_right[k] - wealth_d.v_right[k], pi_d.right[k] - pi_0.right[k]),
        ];
        for (wg, tg) in sides {
            min_wealth_gap = min_wealth_gap.min(wg);
            max_wealth_gap = max_wealth_gap.max(wg);
            min_tax_gap = min_tax_gap.min(tg);
            if wg < -1e-9 || tg < -1e-9 {
                violations += 1;
            }
        }
    }
    Ok(DividendComparison {
        s_d,
        s_0,
        phi_0,
        pi_d,
        pi_0,
        wealth_d,
        wealth_0,
        min_wealth_gap,
        max_wealth_gap,
        min_tax_gap,
        violations,
    })
}
