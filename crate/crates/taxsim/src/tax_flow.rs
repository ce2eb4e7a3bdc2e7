//! Tax payment flow of elementary strategies on a grid.
//!
//! A caglad strategy `phi` holds `phi[k]` shares on `(t_{k-1}, t_k]` and
//! trades at grid times: the position entering force right after `t_k` is
//! `phi[k+1]` (or the terminal value after the last grid point). The
//! accumulated tax flow is laglad: at each grid time it carries a left value,
//! a value, and a right value. The left jump books wash-sale credits and
//! dividend taxes, the right jump books the gains realized by a sale.
//!
//! [`tax_process_elementary`] maintains the book profit profile as a deque
//! of constant segments with a lazy price offset and runs in O(n) amortized.
//! [`tax_process_via_identity`] recomputes every book profit profile from
//! scratch from the purchasing times and derives the flow from trading gains
//! minus outstanding book profits; the two constructions must agree to
//! 1e-10, which the verification suite checks on every fixture.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lot_ledger::{check_alpha, BookProfitFunction, DiscreteStrategy, Segment};
use crate::paths::{DividendPath, PricePath};

/// Nonnegative caglad step strategy: `phi[k]` shares held on `(t_{k-1}, t_k]`,
/// `phi[0] = 0`, and `terminal` shares carried past the horizon (the right
/// limit at T; 0 means full liquidation at T).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryStrategy {
    pub grid: TimeGrid,
    phi: Vec<f64>,
    terminal: f64,
}

impl ElementaryStrategy {
    pub fn new(grid: TimeGrid, phi: Vec<f64>, terminal: f64) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::InvalidStrategy(format!(
                "expected {} values, got {}",
                grid.len(),
                phi.len()
            )));
        }
        if phi[0] != 0.0 {
            return Err(Error::InvalidStrategy(format!(
                "position at time 0 must be 0, got {}",
                phi[0]
            )));
        }
        if let Some(p) = phi.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidStrategy(format!("negative position {p}")));
        }
        if !(terminal >= 0.0) {
            return Err(Error::InvalidStrategy(format!(
                "negative terminal position {terminal}"
            )));
        }
        Ok(ElementaryStrategy {
            grid,
            phi,
            terminal,
        })
    }

    /// Hold `shares` on (0, T], optionally liquidating at T.
    pub fn buy_and_hold(grid: TimeGrid, shares: f64, liquidate: bool) -> Result<Self> {
        let mut phi = vec![shares; grid.len()];
        phi[0] = 0.0;
        let terminal = if liquidate { 0.0 } else { shares };
        ElementaryStrategy::new(grid, phi, terminal)
    }

    /// Embed a discrete-time strategy (positions after trading at 0..T).
    pub fn from_discrete(d: &DiscreteStrategy, grid: &TimeGrid) -> Result<Self> {
        if d.phi.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} positions vs {} grid points",
                d.phi.len(),
                grid.len()
            )));
        }
        let mut phi = Vec::with_capacity(grid.len());
        phi.push(0.0);
        phi.extend_from_slice(&d.phi[..d.phi.len() - 1]);
        ElementaryStrategy::new(grid.clone(), phi, *d.phi.last().unwrap())
    }

    /// Positions after trading at each grid time (inverse of [`Self::from_discrete`]).
    pub fn to_discrete(&self) -> DiscreteStrategy {
        let mut phi: Vec<f64> = self.phi[1..].to_vec();
        phi.push(self.terminal);
        DiscreteStrategy { phi }
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn value(&self, k: usize) -> f64 {
        self.phi[k]
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    /// Right limit at grid index `k`.
    pub fn right_value(&self, k: usize) -> f64 {
        if k + 1 < self.phi.len() {
            self.phi[k + 1]
        } else {
            self.terminal
        }
    }

    /// Right jump at grid index `k`.
    pub fn delta_plus(&self, k: usize) -> f64 {
        self.right_value(k) - self.phi[k]
    }

    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidStrategy(format!(
                "negative scale factor {lambda}"
            )));
        }
        ElementaryStrategy::new(
            self.grid.clone(),
            self.phi.iter().map(|p| p * lambda).collect(),
            self.terminal * lambda,
        )
    }

    pub fn add(&self, other: &ElementaryStrategy) -> Result<Self> {
        if !self.grid.same_grid(&other.grid) {
            return Err(Error::GridMismatch("cannot add strategies".into()));
        }
        ElementaryStrategy::new(
            self.grid.clone(),
            self.phi
                .iter()
                .zip(&other.phi)
                .map(|(a, b)| a + b)
                .collect(),
            self.terminal + other.terminal,
        )
    }

    /// sup over grid points and right limits of |phi - other|.
    pub fn sup_distance(&self, other: &ElementaryStrategy) -> f64 {
        let mut d: f64 = (self.terminal - other.terminal).abs();
        for (a, b) in self.phi.iter().zip(&other.phi) {
            d = d.max((a - b).abs());
        }
        d
    }
}

/// Sample a left-continuous function at the grid points (position 0 at time 0,
/// right limit at T equal to the last sample, i.e. no terminal liquidation).
pub fn approximate_strategy<F: Fn(f64) -> f64>(
    sampler: F,
    grid: &TimeGrid,
) -> Result<ElementaryStrategy> {
    let mut phi = Vec::with_capacity(grid.len());
    phi.push(0.0);
    for t in &grid.times()[1..] {
        let v = sampler(*t);
        if !(v >= 0.0) {
            return Err(Error::InvalidStrategy(format!(
                "sampler returned {v} at time {t}"
            )));
        }
        phi.push(v);
    }
    let terminal = *phi.last().unwrap();
    ElementaryStrategy::new(grid.clone(), phi, terminal)
}

/// Accumulated tax payments as a laglad triple on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxFlow {
    pub grid: TimeGrid,
    pub left: Vec<f64>,
    pub at: Vec<f64>,
    pub right: Vec<f64>,
}

impl TaxFlow {
    /// max over grid points and over {left, at, right} of |self - other|.
    pub fn up_distance(&self, other: &TaxFlow) -> Result<f64> {
        if !self.grid.same_grid(&other.grid) {
            return Err(Error::GridMismatch("tax flows on different grids".into()));
        }
        let mut d: f64 = 0.0;
        for k in 0..self.left.len() {
            d = d.max((self.left[k] - other.left[k]).abs());
            d = d.max((self.at[k] - other.at[k]).abs());
            d = d.max((self.right[k] - other.right[k]).abs());
        }
        Ok(d)
    }
}

/// Grid index at which the x-th share (counted from the latest purchase) of
/// the time-`t` portfolio was bought; `t` itself when x exceeds the position.
/// Nonincreasing in x on (0, phi_t].
pub fn purchase_time(phi: &ElementaryStrategy, t: usize, x: f64) -> usize {
    let level = phi.value(t);
    if x > level {
        return t;
    }
    let target = level - x;
    // phi[0] = 0 <= target, so the maximum exists
    (0..=t).rev().find(|&k| phi.value(k) <= target).unwrap()
}

/// Book profit of the x-th share at time `t`: current price minus the
/// wash-sale-adjusted basis (running minimum since purchase). 0 beyond the
/// position.
pub fn book_profit(phi: &ElementaryStrategy, prices: &PricePath, t: usize, x: f64) -> f64 {
    if x > phi.value(t) || x <= 0.0 {
        return 0.0;
    }
    let tau = purchase_time(phi, t, x);
    prices.values[t] - prices.min_on(tau, t)
}

/// Segment profile of x -> price - basis over (0, level] built from scratch:
/// for each purchase epoch k (scanning backwards) the shares with index in
/// (level - min phi on [k+1..], level - min phi on [k..]] were bought at k and
/// carry profit `prices[t] - min prices on [k..t]`.
fn segments_at_level(phi_values: &[f64], prices: &[f64], level: f64) -> BookProfitFunction {
    let t = phi_values.len() - 1;
    debug_assert_eq!(prices.len(), phi_values.len());
    let mut segments = Vec::new();
    let mut min_phi = f64::INFINITY;
    let mut min_s = f64::INFINITY;
    let mut prev = 0.0;
    let mut stack = Vec::new();
    for k in (0..=t).rev() {
        min_phi = min_phi.min(phi_values[k]);
        min_s = min_s.min(prices[k]);
        let threshold = (level - min_phi).max(prev);
        if threshold > prev {
            stack.push(Segment {
                width: threshold - prev,
                profit: prices[t] - min_s,
            });
            prev = threshold;
        }
    }
    // scanned newest-to-oldest; x runs in the same direction, so keep order
    segments.extend(stack);
    BookProfitFunction { segments }
}

/// Book profit function at time `t` (before the time-`t+` regrouping).
pub fn book_profit_function(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    t: usize,
) -> Result<BookProfitFunction> {
    check_grids(phi, prices, t)?;
    Ok(segments_at_level(
        &phi.values()[..=t],
        &prices.values[..=t],
        phi.value(t),
    ))
}

/// Book profit function right after the time-`t` regrouping: new shares enter
/// at zero profit, sold shares (latest first) leave.
pub fn book_profit_function_right(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    t: usize,
) -> Result<BookProfitFunction> {
    check_grids(phi, prices, t)?;
    Ok(segments_at_level(
        &phi.values()[..=t],
        &prices.values[..=t],
        phi.right_value(t),
    ))
}

/// Exact integral of the book profit function over (0, phi_t].
pub fn book_profit_integral(phi: &ElementaryStrategy, prices: &PricePath, t: usize) -> Result<f64> {
    Ok(book_profit_function(phi, prices, t)?.integral())
}

fn check_grids(phi: &ElementaryStrategy, prices: &PricePath, t: usize) -> Result<()> {
    if !phi.grid.same_grid(&prices.grid) {
        return Err(Error::GridMismatch(
            "strategy and prices on different grids".into(),
        ));
    }
    if t >= phi.grid.len() {
        return Err(Error::InvalidParameter(format!(
            "index {t} beyond grid of length {}",
            phi.grid.len()
        )));
    }
    Ok(())
}

fn check_dividends(prices: &PricePath, dividends: &DividendPath) -> Result<()> {
    if !prices.grid.same_grid(&dividends.grid) {
        return Err(Error::GridMismatch(
            "dividends and prices on different grids".into(),
        ));
    }
    Ok(())
}

/// Book profit profile maintained incrementally: segments hold profits
/// relative to `offset`, newest (lowest-profit) at the front.
struct ProfitDeque {
    segments: VecDeque<Segment>,
    offset: f64,
}

impl ProfitDeque {
    fn new() -> Self {
        ProfitDeque {
            segments: VecDeque::new(),
            offset: 0.0,
        }
    }

    /// Wash sales after a price move: clamp every negative effective profit
    /// to zero and return the (nonpositive) realized amount.
    fn wash(&mut self) -> f64 {
        let mut realized = 0.0;
        let mut washed_width = 0.0;
        while let Some(front) = self.segments.front() {
            if front.profit + self.offset < 0.0 {
                realized += front.width * (front.profit + self.offset);
                washed_width += front.width;
                self.segments.pop_front();
            } else {
                break;
            }
        }
        if washed_width > 0.0 {
            self.segments.push_front(Segment {
                width: washed_width,
                profit: -self.offset,
            });
        }
        realized
    }

    /// Sell `amount` shares, newest first; returns the realized book profit.
    fn sell(&mut self, mut amount: f64) -> f64 {
        let mut realized = 0.0;
        while amount > 0.0 {
            let Some(front) = self.segments.front_mut() else {
                break;
            };
            let sold = front.width.min(amount);
            realized += sold * (front.profit + self.offset);
            front.width -= sold;
            amount -= sold;
            if front.width <= 0.0 {
                self.segments.pop_front();
            }
        }
        realized
    }

    fn buy(&mut self, amount: f64) {
        if amount > 0.0 {
            self.segments.push_front(Segment {
                width: amount,
                profit: -self.offset,
            });
        }
    }
}

/// Laglad accumulated tax flow of an elementary strategy: sales realize the
/// book profit of the latest purchases in the right jump, wash-sale credits
/// and dividend taxes arrive in the left jump.
pub fn tax_process_elementary(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    alpha: f64,
) -> Result<TaxFlow> {
    check_alpha(alpha)?;
    check_grids(phi, prices, 0)?;
    check_dividends(prices, dividends)?;
    let n = phi.grid.len();
    let mut left = Vec::with_capacity(n);
    let mut at = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut deque = ProfitDeque::new();
    let mut acc = 0.0;
    for k in 0..n {
        if k == 0 {
            left.push(0.0);
            at.push(0.0);
        } else {
            left.push(acc);
            deque.offset += prices.values[k] - prices.values[k - 1];
            acc += alpha * deque.wash();
            acc += alpha * phi.value(k) * dividends.increment(k);
            at.push(acc);
        }
        let jump = phi.delta_plus(k);
        if jump < 0.0 {
            acc += alpha * deque.sell(-jump);
        } else {
            deque.buy(jump);
        }
        right.push(acc);
    }
    Ok(TaxFlow {
        grid: phi.grid.clone(),
        left,
        at,
        right,
    })
}

/// Same tax flow from the identity "taxed trading gains = outstanding book
/// profits + accumulated taxes": each value is alpha times the grid sums of
/// phi dS and phi dD minus alpha times the matching book profit integral.
/// Independent of [`tax_process_elementary`]; must agree to 1e-10.
pub fn tax_process_via_identity(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    alpha: f64,
) -> Result<TaxFlow> {
    check_alpha(alpha)?;
    check_grids(phi, prices, 0)?;
    check_dividends(prices, dividends)?;
    let n = phi.grid.len();
    let s = &prices.values;
    let mut left = Vec::with_capacity(n);
    let mut at = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut gains = 0.0; // sum of phi_u (dS_u + dD_u) up to the current index
    for k in 0..n {
        if k == 0 {
            left.push(0.0);
        } else {
            // value just before k: price still S_{k-1}, position already phi_k
            let f = segments_at_level(&phi.values()[..k], &s[..k], phi.value(k));
            left.push(alpha * gains - alpha * f.integral());
            gains += phi.value(k) * (s[k] - s[k - 1] + dividends.increment(k));
        }
        let f_at = segments_at_level(&phi.values()[..=k], &s[..=k], phi.value(k));
        at.push(alpha * gains - alpha * f_at.integral());
        let f_right = segments_at_level(&phi.values()[..=k], &s[..=k], phi.right_value(k));
        right.push(alpha * gains - alpha * f_right.integral());
    }
    Ok(TaxFlow {
        grid: phi.grid.clone(),
        left,
        at,
        right,
    })
}

/// Left and right jumps of the tax flow at grid index `t`: the left jump is
/// the wash-sale credit plus the dividend tax, the right jump the sale tax.
pub fn jump_decomposition(
    phi: &ElementaryStrategy,
    prices: &PricePath,
    dividends: &DividendPath,
    alpha: f64,
    t: usize,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    check_grids(phi, prices, t)?;
    check_dividends(prices, dividends)?;
    let delta_minus = if t == 0 {
        0.0
    } else {
        let f_prev = book_profit_function_right(phi, prices, t - 1)?;
        let ds = prices.values[t] - prices.values[t - 1];
        let wash: f64 = f_prev
            .segments
            .iter()
            .map(|seg| seg.width * (seg.profit + ds).min(0.0))
            .sum();
        alpha * wash + alpha * phi.value(t) * dividends.increment(t)
    };
    let sold = (-phi.delta_plus(t)).max(0.0);
    let f_at = book_profit_function(phi, prices, t)?;
    let mut remaining = sold;
    let mut realized = 0.0;
    for seg in &f_at.segments {
        if remaining <= 0.0 {
            break;
        }
        let w = seg.width.min(remaining);
        realized += w * seg.profit;
        remaining -= w;
    }
    Ok((delta_minus, alpha * realized))
}

/// Result of the book-profit stability bound: the integral difference is
/// controlled by three oscillations of the price times the strategy distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// |integral F - integral F~| <= 3 * sup|phi - phi~| * (sup S - inf S) on [0, t].
pub fn stability_bound_check(
    phi: &ElementaryStrategy,
    phi_tilde: &ElementaryStrategy,
    prices: &PricePath,
    t: usize,
) -> Result<StabilityCheck> {
    check_grids(phi, prices, t)?;
    check_grids(phi_tilde, prices, t)?;
    let lhs = (book_profit_integral(phi, prices, t)? - book_profit_integral(phi_tilde, prices, t)?)
        .abs();
    let eps = (0..=t)
        .map(|k| (phi.value(k) - phi_tilde.value(k)).abs())
        .fold(0.0, f64::max);
    let osc = prices.max_on(0, t) - prices.min_on(0, t);
    let rhs = 3.0 * eps * osc;
    Ok(StabilityCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lot_ledger::ledger_replay;
    use proptest::prelude::*;

    fn fig2() -> (ElementaryStrategy, PricePath) {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let prices =
            PricePath::new(grid.clone(), vec![100.0, 103.0, 104.0, 105.0, 102.0]).unwrap();
        let d = DiscreteStrategy::new(vec![9.0, 10.0, 14.0, 10.0, 10.0]).unwrap();
        let phi = ElementaryStrategy::from_discrete(&d, &grid).unwrap();
        (phi, prices)
    }

    #[test]
    fn discrete_round_trip() {
        let (phi, _) = fig2();
        assert_eq!(phi.values(), &[0.0, 9.0, 10.0, 14.0, 10.0]);
        assert_eq!(phi.terminal(), 10.0);
        let d = phi.to_discrete();
        assert_eq!(d.phi, vec![9.0, 10.0, 14.0, 10.0, 10.0]);
    }

    #[test]
    fn purchase_time_examples() {
        let (phi, _) = fig2();
        // beyond the position
        assert_eq!(purchase_time(&phi, 2, 11.0), 2);
        // the tenth share of the time-2 portfolio was bought at time 1
        assert_eq!(purchase_time(&phi, 2, 0.5), 1);
        // the whole position dates back to the first purchase
        assert_eq!(purchase_time(&phi, 2, 10.0), 0);
        assert_eq!(purchase_time(&phi, 4, 0.5), 1);
        assert_eq!(purchase_time(&phi, 4, 2.0), 0);
    }

    #[test]
    fn purchase_time_nonincreasing_in_x() {
        let (phi, _) = fig2();
        for t in 0..5 {
            let mut prev = usize::MAX;
            for i in 0..=40 {
                let x = phi.value(t) * i as f64 / 40.0 + 1e-9;
                let tau = purchase_time(&phi, t, x.min(phi.value(t)));
                assert!(tau <= prev);
                prev = tau;
            }
        }
    }

    #[test]
    fn book_profit_examples() {
        let (phi, prices) = fig2();
        assert_eq!(book_profit(&phi, &prices, 4, 0.5), 0.0);
        assert_eq!(book_profit(&phi, &prices, 4, 1.0), 0.0);
        assert_eq!(book_profit(&phi, &prices, 4, 1.5), 2.0);
        assert_eq!(book_profit(&phi, &prices, 4, 10.0), 2.0);
        assert_eq!(book_profit(&phi, &prices, 4, 10.5), 0.0);
        // nondecreasing prices: profit is price minus purchase price
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let up = PricePath::new(grid.clone(), vec![100.0, 101.0, 103.0]).unwrap();
        let hold = ElementaryStrategy::buy_and_hold(grid, 1.0, false).unwrap();
        assert_eq!(book_profit(&hold, &up, 2, 1.0), 3.0);
    }

    #[test]
    fn book_profit_integral_fig2() {
        let (phi, prices) = fig2();
        assert_eq!(book_profit_integral(&phi, &prices, 4).unwrap(), 18.0);
        let f = book_profit_function(&phi, &prices, 4).unwrap();
        let widths: Vec<f64> = f.segments.iter().map(|s| s.width).collect();
        let profits: Vec<f64> = f.segments.iter().map(|s| s.profit).collect();
        assert_eq!(widths, vec![1.0, 9.0]);
        assert_eq!(profits, vec![0.0, 2.0]);
        // empty strategy
        let zero = phi.scale(0.0).unwrap();
        assert_eq!(book_profit_integral(&zero, &prices, 4).unwrap(), 0.0);
    }

    #[test]
    fn fig2_tax_flow_triple() {
        let (phi, prices) = fig2();
        let a = 0.25;
        let d = DividendPath::zero(&phi.grid);
        let pi = tax_process_elementary(&phi, &prices, &d, a).unwrap();
        let close = |u: &[f64], v: [f64; 5]| {
            u.iter()
                .zip(v)
                .for_each(|(x, y)| assert!((x - y).abs() < 1e-12, "{u:?} vs {v:?}"))
        };
        close(&pi.left, [0.0, 0.0, 0.0, 0.0, 4.0 * a]);
        close(&pi.at, [0.0, 0.0, 0.0, 0.0, 3.0 * a]);
        close(&pi.right, [0.0, 0.0, 0.0, 4.0 * a, 3.0 * a]);
    }

    #[test]
    fn fig2_jump_decomposition() {
        let (phi, prices) = fig2();
        let a = 0.25;
        let d = DividendPath::zero(&phi.grid);
        let (dm3, dp3) = jump_decomposition(&phi, &prices, &d, a, 3).unwrap();
        assert_eq!(dm3, 0.0);
        assert!((dp3 - 4.0 * a).abs() < 1e-12);
        let (dm4, dp4) = jump_decomposition(&phi, &prices, &d, a, 4).unwrap();
        assert!((dm4 + a).abs() < 1e-12);
        assert_eq!(dp4, 0.0);
    }

    #[test]
    fn non_additivity_fixture() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let prices = PricePath::new(grid.clone(), vec![100.0, 105.0]).unwrap();
        let d = DividendPath::zero(&grid);
        let a = 0.3;
        // sell everything at time 1
        let phi1 = ElementaryStrategy::new(grid.clone(), vec![0.0, 1.0], 0.0).unwrap();
        // buy at time 1
        let phi2 = ElementaryStrategy::new(grid.clone(), vec![0.0, 0.0], 1.0).unwrap();
        let sum = phi1.add(&phi2).unwrap();
        let pi1 = tax_process_elementary(&phi1, &prices, &d, a).unwrap();
        let pi2 = tax_process_elementary(&phi2, &prices, &d, a).unwrap();
        let pi_sum = tax_process_elementary(&sum, &prices, &d, a).unwrap();
        assert!((pi1.right[1] - 5.0 * a).abs() < 1e-12);
        assert_eq!(pi2.right[1], 0.0);
        assert_eq!(pi_sum.right[1], 0.0);
        assert!(pi_sum.right[1] < pi1.right[1] + pi2.right[1]);
    }

    #[test]
    fn up_distance_basics() {
        let (phi, prices) = fig2();
        let d = DividendPath::zero(&phi.grid);
        let pi = tax_process_elementary(&phi, &prices, &d, 0.25).unwrap();
        assert_eq!(pi.up_distance(&pi).unwrap(), 0.0);
        let mut shifted = pi.clone();
        for v in shifted
            .left
            .iter_mut()
            .chain(shifted.at.iter_mut())
            .chain(shifted.right.iter_mut())
        {
            *v += 0.5;
        }
        assert_eq!(pi.up_distance(&shifted).unwrap(), 0.5);
    }

    #[test]
    fn pointwise_limit_misses_wash_profit() {
        // phi_n drops the position on (1/2, 1/2 + 1/n]; the pointwise limit
        // holds through. The tax flows stay one realized book profit apart.
        let n = 8;
        let grid = TimeGrid::uniform(n, 1.0).unwrap();
        let prices = PricePath::new(
            grid.clone(),
            vec![100.0, 101.0, 102.0, 103.0, 104.0, 103.0, 102.0, 103.0, 104.0],
        )
        .unwrap();
        let d = DividendPath::zero(&grid);
        let a = 0.4;
        let half = n / 2;
        let mut gap_phi = vec![1.0; n + 1];
        gap_phi[0] = 0.0;
        gap_phi[half + 1] = 0.0;
        let phi_n = ElementaryStrategy::new(grid.clone(), gap_phi, 1.0).unwrap();
        let phi = ElementaryStrategy::buy_and_hold(grid.clone(), 1.0, false).unwrap();
        let pi_n = tax_process_elementary(&phi_n, &prices, &d, a).unwrap();
        let pi = tax_process_elementary(&phi, &prices, &d, a).unwrap();
        let realized = a * (prices.values[half] - prices.min_on(0, half));
        assert!(realized > 0.0);
        let dist = pi_n.up_distance(&pi).unwrap();
        assert!(dist >= realized - 1e-12, "distance {dist} < {realized}");
    }

    #[test]
    fn stability_check_trivia() {
        let (phi, prices) = fig2();
        let c = stability_bound_check(&phi, &phi, &prices, 4).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.ok);
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let flat = PricePath::new(grid.clone(), vec![100.0; 3]).unwrap();
        let a = ElementaryStrategy::new(grid.clone(), vec![0.0, 1.0, 2.0], 2.0).unwrap();
        let b = ElementaryStrategy::new(grid.clone(), vec![0.0, 2.0, 1.0], 1.0).unwrap();
        let c = stability_bound_check(&a, &b, &flat, 2).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert_eq!(c.lhs, 0.0);
        assert!(c.ok);
    }

    #[test]
    fn approximate_strategy_constant() {
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let phi = approximate_strategy(|_| 2.5, &grid).unwrap();
        assert_eq!(phi.values(), &[0.0, 2.5, 2.5, 2.5, 2.5]);
        assert_eq!(phi.terminal(), 2.5);
        assert!(approximate_strategy(|_| -1.0, &grid).is_err());
    }

    prop_compose! {
        fn arb_instance(max_t: usize)
            (t in 2..=max_t)
            (phi in proptest::collection::vec(0u32..=4, t + 1),
             moves in proptest::collection::vec(-3i32..=3, t),
             s0 in 5i32..=15)
            -> (DiscreteStrategy, PricePath)
        {
            let mut values = vec![s0 as f64];
            for m in &moves {
                let prev = *values.last().unwrap();
                values.push((prev + *m as f64).max(0.0));
            }
            let grid = TimeGrid::uniform(moves.len(), 1.0).unwrap();
            let prices = PricePath::new(grid, values).unwrap();
            let d = DiscreteStrategy::new(phi.iter().map(|p| *p as f64).collect()).unwrap();
            (d, prices)
        }
    }

    proptest! {
        #[test]
        fn embedding_matches_ledger((d, prices) in arb_instance(8)) {
            let phi = ElementaryStrategy::from_discrete(&d, &prices.grid).unwrap();
            let div = DividendPath::zero(&prices.grid);
            let a = 0.3;
            let pi = tax_process_elementary(&phi, &prices, &div, a).unwrap();
            let replay = ledger_replay(&d, &prices, a).unwrap();
            for (x, y) in pi.right.iter().zip(&replay) {
                prop_assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", pi.right, replay);
            }
        }

        #[test]
        fn identity_route_agrees((d, prices) in arb_instance(8)) {
            let phi = ElementaryStrategy::from_discrete(&d, &prices.grid).unwrap();
            let div = DividendPath::zero(&prices.grid);
            let a = 0.3;
            let direct = tax_process_elementary(&phi, &prices, &div, a).unwrap();
            let identity = tax_process_via_identity(&phi, &prices, &div, a).unwrap();
            prop_assert!(direct.up_distance(&identity).unwrap() < 1e-10);
        }

        #[test]
        fn jumps_match_flow((d, prices) in arb_instance(8)) {
            let phi = ElementaryStrategy::from_discrete(&d, &prices.grid).unwrap();
            let div = DividendPath::zero(&prices.grid);
            let a = 0.3;
            let pi = tax_process_elementary(&phi, &prices, &div, a).unwrap();
            for t in 0..prices.len() {
                let (dm, dp) = jump_decomposition(&phi, &prices, &div, a, t).unwrap();
                prop_assert!((pi.at[t] - pi.left[t] - dm).abs() < 1e-9);
                prop_assert!((pi.right[t] - pi.at[t] - dp).abs() < 1e-9);
                prop_assert!(dp >= 0.0);
            }
        }

        #[test]
        fn book_profit_shape((d, prices) in arb_instance(8)) {
            let phi = ElementaryStrategy::from_discrete(&d, &prices.grid).unwrap();
            for t in 0..prices.len() {
                let f = book_profit_function(&phi, &prices, t).unwrap();
                prop_assert!(f.is_nondecreasing());
                prop_assert!(f.segments.iter().all(|s| s.profit >= 0.0));
                prop_assert!((f.total_width() - phi.value(t)).abs() < 1e-12);
                prop_assert_eq!(book_profit(&phi, &prices, t, phi.value(t) + 1.0), 0.0);
            }
        }

        #[test]
        fn homogeneity_and_subadditivity(
            (d1, prices) in arb_instance(8),
            phi2_raw in proptest::collection::vec(0u32..=4, 8),
        ) {
            let n = prices.len();
            let phi1 = ElementaryStrategy::from_discrete(&d1, &prices.grid).unwrap();
            let d2 = DiscreteStrategy::new(
                phi2_raw.iter().cycle().take(n).map(|p| *p as f64).collect(),
            ).unwrap();
            let phi2 = ElementaryStrategy::from_discrete(&d2, &prices.grid).unwrap();
            let div = DividendPath::zero(&prices.grid);
            let a = 0.3;
            let pi1 = tax_process_elementary(&phi1, &prices, &div, a).unwrap();
            let pi2 = tax_process_elementary(&phi2, &prices, &div, a).unwrap();
            let scaled = tax_process_elementary(&phi1.scale(4.0).unwrap(), &prices, &div, a).unwrap();
            let summed = tax_process_elementary(&phi1.add(&phi2).unwrap(), &prices, &div, a).unwrap();
            for k in 0..n {
                prop_assert!((scaled.right[k] - 4.0 * pi1.right[k]).abs() < 1e-12);
                prop_assert!((scaled.at[k] - 4.0 * pi1.at[k]).abs() < 1e-12);
                prop_assert!(summed.right[k] <= pi1.right[k] + pi2.right[k] + 1e-10);
                prop_assert!(summed.at[k] <= pi1.at[k] + pi2.at[k] + 1e-10);
                prop_assert!(summed.left[k] <= pi1.left[k] + pi2.left[k] + 1e-10);
            }
        }

        #[test]
        fn stability_bound_holds(
            (d, prices) in arb_instance(8),
            noise in proptest::collection::vec(-2i32..=2, 9),
        ) {
            let phi = ElementaryStrategy::from_discrete(&d, &prices.grid).unwrap();
            let tilde_vals: Vec<f64> = phi
                .values()
                .iter()
                .zip(&noise)
                .enumerate()
                .map(|(k, (p, z))| if k == 0 { 0.0 } else { (p + 0.25 * *z as f64).max(0.0) })
                .collect();
            let tilde = ElementaryStrategy::new(
                phi.grid.clone(),
                tilde_vals,
                phi.terminal(),
            ).unwrap();
            for t in 0..prices.len() {
                let c = stability_bound_check(&phi, &tilde, &prices, t).unwrap();
                prop_assert!(c.ok, "lhs {} > rhs {} at t={}", c.lhs, c.rhs, t);
            }
        }
    }
}
