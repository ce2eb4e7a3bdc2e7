//! Discrete-time lot accounting under the exact tax basis.
//!
//! A `LotMatrix` records `N[s][t]`, the shares bought at time `s` and still
//! held after trading at time `t`. The wash-sale strategy sells every lot
//! whose price has fallen below its purchase price and rebuys it immediately,
//! and when the total position is reduced it sells the lots with the shortest
//! residence time first. `brute_force_min_tax` enumerates all admissible lot
//! matrices on a share lattice and serves as the independent optimality
//! oracle for that strategy.

use crate::error::{Error, Result};
use crate::paths::PricePath;

const EPS: f64 = 1e-9;

/// Shares held after trading at each time: `phi[t]` is the position carried
/// out of time `t` (phi_{t+1} in discrete-time notation, with phi_0 = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStrategy {
    pub phi: Vec<f64>,
}

impl DiscreteStrategy {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::InvalidStrategy("empty strategy".into()));
        }
        if let Some(p) = phi.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidStrategy(format!(
                "short selling forbidden, got {p}"
            )));
        }
        Ok(DiscreteStrategy { phi })
    }

    pub fn horizon_index(&self) -> usize {
        self.phi.len() - 1
    }

    /// Position change at time `t` (phi_{t+1} - phi_t, with phi_0 = 0).
    pub fn delta(&self, t: usize) -> f64 {
        if t == 0 {
            self.phi[0]
        } else {
            self.phi[t] - self.phi[t - 1]
        }
    }
}

/// Holdings `N[s][t - s]` for `s <= t <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LotMatrix {
    t_max: usize,
    rows: Vec<Vec<f64>>,
}

impl LotMatrix {
    pub fn zero(t_max: usize) -> LotMatrix {
        LotMatrix {
            t_max,
            rows: (0..=t_max).map(|s| vec![0.0; t_max - s + 1]).collect(),
        }
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        debug_assert!(s <= t && t <= self.t_max);
        self.rows[s][t - s]
    }

    pub fn set(&mut self, s: usize, t: usize, value: f64) {
        self.rows[s][t - s] = value;
    }

    /// Total position after trading at time `t`.
    pub fn total_at(&self, t: usize) -> f64 {
        (0..=t).map(|s| self.get(s, t)).sum()
    }

    /// The strategy this matrix implements.
    pub fn strategy(&self) -> DiscreteStrategy {
        DiscreteStrategy {
            phi: (0..=self.t_max).map(|t| self.total_at(t)).collect(),
        }
    }
}

/// Constraint check for a lot matrix against its intended strategy.
/// Collects every violation instead of stopping at the first.
pub fn validate(n: &LotMatrix, phi: &DiscreteStrategy) -> Vec<String> {
    let mut violations = Vec::new();
    if phi.phi.len() != n.t_max + 1 {
        violations.push(format!(
            "shape mismatch: strategy has {} times, matrix {}",
            phi.phi.len(),
            n.t_max + 1
        ));
        return violations;
    }
    for s in 0..=n.t_max {
        let mut prev = f64::INFINITY;
        for t in s..=n.t_max {
            let v = n.get(s, t);
            if v < -EPS {
                violations.push(format!("N[{s},{t}] = {v} is negative"));
            }
            if v > prev + EPS {
                violations.push(format!(
                    "N[{s},{t}] = {v} exceeds N[{s},{}] = {prev} (lots cannot grow)",
                    t - 1
                ));
            }
            prev = v;
        }
    }
    for t in 0..=n.t_max {
        let total = n.total_at(t);
        if (total - phi.phi[t]).abs() > EPS {
            violations.push(format!(
                "sum of lots at t={t} is {total}, strategy requires {}",
                phi.phi[t]
            ));
        }
    }
    violations
}

pub fn is_valid(n: &LotMatrix, phi: &DiscreteStrategy) -> bool {
    validate(n, phi).is_empty()
}

/// The wash-sale strategy: forward induction that first reduces the position
/// by selling shortest-residence lots, then wash-sells every lot trading
/// below its purchase price, then rebuys at the current price.
pub fn wash_optimal_strategy(phi: &DiscreteStrategy, prices: &PricePath) -> Result<LotMatrix> {
    if prices.len() != phi.phi.len() {
        return Err(Error::GridMismatch(format!(
            "{} prices vs {} strategy times",
            prices.len(),
            phi.phi.len()
        )));
    }
    let t_max = phi.horizon_index();
    let s_vals = &prices.values;
    let mut n = LotMatrix::zero(t_max);
    n.set(0, 0, phi.phi[0]);
    for t in 1..=t_max {
        let to_sell = (-phi.delta(t)).max(0.0);
        // later-bought lots absorb the reduction first
        let mut later_sum = 0.0;
        let mut pending: Vec<(usize, f64)> = Vec::with_capacity(t);
        for s in (0..t).rev() {
            let carried = n.get(s, t - 1);
            let reduced = (carried - (to_sell - later_sum).max(0.0)).max(0.0);
            later_sum += carried;
            let kept = if s_vals[t] >= s_vals[s] { reduced } else { 0.0 };
            pending.push((s, kept));
        }
        let mut sold_total = 0.0;
        for &(s, kept) in &pending {
            sold_total += n.get(s, t - 1) - kept;
            n.set(s, t, kept);
        }
        // rebuys plus the strategy's own net purchase
        n.set(t, t, phi.delta(t) + sold_total);
    }
    debug_assert!(is_valid(&n, phi));
    Ok(n)
}

/// Accumulated tax payments `Pi_0..Pi_T` for an arbitrary admissible matrix:
/// every reduction of lot `s` at time `t` realizes `alpha * (S_t - S_s)` per
/// share. Negative payments are tax credits paid out immediately.
pub fn tax_payments(n: &LotMatrix, prices: &PricePath, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let phi = n.strategy();
    let violations = validate(n, &phi);
    if !violations.is_empty() {
        return Err(Error::InvalidLotMatrix(violations.join("; ")));
    }
    if prices.len() != n.t_max + 1 {
        return Err(Error::GridMismatch(format!(
            "{} prices vs matrix horizon {}",
            prices.len(),
            n.t_max
        )));
    }
    let s_vals = &prices.values;
    let mut out = Vec::with_capacity(n.t_max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for t in 1..=n.t_max {
        for s in 0..t {
            acc += alpha * (n.get(s, t - 1) - n.get(s, t)) * (s_vals[t] - s_vals[s]);
        }
        out.push(acc);
    }
    Ok(out)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tax rate must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// One maximal constant piece of a book profit function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub width: f64,
    pub profit: f64,
}

/// Step function x -> F(t, x) on (0, total_width], stored as consecutive
/// segments with nondecreasing profit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BookProfitFunction {
    pub segments: Vec<Segment>,
}

impl BookProfitFunction {
    pub fn total_width(&self) -> f64 {
        self.segments.iter().map(|s| s.width).sum()
    }

    /// Exact segment sum of the integral over (0, total_width].
    pub fn integral(&self) -> f64 {
        self.segments.iter().map(|s| s.width * s.profit).sum()
    }

    /// Left-continuous evaluation; 0 beyond the total width.
    pub fn value_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let mut cum = 0.0;
        for seg in &self.segments {
            cum += seg.width;
            if x <= cum + 1e-12 {
                return seg.profit;
            }
        }
        0.0
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.segments
            .windows(2)
            .all(|w| w[1].profit >= w[0].profit - 1e-12)
    }
}

/// Book profit function of an arbitrary matrix after trading at time `t`:
/// lots ordered by descending purchase price (ties: time `t` first, then
/// later purchases first), so profits are nondecreasing in x. Negative
/// profits are possible for generic matrices; the wash-sale strategy keeps
/// them nonnegative.
pub fn book_profit_fn_discrete(
    n: &LotMatrix,
    prices: &PricePath,
    t: usize,
) -> Result<BookProfitFunction> {
    let phi = n.strategy();
    let violations = validate(n, &phi);
    if !violations.is_empty() {
        return Err(Error::InvalidLotMatrix(violations.join("; ")));
    }
    if t > n.t_max {
        return Err(Error::InvalidParameter(format!(
            "time {t} beyond horizon {}",
            n.t_max
        )));
    }
    let s_vals = &prices.values;
    let mut order: Vec<usize> = (0..=t).collect();
    order.sort_by(|&a, &b| {
        s_vals[b]
            .partial_cmp(&s_vals[a])
            .unwrap()
            .then_with(|| {
                // among equal prices the time-t lot comes first, then later buys
                let key = |s: usize| if s == t { usize::MAX } else { s };
                key(b).cmp(&key(a))
            })
    });
    let mut segments = Vec::new();
    for s in order {
        let width = n.get(s, t);
        if width > 0.0 {
            segments.push(Segment {
                width,
                profit: s_vals[t] - s_vals[s],
            });
        }
    }
    Ok(BookProfitFunction { segments })
}

/// One tax lot with its wash-sale-adjusted basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lot {
    pub purchase_index: usize,
    pub size: f64,
    pub basis: f64,
}

/// Incremental equivalent of the wash-sale lot matrix: a list of surviving
/// lots whose basis is the running minimum of the price since purchase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LotLedger {
    pub lots: Vec<Lot>,
    /// Time index of the next step; advanced by [`ledger_step`].
    pub cursor: usize,
}

impl LotLedger {
    pub fn new() -> LotLedger {
        LotLedger::default()
    }

    pub fn total_size(&self) -> f64 {
        self.lots.iter().map(|l| l.size).sum()
    }

    pub fn book_profits(&self, price: f64) -> BookProfitFunction {
        let mut segments: Vec<Segment> = self
            .lots
            .iter()
            .map(|l| Segment {
                width: l.size,
                profit: price - l.basis,
            })
            .collect();
        segments.sort_by(|a, b| a.profit.partial_cmp(&b.profit).unwrap());
        BookProfitFunction { segments }
    }
}

/// Advance the ledger by one trading date: mark to `new_price`, sell
/// `(-delta_phi)^+` shares latest-purchase-first, wash-sell every lot with
/// basis above the price, then book `delta_phi^+` new shares at the price.
/// Returns the updated ledger and the signed tax increment.
pub fn ledger_step(
    ledger: &LotLedger,
    new_price: f64,
    delta_phi: f64,
    alpha: f64,
) -> Result<(LotLedger, f64)> {
    check_alpha(alpha)?;
    if !(new_price >= 0.0) {
        return Err(Error::InvalidPath(format!("negative price {new_price}")));
    }
    let mut out = ledger.clone();
    let t = out.cursor;
    out.cursor += 1;
    let mut tax = 0.0;
    if delta_phi < 0.0 {
        let mut to_sell = -delta_phi;
        if to_sell > out.total_size() + EPS {
            return Err(Error::InvalidStrategy(format!(
                "selling {to_sell} shares exceeds position {}",
                out.total_size()
            )));
        }
        while to_sell > 0.0 {
            let Some(last) = out.lots.last_mut() else { break };
            let sold = last.size.min(to_sell);
            tax += alpha * sold * (new_price - last.basis);
            last.size -= sold;
            to_sell -= sold;
            if last.size <= 0.0 {
                out.lots.pop();
            }
            if to_sell <= EPS {
                break;
            }
        }
    }
    // wash sale: strict trigger, lots at exactly the price are kept
    for lot in &mut out.lots {
        if lot.basis > new_price {
            tax += alpha * lot.size * (new_price - lot.basis);
            lot.basis = new_price;
        }
    }
    if delta_phi > 0.0 {
        out.lots.push(Lot {
            purchase_index: t,
            size: delta_phi,
            basis: new_price,
        });
    }
    Ok((out, tax))
}

/// Replay a whole strategy through [`ledger_step`]; returns the accumulated
/// tax after trading at each time, i.e. the right limits of the tax flow.
pub fn ledger_replay(
    phi: &DiscreteStrategy,
    prices: &PricePath,
    alpha: f64,
) -> Result<Vec<f64>> {
    if prices.len() != phi.phi.len() {
        return Err(Error::GridMismatch(format!(
            "{} prices vs {} strategy times",
            prices.len(),
            phi.phi.len()
        )));
    }
    let mut ledger = LotLedger::new();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(phi.phi.len());
    for t in 0..phi.phi.len() {
        let (next, tax) = ledger_step(&ledger, prices.values[t], phi.delta(t), alpha)?;
        ledger = next;
        acc += tax;
        out.push(acc);
    }
    Ok(out)
}

/// Exhaustive minimum of `Pi_t` over all admissible lot matrices whose
/// entries are multiples of `quantum`. Enumeration is exponential in the
/// horizon and the share count; instances beyond `budget` visited column
/// assignments are rejected. Intended for horizons <= 5 and a handful of
/// shares, as an optimality oracle for [`wash_optimal_strategy`].
pub fn brute_force_min_tax(
    phi: &DiscreteStrategy,
    prices: &PricePath,
    alpha: f64,
    t: usize,
    quantum: f64,
    budget: u64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !(quantum > 0.0) {
        return Err(Error::InvalidParameter("quantum must be positive".into()));
    }
    if t > phi.horizon_index() || prices.len() != phi.phi.len() {
        return Err(Error::GridMismatch("horizon mismatch".into()));
    }
    // positions must sit on the quantum lattice
    let units: Vec<u64> = phi
        .phi
        .iter()
        .map(|p| {
            let u = (p / quantum).round();
            if ((u * quantum) - p).abs() > 1e-9 * quantum {
                Err(Error::InvalidParameter(format!(
                    "position {p} is not a multiple of quantum {quantum}"
                )))
            } else {
                Ok(u as u64)
            }
        })
        .collect::<Result<_>>()?;

    struct Search<'a> {
        prices: &'a [f64],
        units: &'a [u64],
        quantum: f64,
        alpha: f64,
        t: usize,
        visited: u64,
        budget: u64,
        best: f64,
    }

    impl Search<'_> {
        // enumerate column `col`: choose N[s][col] for s <= col
        fn column(&mut self, col: usize, prev: &[u64], pi: f64) -> Result<()> {
            if col > self.t {
                self.best = self.best.min(pi);
                return Ok(());
            }
            let target = self.units[col];
            let mut current = vec![0u64; col + 1];
            self.slot(col, 0, target, prev, &mut current, pi)
        }

        // fill slot `s` of column `col` with `left` shares still to place
        fn slot(
            &mut self,
            col: usize,
            s: usize,
            left: u64,
            prev: &[u64],
            current: &mut Vec<u64>,
            pi: f64,
        ) -> Result<()> {
            if s == col {
                // the freshly bought lot takes the remainder; taxes for the
                // column come from reductions of the older lots
                current[col] = left;
                self.visited += 1;
                if self.visited > self.budget {
                    return Err(Error::BudgetExceeded {
                        visited: self.visited,
                        budget: self.budget,
                    });
                }
                let mut d_pi = 0.0;
                if col > 0 {
                    for i in 0..col {
                        let sold = prev[i] - current[i];
                        if sold > 0 {
                            d_pi += self.alpha
                                * sold as f64
                                * self.quantum
                                * (self.prices[col] - self.prices[i]);
                        }
                    }
                }
                let next_prev = current.clone();
                return self.column(col + 1, &next_prev, pi + d_pi);
            }
            let cap = prev[s].min(left);
            for keep in 0..=cap {
                current[s] = keep;
                self.slot(col, s + 1, left - keep, prev, current, pi)?;
            }
            Ok(())
        }
    }

    let mut search = Search {
        prices: &prices.values,
        units: &units,
        quantum,
        alpha,
        t,
        visited: 0,
        budget,
        best: f64::INFINITY,
    };
    search.column(0, &[], 0.0)?;
    Ok(search.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    pub(crate) fn fig2_prices() -> PricePath {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        PricePath::new(grid, vec![100.0, 103.0, 104.0, 105.0, 102.0]).unwrap()
    }

    fn fig2_strategy() -> DiscreteStrategy {
        DiscreteStrategy::new(vec![9.0, 10.0, 14.0, 10.0, 10.0]).unwrap()
    }

    #[test]
    fn validate_catches_violations() {
        let phi = DiscreteStrategy::new(vec![0.0, 0.0]).unwrap();
        let n = LotMatrix::zero(1);
        assert!(is_valid(&n, &phi));

        let mut bad = LotMatrix::zero(1);
        bad.set(0, 0, 1.0);
        bad.set(0, 1, 2.0);
        let phi2 = bad.strategy();
        assert!(!is_valid(&bad, &phi2));
    }

    #[test]
    fn fig2_wash_sale_strategy() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let n = wash_optimal_strategy(&phi, &prices).unwrap();
        assert!(is_valid(&n, &phi));
        // t=3: the four shares bought at 104 are sold
        assert_eq!(n.get(2, 3), 0.0);
        assert_eq!(n.get(2, 2), 4.0);
        // t=4: the share bought at 103 is wash-sold and rebought
        assert_eq!(n.get(1, 4), 0.0);
        assert_eq!(n.get(4, 4), 1.0);
        assert_eq!(n.get(0, 4), 9.0);
    }

    #[test]
    fn fig2_tax_payments() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let n = wash_optimal_strategy(&phi, &prices).unwrap();
        let alpha = 0.25;
        let pi = tax_payments(&n, &prices, alpha).unwrap();
        let expected = [0.0, 0.0, 0.0, 4.0 * alpha, 3.0 * alpha];
        for (a, b) in pi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{pi:?}");
        }
    }

    #[test]
    fn no_sales_no_tax() {
        let prices = fig2_prices();
        let mut n = LotMatrix::zero(4);
        for t in 0..=4 {
            n.set(0, t, 5.0);
        }
        let pi = tax_payments(&n, &prices, 0.3).unwrap();
        assert!(pi.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn nonincreasing_prices_wash_every_step() {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let prices = PricePath::new(grid, vec![100.0, 95.0, 90.0, 85.0]).unwrap();
        let phi = DiscreteStrategy::new(vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        let n = wash_optimal_strategy(&phi, &prices).unwrap();
        // everything migrates to the newest lot each step
        for t in 1..=3 {
            for s in 0..t {
                assert_eq!(n.get(s, t), 0.0, "lot {s} at {t} should be washed");
            }
            assert_eq!(n.get(t, t), 2.0);
        }
        let f = book_profit_fn_discrete(&n, &prices, 3).unwrap();
        assert_eq!(f.segments.len(), 1);
        assert_eq!(f.segments[0].profit, 0.0);
    }

    #[test]
    fn fig2_book_profit_function() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let n = wash_optimal_strategy(&phi, &prices).unwrap();
        let f = book_profit_fn_discrete(&n, &prices, 4).unwrap();
        let widths: Vec<f64> = f.segments.iter().map(|s| s.width).collect();
        let profits: Vec<f64> = f.segments.iter().map(|s| s.profit).collect();
        assert_eq!(widths, vec![1.0, 9.0]);
        assert_eq!(profits, vec![0.0, 2.0]);
        assert!((f.integral() - 18.0).abs() < 1e-12);

        // t=0: a single zero-profit segment of the initial purchase
        let f0 = book_profit_fn_discrete(&n, &prices, 0).unwrap();
        assert_eq!(f0.segments, vec![Segment { width: 9.0, profit: 0.0 }]);
    }

    #[test]
    fn ledger_replay_matches_matrix_taxes() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let alpha = 0.4;
        let n = wash_optimal_strategy(&phi, &prices).unwrap();
        let a = tax_payments(&n, &prices, alpha).unwrap();
        let b = ledger_replay(&phi, &prices, alpha).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn ledger_step_fig2_increments() {
        let prices = fig2_prices();
        let alpha = 0.25;
        let mut ledger = LotLedger::new();
        let deltas = [9.0, 1.0, 4.0, -4.0, 0.0];
        let mut taxes = Vec::new();
        for (t, d) in deltas.iter().enumerate() {
            let (next, tax) = ledger_step(&ledger, prices.values[t], *d, alpha).unwrap();
            ledger = next;
            taxes.push(tax);
        }
        assert!((taxes[3] - 4.0 * alpha).abs() < 1e-12);
        assert!((taxes[4] + alpha).abs() < 1e-12);
        // surviving lots: 9@100 and the washed share at basis 102
        assert_eq!(ledger.lots.len(), 2);
        assert_eq!(ledger.lots[0].basis, 100.0);
        assert_eq!(ledger.lots[1].basis, 102.0);
    }

    #[test]
    fn ledger_step_noop() {
        let ledger = LotLedger {
            lots: vec![Lot {
                purchase_index: 0,
                size: 3.0,
                basis: 50.0,
            }],
            cursor: 1,
        };
        let (next, tax) = ledger_step(&ledger, 60.0, 0.0, 0.3).unwrap();
        assert_eq!(tax, 0.0);
        assert_eq!(next.lots, ledger.lots);
    }

    #[test]
    fn ledger_step_rejects_short_sale() {
        let ledger = LotLedger::new();
        assert!(ledger_step(&ledger, 100.0, -1.0, 0.3).is_err());
    }

    #[test]
    fn brute_force_fig2() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let alpha = 0.25;
        let min = brute_force_min_tax(&phi, &prices, alpha, 4, 1.0, 10_000_000).unwrap();
        assert!((min - 3.0 * alpha).abs() < 1e-12, "min = {min}");
    }

    #[test]
    fn brute_force_two_period_wash() {
        // phi = (1,1) over S = (100, 90): realizing the loss gives -10 alpha
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let prices = PricePath::new(grid, vec![100.0, 90.0]).unwrap();
        let phi = DiscreteStrategy::new(vec![1.0, 1.0]).unwrap();
        let alpha = 0.25;
        let min = brute_force_min_tax(&phi, &prices, alpha, 1, 1.0, 10_000).unwrap();
        assert!((min + 10.0 * alpha).abs() < 1e-12);
        // the no-trade matrix pays 0 > -10 alpha
        let mut hold = LotMatrix::zero(1);
        hold.set(0, 0, 1.0);
        hold.set(0, 1, 1.0);
        let pi = tax_payments(&hold, &prices, alpha).unwrap();
        assert_eq!(pi[1], 0.0);
    }

    #[test]
    fn brute_force_budget() {
        let prices = fig2_prices();
        let phi = fig2_strategy();
        let err = brute_force_min_tax(&phi, &prices, 0.25, 4, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }
}
