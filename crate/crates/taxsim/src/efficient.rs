//! Closed-form tax flows for monotone feedback strategies `phi = g(S)`.
//!
//! When the number of shares held is a nondecreasing function of the price,
//! every price drop triggers sales at a loss (immediately wash-sold) and the
//! book profit profile has an explicit form through the inverse of `g`. The
//! accumulated tax before liquidation is nonpositive and splits into a
//! running-minimum part (antiderivative of `g` at the running minimum) and a
//! quadratic-covariation part. The formula is exact only in the
//! continuous-path limit; callers should always compare it against the grid
//! engine at the mesh in use.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lot_ledger::check_alpha;
use crate::paths::PricePath;
use crate::tax_flow::ElementaryStrategy;

/// Nondecreasing share-count-of-price rules with closed-form antiderivative
/// and right-continuous inverse `sup { s : g(s) <= y }`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackRule {
    /// g(s) = a s + b with a, b >= 0.
    Linear { a: f64, b: f64 },
    /// g(s) = a s^p with a >= 0, p > 0.
    Power { a: f64, p: f64 },
    /// Piecewise-linear through (s, g) points with s strictly increasing and
    /// g nondecreasing and nonnegative; constant extrapolation outside.
    Tabulated { points: Vec<(f64, f64)> },
}

impl FeedbackRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            FeedbackRule::Linear { a, b } => {
                if !(*a >= 0.0) || !(*b >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "linear rule needs a, b >= 0, got a={a}, b={b}"
                    )));
                }
            }
            FeedbackRule::Power { a, p } => {
                if !(*a >= 0.0) || !(*p > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "power rule needs a >= 0 and p > 0, got a={a}, p={p}"
                    )));
                }
            }
            FeedbackRule::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "tabulated rule needs at least 2 points".into(),
                    ));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidParameter(format!(
                            "tabulated abscissae not increasing: {} -> {}",
                            w[0].0, w[1].0
                        )));
                    }
                    if !(w[1].1 >= w[0].1) {
                        return Err(Error::InvalidParameter(format!(
                            "tabulated rule decreases: g({}) = {} > g({}) = {}",
                            w[0].0, w[0].1, w[1].0, w[1].1
                        )));
                    }
                }
                if !(points[0].1 >= 0.0) {
                    return Err(Error::InvalidParameter("tabulated rule negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Shares held at price `s`.
    pub fn g(&self, s: f64) -> f64 {
        match self {
            FeedbackRule::Linear { a, b } => a * s + b,
            FeedbackRule::Power { a, p } => a * s.powf(*p),
            FeedbackRule::Tabulated { points } => {
                if s <= points[0].0 {
                    return points[0].1;
                }
                for w in points.windows(2) {
                    if s <= w[1].0 {
                        let t = (s - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                points.last().unwrap().1
            }
        }
    }

    /// Antiderivative with G(0) = 0 (piecewise-exact for tabulated rules).
    pub fn antiderivative(&self, s: f64) -> f64 {
        match self {
            FeedbackRule::Linear { a, b } => 0.5 * a * s * s + b * s,
            FeedbackRule::Power { a, p } => a * s.powf(p + 1.0) / (p + 1.0),
            FeedbackRule::Tabulated { points } => {
                let mut acc = points[0].1 * points[0].0.min(s);
                if s <= points[0].0 {
                    return acc;
                }
                for w in points.windows(2) {
                    let hi = s.min(w[1].0);
                    if hi > w[0].0 {
                        // trapezoid over [w0, hi]
                        acc += 0.5 * (self.g(w[0].0) + self.g(hi)) * (hi - w[0].0);
                    }
                    if s <= w[1].0 {
                        return acc;
                    }
                }
                let last = points.last().unwrap();
                acc + last.1 * (s - last.0)
            }
        }
    }

    /// Right-continuous inverse `sup { s >= 0 : g(s) <= y }`; infinite where
    /// `g` never exceeds `y`, 0 where `g(0) > y`.
    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            FeedbackRule::Linear { a, b } => {
                if y < *b {
                    0.0
                } else if *a == 0.0 {
                    f64::INFINITY
                } else {
                    (y - b) / a
                }
            }
            FeedbackRule::Power { a, p } => {
                if *a == 0.0 {
                    f64::INFINITY
                } else if y <= 0.0 {
                    0.0
                } else {
                    (y / a).powf(1.0 / p)
                }
            }
            FeedbackRule::Tabulated { points } => {
                let last = points.last().unwrap();
                if y >= last.1 {
                    return f64::INFINITY;
                }
                if y < points[0].1 {
                    return 0.0;
                }
                // rightmost s with g(s) <= y: scan from the right
                for w in points.windows(2).rev() {
                    if w[0].1 <= y {
                        if w[1].1 <= y {
                            // flat continuation cannot happen: w[1].1 > y by scan order
                            return w[1].0;
                        }
                        if w[1].1 == w[0].1 {
                            return w[1].0;
                        }
                        let t = (y - w[0].1) / (w[1].1 - w[0].1);
                        return w[0].0 + t * (w[1].0 - w[0].0);
                    }
                }
                points[0].0
            }
        }
    }
}

/// The caglad strategy responding to prices with one-step delay:
/// `phi_k = g(S_{k-1})` on `(t_{k-1}, t_k]`, trades at `t_k` moving to
/// `g(S_k)`; no terminal liquidation.
pub fn feedback_strategy(rule: &FeedbackRule, prices: &PricePath) -> Result<ElementaryStrategy> {
    rule.validate()?;
    let n = prices.len();
    let mut phi = Vec::with_capacity(n);
    phi.push(0.0);
    for k in 1..n {
        phi.push(rule.g(prices.values[k - 1]));
    }
    let terminal = rule.g(prices.values[n - 1]);
    ElementaryStrategy::new(prices.grid.clone(), phi, terminal)
}

/// Book profit of the x-th share under `phi = g(S)`: shares below the
/// running-minimum level keep the running-minimum basis, shares above it were
/// bought when the price last crossed their level, i.e. at `g^{-1}(phi - x)`.
pub fn closed_form_book_profit(
    rule: &FeedbackRule,
    prices: &PricePath,
    t: usize,
    x: f64,
) -> Result<f64> {
    rule.validate()?;
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative x {x}")));
    }
    let s_t = prices.values[t];
    let min_s = prices.min_on(0, t);
    let level = rule.g(s_t);
    let floor = rule.g(min_s);
    if x > level {
        Ok(0.0)
    } else if x <= level - floor {
        Ok(s_t - rule.inverse(level - x))
    } else {
        Ok(s_t - min_s)
    }
}

/// Closed-form accumulated tax of the feedback strategy before liquidation,
/// split into its running-minimum and covariation components.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormTax {
    pub grid: TimeGrid,
    /// alpha * (G(running min) - G(S_0) - covariation/2); nonpositive.
    pub pi: Vec<f64>,
    /// alpha * (G(running min) - G(S_0)); nonincreasing in t.
    pub min_part: Vec<f64>,
    /// alpha/2 * [phi, S]; nondecreasing in t.
    pub cov_part: Vec<f64>,
    /// alpha * (G(S_T) - G(running min at T)) when liquidation is requested.
    pub liquidation_tax: Option<f64>,
}

pub fn closed_form_tax(
    rule: &FeedbackRule,
    prices: &PricePath,
    alpha: f64,
    liquidate: bool,
) -> Result<ClosedFormTax> {
    rule.validate()?;
    check_alpha(alpha)?;
    let n = prices.len();
    let s = &prices.values;
    let g0 = rule.antiderivative(s[0]);
    let mut running_min = s[0];
    let mut cov = 0.0;
    let mut pi = Vec::with_capacity(n);
    let mut min_part = Vec::with_capacity(n);
    let mut cov_part = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            running_min = running_min.min(s[k]);
            cov += (rule.g(s[k]) - rule.g(s[k - 1])) * (s[k] - s[k - 1]);
        }
        let m = alpha * (rule.antiderivative(running_min) - g0);
        min_part.push(m);
        cov_part.push(0.5 * alpha * cov);
        pi.push(m - 0.5 * alpha * cov);
    }
    let liquidation_tax = liquidate.then(|| {
        alpha * (rule.antiderivative(s[n - 1]) - rule.antiderivative(running_min))
    });
    Ok(ClosedFormTax {
        grid: prices.grid.clone(),
        pi,
        min_part,
        cov_part,
        liquidation_tax,
    })
}

/// Running discrete quadratic covariation pairing each strategy adjustment
/// with the price move that caused it: entry t is the sum over k <= t of
/// `(right jump of phi at k) * dS_k`.
pub fn quadratic_covariation(phi: &ElementaryStrategy, prices: &PricePath) -> Result<Vec<f64>> {
    if !phi.grid.same_grid(&prices.grid) {
        return Err(Error::GridMismatch("covariation grids differ".into()));
    }
    let n = prices.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..n {
        acc += phi.delta_plus(k) * (prices.values[k] - prices.values[k - 1]);
        out.push(acc);
    }
    Ok(out)
}
