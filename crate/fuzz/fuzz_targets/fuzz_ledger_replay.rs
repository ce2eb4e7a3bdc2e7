//! Differential fuzzing of the two tax engines: the incremental lot ledger
//! and the lot-matrix induction must agree on every decodable instance, and
//! neither may panic. Bytes decode into a small integer price path and
//! position sequence.

#![no_main]

use libfuzzer_sys::fuzz_target;
use taxsim::grid::TimeGrid;
use taxsim::lot_ledger::{ledger_replay, tax_payments, wash_optimal_strategy, DiscreteStrategy};
use taxsim::tax_flow::{tax_process_elementary, ElementaryStrategy};
use taxsim::{DividendPath, PricePath};

fuzz_target!(|data: &[u8]| {
    // layout: pairs of (position, price-step) bytes, up to 12 trading dates
    if data.len() < 4 {
        return;
    }
    let n = (data.len() / 2).min(12);
    let mut phi = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    let mut s = 50.0 + (data[0] % 100) as f64;
    for k in 0..n {
        phi.push((data[2 * k] % 8) as f64);
        if k > 0 {
            s = (s + (data[2 * k + 1] % 15) as f64 - 7.0).max(0.0);
        }
        prices.push(s);
    }
    let grid = TimeGrid::uniform(n - 1, 1.0).unwrap();
    let prices = PricePath::new(grid.clone(), prices).unwrap();
    let d = DiscreteStrategy::new(phi).unwrap();
    let alpha = 0.25;

    let replay = ledger_replay(&d, &prices, alpha).unwrap();
    let matrix = wash_optimal_strategy(&d, &prices).unwrap();
    let induction = tax_payments(&matrix, &prices, alpha).unwrap();
    let strategy = ElementaryStrategy::from_discrete(&d, &grid).unwrap();
    let flow = tax_process_elementary(
        &strategy,
        &prices,
        &DividendPath::zero(&grid),
        alpha,
    )
    .unwrap();
    for t in 0..n {
        assert!(
            (replay[t] - induction[t]).abs() < 1e-9,
            "engines disagree at {t}: {} vs {}",
            replay[t],
            induction[t]
        );
        assert!(
            (flow.right[t] - induction[t]).abs() < 1e-9,
            "flow disagrees at {t}: {} vs {}",
            flow.right[t],
            induction[t]
        );
    }
});
