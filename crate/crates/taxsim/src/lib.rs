//! Capital-gains tax payment flows of dynamic trading strategies under the
//! exact tax basis with automatic wash sales.
//!
//! The crate models a market on a finite time grid: a cadlag price path `S`,
//! a caglad share-count strategy `phi`, cumulative dividends, and interest
//! rates. Selling is taxed on the book profit of the specific lots sold
//! (latest purchases first), and every lot trading below its basis is sold
//! and immediately rebought, converting paper losses into tax credits.
//!
//! Two independent engines compute the resulting accumulated tax flow: the
//! discrete lot-matrix induction in [`lot_ledger`] and the purchasing-time /
//! book-profit-function construction in [`tax_flow`]. They agree exactly on
//! grid data, which the test suite exploits heavily. [`wealth`] adds
//! self-financing wealth dynamics and dividend-policy comparison,
//! [`efficient`] the closed-form tax flow of monotone feedback strategies,
//! and [`config`]/[`report`]/[`verify`] the experiment-runner plumbing.

pub mod config;
pub mod efficient;
pub mod error;
pub mod grid;
pub mod lot_ledger;
pub mod paths;
pub mod report;
pub mod tax_flow;
pub mod verify;
pub mod wealth;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use paths::{DividendPath, PricePath, RatePath, ReturnPath};
