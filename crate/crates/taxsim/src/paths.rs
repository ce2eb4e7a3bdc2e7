//! Price, dividend, return, and interest-rate trajectories on finite grids,
//! with seeded generators for binomial, log-normal, and jump-diffusion fixtures.
//!
//! Reproducibility: all generators use the portable `ChaCha12` stream cipher
//! RNG with an explicit 64-bit seed. Monte Carlo batches assign one
//! independent stream per path (`set_stream(path_index)`), so results do not
//! depend on evaluation order.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Seeded RNG for path `path_index` of the batch with base seed `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Cadlag step price path: `values[k]` holds on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl PricePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidPath(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidPath(format!("negative or NaN price {v}")));
        }
        Ok(PricePath { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of the step function at time `t` (cadlag interpolation).
    pub fn at(&self, t: f64) -> f64 {
        let i = self.grid.index_at(t).expect("time before grid start");
        self.values[i]
    }

    /// Running minimum up to index `t` inclusive.
    pub fn running_min(&self, t: usize) -> f64 {
        self.values[..=t].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// min over grid indices in `[a, b]`.
    pub fn min_on(&self, a: usize, b: usize) -> f64 {
        self.values[a..=b].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_on(&self, a: usize, b: usize) -> f64 {
        self.values[a..=b]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same step function on the grid refined by `factor` (values carried forward).
    pub fn refine_grid(&self, factor: usize) -> Result<PricePath> {
        let grid = self.grid.refine(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let mut values = Vec::with_capacity(grid.len());
        for v in &self.values[..self.values.len() - 1] {
            for _ in 0..factor {
                values.push(*v);
            }
        }
        values.push(*self.values.last().unwrap());
        PricePath::new(grid, values)
    }
}

/// Nondecreasing cumulative dividends per share, cadlag step semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendPath {
    pub grid: TimeGrid,
    pub cumulative: Vec<f64>,
}

impl DividendPath {
    pub fn new(grid: TimeGrid, cumulative: Vec<f64>) -> Result<Self> {
        if cumulative.len() != grid.len() {
            return Err(Error::InvalidPath("dividend length mismatch".into()));
        }
        if !(cumulative[0] >= 0.0) {
            return Err(Error::InvalidPath("cumulative[0] must be >= 0".into()));
        }
        for w in cumulative.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidPath(format!(
                    "cumulative dividends decrease: {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(DividendPath { grid, cumulative })
    }

    pub fn zero(grid: &TimeGrid) -> DividendPath {
        DividendPath {
            grid: grid.clone(),
            cumulative: vec![0.0; grid.len()],
        }
    }

    /// Jump of the cumulative process at grid index `k` (0 at k = 0).
    pub fn increment(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cumulative[k] - self.cumulative[k - 1]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cumulative.iter().all(|d| *d == 0.0)
    }
}

/// Per-step returns `increments[k] = ΔR_{k+1}`, one per grid interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPath {
    pub grid: TimeGrid,
    pub increments: Vec<f64>,
}

impl ReturnPath {
    pub fn new(grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.len() - 1 {
            return Err(Error::InvalidPath(format!(
                "expected {} return increments, got {}",
                grid.len() - 1,
                increments.len()
            )));
        }
        if let Some(r) = increments.iter().find(|r| !(**r >= -1.0)) {
            return Err(Error::InvalidPath(format!("return increment {r} < -1")));
        }
        Ok(ReturnPath { grid, increments })
    }
}

/// Per-interval nonnegative interest rates, `rates[k]` held on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    pub grid: TimeGrid,
    pub rates: Vec<f64>,
}

impl RatePath {
    pub fn new(grid: TimeGrid, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != grid.len() - 1 {
            return Err(Error::InvalidPath(format!(
                "expected {} rates, got {}",
                grid.len() - 1,
                rates.len()
            )));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidPath(format!("negative rate {r}")));
        }
        Ok(RatePath { grid, rates })
    }

    pub fn constant(grid: &TimeGrid, rate: f64) -> Result<RatePath> {
        RatePath::new(grid.clone(), vec![rate; grid.len() - 1])
    }

    /// Accumulated bank-account dividend B_t = sum of r * dt up to index `k`.
    pub fn integral_to(&self, k: usize) -> f64 {
        let times = self.grid.times();
        (0..k).map(|j| self.rates[j] * (times[j + 1] - times[j])).sum()
    }
}

/// Binomial path: symmetric moves of `sigma * sqrt(T / steps)` per step,
/// absorbed at zero.
pub fn gen_crr(s0: f64, sigma: f64, steps: usize, horizon: f64, seed: u64) -> Result<PricePath> {
    gen_crr_indexed(s0, sigma, steps, horizon, seed, 0)
}

/// Like [`gen_crr`] but drawing from the per-path stream `path_index`.
pub fn gen_crr_indexed(
    s0: f64,
    sigma: f64,
    steps: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<PricePath> {
    if !(s0 >= 0.0) {
        return Err(Error::InvalidParameter("s0 must be >= 0".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    let grid = TimeGrid::uniform(steps, horizon)?;
    let delta = sigma * (horizon / steps as f64).sqrt();
    let mut rng = path_rng(seed, path_index);
    let mut values = Vec::with_capacity(steps + 1);
    let mut s = s0;
    values.push(s);
    for _ in 0..steps {
        if s > 0.0 {
            let up: bool = rng.gen();
            s = if up { s + delta } else { (s - delta).max(0.0) };
        }
        values.push(s);
    }
    PricePath::new(grid, values)
}

/// Exact log-normal stepping for geometric Brownian motion.
pub fn gen_gbm(
    s0: f64,
    mu: f64,
    sigma: f64,
    steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<PricePath> {
    gen_gbm_indexed(s0, mu, sigma, steps, horizon, seed, 0)
}

pub fn gen_gbm_indexed(
    s0: f64,
    mu: f64,
    sigma: f64,
    steps: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<PricePath> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    if !(s0 >= 0.0) {
        return Err(Error::InvalidParameter("s0 must be >= 0".into()));
    }
    let grid = TimeGrid::uniform(steps, horizon)?;
    let dt = horizon / steps as f64;
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let vol = sigma * dt.sqrt();
    let mut rng = path_rng(seed, path_index);
    let mut values = Vec::with_capacity(steps + 1);
    let mut s = s0;
    values.push(s);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        s *= (drift + vol * z).exp();
        values.push(s);
    }
    PricePath::new(grid, values)
}

/// Multiplicative jump sizes, relative to the pre-jump price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpLaw {
    /// Lower bound of the uniform relative jump size, must be > -1.
    pub min: f64,
    /// Upper bound of the uniform relative jump size.
    pub max: f64,
}

/// GBM stepping with Poisson-arrival multiplicative jumps drawn uniformly
/// from `[1 + law.min, 1 + law.max]`. With `intensity == 0` the draw sequence
/// is identical to [`gen_gbm`] for the same seed.
#[allow(clippy::too_many_arguments)]
pub fn gen_jump_diffusion(
    s0: f64,
    mu: f64,
    sigma: f64,
    intensity: f64,
    law: JumpLaw,
    steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<PricePath> {
    jump_diffusion_with_count(s0, mu, sigma, intensity, law, steps, horizon, seed).map(|(p, _)| p)
}

/// [`gen_jump_diffusion`] plus the number of steps at which a jump fired.
#[allow(clippy::too_many_arguments)]
pub fn jump_diffusion_with_count(
    s0: f64,
    mu: f64,
    sigma: f64,
    intensity: f64,
    law: JumpLaw,
    steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<(PricePath, usize)> {
    if !(intensity >= 0.0) {
        return Err(Error::InvalidParameter("jump intensity must be >= 0".into()));
    }
    if !(law.min > -1.0) || !(law.max >= law.min) {
        return Err(Error::InvalidParameter(
            "jump law must satisfy -1 < min <= max".into(),
        ));
    }
    if !(sigma >= 0.0) || !(s0 >= 0.0) {
        return Err(Error::InvalidParameter("sigma and s0 must be >= 0".into()));
    }
    let grid = TimeGrid::uniform(steps, horizon)?;
    let dt = horizon / steps as f64;
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let vol = sigma * dt.sqrt();
    let p_jump = (intensity * dt).min(1.0);
    let mut rng = path_rng(seed, 0);
    let mut values = Vec::with_capacity(steps + 1);
    let mut s = s0;
    let mut count = 0;
    values.push(s);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        s *= (drift + vol * z).exp();
        if intensity > 0.0 {
            let u: f64 = rng.gen();
            if u < p_jump {
                let j: f64 = rng.gen_range(law.min..=law.max);
                s *= 1.0 + j;
                count += 1;
            }
        }
        s = s.max(0.0);
        values.push(s);
    }
    Ok((PricePath::new(grid, values)?, count))
}

/// Invert the no-dividend return SDE on the grid: ΔR_k = ΔS_k / S_{k-1}
/// while the left price is positive, 0 afterwards.
pub fn returns_from_path(path: &PricePath) -> Result<ReturnPath> {
    let mut increments = Vec::with_capacity(path.len() - 1);
    for k in 1..path.len() {
        let prev = path.values[k - 1];
        let r = if prev > 0.0 {
            (path.values[k] - prev) / prev
        } else {
            0.0
        };
        increments.push(r.max(-1.0));
    }
    ReturnPath::new(path.grid.clone(), increments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crr_zero_vol_is_constant() {
        let p = gen_crr(100.0, 0.0, 4, 1.0, 7).unwrap();
        assert_eq!(p.values, vec![100.0; 5]);
    }

    #[test]
    fn crr_increments_are_half_steps() {
        // sigma = 1, n = 4, T = 1 -> moves of +-0.5
        let p = gen_crr(100.0, 1.0, 4, 1.0, 42).unwrap();
        for w in p.values.windows(2) {
            let d = w[1] - w[0];
            assert!((d.abs() - 0.5).abs() < 1e-12, "increment {d}");
        }
    }

    #[test]
    fn crr_realized_variance_matches_sigma() {
        // law of large numbers: mean squared increment per unit time ~ sigma^2
        let n = 10_000;
        let p = gen_crr(100.0, 1.0, n, 1.0, 3).unwrap();
        let qv: f64 = p.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.05, "qv = {qv}");
    }

    #[test]
    fn crr_rejects_bad_params() {
        assert!(gen_crr(100.0, -1.0, 4, 1.0, 0).is_err());
        assert!(gen_crr(100.0, 1.0, 0, 1.0, 0).is_err());
    }

    #[test]
    fn crr_absorbs_at_zero() {
        let p = gen_crr(0.4, 1.0, 8, 1.0, 11).unwrap();
        let mut absorbed = false;
        for v in &p.values {
            if absorbed {
                assert_eq!(*v, 0.0);
            }
            if *v == 0.0 {
                absorbed = true;
            }
        }
    }

    #[test]
    fn gbm_deterministic_limits() {
        let p = gen_gbm(100.0, 0.0, 0.0, 4, 1.0, 9).unwrap();
        assert_eq!(p.values, vec![100.0; 5]);
        let p = gen_gbm(100.0, 0.05, 0.0, 4, 1.0, 9).unwrap();
        for (k, v) in p.values.iter().enumerate() {
            let expected = 100.0 * (0.05 * k as f64 / 4.0).exp();
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn gbm_quadratic_variation() {
        let p = gen_gbm(100.0, 0.0, 0.2, 100_000, 1.0, 5).unwrap();
        let qv: f64 = p
            .values
            .windows(2)
            .map(|w| (w[1].ln() - w[0].ln()).powi(2))
            .sum();
        assert!((qv - 0.04).abs() < 0.002, "qv = {qv}");
    }

    #[test]
    fn jump_diffusion_zero_intensity_matches_gbm() {
        let a = gen_jump_diffusion(
            100.0,
            0.0,
            0.2,
            0.0,
            JumpLaw { min: -0.1, max: 0.1 },
            64,
            1.0,
            17,
        )
        .unwrap();
        let b = gen_gbm(100.0, 0.0, 0.2, 64, 1.0, 17).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn jump_diffusion_down_jumps_nonincreasing() {
        let p = gen_jump_diffusion(
            100.0,
            0.0,
            0.0,
            1e6,
            JumpLaw { min: -0.5, max: -0.5 },
            32,
            1.0,
            1,
        )
        .unwrap();
        for w in p.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn jump_count_near_intensity() {
        // Poisson(1): seeing more than 5 jumps has probability < 1e-3
        let (p, c) = jump_diffusion_with_count(
            100.0,
            0.0,
            0.2,
            1.0,
            JumpLaw { min: -0.1, max: 0.1 },
            10_000,
            1.0,
            23,
        )
        .unwrap();
        assert!(c <= 5, "jump count {c} implausible for intensity 1");
        assert_eq!(p.len(), 10_001);
    }

    #[test]
    fn refine_preserves_step_function() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let p = PricePath::new(grid, vec![100.0, 105.0]).unwrap();
        let r = p.refine_grid(2).unwrap();
        assert_eq!(r.grid.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(r.values, vec![100.0, 100.0, 105.0]);
        // evaluation at original times unchanged, running min invariant
        assert_eq!(p.at(0.7), r.at(0.7));
        assert_eq!(p.running_min(1), r.running_min(2));
        let same = p.refine_grid(1).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn returns_round_trip() {
        let p = gen_crr(100.0, 0.3, 50, 1.0, 2).unwrap();
        let r = returns_from_path(&p).unwrap();
        let mut s = vec![p.values[0]];
        for dr in &r.increments {
            s.push(s.last().unwrap() * (1.0 + dr));
        }
        for (a, b) in s.iter().zip(&p.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn seeded_generators_reproducible() {
        let a = gen_gbm(100.0, 0.1, 0.2, 100, 1.0, 99).unwrap();
        let b = gen_gbm(100.0, 0.1, 0.2, 100, 1.0, 99).unwrap();
        assert_eq!(a.values, b.values);
        let c = gen_gbm_indexed(100.0, 0.1, 0.2, 100, 1.0, 99, 1).unwrap();
        assert_ne!(a.values, c.values);
    }
}
