//! The driving walk: a simple random walk in x paired with a nearest-neighbour
//! Bessel-type walk in the height coordinate.
//!
//! Each step moves one coordinate, chosen by a fair coin. The x-move is ±1
//! with equal probability; the height move is +1 with probability
//! `1/2 + p_up(r)`. The combined per-step law is therefore
//! `(1/4, 1/4, 1/4 + p_up/2, 1/4 − p_up/2)` over `(x−1, x+1, r+1, r−1)`.
//! Height 0 is never a live state: the bottom row is absorbing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Margin keeping every per-step probability strictly inside (0, 1/2).
pub const CLAMP_MARGIN: f64 = 1e-12;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkScheme {
    /// Exact transition probabilities of the Csáki–Földes–Révész NN walk.
    Csaki,
    /// The large-height asymptotic bias (2ν + 1)/(4R).
    Asymptotic,
}

impl WalkScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            WalkScheme::Csaki => "csaki",
            WalkScheme::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Bessel order ν.
    pub nu: f64,
    pub scheme: WalkScheme,
    /// Under the Csáki scheme, heights below this use the asymptotic bias.
    pub p_floor_height: u32,
}

impl WalkParams {
    pub fn new(nu: f64, scheme: WalkScheme) -> Self {
        Self {
            nu,
            scheme,
            p_floor_height: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() {
            return Err(Error::Config(format!("nu must be finite, got {}", self.nu)));
        }
        if self.p_floor_height < 1 {
            return Err(Error::Config("p_floor_height must be at least 1".into()));
        }
        Ok(())
    }
}

/// Position of the pair walk: lattice column and height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WalkState {
    pub x: i64,
    pub r: i64,
}

/// Up-bias before clamping, and whether clamping changed it.
fn p_up_unclamped(height: u64, params: &WalkParams) -> f64 {
    let r = height as f64;
    let asymptotic = (2.0 * params.nu + 1.0) / (4.0 * r);
    match params.scheme {
        WalkScheme::Asymptotic => asymptotic,
        WalkScheme::Csaki => {
            let floor = u64::from(params.p_floor_height.max(2));
            if height < floor || params.nu == 0.0 {
                return asymptotic;
            }
            let e = -2.0 * params.nu;
            if e == 1.0 {
                // Integer powers are exact; the ratio is exactly 1/2.
                return ((r - 1.0) - r) / ((r - 1.0) - (r + 1.0)) - 0.5;
            }
            // Both differences share the factor R^e; factor it out and form
            // (1 ∓ 1/R)^e − 1 without cancellation.
            let lower = (e * (-1.0 / r).ln_1p()).exp_m1();
            let upper = (e * (1.0 / r).ln_1p()).exp_m1();
            lower / (lower - upper) - 0.5
        }
    }
}

/// Clamped up-bias and a flag telling whether the clamp was active.
pub fn p_up_checked(height: u64, params: &WalkParams) -> Result<(f64, bool)> {
    if height == 0 {
        return Err(Error::Domain("p_up requires height R >= 1".into()));
    }
    let raw = p_up_unclamped(height, params);
    if !raw.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite up-bias at R = {height}, nu = {}",
            params.nu
        )));
    }
    let lo = -0.5 + CLAMP_MARGIN;
    let hi = 0.5 - CLAMP_MARGIN;
    let clamped = raw.clamp(lo, hi);
    Ok((clamped, clamped != raw))
}

/// Up-bias p_R of the height walk at height `height` ≥ 1.
pub fn p_up(height: i64, params: &WalkParams) -> Result<f64> {
    if height < 1 {
        return Err(Error::Domain(format!("p_up requires R >= 1, got {height}")));
    }
    p_up_checked(height as u64, params).map(|(p, _)| p)
}

/// One-step law of the pair walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDistribution {
    pub left: f64,
    pub right: f64,
    pub up: f64,
    pub down: f64,
}

impl StepDistribution {
    pub fn total(&self) -> f64 {
        self.left + self.right + self.up + self.down
    }
}

pub fn step_distribution(state: WalkState, params: &WalkParams) -> Result<StepDistribution> {
    if state.r < 1 {
        return Err(Error::Domain(format!(
            "height {} is absorbing; no step distribution",
            state.r
        )));
    }
    let p = p_up(state.r, params)?;
    Ok(StepDistribution {
        left: 0.25,
        right: 0.25,
        up: 0.25 + 0.5 * p,
        down: 0.25 - 0.5 * p,
    })
}

/// Up-biases tabulated for heights `1..=max_height`.
#[derive(Debug, Clone)]
pub struct StepTable {
    params: WalkParams,
    p_up: Vec<f64>,
    clamped: usize,
}

impl StepTable {
    pub fn new(params: WalkParams, max_height: u64) -> Result<Self> {
        params.validate()?;
        let mut table = Self {
            params,
            p_up: vec![0.0],
            clamped: 0,
        };
        table.extend_to(max_height)?;
        Ok(table)
    }

    fn extend_to(&mut self, max_height: u64) -> Result<()> {
        let mut h = self.p_up.len() as u64;
        while h <= max_height {
            let (p, was_clamped) = p_up_checked(h, &self.params)?;
            self.clamped += usize::from(was_clamped);
            self.p_up.push(p);
            h += 1;
        }
        Ok(())
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    pub fn max_height(&self) -> u64 {
        self.p_up.len() as u64 - 1
    }

    /// Number of tabulated heights whose bias hit the clamp.
    pub fn clamped_heights(&self) -> usize {
        self.clamped
    }

    pub fn p_up(&self, height: usize) -> f64 {
        self.p_up[height]
    }

    /// Probability of the height move r → r + 1 within one pair-walk step.
    pub fn up(&self, height: usize) -> f64 {
        0.25 + 0.5 * self.p_up[height]
    }

    /// Probability of the height move r → r − 1 within one pair-walk step.
    pub fn down(&self, height: usize) -> f64 {
        0.25 - 0.5 * self.p_up[height]
    }

    /// Run the pair walk from `start` until `absorbing` holds.
    pub fn sample_until_absorbed<R, F>(
        &mut self,
        start: WalkState,
        absorbing: F,
        rng: &mut R,
        budget: u64,
    ) -> Result<WalkState>
    where
        R: Rng + ?Sized,
        F: Fn(WalkState) -> bool,
    {
        if absorbing(start) {
            return Err(Error::Domain("start state is already absorbing".into()));
        }
        let mut s = start;
        for _ in 0..budget {
            if s.r < 1 {
                return Err(Error::Domain(format!(
                    "walk reached height {} without being absorbed",
                    s.r
                )));
            }
            let h = s.r as usize;
            if h as u64 > self.max_height() {
                self.extend_to((h as u64).saturating_mul(2))?;
            }
            let u: f64 = rng.gen();
            if u < 0.25 {
                s.x -= 1;
            } else if u < 0.5 {
                s.x += 1;
            } else if u < 0.5 + self.up(h) {
                s.r += 1;
            } else {
                s.r -= 1;
            }
            if absorbing(s) {
                return Ok(s);
            }
        }
        Err(Error::Runaway { steps: budget })
    }
}

/// Run the pair walk from `start` until `absorbing` holds.
pub fn sample_until_absorbed<R, F>(
    start: WalkState,
    absorbing: F,
    params: &WalkParams,
    rng: &mut R,
) -> Result<WalkState>
where
    R: Rng + ?Sized,
    F: Fn(WalkState) -> bool,
{
    let mut table = StepTable::new(*params, (start.r.max(1) as u64).saturating_mul(2))?;
    table.sample_until_absorbed(start, absorbing, rng, DEFAULT_STEP_BUDGET)
}

/// CDF at `y` of a Bessel(ν) process at time `t` started from 0.
///
/// The marginal density is proportional to `y^{2ν+1} e^{−y²/(2t)}`, so the
/// CDF is the regularized lower incomplete gamma `P(ν + 1, y²/(2t))`.
pub fn bessel_marginal_cdf(nu: f64, t: f64, y: f64) -> Result<f64> {
    if !(nu > -1.0) {
        return Err(Error::Domain(format!("Bessel order must exceed -1, got {nu}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if y.is_nan() {
        return Err(Error::Domain("y is NaN".into()));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    if y.is_infinite() {
        return Ok(1.0);
    }
    statrs::function::gamma::checked_gamma_lr(nu + 1.0, y * y / (2.0 * t))
        .map_err(|e| Error::Numeric(format!("incomplete gamma failed: {e}")))
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F>(samples: &mut [f64], cdf: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if samples.is_empty() {
        return Err(Error::Domain("KS distance of an empty sample".into()));
    }
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i];
        let mut k = i;
        while k < samples.len() && samples[k] == v {
            k += 1;
        }
        let f = cdf(v)?;
        let before = i as f64 / n;
        let after = k as f64 / n;
        d = d.max((f - before).abs()).max((after - f).abs());
        i = k;
    }
    Ok(d)
}

/// Height walk alone (every step a height move, deterministic up-move at 0).
fn pure_height_walk<R: Rng>(table: &StepTable, n_steps: u64, rng: &mut R) -> i64 {
    let mut x: usize = 0;
    for _ in 0..n_steps {
        if x == 0 {
            x = 1;
            continue;
        }
        let u: f64 = rng.gen();
        if u < 0.5 + table.p_up(x) {
            x += 1;
        } else {
            x -= 1;
        }
    }
    x as i64
}

/// KS distance between `X_n/√n` of the pure height walk, over independent
/// replicas, and the Bessel(ν) marginal at time 1.
pub fn invariance_diagnostic(params: &WalkParams, n_steps: u64, n_replicas: u64, seed: u64) -> Result<f64> {
    if !(params.nu > 0.0) {
        return Err(Error::Unsupported(format!(
            "invariance diagnostic is defined for nu > 0 only, got {}",
            params.nu
        )));
    }
    if n_replicas == 0 {
        return Err(Error::Domain("at least one replica is required".into()));
    }
    let table = StepTable::new(*params, n_steps + 1)?;
    let scale = (n_steps as f64).sqrt();
    let mut samples: Vec<f64> = (0..n_replicas)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng::substream(seed, k);
            pure_height_walk(&table, n_steps, &mut stream) as f64 / scale
        })
        .collect();
    let nu = params.nu;
    ks_distance(&mut samples, |y| bessel_marginal_cdf(nu, 1.0, y))
}
