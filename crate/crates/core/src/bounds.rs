//! The achievable-rate bound for psi-mixing sources and its decomposition.
//!
//! With `λ = λ_τ`, `D' = D/(1 − λ − β)` and `rd(x) = R_{X^T}(x)` (the
//! block rate-distortion value in bits per `T`-block), the bound is
//!
//! ```text
//! R_bound = (1 − λ − β)/(T + τ) · rd((T + τ) D').
//! ```
//!
//! Its distance to the per-letter limit splits into four terms
//!
//! ```text
//! T1 = −(λ + β)/(T + τ) · rd((T + τ) D')
//! T2 = (1/(T + τ) − 1/T) · rd((T + τ) D')
//! T3 = (rd((T + τ) D') − rd(T D'))/T
//! T4 = rd(T D')/T − R_X(D')
//! ```
//!
//! that sum to `R_bound − R_X(D')`. The limit `R_X(D')` is not computable;
//! it is replaced by the finite-window value at a reference length, so `T4`
//! is a proxy.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixing::psi_markov;
use crate::process::MarkovSource;
use crate::ratedist::{BaOptions, BlockRd, DistortionMeasure};

/// Slack added before flooring `(1 − λ − β) k`, so that products that are
/// integers in exact arithmetic are not rounded down.
const FLOOR_SLACK: f64 = 1e-9;

/// Feasibility guard: `1 − λ − β` must exceed this.
const MIN_SHARE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Terms {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl Terms {
    pub fn sum(&self) -> f64 {
        self.t1 + self.t2 + self.t3 + self.t4
    }
}

/// Analytic envelopes of the first three terms, in bits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelopes {
    /// `(λ + β) log|X|`.
    pub t1: f64,
    /// `(τ/T) log|X|`, shared by `T2` and `T3`.
    pub t2_t3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub block_len: usize,
    pub gap: usize,
    pub beta: f64,
    pub distortion: f64,
    pub lambda: f64,
    pub d_prime: f64,
    pub rate_bound_bits: f64,
    /// `rd((T + τ) D')`, bits per block.
    pub rd_block: f64,
    /// Window length used for the limit proxy.
    pub reference_len: usize,
    /// `R_{X^{T_ref}}(T_ref D')/T_ref`, bits per letter.
    pub proxy_bits: f64,
    pub terms: Terms,
    pub envelopes: Envelopes,
    /// `(λ + β) log|X| + |T2| + |T3| + |T4|`.
    pub gap_bound: f64,
}

impl BoundReport {
    /// `|R_bound − proxy|`.
    pub fn proxy_gap(&self) -> f64 {
        (self.rate_bound_bits - self.proxy_bits).abs()
    }

    /// True when every term sits inside its envelope (plus `tol`) and the
    /// total gap is inside `gap_bound`.
    pub fn within_envelopes(&self, tol: f64) -> bool {
        self.terms.t1.abs() <= self.envelopes.t1 + tol
            && self.terms.t2.abs() <= self.envelopes.t2_t3 + tol
            && self.terms.t3.abs() <= self.envelopes.t2_t3 + tol
            && self.proxy_gap() <= self.gap_bound + tol
    }
}

/// `N = ⌊(1 − λ − β) k⌋ + 1`, the good-slot count the decoder relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GoodSlotCount {
    pub count: usize,
    /// The formula exceeded `k` and was clamped (only when `λ = β = 0`).
    pub clamped: bool,
}

impl GoodSlotCount {
    /// `N/((T + τ) k) ≥ (1 − λ − β)/(T + τ)`.
    pub fn rate_ratio_holds(&self, k: usize, lambda: f64, beta: f64) -> bool {
        self.count as f64 >= (1.0 - lambda - beta) * k as f64 - FLOOR_SLACK
    }
}

fn check_share(lambda: f64, beta: f64) -> Result<f64> {
    let share = 1.0 - lambda - beta;
    if !(beta >= 0.0) || !(share > MIN_SHARE) || share > 1.0 + 1e-12 {
        return Err(Error::InfeasibleParameters(format!(
            "need 0 <= beta and lambda + beta < 1 (lambda={lambda}, beta={beta})"
        )));
    }
    Ok(share.min(1.0))
}

pub fn good_slot_count(k: usize, lambda: f64, beta: f64) -> Result<GoodSlotCount> {
    let share = check_share(lambda, beta)?;
    let raw = (share * k as f64 + FLOOR_SLACK).floor() as usize + 1;
    Ok(if raw > k {
        GoodSlotCount {
            count: k,
            clamped: true,
        }
    } else {
        GoodSlotCount {
            count: raw,
            clamped: false,
        }
    })
}

/// `(K/a)(a' − a)`: for a convex non-increasing `f` on `[0, ∞)` with
/// `0 ≤ f ≤ K`, `|f(a) − f(a')|` is at most this.
pub fn convex_gap_bound(k: f64, a: f64, a_prime: f64) -> Result<f64> {
    if !(a > 0.0 && a <= a_prime && k >= 0.0) || !a_prime.is_finite() || !k.is_finite() {
        return Err(Error::BadInterval { k, a, a_prime });
    }
    Ok(k / a * (a_prime - a))
}

/// Memoized block rate-distortion values keyed by `(T, block distortion)`.
pub struct RdCache<'a> {
    source: &'a MarkovSource,
    measure: &'a DistortionMeasure,
    opts: BaOptions,
    blocks: BTreeMap<usize, BlockRd<'a>>,
    values: BTreeMap<(usize, u64), f64>,
}

impl<'a> RdCache<'a> {
    pub fn new(source: &'a MarkovSource, measure: &'a DistortionMeasure, opts: BaOptions) -> Self {
        Self {
            source,
            measure,
            opts,
            blocks: BTreeMap::new(),
            values: BTreeMap::new(),
        }
    }

    /// `R_{X^T}(x)` in bits per block.
    pub fn rate(&mut self, block: usize, block_distortion: f64) -> Result<f64> {
        let key = (block, block_distortion.to_bits());
        if let Some(&v) = self.values.get(&key) {
            return Ok(v);
        }
        if !self.blocks.contains_key(&block) {
            let rd = BlockRd::new(self.source, self.measure, block, self.opts)?;
            self.blocks.insert(block, rd);
        }
        let v = self.blocks[&block].rate(block_distortion)?.rate_bits;
        self.values.insert(key, v);
        Ok(v)
    }

    pub fn solves(&self) -> usize {
        self.values.len()
    }
}

fn validate_inputs(
    source: &MarkovSource,
    measure: &DistortionMeasure,
    distortion: f64,
    block: usize,
) -> Result<()> {
    if measure.input_size() != source.alphabet_size() {
        return Err(Error::InvalidDistortion(format!(
            "measure has {} input letters, source has {}",
            measure.input_size(),
            source.alphabet_size()
        )));
    }
    if !(distortion >= 0.0) || !distortion.is_finite() {
        return Err(Error::DInfeasible(distortion));
    }
    if block == 0 {
        return Err(Error::InfeasibleParameters("T must be at least 1".into()));
    }
    Ok(())
}

/// Full report at one `(D, T, τ, β)` with the limit proxy taken at
/// `reference_len`.
#[allow(clippy::too_many_arguments)]
pub fn term_decomposition_cached(
    cache: &mut RdCache<'_>,
    distortion: f64,
    block: usize,
    gap: usize,
    beta: f64,
    reference_len: usize,
) -> Result<BoundReport> {
    validate_inputs(cache.source, cache.measure, distortion, block)?;
    let lambda = psi_markov(cache.source, gap)?;
    let share = check_share(lambda, beta)?;
    let log_x = (cache.source.alphabet_size() as f64).log2();
    let d_prime = distortion / share;
    let t = block as f64;
    let tt = (block + gap) as f64;

    let rd_a = cache.rate(block, tt * d_prime)?;
    let rd_b = if gap == 0 {
        rd_a
    } else {
        cache.rate(block, t * d_prime)?
    };
    let proxy = cache.rate(reference_len, reference_len as f64 * d_prime)? / reference_len as f64;

    let rate_bound_bits = share / tt * rd_a;
    let terms = Terms {
        t1: -(lambda + beta) / tt * rd_a,
        t2: (1.0 / tt - 1.0 / t) * rd_a,
        t3: (rd_a - rd_b) / t,
        t4: rd_b / t - proxy,
    };
    let envelopes = Envelopes {
        t1: (lambda + beta) * log_x,
        t2_t3: gap as f64 / t * log_x,
    };
    let gap_bound = envelopes.t1 + terms.t2.abs() + terms.t3.abs() + terms.t4.abs();
    Ok(BoundReport {
        block_len: block,
        gap,
        beta,
        distortion,
        lambda,
        d_prime,
        rate_bound_bits,
        rd_block: rd_a,
        reference_len,
        proxy_bits: proxy,
        terms,
        envelopes,
        gap_bound,
    })
}

/// [`term_decomposition_cached`] with a fresh cache.
pub fn term_decomposition(
    source: &MarkovSource,
    measure: &DistortionMeasure,
    distortion: f64,
    block: usize,
    gap: usize,
    beta: f64,
    reference_len: usize,
) -> Result<BoundReport> {
    let mut cache = RdCache::new(source, measure, BaOptions::default());
    term_decomposition_cached(&mut cache, distortion, block, gap, beta, reference_len)
}

/// The achievable-rate bound at `(D, T, τ, β)`; the limit proxy is the
/// window value at `T` itself, so `T4 = 0`.
pub fn achievable_rate(
    source: &MarkovSource,
    measure: &DistortionMeasure,
    distortion: f64,
    block: usize,
    gap: usize,
    beta: f64,
) -> Result<BoundReport> {
    term_decomposition(source, measure, distortion, block, gap, beta, block)
}

/// One row of a sweep; `report` is `None` when `λ_τ + β ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub block_len: usize,
    pub gap: usize,
    pub beta: f64,
    pub lambda: f64,
    pub report: Option<BoundReport>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.report.is_some()
    }
}

/// Reports over the grid `T × τ × β`, sorted by `(T, τ, β)`, with the limit
/// proxy at the largest `T`.
pub fn convergence_sweep(
    source: &MarkovSource,
    measure: &DistortionMeasure,
    distortion: f64,
    blocks: &[usize],
    gaps: &[usize],
    betas: &[f64],
    opts: BaOptions,
) -> Result<Vec<SweepRow>> {
    let reference_len = *blocks
        .iter()
        .max()
        .ok_or_else(|| Error::InfeasibleParameters("empty T list".into()))?;
    let mut blocks = blocks.to_vec();
    blocks.sort_unstable();
    blocks.dedup();
    let mut gaps = gaps.to_vec();
    gaps.sort_unstable();
    gaps.dedup();
    let mut betas = betas.to_vec();
    betas.sort_by(f64::total_cmp);
    betas.dedup();

    let mut cache = RdCache::new(source, measure, opts);
    let mut rows = Vec::with_capacity(blocks.len() * gaps.len() * betas.len());
    for &block in &blocks {
        for &gap in &gaps {
            let lambda = psi_markov(source, gap)?;
            for &beta in &betas {
                let report = match term_decomposition_cached(
                    &mut cache,
                    distortion,
                    block,
                    gap,
                    beta,
                    reference_len,
                ) {
                    Ok(r) => Some(r),
                    Err(Error::InfeasibleParameters(_)) => None,
                    Err(e) => return Err(e),
                };
                rows.push(SweepRow {
                    block_len: block,
                    gap,
                    beta,
                    lambda,
                    report,
                });
            }
        }
    }
    Ok(rows)
}
