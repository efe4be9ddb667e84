//! Distortion measures and rate-distortion functions of block sources.
//!
//! The block source is the i.i.d. vector source whose letters are `T`-windows
//! drawn from a [`CylinderLaw`]; its distortion is the additive extension of
//! a single-letter measure. `R(D)` is computed by Blahut–Arimoto alternating
//! minimization at a fixed slope `−β`, with a root search on `β` to meet the
//! target distortion. Rates are reported in bits; the solver works in nats.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{checked_pow, index_word, CylinderLaw, MarkovSource};

const LN2: f64 = std::f64::consts::LN_2;

/// Share of the uniform law mixed into warm starts.
const WARM_BLEND: f64 = 1e-6;

/// Largest extrapolation step length.
const MAX_STEP: f64 = 64.0;

/// Cap on slope updates in the distortion root search.
const ROOT_STEPS: usize = 200;

/// Single-letter distortion `d(x, y) ≥ 0` with `d(x, x) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionMeasure {
    table: Vec<Vec<f64>>,
}

impl DistortionMeasure {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let rows = table.len();
        if rows == 0 {
            return Err(Error::InvalidDistortion("empty table".into()));
        }
        let cols = table[0].len();
        if cols == 0 || table.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDistortion("ragged table".into()));
        }
        if table
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidDistortion(
                "entries must be finite and nonnegative".into(),
            ));
        }
        if rows == cols && (0..rows).any(|x| table[x][x] != 0.0) {
            return Err(Error::InvalidDistortion("d(x, x) must be 0".into()));
        }
        Ok(Self { table })
    }

    pub fn hamming(k: usize) -> Self {
        let table = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        Self { table }
    }

    pub fn input_size(&self) -> usize {
        self.table.len()
    }

    pub fn output_size(&self) -> usize {
        self.table[0].len()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.table[x][y]
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn max_value(&self) -> f64 {
        self.table.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// True when `d(x, y) > 0` for every `x ≠ y`, so zero distortion forces
    /// exact reproduction.
    pub fn separates_letters(&self) -> bool {
        self.table
            .iter()
            .enumerate()
            .all(|(x, row)| row.iter().enumerate().all(|(y, &v)| x == y || v > 0.0))
    }

    /// `d_T(s, t) = Σ d(s(i), t(i))`.
    pub fn block_distortion(&self, s: &[usize], t: &[usize]) -> Result<f64> {
        if s.len() != t.len() {
            return Err(Error::LengthMismatch {
                left: s.len(),
                right: t.len(),
            });
        }
        Ok(s.iter().zip(t).map(|(&x, &y)| self.table[x][y]).sum())
    }

    /// Dense `d_T` over `X^T × Y^T`, rows and columns in word-index order.
    pub fn block_table(&self, block: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
        let nx = checked_pow(self.input_size(), block);
        let ny = checked_pow(self.output_size(), block);
        let (nx, ny) = match (nx, ny) {
            (Some(a), Some(b)) if a.checked_mul(b).is_some_and(|c| c <= cap) => (a, b),
            _ => {
                return Err(Error::CapExceeded(format!(
                    "block distortion table for T={block} exceeds {cap} entries"
                )))
            }
        };
        let outputs: Vec<Vec<usize>> = (0..ny)
            .map(|j| index_word(j, block, self.output_size()))
            .collect();
        Ok((0..nx)
            .map(|i| {
                let s = index_word(i, block, self.input_size());
                outputs
                    .iter()
                    .map(|t| s.iter().zip(t).map(|(&x, &y)| self.table[x][y]).sum())
                    .collect()
            })
            .collect())
    }

    /// Smallest `u > 0` with every entry an integer multiple of `u`, if the
    /// entries are rational with a denominator of at most 1000.
    pub fn lattice_unit(&self) -> Option<f64> {
        let positive: Vec<f64> = self
            .table
            .iter()
            .flatten()
            .copied()
            .filter(|&v| v > 0.0)
            .collect();
        if positive.is_empty() {
            return Some(1.0);
        }
        let is_int = |v: f64| (v - v.round()).abs() <= 1e-9 * v.abs().max(1.0);
        for den in 1..=1000u32 {
            let scaled: Vec<f64> = positive.iter().map(|v| v * den as f64).collect();
            if scaled.iter().all(|&v| is_int(v)) {
                let g = scaled.iter().map(|v| v.round() as u64).fold(0u64, gcd);
                return Some(g as f64 / den as f64);
            }
        }
        None
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaOptions {
    /// Stop when the Blahut upper/lower bound gap falls below this (nats).
    pub tol_nats: f64,
    pub max_iterations: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol_nats: 1e-7,
            max_iterations: 100_000,
        }
    }
}

/// One point of a rate-distortion function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdPoint {
    /// Window length `T` of the block source.
    pub block_len: usize,
    /// When true, `distortion` and `rate_bits` are divided by `block_len`.
    pub per_letter: bool,
    /// Distortion achieved by `test_channel` (at most the target).
    pub distortion: f64,
    pub rate_bits: f64,
    /// `dR/dD` in bits per unit distortion at this point.
    pub slope: f64,
    pub iterations: usize,
    /// `W(t | s)` over `Y^T` given `X^T`.
    #[serde(skip)]
    pub test_channel: Vec<Vec<f64>>,
}

impl RdPoint {
    pub fn into_per_letter(mut self) -> Self {
        if !self.per_letter {
            let t = self.block_len as f64;
            self.distortion /= t;
            self.rate_bits /= t;
            self.per_letter = true;
        }
        self
    }

    /// Expected block distortion of the test channel under `law`.
    pub fn expected_distortion(&self, law: &CylinderLaw, d_block: &[Vec<f64>]) -> f64 {
        law.probabilities()
            .iter()
            .zip(&self.test_channel)
            .zip(d_block)
            .map(|((p, w), d)| p * w.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

struct Solution {
    q: Vec<f64>,
    distortion: f64,
    rate_nats: f64,
    iterations: usize,
}

/// Alternating minimization on a fixed source law and distortion table.
struct Solver<'a> {
    p: Vec<f64>,
    rows: Vec<&'a [f64]>,
    row_min: Vec<f64>,
    ny: usize,
    opts: BaOptions,
}

impl<'a> Solver<'a> {
    fn new(law: &CylinderLaw, d_block: &'a [Vec<f64>], opts: BaOptions) -> Self {
        let mut p = Vec::new();
        let mut rows = Vec::new();
        for (x, &px) in law.probabilities().iter().enumerate() {
            if px > 0.0 {
                p.push(px);
                rows.push(d_block[x].as_slice());
            }
        }
        let row_min = rows
            .iter()
            .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let ny = d_block[0].len();
        Self {
            p,
            rows,
            row_min,
            ny,
            opts,
        }
    }

    fn kernel(&self, beta: f64) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .zip(&self.row_min)
            .map(|(r, &m)| r.iter().map(|&d| (-beta * (d - m)).exp()).collect())
            .collect()
    }

    /// One alternating-minimization map `q ↦ q ∘ c(q)`.
    ///
    /// Returns the optimality gap `max log c − Σ q' log c` (nats) and the
    /// objective `Σ p log Z(q)` at the input, which the map never decreases.
    fn map(&self, kernel: &[Vec<f64>], q: &[f64], out: &mut [f64]) -> (f64, f64) {
        let mut c = vec![0.0; self.ny];
        let mut objective = 0.0;
        for (e, &px) in kernel.iter().zip(&self.p) {
            let z: f64 = e.iter().zip(q).map(|(a, b)| a * b).sum();
            objective += px * z.ln();
            let w = px / z;
            for (cy, &ey) in c.iter_mut().zip(e) {
                *cy += w * ey;
            }
        }
        let mut max_log_c = f64::NEG_INFINITY;
        let mut mean_log_c = 0.0;
        for ((o, &qy), &cy) in out.iter_mut().zip(q).zip(&c) {
            let lc = cy.ln();
            max_log_c = max_log_c.max(lc);
            *o = qy * cy;
            if *o > 0.0 {
                mean_log_c += *o * lc;
            }
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= total);
        (max_log_c - mean_log_c, objective)
    }

    /// Runs the map to the gap tolerance, accelerated by squared
    /// extrapolation with a monotone fallback.
    fn solve(&self, beta: f64, q_init: &[f64]) -> Result<Solution> {
        let kernel = self.kernel(beta);
        let floor = WARM_BLEND / self.ny as f64;
        // A warm start may carry outputs that are (almost) absent at this
        // slope but needed; blending keeps every output alive.
        let mut q0: Vec<f64> = q_init
            .iter()
            .map(|v| (1.0 - WARM_BLEND) * v + floor)
            .collect();
        let mut q1 = vec![0.0; self.ny];
        let mut q2 = vec![0.0; self.ny];
        let mut q3 = vec![0.0; self.ny];
        let mut iterations = 0;
        let done = |q: Vec<f64>, iterations: usize| {
            let (distortion, rate_nats) = self.evaluate(&kernel, &q);
            Ok(Solution {
                q,
                distortion,
                rate_nats,
                iterations,
            })
        };
        while iterations < self.opts.max_iterations {
            let (g0, _) = self.map(&kernel, &q0, &mut q1);
            iterations += 1;
            if g0 < self.opts.tol_nats {
                return done(q1, iterations);
            }
            let (g1, l1) = self.map(&kernel, &q1, &mut q2);
            iterations += 1;
            if g1 < self.opts.tol_nats {
                return done(q2, iterations);
            }
            let (mut rr, mut vv) = (0.0, 0.0);
            for i in 0..self.ny {
                let r = q1[i] - q0[i];
                let v = q2[i] - 2.0 * q1[i] + q0[i];
                rr += r * r;
                vv += v * v;
            }
            let mut alpha = if vv > 0.0 { -(rr / vv).sqrt() } else { -1.0 };
            alpha = alpha.clamp(-MAX_STEP, -1.0);
            let extrapolate = |alpha: f64, out: &mut [f64]| {
                let mut ok = true;
                for i in 0..q0.len() {
                    let r = q1[i] - q0[i];
                    let v = q2[i] - 2.0 * q1[i] + q0[i];
                    out[i] = q0[i] - 2.0 * alpha * r + alpha * alpha * v;
                    ok &= out[i] > 0.0 || (out[i] == 0.0 && q2[i] == 0.0);
                }
                ok
            };
            let mut trial = vec![0.0; self.ny];
            while alpha < -1.0 && !extrapolate(alpha, &mut trial) {
                alpha = 0.5 * (alpha - 1.0);
                if alpha > -1.0 - 1e-9 {
                    alpha = -1.0;
                }
            }
            let start = if alpha < -1.0 {
                let total: f64 = trial.iter().sum();
                trial.iter_mut().for_each(|v| *v /= total);
                trial
            } else {
                q2.clone()
            };
            let (g, l) = self.map(&kernel, &start, &mut q3);
            iterations += 1;
            if g < self.opts.tol_nats {
                return done(q3, iterations);
            }
            if l >= l1 {
                std::mem::swap(&mut q0, &mut q3);
            } else {
                std::mem::swap(&mut q0, &mut q2);
            }
        }
        Err(Error::NotConverged {
            iterations: self.opts.max_iterations,
        })
    }

    fn channel(&self, kernel: &[Vec<f64>], q: &[f64]) -> Vec<Vec<f64>> {
        kernel
            .iter()
            .map(|e| {
                let w: Vec<f64> = e.iter().zip(q).map(|(a, b)| a * b).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|v| v / z).collect()
            })
            .collect()
    }

    /// Distortion and mutual information of the channel induced by `q`.
    fn evaluate(&self, kernel: &[Vec<f64>], q: &[f64]) -> (f64, f64) {
        let w = self.channel(kernel, q);
        let mut out = vec![0.0; self.ny];
        for (row, &px) in w.iter().zip(&self.p) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += px * v;
            }
        }
        let mut distortion = 0.0;
        let mut info = 0.0;
        for ((row, d), &px) in w.iter().zip(&self.rows).zip(&self.p) {
            for ((&v, &dv), &o) in row.iter().zip(d.iter()).zip(&out) {
                let mass = px * v;
                if mass > 0.0 {
                    distortion += mass * dv;
                    info += mass * (v / o).ln();
                }
            }
        }
        (distortion, info.max(0.0))
    }

    fn full_channel(&self, law: &CylinderLaw, kernel: &[Vec<f64>], q: &[f64]) -> Vec<Vec<f64>> {
        let support = self.channel(kernel, q);
        let mut it = support.into_iter();
        law.probabilities()
            .iter()
            .map(|&px| {
                if px > 0.0 {
                    it.next().unwrap()
                } else {
                    q.to_vec()
                }
            })
            .collect()
    }
}

/// Zero-rate point: every source word maps to the best fixed reproduction.
fn zero_rate_point(law: &CylinderLaw, d_block: &[Vec<f64>]) -> (f64, usize) {
    let ny = d_block[0].len();
    (0..ny)
        .map(|y| {
            let avg: f64 = law
                .probabilities()
                .iter()
                .zip(d_block)
                .map(|(p, row)| p * row[y])
                .sum();
            (avg, y)
        })
        .fold(
            (f64::INFINITY, 0),
            |best, cur| if cur.0 < best.0 { cur } else { best },
        )
}

/// Minimum-distortion point; `None` when some source word has more than one
/// nearest reproduction (the zero-distortion rate is then not a plain
/// entropy).
fn min_distortion_point(law: &CylinderLaw, d_block: &[Vec<f64>]) -> (f64, Option<Vec<usize>>) {
    let mut dmin = 0.0;
    let mut map = Vec::with_capacity(d_block.len());
    let mut unique = true;
    for (&p, row) in law.probabilities().iter().zip(d_block) {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        let arg = row.iter().position(|&v| v == best).unwrap();
        if p > 0.0 && row.iter().filter(|&&v| v == best).count() > 1 {
            unique = false;
        }
        dmin += p * best;
        map.push(arg);
    }
    (dmin, unique.then_some(map))
}

/// `R(D)` of the i.i.d. block source with letters drawn from `law`, for
/// the additive extension of `d` and block distortion `target`.
pub fn blahut_arimoto(
    law: &CylinderLaw,
    d: &DistortionMeasure,
    target: f64,
    opts: BaOptions,
) -> Result<RdPoint> {
    let d_block = d.block_table(law.horizon(), usize::MAX)?;
    rate_at(law, &d_block, target, opts, None).map(|(pt, _)| pt)
}

/// Core of [`blahut_arimoto`]; accepts a warm start and returns the final
/// output law for reuse.
fn rate_at(
    law: &CylinderLaw,
    d_block: &[Vec<f64>],
    target: f64,
    opts: BaOptions,
    warm: Option<&[f64]>,
) -> Result<(RdPoint, Vec<f64>)> {
    let block_len = law.horizon();
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::DInfeasible(target));
    }
    let ny = d_block[0].len();
    let (d_max, y_star) = zero_rate_point(law, d_block);
    if target >= d_max {
        let mut q = vec![0.0; ny];
        q[y_star] = 1.0;
        let w = vec![q.clone(); d_block.len()];
        return Ok((
            RdPoint {
                block_len,
                per_letter: false,
                distortion: d_max,
                rate_bits: 0.0,
                slope: 0.0,
                iterations: 0,
                test_channel: w,
            },
            vec![1.0 / ny as f64; ny],
        ));
    }
    let (d_min, map) = min_distortion_point(law, d_block);
    if target < d_min - 1e-12 {
        return Err(Error::DInfeasible(target));
    }
    if target <= d_min + 1e-15 {
        let map = map.ok_or(Error::ZeroDistortionAmbiguous)?;
        let mut out = vec![0.0; ny];
        let mut w = vec![vec![0.0; ny]; d_block.len()];
        for (x, (&p, &y)) in law.probabilities().iter().zip(&map).enumerate() {
            out[y] += p;
            w[x][y] = 1.0;
        }
        let rate_bits = -out
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.log2())
            .sum::<f64>();
        return Ok((
            RdPoint {
                block_len,
                per_letter: false,
                distortion: d_min,
                rate_bits,
                slope: f64::NEG_INFINITY,
                iterations: 0,
                test_channel: w,
            },
            out,
        ));
    }

    let solver = Solver::new(law, d_block, opts);
    let uniform = vec![1.0 / ny as f64; ny];
    let start = warm.unwrap_or(&uniform);
    let mut iterations = 0;

    // Bracket: D(β) decreases from d_max (β → 0) to d_min (β → ∞).
    let mut lo_beta = 0.0;
    let mut lo_d = d_max;
    let mut hi_beta = 1.0;
    let mut hi = solver.solve(hi_beta, start)?;
    iterations += hi.iterations;
    while hi.distortion > target {
        lo_beta = hi_beta;
        lo_d = hi.distortion;
        hi_beta *= 2.0;
        if hi_beta > 1e12 {
            return Err(Error::NotConverged { iterations });
        }
        hi = solver.solve(hi_beta, &hi.q)?;
        iterations += hi.iterations;
    }
    let mut lo_q = hi.q.clone();

    // Illinois regula falsi on f(β) = D(β) − target, keeping D(hi) ≤ target.
    let mut f_lo = lo_d - target;
    let mut f_hi = hi.distortion - target;
    let mut side = 0i8;
    for _ in 0..ROOT_STEPS {
        // By convexity R(D_hi) − R(target) ≤ β_hi (target − D_hi).
        if hi_beta * (target - hi.distortion) <= opts.tol_nats
            || hi_beta - lo_beta <= 1e-9 * hi_beta
        {
            break;
        }
        let mut beta = hi_beta - f_hi * (hi_beta - lo_beta) / (f_hi - f_lo);
        if !(beta > lo_beta && beta < hi_beta) {
            beta = 0.5 * (lo_beta + hi_beta);
        }
        let warm_q = if beta - lo_beta < hi_beta - beta && lo_beta > 0.0 {
            &lo_q
        } else {
            &hi.q
        };
        let mid = solver.solve(beta, warm_q)?;
        iterations += mid.iterations;
        let f_mid = mid.distortion - target;
        if f_mid > 0.0 {
            lo_beta = beta;
            f_lo = f_mid;
            lo_q = mid.q;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi_beta = beta;
            f_hi = f_mid;
            hi = mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }

    let kernel = solver.kernel(hi_beta);
    let test_channel = solver.full_channel(law, &kernel, &hi.q);
    Ok((
        RdPoint {
            block_len,
            per_letter: false,
            distortion: hi.distortion,
            rate_bits: hi.rate_nats / LN2,
            slope: -hi_beta / LN2,
            iterations,
            test_channel,
        },
        hi.q,
    ))
}

fn check_zero_path(d: &DistortionMeasure, per_letter: f64) -> Result<()> {
    if per_letter == 0.0 && !d.separates_letters() {
        return Err(Error::ZeroDistortionAmbiguous);
    }
    Ok(())
}

/// `(1/T) R_{X^T}(T D)` on the stationary `T`-window law of `source`.
pub fn rd_vector_source(
    source: &MarkovSource,
    d: &DistortionMeasure,
    block: usize,
    distortion_per_letter: f64,
    opts: BaOptions,
) -> Result<RdPoint> {
    check_zero_path(d, distortion_per_letter)?;
    let law = source.marginal(block)?;
    let d_block = d.block_table(block, source.cap().saturating_mul(source.cap()))?;
    let (pt, _) = rate_at(
        &law,
        &d_block,
        block as f64 * distortion_per_letter,
        opts,
        None,
    )?;
    Ok(pt.into_per_letter())
}

/// Block rate-distortion values `R_{X^T}(x)` with the block distortion
/// table built once per `T`.
pub struct BlockRd<'a> {
    law: CylinderLaw,
    d_block: Vec<Vec<f64>>,
    opts: BaOptions,
    _source: std::marker::PhantomData<&'a ()>,
}

impl BlockRd<'_> {
    pub fn new(
        source: &MarkovSource,
        d: &DistortionMeasure,
        block: usize,
        opts: BaOptions,
    ) -> Result<Self> {
        let law = source.marginal(block)?;
        let d_block = d.block_table(block, source.cap().saturating_mul(source.cap()))?;
        Ok(Self {
            law,
            d_block,
            opts,
            _source: std::marker::PhantomData,
        })
    }

    pub fn law(&self) -> &CylinderLaw {
        &self.law
    }

    /// Raw block value `R_{X^T}(block_distortion)` in bits per block.
    pub fn rate(&self, block_distortion: f64) -> Result<RdPoint> {
        rate_at(&self.law, &self.d_block, block_distortion, self.opts, None).map(|(p, _)| p)
    }
}

/// Per-letter values `(1/T) R_{X^T}(T D)` for each `T` in `blocks`. The
/// `T → ∞` limit is the source's rate-distortion function; every entry is a
/// finite-`T` approximation of it.
pub fn rd_limit_estimate(
    source: &MarkovSource,
    d: &DistortionMeasure,
    distortion_per_letter: f64,
    blocks: &[usize],
    opts: BaOptions,
) -> Result<Vec<RdPoint>> {
    blocks
        .iter()
        .map(|&t| rd_vector_source(source, d, t, distortion_per_letter, opts))
        .collect()
}

/// `n_points` evenly spaced block distortions from 0 to `D_max`.
pub fn rd_curve(
    law: &CylinderLaw,
    d: &DistortionMeasure,
    n_points: usize,
    opts: BaOptions,
) -> Result<Vec<RdPoint>> {
    if n_points < 2 {
        return Err(Error::InfeasibleParameters(
            "a curve needs at least 2 points".into(),
        ));
    }
    let d_block = d.block_table(law.horizon(), usize::MAX)?;
    let (d_max, _) = zero_rate_point(law, &d_block);
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let target = d_max * i as f64 / (n_points - 1) as f64;
        let (pt, q) = rate_at(law, &d_block, target, opts, warm.as_deref())?;
        if pt.slope.is_finite() && pt.rate_bits > 0.0 {
            warm = Some(q);
        }
        out.push(pt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bernoulli(p: f64) -> CylinderLaw {
        CylinderLaw::new(2, 1, vec![1.0 - p, p]).unwrap()
    }

    #[test]
    fn block_distortion_examples() {
        let h = DistortionMeasure::hamming(2);
        assert_eq!(h.block_distortion(&[0, 1], &[0, 1]).unwrap(), 0.0);
        assert_eq!(h.block_distortion(&[0, 0], &[0, 1]).unwrap(), 1.0);
        let w = DistortionMeasure::new(vec![vec![0.0, 2.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(w.block_distortion(&[0, 1], &[1, 0]).unwrap(), 5.0);
        assert!(matches!(
            w.block_distortion(&[0], &[1, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(DistortionMeasure::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(DistortionMeasure::new(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn lattice_units() {
        assert_eq!(DistortionMeasure::hamming(3).lattice_unit(), Some(1.0));
        let w = DistortionMeasure::new(vec![vec![0.0, 0.5], vec![1.5, 0.0]]).unwrap();
        assert_eq!(w.lattice_unit(), Some(0.5));
        let w =
            DistortionMeasure::new(vec![vec![0.0, std::f64::consts::PI], vec![1.0, 0.0]]).unwrap();
        assert_eq!(w.lattice_unit(), None);
    }

    #[test]
    fn uniform_binary_points() {
        let h = DistortionMeasure::hamming(2);
        let pt = blahut_arimoto(&bernoulli(0.5), &h, 0.5, BaOptions::default()).unwrap();
        assert_eq!(pt.rate_bits, 0.0);
        let pt = blahut_arimoto(&bernoulli(0.5), &h, 0.1, BaOptions::default()).unwrap();
        let expected = 1.0 - binary_entropy(0.1);
        assert_abs_diff_eq!(pt.rate_bits, expected, epsilon = 1e-5);
        assert!(pt.distortion <= 0.1 + 1e-9);
    }

    #[test]
    fn zero_distortion_is_entropy() {
        let h = DistortionMeasure::hamming(2);
        let pt = blahut_arimoto(&bernoulli(0.3), &h, 0.0, BaOptions::default()).unwrap();
        assert_abs_diff_eq!(pt.rate_bits, binary_entropy(0.3), epsilon = 1e-12);
        let ambiguous = DistortionMeasure::new(vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let law = CylinderLaw::new(3, 1, vec![0.3, 0.3, 0.4]).unwrap();
        assert!(matches!(
            blahut_arimoto(&law, &ambiguous, 0.0, BaOptions::default()),
            Err(Error::ZeroDistortionAmbiguous)
        ));
    }

    #[test]
    fn negative_target_rejected() {
        let h = DistortionMeasure::hamming(2);
        assert!(matches!(
            blahut_arimoto(&bernoulli(0.3), &h, -0.1, BaOptions::default()),
            Err(Error::DInfeasible(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let h = DistortionMeasure::hamming(2);
        let opts = BaOptions {
            tol_nats: 1e-15,
            max_iterations: 3,
        };
        assert!(matches!(
            blahut_arimoto(&bernoulli(0.3), &h, 0.1, opts),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn vector_source_entropy_path() {
        let src = MarkovSource::binary_symmetric(0.3).unwrap();
        let h = DistortionMeasure::hamming(2);
        let pt = rd_vector_source(&src, &h, 1, 0.0, BaOptions::default()).unwrap();
        assert_abs_diff_eq!(pt.rate_bits, 1.0, epsilon = 1e-12);
        let pt = rd_vector_source(&src, &h, 4, 0.0, BaOptions::default()).unwrap();
        assert_abs_diff_eq!(pt.rate_bits, 0.911, epsilon = 1e-3);
        let amb = DistortionMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            rd_vector_source(&src, &amb, 2, 0.0, BaOptions::default()),
            Err(Error::ZeroDistortionAmbiguous)
        ));
    }

    #[test]
    fn curve_endpoints() {
        let h = DistortionMeasure::hamming(2);
        let curve = rd_curve(&bernoulli(0.3), &h, 5, BaOptions::default()).unwrap();
        assert_eq!(curve.len(), 5);
        assert_abs_diff_eq!(curve[0].rate_bits, binary_entropy(0.3), epsilon = 1e-12);
        assert_eq!(curve[4].rate_bits, 0.0);
        assert!(curve
            .windows(2)
            .all(|w| w[1].rate_bits <= w[0].rate_bits + 1e-9));
    }
}
