//! Monte Carlo random-coding experiments.
//!
//! Codewords are realizations of the slot procedure sharing one flag vector.
//! A codeword goes through a memoryless channel and the decoder looks only
//! at the first `N = ⌊(1 − λ_τ − β) k⌋ + 1` good `A` slots. The default
//! threshold decoder accepts the unique codeword whose average good-slot
//! block distortion to the channel output is at most
//! `D_slot = (T + τ) D/(1 − λ_τ − β)`; fewer than `N` good slots is an
//! erasure. This decoder is a reconstruction of a procedure the underlying
//! argument only invokes by reference.
//!
//! Small codebooks are drawn explicitly. For large ones (the interesting
//! regime has `2^{nR}` codewords) only the transmitted codeword is drawn;
//! competitors enter through the exact probability that one of them passes
//! the decoder. Their good slots are i.i.d. `P_T` and independent of the
//! transmitted word, so that probability is a convolution of per-slot
//! distortion laws, and `M − 1` independent competitors give
//! `1 − (1 − q)^{M − 1}`.

use std::collections::HashMap;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::good_slot_count;
use crate::error::{Error, Result};
use crate::process::{word_index, MarkovSource, PathSampler};
use crate::ratedist::DistortionMeasure;
use crate::rng::{
    child_rng, child_seed, TAG_BATCH, TAG_CHANNEL, TAG_CONFUSION, TAG_DIRECT, TAG_MESSAGE,
};
use crate::simulate::{draw_flags, SlotFlags, SlotSchedule, SlotSimulator};

const ROW_SUM_TOL: f64 = 1e-12;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Relative slack when comparing a distortion with the threshold.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Per-letter channel `c(y | x)` applied independently to every symbol.
#[derive(Clone, Debug)]
pub struct MemorylessChannel {
    table: Vec<Vec<f64>>,
    rows: Vec<WeightedIndex<f64>>,
}

impl PartialEq for MemorylessChannel {
    fn eq(&self, other: &Self) -> bool {
        self.table == other.table
    }
}

impl Serialize for MemorylessChannel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.table.serialize(s)
    }
}

impl MemorylessChannel {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let cols = table.first().map_or(0, Vec::len);
        if table.is_empty() || cols == 0 || table.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidChannel("empty or ragged table".into()));
        }
        for (x, row) in table.iter().enumerate() {
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidChannel(format!(
                    "row {x} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChannel(format!("row {x} sums to {sum}")));
            }
        }
        let rows = table
            .iter()
            .map(|r| WeightedIndex::new(r).expect("validated row"))
            .collect();
        Ok(Self { table, rows })
    }

    /// Binary symmetric channel with crossover `q`.
    pub fn bsc(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidChannel(format!(
                "crossover {q} outside [0, 1]"
            )));
        }
        Self::new(vec![vec![1.0 - q, q], vec![q, 1.0 - q]])
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|x| (0..k).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn input_size(&self) -> usize {
        self.table.len()
    }

    pub fn output_size(&self) -> usize {
        self.table[0].len()
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn transmit<R: Rng + ?Sized>(&self, input: &[usize], rng: &mut R) -> Vec<usize> {
        input.iter().map(|&x| self.rows[x].sample(rng)).collect()
    }
}

/// Wilson score interval for `successes` out of `trials` at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let high = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (low, high)
}

fn check_alphabets(
    source: &MarkovSource,
    channel: &MemorylessChannel,
    measure: &DistortionMeasure,
) -> Result<()> {
    if channel.input_size() != source.alphabet_size()
        || measure.input_size() != source.alphabet_size()
        || measure.output_size() != channel.output_size()
    {
        return Err(Error::ConfigMismatch(format!(
            "alphabets disagree: source {}, channel {}x{}, distortion {}x{}",
            source.alphabet_size(),
            channel.input_size(),
            channel.output_size(),
            measure.input_size(),
            measure.output_size()
        )));
    }
    Ok(())
}

/// Empirical frequency of `(1/n) d^n(X^n, Y^n) > D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectCheck {
    pub n: usize,
    pub trials: usize,
    pub exceed: usize,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_distortion: f64,
}

/// Sends stationary source paths straight through the channel and counts
/// excess-distortion events.
pub fn direct_communication_check(
    source: &MarkovSource,
    channel: &MemorylessChannel,
    measure: &DistortionMeasure,
    distortion: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<DirectCheck> {
    check_alphabets(source, channel, measure)?;
    if n == 0 || trials == 0 {
        return Err(Error::InfeasibleParameters(
            "n and trials must be positive".into(),
        ));
    }
    let sampler = PathSampler::new(source);
    let mut exceed = 0;
    let mut total = 0.0;
    for t in 0..trials {
        let mut rng = child_rng(seed, TAG_DIRECT, t as u64, 0);
        let x = sampler.sample(n, &mut rng);
        let y = channel.transmit(&x, &mut rng);
        let avg = measure.block_distortion(&x, &y)? / n as f64;
        total += avg;
        if avg > distortion {
            exceed += 1;
        }
    }
    let (ci_low, ci_high) = wilson_interval(exceed, trials);
    Ok(DirectCheck {
        n,
        trials,
        exceed,
        frequency: exceed as f64 / trials as f64,
        ci_low,
        ci_high,
        mean_distortion: total / trials as f64,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Unique codeword under the good-slot distortion threshold.
    #[default]
    Threshold,
    /// Unique codeword of least good-slot distortion; ties are errors.
    MinDistortion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    /// No codeword accepted, or too few good slots.
    Erasure,
    /// A wrong codeword accepted, or more than one.
    Confusion,
}

/// Decoder parameters shared by every trial of one block length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecodingRule {
    pub decoder: Decoder,
    /// Good slots used, `N`.
    pub needed: usize,
    /// `D_slot`, on the average good-slot block distortion.
    pub threshold: f64,
}

impl DecodingRule {
    fn total_threshold(&self) -> f64 {
        let t = self.threshold * self.needed as f64;
        t + THRESHOLD_SLACK * t.abs().max(1.0)
    }
}

/// Good-slot distortion of `codeword` against `output` over the first
/// `needed` good slots.
fn good_slot_distortion(
    measure: &DistortionMeasure,
    schedule: &SlotSchedule,
    flags: &SlotFlags,
    needed: usize,
    codeword: &[usize],
    output: &[usize],
) -> f64 {
    flags
        .good_slots()
        .take(needed)
        .map(|i| {
            schedule
                .a_slot(i)
                .map(|p| measure.get(codeword[p], output[p]))
                .sum::<f64>()
        })
        .sum()
}

/// One transmission with an explicit codebook. The channel noise comes
/// from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    channel: &MemorylessChannel,
    measure: &DistortionMeasure,
    schedule: &SlotSchedule,
    flags: &SlotFlags,
    codebook: &[Vec<usize>],
    message: usize,
    rule: &DecodingRule,
    seed: u64,
) -> Result<Outcome> {
    if flags.flags.len() != schedule.pairs
        || message >= codebook.len()
        || codebook.iter().any(|c| c.len() != schedule.len())
    {
        return Err(Error::ConfigMismatch(
            "codebook, flags and schedule disagree".into(),
        ));
    }
    let mut rng = child_rng(seed, TAG_CHANNEL, 0, 0);
    let output = channel.transmit(&codebook[message], &mut rng);
    Ok(decode_explicit(
        measure, schedule, flags, codebook, message, rule, &output,
    ))
}

fn decode_explicit(
    measure: &DistortionMeasure,
    schedule: &SlotSchedule,
    flags: &SlotFlags,
    codebook: &[Vec<usize>],
    message: usize,
    rule: &DecodingRule,
    output: &[usize],
) -> Outcome {
    if flags.good_count() < rule.needed {
        return Outcome::Erasure;
    }
    let scores: Vec<f64> = codebook
        .iter()
        .map(|c| good_slot_distortion(measure, schedule, flags, rule.needed, c, output))
        .collect();
    match rule.decoder {
        Decoder::Threshold => {
            let limit = rule.total_threshold();
            let accepted: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] <= limit).collect();
            match accepted.as_slice() {
                [] => Outcome::Erasure,
                [j] if *j == message => Outcome::Correct,
                _ => Outcome::Confusion,
            }
        }
        Decoder::MinDistortion => {
            let own = scores[message];
            let beaten = scores
                .iter()
                .enumerate()
                .any(|(j, &s)| j != message && s <= own);
            if beaten {
                Outcome::Confusion
            } else {
                Outcome::Correct
            }
        }
    }
}

/// Experiment parameters; the source, channel and measure are passed
/// alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodesimParams {
    #[serde(rename = "T")]
    pub block_len: usize,
    #[serde(rename = "tau")]
    pub gap: usize,
    pub beta: f64,
    #[serde(rename = "D")]
    pub distortion: f64,
    /// Bits per channel use; the codebook has `2^{⌊nR⌋}` codewords.
    pub rate: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub decoder: Decoder,
    /// Trials sharing one flag vector and codebook.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Largest `log2 M` handled with an explicit codebook.
    #[serde(default = "default_explicit_bits")]
    pub explicit_bits: u32,
}

fn default_batch() -> usize {
    100
}

fn default_explicit_bits() -> u32 {
    10
}

/// How competitors were handled for a block length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookMode {
    Explicit,
    Ensemble,
}

/// Outcome counts for one block length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialBatch {
    pub k: usize,
    pub n: usize,
    pub codebook_bits: u64,
    pub mode: CodebookMode,
    pub lambda: f64,
    pub rule: DecodingRule,
    /// `N` had to be clamped to `k`.
    pub clamped: bool,
    pub trials: usize,
    pub correct: usize,
    pub erasure: usize,
    pub confusion: usize,
    /// Trials where the transmitted codeword itself exceeded the threshold.
    pub own_excess: usize,
}

impl TrialBatch {
    pub fn errors(&self) -> usize {
        self.trials - self.correct
    }

    pub fn error_rate(&self) -> f64 {
        self.errors() as f64 / self.trials as f64
    }

    pub fn error_interval(&self) -> (f64, f64) {
        wilson_interval(self.errors(), self.trials)
    }

    fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Correct => self.correct += 1,
            Outcome::Erasure => self.erasure += 1,
            Outcome::Confusion => self.confusion += 1,
        }
    }
}

/// Everything one experiment needs.
pub struct Experiment<'a> {
    pub source: &'a MarkovSource,
    pub channel: &'a MemorylessChannel,
    pub measure: &'a DistortionMeasure,
    pub params: CodesimParams,
}

impl Experiment<'_> {
    fn validate(&self) -> Result<()> {
        check_alphabets(self.source, self.channel, self.measure)?;
        let p = &self.params;
        if p.trials == 0 || p.batch_size == 0 {
            return Err(Error::InfeasibleParameters(
                "trials and batch_size must be positive".into(),
            ));
        }
        if !(p.rate >= 0.0 && p.rate.is_finite()) || !(p.distortion >= 0.0) {
            return Err(Error::InfeasibleParameters(format!(
                "rate {} and D {} must be nonnegative",
                p.rate, p.distortion
            )));
        }
        Ok(())
    }

    /// Runs all trials at `k` slot pairs.
    pub fn run(&self, k: usize) -> Result<TrialBatch> {
        self.validate()?;
        let p = &self.params;
        let schedule = SlotSchedule::new(p.block_len, p.gap, k)?;
        let sim = SlotSimulator::new(self.source, schedule)?;
        let lambda = sim.lambda();
        let count = good_slot_count(k, lambda, p.beta)?;
        let share = 1.0 - lambda - p.beta;
        let rule = DecodingRule {
            decoder: p.decoder,
            needed: count.count,
            threshold: (p.block_len + p.gap) as f64 * p.distortion / share,
        };
        let n = schedule.len();
        let bits = (n as f64 * p.rate + 1e-9).floor() as u64;
        let mode = if bits <= u64::from(p.explicit_bits) {
            CodebookMode::Explicit
        } else {
            CodebookMode::Ensemble
        };
        let mut batch = TrialBatch {
            k,
            n,
            codebook_bits: bits,
            mode,
            lambda,
            rule,
            clamped: count.clamped,
            trials: p.trials,
            correct: 0,
            erasure: 0,
            confusion: 0,
            own_excess: 0,
        };
        let mut ensemble = match mode {
            CodebookMode::Ensemble => Some(Competitors::new(self.measure, &sim, bits)?),
            CodebookMode::Explicit => None,
        };
        let batches = p.trials.div_ceil(p.batch_size);
        for b in 0..batches {
            let batch_seed = child_seed(p.seed, TAG_BATCH, k as u64, b as u64);
            let flags = draw_flags(k, lambda, batch_seed)?;
            let in_batch = p.batch_size.min(p.trials - b * p.batch_size);
            let codebook = match mode {
                CodebookMode::Explicit => (0..1u64 << bits)
                    .map(|j| sim.generate(&flags, batch_seed, j))
                    .collect::<Result<Vec<_>>>()?,
                CodebookMode::Ensemble => Vec::new(),
            };
            for t in 0..in_batch as u64 {
                let mut noise = child_rng(batch_seed, TAG_CHANNEL, t, 0);
                let (sent, message) = match mode {
                    CodebookMode::Explicit => {
                        let m =
                            child_rng(batch_seed, TAG_MESSAGE, t, 0).gen_range(0..codebook.len());
                        (codebook[m].clone(), m)
                    }
                    CodebookMode::Ensemble => (sim.generate(&flags, batch_seed, t)?, 0),
                };
                let output = self.channel.transmit(&sent, &mut noise);
                let enough = flags.good_count() >= rule.needed;
                let own = good_slot_distortion(
                    self.measure,
                    &schedule,
                    &flags,
                    rule.needed,
                    &sent,
                    &output,
                );
                if enough && own > rule.total_threshold() {
                    batch.own_excess += 1;
                }
                let outcome = match ensemble.as_mut() {
                    None => decode_explicit(
                        self.measure,
                        &schedule,
                        &flags,
                        &codebook,
                        message,
                        &rule,
                        &output,
                    ),
                    Some(comp) => {
                        let mut coin = child_rng(batch_seed, TAG_CONFUSION, t, 0);
                        comp.decode(&schedule, &flags, &rule, own, &output, &mut coin)
                    }
                };
                batch.record(outcome);
            }
        }
        Ok(batch)
    }
}

/// Competitor acceptance probabilities for ensemble-mode decoding.
struct Competitors<'m> {
    measure: &'m DistortionMeasure,
    unit: f64,
    window: Vec<(Vec<usize>, f64)>,
    block_len: usize,
    output_size: usize,
    /// `ln(M − 1)`; `None` when `M = 1`.
    log_others: Option<f64>,
    /// Per-slot distortion law (in lattice units) keyed by output word.
    cache: HashMap<usize, Vec<f64>>,
}

impl<'m> Competitors<'m> {
    fn new(measure: &'m DistortionMeasure, sim: &SlotSimulator<'_>, bits: u64) -> Result<Self> {
        let unit = measure.lattice_unit().ok_or_else(|| {
            Error::ConfigMismatch(
                "large codebooks need distortion values on a rational lattice".into(),
            )
        })?;
        let law = sim.good_law();
        let window = law.iter().filter(|(_, p)| *p > 0.0).collect::<Vec<_>>();
        let log_others = match bits {
            0 => None,
            b => {
                let b = b as f64;
                // ln(2^b − 1) = b ln 2 + ln(1 − 2^{−b})
                Some(b * std::f64::consts::LN_2 + (-(-b).exp2()).ln_1p())
            }
        };
        Ok(Self {
            measure,
            unit,
            window,
            block_len: law.horizon(),
            output_size: measure.output_size(),
            log_others,
            cache: HashMap::new(),
        })
    }

    fn units(&self, value: f64) -> usize {
        (value / self.unit).round() as usize
    }

    fn slot_law(&mut self, output: &[usize]) -> &[f64] {
        let key = word_index(output, self.output_size);
        if !self.cache.contains_key(&key) {
            let mut pmf = Vec::new();
            for (word, p) in &self.window {
                let d: f64 = word
                    .iter()
                    .zip(output)
                    .map(|(&x, &y)| self.measure.get(x, y))
                    .sum();
                let u = self.units(d);
                if pmf.len() <= u {
                    pmf.resize(u + 1, 0.0);
                }
                pmf[u] += p;
            }
            self.cache.insert(key, pmf);
        }
        &self.cache[&key]
    }

    /// `ln P(Σ_i D_i ≤ limit)` for independent competitor slots.
    fn log_pass_probability(
        &mut self,
        schedule: &SlotSchedule,
        flags: &SlotFlags,
        needed: usize,
        output: &[usize],
        limit: usize,
    ) -> f64 {
        let mut acc = vec![0.0; limit + 1];
        acc[0] = 1.0;
        let mut log_scale = 0.0;
        for i in flags.good_slots().take(needed) {
            let slot = &output[schedule.a_slot(i)];
            debug_assert_eq!(slot.len(), self.block_len);
            let pmf = self.slot_law(slot).to_vec();
            let mut next = vec![0.0; limit + 1];
            for (s, &a) in acc.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (u, &p) in pmf.iter().enumerate().take(limit + 1 - s) {
                    next[s + u] += a * p;
                }
            }
            let peak = next.iter().copied().fold(0.0, f64::max);
            if peak == 0.0 {
                return f64::NEG_INFINITY;
            }
            next.iter_mut().for_each(|v| *v /= peak);
            log_scale += peak.ln();
            acc = next;
        }
        acc.iter().sum::<f64>().ln() + log_scale
    }

    fn decode<R: Rng + ?Sized>(
        &mut self,
        schedule: &SlotSchedule,
        flags: &SlotFlags,
        rule: &DecodingRule,
        own: f64,
        output: &[usize],
        coin: &mut R,
    ) -> Outcome {
        if flags.good_count() < rule.needed {
            return Outcome::Erasure;
        }
        let own_units = self.units(own);
        let (own_ok, limit) = match rule.decoder {
            Decoder::Threshold => {
                let limit = (rule.total_threshold() / self.unit + THRESHOLD_SLACK).floor();
                (own <= rule.total_threshold(), limit.max(-1.0))
            }
            Decoder::MinDistortion => (true, own_units as f64),
        };
        let confused = match self.log_others {
            None => false,
            Some(_) if limit < 0.0 => false,
            Some(log_others) => {
                let log_q =
                    self.log_pass_probability(schedule, flags, rule.needed, output, limit as usize);
                // −ln(1 − q), in log form, then P(any) = 1 − e^{−(M−1)(−ln(1−q))}.
                let log_neg_log1m = if log_q < -30.0 {
                    log_q
                } else {
                    (-(-log_q.exp()).ln_1p()).ln()
                };
                let exponent = (log_others + log_neg_log1m).exp();
                let p_any = -(-exponent).exp_m1();
                coin.gen::<f64>() < p_any
            }
        };
        match (confused, own_ok) {
            (true, _) => Outcome::Confusion,
            (false, true) => Outcome::Correct,
            (false, false) => Outcome::Erasure,
        }
    }
}

/// One row of an error curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub k: usize,
    pub n: usize,
    pub n_good: usize,
    pub trials: usize,
    pub correct: usize,
    pub erasure: usize,
    pub confusion: usize,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&TrialBatch> for CurveRow {
    fn from(b: &TrialBatch) -> Self {
        let (ci_low, ci_high) = b.error_interval();
        Self {
            k: b.k,
            n: b.n,
            n_good: b.rule.needed,
            trials: b.trials,
            correct: b.correct,
            erasure: b.erasure,
            confusion: b.confusion,
            error_rate: b.error_rate(),
            ci_low,
            ci_high,
        }
    }
}

/// Runs the experiment at every `k` in `k_list`.
pub fn error_curve(experiment: &Experiment<'_>, k_list: &[usize]) -> Result<Vec<TrialBatch>> {
    k_list.iter().map(|&k| experiment.run(k)).collect()
}
