//! Slot-based simulation of a psi-mixing source.
//!
//! Time is cut into `k` pairs of slots `A_i` (width `T`) and `B_i` (width
//! `τ`). Flags `C_1 = 1, C_2, …, C_k` are drawn i.i.d. with
//! `P(C_i = 1) = 1 − λ_τ`. Slots are filled in the order
//! `A_1, A_2, B_1, A_3, B_2, …, A_k, B_{k-1}, B_k`:
//!
//! * a good `A_i` (`C_i = 1`) is drawn from the window law `P_T`, ignoring
//!   the past;
//! * a bad `A_i` is drawn from the residual law `P'` given everything
//!   generated so far (which ends at `A_{i-1}`, the gap being `B_{i-1}`);
//! * `B_{i-1}` is drawn from the source's law given both flanks;
//! * the final `B_k` is drawn from the law given everything before it.
//!
//! Averaged over the flags this reproduces the source law exactly, and on the
//! good slots the blocks are i.i.d. `P_T` whatever the other slots hold.

use std::ops::Range;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixing::{psi_markov, residual_from_parts};
use crate::process::{word_index, CylinderLaw, MarkovSource};
use crate::rng::{child_rng, StreamRng, TAG_FLAGS, TAG_SLOT};

const LAMBDA_MATCH_TOL: f64 = 1e-12;

/// Partition of `1..=n`, `n = (T + τ) k`, into `A_1, B_1, …, A_k, B_k`.
///
/// Slot accessors take a zero-based slot number and return zero-based
/// half-open position ranges: `a_slot(0)` is `A_1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SlotSchedule {
    pub slot_width: usize,
    pub gap: usize,
    pub pairs: usize,
}

impl SlotSchedule {
    pub fn new(slot_width: usize, gap: usize, pairs: usize) -> Result<Self> {
        if slot_width == 0 || pairs == 0 {
            return Err(Error::InfeasibleParameters(format!(
                "schedule needs T >= 1 and k >= 1 (got T={slot_width}, k={pairs})"
            )));
        }
        Ok(Self {
            slot_width,
            gap,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        (self.slot_width + self.gap) * self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn a_slot(&self, i: usize) -> Range<usize> {
        let start = i * (self.slot_width + self.gap);
        start..start + self.slot_width
    }

    pub fn b_slot(&self, i: usize) -> Range<usize> {
        let start = i * (self.slot_width + self.gap) + self.slot_width;
        start..start + self.gap
    }

    /// One-based inclusive bounds `(first, last)` of every `A_i`.
    pub fn a_bounds(&self) -> Vec<(usize, usize)> {
        (0..self.pairs)
            .map(|i| {
                let r = self.a_slot(i);
                (r.start + 1, r.end)
            })
            .collect()
    }

    /// One-based inclusive bounds of every `B_i`; empty ranges when `τ = 0`
    /// are reported as `(first, first - 1)`.
    pub fn b_bounds(&self) -> Vec<(usize, usize)> {
        (0..self.pairs)
            .map(|i| {
                let r = self.b_slot(i);
                (r.start + 1, r.end)
            })
            .collect()
    }

    /// Positions of the first `count` good `A` slots, in time order.
    pub fn good_positions(&self, flags: &SlotFlags, count: usize) -> Vec<usize> {
        flags
            .good_slots()
            .take(count)
            .flat_map(|i| self.a_slot(i))
            .collect()
    }
}

/// Good/bad flags `C_1..C_k` and the `λ_τ` they were drawn with.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlotFlags {
    pub flags: Vec<bool>,
    pub lambda: f64,
}

impl SlotFlags {
    pub fn good_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Zero-based indices of good slots.
    pub fn good_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
    }
}

/// `C_1 = 1`; `C_2..C_k` i.i.d. equal to 1 with probability `1 − λ`.
pub fn draw_flags(pairs: usize, lambda: f64, seed: u64) -> Result<SlotFlags> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InfeasibleParameters(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    let mut rng = child_rng(seed, TAG_FLAGS, 0, 0);
    let flags = (0..pairs)
        .map(|i| i == 0 || rng.gen::<f64>() >= lambda)
        .collect();
    Ok(SlotFlags { flags, lambda })
}

/// The per-slot laws the procedure draws from, shared by sampling and by the
/// exact-law computation.
pub struct SlotSimulator<'a> {
    source: &'a MarkovSource,
    schedule: SlotSchedule,
    lambda: f64,
    window: CylinderLaw,
    window_sampler: WeightedIndex<f64>,
}

impl<'a> SlotSimulator<'a> {
    pub fn new(source: &'a MarkovSource, schedule: SlotSchedule) -> Result<Self> {
        let lambda = psi_markov(source, schedule.gap)?;
        let window = source.marginal(schedule.slot_width)?;
        source.ensure_enumerable(schedule.gap)?;
        let window_sampler = WeightedIndex::new(window.probabilities())
            .map_err(|e| Error::InvalidSource(e.to_string()))?;
        Ok(Self {
            source,
            schedule,
            lambda,
            window,
            window_sampler,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn schedule(&self) -> SlotSchedule {
        self.schedule
    }

    /// `P_T`, the law of a good slot.
    pub fn good_law(&self) -> &CylinderLaw {
        &self.window
    }

    /// Residual law of a bad slot given the generated prefix.
    pub fn bad_law(&self, prefix: &[usize]) -> Result<CylinderLaw> {
        let cond =
            self.source
                .conditional_law(prefix, self.schedule.gap, self.schedule.slot_width)?;
        residual_from_parts(&cond, &self.window, self.lambda)
    }

    /// Law of an `A` slot with its flag averaged out.
    pub fn mixed_law(&self, prefix: &[usize]) -> Result<CylinderLaw> {
        let bad = self.bad_law(prefix)?;
        let probs = self
            .window
            .probabilities()
            .iter()
            .zip(bad.probabilities())
            .map(|(g, b)| (1.0 - self.lambda) * g + self.lambda * b)
            .collect();
        Ok(CylinderLaw::from_raw(
            self.window.alphabet_size(),
            self.schedule.slot_width,
            probs,
        ))
    }

    /// Law of `B_{i-1}` given everything up to `A_{i-1}` and the slot `A_i`.
    pub fn bridge_law(&self, left: &[usize], right: &[usize]) -> Result<CylinderLaw> {
        self.source.bridge_law(left, self.schedule.gap, right)
    }

    /// Law of the final `B_k` given everything before it.
    pub fn tail_law(&self, prefix: &[usize]) -> Result<CylinderLaw> {
        self.source.conditional_law(prefix, 0, self.schedule.gap)
    }

    fn check_flags(&self, flags: &SlotFlags) -> Result<()> {
        if flags.flags.len() != self.schedule.pairs {
            return Err(Error::ConfigMismatch(format!(
                "{} flags for {} slot pairs",
                flags.flags.len(),
                self.schedule.pairs
            )));
        }
        if flags.flags.first() != Some(&true) {
            return Err(Error::ConfigMismatch("the first flag must be good".into()));
        }
        if (flags.lambda - self.lambda).abs() > LAMBDA_MATCH_TOL {
            return Err(Error::InconsistentLambda {
                flags: flags.lambda,
                source_psi: self.lambda,
            });
        }
        Ok(())
    }

    /// One realization of `X'_1^n`; slot `s` of codeword `codeword` draws
    /// from its own stream under `seed`.
    pub fn generate(&self, flags: &SlotFlags, seed: u64, codeword: u64) -> Result<Vec<usize>> {
        self.check_flags(flags)?;
        let sched = self.schedule;
        let k = self.source.alphabet_size();
        let mut x = vec![0usize; sched.len()];
        let rng_for = |slot: u64| -> StreamRng { child_rng(seed, TAG_SLOT, codeword, slot) };

        let a0 = sched.a_slot(0);
        let draw = self.window_sampler.sample(&mut rng_for(0));
        write_word(&mut x[a0], draw, k);
        for i in 1..sched.pairs {
            let a = sched.a_slot(i);
            let prefix_end = sched.a_slot(i - 1).end;
            let mut rng = rng_for(2 * i as u64);
            let draw = if flags.flags[i] {
                self.window_sampler.sample(&mut rng)
            } else {
                sample_law(&self.bad_law(&x[..prefix_end])?, &mut rng)?
            };
            write_word(&mut x[a.clone()], draw, k);

            let b = sched.b_slot(i - 1);
            if !b.is_empty() {
                let law = self.bridge_law(&x[..prefix_end], &x[a])?;
                let draw = sample_law(&law, &mut rng_for(2 * (i - 1) as u64 + 1))?;
                write_word(&mut x[b], draw, k);
            }
        }
        let last = sched.b_slot(sched.pairs - 1);
        if !last.is_empty() {
            let law = self.tail_law(&x[..last.start])?;
            let draw = sample_law(&law, &mut rng_for(2 * (sched.pairs - 1) as u64 + 1))?;
            write_word(&mut x[last], draw, k);
        }
        Ok(x)
    }

    /// Exact law of `X'_1^n`: with `flags = None` the flags are averaged
    /// out, otherwise the law is conditional on the given flags.
    pub fn exact_law(&self, flags: Option<&SlotFlags>) -> Result<CylinderLaw> {
        if let Some(f) = flags {
            self.check_flags(f)?;
        }
        let n = self.schedule.len();
        let size = self.source.ensure_enumerable(n)?;
        let mut out = vec![0.0; size];
        let mut x = vec![0usize; n];
        self.enumerate(1, 1.0, flags, &mut x, &mut out)?;
        Ok(CylinderLaw::from_raw(self.source.alphabet_size(), n, out))
    }

    /// Depth-first walk over the generation order. `step` is the next `A`
    /// slot (one-based pair index `i`, followed by its `B_{i-1}`); `step ==
    /// k + 1` fills the final `B_k`.
    fn enumerate(
        &self,
        step: usize,
        mass: f64,
        flags: Option<&SlotFlags>,
        x: &mut Vec<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        let sched = self.schedule;
        let k = self.source.alphabet_size();
        if mass == 0.0 {
            return Ok(());
        }
        if step == 1 {
            let a = sched.a_slot(0);
            for (w, &p) in self.window.probabilities().iter().enumerate() {
                write_word(&mut x[a.clone()], w, k);
                self.enumerate(2, mass * p, flags, x, out)?;
            }
            return Ok(());
        }
        if step == sched.pairs + 1 {
            let last = sched.b_slot(sched.pairs - 1);
            if last.is_empty() {
                out[word_index(x, k)] += mass;
                return Ok(());
            }
            let law = self.tail_law(&x[..last.start])?;
            for (w, &p) in law.probabilities().iter().enumerate() {
                write_word(&mut x[last.clone()], w, k);
                if p > 0.0 {
                    out[word_index(x, k)] += mass * p;
                }
            }
            return Ok(());
        }
        let i = step - 1;
        let a = sched.a_slot(i);
        let prefix_end = sched.a_slot(i - 1).end;
        let slot_law = match flags {
            None => self.mixed_law(&x[..prefix_end])?,
            Some(f) if f.flags[i] => self.window.clone(),
            Some(_) => self.bad_law(&x[..prefix_end])?,
        };
        let b = sched.b_slot(i - 1);
        for (w, &p) in slot_law.probabilities().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            write_word(&mut x[a.clone()], w, k);
            if b.is_empty() {
                self.enumerate(step + 1, mass * p, flags, x, out)?;
                continue;
            }
            let right = x[a.clone()].to_vec();
            let bridge = self.bridge_law(&x[..prefix_end], &right)?;
            for (v, &q) in bridge.probabilities().iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                write_word(&mut x[b.clone()], v, k);
                self.enumerate(step + 1, mass * p * q, flags, x, out)?;
            }
        }
        Ok(())
    }
}

fn write_word(dst: &mut [usize], mut index: usize, k: usize) {
    for slot in dst.iter_mut().rev() {
        *slot = index % k;
        index /= k;
    }
}

fn sample_law<R: Rng + ?Sized>(law: &CylinderLaw, rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(law.probabilities())
        .map_err(|e| Error::InvalidSource(format!("cannot sample slot law: {e}")))?;
    Ok(dist.sample(rng))
}

/// One realization of the slot procedure (codeword stream 0).
pub fn simulate_sequence(
    source: &MarkovSource,
    schedule: SlotSchedule,
    flags: &SlotFlags,
    seed: u64,
) -> Result<Vec<usize>> {
    SlotSimulator::new(source, schedule)?.generate(flags, seed, 0)
}

/// The law of `X'_1^n` with all randomness, flags included, marginalized.
pub fn exact_simulated_law(source: &MarkovSource, schedule: SlotSchedule) -> Result<CylinderLaw> {
    SlotSimulator::new(source, schedule)?.exact_law(None)
}

/// `M` independent realizations sharing one flag vector.
pub fn generate_codebook(
    source: &MarkovSource,
    schedule: SlotSchedule,
    flags: &SlotFlags,
    codewords: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if codewords == 0 {
        return Err(Error::InfeasibleParameters(
            "codebook needs at least one codeword".into(),
        ));
    }
    let sim = SlotSimulator::new(source, schedule)?;
    (0..codewords as u64)
        .map(|j| sim.generate(flags, seed, j))
        .collect()
}
