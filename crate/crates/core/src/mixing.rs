//! psi-mixing coefficients and the mixture decomposition of conditional
//! window laws.
//!
//! For a stationary source the coefficient at gap `τ` is
//!
//! ```text
//! ψ(τ) = sup | P(A ∩ B) / (P(A) P(B)) − 1 |
//! ```
//!
//! over past events `A ⊆ X^t` and future events `B` starting `τ` symbols after
//! the past window. For a Markov source of order `m` the ratio is a convex
//! combination of history-to-history ratios `P^{τ+m}(h, h') / π(h')` on the
//! induced history chain, so the supremum is attained at single histories.
//! [`psi_markov`] evaluates that closed form; [`psi_brute_force`] enumerates
//! every pair of events on finite windows and serves as its oracle.
//!
//! With `λ_τ = ψ(τ)` every conditional window law splits as
//! `(1 − λ_τ) P_T + λ_τ P'`, where `P'` is a probability law
//! ([`residual_distribution`]).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{checked_pow, index_word, word_index, CylinderLaw, MarkovSource};

/// Default limit on the number of atoms in each window for subset enumeration.
pub const DEFAULT_SUBSET_ATOMS: usize = 12;

const RESIDUAL_NEG_TOL: f64 = 1e-12;

/// Mixing weights at or below this are rounding noise around zero.
const LAMBDA_FLOOR: f64 = 1e-13;

/// The sequence `λ_0, …, λ_{τmax}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingProfile {
    pub tau_max: usize,
    pub lambdas: Vec<f64>,
}

impl MixingProfile {
    pub fn lambda(&self, tau: usize) -> Option<f64> {
        self.lambdas.get(tau).copied()
    }

    /// True when the sequence never increases by more than `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.lambdas.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

fn require_aperiodic(source: &MarkovSource) -> Result<()> {
    let period = source.recurrent_period();
    if period != 1 {
        return Err(Error::NotAperiodic { period });
    }
    Ok(())
}

/// `ψ(0), …, ψ(τmax)` from powers of the history chain.
fn psi_sequence(source: &MarkovSource, tau_max: usize) -> Result<Vec<f64>> {
    require_aperiodic(source)?;
    let pi = source.stationary();
    let support: Vec<usize> = (0..pi.len()).filter(|&h| pi[h] > 0.0).collect();
    let m = source.order();
    let mut psi = vec![0.0f64; tau_max + 1];
    for &h in &support {
        let mut row = vec![0.0; pi.len()];
        row[h] = 1.0;
        row = source.propagate(&row, m);
        for slot in psi.iter_mut() {
            let worst = support
                .iter()
                .map(|&j| (row[j] / pi[j] - 1.0).abs())
                .fold(0.0, f64::max);
            *slot = slot.max(worst);
            row = source.propagate(&row, 1);
        }
    }
    Ok(psi)
}

/// Closed-form `ψ(τ)` for an aperiodic Markov source of any order.
pub fn psi_markov(source: &MarkovSource, tau: usize) -> Result<f64> {
    Ok(psi_sequence(source, tau)?[tau])
}

/// `λ_τ := ψ(τ)` for `τ = 0..=tau_max`.
pub fn lambda_profile(source: &MarkovSource, tau_max: usize) -> Result<MixingProfile> {
    Ok(MixingProfile {
        tau_max,
        lambdas: psi_sequence(source, tau_max)?,
    })
}

/// Joint law of a past window `X_1^t` and a future window
/// `X_{t+τ+1}^{t+τ+T}`, as a `k^t × k^T` table.
#[derive(Clone, Debug)]
pub struct WindowJoint {
    pub t: usize,
    pub tau: usize,
    pub horizon: usize,
    /// `joint[a][b] = P(X_1^t = a, X_{t+τ+1}^{t+τ+T} = b)`.
    pub joint: Vec<Vec<f64>>,
    pub past: Vec<f64>,
    pub future: Vec<f64>,
}

impl WindowJoint {
    pub fn new(source: &MarkovSource, t: usize, tau: usize, horizon: usize) -> Result<Self> {
        let k = source.alphabet_size();
        let na = checked_pow(k, t)
            .filter(|&n| n <= source.cap())
            .ok_or_else(|| Error::CapExceeded(format!("{k}^{t} past words")))?;
        let nb = checked_pow(k, horizon)
            .filter(|&n| n <= source.cap())
            .ok_or_else(|| Error::CapExceeded(format!("{k}^{horizon} future words")))?;
        let mut joint = vec![vec![0.0; nb]; na];
        let mut past = vec![0.0; na];
        for (a, row) in joint.iter_mut().enumerate() {
            let word = index_word(a, t, k);
            let pa = source.cylinder_probability(&word);
            past[a] = pa;
            if pa > 0.0 {
                let cond = source.conditional_law(&word, tau, horizon)?;
                for (cell, q) in row.iter_mut().zip(cond.probabilities()) {
                    *cell = pa * q;
                }
            }
        }
        let mut future = vec![0.0; nb];
        for row in &joint {
            for (f, j) in future.iter_mut().zip(row) {
                *f += j;
            }
        }
        Ok(Self {
            t,
            tau,
            horizon,
            joint,
            past,
            future,
        })
    }

    /// `(P(A ∩ B), P(A), P(B))` for events given as word-index lists.
    pub fn event_probabilities(&self, a_set: &[usize], b_set: &[usize]) -> (f64, f64, f64) {
        let pa: f64 = a_set.iter().map(|&a| self.past[a]).sum();
        let pb: f64 = b_set.iter().map(|&b| self.future[b]).sum();
        let pab: f64 = a_set
            .iter()
            .map(|&a| b_set.iter().map(|&b| self.joint[a][b]).sum::<f64>())
            .sum();
        (pab, pa, pb)
    }

    /// `|P(A ∩ B) / (P(A) P(B)) − 1|`, or `None` when either event is null.
    pub fn deviation(&self, a_set: &[usize], b_set: &[usize]) -> Option<f64> {
        let (pab, pa, pb) = self.event_probabilities(a_set, b_set);
        (pa > 0.0 && pb > 0.0).then(|| (pab / (pa * pb) - 1.0).abs())
    }
}

/// Exact supremum of `|P(A∩B)/(P(A)P(B)) − 1|` over all events `A ⊆ X^t`,
/// `B ⊆ X^T` separated by `τ`, by enumerating subsets of positive-probability
/// atoms. Both windows must have at most `max_atoms` words.
pub fn psi_brute_force_with_cap(
    source: &MarkovSource,
    tau: usize,
    t: usize,
    horizon: usize,
    max_atoms: usize,
) -> Result<f64> {
    let k = source.alphabet_size();
    for (len, what) in [(t, "past"), (horizon, "future")] {
        if checked_pow(k, len).is_none_or(|n| n > max_atoms) {
            return Err(Error::CapExceeded(format!(
                "{what} window has {k}^{len} atoms, subset cap is {max_atoms}"
            )));
        }
    }
    let table = WindowJoint::new(source, t, tau, horizon)?;
    let a_atoms: Vec<usize> = (0..table.past.len())
        .filter(|&a| table.past[a] > 0.0)
        .collect();
    let b_atoms: Vec<usize> = (0..table.future.len())
        .filter(|&b| table.future[b] > 0.0)
        .collect();
    let nb = b_atoms.len();

    // Gray-code walks over both subset lattices keep every update O(1) per
    // atom; the outer walk maintains column sums restricted to A.
    let mut col = vec![0.0; nb];
    let mut pa = 0.0;
    let mut in_a = vec![false; a_atoms.len()];
    let mut best = 0.0f64;
    for step in 1u64..(1u64 << a_atoms.len()) {
        let flip = step.trailing_zeros() as usize;
        let a = a_atoms[flip];
        let sign = if in_a[flip] { -1.0 } else { 1.0 };
        in_a[flip] = !in_a[flip];
        pa += sign * table.past[a];
        for (c, &b) in col.iter_mut().zip(&b_atoms) {
            *c += sign * table.joint[a][b];
        }
        if pa <= 0.0 {
            continue;
        }
        let mut in_b = vec![false; nb];
        let mut pb = 0.0;
        let mut pab = 0.0;
        for inner in 1u64..(1u64 << nb) {
            let fb = inner.trailing_zeros() as usize;
            let s = if in_b[fb] { -1.0 } else { 1.0 };
            in_b[fb] = !in_b[fb];
            pb += s * table.future[b_atoms[fb]];
            pab += s * col[fb];
            if pb > 0.0 {
                best = best.max((pab / (pa * pb) - 1.0).abs());
            }
        }
    }
    Ok(best)
}

/// [`psi_brute_force_with_cap`] with the default atom cap.
pub fn psi_brute_force(source: &MarkovSource, tau: usize, t: usize, horizon: usize) -> Result<f64> {
    psi_brute_force_with_cap(source, tau, t, horizon, DEFAULT_SUBSET_ATOMS)
}

/// The law `P'` with `P(· | prefix) = (1 − λ_τ) P_T + λ_τ P'`.
///
/// When `λ_τ = 0` any law satisfies the identity; `P_T` is returned (also
/// for `λ_τ` within rounding noise of zero).
pub fn residual_distribution(
    source: &MarkovSource,
    prefix: &[usize],
    tau: usize,
    horizon: usize,
) -> Result<CylinderLaw> {
    let lambda = psi_markov(source, tau)?;
    let conditional = source.conditional_law(prefix, tau, horizon)?;
    let p_t = source.marginal(horizon)?;
    residual_from_parts(&conditional, &p_t, lambda)
}

pub(crate) fn residual_from_parts(
    conditional: &CylinderLaw,
    p_t: &CylinderLaw,
    lambda: f64,
) -> Result<CylinderLaw> {
    if lambda <= LAMBDA_FLOOR {
        return Ok(p_t.clone());
    }
    let mut probs = Vec::with_capacity(p_t.probabilities().len());
    for (&c, &p) in conditional.probabilities().iter().zip(p_t.probabilities()) {
        let mut numerator = c - (1.0 - lambda) * p;
        // Rounding noise in the subtraction, not a real deficit.
        if numerator < 0.0 && -numerator <= 64.0 * f64::EPSILON * c.max(p) {
            numerator = 0.0;
        }
        let mut r = numerator / lambda;
        if r < 0.0 {
            if r < -RESIDUAL_NEG_TOL {
                return Err(Error::NegativeResidual { value: r });
            }
            r = 0.0;
        }
        probs.push(r);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|r| *r /= total);
    CylinderLaw::new(p_t.alphabet_size(), p_t.horizon(), probs)
}

/// One prefix's check of the mixture identity.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub t: usize,
    pub tau: usize,
    pub horizon: usize,
    pub prefix: Vec<usize>,
    pub conditional: CylinderLaw,
    pub p_t: CylinderLaw,
    pub residual: CylinderLaw,
    pub lambda: f64,
    pub max_identity_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionSummary {
    pub reports: Vec<DecompositionReport>,
    /// Prefixes with zero probability; the identity is not defined there.
    pub skipped: Vec<Vec<usize>>,
}

impl DecompositionSummary {
    pub fn max_error(&self) -> f64 {
        self.reports
            .iter()
            .map(|r| r.max_identity_error)
            .fold(0.0, f64::max)
    }
}

/// Checks `(1 − λ_τ) P_T + λ_τ P' = P(· | prefix)` for every prefix in `X^t`.
pub fn verify_decomposition(
    source: &MarkovSource,
    t: usize,
    tau: usize,
    horizon: usize,
) -> Result<DecompositionSummary> {
    let k = source.alphabet_size();
    let count = checked_pow(k, t)
        .filter(|&n| n <= source.cap())
        .ok_or_else(|| Error::CapExceeded(format!("{k}^{t} prefixes")))?;
    let lambda = psi_markov(source, tau)?;
    let p_t = source.marginal(horizon)?;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for idx in 0..count {
        let prefix = index_word(idx, t, k);
        if source.cylinder_probability(&prefix) <= 0.0 {
            skipped.push(prefix);
            continue;
        }
        let conditional = source.conditional_law(&prefix, tau, horizon)?;
        let residual = residual_from_parts(&conditional, &p_t, lambda)?;
        let max_identity_error = conditional
            .probabilities()
            .iter()
            .zip(p_t.probabilities())
            .zip(residual.probabilities())
            .map(|((c, p), r)| ((1.0 - lambda) * p + lambda * r - c).abs())
            .fold(0.0, f64::max);
        reports.push(DecompositionReport {
            t,
            tau,
            horizon,
            prefix,
            conditional,
            p_t: p_t.clone(),
            residual,
            lambda,
            max_identity_error,
        });
    }
    Ok(DecompositionSummary { reports, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CesaroCheck {
    pub average: f64,
    pub target: f64,
    pub gap: f64,
}

/// `P(X_1^t = a, X_{τ+1}^{τ+T} = b)`; the windows may overlap.
fn shifted_joint(source: &MarkovSource, a: &[usize], b: &[usize], shift: usize) -> Result<f64> {
    let t = a.len();
    if shift >= t {
        let pa = source.cylinder_probability(a);
        if pa == 0.0 {
            return Ok(0.0);
        }
        let cond = source.conditional_law(a, shift - t, b.len())?;
        return Ok(pa * cond.prob(b));
    }
    let len = t.max(shift + b.len());
    let mut merged = vec![usize::MAX; len];
    merged[..t].copy_from_slice(a);
    for (i, &x) in b.iter().enumerate() {
        let pos = shift + i;
        if merged[pos] != usize::MAX && merged[pos] != x {
            return Ok(0.0);
        }
        merged[pos] = x;
    }
    Ok(source.cylinder_probability(&merged))
}

/// Cesàro average `(1/N) Σ_{τ<N} P(X_1^t = a, X_{τ+1}^{τ+T} = b)` against
/// `P(a) P(b)`; the gap vanishes as `N` grows for an ergodic source.
pub fn ergodic_cesaro_check(
    source: &MarkovSource,
    a: &[usize],
    b: &[usize],
    terms: usize,
) -> Result<CesaroCheck> {
    if terms == 0 {
        return Err(Error::InvalidSource(
            "Cesàro average needs at least one term".into(),
        ));
    }
    source.ensure_enumerable(b.len())?;
    let pa = source.cylinder_probability(a);
    let pb = source.cylinder_probability(b);
    if pa == 0.0 {
        return Ok(CesaroCheck {
            average: 0.0,
            target: 0.0,
            gap: 0.0,
        });
    }
    let mut sum = 0.0;
    for shift in 0..terms {
        sum += shifted_joint(source, a, b, shift)?;
    }
    let average = sum / terms as f64;
    let target = pa * pb;
    Ok(CesaroCheck {
        average,
        target,
        gap: (average - target).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockedPsi {
    pub psi_parent: f64,
    pub psi_block: f64,
}

/// `ψ` of the source and of its `L`-block process at the same gap `τ`.
pub fn blocked_psi_comparison(
    source: &MarkovSource,
    block: usize,
    tau: usize,
) -> Result<BlockedPsi> {
    let blocked = source.block_process(block)?;
    Ok(BlockedPsi {
        psi_parent: psi_markov(source, tau)?,
        psi_block: psi_markov(&blocked, tau)?,
    })
}

/// Index list of the words in `X^len` whose membership bit is set in `mask`.
pub fn subset_from_mask(mask: u64, count: usize) -> Vec<usize> {
    (0..count).filter(|i| mask >> i & 1 == 1).collect()
}

/// Word index of a prefix, for callers that hold symbol vectors.
pub fn prefix_index(prefix: &[usize], k: usize) -> usize {
    word_index(prefix, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain(p: f64) -> MarkovSource {
        MarkovSource::binary_symmetric(p).unwrap()
    }

    #[test]
    fn psi_examples() {
        let src = chain(0.3);
        assert_abs_diff_eq!(psi_markov(&src, 0).unwrap(), 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(psi_markov(&src, 1).unwrap(), 0.16, epsilon = 1e-14);
        let iid = MarkovSource::iid(vec!["a".into(), "b".into()], vec![0.3, 0.7]).unwrap();
        for tau in 0..4 {
            assert!(psi_markov(&iid, tau).unwrap() < 1e-15);
        }
    }

    #[test]
    fn psi_rejects_periodic() {
        let cycle = MarkovSource::first_order(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        assert!(matches!(
            psi_markov(&cycle, 0),
            Err(Error::NotAperiodic { period: 3 })
        ));
    }

    #[test]
    fn profile_examples() {
        let p = lambda_profile(&chain(0.3), 2).unwrap();
        for (got, want) in p.lambdas.iter().zip([0.4, 0.16, 0.064]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        assert!(p.is_monotone(1e-15));
        let flat = MarkovSource::iid(vec!["a".into(), "b".into(), "c".into()], vec![1.0 / 3.0; 3])
            .unwrap();
        let p = lambda_profile(&flat, 5).unwrap();
        assert_eq!(p.lambdas.len(), 6);
        assert!(p.lambdas.iter().all(|&l| l < 1e-15));
    }

    #[test]
    fn brute_force_examples() {
        let src = chain(0.3);
        assert_abs_diff_eq!(
            psi_brute_force(&src, 0, 1, 1).unwrap(),
            0.4,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            psi_brute_force(&src, 2, 2, 2).unwrap(),
            0.064,
            epsilon = 1e-12
        );
        let iid = MarkovSource::iid(vec!["a".into(), "b".into()], vec![0.3, 0.7]).unwrap();
        assert!(psi_brute_force(&iid, 1, 2, 2).unwrap() < 1e-12);
    }

    #[test]
    fn brute_force_cap() {
        let src = chain(0.3);
        assert!(matches!(
            psi_brute_force(&src, 0, 4, 1),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn residual_examples() {
        let src = chain(0.3);
        let r = residual_distribution(&src, &[0], 0, 1).unwrap();
        assert_abs_diff_eq!(r.prob(&[0]), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.prob(&[1]), 0.0, epsilon = 1e-14);
        let r = residual_distribution(&src, &[1], 0, 1).unwrap();
        assert_abs_diff_eq!(r.prob(&[1]), 1.0, epsilon = 1e-14);
        let iid = MarkovSource::iid(vec!["a".into(), "b".into()], vec![0.3, 0.7]).unwrap();
        let r = residual_distribution(&iid, &[1, 1], 0, 2).unwrap();
        assert_eq!(r, iid.marginal(2).unwrap());
    }

    #[test]
    fn decomposition_skips_null_prefixes() {
        let src = MarkovSource::first_order(
            vec!["0".into(), "1".into()],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        )
        .unwrap();
        let summary = verify_decomposition(&src, 2, 1, 1).unwrap();
        assert_eq!(summary.skipped, vec![vec![1, 1]]);
        assert_eq!(summary.reports.len(), 3);
        assert!(summary.max_error() <= 1e-12);
    }

    #[test]
    fn cesaro_null_prefix() {
        let src = MarkovSource::first_order(
            vec!["0".into(), "1".into()],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        )
        .unwrap();
        let c = ergodic_cesaro_check(&src, &[1, 1], &[0], 10).unwrap();
        assert_eq!((c.average, c.target, c.gap), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cesaro_iid_far_terms_vanish() {
        let iid = MarkovSource::iid(vec!["a".into(), "b".into()], vec![0.3, 0.7]).unwrap();
        for shift in 1..6 {
            let j = shifted_joint(&iid, &[0], &[1], shift).unwrap();
            assert_abs_diff_eq!(j, 0.3 * 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn blocked_examples() {
        let src = chain(0.3);
        let b = blocked_psi_comparison(&src, 1, 2).unwrap();
        assert_eq!(b.psi_parent, b.psi_block);
        let b = blocked_psi_comparison(&src, 2, 0).unwrap();
        assert_abs_diff_eq!(b.psi_parent, 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(b.psi_block, 0.4, epsilon = 1e-14);
        let b = blocked_psi_comparison(&src, 2, 1).unwrap();
        assert_abs_diff_eq!(b.psi_parent, 0.16, epsilon = 1e-14);
        assert_abs_diff_eq!(b.psi_block, 0.064, epsilon = 1e-14);
    }
}
