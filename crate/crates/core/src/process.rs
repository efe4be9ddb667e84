//! Finite-state stationary sources.
//!
//! A [`MarkovSource`] of order `m` over an alphabet of `k` symbols is stored as
//! one probability row per length-`m` history. Histories and words are encoded
//! as big-endian base-`k` integers: the first symbol is the most significant
//! digit, so the last `m` symbols of a word with index `w` form the history
//! `w % k^m`. All finite-window laws are returned as [`CylinderLaw`] tables
//! indexed the same way.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the number of words enumerated in one table (2^20).
pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 20;

/// Largest history chain whose stationary law is found by a dense solve.
const DENSE_SOLVE_LIMIT: usize = 2048;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

fn pow_u128(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Index of `word` in the big-endian base-`k` enumeration of `k^len` words.
pub fn word_index(word: &[usize], k: usize) -> usize {
    word.iter().fold(0, |acc, &x| acc * k + x)
}

/// Inverse of [`word_index`].
pub fn index_word(mut index: usize, len: usize, k: usize) -> Vec<usize> {
    let mut word = vec![0; len];
    for slot in word.iter_mut().rev() {
        *slot = index % k;
        index /= k;
    }
    word
}

/// A probability law on `X^n`, indexed by [`word_index`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderLaw {
    alphabet: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl CylinderLaw {
    pub fn new(alphabet: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = checked_pow(alphabet, horizon).ok_or(Error::HorizonTooLarge {
            size: pow_u128(alphabet, horizon),
            cap: usize::MAX,
        })?;
        if probs.len() != expected {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: expected,
            });
        }
        if let Some(&p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSource(format!(
                "negative or non-finite mass {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSource(format!("law sums to {total}")));
        }
        Ok(Self {
            alphabet,
            horizon,
            probs,
        })
    }

    pub(crate) fn from_raw(alphabet: usize, horizon: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(Some(probs.len()), checked_pow(alphabet, horizon));
        Self {
            alphabet,
            horizon,
            probs,
        }
    }

    /// Point mass on a single word.
    pub fn point_mass(alphabet: usize, word: &[usize]) -> Self {
        let size = checked_pow(alphabet, word.len()).expect("point mass too large");
        let mut probs = vec![0.0; size];
        probs[word_index(word, alphabet)] = 1.0;
        Self::from_raw(alphabet, word.len(), probs)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, word: &[usize]) -> f64 {
        if word.len() != self.horizon || word.iter().any(|&x| x >= self.alphabet) {
            return 0.0;
        }
        self.probs[word_index(word, self.alphabet)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Total variation distance, `½ Σ |p − q|`.
    pub fn total_variation(&self, other: &CylinderLaw) -> f64 {
        assert_eq!(self.alphabet, other.alphabet);
        assert_eq!(self.horizon, other.horizon);
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &CylinderLaw) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// Law of the concatenation of independent draws from `self` and `other`.
    pub fn product(&self, other: &CylinderLaw) -> CylinderLaw {
        assert_eq!(self.alphabet, other.alphabet);
        let mut probs = Vec::with_capacity(self.probs.len() * other.probs.len());
        for p in &self.probs {
            for q in &other.probs {
                probs.push(p * q);
            }
        }
        CylinderLaw::from_raw(self.alphabet, self.horizon + other.horizon, probs)
    }

    /// Marginal law of the coordinates listed in `positions` (in that order).
    pub fn marginal(&self, positions: &[usize]) -> CylinderLaw {
        let size = checked_pow(self.alphabet, positions.len()).expect("marginal too large");
        let mut probs = vec![0.0; size];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let word = index_word(idx, self.horizon, self.alphabet);
            let sub: Vec<usize> = positions.iter().map(|&i| word[i]).collect();
            probs[word_index(&sub, self.alphabet)] += p;
        }
        CylinderLaw::from_raw(self.alphabet, positions.len(), probs)
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// `(word, probability)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (index_word(i, self.horizon, self.alphabet), p))
    }
}

/// Graph-theoretic classification of a transition table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    pub period: usize,
}

fn validate_rows(rows: &[Vec<f64>], width: usize) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::InvalidTransition(format!(
                "row {i} has {} entries, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidTransition(format!(
                "row {i} has a negative entry"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidTransition(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Strongly connected components of the support graph, with a flag for
/// classes that no edge leaves.
fn classes(adjacency: &[Vec<usize>]) -> Vec<(Vec<usize>, bool)> {
    let mut graph = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..adjacency.len()).map(|_| graph.add_node(())).collect();
    for (i, succ) in adjacency.iter().enumerate() {
        for &j in succ {
            graph.add_edge(nodes[i], nodes[j], ());
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; adjacency.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for n in scc {
            component[n.index()] = c;
        }
    }
    sccs.into_iter()
        .enumerate()
        .map(|(c, scc)| {
            let members: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            let closed = members
                .iter()
                .all(|&i| adjacency[i].iter().all(|&j| component[j] == c));
            (members, closed)
        })
        .collect()
}

/// Period of a strongly connected class: gcd of `level(u) + 1 − level(v)`
/// over internal edges, with BFS levels from an arbitrary root.
fn class_period(members: &[usize], adjacency: &[Vec<usize>]) -> Option<usize> {
    let mut level = vec![usize::MAX; adjacency.len()];
    let inside: std::collections::HashSet<usize> = members.iter().copied().collect();
    let root = members[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if inside.contains(&v) && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    let mut has_edge = false;
    for &u in members {
        for &v in &adjacency[u] {
            if inside.contains(&v) {
                has_edge = true;
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
                period = gcd(period, diff);
            }
        }
    }
    has_edge.then_some(period)
}

fn support_graph(rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    rows.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Strong connectivity and period of a first-order transition table.
///
/// The reported period is the gcd over all non-trivial classes, so for an
/// irreducible chain it is the usual period.
pub fn check_irreducible_aperiodic(transition: &[Vec<f64>]) -> Result<ChainReport> {
    validate_rows(transition, transition.len())?;
    let adjacency = support_graph(transition);
    let cls = classes(&adjacency);
    let irreducible = cls.len() == 1;
    let period = cls
        .iter()
        .filter_map(|(members, _)| class_period(members, &adjacency))
        .fold(0, gcd)
        .max(1);
    Ok(ChainReport {
        irreducible,
        aperiodic: period == 1,
        period,
    })
}

/// The unique stationary law of a first-order transition table.
///
/// Uniqueness holds exactly when the chain has one closed communicating
/// class; transient states receive zero mass. Solved as a linear system on
/// the closed class.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = transition.len();
    if n == 0 {
        return Err(Error::InvalidTransition("empty table".into()));
    }
    validate_rows(transition, n)?;
    let adjacency = support_graph(transition);
    let closed: Vec<Vec<usize>> = classes(&adjacency)
        .into_iter()
        .filter(|(_, c)| *c)
        .map(|(m, _)| m)
        .collect();
    if closed.len() != 1 {
        return Err(Error::NotIrreducible {
            closed_classes: closed.len(),
        });
    }
    let mut members = closed.into_iter().next().unwrap();
    members.sort_unstable();
    let c = members.len();
    if c > DENSE_SOLVE_LIMIT {
        return Err(Error::CapExceeded(format!(
            "stationary solve on {c} states exceeds the dense limit {DENSE_SOLVE_LIMIT}"
        )));
    }
    // (P_CC^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(c, c);
    for (col, &i) in members.iter().enumerate() {
        for (row, &j) in members.iter().enumerate() {
            a[(row, col)] = transition[i][j];
        }
        a[(col, col)] -= 1.0;
    }
    for col in 0..c {
        a[(c - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(c);
    b[c - 1] = 1.0;
    let solution = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidTransition("singular stationary system".into()))?;
    let mut pi = vec![0.0; n];
    for (idx, &i) in members.iter().enumerate() {
        pi[i] = solution[idx].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    check_stationary(transition, &pi)?;
    Ok(pi)
}

fn check_stationary(transition: &[Vec<f64>], pi: &[f64]) -> Result<()> {
    let n = pi.len();
    let mut next = vec![0.0; n];
    for (i, row) in transition.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            next[j] += pi[i] * p;
        }
    }
    let err = next
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if err > STATIONARY_TOL {
        return Err(Error::InvalidTransition(format!(
            "stationary residual {err:e} exceeds {STATIONARY_TOL:e}"
        )));
    }
    Ok(())
}

/// A stationary Markov source of order `m` on a finite alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSource {
    symbols: Vec<String>,
    order: usize,
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    cap: usize,
}

impl MarkovSource {
    /// First-order chain from a square row-stochastic table.
    pub fn first_order(symbols: Vec<String>, transition: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(symbols, 1, transition)
    }

    /// Order-`m` source; `transition[h]` is the law of the next symbol given
    /// the history with index `h` (see [`word_index`]).
    pub fn new(symbols: Vec<String>, order: usize, transition: Vec<Vec<f64>>) -> Result<Self> {
        let k = symbols.len();
        if k == 0 {
            return Err(Error::InvalidSource("empty alphabet".into()));
        }
        if order == 0 {
            return Err(Error::InvalidSource("order must be at least 1".into()));
        }
        let histories = checked_pow(k, order)
            .filter(|&h| h <= DEFAULT_ENUMERATION_CAP)
            .ok_or(Error::AlphabetTooLarge {
                size: pow_u128(k, order),
                cap: DEFAULT_ENUMERATION_CAP,
            })?;
        if transition.len() != histories {
            return Err(Error::InvalidTransition(format!(
                "{} rows given, {histories} histories expected",
                transition.len()
            )));
        }
        validate_rows(&transition, k)?;
        let mut source = Self {
            symbols,
            order,
            transition,
            stationary: Vec::new(),
            cap: DEFAULT_ENUMERATION_CAP,
        };
        source.stationary = stationary_distribution(&source.history_chain())?;
        Ok(source)
    }

    /// I.i.d. source with the given single-letter law.
    pub fn iid(symbols: Vec<String>, law: Vec<f64>) -> Result<Self> {
        let rows = vec![law; symbols.len()];
        Self::first_order(symbols, rows)
    }

    /// Symmetric binary chain that flips with probability `flip`.
    pub fn binary_symmetric(flip: f64) -> Result<Self> {
        Self::first_order(
            vec!["0".into(), "1".into()],
            vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]],
        )
    }

    /// Replaces the enumeration cap used by every table-producing method.
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn alphabet_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Stationary law over length-`m` histories.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn history_count(&self) -> usize {
        self.stationary.len()
    }

    pub(crate) fn advance(&self, history: usize, symbol: usize) -> usize {
        (history * self.alphabet_size() + symbol) % self.transition.len()
    }

    /// The first-order chain induced on histories, as a dense table.
    pub fn history_chain(&self) -> Vec<Vec<f64>> {
        let h = self.transition.len();
        let mut rows = vec![vec![0.0; h]; h];
        for (i, row) in self.transition.iter().enumerate() {
            for (x, &p) in row.iter().enumerate() {
                rows[i][self.advance(i, x)] += p;
            }
        }
        rows
    }

    /// Classification of the history chain (the chain itself when `m = 1`).
    pub fn chain_report(&self) -> ChainReport {
        check_irreducible_aperiodic(&self.history_chain()).expect("validated on construction")
    }

    /// Period of the closed class carrying the stationary law.
    pub fn recurrent_period(&self) -> usize {
        let rows = self.history_chain();
        let adjacency = support_graph(&rows);
        classes(&adjacency)
            .into_iter()
            .find(|(_, closed)| *closed)
            .and_then(|(members, _)| class_period(&members, &adjacency))
            .unwrap_or(1)
    }

    pub(crate) fn ensure_enumerable(&self, horizon: usize) -> Result<usize> {
        let k = self.alphabet_size();
        checked_pow(k, horizon)
            .filter(|&size| size <= self.cap)
            .ok_or(Error::HorizonTooLarge {
                size: pow_u128(k, horizon),
                cap: self.cap,
            })
    }

    /// Probability of the cylinder `X_1^n = word`; zero for symbols outside
    /// the alphabet.
    pub fn cylinder_probability(&self, word: &[usize]) -> f64 {
        let k = self.alphabet_size();
        let m = self.order;
        if word.iter().any(|&x| x >= k) {
            return 0.0;
        }
        if word.len() < m {
            let span = checked_pow(k, m - word.len()).unwrap();
            let start = word_index(word, k) * span;
            return self.stationary[start..start + span].iter().sum();
        }
        let mut history = word_index(&word[..m], k);
        let mut p = self.stationary[history];
        for &x in &word[m..] {
            if p == 0.0 {
                return 0.0;
            }
            p *= self.transition[history][x];
            history = self.advance(history, x);
        }
        p
    }

    /// Probability of emitting `word` next, given the current history.
    pub(crate) fn continuation_probability(&self, history: usize, word: &[usize]) -> f64 {
        let mut h = history;
        let mut p = 1.0;
        for &x in word {
            p *= self.transition[h][x];
            if p == 0.0 {
                return 0.0;
            }
            h = self.advance(h, x);
        }
        p
    }

    /// Stationary law `P_T` of a `T`-window.
    pub fn marginal(&self, horizon: usize) -> Result<CylinderLaw> {
        self.ensure_enumerable(horizon)?;
        let k = self.alphabet_size();
        let m = self.order;
        if horizon <= m {
            let span = checked_pow(k, m - horizon).unwrap();
            let probs = self
                .stationary
                .chunks(span)
                .map(|c| c.iter().sum())
                .collect();
            return Ok(CylinderLaw::from_raw(k, horizon, probs));
        }
        let mut probs = self.stationary.clone();
        let hc = self.history_count();
        for _ in m..horizon {
            let mut next = Vec::with_capacity(probs.len() * k);
            for (w, &p) in probs.iter().enumerate() {
                let row = &self.transition[w % hc];
                next.extend(row.iter().map(|q| p * q));
            }
            probs = next;
        }
        Ok(CylinderLaw::from_raw(k, horizon, probs))
    }

    /// Law of the next `len` symbols given the current history.
    fn window_from_history(&self, history: usize, len: usize) -> Vec<f64> {
        self.window_states(history, len).0
    }

    /// Window probabilities together with the history reached after each word.
    fn window_states(&self, history: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
        let k = self.alphabet_size();
        let mut probs = vec![1.0];
        let mut hists = vec![history];
        for _ in 0..len {
            let mut np = Vec::with_capacity(probs.len() * k);
            let mut nh = Vec::with_capacity(probs.len() * k);
            for (&p, &h) in probs.iter().zip(&hists) {
                for (x, &q) in self.transition[h].iter().enumerate() {
                    np.push(p * q);
                    nh.push(self.advance(h, x));
                }
            }
            probs = np;
            hists = nh;
        }
        (probs, hists)
    }

    fn window_from_alpha(&self, alpha: &[f64], len: usize) -> Vec<f64> {
        let size = checked_pow(self.alphabet_size(), len).unwrap();
        let mut out = vec![0.0; size];
        for (h, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.window_from_history(h, len)) {
                *o += a * p;
            }
        }
        out
    }

    /// Pushes a history distribution forward by `steps` symbols.
    pub(crate) fn propagate(&self, alpha: &[f64], steps: usize) -> Vec<f64> {
        let mut cur = alpha.to_vec();
        for _ in 0..steps {
            let mut next = vec![0.0; cur.len()];
            for (h, &a) in cur.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &q) in self.transition[h].iter().enumerate() {
                    next[self.advance(h, x)] += a * q;
                }
            }
            cur = next;
        }
        cur
    }

    fn check_word(&self, word: &[usize]) -> Result<()> {
        match word.iter().find(|&&x| x >= self.alphabet_size()) {
            Some(x) => Err(Error::InvalidSource(format!(
                "symbol index {x} out of range"
            ))),
            None => Ok(()),
        }
    }

    /// `Pr(X_{t+gap+1}^{t+gap+horizon} ∈ · | X_1^t = prefix)`.
    pub fn conditional_law(
        &self,
        prefix: &[usize],
        gap: usize,
        horizon: usize,
    ) -> Result<CylinderLaw> {
        self.check_word(prefix)?;
        self.ensure_enumerable(horizon)?;
        let k = self.alphabet_size();
        let m = self.order;
        let t = prefix.len();
        if t == 0 {
            return self.marginal(horizon);
        }
        let p_prefix = self.cylinder_probability(prefix);
        if p_prefix <= 0.0 {
            return Err(Error::ZeroProbabilityPrefix);
        }
        let probs = if t >= m {
            let mut alpha = vec![0.0; self.history_count()];
            alpha[word_index(&prefix[t - m..], k)] = 1.0;
            let alpha = self.propagate(&alpha, gap);
            self.window_from_alpha(&alpha, horizon)
        } else if t + gap >= m {
            // History at time m, restricted to those starting with the prefix.
            let span = checked_pow(k, m - t).unwrap();
            let start = word_index(prefix, k) * span;
            let mut alpha = vec![0.0; self.history_count()];
            for (a, s) in alpha[start..start + span]
                .iter_mut()
                .zip(&self.stationary[start..start + span])
            {
                *a = s / p_prefix;
            }
            let alpha = self.propagate(&alpha, t + gap - m);
            self.window_from_alpha(&alpha, horizon)
        } else {
            self.ensure_enumerable(gap + horizon)?;
            let mut out = vec![0.0; checked_pow(k, horizon).unwrap()];
            let mut word = prefix.to_vec();
            for g in 0..checked_pow(k, gap).unwrap() {
                word.truncate(t);
                word.extend(index_word(g, gap, k));
                for (b, o) in out.iter_mut().enumerate() {
                    word.truncate(t + gap);
                    word.extend(index_word(b, horizon, k));
                    *o += self.cylinder_probability(&word) / p_prefix;
                }
            }
            out
        };
        Ok(CylinderLaw::from_raw(k, horizon, probs))
    }

    /// Law of the `gap` symbols between `left` (starting at time 1) and
    /// `right` (immediately after the gap), given both.
    pub fn bridge_law(&self, left: &[usize], gap: usize, right: &[usize]) -> Result<CylinderLaw> {
        self.check_word(left)?;
        self.check_word(right)?;
        self.ensure_enumerable(gap)?;
        let k = self.alphabet_size();
        let m = self.order;
        let weights: Vec<f64> = if left.len() >= m {
            let h = word_index(&left[left.len() - m..], k);
            let (probs, hists) = self.window_states(h, gap);
            probs
                .iter()
                .zip(&hists)
                .map(|(&p, &hg)| {
                    if p == 0.0 {
                        0.0
                    } else {
                        p * self.continuation_probability(hg, right)
                    }
                })
                .collect()
        } else {
            let mut word = Vec::with_capacity(left.len() + gap + right.len());
            (0..checked_pow(k, gap).unwrap())
                .map(|g| {
                    word.clear();
                    word.extend_from_slice(left);
                    word.extend(index_word(g, gap, k));
                    word.extend_from_slice(right);
                    self.cylinder_probability(&word)
                })
                .collect()
        };
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroProbabilityPrefix);
        }
        Ok(CylinderLaw::from_raw(
            k,
            gap,
            weights.into_iter().map(|w| w / total).collect(),
        ))
    }

    /// The `L`-block process `Z_t = X_{(t-1)L+1}^{tL}` as a first-order chain
    /// on `X^L`. Requires `L >= m` so that `Z` is first-order Markov.
    pub fn block_process(&self, block: usize) -> Result<MarkovSource> {
        if block == 0 {
            return Err(Error::InvalidSource(
                "block length must be at least 1".into(),
            ));
        }
        if block == 1 && self.order == 1 {
            return Ok(self.clone());
        }
        if block < self.order {
            return Err(Error::InvalidSource(format!(
                "block length {block} is shorter than the order {}",
                self.order
            )));
        }
        let k = self.alphabet_size();
        let size =
            checked_pow(k, block)
                .filter(|&s| s <= self.cap)
                .ok_or(Error::AlphabetTooLarge {
                    size: pow_u128(k, block),
                    cap: self.cap,
                })?;
        if size.checked_mul(size).is_none_or(|t| t > self.cap) {
            return Err(Error::AlphabetTooLarge {
                size: pow_u128(k, 2 * block),
                cap: self.cap,
            });
        }
        let hc = self.history_count();
        let transition: Vec<Vec<f64>> = (0..size)
            .map(|z| self.window_from_history(z % hc, block))
            .collect();
        let stationary = self.marginal(block)?.probs;
        check_stationary(&transition, &stationary)?;
        let symbols = (0..size)
            .map(|z| {
                index_word(z, block, k)
                    .into_iter()
                    .map(|x| self.symbols[x].as_str())
                    .collect::<String>()
            })
            .collect();
        Ok(MarkovSource {
            symbols,
            order: 1,
            transition,
            stationary,
            cap: self.cap,
        })
    }

    /// Draws `X_1^n` by ordinary forward sampling.
    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        PathSampler::new(self).sample(n, rng)
    }
}

/// Forward sampler with the per-row categorical tables built once.
pub struct PathSampler<'a> {
    source: &'a MarkovSource,
    initial: WeightedIndex<f64>,
    rows: Vec<Option<WeightedIndex<f64>>>,
}

impl<'a> PathSampler<'a> {
    pub fn new(source: &'a MarkovSource) -> Self {
        let initial = WeightedIndex::new(source.stationary()).expect("stationary law");
        let rows = source
            .transition()
            .iter()
            .zip(source.stationary())
            .map(|(row, &pi)| (pi > 0.0).then(|| WeightedIndex::new(row).expect("row law")))
            .collect();
        Self {
            source,
            initial,
            rows,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let k = self.source.alphabet_size();
        let m = self.source.order();
        let mut history = self.initial.sample(rng);
        let mut out = index_word(history, m, k);
        out.truncate(n);
        while out.len() < n {
            let x = self.rows[history]
                .as_ref()
                .expect("recurrent histories only")
                .sample(rng);
            out.push(x);
            history = self.source.advance(history, x);
        }
        out
    }
}

/// Splits a concatenated history key into `order` symbols.
fn parse_history(key: &str, symbols: &[String], order: usize) -> Option<Vec<usize>> {
    if order == 0 {
        return key.is_empty().then(Vec::new);
    }
    for (i, s) in symbols.iter().enumerate() {
        if let Some(rest) = key.strip_prefix(s.as_str()) {
            if let Some(mut tail) = parse_history(rest, symbols, order - 1) {
                tail.insert(0, i);
                return Some(tail);
            }
        }
    }
    None
}

/// Builds an order-`m` source from rows keyed by concatenated history symbols.
pub fn order_m_wrap(
    symbols: Vec<String>,
    rows: &BTreeMap<String, Vec<f64>>,
    order: usize,
) -> Result<MarkovSource> {
    let k = symbols.len();
    let histories = checked_pow(k, order).ok_or(Error::AlphabetTooLarge {
        size: pow_u128(k, order),
        cap: DEFAULT_ENUMERATION_CAP,
    })?;
    let mut table: Vec<Option<Vec<f64>>> = vec![None; histories];
    for (key, row) in rows {
        let h = parse_history(key, &symbols, order)
            .ok_or_else(|| Error::InvalidTransition(format!("unparseable history key {key:?}")))?;
        let idx = word_index(&h, k);
        if table[idx].replace(row.clone()).is_some() {
            return Err(Error::InvalidTransition(format!(
                "duplicate history key {key:?}"
            )));
        }
    }
    let table = table
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.ok_or_else(|| {
                let missing: String = index_word(i, order, k)
                    .into_iter()
                    .map(|x| symbols[x].as_str())
                    .collect();
                Error::InvalidTransition(format!("missing history {missing:?}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MarkovSource::new(symbols, order, table)
}

/// Rows of a chain file: a plain matrix (order 1, or histories in index
/// order) or a map keyed by concatenated history symbols.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TransitionSpec {
    Rows(Vec<Vec<f64>>),
    Keyed(BTreeMap<String, Vec<f64>>),
}

/// JSON chain description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChainFile {
    pub states: Vec<String>,
    #[serde(default = "default_order")]
    pub order: usize,
    pub transition: TransitionSpec,
    /// Optional single-letter distortion table; Hamming when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<Vec<Vec<f64>>>,
}

fn default_order() -> usize {
    1
}

impl ChainFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_source(&self) -> Result<MarkovSource> {
        match &self.transition {
            TransitionSpec::Rows(rows) => {
                MarkovSource::new(self.states.clone(), self.order, rows.clone())
            }
            TransitionSpec::Keyed(map) => order_m_wrap(self.states.clone(), map, self.order),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain(p: f64) -> MarkovSource {
        MarkovSource::binary_symmetric(p).unwrap()
    }

    fn order2() -> MarkovSource {
        let symbols = vec!["0".to_string(), "1".to_string()];
        let rows = vec![
            vec![0.9, 0.1],
            vec![0.4, 0.6],
            vec![0.3, 0.7],
            vec![0.2, 0.8],
        ];
        MarkovSource::new(symbols, 2, rows).unwrap()
    }

    #[test]
    fn stationary_symmetric_and_cycle() {
        let pi = stationary_distribution(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-14);
        let cycle = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        let pi = stationary_distribution(&cycle).unwrap();
        for p in pi {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn identity_is_not_irreducible() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            stationary_distribution(&id),
            Err(Error::NotIrreducible { closed_classes: 2 })
        ));
        let r = check_irreducible_aperiodic(&id).unwrap();
        assert_eq!(
            r,
            ChainReport {
                irreducible: false,
                aperiodic: true,
                period: 1
            }
        );
    }

    #[test]
    fn classification_examples() {
        let r = check_irreducible_aperiodic(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        assert_eq!((r.irreducible, r.aperiodic, r.period), (true, true, 1));
        let cycle = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        let r = check_irreducible_aperiodic(&cycle).unwrap();
        assert_eq!((r.irreducible, r.aperiodic, r.period), (true, false, 3));
    }

    #[test]
    fn transient_state_gets_zero_mass() {
        let rows = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.2, 0.3, 0.5],
        ];
        let pi = stationary_distribution(&rows).unwrap();
        assert_eq!(pi[2], 0.0);
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(matches!(
            stationary_distribution(&[vec![0.7, 0.2], vec![0.3, 0.7]]),
            Err(Error::InvalidTransition(_))
        ));
        assert!(MarkovSource::first_order(
            vec!["a".into(), "b".into()],
            vec![vec![1.2, -0.2], vec![0.5, 0.5]]
        )
        .is_err());
    }

    #[test]
    fn marginal_examples() {
        let src = chain(0.3);
        let p1 = src.marginal(1).unwrap();
        assert_eq!(p1.probabilities(), &[0.5, 0.5]);
        let p2 = src.marginal(2).unwrap();
        for (got, want) in p2.probabilities().iter().zip([0.35, 0.15, 0.15, 0.35]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn marginal_respects_cap() {
        let src = chain(0.3).with_cap(8);
        assert!(src.marginal(3).is_ok());
        assert!(matches!(
            src.marginal(4),
            Err(Error::HorizonTooLarge { size: 16, cap: 8 })
        ));
    }

    #[test]
    fn cylinder_examples() {
        let src = chain(0.3);
        assert_abs_diff_eq!(src.cylinder_probability(&[0, 0]), 0.35, epsilon = 1e-15);
        assert_abs_diff_eq!(src.cylinder_probability(&[1]), 0.5, epsilon = 1e-15);
        let sticky = MarkovSource::first_order(
            vec!["0".into(), "1".into()],
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(sticky.cylinder_probability(&[0, 1]), 0.0);
    }

    #[test]
    fn conditional_examples() {
        let src = chain(0.3);
        let c = src.conditional_law(&[0], 0, 1).unwrap();
        assert_abs_diff_eq!(c.prob(&[0]), 0.7, epsilon = 1e-15);
        let c = src.conditional_law(&[0], 1, 1).unwrap();
        assert_abs_diff_eq!(c.prob(&[0]), 0.58, epsilon = 1e-15);
        assert_abs_diff_eq!(c.prob(&[1]), 0.42, epsilon = 1e-15);

        let iid = MarkovSource::iid(vec!["a".into(), "b".into()], vec![0.2, 0.8]).unwrap();
        let c = iid.conditional_law(&[1, 0, 1], 2, 2).unwrap();
        assert!(c.max_abs_diff(&iid.marginal(2).unwrap()) < 1e-15);
    }

    #[test]
    fn conditional_zero_prefix() {
        let sticky = MarkovSource::first_order(
            vec!["0".into(), "1".into()],
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        )
        .unwrap();
        assert!(matches!(
            sticky.conditional_law(&[1], 0, 1),
            Err(Error::ZeroProbabilityPrefix)
        ));
    }

    #[test]
    fn conditional_short_prefix_order2_matches_enumeration() {
        let src = order2();
        for gap in 0..3 {
            for horizon in 1..3 {
                let c = src.conditional_law(&[1], gap, horizon).unwrap();
                let p_prefix = src.cylinder_probability(&[1]);
                for b in 0..(1 << horizon) {
                    let bw = index_word(b, horizon, 2);
                    let mut joint = 0.0;
                    for g in 0..(1 << gap) {
                        let mut w = vec![1];
                        w.extend(index_word(g, gap, 2));
                        w.extend(&bw);
                        joint += src.cylinder_probability(&w);
                    }
                    assert_abs_diff_eq!(c.prob(&bw), joint / p_prefix, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn block_process_pairs() {
        let src = chain(0.3);
        let z = src.block_process(2).unwrap();
        assert_eq!(z.alphabet_size(), 4);
        assert_eq!(z.symbols(), &["00", "01", "10", "11"]);
        for (got, want) in z.stationary().iter().zip([0.35, 0.15, 0.15, 0.35]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(src.block_process(1).unwrap(), src);
    }

    #[test]
    fn order2_block_rows_by_hand() {
        let src = order2();
        let z = src.block_process(2).unwrap();
        // From history (0,1): next pair (1,0) has prob p(1|01) * p(0|11).
        let from = word_index(&[0, 1], 2);
        let to = word_index(&[1, 0], 2);
        assert_abs_diff_eq!(z.transition()[from][to], 0.6 * 0.2, epsilon = 1e-15);
        let to = word_index(&[0, 0], 2);
        assert_abs_diff_eq!(z.transition()[from][to], 0.4 * 0.3, epsilon = 1e-15);
        assert!(src.block_process(1).is_err());
    }

    #[test]
    fn order2_uniform_rows_block_to_iid_pairs() {
        let symbols = vec!["0".to_string(), "1".to_string()];
        let rows = vec![vec![0.5, 0.5]; 4];
        let src = MarkovSource::new(symbols, 2, rows).unwrap();
        let z = src.block_process(2).unwrap();
        for row in z.transition() {
            for &p in row {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn keyed_chain_file() {
        let text = r#"{"states": ["a","b"], "order": 2,
            "transition": {"aa": [0.9,0.1], "ab": [0.4,0.6], "ba": [0.3,0.7], "bb": [0.2,0.8]}}"#;
        let src = ChainFile::from_json(text).unwrap().to_source().unwrap();
        assert_eq!(src.order(), 2);
        assert_eq!(src.transition(), order2().transition());

        let text = r#"{"states": ["0","1"], "order": 1, "transition": [[0.7,0.3],[0.3,0.7]]}"#;
        let src = ChainFile::from_json(text).unwrap().to_source().unwrap();
        assert_eq!(src, chain(0.3));
    }

    #[test]
    fn keyed_chain_missing_history() {
        let mut rows = BTreeMap::new();
        rows.insert("00".to_string(), vec![0.5, 0.5]);
        let err = order_m_wrap(vec!["0".into(), "1".into()], &rows, 2).unwrap_err();
        assert!(matches!(err, Error::InvalidTransition(_)));
    }

    #[test]
    fn bridge_law_matches_joint() {
        let src = order2();
        let left = [0, 1, 1];
        let right = [0, 0];
        let bridge = src.bridge_law(&left, 2, &right).unwrap();
        let mut weights = Vec::new();
        for g in 0..4 {
            let mut w = left.to_vec();
            w.extend(index_word(g, 2, 2));
            w.extend(right);
            weights.push(src.cylinder_probability(&w));
        }
        let total: f64 = weights.iter().sum();
        for (g, w) in weights.iter().enumerate() {
            assert_abs_diff_eq!(bridge.probabilities()[g], w / total, epsilon = 1e-14);
        }
    }

    #[test]
    fn sampler_frequencies() {
        use rand::SeedableRng;
        let src = chain(0.3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let path = src.sample_path(20_000, &mut rng);
        let flips = path.windows(2).filter(|w| w[0] != w[1]).count() as f64;
        let rate = flips / 19_999.0;
        assert!((rate - 0.3).abs() < 4.0 * (0.21f64 / 19_999.0).sqrt());
    }
}
