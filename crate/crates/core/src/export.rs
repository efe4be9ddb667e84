//! Plain-text output formats.
//!
//! CSV files carry a header row, LF line endings and floats in Rust's
//! shortest round-trip form, so identical runs give identical bytes.
//! Missing values (infeasible sweep rows) are empty fields.

use std::io::Write;

use crate::bounds::SweepRow;
use crate::codesim::{CurveRow, TrialBatch};
use crate::error::Result;
use crate::mixing::{DecompositionSummary, MixingProfile};
use crate::ratedist::RdPoint;
use crate::simulate::{SlotFlags, SlotSchedule};

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Columns `tau, lambda`, plus `psi_brute` when brute-force values are
/// given (one per `τ`).
pub fn write_mixing_profile<W: Write>(
    w: W,
    profile: &MixingProfile,
    brute: Option<&[f64]>,
) -> Result<()> {
    let mut out = writer(w);
    if brute.is_some() {
        out.write_record(["tau", "lambda", "psi_brute"])?;
    } else {
        out.write_record(["tau", "lambda"])?;
    }
    for (tau, &l) in profile.lambdas.iter().enumerate() {
        let mut row = vec![tau.to_string(), num(l)];
        if let Some(b) = brute {
            row.push(b.get(tau).map_or(String::new(), |v| num(*v)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `t, tau, T, prefix, max_error`; prefixes are space-separated
/// symbol indices.
pub fn write_decomposition<W: Write>(w: W, summary: &DecompositionSummary) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "tau", "T", "prefix", "max_error"])?;
    for r in &summary.reports {
        out.write_record([
            r.t.to_string(),
            r.tau.to_string(),
            r.horizon.to_string(),
            join(&r.prefix),
            num(r.max_identity_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `T, D_per_letter, R_bits_per_letter, slope, iterations`.
pub fn write_rd_curve<W: Write>(w: W, points: &[RdPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "T",
        "D_per_letter",
        "R_bits_per_letter",
        "slope",
        "iterations",
    ])?;
    for p in points {
        let p = p.clone().into_per_letter();
        out.write_record([
            p.block_len.to_string(),
            num(p.distortion),
            num(p.rate_bits),
            num(p.slope),
            p.iterations.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per grid point; `gap` is `|R_bound − proxy|`.
pub fn write_sweep<W: Write>(w: W, distortion: f64, rows: &[SweepRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "T",
        "tau",
        "beta",
        "lambda_tau",
        "D",
        "Dprime",
        "R_bound_bits",
        "T1",
        "T2",
        "T3",
        "T4",
        "gap_bound",
        "feasible",
        "gap",
    ])?;
    for row in rows {
        let mut rec = vec![
            row.block_len.to_string(),
            row.gap.to_string(),
            num(row.beta),
            num(row.lambda),
            num(distortion),
        ];
        match &row.report {
            Some(r) => rec.extend([
                num(r.d_prime),
                num(r.rate_bound_bits),
                num(r.terms.t1),
                num(r.terms.t2),
                num(r.terms.t3),
                num(r.terms.t4),
                num(r.gap_bound),
                "true".into(),
                num(r.proxy_gap()),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.extend(["false".into(), String::new()]);
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `k, n, N_good, trials, correct, erasure, confusion, error_rate,
/// ci_low, ci_high`.
pub fn write_error_curve<W: Write>(w: W, batches: &[TrialBatch]) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "k",
        "n",
        "N_good",
        "trials",
        "correct",
        "erasure",
        "confusion",
        "error_rate",
        "ci_low",
        "ci_high",
    ])?;
    for b in batches {
        let r = CurveRow::from(b);
        out.write_record([
            r.k.to_string(),
            r.n.to_string(),
            r.n_good.to_string(),
            r.trials.to_string(),
            r.correct.to_string(),
            r.erasure.to_string(),
            r.confusion.to_string(),
            num(r.error_rate),
            num(r.ci_low),
            num(r.ci_high),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn join(word: &[usize]) -> String {
    word.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Codebook dump: a `#` header with `T, τ, k, λ_τ, seed` and the flags,
/// then one codeword per line with symbols separated by spaces.
pub fn write_codebook<W: Write>(
    mut w: W,
    schedule: &SlotSchedule,
    flags: &SlotFlags,
    seed: u64,
    symbols: &[String],
    codewords: &[Vec<usize>],
) -> Result<()> {
    let flag_str: String = flags
        .flags
        .iter()
        .map(|&f| if f { '1' } else { '0' })
        .collect();
    writeln!(
        w,
        "# T={} tau={} k={} lambda={} seed={} flags={}",
        schedule.slot_width,
        schedule.gap,
        schedule.pairs,
        num(flags.lambda),
        seed,
        flag_str
    )?;
    for c in codewords {
        let line: Vec<&str> = c.iter().map(|&x| symbols[x].as_str()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_csv_bytes() {
        let p = MixingProfile {
            tau_max: 1,
            lambdas: vec![0.4, 0.16000000000000003],
        };
        let mut buf = Vec::new();
        write_mixing_profile(&mut buf, &p, None).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tau,lambda\n0,0.4\n1,0.16000000000000003\n"
        );
    }

    #[test]
    fn codebook_dump() {
        let s = SlotSchedule::new(1, 1, 2).unwrap();
        let f = SlotFlags {
            flags: vec![true, false],
            lambda: 0.4,
        };
        let mut buf = Vec::new();
        let symbols = vec!["a".to_string(), "b".to_string()];
        write_codebook(&mut buf, &s, &f, 5, &symbols, &[vec![0, 1, 1, 0]]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# T=1 tau=1 k=2 lambda=0.4 seed=5 flags=10\na b b a\n"
        );
    }
}
