//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use psimix::bounds::convergence_sweep;
use psimix::codesim::{direct_communication_check, error_curve, Experiment};
use psimix::export::{
    write_codebook, write_error_curve, write_mixing_profile, write_rd_curve, write_sweep,
};
use psimix::mixing::{lambda_profile, psi_brute_force};
use psimix::ratedist::{rd_curve, rd_vector_source, BaOptions};
use psimix::simulate::{draw_flags, exact_simulated_law, generate_codebook, SlotSchedule};
use psimix::{Error, Result};
use serde_json::json;

use crate::config::{ExperimentFile, LoadedChain};
use crate::manifest::RunManifest;
use crate::{Cli, Command, Global};

const DEFAULT_SEED: u64 = 1;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn manifest(
    global: &Global,
    subcommand: &str,
    config: &Path,
    seed: u64,
    parameters: serde_json::Value,
    outputs: &[&str],
) -> RunManifest {
    RunManifest {
        subcommand: subcommand.into(),
        config: Some(config.display().to_string()),
        seed,
        out_dir: global.out_dir.display().to_string(),
        cap: global.cap,
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        parameters,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir)?;
    let seed = g.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Psi {
            chain,
            tau_max,
            brute,
        } => {
            let c = LoadedChain::load(chain, g.cap)?;
            let profile = lambda_profile(&c.source, *tau_max)?;
            let brute_values = match brute.as_deref() {
                Some(&[t, horizon]) => Some(
                    (0..=*tau_max)
                        .map(|tau| psi_brute_force(&c.source, tau, t, horizon))
                        .collect::<Result<Vec<_>>>()?,
                ),
                _ => None,
            };
            write_mixing_profile(
                create(&g.out_dir, "psi.csv")?,
                &profile,
                brute_values.as_deref(),
            )?;
            for (tau, l) in profile.lambdas.iter().enumerate() {
                println!("psi({tau}) = {l}");
            }
            manifest(
                g,
                "psi",
                chain,
                seed,
                json!({"tau_max": tau_max, "brute": brute}),
                &["psi.csv"],
            )
            .write(&g.out_dir)
        }
        Command::Simulate {
            chain,
            block_len,
            tau,
            k,
            codewords,
            exact_check,
        } => {
            let c = LoadedChain::load(chain, g.cap)?;
            let schedule = SlotSchedule::new(*block_len, *tau, *k)?;
            let lambda = psimix::mixing::psi_markov(&c.source, *tau)?;
            let flags = draw_flags(*k, lambda, seed)?;
            let book = generate_codebook(&c.source, schedule, &flags, *codewords, seed)?;
            write_codebook(
                create(&g.out_dir, "sequence.txt")?,
                &schedule,
                &flags,
                seed,
                c.source.symbols(),
                &book,
            )?;
            let mut outputs = vec!["sequence.txt"];
            if *exact_check {
                let law = exact_simulated_law(&c.source, schedule)?;
                let truth = c.source.marginal(schedule.len())?;
                let tv = law.total_variation(&truth);
                let mut w = create(&g.out_dir, "exact_check.csv")?;
                writeln!(w, "n,total_variation\n{},{}", schedule.len(), tv)?;
                w.flush()?;
                println!("total variation over n={}: {tv}", schedule.len());
                outputs.push("exact_check.csv");
            }
            manifest(
                g,
                "simulate",
                chain,
                seed,
                json!({"T": block_len, "tau": tau, "k": k, "lambda_tau": lambda,
                       "codewords": codewords, "exact_check": exact_check}),
                &outputs,
            )
            .write(&g.out_dir)
        }
        Command::Rd {
            chain,
            block_len,
            distortion,
            curve,
        } => {
            let c = LoadedChain::load(chain, g.cap)?;
            let opts = BaOptions::default();
            let points = match (distortion, curve) {
                (Some(d), _) => {
                    vec![rd_vector_source(
                        &c.source, &c.measure, *block_len, *d, opts,
                    )?]
                }
                (None, Some(n)) => {
                    let law = c.source.marginal(*block_len)?;
                    rd_curve(&law, &c.measure, *n, opts)?
                }
                (None, None) => return Err(Error::ConfigMismatch("give --D or --curve".into())),
            };
            write_rd_curve(create(&g.out_dir, "rd.csv")?, &points)?;
            for p in &points {
                let p = p.clone().into_per_letter();
                println!("D = {}  R = {} bits/letter", p.distortion, p.rate_bits);
            }
            manifest(
                g,
                "rd",
                chain,
                seed,
                json!({"T": block_len, "D": distortion, "curve": curve,
                       "tol_nats": opts.tol_nats, "max_iterations": opts.max_iterations}),
                &["rd.csv"],
            )
            .write(&g.out_dir)
        }
        Command::Bound {
            chain,
            distortion,
            block_len,
            tau,
            beta,
        } => sweep(
            g,
            "bound",
            chain,
            seed,
            *distortion,
            &[*block_len],
            &[*tau],
            &[*beta],
        ),
        Command::Sweep {
            chain,
            distortion,
            blocks,
            taus,
            betas,
        } => sweep(g, "sweep", chain, seed, *distortion, blocks, taus, betas),
        Command::Codesim { experiment } => codesim(g, experiment),
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    g: &Global,
    name: &str,
    chain: &Path,
    seed: u64,
    distortion: f64,
    blocks: &[usize],
    taus: &[usize],
    betas: &[f64],
) -> Result<()> {
    let c = LoadedChain::load(chain, g.cap)?;
    let opts = BaOptions::default();
    let rows = convergence_sweep(&c.source, &c.measure, distortion, blocks, taus, betas, opts)?;
    let file = format!("{name}.csv");
    write_sweep(create(&g.out_dir, &file)?, distortion, &rows)?;
    for r in &rows {
        match &r.report {
            Some(b) => println!(
                "T={} tau={} beta={}: R_bound = {} bits/use",
                r.block_len, r.gap, r.beta, b.rate_bound_bits
            ),
            None => println!(
                "T={} tau={} beta={}: infeasible",
                r.block_len, r.gap, r.beta
            ),
        }
    }
    manifest(
        g,
        name,
        chain,
        seed,
        json!({"D": distortion, "T_list": blocks, "tau_list": taus, "beta_list": betas,
               "reference_T": blocks.iter().max(),
               "tol_nats": opts.tol_nats, "max_iterations": opts.max_iterations}),
        &[&file],
    )
    .write(&g.out_dir)
}

fn codesim(g: &Global, path: &Path) -> Result<()> {
    let mut exp = ExperimentFile::load(path)?;
    if let Some(seed) = g.seed {
        exp.params.seed = seed;
    }
    let c = exp.chain(path, g.cap)?;
    let channel = exp.channel(c.source.alphabet_size())?;
    let mut outputs = vec!["codesim.csv"];
    if let Some(direct) = &exp.direct_check {
        let n = direct.n;
        let r = direct_communication_check(
            &c.source,
            &channel,
            &c.measure,
            exp.params.distortion,
            n,
            direct.trials,
            exp.params.seed,
        )?;
        let mut w = create(&g.out_dir, "codesim_direct.csv")?;
        writeln!(
            w,
            "n,trials,exceed,frequency,ci_low,ci_high,mean_distortion\n{},{},{},{},{},{},{}",
            r.n, r.trials, r.exceed, r.frequency, r.ci_low, r.ci_high, r.mean_distortion
        )?;
        w.flush()?;
        println!(
            "direct check: {} of {} runs above D (mean distortion {})",
            r.exceed, r.trials, r.mean_distortion
        );
        outputs.push("codesim_direct.csv");
    }
    let experiment = Experiment {
        source: &c.source,
        channel: &channel,
        measure: &c.measure,
        params: exp.params.clone(),
    };
    let batches = error_curve(&experiment, &exp.k_list)?;
    write_error_curve(create(&g.out_dir, "codesim.csv")?, &batches)?;
    for b in &batches {
        println!(
            "k={} n={} ({:?}, 2^{} codewords): error rate {}",
            b.k,
            b.n,
            b.mode,
            b.codebook_bits,
            b.error_rate()
        );
    }
    manifest(
        g,
        "codesim",
        path,
        exp.params.seed,
        serde_json::to_value(&exp)?,
        &outputs,
    )
    .write(&g.out_dir)
}
