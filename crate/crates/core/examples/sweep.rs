//! Parameter sweep over synthetic catalogs.
//!
//! For every (noise, λ, ρ) cell, runs the discovery evaluation on `--seeds`
//! independent catalogs and writes one CSV row of aggregate scores to stdout.
//! This is how the default λ and ρ were picked.
//!
//!     cargo run --release --example sweep -- --seeds 10 > sweep.csv

use std::collections::HashSet;

use clap::Parser;
use gradrec::direction::build_direction;
use gradrec::eval::{run_eval, EvalSetup};
use gradrec::synth::{generate_synthetic, prompt_name, SyntheticSpec};
use gradrec::{KnnIndex, TraversalConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 900)]
    n_products: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1, 0.2, 0.4])]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.3, 0.5, 0.8])]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1])]
    noise: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    k_reg: usize,
    #[arg(long, default_value_t = 40)]
    steps: usize,
}

#[derive(serde::Serialize)]
struct Row {
    noise_sigma: f64,
    lambda: f64,
    rho: f64,
    seeds: u64,
    direction_cos_min: f64,
    spearman_mean: f64,
    spearman_min: f64,
    spearman_pass_rate: f64,
    positive_coverage_mean: f64,
    peaks_pass_rate: f64,
    visual_peaks_pass_rate: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let attr = "attr0";
    let (neg, neu, pos) = (
        prompt_name(attr, -1.0),
        prompt_name(attr, 0.0),
        prompt_name(attr, 1.0),
    );
    let mut out = csv::Writer::from_writer(std::io::stdout().lock());

    for &noise in &args.noise {
        // catalogs do not depend on λ or ρ
        let catalogs: Vec<_> = (0..args.seeds)
            .map(|seed| {
                let spec = SyntheticSpec {
                    noise_sigma: noise,
                    ..SyntheticSpec::standard(args.n_products, seed)
                };
                let synth = generate_synthetic(&spec)?;
                let index = KnnIndex::new(synth.catalog.clone());
                Ok((synth, index))
            })
            .collect::<anyhow::Result<_>>()?;

        let mut direction_cos_min = f64::INFINITY;
        for (synth, index) in &catalogs {
            let setup = EvalSetup::new(&neg, &neu, &pos);
            let d = build_direction(
                index,
                &synth.prompts,
                &neu,
                &pos,
                setup.class_size,
                setup.class_size,
                &setup.snr,
            )?;
            let planted = synth.oracle.direction(attr).unwrap_or_default();
            direction_cos_min = direction_cos_min.min(cosine(&d.v_c.to_f64(), planted));
        }

        for &lambda in &args.lambda {
            for &rho in &args.rho {
                let (mut sp_sum, mut sp_min, mut sp_pass) = (0.0, f64::INFINITY, 0);
                let (mut coverage, mut peaks, mut visual) = (0.0, 0, 0);
                for (synth, index) in &catalogs {
                    let mut setup = EvalSetup::new(&neg, &neu, &pos);
                    setup.traversal = TraversalConfig {
                        lambda,
                        rho,
                        k_reg: args.k_reg,
                        max_steps: args.steps,
                        ..Default::default()
                    };
                    let alpha = synth.oracle.alpha_map(attr);
                    let r = run_eval(index, &synth.prompts, &setup, Some(&alpha))?;
                    let s = r.gradrec_monotonicity.unwrap_or(f64::NAN);
                    sp_sum += s;
                    sp_min = sp_min.min(s);
                    if s >= 0.8 {
                        sp_pass += 1;
                    }
                    let found: HashSet<&String> = r.gradrec_trajectory.iter().collect();
                    let positive = &r.datasets.positive;
                    coverage += positive.iter().filter(|id| found.contains(id)).count() as f64
                        / positive.len() as f64;
                    peaks += r.gradrec_peaks.pass as u64;
                    visual += r.visual_peaks.pass as u64;
                }
                let n = args.seeds as f64;
                out.serialize(Row {
                    noise_sigma: noise,
                    lambda,
                    rho,
                    seeds: args.seeds,
                    direction_cos_min,
                    spearman_mean: sp_sum / n,
                    spearman_min: sp_min,
                    spearman_pass_rate: sp_pass as f64 / n,
                    positive_coverage_mean: coverage / n,
                    peaks_pass_rate: peaks as f64 / n,
                    visual_peaks_pass_rate: visual as f64 / n,
                })?;
                out.flush()?;
            }
        }
    }
    Ok(())
}
