//! Overfits the full generator on a handful of synthetic speech/singing pairs
//! and reports reconstruction error and pitch-row agreement.
//!
//! cargo run --release --example synthetic_training -- [steps] [examples]

use std::time::Instant;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sts_core::data::{make_synthetic_pair, synthetic_ridge_bin, PairedExample, SyntheticParams};
use sts_core::dsp::DspConfig;
use sts_core::melody::REST_ROW;
use sts_core::net::{Generator, NetConfig};
use sts_core::train::{mean_l1, train_loop, TrainConfig, TrainOptions};

fn mean_l1_over(g: &Generator, data: &[PairedExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += mean_l1(&ex.singing, &g.generate(&ex.speech, &ex.contour)?)?;
    }
    Ok(total / data.len() as f64)
}

fn pitch_agreement(g: &Generator, data: &[PairedExample], dsp: &DspConfig) -> Result<f64> {
    let fb = dsp.filterbank()?;
    let (mut hit, mut voiced) = (0usize, 0usize);
    for ex in data {
        let out = g.generate(&ex.speech, &ex.contour)?;
        for (t, &row) in ex.contour.rows().iter().enumerate() {
            if row as usize == REST_ROW {
                continue;
            }
            voiced += 1;
            let col = out.values().column(t);
            let argmax = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
            hit += usize::from(argmax == synthetic_ridge_bin(&fb, row));
        }
    }
    Ok(hit as f64 / voiced.max(1) as f64)
}

fn main() -> Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SyntheticParams::default();
    let data = (0..n)
        .map(|i| make_synthetic_pair(&mut rng, &params, &format!("synth{i}")))
        .collect::<sts_core::Result<Vec<_>>>()?;
    let dsp = DspConfig::default();
    let config = TrainConfig {
        steps,
        batch_size: n,
        segment_frames: 256,
        checkpoint_every: 0,
        ..Default::default()
    };
    let started = Instant::now();
    let mut cb = |m: &sts_core::train::StepMetrics| {
        if m.step.is_multiple_of(100) || m.step <= 3 {
            println!(
                "step {:5}  L_G {:.4}  L1 {:.4}  L_real {:.4}  L_fake {:.4}  {:.1}s",
                m.step,
                m.l_g,
                m.l1.unwrap_or(f64::NAN),
                m.l_real,
                m.l_fake,
                started.elapsed().as_secs_f64()
            );
        }
    };
    let out = train_loop(
        &config,
        &data,
        &[],
        TrainOptions {
            net: NetConfig::default(),
            dsp: dsp.clone(),
            on_step: Some(&mut cb),
            ..Default::default()
        },
    )?;
    let g = out.trainer.generator();
    let l1 = mean_l1_over(g, &data)?;
    let at_10 = out.metrics.get(9).and_then(|m| m.l1);
    println!("final mean L1 {l1:.4} (step-10 batch L1 {at_10:?})");
    println!("pitch row agreement {:.3}", pitch_agreement(g, &data, &dsp)?);
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
