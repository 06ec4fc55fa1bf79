//! Briefly trains a generator on synthetic data, converts a held-out speech
//! spectrogram to the melody of another example, and vocodes the result.
//!
//! cargo run --release --example conversion -- [steps] [out_dir]

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sts_core::data::{make_synthetic_pair, SyntheticParams};
use sts_core::dsp::{time_stretch, write_wav, DspConfig, WavFormat};
use sts_core::net::NetConfig;
use sts_core::train::{mean_l1, TrainConfig, Trainer};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let out_dir = args.next().unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let dsp = DspConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = SyntheticParams::default();
    let data = (0..4)
        .map(|i| make_synthetic_pair(&mut rng, &params, &format!("train{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let held_out = make_synthetic_pair(&mut rng, &params, "held_out")?;

    let config = TrainConfig {
        steps,
        batch_size: 4,
        segment_frames: 128,
        checkpoint_every: 0,
        seed: 1,
        ..Default::default()
    };
    let mut trainer = Trainer::new(config, NetConfig::default(), dsp.clone())?;
    while trainer.step() < steps {
        let batch = trainer.sample_batch(&data, &[])?;
        let m = trainer.train_step(&batch)?;
        if trainer.step() % 25 == 0 {
            println!("step {:>4}: L_G {:.4}  L_D {:.4}", trainer.step(), m.l_g, m.l_d);
        }
    }

    let g = trainer.generator();
    let speech = time_stretch(&held_out.speech, data[0].contour.n_frames())?;
    let sung = g.generate(&speech, &data[0].contour)?;
    let own = g.generate(&held_out.speech, &held_out.contour)?;
    println!("held-out L1 against its own singing: {:.4}", mean_l1(&held_out.singing, &own)?);

    let audio = dsp.to_waveform(&sung, &dsp.filterbank()?)?;
    let path = std::path::Path::new(&out_dir).join("conversion.wav");
    write_wav(&path, &audio, WavFormat::Pcm16)?;
    println!("{} frames -> {} samples -> {}", sung.n_frames(), audio.len(), path.display());
    Ok(())
}
