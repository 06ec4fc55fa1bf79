//! Removes silence from a speech spectrogram and stretches each phone to the
//! duration of its sung counterpart.
//!
//! cargo run --example phoneme_sync

use anyhow::Result;
use ndarray::Array2;
use sts_core::data::{phoneme_sync_stretch, remove_silence, PhoneAnnotation};
use sts_core::dsp::LogMelSpectrogram;

fn main() -> Result<()> {
    let (hop, sr) = (276u32, 22050u32);
    let frames = 80;
    // Row 0 carries the frame index so the retiming is visible.
    let values = Array2::from_shape_fn((4, frames), |(b, t)| if b == 0 { t as f32 } else { -5.0 });
    let speech = LogMelSpectrogram::new(values, hop, sr)?;

    let speech_phones = PhoneAnnotation::parse("sil 0.0 0.1\nh 0.1 0.2\nax 0.2 0.5\nsp 0.5 0.6\nl 0.6 0.8\now 0.8 1.0\n", "speech")?;
    let singing_phones = PhoneAnnotation::parse("h 0.0 0.1\nax 0.1 0.9\nl 0.9 1.0\nbr 1.0 1.2\now 1.2 2.0\n", "singing")?;

    let trimmed = remove_silence(&speech, &speech_phones)?;
    println!("speech {} frames, {} after silence removal", speech.n_frames(), trimmed.n_frames());

    let synced = phoneme_sync_stretch(&speech, &speech_phones, &singing_phones)?;
    println!("synced to {} frames; source frame index every 10 frames:", synced.n_frames());
    let row: Vec<String> = synced.values().row(0).iter().step_by(10).map(|v| format!("{v:.0}")).collect();
    println!("  {}", row.join(" "));

    let wrong = PhoneAnnotation::parse("h 0.0 0.1\nah 0.1 0.9\nl 0.9 1.0\now 1.2 2.0\n", "singing")?;
    match phoneme_sync_stretch(&speech, &speech_phones, &wrong) {
        Err(e) => println!("mismatched lyrics: {e}"),
        Ok(_) => unreachable!("labels differ"),
    }
    Ok(())
}
