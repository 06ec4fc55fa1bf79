//! The BEGAN equilibrium controller on scripted loss sequences: with
//! `gamma = 0` `k` never leaves 0, with `gamma > 0` it tracks the balance
//! between real and fake reconstruction losses.
//!
//! cargo run --example began_controller

use anyhow::Result;
use sts_core::train::{loss_discriminator, update_k, BeganState};

fn main() -> Result<()> {
    for gamma in [0.0, 0.5] {
        let mut state = BeganState::new(0.0, gamma, 0.01)?;
        println!("gamma = {gamma}");
        for step in 0..400 {
            let l_real = 0.8 * (-(step as f64) / 200.0).exp() + 0.1;
            let l_fake = 0.3 + 0.1 * (step as f64 / 25.0).sin();
            if step % 80 == 0 {
                let l_d = loss_discriminator(l_real, l_fake, state.k)?;
                println!("  step {step:>3}: k = {:.4}, L_D = {l_d:.4}", state.k);
            }
            state = update_k(state, l_real, l_fake);
        }
        println!("  final k = {:.4} after {} updates", state.k, state.step);
    }
    Ok(())
}
