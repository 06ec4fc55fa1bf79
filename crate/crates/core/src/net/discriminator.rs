use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, Conv1d, ParamStore};
use super::tensor::Tensor;
use super::{NetConfig, TIME_REDUCTION};
use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};

/// Anything that reconstructs an `n_mels x T` map.
pub trait Autoencoder {
    fn reconstruct(&self, y: &Tensor) -> Result<Tensor>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAutoencoder;

impl Autoencoder for IdentityAutoencoder {
    fn reconstruct(&self, y: &Tensor) -> Result<Tensor> {
        Ok(y.clone())
    }
}

/// Convolutional autoencoder: three stride-2 stacks down to `n_mels/8`
/// channels, three upsampling stacks back. The last layer is linear.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: NetConfig,
    params: ParamStore,
    enc: Vec<Conv1d>,
    dec: Vec<Conv1d>,
}

impl Discriminator {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let f = config.n_mels;
        let widths = [f, f / 2, f / 4, f / 8];
        let enc = (0..3)
            .map(|i| Conv1d::new(&mut params, &mut rng, &format!("enc.{i}"), widths[i], widths[i + 1], 3, 2, true))
            .collect();
        let dec = (0..3)
            .map(|i| {
                let (a, b) = (widths[3 - i], widths[2 - i]);
                Conv1d::new(&mut params, &mut rng, &format!("dec.{i}"), a, b, 3, 1, true)
            })
            .collect();
        params.quantize_f32();
        Ok(Self {
            config,
            params,
            enc,
            dec,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Reconstruction of `y` on the tape; `y` must have a multiple of 8
    /// frames.
    pub fn forward(&self, g: &mut Graph, p: &Bound, y: Var) -> Result<Var> {
        let (f, t) = g.value(y).shape();
        if f != self.config.n_mels || t == 0 || t % TIME_REDUCTION != 0 {
            return Err(Error::validation(format!(
                "discriminator input {f}x{t} needs {} bins and a multiple of 8 frames",
                self.config.n_mels
            )));
        }
        let slope = self.config.leaky_slope;
        let mut h = y;
        for conv in &self.enc {
            let c = conv.forward(g, p, h);
            h = g.leaky_relu(c, slope);
        }
        for (i, conv) in self.dec.iter().enumerate() {
            let u = g.upsample(h, 2);
            h = conv.forward(g, p, u);
            if i + 1 < self.dec.len() {
                h = g.leaky_relu(h, slope);
            }
        }
        Ok(h)
    }

    /// Scalar `mean |y - D(y)|` on the tape.
    pub fn loss(&self, g: &mut Graph, p: &Bound, y: Var) -> Result<Var> {
        let r = self.forward(g, p, y)?;
        Ok(g.mean_abs_diff(y, r))
    }
}

impl Autoencoder for Discriminator {
    /// Pads to a multiple of 8 frames with the floor value and crops back.
    fn reconstruct(&self, y: &Tensor) -> Result<Tensor> {
        let t = y.cols();
        let padded = t.div_ceil(TIME_REDUCTION).max(1) * TIME_REDUCTION;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let yv = g.leaf(y.pad_cols(padded, self.config.out_min));
        let r = self.forward(&mut g, &p, yv)?;
        Ok(g.value(r).crop_cols(0, t))
    }
}

/// Reconstruction and its mean absolute error.
pub fn discriminate<A: Autoencoder + ?Sized>(ae: &A, y: &LogMelSpectrogram) -> Result<(LogMelSpectrogram, f64)> {
    let yt = Tensor::from_array(y.values());
    if !yt.is_finite() {
        return Err(Error::validation("non-finite discriminator input"));
    }
    let r = ae.reconstruct(&yt)?;
    if r.shape() != yt.shape() {
        return Err(Error::validation("reconstruction shape differs from input"));
    }
    let loss = yt.data().iter().zip(r.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / yt.len().max(1) as f64;
    Ok((y.with_values(r.to_array())?, loss))
}
