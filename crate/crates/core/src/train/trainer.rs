use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{learning_rate, Adam};
use super::config::TrainConfig;
use super::losses::{loss_discriminator, update_k, BeganState};
use crate::data::{PairedExample, UnpairedExample};
use crate::dsp::{DspConfig, LogMelSpectrogram};
use crate::error::{Error, Result};
use crate::melody::MelodyContour;
use crate::net::{
    Checkpoint, CheckpointMetadata, Discriminator, Generator, Graph, NamedTensor, NetConfig, ParamStore, Tensor,
    CHECKPOINT_FORMAT_VERSION,
};

/// One row of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// 1-based index of the step just completed.
    pub step: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub l_real: f64,
    pub l_fake: f64,
    /// Controller value after this step's update.
    pub k: f64,
    pub lr: f64,
    pub paired: bool,
    /// Mean L1 between output and target on paired steps.
    pub l1: Option<f64>,
}

/// Fixed-length crops fed to one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub paired: bool,
    /// Index of each crop's example in its data set.
    pub ids: Vec<usize>,
    /// Generator input: speech on paired steps, singing otherwise.
    pub inputs: Vec<Tensor>,
    pub rows: Vec<Vec<usize>>,
    /// Real singing; also the L1 target on paired steps.
    pub targets: Vec<Tensor>,
}

/// Losses and gradients of one example.
#[derive(Debug, Clone)]
pub struct ExampleOutput {
    pub l_real: f64,
    pub l_fake: f64,
    pub l1: Option<f64>,
    pub l_d: f64,
    pub l_g: f64,
    /// `d L_G / d generator params`, in store order.
    pub g_grads: Vec<Tensor>,
    /// `d L_D / d discriminator params`, in store order.
    pub d_grads: Vec<Tensor>,
}

/// Forward pass of one example, and optionally both backward passes.
/// The discriminator gradient stops at the generator output, so neither loss
/// moves the other network's parameters.
#[allow(clippy::too_many_arguments)]
pub fn example_step(
    generator: &Generator,
    discriminator: &Discriminator,
    input: &Tensor,
    rows: &[usize],
    target: &Tensor,
    paired: bool,
    k: f64,
    beta: f64,
    with_grads: bool,
) -> Result<ExampleOutput> {
    let mut g = Graph::new();
    let gp = generator.params().bind(&mut g);
    let x = g.leaf(input.clone());
    let y_hat = generator.forward(&mut g, &gp, x, rows)?;
    let y = g.leaf(target.clone());
    let l1 = paired.then(|| g.mean_abs_diff(y_hat, y));
    let floor = g.len();
    let dp = discriminator.params().bind(&mut g);
    let l_real = discriminator.loss(&mut g, &dp, y)?;
    let l_fake = discriminator.loss(&mut g, &dp, y_hat)?;
    let l_d = g.linear(&[(l_real, 1.0), (l_fake, -k)]);
    let l_g = match l1 {
        Some(l1) => g.linear(&[(l_fake, 1.0), (l1, beta)]),
        None => g.linear(&[(l_fake, 1.0)]),
    };
    let (g_grads, d_grads) = if with_grads {
        let dg = g.backward(l_d, floor);
        let d_grads = collect(discriminator.params(), dp.vars(), &dg);
        let gg = g.backward(l_g, 0);
        let g_grads = collect(generator.params(), gp.vars(), &gg);
        (g_grads, d_grads)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(ExampleOutput {
        l_real: g.value(l_real).item(),
        l_fake: g.value(l_fake).item(),
        l1: l1.map(|v| g.value(v).item()),
        l_d: g.value(l_d).item(),
        l_g: g.value(l_g).item(),
        g_grads,
        d_grads,
    })
}

fn collect(store: &ParamStore, vars: &[crate::net::Var], grads: &crate::net::Gradients) -> Vec<Tensor> {
    store
        .iter()
        .zip(vars)
        .map(|(p, &v)| grads.get_or_zeros(v, p.value.shape()))
        .collect()
}

fn crop(mel: &LogMelSpectrogram, contour: &MelodyContour, start: usize, len: usize, floor: f64) -> (Tensor, Vec<usize>) {
    let t = Tensor::from_array(mel.values());
    let end = (start + len).min(t.cols());
    let x = t.crop_cols(start, end - start).pad_cols(len, floor);
    let rows = contour.window(start, len).rows().iter().map(|&r| r as usize).collect();
    (x, rows)
}

/// Random crop start, or 0 when the example is shorter than the crop.
fn crop_start<R: Rng + ?Sized>(rng: &mut R, frames: usize, len: usize) -> usize {
    if frames > len {
        rng.random_range(0..=frames - len)
    } else {
        0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainState {
    /// Bit pattern of `k`, so the value survives JSON exactly.
    k_bits: u64,
    k: f64,
    generator_adam_t: u64,
    discriminator_adam_t: u64,
    train: TrainConfig,
}

/// Both networks, their optimizers and the controller.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    dsp: DspConfig,
    generator: Generator,
    discriminator: Discriminator,
    g_opt: Adam,
    d_opt: Adam,
    began: BeganState,
}

const DISCRIMINATOR_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

impl Trainer {
    pub fn new(config: TrainConfig, net: NetConfig, dsp: DspConfig) -> Result<Self> {
        config.validate()?;
        if net.n_mels != dsp.n_mels {
            return Err(Error::Config(format!(
                "network expects {} mel bins, features have {}",
                net.n_mels, dsp.n_mels
            )));
        }
        let generator = Generator::new(net.clone(), config.seed)?;
        let discriminator = Discriminator::new(net, config.seed.wrapping_add(DISCRIMINATOR_SEED_OFFSET))?;
        let g_opt = Adam::new(generator.params());
        let d_opt = Adam::new(discriminator.params());
        let began = BeganState::new(config.k0, config.gamma, config.lambda)?;
        Ok(Self {
            config,
            dsp,
            generator,
            discriminator,
            g_opt,
            d_opt,
            began,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn dsp(&self) -> &DspConfig {
        &self.dsp
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn began(&self) -> &BeganState {
        &self.began
    }

    /// Completed steps.
    pub fn step(&self) -> u64 {
        self.began.step
    }

    /// Learning rate for the next step.
    pub fn lr(&self) -> f64 {
        let c = &self.config;
        learning_rate(c.lr, c.lr_decay, c.decay_interval, self.began.step)
    }

    /// Whether step `step` (0-based) uses singing-only data.
    pub fn is_unpaired_step(&self, step: u64, have_unpaired: bool) -> bool {
        let p = self.config.paired_per_unpaired;
        have_unpaired && step % (p + 1) == p
    }

    /// The batch for the next step; a pure function of the seed, the step
    /// index and the data.
    pub fn sample_batch(&self, paired: &[PairedExample], unpaired: &[UnpairedExample]) -> Result<Batch> {
        if paired.is_empty() {
            return Err(Error::Config("no paired training examples".into()));
        }
        let step = self.began.step;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        let len = self.config.segment_frames;
        let floor = self.dsp.floor_eps.ln();
        let use_unpaired = self.is_unpaired_step(step, !unpaired.is_empty());
        let mut batch = Batch {
            paired: !use_unpaired,
            ids: Vec::new(),
            inputs: Vec::new(),
            rows: Vec::new(),
            targets: Vec::new(),
        };
        for _ in 0..self.config.batch_size {
            if use_unpaired {
                let i = rng.random_range(0..unpaired.len());
                let e = &unpaired[i];
                let s = crop_start(&mut rng, e.n_frames(), len);
                let (y, rows) = crop(&e.singing, &e.contour, s, len, floor);
                batch.ids.push(i);
                batch.inputs.push(y.clone());
                batch.targets.push(y);
                batch.rows.push(rows);
            } else {
                let i = rng.random_range(0..paired.len());
                let e = &paired[i];
                let s = crop_start(&mut rng, e.n_frames(), len);
                let (x, rows) = crop(&e.speech, &e.contour, s, len, floor);
                let (y, _) = crop(&e.singing, &e.contour, s, len, floor);
                batch.ids.push(i);
                batch.inputs.push(x);
                batch.targets.push(y);
                batch.rows.push(rows);
            }
        }
        Ok(batch)
    }

    /// One discriminator update, one generator update, then the controller.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let n = batch.inputs.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let (k, beta) = (self.began.k, self.config.beta);
        let step = self.began.step + 1;
        let outs: Vec<ExampleOutput> = (0..n)
            .into_par_iter()
            .map(|i| {
                example_step(
                    &self.generator,
                    &self.discriminator,
                    &batch.inputs[i],
                    &batch.rows[i],
                    &batch.targets[i],
                    batch.paired,
                    k,
                    beta,
                    true,
                )
            })
            .collect::<Result<_>>()?;
        let inv = 1.0 / n as f64;
        let mean = |f: &dyn Fn(&ExampleOutput) -> f64| outs.iter().map(f).sum::<f64>() * inv;
        let l_real = mean(&|o| o.l_real);
        let l_fake = mean(&|o| o.l_fake);
        let l1 = batch.paired.then(|| mean(&|o| o.l1.unwrap_or(0.0)));
        let mut g_grads = self.generator.params().zeros_like();
        let mut d_grads = self.discriminator.params().zeros_like();
        for o in &outs {
            for (acc, g) in g_grads.iter_mut().zip(&o.g_grads) {
                acc.add_assign(g);
            }
            for (acc, g) in d_grads.iter_mut().zip(&o.d_grads) {
                acc.add_assign(g);
            }
        }
        g_grads.iter_mut().chain(d_grads.iter_mut()).for_each(|g| g.scale(inv));
        let grads_finite = g_grads.iter().chain(&d_grads).all(Tensor::is_finite);
        if !(l_real.is_finite() && l_fake.is_finite() && l1.is_none_or(f64::is_finite) && grads_finite) {
            return Err(Error::NonFinite {
                step,
                batch: batch.ids.clone(),
                detail: format!("L_real {l_real}, L_fake {l_fake}, L1 {l1:?}, gradients finite: {grads_finite}"),
            });
        }
        let l_d = loss_discriminator(l_real, l_fake, k)?;
        let l_g = match l1 {
            Some(l1) => l_fake + beta * l1,
            None => l_fake,
        };
        let lr = self.lr();
        self.d_opt.step(self.discriminator.params_mut(), &d_grads, lr);
        self.g_opt.step(self.generator.params_mut(), &g_grads, lr);
        self.began = update_k(self.began, l_real, l_fake);
        Ok(StepMetrics {
            step,
            l_d,
            l_g,
            l_real,
            l_fake,
            k: self.began.k,
            lr,
            paired: batch.paired,
            l1,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors = Vec::new();
        let nets: [(&str, &ParamStore, &Adam); 2] = [
            ("generator", self.generator.params(), &self.g_opt),
            ("discriminator", self.discriminator.params(), &self.d_opt),
        ];
        for (net, store, opt) in nets {
            let (m, v) = opt.moments();
            for ((p, m), v) in store.iter().zip(m).zip(v) {
                tensors.push(NamedTensor::from_tensor(format!("{net}/{}", p.name), &p.value));
                tensors.push(NamedTensor::from_tensor(format!("adam/{net}/m/{}", p.name), m));
                tensors.push(NamedTensor::from_tensor(format!("adam/{net}/v/{}", p.name), v));
            }
        }
        let state = TrainState {
            k_bits: self.began.k.to_bits(),
            k: self.began.k,
            generator_adam_t: self.g_opt.t(),
            discriminator_adam_t: self.d_opt.t(),
            train: self.config.clone(),
        };
        Ok(Checkpoint {
            metadata: CheckpointMetadata {
                format_version: CHECKPOINT_FORMAT_VERSION,
                config_hash: self.config.hash(),
                step: self.began.step,
                net: self.generator.config().clone(),
                dsp: self.dsp.clone(),
                state: serde_json::to_value(state)?,
            },
            tensors,
        })
    }

    /// Rebuilds the full training state. `config` must agree with the
    /// checkpoint on every trajectory-relevant key; `steps`, checkpoint
    /// cadence and paths may differ.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let meta = &ckpt.metadata;
        let state: TrainState = serde_json::from_value(meta.state.clone())
            .map_err(|e| Error::validation(format!("checkpoint has no training state: {e}")))?;
        if meta.config_hash != config.hash() {
            let keys = config.differing_keys(&state.train);
            return Err(Error::Config(format!(
                "checkpoint was trained with different settings: {}",
                keys.join(", ")
            )));
        }
        let mut t = Self::new(config, meta.net.clone(), meta.dsp.clone())?;
        load_params(t.generator.params_mut(), ckpt, "generator/")?;
        load_params(t.discriminator.params_mut(), ckpt, "discriminator/")?;
        let moments = |store: &ParamStore, net: &str, which: &str| -> Result<Vec<Tensor>> {
            store
                .iter()
                .map(|p| {
                    let name = format!("adam/{net}/{which}/{}", p.name);
                    ckpt.tensor(&name)
                        .ok_or_else(|| Error::validation(format!("checkpoint lacks {name}")))?
                        .to_tensor()
                })
                .collect()
        };
        let (gm, gv) = (
            moments(t.generator.params(), "generator", "m")?,
            moments(t.generator.params(), "generator", "v")?,
        );
        let (dm, dv) = (
            moments(t.discriminator.params(), "discriminator", "m")?,
            moments(t.discriminator.params(), "discriminator", "v")?,
        );
        t.g_opt.restore(state.generator_adam_t, gm, gv)?;
        t.d_opt.restore(state.discriminator_adam_t, dm, dv)?;
        t.began.k = f64::from_bits(state.k_bits);
        t.began.step = meta.step;
        Ok(t)
    }
}

fn load_params(store: &mut ParamStore, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
    let tensors: std::collections::HashMap<&str, Tensor> = ckpt
        .with_prefix(prefix)
        .filter(|(name, _)| !name.contains('/'))
        .map(|(name, t)| t.to_tensor().map(|t| (name, t)))
        .collect::<Result<_>>()?;
    store.load(|name| tensors.get(name))
}

/// The generator stored in a checkpoint, for inference.
/// The training configuration a checkpoint was written with.
pub fn checkpoint_train_config(ckpt: &Checkpoint) -> Result<TrainConfig> {
    let state: TrainState = serde_json::from_value(ckpt.metadata.state.clone())
        .map_err(|e| Error::validation(format!("checkpoint has no training state: {e}")))?;
    Ok(state.train)
}

pub fn load_generator(ckpt: &Checkpoint) -> Result<Generator> {
    let mut g = Generator::new(ckpt.metadata.net.clone(), 0)?;
    load_params(g.params_mut(), ckpt, "generator/")?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_pair, SyntheticParams};

    fn toy() -> (TrainConfig, Vec<PairedExample>, Vec<UnpairedExample>) {
        let params = SyntheticParams {
            n_notes: 2,
            frames_per_note: 16,
            n_mels: 8,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let paired: Vec<_> = (0..3)
            .map(|i| make_synthetic_pair(&mut rng, &params, &format!("p{i}")).unwrap())
            .collect();
        let unpaired = paired
            .iter()
            .map(|p| UnpairedExample::new(p.id.clone(), p.singing.clone(), p.contour.clone()).unwrap())
            .collect();
        let cfg = TrainConfig {
            batch_size: 2,
            segment_frames: 16,
            seed: 5,
            ..Default::default()
        };
        (cfg, paired, unpaired)
    }

    fn small_dsp() -> DspConfig {
        DspConfig {
            n_mels: 8,
            ..Default::default()
        }
    }

    #[test]
    fn alternates_and_isolates_gradients() {
        let (cfg, paired, unpaired) = toy();
        let mut t = Trainer::new(cfg, NetConfig::reduced(), small_dsp()).unwrap();
        let g0 = t.generator().params().clone();
        let d0 = t.discriminator().params().clone();
        let b = t.sample_batch(&paired, &unpaired).unwrap();
        assert!(b.paired);
        let m = t.train_step(&b).unwrap();
        assert_eq!(m.step, 1);
        assert_ne!(t.generator().params(), &g0);
        assert_ne!(t.discriminator().params(), &d0);
        let b = t.sample_batch(&paired, &unpaired).unwrap();
        assert!(!b.paired);
        let m = t.train_step(&b).unwrap();
        assert_eq!(m.l_g, m.l_fake);
        assert!(m.l1.is_none());
        assert!(t.sample_batch(&paired, &unpaired).unwrap().paired);
    }

    #[test]
    fn discriminator_loss_does_not_reach_generator() {
        let (cfg, paired, _) = toy();
        let t = Trainer::new(cfg, NetConfig::reduced(), small_dsp()).unwrap();
        let b = t.sample_batch(&paired, &[]).unwrap();
        // With k = 1 the fake term is active; its gradient must stop at the
        // generator output, so the generator gradients depend only on L_G.
        let a = example_step(
            t.generator(),
            t.discriminator(),
            &b.inputs[0],
            &b.rows[0],
            &b.targets[0],
            true,
            1.0,
            0.5,
            true,
        )
        .unwrap();
        let c = example_step(
            t.generator(),
            t.discriminator(),
            &b.inputs[0],
            &b.rows[0],
            &b.targets[0],
            true,
            0.0,
            0.5,
            true,
        )
        .unwrap();
        assert_eq!(a.g_grads, c.g_grads);
        assert_ne!(a.d_grads, c.d_grads);
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let (cfg, paired, unpaired) = toy();
        let mut a = Trainer::new(cfg.clone(), NetConfig::reduced(), small_dsp()).unwrap();
        for _ in 0..3 {
            let b = a.sample_batch(&paired, &unpaired).unwrap();
            a.train_step(&b).unwrap();
        }
        let ckpt = a.to_checkpoint().unwrap();
        let bytes = ckpt.encode().unwrap();
        let back = Checkpoint::decode(&bytes, std::path::Path::new("m")).unwrap();
        let mut b = Trainer::from_checkpoint(&back, cfg.clone()).unwrap();
        for _ in 0..3 {
            let ba = a.sample_batch(&paired, &unpaired).unwrap();
            let bb = b.sample_batch(&paired, &unpaired).unwrap();
            assert_eq!(ba, bb);
            assert_eq!(a.train_step(&ba).unwrap(), b.train_step(&bb).unwrap());
        }
        let bad = TrainConfig { beta: 0.1, ..cfg };
        let err = Trainer::from_checkpoint(&back, bad).unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
        let g = load_generator(&back).unwrap();
        assert_eq!(g.params().len(), a.generator().params().len());
    }

    #[test]
    fn no_paired_data_is_a_config_error() {
        let (cfg, _, unpaired) = toy();
        let t = Trainer::new(cfg, NetConfig::reduced(), small_dsp()).unwrap();
        assert!(matches!(t.sample_batch(&[], &unpaired), Err(Error::Config(_))));
    }
}
