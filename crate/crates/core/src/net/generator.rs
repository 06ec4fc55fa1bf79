use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, Conv1d, Embedding, GroupNorm, ParamStore};
use super::tensor::Tensor;
use super::{group_count, NetConfig, TIME_REDUCTION};
use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};
use crate::melody::{MelodyContour, REST_ROW};

/// Encoder output: `channels x frames/8`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    values: Tensor,
}

impl LatentCode {
    pub fn new(values: Tensor) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::validation("latent code has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

#[derive(Debug, Clone)]
struct DecoderStack {
    conv_a: Conv1d,
    conv_b: Conv1d,
    norm: GroupNorm,
    freq: Conv1d,
}

/// Content encoder, pitch encoder and progressive decoder.
#[derive(Debug, Clone)]
pub struct Generator {
    config: NetConfig,
    params: ParamStore,
    content: Vec<Conv1d>,
    embed: Embedding,
    pitch: Vec<Conv1d>,
    decoder: Vec<DecoderStack>,
    head: Conv1d,
}

/// Graph handles of a content encoding.
struct ContentVars {
    latent: Var,
    /// Stack outputs at `T/2` and `T/4`.
    skips: [Var; 2],
}

impl Generator {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let f = config.n_mels;
        let cw = config.content_widths();
        let mut content = Vec::new();
        let mut ch = f;
        for (i, &w) in cw.iter().enumerate() {
            content.push(Conv1d::new(&mut params, &mut rng, &format!("content.{i}"), ch, w, 3, 2, true));
            ch = w;
        }
        let embed = Embedding::new(&mut params, &mut rng, "pitch.embed", config.n_notes, config.embed_dim);
        let mut pitch = Vec::new();
        let mut ch = config.embed_dim;
        for (i, &w) in config.pitch_widths().iter().enumerate() {
            pitch.push(Conv1d::new(&mut params, &mut rng, &format!("pitch.{i}"), ch, w, 3, 2, true));
            ch = w;
        }
        // Stack s works at width c_s and doubles it; the skip then doubles
        // it again, so the next stack sees 2 * c_{s+1} channels.
        let mut decoder = Vec::new();
        let mut input = cw[2] + config.pitch_widths()[2];
        for (s, c) in [f / 8, f / 4, f / 2].into_iter().enumerate() {
            let name = format!("decoder.{s}");
            let conv_a = Conv1d::new(&mut params, &mut rng, &format!("{name}.conv_a"), input, c, 3, 1, true);
            let conv_b = Conv1d::new(&mut params, &mut rng, &format!("{name}.conv_b"), c, c, 3, 1, false);
            let norm = GroupNorm::new(&mut params, &format!("{name}.norm"), c, group_count(config.groups, c));
            let freq = Conv1d::new(&mut params, &mut rng, &format!("{name}.freq"), c, c, 3, 1, true);
            decoder.push(DecoderStack {
                conv_a,
                conv_b,
                norm,
                freq,
            });
            input = 4 * c;
        }
        let head = Conv1d::new(&mut params, &mut rng, "head", f, f, 1, 1, true);
        let mut g = Self {
            config,
            params,
            content,
            embed,
            pitch,
            decoder,
            head,
        };
        g.params.quantize_f32();
        Ok(g)
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

    fn content_vars(&self, g: &mut Graph, p: &Bound, x: Var) -> ContentVars {
        let mut h = x;
        let mut outs = Vec::with_capacity(3);
        for conv in &self.content {
            let n = g.instance_norm(h);
            let c = conv.forward(g, p, n);
            h = g.leaky_relu(c, self.config.leaky_slope);
            outs.push(h);
        }
        ContentVars {
            latent: outs[2],
            skips: [outs[0], outs[1]],
        }
    }

    fn pitch_vars(&self, g: &mut Graph, p: &Bound, ids: &[usize]) -> Var {
        let mut h = self.embed.forward(g, p, ids);
        for conv in &self.pitch {
            let c = conv.forward(g, p, h);
            h = g.leaky_relu(c, self.config.leaky_slope);
        }
        h
    }

    /// `skips` are the content features at `T/2` and `T/4`.
    fn decode_vars(&self, g: &mut Graph, p: &Bound, content: Var, pitch: Var, skips: [Var; 2]) -> Var {
        let slope = self.config.leaky_slope;
        let mut h = g.concat(&[content, pitch]);
        for (s, stack) in self.decoder.iter().enumerate() {
            let a = stack.conv_a.forward(g, p, h);
            let a = g.leaky_relu(a, slope);
            let b = stack.conv_b.forward(g, p, a);
            let b = stack.norm.forward(g, p, b);
            let b = g.leaky_relu(b, slope);
            let up = g.upsample(b, 2);
            let branch = stack.freq.forward(g, p, up);
            h = g.concat(&[up, branch]);
            if s < 2 {
                h = g.concat(&[h, skips[1 - s]]);
            }
        }
        let out = self.head.forward(g, p, h);
        g.clamp(out, self.config.out_min, self.config.out_max)
    }

    /// Full generator on the tape. `x` is `n_mels x T` with `T` a multiple
    /// of 8 and `ids` holds one contour row per frame.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, ids: &[usize]) -> Result<Var> {
        let (f, t) = g.value(x).shape();
        self.check_input(f, t)?;
        if ids.len() != t {
            return Err(Error::validation(format!("contour has {} frames, mel has {t}", ids.len())));
        }
        if let Some(&bad) = ids.iter().find(|&&r| r >= self.config.n_notes) {
            return Err(Error::validation(format!("contour row {bad} out of range")));
        }
        let content = self.content_vars(g, p, x);
        let pitch = self.pitch_vars(g, p, ids);
        Ok(self.decode_vars(g, p, content.latent, pitch, content.skips))
    }

    fn check_input(&self, f: usize, t: usize) -> Result<()> {
        if f != self.config.n_mels {
            return Err(Error::validation(format!("expected {} mel bins, got {f}", self.config.n_mels)));
        }
        if t == 0 || !t.is_multiple_of(TIME_REDUCTION) {
            return Err(Error::validation(format!("frame count {t} is not a positive multiple of 8")));
        }
        Ok(())
    }

    /// Latent code plus skip features at `T/2` and `T/4`.
    pub fn encode_content(&self, x: &LogMelSpectrogram) -> Result<(LatentCode, Vec<Tensor>)> {
        let xt = Tensor::from_array(x.values());
        if !xt.is_finite() {
            return Err(Error::validation("non-finite mel input"));
        }
        self.check_input(xt.rows(), xt.cols())?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xv = g.leaf(xt);
        let c = self.content_vars(&mut g, &p, xv);
        let skips = c.skips.iter().map(|&v| g.value(v).clone()).collect();
        Ok((LatentCode::new(g.value(c.latent).clone())?, skips))
    }

    pub fn encode_pitch(&self, c: &MelodyContour) -> Result<LatentCode> {
        let t = c.n_frames();
        if t == 0 || !t.is_multiple_of(TIME_REDUCTION) {
            return Err(Error::validation(format!("frame count {t} is not a positive multiple of 8")));
        }
        let ids: Vec<usize> = c.rows().iter().map(|&r| r as usize).collect();
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let v = self.pitch_vars(&mut g, &p, &ids);
        LatentCode::new(g.value(v).clone())
    }

    /// Validates one-hot columns before encoding.
    pub fn encode_pitch_onehot(&self, onehot: &Array2<f32>) -> Result<LatentCode> {
        self.encode_pitch(&MelodyContour::from_onehot(onehot, 1, 1)?)
    }

    /// Decodes latents and skips to an `n_mels x 8*len` map.
    pub fn decode(&self, content: &LatentCode, pitch: &LatentCode, skips: &[Tensor]) -> Result<Tensor> {
        let t = content.len();
        if pitch.len() != t {
            return Err(Error::validation(format!(
                "content latent has {t} frames, pitch latent {}",
                pitch.len()
            )));
        }
        let [w2, w4, w8] = self.config.content_widths();
        let expect = [(w2, 4 * t), (w4, 2 * t)];
        if content.channels() != w8 || pitch.channels() != self.config.pitch_widths()[2] {
            return Err(Error::validation("latent channel count mismatch"));
        }
        if skips.len() != 2 || skips.iter().zip(expect).any(|(s, e)| s.shape() != e) {
            return Err(Error::validation("skip features do not match latent length"));
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let c = g.leaf(content.values().clone());
        let pv = g.leaf(pitch.values().clone());
        let s0 = g.leaf(skips[0].clone());
        let s1 = g.leaf(skips[1].clone());
        let out = self.decode_vars(&mut g, &p, c, pv, [s0, s1]);
        Ok(g.value(out).clone())
    }

    /// Converts `x` to singing along contour `c`. Any frame count works: the
    /// input is right-padded to a multiple of 8 with the floor value and REST,
    /// and the output is cropped back.
    pub fn generate(&self, x: &LogMelSpectrogram, c: &MelodyContour) -> Result<LogMelSpectrogram> {
        let t = x.n_frames();
        if c.n_frames() != t {
            return Err(Error::validation(format!("contour has {} frames, mel has {t}", c.n_frames())));
        }
        if t == 0 {
            return Err(Error::validation("empty input"));
        }
        let padded = t.div_ceil(TIME_REDUCTION) * TIME_REDUCTION;
        let xt = Tensor::from_array(x.values()).pad_cols(padded, self.config.out_min);
        let mut ids: Vec<usize> = c.rows().iter().map(|&r| r as usize).collect();
        ids.resize(padded, REST_ROW);
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xv = g.leaf(xt);
        let out = self.forward(&mut g, &p, xv, &ids)?;
        let y = g.value(out).crop_cols(0, t);
        if !y.is_finite() {
            return Err(Error::validation("generator produced non-finite output"));
        }
        x.with_values(y.to_array())
    }
}
