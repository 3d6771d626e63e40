use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{add_into, dropout_mask, mul_into, Activation, BiGru, Dense, Gru, Parameters};
use super::{LatentEncoding, NnetError, Result};
use crate::dsp::MelSpectrogram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub mel_bands: usize,
    pub frames: usize,
    /// GRU units per encoder layer and per decoder direction.
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            mel_bands: 128,
            frames: 121,
            hidden: 256,
            dropout: 0.2,
        }
    }
}

impl AutoencoderConfig {
    /// Concatenated final states of both encoder layers.
    pub fn latent_size(&self) -> usize {
        2 * self.hidden
    }

    /// Two bidirectional decoder layers, two directions each.
    pub fn decoder_state_size(&self) -> usize {
        4 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.mel_bands == 0 || self.frames == 0 || self.hidden == 0 {
            return Err(NnetError::Config(
                "autoencoder dimensions must be non-zero".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnetError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Sequence-to-sequence GRU autoencoder.
///
/// Two stacked encoder GRUs read the Mel frames; their final states form
/// the latent vector. A dense bridge maps it to the initial states of two
/// stacked bidirectional decoder GRUs, which read the time-reversed input
/// shifted by one step (leading zero frame). A time-distributed tanh layer
/// produces one Mel frame per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub config: AutoencoderConfig,
    pub encoder: [Gru; 2],
    pub bridge: Dense,
    pub decoder: [BiGru; 2],
    pub head: Dense,
}

/// Result of one autoencoder pass.
#[derive(Clone, Debug)]
pub struct AeOutput {
    pub latent: LatentEncoding,
    /// Reconstruction in original time order.
    pub reconstruction: MelSpectrogram,
    pub rmse: f64,
}

impl Autoencoder {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, h) = (config.mel_bands, config.hidden);
        Ok(Self {
            encoder: [Gru::new(b, h, &mut rng), Gru::new(h, h, &mut rng)],
            bridge: Dense::new(2 * h, 4 * h, Activation::Tanh, &mut rng),
            decoder: [BiGru::new(b, h, &mut rng), BiGru::new(2 * h, h, &mut rng)],
            head: Dense::new(2 * h, b, Activation::Tanh, &mut rng),
            config,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(config: AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let (b, h) = (config.mel_bands, config.hidden);
        Ok(Self {
            encoder: [Gru::zeros(b, h), Gru::zeros(h, h)],
            bridge: Dense::zeros(2 * h, 4 * h, Activation::Tanh),
            decoder: [BiGru::zeros(b, h), BiGru::zeros(2 * h, h)],
            head: Dense::zeros(2 * h, b, Activation::Tanh),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config already validated")
    }

    pub fn check_shape(&self, mel: &MelSpectrogram) -> Result<()> {
        if mel.bands() != self.config.mel_bands || mel.frames() != self.config.frames {
            return Err(NnetError::Shape(format!(
                "model expects {}×{} Mel input, got {}×{}",
                self.config.mel_bands,
                self.config.frames,
                mel.bands(),
                mel.frames()
            )));
        }
        Ok(())
    }

    /// Encoder only; no dropout.
    pub fn encode(&self, mel: &MelSpectrogram) -> Result<LatentEncoding> {
        self.check_shape(mel)?;
        let frames: Vec<Vec<f64>> = (0..mel.frames()).map(|t| mel.frame(t).to_vec()).collect();
        let h = self.config.hidden;
        let l1 = self.encoder[0].forward(frames, &vec![0.0; h]);
        let l2 = self.encoder[1].forward(l1.outputs().to_vec(), &vec![0.0; h]);
        let mut latent = l1.final_state().to_vec();
        latent.extend_from_slice(l2.final_state());
        Ok(LatentEncoding(latent))
    }

    /// Full pass. Dropout is active only when `dropout_rng` is given.
    pub fn forward(&self, mel: &MelSpectrogram, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<AeOutput> {
        self.check_shape(mel)?;
        let pass = self.run(mel, dropout_rng);
        Ok(self.output_of(pass))
    }

    /// Per-sample RMSE against the time-reversed input, in inference mode.
    pub fn reconstruction_error(&self, mel: &MelSpectrogram) -> Result<f64> {
        Ok(self.forward(mel, None)?.rmse)
    }

    /// Loss and parameter gradients for one sample.
    pub fn loss_and_grad(
        &self,
        mel: &MelSpectrogram,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grad: &mut Autoencoder,
    ) -> Result<f64> {
        self.check_shape(mel)?;
        let pass = self.run(mel, dropout_rng);
        self.backprop(&pass, grad);
        Ok(pass.rmse)
    }

    fn run(&self, mel: &MelSpectrogram, mut rng: Option<&mut ChaCha8Rng>) -> Pass {
        let cfg = &self.config;
        let (h, bands, steps) = (cfg.hidden, cfg.mel_bands, mel.frames());
        let rate = cfg.dropout;
        let mut mask = |len: usize| -> Option<Vec<Vec<f64>>> {
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    Some((0..steps).map(|_| dropout_mask(len, rate, r)).collect())
                }
                _ => None,
            }
        };

        let frames: Vec<Vec<f64>> = (0..steps).map(|t| mel.frame(t).to_vec()).collect();
        let enc1 = self.encoder[0].forward(frames.clone(), &vec![0.0; h]);
        let enc1_mask = mask(h);
        let enc2_in = apply_masks(enc1.outputs(), enc1_mask.as_deref());
        let enc2 = self.encoder[1].forward(enc2_in, &vec![0.0; h]);

        let mut latent = enc1.final_state().to_vec();
        latent.extend_from_slice(enc2.final_state());
        let init = self.bridge.forward(&latent);

        let target: Vec<Vec<f64>> = frames.iter().rev().cloned().collect();
        let mut dec_in = Vec::with_capacity(steps);
        dec_in.push(vec![0.0; bands]);
        dec_in.extend(target[..steps - 1].iter().cloned());

        let dec1 = self.decoder[0].run(dec_in, &init[..h], &init[h..2 * h]);
        let dec1_mask = mask(2 * h);
        let dec2_in = apply_masks(&dec1.outputs(), dec1_mask.as_deref());
        let dec2 = self.decoder[1].run(dec2_in, &init[2 * h..3 * h], &init[3 * h..]);
        let dec2_mask = mask(2 * h);
        let head_in = apply_masks(&dec2.outputs(), dec2_mask.as_deref());
        let outputs: Vec<Vec<f64>> = head_in.iter().map(|x| self.head.forward(x)).collect();

        let n = (steps * bands) as f64;
        let sq: f64 = outputs
            .iter()
            .zip(&target)
            .flat_map(|(y, t)| y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)))
            .sum();
        let rmse = (sq / n).sqrt();

        Pass {
            enc1,
            enc1_mask,
            enc2,
            latent,
            init,
            dec1,
            dec1_mask,
            dec2,
            dec2_mask,
            head_in,
            outputs,
            target,
            rmse,
        }
    }

    fn output_of(&self, pass: Pass) -> AeOutput {
        let bands = self.config.mel_bands;
        let steps = pass.outputs.len();
        let values: Vec<f64> = pass.outputs.into_iter().rev().flatten().collect();
        AeOutput {
            latent: LatentEncoding(pass.latent),
            reconstruction: MelSpectrogram::from_frames(values, bands, steps)
                .expect("decoder output has model shape"),
            rmse: pass.rmse,
        }
    }

    fn backprop(&self, pass: &Pass, grad: &mut Autoencoder) {
        let h = self.config.hidden;
        let steps = pass.outputs.len();
        let n = (steps * self.config.mel_bands) as f64;
        let scale = if pass.rmse > 0.0 { 1.0 / (n * pass.rmse) } else { 0.0 };

        let mut d_head_in = Vec::with_capacity(steps);
        for t in 0..steps {
            let dy: Vec<f64> = pass.outputs[t]
                .iter()
                .zip(&pass.target[t])
                .map(|(y, tg)| (y - tg) * scale)
                .collect();
            let mut dx = vec![0.0; 2 * h];
            self.head
                .backward(&pass.head_in[t], &pass.outputs[t], &dy, &mut grad.head, Some(&mut dx));
            d_head_in.push(dx);
        }
        let d_dec2_out = unmask(d_head_in, pass.dec2_mask.as_deref());
        let (d_dec2_in, d_init2f, d_init2b) =
            self.decoder[1].backprop(&pass.dec2, &d_dec2_out, &mut grad.decoder[1]);
        let d_dec1_out = unmask(d_dec2_in, pass.dec1_mask.as_deref());
        let (_, d_init1f, d_init1b) =
            self.decoder[0].backprop(&pass.dec1, &d_dec1_out, &mut grad.decoder[0]);

        let mut d_init = d_init1f;
        d_init.extend(d_init1b);
        d_init.extend(d_init2f);
        d_init.extend(d_init2b);
        let mut d_latent = vec![0.0; 2 * h];
        self.bridge
            .backward(&pass.latent, &pass.init, &d_init, &mut grad.bridge, Some(&mut d_latent));

        let mut d_enc2_out = vec![vec![0.0; h]; steps];
        d_enc2_out[steps - 1].copy_from_slice(&d_latent[h..]);
        let (d_enc2_in, _) = self.encoder[1].backward(&pass.enc2, &d_enc2_out, &mut grad.encoder[1]);
        let mut d_enc1_out = unmask(d_enc2_in, pass.enc1_mask.as_deref());
        add_into(&mut d_enc1_out[steps - 1], &d_latent[..h]);
        self.encoder[0].backward(&pass.enc1, &d_enc1_out, &mut grad.encoder[0]);
    }
}

struct Pass {
    enc1: super::layers::GruTrace,
    enc1_mask: Option<Vec<Vec<f64>>>,
    enc2: super::layers::GruTrace,
    latent: Vec<f64>,
    init: Vec<f64>,
    dec1: super::layers::BiGruTrace,
    dec1_mask: Option<Vec<Vec<f64>>>,
    dec2: super::layers::BiGruTrace,
    dec2_mask: Option<Vec<Vec<f64>>>,
    head_in: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    rmse: f64,
}

fn apply_masks(seq: &[Vec<f64>], masks: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    match masks {
        None => seq.to_vec(),
        Some(m) => seq
            .iter()
            .zip(m)
            .map(|(x, mk)| x.iter().zip(mk).map(|(a, b)| a * b).collect())
            .collect(),
    }
}

fn unmask(mut grads: Vec<Vec<f64>>, masks: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    if let Some(m) = masks {
        for (g, mk) in grads.iter_mut().zip(m) {
            mul_into(g, mk);
        }
    }
    grads
}

impl Parameters for Autoencoder {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder[0].visit(f);
        self.encoder[1].visit(f);
        self.bridge.visit(f);
        self.decoder[0].visit(f);
        self.decoder[1].visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder[0].visit_mut(f);
        self.encoder[1].visit_mut(f);
        self.bridge.visit_mut(f);
        self.decoder[0].visit_mut(f);
        self.decoder[1].visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Draws a per-sample dropout generator from a training seed and position.
pub(crate) fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut base = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    base.set_stream(((epoch as u64) << 32) | index as u64);
    let s: u64 = base.gen();
    ChaCha8Rng::seed_from_u64(s)
}
