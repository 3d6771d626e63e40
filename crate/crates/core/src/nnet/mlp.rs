use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, Parameters};
use super::tensor::softmax;
use super::{NnetError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input: 512,
            hidden: vec![256, 256],
            classes: 10,
            activation: Activation::Relu,
        }
    }
}

/// Per-feature centering and scaling fitted on a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    /// Mean and standard deviation per feature. Constant features keep scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| NnetError::Input("no rows to fit scaling on".into()))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(NnetError::Shape("rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-6 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Dense classifier with a softmax output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub config: MlpConfig,
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        Self::build(config, Some(seed))
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        Self::build(config, None)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config already validated")
    }

    fn build(config: MlpConfig, seed: Option<u64>) -> Result<Self> {
        if config.input == 0 || config.classes < 2 || config.hidden.contains(&0) {
            return Err(NnetError::Config(
                "MLP needs a non-empty input, non-empty hidden layers and at least two classes"
                    .into(),
            ));
        }
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let mut sizes = vec![config.input];
        sizes.extend(&config.hidden);
        sizes.push(config.classes);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() {
                    Activation::Identity
                } else {
                    config.activation
                };
                match rng.as_mut() {
                    Some(r) => Dense::new(w[0], w[1], act, r),
                    None => Dense::zeros(w[0], w[1], act),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input {
            return Err(NnetError::Shape(format!(
                "classifier expects {} inputs, got {}",
                self.config.input,
                x.len()
            )));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(softmax(self.activations(x).last().unwrap()))
    }

    /// Cross-entropy loss for one sample; gradients accumulate into `grad`.
    pub fn loss_and_grad(&self, x: &[f64], label: usize, grad: &mut Mlp) -> Result<f64> {
        self.check_input(x)?;
        if label >= self.config.classes {
            return Err(NnetError::Input(format!(
                "label {label} outside {} classes",
                self.config.classes
            )));
        }
        let acts = self.activations(x);
        let p = softmax(acts.last().unwrap());
        let loss = -p[label].max(f64::MIN_POSITIVE).ln();
        let mut delta: Vec<f64> = p;
        delta[label] -= 1.0;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let mut dx = vec![0.0; layer.input_size()];
            let dx_ref = (i > 0).then_some(&mut dx[..]);
            layer.backward(&acts[i], &acts[i + 1], &delta, &mut grad.layers[i], dx_ref);
            delta = dx;
        }
        Ok(loss)
    }

    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(-p[label].max(f64::MIN_POSITIVE).ln())
    }
}

impl Mlp {
    /// Rewrites the first layer so that raw inputs produce what scaled
    /// inputs produced before: `W' = W / s`, `b' = b - W' m`.
    pub fn absorb_input_scaling(&mut self, scaling: &InputScaling) -> Result<()> {
        if scaling.mean.len() != self.config.input || scaling.scale.len() != self.config.input {
            return Err(NnetError::Shape("scaling does not match classifier input".into()));
        }
        let first = &mut self.layers[0];
        let cols = first.weights.cols();
        let w = first.weights.data_mut();
        for (r, b) in first.bias.iter_mut().enumerate() {
            let row = &mut w[r * cols..(r + 1) * cols];
            for c in 0..cols {
                row[c] /= scaling.scale[c];
                *b -= row[c] * scaling.mean[c];
            }
        }
        Ok(())
    }
}

impl Parameters for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_weight_ten_class_model_is_uniform() {
        let mlp = Mlp::zeros(MlpConfig::default()).unwrap();
        let p = mlp.predict(&vec![0.3; 512]).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn absorbed_scaling_matches_scaled_inputs() {
        let cfg = MlpConfig { input: 3, hidden: vec![5], classes: 4, ..Default::default() };
        let mut mlp = Mlp::new(cfg, 3).unwrap();
        let rows = vec![vec![1.0, 10.0, 0.5], vec![3.0, -20.0, 0.5], vec![2.0, 4.0, 0.5]];
        let s = InputScaling::fit(&rows).unwrap();
        assert_eq!(s.scale[2], 1.0);
        let x = [2.5, -3.0, 0.7];
        let want = mlp.predict(&s.apply(&x)).unwrap();
        mlp.absorb_input_scaling(&s).unwrap();
        let got = mlp.predict(&x).unwrap();
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let mlp = Mlp::new(MlpConfig::default(), 0).unwrap();
        assert!(matches!(mlp.predict(&[0.0; 3]), Err(NnetError::Shape(_))));
    }

    #[test]
    fn single_class_configuration_is_rejected() {
        let cfg = MlpConfig {
            classes: 1,
            ..Default::default()
        };
        assert!(Mlp::new(cfg, 0).is_err());
    }

    proptest! {
        #[test]
        fn predictions_are_distributions(x in proptest::collection::vec(-50.0f64..50.0, 6), seed in 0u64..50) {
            let cfg = MlpConfig { input: 6, hidden: vec![8, 8], classes: 4, activation: Activation::Relu };
            let p = Mlp::new(cfg, seed).unwrap().predict(&x).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
