use super::autoencoder::Autoencoder;
use super::layers::Parameters;
use super::mlp::Mlp;
use super::{NnetError, Result};
use crate::dsp::MelSpectrogram;

/// A model with an analytic gradient that can be compared against finite differences.
pub trait Differentiable: Parameters + Clone {
    type Sample;

    fn dropout_rate(&self) -> f64;
    fn loss(&self, sample: &Self::Sample) -> Result<f64>;
    /// Flattened gradient in [`Parameters`] visit order.
    fn gradient(&self, sample: &Self::Sample) -> Result<Vec<f64>>;
}

impl Differentiable for Autoencoder {
    type Sample = MelSpectrogram;

    fn dropout_rate(&self) -> f64 {
        self.config.dropout
    }

    fn loss(&self, mel: &MelSpectrogram) -> Result<f64> {
        self.reconstruction_error(mel)
    }

    fn gradient(&self, mel: &MelSpectrogram) -> Result<Vec<f64>> {
        let mut g = self.zeros_like();
        self.loss_and_grad(mel, None, &mut g)?;
        Ok(g.flatten())
    }
}

impl Differentiable for Mlp {
    type Sample = (Vec<f64>, usize);

    fn dropout_rate(&self) -> f64 {
        0.0
    }

    fn loss(&self, s: &(Vec<f64>, usize)) -> Result<f64> {
        Mlp::loss(self, &s.0, s.1)
    }

    fn gradient(&self, s: &(Vec<f64>, usize)) -> Result<Vec<f64>> {
        let mut g = self.zeros_like();
        self.loss_and_grad(&s.0, s.1, &mut g)?;
        Ok(g.flatten())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the parameter with the largest error.
    pub worst_parameter: usize,
    pub parameters_checked: usize,
}

/// Relative error `|a − n| / max(|a|, |n|)`; zero when both vanish below `1e-12`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares analytic gradients with central differences for every parameter.
pub fn gradient_check<M: Differentiable>(
    model: &M,
    sample: &M::Sample,
    epsilon: f64,
) -> Result<GradCheckReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(NnetError::Input(format!("epsilon must be > 0, got {epsilon}")));
    }
    if model.dropout_rate() > 0.0 {
        return Err(NnetError::Contract(
            "gradient check requires dropout to be disabled".into(),
        ));
    }
    let analytic = model.gradient(sample)?;
    let base = model.flatten();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: 0,
        parameters_checked: base.len(),
    };
    for i in 0..base.len() {
        params[i] = base[i] + epsilon;
        probe.assign_flat(&params);
        let up = probe.loss(sample)?;
        params[i] = base[i] - epsilon;
        probe.assign_flat(&params);
        let down = probe.loss(sample)?;
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = i;
        }
    }
    Ok(report)
}
