use hydrowatch::dsp::MelSpectrogram;
use hydrowatch::nnet::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mel(rng: &mut ChaCha8Rng, bands: usize, frames: usize) -> MelSpectrogram {
    let v = (0..bands * frames).map(|_| rng.gen_range(-1.0..1.0)).collect();
    MelSpectrogram::from_frames(v, bands, frames).unwrap()
}

fn parameters<P: Parameters>(p: &P) -> Vec<f64> {
    p.flatten()
}

#[test]
fn desk_scale_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = AutoencoderConfig { mel_bands: 12, frames: 10, hidden: 6, dropout: 0.0 };
    let ae = Autoencoder::new(cfg, 5).unwrap();
    let mel = random_mel(&mut rng, 12, 10);
    let r = gradient_check(&ae, &mel, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");

    let mlp = Mlp::new(MlpConfig { input: 24, hidden: vec![16, 16], classes: 10, activation: Activation::Relu }, 3).unwrap();
    let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = gradient_check(&mlp, &(x, 4), 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-6, "{r:?}");
}

#[test]
fn tiny_autoencoder_loss_falls() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<MelSpectrogram> = (0..8).map(|_| random_mel(&mut rng, 8, 9)).collect();
    let cfg = AutoencoderConfig { mel_bands: 8, frames: 9, hidden: 4, dropout: 0.0 };
    let tc = TrainingConfig { epochs: 20, batch_size: 4, learning_rate: 0.01, ..TrainingConfig::autoencoder_default() };
    let (_, hist) = train_autoencoder(&data, &cfg, &tc).unwrap();
    assert_eq!(hist.epoch_loss.len(), 20);
    assert!(hist.epoch_loss[19] < hist.epoch_loss[0], "{:?}", hist.epoch_loss);
}

#[test]
fn repeated_sample_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mel = random_mel(&mut rng, 8, 9);
    let cfg = AutoencoderConfig { mel_bands: 8, frames: 9, hidden: 6, dropout: 0.0 };
    let tc = TrainingConfig { epochs: 40, batch_size: 4, learning_rate: 0.01, seed: 9, ..TrainingConfig::autoencoder_default() };
    let untrained = Autoencoder::new(cfg.clone(), tc.seed).unwrap().reconstruction_error(&mel).unwrap();
    let (ae, hist) = train_autoencoder(&vec![mel.clone(); 4], &cfg, &tc).unwrap();
    let trained = ae.reconstruction_error(&mel).unwrap();
    assert!(trained < untrained, "{trained} vs {untrained}");
    let first: f64 = hist.epoch_loss[..5].iter().sum();
    let last: f64 = hist.epoch_loss[35..].iter().sum();
    assert!(last < first);
}

#[test]
fn autoencoder_training_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<MelSpectrogram> = (0..6).map(|_| random_mel(&mut rng, 6, 5)).collect();
    let cfg = AutoencoderConfig { mel_bands: 6, frames: 5, hidden: 3, dropout: 0.2 };
    let tc = TrainingConfig { epochs: 3, batch_size: 4, ..TrainingConfig::autoencoder_default() };
    let (a, ha) = train_autoencoder(&data, &cfg, &tc).unwrap();
    let (b, hb) = train_autoencoder(&data, &cfg, &tc).unwrap();
    assert_eq!(parameters(&a), parameters(&b));
    assert_eq!(ha.epoch_loss, hb.epoch_loss);
    let other = TrainingConfig { seed: tc.seed + 1, ..tc };
    let (c, _) = train_autoencoder(&data, &cfg, &other).unwrap();
    assert_ne!(parameters(&a), parameters(&c));
}

/// Two Gaussian blobs pushed apart along a random direction.
fn separable(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<LatentEncoding>, Vec<usize>) {
    let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let x: Vec<f64> = dir
            .iter()
            .map(|d| (0.5 * sign * d / norm + rng.gen_range(-0.1..0.1)).clamp(-1.0, 1.0))
            .collect();
        xs.push(LatentEncoding(x));
        ys.push(y);
    }
    (xs, ys)
}

/// Independent oracle: a perceptron that must converge on separable data.
fn perceptron_separates(xs: &[LatentEncoding], ys: &[usize]) -> bool {
    let dim = xs[0].len();
    let mut w = vec![0.0; dim + 1];
    for _ in 0..1000 {
        let mut errors = 0;
        for (x, &y) in xs.iter().zip(ys) {
            let t = if y == 1 { 1.0 } else { -1.0 };
            let s: f64 = w[dim] + x.0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if t * s <= 0.0 {
                errors += 1;
                for (wi, xi) in w.iter_mut().zip(&x.0) {
                    *wi += t * xi;
                }
                w[dim] += t;
            }
        }
        if errors == 0 {
            return true;
        }
    }
    false
}

#[test]
fn separable_toy_problem_is_fit_within_fifty_epochs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (xs, ys) = separable(&mut rng, 64, 8);
    assert!(perceptron_separates(&xs, &ys));
    let cfg = MlpConfig { input: 8, hidden: vec![16, 16], classes: 2, activation: Activation::Relu };
    let tc = TrainingConfig { epochs: 50, batch_size: 16, learning_rate: 0.01, ..TrainingConfig::classifier_default() };
    let (mlp, hist) = train_classifier(&xs, &ys, &cfg, &tc).unwrap();
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            let p = mlp.predict(&x.0).unwrap();
            (p[1] > p[0]) == (y == 1)
        })
        .count();
    assert_eq!(correct, xs.len());
    assert!(hist.epoch_loss.last().unwrap() < &hist.epoch_loss[0]);
}

#[test]
fn classifier_training_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (xs, ys) = separable(&mut rng, 40, 6);
    let cfg = MlpConfig { input: 6, hidden: vec![8, 8], classes: 2, activation: Activation::Relu };
    let tc = TrainingConfig { epochs: 5, batch_size: 8, ..TrainingConfig::classifier_default() };
    let (a, _) = train_classifier(&xs, &ys, &cfg, &tc).unwrap();
    let (b, _) = train_classifier(&xs, &ys, &cfg, &tc).unwrap();
    assert_eq!(parameters(&a), parameters(&b));
}

#[test]
fn probabilities_sum_to_one() {
    let mlp = Mlp::new(MlpConfig { input: 5, hidden: vec![7, 7], classes: 10, activation: Activation::Relu }, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = mlp.predict(&x).unwrap();
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
