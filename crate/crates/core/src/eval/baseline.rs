use rayon::prelude::*;

use super::{ClassId, EvalError, LabeledSample, Result};
use crate::dsp::MelSpectrogram;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub class: ClassId,
    pub distance: f64,
    pub sample_id: u64,
}

/// Exhaustive Euclidean nearest neighbor over flattened Mel matrices.
pub struct NearestNeighbor<'a> {
    train: Vec<&'a LabeledSample>,
}

impl<'a> NearestNeighbor<'a> {
    pub fn new(train: impl IntoIterator<Item = &'a LabeledSample>) -> Result<Self> {
        let train: Vec<_> = train.into_iter().collect();
        if train.is_empty() {
            return Err(EvalError::Input("nearest-neighbor training set is empty".into()));
        }
        let (b, f) = (train[0].mel.bands(), train[0].mel.frames());
        if train.iter().any(|s| s.mel.bands() != b || s.mel.frames() != f) {
            return Err(EvalError::Input("training samples differ in shape".into()));
        }
        Ok(Self { train })
    }

    /// Nearest training sample; equal distances resolve to the lowest `sample_id`.
    pub fn predict(&self, query: &MelSpectrogram) -> Result<Neighbor> {
        let first = &self.train[0].mel;
        if query.bands() != first.bands() || query.frames() != first.frames() {
            return Err(EvalError::Input(format!(
                "query shape {}×{} differs from training shape {}×{}",
                query.bands(),
                query.frames(),
                first.bands(),
                first.frames()
            )));
        }
        let q = query.values();
        let best = self
            .train
            .par_iter()
            .map(|s| {
                let d2: f64 = s
                    .mel
                    .values()
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, s.sample_id, s.label)
            })
            .reduce_with(|a, b| match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
                std::cmp::Ordering::Greater => b,
                _ => a,
            })
            .expect("training set is non-empty");
        Ok(Neighbor {
            class: best.2,
            distance: best.0.sqrt(),
            sample_id: best.1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SampleSource;

    fn sample(id: u64, label: usize, v: Vec<f64>) -> LabeledSample {
        let n = v.len();
        LabeledSample {
            sample_id: id,
            label,
            source: SampleSource::Synthetic,
            mel: MelSpectrogram::from_frames(v, n, 1).unwrap(),
        }
    }

    #[test]
    fn identical_query_has_zero_distance() {
        let train = vec![sample(1, 3, vec![0.1, 0.2]), sample(2, 4, vec![0.9, 0.9])];
        let nn = NearestNeighbor::new(&train).unwrap();
        let hit = nn.predict(&train[1].mel).unwrap();
        assert_eq!((hit.class, hit.distance), (4, 0.0));
    }

    #[test]
    fn tie_goes_to_lowest_sample_id() {
        let train = vec![
            sample(9, 1, vec![1.0, 0.0]),
            sample(4, 2, vec![-1.0, 0.0]),
            sample(7, 3, vec![0.0, 1.0]),
        ];
        let nn = NearestNeighbor::new(&train).unwrap();
        let hit = nn.predict(&MelSpectrogram::from_frames(vec![0.0, 0.0], 2, 1).unwrap()).unwrap();
        assert_eq!((hit.class, hit.sample_id), (2, 4));
    }

    #[test]
    fn hand_computed_three_sample_set() {
        // distances from (0.5, 0.5, 0): a=(0,0,0) → √0.5, b=(1,1,1) → √1.5, c=(0.5,0,0.2) → √0.29
        let train = vec![
            sample(0, 0, vec![0.0, 0.0, 0.0]),
            sample(1, 1, vec![1.0, 1.0, 1.0]),
            sample(2, 2, vec![0.5, 0.0, 0.2]),
        ];
        let q = MelSpectrogram::from_frames(vec![0.5, 0.5, 0.0], 3, 1).unwrap();
        let brute: Vec<f64> = train.iter().map(|s| s.mel.distance(&q)).collect();
        assert!((brute[2] - 0.29f64.sqrt()).abs() < 1e-15);
        let hit = NearestNeighbor::new(&train).unwrap().predict(&q).unwrap();
        assert_eq!(hit.class, 2);
        assert_eq!(hit.distance, brute[2]);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(NearestNeighbor::new(std::iter::empty()).is_err());
    }
}
