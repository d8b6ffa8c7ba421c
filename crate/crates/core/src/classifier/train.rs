use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{
    dot, ClassifierError, Label, LinearModel, SiteFeatures, TrainingMeta, N_DECILES,
    PERCENTILE_DEFINITION,
};

const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hinge-loss weight.
    pub c: f64,
    pub epochs: usize,
    /// Initial step size; step t uses `learning_rate / (1 + learning_rate_decay * t)`.
    pub learning_rate: f64,
    pub learning_rate_decay: f64,
    /// z-score the deciles; when false the model stores zero means and unit stds.
    pub standardize: bool,
    /// Recorded only; training is deterministic full-batch descent.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            epochs: 5000,
            learning_rate: 0.1,
            learning_rate_decay: 0.01,
            standardize: true,
            seed: 0,
        }
    }
}

/// `(1/2)|w|^2 + C * sum max(0, 1 - y (w.z + b))`
pub fn hinge_objective<T: Scalar>(
    w: &[T; N_DECILES],
    b: T,
    z: &[[T; N_DECILES]],
    y: &[T],
    c: T,
) -> T {
    let reg = dot(w, w) / T::of(2.0);
    let loss = z.iter().zip(y).fold(T::zero(), |acc, (zi, yi)| {
        acc + (T::one() - *yi * (dot(w, zi) + b)).max(T::zero())
    });
    reg + c * loss
}

/// Trains a linear SVM on site features.
///
/// Full-batch subgradient descent on the primal hinge objective. The
/// iterate with the lowest objective seen is returned, since subgradient
/// steps are not monotone.
pub fn train<T: Scalar>(
    features: &[SiteFeatures<T>],
    labels: &[Label],
    config: &TrainConfig,
    dataset_ids: &[String],
) -> Result<LinearModel<T>, ClassifierError> {
    if features.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if let Some(bad) = features.iter().find(|f| !f.is_finite()) {
        return Err(ClassifierError::InvalidFeature(bad.site_id.clone()));
    }
    let has = |l: Label| labels.contains(&l);
    if !has(Label::Llm) || !has(Label::Human) {
        return Err(ClassifierError::DegenerateTraining);
    }

    let (means, stds) = if config.standardize {
        moments(features)
    } else {
        ([T::zero(); N_DECILES], [T::one(); N_DECILES])
    };

    let z: Vec<[T; N_DECILES]> = features
        .iter()
        .map(|f| {
            let mut zi = [T::zero(); N_DECILES];
            for k in 0..N_DECILES {
                zi[k] = (f.deciles[k] - means[k]) / stds[k];
            }
            zi
        })
        .collect();
    let y: Vec<T> = labels.iter().map(|l| T::of(f64::from(l.sign()))).collect();

    let c = T::of(config.c);
    let lr0 = T::of(config.learning_rate);
    let decay = T::of(config.learning_rate_decay);

    let mut w = [T::zero(); N_DECILES];
    let mut b = T::zero();
    let mut best = (hinge_objective(&w, b, &z, &y, c), w, b);

    for t in 0..config.epochs {
        let eta = lr0 / (T::one() + decay * T::of_usize(t));
        let mut gw = w;
        let mut gb = T::zero();
        for (zi, yi) in z.iter().zip(&y) {
            if *yi * (dot(&w, zi) + b) < T::one() {
                for k in 0..N_DECILES {
                    gw[k] = gw[k] - c * *yi * zi[k];
                }
                gb = gb - c * *yi;
            }
        }
        for k in 0..N_DECILES {
            w[k] = w[k] - eta * gw[k];
        }
        b = b - eta * gb;

        let obj = hinge_objective(&w, b, &z, &y, c);
        if obj < best.0 {
            best = (obj, w, b);
        }
    }

    let scorer_id = features
        .first()
        .map(|f| f.scorer_id.clone())
        .unwrap_or_default();
    let model = LinearModel {
        weights: best.1,
        bias: best.2,
        feature_means: means,
        feature_stds: stds,
        training_meta: TrainingMeta {
            c: config.c,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            learning_rate_decay: config.learning_rate_decay,
            standardized: config.standardize,
            seed: config.seed,
            dataset_ids: dataset_ids.to_vec(),
            scorer_id,
            percentile_definition: PERCENTILE_DEFINITION.into(),
        },
    };
    if model.weights.iter().any(|x| !x.is_finite()) || !model.bias.is_finite() {
        return Err(ClassifierError::InvalidFeature(
            "<training diverged>".into(),
        ));
    }
    Ok(model)
}

/// Per-dimension mean and population std, std floored at 1e-9.
fn moments<T: Scalar>(features: &[SiteFeatures<T>]) -> ([T; N_DECILES], [T; N_DECILES]) {
    let n = T::of_usize(features.len());
    let mut means = [T::zero(); N_DECILES];
    let mut stds = [T::zero(); N_DECILES];
    for k in 0..N_DECILES {
        let mean = features.iter().fold(T::zero(), |a, f| a + f.deciles[k]) / n;
        let var = features
            .iter()
            .fold(T::zero(), |a, f| a + (f.deciles[k] - mean).powi(2))
            / n;
        means[k] = mean;
        stds[k] = var.sqrt().max(T::of(STD_FLOOR));
    }
    (means, stds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(id: &str, d: [f64; 9]) -> SiteFeatures {
        SiteFeatures {
            site_id: id.into(),
            deciles: d,
            n_pages: 15,
            scorer_id: "stub".into(),
        }
    }

    #[test]
    fn mirrored_pair_has_zero_bias() {
        let a = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3];
        let b = [1.5, 1.4, 1.3, 1.2, 1.1, 1.0, 0.9, 0.8, 0.7];
        let feats = vec![site("a", a), site("b", b)];
        let m = train(
            &feats,
            &[Label::Llm, Label::Human],
            &TrainConfig::default(),
            &[],
        )
        .unwrap();
        // standardized points are exact mirrors (dimension 5 is constant)
        let za = m.standardize(&feats[0]);
        let zb = m.standardize(&feats[1]);
        for k in 0..9 {
            assert!((za[k] + zb[k]).abs() < 1e-12);
        }
        assert!(m.bias.abs() < 1e-6, "bias {}", m.bias);
        assert_eq!(m.predict(&feats[0]).label, Label::Llm);
        assert_eq!(m.predict(&feats[1]).label, Label::Human);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let f = vec![site("a", [1.0; 9]), site("b", [0.5; 9])];
        assert!(matches!(
            train(&f, &[Label::Llm, Label::Llm], &TrainConfig::default(), &[]),
            Err(ClassifierError::DegenerateTraining)
        ));
        assert!(matches!(
            train(&f, &[Label::Llm], &TrainConfig::default(), &[]),
            Err(ClassifierError::LengthMismatch { .. })
        ));
        let mut bad = f.clone();
        bad[1].deciles[3] = f64::NAN;
        assert!(matches!(
            train(&bad, &[Label::Llm, Label::Human], &TrainConfig::default(), &[]),
            Err(ClassifierError::InvalidFeature(id)) if id == "b"
        ));
    }

    #[test]
    fn deterministic_bitwise() {
        let f: Vec<_> = (0..10)
            .map(|i| site(&format!("s{i}"), [0.5 + 0.05 * i as f64; 9]))
            .collect();
        let l: Vec<_> = (0..10)
            .map(|i| if i < 5 { Label::Llm } else { Label::Human })
            .collect();
        let a = train(&f, &l, &TrainConfig::default(), &[]).unwrap();
        let b = train(&f, &l, &TrainConfig::default(), &[]).unwrap();
        assert_eq!(a.weights.map(f64::to_bits), b.weights.map(f64::to_bits));
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn raw_features_mode_stores_identity_scaling() {
        let f = vec![site("a", [0.7; 9]), site("b", [1.0; 9])];
        let cfg = TrainConfig {
            standardize: false,
            ..TrainConfig::default()
        };
        let m = train(&f, &[Label::Llm, Label::Human], &cfg, &[]).unwrap();
        assert_eq!(m.feature_means, [0.0; 9]);
        assert_eq!(m.feature_stds, [1.0; 9]);
        assert!(!m.training_meta.standardized);
    }

    #[test]
    fn works_in_f32() {
        let f: Vec<SiteFeatures<f32>> = vec![
            SiteFeatures {
                site_id: "a".into(),
                deciles: [0.7; 9],
                n_pages: 15,
                scorer_id: "stub".into(),
            },
            SiteFeatures {
                site_id: "b".into(),
                deciles: [1.0; 9],
                n_pages: 15,
                scorer_id: "stub".into(),
            },
        ];
        let m = train(
            &f,
            &[Label::Llm, Label::Human],
            &TrainConfig::default(),
            &[],
        )
        .unwrap();
        assert_eq!(m.predict(&f[0]).label, Label::Llm);
        assert_eq!(m.predict(&f[1]).label, Label::Human);
    }
}
