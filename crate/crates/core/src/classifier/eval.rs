use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{train, ClassifierError, Label, LinearModel, SiteFeatures, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledSite<T = f64> {
    pub features: SiteFeatures<T>,
    pub label: Label,
}

/// A named collection of labeled sites from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T = f64> {
    pub id: String,
    pub sites: Vec<LabeledSite<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(id: impl Into<String>, sites: Vec<LabeledSite<T>>) -> Self {
        Dataset {
            id: id.into(),
            sites,
        }
    }

    pub fn features(&self) -> Vec<SiteFeatures<T>> {
        self.sites.iter().map(|s| s.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.sites.iter().map(|s| s.label).collect()
    }

    /// Same sites with every label inverted.
    pub fn flipped(&self) -> Self {
        Dataset {
            id: format!("{}-flipped", self.id),
            sites: self
                .sites
                .iter()
                .map(|s| LabeledSite {
                    features: s.features.clone(),
                    label: s.label.flipped(),
                })
                .collect(),
        }
    }
}

/// Counts with "positive" meaning LLM-dominant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_llm: usize,
    pub false_llm: usize,
    pub true_human: usize,
    pub false_human: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_llm + self.false_llm + self.true_human + self.false_human
    }

    pub fn correct(&self) -> usize {
        self.true_llm + self.true_human
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMargin {
    pub site_id: String,
    pub truth: Label,
    pub predicted: Label,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodMetrics {
    pub train_id: String,
    pub test_id: String,
    pub accuracy: f64,
    /// Human sites labeled LLM, over all human sites.
    pub fpr: f64,
    /// LLM sites labeled human, over all LLM sites.
    pub fnr: f64,
    pub confusion: Confusion,
    pub margins: Vec<SiteMargin>,
}

/// Trains on `train_set` alone (standardization included) and scores `test_set`.
pub fn evaluate_ood<T: Scalar>(
    train_set: &Dataset<T>,
    test_set: &Dataset<T>,
    config: &TrainConfig,
) -> Result<OodMetrics, ClassifierError> {
    if train_set.id == test_set.id {
        return Err(ClassifierError::Leakage(vec![train_set.id.clone()]));
    }
    let train_ids: BTreeSet<&str> = train_set
        .sites
        .iter()
        .map(|s| s.features.site_id.as_str())
        .collect();
    let overlap: Vec<String> = test_set
        .sites
        .iter()
        .map(|s| s.features.site_id.as_str())
        .filter(|id| train_ids.contains(id))
        .map(str::to_owned)
        .collect();
    if !overlap.is_empty() {
        return Err(ClassifierError::Leakage(overlap));
    }
    let model = train(
        &train_set.features(),
        &train_set.labels(),
        config,
        std::slice::from_ref(&train_set.id),
    )?;
    Ok(evaluate_model(&model, &train_set.id, test_set))
}

/// Scores a dataset with an existing model. No leakage check.
pub fn evaluate_model<T: Scalar>(
    model: &LinearModel<T>,
    train_id: &str,
    test_set: &Dataset<T>,
) -> OodMetrics {
    let mut confusion = Confusion::default();
    let mut margins = Vec::with_capacity(test_set.sites.len());
    for site in &test_set.sites {
        let verdict = model.predict(&site.features);
        match (site.label, verdict.label) {
            (Label::Llm, Label::Llm) => confusion.true_llm += 1,
            (Label::Human, Label::Llm) => confusion.false_llm += 1,
            (Label::Human, Label::Human) => confusion.true_human += 1,
            (Label::Llm, Label::Human) => confusion.false_human += 1,
        }
        margins.push(SiteMargin {
            site_id: site.features.site_id.clone(),
            truth: site.label,
            predicted: verdict.label,
            margin: verdict.margin.as_f64(),
        });
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    OodMetrics {
        train_id: train_id.to_owned(),
        test_id: test_set.id.clone(),
        accuracy: ratio(confusion.correct(), confusion.total()),
        fpr: ratio(
            confusion.false_llm,
            confusion.false_llm + confusion.true_human,
        ),
        fnr: ratio(
            confusion.false_human,
            confusion.false_human + confusion.true_llm,
        ),
        confusion,
        margins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(id: &str, prefix: &str, shift: f64) -> Dataset {
        let mut sites = Vec::new();
        for i in 0..6 {
            let (label, base) = if i % 2 == 0 {
                (Label::Llm, 0.7)
            } else {
                (Label::Human, 1.0)
            };
            let mut d = [0.0; 9];
            for (k, v) in d.iter_mut().enumerate() {
                *v = base + shift + 0.01 * k as f64 + 0.003 * i as f64;
            }
            sites.push(LabeledSite {
                features: SiteFeatures {
                    site_id: format!("{prefix}{i}"),
                    deciles: d,
                    n_pages: 15,
                    scorer_id: "stub".into(),
                },
                label,
            });
        }
        Dataset::new(id, sites)
    }

    #[test]
    fn leakage_rejected() {
        let a = ds("a", "x", 0.0);
        let b = ds("b", "x", 0.02);
        assert!(matches!(
            evaluate_ood(&a, &b, &TrainConfig::default()),
            Err(ClassifierError::Leakage(ids)) if ids.len() == 6
        ));
        assert!(matches!(
            evaluate_ood(&a, &a, &TrainConfig::default()),
            Err(ClassifierError::Leakage(_))
        ));
    }

    #[test]
    fn separable_ood_and_flip() {
        let a = ds("a", "a", 0.0);
        let b = ds("b", "b", 0.03);
        let m = evaluate_ood(&a, &b, &TrainConfig::default()).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.confusion.total(), 6);

        let model = train(&a.features(), &a.labels(), &TrainConfig::default(), &[]).unwrap();
        let flipped = evaluate_model(&model, "a", &b.flipped());
        assert!((flipped.accuracy - (1.0 - m.accuracy)).abs() < 1e-12);

        let self_eval = evaluate_model(&model, "a", &a);
        assert!(self_eval.accuracy >= m.accuracy);
    }
}
