//! Site-level aggregation of page scores and the linear SVM that labels sites.
//!
//! A site is represented by the nine deciles of its page scores. Features are
//! z-score standardized with statistics from the training set, and a linear
//! SVM trained by full-batch subgradient descent on the hinge loss separates
//! LLM-dominant sites (`y = -1`) from human sites (`y = +1`).

mod deciles;
mod eval;
mod io;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use deciles::{compute_deciles, N_DECILES};
pub use eval::{
    evaluate_model, evaluate_ood, Confusion, Dataset, LabeledSite, OodMetrics, SiteMargin,
};
pub use io::{load_model, save_model};
pub use train::{hinge_objective, train, TrainConfig};

/// Minimum accepted pages before a site gets a feature vector.
pub const DEFAULT_MIN_PAGES: usize = 15;

/// Recorded in model metadata and run reports; changing it changes features.
pub const PERCENTILE_DEFINITION: &str = "linear interpolation of order statistics, h = (n-1)q";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("score list contains a non-finite value")]
    NonFiniteScore,
    #[error("site {site_id} has {n_pages} pages, fewer than the required {min_pages}")]
    InsufficientPages {
        site_id: String,
        n_pages: usize,
        min_pages: usize,
    },
    #[error("training data must contain at least one site of each class")]
    DegenerateTraining,
    #[error("site {0} has a non-finite feature")]
    InvalidFeature(String),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("train and test sets overlap: {0:?}")]
    Leakage(Vec<String>),
    #[error("invalid model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Site class. Serialized lowercase (`"llm"`, `"human"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Llm,
    Human,
}

impl Label {
    /// SVM target: human = +1, llm = -1.
    pub fn sign(self) -> i8 {
        match self {
            Label::Human => 1,
            Label::Llm => -1,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Human => Label::Llm,
            Label::Llm => Label::Human,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Llm => "llm",
            Label::Human => "human",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SiteFeatures<T = f64> {
    pub site_id: String,
    pub deciles: [T; N_DECILES],
    pub n_pages: usize,
    pub scorer_id: String,
}

impl<T: Scalar> SiteFeatures<T> {
    /// Builds the decile feature vector, refusing sites with fewer than
    /// `min_pages` scores.
    pub fn from_scores(
        site_id: impl Into<String>,
        scores: &[T],
        scorer_id: impl Into<String>,
        min_pages: usize,
    ) -> Result<Self, ClassifierError> {
        let site_id = site_id.into();
        if scores.len() < min_pages {
            return Err(ClassifierError::InsufficientPages {
                site_id,
                n_pages: scores.len(),
                min_pages,
            });
        }
        Ok(SiteFeatures {
            deciles: compute_deciles(scores)?,
            n_pages: scores.len(),
            scorer_id: scorer_id.into(),
            site_id,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.deciles.iter().all(|d| d.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub learning_rate_decay: f64,
    pub standardized: bool,
    pub seed: u64,
    pub dataset_ids: Vec<String>,
    pub scorer_id: String,
    pub percentile_definition: String,
}

/// Trained linear classifier over standardized deciles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T = f64> {
    pub weights: [T; N_DECILES],
    pub bias: T,
    pub feature_means: [T; N_DECILES],
    pub feature_stds: [T; N_DECILES],
    pub training_meta: TrainingMeta,
}

impl<T: Scalar> LinearModel<T> {
    /// `z_i = (decile_i - mean_i) / std_i`
    pub fn standardize(&self, f: &SiteFeatures<T>) -> [T; N_DECILES] {
        let mut z = [T::zero(); N_DECILES];
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = (f.deciles[i] - self.feature_means[i]) / self.feature_stds[i];
        }
        z
    }

    pub fn decision_value(&self, f: &SiteFeatures<T>) -> T {
        dot(&self.weights, &self.standardize(f)) + self.bias
    }

    /// Labels a site; a margin of exactly zero resolves to human.
    pub fn predict(&self, f: &SiteFeatures<T>) -> SiteVerdict<T> {
        let margin = self.decision_value(f);
        SiteVerdict {
            site_id: f.site_id.clone(),
            label: if margin < T::zero() {
                Label::Llm
            } else {
                Label::Human
            },
            margin,
            features: f.clone(),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), ClassifierError> {
        if self
            .feature_stds
            .iter()
            .any(|s| !s.is_finite() || *s <= T::zero())
        {
            return Err(ClassifierError::ModelFormat(
                "feature_stds must be finite and positive".into(),
            ));
        }
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        if !finite(&self.weights) || !self.bias.is_finite() || !finite(&self.feature_means) {
            return Err(ClassifierError::ModelFormat(
                "weights, bias and means must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Free-function form of [`LinearModel::standardize`].
pub fn standardize<T: Scalar>(f: &SiteFeatures<T>, model: &LinearModel<T>) -> [T; N_DECILES] {
    model.standardize(f)
}

pub fn predict<T: Scalar>(model: &LinearModel<T>, f: &SiteFeatures<T>) -> SiteVerdict<T> {
    model.predict(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SiteVerdict<T = f64> {
    pub site_id: String,
    pub label: Label,
    /// Decision value; negative means LLM-dominant.
    pub margin: T,
    pub features: SiteFeatures<T>,
}

pub(crate) fn dot<T: Scalar>(a: &[T; N_DECILES], b: &[T; N_DECILES]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}
