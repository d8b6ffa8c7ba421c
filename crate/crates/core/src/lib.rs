//! Site-level detection of websites dominated by LLM-generated text.
//!
//! Pages are sampled from sitemaps or an archive index, fetched politely,
//! reduced to their main text, filtered, scored per page, and classified
//! per site from the deciles of the page scores.

pub mod classifier;
pub mod extract;
pub mod fetcher;
pub mod filter;
pub mod http;
pub mod sampler;
pub mod scalar;
pub mod score;
pub mod study;
pub mod util;

pub use classifier::{Label, LinearModel, SiteFeatures, SiteVerdict};
pub use sampler::{SiteLabel, SiteSpec};
pub use scalar::Scalar;
pub use score::{HttpScorer, Scorer, StubScorer};
pub use study::{Pipeline, RunConfig, RunManifest, SiteResult, SiteStatus};

pub type SiteFeaturesF32 = classifier::SiteFeatures<f32>;
pub type SiteFeaturesF64 = classifier::SiteFeatures<f64>;
pub type LinearModelF32 = classifier::LinearModel<f32>;
pub type LinearModelF64 = classifier::LinearModel<f64>;
pub type SiteVerdictF32 = classifier::SiteVerdict<f32>;
pub type SiteVerdictF64 = classifier::SiteVerdict<f64>;
pub type DatasetF32 = classifier::Dataset<f32>;
pub type DatasetF64 = classifier::Dataset<f64>;
