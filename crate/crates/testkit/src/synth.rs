//! Synthetic text and score corpora aimed at stub-score bands.
//!
//! Text is a stream of words where each word is, with probability `rho`,
//! drawn from a six-word filler pool and otherwise a fresh random
//! pseudo-word. Repetition lowers the stub's distinct-trigram ratio, so the
//! stub score falls as `rho` rises. [`Calibration`] maps a target score to
//! the `rho` that hits it on average.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use llmsite::classifier::{
    train, Dataset, Label, LabeledSite, LinearModel, SiteFeatures, TrainConfig,
};
use llmsite::score::stub_score;
use llmsite::util::hash64;

const CALIBRATION_SAMPLES: usize = 24;

const FILLER: [&str; 6] = ["the", "and", "of", "to", "in", "is"];

fn fresh_word(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(3..=9);
    (0..len)
        .map(|_| rng.gen_range(b'a'..=b'z') as char)
        .collect()
}

/// `n_words` words of sentence-shaped text with filler probability `rho`.
pub fn prose(rng: &mut impl Rng, rho: f64, n_words: usize) -> String {
    let mut out = String::new();
    let mut left_in_sentence = 0;
    for i in 0..n_words {
        let w = if rng.gen_bool(rho.clamp(0.0, 1.0)) {
            FILLER.choose(rng).expect("non-empty pool").to_string()
        } else {
            fresh_word(rng)
        };
        if left_in_sentence == 0 {
            if i > 0 {
                out.push_str(". ");
            }
            left_in_sentence = rng.gen_range(8..=16);
            let mut c = w.chars();
            out.extend(c.next().map(|f| f.to_ascii_uppercase()));
            out.push_str(c.as_str());
        } else {
            out.push(' ');
            out.push_str(&w);
        }
        left_in_sentence -= 1;
    }
    out.push('.');
    out
}

/// Mean stub score as a function of `rho`, for a fixed text length.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub n_words: usize,
    /// `(rho, mean score)`, `rho` ascending, score descending.
    pub table: Vec<(f64, f64)>,
}

impl Calibration {
    pub fn new(n_words: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0xCA11B);
        let mut table: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let rho = i as f64 / 20.0;
                let mean = (0..CALIBRATION_SAMPLES)
                    .map(|_| stub_score(&prose(&mut rng, rho, n_words)))
                    .sum::<f64>()
                    / CALIBRATION_SAMPLES as f64;
                (rho, mean)
            })
            .collect();
        // Enforce monotonicity so the inverse is well defined.
        for i in 1..table.len() {
            table[i].1 = table[i].1.min(table[i - 1].1);
        }
        Calibration { n_words, table }
    }

    pub fn score_range(&self) -> (f64, f64) {
        (self.table.last().unwrap().1, self.table[0].1)
    }

    /// `rho` whose mean score is `target`, clamped to the reachable range.
    pub fn rho_for(&self, target: f64) -> f64 {
        let t = &self.table;
        if target >= t[0].1 {
            return 0.0;
        }
        for w in t.windows(2) {
            let ((r0, s0), (r1, s1)) = (w[0], w[1]);
            if target <= s0 && target >= s1 {
                return if s0 == s1 {
                    r0
                } else {
                    r0 + (s0 - target) / (s0 - s1) * (r1 - r0)
                };
            }
        }
        1.0
    }

    pub fn text_for(&self, rng: &mut impl Rng, target: f64) -> String {
        prose(rng, self.rho_for(target), self.n_words)
    }
}

/// Shape of a synthetic baseline dataset.
#[derive(Debug, Clone)]
pub struct BaselineSpec {
    pub llm_sites: usize,
    pub human_sites: usize,
    pub pages_per_site: usize,
    /// Centre of the llm page-score band.
    pub low: f64,
    /// Centre of the human page-score band.
    pub high: f64,
    pub std: f64,
    /// Fraction of each site's pages drawn from the other class's band.
    pub cross_fraction: f64,
    pub words_per_page: usize,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            llm_sites: 30,
            human_sites: 30,
            pages_per_site: 15,
            low: 0.7,
            high: 1.0,
            std: 0.05,
            cross_fraction: 0.2,
            words_per_page: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSite {
    pub site_id: String,
    pub label: Label,
    pub texts: Vec<String>,
    /// Stub scores of `texts`.
    pub scores: Vec<f64>,
    /// Pages drawn from the other class's band.
    pub crossed: Vec<bool>,
}

/// Generates the sites of one baseline dataset. Site ids are prefixed by
/// `id`, so datasets with different ids never share sites.
pub fn synthetic_baseline(
    id: &str,
    seed: u64,
    spec: &BaselineSpec,
    cal: &Calibration,
) -> Vec<SyntheticSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash64(id.as_bytes()));
    let n_cross = (spec.cross_fraction * spec.pages_per_site as f64).round() as usize;
    let low = Normal::new(spec.low, spec.std).expect("valid normal");
    let high = Normal::new(spec.high, spec.std).expect("valid normal");
    let labels = std::iter::repeat_n(Label::Llm, spec.llm_sites)
        .chain(std::iter::repeat_n(Label::Human, spec.human_sites));
    labels
        .enumerate()
        .map(|(i, label)| {
            let mut crossed: Vec<bool> = (0..spec.pages_per_site).map(|p| p < n_cross).collect();
            crossed.shuffle(&mut rng);
            let texts: Vec<String> = crossed
                .iter()
                .map(|&c| {
                    let in_low = (label == Label::Llm) != c;
                    let target = if in_low {
                        low.sample(&mut rng)
                    } else {
                        high.sample(&mut rng)
                    };
                    cal.text_for(&mut rng, target)
                })
                .collect();
            SyntheticSite {
                site_id: format!("{id}-{}-{i:03}", label.as_str()),
                label,
                scores: texts.iter().map(|t| stub_score(t)).collect(),
                texts,
                crossed,
            }
        })
        .collect()
}

pub fn to_dataset(id: &str, sites: &[SyntheticSite]) -> Dataset {
    Dataset::new(
        id,
        sites
            .iter()
            .map(|s| LabeledSite {
                features: SiteFeatures::from_scores(s.site_id.clone(), &s.scores, "stub", 1)
                    .expect("synthetic scores are finite"),
                label: s.label,
            })
            .collect(),
    )
}

/// Model trained on one default synthetic baseline, for stub-scored runs.
pub fn baseline_model(seed: u64) -> LinearModel {
    let cal = Calibration::new(BaselineSpec::default().words_per_page);
    let sites = synthetic_baseline("model-train", seed, &BaselineSpec::default(), &cal);
    let ds = to_dataset("model-train", &sites);
    train(
        &ds.features(),
        &ds.labels(),
        &TrainConfig::default(),
        std::slice::from_ref(&ds.id),
    )
    .expect("separable baseline trains")
}
