use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SiteResult, StudyError};
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdfGrouping {
    /// Predicted label.
    Label,
    /// Ground-truth label from the manifest.
    Truth,
    Site,
}

/// Empirical CDF: sorted scores, each with cumulative fraction `k/n`.
pub fn cdf_rows(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(k, v)| (v, (k + 1) as f64 / n))
        .collect()
}

pub fn write_cdf_csv(path: &Path, scores: &[f64]) -> Result<(), StudyError> {
    let mut out = String::from("score,cumulative_fraction\n");
    for (s, f) in cdf_rows(scores) {
        out.push_str(&format!("{s:?},{f:?}\n"));
    }
    write_atomic(path, out.as_bytes()).map_err(StudyError::io(path))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one `cdf_<group>.csv` per group into `dir` and returns the paths.
/// Label groupings always emit both `llm` and `human` files.
pub fn cdf_export(
    results: &[SiteResult],
    grouping: CdfGrouping,
    dir: &Path,
) -> Result<Vec<PathBuf>, StudyError> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    match grouping {
        CdfGrouping::Label | CdfGrouping::Truth => {
            groups.insert("llm".into(), Vec::new());
            groups.insert("human".into(), Vec::new());
        }
        CdfGrouping::Site => {}
    }
    for r in results {
        let key = match grouping {
            CdfGrouping::Label => match &r.verdict {
                Some(v) => v.label.as_str().to_owned(),
                None => continue,
            },
            CdfGrouping::Truth => match r.label.known() {
                Some(l) => l.as_str().to_owned(),
                None => continue,
            },
            CdfGrouping::Site => r.site_id.clone(),
        };
        groups.entry(key).or_default().extend(&r.scores);
    }
    let prefix = match grouping {
        CdfGrouping::Label => "label",
        CdfGrouping::Truth => "truth",
        CdfGrouping::Site => "site",
    };
    std::fs::create_dir_all(dir).map_err(StudyError::io(dir))?;
    let mut paths = Vec::new();
    for (key, scores) in groups {
        let path = dir.join(format!("cdf_{prefix}_{}.csv", file_safe(&key)));
        write_cdf_csv(&path, &scores)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_cdf() {
        assert_eq!(cdf_rows(&[0.9, 0.7]), vec![(0.7, 0.5), (0.9, 1.0)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_cdf_csv(&p, &[0.9, 0.7]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "score,cumulative_fraction\n0.7,0.5\n0.9,1.0\n"
        );
        write_cdf_csv(&p, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "score,cumulative_fraction\n"
        );
    }

    #[test]
    fn file_names() {
        assert_eq!(file_safe("a.example/x y"), "a.example_x_y");
    }
}
