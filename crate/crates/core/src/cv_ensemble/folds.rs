use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fold_id: usize,
    pub valid_domain: String,
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn fold(&self, fold_id: usize) -> Result<&Fold> {
        self.folds
            .iter()
            .find(|f| f.fold_id == fold_id)
            .ok_or_else(|| Error::InvalidConfig(format!("no fold {fold_id} (plan has {})", self.folds.len())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fold plan serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_json();
        write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// One fold per domain: that domain's images validate, all others train.
///
/// Folds are numbered in lexicographic domain order; ids keep manifest order.
pub fn make_folds(manifest: &DatasetManifest) -> Result<FoldPlan> {
    manifest.validate()?;
    let domains = manifest.domains();
    if domains.len() < 2 {
        return Err(Error::SingleDomain(domains.len()));
    }
    let folds = domains
        .into_iter()
        .enumerate()
        .map(|(fold_id, domain)| {
            let (valid, train): (Vec<_>, Vec<_>) = manifest.entries.iter().partition(|e| e.domain == domain);
            Fold {
                fold_id,
                valid_domain: domain.to_string(),
                train_ids: train.into_iter().map(|e| e.image_id.clone()).collect(),
                valid_ids: valid.into_iter().map(|e| e.image_id.clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv_ensemble::ManifestEntry;

    fn manifest(domains: &[(&str, usize)]) -> DatasetManifest {
        let entries = domains
            .iter()
            .flat_map(|&(d, n)| {
                (0..n).map(move |i| ManifestEntry {
                    image_id: format!("{d}-{i:02}"),
                    image_path: format!("{d}-{i}.png").into(),
                    mask_path: format!("{d}-{i}-mask.png").into(),
                    domain: d.to_string(),
                })
            })
            .collect();
        DatasetManifest::new("t", entries)
    }

    #[test]
    fn three_organs_of_sixty() {
        let plan = make_folds(&manifest(&[("stomach", 60), ("pancreas", 60), ("colorectum", 60)])).unwrap();
        assert_eq!(plan.folds.len(), 3);
        let names: Vec<_> = plan.folds.iter().map(|f| f.valid_domain.as_str()).collect();
        assert_eq!(names, ["colorectum", "pancreas", "stomach"]);
        for f in &plan.folds {
            assert_eq!(f.valid_ids.len(), 60);
            assert_eq!(f.train_ids.len(), 120);
        }
    }

    #[test]
    fn two_domains_swap() {
        let plan = make_folds(&manifest(&[("B", 1), ("A", 1)])).unwrap();
        assert_eq!(plan.folds[0].valid_ids, ["A-00"]);
        assert_eq!(plan.folds[0].train_ids, ["B-00"]);
        assert_eq!(plan.folds[1].valid_ids, ["B-00"]);
        assert_eq!(plan.folds[1].train_ids, ["A-00"]);
    }

    #[test]
    fn single_domain_rejected() {
        assert!(matches!(make_folds(&manifest(&[("A", 5)])), Err(Error::SingleDomain(1))));
    }

    #[test]
    fn json_round_trip() {
        let plan = make_folds(&manifest(&[("x", 2), ("y", 3)])).unwrap();
        let back: FoldPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
        assert!(plan.fold(1).is_ok());
        assert!(plan.fold(2).is_err());
    }
}
