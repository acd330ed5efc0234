use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::assign::{assign_labels, AssignmentStrategy};
use crate::corpus::DomainCorpus;
use crate::ctc::CharSet;
use crate::error::Result;
use crate::model::{encode_with_lattice, ModelParams};
use crate::numkit::Scalar;

/// Mean kept-frame feature per character. Characters with no kept frame
/// are absent from the map.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidTable {
    pub centroids: BTreeMap<usize, (usize, Vec<f64>)>,
}

impl CentroidTable {
    pub fn get(&self, c: usize) -> Option<&[f64]> {
        self.centroids.get(&c).map(|(_, v)| v.as_slice())
    }
}

/// Frame labels come from `strategy`; transcript-based strategies use the
/// reference transcripts, hidden or not.
pub fn character_centroids<T: Scalar>(
    params: &ModelParams<T>,
    corpus: &DomainCorpus<T>,
    strategy: &AssignmentStrategy,
    cs: &CharSet,
) -> Result<CentroidTable> {
    let per_utt: Vec<Vec<(usize, Vec<f64>)>> = corpus
        .utterances
        .par_iter()
        .map(|u| {
            let (features, lattice) = encode_with_lattice(params, &u.frames)?;
            let a = assign_labels(strategy, &lattice, u.transcript.as_deref(), cs)?;
            Ok(a.kept()
                .map(|(frame, label)| (label, features.row(frame).iter().map(|v| v.as_f64()).collect()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut sums: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for (label, row) in per_utt.into_iter().flatten() {
        let e = sums.entry(label).or_insert_with(|| (0, vec![0.0; row.len()]));
        e.0 += 1;
        for (s, v) in e.1.iter_mut().zip(&row) {
            *s += v;
        }
    }
    for (n, v) in sums.values_mut() {
        for x in v.iter_mut() {
            *x /= *n as f64;
        }
    }
    Ok(CentroidTable { centroids: sums })
}

/// Euclidean source/target centroid distance per character, `None` when
/// either side lacks the character.
pub fn centroid_distances(src: &CentroidTable, tgt: &CentroidTable, cs: &CharSet) -> Vec<(usize, Option<f64>)> {
    cs.characters()
        .map(|c| {
            let d = match (src.get(c), tgt.get(c)) {
                (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
                _ => None,
            };
            (c, d)
        })
        .collect()
}

/// Mean over characters present in both distance lists.
pub fn mean_paired_distance(before: &[(usize, Option<f64>)], after: &[(usize, Option<f64>)]) -> Option<(f64, f64)> {
    let pairs: Vec<(f64, f64)> = before
        .iter()
        .zip(after)
        .filter_map(|((_, b), (_, a))| Some(((*b)?, (*a)?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    Some((
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

pub const CENTROID_HEADER: &str = "character,before,after";

/// `character,before,after` rows; absent entries are written as `absent`.
pub fn centroid_csv(before: &[(usize, Option<f64>)], after: &[(usize, Option<f64>)], cs: &CharSet) -> String {
    let fmt = |d: Option<f64>| d.map_or_else(|| "absent".to_string(), |v| format!("{v:.9}"));
    let mut out = format!("{CENTROID_HEADER}\n");
    for ((c, b), (_, a)) in before.iter().zip(after) {
        out.push_str(&format!("{},{},{}\n", cs.symbol(*c), fmt(*b), fmt(*a)));
    }
    out
}
