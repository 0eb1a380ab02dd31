use serde::{Deserialize, Serialize};

use crate::corruption::OperationLabel;
use crate::data::{item_set, jaccard, ItemId};
use crate::error::{Error, Result};
use crate::model::ModifiedSequence;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub keep: f64,
    pub delete: f64,
    pub insert: f64,
}

impl Proportions {
    fn from_counts(keep: usize, delete: usize, insert: usize) -> Self {
        let total = (keep + delete + insert) as f64;
        if total == 0.0 {
            return Proportions::default();
        }
        Proportions {
            keep: keep as f64 / total,
            delete: delete as f64 / total,
            insert: insert as f64 / total,
        }
    }

    pub fn total(&self) -> f64 {
        self.keep + self.delete + self.insert
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    /// Mean item-set Jaccard between raw and modified sequences.
    pub similarity: f64,
    /// One decision per original position; an insertion run is one Insert.
    pub per_position: Proportions,
    /// Kept originals, deleted originals, inserted items.
    pub per_item: Proportions,
    pub sequences: usize,
}

pub fn privacy_report(raw: &[&[ItemId]], modified: &[ModifiedSequence]) -> Result<PrivacyReport> {
    if raw.len() != modified.len() {
        return Err(Error::Data(format!(
            "{} raw sequences but {} modified",
            raw.len(),
            modified.len()
        )));
    }
    if raw.is_empty() {
        return Err(Error::Data("no sequences to report on".into()));
    }
    let (mut keep, mut delete, mut insert) = (0, 0, 0);
    let (mut kept_items, mut inserted_items) = (0, 0);
    let mut similarity = 0.0;
    for (i, (r, m)) in raw.iter().zip(modified).enumerate() {
        if m.operations.len() != r.len() {
            return Err(Error::Data(format!(
                "sequence {i}: {} decode decisions for {} raw items",
                m.operations.len(),
                r.len()
            )));
        }
        keep += m.count(OperationLabel::Keep);
        delete += m.count(OperationLabel::Delete);
        insert += m.count(OperationLabel::Insert);
        inserted_items += m.inserted();
        kept_items += m.items.len() - m.inserted();
        similarity += jaccard(&item_set(r), &item_set(&m.items));
    }
    let deleted_items = raw.iter().map(|r| r.len()).sum::<usize>() - kept_items;
    Ok(PrivacyReport {
        similarity: similarity / raw.len() as f64,
        per_position: Proportions::from_counts(keep, delete, insert),
        per_item: Proportions::from_counts(kept_items, deleted_items, inserted_items),
        sequences: raw.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    fn kept(items: &[ItemId]) -> ModifiedSequence {
        ModifiedSequence {
            items: items.to_vec(),
            provenance: (0..items.len()).map(|s| Provenance::Kept { source: s }).collect(),
            operations: vec![OperationLabel::Keep; items.len()],
            runs: Vec::new(),
        }
    }

    #[test]
    fn all_keep_is_identity() {
        let raw: Vec<&[ItemId]> = vec![&[1, 2, 3], &[4, 4]];
        let m = vec![kept(&[1, 2, 3]), kept(&[4, 4])];
        let r = privacy_report(&raw, &m).unwrap();
        assert_eq!(r.similarity, 1.0);
        assert_eq!(
            r.per_position,
            Proportions {
                keep: 1.0,
                delete: 0.0,
                insert: 0.0
            }
        );
        assert_eq!(r.per_item, r.per_position);
    }

    #[test]
    fn swapped_item_gives_one_third() {
        let raw: Vec<&[ItemId]> = vec![&[0, 1]];
        let m = ModifiedSequence {
            items: vec![0, 2],
            provenance: vec![Provenance::Kept { source: 0 }, Provenance::Inserted { anchor: 1 }],
            operations: vec![OperationLabel::Keep, OperationLabel::Delete],
            runs: Vec::new(),
        };
        let r = privacy_report(&raw, &[m]).unwrap();
        assert!((r.similarity - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_item.keep, 1.0 / 3.0);
    }

    #[test]
    fn misaligned_inputs_fail() {
        let raw: Vec<&[ItemId]> = vec![&[1, 2]];
        assert!(privacy_report(&raw, &[]).is_err());
        assert!(privacy_report(&raw, &[kept(&[1])]).is_err());
    }
}
