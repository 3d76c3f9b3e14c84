//! Splitting combined datasets so no original gesture class is shared
//! between train, validation and test.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gesture::GestureDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Number of ORIGINAL classes assigned to each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: GestureDataset,
    pub val: GestureDataset,
    pub test: GestureDataset,
    /// Original classes per group, in train/val/test order.
    pub groups: [Vec<String>; 3],
    /// Combined classes whose originals straddle groups.
    pub dropped: Vec<String>,
}

impl DatasetSplit {
    /// True when no original class occurs in two splits.
    pub fn is_disjoint(&self) -> bool {
        let sets: Vec<BTreeSet<&str>> = [&self.train, &self.val, &self.test]
            .iter()
            .map(|d| d.original_classes())
            .collect();
        sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2])
    }
}

pub fn split_by_original_class(dataset: &GestureDataset, spec: SplitSpec) -> Result<DatasetSplit> {
    if spec.train == 0 || spec.val == 0 || spec.test == 0 {
        return Err(Error::InvalidInput(format!(
            "split counts must be at least 1, got {}/{}/{}",
            spec.train, spec.val, spec.test
        )));
    }
    // Originals per combined class, in first-appearance order.
    let mut originals: Vec<String> = Vec::new();
    let mut class_originals: Vec<(String, BTreeSet<String>)> = Vec::new();
    for (ci, class) in dataset.classes().enumerate() {
        let mut set = BTreeSet::new();
        for &i in dataset.class_samples(class) {
            for o in dataset.samples()[i].originals() {
                set.insert(o.to_string());
            }
        }
        for o in &set {
            if !originals.contains(o) {
                originals.push(o.clone());
            }
        }
        debug_assert_eq!(class_originals.len(), ci);
        class_originals.push((class.to_string(), set));
    }
    let wanted = spec.train + spec.val + spec.test;
    if wanted > originals.len() {
        return Err(Error::InfeasibleSplit(format!(
            "{wanted} original classes requested, dataset has {}",
            originals.len()
        )));
    }

    originals.shuffle(&mut rng::stream(spec.seed, &[0x5B11]));
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let bounds = [spec.train, spec.train + spec.val, wanted];
    let mut groups: [Vec<String>; 3] = Default::default();
    for (pos, o) in originals.iter().take(wanted).enumerate() {
        let g = bounds.iter().position(|&b| pos < b).expect("pos < wanted");
        group_of.insert(o, g);
        groups[g].push(o.clone());
    }

    let mut members: [Vec<&str>; 3] = Default::default();
    let mut dropped = Vec::new();
    for (class, set) in &class_originals {
        let gs: BTreeSet<Option<usize>> = set.iter().map(|o| group_of.get(o.as_str()).copied()).collect();
        match (gs.len(), gs.iter().next()) {
            (1, Some(Some(g))) => members[*g].push(class),
            _ => dropped.push(class.clone()),
        }
    }
    for (name, m) in ["train", "val", "test"].iter().zip(&members) {
        if m.is_empty() {
            return Err(Error::InfeasibleSplit(format!(
                "{name} split received no combined class"
            )));
        }
    }
    let [train, val, test] = members;
    Ok(DatasetSplit {
        train: dataset.subset(&train)?,
        val: dataset.subset(&val)?,
        test: dataset.subset(&test)?,
        groups,
        dropped,
    })
}
