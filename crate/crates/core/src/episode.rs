//! N-way K-shot episode sampling.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{GestureDataset, GestureSequence};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, q_queries: usize, seed: u64) -> Self {
        EpisodeSpec {
            n_way,
            k_shot,
            q_queries,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.q_queries < 1 {
            return Err(Error::InvalidInput(format!(
                "episode spec needs n_way >= 2, k_shot >= 1, q_queries >= 1, got {}/{}/{}",
                self.n_way, self.k_shot, self.q_queries
            )));
        }
        Ok(())
    }
}

/// One sampled task. Support and query sets are class-major: entries
/// `j*k .. (j+1)*k` of `support` belong to `class_order[j]`.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    pub class_order: Vec<String>,
    pub k_shot: usize,
    pub support: Vec<&'a GestureSequence>,
    pub query: Vec<&'a GestureSequence>,
    pub query_labels: Vec<usize>,
}

impl<'a> Episode<'a> {
    pub fn n_way(&self) -> usize {
        self.class_order.len()
    }

    pub fn support_of(&self, class: usize) -> &[&'a GestureSequence] {
        &self.support[class * self.k_shot..(class + 1) * self.k_shot]
    }

    /// Checks the structural invariants: distinct classes, exact set sizes,
    /// no sample shared between support and query.
    pub fn check(&self) -> Result<()> {
        let n = self.n_way();
        let mut classes: Vec<&str> = self.class_order.iter().map(String::as_str).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() != n {
            return Err(Error::InvalidInput("duplicate class in episode".into()));
        }
        if self.support.len() != n * self.k_shot || self.query.len() != self.query_labels.len() {
            return Err(Error::InvalidInput("episode set sizes inconsistent".into()));
        }
        if self.query_labels.iter().any(|&l| l >= n) {
            return Err(Error::InvalidInput("query label out of range".into()));
        }
        let support_ids: std::collections::HashSet<&str> =
            self.support.iter().map(|s| s.sample_id.as_str()).collect();
        if self.query.iter().any(|q| support_ids.contains(q.sample_id.as_str())) {
            return Err(Error::InvalidInput("sample in both support and query".into()));
        }
        Ok(())
    }
}

/// Samples episode `episode_index` of the stream defined by `spec.seed`.
///
/// Only classes with at least `k_shot + q_queries` samples are eligible.
pub fn sample_episode<'a>(
    dataset: &'a GestureDataset,
    spec: &EpisodeSpec,
    episode_index: u64,
) -> Result<Episode<'a>> {
    spec.validate()?;
    let per_class = spec.k_shot + spec.q_queries;
    let eligible: Vec<usize> = (0..dataset.num_classes())
        .filter(|&c| dataset.class_at(c).is_some_and(|(_, s)| s.len() >= per_class))
        .collect();
    if eligible.len() < spec.n_way {
        return Err(Error::Capacity(format!(
            "{}-way episodes need {} classes with >= {per_class} samples each; dataset has {} ({} classes total)",
            spec.n_way,
            spec.n_way,
            eligible.len(),
            dataset.num_classes()
        )));
    }
    let mut r = rng::stream(spec.seed, &[episode_index]);
    let picked = index::sample(&mut r, eligible.len(), spec.n_way);
    let mut ep = Episode {
        class_order: Vec::with_capacity(spec.n_way),
        k_shot: spec.k_shot,
        support: Vec::with_capacity(spec.n_way * spec.k_shot),
        query: Vec::with_capacity(spec.n_way * spec.q_queries),
        query_labels: Vec::with_capacity(spec.n_way * spec.q_queries),
    };
    let mut queries = Vec::with_capacity(spec.n_way);
    for (label, ci) in picked.iter().enumerate() {
        let (name, members) = dataset.class_at(eligible[ci]).expect("eligible class exists");
        ep.class_order.push(name.to_string());
        let chosen = index::sample(&mut r, members.len(), per_class);
        let mut it = chosen.iter().map(|i| &dataset.samples()[members[i]]);
        ep.support.extend(it.by_ref().take(spec.k_shot));
        queries.push((label, it.collect::<Vec<_>>()));
    }
    for (label, qs) in queries {
        ep.query_labels.extend(std::iter::repeat_n(label, qs.len()));
        ep.query.extend(qs);
    }
    Ok(ep)
}
