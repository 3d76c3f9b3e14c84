//! Episodic meta-training, evaluation and configuration sweeps.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::data::GestureDataset;
use crate::episode::{sample_episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::relation::{episode_gradients, episode_loss, forward_episode, predict, ArchConfig, RelationNetParams};
use crate::rng;

const INIT_STREAM: u64 = 0x1417;
const VAL_STREAM: u64 = 0x7A1;

fn default_episodes() -> usize {
    20_000
}
fn default_eval_every() -> usize {
    500
}
fn default_eval_episodes() -> usize {
    200
}
fn default_clip() -> f32 {
    5.0
}
fn default_spec() -> EpisodeSpec {
    EpisodeSpec::new(5, 1, 5, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Training episodes; `spec.seed` seeds the episode stream.
    #[serde(default = "default_spec")]
    pub spec: EpisodeSpec,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Validation episodes per evaluation (one query per class).
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Global gradient-norm clip.
    #[serde(default = "default_clip")]
    pub clip_norm: f32,
    /// Seeds parameter initialization and the validation episode stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            spec: default_spec(),
            episodes: default_episodes(),
            adam: AdamConfig::default(),
            eval_every: default_eval_every(),
            eval_episodes: default_eval_episodes(),
            clip_norm: default_clip(),
            seed: 0,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.arch.validate()?;
        if self.episodes == 0 {
            return Err(Error::InvalidInput("episodes must be at least 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::InvalidInput("eval_every and eval_episodes must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidInput("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// Episode spec used for validation during training.
    pub fn validation_spec(&self) -> EpisodeSpec {
        EpisodeSpec::new(
            self.spec.n_way,
            self.spec.k_shot,
            1,
            rng::derive_seed(self.seed, &[VAL_STREAM]),
        )
    }
}

/// Accuracy over many evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub n_way: usize,
    pub k_shot: usize,
    pub episodes: usize,
    pub accuracy: f64,
    /// `1.96·sqrt(p(1-p)/episodes)`.
    pub ci95_halfwidth: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub mean_rmse: f64,
}

#[derive(Default)]
struct EpisodeTally {
    correct: usize,
    total: usize,
    rmse: f64,
    per_class: Vec<(usize, bool)>,
}

/// Evaluates `n_episodes` episodes `0..n_episodes` of the stream given by
/// `spec`. Episodes run in parallel; results are reduced in index order.
pub fn evaluate(
    params: &RelationNetParams,
    test_set: &GestureDataset,
    spec: &EpisodeSpec,
    n_episodes: usize,
) -> Result<EvalReport> {
    spec.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidInput("n_episodes must be positive".into()));
    }
    let class_names: Vec<&str> = test_set.classes().collect();
    let tallies: Vec<(Vec<String>, EpisodeTally)> = (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let ep = sample_episode(test_set, spec, i)?;
            let scores = forward_episode(&ep, params)?;
            let loss = episode_loss(&scores, &ep.query_labels)?;
            let preds = predict(&scores);
            let mut t = EpisodeTally {
                total: preds.len(),
                rmse: f64::from(loss.rmse),
                ..EpisodeTally::default()
            };
            for (&p, &l) in preds.iter().zip(&ep.query_labels) {
                t.correct += usize::from(p == l);
                t.per_class.push((l, p == l));
            }
            Ok((ep.class_order, t))
        })
        .collect::<Result<_>>()?;

    let mut correct = 0;
    let mut total = 0;
    let mut rmse = 0.0;
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (order, t) in &tallies {
        correct += t.correct;
        total += t.total;
        rmse += t.rmse;
        for &(label, ok) in &t.per_class {
            let e = per_class.entry(order[label].clone()).or_default();
            e.0 += usize::from(ok);
            e.1 += 1;
        }
    }
    debug_assert!(per_class.keys().all(|k| class_names.contains(&k.as_str())));
    let accuracy = correct as f64 / total as f64;
    Ok(EvalReport {
        n_way: spec.n_way,
        k_shot: spec.k_shot,
        episodes: n_episodes,
        accuracy,
        ci95_halfwidth: 1.96 * (accuracy * (1.0 - accuracy) / n_episodes as f64).sqrt(),
        per_class_accuracy: per_class
            .into_iter()
            .map(|(k, (c, n))| (k, c as f64 / n as f64))
            .collect(),
        mean_rmse: rmse / n_episodes as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub episode: usize,
    pub loss_mse: f64,
    pub loss_rmse: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy seen.
    pub params: RelationNetParams,
    pub best_episode: usize,
    pub best_report: EvalReport,
    /// Parameters after the last episode.
    pub final_params: RelationNetParams,
    pub final_report: EvalReport,
    pub history: Vec<HistoryRow>,
}

fn better(a: &EvalReport, b: &EvalReport) -> bool {
    a.accuracy > b.accuracy || (a.accuracy == b.accuracy && a.mean_rmse < b.mean_rmse)
}

pub fn meta_train(train_set: &GestureDataset, val_set: &GestureDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    meta_train_with_progress(train_set, val_set, config, |_| {})
}

/// Meta-training loop. `progress` sees every history row as it is appended.
pub fn meta_train_with_progress(
    train_set: &GestureDataset,
    val_set: &GestureDataset,
    config: &TrainConfig,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let val_spec = config.validation_spec();
    sample_episode(train_set, &config.spec, 0)?;
    sample_episode(val_set, &val_spec, 0)?;

    let mut params = RelationNetParams::<f32>::init(&config.arch, &mut rng::stream(config.seed, &[INIT_STREAM]))?;
    let mut adam = AdamState::new(config.adam);
    let mut history = Vec::with_capacity(config.episodes);
    let mut best: Option<(usize, EvalReport, RelationNetParams)> = None;
    let mut last_report = None;

    for e in 0..config.episodes {
        let ep = sample_episode(train_set, &config.spec, e as u64)?;
        let (loss, _, mut grads) = episode_gradients(&ep, &params)?;
        if !loss.mse.is_finite() {
            return Err(Error::Diverged {
                episode: e,
                reason: format!("loss {}", loss.mse),
            });
        }
        let norm = grads.global_norm();
        if norm > config.clip_norm {
            grads.scale_all(config.clip_norm / norm);
        }
        adam.update(&mut params, &grads).map_err(|err| match err {
            Error::Diverged { reason, .. } => Error::Diverged { episode: e, reason },
            other => other,
        })?;

        let mut row = HistoryRow {
            episode: e,
            loss_mse: f64::from(loss.mse),
            loss_rmse: f64::from(loss.rmse),
            val_accuracy: None,
        };
        if (e + 1) % config.eval_every == 0 || e + 1 == config.episodes {
            let report = evaluate(&params, val_set, &val_spec, config.eval_episodes)?;
            row.val_accuracy = Some(report.accuracy);
            if best.as_ref().is_none_or(|(_, b, _)| better(&report, b)) {
                best = Some((e, report.clone(), params.clone()));
            }
            last_report = Some(report);
        }
        progress(&row);
        history.push(row);
    }

    let (best_episode, best_report, best_params) = best.expect("final episode is always evaluated");
    Ok(TrainOutcome {
        params: best_params,
        best_episode,
        best_report,
        final_params: params,
        final_report: last_report.expect("final episode is always evaluated"),
        history,
    })
}

pub fn write_history_csv(history: &[HistoryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history(history, file)
}

pub fn write_history<W: std::io::Write>(history: &[HistoryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    /// Position of the configuration in the input list.
    pub index: usize,
    pub config: TrainConfig,
    pub val_report: EvalReport,
    pub param_count: usize,
    pub params: RelationNetParams,
}

/// Trains every configuration and ranks them by validation RMSE, ties going
/// to the smaller model.
pub fn sweep(configs: &[TrainConfig], train_set: &GestureDataset, val_set: &GestureDataset) -> Result<Vec<SweepEntry>> {
    if configs.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one configuration".into()));
    }
    let mut entries = configs
        .iter()
        .enumerate()
        .map(|(index, cfg)| {
            let out = meta_train(train_set, val_set, cfg)?;
            Ok(SweepEntry {
                index,
                config: cfg.clone(),
                param_count: out.params.num_parameters(),
                val_report: out.best_report,
                params: out.params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_sweep(&mut entries);
    Ok(entries)
}

pub(crate) fn rank_sweep(entries: &mut [SweepEntry]) {
    entries.sort_by(|a, b| {
        a.val_report
            .mean_rmse
            .total_cmp(&b.val_report.mean_rmse)
            .then(a.param_count.cmp(&b.param_count))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn tiny_config(episodes: usize) -> TrainConfig {
        TrainConfig {
            spec: EpisodeSpec::new(3, 1, 2, 4),
            episodes,
            eval_every: 2,
            eval_episodes: 10,
            arch: ArchConfig::new(vec![4], vec![8]),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        let ds = gen_synthetic(4, 4, 0.01, 1).unwrap();
        let err = meta_train(&ds, &ds, &tiny_config(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn history_has_one_row_per_episode() {
        let ds = gen_synthetic(4, 4, 0.01, 1).unwrap();
        let out = meta_train(&ds, &ds, &tiny_config(5)).unwrap();
        assert_eq!(out.history.len(), 5);
        let evals: Vec<usize> = out
            .history
            .iter()
            .filter(|r| r.val_accuracy.is_some())
            .map(|r| r.episode)
            .collect();
        assert_eq!(evals, vec![1, 3, 4]);
        assert!(out.best_report.accuracy >= out.final_report.accuracy);
        let mut buf = Vec::new();
        write_history(&out.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("episode,loss_mse,loss_rmse,val_accuracy\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn zero_params_hit_chance_exactly() {
        // All scores are 0.5, so every prediction is class 0: exactly one of
        // the n_way single queries per episode is right.
        let ds = gen_synthetic(8, 3, 0.01, 2).unwrap();
        let p = RelationNetParams::zeros(&ArchConfig::new(vec![4], vec![8])).unwrap();
        let r = evaluate(&p, &ds, &EpisodeSpec::new(5, 1, 1, 9), 1000).unwrap();
        assert!((0.16..=0.24).contains(&r.accuracy));
        assert_eq!(r.accuracy, 0.2);
        assert_eq!(r.episodes, 1000);
        let expect_ci = 1.96 * (0.2f64 * 0.8 / 1000.0).sqrt();
        assert!((r.ci95_halfwidth - expect_ci).abs() < 1e-12);
        assert!((r.mean_rmse - 0.5).abs() < 1e-6);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ds = gen_synthetic(6, 3, 0.01, 2).unwrap();
        let mut r = rng::stream(1, &[]);
        let p = RelationNetParams::init(&ArchConfig::new(vec![4], vec![8]), &mut r).unwrap();
        let spec = EpisodeSpec::new(3, 1, 1, 5);
        assert_eq!(evaluate(&p, &ds, &spec, 20).unwrap(), evaluate(&p, &ds, &spec, 20).unwrap());
    }

    #[test]
    fn ranking_prefers_lower_rmse_then_fewer_parameters() {
        let ds = gen_synthetic(4, 4, 0.01, 1).unwrap();
        let single = sweep(&[tiny_config(2)], &ds, &ds).unwrap();
        assert_eq!(single[0].index, 0);

        let report = |rmse: f64| EvalReport {
            n_way: 3,
            k_shot: 1,
            episodes: 1,
            accuracy: 0.5,
            ci95_halfwidth: 0.0,
            per_class_accuracy: BTreeMap::new(),
            mean_rmse: rmse,
        };
        let base = &single[0];
        let mk = |index, rmse, param_count| SweepEntry {
            index,
            val_report: report(rmse),
            param_count,
            ..base.clone()
        };
        let mut entries = vec![mk(0, 0.3, 100), mk(1, 0.3, 50), mk(2, 0.2, 500)];
        rank_sweep(&mut entries);
        assert_eq!(entries.iter().map(|e| e.index).collect::<Vec<_>>(), vec![2, 1, 0]);
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let ok: TrainConfig = serde_json::from_str(r#"{"episodes": 10}"#).unwrap();
        assert_eq!(ok.episodes, 10);
        assert_eq!(ok.arch, ArchConfig::default());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"episodez": 10}"#).is_err());
    }

    #[test]
    fn training_is_reproducible_to_the_byte() {
        let ds = gen_synthetic(4, 4, 0.01, 1).unwrap();
        let cfg = tiny_config(4);
        let run = || {
            let out = meta_train(&ds, &ds, &cfg).unwrap();
            let mut bytes = Vec::new();
            crate::checkpoint::write_checkpoint(&mut bytes, &out.params, "d", cfg.spec.seed).unwrap();
            let report = evaluate(&out.params, &ds, &EpisodeSpec::new(3, 1, 1, 8), 20).unwrap();
            (bytes, report, out.history)
        };
        let (b1, r1, h1) = run();
        let (b2, r2, h2) = run();
        assert_eq!(b1, b2);
        assert_eq!(r1, r2);
        assert_eq!(h1, h2);
    }
}
