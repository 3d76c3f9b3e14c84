//! Supervised LSTM classifier used as the data-efficiency baseline, and the
//! sample-savings calculation built on it.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::{AdamConfig, AdamState};
use crate::data::{GestureDataset, GestureSequence, COORDS};
use crate::dense::{dense_backward, dense_forward, dense_forward_trace, Activation, DenseParams};
use crate::error::{Error, Result};
use crate::lstm::{lstm_backward, lstm_forward, lstm_forward_trace, LstmParams};
use crate::params::Parameters;
use crate::rng;
use crate::tensor::{Scalar, Tensor};
use crate::train::EvalReport;

pub const SML_LSTM_HIDDEN: usize = 64;
pub const SML_DENSE_HIDDEN: usize = 256;

/// Training-set sizes per class tried by [`sweep_sml`].
pub const SWEEP_SIZES: [usize; 10] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512];

const INIT_STREAM: u64 = 0x5A1;
const EPOCH_STREAM: u64 = 0xE90C;
const LOG_FLOOR: f64 = 1e-12;

/// LSTM → dense ReLU → dense softmax over `n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmlParams<F = f32> {
    pub lstm: LstmParams<F>,
    pub hidden: DenseParams<F>,
    pub output: DenseParams<F>,
}

impl<F: Scalar> SmlParams<F> {
    pub fn zeros(lstm_hidden: usize, dense_hidden: usize, n_classes: usize) -> Self {
        SmlParams {
            lstm: LstmParams::zeros(COORDS, lstm_hidden),
            hidden: DenseParams::zeros(lstm_hidden, dense_hidden, Activation::Relu),
            output: DenseParams::zeros(dense_hidden, n_classes, Activation::Softmax),
        }
    }

    pub fn init<R: Rng + ?Sized>(lstm_hidden: usize, dense_hidden: usize, n_classes: usize, rng: &mut R) -> Self {
        SmlParams {
            lstm: LstmParams::init(COORDS, lstm_hidden, rng),
            hidden: DenseParams::init(lstm_hidden, dense_hidden, Activation::Relu, rng),
            output: DenseParams::init(dense_hidden, n_classes, Activation::Softmax, rng),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.output.out_size()
    }

    pub fn zeros_like(&self) -> Self {
        SmlParams {
            lstm: self.lstm.zeros_like(),
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn cast<G: Scalar>(&self) -> SmlParams<G> {
        SmlParams {
            lstm: self.lstm.cast(),
            hidden: self.hidden.cast(),
            output: self.output.cast(),
        }
    }
}

impl<F: Scalar> Parameters<F> for SmlParams<F> {
    fn tensors(&self) -> Vec<&Tensor<F>> {
        vec![
            &self.lstm.w,
            &self.lstm.u,
            &self.lstm.b,
            &self.hidden.w,
            &self.hidden.b,
            &self.output.w,
            &self.output.b,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![
            &mut self.lstm.w,
            &mut self.lstm.u,
            &mut self.lstm.b,
            &mut self.hidden.w,
            &mut self.hidden.b,
            &mut self.output.w,
            &mut self.output.b,
        ]
    }
}

/// Parameter count of the default-sized classifier.
pub fn sml_param_count(n_classes: usize) -> usize {
    let h = SML_LSTM_HIDDEN;
    4 * h * (COORDS + h + 1) + h * SML_DENSE_HIDDEN + SML_DENSE_HIDDEN + SML_DENSE_HIDDEN * n_classes + n_classes
}

/// Class probabilities for one sequence.
pub fn sml_forward<F: Scalar>(seq: &GestureSequence, p: &SmlParams<F>) -> Result<Vec<F>> {
    let h = lstm_forward(&seq.to_input::<F>(), &p.lstm)?;
    dense_forward(&dense_forward(&h, &p.hidden)?, &p.output)
}

pub fn sml_predict<F: Scalar>(seq: &GestureSequence, p: &SmlParams<F>) -> Result<usize> {
    let probs = sml_forward(seq, p)?;
    Ok(probs
        .iter()
        .enumerate()
        .fold((0, F::neg_infinity()), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
        .0)
}

fn sample_gradients<F: Scalar>(
    seq: &GestureSequence,
    label: usize,
    p: &SmlParams<F>,
    weight: F,
) -> Result<(F, SmlParams<F>)> {
    let input = seq.to_input::<F>();
    let lt = lstm_forward_trace(&input, &p.lstm)?;
    let ht = dense_forward_trace(lt.last_hidden(), &p.hidden)?;
    let ot = dense_forward_trace(&ht.output, &p.output)?;
    let floor = F::lit(LOG_FLOOR);
    let pl = ot.output[label];
    let loss = -pl.max(floor).ln() * weight;

    let mut grads = p.zeros_like();
    let mut dprobs = vec![F::zero(); p.n_classes()];
    if pl > floor {
        dprobs[label] = -weight / pl;
    }
    let dh2 = dense_backward(&ot, &p.output, &dprobs, &mut grads.output);
    let dh1 = dense_backward(&ht, &p.hidden, &dh2, &mut grads.hidden);
    let hs = p.lstm.hidden_size();
    let mut dh = vec![F::zero(); lt.steps() * hs];
    dh[(lt.steps() - 1) * hs..].copy_from_slice(&dh1);
    lstm_backward(&input, &lt, &p.lstm, &dh, &mut grads.lstm, None);
    Ok((loss, grads))
}

/// Mean cross-entropy over a batch.
pub fn sml_batch_loss<F: Scalar>(batch: &[(&GestureSequence, usize)], p: &SmlParams<F>) -> Result<F> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let floor = F::lit(LOG_FLOOR);
    let mut total = F::zero();
    for &(s, l) in batch {
        let probs = sml_forward(s, p)?;
        let pl = probs
            .get(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} out of range")))?;
        total += -pl.max(floor).ln();
    }
    Ok(total / F::from_usize(batch.len()).expect("small count"))
}

/// Mean cross-entropy over a batch and its gradient.
pub fn sml_batch_gradients<F: Scalar>(
    batch: &[(&GestureSequence, usize)],
    p: &SmlParams<F>,
) -> Result<(F, SmlParams<F>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&(_, l)) = batch.iter().find(|(_, l)| *l >= p.n_classes()) {
        return Err(Error::InvalidInput(format!("label {l} out of range")));
    }
    let weight = F::one() / F::from_usize(batch.len()).expect("small count");
    let parts: Vec<(F, SmlParams<F>)> = batch
        .par_iter()
        .map(|&(s, l)| sample_gradients(s, l, p, weight))
        .collect::<Result<_>>()?;
    let mut loss = F::zero();
    let mut grads = p.zeros_like();
    for (l, g) in &parts {
        loss += *l;
        grads.accumulate(g);
    }
    Ok((loss, grads))
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_test_per_class() -> usize {
    50
}
fn default_clip() -> f32 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmlConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Upper bound; the effective batch is `min(batch_size, training set)`.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Held-out samples per class, disjoint from every training pool.
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_clip")]
    pub clip_norm: f32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SmlConfig {
    fn default() -> Self {
        SmlConfig {
            epochs: default_epochs(),
            batch_size: default_batch(),
            adam: AdamConfig::default(),
            test_per_class: default_test_per_class(),
            clip_norm: default_clip(),
            seed: 0,
        }
    }
}

impl SmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidInput(
                "epochs, batch_size and test_per_class must be positive".into(),
            ));
        }
        if !(self.adam.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidInput("learning rate and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SmlRun {
    pub samples_per_class: usize,
    pub best_epoch: usize,
    pub best_train_loss: f64,
    pub test_accuracy: f64,
    pub params: SmlParams,
}

fn name_key(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Per-class sample order: the first `test_per_class` entries are the test
/// pool, training pools are prefixes of the rest. Depends only on the seed
/// and the class name, so pools are nested across training-set sizes.
fn class_order(ds: &GestureDataset, class: &str, seed: u64) -> Vec<usize> {
    let mut idx = ds.class_samples(class).to_vec();
    idx.shuffle(&mut rng::stream(seed, &[name_key(class)]));
    idx
}

/// Trains the classifier on `samples_per_class` samples of each class in
/// `classes` and scores the checkpoint with the lowest epoch-mean training
/// loss on the held-out pool.
pub fn train_sml(
    ds: &GestureDataset,
    classes: &[String],
    samples_per_class: usize,
    config: &SmlConfig,
) -> Result<SmlRun> {
    config.validate()?;
    if classes.len() < 2 || samples_per_class == 0 {
        return Err(Error::InvalidInput(
            "need at least two classes and one sample per class".into(),
        ));
    }
    let need = config.test_per_class + samples_per_class;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, c) in classes.iter().enumerate() {
        let order = class_order(ds, c, config.seed);
        if order.len() < need {
            return Err(Error::Capacity(format!(
                "class {c:?} has {} samples, {need} needed",
                order.len()
            )));
        }
        test.extend(order[..config.test_per_class].iter().map(|&i| (i, label)));
        train.extend(order[config.test_per_class..need].iter().map(|&i| (i, label)));
    }

    let mut params = SmlParams::<f32>::init(
        SML_LSTM_HIDDEN,
        SML_DENSE_HIDDEN,
        classes.len(),
        &mut rng::stream(config.seed, &[INIT_STREAM]),
    );
    let mut adam = AdamState::new(config.adam);
    let batch = config.batch_size.min(train.len());
    let mut best: Option<(usize, f64, SmlParams)> = None;
    let samples = ds.samples();

    for epoch in 0..config.epochs {
        train.shuffle(&mut rng::stream(
            config.seed,
            &[EPOCH_STREAM, samples_per_class as u64, epoch as u64],
        ));
        let mut total = 0.0;
        for chunk in train.chunks(batch) {
            let items: Vec<(&GestureSequence, usize)> = chunk.iter().map(|&(i, l)| (&samples[i], l)).collect();
            let (loss, mut grads) = sml_batch_gradients(&items, &params)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    episode: epoch,
                    reason: format!("loss {loss}"),
                });
            }
            let norm = grads.global_norm();
            if norm > config.clip_norm {
                grads.scale_all(config.clip_norm / norm);
            }
            adam.update(&mut params, &grads)?;
            total += f64::from(loss) * chunk.len() as f64;
        }
        let mean = total / train.len() as f64;
        if best.as_ref().is_none_or(|(_, b, _)| mean < *b) {
            best = Some((epoch, mean, params.clone()));
        }
    }
    let (best_epoch, best_train_loss, params) = best.expect("at least one epoch");

    let hits: usize = test
        .par_iter()
        .map(|&(i, l)| sml_predict(&samples[i], &params).map(|p| usize::from(p == l)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(SmlRun {
        samples_per_class,
        best_epoch,
        best_train_loss,
        test_accuracy: hits as f64 / test.len() as f64,
        params,
    })
}

/// The `n` classes whose per-class few-shot accuracy is closest to the
/// overall accuracy, ties broken by name.
pub fn select_classes(report: &EvalReport, n: usize) -> Result<Vec<String>> {
    if report.per_class_accuracy.len() < n {
        return Err(Error::Capacity(format!(
            "report covers {} classes, {n} requested",
            report.per_class_accuracy.len()
        )));
    }
    let mut ranked: Vec<(&String, f64)> = report
        .per_class_accuracy
        .iter()
        .map(|(k, &a)| (k, (a - report.accuracy).abs()))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(n).map(|(k, _)| k.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub samples_per_class: usize,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub best_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmlSweep {
    pub classes: Vec<String>,
    pub target_accuracy: f64,
    pub points: Vec<SweepPoint>,
    /// Smallest size whose accuracy strictly exceeded the target.
    pub crossing: Option<usize>,
}

/// Trains at each size in `sizes` (ascending) until the held-out accuracy
/// strictly exceeds `target_accuracy`.
pub fn sweep_sml_sizes(
    ds: &GestureDataset,
    classes: &[String],
    target_accuracy: f64,
    sizes: &[usize],
    config: &SmlConfig,
) -> Result<SmlSweep> {
    let mut out = SmlSweep {
        classes: classes.to_vec(),
        target_accuracy,
        points: Vec::new(),
        crossing: None,
    };
    for &s in sizes {
        let run = train_sml(ds, classes, s, config)?;
        out.points.push(SweepPoint {
            samples_per_class: s,
            test_accuracy: run.test_accuracy,
            best_epoch: run.best_epoch,
            best_train_loss: run.best_train_loss,
        });
        if run.test_accuracy > target_accuracy {
            out.crossing = Some(s);
            break;
        }
    }
    Ok(out)
}

pub fn sweep_sml(ds: &GestureDataset, classes: &[String], target_accuracy: f64, config: &SmlConfig) -> Result<SmlSweep> {
    sweep_sml_sizes(ds, classes, target_accuracy, &SWEEP_SIZES, config)
}

/// Extra labelled samples the supervised model needs over the few-shot
/// model across all `n_way` classes: `(s - k)·n`.
pub fn compute_savings(sml_samples: usize, k_shot: usize, n_way: usize) -> Result<usize> {
    if sml_samples < k_shot {
        return Err(Error::InvalidInput(format!(
            "supervised size {sml_samples} below k-shot {k_shot}"
        )));
    }
    Ok((sml_samples - k_shot) * n_way)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub n_way: usize,
    pub k_shot: usize,
    pub fsl_accuracy: f64,
    pub fsl_ci95_halfwidth: f64,
    pub classes: Vec<String>,
    pub sml_samples: Option<usize>,
    pub sml_accuracy: Option<f64>,
    pub savings: Option<usize>,
    pub sweep: Vec<SweepPoint>,
}

impl SavingsReport {
    pub fn new(fsl: &EvalReport, sweep: &SmlSweep) -> Result<Self> {
        let crossing = sweep
            .crossing
            .and_then(|s| sweep.points.iter().find(|p| p.samples_per_class == s));
        let savings = crossing
            .map(|p| compute_savings(p.samples_per_class, fsl.k_shot, fsl.n_way))
            .transpose()?;
        Ok(SavingsReport {
            n_way: fsl.n_way,
            k_shot: fsl.k_shot,
            fsl_accuracy: fsl.accuracy,
            fsl_ci95_halfwidth: fsl.ci95_halfwidth,
            classes: sweep.classes.clone(),
            sml_samples: crossing.map(|p| p.samples_per_class),
            sml_accuracy: crossing.map(|p| p.test_accuracy),
            savings,
            sweep: sweep.points.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use std::collections::BTreeMap;

    #[test]
    fn savings_table() {
        assert_eq!(compute_savings(64, 1, 5).unwrap(), 315);
        assert_eq!(compute_savings(64, 1, 10).unwrap(), 630);
        assert_eq!(compute_savings(128, 5, 5).unwrap(), 615);
        assert_eq!(compute_savings(1, 1, 5).unwrap(), 0);
        assert!(compute_savings(2, 5, 5).is_err());
    }

    #[test]
    fn default_parameter_count() {
        let p = SmlParams::<f32>::zeros(SML_LSTM_HIDDEN, SML_DENSE_HIDDEN, 5);
        assert_eq!(p.num_parameters(), sml_param_count(5));
        assert_eq!(sml_param_count(5), 4 * 64 * 128 + 64 * 256 + 256 + 256 * 5 + 5);
    }

    #[test]
    fn zero_model_is_uniform() {
        let ds = gen_synthetic(2, 1, 0.0, 1).unwrap();
        let p = SmlParams::<f32>::zeros(4, 8, 5);
        let probs = sml_forward(&ds.samples()[0], &p).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-6));
        let (loss, _) = sml_batch_gradients(&[(&ds.samples()[0], 3)], &p).unwrap();
        assert!((loss - 5f32.ln()).abs() < 1e-5);
        assert_eq!(sml_batch_loss(&[(&ds.samples()[0], 3)], &p).unwrap(), loss);
    }

    #[test]
    fn class_selection_closest_to_mean() {
        let report = EvalReport {
            n_way: 5,
            k_shot: 1,
            episodes: 10,
            accuracy: 0.8,
            ci95_halfwidth: 0.0,
            per_class_accuracy: BTreeMap::from([
                ("a".to_string(), 0.1),
                ("b".to_string(), 0.79),
                ("c".to_string(), 0.85),
                ("d".to_string(), 0.75),
                ("e".to_string(), 1.0),
            ]),
            mean_rmse: 0.0,
        };
        assert_eq!(select_classes(&report, 3).unwrap(), vec!["b", "c", "d"]);
        assert!(select_classes(&report, 6).is_err());
    }

    #[test]
    fn pools_are_nested_and_disjoint() {
        let ds = gen_synthetic(2, 12, 0.01, 3).unwrap();
        let c = ds.class_at(0).unwrap().0.to_string();
        let order = class_order(&ds, &c, 9);
        assert_eq!(order, class_order(&ds, &c, 9));
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 12);
    }

    #[test]
    fn small_training_run_and_capacity() {
        let ds = gen_synthetic(3, 6, 0.01, 3).unwrap();
        let classes: Vec<String> = ds.classes().map(String::from).collect();
        let cfg = SmlConfig {
            epochs: 2,
            test_per_class: 2,
            ..SmlConfig::default()
        };
        let run = train_sml(&ds, &classes, 4, &cfg).unwrap();
        assert!(run.best_epoch < 2);
        assert!((0.0..=1.0).contains(&run.test_accuracy));
        assert!(matches!(train_sml(&ds, &classes, 5, &cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn sweep_stops_at_first_crossing() {
        let ds = gen_synthetic(2, 6, 0.01, 3).unwrap();
        let classes: Vec<String> = ds.classes().map(String::from).collect();
        let cfg = SmlConfig {
            epochs: 1,
            test_per_class: 2,
            ..SmlConfig::default()
        };
        let sweep = sweep_sml_sizes(&ds, &classes, -1.0, &[1, 2, 4], &cfg).unwrap();
        assert_eq!(sweep.crossing, Some(1));
        assert_eq!(sweep.points.len(), 1);
        let never = sweep_sml_sizes(&ds, &classes, 1.0, &[1, 2], &cfg).unwrap();
        assert_eq!(never.crossing, None);
        assert_eq!(never.points.len(), 2);
        assert_eq!(never, sweep_sml_sizes(&ds, &classes, 1.0, &[1, 2], &cfg).unwrap());

        let fsl = EvalReport {
            n_way: 2,
            k_shot: 1,
            episodes: 1,
            accuracy: 0.5,
            ci95_halfwidth: 0.0,
            per_class_accuracy: BTreeMap::new(),
            mean_rmse: 0.0,
        };
        let report = SavingsReport::new(&fsl, &sweep).unwrap();
        assert_eq!(report.savings, Some(0));
        assert_eq!(SavingsReport::new(&fsl, &never).unwrap().savings, None);
    }
}
