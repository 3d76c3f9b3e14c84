//! Relation network over landmark sequences.
//!
//! An LSTM embeds every support and query sequence into its final hidden
//! state. The K support embeddings of a class are pooled, concatenated with
//! each query embedding (support first) and fed through a feed-forward
//! relation module ending in a sigmoid, giving one score in (0, 1) per
//! (query, class) pair. Training minimizes the MSE between those scores and
//! one-hot targets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GestureSequence, COORDS};
use crate::dense::{dense_backward, dense_forward, dense_forward_trace, Activation, DenseParams, DenseTrace};
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::loss::{mse_grad, mse_loss, one_hot};
use crate::lstm::{lstm_backward, lstm_forward_trace, LstmParams, LstmTrace};
use crate::params::Parameters;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Sum,
    Mean,
}

fn default_lstm_hidden() -> Vec<usize> {
    vec![64]
}

fn default_relation_hidden() -> Vec<usize> {
    vec![128, 64]
}

/// Layer sizes of a relation network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// Hidden sizes of the stacked LSTM cells, bottom first.
    #[serde(default = "default_lstm_hidden")]
    pub lstm_hidden: Vec<usize>,
    /// Hidden sizes of the ReLU relation layers; a sigmoid output of size 1
    /// always follows.
    #[serde(default = "default_relation_hidden")]
    pub relation_hidden: Vec<usize>,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            lstm_hidden: default_lstm_hidden(),
            relation_hidden: default_relation_hidden(),
            pooling: Pooling::Sum,
        }
    }
}

impl ArchConfig {
    pub fn new(lstm_hidden: Vec<usize>, relation_hidden: Vec<usize>) -> Self {
        ArchConfig {
            lstm_hidden,
            relation_hidden,
            pooling: Pooling::Sum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm_hidden.is_empty() || self.lstm_hidden.contains(&0) || self.relation_hidden.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "layer sizes must be positive and at least one LSTM is required: {self:?}"
            )));
        }
        Ok(())
    }

    /// Embedding size, the hidden size of the top LSTM.
    pub fn feature_size(&self) -> usize {
        *self.lstm_hidden.last().expect("validated")
    }

    fn lstm_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(COORDS)
            .chain(self.lstm_hidden.iter().copied())
            .zip(self.lstm_hidden.iter().copied())
    }

    fn relation_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut sizes = vec![2 * self.feature_size()];
        sizes.extend(&self.relation_hidden);
        sizes.push(1);
        sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                };
                (w[0], w[1], act)
            })
            .collect()
    }
}

/// All trainable weights. Visiting order (used by checkpoints): for each LSTM
/// bottom-up `W, U, b`; then for each relation layer `W, b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationNetParams<F = f32> {
    pub arch: ArchConfig,
    pub embedding: Vec<LstmParams<F>>,
    pub relation: Vec<DenseParams<F>>,
}

impl<F: Scalar> RelationNetParams<F> {
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        Ok(RelationNetParams {
            arch: arch.clone(),
            embedding: arch.lstm_shapes().map(|(i, h)| LstmParams::zeros(i, h)).collect(),
            relation: arch
                .relation_shapes()
                .into_iter()
                .map(|(i, o, a)| DenseParams::zeros(i, o, a))
                .collect(),
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        Ok(RelationNetParams {
            arch: arch.clone(),
            embedding: arch
                .lstm_shapes()
                .map(|(i, h)| LstmParams::init(i, h, rng))
                .collect(),
            relation: arch
                .relation_shapes()
                .into_iter()
                .map(|(i, o, a)| DenseParams::init(i, o, a, rng))
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch).expect("architecture already validated")
    }

    pub fn cast<G: Scalar>(&self) -> RelationNetParams<G> {
        RelationNetParams {
            arch: self.arch.clone(),
            embedding: self.embedding.iter().map(LstmParams::cast).collect(),
            relation: self.relation.iter().map(DenseParams::cast).collect(),
        }
    }
}

impl<F: Scalar> Parameters<F> for RelationNetParams<F> {
    fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for l in &self.embedding {
            out.extend([&l.w, &l.u, &l.b]);
        }
        for d in &self.relation {
            out.extend([&d.w, &d.b]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for l in &mut self.embedding {
            out.extend([&mut l.w, &mut l.u, &mut l.b]);
        }
        for d in &mut self.relation {
            out.extend([&mut d.w, &mut d.b]);
        }
        out
    }
}

/// Relation scores, one row per query and one column per episode class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<F = f32>(Tensor<F>);

impl<F: Scalar> ScoreMatrix<F> {
    pub fn from_tensor(t: Tensor<F>) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::InvalidInput("score matrix must be 2-D".into()));
        }
        Ok(ScoreMatrix(t))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, query: usize, class: usize) -> F {
        self.0.get(query, class)
    }

    pub fn row(&self, query: usize) -> &[F] {
        self.0.row(query)
    }

    pub fn as_tensor(&self) -> &Tensor<F> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLoss<F = f32> {
    pub mse: F,
    pub rmse: F,
}

struct EmbedTrace<F> {
    input: Vec<F>,
    layers: Vec<LstmTrace<F>>,
}

impl<F: Scalar> EmbedTrace<F> {
    fn feature(&self) -> &[F] {
        self.layers.last().expect("at least one layer").last_hidden()
    }
}

fn embed_trace<F: Scalar>(input: Vec<F>, p: &RelationNetParams<F>) -> Result<EmbedTrace<F>> {
    let mut layers: Vec<LstmTrace<F>> = Vec::with_capacity(p.embedding.len());
    for (l, lp) in p.embedding.iter().enumerate() {
        let trace = match l {
            0 => lstm_forward_trace(&input, lp)?,
            _ => lstm_forward_trace(layers[l - 1].outputs(), lp)?,
        };
        layers.push(trace);
    }
    Ok(EmbedTrace { input, layers })
}

fn embed_backward<F: Scalar>(
    trace: &EmbedTrace<F>,
    p: &RelationNetParams<F>,
    dfeat: &[F],
) -> Vec<LstmParams<F>> {
    let mut grads: Vec<LstmParams<F>> = p.embedding.iter().map(LstmParams::zeros_like).collect();
    let top = trace.layers.len() - 1;
    let steps = trace.layers[top].steps();
    let hidden = p.embedding[top].hidden_size();
    let mut dh = vec![F::zero(); steps * hidden];
    dh[(steps - 1) * hidden..].copy_from_slice(dfeat);
    for l in (0..=top).rev() {
        let input = if l == 0 {
            trace.input.as_slice()
        } else {
            trace.layers[l - 1].outputs()
        };
        if l == 0 {
            lstm_backward(input, &trace.layers[0], &p.embedding[0], &dh, &mut grads[0], None);
        } else {
            let mut dx = vec![F::zero(); input.len()];
            lstm_backward(input, &trace.layers[l], &p.embedding[l], &dh, &mut grads[l], Some(&mut dx));
            dh = dx;
        }
    }
    grads
}

/// Embeds a flattened `T × 63` input; returns the top LSTM's final state.
pub fn embed_input<F: Scalar>(input: &[F], p: &RelationNetParams<F>) -> Result<Vec<F>> {
    Ok(embed_trace(input.to_vec(), p)?.feature().to_vec())
}

/// Feature vector of one sequence; invalid frames are fed as zeros.
pub fn embed<F: Scalar>(seq: &GestureSequence, p: &RelationNetParams<F>) -> Result<Vec<F>> {
    embed_input(&seq.to_input(), p)
}

/// Summarizes the K support features of one class.
pub fn pool_support<F: Scalar>(features: &[Vec<F>], pooling: Pooling) -> Result<Vec<F>> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidInput("no support features to pool".into()))?;
    if features.len() == 1 {
        return Ok(first.clone());
    }
    if features.iter().any(|f| f.len() != first.len()) {
        return Err(Error::dim("pool_support", &[first.len()], &[features.len()]));
    }
    // Summing each coordinate in sorted order makes the result independent
    // of shot order down to the last bit.
    let mut column = Vec::with_capacity(features.len());
    let mut out: Vec<F> = (0..first.len())
        .map(|d| {
            column.clear();
            column.extend(features.iter().map(|f| f[d]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            column.iter().fold(F::zero(), |acc, &v| acc + v)
        })
        .collect();
    if pooling == Pooling::Mean {
        let k = F::from_usize(features.len()).expect("small count");
        out.iter_mut().for_each(|o| *o = *o / k);
    }
    Ok(out)
}

fn relation_input<F: Scalar>(class_feat: &[F], query_feat: &[F], p: &RelationNetParams<F>) -> Result<Vec<F>> {
    let h = p.arch.feature_size();
    if class_feat.len() != h || query_feat.len() != h {
        return Err(Error::dim("relation_score", &[h, h], &[class_feat.len(), query_feat.len()]));
    }
    Ok([class_feat, query_feat].concat())
}

/// Score in (0, 1) for one (pooled class feature, query feature) pair.
pub fn relation_score<F: Scalar>(class_feat: &[F], query_feat: &[F], p: &RelationNetParams<F>) -> Result<F> {
    let mut x = relation_input(class_feat, query_feat, p)?;
    for layer in &p.relation {
        x = dense_forward(&x, layer)?;
    }
    Ok(x[0])
}

struct EpisodeForward<F> {
    support: Vec<EmbedTrace<F>>,
    query: Vec<EmbedTrace<F>>,
    pooled: Vec<Vec<F>>,
    /// Per (query, class) pair, row-major like the score matrix.
    pairs: Vec<Vec<DenseTrace<F>>>,
    scores: ScoreMatrix<F>,
}

fn forward_internal<F: Scalar>(ep: &Episode<'_>, p: &RelationNetParams<F>) -> Result<EpisodeForward<F>> {
    let n = ep.n_way();
    let embed_all = |seqs: &[&GestureSequence]| -> Result<Vec<EmbedTrace<F>>> {
        seqs.par_iter().map(|s| embed_trace(s.to_input(), p)).collect()
    };
    let support = embed_all(&ep.support)?;
    let query = embed_all(&ep.query)?;
    let pooled = (0..n)
        .map(|j| {
            let feats: Vec<Vec<F>> = support[j * ep.k_shot..(j + 1) * ep.k_shot]
                .iter()
                .map(|t| t.feature().to_vec())
                .collect();
            pool_support(&feats, p.arch.pooling)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::with_capacity(query.len() * n);
    let mut scores = Vec::with_capacity(query.len() * n);
    for q in &query {
        for class_feat in &pooled {
            let mut x = relation_input(class_feat, q.feature(), p)?;
            let mut traces = Vec::with_capacity(p.relation.len());
            for layer in &p.relation {
                let t = dense_forward_trace(&x, layer)?;
                x = t.output.clone();
                traces.push(t);
            }
            scores.push(x[0]);
            pairs.push(traces);
        }
    }
    let scores = ScoreMatrix(Tensor::from_vec(&[query.len(), n], scores)?);
    Ok(EpisodeForward {
        support,
        query,
        pooled,
        pairs,
        scores,
    })
}

/// Scores every query against every class of the episode.
pub fn forward_episode<F: Scalar>(ep: &Episode<'_>, p: &RelationNetParams<F>) -> Result<ScoreMatrix<F>> {
    Ok(forward_internal(ep, p)?.scores)
}

/// MSE between scores and one-hot query labels, with its square root.
pub fn episode_loss<F: Scalar>(scores: &ScoreMatrix<F>, query_labels: &[usize]) -> Result<EpisodeLoss<F>> {
    if query_labels.len() != scores.rows() {
        return Err(Error::dim("episode_loss", scores.as_tensor().shape(), &[query_labels.len()]));
    }
    let targets = one_hot(query_labels, scores.cols())?;
    let mse = mse_loss(scores.as_tensor(), &targets)?;
    Ok(EpisodeLoss { mse, rmse: mse.sqrt() })
}

/// Argmax per row; ties go to the lowest index.
pub fn predict<F: Scalar>(scores: &ScoreMatrix<F>) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            scores
                .row(r)
                .iter()
                .enumerate()
                .fold((0, F::neg_infinity()), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

/// Forward and backward pass over one episode.
pub fn episode_gradients<F: Scalar>(
    ep: &Episode<'_>,
    p: &RelationNetParams<F>,
) -> Result<(EpisodeLoss<F>, ScoreMatrix<F>, RelationNetParams<F>)> {
    let fwd = forward_internal(ep, p)?;
    let loss = episode_loss(&fwd.scores, &ep.query_labels)?;
    let targets = one_hot(&ep.query_labels, ep.n_way())?;
    let dscores = mse_grad(fwd.scores.as_tensor(), &targets)?;

    let n = ep.n_way();
    let h = p.arch.feature_size();
    let mut grads = p.zeros_like();
    let mut dpooled = vec![vec![F::zero(); h]; n];
    let mut dquery = vec![vec![F::zero(); h]; fwd.query.len()];
    for (idx, traces) in fwd.pairs.iter().enumerate() {
        let (qi, cj) = (idx / n, idx % n);
        let mut dy = vec![dscores.data()[idx]];
        for (l, t) in traces.iter().enumerate().rev() {
            dy = dense_backward(t, &p.relation[l], &dy, &mut grads.relation[l]);
        }
        dpooled[cj].iter_mut().zip(&dy[..h]).for_each(|(a, &b)| *a += b);
        dquery[qi].iter_mut().zip(&dy[h..]).for_each(|(a, &b)| *a += b);
    }
    if p.arch.pooling == Pooling::Mean && ep.k_shot > 1 {
        let k = F::from_usize(ep.k_shot).expect("small count");
        dpooled.iter_mut().flatten().for_each(|v| *v = *v / k);
    }
    debug_assert_eq!(fwd.pooled.len(), n);

    let jobs: Vec<(&EmbedTrace<F>, &[F])> = fwd
        .support
        .iter()
        .enumerate()
        .map(|(i, t)| (t, dpooled[i / ep.k_shot].as_slice()))
        .chain(fwd.query.iter().zip(dquery.iter().map(Vec::as_slice)))
        .collect();
    let per_seq: Vec<Vec<LstmParams<F>>> = jobs
        .par_iter()
        .map(|(t, d)| embed_backward(t, p, d))
        .collect();
    for seq_grads in &per_seq {
        for (acc, g) in grads.embedding.iter_mut().zip(seq_grads) {
            acc.w.add_assign(&g.w)?;
            acc.u.add_assign(&g.u)?;
            acc.b.add_assign(&g.b)?;
        }
    }
    Ok((loss, fwd.scores, grads))
}
