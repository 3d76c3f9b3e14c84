//! Class concatenation with jump adjustment.

use rand::seq::index;

use super::gesture::{GestureDataset, GestureSequence, LandmarkFrame, COORDS, SEQ_LEN};
use crate::error::{Error, Result};
use crate::rng;

/// Where an output frame of [`concat_traced`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSource {
    /// Frame index in the first sequence.
    A(usize),
    /// Frame index in the second sequence (translated by the offset).
    B(usize),
    Padding,
}

#[derive(Debug, Clone)]
pub struct ConcatOutput {
    pub sequence: GestureSequence,
    /// Translation added to every landmark of the second gesture.
    pub offset: [f64; 3],
    pub sources: Vec<FrameSource>,
}

/// Indices `round(i·(len-1)/(keep-1))`, which always retain both endpoints.
fn uniform_indices(len: usize, keep: usize) -> Vec<usize> {
    debug_assert!(keep >= 1 && keep <= len);
    if keep == 1 {
        return vec![len - 1];
    }
    let (n, d) = (len - 1, keep - 1);
    (0..keep).map(|i| (2 * i * n + d) / (2 * d)).collect()
}

/// Appends `b` to `a` so the wrist continues where `a` stopped.
///
/// `a` contributes its frames up to its last valid frame, `b` its span from
/// first to last valid frame, rigidly translated by
/// `wrist(last valid of a) - wrist(first valid of b)`. Short results are
/// padded with invalid frames; long ones are shortened by first dropping
/// `a`'s leading empty frames and then uniformly subsampling the longer part
/// (both parts to 36 frames when each is longer than that).
pub fn concat_traced(a: &GestureSequence, b: &GestureSequence) -> Result<ConcatOutput> {
    for s in [a, b] {
        if s.valid_count() == 0 {
            return Err(Error::InvalidInput(format!(
                "sequence {} has no valid frame",
                s.sample_id
            )));
        }
    }
    let (fa, la) = (a.first_valid(), a.last_valid());
    let (fb, lb) = (b.first_valid(), b.last_valid());
    let wa = a.frames()[la].wrist();
    let wb = b.frames()[fb].wrist();
    let offset = [0, 1, 2].map(|k| f64::from(wa[k]) - f64::from(wb[k]));

    let len_b = lb - fb + 1;
    let (a_idx, b_idx): (Vec<usize>, Vec<usize>) = if la + 1 + len_b <= SEQ_LEN {
        ((0..=la).collect(), (fb..=lb).collect())
    } else if la - fa + 1 + len_b <= SEQ_LEN {
        ((fa..=la).collect(), (fb..=lb).collect())
    } else {
        let len_a = la - fa + 1;
        let half = SEQ_LEN / 2;
        let (keep_a, keep_b) = if len_a.min(len_b) > half {
            (half, half)
        } else if len_a >= len_b {
            (SEQ_LEN - len_b, len_b)
        } else {
            (len_a, SEQ_LEN - len_a)
        };
        (
            uniform_indices(len_a, keep_a).into_iter().map(|i| fa + i).collect(),
            uniform_indices(len_b, keep_b).into_iter().map(|i| fb + i).collect(),
        )
    };

    let mut frames = Vec::with_capacity(SEQ_LEN);
    let mut sources = Vec::with_capacity(SEQ_LEN);
    for &i in &a_idx {
        frames.push(a.frames()[i].clone());
        sources.push(FrameSource::A(i));
    }
    for &i in &b_idx {
        let src = &b.frames()[i];
        if src.is_valid() {
            let mut coords = [0.0f32; COORDS];
            for (k, (out, &v)) in coords.iter_mut().zip(src.coords()).enumerate() {
                *out = (f64::from(v) + offset[k % 3]) as f32;
            }
            frames.push(LandmarkFrame::detected(coords));
        } else {
            frames.push(LandmarkFrame::invalid());
        }
        sources.push(FrameSource::B(i));
    }
    while frames.len() < SEQ_LEN {
        frames.push(LandmarkFrame::invalid());
        sources.push(FrameSource::Padding);
    }

    let sequence = GestureSequence::new(
        frames,
        format!("{}+{}", a.class_label, b.class_label),
        (a.class_label.clone(), b.class_label.clone()),
        format!("{}+{}", a.sample_id, b.sample_id),
    )?;
    Ok(ConcatOutput {
        sequence,
        offset,
        sources,
    })
}

pub fn concat_gestures(a: &GestureSequence, b: &GestureSequence) -> Result<GestureSequence> {
    concat_traced(a, b).map(|o| o.sequence)
}

/// Builds combined classes from ordered pairs of distinct base classes.
///
/// With `pairs = None` every ordered pair is used; otherwise a seeded subset
/// of that size, emitted in canonical pair order. Each combined class gets
/// `samples_per_class` sequences built from distinct source samples of both
/// classes.
pub fn build_combined_dataset(
    base: &GestureDataset,
    samples_per_class: usize,
    pairs: Option<usize>,
    seed: u64,
) -> Result<GestureDataset> {
    let classes: Vec<&str> = base.classes().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 base classes, got {}",
            classes.len()
        )));
    }
    if samples_per_class == 0 {
        return Err(Error::InvalidInput("samples_per_class must be positive".into()));
    }
    let all: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|i| (0..classes.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<usize> = match pairs {
        None => (0..all.len()).collect(),
        Some(n) if n == 0 || n > all.len() => {
            return Err(Error::InvalidInput(format!(
                "requested {n} pairs, {} ordered pairs available",
                all.len()
            )))
        }
        Some(n) => {
            let mut pick = index::sample(&mut rng::stream(seed, &[u64::MAX]), all.len(), n).into_vec();
            pick.sort_unstable();
            pick
        }
    };

    for &p in &chosen {
        let (i, j) = all[p];
        for c in [classes[i], classes[j]] {
            let have = base.class_samples(c).len();
            if have < samples_per_class {
                return Err(Error::Capacity(format!(
                    "class {c:?} has {have} samples, {samples_per_class} required"
                )));
            }
        }
    }

    let mut out = GestureDataset::default();
    for &p in &chosen {
        let (i, j) = all[p];
        let (ca, cb) = (base.class_samples(classes[i]), base.class_samples(classes[j]));
        let mut r = rng::stream(seed, &[p as u64]);
        let ia = index::sample(&mut r, ca.len(), samples_per_class);
        let ib = index::sample(&mut r, cb.len(), samples_per_class);
        for (x, y) in ia.iter().zip(ib.iter()) {
            let a = &base.samples()[ca[x]];
            let b = &base.samples()[cb[y]];
            out.push(concat_gestures(a, b)?);
        }
    }
    Ok(out)
}
