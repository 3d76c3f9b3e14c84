use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Frames per sequence.
pub const SEQ_LEN: usize = 72;
/// Hand landmarks per frame; index 0 is the wrist.
pub const LANDMARKS: usize = 21;
/// Values per frame (x, y, z per landmark).
pub const COORDS: usize = LANDMARKS * 3;

/// First element of `original_pair` for generated data.
pub const SYNTHETIC_ORIGIN: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    coords: [f32; COORDS],
    valid: bool,
}

impl LandmarkFrame {
    /// A frame where no hand was detected.
    pub fn invalid() -> Self {
        LandmarkFrame {
            coords: [0.0; COORDS],
            valid: false,
        }
    }

    pub fn detected(coords: [f32; COORDS]) -> Self {
        LandmarkFrame {
            coords,
            valid: true,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    pub fn coords(&self) -> &[f32; COORDS] {
        &self.coords
    }

    pub fn landmark(&self, index: usize) -> [f32; 3] {
        let c = &self.coords[index * 3..index * 3 + 3];
        [c[0], c[1], c[2]]
    }

    pub fn wrist(&self) -> [f32; 3] {
        self.landmark(0)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if let Some(v) = self.coords.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite coordinate {v}"));
        }
        if !self.valid && self.coords.iter().any(|&v| v != 0.0) {
            return Err("invalid frame with nonzero coordinates".into());
        }
        Ok(())
    }
}

/// A fixed-length landmark sequence with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSequence {
    frames: Vec<LandmarkFrame>,
    pub class_label: String,
    /// The two source gesture names, or `("synthetic", <generator class>)`.
    pub original_pair: (String, String),
    pub sample_id: String,
}

impl GestureSequence {
    pub fn new(
        frames: Vec<LandmarkFrame>,
        class_label: impl Into<String>,
        original_pair: (String, String),
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.len() != SEQ_LEN {
            return Err(Error::InvalidInput(format!(
                "expected {SEQ_LEN} frames, got {}",
                frames.len()
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            f.check()
                .map_err(|m| Error::InvalidInput(format!("frame {i}: {m}")))?;
        }
        if !frames.iter().any(LandmarkFrame::is_valid) {
            return Err(Error::InvalidInput("no valid frame".into()));
        }
        Ok(GestureSequence {
            frames,
            class_label: class_label.into(),
            original_pair,
            sample_id: sample_id.into(),
        })
    }

    pub fn frames(&self) -> &[LandmarkFrame] {
        &self.frames
    }

    pub fn first_valid(&self) -> usize {
        self.frames.iter().position(LandmarkFrame::is_valid).unwrap_or(0)
    }

    pub fn last_valid(&self) -> usize {
        self.frames.iter().rposition(LandmarkFrame::is_valid).unwrap_or(0)
    }

    pub fn valid_count(&self) -> usize {
        self.frames.iter().filter(|f| f.valid).count()
    }

    /// Names of the original gesture classes this sequence was built from.
    pub fn originals(&self) -> Vec<&str> {
        let (a, b) = &self.original_pair;
        if a == SYNTHETIC_ORIGIN || a == b {
            vec![b.as_str()]
        } else {
            vec![a.as_str(), b.as_str()]
        }
    }

    /// Flattened `72 × 63` network input; invalid frames contribute zeros.
    pub fn to_input<F: Scalar>(&self) -> Vec<F> {
        self.frames
            .iter()
            .flat_map(|f| f.coords.iter())
            .map(|&v| F::from_f32(v).unwrap_or_else(F::zero))
            .collect()
    }
}

/// Samples grouped by class label, classes kept in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GestureDataset {
    samples: Vec<GestureSequence>,
    class_index: IndexMap<String, Vec<usize>>,
}

impl GestureDataset {
    pub fn new(samples: Vec<GestureSequence>) -> Self {
        let mut ds = GestureDataset::default();
        for s in samples {
            ds.push(s);
        }
        ds
    }

    pub fn push(&mut self, sample: GestureSequence) {
        self.class_index
            .entry(sample.class_label.clone())
            .or_default()
            .push(self.samples.len());
        self.samples.push(sample);
    }

    pub fn samples(&self) -> &[GestureSequence] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.class_index.keys().map(String::as_str)
    }

    /// Indices into [`GestureDataset::samples`] for one class.
    pub fn class_samples(&self, class: &str) -> &[usize] {
        self.class_index.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn class_at(&self, i: usize) -> Option<(&str, &[usize])> {
        self.class_index
            .get_index(i)
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Keeps only the named classes, in the order given.
    pub fn subset<S: AsRef<str>>(&self, classes: &[S]) -> Result<Self> {
        let mut out = GestureDataset::default();
        for c in classes {
            let idx = self.class_index.get(c.as_ref()).ok_or_else(|| {
                Error::InvalidInput(format!("unknown class {:?}", c.as_ref()))
            })?;
            for &i in idx {
                out.push(self.samples[i].clone());
            }
        }
        Ok(out)
    }

    /// Union of the original class names of every sample.
    pub fn original_classes(&self) -> std::collections::BTreeSet<&str> {
        self.samples.iter().flat_map(|s| s.originals()).collect()
    }
}
