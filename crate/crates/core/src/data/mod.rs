//! Gesture sequences, the GSJL file format and dataset construction.

mod augment;
mod gesture;
mod gsjl;
mod split;
mod synthetic;

pub use augment::{build_combined_dataset, concat_gestures, concat_traced, ConcatOutput, FrameSource};
pub use gesture::{
    GestureDataset, GestureSequence, LandmarkFrame, COORDS, LANDMARKS, SEQ_LEN, SYNTHETIC_ORIGIN,
};
pub use gsjl::{load_gsjl, read_gsjl, save_gsjl, write_gsjl};
pub use split::{split_by_original_class, DatasetSplit, SplitSpec};
pub use synthetic::{gen_synthetic, SyntheticGenerator, TRAJECTORY_FAMILIES};
