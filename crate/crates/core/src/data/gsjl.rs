//! GSJL: one JSON object per line.
//!
//! ```text
//! {"class":"<label>","pair":["<orig1>","<orig2>"],"sample_id":"<id>","valid":[72 booleans],"frames":[[63 numbers] x 72]}
//! ```
//!
//! Writers emit the fields in exactly that order with shortest round-trip
//! float rendering. Readers accept any field order and skip blank lines and
//! lines starting with `#`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::ser::{Serialize, SerializeSeq, Serializer};
use serde::Deserialize;

use super::gesture::{GestureDataset, GestureSequence, LandmarkFrame, COORDS, SEQ_LEN};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    class: String,
    pair: (String, String),
    sample_id: String,
    valid: Vec<bool>,
    frames: Vec<Vec<f32>>,
}

#[derive(serde::Serialize)]
struct RecordOut<'a> {
    class: &'a str,
    pair: [&'a str; 2],
    sample_id: &'a str,
    valid: Vec<bool>,
    frames: FramesOut<'a>,
}

struct FramesOut<'a>(&'a [LandmarkFrame]);

impl Serialize for FramesOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for f in self.0 {
            seq.serialize_element(&f.coords()[..])?;
        }
        seq.end()
    }
}

fn to_sequence(rec: RecordIn) -> std::result::Result<GestureSequence, String> {
    if rec.frames.len() != SEQ_LEN {
        return Err(format!("expected {SEQ_LEN} frames, got {}", rec.frames.len()));
    }
    if rec.valid.len() != SEQ_LEN {
        return Err(format!(
            "expected {SEQ_LEN} validity flags, got {}",
            rec.valid.len()
        ));
    }
    let mut frames = Vec::with_capacity(SEQ_LEN);
    for (i, (coords, valid)) in rec.frames.into_iter().zip(rec.valid).enumerate() {
        let mut arr: [f32; COORDS] = coords
            .try_into()
            .map_err(|c: Vec<f32>| format!("frame {i}: expected {COORDS} values, got {}", c.len()))?;
        if valid {
            // z is wrist-relative depth; clamp pathological values.
            for z in arr.iter_mut().skip(2).step_by(3) {
                *z = z.clamp(-1.0, 1.0);
            }
            frames.push(LandmarkFrame::detected(arr));
        } else {
            if arr.iter().any(|&v| v != 0.0) {
                return Err(format!("frame {i}: valid=false with nonzero coordinates"));
            }
            frames.push(LandmarkFrame::invalid());
        }
    }
    GestureSequence::new(frames, rec.class, rec.pair, rec.sample_id).map_err(|e| match e {
        Error::InvalidInput(m) => m,
        other => other.to_string(),
    })
}

/// Reads GSJL from any reader; `origin` only labels error messages.
pub fn read_gsjl<R: Read>(reader: R, origin: &Path) -> Result<GestureDataset> {
    let mut ds = GestureDataset::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let seq = to_sequence(rec).map_err(|message| Error::Schema {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        })?;
        ds.push(seq);
    }
    Ok(ds)
}

pub fn load_gsjl(path: impl AsRef<Path>) -> Result<GestureDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gsjl(file, path)
}

pub fn write_gsjl<W: Write>(dataset: &GestureDataset, mut writer: W) -> std::io::Result<()> {
    for s in dataset.samples() {
        let rec = RecordOut {
            class: &s.class_label,
            pair: [&s.original_pair.0, &s.original_pair.1],
            sample_id: &s.sample_id,
            valid: s.frames().iter().map(LandmarkFrame::is_valid).collect(),
            frames: FramesOut(s.frames()),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_gsjl(dataset: &GestureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_gsjl(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn parse(text: &str) -> Result<GestureDataset> {
        read_gsjl(text.as_bytes(), Path::new("mem"))
    }

    fn line_with(valid: &[bool], frames: &[Vec<f32>]) -> String {
        serde_json::json!({
            "class": "c", "pair": ["a", "b"], "sample_id": "s",
            "valid": valid, "frames": frames,
        })
        .to_string()
    }

    #[test]
    fn empty_input() {
        let ds = parse("").unwrap();
        assert_eq!((ds.len(), ds.num_classes()), (0, 0));
    }

    #[test]
    fn all_invalid_frames_rejected() {
        let line = line_with(&[false; SEQ_LEN], &vec![vec![0.0; COORDS]; SEQ_LEN]);
        match parse(&line) {
            Err(Error::Schema { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("no valid frame"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_frame_count_rejected() {
        let line = line_with(&[true; 10], &vec![vec![0.1; COORDS]; 10]);
        assert!(matches!(parse(&line), Err(Error::Schema { .. })));
    }

    #[test]
    fn invalid_frame_with_coordinates_rejected() {
        let mut valid = vec![true; SEQ_LEN];
        valid[5] = false;
        let line = line_with(&valid, &vec![vec![0.1; COORDS]; SEQ_LEN]);
        let err = parse(&line).unwrap_err();
        assert!(err.to_string().contains("nonzero"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = line_with(&[true; SEQ_LEN], &vec![vec![0.1; COORDS]; SEQ_LEN]);
        let text = format!("# provenance\n{good}\n\n{{not json\n");
        match parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn field_order_is_canonical() {
        let ds = gen_synthetic(2, 1, 0.0, 1).unwrap();
        let mut buf = Vec::new();
        write_gsjl(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        let keys = ["\"class\"", "\"pair\"", "\"sample_id\"", "\"valid\"", "\"frames\""];
        let pos: Vec<usize> = keys.iter().map(|k| first.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn reader_accepts_any_field_order() {
        let line = serde_json::json!({
            "frames": vec![vec![0.25f32; COORDS]; SEQ_LEN],
            "valid": vec![true; SEQ_LEN],
            "sample_id": "s", "pair": ["a", "b"], "class": "c",
        })
        .to_string();
        assert_eq!(parse(&line).unwrap().len(), 1);
    }

    #[test]
    fn z_clamped_on_ingest() {
        let mut frames = vec![vec![0.5f32; COORDS]; SEQ_LEN];
        frames[0][2] = 3.0;
        let ds = parse(&line_with(&[true; SEQ_LEN], &frames)).unwrap();
        assert_eq!(ds.samples()[0].frames()[0].wrist()[2], 1.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_is_identity(classes in 2usize..5, per in 1usize..4, sigma in 0.0f64..0.05, seed in 0u64..10_000) {
            let ds = gen_synthetic(classes, per, sigma, seed).unwrap();
            let mut first = Vec::new();
            write_gsjl(&ds, &mut first).unwrap();
            let back = read_gsjl(first.as_slice(), Path::new("mem")).unwrap();
            proptest::prop_assert_eq!(&back, &ds);
            let mut second = Vec::new();
            write_gsjl(&back, &mut second).unwrap();
            proptest::prop_assert_eq!(first, second);
        }
    }
}
