//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits non-zero if any check fails.

mod gradcheck;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use fsgr_core::baseline::{select_classes, sml_batch_gradients, sml_batch_loss, sweep_sml, SmlParams};
use fsgr_core::checkpoint::{load_checkpoint, save_checkpoint};
use fsgr_core::data::{concat_traced, FrameSource, SyntheticGenerator, LANDMARKS, SEQ_LEN};
use fsgr_core::relation::{episode_gradients, episode_loss, forward_episode};
use fsgr_core::train::meta_train;
use fsgr_core::{
    compute_savings, evaluate, rng, sample_episode, AdamConfig, AdamState, ArchConfig, EpisodeSpec,
    EvalReport, GestureDataset, GestureSequence, LandmarkFrame, Parameters, RelationNetParams,
    SavingsReport, SmlConfig, Tensor, TrainConfig,
};
use rand::Rng;

type Outcome = Result<String, String>;

/// The synthetic few-shot setup shared by several checks.
const CLASSES: usize = 40;
const TRAIN_CLASSES: usize = 30;
const SAMPLES: usize = 20;
const SIGMA: f64 = 0.01;
const DATA_SEED: u64 = 2024;
const QUERIES: usize = 5;

struct Setup {
    generator: SyntheticGenerator,
    train: GestureDataset,
    test: GestureDataset,
    test_classes: Vec<usize>,
}

fn setup() -> Setup {
    let generator = SyntheticGenerator::new(CLASSES, SIGMA, DATA_SEED).unwrap();
    let mut order: Vec<usize> = (0..CLASSES).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(DATA_SEED, &[1]));
    let (train_classes, test_classes) = order.split_at(TRAIN_CLASSES);
    let mut test_classes = test_classes.to_vec();
    test_classes.sort_unstable();
    Setup {
        train: generator.dataset(train_classes, 0..SAMPLES),
        test: generator.dataset(&test_classes, 0..SAMPLES),
        generator,
        test_classes,
    }
}

struct Trained {
    params: RelationNetParams,
    report: EvalReport,
}

fn eval_spec(n_way: usize, k_shot: usize) -> EpisodeSpec {
    EpisodeSpec::new(n_way, k_shot, 1, 0xE7A1)
}

fn run_config(
    setup: &Setup,
    n_way: usize,
    k_shot: usize,
    hidden: usize,
    episodes: usize,
    learning_rate: f32,
    seed: u64,
) -> Trained {
    let mut config = TrainConfig {
        spec: EpisodeSpec::new(n_way, k_shot, QUERIES, seed),
        episodes,
        eval_every: 500,
        eval_episodes: 200,
        seed,
        arch: ArchConfig::new(vec![hidden], vec![32]),
        ..TrainConfig::default()
    };
    config.adam.learning_rate = learning_rate;
    // Only the 30 seen classes are available for model selection.
    let out = meta_train(&setup.train, &setup.train, &config).unwrap();
    let report = evaluate(&out.params, &setup.test, &eval_spec(n_way, k_shot), 1000).unwrap();
    Trained {
        params: out.params,
        report,
    }
}

fn savings_reproduction() -> Outcome {
    let rows = [(64, 1, 5), (128, 2, 5), (128, 5, 5), (64, 1, 10), (128, 2, 10), (128, 5, 10)];
    let expected = [315, 630, 615, 630, 1260, 1230];
    let got: Vec<usize> = rows
        .iter()
        .map(|&(s, k, n)| compute_savings(s, k, n).unwrap())
        .collect();
    let text = format!("{got:?}");
    if got == expected {
        Ok(text)
    } else {
        Err(format!("{text} != {expected:?}"))
    }
}

fn gradient_suite() -> Outcome {
    let seeds = 50;
    let mut relation = gradcheck::Tally::default();
    let mut sml = gradcheck::Tally::default();
    for seed in 0..seeds {
        let mut r = rng::stream(seed, &[0x6AD]);
        let ds = fsgr_core::gen_synthetic(6, 4, SIGMA, seed).unwrap();

        let p = RelationNetParams::<f64>::init(&ArchConfig::new(vec![4], vec![8]), &mut r).unwrap();
        let ep = sample_episode(&ds, &EpisodeSpec::new(2, 2, 1, seed), 0).unwrap();
        let (_, _, grads) = episode_gradients(&ep, &p).unwrap();
        relation.merge(gradcheck::check(&p, &grads, |q| {
            let scores = forward_episode(&ep, q).unwrap();
            episode_loss(&scores, &ep.query_labels).unwrap().mse
        }));

        let p = SmlParams::<f64>::init(4, 8, 3, &mut r);
        let batch: Vec<(&GestureSequence, usize)> = (0..4)
            .map(|i| (&ds.samples()[r.random_range(0..ds.len())], i % 3))
            .collect();
        let (_, grads) = sml_batch_gradients(&batch, &p).unwrap();
        sml.merge(gradcheck::check(&p, &grads, |q| sml_batch_loss(&batch, q).unwrap()));
    }
    let text = format!(
        "relation net {}/{} coords ({:.4}), sml {}/{} coords ({:.4}) within {} over {seeds} seeds",
        relation.passed,
        relation.total,
        relation.fraction(),
        sml.passed,
        sml.total,
        sml.fraction(),
        gradcheck::REL_TOL
    );
    if relation.fraction() >= 0.99 && sml.fraction() >= 0.99 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn meta_learning(trained: &Trained) -> Outcome {
    let r = &trained.report;
    let text = format!(
        "5-way 1-shot accuracy on {} unseen classes: {:.4} ± {:.4} over {} episodes",
        r.per_class_accuracy.len(),
        r.accuracy,
        r.ci95_halfwidth,
        r.episodes
    );
    if r.accuracy >= 0.90 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Sequences presented to each trend model during training.
const TREND_BUDGET: usize = 180_000;

fn trend_checks(setup: &Setup) -> Outcome {
    let mut acc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 0..3 {
        for (name, n, k) in [("5w1s", 5, 1), ("5w5s", 5, 5), ("10w1s", 10, 1)] {
            let episodes = TREND_BUDGET / (n * (k + QUERIES));
            let t = run_config(setup, n, k, 16, episodes, 3e-3, 100 + seed);
            acc.entry(name).or_default().push(t.report.accuracy);
        }
    }
    let m: BTreeMap<&str, f64> = acc.iter().map(|(k, v)| (*k, median(v.clone()))).collect();
    let text = format!(
        "median acc 5w1s {:.4}, 5w5s {:.4}, 10w1s {:.4} (per seed {acc:?})",
        m["5w1s"], m["5w5s"], m["10w1s"]
    );
    if m["5w5s"] >= m["5w1s"] && m["10w1s"] <= m["5w1s"] {
        Ok(text)
    } else {
        Err(text)
    }
}

fn sml_crossing(setup: &Setup, trained: &Trained) -> Outcome {
    let classes = select_classes(&trained.report, 5).unwrap();
    let ids: Vec<usize> = setup
        .test_classes
        .iter()
        .copied()
        .filter(|&c| classes.iter().any(|n| n == setup.generator.class_label(c)))
        .collect();
    let config = SmlConfig::default();
    let pool = setup.generator.dataset(&ids, 0..config.test_per_class + 512);
    let sweep = sweep_sml(&pool, &classes, trained.report.accuracy, &config).unwrap();
    let report = SavingsReport::new(&trained.report, &sweep).unwrap();
    let curve: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("{}:{:.3}", p.samples_per_class, p.test_accuracy))
        .collect();
    match (report.sml_samples, report.savings) {
        (Some(s), Some(savings)) if savings == (s - 1) * 5 => Ok(format!(
            "crossing at {s} samples/class vs fsl {:.4}, savings {savings} [{}]",
            trained.report.accuracy,
            curve.join(" ")
        )),
        _ => Err(format!(
            "no valid crossing vs fsl {:.4} [{}]",
            trained.report.accuracy,
            curve.join(" ")
        )),
    }
}

fn episode_fingerprint(ds: &GestureDataset, spec: &EpisodeSpec, episodes: u64) -> Result<Vec<u8>, String> {
    let mut bytes = Vec::new();
    for i in 0..episodes {
        let ep = sample_episode(ds, spec, i).map_err(|e| e.to_string())?;
        let classes: HashSet<&String> = ep.class_order.iter().collect();
        if classes.len() != ep.n_way() {
            return Err(format!("episode {i}: duplicate class"));
        }
        let support: HashSet<&str> = ep.support.iter().map(|s| s.sample_id.as_str()).collect();
        if ep.query.iter().any(|q| support.contains(q.sample_id.as_str())) {
            return Err(format!("episode {i}: support/query overlap"));
        }
        for s in ep.support.iter().chain(&ep.query) {
            bytes.extend_from_slice(s.sample_id.as_bytes());
            bytes.push(b',');
        }
        bytes.extend(ep.query_labels.iter().map(|&l| l as u8));
        bytes.push(b'\n');
    }
    Ok(bytes)
}

fn sampler_suite(setup: &Setup) -> Outcome {
    let spec = EpisodeSpec::new(5, 1, 5, 31);
    let a = episode_fingerprint(&setup.train, &spec, 10_000)?;
    let b = episode_fingerprint(&setup.train, &spec, 10_000)?;
    if a == b {
        Ok(format!("10000 episodes clean, {} fingerprint bytes identical across runs", a.len()))
    } else {
        Err("episode streams differ between runs".into())
    }
}

/// A copy of `s` that keeps only frames `lo..hi` of its valid span.
fn trimmed(s: &GestureSequence, keep: std::ops::Range<usize>) -> GestureSequence {
    let frames: Vec<LandmarkFrame> = s
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| if keep.contains(&i) { f.clone() } else { LandmarkFrame::invalid() })
        .collect();
    GestureSequence::new(frames, s.class_label.clone(), s.original_pair.clone(), s.sample_id.clone()).unwrap()
}

fn augmentation_suite(setup: &Setup) -> Outcome {
    let mut r = rng::stream(77, &[]);
    let mut worst_junction = 0f64;
    let mut worst_geometry = 0f64;
    let mut padded = 0;
    for call in 0..1000 {
        let pick = |r: &mut rand_chacha::ChaCha8Rng| {
            let s = &setup.train.samples()[r.random_range(0..setup.train.len())];
            if r.random_bool(0.5) {
                return s.clone();
            }
            let (lo, hi) = (s.first_valid(), s.last_valid() + 1);
            let a = r.random_range(lo..hi);
            let b = r.random_range(a + 1..=hi);
            trimmed(s, a..b)
        };
        let (a, b) = (pick(&mut r), pick(&mut r));
        let out = concat_traced(&a, &b).map_err(|e| format!("call {call}: {e}"))?;
        let frames = out.sequence.frames();
        if frames.len() != SEQ_LEN {
            return Err(format!("call {call}: length {}", frames.len()));
        }
        padded += usize::from(out.sources.contains(&FrameSource::Padding));
        let last_a = out.sources.iter().rposition(|s| matches!(s, FrameSource::A(_)));
        let first_b = out.sources.iter().position(|s| matches!(s, FrameSource::B(_)));
        let (Some(last_a), Some(first_b)) = (last_a, first_b) else {
            return Err(format!("call {call}: a constituent vanished"));
        };
        let (wa, wb) = (frames[last_a].wrist(), frames[first_b].wrist());
        for k in 0..3 {
            worst_junction = worst_junction.max(f64::from((wa[k] - wb[k]).abs()));
        }
        for (f, src) in frames.iter().zip(&out.sources) {
            let FrameSource::B(j) = *src else { continue };
            let orig = &b.frames()[j];
            for l in 0..LANDMARKS {
                for m in l + 1..LANDMARKS {
                    for k in 0..3 {
                        let before = f64::from(orig.landmark(m)[k]) - f64::from(orig.landmark(l)[k]);
                        let after = f64::from(f.landmark(m)[k]) - f64::from(f.landmark(l)[k]);
                        // Each stored coordinate is rounded once to f32.
                        let scale = f64::from(f.landmark(m)[k].abs().max(f.landmark(l)[k].abs()).max(1.0));
                        let ulps = (before - after).abs() / (scale * f64::from(f32::EPSILON));
                        worst_geometry = worst_geometry.max(ulps);
                    }
                }
            }
        }
    }
    let text = format!(
        "1000 calls ({padded} padded): max junction gap {worst_junction:.2e}, max geometry change {worst_geometry:.2} ulp"
    );
    if worst_junction < 1e-6 && worst_geometry <= 2.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn checkpoint_round_trip(setup: &Setup, trained: &Trained) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.rnck");
    let spec = eval_spec(5, 1);
    let before = evaluate(&trained.params, &setup.test, &spec, 1000).map_err(|e| e.to_string())?;
    save_checkpoint(&path, &trained.params, "acceptance", spec.seed).map_err(|e| e.to_string())?;
    let (loaded, _) = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let after = evaluate(&loaded, &setup.test, &spec, 1000).map_err(|e| e.to_string())?;
    let (jb, ja) = (serde_json::to_string(&before).unwrap(), serde_json::to_string(&after).unwrap());
    if loaded == trained.params && before == after && jb == ja {
        Ok(format!("{} parameters, report identical ({} JSON bytes)", loaded.num_parameters(), ja.len()))
    } else {
        Err("reloaded model diverges from the saved one".into())
    }
}

/// One scalar parameter.
#[derive(Clone)]
struct Scalar1(Tensor<f32>);

impl Parameters<f32> for Scalar1 {
    fn tensors(&self) -> Vec<&Tensor<f32>> {
        vec![&self.0]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        vec![&mut self.0]
    }
}

fn adam_first_step() -> Outcome {
    let config = AdamConfig::default();
    let alpha = f64::from(config.learning_rate);
    let mut parts = Vec::new();
    let mut ok = true;
    for g in [1e-3f32, 1.0, 1e3] {
        let mut theta = Scalar1(Tensor::zeros(&[1]));
        let grad = Scalar1(Tensor::from_vec(&[1], vec![g]).unwrap());
        AdamState::new(config).update(&mut theta, &grad).map_err(|e| e.to_string())?;
        let step = f64::from(theta.0.data()[0]).abs();
        let rel = (step - alpha).abs() / alpha;
        ok &= rel <= 1e-6;
        parts.push(format!("g={g:e}: rel dev {rel:.2e}"));
    }
    let text = parts.join(", ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn report(name: &str, f: impl FnOnce() -> Outcome, failures: &mut Vec<String>) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
        Err(detail) => {
            println!("FAIL {name} ({secs:.1}s): {detail}");
            failures.push(name.to_string());
        }
    }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));
    let setup = setup();
    let mut failures = Vec::new();
    let trained = OnceLock::new();
    let get_trained = || {
        trained.get_or_init(|| {
            let start = Instant::now();
            let t = run_config(&setup, 5, 1, 32, 5000, 1e-3, 7);
            println!("     trained the 5-way 1-shot model in {:.1}s", start.elapsed().as_secs_f64());
            t
        })
    };

    if wanted("savings-reproduction") {
        report("savings-reproduction", savings_reproduction, &mut failures);
    }
    if wanted("gradient-suite") {
        report("gradient-suite", gradient_suite, &mut failures);
    }
    if wanted("synthetic-meta-learning") {
        let t = get_trained();
        report("synthetic-meta-learning", || meta_learning(t), &mut failures);
    }
    if wanted("trend-checks") {
        report("trend-checks", || trend_checks(&setup), &mut failures);
    }
    if wanted("fsl-sml-crossing") {
        let t = get_trained();
        report("fsl-sml-crossing", || sml_crossing(&setup, t), &mut failures);
    }
    if wanted("sampler-suite") {
        report("sampler-suite", || sampler_suite(&setup), &mut failures);
    }
    if wanted("augmentation-suite") {
        report("augmentation-suite", || augmentation_suite(&setup), &mut failures);
    }
    if wanted("checkpoint-round-trip") {
        let t = get_trained();
        report("checkpoint-round-trip", || checkpoint_round_trip(&setup, t), &mut failures);
    }
    if wanted("adam-first-step") {
        report("adam-first-step", adam_first_step, &mut failures);
    }

    if failures.is_empty() {
        println!("acceptance: all checks passed");
    } else {
        println!("acceptance: {} failed: {}", failures.len(), failures.join(", "));
        std::process::exit(1);
    }
}
