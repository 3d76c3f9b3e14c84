use std::fs;
use std::io::Write;
use std::path::Path;

use fsgr_core::baseline::{select_classes, sweep_sml_sizes, SmlSweep, SWEEP_SIZES};
use fsgr_core::checkpoint::{config_digest, verify_arch};
use fsgr_core::data::{build_combined_dataset, split_by_original_class, SplitSpec};
use fsgr_core::train::{meta_train_with_progress, write_history_csv};
use fsgr_core::{
    compute_savings, evaluate, load_checkpoint, load_gsjl, save_checkpoint, save_gsjl,
    EpisodeSpec, Error, EvalReport, Pooling, Result, SavingsReport, SmlConfig, TrainConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{
    BuildDatasetArgs, EvalArgs, GenSyntheticArgs, PoolingArg, SavingsArgs, SplitArgs, TrainArgs,
    TrainSmlArgs,
};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn echo_config<T: Serialize>(config: &T) -> Result<()> {
    println!("effective config: {}", serde_json::to_string(config)?);
    Ok(())
}

pub fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::InvalidInput("--samples must be at least 1".into()));
    }
    let ds = fsgr_core::gen_synthetic(a.classes, a.samples, a.noise, a.seed)?;
    save_gsjl(&ds, &a.out)?;
    println!(
        "wrote {} samples of {} classes to {}",
        ds.len(),
        ds.num_classes(),
        a.out.display()
    );
    Ok(())
}

pub fn build_dataset(a: BuildDatasetArgs) -> Result<()> {
    let base = load_gsjl(&a.input)?;
    let ds = build_combined_dataset(&base, a.samples_per_class, a.pairs, a.seed)?;
    save_gsjl(&ds, &a.out)?;
    println!(
        "wrote {} samples of {} combined classes from {} base classes to {}",
        ds.len(),
        ds.num_classes(),
        base.num_classes(),
        a.out.display()
    );
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let ds = load_gsjl(&a.input)?;
    let spec = SplitSpec {
        train: a.train,
        val: a.val,
        test: a.test,
        seed: a.seed,
    };
    let s = split_by_original_class(&ds, spec)?;
    for (name, part, group) in [
        ("train", &s.train, &s.groups[0]),
        ("val", &s.val, &s.groups[1]),
        ("test", &s.test, &s.groups[2]),
    ] {
        let path = format!("{}{name}.gsjl", a.out_prefix);
        save_gsjl(part, &path)?;
        println!(
            "{name}: {} classes, {} samples, originals [{}] -> {path}",
            part.num_classes(),
            part.len(),
            group.join(", ")
        );
    }
    println!(
        "dropped {} cross-group classes; original classes disjoint across splits: {}",
        s.dropped.len(),
        s.is_disjoint()
    );
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.n_way {
        c.spec.n_way = v;
    }
    if let Some(v) = a.k_shot {
        c.spec.k_shot = v;
    }
    if let Some(v) = a.queries {
        c.spec.q_queries = v;
    }
    if let Some(v) = a.episode_seed {
        c.spec.seed = v;
    }
    if let Some(v) = a.episodes {
        c.episodes = v;
    }
    if let Some(v) = a.learning_rate {
        c.adam.learning_rate = v;
    }
    if let Some(v) = a.eval_every {
        c.eval_every = v;
    }
    if let Some(v) = a.eval_episodes {
        c.eval_episodes = v;
    }
    if let Some(v) = a.clip_norm {
        c.clip_norm = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = &a.lstm_hidden {
        c.arch.lstm_hidden = v.clone();
    }
    if let Some(v) = &a.relation_hidden {
        c.arch.relation_hidden = v.clone();
    }
    if let Some(p) = a.pooling {
        c.arch.pooling = match p {
            PoolingArg::Sum => Pooling::Sum,
            PoolingArg::Mean => Pooling::Mean,
        };
    }
    c.validate()?;
    Ok(c)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = train_config(&a)?;
    echo_config(&config)?;
    let train_set = load_gsjl(&a.train)?;
    let val_set = load_gsjl(&a.val)?;
    let quiet = a.quiet;
    let out = meta_train_with_progress(&train_set, &val_set, &config, |row| {
        if let (Some(acc), false) = (row.val_accuracy, quiet) {
            eprintln!(
                "episode {:>6}  loss_mse {:.5}  val_accuracy {:.4}",
                row.episode + 1,
                row.loss_mse,
                acc
            );
        }
    })?;
    save_checkpoint(&a.out, &out.params, &config_digest(&config)?, config.spec.seed)?;
    if let Some(h) = &a.history {
        write_history_csv(&out.history, h)?;
    }
    println!(
        "best val_accuracy={:.4} at episode {} (final {:.4}); checkpoint {}",
        out.best_report.accuracy,
        out.best_episode + 1,
        out.final_report.accuracy,
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (params, header) = load_checkpoint(&a.model)?;
    if let Some(p) = &a.config {
        let config: TrainConfig = read_json(p)?;
        verify_arch(&header, &config.arch)?;
    }
    let spec = EpisodeSpec::new(a.n_way, a.k_shot, a.queries, a.seed);
    let data = load_gsjl(&a.data)?;
    let report = evaluate(&params, &data, &spec, a.episodes)?;
    println!(
        "accuracy={:.4} ci95={:.4} episodes={}",
        report.accuracy, report.ci95_halfwidth, report.episodes
    );
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    Ok(())
}

fn sml_config(a: &TrainSmlArgs) -> Result<SmlConfig> {
    let mut c: SmlConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SmlConfig::default(),
    };
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        c.adam.learning_rate = v;
    }
    if let Some(v) = a.test_per_class {
        c.test_per_class = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

pub fn train_sml(a: TrainSmlArgs) -> Result<()> {
    let config = sml_config(&a)?;
    echo_config(&config)?;
    let report: EvalReport = read_json(&a.report)?;
    let classes = match &a.classes {
        Some(c) => c.clone(),
        None => select_classes(&report, a.n_classes.unwrap_or(report.n_way))?,
    };
    let data = load_gsjl(&a.data)?;
    let sizes: Vec<usize> = SWEEP_SIZES.iter().copied().filter(|&s| s <= a.max_samples).collect();
    let sweep = sweep_sml_sizes(&data, &classes, report.accuracy, &sizes, &config)?;
    for p in &sweep.points {
        println!(
            "samples_per_class={} accuracy={:.4} (target {:.4})",
            p.samples_per_class, p.test_accuracy, report.accuracy
        );
    }
    match sweep.crossing {
        Some(s) => println!("crossing at samples_per_class={s}"),
        None => println!("no crossing up to samples_per_class={}", a.max_samples),
    }
    write_json(&a.out, &sweep)
}

pub fn savings(a: SavingsArgs) -> Result<()> {
    if let (Some(s), Some(k), Some(n)) = (a.sml_samples, a.k_shot, a.n_way) {
        let v = compute_savings(s, k, n)?;
        let mut out = std::io::stdout().lock();
        writeln!(out, "{v}").map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })?;
        return Ok(());
    }
    let (Some(eval), Some(sweep)) = (&a.eval, &a.sweep) else {
        return Err(Error::InvalidInput(
            "give either --sml-samples/--k-shot/--n-way or --eval/--sweep".into(),
        ));
    };
    let report: EvalReport = read_json(eval)?;
    let sweep: SmlSweep = read_json(sweep)?;
    let savings = SavingsReport::new(&report, &sweep)?;
    match savings.savings {
        Some(v) => println!("savings={v}"),
        None => println!("savings=none (supervised model never exceeded {:.4})", report.accuracy),
    }
    if let Some(out) = &a.out {
        write_json(out, &savings)?;
    }
    Ok(())
}
