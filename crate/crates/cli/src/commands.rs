use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hargan::datasets::{
    apply_normalize, fit_normalize, load_canonical_csv, load_dataset, load_pamap2, loso_split, make_windows,
    partition_by_class, save_dataset, toy_corpus, DatasetProfile, NormStats, RecordStream, SensorWindow,
    ToyConfig, WindowedDataset,
};
use hargan::evaluation::{
    benchmark_epoch_time, channel_correlation_report, confusion_csv, correlation_csv, f1_and_confusion, f1_csv,
    one_vs_rest_f1, write_json, BenchmarkConfig, CorrelationReport,
};
use hargan::models::{load_checkpoint, save_checkpoint, Checkpoint, Classify, Generate, Role};
use hargan::rng::{mix, seeded, Rng};
use hargan::training::{
    train_classifier as fit_classifier, train_gan_with_retries, GanOutcome, GanTrainConfig, GanTrainer, Timing,
};
use hargan::{Error, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Family, ProfileRef, RunConfig};
use crate::Common;

#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    /// Classes whose generator never passed the gate.
    GateNotReached(Vec<usize>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::GateNotReached(classes) => {
                write!(f, "validation gate not reached for classes {classes:?}")
            }
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::GateNotReached(_) => 4,
            Failure::Lib(e) => match e {
                Error::Config(_) | Error::InvalidArgument(_) => 2,
                Error::NonFinite(_) | Error::UndefinedCorrelation(_) => 5,
                _ => 3,
            },
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RawFormat {
    Pamap2,
    CanonicalCsv,
    Toy,
}

fn resolve(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(p) = &common.profile {
        cfg.profile = Some(ProfileRef::Name(p.clone()));
    }
    if common.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn meta<T: DeserializeOwned>(ckpt: &Checkpoint, key: &str, path: &Path) -> Result<T, Error> {
    let v = ckpt
        .meta
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("{}: metadata has no `{key}`", path.display())))?;
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: metadata `{key}`: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Error> {
    Ok(serde_json::to_value(v)?)
}

/// Profile stored with a dataset, checked against the one the run asks for.
fn dataset_profile(cfg: &RunConfig, stored: Option<DatasetProfile>, dir: &Path) -> Result<DatasetProfile, Error> {
    let requested = cfg.profile.as_ref().map(ProfileRef::resolve).transpose()?;
    match (stored, requested) {
        (Some(s), Some(r)) if s != r => Err(Error::Data(format!(
            "{}: dataset was ingested with profile {}, run asks for {}",
            dir.display(),
            s.name,
            r.name
        ))),
        (Some(p), _) | (None, Some(p)) => Ok(p),
        (None, None) => Err(Error::Config(format!(
            "{}: manifest has no profile and none was given",
            dir.display()
        ))),
    }
}

fn same_profile(a: &DatasetProfile, b: &DatasetProfile, what: &str) -> Result<(), Error> {
    if a != b {
        return Err(Error::Data(format!(
            "profile mismatch: {what} uses {}, expected {}",
            b.name, a.name
        )));
    }
    Ok(())
}

fn load_classifier(path: &Path) -> Result<(Checkpoint, DatasetProfile, NormStats), Error> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.spec.role() != Role::Classifier {
        return Err(Error::Checkpoint(format!(
            "{}: {} is not a classifier",
            path.display(),
            ckpt.model.spec.arch()
        )));
    }
    let profile = meta(&ckpt, "profile", path)?;
    let norm = meta(&ckpt, "norm", path)?;
    Ok((ckpt, profile, norm))
}

/// Windows already normalized with `norm`, or raw windows to normalize.
fn normalized(ds: &WindowedDataset, stored: Option<NormStats>, norm: &NormStats, dir: &Path) -> Result<WindowedDataset, Error> {
    match stored {
        None => apply_normalize(ds, norm),
        Some(s) if &s == norm => Ok(ds.clone()),
        Some(_) => Err(Error::Data(format!(
            "{}: windows were normalized with different statistics than the classifier",
            dir.display()
        ))),
    }
}

pub fn ingest(common: &Common, format: RawFormat, input: Option<PathBuf>, stride: Option<usize>) -> CmdResult {
    let mut cfg = resolve(common)?;
    if format == RawFormat::Toy && cfg.profile.is_none() {
        cfg.profile = Some(ProfileRef::Name("toy".into()));
    }
    let profile = cfg.profile()?;
    let out = cfg.out()?;
    let input = || {
        input
            .clone()
            .ok_or_else(|| Error::Config("--input is required for this format".into()))
    };
    let streams: Vec<RecordStream> = match format {
        RawFormat::Pamap2 => load_pamap2(&input()?, &profile)?,
        RawFormat::CanonicalCsv => load_canonical_csv(&input()?, profile.sample_rate)?,
        RawFormat::Toy => toy_corpus(&ToyConfig::default(), cfg.seed()?),
    };
    let stride = stride.unwrap_or((profile.length / 2).max(1));
    let mut ds = WindowedDataset::new(profile.channels(), profile.length);
    for s in &streams {
        ds.extend(make_windows(s, &profile, stride)?)?;
    }
    let manifest = save_dataset(&out, &ds, Some(&profile), None)?;
    println!(
        "{} windows of [{}, {}] from {} subjects -> {}",
        ds.len(),
        ds.channels,
        ds.length,
        streams.len(),
        manifest.display()
    );
    Ok(())
}

pub fn train_classifier(common: &Common, dataset: Option<PathBuf>) -> CmdResult {
    let mut cfg = resolve(common)?;
    if dataset.is_some() {
        cfg.dataset = dataset;
    }
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let dir = cfg.dataset()?;
    let (ds, manifest) = load_dataset(&dir)?;
    let profile = dataset_profile(&cfg, manifest.profile, &dir)?;
    let holdout = match cfg.holdout_subject {
        Some(h) => h,
        None => *ds
            .subjects()
            .last()
            .ok_or_else(|| Error::Data(format!("{}: dataset is empty", dir.display())))?,
    };
    let (train, val) = loso_split(&ds, holdout)?;
    let norm = fit_normalize(&train)?;
    let train = apply_normalize(&train, &norm)?;
    let val = apply_normalize(&val, &norm)?;

    let spec = cfg.classifier_spec(&profile)?;
    cfg.classifier = Some(spec.clone());
    cfg.classifier_training.seed = seed;
    cfg.holdout_subject = Some(holdout);
    let (model, log, report) = fit_classifier(&spec, &train, &val, &cfg.classifier_training)?;

    fs::create_dir_all(&out)?;
    let mut meta = Map::new();
    meta.insert("kind".into(), json!("classifier"));
    meta.insert("profile".into(), to_value(&profile)?);
    meta.insert("norm".into(), to_value(&norm)?);
    meta.insert("holdout_subject".into(), json!(holdout));
    meta.insert("seed".into(), json!(seed));
    save_checkpoint(&out.join("classifier.ckpt"), &Checkpoint { model, meta })?;
    write_json(&out.join("report.json"), &report)?;
    f1_csv(&out.join("f1.csv"), &report)?;
    confusion_csv(&out.join("confusion.csv"), &report, false)?;
    confusion_csv(&out.join("confusion_percent.csv"), &report, true)?;
    log.write_csv(&out.join("train_log.csv"), Timing::Wall)?;
    write_json(&out.join("run_config.json"), &cfg)?;
    println!(
        "holdout subject {holdout}: validation macro-F1 {:.4} after {} epochs -> {}",
        report.macro_f1,
        log.entries.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClassSummary {
    class_id: usize,
    activity: i64,
    converged: bool,
    seeds: Vec<u64>,
    epochs: usize,
    best_gate_f1: Option<f64>,
    collapsed_at: Option<usize>,
}

pub fn train_gan(
    common: &Common,
    dataset: Option<PathBuf>,
    classifier: Option<PathBuf>,
    family: Option<Family>,
    deterministic_log: bool,
) -> CmdResult {
    let mut cfg = resolve(common)?;
    if dataset.is_some() {
        cfg.dataset = dataset;
    }
    if classifier.is_some() {
        cfg.classifier_checkpoint = classifier;
    }
    if let Some(f) = family {
        cfg.family = f;
        cfg.gan = None;
    }
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let dir = cfg.dataset()?;
    let cls_path = cfg
        .classifier_checkpoint
        .clone()
        .ok_or_else(|| Error::Config("no classifier checkpoint: pass --classifier".into()))?;
    let (cls, cls_profile, norm) = load_classifier(&cls_path)?;
    let (ds, manifest) = load_dataset(&dir)?;
    let profile = dataset_profile(&cfg, manifest.profile, &dir)?;
    same_profile(&profile, &cls_profile, "the classifier")?;
    let spec = cfg.gan_spec(&profile)?;
    cfg.gan = Some(spec.clone());

    // the validation subject stays unseen by the generators too
    let holdout: Option<u32> = cls.meta.get("holdout_subject").and_then(|v| serde_json::from_value(v.clone()).ok());
    let ds = normalized(&ds, manifest.norm, &norm, &dir)?;
    let train = match holdout {
        Some(h) if ds.subjects().len() > 1 => loso_split(&ds, h).map(|(t, _)| t).unwrap_or(ds),
        _ => ds,
    };
    let buckets = partition_by_class(&train);
    if let Some(k) = (0..profile.classes()).find(|k| !buckets.contains_key(k)) {
        return Err(Error::Data(format!(
            "class {k} (activity {}) has no training windows",
            profile.activities[k]
        ))
        .into());
    }
    let timing = if deterministic_log { Timing::Omit } else { Timing::Wall };
    fs::create_dir_all(&out)?;
    write_json(&out.join("run_config.json"), &cfg)?;

    let classes = profile.classes();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<GanOutcome>, Error>>>> = Mutex::new((0..classes).map(|_| None).collect());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= classes {
            break;
        }
        let config = GanTrainConfig {
            seed: mix(seed, k as u64),
            ..cfg.gan_training.clone()
        };
        let r = train_gan_with_retries(&spec, &buckets[&k], &cls.model, &config, cfg.attempts);
        results.lock().expect("worker panicked")[k] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..common.jobs.min(classes) {
            s.spawn(worker);
        }
    });

    let mut summary = Vec::new();
    let mut failed = Vec::new();
    for (k, r) in results.into_inner().expect("worker panicked").into_iter().enumerate() {
        let attempts = r.expect("every class ran")?;
        let class_dir = out.join(format!("class_{k}"));
        fs::create_dir_all(&class_dir)?;
        for a in &attempts {
            a.log.write_csv(&class_dir.join(format!("train_log_seed_{}.csv", a.seed)), timing)?;
        }
        let kept = attempts.last().expect("at least one attempt");
        kept.log.write_csv(&class_dir.join("train_log.csv"), timing)?;
        let mut meta = Map::new();
        meta.insert("kind".into(), json!("generator"));
        meta.insert("family".into(), json!(spec.family()));
        meta.insert("profile".into(), to_value(&profile)?);
        meta.insert("norm".into(), to_value(&norm)?);
        meta.insert("class_id".into(), json!(k));
        meta.insert("activity".into(), json!(profile.activities[k]));
        meta.insert("converged".into(), json!(kept.converged));
        meta.insert("seed".into(), json!(kept.seed));
        save_checkpoint(
            &class_dir.join("generator.ckpt"),
            &Checkpoint {
                model: kept.generator.clone(),
                meta,
            },
        )?;
        println!(
            "class {k} (activity {}): {} after {} epochs, best gate F1 {}",
            profile.activities[k],
            if kept.converged { "converged" } else { "gate not reached" },
            kept.log.len(),
            kept.best_gate_f1.map_or("-".into(), |f| format!("{f:.4}"))
        );
        if !kept.converged {
            failed.push(k);
        }
        summary.push(ClassSummary {
            class_id: k,
            activity: profile.activities[k],
            converged: kept.converged,
            seeds: attempts.iter().map(|a| a.seed).collect(),
            epochs: kept.log.len(),
            best_gate_f1: kept.best_gate_f1,
            collapsed_at: kept.collapsed_at,
        });
    }
    write_json(&out.join("summary.json"), &summary)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::GateNotReached(failed))
    }
}

fn load_generator(path: &Path) -> Result<(Checkpoint, DatasetProfile, NormStats, usize), Error> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.spec.role() != Role::Generator {
        return Err(Error::Checkpoint(format!(
            "{}: {} is not a generator",
            path.display(),
            ckpt.model.spec.arch()
        )));
    }
    let profile = meta(&ckpt, "profile", path)?;
    let norm = meta(&ckpt, "norm", path)?;
    let class_id = meta(&ckpt, "class_id", path)?;
    Ok((ckpt, profile, norm, class_id))
}

pub fn generate(common: &Common, checkpoint: &Path, n: usize) -> CmdResult {
    let cfg = resolve(common)?;
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let (ckpt, profile, norm, class_id) = load_generator(checkpoint)?;
    let windows = ckpt.model.generate(n, &mut seeded(seed))?;
    let ds = WindowedDataset::from_windows(
        profile.channels(),
        profile.length,
        windows
            .into_iter()
            .map(|data| SensorWindow {
                data,
                label: class_id,
                subject_id: 0,
            })
            .collect(),
    )?;
    let manifest = save_dataset(&out, &ds, Some(&profile), Some(&norm))?;
    println!("{n} windows of class {class_id} -> {}", manifest.display());
    Ok(())
}

/// Hands out stored windows in order.
struct Replay(Vec<Tensor>);

impl Generate for Replay {
    fn generate(&self, n: usize, _: &mut Rng) -> hargan::Result<Vec<Tensor>> {
        if n > self.0.len() {
            return Err(Error::Data(format!("{n} windows requested, {} available", self.0.len())));
        }
        Ok(self.0[..n].to_vec())
    }
}

pub fn evaluate(
    common: &Common,
    classifier: &Path,
    generator: Option<&Path>,
    windows: Option<&Path>,
    real: &Path,
    x: usize,
    n: usize,
) -> CmdResult {
    let cfg = resolve(common)?;
    let out = cfg.out()?;
    let (cls, profile, norm) = load_classifier(classifier)?;

    let (samples, class_id) = match (generator, windows) {
        (Some(g), _) => {
            let (ckpt, p, gnorm, class_id) = load_generator(g)?;
            same_profile(&profile, &p, "the generator")?;
            if gnorm != norm {
                return Err(Error::Data("generator and classifier were trained on different normalizations".into()).into());
            }
            (ckpt.model.generate(n, &mut seeded(cfg.seed()?))?, class_id)
        }
        (None, Some(w)) => {
            let (ds, manifest) = load_dataset(w)?;
            if let Some(p) = &manifest.profile {
                same_profile(&profile, p, "the synthetic windows")?;
            }
            let ds = normalized(&ds, manifest.norm, &norm, w)?;
            let labels = ds.labels();
            let class_id = *labels
                .first()
                .ok_or_else(|| Error::Data(format!("{}: no windows", w.display())))?;
            if labels.iter().any(|&l| l != class_id) {
                return Err(Error::Data(format!("{}: windows span several classes", w.display())).into());
            }
            (ds.tensors(), class_id)
        }
        (None, None) => return Err(Error::Config("pass --generator or --windows".into()).into()),
    };
    if class_id >= profile.classes() {
        return Err(Error::Data(format!("class {class_id} is outside the profile")).into());
    }

    let (real_ds, manifest) = load_dataset(real)?;
    if let Some(p) = &manifest.profile {
        same_profile(&profile, p, "the real dataset")?;
    }
    let real_ds = normalized(&real_ds, manifest.norm, &norm, real)?;

    let preds = cls.model.predict(&samples)?;
    let truths = vec![class_id; samples.len()];
    let gate_f1 = one_vs_rest_f1(&preds, &truths, class_id)?;
    let report = f1_and_confusion(&preds, &truths, profile.classes())?;
    let row = channel_correlation_report(&real_ds, &Replay(samples.clone()), class_id, x, &mut seeded(0))?;
    let correlation = CorrelationReport { rows: vec![row] };
    let threshold = cfg.gan_training.gate_threshold;

    fs::create_dir_all(&out)?;
    write_json(
        &out.join("evaluation.json"),
        &json!({
            "class_id": class_id,
            "activity": profile.activities[class_id],
            "samples": samples.len(),
            "gate_f1": gate_f1,
            "gate_threshold": threshold,
            "gate_passed": gate_f1 >= threshold,
            "report": report,
            "correlation": correlation,
        }),
    )?;
    f1_csv(&out.join("f1.csv"), &report)?;
    confusion_csv(&out.join("confusion.csv"), &report, false)?;
    confusion_csv(&out.join("confusion_percent.csv"), &report, true)?;
    correlation_csv(&out.join("correlation.csv"), &correlation, &profile.channel_names)?;
    println!(
        "class {class_id}: gate F1 {gate_f1:.4}, {}/{} channels with r >= 0.8 -> {}",
        correlation.rows[0].passing(),
        profile.channels(),
        out.display()
    );
    Ok(())
}

/// Stands in for the gate classifier; benchmark runs never reach a gate.
struct NoGate;

impl Classify for NoGate {
    fn predict(&self, _: &[Tensor]) -> hargan::Result<Vec<usize>> {
        Err(Error::InvalidArgument("benchmark runs do not evaluate the gate".into()))
    }
}

pub fn benchmark(common: &Common, config_a: &Path, config_b: &Path, epochs: usize, warmup: usize, class: usize) -> CmdResult {
    let mut a = RunConfig::load(config_a)?;
    let mut b = RunConfig::load(config_b)?;
    let base = resolve(common)?;
    for c in [&mut a, &mut b] {
        if base.seed.is_some() {
            c.seed = base.seed;
        }
        if base.profile.is_some() {
            c.profile = base.profile.clone();
        }
    }
    let out = base.out.clone().or_else(|| a.out.clone()).ok_or_else(|| Error::Config("no output directory: pass --out".into()))?;
    let dir = a.dataset()?;
    if b.dataset.as_ref().is_some_and(|d| d != &dir) {
        return Err(Error::Config("both configs must name the same dataset".into()).into());
    }
    let (ds, manifest) = load_dataset(&dir)?;
    let profile = dataset_profile(&a, manifest.profile.clone(), &dir)?;
    same_profile(&profile, &dataset_profile(&b, manifest.profile, &dir)?, config_b.to_string_lossy().as_ref())?;
    let ds = match manifest.norm {
        Some(_) => ds,
        None => apply_normalize(&ds, &fit_normalize(&ds)?)?,
    };
    let bucket = partition_by_class(&ds)
        .remove(&class)
        .ok_or_else(|| Error::Data(format!("class {class} has no windows")))?;

    let trainer = |c: &RunConfig| -> Result<GanTrainer<'static>, Error> {
        let config = GanTrainConfig {
            seed: c.seed()?,
            max_epochs: usize::MAX,
            gate_interval: usize::MAX,
            ..c.gan_training.clone()
        };
        GanTrainer::new(&c.gan_spec(&profile)?, &bucket, &NoGate, config)
    };
    let (mut ta, mut tb) = (trainer(&a)?, trainer(&b)?);
    let (spec_a, spec_b) = (a.gan_spec(&profile)?, b.gan_spec(&profile)?);
    let name = |p: &Path| p.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
    let (name_a, name_b) = (name(config_a), name(config_b));
    let result = benchmark_epoch_time(
        (&name_a, || ta.epoch().map(|_| ())),
        (&name_b, || tb.epoch().map(|_| ())),
        BenchmarkConfig { warmup, epochs },
    )?;
    fs::create_dir_all(&out)?;
    write_json(
        &out.join("benchmark.json"),
        &json!({
            "result": result,
            "class_id": class,
            "baseline": {"family": spec_a.family(), "params": spec_a.param_count()?},
            "candidate": {"family": spec_b.family(), "params": spec_b.param_count()?},
        }),
    )?;
    println!(
        "{name_a} {:.4}s/epoch, {name_b} {:.4}s/epoch, speedup {:.3}",
        result.baseline.mean, result.candidate.mean, result.speedup
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let code = |e: Error| Failure::Lib(e).exit_code();
        assert_eq!(code(Error::Config("x".into())), 2);
        assert_eq!(code(Error::InvalidArgument("x".into())), 2);
        assert_eq!(code(Error::Data("x".into())), 3);
        assert_eq!(code(Error::Checkpoint("x".into())), 3);
        assert_eq!(code(Error::NonFinite("x".into())), 5);
        assert_eq!(Failure::GateNotReached(vec![1]).exit_code(), 4);
    }

    #[test]
    fn replay_refuses_to_invent_windows() {
        let r = Replay(vec![Tensor::zeros(&[1, 2])]);
        assert_eq!(r.generate(1, &mut seeded(0)).unwrap().len(), 1);
        assert!(r.generate(2, &mut seeded(0)).is_err());
    }
}
