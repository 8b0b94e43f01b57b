use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamConfig, EpochRecord, OptimizerState, TrainLog};
use crate::datasets::WindowedDataset;
use crate::error::{Error, Result};
use crate::evaluation::one_vs_rest_f1;
use crate::models::{Classify, GanSpec, Generate, ModelParams};
use crate::nn::{loss, Mode};
use crate::params::ParamSet;
use crate::rng::{derive, seeded, Rng};
use crate::tensor::{Tape, Tensor};

/// Stream id of the gate's noise, kept apart from the training draws so the
/// gate schedule does not perturb training.
const GATE_STREAM: u64 = 0x6a7e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Generator updates per epoch; a full pass over the class windows when
    /// absent.
    pub batches_per_epoch: Option<usize>,
    /// Discriminator updates before each generator update.
    pub discriminator_steps: usize,
    pub generator_optimizer: AdamConfig,
    pub discriminator_optimizer: AdamConfig,
    pub gate_interval: usize,
    pub gate_sample_count: usize,
    pub gate_threshold: f64,
    pub collapse_window: usize,
    pub collapse_epsilon: f64,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            batch_size: 32,
            batches_per_epoch: None,
            discriminator_steps: 1,
            generator_optimizer: AdamConfig::gan(),
            discriminator_optimizer: AdamConfig::gan(),
            gate_interval: 25,
            gate_sample_count: 128,
            gate_threshold: 0.95,
            collapse_window: 100,
            collapse_epsilon: 1e-4,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("gan training: {what}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.batches_per_epoch == Some(0) || self.discriminator_steps == 0 {
            return bad("batches_per_epoch and discriminator_steps must be at least 1");
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold <= 1.0) {
            return bad("gate_threshold must lie in (0, 1]");
        }
        if self.gate_interval == 0 || self.gate_sample_count == 0 {
            return bad("gate_interval and gate_sample_count must be at least 1");
        }
        if self.collapse_epsilon.is_nan() {
            return bad("collapse_epsilon is NaN");
        }
        self.generator_optimizer.validate()?;
        self.discriminator_optimizer.validate()
    }
}

/// Generates `n` windows and returns the F1 of `class_id` against all
/// other classes. Every generated window counts as `class_id`, so this is
/// `2TP / (2TP + FN)`.
pub fn validation_gate(
    generator: &dyn Generate,
    classifier: &dyn Classify,
    class_id: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("gate needs at least one sample".into()));
    }
    let windows = generator.generate(n, rng)?;
    let preds = classifier.predict(&windows)?;
    one_vs_rest_f1(&preds, &vec![class_id; n], class_id)
}

/// Counts consecutive epochs with discriminator loss below `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseDetector {
    pub window: usize,
    pub epsilon: f64,
    run: usize,
}

impl CollapseDetector {
    pub fn new(window: usize, epsilon: f64) -> Self {
        Self { window, epsilon, run: 0 }
    }

    /// Feeds one epoch's discriminator loss; true once the run reaches
    /// `window`. A zero window never fires.
    pub fn observe(&mut self, d_loss: f64) -> bool {
        if d_loss < self.epsilon {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.window > 0 && self.run >= self.window
    }
}

#[derive(Clone, Debug)]
pub struct GanOutcome {
    /// Parameters at the best gate (the last state if no gate ran).
    pub generator: ModelParams,
    /// Last discriminator state.
    pub discriminator: ModelParams,
    pub log: TrainLog,
    pub converged: bool,
    /// Epoch at which the collapse detector fired.
    pub collapsed_at: Option<usize>,
    pub best_gate_f1: Option<f64>,
    pub seed: u64,
    pub total_seconds: f64,
}

/// Alternating adversarial training of one class's generator.
pub struct GanTrainer<'a> {
    config: GanTrainConfig,
    generator: ModelParams,
    discriminator: ModelParams,
    opt_g: OptimizerState,
    opt_d: OptimizerState,
    real: WindowedDataset,
    class_id: usize,
    classifier: &'a dyn Classify,
    rng: Rng,
    gate_rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    log: TrainLog,
    collapse: CollapseDetector,
    collapsed_at: Option<usize>,
    best: Option<(f64, ParamSet)>,
    converged: bool,
}

impl<'a> GanTrainer<'a> {
    /// `windows` must be non-empty and share one label, the class the
    /// generator is trained for.
    pub fn new(
        spec: &GanSpec,
        windows: &WindowedDataset,
        classifier: &'a dyn Classify,
        config: GanTrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let class_id = match windows.windows.first() {
            None => return Err(Error::Data("empty class bucket".into())),
            Some(w) => w.label,
        };
        if windows.windows.iter().any(|w| w.label != class_id) {
            return Err(Error::Data("GAN training windows mix several labels".into()));
        }
        let dims = spec.dims();
        if windows.channels != dims.channels || windows.length != dims.length {
            return Err(Error::shape(
                "train_gan",
                &[windows.channels, windows.length],
                &[dims.channels, dims.length],
            ));
        }
        let mut rng = seeded(config.seed);
        let generator = ModelParams::init(spec.generator(), &mut rng)?;
        let discriminator = ModelParams::init(spec.discriminator(), &mut rng)?;
        Ok(Self {
            opt_g: OptimizerState::new(config.generator_optimizer, &generator.params)?,
            opt_d: OptimizerState::new(config.discriminator_optimizer, &discriminator.params)?,
            gate_rng: derive(config.seed, GATE_STREAM),
            collapse: CollapseDetector::new(config.collapse_window, config.collapse_epsilon),
            order: (0..windows.len()).collect(),
            cursor: windows.len(),
            real: windows.clone(),
            class_id,
            classifier,
            rng,
            generator,
            discriminator,
            config,
            log: TrainLog::default(),
            collapsed_at: None,
            best: None,
            converged: false,
        })
    }

    pub fn generator(&self) -> &ModelParams {
        &self.generator
    }

    pub fn discriminator(&self) -> &ModelParams {
        &self.discriminator
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn collapsed(&self) -> bool {
        self.collapsed_at.is_some()
    }

    /// Epochs completed.
    pub fn epoch_count(&self) -> usize {
        self.log.len()
    }

    fn batches_per_epoch(&self) -> usize {
        self.config
            .batches_per_epoch
            .unwrap_or_else(|| self.real.len().div_ceil(self.config.batch_size))
    }

    /// Next real indices from a reshuffled cycle over the class windows.
    fn next_real(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let idx = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        idx
    }

    fn fake_batch(&mut self, n: usize) -> Result<Tensor> {
        let g = &self.generator;
        let z = g.spec.sample_noise(n, &mut self.rng)?;
        let mut tape = Tape::new();
        let p = g.params.bind(&mut tape, false);
        let zv = tape.constant(z);
        let y = g.spec.forward(&mut tape, &p, zv, Mode::Train, &mut self.rng)?;
        Ok(tape.value(y).clone())
    }

    /// One discriminator update on a real batch (target 1) and as many
    /// generated windows (target 0). Returns the summed BCE of both halves.
    pub fn discriminator_step(&mut self) -> Result<f64> {
        let idx = self.next_real();
        let n = idx.len();
        let fake = self.fake_batch(n)?;
        let mut data = Vec::with_capacity(2 * fake.numel());
        for &i in &idx {
            data.extend_from_slice(self.real.windows[i].data.data());
        }
        data.extend_from_slice(fake.data());
        let x = Tensor::new(&[2 * n, self.real.channels, self.real.length], data)?;
        let targets: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();

        let d = &self.discriminator;
        let mut tape = Tape::new();
        let p = d.params.bind(&mut tape, true);
        let xv = tape.constant(x);
        let logits = d.spec.forward(&mut tape, &p, xv, Mode::Train, &mut self.rng)?;
        // mean over 2n = half the sum of the two per-half means
        let mean = loss::bce_with_logits(&mut tape, logits, &targets)?;
        let l = tape.scale(mean, 2.0);
        let value = tape.value(l).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "discriminator loss {value} at epoch {}",
                self.log.len() + 1
            )));
        }
        tape.backward(l)?;
        let grads = p.gradients(&tape);
        self.opt_d.step(&mut self.discriminator.params, grads)?;
        Ok(value)
    }

    /// One generator update through the frozen discriminator with the
    /// non-saturating objective `-log D(G(z))`.
    pub fn generator_step(&mut self, n: usize) -> Result<f64> {
        let (g, d) = (&self.generator, &self.discriminator);
        let z = g.spec.sample_noise(n, &mut self.rng)?;
        let mut tape = Tape::new();
        let gp = g.params.bind(&mut tape, true);
        let dp = d.params.bind(&mut tape, false);
        let zv = tape.constant(z);
        let fake = g.spec.forward(&mut tape, &gp, zv, Mode::Train, &mut self.rng)?;
        let logits = d.spec.forward(&mut tape, &dp, fake, Mode::Train, &mut self.rng)?;
        let l = loss::bce_with_logits(&mut tape, logits, &vec![1.0; n])?;
        let value = tape.value(l).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "generator loss {value} at epoch {}",
                self.log.len() + 1
            )));
        }
        tape.backward(l)?;
        let grads = gp.gradients(&tape);
        self.opt_g.step(&mut self.generator.params, grads)?;
        Ok(value)
    }

    /// Runs the gate on the current generator.
    pub fn gate(&mut self) -> Result<f64> {
        validation_gate(
            &self.generator,
            self.classifier,
            self.class_id,
            self.config.gate_sample_count,
            &mut self.gate_rng,
        )
    }

    /// One epoch of alternating updates, plus the gate when it is due.
    pub fn epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        let epoch = self.log.len() + 1;
        let batches = self.batches_per_epoch();
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for _ in 0..batches {
            let mut d_loss = 0.0;
            for _ in 0..self.config.discriminator_steps {
                d_loss += self.discriminator_step()?;
            }
            d_sum += d_loss / self.config.discriminator_steps as f64;
            g_sum += self.generator_step(self.config.batch_size.min(self.real.len()))?;
        }
        let d_loss = d_sum / batches as f64;
        let g_loss = g_sum / batches as f64;

        let gate_f1 = if epoch % self.config.gate_interval == 0 {
            let f1 = self.gate()?;
            if self.best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                self.best = Some((f1, self.generator.params.clone()));
            }
            if f1 >= self.config.gate_threshold {
                self.converged = true;
            }
            Some(f1)
        } else {
            None
        };
        if self.collapse.observe(d_loss) && self.collapsed_at.is_none() {
            self.collapsed_at = Some(epoch);
        }
        let record = EpochRecord {
            epoch,
            d_loss,
            g_loss,
            seconds: start.elapsed().as_secs_f64(),
            gate_f1,
        };
        self.log.entries.push(record.clone());
        Ok(record)
    }

    /// Trains until the gate passes, the detector flags collapse, or
    /// `max_epochs` is spent.
    pub fn run(mut self) -> Result<GanOutcome> {
        let start = Instant::now();
        while self.log.len() < self.config.max_epochs && !self.converged && self.collapsed_at.is_none() {
            self.epoch()?;
        }
        let total_seconds = start.elapsed().as_secs_f64();
        let best_gate_f1 = self.best.as_ref().map(|(f, _)| *f);
        let mut generator = self.generator;
        if let Some((_, params)) = self.best {
            generator.params = params;
        }
        Ok(GanOutcome {
            generator,
            discriminator: self.discriminator,
            log: self.log,
            converged: self.converged,
            collapsed_at: self.collapsed_at,
            best_gate_f1,
            seed: self.config.seed,
            total_seconds,
        })
    }
}

pub fn train_gan(
    spec: &GanSpec,
    windows: &WindowedDataset,
    classifier: &dyn Classify,
    config: &GanTrainConfig,
) -> Result<GanOutcome> {
    GanTrainer::new(spec, windows, classifier, config.clone())?.run()
}

/// Trains with seeds `config.seed`, `config.seed + 1`, ... until one run
/// converges or `attempts` runs are spent. Returns every attempt in order;
/// the last one is the converged run if any converged.
pub fn train_gan_with_retries(
    spec: &GanSpec,
    windows: &WindowedDataset,
    classifier: &dyn Classify,
    config: &GanTrainConfig,
    attempts: usize,
) -> Result<Vec<GanOutcome>> {
    let mut out = Vec::new();
    for a in 0..attempts.max(1) as u64 {
        let cfg = GanTrainConfig {
            seed: config.seed.wrapping_add(a),
            ..config.clone()
        };
        let outcome = train_gan(spec, windows, classifier, &cfg)?;
        let done = outcome.converged;
        out.push(outcome);
        if done {
            break;
        }
    }
    Ok(out)
}
