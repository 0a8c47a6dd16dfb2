use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use camrank_tensor::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::Adam;
use crate::data::{collate, load_sample, shuffle_order, DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::imageio;
use crate::losses::{joint_objective, structure_window, DenseTerms, LossReport, SimilarityPrior};
use crate::model::{checkpoint, CamRankNet};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
/// Trailing window of [`smoothed`].
pub const SMOOTHING_WINDOW: usize = 20;

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    #[serde(rename = "L_f")]
    pub l_f: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    pub lambda: f64,
    #[serde(rename = "L_fc")]
    pub l_fc: f64,
    #[serde(rename = "L_rpn")]
    pub l_rpn: f64,
    #[serde(rename = "L_rank")]
    pub l_rank: f64,
    #[serde(rename = "L_mask")]
    pub l_mask: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    /// `L_fc + L_total`, the minimised quantity.
    #[serde(rename = "total")]
    pub objective: f64,
}

impl LogRecord {
    pub fn new(iter: usize, r: &LossReport) -> Self {
        Self {
            iter,
            l_f: r.l_f,
            l_c: r.l_c,
            lambda: r.lambda,
            l_fc: r.l_fc,
            l_rpn: r.l_rpn,
            l_rank: r.l_rank,
            l_mask: r.l_mask,
            l_total: r.l_total,
            objective: r.objective,
        }
    }

    pub fn report(&self) -> LossReport {
        LossReport {
            l_f: self.l_f,
            l_c: self.l_c,
            lambda: self.lambda,
            l_fc: self.l_fc,
            l_rpn: self.l_rpn,
            l_rank: self.l_rank,
            l_mask: self.l_mask,
            l_total: self.l_total,
            objective: self.objective,
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Trailing mean over at most `window` values ending at each position.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Where training samples come from.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample `index`, already at the training resolution.
    fn sample(&self, index: usize) -> Result<Sample>;
}

/// Reads samples from disk on demand.
pub struct ManifestSource<'a> {
    manifest: &'a DatasetManifest,
    size: usize,
}

impl<'a> ManifestSource<'a> {
    pub fn new(manifest: &'a DatasetManifest, size: usize) -> Self {
        Self { manifest, size }
    }
}

impl SampleSource for ManifestSource<'_> {
    fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        load_sample(self.manifest, &self.manifest.entries[index], Some((self.size, self.size)))
    }
}

/// Samples held in memory, resized once up front.
pub struct MemorySource(Vec<Sample>);

impl MemorySource {
    pub fn new(samples: &[Sample], size: usize) -> Self {
        Self(samples.iter().map(|s| s.resized(size, size)).collect())
    }
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        Ok(self.0[index].clone())
    }
}

/// Optimisation state; one [`Trainer::step`] per iteration.
pub struct Trainer<S> {
    config: TrainConfig,
    source: S,
    net: CamRankNet,
    optimizer: Adam,
    prior: SimilarityPrior,
    iteration: usize,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl<S: SampleSource> Trainer<S> {
    pub fn new(config: &TrainConfig, source: S) -> Result<Self> {
        config.validate()?;
        if source.is_empty() {
            return Err(Error::invalid("the training corpus is empty"));
        }
        let net = CamRankNet::new(config.model_config())?;
        let optimizer = Adam::new(net.params(), config.learning_rate, config.adam, &config.lr_multipliers);
        let order = shuffle_order(config.seed, 0, source.len());
        Ok(Self {
            config: config.clone(),
            prior: config.similarity_prior()?,
            source,
            net,
            optimizer,
            iteration: 0,
            epoch: 0,
            order,
            cursor: 0,
        })
    }

    pub fn net(&self) -> &CamRankNet {
        &self.net
    }

    pub fn into_net(self) -> CamRankNet {
        self.net
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn next_indices(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.batch_size);
        while out.len() < self.config.batch_size {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.order = shuffle_order(self.config.seed, self.epoch, self.source.len());
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Runs one iteration and returns its losses. A non-finite component
    /// aborts with [`Error::Divergence`] before any weight is touched.
    pub fn step(&mut self) -> Result<LossReport> {
        let iter = self.iteration + 1;
        // seeded apart from the shuffle streams, which use the plain seed
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_cafe_f00d_d00d);
        rng.set_stream(iter as u64);
        let mut samples = Vec::with_capacity(self.config.batch_size);
        for i in self.next_indices() {
            let s = self.source.sample(i)?;
            samples.push(if rng.random_bool(self.config.flip_probability) { s.flipped() } else { s });
        }
        let batch = collate(&samples.iter().collect::<Vec<_>>())?;

        let mut g = Graph::new();
        let x = g.constant(batch.images.clone());
        let fwd = self.net.forward(&mut g, x)?;
        let targets = self.net.sample_targets(&g, &fwd, &batch.instances, &mut rng);
        let (rpn, roi) = self.net.ranking_terms(&mut g, &fwd, &targets);
        let (h, w) = fwd.image_hw;
        let dense = DenseTerms {
            fixation: fwd.fixation,
            fixation_gt: &batch.fix,
            segmentation: fwd.segmentation,
            segmentation_gt: &batch.seg,
            window: structure_window(h, w),
        };
        let losses = joint_objective(&mut g, &dense, &rpn, &roi, &self.prior, self.config.lambda);
        let report = losses.report(&g);
        if let Some(component) = report.non_finite() {
            return Err(Error::Divergence { iter, component });
        }
        let grads = g.backward(losses.objective).for_params(self.net.params());
        self.optimizer.step(self.net.params_mut(), &grads);
        self.iteration = iter;
        Ok(report)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub net: CamRankNet,
    pub log: Vec<LogRecord>,
    /// Checkpoints still on disk, oldest first.
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_path(out: &Path, iter: usize) -> PathBuf {
    out.join(format!("ckpt_{iter:06}.bin"))
}

/// Trains from a manifest, writing the config, the JSON-lines log and
/// checkpoints under `out`.
pub fn train(config: &TrainConfig, manifest: &DatasetManifest, out: &Path) -> Result<TrainOutcome> {
    manifest.check_files()?;
    train_from(config, ManifestSource::new(manifest, config.input_size), out)
}

pub fn train_from<S: SampleSource>(config: &TrainConfig, source: S, out: &Path) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, source)?;
    imageio::create_dir(out)?;
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, config.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    let log_path = out.join(LOG_FILE);
    let mut writer = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut log = Vec::with_capacity(config.iterations);
    let mut kept: Vec<PathBuf> = Vec::new();
    let save = |net: &CamRankNet, iter: usize, kept: &mut Vec<PathBuf>| -> Result<()> {
        let path = checkpoint_path(out, iter);
        checkpoint::save(&path, net, iter)?;
        kept.push(path);
        while kept.len() > config.keep_checkpoints {
            let old = kept.remove(0);
            std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
        }
        Ok(())
    };
    for _ in 0..config.iterations {
        let report = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                writer.flush().map_err(|io| Error::io(&log_path, io))?;
                return Err(e);
            }
        };
        let record = LogRecord::new(trainer.iteration(), &report);
        serde_json::to_writer(&mut writer, &record)?;
        writeln!(writer).map_err(|e| Error::io(&log_path, e))?;
        log.push(record);
        if trainer.iteration() % config.checkpoint_every == 0 {
            save(trainer.net(), trainer.iteration(), &mut kept)?;
        }
    }
    writer.flush().map_err(|e| Error::io(&log_path, e))?;
    if kept.last() != Some(&checkpoint_path(out, trainer.iteration())) {
        save(trainer.net(), trainer.iteration(), &mut kept)?;
    }
    Ok(TrainOutcome { net: trainer.into_net(), log, checkpoints: kept })
}
