use super::adam::AdamState;
use super::checkpoint::Checkpoint;
use super::config::{lr_schedule, TrainConfig};
use super::data::sample_batch;
use super::step::sasr_step;
use crate::error::{invalid, io_err, Result, SasrError};
use crate::imaging::PairedSample;
use crate::models::{Discriminator, Generator};
use crate::params::{ModelParams, ParamId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{BnStats, Tensor};
use std::path::Path;

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    /// Weighted supervised loss on the synthetic branch.
    pub l_sr: f64,
    pub l_adv_g: f64,
    pub l_se: f64,
    /// Zero in supervised-only training.
    pub l_d: f64,
}

impl LogRow {
    /// Generator objective with the configured weights.
    pub fn total(&self, cfg: &TrainConfig) -> f64 {
        self.l_sr + cfg.weights.adv * self.l_adv_g + cfg.weights.se * self.l_se
    }
}

pub const LOG_HEADER: [&str; 5] = ["step", "l_sr", "l_adv_g", "l_se", "l_d"];

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| SasrError::Report(e.to_string());
    w.write_record(LOG_HEADER).map_err(fail)?;
    for r in rows {
        w.write_record(&[
            r.step.to_string(),
            r.l_sr.to_string(),
            r.l_adv_g.to_string(),
            r.l_se.to_string(),
            r.l_d.to_string(),
        ])
        .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| SasrError::Report(e.to_string()))?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Models, optimiser state and progress counters of a training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub gen: Generator,
    pub disc: Discriminator,
    pub g_adam: AdamState,
    pub d_adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    pub step: u64,
}

const GEN_SEED_STREAM: u64 = 1;
const DISC_SEED_STREAM: u64 = 2;

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate().map_err(|detail| SasrError::Config { line: 0, detail })?;
        let gen = Generator::new(cfg.generator, super::data::sample_seed(cfg.seed, GEN_SEED_STREAM));
        let disc = Discriminator::new(cfg.disc_width, super::data::sample_seed(cfg.seed, DISC_SEED_STREAM));
        Ok(Self {
            g_adam: AdamState::new(&gen.params),
            d_adam: AdamState::new(&disc.params),
            cfg,
            gen,
            disc,
            epoch: 0,
            step: 0,
        })
    }

    /// Runs one epoch: seeded shuffle, then one D and one G update per batch.
    pub fn run_epoch(&mut self, corpus: &[PairedSample]) -> Result<Vec<LogRow>> {
        if corpus.is_empty() {
            return invalid("empty training corpus");
        }
        // Each epoch has its own stream, so resuming at any epoch boundary
        // replays exactly the batches an uninterrupted run would have seen.
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.epoch + 1);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let lr = lr_schedule(self.epoch as usize, &self.cfg);
        let mut rows = Vec::new();
        for chunk in order.chunks(self.cfg.batch) {
            let batch = sample_batch(corpus, chunk, &self.cfg, &mut rng)?;
            let s = sasr_step(
                &batch,
                &mut self.gen,
                &mut self.disc,
                &mut self.g_adam,
                &mut self.d_adam,
                lr,
                &self.cfg,
            )?;
            self.step += 1;
            rows.push(LogRow {
                step: self.step,
                l_sr: s.parts.sr(&self.cfg.weights),
                l_adv_g: s.parts.adv,
                l_se: s.parts.se,
                l_d: s.d_loss.unwrap_or(0.0),
            });
        }
        self.epoch += 1;
        Ok(rows)
    }

    /// Trains until `cfg.epochs` epochs are complete. With an output directory,
    /// the loss log and `checkpoint.bin` are written there on the checkpoint
    /// cadence, after the last epoch, and before any error is returned.
    pub fn train(&mut self, corpus: &[PairedSample], out: Option<&Path>) -> Result<Vec<LogRow>> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut log = Vec::new();
        while (self.epoch as usize) < self.cfg.epochs {
            match self.run_epoch(corpus) {
                Ok(rows) => log.extend(rows),
                Err(e) => {
                    if let Some(dir) = out {
                        // Best effort: keep the last good state; report the original failure.
                        let _ = self.flush(dir, &log);
                    }
                    return Err(e);
                }
            }
            let last = self.epoch as usize == self.cfg.epochs;
            if let Some(dir) = out {
                if last || self.epoch as usize % self.cfg.checkpoint_every == 0 {
                    self.flush(dir, &log)?;
                }
            }
        }
        Ok(log)
    }

    fn flush(&self, dir: &Path, log: &[LogRow]) -> Result<()> {
        write_log(&dir.join("loss_log.csv"), log)?;
        self.to_checkpoint().save(&dir.join("checkpoint.bin"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        export(&mut tensors, "gen", &self.gen.params, &self.gen.stats, &self.g_adam);
        export(&mut tensors, "disc", &self.disc.params, &self.disc.stats, &self.d_adam);
        Checkpoint {
            config: self.cfg.clone(),
            epoch: self.epoch,
            step: self.step,
            g_adam_step: self.g_adam.step,
            d_adam_step: self.d_adam.step,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(ckpt.config.clone())?;
        import(ckpt, "gen", &mut t.gen.params, &mut t.gen.stats, &mut t.g_adam)?;
        import(ckpt, "disc", &mut t.disc.params, &mut t.disc.stats, &mut t.d_adam)?;
        let expected = 3 * (t.gen.params.len() + t.disc.params.len())
            + 2 * (t.gen.stats.len() + t.disc.stats.len());
        if ckpt.tensors.len() != expected {
            return Err(SasrError::CorruptCheckpoint(format!(
                "{} tensors, expected {expected}",
                ckpt.tensors.len()
            )));
        }
        t.g_adam.step = ckpt.g_adam_step;
        t.d_adam.step = ckpt.d_adam_step;
        t.epoch = ckpt.epoch;
        t.step = ckpt.step;
        Ok(t)
    }
}

fn export(
    out: &mut Vec<(String, Tensor<f32>)>,
    prefix: &str,
    params: &ModelParams,
    stats: &[BnStats<f32>],
    adam: &AdamState,
) {
    for (i, (name, t)) in params.iter().enumerate() {
        out.push((format!("{prefix}/{name}"), t.clone()));
        out.push((format!("{prefix}.adam_m/{name}"), adam.m[i].clone()));
        out.push((format!("{prefix}.adam_v/{name}"), adam.v[i].clone()));
    }
    for (i, s) in stats.iter().enumerate() {
        let vec = |v: &[f32]| Tensor::new([v.len()], v.to_vec()).expect("1-D");
        out.push((format!("{prefix}.bn/{i}/mean"), vec(&s.running_mean)));
        out.push((format!("{prefix}.bn/{i}/var"), vec(&s.running_var)));
    }
}

fn import(
    ckpt: &Checkpoint,
    prefix: &str,
    params: &mut ModelParams,
    stats: &mut [BnStats<f32>],
    adam: &mut AdamState,
) -> Result<()> {
    let fetch = |name: String, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = ckpt.tensor(&name)?;
        if t.shape() != shape {
            return Err(SasrError::CorruptCheckpoint(format!(
                "`{name}` has shape {:?}, model expects {shape:?}",
                t.shape()
            )));
        }
        Ok(t.clone())
    };
    for i in 0..params.len() {
        let id = ParamId(i);
        let name = params.name(id).to_string();
        let shape = params.get(id).shape().to_vec();
        *params.get_mut(id) = fetch(format!("{prefix}/{name}"), &shape)?;
        adam.m[i] = fetch(format!("{prefix}.adam_m/{name}"), &shape)?;
        adam.v[i] = fetch(format!("{prefix}.adam_v/{name}"), &shape)?;
    }
    for (i, s) in stats.iter_mut().enumerate() {
        let c = [s.running_mean.len()];
        s.running_mean = fetch(format!("{prefix}.bn/{i}/mean"), &c)?.into_data();
        s.running_var = fetch(format!("{prefix}.bn/{i}/var"), &c)?.into_data();
    }
    Ok(())
}

/// Trains a fresh model on `corpus`.
pub fn train_loop(corpus: &[PairedSample], cfg: &TrainConfig, out: Option<&Path>) -> Result<(Trainer, Vec<LogRow>)> {
    let mut t = Trainer::new(cfg.clone())?;
    let log = t.train(corpus, out)?;
    Ok((t, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GeneratorConfig;
    use crate::training::data::synthesize_corpus;

    pub(crate) fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch: 4,
            epochs: 2,
            generator: GeneratorConfig {
                rdb_blocks: 2,
                ..GeneratorConfig::tiny()
            },
            disc_width: 4,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn corpus(n: usize) -> Vec<PairedSample> {
        synthesize_corpus(n, 96, 5).unwrap().into_iter().map(|s| s.pair).collect()
    }

    #[test]
    fn one_epoch_of_one_batch_is_one_step() {
        let cfg = TrainConfig {
            batch: 8,
            epochs: 1,
            ..tiny_config()
        };
        let (t, log) = train_loop(&corpus(8), &cfg, None).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!((t.step, t.g_adam.step, t.d_adam.step), (1, 1, 1));
        let r = log[0];
        assert!([r.l_sr, r.l_adv_g, r.l_se, r.l_d].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let data = corpus(6);
        let cfg = tiny_config();
        let (full, full_log) = train_loop(&data, &cfg, None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let first = TrainConfig { epochs: 1, ..cfg.clone() };
        let (_, head) = train_loop(&data, &first, Some(dir.path())).unwrap();
        let mut ckpt = Checkpoint::load(&dir.path().join("checkpoint.bin")).unwrap();
        ckpt.config.epochs = 2;
        let mut resumed = Trainer::from_checkpoint(&ckpt).unwrap();
        let tail = resumed.train(&data, None).unwrap();

        let joined: Vec<LogRow> = head.into_iter().chain(tail).collect();
        assert_eq!(joined, full_log);
        assert_eq!(resumed.to_checkpoint().encode(), full.to_checkpoint().encode());
        let text = std::fs::read_to_string(dir.path().join("loss_log.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "step,l_sr,l_adv_g,l_se,l_d");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn checkpoint_restores_every_tensor() {
        let (t, _) = train_loop(&corpus(4), &TrainConfig { epochs: 1, ..tiny_config() }, None).unwrap();
        let ckpt = t.to_checkpoint();
        let back = Trainer::from_checkpoint(&Checkpoint::decode(&ckpt.encode()).unwrap()).unwrap();
        assert_eq!(back.to_checkpoint(), ckpt);
        let mut short = ckpt.clone();
        short.tensors.pop();
        assert!(Trainer::from_checkpoint(&short).is_err());
    }

    #[test]
    fn supervised_only_skips_the_discriminator() {
        let cfg = TrainConfig {
            supervised_only: true,
            epochs: 1,
            ..tiny_config()
        };
        let (t, log) = train_loop(&corpus(4), &cfg, None).unwrap();
        assert_eq!(t.d_adam.step, 0);
        assert!(log.iter().all(|r| r.l_d == 0.0 && r.l_adv_g == 0.0 && r.l_se == 0.0));
    }
}
