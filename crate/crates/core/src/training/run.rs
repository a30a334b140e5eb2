use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::StageConfig;
use super::data::{Dataset, TrainSample};
use crate::error::{Error, Result};
use crate::model::SlideChat;
use crate::numerics::{AdamW, CheckpointMeta, Graph, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub stage: u8,
    pub loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StageReport {
    pub losses: Vec<LossRecord>,
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
    /// `(group, checksum)` of every group left frozen, taken after the run.
    pub frozen_checksums: Vec<(String, String)>,
}

impl StageReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().map(|r| r.loss)
    }
}

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut s = String::from("step,stage,loss\n");
    for r in records {
        writeln!(s, "{},{},{}", r.step, r.stage, r.loss).expect("string write");
    }
    s
}

/// Sample order for one epoch, shuffled from `(seed, stage, epoch)`.
pub fn epoch_order(n: usize, seeds: &SeedStream, stage: u8, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds.rng(&format!("shuffle.stage{stage}.epoch{epoch}")));
    order
}

/// Trains `model` for one stage. With `out_dir`, writes
/// `stage{K}_epoch{E}.ckpt` after every epoch, `stage{K}_best.ckpt` for the
/// lowest mean epoch loss, and `stage{K}_loss.csv`.
pub fn run_stage(
    model: &mut SlideChat,
    data: &Dataset,
    cfg: &StageConfig,
    seeds: &SeedStream,
    out_dir: Option<&Path>,
) -> Result<StageReport> {
    cfg.validate()?;
    data.validate()?;
    let samples: Vec<&TrainSample> = data.of_kinds(&cfg.tasks);
    if samples.is_empty() {
        return Err(Error::usage(format!("no {:?} samples for stage {}", cfg.tasks, cfg.stage)));
    }
    let groups: Vec<&str> = cfg.trainable.iter().map(String::as_str).collect();
    model.store.set_trainable_groups(&groups);
    let frozen: Vec<String> = model.store.groups().into_iter().filter(|g| !groups.contains(&g.as_str())).collect();
    let before: Vec<String> = frozen.iter().map(|g| model.store.group_checksum(g)).collect();

    let mut opt = AdamW::with_hyper(&model.store, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
    let mut report = StageReport::default();
    let mut best = f64::INFINITY;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let order = epoch_order(samples.len(), seeds, cfg.stage, epoch);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = samples[i];
                let slide = &data.slides[&s.slide_id];
                let mut g = Graph::new();
                let l = model.sample_loss(&mut g, slide, &s.prompt, &s.target)?;
                let value = g.value(l).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at stage {} step {} on slide `{}`",
                        cfg.stage,
                        step + 1,
                        s.slide_id
                    )));
                }
                let l = g.scale(l, 1.0 / batch.len() as f64);
                g.backward(l, &mut model.store)?;
                batch_loss += value / batch.len() as f64;
            }
            opt.step(&mut model.store)?;
            step += 1;
            epoch_sum += batch_loss * batch.len() as f64;
            report.losses.push(LossRecord { step, stage: cfg.stage, loss: batch_loss });
        }
        let epoch_loss = epoch_sum / samples.len() as f64;
        report.epoch_losses.push(epoch_loss);
        log::info!("stage {} epoch {epoch}: mean loss {epoch_loss:.6}", cfg.stage);
        if let Some(dir) = out_dir {
            let mut meta = CheckpointMeta::new(seeds.seed(), cfg.stage);
            meta.epoch = Some(epoch);
            let path = dir.join(format!("stage{}_epoch{epoch}.ckpt", cfg.stage));
            model.save(&path, meta.clone())?;
            report.checkpoints.push(path);
            if epoch_loss < best {
                best = epoch_loss;
                let path = dir.join(format!("stage{}_best.ckpt", cfg.stage));
                model.save(&path, meta)?;
                if !report.checkpoints.contains(&path) {
                    report.checkpoints.push(path);
                }
            }
        }
    }
    model.store.zero_grads();

    let after: Vec<String> = frozen.iter().map(|g| model.store.group_checksum(g)).collect();
    if before != after {
        return Err(Error::usage("a frozen parameter group changed during training"));
    }
    report.frozen_checksums = frozen.into_iter().zip(after).collect();
    if let Some(dir) = out_dir {
        let path = dir.join(format!("stage{}_loss.csv", cfg.stage));
        std::fs::write(&path, loss_csv(&report.losses)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
