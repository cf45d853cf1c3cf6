//! The training loop: per-epoch negative sampling, semantic-graph rebuilds,
//! Adam updates, evaluation and early stopping on eval AUC.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::checkpoint::Checkpoint;
use crate::config::{ModelConfig, RebuildSchedule};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{ctr, CtrResult};
use crate::ingest::Interaction;
use crate::objective::{encode, final_representations, loss_and_grad, FinalReps, Graphs, LossParts, LossWeights, Triple};
use crate::optim::{Adam, AdamConfig};
use crate::params::Params;
use crate::rng::Rng;

/// One record of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_bpr: f64,
    pub l_local: f64,
    pub l_global: f64,
    pub l_total: f64,
    pub eval_auc: f64,
    pub eval_f1: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

impl EpochMetrics {
    /// One JSON object; reals use the shortest exact representation.
    pub fn to_line(&self) -> String {
        format!(
            "{{\"epoch\":{},\"l_bpr\":{:?},\"l_local\":{:?},\"l_global\":{:?},\"l_total\":{:?},\"eval_auc\":{:?},\"eval_f1\":{:?},\"wall_time\":{:.3}}}",
            self.epoch, self.l_bpr, self.l_local, self.l_global, self.l_total, self.eval_auc, self.eval_f1, self.wall_time
        )
    }
}

/// Removes the `wall_time` field from a metrics line; the rest of a line is a
/// deterministic function of the seed.
pub fn strip_wall_time(line: &str) -> &str {
    match line.find(",\"wall_time\"") {
        Some(p) => &line[..p],
        None => line,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters and semantic graph of the best eval epoch (the
    /// initialization when no epoch ran).
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub stopped_early: bool,
    pub test: Option<CtrResult>,
}

/// Final representations of every user and item.
pub fn representations(graphs: &Graphs, params: &Params, cfg: &ModelConfig) -> Result<FinalReps> {
    final_representations(&encode(graphs, params, cfg)?)
}

pub fn score_records(reps: &FinalReps, records: &[Interaction]) -> (Vec<bool>, Vec<f64>) {
    records.iter().map(|r| (r.label, reps.score(r.user, r.item))).unzip()
}

pub fn evaluate_ctr(reps: &FinalReps, records: &[Interaction]) -> Result<CtrResult> {
    let (labels, scores) = score_records(reps, records);
    ctr(&labels, &scores)
}

/// Sorted train positives of every user.
pub fn user_positive_lists(n_users: usize, positives: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); n_users];
    for &(u, i) in positives {
        lists[u].push(i);
    }
    for l in lists.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    lists
}

/// One `(u, i, j)` triple per train positive with `j` drawn uniformly from
/// the items `u` has no train positive for; shuffled.
pub fn sample_triples(positives: &[(usize, usize)], lists: &[Vec<usize>], n_items: usize, rng: &mut Rng) -> Vec<Triple> {
    let mut out = Vec::with_capacity(positives.len());
    for &(u, i) in positives {
        let own = &lists[u];
        if own.len() >= n_items {
            continue;
        }
        // Draw the k-th item outside the sorted positive list.
        let mut k = rng.gen_range(0..n_items - own.len());
        for &p in own {
            if p <= k {
                k += 1;
            } else {
                break;
            }
        }
        out.push((u, i, k));
    }
    out.shuffle(rng);
    out
}

fn distinct_at_least_two(xs: impl Iterator<Item = usize>) -> bool {
    let mut first = None;
    for x in xs {
        match first {
            None => first = Some(x),
            Some(f) if f != x => return true,
            _ => {}
        }
    }
    false
}

/// Trains on `data` and returns the best-eval checkpoint and per-epoch metrics.
/// `on_epoch` sees each metrics record as soon as it is complete.
pub fn train(cfg: &ModelConfig, data: &Dataset, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let shape = data.shape(cfg.dim);
    let root = Rng::new(cfg.seed);
    let mut params = Params::init(shape, &mut root.fork(0));
    let mut sampler = root.fork(1);

    let positives = data.split.train_positives();
    let lists = user_positive_lists(shape.n_users, &positives);
    let mut graphs = Graphs::new(shape, &positives, &data.kg)?;
    graphs.rebuild_semantic(&params, cfg, 0)?;
    let snapshot = |params: &Params, graphs: &Graphs| Checkpoint {
        params: params.clone(),
        semantic: Some(graphs.semantic().clone()),
        config: cfg.clone(),
    };
    let mut best = snapshot(&params, &graphs);
    let mut best_epoch = 0;
    let mut best_auc = f64::NEG_INFINITY;
    let mut metrics = Vec::new();
    let mut stopped_early = false;

    let mut adam = Adam::new(AdamConfig::new(cfg.learning_rate), &params);
    let weights = LossWeights::from_config(cfg);
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.rebuild == RebuildSchedule::Epoch && epoch > 1 {
            graphs.rebuild_semantic(&params, cfg, epoch - 1)?;
        }
        let triples = sample_triples(&positives, &lists, shape.n_items, &mut sampler);
        let mut sums = LossParts::default();
        let mut seen = 0usize;
        for batch in triples.chunks(cfg.batch_size) {
            let mut w = weights;
            let contrast_ok = distinct_at_least_two(batch.iter().map(|t| t.0))
                && distinct_at_least_two(batch.iter().map(|t| t.1));
            if !contrast_ok {
                log::debug!("epoch {epoch}: batch of {} has too few distinct nodes to contrast", batch.len());
                w.local = 0.0;
                w.global = 0.0;
            }
            let (parts, grad) = loss_and_grad(&graphs, &params, batch, w, cfg, true)?;
            let grad = grad.expect("backward requested");
            adam.step(&mut params, &grad);
            if !params.all_finite() {
                return Err(Error::NonFiniteLoss(format!("parameters diverged in epoch {epoch}")));
            }
            let n = batch.len() as f64;
            sums.bpr += parts.bpr * n;
            sums.local += parts.local * n;
            sums.global += parts.global * n;
            sums.total += parts.total * n;
            seen += batch.len();
            if cfg.rebuild == RebuildSchedule::Steps && adam.step % cfg.rebuild_every as u64 == 0 {
                graphs.rebuild_semantic(&params, cfg, epoch)?;
            }
        }
        let n = seen.max(1) as f64;
        let reps = representations(&graphs, &params, cfg)?;
        let eval = evaluate_ctr(&reps, &data.split.eval)?;
        let m = EpochMetrics {
            epoch,
            l_bpr: sums.bpr / n,
            l_local: sums.local / n,
            l_global: sums.global / n,
            l_total: sums.total / n,
            eval_auc: eval.auc,
            eval_f1: eval.f1,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", m.to_line());
        on_epoch(&m);
        metrics.push(m);
        if eval.auc > best_auc {
            best_auc = eval.auc;
            best_epoch = epoch;
            best = snapshot(&params, &graphs);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                log::info!("early stop at epoch {epoch}; best eval AUC {best_auc} at epoch {best_epoch}");
                break;
            }
        }
    }

    let test = if data.split.test.is_empty() {
        None
    } else {
        let mut g = graphs;
        if let Some(s) = &best.semantic {
            g.set_semantic(s.clone())?;
        }
        Some(evaluate_ctr(&representations(&g, &best.params, cfg)?, &data.split.test)?)
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        metrics,
        stopped_early,
        test,
    })
}

/// Graphs of `data` with the checkpoint's semantic graph (rebuilt from its
/// parameters when it carries none).
pub fn graphs_for(checkpoint: &Checkpoint, data: &Dataset) -> Result<Graphs> {
    checkpoint.check_shape(data.shape(checkpoint.config.dim))?;
    let mut g = Graphs::new(checkpoint.shape(), &data.split.train_positives(), &data.kg)?;
    match &checkpoint.semantic {
        Some(s) => g.set_semantic(s.clone())?,
        None => g.rebuild_semantic(&checkpoint.params, &checkpoint.config, 0)?,
    }
    Ok(g)
}
