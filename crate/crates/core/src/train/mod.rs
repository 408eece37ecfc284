//! Mini-batch training with per-sample gradient accumulation.
//!
//! Every epoch visits the training set in an order drawn from a ChaCha8
//! stream keyed by `(seed, epoch)`, so a resumed run replays exactly the
//! order an uninterrupted run would have used. Gradients are averaged
//! over each batch before one Adam step, and sigma is clamped after it.

pub mod adam;
pub mod checkpoint;
pub mod loss;

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexbuild::ComplexGraph;
use crate::gat::{forward, HeadKind, Model, ModelConfig, ModelError, ModelKind};
use crate::metrics::{
    classification_metrics, regression_metrics, MetricReport, MetricsError, PredictionRecord,
};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorError};

use adam::{AdamConfig, AdamState};
use checkpoint::{Checkpoint, TrainingState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("numeric failure on sample '{sample_id}': {source}")]
    Numeric {
        sample_id: String,
        source: TensorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("sample '{sample_id}' has a {kind} label, which the {head} head cannot use")]
    LabelKind {
        sample_id: String,
        kind: &'static str,
        head: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub head: HeadKind,
    pub dim: usize,
    pub n_blocks: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Probability cut for the confusion-matrix metrics.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            model: m.model,
            head: m.head,
            dim: m.dim,
            n_blocks: m.n_blocks,
            hidden: m.hidden,
            lr: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            model: self.model,
            head: self.head,
            dim: self.dim,
            n_blocks: self.n_blocks,
            hidden: self.hidden.clone(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model_config().validate()?;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(TrainError::Config(format!("threshold {}", self.threshold)));
        }
        Ok(())
    }

    /// One-line `key=value` summary used as the log header.
    pub fn summary(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        format!(
            "lr={} blocks={} dim={} epochs={} batch={} seed={} model={} head={} hidden={} threshold={}",
            self.lr,
            self.n_blocks,
            self.dim,
            self.epochs,
            self.batch_size,
            self.seed,
            self.model.as_str(),
            self.head.as_str(),
            hidden.join("-"),
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss seen during the epoch's updates.
    pub train_loss: f64,
    /// Accuracy (cls) or RMSE (reg) of the end-of-epoch weights.
    pub train_metric: f64,
    pub eval: Option<MetricReport>,
}

/// Per-sample loss for the configured head.
pub fn sample_loss<'t, T: Scalar>(
    head: HeadKind,
    out: crate::tensor::Var<'t, T>,
    label: f64,
) -> Result<crate::tensor::Var<'t, T>, TensorError> {
    match head {
        HeadKind::Cls => loss::bce_var(out, T::of(label)),
        HeadKind::Reg => loss::squared_error_var(out, T::of(label)),
    }
}

/// Loss and parameter gradients (in [`crate::gat::Params::named`] order)
/// for one complex.
pub fn loss_and_grads<T: Scalar>(
    model: &Model<T>,
    graph: &ComplexGraph,
) -> Result<(T, Vec<Tensor<T>>), TrainError> {
    let numeric = |source| TrainError::Numeric {
        sample_id: graph.meta.sample_id.clone(),
        source,
    };
    let tape = Tape::new();
    let p = model.bind(&tape, true);
    let out = forward(&tape, &model.config, &p, graph).map_err(|e| match e {
        ModelError::Tensor(t) => numeric(t),
        other => TrainError::Model(other),
    })?;
    let l = sample_loss(model.config.head, out, graph.label.value).map_err(numeric)?;
    let grads = tape.backward(l).map_err(numeric)?;
    let g = p
        .named()
        .into_iter()
        .map(|(_, v)| grads.get_or_zeros(*v))
        .collect();
    Ok((l.value().item(), g))
}

/// One prediction row; gnnf complexes without interactions get a warning.
pub fn prediction_record<T: Scalar>(
    model: &Model<T>,
    graph: &ComplexGraph,
) -> Result<PredictionRecord, ModelError> {
    let score = model.predict(graph)?;
    let warning = (model.config.model == ModelKind::Gnnf && graph.interactions.is_empty())
        .then(|| "no_interactions".to_string());
    Ok(PredictionRecord {
        sample_id: graph.meta.sample_id.clone(),
        target_id: graph.meta.target_id.clone(),
        pose_rank: graph.meta.pose_rank,
        score,
        label: graph.label.value,
        rmsd: graph.meta.rmsd,
        warning,
    })
}

pub fn predict_all<T: Scalar>(
    model: &Model<T>,
    graphs: &[ComplexGraph],
) -> Result<Vec<PredictionRecord>, ModelError> {
    graphs.iter().map(|g| prediction_record(model, g)).collect()
}

pub fn evaluate(
    head: HeadKind,
    records: &[PredictionRecord],
    threshold: f64,
) -> Result<MetricReport, MetricsError> {
    Ok(match head {
        HeadKind::Cls => MetricReport::Classification(classification_metrics(records, threshold)?),
        HeadKind::Reg => MetricReport::Regression(regression_metrics(records)?),
    })
}

fn check_labels(head: HeadKind, graphs: &[ComplexGraph]) -> Result<(), TrainError> {
    for g in graphs {
        if g.label.kind.is_classification() != (head == HeadKind::Cls) {
            return Err(TrainError::LabelKind {
                sample_id: g.meta.sample_id.clone(),
                kind: g.label.kind.as_str(),
                head: head.as_str(),
            });
        }
    }
    Ok(())
}

/// Visiting order for `epoch` (0-based).
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub epochs_completed: usize,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh weights from `config.seed`; the regression bias starts at
    /// the mean training label.
    pub fn new(config: TrainConfig, train: &[ComplexGraph]) -> Result<Self, TrainError> {
        config.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        check_labels(config.head, train)?;
        let mean = train.iter().map(|g| g.label.value).sum::<f64>() / train.len() as f64;
        let model = Model::init(config.model_config(), config.seed, mean)?;
        let adam = AdamState::zeros_like(model.params.named().into_iter().map(|(_, t)| t));
        Ok(Self {
            config,
            model,
            adam,
            epochs_completed: 0,
        })
    }

    /// Continues from a checkpoint that carries optimizer state. The
    /// stored configuration wins except for `epochs`, taken from `epochs`.
    pub fn resume(ck: Checkpoint<T>, epochs: Option<usize>) -> Result<Self, TrainError> {
        let state = ck
            .training
            .ok_or_else(|| TrainError::Config("checkpoint has no optimizer state".into()))?;
        let mut config = state.config;
        if let Some(e) = epochs {
            config.epochs = e;
        }
        config.validate()?;
        Ok(Self {
            config,
            model: ck.model,
            adam: state.adam,
            epochs_completed: state.epochs_completed,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            model: self.model.clone(),
            training: Some(TrainingState {
                epochs_completed: self.epochs_completed,
                adam: self.adam.clone(),
                config: self.config.clone(),
            }),
        }
    }

    pub fn run_epoch(
        &mut self,
        train: &[ComplexGraph],
        eval: Option<&[ComplexGraph]>,
    ) -> Result<EpochLog, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        check_labels(self.config.head, train)?;
        let adam_cfg = self.config.adam();
        let order = epoch_order(self.config.seed, self.epochs_completed, train.len());
        let mut total_loss = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let mut acc: Option<Vec<Tensor<T>>> = None;
            for &i in batch {
                let (l, g) = loss_and_grads(&self.model, &train[i])?;
                total_loss += l.as_f64();
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => a.iter_mut().zip(&g).for_each(|(x, y)| x.add_assign(y)),
                }
            }
            let inv = T::one() / T::of(batch.len() as f64);
            let grads: Vec<Tensor<T>> = acc
                .expect("non-empty batch")
                .into_iter()
                .map(|g| g.map(|v| v * inv))
                .collect();
            let mut slots = self.model.params.slots_mut();
            self.adam.step(&adam_cfg, &mut slots, &grads)?;
            self.model.apply_constraints();
        }
        self.epochs_completed += 1;

        let train_records = predict_all(&self.model, train)?;
        let train_metric = match evaluate(self.config.head, &train_records, self.config.threshold)?
        {
            MetricReport::Classification(c) => c.accuracy,
            MetricReport::Regression(r) => r.rmse,
        };
        let eval = match eval {
            Some(set) if !set.is_empty() => {
                let recs = predict_all(&self.model, set)?;
                Some(evaluate(self.config.head, &recs, self.config.threshold)?)
            }
            _ => None,
        };
        Ok(EpochLog {
            epoch: self.epochs_completed,
            train_loss: total_loss / train.len() as f64,
            train_metric,
            eval,
        })
    }

    /// Runs epochs until `config.epochs` are done or `hook` breaks.
    pub fn fit(
        &mut self,
        train: &[ComplexGraph],
        eval: Option<&[ComplexGraph]>,
        mut hook: impl FnMut(&Self, &EpochLog) -> ControlFlow<()>,
    ) -> Result<Vec<EpochLog>, TrainError> {
        let mut logs = Vec::new();
        while self.epochs_completed < self.config.epochs {
            let log = self.run_epoch(train, eval)?;
            let flow = hook(self, &log);
            logs.push(log);
            if flow.is_break() {
                break;
            }
        }
        Ok(logs)
    }
}

/// Trains an f64 model from scratch for `config.epochs` epochs.
pub fn train(
    config: TrainConfig,
    train: &[ComplexGraph],
    eval: Option<&[ComplexGraph]>,
) -> Result<(Trainer<f64>, Vec<EpochLog>), TrainError> {
    let mut t = Trainer::new(config, train)?;
    let logs = t.fit(train, eval, |_, _| ControlFlow::Continue(()))?;
    Ok((t, logs))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// Training log as CSV, headed by a `# key=value` comment line.
pub fn log_csv(config: &TrainConfig, logs: &[EpochLog]) -> String {
    let mut out = format!("# {}\n", config.summary());
    let metric = match config.head {
        HeadKind::Cls => "train_accuracy",
        HeadKind::Reg => "train_rmse",
    };
    let eval_names: Vec<&str> = logs
        .iter()
        .find_map(|l| l.eval.as_ref())
        .map(|r| r.entries().into_iter().map(|(n, _)| n).collect())
        .unwrap_or_default();
    out.push_str(&format!("epoch,train_loss,{metric}"));
    for n in &eval_names {
        out.push_str(&format!(",eval_{n}"));
    }
    out.push('\n');
    for l in logs {
        let _ = write!(out, "{},{},{}", l.epoch, l.train_loss, l.train_metric);
        match &l.eval {
            Some(r) => {
                for (_, v) in r.entries() {
                    let _ = write!(out, ",{}", fmt_opt(v));
                }
            }
            None => {
                for _ in &eval_names {
                    out.push_str(",undefined");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::synthetic::{classification_set, regression_set, SyntheticConfig};

    fn small(model: ModelKind, head: HeadKind) -> TrainConfig {
        TrainConfig {
            model,
            head,
            dim: 3,
            n_blocks: 2,
            hidden: vec![5, 4],
            lr: 1e-2,
            epochs: 3,
            batch_size: 4,
            seed: 5,
            threshold: 0.5,
        }
    }

    /// Central differences over every scalar parameter.
    fn check_gradients(model: &Model<f64>, graph: &ComplexGraph) -> f64 {
        let (_, analytic) = loss_and_grads(model, graph).unwrap();
        let loss_of = |m: &Model<f64>| {
            let tape = Tape::new();
            let p = m.bind(&tape, false);
            let out = forward(&tape, &m.config, &p, graph).unwrap();
            sample_loss(m.config.head, out, graph.label.value)
                .unwrap()
                .value()
                .item()
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let n_slots = analytic.len();
        for k in 0..n_slots {
            let len = analytic[k].len();
            for idx in 0..len {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.params.slots_mut()[k].data_mut()[idx] += h;
                minus.params.slots_mut()[k].data_mut()[idx] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let a = analytic[k].data()[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-5);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let syn = SyntheticConfig::default();
        let cls = classification_set(&syn, 2, 1);
        let reg = regression_set(&syn, 4, 0.5);
        for model_kind in [ModelKind::Gnnf, ModelKind::Gnnp] {
            for (head, set) in [(HeadKind::Cls, &cls), (HeadKind::Reg, &reg)] {
                let cfg = small(model_kind, head);
                // regression bias well above zero keeps the final relu active
                let m = Model::<f64>::init(cfg.model_config(), 21, 3.0).unwrap();
                for g in set.iter().filter(|g| !g.interactions.is_empty()).take(2) {
                    let worst = check_gradients(&m, g);
                    assert!(worst < 1e-4, "{model_kind:?}/{head:?}: {worst}");
                }
            }
        }
    }

    #[test]
    fn sigma_and_mu_receive_gradient() {
        let syn = SyntheticConfig::default();
        let g = &classification_set(&syn, 1, 0)[0];
        let m = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls).model_config(), 2, 0.0)
            .unwrap();
        let (_, grads) = loss_and_grads(&m, g).unwrap();
        let names: Vec<String> = m.params.named().into_iter().map(|(n, _)| n).collect();
        let mu = names.iter().position(|n| n == "mu").unwrap();
        let sigma = names.iter().position(|n| n == "sigma").unwrap();
        assert!(grads[mu].item() != 0.0);
        assert!(grads[sigma].item() != 0.0);
    }

    #[test]
    fn epoch_order_depends_on_seed_and_epoch_only() {
        assert_eq!(epoch_order(1, 4, 30), epoch_order(1, 4, 30));
        assert_ne!(epoch_order(1, 4, 30), epoch_order(1, 5, 30));
        assert_ne!(epoch_order(1, 4, 30), epoch_order(2, 4, 30));
        let mut o = epoch_order(9, 0, 30);
        o.sort();
        assert_eq!(o, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn loss_decreases_over_training() {
        let set = classification_set(&SyntheticConfig::default(), 4, 4);
        let mut cfg = small(ModelKind::Gnnf, HeadKind::Cls);
        cfg.epochs = 30;
        let (_, logs) = train(cfg, &set, None).unwrap();
        assert!(logs.last().unwrap().train_loss < logs[0].train_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let set = classification_set(&SyntheticConfig::default(), 2, 2);
        let mut cfg = small(ModelKind::Gnnp, HeadKind::Cls);
        cfg.lr = 0.0;
        let before = Trainer::<f64>::new(cfg.clone(), &set).unwrap().model;
        let (after, _) = train(cfg, &set, None).unwrap();
        assert_eq!(after.model, before);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let set = classification_set(&SyntheticConfig::default(), 3, 3);
        let mut cfg = small(ModelKind::Gnnf, HeadKind::Cls);
        cfg.epochs = 4;
        let (full, full_logs) = train(cfg.clone(), &set, None).unwrap();

        let mut first = Trainer::<f64>::new(cfg.clone(), &set).unwrap();
        first.config.epochs = 2;
        first
            .fit(&set, None, |_, _| ControlFlow::Continue(()))
            .unwrap();
        let mut second = Trainer::resume(first.checkpoint(), Some(4)).unwrap();
        let tail = second
            .fit(&set, None, |_, _| ControlFlow::Continue(()))
            .unwrap();
        assert_eq!(second.model, full.model);
        assert_eq!(tail, full_logs[2..]);
    }

    #[test]
    fn hook_can_stop_early() {
        let set = classification_set(&SyntheticConfig::default(), 2, 2);
        let mut t = Trainer::<f64>::new(small(ModelKind::Gnnf, HeadKind::Cls), &set).unwrap();
        let logs = t
            .fit(&set, None, |_, l| {
                if l.epoch == 2 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })
            .unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(t.epochs_completed, 2);
    }

    #[test]
    fn label_kind_must_match_head() {
        let set = classification_set(&SyntheticConfig::default(), 1, 1);
        assert!(matches!(
            Trainer::<f64>::new(small(ModelKind::Gnnf, HeadKind::Reg), &set),
            Err(TrainError::LabelKind { .. })
        ));
        assert!(matches!(
            Trainer::<f64>::new(small(ModelKind::Gnnf, HeadKind::Cls), &[]),
            Err(TrainError::EmptyDataset)
        ));
        let mut bad = small(ModelKind::Gnnf, HeadKind::Cls);
        bad.batch_size = 0;
        assert!(matches!(
            Trainer::<f64>::new(bad, &set),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn logged_train_metric_matches_rescoring() {
        let set = classification_set(&SyntheticConfig::default(), 3, 3);
        let (t, logs) = train(small(ModelKind::Gnnp, HeadKind::Cls), &set, Some(&set)).unwrap();
        let recs = predict_all(&t.model, &set).unwrap();
        let MetricReport::Classification(c) = evaluate(HeadKind::Cls, &recs, 0.5).unwrap() else {
            panic!("classification report expected");
        };
        assert_eq!(logs.last().unwrap().train_metric, c.accuracy);
        let csv = log_csv(&t.config, &logs);
        assert!(csv.starts_with("# lr=0.01 blocks=2 dim=3 "));
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("epoch,train_loss,train_accuracy,eval_n"));
        assert_eq!(csv.lines().count(), 2 + logs.len());
    }

    #[test]
    fn warning_marks_complexes_without_interactions() {
        let set = classification_set(&SyntheticConfig::default(), 1, 1);
        let m = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls).model_config(), 0, 0.0)
            .unwrap();
        let recs = predict_all(&m, &set).unwrap();
        assert_eq!(recs[0].warning, None);
        assert_eq!(recs[1].warning.as_deref(), Some("no_interactions"));
    }

    #[test]
    fn f32_training_runs() {
        let set = classification_set(&SyntheticConfig::default(), 2, 2);
        let mut t = Trainer::<f32>::new(small(ModelKind::Gnnf, HeadKind::Cls), &set).unwrap();
        let logs = t.fit(&set, None, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(logs.len(), 3);
        assert!(logs.iter().all(|l| l.train_loss.is_finite()));
    }
}
