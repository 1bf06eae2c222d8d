//! Minibatch ADAM training with plateau learning-rate halving, periodic
//! batch halving and best-validation checkpointing.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelMetadata};
use super::{adam_step, init_network, AdamState, Architecture, LossSums, LossValue, Network};
use crate::dataset::{SampleSource, SampleTriple};
use crate::encoding::{assemble_features, average_luminance_map, EncodingConstants, FeatureContext, N_FEATURES};
use crate::error::{Error, Result};
use crate::sampler::{DomainBounds, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub encoding: EncodingConstants,
    pub bounds: DomainBounds,
    /// RER weight.
    pub lambda: f64,
    pub lr0: f64,
    pub lr_factor: f64,
    pub plateau_patience: usize,
    /// Relative validation improvement below which an epoch counts as stagnant.
    pub plateau_min_improvement: f64,
    /// Initial batch, in images' worth of pixel rows.
    pub batch0_images: usize,
    /// Smallest batch, in images' worth of pixel rows.
    pub batch_min_images: usize,
    pub batch_halve_after: usize,
    pub lr_threshold: f64,
    pub val_loss_stop: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            encoding: EncodingConstants::default(),
            bounds: DomainBounds::default(),
            lambda: 10.0,
            lr0: 1e-3,
            lr_factor: 2.0,
            plateau_patience: 3,
            plateau_min_improvement: 1e-6,
            batch0_images: 6,
            batch_min_images: 1,
            batch_halve_after: 30,
            lr_threshold: 1e-10,
            val_loss_stop: 1e-10,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.encoding.validate()?;
        let positive = [
            ("lr0", self.lr0),
            ("lr_threshold", self.lr_threshold),
            ("val_loss_stop", self.val_loss_stop),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lr_factor > 1.0) {
            return Err(Error::invalid("lr_factor must exceed 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(self.plateau_min_improvement >= 0.0) {
            return Err(Error::invalid("plateau_min_improvement must be non-negative"));
        }
        if self.plateau_patience == 0 || self.batch_halve_after == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience, halving period and max_epochs must be positive"));
        }
        if self.batch_min_images == 0 || self.batch_min_images > self.batch0_images {
            return Err(Error::invalid("need 1 <= batch_min_images <= batch0_images"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub batch_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// `epoch,train_loss,val_loss,lr,batch_rows`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr,batch_rows\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.lr, e.batch_rows
            ));
        }
        s
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.val_loss).min_by(f64::total_cmp)
    }
}

/// Pooled pixel rows with targets and solid-angle weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRows {
    pub features: Array2<f64>,
    pub targets: Vec<f64>,
    pub omega: Vec<f64>,
}

impl TrainingRows {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn check(&self, what: &str) -> Result<()> {
        let n = self.features.nrows();
        if n == 0 || self.features.ncols() != N_FEATURES || self.targets.len() != n || self.omega.len() != n {
            return Err(Error::invalid(format!("{what} rows are empty or inconsistent")));
        }
        Ok(())
    }

    fn gather(&self, idx: &[usize]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        (
            self.features.select(Axis(0), idx),
            idx.iter().map(|&i| self.targets[i]).collect(),
            idx.iter().map(|&i| self.omega[i]).collect(),
        )
    }
}

/// Feature rows of every pixel of `samples`, pooled in sample order.
pub fn build_training_rows(samples: &[SampleTriple], ctx: FeatureContext<'_>) -> Result<TrainingRows> {
    let mut parts = Vec::with_capacity(samples.len());
    for s in samples {
        parts.push(assemble_features(s, ctx)?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
    let features = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::data(format!("cannot pool feature rows: {e}")))?;
    let mut targets = Vec::with_capacity(features.nrows());
    let mut omega = Vec::with_capacity(features.nrows());
    for p in parts {
        targets.extend(p.target.expect("training rows carry targets"));
        omega.extend(p.omega);
    }
    Ok(TrainingRows {
        features,
        targets,
        omega,
    })
}

fn load_samples(source: &dyn SampleSource, indices: &[usize]) -> Result<Vec<SampleTriple>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        indices.par_iter().map(|&i| source.sample(i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        indices.iter().map(|&i| source.sample(i)).collect()
    }
}

/// Trains a model on the schedule's train samples, checkpointing on its
/// validation samples.
pub fn train(source: &dyn SampleSource, schedule: &Schedule, config: &TrainConfig) -> Result<(Model, History)> {
    config.validate()?;
    if schedule.train.is_empty() || schedule.validation.is_empty() {
        return Err(Error::invalid("schedule needs nonempty train and validation sets"));
    }
    schedule.check_range(source.len())?;
    let (w, h) = source.dims();
    let train_samples = load_samples(source, &schedule.train)?;
    let val_samples = load_samples(source, &schedule.validation)?;
    let avg = average_luminance_map(train_samples.iter().map(|s| &s.interior), &config.encoding)?;
    let ctx = FeatureContext {
        avg: &avg,
        encoding: &config.encoding,
        bounds: &config.bounds,
    };
    let train_rows = build_training_rows(&train_samples, ctx)?;
    let val_rows = build_training_rows(&val_samples, ctx)?;
    drop(train_samples);
    drop(val_samples);
    let net = init_network(&config.architecture, config.seed)?;
    let (best, history) = train_on_rows(net, &train_rows, &val_rows, config, w * h)?;
    let best_epoch = history
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .map(|e| e.epoch);
    let model = Model {
        network: best,
        encoding: config.encoding,
        bounds: config.bounds,
        avg,
        metadata: ModelMetadata {
            seed: config.seed,
            epochs_run: history.epochs.len(),
            best_val_loss: history.best_val_loss(),
            best_epoch,
        },
    };
    Ok((model, history))
}

fn batch_loss(net: &Network, rows: &TrainingRows, lambda: f64) -> Result<LossValue> {
    let y = net.forward(rows.features.view())?;
    let mut sums = LossSums::default();
    sums.add(y.iter().copied(), &rows.targets, &rows.omega);
    Ok(sums.finish(lambda))
}

/// The optimization loop on pre-built rows. `image_rows` is the batch unit.
/// Returns the best-validation network.
pub fn train_on_rows(
    mut net: Network,
    train_rows: &TrainingRows,
    val_rows: &TrainingRows,
    config: &TrainConfig,
    image_rows: usize,
) -> Result<(Network, History)> {
    config.validate()?;
    net.check_shapes()?;
    train_rows.check("training")?;
    val_rows.check("validation")?;
    if image_rows == 0 {
        return Err(Error::invalid("image_rows must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0b5e_55ed);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut lr = config.lr0;
    let mut batch = config.batch0_images * image_rows;
    let batch_min = config.batch_min_images * image_rows;
    let mut best = (f64::INFINITY, net.clone());
    let mut plateau_ref = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut since_halving = 0usize;
    let mut history = History::default();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for idx in order.chunks(batch) {
            let (x, t, w) = train_rows.gather(idx);
            let (value, grads) = net.gradients(x.view(), &t, &w, config.lambda)?;
            if !value.total.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            weighted += value.total * idx.len() as f64;
            adam_step(&mut net, &grads, &mut adam, lr);
        }
        if !net.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let train_loss = weighted / train_rows.len() as f64;
        let val_loss = batch_loss(&net, val_rows, config.lambda)?.total;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss in epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            batch_rows: batch,
        });
        if val_loss < best.0 {
            best = (val_loss, net.clone());
        }
        if val_loss <= config.val_loss_stop {
            break;
        }
        if val_loss < plateau_ref * (1.0 - config.plateau_min_improvement) {
            plateau_ref = val_loss;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.plateau_patience {
                lr /= config.lr_factor;
                stagnant = 0;
            }
        }
        since_halving += 1;
        if since_halving >= config.batch_halve_after || lr < config.lr_threshold {
            batch /= 2;
            since_halving = 0;
            if batch < batch_min {
                break;
            }
        }
    }
    Ok((best.1, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rows(n: usize, seed: u64) -> TrainingRows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_simple_fn((n, N_FEATURES), || rng.random_range(0.0..1.0));
        let targets = features
            .outer_iter()
            .map(|r| 0.2 + 0.3 * r[0] + 0.2 * r[7] * r[8])
            .collect();
        TrainingRows {
            features,
            targets,
            omega: vec![1.0; n],
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            architecture: Architecture {
                branch_a: vec![8, 8],
                branch_b: vec![4],
                head: vec![8],
            },
            max_epochs: 12,
            seed: 21,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn checkpoint_is_history_minimum_and_deterministic() {
        let cfg = small_config();
        let (tr, va) = (rows(600, 1), rows(100, 2));
        let net = init_network(&cfg.architecture, cfg.seed).unwrap();
        let (best, hist) = train_on_rows(net.clone(), &tr, &va, &cfg, 50).unwrap();
        let best_loss = batch_loss(&best, &va, cfg.lambda).unwrap().total;
        assert_eq!(best_loss, hist.best_val_loss().unwrap());
        let (best2, hist2) = train_on_rows(net, &tr, &va, &cfg, 50).unwrap();
        assert_eq!(best, best2);
        assert_eq!(hist, hist2);
        assert!(hist.epochs.first().unwrap().val_loss > best_loss);
        assert!(hist.to_csv().starts_with("epoch,train_loss,val_loss,lr,batch_rows\n1,"));
    }

    #[test]
    fn batch_halving_stops_training() {
        let cfg = TrainConfig {
            batch0_images: 2,
            batch_halve_after: 2,
            max_epochs: 100,
            ..small_config()
        };
        let net = init_network(&cfg.architecture, 1).unwrap();
        let (_, hist) = train_on_rows(net, &rows(200, 3), &rows(50, 4), &cfg, 40).unwrap();
        // 80 rows for two epochs, 40 rows for two, then 20 < 40 stops
        let sizes: Vec<usize> = hist.epochs.iter().map(|e| e.batch_rows).collect();
        assert_eq!(sizes, vec![80, 80, 40, 40]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_min_images: 7,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr0: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"max_epochs": 60, "architecture": {"branch_a": [64,64,64,64], "branch_b": [32], "head": [64]}}"#).unwrap();
        assert_eq!(parsed.architecture, Architecture::reduced());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"max_epoch": 60}"#).is_err());
    }
}
