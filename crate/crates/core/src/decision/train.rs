//! Imitation training with truncated backpropagation through time and a
//! decoupled-weight-decay adaptive moment optimizer.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::DropoutPhase;
use super::dataset::{balance_dataset, Dataset, DemoRecord};
use super::net::{DecisionNet, DropoutCtx, NetState};
use super::tape::Tape;
use super::tensor::Tensor;
use super::{CommandIntention, ControlMode, DecisionError, VelocityCommand};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Training sequence length L, in (strided) frames.
    pub seq_len: usize,
    /// Keep every `frame_stride`-th record.
    pub frame_stride: usize,
    /// Prediction emission group size.
    pub k1: usize,
    /// Backpropagation interval: gradients truncate every k2 predictions.
    pub k2: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    /// Epochs at which the learning rate is multiplied by 0.1.
    pub lr_decay_epochs: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    /// Published full-scale constants.
    pub fn full() -> TrainConfig {
        TrainConfig {
            seq_len: 35,
            frame_stride: 3,
            k1: 5,
            k2: 10,
            base_lr: 1e-7,
            batch_size: 36,
            weight_decay: 5e-4,
            dropout: 0.3,
            epochs: 200,
            lr_decay_epochs: vec![70, 140],
            seed: 0,
        }
    }

    /// Down-scaled settings for CPU-budget training runs.
    pub fn desk() -> TrainConfig {
        TrainConfig {
            seq_len: 8,
            frame_stride: 1,
            k1: 2,
            k2: 4,
            base_lr: 2e-4,
            batch_size: 4,
            weight_decay: 5e-4,
            dropout: 0.0,
            epochs: 10,
            lr_decay_epochs: vec![],
            seed: 0,
        }
    }

    /// LR = BaseLR · BS · k2.
    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.batch_size as f64 * self.k2 as f64
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        if self.seq_len < self.k1 || self.k2 < self.k1 {
            return Err(DecisionError::BadDataset(
                "training config requires L >= k1 and k2 >= k1".to_string(),
            ));
        }
        if self.frame_stride == 0 || self.batch_size == 0 {
            return Err(DecisionError::BadDataset(
                "frame stride and batch size must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Decoupled-weight-decay adaptive moment estimation.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> AdamW {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&p.shape));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&p.shape));
            for i in 0..p.len() {
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g.data[i];
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                // Decoupled decay: applied directly to the weight, not the
                // gradient.
                p.data[i] -= self.lr * self.weight_decay * p.data[i];
                p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// A fixed-length training window of strided records.
#[derive(Clone)]
struct Window {
    records: Vec<DemoRecord>,
}

fn build_windows(dataset: &Dataset, cfg: &TrainConfig) -> Vec<Window> {
    let mut windows = Vec::new();
    for &(start, len) in &dataset.sequences {
        let strided: Vec<&DemoRecord> = (start..start + len)
            .step_by(cfg.frame_stride)
            .map(|i| &dataset.records[i])
            .collect();
        let mut i = 0;
        while i + cfg.seq_len <= strided.len() {
            windows.push(Window {
                records: strided[i..i + cfg.seq_len].iter().map(|r| (*r).clone()).collect(),
            });
            i += cfg.seq_len;
        }
        // A short tail (>= k2 frames) still contributes one window.
        if i < strided.len() && strided.len() - i >= cfg.k2 && i > 0 {
            let tail = &strided[strided.len() - cfg.seq_len..];
            windows.push(Window {
                records: tail.iter().map(|r| (*r).clone()).collect(),
            });
        }
        if strided.len() >= cfg.k2 && strided.len() < cfg.seq_len {
            windows.push(Window {
                records: strided.iter().map(|r| (*r).clone()).collect(),
            });
        }
    }
    windows
}

/// Runs TBPTT imitation training in place. Returns the loss curve, one
/// entry per optimizer update (mean squared error over the segment, averaged
/// across the batch). `Stop` records supervise toward (0, 0) through the
/// forward cell, matching its deployment override.
pub fn tbptt_train(
    net: &mut DecisionNet,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, DecisionError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DecisionError::BadDataset("empty dataset".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.learning_rate(), cfg.weight_decay);
    let mut curve = Vec::new();
    for epoch in 0..cfg.epochs {
        if cfg.lr_decay_epochs.contains(&epoch) {
            opt.lr *= 0.1;
        }
        // The sampling pool is re-drawn (re-balanced) each epoch.
        let pool = balance_dataset(dataset, &mut rng);
        let mut windows = build_windows(&pool, cfg);
        if windows.is_empty() {
            return Err(DecisionError::BadDataset(format!(
                "no training window of {} frames fits any sequence",
                cfg.k2
            )));
        }
        // Shuffle window order.
        for i in (1..windows.len()).rev() {
            windows.swap(i, rng.gen_range(0..=i));
        }
        for batch in windows.chunks(cfg.batch_size) {
            train_batch(net, batch, cfg, &mut opt, &mut rng, &mut curve);
        }
    }
    Ok(curve)
}

fn train_batch(
    net: &mut DecisionNet,
    batch: &[Window],
    cfg: &TrainConfig,
    opt: &mut AdamW,
    rng: &mut ChaCha8Rng,
    curve: &mut Vec<f64>,
) {
    let seq_len = batch.iter().map(|w| w.records.len()).min().unwrap_or(0);
    let mut states: Vec<NetState> = batch.iter().map(|_| net.zero_state()).collect();
    let mut dropouts: Vec<DropoutCtx> = batch
        .iter()
        .map(|_| {
            let phase = if cfg.dropout > 0.0 {
                DropoutPhase::Train
            } else {
                DropoutPhase::Eval
            };
            DropoutCtx::new(phase, cfg.dropout, rng.gen())
        })
        .collect();
    let mut t0 = 0;
    while t0 < seq_len {
        let t1 = (t0 + cfg.k2).min(seq_len);
        let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut seg_loss = 0.0;
        for (wi, window) in batch.iter().enumerate() {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let mut ts = net.attach_state(&mut tape, &states[wi]);
            let mut losses = Vec::new();
            for rec in &window.records[t0..t1] {
                let mode = rec
                    .intention
                    .control_mode()
                    .unwrap_or(ControlMode::GoForward);
                let target = if rec.intention == CommandIntention::Stop {
                    Tensor::from_vec(&[2], vec![0.0, 0.0])
                } else {
                    Tensor::from_vec(&[2], vec![rec.control.linear, rec.control.angular])
                };
                let out = net.forward_on_tape(
                    &mut tape,
                    &bound,
                    &mut ts,
                    &mut states[wi],
                    &rec.observation,
                    mode,
                    &mut dropouts[wi],
                );
                losses.push(tape.mse_loss(out.control, &target));
            }
            let loss = tape.mean_scalars(&losses);
            tape.backward(loss);
            seg_loss += tape.value(loss).data[0];
            for (name, g) in net.gradients(&tape, &bound) {
                acc.entry(name)
                    .and_modify(|t| {
                        for (a, b) in t.data.iter_mut().zip(&g.data) {
                            *a += b;
                        }
                    })
                    .or_insert(g);
            }
            // Truncation: carry values, drop the gradient history.
            let mut snapshot = states[wi].clone();
            net.detach_state(&tape, &ts, &mut snapshot);
            states[wi] = snapshot;
        }
        let n = batch.len() as f64;
        for g in acc.values_mut() {
            for v in &mut g.data {
                *v /= n;
            }
        }
        opt.step(&mut net.params, &acc);
        curve.push(seg_loss / n);
        t0 = t1;
    }
}

/// Pooled penultimate feature vector and conditioning mode for every record
/// in the dataset, evaluated sequence by sequence with carried state.
pub fn dump_pooled_features(
    net: &DecisionNet,
    dataset: &Dataset,
) -> Vec<(Tensor, ControlMode)> {
    let mut out = Vec::new();
    for &(start, len) in &dataset.sequences {
        let mut state = net.zero_state();
        let mut d = DropoutCtx::eval();
        for rec in &dataset.records[start..start + len] {
            let mode = rec
                .intention
                .control_mode()
                .unwrap_or(ControlMode::GoForward);
            let (_, pooled) = net.forward(&mut state, &rec.observation, mode, &mut d);
            out.push((pooled, mode));
        }
    }
    out
}

/// Synthetic mode-conditioned task: observations are noise, the target
/// angular velocity is a constant per mode. Solvable by mode identity alone,
/// which makes it a clean probe for mode collapse.
pub fn synthetic_mode_dataset(
    in_channels: usize,
    side: usize,
    sequences: usize,
    seq_len: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new(in_channels, side);
    let modes = [
        (CommandIntention::GoForward, 0.6, 0.0),
        (CommandIntention::TurnLeft, 0.3, 0.8),
        (CommandIntention::TurnRight, 0.3, -0.8),
    ];
    for s in 0..sequences {
        let (intention, v, th) = modes[s % modes.len()];
        let mut seq = Vec::with_capacity(seq_len);
        for t in 0..seq_len {
            seq.push(DemoRecord {
                timestamp: t as f64 * 0.1,
                intention,
                control: VelocityCommand {
                    linear: v,
                    angular: th,
                },
                observation: Tensor::randn(&[in_channels, side, side], 0.5, &mut rng),
            });
        }
        ds.push_sequence(seq);
    }
    ds
}

/// Mean |θ(TurnLeft) − θ(TurnRight)| over fresh held-out inputs: the
/// mode-separation statistic.
pub fn mode_separation(net: &DecisionNet, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = net.config.input_side;
    let cin = net.config.in_channels;
    let mut total = 0.0;
    for _ in 0..trials {
        let x = Tensor::randn(&[cin, side, side], 0.5, &mut rng);
        let mut d = DropoutCtx::eval();
        let mut sl = net.zero_state();
        let (l, _) = net.forward(&mut sl, &x, ControlMode::TurnLeft, &mut d);
        let mut sr = net.zero_state();
        let (r, _) = net.forward(&mut sr, &x, ControlMode::TurnRight, &mut d);
        total += (l.angular - r.angular).abs();
    }
    total / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::net::{NetConfig, NetKind};

    #[test]
    fn published_constants_give_expected_lr() {
        let cfg = TrainConfig::full();
        assert!((cfg.learning_rate() - 3.6e-5).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut net = DecisionNet::new(NetConfig::tiny(NetKind::CnnReactive), 3);
        let before = net.params.clone();
        let ds = synthetic_mode_dataset(1, 16, 3, 4, 5);
        let mut cfg = TrainConfig::desk();
        cfg.base_lr = 0.0;
        cfg.seq_len = 4;
        cfg.k1 = 2;
        cfg.k2 = 2;
        cfg.epochs = 1;
        tbptt_train(&mut net, &ds, &cfg).unwrap();
        for (name, t) in &net.params {
            assert_eq!(&before[name].data, &t.data, "parameter {name} moved");
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut net = DecisionNet::new(NetConfig::tiny(NetKind::CnnReactive), 3);
        let ds = Dataset::new(1, 16);
        assert!(tbptt_train(&mut net, &ds, &TrainConfig::desk()).is_err());
    }

    #[test]
    fn short_training_reduces_loss() {
        let mut net = DecisionNet::new(NetConfig::tiny(NetKind::CnnReactive), 7);
        let ds = synthetic_mode_dataset(1, 16, 6, 6, 11);
        let mut cfg = TrainConfig::desk();
        cfg.seq_len = 6;
        cfg.k1 = 2;
        cfg.k2 = 3;
        cfg.epochs = 12;
        cfg.batch_size = 3;
        let curve = tbptt_train(&mut net, &ds, &cfg).unwrap();
        assert!(curve.len() >= 4);
        let head = curve[0];
        let tail = curve[curve.len() - 1];
        assert!(
            tail < head * 0.8,
            "loss did not drop: first {head}, last {tail}"
        );
    }

    #[test]
    fn tbptt_truncates_gradients_at_segment_boundaries() {
        // Gradients for segment 2 must depend only on the detached state
        // values, not on how segment 1 produced them: recomputing segment 2
        // from a fresh tape seeded with the same carried state must give
        // identical parameter gradients.
        let net = DecisionNet::new(NetConfig::tiny(NetKind::Decision), 5);
        let ds = synthetic_mode_dataset(1, 16, 1, 4, 3);
        let recs = &ds.records[0..4];
        let target = Tensor::from_vec(&[2], vec![0.6, 0.0]);

        // Run segment 1 (steps 0-1), detach, then segment 2 (steps 2-3).
        let mut state = net.zero_state();
        let mut d = DropoutCtx::eval();
        {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let mut ts = net.attach_state(&mut tape, &state);
            for rec in &recs[0..2] {
                net.forward_on_tape(
                    &mut tape, &bound, &mut ts, &mut state, &rec.observation,
                    ControlMode::GoForward, &mut d,
                );
            }
            let mut snapshot = state.clone();
            net.detach_state(&tape, &ts, &mut snapshot);
            state = snapshot;
        }
        let carried = state.clone();
        let seg2_grads = |initial: &NetState| -> BTreeMap<String, Tensor> {
            let mut state = initial.clone();
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let mut ts = net.attach_state(&mut tape, &state);
            let mut d = DropoutCtx::eval();
            let mut losses = Vec::new();
            for rec in &recs[2..4] {
                let out = net.forward_on_tape(
                    &mut tape, &bound, &mut ts, &mut state, &rec.observation,
                    ControlMode::GoForward, &mut d,
                );
                losses.push(tape.mse_loss(out.control, &target));
            }
            let loss = tape.mean_scalars(&losses);
            tape.backward(loss);
            net.gradients(&tape, &bound)
        };
        let a = seg2_grads(&carried);
        let b = seg2_grads(&carried.clone());
        for (name, g) in &a {
            assert_eq!(&b[name].data, &g.data, "gradient for {name} not pure");
        }
        // And the segment-1 observations have no gradient path: a segment-2
        // pass never touches them, which is exactly what the fresh-tape
        // construction above asserts structurally.
    }

    #[test]
    fn pooled_feature_dump_has_one_record_per_input() {
        let net = DecisionNet::new(NetConfig::tiny(NetKind::Decision), 2);
        let ds = synthetic_mode_dataset(1, 16, 3, 4, 7);
        let dump = dump_pooled_features(&net, &ds);
        assert_eq!(dump.len(), ds.records.len());
        let mut zeroed = DecisionNet::new(NetConfig::tiny(NetKind::Decision), 2);
        zeroed.zero_params();
        let dump = dump_pooled_features(&zeroed, &ds);
        assert!(dump
            .iter()
            .all(|(t, _)| t.data.iter().all(|&v| v == 0.0)));
    }
}
