//! Controller network: three blocks of (convolution → memory layer →
//! downsampling), a pooled feature vector, and per-mode output heads.
//! Baselines and ablations are variants of the same parameter store.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cell::{
    cell_step, channel_dropout_mask, init_cell_params, norm_groups, CellMasks, DropoutPhase,
    GN_EPS,
};
use super::tape::{Tape, VarId};
use super::tensor::Tensor;
use super::{ControlMode, DecisionError, VelocityCommand};

/// Number of frames stacked by the multi-frame feedforward baseline.
pub const MF_FRAMES: usize = 5;
/// Layers in the recurrent-vector baseline.
pub const LSTM_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    /// Full controller: memory layers in all three blocks, per-mode cells
    /// and heads.
    Decision,
    /// Memory layers kept only where `keep` is true (per block).
    AblateMemory { keep: [bool; 3] },
    /// Feedforward backbone with per-mode branched heads, no memory.
    CnnReactive,
    /// Feedforward on a channel-stack of the last five frames.
    MfCnn,
    /// Feedforward backbone plus a three-layer vector LSTM on the pooled
    /// feature before the heads.
    CnnLstm,
    /// One cell and one head shared across every mode.
    NoMultimodalMemory,
}

impl NetKind {
    pub fn parse(name: &str) -> Result<NetKind, DecisionError> {
        Ok(match name {
            "decision" => NetKind::Decision,
            "cnn_reactive" => NetKind::CnnReactive,
            "mf_cnn" => NetKind::MfCnn,
            "cnn_lstm" => NetKind::CnnLstm,
            "no_multimodal_memory" => NetKind::NoMultimodalMemory,
            "no_l1_l3" => NetKind::AblateMemory {
                keep: [false, false, false],
            },
            "no_l2_l3" => NetKind::AblateMemory {
                keep: [true, false, false],
            },
            "no_l1_l2" => NetKind::AblateMemory {
                keep: [false, false, true],
            },
            other => {
                return Err(DecisionError::BadCheckpoint(format!(
                    "unknown network kind `{other}`"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            NetKind::Decision => "decision",
            NetKind::CnnReactive => "cnn_reactive",
            NetKind::MfCnn => "mf_cnn",
            NetKind::CnnLstm => "cnn_lstm",
            NetKind::NoMultimodalMemory => "no_multimodal_memory",
            NetKind::AblateMemory { keep } => match keep {
                [false, false, false] => "no_l1_l3",
                [true, false, false] => "no_l2_l3",
                [false, false, true] => "no_l1_l2",
                _ => "ablate_memory",
            },
        }
    }

    fn memory_blocks(self) -> [bool; 3] {
        match self {
            NetKind::Decision | NetKind::NoMultimodalMemory => [true; 3],
            NetKind::AblateMemory { keep } => keep,
            NetKind::CnnReactive | NetKind::MfCnn | NetKind::CnnLstm => [false; 3],
        }
    }

    fn shared_modes(self) -> bool {
        self == NetKind::NoMultimodalMemory
    }
}

#[derive(Debug, Clone)]
pub struct NetConfig {
    pub kind: NetKind,
    /// Channels of a single observation frame.
    pub in_channels: usize,
    /// Square input side; must be divisible by 8 (three 2x poolings).
    pub input_side: usize,
    pub channels: [usize; 3],
    /// Length of the pooled penultimate feature vector.
    pub pooled_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
}

impl NetConfig {
    /// Desk-scale preset.
    pub fn desk(kind: NetKind) -> NetConfig {
        NetConfig {
            kind,
            in_channels: 1,
            input_side: 56,
            channels: [16, 32, 64],
            pooled_dim: 64,
            head_hidden: 32,
            dropout: 0.3,
        }
    }

    /// Full-scale preset mirroring the published geometry.
    pub fn full(kind: NetKind) -> NetConfig {
        NetConfig {
            kind,
            in_channels: 3,
            input_side: 112,
            channels: [64, 128, 256],
            pooled_dim: 1024,
            head_hidden: 256,
            dropout: 0.3,
        }
    }

    /// Very small preset for unit tests and gradient checks.
    pub fn tiny(kind: NetKind) -> NetConfig {
        NetConfig {
            kind,
            in_channels: 1,
            input_side: 16,
            channels: [4, 6, 8],
            pooled_dim: 8,
            head_hidden: 8,
            dropout: 0.3,
        }
    }

    /// Channels actually fed to the first convolution.
    pub fn effective_in_channels(&self) -> usize {
        match self.kind {
            NetKind::MfCnn => self.in_channels * MF_FRAMES,
            _ => self.in_channels,
        }
    }

    /// Spatial side at the input of block `b` (0-based).
    pub fn block_side(&self, b: usize) -> usize {
        self.input_side >> b
    }

    fn cell_keys(&self) -> Vec<usize> {
        if self.kind.shared_modes() {
            vec![0]
        } else {
            (0..ControlMode::ALL.len()).collect()
        }
    }

    fn cell_key(&self, mode: ControlMode) -> usize {
        if self.kind.shared_modes() {
            0
        } else {
            mode.index()
        }
    }

    fn head_name(&self, mode: ControlMode) -> String {
        if self.kind.shared_modes() {
            "head.shared".to_string()
        } else {
            format!("head.{}", mode.name())
        }
    }

    fn cell_prefix(&self, block: usize, key: usize) -> String {
        if self.kind.shared_modes() {
            format!("b{block}.cell.shared.")
        } else {
            format!(
                "b{block}.cell.{}.",
                ControlMode::from_index(key).expect("mode index").name()
            )
        }
    }
}

/// Recurrent state outside any tape: per memory block, per cell key, (h, c);
/// plus the vector-LSTM states and the frame buffer of the multi-frame
/// baseline.
#[derive(Debug, Clone)]
pub struct NetState {
    pub blocks: Vec<BTreeMap<usize, (Tensor, Tensor)>>,
    pub lstm: Vec<(Tensor, Tensor)>,
    pub frames: Vec<Tensor>,
}

/// The same state while a tape segment is alive, as differentiable nodes.
pub struct TapeState {
    blocks: Vec<BTreeMap<usize, (VarId, VarId)>>,
    lstm: Vec<(VarId, VarId)>,
}

/// Parameter names bound to tape leaves for one segment.
pub struct Bound {
    pub ids: BTreeMap<String, VarId>,
}

/// Per-segment dropout bookkeeping: recurrent masks are fixed for the whole
/// sequence, input/candidate masks are resampled each step.
pub struct DropoutCtx {
    pub phase: DropoutPhase,
    rate: f64,
    rng: ChaCha8Rng,
    recurrent: BTreeMap<String, Tensor>,
}

impl DropoutCtx {
    pub fn new(phase: DropoutPhase, rate: f64, seed: u64) -> DropoutCtx {
        DropoutCtx {
            phase,
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            recurrent: BTreeMap::new(),
        }
    }

    pub fn eval() -> DropoutCtx {
        DropoutCtx::new(DropoutPhase::Eval, 0.0, 0)
    }

    /// Forget the per-sequence recurrent masks; call at sequence starts.
    pub fn begin_sequence(&mut self) {
        self.recurrent.clear();
    }

    fn cell_masks(&mut self, key: &str, channels: usize, side: usize) -> Option<CellMasks> {
        if self.phase == DropoutPhase::Eval || self.rate == 0.0 {
            return None;
        }
        let rec = self
            .recurrent
            .entry(key.to_string())
            .or_insert_with(|| {
                channel_dropout_mask(channels, side, side, self.rate, &mut self.rng)
            })
            .clone();
        Some(CellMasks::sample(channels, side, self.rate, &rec, &mut self.rng))
    }
}

/// Output handles of one forward step on a tape.
pub struct StepOutput {
    /// (v, θ), both in [-1, 1].
    pub control: VarId,
    /// Pooled penultimate feature vector.
    pub pooled: VarId,
}

#[derive(Debug, Clone)]
pub struct DecisionNet {
    pub config: NetConfig,
    pub params: BTreeMap<String, Tensor>,
}

impl DecisionNet {
    pub fn new(config: NetConfig, seed: u64) -> DecisionNet {
        assert!(
            config.input_side % 8 == 0,
            "input side must be divisible by 8"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut cin = config.effective_in_channels();
        for b in 0..3 {
            let cout = config.channels[b];
            let scale = (1.0 / (cin * 9) as f64).sqrt();
            params.insert(
                format!("b{b}.conv.w"),
                Tensor::randn(&[cout, cin, 3, 3], scale, &mut rng),
            );
            params.insert(format!("b{b}.conv.b"), Tensor::zeros(&[cout]));
            params.insert(format!("b{b}.gn.gamma"), Tensor::filled(&[cout], 1.0));
            params.insert(format!("b{b}.gn.beta"), Tensor::zeros(&[cout]));
            if config.kind.memory_blocks()[b] {
                for key in config.cell_keys() {
                    init_cell_params(
                        &mut params,
                        &config.cell_prefix(b, key),
                        cout,
                        config.block_side(b),
                        &mut rng,
                    );
                }
            }
            cin = cout;
        }
        let c3 = config.channels[2];
        let pscale = (1.0 / c3 as f64).sqrt();
        params.insert(
            "pool.w".to_string(),
            Tensor::randn(&[config.pooled_dim, c3], pscale, &mut rng),
        );
        params.insert("pool.b".to_string(), Tensor::zeros(&[config.pooled_dim]));
        if config.kind == NetKind::CnnLstm {
            let d = config.pooled_dim;
            let lscale = (1.0 / d as f64).sqrt();
            for l in 0..LSTM_LAYERS {
                for gate in ["i", "f", "c", "o"] {
                    params.insert(
                        format!("lstm{l}.wx{gate}"),
                        Tensor::randn(&[d, d], lscale, &mut rng),
                    );
                    params.insert(
                        format!("lstm{l}.wh{gate}"),
                        Tensor::randn(&[d, d], lscale, &mut rng),
                    );
                    params.insert(format!("lstm{l}.b{gate}"), Tensor::zeros(&[d]));
                }
            }
        }
        let head_names: Vec<String> = if config.kind.shared_modes() {
            vec!["head.shared".to_string()]
        } else {
            ControlMode::ALL
                .iter()
                .map(|m| format!("head.{}", m.name()))
                .collect()
        };
        let hscale = (1.0 / config.pooled_dim as f64).sqrt();
        let h2scale = (1.0 / config.head_hidden as f64).sqrt();
        for hn in head_names {
            params.insert(
                format!("{hn}.w1"),
                Tensor::randn(&[config.head_hidden, config.pooled_dim], hscale, &mut rng),
            );
            params.insert(format!("{hn}.b1"), Tensor::zeros(&[config.head_hidden]));
            params.insert(
                format!("{hn}.w2"),
                Tensor::randn(&[2, config.head_hidden], h2scale, &mut rng),
            );
            params.insert(format!("{hn}.b2"), Tensor::zeros(&[2]));
        }
        DecisionNet { config, params }
    }

    /// Builds a baseline or ablation from its published name, sharing the
    /// backbone geometry of `base`.
    pub fn build_baseline(
        kind_name: &str,
        base: &NetConfig,
        seed: u64,
    ) -> Result<DecisionNet, DecisionError> {
        let kind = NetKind::parse(kind_name)?;
        let mut config = base.clone();
        config.kind = kind;
        Ok(DecisionNet::new(config, seed))
    }

    pub fn zero_state(&self) -> NetState {
        let mut blocks = Vec::new();
        for b in 0..3 {
            let mut m = BTreeMap::new();
            if self.config.kind.memory_blocks()[b] {
                let c = self.config.channels[b];
                let s = self.config.block_side(b);
                for key in self.config.cell_keys() {
                    m.insert(key, (Tensor::zeros(&[c, s, s]), Tensor::zeros(&[c, s, s])));
                }
            }
            blocks.push(m);
        }
        let lstm = if self.config.kind == NetKind::CnnLstm {
            (0..LSTM_LAYERS)
                .map(|_| {
                    (
                        Tensor::zeros(&[self.config.pooled_dim]),
                        Tensor::zeros(&[self.config.pooled_dim]),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        NetState {
            blocks,
            lstm,
            frames: Vec::new(),
        }
    }

    /// Registers every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let ids = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        Bound { ids }
    }

    /// Puts the recurrent state onto the tape so gradients can flow through
    /// it within a segment. The frame buffer stays outside the tape.
    pub fn attach_state(&self, tape: &mut Tape, state: &NetState) -> TapeState {
        TapeState {
            blocks: state
                .blocks
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|(k, (h, c))| (*k, (tape.leaf(h.clone()), tape.leaf(c.clone()))))
                        .collect()
                })
                .collect(),
            lstm: state
                .lstm
                .iter()
                .map(|(h, c)| (tape.leaf(h.clone()), tape.leaf(c.clone())))
                .collect(),
        }
    }

    /// Copies current tape values of the recurrent state back into `state`,
    /// truncating the gradient history (TBPTT detach).
    pub fn detach_state(&self, tape: &Tape, ts: &TapeState, state: &mut NetState) {
        for (m, tm) in state.blocks.iter_mut().zip(&ts.blocks) {
            for (k, (h, c)) in m.iter_mut() {
                let (hid, cid) = tm[k];
                *h = tape.value(hid).clone();
                *c = tape.value(cid).clone();
            }
        }
        for ((h, c), (hid, cid)) in state.lstm.iter_mut().zip(&ts.lstm) {
            *h = tape.value(*hid).clone();
            *c = tape.value(*cid).clone();
        }
    }

    /// Stacks the observation with the frame buffer for the multi-frame
    /// baseline; other kinds pass the frame through.
    fn stack_input(&self, state: &mut NetState, obs: &Tensor) -> Tensor {
        if self.config.kind != NetKind::MfCnn {
            return obs.clone();
        }
        state.frames.push(obs.clone());
        if state.frames.len() > MF_FRAMES {
            state.frames.remove(0);
        }
        let (c, h, w) = obs.chw();
        let mut data = Vec::with_capacity(c * h * w * MF_FRAMES);
        // Oldest first; missing leading frames are zero.
        for i in 0..MF_FRAMES {
            let idx = (state.frames.len() as isize) - (MF_FRAMES as isize) + i as isize;
            if idx < 0 {
                data.extend(std::iter::repeat(0.0).take(c * h * w));
            } else {
                data.extend_from_slice(&state.frames[idx as usize].data);
            }
        }
        Tensor::from_vec(&[c * MF_FRAMES, h, w], data)
    }

    /// One forward step on an existing tape. `state` provides the frame
    /// buffer; recurrent state lives in `ts`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        ts: &mut TapeState,
        state: &mut NetState,
        obs: &Tensor,
        mode: ControlMode,
        dropout: &mut DropoutCtx,
    ) -> StepOutput {
        let input = self.stack_input(state, obs);
        assert_eq!(
            input.chw(),
            (
                self.config.effective_in_channels(),
                self.config.input_side,
                self.config.input_side
            ),
            "observation shape mismatch"
        );
        let get = |name: &str| {
            *bound
                .ids
                .get(name)
                .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
        };
        let mut x = tape.leaf(input);
        for b in 0..3 {
            let cout = self.config.channels[b];
            let y = tape.conv2d(x, get(&format!("b{b}.conv.w")));
            let y = tape.add_channel_bias(y, get(&format!("b{b}.conv.b")));
            let y = tape.group_norm(
                y,
                get(&format!("b{b}.gn.gamma")),
                get(&format!("b{b}.gn.beta")),
                norm_groups(cout),
                GN_EPS,
            );
            let a = tape.tanh(y);
            x = if self.config.kind.memory_blocks()[b] {
                let key = self.config.cell_key(mode);
                let prefix = self.config.cell_prefix(b, key);
                let (h, c) = ts.blocks[b][&key];
                let masks = dropout.cell_masks(&prefix, cout, self.config.block_side(b));
                let (hn, cn) =
                    cell_step(tape, &get, &prefix, a, h, c, cout, masks.as_ref());
                ts.blocks[b].insert(key, (hn, cn));
                hn
            } else {
                a
            };
            x = tape.avg_pool2(x);
        }
        let gpool = tape.global_avg_pool(x);
        let proj = tape.linear(gpool, get("pool.w"), get("pool.b"));
        let mut pooled = tape.tanh(proj);
        if self.config.kind == NetKind::CnnLstm {
            let d = self.config.pooled_dim;
            let zero_bias = tape.leaf(Tensor::zeros(&[d]));
            for l in 0..LSTM_LAYERS {
                let (h, c) = ts.lstm[l];
                let gate = |tape: &mut Tape, g: &str| -> VarId {
                    let xs = tape.linear(pooled, get(&format!("lstm{l}.wx{g}")),
                        get(&format!("lstm{l}.b{g}")));
                    let hs = tape.linear(h, get(&format!("lstm{l}.wh{g}")), zero_bias);
                    tape.add(xs, hs)
                };
                let ip = gate(tape, "i");
                let i = tape.sigmoid(ip);
                let fp = gate(tape, "f");
                let f = tape.sigmoid(fp);
                let gp = gate(tape, "c");
                let g = tape.tanh(gp);
                let op = gate(tape, "o");
                let o = tape.sigmoid(op);
                let fc = tape.mul(f, c);
                let ig = tape.mul(i, g);
                let cn = tape.add(fc, ig);
                let ct = tape.tanh(cn);
                let hn = tape.mul(o, ct);
                ts.lstm[l] = (hn, cn);
                pooled = hn;
            }
        }
        let hn = self.config.head_name(mode);
        let h1 = tape.linear(pooled, get(&format!("{hn}.w1")), get(&format!("{hn}.b1")));
        let h1 = tape.tanh(h1);
        let out = tape.linear(h1, get(&format!("{hn}.w2")), get(&format!("{hn}.b2")));
        let control = tape.tanh(out);
        StepOutput { control, pooled }
    }

    /// Forward pass for deployment: advances `state` and returns the
    /// command. Deterministic when `dropout` is in the eval phase.
    pub fn forward(
        &self,
        state: &mut NetState,
        obs: &Tensor,
        mode: ControlMode,
        dropout: &mut DropoutCtx,
    ) -> (VelocityCommand, Tensor) {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let mut ts = self.attach_state(&mut tape, state);
        let out = self.forward_on_tape(&mut tape, &bound, &mut ts, state, obs, mode, dropout);
        let mut snapshot = state.clone();
        self.detach_state(&tape, &ts, &mut snapshot);
        *state = snapshot;
        let v = tape.value(out.control);
        (
            VelocityCommand {
                linear: v.data[0],
                angular: v.data[1],
            },
            tape.value(out.pooled).clone(),
        )
    }

    /// Sum of gradients is applied by the optimizer; this extracts them for
    /// every bound parameter after a backward pass.
    pub fn gradients(&self, tape: &Tape, bound: &Bound) -> BTreeMap<String, Tensor> {
        bound
            .ids
            .iter()
            .map(|(k, &id)| (k.clone(), tape.grad(id).clone()))
            .collect()
    }

    pub fn zero_params(&mut self) {
        for t in self.params.values_mut() {
            for v in &mut t.data {
                *v = 0.0;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }
}
