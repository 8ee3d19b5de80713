//! Recurrent convolutional memory cell: a ConvLSTM step with elementwise
//! peephole connections, group normalization inside each gate, and
//! channel-wise dropout on the inputs, recurrent state, and candidate.

use std::collections::BTreeMap;

use rand::Rng;

use super::tape::{Tape, VarId};
use super::tensor::Tensor;

pub const GN_EPS: f64 = 1e-5;

/// Normalization group count for `channels` feature maps: min(32, C),
/// reduced until it divides C.
pub fn norm_groups(channels: usize) -> usize {
    let mut g = 32.min(channels);
    while channels % g != 0 {
        g -= 1;
    }
    g
}

/// Dropout application phase. `Eval` is the identity; `Train` and
/// `MonteCarlo` both sample masks (the latter keeps dropout active at
/// deployment).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutPhase {
    Train,
    Eval,
    MonteCarlo,
}

/// Channel-wise inverted-dropout mask of shape (C, H, W): whole channels are
/// zeroed with probability `rate`, survivors scaled by 1/(1-rate).
pub fn channel_dropout_mask<R: Rng>(
    channels: usize,
    height: usize,
    width: usize,
    rate: f64,
    rng: &mut R,
) -> Tensor {
    assert!((0.0..1.0).contains(&rate));
    let keep = 1.0 - rate;
    let mut data = Vec::with_capacity(channels * height * width);
    for _ in 0..channels {
        let v = if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep };
        data.extend(std::iter::repeat(v).take(height * width));
    }
    Tensor::from_vec(&[channels, height, width], data)
}

/// Plain-tensor channel dropout (outside the tape).
pub fn channel_dropout<R: Rng>(
    x: &Tensor,
    rate: f64,
    phase: DropoutPhase,
    rng: &mut R,
) -> Tensor {
    if phase == DropoutPhase::Eval || rate == 0.0 {
        return x.clone();
    }
    let (c, h, w) = x.chw();
    let mask = channel_dropout_mask(c, h, w, rate, rng);
    let data = x.data.iter().zip(&mask.data).map(|(a, m)| a * m).collect();
    Tensor::from_vec(&x.shape, data)
}

/// Dropout masks for one cell invocation. `h` is the recurrent mask and is
/// held fixed across the steps of a sequence; `x` and `g` are resampled per
/// step.
#[derive(Debug, Clone)]
pub struct CellMasks {
    pub x: Tensor,
    pub h: Tensor,
    pub g: Tensor,
}

impl CellMasks {
    pub fn sample<R: Rng>(
        channels: usize,
        side: usize,
        rate: f64,
        recurrent: &Tensor,
        rng: &mut R,
    ) -> CellMasks {
        CellMasks {
            x: channel_dropout_mask(channels, side, side, rate, rng),
            h: recurrent.clone(),
            g: channel_dropout_mask(channels, side, side, rate, rng),
        }
    }
}

/// Registers the parameters of one cell under `prefix` into `params`.
/// `channels` is both the input and hidden width; `side` the spatial extent
/// (peepholes are full elementwise maps over the cell state).
pub fn init_cell_params<R: Rng>(
    params: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    channels: usize,
    side: usize,
    rng: &mut R,
) {
    let k = 3usize;
    let fan_in = (channels * k * k) as f64;
    let scale = (1.0 / fan_in).sqrt();
    for gate in ["i", "f", "c", "o"] {
        params.insert(
            format!("{prefix}wx{gate}"),
            Tensor::randn(&[channels, channels, k, k], scale, rng),
        );
        params.insert(
            format!("{prefix}wh{gate}"),
            Tensor::randn(&[channels, channels, k, k], scale, rng),
        );
        params.insert(format!("{prefix}b{gate}"), Tensor::zeros(&[channels]));
        params.insert(
            format!("{prefix}gn{gate}.gamma"),
            Tensor::filled(&[channels], 1.0),
        );
        params.insert(
            format!("{prefix}gn{gate}.beta"),
            Tensor::zeros(&[channels]),
        );
    }
    for peep in ["pi", "pf", "po"] {
        params.insert(
            format!("{prefix}{peep}"),
            Tensor::randn(&[channels, side, side], 0.1, rng),
        );
    }
}

/// One recurrent step. `x`, `h`, `c` are (C, S, S) variables already on the
/// tape; `get` resolves parameter names to bound leaves. Dropout order
/// follows the gate equations: input and recurrent state first, candidate
/// after its tanh. Returns (h, c).
pub fn cell_step<F>(
    tape: &mut Tape,
    get: &F,
    prefix: &str,
    x: VarId,
    h: VarId,
    c: VarId,
    channels: usize,
    masks: Option<&CellMasks>,
) -> (VarId, VarId)
where
    F: Fn(&str) -> VarId,
{
    let groups = norm_groups(channels);
    let p = |name: &str| get(&format!("{prefix}{name}"));

    let (x, h) = match masks {
        Some(m) => (tape.mul_const(x, &m.x), tape.mul_const(h, &m.h)),
        None => (x, h),
    };

    let gate_pre = |tape: &mut Tape, gate: &str, peep: Option<(&str, VarId)>| -> VarId {
        let xs = tape.conv2d(x, p(&format!("wx{gate}")));
        let hs = tape.conv2d(h, p(&format!("wh{gate}")));
        let mut terms = vec![xs, hs];
        if let Some((pname, state)) = peep {
            let pc = tape.mul(p(pname), state);
            terms.push(pc);
        }
        let s = tape.add_many(&terms);
        let s = tape.add_channel_bias(s, p(&format!("b{gate}")));
        tape.group_norm(
            s,
            p(&format!("gn{gate}.gamma")),
            p(&format!("gn{gate}.beta")),
            groups,
            GN_EPS,
        )
    };

    let i_pre = gate_pre(tape, "i", Some(("pi", c)));
    let i = tape.sigmoid(i_pre);
    let f_pre = gate_pre(tape, "f", Some(("pf", c)));
    let f = tape.sigmoid(f_pre);
    let g_pre = gate_pre(tape, "c", None);
    let mut g = tape.tanh(g_pre);
    if let Some(m) = masks {
        g = tape.mul_const(g, &m.g);
    }
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let o_pre = gate_pre(tape, "o", Some(("po", c_new)));
    let o = tape.sigmoid(o_pre);
    let ct = tape.tanh(c_new);
    let h_new = tape.mul(o, ct);
    (h_new, c_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_step(seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        init_cell_params(&mut params, "cell.", 4, 5, &mut rng);
        let mut tape = Tape::new();
        let mut ids = BTreeMap::new();
        for (k, v) in &params {
            ids.insert(k.clone(), tape.leaf(v.clone()));
        }
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let x = tape.leaf(Tensor::randn(&[4, 5, 5], 0.5, &mut data_rng));
        let h = tape.leaf(Tensor::randn(&[4, 5, 5], 0.5, &mut data_rng));
        let c = tape.leaf(Tensor::randn(&[4, 5, 5], 0.5, &mut data_rng));
        let get = |name: &str| ids[name];
        let (hn, cn) = cell_step(&mut tape, &get, "cell.", x, h, c, 4, None);
        (tape.value(hn).clone(), tape.value(cn).clone())
    }

    #[test]
    fn step_is_deterministic_and_finite() {
        let (h1, c1) = run_step(11);
        let (h2, c2) = run_step(11);
        assert_eq!(h1.data, h2.data);
        assert_eq!(c1.data, c2.data);
        assert!(h1.all_finite() && c1.all_finite());
        // Hidden state = o * tanh(c): bounded by 1 in magnitude.
        assert!(h1.data.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_params_decay_cell_state_by_half() {
        // With every weight and bias zero, all gate pre-activations are
        // GroupNorm(0) = 0, so i = f = 1/2 and g = 0: c1 = c0 / 2.
        let mut params = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        init_cell_params(&mut params, "cell.", 2, 4, &mut rng);
        for v in params.values_mut() {
            for d in &mut v.data {
                *d = 0.0;
            }
        }
        let mut tape = Tape::new();
        let mut ids = BTreeMap::new();
        for (k, v) in &params {
            ids.insert(k.clone(), tape.leaf(v.clone()));
        }
        let x = tape.leaf(Tensor::filled(&[2, 4, 4], 0.7));
        let h = tape.leaf(Tensor::zeros(&[2, 4, 4]));
        let c = tape.leaf(Tensor::filled(&[2, 4, 4], 1.0));
        let get = |name: &str| ids[name];
        let (hn, cn) = cell_step(&mut tape, &get, "cell.", x, h, c, 2, None);
        for v in &tape.value(cn).data {
            assert!((v - 0.5).abs() < 1e-12, "c1 = {v}");
        }
        // o = 1/2, so h1 = tanh(1/2) / 2.
        let expect = 0.5f64.tanh() * 0.5;
        for v in &tape.value(hn).data {
            assert!((v - expect).abs() < 1e-12, "h1 = {v}");
        }
        // Fully zero initial state stays zero.
        let mut tape = Tape::new();
        let mut ids = BTreeMap::new();
        for (k, v) in &params {
            ids.insert(k.clone(), tape.leaf(v.clone()));
        }
        let x = tape.leaf(Tensor::filled(&[2, 4, 4], 0.7));
        let h = tape.leaf(Tensor::zeros(&[2, 4, 4]));
        let c = tape.leaf(Tensor::zeros(&[2, 4, 4]));
        let get = |name: &str| ids[name];
        let (hn, cn) = cell_step(&mut tape, &get, "cell.", x, h, c, 2, None);
        assert!(tape.value(cn).data.iter().all(|v| *v == 0.0));
        assert!(tape.value(hn).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_flow_through_time() {
        // Two chained steps; the loss on step 2 must produce nonzero
        // gradient on the initial state.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = BTreeMap::new();
        init_cell_params(&mut params, "cell.", 2, 4, &mut rng);
        let mut tape = Tape::new();
        let mut ids = BTreeMap::new();
        for (k, v) in &params {
            ids.insert(k.clone(), tape.leaf(v.clone()));
        }
        let x1 = tape.leaf(Tensor::randn(&[2, 4, 4], 0.5, &mut rng));
        let x2 = tape.leaf(Tensor::randn(&[2, 4, 4], 0.5, &mut rng));
        let h0 = tape.leaf(Tensor::randn(&[2, 4, 4], 0.3, &mut rng));
        let c0 = tape.leaf(Tensor::randn(&[2, 4, 4], 0.3, &mut rng));
        let get = |name: &str| ids[name];
        let (h1, c1) = cell_step(&mut tape, &get, "cell.", x1, h0, c0, 2, None);
        let (h2, _c2) = cell_step(&mut tape, &get, "cell.", x2, h1, c1, 2, None);
        let loss = tape.sum_squares(h2);
        tape.backward(loss);
        let g0: f64 = tape.grad(h0).data.iter().map(|v| v.abs()).sum();
        assert!(g0 > 0.0, "no gradient reached the initial hidden state");
        let gw: f64 = tape.grad(ids["cell.wxi"]).data.iter().map(|v| v.abs()).sum();
        assert!(gw > 0.0, "no gradient reached the input gate kernel");
    }

    #[test]
    fn channel_dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut zeroed = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let m = channel_dropout_mask(1, 2, 2, 0.5, &mut rng);
            // Whole channel shares one fate.
            assert!(m.data.iter().all(|&v| v == m.data[0]));
            if m.data[0] == 0.0 {
                zeroed += 1;
            }
        }
        let frac = zeroed as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.05, "zeroed fraction {frac}");
    }

    #[test]
    fn dropout_identity_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::randn(&[3, 4, 4], 1.0, &mut rng);
        let y = channel_dropout(&x, 0.0, DropoutPhase::Train, &mut rng);
        assert_eq!(x.data, y.data);
        let e = channel_dropout(&x, 0.5, DropoutPhase::Eval, &mut rng);
        assert_eq!(x.data, e.data);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = channel_dropout(&x, 0.5, DropoutPhase::MonteCarlo, &mut r1);
        let b = channel_dropout(&x, 0.5, DropoutPhase::MonteCarlo, &mut r2);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn norm_groups_divides_channels() {
        assert_eq!(norm_groups(64), 32);
        assert_eq!(norm_groups(16), 16);
        assert_eq!(norm_groups(48), 24);
        for c in 1..=64 {
            assert_eq!(c % norm_groups(c), 0);
        }
    }
}
