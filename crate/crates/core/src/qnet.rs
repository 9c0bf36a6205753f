//! Feedforward Q-value approximator with exact backpropagation, the
//! double-DQN target, an Adam optimizer and the binary checkpoint format.
//!
//! Checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  b"PURSQNET"
//! version  u32      1
//! count    u32      number of layer sizes L (input, hidden..., output)
//! sizes    L x u64
//! layers   for each of the L-1 affine layers: weights (out x in, row-major)
//!          then biases (out), as f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::replay::Transition;

const MAGIC: &[u8; 8] = b"PURSQNET";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            *o = self.bias[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// ReLU hidden layers, identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl QNetwork {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(config_err("network.hidden", "need at least input and output layers of non-zero width"));
        }
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    /// Uniform fan-in initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; l.outputs];
            l.affine_into(&x, &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        Ok(x)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    fn same_shape(&self, other: &QNetwork) -> Result<()> {
        if self.sizes() != other.sizes() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: other.param_count(),
            });
        }
        Ok(())
    }

    /// Loss `mean_i w_i (y_i - Q(s_i, a_i))^2` with targets `y` held fixed,
    /// and its gradient with respect to every parameter (same order as
    /// [`QNetwork::params`]).
    pub fn loss_and_grad(
        &self,
        inputs: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let n = inputs.len();
        if n == 0 || actions.len() != n || targets.len() != n || weights.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: actions.len().min(targets.len()).min(weights.len()),
            });
        }
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for ((input, &a), (&y, &w)) in inputs.iter().zip(actions).zip(targets.iter().zip(weights)) {
            if input.len() != self.input_dim() {
                return Err(Error::Shape {
                    expected: self.input_dim(),
                    got: input.len(),
                });
            }
            if a >= self.output_dim() {
                return Err(Error::Shape {
                    expected: self.output_dim(),
                    got: a,
                });
            }
            acts.clear();
            acts.push(input.to_vec());
            for (i, l) in self.layers.iter().enumerate() {
                let mut z = vec![0.0; l.outputs];
                l.affine_into(&acts[i], &mut z);
                if i < last {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(z);
            }
            let q = acts[last + 1][a];
            let delta = y - q;
            loss += w * delta * delta;
            // d loss / d q_a
            let mut upstream = vec![0.0; self.output_dim()];
            upstream[a] = -2.0 * w * delta / n as f64;
            for i in (0..=last).rev() {
                let l = &self.layers[i];
                let g = &mut grads[i];
                let x = &acts[i];
                for (j, &u) in upstream.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    g.bias[j] += u;
                    let row = &mut g.weights[j * l.inputs..(j + 1) * l.inputs];
                    row.iter_mut().zip(x).for_each(|(gw, xv)| *gw += u * xv);
                }
                if i == 0 {
                    break;
                }
                let mut down = vec![0.0; l.inputs];
                for (j, &u) in upstream.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    let row = &l.weights[j * l.inputs..(j + 1) * l.inputs];
                    down.iter_mut().zip(row).for_each(|(d, w)| *d += u * w);
                }
                // ReLU mask from the post-activation of the layer below.
                down.iter_mut().zip(x).for_each(|(d, a)| {
                    if *a <= 0.0 {
                        *d = 0.0
                    }
                });
                upstream = down;
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for g in grads {
            flat.extend(g.weights);
            flat.extend(g.bias);
        }
        Ok((loss / n as f64, flat))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let sizes = self.sizes();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in &sizes {
            w.write_all(&(*s as u64).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&count) {
            return Err(bad("implausible layer count"));
        }
        let mut b8 = [0u8; 8];
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            let s = u64::from_le_bytes(b8);
            if s == 0 || s > 1 << 20 {
                return Err(bad("implausible layer width"));
            }
            sizes.push(s as usize);
        }
        let mut net = Self::zeros(&sizes)?;
        for p in net.params_mut() {
            r.read_exact(&mut b8)?;
            *p = f64::from_le_bytes(b8);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + 8 * self.param_count());
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Delayed copy of the online network used to value bootstrap actions.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNetwork {
    net: QNetwork,
}

impl TargetNetwork {
    pub fn from_policy(policy: &QNetwork) -> Self {
        Self { net: policy.clone() }
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(input)
    }

    /// Hard copy of the online parameters.
    pub fn sync(&mut self, policy: &QNetwork) -> Result<()> {
        self.net.same_shape(policy)?;
        self.net.clone_from(policy);
        Ok(())
    }
}

pub fn sync_target(policy: &QNetwork, target: &mut TargetNetwork) -> Result<()> {
    target.sync(policy)
}

/// Online network picks the bootstrap action, target network values it.
pub fn double_dqn_target(
    policy: &QNetwork,
    target: &TargetNetwork,
    reward: f64,
    next: &[f64],
    done: bool,
    discount: f64,
) -> Result<f64> {
    if done || discount == 0.0 {
        return Ok(reward);
    }
    let a_max = policy.greedy(next)?;
    Ok(reward + discount * target.forward(next)?[a_max])
}

pub fn td_error(policy: &QNetwork, target: &TargetNetwork, t: &Transition, discount: f64) -> Result<f64> {
    let y = double_dqn_target(policy, target, t.reward, &t.next, t.done, discount)?;
    Ok(y - policy.forward(&t.state)?[t.action])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(config_err("network.adam.lr", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err("network.adam.beta1", "betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(config_err("network.adam.eps", "must be positive"));
        }
        Ok(())
    }
}

/// Q-network shape and optimizer. The input is the observation and the
/// output the action catalog; only the hidden widths are free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 1024, 512],
            adam: AdamConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|h| *h == 0) {
            return Err(config_err("network.hidden", "layer widths must be positive"));
        }
        self.adam.validate()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![crate::engagement::OBS_DIM];
        s.extend(&self.hidden);
        s.push(crate::dynamics::ACTION_COUNT);
        s
    }
}

/// Adaptive-moment optimizer state; moments match the flattened parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, net: &QNetwork) -> Self {
        let n = net.param_count();
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &[f64]) -> Result<()> {
        if grads.len() != self.m.len() || net.param_count() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        self.t += 1;
        if self.cfg.lr == 0.0 {
            return Ok(());
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in net.params_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    /// `|delta|` per sample, measured before the update.
    pub abs_td: Vec<f64>,
    pub loss: f64,
}

impl TrainStats {
    pub fn mean_abs_td(&self) -> f64 {
        self.abs_td.iter().sum::<f64>() / self.abs_td.len().max(1) as f64
    }
}

/// One optimizer step on the importance-weighted double-DQN loss.
pub fn train_step(
    policy: &mut QNetwork,
    target: &TargetNetwork,
    opt: &mut Adam,
    batch: &[Transition],
    is_weights: &[f64],
    discount: f64,
) -> Result<TrainStats> {
    if batch.is_empty() {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    if is_weights.len() != batch.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            got: is_weights.len(),
        });
    }
    if is_weights.iter().any(|w| !(*w > 0.0)) {
        return Err(crate::error::domain("importance weights must be positive"));
    }
    let targets = batch
        .iter()
        .map(|t| double_dqn_target(policy, target, t.reward, &t.next, t.done, discount))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<&[f64]> = batch.iter().map(|t| &t.state[..]).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let abs_td = batch
        .iter()
        .zip(&targets)
        .map(|(t, y)| Ok((y - policy.forward(&t.state)?[t.action]).abs()))
        .collect::<Result<Vec<_>>>()?;
    let (loss, grads) = policy.loss_and_grad(&inputs, &actions, &targets, is_weights)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence(format!("non-finite loss {loss} at optimizer step {}", opt.steps())));
    }
    opt.apply(policy, &grads)?;
    Ok(TrainStats { abs_td, loss })
}
