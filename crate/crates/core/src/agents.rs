//! One-hidden-layer speaker and listener networks with backpropagation,
//! score-function gradients and Adam.
//!
//! Parameters live in one flat buffer laid out as `W1 (hidden × in)`,
//! `b1 (hidden)`, `W2 (out × hidden)`, `b2 (out)`, all row-major, so the
//! optimizer can treat them as a single vector.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::color::ChipGrid;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 25;
/// Multiplier on CIELAB coordinates before the speaker's first layer.
pub const DEFAULT_INPUT_SCALE: f64 = 0.2;
pub const DEFAULT_LEARNING_RATE: f64 = 0.005;
pub const DEFAULT_BATCH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Speaker => "speaker",
            Role::Listener => "listener",
        }
    }
}

/// A network input: dense features (scaled by the agent's input scale) or a
/// one-hot index.
#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Features(&'a [f64]),
    OneHot(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    role: Role,
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    input_scale: f64,
    data: Vec<f64>,
}

/// Hidden activations and output log-probabilities for one input.
#[derive(Clone, Debug)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Forward {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place log-softmax.
fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for l in logits.iter_mut() {
        *l -= lse;
    }
}

impl AgentParams {
    pub fn zeros(role: Role, n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        let len = n_hidden * n_in + n_hidden + n_out * n_hidden + n_out;
        AgentParams {
            role,
            n_in,
            n_hidden,
            n_out,
            input_scale: if role == Role::Speaker { DEFAULT_INPUT_SCALE } else { 1.0 },
            data: vec![0.0; len],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(role: Role, n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let mut p = AgentParams::zeros(role, n_in, n_hidden, n_out);
        let a1 = (6.0 / (n_in + n_hidden) as f64).sqrt();
        let d1 = Uniform::new_inclusive(-a1, a1);
        for v in p.w1_mut() {
            *v = d1.sample(rng);
        }
        let a2 = (6.0 / (n_hidden + n_out) as f64).sqrt();
        let d2 = Uniform::new_inclusive(-a2, a2);
        for v in p.w2_mut() {
            *v = d2.sample(rng);
        }
        p
    }

    /// Speaker mapping a CIELAB chip to `num_words` logits.
    pub fn speaker<R: Rng>(num_words: usize, n_hidden: usize, rng: &mut R) -> Self {
        AgentParams::glorot(Role::Speaker, 3, n_hidden, num_words, rng)
    }

    /// Listener mapping a one-hot word to `num_chips` logits.
    pub fn listener<R: Rng>(num_words: usize, num_chips: usize, n_hidden: usize, rng: &mut R) -> Self {
        AgentParams::glorot(Role::Listener, num_words, n_hidden, num_chips, rng)
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }
    pub fn n_in(&self) -> usize {
        self.n_in
    }
    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }
    pub fn n_out(&self) -> usize {
        self.n_out
    }
    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = self.n_hidden * self.n_in;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        [w1, b1, w2, b2]
    }

    pub fn w1(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }
    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }
    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }
    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[3]..]
    }
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[0]..o[1]]
    }
    pub fn b1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[1]..o[2]]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[2]..o[3]]
    }
    pub fn b2_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[3]..]
    }

    fn check_input(&self, x: Input) {
        match x {
            Input::Features(f) => assert_eq!(f.len(), self.n_in, "input width mismatch"),
            Input::OneHot(i) => assert!(i < self.n_in, "one-hot index out of range"),
        }
    }

    pub fn forward(&self, x: Input) -> Forward {
        self.check_input(x);
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let hidden: Vec<f64> = (0..self.n_hidden)
            .map(|h| {
                let pre = match x {
                    Input::Features(f) => {
                        let row = &w1[h * self.n_in..(h + 1) * self.n_in];
                        row.iter().zip(f).map(|(w, v)| w * v * self.input_scale).sum::<f64>()
                    }
                    Input::OneHot(i) => w1[h * self.n_in + i],
                };
                sigmoid(pre + b1[h])
            })
            .collect();
        let mut log_probs: Vec<f64> = (0..self.n_out)
            .map(|o| {
                let row = &w2[o * self.n_hidden..(o + 1) * self.n_hidden];
                b2[o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        log_softmax(&mut log_probs);
        Forward { hidden, log_probs }
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to the output logits is `dlogits`.
    pub fn backward(&self, x: Input, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.data.len(), "gradient buffer has the wrong length");
        let o = self.offsets();
        let (nh, ni) = (self.n_hidden, self.n_in);
        let w2 = self.w2();
        let mut dhidden = vec![0.0; nh];
        {
            let (gw2, gb2) = grad[o[2]..].split_at_mut(o[3] - o[2]);
            for (out, &d) in dlogits.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb2[out] += d;
                let grow = &mut gw2[out * nh..(out + 1) * nh];
                let wrow = &w2[out * nh..(out + 1) * nh];
                for h in 0..nh {
                    grow[h] += d * fwd.hidden[h];
                    dhidden[h] += d * wrow[h];
                }
            }
        }
        for h in 0..nh {
            let a = fwd.hidden[h];
            let dz = dhidden[h] * a * (1.0 - a);
            grad[o[1] + h] += dz;
            match x {
                Input::Features(f) => {
                    for (j, v) in f.iter().enumerate() {
                        grad[o[0] + h * ni + j] += dz * v * self.input_scale;
                    }
                }
                Input::OneHot(i) => grad[o[0] + h * ni + i] += dz,
            }
        }
    }

    /// Plain-text checkpoint: a header line followed by the four named arrays.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "agent role={} in={} hidden={} out={} input_scale={:?}\n",
            self.role.as_str(),
            self.n_in,
            self.n_hidden,
            self.n_out,
            self.input_scale
        );
        let arrays = [
            ("W1", self.n_hidden, self.n_in, self.w1()),
            ("b1", self.n_hidden, 1, self.b1()),
            ("W2", self.n_out, self.n_hidden, self.w2()),
            ("b2", self.n_out, 1, self.b2()),
        ];
        for (name, rows, cols, values) in arrays {
            writeln!(out, "{name} {rows} {cols}").unwrap();
            for r in 0..rows {
                let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&line.join("\t"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let header = lines.next().ok_or_else(|| Error::format("empty checkpoint"))??;
        let mut fields = std::collections::HashMap::new();
        for tok in header.split_whitespace().skip(1) {
            if let Some((k, v)) = tok.split_once('=') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| Error::format(format!("checkpoint header lacks {k}")));
        let role = match get("role")?.as_str() {
            "speaker" => Role::Speaker,
            "listener" => Role::Listener,
            other => return Err(Error::format(format!("unknown role {other}"))),
        };
        let parse_usize = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::format(format!("bad {k}"))) };
        let mut p = AgentParams::zeros(role, parse_usize("in")?, parse_usize("hidden")?, parse_usize("out")?);
        p.input_scale = get("input_scale")?.parse().map_err(|_| Error::format("bad input_scale"))?;
        let mut cursor = 0;
        for expected in ["W1", "b1", "W2", "b2"] {
            let head = lines.next().ok_or_else(|| Error::format(format!("missing array {expected}")))??;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != expected {
                return Err(Error::format(format!("expected header for {expected}, got {head:?}")));
            }
            let rows: usize = parts[1].parse().map_err(|_| Error::format("bad row count"))?;
            let cols: usize = parts[2].parse().map_err(|_| Error::format("bad column count"))?;
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| Error::format(format!("{expected} is truncated")))??;
                let values: Vec<f64> = line
                    .split('\t')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(format!("bad number in {expected}")))?;
                if values.len() != cols || cursor + cols > p.data.len() {
                    return Err(Error::format(format!("{expected} has the wrong shape")));
                }
                p.data[cursor..cursor + cols].copy_from_slice(&values);
                cursor += cols;
            }
        }
        if cursor != p.data.len() {
            return Err(Error::format("checkpoint arrays do not match the header dimensions"));
        }
        Ok(p)
    }
}

/// Adam moments and hyperparameters for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl OptimizerState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        OptimizerState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam step.
pub fn adam_step(opt: &mut OptimizerState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() || opt.m.len() != params.len() {
        return Err(Error::dimension(format!(
            "adam shapes differ: params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = opt.m[i] / c1;
        let v_hat = opt.v[i] / c2;
        params[i] -= opt.learning_rate * m_hat / (v_hat.sqrt() + opt.eps_hat);
    }
    Ok(())
}

/// Network parameters bundled with their optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub params: AgentParams,
    pub opt: OptimizerState,
}

impl Agent {
    pub fn new(params: AgentParams, learning_rate: f64) -> Self {
        let opt = OptimizerState::new(params.len(), learning_rate);
        Agent { params, opt }
    }

    pub fn apply(&mut self, grads: &[f64]) -> Result<()> {
        adam_step(&mut self.opt, self.params.as_mut_slice(), grads)
    }
}

/// Word distribution for a chip's CIELAB coordinates.
pub fn speaker_forward(p: &AgentParams, lab: &[f64; 3]) -> Vec<f64> {
    debug_assert_eq!(p.role, Role::Speaker);
    p.forward(Input::Features(lab)).probs()
}

/// Chip distribution for a word.
pub fn listener_forward(p: &AgentParams, word: usize) -> Vec<f64> {
    debug_assert_eq!(p.role, Role::Listener);
    p.forward(Input::OneHot(word)).probs()
}

/// Draws an index from a distribution by inverse CDF.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Mean cross-entropy `−log π(y|x)` over a batch and its gradient.
pub fn cross_entropy_gradient(p: &AgentParams, batch: &[(Input, usize)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut dlogits = vec![0.0; p.n_out()];
    for &(x, y) in batch {
        let fwd = p.forward(x);
        loss -= fwd.log_probs[y] * scale;
        for (d, l) in dlogits.iter_mut().zip(&fwd.log_probs) {
            *d = l.exp() * scale;
        }
        dlogits[y] -= scale;
        p.backward(x, &fwd, &dlogits, &mut grad);
    }
    (loss, grad)
}

/// Trains a speaker on `(chip, word)` pairs with minibatches drawn
/// uniformly with replacement.
pub fn train_supervised<R: Rng>(
    agent: &mut Agent,
    grid: &ChipGrid,
    data: &[(usize, usize)],
    steps: usize,
    batch: usize,
    rng: &mut R,
) -> Result<()> {
    if steps == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::validation("supervised training needs at least one example"));
    }
    if let Some(&(c, w)) = data.iter().find(|&&(c, w)| c >= grid.len() || w >= agent.params.n_out()) {
        return Err(Error::validation(format!("training pair ({c}, {w}) is out of range")));
    }
    let pick = Uniform::new(0, data.len());
    let mut examples = Vec::with_capacity(batch);
    for _ in 0..steps {
        examples.clear();
        for _ in 0..batch.max(1) {
            let (c, w) = data[pick.sample(rng)];
            examples.push((Input::Features(grid.lab(c)), w));
        }
        let (_, grad) = cross_entropy_gradient(&agent.params, &examples);
        agent.apply(&grad)?;
    }
    Ok(())
}

/// One sampled action and the reward it earned.
#[derive(Clone, Copy, Debug)]
pub struct Episode<'a> {
    pub input: Input<'a>,
    pub action: usize,
    pub reward: f64,
}

/// Gradient of `−(1/B) Σ (r_i − b) log π(a_i|x_i)`, where `b` is the batch
/// mean reward when `baseline` is set and zero otherwise. One-hot inputs
/// share a single forward and backward pass per distinct index.
pub fn reinforce_gradient(p: &AgentParams, episodes: &[Episode], baseline: bool) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; p.len()];
    if episodes.is_empty() {
        return Ok(grad);
    }
    if let Some(e) = episodes.iter().find(|e| !e.reward.is_finite()) {
        return Err(Error::validation(format!("reward {} is not finite", e.reward)));
    }
    let scale = 1.0 / episodes.len() as f64;
    let b = if baseline {
        episodes.iter().map(|e| e.reward).sum::<f64>() * scale
    } else {
        0.0
    };
    // Per one-hot index: Σ r_i e_{a_i} and Σ r_i.
    let mut grouped: Vec<Option<(Vec<f64>, f64)>> = Vec::new();
    let mut dlogits = vec![0.0; p.n_out()];
    for e in episodes {
        let r = (e.reward - b) * scale;
        if r == 0.0 {
            continue;
        }
        match e.input {
            Input::OneHot(i) => {
                if grouped.is_empty() {
                    grouped.resize(p.n_in(), None);
                }
                let slot = grouped[i].get_or_insert_with(|| (vec![0.0; p.n_out()], 0.0));
                slot.0[e.action] += r;
                slot.1 += r;
            }
            Input::Features(_) => {
                let fwd = p.forward(e.input);
                for (d, l) in dlogits.iter_mut().zip(&fwd.log_probs) {
                    *d = r * l.exp();
                }
                dlogits[e.action] -= r;
                p.backward(e.input, &fwd, &dlogits, &mut grad);
            }
        }
    }
    for (i, slot) in grouped.into_iter().enumerate() {
        if let Some((hits, total)) = slot {
            let x = Input::OneHot(i);
            let fwd = p.forward(x);
            for ((d, l), h) in dlogits.iter_mut().zip(&fwd.log_probs).zip(&hits) {
                *d = total * l.exp() - h;
            }
            p.backward(x, &fwd, &dlogits, &mut grad);
        }
    }
    Ok(grad)
}

pub fn reinforce_update(agent: &mut Agent, episodes: &[Episode], baseline: bool) -> Result<()> {
    let grad = reinforce_gradient(&agent.params, episodes, baseline)?;
    agent.apply(&grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Chip;
    use crate::seeds;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_params(role: Role, n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> AgentParams {
        let mut rng = seeds::stream(seed, &[]);
        let mut p = AgentParams::glorot(role, n_in, n_hidden, n_out, &mut rng);
        for v in p.b1_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in p.b2_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        p.with_input_scale(0.05)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
    }

    fn finite_difference(p: &AgentParams, loss: impl Fn(&AgentParams) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut q = p.clone();
        (0..p.len())
            .map(|i| {
                let orig = q.data[i];
                q.data[i] = orig + h;
                let up = loss(&q);
                q.data[i] = orig - h;
                let down = loss(&q);
                q.data[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_uniform_outputs() {
        let s = AgentParams::zeros(Role::Speaker, 3, 25, 4);
        let probs = speaker_forward(&s, &[50.0, 10.0, -20.0]);
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let l = AgentParams::zeros(Role::Listener, 4, 25, 330);
        let probs = listener_forward(&l, 2);
        assert!(probs.iter().all(|&p| (p - 1.0 / 330.0).abs() < 1e-15));
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let mut p = AgentParams::zeros(Role::Speaker, 3, 2, 2).with_input_scale(0.01);
        p.w1_mut().copy_from_slice(&[0.1, 0.0, -0.2, 0.0, 0.3, 0.0]);
        p.b1_mut().copy_from_slice(&[0.05, -0.1]);
        p.w2_mut().copy_from_slice(&[1.0, -1.0, 0.5, 2.0]);
        p.b2_mut().copy_from_slice(&[0.0, 0.2]);
        let lab = [50.0, 20.0, 10.0];
        // x = (0.5, 0.2, 0.1)
        let h0 = 1.0 / (1.0 + (-(0.1 * 0.5 - 0.2 * 0.1 + 0.05f64)).exp());
        let h1 = 1.0 / (1.0 + (-(0.3 * 0.2 - 0.1f64)).exp());
        let z0 = h0 - h1;
        let z1 = 0.5 * h0 + 2.0 * h1 + 0.2;
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        let got = speaker_forward(&p, &lab);
        assert!((got[0] - p0).abs() < 1e-15);
        assert!((got[0] + got[1] - 1.0).abs() < 1e-15);

        let mut l = AgentParams::zeros(Role::Listener, 2, 1, 3);
        l.w1_mut().copy_from_slice(&[2.0, -1.0]);
        l.w2_mut().copy_from_slice(&[1.0, 0.0, -1.0]);
        let h = 1.0 / (1.0 + 1.0f64.exp());
        let z = [(-h).exp(), 1.0, h.exp()];
        let total: f64 = z.iter().sum();
        let got = listener_forward(&l, 1);
        for i in 0..3 {
            assert!((got[i] - z[2 - i] / total).abs() < 1e-14);
        }
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let mut p = AgentParams::zeros(Role::Speaker, 3, 2, 3);
        p.b2_mut().copy_from_slice(&[1e4, 1e4 - 1.0, -1e4]);
        let probs = speaker_forward(&p, &[1e6, -1e6, 0.0]);
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        for trial in 0..100u64 {
            let p = random_params(Role::Speaker, 3, 4, 3, trial);
            let mut rng = seeds::stream(trial, &[1]);
            let inputs: Vec<[f64; 3]> = (0..3)
                .map(|_| [rng.gen_range(0.0..100.0), rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0)])
                .collect();
            let batch: Vec<(Input, usize)> = inputs
                .iter()
                .map(|x| (Input::Features(x), rng.gen_range(0..3)))
                .collect();
            let (_, analytic) = cross_entropy_gradient(&p, &batch);
            let numeric = finite_difference(&p, |q| cross_entropy_gradient(q, &batch).0);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!(rel_err(*a, *n) < 1e-4, "trial {trial}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn reinforce_gradient_matches_finite_differences() {
        for trial in 0..100u64 {
            let p = random_params(Role::Listener, 3, 4, 5, 1000 + trial);
            let mut rng = seeds::stream(trial, &[2]);
            let episodes: Vec<Episode> = (0..6)
                .map(|_| Episode {
                    input: Input::OneHot(rng.gen_range(0..3)),
                    action: rng.gen_range(0..5),
                    reward: rng.gen_range(0.0..1.0),
                })
                .collect();
            for baseline in [false, true] {
                let analytic = reinforce_gradient(&p, &episodes, baseline).unwrap();
                let b = if baseline { episodes.iter().map(|e| e.reward).sum::<f64>() / 6.0 } else { 0.0 };
                let surrogate = |q: &AgentParams| {
                    -episodes
                        .iter()
                        .map(|e| (e.reward - b) * q.forward(e.input).log_probs[e.action])
                        .sum::<f64>()
                        / 6.0
                };
                let numeric = finite_difference(&p, surrogate);
                for (a, n) in analytic.iter().zip(&numeric) {
                    assert!(rel_err(*a, *n) < 1e-4, "trial {trial}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut opt = OptimizerState::new(1, 0.005);
        let mut param = [1.0];
        adam_step(&mut opt, &mut param, &[2.0]).unwrap();
        assert!((param[0] - 0.995).abs() < 1e-8, "{}", param[0]);

        let mut opt = OptimizerState::new(3, 0.005);
        let mut params = [1.0, -2.0, 0.5];
        adam_step(&mut opt, &mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, [1.0, -2.0, 0.5]);
        assert!(matches!(adam_step(&mut opt, &mut params, &[0.0; 2]), Err(Error::Dimension(_))));
    }

    fn toy_grid() -> ChipGrid {
        let labs = [[20.0, 0.0, 0.0], [30.0, 5.0, 0.0], [80.0, -40.0, 40.0], [70.0, -30.0, 50.0]];
        let chips = labs
            .iter()
            .enumerate()
            .map(|(i, lab)| Chip { index: i, row: 'C', column: i as u8 + 1, lab: *lab })
            .collect();
        ChipGrid::new(chips, None).unwrap()
    }

    #[test]
    fn supervised_training_fits_a_separable_toy() {
        let grid = toy_grid();
        let data = [(0, 0), (1, 0), (2, 1), (3, 1)];
        let mut rng = seeds::stream(5, &[]);
        let mut agent = Agent::new(AgentParams::speaker(2, DEFAULT_HIDDEN, &mut rng), DEFAULT_LEARNING_RATE);
        let before = agent.clone();
        train_supervised(&mut agent, &grid, &data, 0, 50, &mut rng).unwrap();
        assert_eq!(agent, before);
        train_supervised(&mut agent, &grid, &data, 1000, 50, &mut rng).unwrap();
        for &(c, w) in &data {
            let probs = speaker_forward(&agent.params, grid.lab(c));
            let best = if probs[0] >= probs[1] { 0 } else { 1 };
            assert_eq!(best, w, "chip {c}: {probs:?}");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let grid = toy_grid();
        let data = [(0, 1), (1, 0), (2, 1), (3, 0)];
        let run = || {
            let mut rng = seeds::stream(11, &[]);
            let mut agent = Agent::new(AgentParams::speaker(2, 5, &mut rng), 0.005);
            train_supervised(&mut agent, &grid, &data, 50, 10, &mut rng).unwrap();
            agent
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_rewards_leave_params_unchanged() {
        let mut rng = seeds::stream(3, &[]);
        let mut agent = Agent::new(AgentParams::listener(3, 6, 4, &mut rng), 0.005);
        let before = agent.params.clone();
        let episodes: Vec<Episode> = (0..5)
            .map(|i| Episode { input: Input::OneHot(i % 3), action: i, reward: 0.0 })
            .collect();
        reinforce_update(&mut agent, &episodes, false).unwrap();
        assert_eq!(agent.params, before);
    }

    #[test]
    fn reinforce_raises_expected_reward_of_a_bandit() {
        // One state, two actions, reward 1 for action 0.
        let mut rng = seeds::stream(8, &[]);
        let mut agent = Agent::new(AgentParams::listener(1, 2, 4, &mut rng), 0.005);
        let expected = |a: &Agent| listener_forward(&a.params, 0)[0];
        let mut trace = vec![expected(&agent)];
        for _ in 0..200 {
            let probs = listener_forward(&agent.params, 0);
            let episodes: Vec<Episode> = (0..50)
                .map(|_| {
                    let action = sample_categorical(&probs, &mut rng);
                    Episode { input: Input::OneHot(0), action, reward: if action == 0 { 1.0 } else { 0.0 } }
                })
                .collect();
            reinforce_update(&mut agent, &episodes, false).unwrap();
            trace.push(expected(&agent));
        }
        let first: f64 = trace[..20].iter().sum::<f64>() / 20.0;
        let last: f64 = trace[trace.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(last > first + 0.1, "{first} -> {last}");
        for w in trace.windows(50).step_by(50) {
            assert!(w[w.len() - 1] > w[0]);
        }
    }

    #[test]
    fn score_function_estimate_matches_exact_expected_reward_gradient() {
        // Listener over 3 chips for 2 words; word w is drawn uniformly and
        // chip j earns reward R[w][j]. The exact expected reward is a finite sum.
        let rewards = [[1.0, 0.3, 0.0], [0.1, 0.2, 0.9]];
        let p = random_params(Role::Listener, 2, 3, 3, 77);
        let expected_reward = |q: &AgentParams| {
            (0..2)
                .map(|w| {
                    let probs = listener_forward(q, w);
                    0.5 * (0..3).map(|j| probs[j] * rewards[w][j]).sum::<f64>()
                })
                .sum::<f64>()
        };
        let exact = finite_difference(&p, expected_reward);
        let mut rng = seeds::stream(78, &[]);
        let n = 100_000;
        let probs: Vec<Vec<f64>> = (0..2).map(|w| listener_forward(&p, w)).collect();
        let episodes: Vec<Episode> = (0..n)
            .map(|_| {
                let w = rng.gen_range(0..2);
                let a = sample_categorical(&probs[w], &mut rng);
                Episode { input: Input::OneHot(w), action: a, reward: rewards[w][a] }
            })
            .collect();
        // reinforce_gradient is the gradient of the loss, i.e. minus the reward gradient.
        let estimate = reinforce_gradient(&p, &episodes, false).unwrap();
        let num: f64 = estimate.iter().zip(&exact).map(|(e, x)| (e + x).powi(2)).sum::<f64>().sqrt();
        let den: f64 = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(num / den < 0.05, "relative error {}", num / den);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = random_params(Role::Speaker, 3, 5, 4, 9);
        let back = AgentParams::from_text(p.to_text().as_bytes()).unwrap();
        assert_eq!(back, p);
        let truncated: String = p.to_text().lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(AgentParams::from_text(truncated.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn outputs_are_distributions(
            seed in any::<u64>(),
            l in -200.0f64..200.0,
            a in -500.0f64..500.0,
            b in -500.0f64..500.0,
        ) {
            let p = random_params(Role::Speaker, 3, 6, 7, seed);
            let probs = speaker_forward(&p, &[l, a, b]);
            prop_assert!(probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
