//! Fully connected ReLU network with hand-written backpropagation, Adam, and
//! a binary checkpoint format.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters are stored per layer as a row-major `out x in` weight block
/// followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

/// Activations of every layer for one input, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!(
            "network needs >= 2 layers of size >= 1, got {sizes:?}"
        )));
    }
    Ok(())
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Sequential dot product; the batched kernel accumulates in the same order,
/// so single and batched forward passes agree bitwise.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `y[r] = W x[r] + b` for each row, in 4x4 register blocks. Every output is
/// still a sequential sum over inputs, matching [`dot`].
fn affine_rows(x: &[f64], n: usize, n_in: usize, w: &[f64], b: &[f64], n_out: usize, y: &mut [f64]) {
    // input-major copy of the weights so four adjacent outputs load together
    let mut wt = vec![0.0; n_in * n_out];
    if n >= 4 {
        for o in 0..n_out {
            for i in 0..n_in {
                wt[i * n_out + o] = w[o * n_in + i];
            }
        }
    }
    let mut r = 0;
    while r + 4 <= n {
        let x0 = &x[r * n_in..(r + 1) * n_in];
        let x1 = &x[(r + 1) * n_in..(r + 2) * n_in];
        let x2 = &x[(r + 2) * n_in..(r + 3) * n_in];
        let x3 = &x[(r + 3) * n_in..(r + 4) * n_in];
        let mut o = 0;
        while o + 4 <= n_out {
            let mut acc = [[0.0f64; 4]; 4];
            for i in 0..n_in {
                let xs = [x0[i], x1[i], x2[i], x3[i]];
                let ws: [f64; 4] = wt[i * n_out + o..i * n_out + o + 4].try_into().unwrap();
                for (a, xv) in acc.iter_mut().zip(xs) {
                    for (c, wv) in a.iter_mut().zip(ws) {
                        *c += wv * xv;
                    }
                }
            }
            for (k, a) in acc.iter().enumerate() {
                for (j, c) in a.iter().enumerate() {
                    y[(r + k) * n_out + o + j] = c + b[o + j];
                }
            }
            o += 4;
        }
        for o in o..n_out {
            let wr = &w[o * n_in..(o + 1) * n_in];
            let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n_in {
                let wi = wr[i];
                a0 += x0[i] * wi;
                a1 += x1[i] * wi;
                a2 += x2[i] * wi;
                a3 += x3[i] * wi;
            }
            y[r * n_out + o] = a0 + b[o];
            y[(r + 1) * n_out + o] = a1 + b[o];
            y[(r + 2) * n_out + o] = a2 + b[o];
            y[(r + 3) * n_out + o] = a3 + b[o];
        }
        r += 4;
    }
    for r in r..n {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            y[r * n_out + o] = dot(&w[o * n_in..(o + 1) * n_in], xr) + b[o];
        }
    }
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .map_err(|e| Error::Config(e.to_string()))?;
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
            seed,
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        if params.len() != param_count(sizes) {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                param_count(sizes),
                params.len()
            )));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
            seed,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Contract(format!(
                "input length {} != network input size {}",
                input.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let relu = l + 1 < n_layers;
            x = (0..n_out)
                .map(|o| {
                    let z = dot(&weights[o * n_in..(o + 1) * n_in], &x) + biases[o];
                    if relu {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            offset += (n_in + 1) * n_out;
        }
        Ok(x)
    }

    /// Forward pass over `n` row-major inputs; returns `n` row-major outputs.
    pub fn forward_batch(&self, inputs: &[f64], n: usize) -> Result<Vec<f64>> {
        if inputs.len() != n * self.input_size() {
            return Err(Error::Contract(format!(
                "batch of {} values is not {n} inputs of size {}",
                inputs.len(),
                self.input_size()
            )));
        }
        let mut x = inputs.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let mut y = vec![0.0; n * n_out];
            affine_rows(&x, n, n_in, weights, biases, n_out, &mut y);
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
            offset += (n_in + 1) * n_out;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<Activations> {
        self.check_input(input)?;
        let mut layers = vec![input.to_vec()];
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let relu = l + 1 < n_layers;
            let x = layers.last().unwrap();
            let next = (0..n_out)
                .map(|o| {
                    let z = dot(&weights[o * n_in..(o + 1) * n_in], x) + biases[o];
                    if relu {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            layers.push(next);
            offset += (n_in + 1) * n_out;
        }
        Ok(Activations { layers })
    }

    /// Adds d(output . out_grad)/d(params) into `grads`.
    pub fn backward_into(&self, acts: &Activations, out_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        if out_grad.len() != self.output_size() || grads.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "backward shape mismatch: out_grad {} (want {}), grads {} (want {})",
                out_grad.len(),
                self.output_size(),
                grads.len(),
                self.params.len()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut delta = out_grad.to_vec();
        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= (n_in + 1) * n_out;
            let x = &acts.layers[l];
            let (gw, gb) = grads[offset..offset + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[offset..offset + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
            // ReLU derivative; activations below were stored post-ReLU
            for (p, a) in prev.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(())
    }

    pub fn backward(&self, input: &[f64], out_grad: &[f64]) -> Result<Vec<f64>> {
        let acts = self.forward_cached(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(&acts, out_grad, &mut grads)?;
        Ok(grads)
    }

    pub fn copy_from(&mut self, other: &Mlp) {
        self.params.copy_from_slice(&other.params);
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn save(&self, step: u64, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&step.to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self, step: u64) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + 8 * self.params.len());
        self.save(step, &mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a checkpoint, returning the network and its step counter.
    pub fn load(mut r: impl Read) -> Result<(Mlp, u64)> {
        let bad = |e: std::io::Error| Error::Format(format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a network checkpoint".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf).map_err(bad)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut u32buf).map_err(bad)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u32buf).map_err(bad)?;
            sizes.push(u32::from_le_bytes(u32buf) as usize);
        }
        check_sizes(&sizes).map_err(|e| Error::Format(e.to_string()))?;
        r.read_exact(&mut u64buf).map_err(bad)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf).map_err(bad)?;
        let step = u64::from_le_bytes(u64buf);
        let mut params = vec![0.0; param_count(&sizes)];
        for p in params.iter_mut() {
            r.read_exact(&mut u64buf).map_err(bad)?;
            *p = f64::from_le_bytes(u64buf);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(bad)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok((Mlp { sizes, params, seed }, step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    Applied,
    /// Gradient contained NaN or infinity; parameters untouched.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    skipped: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, clip_norm: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            skipped: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Clips `grads` to `clip_norm` in place and returns the pre-clip norm.
    pub fn clip(&self, grads: &mut [f64]) -> f64 {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > self.clip_norm && norm > 0.0 {
            let k = self.clip_norm / norm;
            grads.iter_mut().for_each(|g| *g *= k);
        }
        norm
    }

    pub fn apply(&mut self, net: &mut Mlp, grads: &mut [f64]) -> Result<UpdateStatus> {
        if grads.len() != net.params.len() || self.m.len() != grads.len() {
            return Err(Error::Contract(format!(
                "optimizer shape mismatch: {} grads for {} params",
                grads.len(),
                net.params.len()
            )));
        }
        self.step += 1;
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return Ok(UpdateStatus::Skipped);
        }
        self.clip(grads);
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.step.min(i32::MAX as u64) as i32);
        for (((p, g), m), v) in net
            .params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(UpdateStatus::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_formula() {
        assert_eq!(param_count(&[17, 128, 128, 72]), 28_104);
        let net = Mlp::new(&[17, 128, 128, 72], 3).unwrap();
        assert_eq!(net.param_count(), 28_104);
    }

    #[test]
    fn identity_layer() {
        let net = Mlp::from_params(&[2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(net.forward(&[0.3, -2.0]).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Mlp::new(&[3], 0).is_err());
        assert!(Mlp::new(&[3, 0, 1], 0).is_err());
    }
}
