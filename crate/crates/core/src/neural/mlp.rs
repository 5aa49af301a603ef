use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Result, RtiError};

/// Units in each hidden layer.
pub const HIDDEN_WIDTH: usize = 16;
/// Number of hidden (ELU) layers before the linear output unit.
pub const HIDDEN_LAYERS: usize = 4;

/// Floating-point scalar the network can run in; `f32` for training and
/// rendering, `f64` for gradient checks.
pub trait Real:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp_m1(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp_m1(self) -> Self {
                <$t>::exp_m1(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}
impl_real!(f32);
impl_real!(f64);

#[inline]
pub(crate) fn elu<T: Real>(z: T) -> T {
    if z > T::ZERO {
        z
    } else {
        z.exp_m1()
    }
}

/// ELU derivative written in terms of the activation `a = elu(z)`.
#[inline]
fn elu_grad_from_output<T: Real>(a: T) -> T {
    if a > T::ZERO {
        T::ONE
    } else {
        a + T::ONE
    }
}

/// Fully connected network with ELU hidden layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer: the `in x out` weight
/// matrix (row-major, so `w[i * out + o]` connects input `i` to unit `o`)
/// followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights<T = f32> {
    dims: Vec<usize>,
    params: Vec<T>,
}

/// Layer widths of the decoder for an input of `input` values.
pub fn architecture(input: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
    dims.push(1);
    dims
}

fn param_len(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> MlpWeights<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(RtiError::invalid(format!("invalid layer widths {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(RtiError::invalid("the output layer must have a single unit"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![T::ZERO; param_len(dims)],
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        if params.len() != m.params.len() {
            return Err(RtiError::invalid(format!(
                "layer widths {dims:?} need {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(RtiError::invalid("network parameters must be finite"));
        }
        m.params = params;
        Ok(m)
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        for l in 0..m.layer_count() {
            let (fan_in, fan_out) = (m.dims[l], m.dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w_off, b_off) = m.offsets(l);
            for p in &mut m.params[w_off..b_off] {
                *p = T::from_f64(rng.random_range(-limit..limit));
            }
        }
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_len(&self) -> usize {
        self.dims[0]
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Offsets of layer `l`'s weights and biases in the flat vector.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let w_off = param_len(&self.dims[..=l]);
        (w_off, w_off + self.dims[l] * self.dims[l + 1])
    }

    /// Weight matrix and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (w_off, b_off) = self.offsets(l);
        let out = self.dims[l + 1];
        (&self.params[w_off..b_off], &self.params[b_off..b_off + out])
    }

    /// Number of connection weights, biases excluded.
    pub fn weight_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Real>(&self) -> MlpWeights<U> {
        MlpWeights {
            dims: self.dims.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.to_f64())).collect(),
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(RtiError::invalid(format!(
                "network expects {} inputs, got {}",
                self.input_len(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Total activation storage for one sample, input included.
    pub(crate) fn activation_len(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Runs the network, leaving every layer's activations in `acts`
    /// (input first). Returns the output.
    pub(crate) fn forward_store(&self, acts: &mut [T]) -> T {
        let mut start = 0;
        let last = self.layer_count() - 1;
        for l in 0..=last {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = self.layer(l);
            let (prev, rest) = acts[start..].split_at_mut(inp);
            let next = &mut rest[..out];
            affine(w, b, prev, next);
            if l < last {
                next.iter_mut().for_each(|v| *v = elu(*v));
            }
            start += inp;
        }
        acts[start]
    }

    /// Accumulates `dy * d(output)/d(params)` into `grad`, using activations
    /// from [`forward_store`](Self::forward_store). `delta` and `delta_prev`
    /// need room for the widest layer.
    pub(crate) fn backward_store(&self, acts: &[T], dy: T, grad: &mut [T], delta: &mut Vec<T>, delta_prev: &mut Vec<T>) {
        delta.clear();
        delta.push(dy);
        let mut end = acts.len() - 1;
        for l in (0..self.layer_count()).rev() {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let start = end - inp;
            let prev = &acts[start..end];
            let (w_off, b_off) = self.offsets(l);
            let (gw, gb) = grad[w_off..b_off + out].split_at_mut(inp * out);
            for (g, d) in gb.iter_mut().zip(delta.iter()) {
                *g += *d;
            }
            for (row, &a) in gw.chunks_exact_mut(out).zip(prev) {
                for (g, d) in row.iter_mut().zip(delta.iter()) {
                    *g += a * *d;
                }
            }
            if l > 0 {
                let w = &self.params[w_off..b_off];
                delta_prev.clear();
                for (row, &a) in w.chunks_exact(out).zip(prev) {
                    let mut s = T::ZERO;
                    for (wv, d) in row.iter().zip(delta.iter()) {
                        s += *wv * *d;
                    }
                    delta_prev.push(s * elu_grad_from_output(a));
                }
                std::mem::swap(delta, delta_prev);
            }
            end = start;
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<T> {
        self.check_input(input)?;
        let mut acts = vec![T::ZERO; self.activation_len()];
        acts[..input.len()].copy_from_slice(input);
        Ok(self.forward_store(&mut acts))
    }

    /// Absolute error `|Z(input) - target|` and its gradient with respect to
    /// every parameter (flat layout). At zero error the subgradient 0 is used.
    pub fn backward(&self, input: &[T], target: T) -> Result<(T, Vec<T>)> {
        self.check_input(input)?;
        let mut acts = vec![T::ZERO; self.activation_len()];
        acts[..input.len()].copy_from_slice(input);
        let y = self.forward_store(&mut acts);
        let diff = y - target;
        let (loss, dy) = if diff > T::ZERO {
            (diff, T::ONE)
        } else if diff < T::ZERO {
            (-diff, -T::ONE)
        } else {
            (T::ZERO, T::ZERO)
        };
        let mut grad = vec![T::ZERO; self.params.len()];
        let width = self.dims.iter().copied().max().unwrap_or(1);
        let mut delta = Vec::with_capacity(width);
        let mut delta_prev = Vec::with_capacity(width);
        self.backward_store(&acts, dy, &mut grad, &mut delta, &mut delta_prev);
        Ok((loss, grad))
    }
}

/// `out = b + x W` for a row-major `in x out` matrix.
#[inline]
pub(crate) fn affine<T: Real>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    out.copy_from_slice(b);
    for (row, &xi) in w.chunks_exact(out.len()).zip(x) {
        for (o, wv) in out.iter_mut().zip(row) {
            *o += xi * *wv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(input: usize, seed: u64) -> MlpWeights<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = architecture(input);
        let n = MlpWeights::<f64>::zeros(&dims).unwrap().param_count();
        let params = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
        MlpWeights::from_params(&dims, params).unwrap()
    }

    /// Evaluation written out layer by layer with explicit index arithmetic.
    fn straight_line(net: &MlpWeights<f64>, input: &[f64]) -> f64 {
        let dims = net.dims();
        let p = net.params();
        let mut x = input.to_vec();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let mut y = vec![0.0; n_out];
            for (o, yo) in y.iter_mut().enumerate() {
                let mut s = p[off + n_in * n_out + o];
                for (i, xi) in x.iter().enumerate() {
                    s += xi * p[off + i * n_out + o];
                }
                *yo = if l + 2 < dims.len() {
                    if s > 0.0 {
                        s
                    } else {
                        s.exp() - 1.0
                    }
                } else {
                    s
                };
            }
            off += n_in * n_out + n_out;
            x = y;
        }
        x[0]
    }

    #[test]
    fn parameter_counts() {
        let net = MlpWeights::<f32>::zeros(&architecture(8 + 20)).unwrap();
        assert_eq!(net.weight_count(), 1232);
        assert_eq!(net.weight_count() + 20, 1252);
        assert_eq!(net.param_count(), 1232 + 4 * 16 + 1);
        assert_eq!(net.layer_count(), 5);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpWeights::<f32>::zeros(&architecture(6)).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0, 0.0, 5.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_built_identity_slice() {
        // single linear layer selecting input 2
        let net = MlpWeights::<f64>::from_params(&[4, 1], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[9.0, 8.0, 0.625, 7.0]).unwrap(), 0.625);
        // positive inputs pass through ELU unchanged
        let mut dims = vec![1];
        dims.extend([1, 1, 1]);
        let net = MlpWeights::<f64>::from_params(&dims, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.375]).unwrap(), 0.375);
    }

    #[test]
    fn forward_matches_straight_line_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..20 {
            let net = random_net(28, seed);
            let x: Vec<f64> = (0..28).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = straight_line(&net, &x);
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
            let a32 = net.cast::<f32>().forward(&x.iter().map(|&v| v as f32).collect::<Vec<_>>()).unwrap();
            assert!((a32 as f64 - b).abs() < 1e-4 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = MlpWeights::<f32>::zeros(&architecture(5)).unwrap();
        assert!(net.forward(&[0.0; 4]).is_err());
        assert!(net.backward(&[0.0; 6], 0.0).is_err());
        assert!(MlpWeights::<f32>::from_params(&[2, 1], vec![0.0; 2]).is_err());
        assert!(MlpWeights::<f32>::zeros(&[2, 3]).is_err());
    }

    #[test]
    fn exact_target_gives_zero_gradient() {
        let net = random_net(10, 1);
        let x = vec![0.1; 10];
        let y = net.forward(&x).unwrap();
        let (loss, grad) = net.backward(&x, y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn residual_sign_flips_gradient() {
        let net = random_net(10, 2);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = net.forward(&x).unwrap();
        let (_, above) = net.backward(&x, y - 0.5).unwrap();
        let (_, below) = net.backward(&x, y + 0.5).unwrap();
        assert!(above.iter().zip(&below).all(|(a, b)| *a == -*b));
        assert!(above.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-4;
        for seed in 0..10 {
            let net = random_net(12, 100 + seed);
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = net.forward(&x).unwrap();
            let target = y + if seed % 2 == 0 { 3.0 } else { -3.0 };
            let (_, grad) = net.backward(&x, target).unwrap();
            for k in 0..net.param_count() {
                let mut plus = net.clone();
                plus.params_mut()[k] += h;
                let mut minus = net.clone();
                minus.params_mut()[k] -= h;
                let lp = (plus.forward(&x).unwrap() - target).abs();
                let lm = (minus.forward(&x).unwrap() - target).abs();
                let fd = (lp - lm) / (2.0 * h);
                let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
                assert!(err <= 1e-3 || (fd - grad[k]).abs() < 1e-8, "param {k}: {fd} vs {}", grad[k]);
            }
        }
    }
}
