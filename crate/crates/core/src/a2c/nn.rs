//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Weights are stored input-major (`w[i * n_out + o]`) so that both the
//! forward pass and the weight update are contiguous axpy loops. The
//! checkpoint format transposes to the conventional row-major `[out][in]`.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng;

use crate::config::Activation;

pub trait Real: Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
fn r<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    n_in: usize,
    n_out: usize,
    w: Vec<T>,
    b: Vec<T>,
}

impl<T: Real> Dense<T> {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization for weights and biases.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let mut draw = || r::<T>(rng.random_range(-bound..=bound));
        let w = (0..n_in * n_out).map(|_| draw()).collect();
        let b = (0..n_out).map(|_| draw()).collect();
        Self { n_in, n_out, w, b }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, w: vec![T::zero(); n_in * n_out], b: vec![T::zero(); n_out] }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weight(&self, out: usize, inp: usize) -> T {
        self.w[inp * self.n_out + out]
    }

    pub fn set_weight(&mut self, out: usize, inp: usize, v: T) {
        self.w[inp * self.n_out + out] = v;
    }

    pub fn bias(&self) -> &[T] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.b
    }

    pub fn scale(&mut self, factor: T) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|v| *v *= factor);
    }

    fn forward(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &self.w[i * self.n_out..(i + 1) * self.n_out];
            for (yo, &wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
    }

    /// `dx = W^T dy`.
    fn backprop_input(&self, dy: &[T], dx: &mut [T]) {
        for (i, d) in dx.iter_mut().enumerate() {
            let row = &self.w[i * self.n_out..(i + 1) * self.n_out];
            *d = dot(row, dy);
        }
    }

    /// `W += step * x dy^T`, `b += step * dy`.
    fn add_outer(&mut self, x: &[T], dy: &[T], step: T) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let s = step * xi;
            let row = &mut self.w[i * self.n_out..(i + 1) * self.n_out];
            for (wo, &d) in row.iter_mut().zip(dy) {
                *wo += s * d;
            }
        }
        for (bo, &d) in self.b.iter_mut().zip(dy) {
            *bo += step * d;
        }
    }
}

/// Eight-lane dot product; lets the compiler vectorize the reduction.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ca, cb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut s = acc.iter().fold(T::zero(), |s, &v| s + v);
    for k in chunks * 8..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Hidden layers use `activation`; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    activation: Activation,
}

/// Per-layer outputs of the last forward pass. `outs[0]` is the input;
/// `outs[l + 1]` is the (activated) output of layer `l`.
#[derive(Debug, Clone, Default)]
pub struct Trace<T> {
    outs: Vec<Vec<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.outs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[T] {
        self.outs.first().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Gradients<T> {
    /// Flattened view: each layer's weights (input-major) then biases.
    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }
}

impl<T: Real> Mlp<T> {
    /// `sizes` = [input, hidden..., output].
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, activation: Activation) -> Self {
        assert!(!layers.is_empty());
        assert!(layers.windows(2).all(|w| w[0].n_out == w[1].n_in), "layer shapes do not chain");
        Self { layers, activation }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters, in the same order as [`Gradients::flatten`].
    pub fn params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    /// Mutable access to parameter `k` in flattened order.
    pub fn param_mut(&mut self, mut k: usize) -> &mut T {
        for l in &mut self.layers {
            if k < l.w.len() {
                return &mut l.w[k];
            }
            k -= l.w.len();
            if k < l.b.len() {
                return &mut l.b[k];
            }
            k -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, x: &[T], trace: &mut Trace<T>) {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        trace.outs.resize_with(self.layers.len() + 1, Vec::new);
        trace.outs[0].clear();
        trace.outs[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = trace.outs.split_at_mut(l + 1);
            let y = &mut next[0];
            y.resize(layer.n_out, T::zero());
            layer.forward(&prev[l], y);
            if l < last {
                self.activate(y);
            }
        }
    }

    /// Convenience forward pass returning the output vector.
    pub fn predict(&self, x: &[T]) -> Vec<T> {
        let mut t = Trace::default();
        self.forward(x, &mut t);
        t.output().to_vec()
    }

    fn activate(&self, y: &mut [T]) {
        match self.activation {
            Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Multiplies `d` by the activation derivative, given activated outputs `a`.
    fn activation_grad(&self, a: &[T], d: &mut [T]) {
        match self.activation {
            Activation::Relu => d.iter_mut().zip(a).for_each(|(d, &a)| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }),
            Activation::Tanh => d.iter_mut().zip(a).for_each(|(d, &a)| *d *= T::one() - a * a),
        }
    }

    /// Backpropagates `d_out` (gradient of a scalar w.r.t. the output) and
    /// visits each layer's output gradient from last to first.
    fn backprop(&self, trace: &Trace<T>, d_out: &[T], mut visit: impl FnMut(usize, &[T], &[T])) {
        assert_eq!(d_out.len(), self.output_dim());
        let mut delta = d_out.to_vec();
        let mut prev_delta = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.outs[l];
            if l > 0 {
                prev_delta.resize(self.layers[l].n_in, T::zero());
                self.layers[l].backprop_input(&delta, &mut prev_delta);
                self.activation_grad(input, &mut prev_delta);
            }
            visit(l, input, &delta);
            std::mem::swap(&mut delta, &mut prev_delta);
        }
    }

    /// Parameter gradient of `d_out . output` at the traced input.
    pub fn gradients(&self, trace: &Trace<T>, d_out: &[T]) -> Gradients<T> {
        let mut g: Vec<Dense<T>> = self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect();
        self.backprop(trace, d_out, |l, x, dy| g[l].add_outer(x, dy, T::one()));
        Gradients { layers: g }
    }

    /// `theta += step * d(d_out . output)/d theta` in one backward sweep
    /// followed by the update; returns the gradient norm.
    pub fn ascend(&mut self, trace: &Trace<T>, d_out: &[T], step: T) -> T {
        self.ascend_clipped(trace, d_out, step, None)
    }

    /// As [`Mlp::ascend`], but when the global gradient norm exceeds
    /// `max_norm` the gradient is rescaled to that norm first. Returns the
    /// norm before clipping.
    pub fn ascend_clipped(&mut self, trace: &Trace<T>, d_out: &[T], step: T, max_norm: Option<T>) -> T {
        assert_eq!(d_out.len(), self.output_dim());
        let n = self.layers.len();
        let mut deltas: Vec<Vec<T>> = vec![Vec::new(); n];
        deltas[n - 1] = d_out.to_vec();
        for l in (1..n).rev() {
            let mut prev = vec![T::zero(); self.layers[l].n_in];
            self.layers[l].backprop_input(&deltas[l], &mut prev);
            self.activation_grad(&trace.outs[l], &mut prev);
            deltas[l - 1] = prev;
        }
        // The weight gradient of a dense layer is an outer product, so its
        // squared norm factors as |x|^2 |dy|^2.
        let sq = |v: &[T]| v.iter().fold(T::zero(), |s, &x| s + x * x);
        let norm = deltas
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (l, d)| s + (sq(&trace.outs[l]) + T::one()) * sq(d))
            .sqrt();
        let scale = match max_norm {
            Some(m) if norm > m => m / norm,
            _ => T::one(),
        };
        for (l, d) in deltas.iter().enumerate() {
            self.layers[l].add_outer(&trace.outs[l], d, step * scale);
        }
        norm
    }

    pub fn apply(&mut self, grads: &Gradients<T>, step: T) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, &d) in layer.w.iter_mut().zip(&g.w) {
                *w += step * d;
            }
            for (b, &d) in layer.b.iter_mut().zip(&g.b) {
                *b += step * d;
            }
        }
    }

    /// Converts to another float type (used for f64 gradient checks).
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let cast = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { n_in: l.n_in, n_out: l.n_out, w: cast(&l.w), b: cast(&l.b) })
                .collect(),
            activation: self.activation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize], act: Activation, seed: u64) -> Mlp<f64> {
        Mlp::new(sizes, act, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn forward_matches_naive_evaluation() {
        let m = net(&[5, 4, 3], Activation::Relu, 1);
        let x = [0.5, -1.0, 0.0, 2.0, 0.25];
        let mut h = vec![0.0; 4];
        for o in 0..4 {
            h[o] = m.layers[0].bias()[o] + (0..5).map(|i| m.layers[0].weight(o, i) * x[i]).sum::<f64>();
            h[o] = h[o].max(0.0);
        }
        let want: Vec<f64> = (0..3)
            .map(|o| m.layers[1].bias()[o] + (0..4).map(|i| m.layers[1].weight(o, i) * h[i]).sum::<f64>())
            .collect();
        let got = m.predict(&x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..19).map(f64::from).collect();
        let b: Vec<f64> = (0..19).map(|i| f64::from(i) * 0.5).collect();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - want).abs() < 1e-9);
    }

    #[test]
    fn fused_update_equals_gradient_then_apply() {
        for act in [Activation::Relu, Activation::Tanh] {
            let mut a = net(&[6, 8, 8, 3], act, 2);
            let mut b = a.clone();
            let x = [0.1, 0.0, -0.3, 0.9, 0.5, 0.0];
            let d_out = [0.2, -1.0, 0.4];
            let mut t = Trace::default();
            a.forward(&x, &mut t);
            let g = a.gradients(&t, &d_out);
            a.apply(&g, 0.05);
            b.ascend(&t, &d_out, 0.05);
            for (p, q) in a.params().iter().zip(b.params()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipping_rescales_to_the_cap() {
        let mut a = net(&[6, 8, 8, 3], Activation::Relu, 4);
        let mut b = a.clone();
        let x = [0.1, 0.7, -0.3, 0.9, 0.5, 0.0];
        let d_out = [2.0, -3.0, 1.0];
        let mut t = Trace::default();
        a.forward(&x, &mut t);
        let g = a.gradients(&t, &d_out);
        let norm = g.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
        let cap = norm / 4.0;
        a.apply(&g, 0.05 / 4.0);
        let reported = b.ascend_clipped(&t, &d_out, 0.05, Some(cap));
        assert!((reported - norm).abs() < 1e-9 * norm);
        for (p, q) in a.params().iter().zip(b.params()) {
            assert!((p - q).abs() < 1e-12);
        }
        // Below the cap nothing changes.
        let mut c = net(&[6, 8, 8, 3], Activation::Relu, 4);
        let mut d = c.clone();
        c.ascend(&t, &d_out, 0.05);
        d.ascend_clipped(&t, &d_out, 0.05, Some(norm * 2.0));
        assert_eq!(c.params(), d.params());
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Relu, Activation::Tanh] {
            let mut m = net(&[4, 6, 5, 2], act, 3);
            let x = [0.3, -0.7, 0.2, 1.1];
            let d_out = [0.6, -0.4];
            let f = |m: &Mlp<f64>| m.predict(&x).iter().zip(&d_out).map(|(y, d)| y * d).sum::<f64>();
            let mut t = Trace::default();
            m.forward(&x, &mut t);
            let g = m.gradients(&t, &d_out).flatten();
            let h = 1e-6;
            for k in 0..m.param_count() {
                let orig = *m.param_mut(k);
                *m.param_mut(k) = orig + h;
                let up = f(&m);
                *m.param_mut(k) = orig - h;
                let down = f(&m);
                *m.param_mut(k) = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(rel_err(fd, g[k]) < 1e-4 || (fd - g[k]).abs() < 1e-9, "{act:?} param {k}: fd {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let m64 = net(&[3, 16, 16, 2], Activation::Relu, 4);
        let m32: Mlp<f32> = m64.cast();
        let x = [0.2, 0.4, -0.1];
        let y64 = m64.predict(&x);
        let y32 = m32.predict(&[0.2f32, 0.4, -0.1]);
        for (a, b) in y64.iter().zip(&y32) {
            assert!((a - f64::from(*b)).abs() < 1e-5);
        }
    }
}
