use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernels::{acc_down, acc_up, correlate};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Stride-2 convolution, halves the spatial size.
    Conv,
    /// Stride-2 transposed convolution, doubles the spatial size.
    ConvTranspose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_size: usize,
    pub out_size: usize,
    pub relu: bool,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * 9
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_size * self.in_size
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_size * self.out_size
    }
}

/// Encoder-decoder layout: one stride-2 conv per entry of `widths`, then
/// transposed convs mirroring the widths back to a single output channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub patch_size: usize,
    pub widths: Vec<usize>,
    /// 1 (mask) or 2 (mask + signed distance).
    pub input_channels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            patch_size: 128,
            widths: vec![8, 16, 32, 64, 64, 64, 64],
            input_channels: 1,
        }
    }
}

impl Architecture {
    /// Reduced layout used for gradient checks and quick tests.
    pub fn small(patch_size: usize, widths: &[usize]) -> Self {
        Self {
            patch_size,
            widths: widths.to_vec(),
            input_channels: 1,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn bottleneck_size(&self) -> usize {
        self.patch_size >> self.depth()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.depth();
        if d == 0 || d > 16 {
            return Err(Error::Config(format!("encoder depth must be in 1..=16, got {d}")));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if !(1..=2).contains(&self.input_channels) {
            return Err(Error::Config("input_channels must be 1 or 2".into()));
        }
        let b = self.bottleneck_size();
        if b == 0 || b << d != self.patch_size {
            return Err(Error::Config(format!(
                "patch size {} is not 2^{d} times a bottleneck size",
                self.patch_size
            )));
        }
        Ok(())
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let d = self.depth();
        let p = self.patch_size;
        let b = self.bottleneck_size();
        let mut shapes = Vec::with_capacity(2 * d);
        for i in 0..d {
            shapes.push(LayerShape {
                kind: LayerKind::Conv,
                in_channels: if i == 0 { self.input_channels } else { self.widths[i - 1] },
                out_channels: self.widths[i],
                in_size: p >> i,
                out_size: p >> (i + 1),
                relu: true,
            });
        }
        for i in 0..d {
            let last = i == d - 1;
            shapes.push(LayerShape {
                kind: LayerKind::ConvTranspose,
                in_channels: self.widths[d - 1 - i],
                out_channels: if last { 1 } else { self.widths[d - 2 - i] },
                in_size: b << i,
                out_size: b << (i + 1),
                relu: !last,
            });
        }
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub shape: LayerShape,
    /// Conv: `[out][in][3][3]`; transposed conv: `[in][out][3][3]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn kernel(&self, ci: usize, co: usize) -> &[T] {
        let s = &self.shape;
        let k = match s.kind {
            LayerKind::Conv => co * s.in_channels + ci,
            LayerKind::ConvTranspose => ci * s.out_channels + co,
        };
        &self.weight[9 * k..9 * k + 9]
    }

    fn kernel_index(&self, ci: usize, co: usize) -> usize {
        let s = &self.shape;
        match s.kind {
            LayerKind::Conv => co * s.in_channels + ci,
            LayerKind::ConvTranspose => ci * s.out_channels + co,
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let s = &self.shape;
        let (ip, op) = (s.in_size * s.in_size, s.out_size * s.out_size);
        let mut y = vec![T::zero(); s.out_len()];
        for co in 0..s.out_channels {
            let out = &mut y[co * op..(co + 1) * op];
            out.fill(self.bias[co]);
            for ci in 0..s.in_channels {
                let inp = &x[ci * ip..(ci + 1) * ip];
                match s.kind {
                    LayerKind::Conv => acc_down(inp, out, s.out_size, self.kernel(ci, co)),
                    LayerKind::ConvTranspose => acc_up(inp, out, s.in_size, self.kernel(ci, co)),
                }
            }
        }
        if s.relu {
            for v in &mut y {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        y
    }

    /// Given `dy` (already through the activation derivative), accumulates
    /// weight and bias gradients and returns `dx` when requested.
    fn backward(&self, x: &[T], dy: &[T], g: &mut LayerGrad<T>, want_dx: bool) -> Option<Vec<T>> {
        let s = &self.shape;
        let (ip, op) = (s.in_size * s.in_size, s.out_size * s.out_size);
        for co in 0..s.out_channels {
            g.bias[co] += dy[co * op..(co + 1) * op].iter().copied().sum::<T>();
        }
        for co in 0..s.out_channels {
            let d = &dy[co * op..(co + 1) * op];
            for ci in 0..s.in_channels {
                let inp = &x[ci * ip..(ci + 1) * ip];
                let k = self.kernel_index(ci, co);
                let gw = &mut g.weight[9 * k..9 * k + 9];
                match s.kind {
                    LayerKind::Conv => correlate(d, inp, s.out_size, gw),
                    LayerKind::ConvTranspose => correlate(inp, d, s.in_size, gw),
                }
            }
        }
        if !want_dx {
            return None;
        }
        let mut dx = vec![T::zero(); s.in_len()];
        for ci in 0..s.in_channels {
            let out = &mut dx[ci * ip..(ci + 1) * ip];
            for co in 0..s.out_channels {
                let d = &dy[co * op..(co + 1) * op];
                match s.kind {
                    LayerKind::Conv => acc_up(d, out, s.out_size, self.kernel(ci, co)),
                    LayerKind::ConvTranspose => acc_down(d, out, s.in_size, self.kernel(ci, co)),
                }
            }
        }
        Some(dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients with the same layout as a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: Architecture,
    pub layers: Vec<Layer<T>>,
}

/// Post-activation outputs of every layer; `acts[0]` is the input.
pub struct Trace<T> {
    pub acts: Vec<Vec<T>>,
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases. The fan-in
    /// of a transposed conv counts the taps that reach one output pixel on
    /// average (9 / 4 per input channel).
    pub fn init(arch: &Architecture, seed_value: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed::derive_seed(seed_value, "surrogate-init", 0));
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|shape| {
                let fan_in = match shape.kind {
                    LayerKind::Conv => 9.0 * shape.in_channels as f64,
                    LayerKind::ConvTranspose => 2.25 * shape.in_channels as f64,
                };
                let bound = (6.0 / fan_in).sqrt();
                let weight = (0..shape.weight_len())
                    .map(|_| T::of(rng.random_range(-bound..bound)))
                    .collect();
                let bias = vec![T::zero(); shape.out_channels];
                Layer { shape, weight, bias }
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    /// Checks layer shapes against the architecture and weight finiteness.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let shapes = self.arch.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, found {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, (s, l)) in shapes.iter().zip(&self.layers).enumerate() {
            if *s != l.shape || l.weight.len() != s.weight_len() || l.bias.len() != s.out_channels {
                return Err(Error::Shape(format!("layer {k} does not match the architecture")));
            }
            if l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("layer {k} has non-finite weights")));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_channels * self.arch.patch_size * self.arch.patch_size
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l.forward(&a);
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<Trace<T>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let next = l.forward(acts.last().expect("input pushed"));
            acts.push(next);
        }
        Ok(Trace { acts })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the network output is `d_out`.
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grads: &mut Gradients<T>) {
        let mut dy = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.shape.relu {
                for (d, a) in dy.iter_mut().zip(&trace.acts[l + 1]) {
                    if *a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            match layer.backward(&trace.acts[l], &dy, &mut grads.layers[l], l > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    shape: l.shape.clone(),
                    weight: l.weight.iter().map(|v| U::of(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Masked mean squared error over `mask == true` pixels and its gradient
/// with respect to `pred`. Zero (with zero gradient) when nothing is masked in.
pub fn masked_mse<T: Scalar>(pred: &[T], target: &[T], mask: &[bool]) -> (T, Vec<T>) {
    let n = mask.iter().filter(|&&m| m).count();
    let mut grad = vec![T::zero(); pred.len()];
    if n == 0 {
        return (T::zero(), grad);
    }
    let inv = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    for k in 0..pred.len() {
        if mask[k] {
            let e = pred[k] - target[k];
            loss += e * e;
            grad[k] = (e + e) * inv;
        }
    }
    (loss * inv, grad)
}
