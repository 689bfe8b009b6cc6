use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Standard, Uniform};
use rand::Rng;

use super::loss::softmax_rows;
use super::spec::{LayerSpec, ModelSpec, Shape3};
use super::Scalar;
use crate::error::{Error, Result};
use crate::seed;

/// Weight and bias of one parametric layer.
///
/// Convolution weights are `(out_channels, kh * kw * in_channels)` with the
/// column index `(i * kw + j) * in_channels + c`; dense weights are
/// `(out_features, in_features)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter gradients, one slot per layer; `None` for parameter-free or
/// frozen layers.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub layers: Vec<Option<Params<T>>>,
}

enum Saved<T> {
    Nothing,
    Cols(Array2<T>),
    Input(Array2<T>),
    Output(Array2<T>),
    Mask(Array2<T>),
}

/// Activations retained by a training-mode forward pass.
pub struct ForwardCache<T> {
    from: usize,
    batch: usize,
    saved: Vec<Saved<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Inverted dropout: zeroes each element with probability `rate` and scales
/// survivors by `1 / (1 - rate)`. Returns the mask actually applied.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Array2<T>, rate: f64, rng: &mut R) -> (Array2<T>, Array2<T>) {
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = Array2::from_shape_simple_fn(x.dim(), || {
        let u: f64 = Standard.sample(rng);
        if u < rate {
            T::zero()
        } else {
            keep
        }
    });
    (x * &mask, mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar> {
    spec: ModelSpec,
    shapes: Vec<Shape3>,
    params: Vec<Option<Params<T>>>,
    trainable: Vec<bool>,
}

impl<T: Scalar> Network<T> {
    /// Uniform `±1/sqrt(fan_in)` initialisation of every weight and bias.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for i in 0..net.params.len() {
            if net.params[i].is_some() {
                net.reinit_layer(i, seed::derive(seed, &[i as u64]))?;
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, &input)| {
                layer.param_shape(input).map(|(w, b)| Params {
                    weight: Array2::zeros((w[0], w[1..].iter().product())),
                    bias: Array1::zeros(b),
                })
            })
            .collect::<Vec<_>>();
        let trainable = params.iter().map(Option::is_some).collect();
        Ok(Self {
            spec,
            shapes,
            params,
            trainable,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape3] {
        &self.shapes
    }

    pub fn num_layers(&self) -> usize {
        self.spec.layers.len()
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().expect("validated").len()
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn head_index(&self) -> usize {
        self.spec.head_index().expect("validated network ends in a linear layer")
    }

    pub fn params(&self, i: usize) -> Option<&Params<T>> {
        self.params.get(i).and_then(Option::as_ref)
    }

    pub fn params_mut(&mut self, i: usize) -> Option<&mut Params<T>> {
        self.params.get_mut(i).and_then(Option::as_mut)
    }

    pub fn set_params(&mut self, i: usize, p: Params<T>) -> Result<()> {
        let cur = self
            .params(i)
            .ok_or_else(|| Error::ShapeMismatch(format!("layer {i} has no parameters")))?;
        if cur.weight.dim() != p.weight.dim() || cur.bias.len() != p.bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer {i} expects weight {:?} and bias {}, got {:?} and {}",
                cur.weight.dim(),
                cur.bias.len(),
                p.weight.dim(),
                p.bias.len()
            )));
        }
        self.params[i] = Some(p);
        Ok(())
    }

    pub fn reinit_layer(&mut self, i: usize, seed: u64) -> Result<()> {
        let p = self
            .params_mut(i)
            .ok_or_else(|| Error::InvalidParameter(format!("layer {i} has no parameters")))?;
        let bound = 1.0 / (p.weight.ncols() as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = seed::rng(seed, &[]);
        p.weight.mapv_inplace(|_| T::of(dist.sample(&mut rng)));
        p.bias.mapv_inplace(|_| T::of(dist.sample(&mut rng)));
        Ok(())
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    /// Sets which layers receive updates. Entries for parameter-free layers
    /// must be `false`.
    pub fn set_trainable(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "trainable mask has {} entries for {} layers",
                mask.len(),
                self.params.len()
            )));
        }
        if let Some(i) = (0..mask.len()).find(|&i| mask[i] && self.params[i].is_none()) {
            return Err(Error::InvalidParameter(format!("layer {i} has no parameters to train")));
        }
        self.trainable = mask.to_vec();
        Ok(())
    }

    pub fn unfreeze_all(&mut self) {
        self.trainable = self.params.iter().map(Option::is_some).collect();
    }

    pub fn freeze_all_but_head(&mut self) {
        let head = self.head_index();
        self.trainable = (0..self.params.len()).map(|i| i == head).collect();
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .filter_map(|(p, _)| p.as_ref())
            .map(Params::len)
            .sum()
    }

    pub fn first_trainable(&self) -> Option<usize> {
        self.trainable.iter().position(|&t| t)
    }

    /// Number of leading layers whose output is a fixed function of the input
    /// during training: frozen and not stochastic.
    pub fn frozen_prefix_len(&self) -> usize {
        self.spec
            .layers
            .iter()
            .zip(&self.trainable)
            .position(|(l, &t)| t || matches!(l, LayerSpec::Dropout { .. }))
            .unwrap_or(self.spec.layers.len())
    }

    fn check_input(&self, x: &ArrayView2<T>, from: usize) -> Result<()> {
        let want = self.shapes[from].len();
        if x.ncols() != want {
            return Err(Error::ShapeMismatch(format!(
                "layer {from} expects {want} features per example, got {}",
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Empty("forward pass on an empty batch".into()));
        }
        Ok(())
    }

    fn run(
        &self,
        x: ArrayView2<T>,
        from: usize,
        to: usize,
        mut rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<(Array2<T>, Vec<Saved<T>>)> {
        if from > to || to > self.num_layers() {
            return Err(Error::InvalidParameter(format!("bad layer range {from}..{to}")));
        }
        self.check_input(&x, from)?;
        let training = rng.is_some();
        let keep_from = self.first_trainable().unwrap_or(usize::MAX).max(from);
        let mut saved = Vec::with_capacity(to - from);
        let mut a = x.as_standard_layout().into_owned();
        for i in from..to {
            let keep = training && i >= keep_from;
            let input = self.shapes[i];
            let (next, s) = match self.spec.layers[i] {
                LayerSpec::Conv2d {
                    kernel: [kh, kw], ..
                } => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let cols = im2col(&a, input, kh, kw);
                    let out = conv_from_cols(&cols, p, a.nrows());
                    let s = if keep && self.trainable[i] {
                        Saved::Cols(cols)
                    } else {
                        Saved::Nothing
                    };
                    (out, s)
                }
                LayerSpec::Linear { .. } => {
                    let p = self.params[i].as_ref().expect("linear has params");
                    let out = a.dot(&p.weight.t()) + &p.bias;
                    let s = if keep && self.trainable[i] {
                        Saved::Input(a)
                    } else {
                        Saved::Nothing
                    };
                    (out, s)
                }
                LayerSpec::Relu => {
                    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
                    let s = if keep { Saved::Output(a.clone()) } else { Saved::Nothing };
                    (a, s)
                }
                LayerSpec::Dropout { rate } => match rng.as_deref_mut() {
                    Some(r) if rate > 0.0 => {
                        let (out, mask) = dropout(&a, rate, r);
                        let s = if keep { Saved::Mask(mask) } else { Saved::Nothing };
                        (out, s)
                    }
                    _ => (a, Saved::Nothing),
                },
                LayerSpec::Flatten => (a, Saved::Nothing),
            };
            a = next;
            if training {
                saved.push(s);
            }
        }
        Ok((a, saved))
    }

    /// Training-mode pass over layers `from..` on input activations of layer
    /// `from`, keeping what `backward` needs.
    pub fn forward_train_from<R: Rng>(
        &self,
        x: ArrayView2<T>,
        from: usize,
        rng: &mut R,
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        let batch = x.nrows();
        let (out, saved) = self.run(x, from, self.num_layers(), Some(rng as &mut dyn rand::RngCore))?;
        Ok((out, ForwardCache { from, batch, saved }))
    }

    pub fn forward_train<R: Rng>(&self, x: ArrayView2<T>, rng: &mut R) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.forward_train_from(x, 0, rng)
    }

    /// Evaluation-mode pass over layers `from..to` (dropout is the identity).
    pub fn eval_range(&self, x: ArrayView2<T>, from: usize, to: usize) -> Result<Array2<T>> {
        Ok(self.run(x, from, to, None)?.0)
    }

    pub fn forward_eval(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.eval_range(x, 0, self.num_layers())
    }

    /// Backpropagates `dout` (gradient of the loss with respect to the
    /// network output) and returns gradients of every trainable layer.
    pub fn backward(&self, cache: &ForwardCache<T>, dout: ArrayView2<T>) -> Result<Gradients<T>> {
        let n = self.num_layers();
        let mut grads = Gradients {
            layers: vec![None; n],
        };
        if cache.saved.len() != n - cache.from {
            return Err(Error::MissingCache);
        }
        if dout.dim() != (cache.batch, self.num_classes()) {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} does not match ({}, {})",
                dout.dim(),
                cache.batch,
                self.num_classes()
            )));
        }
        let Some(first) = self.first_trainable() else {
            return Ok(grads);
        };
        let stop = first.max(cache.from);
        let mut d = dout.to_owned();
        for i in (stop..n).rev() {
            let need_dx = i > stop;
            let saved = &cache.saved[i - cache.from];
            d = match (&self.spec.layers[i], saved) {
                (LayerSpec::Conv2d { kernel: [kh, kw], .. }, s) => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let out_shape = self.shapes[i + 1];
                    let positions = out_shape.h * out_shape.w;
                    let dy = d
                        .into_shape_with_order((cache.batch * positions, out_shape.c))
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                    if self.trainable[i] {
                        let Saved::Cols(cols) = s else {
                            return Err(Error::MissingCache);
                        };
                        grads.layers[i] = Some(Params {
                            weight: dy.t().dot(cols),
                            bias: dy.sum_axis(Axis(0)),
                        });
                    }
                    if need_dx {
                        let dcols = dy.dot(&p.weight);
                        col2im(&dcols, self.shapes[i], *kh, *kw, cache.batch)
                    } else {
                        break;
                    }
                }
                (LayerSpec::Linear { .. }, s) => {
                    let p = self.params[i].as_ref().expect("linear has params");
                    if self.trainable[i] {
                        let Saved::Input(x) = s else {
                            return Err(Error::MissingCache);
                        };
                        grads.layers[i] = Some(Params {
                            weight: d.t().dot(x),
                            bias: d.sum_axis(Axis(0)),
                        });
                    }
                    if need_dx {
                        d.dot(&p.weight)
                    } else {
                        break;
                    }
                }
                (LayerSpec::Relu, Saved::Output(y)) => {
                    ndarray::Zip::from(&mut d)
                        .and(y)
                        .for_each(|g, &v| {
                            if v <= T::zero() {
                                *g = T::zero();
                            }
                        });
                    d
                }
                (LayerSpec::Relu, _) => return Err(Error::MissingCache),
                (LayerSpec::Dropout { .. }, Saved::Mask(m)) => d * m,
                (LayerSpec::Dropout { .. }, _) => d,
                (LayerSpec::Flatten, _) => d,
            };
        }
        Ok(grads)
    }

    /// Class probabilities in evaluation mode.
    pub fn softmax_probs(&self, x: ArrayView2<T>) -> Result<Array2<f64>> {
        let (_, logits) = self.features_and_logits(x)?;
        Ok(softmax_rows(logits.view()))
    }

    /// Activations entering the final linear layer.
    pub fn penultimate_features(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.features_and_logits(x)?.0)
    }

    /// Penultimate features and logits from one evaluation pass, processed in
    /// chunks to bound memory.
    pub fn features_and_logits(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        const CHUNK: usize = 256;
        self.check_input(&x, 0)?;
        let head = self.head_index();
        let mut feats = Array2::zeros((x.nrows(), self.shapes[head].len()));
        let mut logits = Array2::zeros((x.nrows(), self.num_classes()));
        for start in (0..x.nrows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.nrows());
            let f = self.eval_range(x.slice(ndarray::s![start..end, ..]), 0, head)?;
            let z = self.eval_range(f.view(), head, self.num_layers())?;
            feats.slice_mut(ndarray::s![start..end, ..]).assign(&f);
            logits.slice_mut(ndarray::s![start..end, ..]).assign(&z);
        }
        Ok((feats, logits))
    }
}

/// Lowers a batch of NHWC examples to one row per output position holding
/// the `kh x kw x c` receptive field.
fn im2col<T: Scalar>(x: &Array2<T>, s: Shape3, kh: usize, kw: usize) -> Array2<T> {
    let (oh, ow) = (s.h - kh + 1, s.w - kw + 1);
    let b = x.nrows();
    let k = kh * kw * s.c;
    let seg = kw * s.c;
    let n = s.len();
    let mut cols = Array2::<T>::zeros((b * oh * ow, k));
    let src = x.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("fresh array");
    for bi in 0..b {
        let xb = &src[bi * n..(bi + 1) * n];
        for y in 0..oh {
            for xo in 0..ow {
                let r = (bi * oh + y) * ow + xo;
                let row = &mut dst[r * k..(r + 1) * k];
                for i in 0..kh {
                    let st = (y + i) * s.w * s.c + xo * s.c;
                    row[i * seg..(i + 1) * seg].copy_from_slice(&xb[st..st + seg]);
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatters patch gradients back onto the input.
fn col2im<T: Scalar>(dcols: &Array2<T>, s: Shape3, kh: usize, kw: usize, b: usize) -> Array2<T> {
    let (oh, ow) = (s.h - kh + 1, s.w - kw + 1);
    let k = kh * kw * s.c;
    let seg = kw * s.c;
    let n = s.len();
    let mut dx = Array2::<T>::zeros((b, n));
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().expect("fresh array");
    for bi in 0..b {
        let xb = &mut dst[bi * n..(bi + 1) * n];
        for y in 0..oh {
            for xo in 0..ow {
                let r = (bi * oh + y) * ow + xo;
                let row = &src[r * k..(r + 1) * k];
                for i in 0..kh {
                    let st = (y + i) * s.w * s.c + xo * s.c;
                    for (t, &g) in xb[st..st + seg].iter_mut().zip(&row[i * seg..(i + 1) * seg]) {
                        *t = *t + g;
                    }
                }
            }
        }
    }
    dx
}

fn conv_from_cols<T: Scalar>(cols: &Array2<T>, p: &Params<T>, batch: usize) -> Array2<T> {
    let out = cols.dot(&p.weight.t()) + &p.bias;
    let per_example = out.len() / batch;
    out.into_shape_with_order((batch, per_example))
        .expect("row-major GEMM output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            input: Shape3::new(2, 9, 1),
            layers: vec![
                LayerSpec::Conv2d {
                    out_channels: 3,
                    kernel: [1, 3],
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    out_channels: 2,
                    kernel: [2, 3],
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 4 },
                LayerSpec::Linear { out_features: 3 },
            ],
        }
    }

    fn random_batch(b: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((b, n), || rng.gen_range(-1.0..1.0))
    }

    /// Direct loop convolution, independent of the im2col lowering.
    fn naive_conv(x: &[f64], s: Shape3, w: &Array2<f64>, bias: &Array1<f64>, kh: usize, kw: usize) -> Vec<f64> {
        let (oh, ow, oc) = (s.h - kh + 1, s.w - kw + 1, w.nrows());
        let mut out = vec![0.0; oh * ow * oc];
        for y in 0..oh {
            for xo in 0..ow {
                for o in 0..oc {
                    let mut acc = bias[o];
                    for i in 0..kh {
                        for j in 0..kw {
                            for c in 0..s.c {
                                acc += w[[o, (i * kw + j) * s.c + c]] * x[((y + i) * s.w + xo + j) * s.c + c];
                            }
                        }
                    }
                    out[(y * ow + xo) * oc + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let net = Network::<f64>::new(tiny_spec(), 3).unwrap();
        let x = random_batch(2, 18, 1);
        let a1 = net.eval_range(x.view(), 0, 1).unwrap();
        let p = net.params(0).unwrap();
        for b in 0..2 {
            let want = naive_conv(x.row(b).as_slice().unwrap(), net.shapes()[0], &p.weight, &p.bias, 1, 3);
            for (g, w) in a1.row(b).iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
        let r = net.eval_range(a1.view(), 1, 2).unwrap();
        let a3 = net.eval_range(r.view(), 2, 3).unwrap();
        let p = net.params(2).unwrap();
        let want = naive_conv(r.row(1).as_slice().unwrap(), net.shapes()[2], &p.weight, &p.bias, 2, 3);
        for (g, w) in a3.row(1).iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = Network::<f64>::new(tiny_spec(), 9).unwrap();
        for i in [0, 2, 6, 7] {
            let p = net.params(i).unwrap();
            let bound = 1.0 / (p.weight.ncols() as f64).sqrt();
            assert!(p.weight.iter().chain(p.bias.iter()).all(|v| v.abs() <= bound));
            assert!(p.weight.iter().any(|v| v.abs() > bound / 2.0));
        }
    }

    #[test]
    fn eval_is_deterministic_and_ignores_dropout() {
        let net = Network::<f64>::new(tiny_spec(), 2).unwrap();
        let x = random_batch(3, 18, 4);
        let a = net.forward_eval(x.view()).unwrap();
        let b = net.forward_eval(x.view()).unwrap();
        assert_eq!(a, b);
        let mut no_drop = tiny_spec();
        no_drop.layers[4] = LayerSpec::Dropout { rate: 0.0 };
        let mut twin = Network::<f64>::zeros(no_drop).unwrap();
        for i in [0, 2, 6, 7] {
            twin.set_params(i, net.params(i).unwrap().clone()).unwrap();
        }
        assert_eq!(twin.forward_eval(x.view()).unwrap(), a);
    }

    #[test]
    fn backward_without_training_cache_fails() {
        let net = Network::<f64>::new(tiny_spec(), 2).unwrap();
        let x = random_batch(2, 18, 4);
        let (out, saved) = net.run(x.view(), 0, net.num_layers(), None).unwrap();
        let cache = ForwardCache {
            from: 0,
            batch: 2,
            saved,
        };
        assert!(matches!(net.backward(&cache, out.view()), Err(Error::MissingCache)));
    }

    #[test]
    fn frozen_layers_get_no_gradient() {
        let mut net = Network::<f64>::new(tiny_spec(), 2).unwrap();
        net.freeze_all_but_head();
        assert_eq!(net.frozen_prefix_len(), 4);
        let x = random_batch(4, 18, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, cache) = net.forward_train(x.view(), &mut rng).unwrap();
        let g = net.backward(&cache, out.view()).unwrap();
        for (i, slot) in g.layers.iter().enumerate() {
            assert_eq!(slot.is_some(), i == 7, "layer {i}");
        }
        assert_eq!(net.trainable_param_count(), 4 * 3 + 3);
    }

    #[test]
    fn dropout_mask_statistics() {
        let x = Array2::<f32>::ones((200, 100));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, mask) = dropout(&x, 0.5, &mut rng);
        let kept = mask.iter().filter(|&&m| m > 0.0).count() as f64 / 20000.0;
        assert!((kept - 0.5).abs() < 0.02);
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!((y.mean().unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn trainable_mask_validation() {
        let mut net = Network::<f32>::new(tiny_spec(), 2).unwrap();
        assert!(net.set_trainable(&[false; 3]).is_err());
        let mut bad = vec![false; 8];
        bad[1] = true;
        assert!(net.set_trainable(&bad).is_err());
    }
}
