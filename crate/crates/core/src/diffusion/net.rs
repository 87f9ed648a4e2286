//! Convolutional noise-prediction network with hand-derived backprop.
//!
//! The network treats a channel vector as a 2-channel `n_rx x n_tx` image
//! (real and imaginary parts of the angular-domain matrix). Two 3x3
//! convolutions ramp the channel count up to `s_max` (ReLU on the first), a
//! per-channel affine built from the sinusoidal time embedding is inserted,
//! and three 3x3 convolutions ramp back down to 2 channels (ReLU on the
//! first two). All convolutions use "same" zero padding and per-channel
//! biases; the final layer is zero-initialized.
//!
//! Convolutions run as im2col + GEMM, and every parameter gradient is
//! derived by hand and checked against central finite differences in tests.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Scalar type usable for network parameters and activations. Production
/// training runs in `f32`; gradient checks instantiate `f64`.
pub trait Real: ndarray::NdFloat {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Architecture hyperparameters; the ramp lists per-layer channel counts
/// from input (2) through `s_max` and back to 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    pub s_init: usize,
    pub s_max: usize,
    pub ramp: Vec<usize>,
    pub n_rx: usize,
    pub n_tx: usize,
    pub t_max: usize,
}

impl NetworkArch {
    /// Standard ramp: 2 -> (2 + s_max)/2 -> s_max up, then three layers
    /// evenly back down to 2 (interior sizes truncated).
    pub fn new(s_init: usize, s_max: usize, n_rx: usize, n_tx: usize, t_max: usize) -> Self {
        let mid = (2 + s_max) / 2;
        let span = (s_max - 2) as f64;
        let down1 = (s_max as f64 - span / 3.0).floor() as usize;
        let down2 = (s_max as f64 - 2.0 * span / 3.0).floor() as usize;
        Self {
            s_init,
            s_max,
            ramp: vec![2, mid, s_max, down1, down2, 2],
            n_rx,
            n_tx,
            t_max,
        }
    }

    pub fn spatial(&self) -> usize {
        self.n_rx * self.n_tx
    }

    /// Real channel-vector length N = 2 n_rx n_tx.
    pub fn dim(&self) -> usize {
        2 * self.spatial()
    }

    /// Parameters in the convolutional stack (3x3 kernels plus biases).
    pub fn conv_param_count(&self) -> usize {
        self.ramp
            .windows(2)
            .map(|w| w[0] * w[1] * 9 + w[1])
            .sum()
    }

    /// Total trainable parameters including the time-feature dense layer.
    pub fn param_count(&self) -> usize {
        self.conv_param_count() + self.s_init * 2 * self.s_max + 2 * self.s_max
    }
}

/// Transformer sinusoidal positional embedding of a step index.
pub fn time_embedding(t: usize, s_init: usize) -> Result<Array1<f64>> {
    if s_init % 2 != 0 {
        return Err(Error::OddEmbeddingWidth(s_init));
    }
    let pairs = s_init / 2;
    let mut emb = Array1::<f64>::zeros(s_init);
    for i in 0..pairs {
        let freq = 10_000f64.powf(-(i as f64) / pairs as f64);
        emb[2 * i] = (t as f64 * freq).sin();
        emb[2 * i + 1] = (t as f64 * freq).cos();
    }
    Ok(emb)
}

/// 3x3 same-padding convolution stored as a GEMM-ready kernel matrix
/// `[out_c, in_c * 9]` in `[in_c][ky][kx]` column order.
#[derive(Debug, Clone)]
struct Conv2d<F> {
    weight: Array2<F>,
    bias: Array1<F>,
    in_c: usize,
    out_c: usize,
}

impl<F: Real> Conv2d<F> {
    fn init(in_c: usize, out_c: usize, zero: bool, rng: &mut impl Rng) -> Self {
        // uniform fan-in scaling with ReLU gain: keeps activation variance
        // and input-output Jacobians near unity through the stack
        let bound = (6.0 / (in_c * 9) as f64).sqrt();
        let mut draw = |_| {
            if zero {
                F::from_f64(0.0)
            } else {
                F::from_f64(rng.random_range(-bound..bound))
            }
        };
        let weight = Array2::from_shape_fn((out_c, in_c * 9), |ij| draw(ij.0));
        let bias = Array1::from_shape_fn(out_c, &mut draw);
        Self {
            weight,
            bias,
            in_c,
            out_c,
        }
    }

    /// GEMM forward over an im2col matrix; returns `[b, out_c, s]`.
    fn forward(&self, cols: &Array2<F>, b: usize, s: usize) -> Array3<F> {
        let out_mat = self.weight.dot(cols);
        let mut out = Array3::<F>::zeros((b, self.out_c, s));
        let src = out_mat.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("standard layout");
        for oc in 0..self.out_c {
            let bias = self.bias[oc];
            for bi in 0..b {
                let src_off = oc * b * s + bi * s;
                let dst_off = (bi * self.out_c + oc) * s;
                for i in 0..s {
                    dst[dst_off + i] = src[src_off + i] + bias;
                }
            }
        }
        out
    }

    /// Gradients of weight, bias, and (optionally) the im2col input.
    fn backward(
        &self,
        cols: &Array2<F>,
        d_out: &Array3<F>,
        need_d_cols: bool,
    ) -> (Array2<F>, Array1<F>, Option<Array2<F>>) {
        let (b, oc, s) = d_out.dim();
        debug_assert_eq!(oc, self.out_c);
        let mut d_out_mat = Array2::<F>::zeros((oc, b * s));
        {
            let src = d_out.as_slice().expect("standard layout");
            let dst = d_out_mat.as_slice_mut().expect("standard layout");
            for bi in 0..b {
                for c in 0..oc {
                    let src_off = (bi * oc + c) * s;
                    let dst_off = c * b * s + bi * s;
                    dst[dst_off..dst_off + s].copy_from_slice(&src[src_off..src_off + s]);
                }
            }
        }
        let d_weight = d_out_mat.dot(&cols.t());
        let d_bias = d_out_mat.sum_axis(Axis(1));
        let d_cols = need_d_cols.then(|| self.weight.t().dot(&d_out_mat));
        (d_weight, d_bias, d_cols)
    }
}

#[derive(Debug, Clone)]
struct Dense<F> {
    /// `[out, in]`
    weight: Array2<F>,
    bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();

        let weight =
            Array2::from_shape_fn((out_dim, in_dim), |_| F::from_f64(rng.random_range(-bound..bound)));
        let bias = Array1::from_shape_fn(out_dim, |_| F::from_f64(rng.random_range(-bound..bound)));
        Self { weight, bias }
    }

    /// `[b, in] -> [b, out]`
    fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut out = x.dot(&self.weight.t());
        out += &self.bias;
        out
    }
}

/// Extracts 3x3 neighborhoods with "same" zero padding into a
/// `[c * 9, b * s]` matrix; out-of-image taps stay zero.
fn im2col<F: Real>(input: &Array3<F>, h: usize, w: usize) -> Array2<F> {
    let (b, c, s) = input.dim();
    debug_assert_eq!(s, h * w);
    let mut cols = Array2::<F>::zeros((c * 9, b * s));
    let src_all = input.as_slice().expect("standard layout");
    let dst_all = cols.as_slice_mut().expect("standard layout");
    let bs = b * s;
    for ci in 0..c {
        for ky in 0..3 {
            let (y0, y1) = match ky {
                0 => (1, h),
                1 => (0, h),
                _ => (0, h.saturating_sub(1)),
            };
            for kx in 0..3 {
                let (x0, x1) = match kx {
                    0 => (1, w),
                    1 => (0, w),
                    _ => (0, w.saturating_sub(1)),
                };
                if x1 <= x0 || y1 <= y0 {
                    continue;
                }
                let len = x1 - x0;
                let row = ci * 9 + ky * 3 + kx;
                let ix = x0 + kx - 1;
                for bi in 0..b {
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let src_off = (bi * c + ci) * s + iy * w + ix;
                        let dst_off = row * bs + bi * s + y * w + x0;
                        dst_all[dst_off..dst_off + len]
                            .copy_from_slice(&src_all[src_off..src_off + len]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back to image form.
fn col2im_add<F: Real>(cols: &Array2<F>, b: usize, c: usize, h: usize, w: usize) -> Array3<F> {
    let s = h * w;
    let mut out = Array3::<F>::zeros((b, c, s));
    let src_all = cols.as_slice().expect("standard layout");
    let dst_all = out.as_slice_mut().expect("standard layout");
    let bs = b * s;
    for ci in 0..c {
        for ky in 0..3 {
            let (y0, y1) = match ky {
                0 => (1, h),
                1 => (0, h),
                _ => (0, h.saturating_sub(1)),
            };
            for kx in 0..3 {
                let (x0, x1) = match kx {
                    0 => (1, w),
                    1 => (0, w),
                    _ => (0, w.saturating_sub(1)),
                };
                if x1 <= x0 || y1 <= y0 {
                    continue;
                }
                let len = x1 - x0;
                let row = ci * 9 + ky * 3 + kx;
                let ix = x0 + kx - 1;
                for bi in 0..b {
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let dst_off = (bi * c + ci) * s + iy * w + ix;
                        let src_off = row * bs + bi * s + y * w + x0;
                        for i in 0..len {
                            dst_all[dst_off + i] = dst_all[dst_off + i] + src_all[src_off + i];
                        }
                    }
                }
            }
        }
    }
    out
}

fn relu_inplace<F: Real>(x: &mut Array3<F>) {
    let zero = F::from_f64(0.0);
    x.mapv_inplace(|v| if v > zero { v } else { zero });
}

/// ReLU subgradient: zero wherever the forward output was zero (including
/// exactly-zero inputs).
fn relu_backward_inplace<F: Real>(d: &mut Array3<F>, out: &Array3<F>) {
    let zero = F::from_f64(0.0);
    ndarray::Zip::from(d).and(out).for_each(|g, &o| {
        if o <= zero {
            *g = zero;
        }
    });
}

/// Noise-prediction network epsilon_theta(h_t, t).
#[derive(Debug, Clone)]
pub struct DenoiserNetwork<F> {
    pub arch: NetworkArch,
    convs: Vec<Conv2d<F>>,
    time_dense: Dense<F>,
}

/// Intermediate state kept by [`DenoiserNetwork::forward_cached`] for the
/// backward pass.
pub struct ForwardCache<F> {
    cols: Vec<Array2<F>>,
    relu_out: Vec<Option<Array3<F>>>,
    affine_input: Array3<F>,
    t_scale: Array2<F>,
    emb: Array2<F>,
    batch: usize,
}

impl<F: Real> DenoiserNetwork<F> {
    pub fn init(arch: NetworkArch, rng: &mut impl Rng) -> Self {
        assert_eq!(arch.ramp.len(), 6, "ramp must list six channel counts");
        assert_eq!(arch.ramp[0], 2);
        assert_eq!(*arch.ramp.last().unwrap(), 2);
        let n_layers = arch.ramp.len() - 1;
        let convs = (0..n_layers)
            .map(|l| {
                Conv2d::init(
                    arch.ramp[l],
                    arch.ramp[l + 1],
                    l == n_layers - 1,
                    rng,
                )
            })
            .collect();
        let time_dense = Dense::init(arch.s_init, 2 * arch.s_max, rng);
        Self {
            arch,
            convs,
            time_dense,
        }
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Predicted noise for a batch of images, `[b, 2, s]` in and out.
    pub fn forward(&self, h_t: &Array3<F>, ts: &[usize]) -> Result<Array3<F>> {
        Ok(self.forward_impl(h_t, ts, false)?.0)
    }

    /// Forward pass that retains the activations needed by [`Self::backward`].
    pub fn forward_cached(
        &self,
        h_t: &Array3<F>,
        ts: &[usize],
    ) -> Result<(Array3<F>, ForwardCache<F>)> {
        let (out, cache) = self.forward_impl(h_t, ts, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    fn forward_impl(
        &self,
        h_t: &Array3<F>,
        ts: &[usize],
        keep: bool,
    ) -> Result<(Array3<F>, Option<ForwardCache<F>>)> {
        let (b, c_in, s) = h_t.dim();
        if c_in != 2 || s != self.arch.spatial() || ts.len() != b {
            return Err(Error::ShapeMismatch {
                expected: format!("[b, 2, {}] with b step indices", self.arch.spatial()),
                got: format!("[{b}, {c_in}, {s}] with {} step indices", ts.len()),
            });
        }
        for &t in ts {
            if t == 0 || t > self.arch.t_max {
                return Err(Error::ShapeMismatch {
                    expected: format!("t in 1..={}", self.arch.t_max),
                    got: format!("t={t}"),
                });
            }
        }
        let h = self.arch.n_rx;
        let w = self.arch.n_tx;
        let s_max = self.arch.s_max;

        let mut cols_cache = Vec::new();
        let mut relu_cache: Vec<Option<Array3<F>>> = Vec::new();

        // up-ramp: conv + ReLU, conv
        let cols0 = im2col(h_t, h, w);
        let mut x = self.convs[0].forward(&cols0, b, s);
        relu_inplace(&mut x);
        if keep {
            cols_cache.push(cols0);
            relu_cache.push(Some(x.clone()));
        }
        let cols1 = im2col(&x, h, w);
        x = self.convs[1].forward(&cols1, b, s);
        if keep {
            cols_cache.push(cols1);
            relu_cache.push(None);
        }

        // per-channel affine from the time features: x <- x (1 + t_s) + t_b
        let mut emb = Array2::<F>::zeros((b, self.arch.s_init));
        for (bi, &t) in ts.iter().enumerate() {
            let e = time_embedding(t, self.arch.s_init)?;
            for (j, v) in e.iter().enumerate() {
                emb[[bi, j]] = F::from_f64(*v);
            }
        }
        let feat = self.time_dense.forward(&emb);
        let t_scale = feat.slice(ndarray::s![.., ..s_max]).to_owned();
        let t_bias = feat.slice(ndarray::s![.., s_max..]).to_owned();
        let affine_input = if keep { x.clone() } else { Array3::zeros((0, 0, 0)) };
        let one = F::from_f64(1.0);
        for bi in 0..b {
            for c in 0..s_max {
                let scale = one + t_scale[[bi, c]];
                let bias = t_bias[[bi, c]];
                let mut lane = x.slice_mut(ndarray::s![bi, c, ..]);
                lane.mapv_inplace(|v| v * scale + bias);
            }
        }

        // down-ramp: conv + ReLU, conv + ReLU, conv
        let cols2 = im2col(&x, h, w);
        x = self.convs[2].forward(&cols2, b, s);
        relu_inplace(&mut x);
        if keep {
            cols_cache.push(cols2);
            relu_cache.push(Some(x.clone()));
        }
        let cols3 = im2col(&x, h, w);
        x = self.convs[3].forward(&cols3, b, s);
        relu_inplace(&mut x);
        if keep {
            cols_cache.push(cols3);
            relu_cache.push(Some(x.clone()));
        }
        let cols4 = im2col(&x, h, w);
        x = self.convs[4].forward(&cols4, b, s);
        if keep {
            cols_cache.push(cols4);
            relu_cache.push(None);
        }

        let cache = keep.then(|| ForwardCache {
            cols: cols_cache,
            relu_out: relu_cache,
            affine_input,
            t_scale,
            emb,
            batch: b,
        });
        Ok((x, cache))
    }

    /// Parameter gradients for an output cotangent, in the canonical flat
    /// order (see [`Self::params_flat`]).
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: &Array3<F>) -> Array1<F> {
        let h = self.arch.n_rx;
        let w = self.arch.n_tx;
        let b = cache.batch;
        let s_max = self.arch.s_max;
        let one = F::from_f64(1.0);

        let mut conv_grads: Vec<(Array2<F>, Array1<F>)> = (0..5)
            .map(|l| {
                (
                    Array2::zeros(self.convs[l].weight.dim()),
                    Array1::zeros(self.convs[l].bias.len()),
                )
            })
            .collect();

        // down-ramp in reverse
        let mut d = d_out.clone();
        for layer in [4usize, 3, 2] {
            let (dw, db, d_cols) = self.convs[layer].backward(&cache.cols[layer], &d, true);
            conv_grads[layer] = (dw, db);
            d = col2im_add(&d_cols.unwrap(), b, self.convs[layer].in_c, h, w);
            if layer > 2 {
                relu_backward_inplace(&mut d, cache.relu_out[layer - 1].as_ref().unwrap());
            }
        }

        // affine: d_ts = sum_s d * x_pre, d_tb = sum_s d, dx = d (1 + t_s)
        let mut d_feat = Array2::<F>::zeros((b, 2 * s_max));
        for bi in 0..b {
            for c in 0..s_max {
                let mut acc_s = F::from_f64(0.0);
                let mut acc_b = F::from_f64(0.0);
                let pre = cache.affine_input.slice(ndarray::s![bi, c, ..]);
                let mut lane = d.slice_mut(ndarray::s![bi, c, ..]);
                for (g, &x_pre) in lane.iter_mut().zip(pre.iter()) {
                    acc_s = acc_s + *g * x_pre;
                    acc_b = acc_b + *g;
                    *g = *g * (one + cache.t_scale[[bi, c]]);
                }
                d_feat[[bi, c]] = acc_s;
                d_feat[[bi, s_max + c]] = acc_b;
            }
        }
        let d_dense_w = d_feat.t().dot(&cache.emb);
        let d_dense_b = d_feat.sum_axis(Axis(0));

        // up-ramp in reverse
        let (dw1, db1, d_cols1) = self.convs[1].backward(&cache.cols[1], &d, true);
        conv_grads[1] = (dw1, db1);
        d = col2im_add(&d_cols1.unwrap(), b, self.convs[1].in_c, h, w);
        relu_backward_inplace(&mut d, cache.relu_out[0].as_ref().unwrap());
        let (dw0, db0, _) = self.convs[0].backward(&cache.cols[0], &d, false);
        conv_grads[0] = (dw0, db0);

        self.flatten_tensors(&conv_grads, &d_dense_w, &d_dense_b)
    }

    /// Canonical flat parameter order: conv0.w, conv0.b, conv1.w, conv1.b,
    /// time_dense.w, time_dense.b, conv2.w, conv2.b, conv3.w, conv3.b,
    /// conv4.w, conv4.b.
    pub fn params_flat(&self) -> Array1<F> {
        let conv_refs: Vec<(Array2<F>, Array1<F>)> = self
            .convs
            .iter()
            .map(|c| (c.weight.clone(), c.bias.clone()))
            .collect();
        self.flatten_tensors(&conv_refs, &self.time_dense.weight, &self.time_dense.bias)
    }

    fn flatten_tensors(
        &self,
        convs: &[(Array2<F>, Array1<F>)],
        dense_w: &Array2<F>,
        dense_b: &Array1<F>,
    ) -> Array1<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for (l, (w, b)) in convs.iter().enumerate() {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
            if l == 1 {
                out.extend(dense_w.iter().copied());
                out.extend(dense_b.iter().copied());
            }
        }
        Array1::from_vec(out)
    }

    pub fn set_params_flat(&mut self, flat: &Array1<F>) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut pos = 0;
        let mut take = |dst: &mut [F], src: &Array1<F>| {
            dst.copy_from_slice(&src.as_slice().unwrap()[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for l in 0..self.convs.len() {
            take(self.convs[l].weight.as_slice_mut().unwrap(), flat);
            take(self.convs[l].bias.as_slice_mut().unwrap(), flat);
            if l == 1 {
                take(self.time_dense.weight.as_slice_mut().unwrap(), flat);
                take(self.time_dense.bias.as_slice_mut().unwrap(), flat);
            }
        }
        assert_eq!(pos, flat.len());
    }

    /// Single-vector convenience used by the posterior estimator and the
    /// reverse sampler: f64 channel vector in, predicted noise out.
    pub fn predict_vec(&self, h_t: &Array1<f64>, t: usize) -> Result<Array1<f64>> {
        let image = vec_to_image(h_t, self.arch.n_rx, self.arch.n_tx);
        let out = self.forward(&image, &[t])?;
        Ok(image_to_vec(&out, self.arch.n_rx, self.arch.n_tx))
    }
}

/// `[Re; Im]` channel vector (column-major complex order) to a
/// `[1, 2, n_rx * n_tx]` image batch in row-major spatial order.
pub fn vec_to_image<F: Real>(h: &Array1<f64>, n_rx: usize, n_tx: usize) -> Array3<F> {
    let half = n_rx * n_tx;
    debug_assert_eq!(h.len(), 2 * half);
    let mut image = Array3::<F>::zeros((1, 2, half));
    for c in 0..2 {
        for i in 0..n_rx {
            for j in 0..n_tx {
                image[[0, c, i * n_tx + j]] = F::from_f64(h[c * half + j * n_rx + i]);
            }
        }
    }
    image
}

/// Inverse of [`vec_to_image`] for a single-image batch.
pub fn image_to_vec<F: Real>(image: &Array3<F>, n_rx: usize, n_tx: usize) -> Array1<f64> {
    let half = n_rx * n_tx;
    debug_assert_eq!(image.dim(), (1, 2, half));
    let mut h = Array1::<f64>::zeros(2 * half);
    for c in 0..2 {
        for i in 0..n_rx {
            for j in 0..n_tx {
                h[c * half + j * n_rx + i] = image[[0, c, i * n_tx + j]].as_f64();
            }
        }
    }
    h
}

/// Image view of one dataset row (f32 storage) for batch assembly.
pub fn row_to_image_into<F: Real>(
    row: ndarray::ArrayView1<'_, f32>,
    n_rx: usize,
    n_tx: usize,
    mut dst: ndarray::ArrayViewMut2<'_, F>,
) {
    let half = n_rx * n_tx;
    debug_assert_eq!(row.len(), 2 * half);
    debug_assert_eq!(dst.dim(), (2, half));
    for c in 0..2 {
        for i in 0..n_rx {
            for j in 0..n_tx {
                dst[[c, i * n_tx + j]] = F::from_f64(row[c * half + j * n_rx + i] as f64);
            }
        }
    }
}
