use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};

use super::scalar::{matmul, Scalar};
use super::{CnnGruSpec, ConvSpec, MapShape};
use crate::error::{Error, Result};
use crate::sim::scenario::mix_seed;

static STAMPS: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<(usize, usize)>,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
    features: usize,
}

impl Layout {
    fn new(spec: &CnnGruSpec, shapes: &[MapShape]) -> Result<Self> {
        let mut off = 0;
        let mut conv = Vec::new();
        for (i, c) in spec.conv.iter().enumerate() {
            let w = off;
            off += c.out_channels * shapes[i].channels * c.kernel * c.kernel;
            conv.push((w, off));
            off += c.out_channels;
        }
        let h = spec.gru_hidden;
        let features = spec.feature_len()?;
        let w_ih = off;
        off += 3 * h * features;
        let w_hh = off;
        off += 3 * h * h;
        let b_ih = off;
        off += 3 * h;
        let b_hh = off;
        off += 3 * h;
        let w_out = off;
        off += spec.num_classes * h;
        let b_out = off;
        off += spec.num_classes;
        Ok(Self {
            conv,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            w_out,
            b_out,
            total: off,
            features,
        })
    }
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Clone)]
struct SampleCache<T> {
    cols: Vec<Vec<T>>,
    acts: Vec<Vec<T>>,
    xseq: Vec<T>,
    h: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    ghn: Vec<T>,
    mask: Vec<T>,
    hd: Vec<T>,
    logits: Vec<T>,
}

/// Activations of a forward pass, valid only for the parameters that
/// produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    stamp: u64,
    train_mode: bool,
    samples: Vec<SampleCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-frame convolutions, average pooling, a GRU over frames, dropout on the
/// final hidden state and an affine classifier.
#[derive(Debug, Clone)]
pub struct CnnGru<T: Scalar> {
    spec: CnnGruSpec,
    shapes: Vec<MapShape>,
    layout: Layout,
    params: Vec<T>,
    stamp: u64,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax via the max-shifted exponentials.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−log softmax(logits)[label]` in log-sum-exp form.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = logits.iter().map(|&l| (l - max).exp()).sum();
    max + s.ln() - logits[label]
}

/// Output columns `ox` whose input column `ox·stride + kx − pad` lies in `0..width`.
fn valid_span(out: usize, width: usize, stride: usize, k: usize, pad: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if width + pad > k {
        ((width + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    lo.min(hi)..hi
}

fn im2col<T: Scalar>(a: &[T], s: MapShape, frames: usize, c: &ConvSpec, o: MapShape) -> Vec<T> {
    let (k, st, p) = (c.kernel, c.stride, c.padding());
    let plane_in = s.height * s.width;
    let plane_out = o.height * o.width;
    let ncols = frames * plane_out;
    let mut cols = vec![T::zero(); s.channels * k * k * ncols];
    for ch in 0..s.channels {
        for ky in 0..k {
            let ys = valid_span(o.height, s.height, st, ky, p);
            for kx in 0..k {
                let xs = valid_span(o.width, s.width, st, kx, p);
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for f in 0..frames {
                    let src = &a[(ch * frames + f) * plane_in..(ch * frames + f + 1) * plane_in];
                    for oy in ys.clone() {
                        let iy = oy * st + ky - p;
                        let srow = &src[iy * s.width..(iy + 1) * s.width];
                        let drow = &mut dst[f * plane_out + oy * o.width..][..o.width];
                        let x0 = xs.start * st + kx - p;
                        if st == 1 {
                            drow[xs.clone()].copy_from_slice(&srow[x0..x0 + xs.len()]);
                        } else {
                            for (d, v) in drow[xs.clone()].iter_mut().zip(srow[x0..].iter().step_by(st)) {
                                *d = *v;
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], s: MapShape, frames: usize, c: &ConvSpec, o: MapShape) -> Vec<T> {
    let (k, st, p) = (c.kernel, c.stride, c.padding());
    let plane_in = s.height * s.width;
    let plane_out = o.height * o.width;
    let ncols = frames * plane_out;
    let mut a = vec![T::zero(); s.channels * frames * plane_in];
    for ch in 0..s.channels {
        for ky in 0..k {
            let ys = valid_span(o.height, s.height, st, ky, p);
            for kx in 0..k {
                let xs = valid_span(o.width, s.width, st, kx, p);
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for f in 0..frames {
                    let dst = &mut a[(ch * frames + f) * plane_in..(ch * frames + f + 1) * plane_in];
                    for oy in ys.clone() {
                        let iy = oy * st + ky - p;
                        let drow = &mut dst[iy * s.width..(iy + 1) * s.width];
                        let srow = &src[f * plane_out + oy * o.width..][..o.width];
                        let x0 = xs.start * st + kx - p;
                        for (d, v) in drow[x0..].iter_mut().step_by(st).zip(&srow[xs.clone()]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
    a
}

impl<T: Scalar> CnnGru<T> {
    /// Model with all parameters zero.
    pub fn zeros(spec: &CnnGruSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes()?;
        let layout = Layout::new(spec, &shapes)?;
        Ok(Self {
            spec: spec.clone(),
            shapes,
            params: vec![T::zero(); layout.total],
            layout,
            stamp: fresh_stamp(),
        })
    }

    /// Seeded initialization: U(±1/√fan_in) for convolutions and the
    /// classifier, U(±1/√H) for every GRU tensor.
    pub fn new(spec: &CnnGruSpec, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |p: &mut [T], bound: f64| {
            for v in p {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        };
        let l = m.layout.clone();
        for (i, c) in spec.conv.iter().enumerate() {
            let fan_in = (m.shapes[i].channels * c.kernel * c.kernel) as f64;
            let (w, b) = l.conv[i];
            fill(&mut m.params[w..b + c.out_channels], 1.0 / fan_in.sqrt());
        }
        let gb = 1.0 / (spec.gru_hidden as f64).sqrt();
        fill(&mut m.params[l.w_ih..l.w_out], gb);
        fill(&mut m.params[l.w_out..l.total], gb);
        Ok(m)
    }

    pub fn from_params(spec: &CnnGruSpec, params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        if params.len() != m.layout.total {
            return Err(Error::Shape(format!(
                "{} parameters given, spec needs {}",
                params.len(),
                m.layout.total
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn spec(&self) -> &CnnGruSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    /// Named parameter tensors as (name, start, end).
    pub fn tensors(&self) -> Vec<(String, usize, usize)> {
        let l = &self.layout;
        let mut out = Vec::new();
        for (i, (c, &(w, b))) in self.spec.conv.iter().zip(&l.conv).enumerate() {
            out.push((format!("conv{}.weight", i + 1), w, b));
            out.push((format!("conv{}.bias", i + 1), b, b + c.out_channels));
        }
        out.push(("gru.w_ih".into(), l.w_ih, l.w_hh));
        out.push(("gru.w_hh".into(), l.w_hh, l.b_ih));
        out.push(("gru.b_ih".into(), l.b_ih, l.b_hh));
        out.push(("gru.b_hh".into(), l.b_hh, l.w_out));
        out.push(("fc.weight".into(), l.w_out, l.b_out));
        out.push(("fc.bias".into(), l.b_out, l.total));
        out
    }

    fn check_inputs(&self, batch: &[&[T]]) -> Result<()> {
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        let want = self.spec.input_len();
        for (i, x) in batch.iter().enumerate() {
            if x.len() != want {
                return Err(Error::Shape(format!(
                    "sample {i} has {} values, expected {want}",
                    x.len()
                )));
            }
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], n: usize) -> Result<()> {
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} samples", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.num_classes) {
            return Err(Error::Invalid(format!("label {bad} out of range")));
        }
        Ok(())
    }

    fn dropout_mask(&self, seed: Option<u64>) -> Vec<T> {
        let h = self.spec.gru_hidden;
        let p = self.spec.dropout;
        match seed {
            Some(seed) if p > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = T::from_f64(1.0 / (1.0 - p));
                (0..h)
                    .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                    .collect()
            }
            _ => vec![T::one(); h],
        }
    }

    fn forward_sample(&self, x: &[T], dropout: Option<u64>) -> SampleCache<T> {
        let spec = &self.spec;
        let p = &self.params;
        let l = &self.layout;
        let frames = spec.input_frames;

        let mut cols_all = Vec::with_capacity(spec.conv.len());
        let mut acts = Vec::with_capacity(spec.conv.len());
        let mut act: Vec<T> = x.to_vec();
        for (i, c) in spec.conv.iter().enumerate() {
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let cols = im2col(&act, s, frames, c, o);
            let kdim = s.channels * c.kernel * c.kernel;
            let ncols = frames * o.height * o.width;
            let (w, b) = l.conv[i];
            let mut z = vec![T::zero(); c.out_channels * ncols];
            matmul(
                &p[w..b],
                false,
                &cols,
                false,
                c.out_channels,
                kdim,
                ncols,
                T::zero(),
                &mut z,
            );
            for (row, &bias) in z.chunks_exact_mut(ncols).zip(&p[b..b + c.out_channels]) {
                for v in row {
                    *v = (*v + bias).max(T::zero());
                }
            }
            cols_all.push(cols);
            acts.push(z.clone());
            act = z;
        }

        // average pooling straight into the frame-major feature sequence
        let last = *self.shapes.last().unwrap();
        let q = spec.pool;
        let (ph, pw) = (last.height / q, last.width / q);
        let d = l.features;
        let inv = T::from_f64(1.0 / (q * q) as f64);
        let mut xseq = vec![T::zero(); frames * d];
        for c in 0..last.channels {
            for f in 0..frames {
                let plane = &act[(c * frames + f) * last.height * last.width..][..last.height * last.width];
                for (y, src) in plane.chunks_exact(last.width).enumerate().take(ph * q) {
                    let dst = &mut xseq[f * d + c * ph * pw + (y / q) * pw..][..pw];
                    for (o, cell) in dst.iter_mut().zip(src.chunks_exact(q)) {
                        *o += cell.iter().copied().sum::<T>() * inv;
                    }
                }
            }
        }

        let h = spec.gru_hidden;
        let mut gi = vec![T::zero(); frames * 3 * h];
        matmul(
            &xseq,
            false,
            &p[l.w_ih..l.w_hh],
            true,
            frames,
            d,
            3 * h,
            T::zero(),
            &mut gi,
        );
        let w_hh = &p[l.w_hh..l.b_ih];
        let b_ih = &p[l.b_ih..l.b_hh];
        let b_hh = &p[l.b_hh..l.w_out];
        let mut hs = vec![T::zero(); (frames + 1) * h];
        let mut r = vec![T::zero(); frames * h];
        let mut z = vec![T::zero(); frames * h];
        let mut n = vec![T::zero(); frames * h];
        let mut ghn = vec![T::zero(); frames * h];
        let mut gh = vec![T::zero(); 3 * h];
        for t in 0..frames {
            let (prev, next) = hs.split_at_mut((t + 1) * h);
            let prev = &prev[t * h..];
            for (j, g) in gh.iter_mut().enumerate() {
                let row = &w_hh[j * h..(j + 1) * h];
                *g = b_hh[j] + row.iter().zip(prev).map(|(a, b)| *a * *b).sum::<T>();
            }
            let git = &gi[t * 3 * h..(t + 1) * 3 * h];
            for j in 0..h {
                let rj = sigmoid(git[j] + b_ih[j] + gh[j]);
                let zj = sigmoid(git[h + j] + b_ih[h + j] + gh[h + j]);
                let nj = (git[2 * h + j] + b_ih[2 * h + j] + rj * gh[2 * h + j]).tanh();
                r[t * h + j] = rj;
                z[t * h + j] = zj;
                n[t * h + j] = nj;
                ghn[t * h + j] = gh[2 * h + j];
                next[j] = (T::one() - zj) * nj + zj * prev[j];
            }
        }

        let mask = self.dropout_mask(dropout);
        let hd: Vec<T> = hs[frames * h..].iter().zip(&mask).map(|(a, m)| *a * *m).collect();
        let w_out = &p[l.w_out..l.b_out];
        let logits = (0..spec.num_classes)
            .map(|c| {
                p[l.b_out + c]
                    + w_out[c * h..(c + 1) * h]
                        .iter()
                        .zip(&hd)
                        .map(|(a, b)| *a * *b)
                        .sum::<T>()
            })
            .collect();
        SampleCache {
            cols: cols_all,
            acts,
            xseq,
            h: hs,
            r,
            z,
            n,
            ghn,
            mask,
            hd,
            logits,
        }
    }

    /// Gradient of `scale · CE(sample)` with respect to every parameter.
    fn backward_sample(&self, c: &SampleCache<T>, label: usize, scale: T) -> Vec<T> {
        let spec = &self.spec;
        let p = &self.params;
        let l = &self.layout;
        let frames = spec.input_frames;
        let h = spec.gru_hidden;
        let d = l.features;
        let mut g = vec![T::zero(); l.total];

        let mut dlogits = softmax(&c.logits);
        dlogits[label] = dlogits[label] - T::one();
        dlogits.iter_mut().for_each(|v| *v = *v * scale);

        let mut dh = vec![T::zero(); h];
        for (k, &dl) in dlogits.iter().enumerate() {
            g[l.b_out + k] = dl;
            for j in 0..h {
                g[l.w_out + k * h + j] = dl * c.hd[j];
                dh[j] += dl * p[l.w_out + k * h + j];
            }
        }
        for (v, m) in dh.iter_mut().zip(&c.mask) {
            *v = *v * *m;
        }

        let w_hh = &p[l.w_hh..l.b_ih];
        let mut dgi = vec![T::zero(); frames * 3 * h];
        let mut dgh = vec![T::zero(); 3 * h];
        for t in (0..frames).rev() {
            let prev = &c.h[t * h..(t + 1) * h];
            for j in 0..h {
                let (rj, zj, nj) = (c.r[t * h + j], c.z[t * h + j], c.n[t * h + j]);
                let dn = dh[j] * (T::one() - zj);
                let dz = dh[j] * (prev[j] - nj);
                let dan = dn * (T::one() - nj * nj);
                let dr = dan * c.ghn[t * h + j];
                let daz = dz * zj * (T::one() - zj);
                let dar = dr * rj * (T::one() - rj);
                let row = &mut dgi[t * 3 * h..(t + 1) * 3 * h];
                row[j] = dar;
                row[h + j] = daz;
                row[2 * h + j] = dan;
                dgh[j] = dar;
                dgh[h + j] = daz;
                dgh[2 * h + j] = dan * rj;
            }
            let mut dprev: Vec<T> = dh
                .iter()
                .zip(&c.z[t * h..(t + 1) * h])
                .map(|(a, z)| *a * *z)
                .collect();
            for (i, &gv) in dgh.iter().enumerate() {
                g[l.b_hh + i] += gv;
                let grow = &mut g[l.w_hh + i * h..l.w_hh + (i + 1) * h];
                for (gw, hp) in grow.iter_mut().zip(prev) {
                    *gw += gv * *hp;
                }
                for (dp, w) in dprev.iter_mut().zip(&w_hh[i * h..(i + 1) * h]) {
                    *dp += gv * *w;
                }
            }
            dh = dprev;
        }
        for t in 0..frames {
            for i in 0..3 * h {
                g[l.b_ih + i] += dgi[t * 3 * h + i];
            }
        }
        matmul(
            &dgi,
            true,
            &c.xseq,
            false,
            3 * h,
            frames,
            d,
            T::zero(),
            &mut g[l.w_ih..l.w_hh],
        );
        if spec.conv.is_empty() {
            return g;
        }
        let mut dxseq = vec![T::zero(); frames * d];
        matmul(
            &dgi,
            false,
            &p[l.w_ih..l.w_hh],
            false,
            frames,
            3 * h,
            d,
            T::zero(),
            &mut dxseq,
        );

        let last = *self.shapes.last().unwrap();
        let q = spec.pool;
        let (ph, pw) = (last.height / q, last.width / q);
        let inv = T::from_f64(1.0 / (q * q) as f64);
        let plane = last.height * last.width;
        let mut dact = vec![T::zero(); last.channels * frames * plane];
        for ch in 0..last.channels {
            for f in 0..frames {
                let dst = &mut dact[(ch * frames + f) * plane..][..plane];
                for (y, row) in dst.chunks_exact_mut(last.width).enumerate().take(ph * q) {
                    let src = &dxseq[f * d + ch * ph * pw + (y / q) * pw..][..pw];
                    for (cell, g) in row.chunks_exact_mut(q).zip(src) {
                        cell.fill(*g * inv);
                    }
                }
            }
        }

        for (i, conv) in spec.conv.iter().enumerate().rev() {
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let kdim = s.channels * conv.kernel * conv.kernel;
            let ncols = frames * o.height * o.width;
            for (dv, a) in dact.iter_mut().zip(&c.acts[i]) {
                if *a <= T::zero() {
                    *dv = T::zero();
                }
            }
            let (w, b) = l.conv[i];
            matmul(
                &dact,
                false,
                &c.cols[i],
                true,
                conv.out_channels,
                ncols,
                kdim,
                T::zero(),
                &mut g[w..b],
            );
            for (k, row) in dact.chunks_exact(ncols).enumerate() {
                g[b + k] = row.iter().copied().sum();
            }
            if i > 0 {
                let mut dcols = vec![T::zero(); kdim * ncols];
                matmul(
                    &p[w..b],
                    true,
                    &dact,
                    false,
                    kdim,
                    conv.out_channels,
                    ncols,
                    T::zero(),
                    &mut dcols,
                );
                dact = col2im(&dcols, s, frames, conv, o);
            }
        }
        g
    }

    /// Smallest |pre-activation| over every ReLU for input `x`; the loss is
    /// smooth in a parameter perturbation that moves no pre-activation by
    /// more than this.
    pub fn relu_margin(&self, x: &[T]) -> Result<T> {
        self.check_inputs(&[x])?;
        let frames = self.spec.input_frames;
        let mut act = x.to_vec();
        let mut margin = T::infinity();
        for (i, c) in self.spec.conv.iter().enumerate() {
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let cols = im2col(&act, s, frames, c, o);
            let ncols = frames * o.height * o.width;
            let (w, b) = self.layout.conv[i];
            let mut z = vec![T::zero(); c.out_channels * ncols];
            let kdim = s.channels * c.kernel * c.kernel;
            matmul(
                &self.params[w..b],
                false,
                &cols,
                false,
                c.out_channels,
                kdim,
                ncols,
                T::zero(),
                &mut z,
            );
            for (row, &bias) in z.chunks_exact_mut(ncols).zip(&self.params[b..b + c.out_channels]) {
                for v in row {
                    *v += bias;
                    margin = margin.min(v.abs());
                    *v = v.max(T::zero());
                }
            }
            act = z;
        }
        Ok(margin)
    }

    fn sample_seed(seed: u64, i: usize) -> u64 {
        mix_seed(&[seed, i as u64])
    }

    /// Logits (B × classes, row-major) and the activations needed by
    /// [`backward`](Self::backward). Dropout is active only in train mode,
    /// with sample `i` drawing its mask from `(dropout_seed, i)`.
    pub fn forward(
        &self,
        batch: &[&[T]],
        train_mode: bool,
        dropout_seed: u64,
    ) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_inputs(batch)?;
        let samples: Vec<SampleCache<T>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.forward_sample(x, train_mode.then(|| Self::sample_seed(dropout_seed, i))))
            .collect();
        let logits = samples.iter().flat_map(|s| s.logits.iter().copied()).collect();
        Ok((
            logits,
            ForwardCache {
                stamp: self.stamp,
                train_mode,
                samples,
            },
        ))
    }

    /// Gradient of the batch-mean cross-entropy from a train-mode cache.
    /// Per-sample gradients are summed in sample order.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Vec<T>> {
        if cache.stamp != self.stamp {
            return Err(Error::StaleCache(
                "parameters changed since the forward pass".into(),
            ));
        }
        if !cache.train_mode {
            return Err(Error::StaleCache("cache was produced in eval mode".into()));
        }
        self.check_labels(labels, cache.samples.len())?;
        if labels.is_empty() {
            return Ok(vec![T::zero(); self.layout.total]);
        }
        let scale = T::from_f64(1.0 / labels.len() as f64);
        let grads: Vec<Vec<T>> = cache
            .samples
            .par_iter()
            .zip(labels)
            .map(|(c, &y)| self.backward_sample(c, y, scale))
            .collect();
        Ok(reduce_in_order(grads, self.layout.total))
    }

    /// Mean cross-entropy and its gradient in one pass, without keeping the
    /// whole batch's activations. Equal to `forward` then `backward`.
    pub fn loss_and_grad(&self, batch: &[&[T]], labels: &[usize], dropout_seed: u64) -> Result<(T, Vec<T>)> {
        self.check_inputs(batch)?;
        self.check_labels(labels, batch.len())?;
        if batch.is_empty() {
            return Err(Error::EmptySplit("batch"));
        }
        let scale = T::from_f64(1.0 / labels.len() as f64);
        let parts: Vec<(T, Vec<T>)> = batch
            .par_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (x, &y))| {
                let c = self.forward_sample(x, Some(Self::sample_seed(dropout_seed, i)));
                (cross_entropy(&c.logits, y), self.backward_sample(&c, y, scale))
            })
            .collect();
        let loss = parts.iter().fold(T::zero(), |a, (l, _)| a + *l) * scale;
        let grads = parts.into_iter().map(|(_, g)| g).collect();
        Ok((loss, reduce_in_order(grads, self.layout.total)))
    }

    /// Eval-mode logits, B × classes.
    pub fn logits(&self, batch: &[&[T]]) -> Result<Vec<T>> {
        self.check_inputs(batch)?;
        Ok(batch
            .par_iter()
            .flat_map_iter(|x| self.forward_sample(x, None).logits)
            .collect())
    }

    /// Eval-mode arg-max class per sample (ties to the lowest class).
    pub fn predict(&self, batch: &[&[T]]) -> Result<Vec<usize>> {
        let k = self.spec.num_classes;
        let logits = self.logits(batch)?;
        Ok(logits
            .chunks_exact(k)
            .map(|row| (0..k).fold(0, |b, i| if row[i] > row[b] { i } else { b }))
            .collect())
    }

    /// Applies `params ← params − step` style updates through a closure and
    /// invalidates caches.
    pub fn update(&mut self, f: impl FnOnce(&mut [T])) {
        f(self.params_mut());
    }
}

fn reduce_in_order<T: Scalar>(grads: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut it = grads.into_iter();
    let mut acc = it.next().unwrap_or_else(|| vec![T::zero(); len]);
    for g in it {
        for (a, b) in acc.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    acc
}
