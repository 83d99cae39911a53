//! Dense row-major tensors and the explicitly differentiated layer
//! primitives used by the segmentation network.
//!
//! Images and feature maps are `H×W×C` with channels innermost; convolution
//! kernels are `k×k×Cin×Cout` with output channels innermost, so the hot loops
//! in [`conv2d_forward`] and [`conv2d_backward`] walk contiguous memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(H, W, C)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::shape(
                "dims3",
                format!("expected rank-3 H×W×C, got {:?}", self.shape),
            )),
        }
    }

    /// `(k, k, Cin, Cout)` of a square convolution kernel bank.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(Error::shape(
                "dims4",
                format!("expected rank-4 kernel bank, got {:?}", self.shape),
            )),
        }
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Spatial padding rule for [`conv2d_forward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding of `k/2` on each side; output keeps the input size.
    Same,
    /// No padding; output shrinks by `k-1`.
    Valid,
}

impl Padding {
    fn offset(self, k: usize) -> usize {
        match self {
            Padding::Same => k / 2,
            Padding::Valid => 0,
        }
    }

    fn output_size(self, n: usize, k: usize) -> Option<usize> {
        match self {
            Padding::Same => Some(n),
            Padding::Valid => n.checked_sub(k - 1).filter(|&m| m > 0),
        }
    }
}

/// Gradients of one layer: parameter gradients in declaration order
/// (kernel bank, then bias) and the gradient with respect to the input.
#[derive(Clone, Debug)]
pub struct LayerGradients {
    pub parameter_grads: Vec<Tensor>,
    pub input_grad: Tensor,
}

fn check_conv(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<(usize, usize, usize, usize, usize)> {
    let (h, w, cin) = input.dims3()?;
    let (kh, kw, kcin, cout) = kernels.dims4()?;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("kernel must be square with odd side, got {kh}×{kw}"),
        ));
    }
    if kcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {cin} channels but kernels expect {kcin}"),
        ));
    }
    if bias.len() != cout {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {cout} output channels", bias.len()),
        ));
    }
    Ok((h, w, cin, kh, cout))
}

pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &[f64], padding: Padding) -> Result<Tensor> {
    let (h, w, cin, k, cout) = check_conv(input, kernels, bias)?;
    let (oh, ow) = match (padding.output_size(h, k), padding.output_size(w, k)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("{h}×{w} input too small for valid {k}×{k} kernel"),
            ))
        }
    };
    let off = padding.offset(k) as isize;
    let x = input.data();
    let kern = kernels.data();
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            acc.copy_from_slice(bias);
            for ky in 0..k {
                let iy = oy as isize + ky as isize - off;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = ox as isize + kx as isize - off;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let px = &x[(iy as usize * w + ix as usize) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (ci, &v) in px.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &kern[kbase + ci * cout..][..cout];
                        for (a, &wt) in acc.iter_mut().zip(row) {
                            *a += v * wt;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    padding: Padding,
) -> Result<LayerGradients> {
    let (h, w, cin, kh, cout) = {
        let (_, _, _, cout) = kernels.dims4()?;
        let zero_bias = vec![0.0; cout];
        check_conv(input, kernels, &zero_bias)?
    };
    let k = kh;
    let (oh, ow, uc) = upstream.dims3()?;
    let expect = (padding.output_size(h, k), padding.output_size(w, k));
    if expect != (Some(oh), Some(ow)) || uc != cout {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "upstream {:?} does not match forward output of {h}×{w}×{cin} with {k}×{k}×{cin}×{cout}",
                upstream.shape()
            ),
        ));
    }
    let off = padding.offset(k) as isize;
    let x = input.data();
    let kern = kernels.data();
    let g = upstream.data();
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; kern.len()];
    let mut db = vec![0.0; cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let gpx = &g[(oy * ow + ox) * cout..][..cout];
            if gpx.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &gv) in db.iter_mut().zip(gpx) {
                *b += gv;
            }
            for ky in 0..k {
                let iy = oy as isize + ky as isize - off;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = ox as isize + kx as isize - off;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let pbase = (iy as usize * w + ix as usize) * cin;
                    let kbase = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let v = x[pbase + ci];
                        let row = &kern[kbase + ci * cout..][..cout];
                        let drow = &mut dk[kbase + ci * cout..][..cout];
                        let mut s = 0.0;
                        for ((d, &wt), &gv) in drow.iter_mut().zip(row).zip(gpx) {
                            *d += v * gv;
                            s += wt * gv;
                        }
                        dx[pbase + ci] += s;
                    }
                }
            }
        }
    }
    Ok(LayerGradients {
        parameter_grads: vec![
            Tensor::new(kernels.shape().to_vec(), dk)?,
            Tensor::new(vec![cout], db)?,
        ],
        input_grad: Tensor::new(input.shape().to_vec(), dx)?,
    })
}

/// Flat input indices of the winning element of every pooling window.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2×2 max pooling with stride 2. Ties go to the first element in
/// row-major window order.
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let (h, w, c) = input.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2x2",
            format!("spatial size {h}×{w} must be even"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0; oh * ow * c];
    let mut arg = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[i] > best || best_i == usize::MAX {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    Ok((
        Tensor::new(vec![oh, ow, c], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax: arg,
        },
    ))
}

pub fn maxpool2x2_backward(indices: &PoolIndices, upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != indices.argmax.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!(
                "upstream has {} values for {} pooled outputs",
                upstream.len(),
                indices.argmax.len()
            ),
        ));
    }
    let mut dx = Tensor::zeros(&indices.input_shape);
    for (&i, &g) in indices.argmax.iter().zip(upstream.data()) {
        dx.data[i] += g;
    }
    Ok(dx)
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Subgradient at zero is zero.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape != upstream.shape {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", input.shape, upstream.shape),
        ));
    }
    Ok(Tensor {
        shape: input.shape.clone(),
        data: input
            .data
            .iter()
            .zip(&upstream.data)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

/// Nearest-neighbour 2× spatial repeat.
pub fn upsample2x(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let src = &input.data[((oy / 2) * w + ox / 2) * c..][..c];
            out[(oy * ow + ox) * c..][..c].copy_from_slice(src);
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// Adjoint of [`upsample2x`]: sums each 2×2 block.
pub fn upsample2x_backward(upstream: &Tensor) -> Result<Tensor> {
    let (oh, ow, c) = upstream.dims3()?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(Error::shape(
            "upsample2x_backward",
            format!("upstream spatial size {oh}×{ow} must be even"),
        ));
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[((oy / 2) * w + ox / 2) * c..][..c];
            for (d, s) in dst.iter_mut().zip(&upstream.data[(oy * ow + ox) * c..][..c]) {
                *d += s;
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Per-pixel softmax over the channel axis, max-subtracted.
pub fn softmax_channels(input: &Tensor) -> Result<Tensor> {
    let (_, _, k) = input.dims3()?;
    if k < 2 {
        return Err(Error::shape("softmax_channels", "need at least two channels"));
    }
    let mut out = input.data.clone();
    for px in out.chunks_exact_mut(k) {
        let m = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in px.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in px.iter_mut() {
            *v /= s;
        }
    }
    Tensor::new(input.shape.clone(), out)
}

/// Channel-wise concatenation of two maps with equal spatial size.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (h, w, ca) = a.dims3()?;
    let (hb, wb, cb) = b.dims3()?;
    if (h, w) != (hb, wb) {
        return Err(Error::shape(
            "concat_channels",
            format!("spatial sizes {h}×{w} and {hb}×{wb} differ"),
        ));
    }
    if cb == 0 {
        return Ok(a.clone());
    }
    if ca == 0 {
        return Ok(b.clone());
    }
    let mut out = Vec::with_capacity(h * w * (ca + cb));
    for (pa, pb) in a.data.chunks_exact(ca).zip(b.data.chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    Tensor::new(vec![h, w, ca + cb], out)
}

/// Splits the channel axis at `first`; inverse of [`concat_channels`].
pub fn split_channels(t: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = t.dims3()?;
    if first > c {
        return Err(Error::shape(
            "split_channels",
            format!("cannot take {first} of {c} channels"),
        ));
    }
    if c == 0 {
        return Ok((Tensor::zeros(&[h, w, 0]), Tensor::zeros(&[h, w, 0])));
    }
    let mut a = Vec::with_capacity(h * w * first);
    let mut b = Vec::with_capacity(h * w * (c - first));
    for px in t.data.chunks_exact(c) {
        a.extend_from_slice(&px[..first]);
        b.extend_from_slice(&px[first..]);
    }
    Ok((
        Tensor::new(vec![h, w, first], a)?,
        Tensor::new(vec![h, w, c - first], b)?,
    ))
}

/// Keeps the leading `keep` channels.
pub fn take_channels(t: &Tensor, keep: usize) -> Result<Tensor> {
    Ok(split_channels(t, keep)?.0)
}

/// Zero-pads the channel axis out to `total`; adjoint of [`take_channels`].
pub fn pad_channels(t: &Tensor, total: usize) -> Result<Tensor> {
    let (h, w, c) = t.dims3()?;
    if total < c {
        return Err(Error::shape("pad_channels", format!("{total} < {c}")));
    }
    let mut out = vec![0.0; h * w * total];
    for (dst, src) in out.chunks_exact_mut(total).zip(t.data.chunks_exact(c.max(1))) {
        if c > 0 {
            dst[..c].copy_from_slice(src);
        }
    }
    Tensor::new(vec![h, w, total], out)
}
