//! Valid-padding strided 2-D convolution and its transpose.
//!
//! Both directions are computed as one matrix multiply over an im2col/col2im
//! unfolding. A ConvTranspose2d that shares its raw weight data with a Conv2d
//! of swapped channel counts is the exact adjoint of that convolution.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul, transpose, Tensor};

use super::layer::{uniform_init, LayerGrads};

/// Output extent of a valid-padding strided convolution along one axis.
fn conv_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input - kernel) / stride + 1
}

/// Unfold `(c, h, w)` input into a `(c*kh*kw, ho*wo)` matrix: row
/// `cidx*kh*kw + ky*kw + kx`, column `oy*wo + ox` holds
/// `input[cidx][oy*sh + ky][ox*sw + kx]`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
) -> Vec<f64> {
    let ho = conv_extent(h, kh, sh);
    let wo = conv_extent(w, kw, sw);
    let n = ho * wo;
    let mut col = vec![0.0; c * kh * kw * n];
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ci * kh + ky) * kw + kx;
                let row = &mut col[r * n..(r + 1) * n];
                for oy in 0..ho {
                    let src = (ci * h + oy * sh + ky) * w + kx;
                    for ox in 0..wo {
                        row[oy * wo + ox] = input[src + ox * sw];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the inverse of [`im2col`]: fold a `(c*kh*kw, ho*wo)` matrix
/// back into a `(c, h, w)` buffer.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
) -> Vec<f64> {
    let ho = conv_extent(h, kh, sh);
    let wo = conv_extent(w, kw, sw);
    let n = ho * wo;
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ci * kh + ky) * kw + kx;
                let row = &col[r * n..(r + 1) * n];
                for oy in 0..ho {
                    let dst = (ci * h + oy * sh + ky) * w + kx;
                    for ox in 0..wo {
                        out[dst + ox * sw] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
    out
}

/// Strided convolution with valid padding. Weight layout `(out_ch, in_ch, kh, kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        weight: Tensor,
        bias: Tensor,
    ) -> Result<Self> {
        check_geometry(kernel, stride)?;
        let expect = [out_ch, in_ch, kernel.0, kernel.1];
        if weight.shape() != expect {
            return Err(Error::ShapeMismatch(format!(
                "conv2d weight {:?}, expected {:?}",
                weight.shape(),
                expect
            )));
        }
        if bias.shape() != [out_ch] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d bias {:?}, expected [{}]",
                bias.shape(),
                out_ch
            )));
        }
        Ok(Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            weight,
            bias,
        })
    }

    /// Uniform init with limit sqrt(6 / fan_in), fan_in = in_ch*kh*kw; zero bias.
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let weight = Tensor::from_vec(
            &[out_ch, in_ch, kernel.0, kernel.1],
            uniform_init(rng, out_ch * fan_in, fan_in),
        )?;
        Self::new(in_ch, out_ch, kernel, stride, weight, Tensor::zeros(&[out_ch]))
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let (h, w) = check_input(in_shape, self.in_ch, self.kernel, "conv2d")?;
        Ok(vec![
            self.out_ch,
            conv_extent(h, self.kernel.0, self.stride.0),
            conv_extent(w, self.kernel.1, self.stride.1),
        ])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = check_input(x.shape(), self.in_ch, self.kernel, "conv2d")?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let ho = conv_extent(h, kh, sh);
        let wo = conv_extent(w, kw, sw);
        let n = ho * wo;
        let kdim = self.in_ch * kh * kw;
        let col = im2col(x.data(), self.in_ch, h, w, kh, kw, sh, sw);
        let mut out = matmul(self.weight.data(), self.out_ch, kdim, &col, n);
        for o in 0..self.out_ch {
            let b = self.bias.data()[o];
            for v in &mut out[o * n..(o + 1) * n] {
                *v += b;
            }
        }
        Tensor::from_vec(&[self.out_ch, ho, wo], out)
    }

    /// Gradients of a scalar loss given `grad_out` on the forward output.
    /// Returns (input grad, parameter grads).
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, LayerGrads)> {
        let (h, w) = check_input(x.shape(), self.in_ch, self.kernel, "conv2d")?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let ho = conv_extent(h, kh, sh);
        let wo = conv_extent(w, kw, sw);
        let n = ho * wo;
        let kdim = self.in_ch * kh * kw;
        if grad_out.shape() != [self.out_ch, ho, wo] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d grad_out {:?}, expected [{}, {}, {}]",
                grad_out.shape(),
                self.out_ch,
                ho,
                wo
            )));
        }
        let col = im2col(x.data(), self.in_ch, h, w, kh, kw, sh, sw);
        let dw = matmul(
            grad_out.data(),
            self.out_ch,
            n,
            &transpose(&col, kdim, n),
            kdim,
        );
        let mut db = vec![0.0; self.out_ch];
        for o in 0..self.out_ch {
            db[o] = grad_out.data()[o * n..(o + 1) * n].iter().sum();
        }
        let dcol = matmul(
            &transpose(self.weight.data(), self.out_ch, kdim),
            kdim,
            self.out_ch,
            grad_out.data(),
            n,
        );
        let dx = col2im(&dcol, self.in_ch, h, w, kh, kw, sh, sw);
        Ok((
            Tensor::from_vec(&[self.in_ch, h, w], dx)?,
            LayerGrads {
                weight: Some(Tensor::from_vec(
                    &[self.out_ch, self.in_ch, kh, kw],
                    dw,
                )?),
                bias: Some(Tensor::from_vec(&[self.out_ch], db)?),
            },
        ))
    }
}

/// Transposed convolution, the adjoint of [`Conv2d`] with the same geometry.
/// Weight layout `(in_ch, out_ch, kh, kw)`; output extent `(in-1)*stride + kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvTranspose2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        weight: Tensor,
        bias: Tensor,
    ) -> Result<Self> {
        check_geometry(kernel, stride)?;
        let expect = [in_ch, out_ch, kernel.0, kernel.1];
        if weight.shape() != expect {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d weight {:?}, expected {:?}",
                weight.shape(),
                expect
            )));
        }
        if bias.shape() != [out_ch] {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d bias {:?}, expected [{}]",
                bias.shape(),
                out_ch
            )));
        }
        Ok(ConvTranspose2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            weight,
            bias,
        })
    }

    /// Uniform init with limit sqrt(6 / fan_in), fan_in = in_ch*kh*kw; zero bias.
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let weight = Tensor::from_vec(
            &[in_ch, out_ch, kernel.0, kernel.1],
            uniform_init(rng, out_ch * fan_in, fan_in),
        )?;
        Self::new(in_ch, out_ch, kernel, stride, weight, Tensor::zeros(&[out_ch]))
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        if in_shape.len() != 3 || in_shape[0] != self.in_ch {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d input {:?}, expected [{}, _, _]",
                in_shape, self.in_ch
            )));
        }
        Ok(vec![
            self.out_ch,
            (in_shape[1] - 1) * self.stride.0 + self.kernel.0,
            (in_shape[2] - 1) * self.stride.1 + self.kernel.1,
        ])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (ho, wo) = (out_shape[1], out_shape[2]);
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let n = h * w;
        let kdim = self.out_ch * kh * kw;
        // rows (o, ky, kx) of dcol hold sum_i weight[i][o][ky][kx] * x[i][iy][ix]
        let dcol = matmul(
            &transpose(self.weight.data(), self.in_ch, kdim),
            kdim,
            self.in_ch,
            x.data(),
            n,
        );
        let mut out = col2im(&dcol, self.out_ch, ho, wo, kh, kw, sh, sw);
        let spatial = ho * wo;
        for o in 0..self.out_ch {
            let b = self.bias.data()[o];
            for v in &mut out[o * spatial..(o + 1) * spatial] {
                *v += b;
            }
        }
        Tensor::from_vec(&out_shape, out)
    }

    /// Returns (input grad, parameter grads).
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, LayerGrads)> {
        let out_shape = self.out_shape(x.shape())?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d grad_out {:?}, expected {:?}",
                grad_out.shape(),
                out_shape
            )));
        }
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (ho, wo) = (out_shape[1], out_shape[2]);
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let n = h * w;
        let kdim = self.out_ch * kh * kw;
        let col = im2col(grad_out.data(), self.out_ch, ho, wo, kh, kw, sh, sw);
        let dx = matmul(self.weight.data(), self.in_ch, kdim, &col, n);
        let dw = matmul(x.data(), self.in_ch, n, &transpose(&col, kdim, n), kdim);
        let spatial = ho * wo;
        let mut db = vec![0.0; self.out_ch];
        for o in 0..self.out_ch {
            db[o] = grad_out.data()[o * spatial..(o + 1) * spatial].iter().sum();
        }
        Ok((
            Tensor::from_vec(&[self.in_ch, h, w], dx)?,
            LayerGrads {
                weight: Some(Tensor::from_vec(
                    &[self.in_ch, self.out_ch, kh, kw],
                    dw,
                )?),
                bias: Some(Tensor::from_vec(&[self.out_ch], db)?),
            },
        ))
    }
}

fn check_geometry(kernel: (usize, usize), stride: (usize, usize)) -> Result<()> {
    if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::InvalidInput(format!(
            "kernel {:?} and stride {:?} must be positive",
            kernel, stride
        )));
    }
    Ok(())
}

fn check_input(
    shape: &[usize],
    in_ch: usize,
    kernel: (usize, usize),
    what: &str,
) -> Result<(usize, usize)> {
    if shape.len() != 3 || shape[0] != in_ch {
        return Err(Error::ShapeMismatch(format!(
            "{} input {:?}, expected [{}, _, _]",
            what, shape, in_ch
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    if h < kernel.0 || w < kernel.1 {
        return Err(Error::ShapeMismatch(format!(
            "{} input {}x{} smaller than kernel {}x{}",
            what, h, w, kernel.0, kernel.1
        )));
    }
    Ok((h, w))
}
