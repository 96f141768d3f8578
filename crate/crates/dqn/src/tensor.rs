//! Row-major tensors and the dense/convolutional kernels used by the
//! Q-network, together with their backward passes.
//!
//! Everything here is a pure function of its inputs. Convolutions are valid
//! (no padding) and lowered to matrix multiplication via im2col; the fully
//! connected kernels are plain accumulation loops. Each sample of a batch is
//! processed independently in a fixed order, so results are deterministic and
//! identical for a given sample regardless of batch size.

use crate::error::{Error, Result};

/// Element type a network can be instantiated at. Training uses `f32`;
/// gradient-check tests instantiate at `f64`.
pub trait Scalar:
    num_traits::Float
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;

    /// `c ← alpha·a·b + beta·c` for row/column strides as in `matrixmultiply`.
    ///
    /// # Safety
    /// Pointers must reference buffers valid for the given dimensions and
    /// strides, with `c` disjoint from `a` and `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense tensor with a row-major layout: the last axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from a shape and matching data.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {:?}", shape)));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.fill(value);
    }

    /// True when every element is finite (no NaN or infinity).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the tensor under a new shape with the same element count.
    pub fn reshaped(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Converts element type; used by tests that compare f32/f64 paths.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().expect("finite scalar")))
                .collect(),
        }
    }
}

/// Spatial output extent of a valid convolution: `floor((in - k)/stride) + 1`.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("convolution stride must be positive".into()));
    }
    if kernel == 0 {
        return Err(Error::Config("convolution kernel must be positive".into()));
    }
    if kernel > input {
        return Err(Error::Shape(format!(
            "kernel {} larger than input extent {}",
            kernel, input
        )));
    }
    Ok((input - kernel) / stride + 1)
}

/// Unfolds one `[C,H,W]` image into a `[C·k·k, outH·outW]` column matrix.
pub(crate) fn im2col<T: Scalar>(
    input: &[T],
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    col: &mut [T],
) {
    debug_assert_eq!(input.len(), channels * height * width);
    debug_assert_eq!(col.len(), channels * kernel * kernel * out_h * out_w);
    let n = out_h * out_w;
    let mut row = 0;
    for c in 0..channels {
        let plane = &input[c * height * width..(c + 1) * height * width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let dst = &mut col[row * n..(row + 1) * n];
                let mut idx = 0;
                for oy in 0..out_h {
                    let src_row = oy * stride + ky;
                    let base = src_row * width + kx;
                    for ox in 0..out_w {
                        dst[idx] = plane[base + ox * stride];
                        idx += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds a column-matrix gradient back onto the input image (scatter-add),
/// the adjoint of [`im2col`].
pub(crate) fn col2im_add<T: Scalar>(
    col: &[T],
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    input_grad: &mut [T],
) {
    let n = out_h * out_w;
    let mut row = 0;
    for c in 0..channels {
        let plane = &mut input_grad[c * height * width..(c + 1) * height * width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let src = &col[row * n..(row + 1) * n];
                let mut idx = 0;
                for oy in 0..out_h {
                    let dst_row = oy * stride + ky;
                    let base = dst_row * width + kx;
                    for ox in 0..out_w {
                        plane[base + ox * stride] = plane[base + ox * stride] + src[idx];
                        idx += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

fn check_conv_args<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    let [c, h, w] = match *input.shape() {
        [c, h, w] => [c, h, w],
        _ => {
            return Err(Error::Shape(format!(
                "conv input must be [C,H,W], got {:?}",
                input.shape()
            )))
        }
    };
    let [out_c, in_c, kh, kw] = match *filters.shape() {
        [o, i, kh, kw] => [o, i, kh, kw],
        _ => {
            return Err(Error::Shape(format!(
                "conv filters must be [outC,inC,k,k], got {:?}",
                filters.shape()
            )))
        }
    };
    if kh != kw {
        return Err(Error::Shape(format!(
            "only square kernels supported, got {}x{}",
            kh, kw
        )));
    }
    if in_c != c {
        return Err(Error::Shape(format!(
            "filter input channels {} do not match input channels {}",
            in_c, c
        )));
    }
    if bias.shape() != [out_c] {
        return Err(Error::Shape(format!(
            "conv bias must be [{}], got {:?}",
            out_c,
            bias.shape()
        )));
    }
    let out_h = conv_out_extent(h, kh, stride)?;
    let out_w = conv_out_extent(w, kw, stride)?;
    Ok((c, h, w, out_c, kh, out_h, out_w))
}

/// Valid 2-D convolution of a single `[C,H,W]` image with a filter bank
/// `[outC,C,k,k]` and per-channel bias, producing `[outC,outH,outW]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (c, h, w, out_c, k, out_h, out_w) = check_conv_args(input, filters, bias, stride)?;
    let mut col = vec![T::zero(); c * k * k * out_h * out_w];
    let mut out = Tensor::zeros([out_c, out_h, out_w]);
    conv2d_forward_into(
        input.data(),
        filters.data(),
        bias.data(),
        c,
        h,
        w,
        out_c,
        k,
        stride,
        out_h,
        out_w,
        &mut col,
        out.data_mut(),
    );
    Ok(out)
}

/// Core of the convolution forward pass, writing into caller-owned buffers so
/// the training loop can reuse scratch space.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_forward_into<T: Scalar>(
    input: &[T],
    filters: &[T],
    bias: &[T],
    channels: usize,
    height: usize,
    width: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    col: &mut [T],
    out: &mut [T],
) {
    let kk = channels * kernel * kernel;
    let n = out_h * out_w;
    im2col(input, channels, height, width, kernel, stride, out_h, out_w, col);
    // out[o, y, x] starts at bias[o]; gemm accumulates the filter response.
    for o in 0..out_c {
        out[o * n..(o + 1) * n].fill(bias[o]);
    }
    unsafe {
        T::gemm(
            out_c,
            kk,
            n,
            T::one(),
            filters.as_ptr(),
            kk as isize,
            1,
            col.as_ptr(),
            n as isize,
            1,
            T::one(),
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Backward pass of one conv sample. Accumulates into `filter_grad` and
/// `bias_grad` (callers zero them once per batch) and overwrites `input_grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward_into<T: Scalar>(
    input: &[T],
    filters: &[T],
    out_grad: &[T],
    channels: usize,
    height: usize,
    width: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    col: &mut [T],
    dcol: &mut [T],
    filter_grad: &mut [T],
    bias_grad: &mut [T],
    input_grad: &mut [T],
) {
    let kk = channels * kernel * kernel;
    let n = out_h * out_w;
    for o in 0..out_c {
        let mut s = T::zero();
        for v in &out_grad[o * n..(o + 1) * n] {
            s = s + *v;
        }
        bias_grad[o] = bias_grad[o] + s;
    }
    im2col(input, channels, height, width, kernel, stride, out_h, out_w, col);
    unsafe {
        // filter_grad[o, r] += sum_n out_grad[o, n] * col[r, n]
        T::gemm(
            out_c,
            n,
            kk,
            T::one(),
            out_grad.as_ptr(),
            n as isize,
            1,
            col.as_ptr(),
            1,
            n as isize,
            T::one(),
            filter_grad.as_mut_ptr(),
            kk as isize,
            1,
        );
        // dcol[r, n] = sum_o filters[o, r] * out_grad[o, n]
        T::gemm(
            kk,
            out_c,
            n,
            T::one(),
            filters.as_ptr(),
            1,
            kk as isize,
            out_grad.as_ptr(),
            n as isize,
            1,
            T::zero(),
            dcol.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    input_grad.fill(T::zero());
    col2im_add(
        dcol, channels, height, width, kernel, stride, out_h, out_w, input_grad,
    );
}

/// Elementwise rectifier `max(0, x)`; shape preserved.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    relu_inplace(out.data_mut());
    out
}

pub(crate) fn relu_inplace<T: Scalar>(data: &mut [T]) {
    for v in data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` where the rectifier was inactive: `d[i] = 0` if `act[i] <= 0`.
/// `act` is the post-rectifier activation, whose sign matches the input's.
pub(crate) fn relu_backward_inplace<T: Scalar>(act: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(act) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Fully connected layer on one vector: `W·x + b` with `W: [m×n]`.
pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = match *input.shape() {
        [n] => n,
        _ => {
            return Err(Error::Shape(format!(
                "linear input must be a vector, got {:?}",
                input.shape()
            )))
        }
    };
    let [m, wn] = match *weight.shape() {
        [m, wn] => [m, wn],
        _ => {
            return Err(Error::Shape(format!(
                "linear weight must be [m,n], got {:?}",
                weight.shape()
            )))
        }
    };
    if wn != n {
        return Err(Error::Shape(format!(
            "linear weight expects input width {}, got {}",
            wn, n
        )));
    }
    if bias.shape() != [m] {
        return Err(Error::Shape(format!(
            "linear bias must be [{}], got {:?}",
            m,
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros([m]);
    linear_forward_into(input.data(), weight.data(), bias.data(), m, n, out.data_mut());
    Ok(out)
}

/// `out[j] = bias[j] + Σ_i weight[j,i]·input[i]`.
///
/// The dot product accumulates in eight independent lanes folded in a fixed
/// order, so results are reproducible run to run (and fast: the lanes break
/// the serial dependence of a single accumulator).
pub(crate) fn linear_forward_into<T: Scalar>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    m: usize,
    n: usize,
    out: &mut [T],
) {
    const LANES: usize = 8;
    for j in 0..m {
        let row = &weight[j * n..(j + 1) * n];
        let mut lanes = [T::zero(); LANES];
        let whole = n - n % LANES;
        for (rc, xc) in row[..whole]
            .chunks_exact(LANES)
            .zip(input[..whole].chunks_exact(LANES))
        {
            for l in 0..LANES {
                lanes[l] = lanes[l] + rc[l] * xc[l];
            }
        }
        let mut acc = T::zero();
        for lane in lanes {
            acc = acc + lane;
        }
        for i in whole..n {
            acc = acc + row[i] * input[i];
        }
        out[j] = bias[j] + acc;
    }
}

/// Backward pass of one linear sample. Accumulates parameter gradients and
/// overwrites `input_grad`.
pub(crate) fn linear_backward_into<T: Scalar>(
    input: &[T],
    weight: &[T],
    out_grad: &[T],
    m: usize,
    n: usize,
    weight_grad: &mut [T],
    bias_grad: &mut [T],
    input_grad: &mut [T],
) {
    for j in 0..m {
        let g = out_grad[j];
        bias_grad[j] = bias_grad[j] + g;
        let wrow = &weight[j * n..(j + 1) * n];
        let grow = &mut weight_grad[j * n..(j + 1) * n];
        if j == 0 {
            for i in 0..n {
                grow[i] = grow[i] + g * input[i];
                input_grad[i] = wrow[i] * g;
            }
        } else {
            for i in 0..n {
                grow[i] = grow[i] + g * input[i];
                input_grad[i] = input_grad[i] + wrow[i] * g;
            }
        }
    }
}
