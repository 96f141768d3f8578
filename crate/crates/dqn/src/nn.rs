//! The Q-network: a fixed conv → conv → fully-connected → linear-head
//! architecture with one output unit per action, so a single forward pass
//! yields the Q-values of every action for a state.
//!
//! The backward pass is derived by hand for exactly this architecture and is
//! checked against a central finite-difference oracle ([`finite_diff_grad`]).

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward_into, conv2d_forward_into, conv_out_extent, linear_backward_into,
    linear_forward_into, relu_backward_inplace, relu_inplace, Scalar, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One convolutional layer's geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Full layer geometry of the network. All parameter shapes derive from this
/// record, and the layers must chain: conv1's output feeds conv2, conv2's
/// output flattens into the hidden layer, and the head is
/// `num_actions × hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub hidden: usize,
    pub num_actions: usize,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            problems.push(format!(
                "input dims must be positive, got {}x{}x{}",
                self.input_channels, self.input_height, self.input_width
            ));
        }
        if self.num_actions < 2 {
            problems.push(format!("num_actions must be >= 2, got {}", self.num_actions));
        }
        if self.hidden == 0 {
            problems.push("hidden width must be positive".into());
        }
        for (name, c) in [("conv1", &self.conv1), ("conv2", &self.conv2)] {
            if c.out_channels == 0 {
                problems.push(format!("{name} must have at least one filter"));
            }
            if c.stride == 0 {
                problems.push(format!("{name} stride must be positive"));
            }
            if c.kernel == 0 {
                problems.push(format!("{name} kernel must be positive"));
            }
        }
        if problems.is_empty() {
            let chain = (|| -> Result<()> {
                let (h1, w1) = self.conv1_out()?;
                conv_out_extent(h1, self.conv2.kernel, self.conv2.stride)?;
                conv_out_extent(w1, self.conv2.kernel, self.conv2.stride)?;
                Ok(())
            })();
            if let Err(e) = chain {
                problems.push(format!("layer geometry does not chain: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Spatial output of conv1 as `(height, width)`.
    pub fn conv1_out(&self) -> Result<(usize, usize)> {
        Ok((
            conv_out_extent(self.input_height, self.conv1.kernel, self.conv1.stride)?,
            conv_out_extent(self.input_width, self.conv1.kernel, self.conv1.stride)?,
        ))
    }

    /// Spatial output of conv2 as `(height, width)`.
    pub fn conv2_out(&self) -> Result<(usize, usize)> {
        let (h1, w1) = self.conv1_out()?;
        Ok((
            conv_out_extent(h1, self.conv2.kernel, self.conv2.stride)?,
            conv_out_extent(w1, self.conv2.kernel, self.conv2.stride)?,
        ))
    }

    /// Width of the flattened conv2 output feeding the hidden layer.
    pub fn flattened(&self) -> Result<usize> {
        let (h2, w2) = self.conv2_out()?;
        Ok(self.conv2.out_channels * h2 * w2)
    }

    /// Shapes of the eight parameter tensors in checkpoint order.
    pub fn param_shapes(&self) -> Result<[(&'static str, Vec<usize>); 8]> {
        let flat = self.flattened()?;
        Ok([
            (
                "conv1_filters",
                vec![
                    self.conv1.out_channels,
                    self.input_channels,
                    self.conv1.kernel,
                    self.conv1.kernel,
                ],
            ),
            ("conv1_bias", vec![self.conv1.out_channels]),
            (
                "conv2_filters",
                vec![
                    self.conv2.out_channels,
                    self.conv1.out_channels,
                    self.conv2.kernel,
                    self.conv2.kernel,
                ],
            ),
            ("conv2_bias", vec![self.conv2.out_channels]),
            ("fc1_weight", vec![self.hidden, flat]),
            ("fc1_bias", vec![self.hidden]),
            ("out_weight", vec![self.num_actions, self.hidden]),
            ("out_bias", vec![self.num_actions]),
        ])
    }
}

/// The eight parameter tensors of the network, in fixed (checkpoint) order:
/// conv1 filters/bias, conv2 filters/bias, fc1 weight/bias, head weight/bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors<T> {
    pub conv1_w: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub conv2_w: Tensor<T>,
    pub conv2_b: Tensor<T>,
    pub fc1_w: Tensor<T>,
    pub fc1_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Scalar> ParamTensors<T> {
    pub fn zeros(geometry: &Geometry) -> Result<Self> {
        let shapes = geometry.param_shapes()?;
        let mut it = shapes.into_iter().map(|(_, s)| Tensor::zeros(s));
        Ok(ParamTensors {
            conv1_w: it.next().unwrap(),
            conv1_b: it.next().unwrap(),
            conv2_w: it.next().unwrap(),
            conv2_b: it.next().unwrap(),
            fc1_w: it.next().unwrap(),
            fc1_b: it.next().unwrap(),
            out_w: it.next().unwrap(),
            out_b: it.next().unwrap(),
        })
    }

    pub fn blocks(&self) -> [(&'static str, &Tensor<T>); 8] {
        [
            ("conv1_filters", &self.conv1_w),
            ("conv1_bias", &self.conv1_b),
            ("conv2_filters", &self.conv2_w),
            ("conv2_bias", &self.conv2_b),
            ("fc1_weight", &self.fc1_w),
            ("fc1_bias", &self.fc1_b),
            ("out_weight", &self.out_w),
            ("out_bias", &self.out_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 8] {
        [
            ("conv1_filters", &mut self.conv1_w),
            ("conv1_bias", &mut self.conv1_b),
            ("conv2_filters", &mut self.conv2_w),
            ("conv2_bias", &mut self.conv2_b),
            ("fc1_weight", &mut self.fc1_w),
            ("fc1_bias", &mut self.fc1_b),
            ("out_weight", &mut self.out_w),
            ("out_bias", &mut self.out_b),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.all_finite())
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamTensors<U> {
        ParamTensors {
            conv1_w: self.conv1_w.cast(),
            conv1_b: self.conv1_b.cast(),
            conv2_w: self.conv2_w.cast(),
            conv2_b: self.conv2_b.cast(),
            fc1_w: self.fc1_w.cast(),
            fc1_b: self.fc1_b.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }
}

/// All network weights θ plus the geometry they instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetParams<T> {
    geometry: Geometry,
    pub tensors: ParamTensors<T>,
}

impl<T: Scalar> QNetParams<T> {
    /// Wraps existing tensors after checking them against the geometry.
    pub fn from_tensors(geometry: Geometry, tensors: ParamTensors<T>) -> Result<Self> {
        geometry.validate()?;
        for ((name, want), (_, have)) in geometry.param_shapes()?.iter().zip(tensors.blocks()) {
            if have.shape() != want.as_slice() {
                return Err(Error::Shape(format!(
                    "{name} has shape {:?}, geometry requires {:?}",
                    have.shape(),
                    want
                )));
            }
        }
        Ok(QNetParams { geometry, tensors })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn cast<U: Scalar>(&self) -> QNetParams<U> {
        QNetParams {
            geometry: self.geometry,
            tensors: self.tensors.cast(),
        }
    }
}

/// Gradient of the minibatch loss, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: ParamTensors<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(geometry: &Geometry) -> Result<Self> {
        Ok(Gradients {
            tensors: ParamTensors::zeros(geometry)?,
        })
    }
}

/// Initializes weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` per
/// layer and biases at zero, deterministically for a given seed. Draws happen
/// in f64 and are cast to `T`, so nets at different precisions start from the
/// same numbers.
pub fn init_params<T: Scalar>(geometry: Geometry, seed: u64) -> Result<QNetParams<T>> {
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = ParamTensors::zeros(&geometry)?;
    let flat = geometry.flattened()?;
    let fan_ins = [
        geometry.input_channels * geometry.conv1.kernel * geometry.conv1.kernel,
        geometry.conv1.out_channels * geometry.conv2.kernel * geometry.conv2.kernel,
        flat,
        geometry.hidden,
    ];
    // temporary experiment hook
    let scale: f64 = std::env::var("DQN_INIT_SCALE")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1.0);
    for (weight, fan_in) in [
        &mut tensors.conv1_w,
        &mut tensors.conv2_w,
        &mut tensors.fc1_w,
        &mut tensors.out_w,
    ]
    .into_iter()
    .zip(fan_ins)
    {
        let limit = scale / (fan_in as f64).sqrt();
        for v in weight.data_mut() {
            *v = T::from_f64(rng.gen_range(-limit..=limit));
        }
    }
    Ok(QNetParams { geometry, tensors })
}

/// Per-batch activations kept for the backward pass. All post-rectifier.
struct Activations<T> {
    a1: Vec<T>,
    a2: Vec<T>,
    hidden: Vec<T>,
    q: Vec<T>,
}

struct Dims {
    c: usize,
    h: usize,
    w: usize,
    c1: usize,
    h1: usize,
    w1: usize,
    c2: usize,
    h2: usize,
    w2: usize,
    flat: usize,
    hidden: usize,
    actions: usize,
}

impl Dims {
    fn of(geometry: &Geometry) -> Result<Dims> {
        let (h1, w1) = geometry.conv1_out()?;
        let (h2, w2) = geometry.conv2_out()?;
        Ok(Dims {
            c: geometry.input_channels,
            h: geometry.input_height,
            w: geometry.input_width,
            c1: geometry.conv1.out_channels,
            h1,
            w1,
            c2: geometry.conv2.out_channels,
            h2,
            w2,
            flat: geometry.flattened()?,
            hidden: geometry.hidden,
            actions: geometry.num_actions,
        })
    }
}

fn check_batch<T: Scalar>(params: &QNetParams<T>, batch: &Tensor<T>) -> Result<usize> {
    let g = params.geometry();
    match *batch.shape() {
        [b, c, h, w]
            if c == g.input_channels && h == g.input_height && w == g.input_width && b > 0 =>
        {
            Ok(b)
        }
        _ => Err(Error::Shape(format!(
            "batch shape {:?} does not match network input [B,{},{},{}]",
            batch.shape(),
            g.input_channels,
            g.input_height,
            g.input_width
        ))),
    }
}

/// Samples are processed in fixed contiguous chunks. The chunk count
/// depends only on the batch size, so results do not depend on how many
/// threads happen to run them.
const BATCH_CHUNKS: usize = 4;

fn chunk_ranges(b: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = BATCH_CHUNKS.min(b);
    let base = b / chunks;
    let extra = b % chunks;
    let mut ranges = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

fn split_chunks<'a, T>(mut data: &'a mut [T], unit: usize, ranges: &[std::ops::Range<usize>]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    for r in ranges {
        let (head, tail) = data.split_at_mut(r.len() * unit);
        out.push(head);
        data = tail;
    }
    out
}

/// One sample's forward pass into caller-provided activation slices.
#[allow(clippy::too_many_arguments)]
fn forward_sample<T: Scalar>(
    t: &ParamTensors<T>,
    d: &Dims,
    k1: ConvSpec,
    k2: ConvSpec,
    x: &[T],
    col1: &mut [T],
    col2: &mut [T],
    a1: &mut [T],
    a2: &mut [T],
    hid: &mut [T],
    q: &mut [T],
) {
    conv2d_forward_into(
        x,
        t.conv1_w.data(),
        t.conv1_b.data(),
        d.c,
        d.h,
        d.w,
        d.c1,
        k1.kernel,
        k1.stride,
        d.h1,
        d.w1,
        col1,
        a1,
    );
    relu_inplace(a1);
    conv2d_forward_into(
        a1,
        t.conv2_w.data(),
        t.conv2_b.data(),
        d.c1,
        d.h1,
        d.w1,
        d.c2,
        k2.kernel,
        k2.stride,
        d.h2,
        d.w2,
        col2,
        a2,
    );
    relu_inplace(a2);
    linear_forward_into(a2, t.fc1_w.data(), t.fc1_b.data(), d.hidden, d.flat, hid);
    relu_inplace(hid);
    linear_forward_into(hid, t.out_w.data(), t.out_b.data(), d.actions, d.hidden, q);
}

/// Runs the forward pass sample by sample; each sample's arithmetic is
/// independent of the rest of the batch. Chunks run in parallel.
fn forward_batch<T: Scalar>(params: &QNetParams<T>, batch: &Tensor<T>) -> Result<Activations<T>> {
    let b = check_batch(params, batch)?;
    let d = Dims::of(params.geometry())?;
    let t = &params.tensors;
    let mut acts = Activations {
        a1: vec![T::zero(); b * d.c1 * d.h1 * d.w1],
        a2: vec![T::zero(); b * d.c2 * d.h2 * d.w2],
        hidden: vec![T::zero(); b * d.hidden],
        q: vec![T::zero(); b * d.actions],
    };
    let k1 = params.geometry().conv1;
    let k2 = params.geometry().conv2;
    let in_sz = d.c * d.h * d.w;
    let a1_sz = d.c1 * d.h1 * d.w1;
    let a2_sz = d.c2 * d.h2 * d.w2;
    let ranges = chunk_ranges(b);
    let a1_chunks = split_chunks(&mut acts.a1, a1_sz, &ranges);
    let a2_chunks = split_chunks(&mut acts.a2, a2_sz, &ranges);
    let hid_chunks = split_chunks(&mut acts.hidden, d.hidden, &ranges);
    let q_chunks = split_chunks(&mut acts.q, d.actions, &ranges);

    use rayon::prelude::*;
    ranges
        .par_iter()
        .zip(a1_chunks)
        .zip(a2_chunks)
        .zip(hid_chunks)
        .zip(q_chunks)
        .for_each(|((((range, a1s), a2s), hids), qs)| {
            let d = &d;
            let mut col1 = vec![T::zero(); d.c * k1.kernel * k1.kernel * d.h1 * d.w1];
            let mut col2 = vec![T::zero(); d.c1 * k2.kernel * k2.kernel * d.h2 * d.w2];
            for (j, i) in range.clone().enumerate() {
                forward_sample(
                    t,
                    d,
                    k1,
                    k2,
                    &batch.data()[i * in_sz..(i + 1) * in_sz],
                    &mut col1,
                    &mut col2,
                    &mut a1s[j * a1_sz..(j + 1) * a1_sz],
                    &mut a2s[j * a2_sz..(j + 1) * a2_sz],
                    &mut hids[j * d.hidden..(j + 1) * d.hidden],
                    &mut qs[j * d.actions..(j + 1) * d.actions],
                );
            }
        });
    Ok(acts)
}

/// Q-values for a batch of states: `[B,C,H,W] → [B,num_actions]`.
pub fn qnet_forward<T: Scalar>(params: &QNetParams<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let b = check_batch(params, batch)?;
    let acts = forward_batch(params, batch)?;
    Tensor::from_vec([b, params.geometry().num_actions], acts.q)
}

fn check_batch_labels<T: Scalar>(
    params: &QNetParams<T>,
    b: usize,
    actions: &[usize],
    targets: &Tensor<T>,
) -> Result<()> {
    if actions.len() != b {
        return Err(Error::Input(format!(
            "expected {} action indices, got {}",
            b,
            actions.len()
        )));
    }
    if targets.shape() != [b] {
        return Err(Error::Input(format!(
            "targets must be [{}], got {:?}",
            b,
            targets.shape()
        )));
    }
    let num_actions = params.geometry().num_actions;
    if let Some(bad) = actions.iter().find(|&&a| a >= num_actions) {
        return Err(Error::Input(format!(
            "action id {} out of range (num_actions = {})",
            bad, num_actions
        )));
    }
    Ok(())
}

/// Mean squared Bellman-target loss of the batch, without gradients.
pub fn qnet_loss<T: Scalar>(
    params: &QNetParams<T>,
    batch: &Tensor<T>,
    actions: &[usize],
    targets: &Tensor<T>,
) -> Result<T> {
    let b = check_batch(params, batch)?;
    check_batch_labels(params, b, actions, targets)?;
    let q = qnet_forward(params, batch)?;
    let actions_n = params.geometry().num_actions;
    let mut loss = T::zero();
    for j in 0..b {
        let e = targets.data()[j] - q.data()[j * actions_n + actions[j]];
        loss = loss + e * e;
    }
    Ok(loss / T::from_f64(b as f64))
}

/// Loss and exact analytic gradients of `mean_j (y_j - Q(s_j, a_j))^2` with
/// the targets held fixed. Gradient flows only through each sample's chosen
/// action output.
pub fn qnet_backward<T: Scalar>(
    params: &QNetParams<T>,
    batch: &Tensor<T>,
    actions: &[usize],
    targets: &Tensor<T>,
) -> Result<(T, Gradients<T>)> {
    let b = check_batch(params, batch)?;
    check_batch_labels(params, b, actions, targets)?;
    let g = *params.geometry();
    let d = Dims::of(&g)?;
    let acts = forward_batch(params, batch)?;

    // Each chunk accumulates its own partial gradients; partials are folded
    // in chunk order afterwards, so the result is schedule-independent.
    use rayon::prelude::*;
    let ranges = chunk_ranges(b);
    let partials: Result<Vec<(T, ParamTensors<T>)>> = ranges
        .par_iter()
        .map(|range| {
            let mut grads = ParamTensors::zeros(&g)?;
            let loss = backward_span(
                params,
                batch,
                actions,
                targets,
                &acts,
                &d,
                range.clone(),
                b,
                &mut grads,
            );
            Ok((loss, grads))
        })
        .collect();

    let mut grads = Gradients::zeros(&g)?;
    let mut loss = T::zero();
    for (partial_loss, partial) in partials? {
        loss = loss + partial_loss;
        for ((_, total), (_, p)) in grads.tensors.blocks_mut().into_iter().zip(partial.blocks())
        {
            for (tv, pv) in total.data_mut().iter_mut().zip(p.data()) {
                *tv = *tv + *pv;
            }
        }
    }
    Ok((loss, grads))
}

/// Backward pass over one contiguous span of samples, accumulating into
/// `grads`. Returns the span's loss contribution.
#[allow(clippy::too_many_arguments)]
fn backward_span<T: Scalar>(
    params: &QNetParams<T>,
    batch: &Tensor<T>,
    actions: &[usize],
    targets: &Tensor<T>,
    acts: &Activations<T>,
    d: &Dims,
    range: std::ops::Range<usize>,
    b: usize,
    grads: &mut ParamTensors<T>,
) -> T {
    let g = params.geometry();
    let t = &params.tensors;
    let k1 = g.conv1;
    let k2 = g.conv2;
    let inv_b = T::one() / T::from_f64(b as f64);
    let two = T::from_f64(2.0);
    let mut loss = T::zero();

    // Per-sample scratch, reused across the span.
    let mut dq = vec![T::zero(); d.actions];
    let mut dhidden = vec![T::zero(); d.hidden];
    let mut da2 = vec![T::zero(); d.flat];
    let mut da1 = vec![T::zero(); d.c1 * d.h1 * d.w1];
    let mut col2 = vec![T::zero(); d.c1 * k2.kernel * k2.kernel * d.h2 * d.w2];
    let mut dcol2 = vec![T::zero(); col2.len()];
    let mut col1 = vec![T::zero(); d.c * k1.kernel * k1.kernel * d.h1 * d.w1];

    let in_sz = d.c * d.h * d.w;
    let a1_sz = d.c1 * d.h1 * d.w1;
    let a2_sz = d.c2 * d.h2 * d.w2;

    for i in range {
        let q = &acts.q[i * d.actions..(i + 1) * d.actions];
        let err = targets.data()[i] - q[actions[i]];
        loss = loss + err * err * inv_b;

        // d(loss)/d(q_a) = -2 (y - q_a) / B on the chosen action, 0 elsewhere.
        dq.fill(T::zero());
        dq[actions[i]] = -two * err * inv_b;

        let hid = &acts.hidden[i * d.hidden..(i + 1) * d.hidden];
        linear_backward_into(
            hid,
            t.out_w.data(),
            &dq,
            d.actions,
            d.hidden,
            grads.out_w.data_mut(),
            grads.out_b.data_mut(),
            &mut dhidden,
        );
        relu_backward_inplace(hid, &mut dhidden);

        let a2 = &acts.a2[i * a2_sz..(i + 1) * a2_sz];
        linear_backward_into(
            a2,
            t.fc1_w.data(),
            &dhidden,
            d.hidden,
            d.flat,
            grads.fc1_w.data_mut(),
            grads.fc1_b.data_mut(),
            &mut da2,
        );
        relu_backward_inplace(a2, &mut da2);

        let a1 = &acts.a1[i * a1_sz..(i + 1) * a1_sz];
        conv2d_backward_into(
            a1,
            t.conv2_w.data(),
            &da2,
            d.c1,
            d.h1,
            d.w1,
            d.c2,
            k2.kernel,
            k2.stride,
            d.h2,
            d.w2,
            &mut col2,
            &mut dcol2,
            grads.conv2_w.data_mut(),
            grads.conv2_b.data_mut(),
            &mut da1,
        );
        relu_backward_inplace(a1, &mut da1);

        // First layer: only parameter gradients are needed; the gradient
        // with respect to the input pixels is not computed.
        conv1_param_grads(
            &batch.data()[i * in_sz..(i + 1) * in_sz],
            &da1,
            d,
            k1,
            &mut col1,
            grads.conv1_w.data_mut(),
            grads.conv1_b.data_mut(),
        );
    }
    loss
}

fn conv1_param_grads<T: Scalar>(
    x: &[T],
    dout: &[T],
    d: &Dims,
    spec: ConvSpec,
    col: &mut [T],
    filter_grad: &mut [T],
    bias_grad: &mut [T],
) {
    let kk = d.c * spec.kernel * spec.kernel;
    let n = d.h1 * d.w1;
    for o in 0..d.c1 {
        let mut s = T::zero();
        for v in &dout[o * n..(o + 1) * n] {
            s = s + *v;
        }
        bias_grad[o] = bias_grad[o] + s;
    }
    crate::tensor::im2col(x, d.c, d.h, d.w, spec.kernel, spec.stride, d.h1, d.w1, col);
    unsafe {
        T::gemm(
            d.c1,
            n,
            kk,
            T::one(),
            dout.as_ptr(),
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
    }
}

/// Central finite-difference estimate `(L(θ+h) - L(θ-h)) / 2h` for every
/// scalar parameter. Test oracle; cost is `O(#params)` forward passes, so
/// only use it on small nets.
pub fn finite_diff_grad<T: Scalar>(
    params: &QNetParams<T>,
    batch: &Tensor<T>,
    actions: &[usize],
    targets: &Tensor<T>,
    h: T,
) -> Result<Gradients<T>> {
    if h == T::zero() || !h.is_finite() {
        return Err(Error::Input(format!(
            "finite-difference step must be finite and nonzero, got {h}"
        )));
    }
    let b = check_batch(params, batch)?;
    check_batch_labels(params, b, actions, targets)?;
    let mut work = params.clone();
    let mut grads = Gradients::zeros(params.geometry())?;
    let two_h = h + h;
    for block in 0..8 {
        let len = work.tensors.blocks()[block].1.len();
        for idx in 0..len {
            let orig = work.tensors.blocks()[block].1.data()[idx];
            work.tensors.blocks_mut()[block].1.data_mut()[idx] = orig + h;
            let up = qnet_loss(&work, batch, actions, targets)?;
            work.tensors.blocks_mut()[block].1.data_mut()[idx] = orig - h;
            let down = qnet_loss(&work, batch, actions, targets)?;
            work.tensors.blocks_mut()[block].1.data_mut()[idx] = orig;
            grads.tensors.blocks_mut()[block].1.data_mut()[idx] = (up - down) / two_h;
        }
    }
    Ok(grads)
}

/// Largest relative error between two gradient sets:
/// `|a - b| / max(|a| + |b|, floor)`.
pub fn max_relative_error<T: Scalar>(a: &Gradients<T>, b: &Gradients<T>) -> f64 {
    let floor = 1e-8;
    let mut worst = 0.0f64;
    for ((_, ta), (_, tb)) in a.tensors.blocks().iter().zip(b.tensors.blocks()) {
        for (x, y) in ta.data().iter().zip(tb.data()) {
            let x = x.to_f64().unwrap();
            let y = y.to_f64().unwrap();
            let rel = (x - y).abs() / (x.abs() + y.abs()).max(floor);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}

/// Outcome of one randomized gradient-check run.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_relative_error: f64,
    pub threshold: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.threshold
    }
}

/// Smallest |pre-activation| across every rectifier in the net for this
/// batch: the distance to the nearest loss kink. Finite differences are only
/// valid where the loss is locally smooth, so the gradcheck suite rejects
/// draws whose kink distance is smaller than the perturbations it applies.
pub fn min_kink_distance<T: Scalar>(params: &QNetParams<T>, batch: &Tensor<T>) -> Result<f64> {
    let b = check_batch(params, batch)?;
    let g = params.geometry();
    let t = &params.tensors;
    let n = g.input_channels * g.input_height * g.input_width;
    let mut dist = f64::INFINITY;
    for i in 0..b {
        let x = Tensor::from_vec(
            [g.input_channels, g.input_height, g.input_width],
            batch.data()[i * n..(i + 1) * n].to_vec(),
        )?;
        let pre1 = crate::tensor::conv2d_forward(&x, &t.conv1_w, &t.conv1_b, g.conv1.stride)?;
        track_min_abs(&pre1, &mut dist);
        let a1 = crate::tensor::relu(&pre1);
        let pre2 = crate::tensor::conv2d_forward(&a1, &t.conv2_w, &t.conv2_b, g.conv2.stride)?;
        track_min_abs(&pre2, &mut dist);
        let a2 = crate::tensor::relu(&pre2);
        let flat = a2.reshaped([g.flattened()?])?;
        let pre_h = crate::tensor::linear_forward(&flat, &t.fc1_w, &t.fc1_b)?;
        track_min_abs(&pre_h, &mut dist);
    }
    Ok(dist)
}

fn track_min_abs<T: Scalar>(t: &Tensor<T>, dist: &mut f64) {
    for v in t.data() {
        let a = v.to_f64().unwrap().abs();
        if a < *dist {
            *dist = a;
        }
    }
}

/// Checks analytic gradients against central finite differences on randomly
/// drawn small nets and batches, at 64-bit precision with step `1e-5`.
/// Draws that place a rectifier within `2e-3` of its kink are redrawn, since
/// a difference quotient across a kink does not estimate the derivative.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let h = 1e-5;
    let kink_margin = 2e-3;
    for _ in 0..instances {
        let (params, batch, actions, targets) = loop {
            let geometry = random_small_geometry(&mut rng);
            let params: QNetParams<f64> = init_params(geometry, rng.gen())?;
            let b = rng.gen_range(1..=4);
            let n = geometry.input_channels * geometry.input_height * geometry.input_width;
            let batch = Tensor::from_vec(
                [
                    b,
                    geometry.input_channels,
                    geometry.input_height,
                    geometry.input_width,
                ],
                (0..b * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )?;
            if min_kink_distance(&params, &batch)? < kink_margin {
                continue;
            }
            let actions: Vec<usize> = (0..b)
                .map(|_| rng.gen_range(0..geometry.num_actions))
                .collect();
            let targets =
                Tensor::from_vec([b], (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            break (params, batch, actions, targets);
        };
        let (_, analytic) = qnet_backward(&params, &batch, &actions, &targets)?;
        let numeric = finite_diff_grad(&params, &batch, &actions, &targets, h)?;
        let rel = max_relative_error(&analytic, &numeric);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(GradcheckReport {
        instances,
        max_relative_error: worst,
        threshold: 1e-4,
    })
}

fn random_small_geometry(rng: &mut ChaCha8Rng) -> Geometry {
    let side = rng.gen_range(6..=9);
    Geometry {
        input_channels: rng.gen_range(1..=3),
        input_height: side,
        input_width: side,
        conv1: ConvSpec {
            out_channels: rng.gen_range(1..=3),
            kernel: 3,
            stride: 1,
        },
        conv2: ConvSpec {
            out_channels: rng.gen_range(1..=2),
            kernel: 2,
            stride: rng.gen_range(1..=2),
        },
        hidden: rng.gen_range(4..=8),
        num_actions: rng.gen_range(2..=4),
    }
}
