//! Reference kernels. Plain loops, fixed summation order.

use crate::graph::{perm_between, Layout};

/// Row-major strides of `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Output axis `i` reads input axis `perm[i]`.
pub fn transpose<T: Copy>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..data.len() {
        let offset: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[offset]);
        for axis in (0..idx.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < out_shape[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    out
}

/// Reorders `data` from layout `from` to layout `to`; returns the new shape.
pub fn relayout<T: Copy>(data: &[T], shape: &[usize], from: Layout, to: Layout) -> Option<(Vec<T>, Vec<usize>)> {
    if from == to {
        return Some((data.to_vec(), shape.to_vec()));
    }
    let perm = perm_between(from, to)?;
    let out_shape = perm.iter().map(|&p| shape[p]).collect();
    Some((transpose(data, shape, &perm), out_shape))
}

/// Geometry of a sliding window over an NHWC tensor.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Window {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Source index in NHWC data for output pixel `(b, oy, ox)`, kernel tap
    /// `(ky, kx)` and channel `ci`, or `None` inside the padding.
    #[inline]
    fn source(&self, b: usize, oy: usize, ox: usize, ky: usize, kx: usize, ci: usize) -> Option<usize> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        if y >= self.h || x >= self.w {
            return None;
        }
        Some(((b * self.h + y) * self.w + x) * self.c + ci)
    }
}

/// Patch matrix of shape `(n*oh*ow, k*k*c)`; columns ordered (ky, kx, c).
pub fn im2col<T: Copy>(data: &[T], win: &Window, zero: T) -> Vec<T> {
    let (oh, ow) = (win.out_h(), win.out_w());
    let cols = win.kernel * win.kernel * win.c;
    let mut out = Vec::with_capacity(win.n * oh * ow * cols);
    for b in 0..win.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..win.kernel {
                    for kx in 0..win.kernel {
                        for ci in 0..win.c {
                            out.push(win.source(b, oy, ox, ky, kx, ci).map_or(zero, |i| data[i]));
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(rows, k) x (k, n)` with products summed in ascending k.
pub fn matmul<T: Copy, A: Copy>(x: &[T], w: &[T], rows: usize, k: usize, n: usize, zero: A, mac: impl Fn(A, T, T) -> A) -> Vec<A> {
    let mut out = vec![zero; rows * n];
    for r in 0..rows {
        let xr = &x[r * k..(r + 1) * k];
        for (j, acc_slot) in out[r * n..(r + 1) * n].iter_mut().enumerate() {
            let mut acc = zero;
            for (i, &xv) in xr.iter().enumerate() {
                acc = mac(acc, xv, w[i * n + j]);
            }
            *acc_slot = acc;
        }
    }
    out
}

/// Direct convolution of NHWC data with OIHW weights, NHWC output.
/// Taps are summed in (ky, kx, c) order.
pub fn conv_direct<T: Copy, A: Copy>(data: &[T], weights: &[T], win: &Window, filters: usize, zero: A, mac: impl Fn(A, T, T) -> A) -> Vec<A> {
    let (oh, ow) = (win.out_h(), win.out_w());
    let k = win.kernel;
    let mut out = Vec::with_capacity(win.n * oh * ow * filters);
    for b in 0..win.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..filters {
                    let mut acc = zero;
                    for ky in 0..k {
                        for kx in 0..k {
                            for ci in 0..win.c {
                                if let Some(i) = win.source(b, oy, ox, ky, kx, ci) {
                                    let wv = weights[((f * win.c + ci) * k + ky) * k + kx];
                                    acc = mac(acc, data[i], wv);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Max pooling of NHWC data without padding.
pub fn max_pool<T: Copy + PartialOrd>(data: &[T], win: &Window) -> Vec<T> {
    let (oh, ow) = (win.out_h(), win.out_w());
    let mut out = Vec::with_capacity(win.n * oh * ow * win.c);
    for b in 0..win.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ci in 0..win.c {
                    let mut best: Option<T> = None;
                    for ky in 0..win.kernel {
                        for kx in 0..win.kernel {
                            let v = data[win.source(b, oy, ox, ky, kx, ci).expect("pool without padding")];
                            if best.is_none_or(|m| v > m) {
                                best = Some(v);
                            }
                        }
                    }
                    out.push(best.expect("non-empty window"));
                }
            }
        }
    }
    out
}

/// Sums NHWC data over height and width, ascending pixel order.
pub fn spatial_sum<T: Copy, A: Copy>(data: &[T], n: usize, hw: usize, c: usize, zero: A, add: impl Fn(A, T) -> A) -> Vec<A> {
    let mut out = vec![zero; n * c];
    for b in 0..n {
        for p in 0..hw {
            for ci in 0..c {
                let slot = &mut out[b * c + ci];
                *slot = add(*slot, data[(b * hw + p) * c + ci]);
            }
        }
    }
    out
}

/// Groups elements by the kept axes: returns, for each output element, the
/// input flat indices being reduced, in ascending order.
pub fn reduction_groups(shape: &[usize], axes: &[usize]) -> Vec<Vec<usize>> {
    let st = strides(shape);
    let kept: Vec<usize> = (0..shape.len()).filter(|a| !axes.contains(a)).collect();
    let out_len: usize = kept.iter().map(|&a| shape[a]).product();
    let mut groups = vec![Vec::new(); out_len];
    let total: usize = shape.iter().product();
    for flat in 0..total {
        let mut out_idx = 0;
        for &a in &kept {
            out_idx = out_idx * shape[a] + (flat / st[a]) % shape[a];
        }
        groups[out_idx].push(flat);
    }
    groups
}

/// Index into a broadcast operand for flat position `i` of a tensor with the
/// given shape and channel axis.
#[derive(Debug, Clone, Copy)]
pub enum Broadcast {
    Scalar,
    /// Channel stride and channel count.
    PerChannel(usize, usize),
    Full,
}

impl Broadcast {
    pub fn new(shape: &[usize], channel_axis: usize, operand_len: usize) -> Self {
        let total: usize = shape.iter().product();
        if operand_len == 1 {
            Broadcast::Scalar
        } else if operand_len == total {
            Broadcast::Full
        } else {
            Broadcast::PerChannel(strides(shape)[channel_axis], shape[channel_axis])
        }
    }

    #[inline]
    pub fn index(&self, i: usize) -> usize {
        match *self {
            Broadcast::Scalar => 0,
            Broadcast::PerChannel(stride, count) => (i / stride) % count,
            Broadcast::Full => i,
        }
    }
}

/// Number of thresholds `t` with `t <= x`, i.e. `|{k : x >= T_k}|`.
#[inline]
pub fn threshold_count<T: PartialOrd>(row: &[T], x: &T) -> usize {
    row.partition_point(|t| t <= x)
}

/// FNV-1a over a stream of 64-bit words.
pub fn checksum(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
