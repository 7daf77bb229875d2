//! Batched 3D convolution kernels on raw row-major buffers.
//!
//! Layouts: activations `(N, C, D, H, W)`; convolution weights
//! `(C_out, C_in, kD, kH, kW)`; transposed-convolution weights
//! `(C_in, C_out, kD, kH, kW)`. Both are lowered to GEMM via im2col.

use crate::element::Element;
use crate::parallel::parallel_enabled;
use rayon::prelude::*;

/// Kernel, stride and padding per spatial axis `(d, h, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    pub fn cubic(kernel: usize, stride: usize, padding: usize) -> Self {
        Self::new([kernel; 3], [stride; 3], [padding; 3])
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// `floor((n + 2p - k) / s) + 1` per axis; `None` when any axis is empty.
    pub fn conv_output(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.stride[a] == 0 || padded < self.kernel[a] || input[a] == 0 {
                return None;
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }

    /// `(n - 1) * s - 2p + k` per axis; `None` when any axis is non-positive.
    pub fn tconv_output(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            if input[a] == 0 {
                return None;
            }
            let full = (input[a] - 1) * self.stride[a] + self.kernel[a];
            if full <= 2 * self.padding[a] {
                return None;
            }
            out[a] = full - 2 * self.padding[a];
        }
        Some(out)
    }
}

fn volume(d: [usize; 3]) -> usize {
    d[0] * d[1] * d[2]
}

/// Unfold one sample `(C, D, H, W)` into `(C * kvol, Do * Ho * Wo)`.
pub fn im2col<T: Element>(
    input: &[T],
    channels: usize,
    in_dims: [usize; 3],
    geom: &ConvGeometry,
    out_dims: [usize; 3],
    col: &mut [T],
) {
    let [kd_n, kh_n, kw_n] = geom.kernel;
    let [sd, sh, sw] = geom.stride;
    let [pd, ph, pw] = geom.padding;
    let [id_n, ih_n, iw_n] = in_dims;
    let [od_n, oh_n, ow_n] = out_dims;
    let plane = oh_n * ow_n;
    let cols = od_n * plane;
    let in_vol = volume(in_dims);
    debug_assert_eq!(col.len(), channels * geom.kernel_volume() * cols);
    let mut row = 0;
    for c in 0..channels {
        let src = &input[c * in_vol..(c + 1) * in_vol];
        for kd in 0..kd_n {
            for kh in 0..kh_n {
                for kw in 0..kw_n {
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for od in 0..od_n {
                        let id = (od * sd + kd) as isize - pd as isize;
                        let seg = &mut dst[od * plane..(od + 1) * plane];
                        if id < 0 || id >= id_n as isize {
                            seg.fill(T::ZERO);
                            continue;
                        }
                        let base_d = id as usize * ih_n * iw_n;
                        for oh in 0..oh_n {
                            let ih = (oh * sh + kh) as isize - ph as isize;
                            let line = &mut seg[oh * ow_n..(oh + 1) * ow_n];
                            if ih < 0 || ih >= ih_n as isize {
                                line.fill(T::ZERO);
                                continue;
                            }
                            let base = base_d + ih as usize * iw_n;
                            for (ow, slot) in line.iter_mut().enumerate() {
                                let iw = (ow * sw + kw) as isize - pw as isize;
                                *slot = if iw < 0 || iw >= iw_n as isize {
                                    T::ZERO
                                } else {
                                    src[base + iw as usize]
                                };
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `(C, D, H, W)`.
pub fn col2im<T: Element>(
    col: &[T],
    channels: usize,
    in_dims: [usize; 3],
    geom: &ConvGeometry,
    out_dims: [usize; 3],
    input: &mut [T],
) {
    let [kd_n, kh_n, kw_n] = geom.kernel;
    let [sd, sh, sw] = geom.stride;
    let [pd, ph, pw] = geom.padding;
    let [id_n, ih_n, iw_n] = in_dims;
    let [od_n, oh_n, ow_n] = out_dims;
    let plane = oh_n * ow_n;
    let cols = od_n * plane;
    let in_vol = volume(in_dims);
    let mut row = 0;
    for c in 0..channels {
        let dst = &mut input[c * in_vol..(c + 1) * in_vol];
        for kd in 0..kd_n {
            for kh in 0..kh_n {
                for kw in 0..kw_n {
                    let src = &col[row * cols..(row + 1) * cols];
                    for od in 0..od_n {
                        let id = (od * sd + kd) as isize - pd as isize;
                        if id < 0 || id >= id_n as isize {
                            continue;
                        }
                        let base_d = id as usize * ih_n * iw_n;
                        for oh in 0..oh_n {
                            let ih = (oh * sh + kh) as isize - ph as isize;
                            if ih < 0 || ih >= ih_n as isize {
                                continue;
                            }
                            let base = base_d + ih as usize * iw_n;
                            let line = &src[od * plane + oh * ow_n..od * plane + (oh + 1) * ow_n];
                            for (ow, &v) in line.iter().enumerate() {
                                let iw = (ow * sw + kw) as isize - pw as isize;
                                if iw >= 0 && iw < iw_n as isize {
                                    dst[base + iw as usize] += v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Shape bundle for a batched convolution: the "fine" side is the
/// convolution input (transposed-convolution output), the "coarse" side
/// the convolution output (transposed-convolution input).
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub batch: usize,
    pub fine_channels: usize,
    pub fine_dims: [usize; 3],
    pub coarse_channels: usize,
    pub coarse_dims: [usize; 3],
    pub geom: ConvGeometry,
}

impl ConvShape {
    fn fine_len(&self) -> usize {
        self.fine_channels * volume(self.fine_dims)
    }
    fn coarse_len(&self) -> usize {
        self.coarse_channels * volume(self.coarse_dims)
    }
    fn col_rows(&self) -> usize {
        self.fine_channels * self.geom.kernel_volume()
    }
    fn col_cols(&self) -> usize {
        volume(self.coarse_dims)
    }
    fn weight_len(&self) -> usize {
        self.coarse_channels * self.col_rows()
    }
}

fn for_each_sample<T: Element, F>(out: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if parallel_enabled() && out.len() > chunk {
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Accumulate per-sample weight-gradient contributions into `acc`.
fn reduce_samples<T: Element, F>(batch: usize, acc: &mut [T], f: F)
where
    F: Fn(usize, &mut [T], T) + Sync + Send,
{
    if parallel_enabled() && batch > 1 {
        let partials: Vec<Vec<T>> = (0..batch)
            .into_par_iter()
            .map(|i| {
                let mut p = vec![T::ZERO; acc.len()];
                f(i, &mut p, T::ZERO);
                p
            })
            .collect();
        for p in partials {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
    } else {
        for i in 0..batch {
            f(i, acc, T::ONE);
        }
    }
}

fn add_bias<T: Element>(out: &mut [T], bias: &[T], spatial: usize) {
    for (c, b) in bias.iter().enumerate() {
        for v in &mut out[c * spatial..(c + 1) * spatial] {
            *v += *b;
        }
    }
}

fn bias_grad<T: Element>(dy: &[T], batch: usize, channels: usize, spatial: usize) -> Vec<T> {
    let mut db = vec![0.0f64; channels];
    for n in 0..batch {
        for (c, acc) in db.iter_mut().enumerate() {
            let off = (n * channels + c) * spatial;
            *acc += dy[off..off + spatial].iter().map(|v| v.to_f64()).sum::<f64>();
        }
    }
    db.into_iter().map(T::from_f64).collect()
}

/// Forward convolution: fine `(N, Ci, ...)` -> coarse `(N, Co, ...)`.
pub fn conv3d_forward<T: Element>(
    s: &ConvShape,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let (rows, cols) = (s.col_rows(), s.col_cols());
    let mut out = vec![T::ZERO; s.batch * s.coarse_len()];
    for_each_sample(&mut out, s.coarse_len(), |n, o| {
        let x = &input[n * s.fine_len()..(n + 1) * s.fine_len()];
        let mut col = vec![T::ZERO; rows * cols];
        im2col(x, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, &mut col);
        T::gemm(s.coarse_channels, rows, cols, T::ONE, weight, false, &col, false, T::ZERO, o);
        if let Some(b) = bias {
            add_bias(o, b, cols);
        }
    });
    out
}

/// Gradients of [`conv3d_forward`]: returns `(d_input, d_weight, d_bias)`.
pub fn conv3d_backward<T: Element>(
    s: &ConvShape,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let (rows, cols) = (s.col_rows(), s.col_cols());
    let dx = need_input.then(|| {
        let mut dx = vec![T::ZERO; s.batch * s.fine_len()];
        for_each_sample(&mut dx, s.fine_len(), |n, d| {
            let dy = &grad_out[n * s.coarse_len()..(n + 1) * s.coarse_len()];
            let mut col = vec![T::ZERO; rows * cols];
            T::gemm(rows, s.coarse_channels, cols, T::ONE, weight, true, dy, false, T::ZERO, &mut col);
            col2im(&col, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, d);
        });
        dx
    });
    let dw = need_weight.then(|| {
        let mut dw = vec![T::ZERO; s.weight_len()];
        reduce_samples(s.batch, &mut dw, |n, acc, beta| {
            let x = &input[n * s.fine_len()..(n + 1) * s.fine_len()];
            let dy = &grad_out[n * s.coarse_len()..(n + 1) * s.coarse_len()];
            let mut col = vec![T::ZERO; rows * cols];
            im2col(x, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, &mut col);
            T::gemm(s.coarse_channels, cols, rows, T::ONE, dy, false, &col, true, beta, acc);
        });
        dw
    });
    let db = need_bias.then(|| bias_grad(grad_out, s.batch, s.coarse_channels, cols));
    (dx, dw, db)
}

/// Transposed convolution: coarse `(N, Ci, ...)` -> fine `(N, Co, ...)`,
/// with weight `(Ci, Co, k...)`. Here `s.coarse_channels` is `Ci` and
/// `s.fine_channels` is `Co`.
pub fn tconv3d_forward<T: Element>(
    s: &ConvShape,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let (rows, cols) = (s.col_rows(), s.col_cols());
    let mut out = vec![T::ZERO; s.batch * s.fine_len()];
    let fine_vol = volume(s.fine_dims);
    for_each_sample(&mut out, s.fine_len(), |n, o| {
        let x = &input[n * s.coarse_len()..(n + 1) * s.coarse_len()];
        let mut col = vec![T::ZERO; rows * cols];
        T::gemm(rows, s.coarse_channels, cols, T::ONE, weight, true, x, false, T::ZERO, &mut col);
        col2im(&col, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, o);
        if let Some(b) = bias {
            add_bias(o, b, fine_vol);
        }
    });
    out
}

/// Gradients of [`tconv3d_forward`]: returns `(d_input, d_weight, d_bias)`.
pub fn tconv3d_backward<T: Element>(
    s: &ConvShape,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let (rows, cols) = (s.col_rows(), s.col_cols());
    let dx = need_input.then(|| {
        let mut dx = vec![T::ZERO; s.batch * s.coarse_len()];
        for_each_sample(&mut dx, s.coarse_len(), |n, d| {
            let dy = &grad_out[n * s.fine_len()..(n + 1) * s.fine_len()];
            let mut col = vec![T::ZERO; rows * cols];
            im2col(dy, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, &mut col);
            T::gemm(s.coarse_channels, rows, cols, T::ONE, weight, false, &col, false, T::ZERO, d);
        });
        dx
    });
    let dw = need_weight.then(|| {
        let mut dw = vec![T::ZERO; s.weight_len()];
        reduce_samples(s.batch, &mut dw, |n, acc, beta| {
            let x = &input[n * s.coarse_len()..(n + 1) * s.coarse_len()];
            let dy = &grad_out[n * s.fine_len()..(n + 1) * s.fine_len()];
            let mut col = vec![T::ZERO; rows * cols];
            im2col(dy, s.fine_channels, s.fine_dims, &s.geom, s.coarse_dims, &mut col);
            T::gemm(s.coarse_channels, cols, rows, T::ONE, x, false, &col, true, beta, acc);
        });
        dw
    });
    let db = need_bias.then(|| bias_grad(grad_out, s.batch, s.fine_channels, volume(s.fine_dims)));
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extents() {
        let g = ConvGeometry::cubic(3, 2, 1);
        assert_eq!(g.conv_output([48, 56, 48]), Some([24, 28, 24]));
        let t = ConvGeometry::new([4, 3, 4], [2; 3], [1; 3]);
        assert_eq!(t.tconv_output([3, 4, 3]), Some([6, 7, 6]));
        let t = ConvGeometry::new([3, 4, 3], [2; 3], [1; 3]);
        assert_eq!(t.tconv_output([2, 2, 2]), Some([3, 4, 3]));
        assert_eq!(ConvGeometry::cubic(5, 1, 0).conv_output([3, 3, 3]), None);
        assert_eq!(ConvGeometry::cubic(1, 1, 1).tconv_output([1, 1, 1]), None);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeometry::new([3, 2, 3], [2, 1, 2], [1, 0, 1]);
        let dims = [4, 3, 5];
        let out = g.conv_output(dims).unwrap();
        let ch = 2;
        let x: Vec<f64> = (0..ch * volume(dims)).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let ncol = ch * g.kernel_volume() * volume(out);
        let c: Vec<f64> = (0..ncol).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        let mut col = vec![0.0; ncol];
        im2col(&x, ch, dims, &g, out, &mut col);
        let mut back = vec![0.0; x.len()];
        col2im(&c, ch, dims, &g, out, &mut back);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
