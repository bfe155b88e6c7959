//! Batched kernels for each layer kind.
//!
//! Convolutions go through im2col: a sample's receptive fields are laid out
//! as a `(C_in*k*k) x (H_out*W_out)` matrix so that both passes become
//! row-wise multiply-adds. Every reduction runs in a fixed order (samples in
//! batch order, dot products in four fixed lanes), so results are
//! bit-reproducible and identical whether a model runs whole or split.

/// Convolution geometry for one layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.co * self.cols()
    }

    /// Calls `f(row, col, input_index)` for every in-bounds receptive-field
    /// entry.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (k, s) = (self.k, self.stride);
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    for oy in 0..self.ho {
                        let iy = (oy * s + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let base = (ci * self.h + iy as usize) * self.w;
                        for ox in 0..self.wo {
                            let ix = (ox * s + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(r, oy * self.wo + ox, base + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        col.fill(0.0);
        let n = self.cols();
        self.for_each_tap(|r, j, i| col[r * n + j] = x[i]);
    }

    fn col2im_add(&self, dcol: &[f64], dx: &mut [f64]) {
        let n = self.cols();
        self.for_each_tap(|r, j, i| dx[i] += dcol[r * n + j]);
    }
}

/// Dot product with four fixed accumulation lanes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`.
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn conv_forward(g: &ConvGeom, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let batch = x.len() / g.in_len();
    let (rows, cols) = (g.rows(), g.cols());
    let mut col = vec![0.0; rows * cols];
    let mut out = vec![0.0; batch * g.out_len()];
    for b in 0..batch {
        g.im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], &mut col);
        let y = &mut out[b * g.out_len()..(b + 1) * g.out_len()];
        for co in 0..g.co {
            let yrow = &mut y[co * cols..(co + 1) * cols];
            yrow.fill(bias[co]);
            let wrow = &weight[co * rows..(co + 1) * rows];
            for r in 0..rows {
                axpy(yrow, wrow[r], &col[r * cols..(r + 1) * cols]);
            }
        }
    }
    out
}

/// Returns `(d weight, d bias, d input)`.
pub(crate) fn conv_backward(g: &ConvGeom, x: &[f64], dy: &[f64], weight: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let batch = x.len() / g.in_len();
    let (rows, cols) = (g.rows(), g.cols());
    let mut col = vec![0.0; rows * cols];
    let mut dcol = vec![0.0; rows * cols];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; g.co];
    let mut dx = vec![0.0; x.len()];
    for b in 0..batch {
        g.im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], &mut col);
        let dyb = &dy[b * g.out_len()..(b + 1) * g.out_len()];
        dcol.fill(0.0);
        for co in 0..g.co {
            let drow = &dyb[co * cols..(co + 1) * cols];
            db[co] += drow.iter().sum::<f64>();
            let wrow = &weight[co * rows..(co + 1) * rows];
            let dwrow = &mut dw[co * rows..(co + 1) * rows];
            for r in 0..rows {
                let crow = &col[r * cols..(r + 1) * cols];
                dwrow[r] += dot(drow, crow);
                axpy(&mut dcol[r * cols..(r + 1) * cols], wrow[r], drow);
            }
        }
        g.col2im_add(&dcol, &mut dx[b * g.in_len()..(b + 1) * g.in_len()]);
    }
    (dw, db, dx)
}

pub(crate) fn dense_forward(x: &[f64], fan_in: usize, fan_out: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let batch = x.len() / fan_in;
    let mut out = vec![0.0; batch * fan_out];
    for b in 0..batch {
        let xb = &x[b * fan_in..(b + 1) * fan_in];
        for o in 0..fan_out {
            out[b * fan_out + o] = bias[o] + dot(&weight[o * fan_in..(o + 1) * fan_in], xb);
        }
    }
    out
}

/// Returns `(d weight, d bias, d input)`.
pub(crate) fn dense_backward(
    x: &[f64],
    dy: &[f64],
    fan_in: usize,
    fan_out: usize,
    weight: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let batch = x.len() / fan_in;
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; fan_out];
    let mut dx = vec![0.0; x.len()];
    for b in 0..batch {
        let xb = &x[b * fan_in..(b + 1) * fan_in];
        let dxb = &mut dx[b * fan_in..(b + 1) * fan_in];
        for o in 0..fan_out {
            let d = dy[b * fan_out + o];
            db[o] += d;
            if d != 0.0 {
                axpy(&mut dw[o * fan_in..(o + 1) * fan_in], d, xb);
                axpy(dxb, d, &weight[o * fan_in..(o + 1) * fan_in]);
            }
        }
    }
    (dw, db, dx)
}

pub(crate) fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub(crate) fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
}

/// Max pooling over `[batch * channels]` planes of `h x w`. Returns the
/// output and, per output element, the input index of the winner (the
/// first maximum in row-major window order).
pub(crate) fn maxpool_forward(x: &[f64], h: usize, w: usize, size: usize) -> (Vec<f64>, Vec<u32>) {
    let planes = x.len() / (h * w);
    let (ho, wo) = (h / size, w / size);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(input_len: usize, argmax: &[u32], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&i, &d) in argmax.iter().zip(dy) {
        dx[i as usize] += d;
    }
    dx
}
