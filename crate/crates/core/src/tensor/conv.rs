//! Stride-1 zero-padded 2-D convolution via im2col + GEMM.
//!
//! The forward op and its two adjoints (w.r.t. input and weight) form a closed
//! set: each one's derivative is expressed through the other two, so the
//! convolution can be differentiated any number of times.

use super::graph::Backward;
use super::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geom {
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    pad: usize,
}

impl Geom {
    fn ho(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }
    fn wo(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }
    fn krows(&self) -> usize {
        self.ci * self.kh * self.kw
    }
    fn hw_out(&self) -> usize {
        self.ho() * self.wo()
    }
    fn x_shape(&self) -> Vec<usize> {
        vec![self.b, self.ci, self.h, self.w]
    }
    fn w_shape(&self) -> Vec<usize> {
        vec![self.co, self.ci, self.kh, self.kw]
    }
    fn y_shape(&self) -> Vec<usize> {
        vec![self.b, self.co, self.ho(), self.wo()]
    }
}

/// Images per im2col chunk: keeps the column buffer near 16M elements while
/// batching tiny spatial maps into one wide GEMM.
fn chunk_len(g: &Geom) -> usize {
    let per = g.krows() * g.hw_out();
    (16 * 1024 * 1024 / per.max(1)).clamp(1, g.b)
}

/// Column matrix `[krows, nimg * hw]` for images `b0..b0+nimg`.
fn im2col<T: Scalar>(x: &[T], g: &Geom, b0: usize, nimg: usize, cols: &mut [T]) {
    let (ho, wo) = (g.ho(), g.wo());
    let hw = ho * wo;
    let width = nimg * hw;
    let pad = g.pad as isize;
    for c in 0..g.ci {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                for i in 0..nimg {
                    let img = &x[((b0 + i) * g.ci + c) * g.h * g.w..][..g.h * g.w];
                    let dst = &mut cols[row * width + i * hw..][..hw];
                    for oy in 0..ho {
                        let iy = oy as isize + ky as isize - pad;
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= g.h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let srow = &img[iy as usize * g.w..][..g.w];
                        let off = kx as isize - pad;
                        let lo = (-off).max(0) as usize;
                        let hi = ((g.w as isize - off).min(wo as isize)).max(lo as isize) as usize;
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        if hi > lo {
                            let s0 = (lo as isize + off) as usize;
                            drow[lo..hi].copy_from_slice(&srow[s0..s0 + hi - lo]);
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates a column matrix back onto images (adjoint of [`im2col`]).
fn col2im<T: Scalar>(cols: &[T], g: &Geom, b0: usize, nimg: usize, x: &mut [T]) {
    let (ho, wo) = (g.ho(), g.wo());
    let hw = ho * wo;
    let width = nimg * hw;
    let pad = g.pad as isize;
    for c in 0..g.ci {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                for i in 0..nimg {
                    let img = &mut x[((b0 + i) * g.ci + c) * g.h * g.w..][..g.h * g.w];
                    let src = &cols[row * width + i * hw..][..hw];
                    for oy in 0..ho {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let off = kx as isize - pad;
                        let lo = (-off).max(0) as usize;
                        let hi = ((g.w as isize - off).min(wo as isize)).max(lo as isize) as usize;
                        if hi <= lo {
                            continue;
                        }
                        let s0 = (lo as isize + off) as usize;
                        let drow = &mut img[iy as usize * g.w + s0..][..hi - lo];
                        for (d, &v) in drow.iter_mut().zip(&src[oy * wo + lo..oy * wo + hi]) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(x: &[T], w: &[T], g: &Geom) -> Vec<T> {
    let hw = g.hw_out();
    let k = g.krows();
    let mut y = vec![T::zero(); g.b * g.co * hw];
    let chunk = chunk_len(g);
    let mut cols = vec![T::zero(); k * chunk * hw];
    let mut b0 = 0;
    while b0 < g.b {
        let n = chunk.min(g.b - b0);
        im2col(x, g, b0, n, &mut cols);
        // y[b0+i, co, s] = sum_r w[co, r] * cols[r, i*hw + s]
        for i in 0..n {
            unsafe {
                T::gemm(
                    g.co,
                    k,
                    hw,
                    T::one(),
                    w.as_ptr(),
                    k as isize,
                    1,
                    cols.as_ptr().add(i * hw),
                    (n * hw) as isize,
                    1,
                    T::zero(),
                    y.as_mut_ptr().add((b0 + i) * g.co * hw),
                    hw as isize,
                    1,
                );
            }
        }
        b0 += n;
    }
    y
}

fn conv_input_grad<T: Scalar>(gy: &[T], w: &[T], g: &Geom) -> Vec<T> {
    let hw = g.hw_out();
    let k = g.krows();
    let mut gx = vec![T::zero(); g.b * g.ci * g.h * g.w];
    let chunk = chunk_len(g);
    let mut cols = vec![T::zero(); k * chunk * hw];
    let mut b0 = 0;
    while b0 < g.b {
        let n = chunk.min(g.b - b0);
        for i in 0..n {
            // cols[r, i*hw + s] = sum_co w[co, r] * gy[b0+i, co, s]
            unsafe {
                T::gemm(
                    k,
                    g.co,
                    hw,
                    T::one(),
                    w.as_ptr(),
                    1,
                    k as isize,
                    gy.as_ptr().add((b0 + i) * g.co * hw),
                    hw as isize,
                    1,
                    T::zero(),
                    cols.as_mut_ptr().add(i * hw),
                    (n * hw) as isize,
                    1,
                );
            }
        }
        col2im(&cols[..k * n * hw], g, b0, n, &mut gx);
        b0 += n;
    }
    gx
}

fn conv_weight_grad<T: Scalar>(x: &[T], gy: &[T], g: &Geom) -> Vec<T> {
    let hw = g.hw_out();
    let k = g.krows();
    let mut gw = vec![T::zero(); g.co * k];
    let chunk = chunk_len(g);
    let mut cols = vec![T::zero(); k * chunk * hw];
    let mut b0 = 0;
    while b0 < g.b {
        let n = chunk.min(g.b - b0);
        im2col(x, g, b0, n, &mut cols);
        for i in 0..n {
            // gw[co, r] += sum_s gy[b0+i, co, s] * cols[r, i*hw + s]
            unsafe {
                T::gemm(
                    g.co,
                    hw,
                    k,
                    T::one(),
                    gy.as_ptr().add((b0 + i) * g.co * hw),
                    hw as isize,
                    1,
                    cols.as_ptr().add(i * hw),
                    1,
                    (n * hw) as isize,
                    T::one(),
                    gw.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
        }
        b0 += n;
    }
    gw
}

struct Conv {
    g: Geom,
}

impl<T: Scalar> Backward<T> for Conv {
    fn name(&self) -> &'static str {
        "conv2d"
    }
    fn backward(&self, p: &[Tensor<T>], gy: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (&p[0], &p[1]);
        vec![
            n[0].then(|| conv2d_input_grad(gy, w, self.g)),
            n[1].then(|| conv2d_weight_grad(x, gy, self.g)),
        ]
    }
}

/// `x = A(w)ᵀ gy`; parents `[gy, w]`.
struct ConvInputGrad {
    g: Geom,
}

impl<T: Scalar> Backward<T> for ConvInputGrad {
    fn name(&self) -> &'static str {
        "conv2d_input_grad"
    }
    fn backward(&self, p: &[Tensor<T>], gx: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (gy, w) = (&p[0], &p[1]);
        vec![
            n[0].then(|| gx.conv2d_geom(w, self.g)),
            n[1].then(|| conv2d_weight_grad(gx, gy, self.g)),
        ]
    }
}

/// `gw = B(x, gy)`; parents `[x, gy]`.
struct ConvWeightGrad {
    g: Geom,
}

impl<T: Scalar> Backward<T> for ConvWeightGrad {
    fn name(&self) -> &'static str {
        "conv2d_weight_grad"
    }
    fn backward(&self, p: &[Tensor<T>], ggw: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (x, gy) = (&p[0], &p[1]);
        vec![
            n[0].then(|| conv2d_input_grad(gy, ggw, self.g)),
            n[1].then(|| x.conv2d_geom(ggw, self.g)),
        ]
    }
}

fn conv2d_input_grad<T: Scalar>(gy: &Tensor<T>, w: &Tensor<T>, g: Geom) -> Tensor<T> {
    let data = conv_input_grad(gy.data(), w.data(), &g);
    Tensor::from_op(data, g.x_shape(), vec![gy.clone(), w.clone()], ConvInputGrad { g })
}

fn conv2d_weight_grad<T: Scalar>(x: &Tensor<T>, gy: &Tensor<T>, g: Geom) -> Tensor<T> {
    let data = conv_weight_grad(x.data(), gy.data(), &g);
    Tensor::from_op(data, g.w_shape(), vec![x.clone(), gy.clone()], ConvWeightGrad { g })
}

impl<T: Scalar> Tensor<T> {
    /// Cross-correlation of `[B, Ci, H, W]` with `[Co, Ci, kh, kw]`, stride 1,
    /// `pad` zeros on every side.
    pub fn conv2d(&self, w: &Tensor<T>, pad: usize) -> Tensor<T> {
        let xs = self.shape();
        let ws = w.shape();
        assert!(xs.len() == 4 && ws.len() == 4, "conv2d expects 4-D input and weight");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch {xs:?} vs {ws:?}");
        assert!(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[3], "kernel larger than padded input");
        let g = Geom { b: xs[0], ci: xs[1], h: xs[2], w: xs[3], co: ws[0], kh: ws[2], kw: ws[3], pad };
        self.conv2d_geom(w, g)
    }

    fn conv2d_geom(&self, w: &Tensor<T>, g: Geom) -> Tensor<T> {
        let data = conv_forward(self.data(), w.data(), &g);
        Tensor::from_op(data, g.y_shape(), vec![self.clone(), w.clone()], Conv { g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], w: &[f64], g: &Geom) -> Vec<f64> {
        let (ho, wo) = (g.ho(), g.wo());
        let mut y = vec![0.0; g.b * g.co * ho * wo];
        for b in 0..g.b {
            for co in 0..g.co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..g.ci {
                            for ky in 0..g.kh {
                                for kx in 0..g.kw {
                                    let iy = oy as isize + ky as isize - g.pad as isize;
                                    let ix = ox as isize + kx as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += x[((b * g.ci + ci) * g.h + iy as usize) * g.w + ix as usize]
                                        * w[((co * g.ci + ci) * g.kh + ky) * g.kw + kx];
                                }
                            }
                        }
                        y[((b * g.co + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn seq(n: usize, a: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 * a).sin() * 1.3).round() / 2.0 + 0.25 * (i % 3) as f64).collect()
    }

    #[test]
    fn matches_direct_loops() {
        for &(b, ci, h, w, co, k, pad) in &[(2, 3, 5, 4, 2, 3, 1), (1, 2, 3, 3, 4, 1, 0), (3, 1, 6, 2, 2, 3, 1), (2, 2, 2, 2, 3, 3, 1)] {
            let g = Geom { b, ci, h, w, co, kh: k, kw: k, pad };
            let x = seq(b * ci * h * w, 0.7);
            let wt = seq(co * ci * k * k, 1.9);
            let got = conv_forward(&x, &wt, &g);
            assert_eq!(got, naive(&x, &wt, &g));
        }
    }

    #[test]
    fn adjoint_identities() {
        // <A(w) x, gy> == <x, A(w)^T gy> == <w, B(x, gy)>
        let g = Geom { b: 2, ci: 3, h: 5, w: 6, co: 4, kh: 3, kw: 3, pad: 1 };
        let x = seq(g.b * g.ci * g.h * g.w, 0.37);
        let w = seq(g.co * g.krows(), 1.1);
        let gy = seq(g.b * g.co * g.hw_out(), 2.3);
        let y = conv_forward(&x, &w, &g);
        let gx = conv_input_grad(&gy, &w, &g);
        let gw = conv_weight_grad(&x, &gy, &g);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let l = dot(&y, &gy);
        assert!((l - dot(&x, &gx)).abs() < 1e-10 * l.abs().max(1.0));
        assert!((l - dot(&w, &gw)).abs() < 1e-10 * l.abs().max(1.0));
    }
}
