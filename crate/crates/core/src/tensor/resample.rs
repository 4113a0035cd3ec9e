//! 2×2 max pooling and ×2 bilinear upsampling on `[B, C, H, W]` tensors.

use std::rc::Rc;

use super::graph::{numel, Backward};
use super::{Scalar, Tensor};

/// Picks `x[idx[i]]` for every output position.
struct Gather {
    idx: Rc<Vec<u32>>,
    src_shape: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Gather {
    fn name(&self) -> &'static str {
        "gather"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(scatter_add(g, &self.idx, &self.src_shape))]
    }
}

struct ScatterAdd {
    idx: Rc<Vec<u32>>,
    src_shape: Vec<usize>,
}

impl<T: Scalar> Backward<T> for ScatterAdd {
    fn name(&self) -> &'static str {
        "scatter_add"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(gather(g, &self.idx, &self.src_shape))]
    }
}

fn gather<T: Scalar>(x: &Tensor<T>, idx: &Rc<Vec<u32>>, out_shape: &[usize]) -> Tensor<T> {
    let src = x.data();
    let data = idx.iter().map(|&i| src[i as usize]).collect();
    Tensor::from_op(
        data,
        out_shape.to_vec(),
        vec![x.clone()],
        Gather { idx: Rc::clone(idx), src_shape: x.shape().to_vec() },
    )
}

fn scatter_add<T: Scalar>(g: &Tensor<T>, idx: &Rc<Vec<u32>>, dst_shape: &[usize]) -> Tensor<T> {
    let mut data = vec![T::zero(); numel(dst_shape)];
    for (&i, &v) in idx.iter().zip(g.data()) {
        data[i as usize] = data[i as usize] + v;
    }
    Tensor::from_op(
        data,
        dst_shape.to_vec(),
        vec![g.clone()],
        ScatterAdd { idx: Rc::clone(idx), src_shape: g.shape().to_vec() },
    )
}

/// Linear ×2 upsampling along one axis with aligned corners:
/// output `o` samples input position `o (n-1) / (2n-1)`.
fn lerp_table(n: usize) -> Vec<(usize, usize, f64)> {
    let m = 2 * n;
    (0..m)
        .map(|o| {
            if n == 1 {
                return (0, 0, 0.0);
            }
            let pos = o as f64 * (n - 1) as f64 / (m - 1) as f64;
            let i0 = (pos.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

fn upsample_kernel<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = lerp_table(h);
    let tx = lerp_table(w);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * h2 * w2];
    let mut rowbuf = vec![T::zero(); h * w2];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for iy in 0..h {
            for (ox, &(i0, i1, f)) in tx.iter().enumerate() {
                let f = T::c(f);
                rowbuf[iy * w2 + ox] = src[iy * w + i0] * (T::one() - f) + src[iy * w + i1] * f;
            }
        }
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for (oy, &(i0, i1, f)) in ty.iter().enumerate() {
            let f = T::c(f);
            for ox in 0..w2 {
                dst[oy * w2 + ox] = rowbuf[i0 * w2 + ox] * (T::one() - f) + rowbuf[i1 * w2 + ox] * f;
            }
        }
    }
    out
}

fn upsample_adjoint_kernel<T: Scalar>(g: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = lerp_table(h);
    let tx = lerp_table(w);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * h * w];
    let mut rowbuf = vec![T::zero(); h * w2];
    for p in 0..planes {
        let src = &g[p * h2 * w2..(p + 1) * h2 * w2];
        rowbuf.fill(T::zero());
        for (oy, &(i0, i1, f)) in ty.iter().enumerate() {
            let f = T::c(f);
            for ox in 0..w2 {
                let v = src[oy * w2 + ox];
                rowbuf[i0 * w2 + ox] = rowbuf[i0 * w2 + ox] + v * (T::one() - f);
                rowbuf[i1 * w2 + ox] = rowbuf[i1 * w2 + ox] + v * f;
            }
        }
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for iy in 0..h {
            for (ox, &(i0, i1, f)) in tx.iter().enumerate() {
                let f = T::c(f);
                let v = rowbuf[iy * w2 + ox];
                dst[iy * w + i0] = dst[iy * w + i0] + v * (T::one() - f);
                dst[iy * w + i1] = dst[iy * w + i1] + v * f;
            }
        }
    }
    out
}

struct Upsample;

impl<T: Scalar> Backward<T> for Upsample {
    fn name(&self) -> &'static str {
        "upsample2x"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.upsample2x_adjoint())]
    }
}

struct UpsampleAdjoint;

impl<T: Scalar> Backward<T> for UpsampleAdjoint {
    fn name(&self) -> &'static str {
        "upsample2x_adjoint"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.upsample2x())]
    }
}

impl<T: Scalar> Tensor<T> {
    /// 2×2 max pooling with stride 2; ties resolve to the first element in
    /// row-major order.
    pub fn max_pool2x2(&self) -> Tensor<T> {
        let s = self.shape();
        assert_eq!(s.len(), 4, "max_pool2x2 expects [B, C, H, W]");
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2x2 needs even spatial dims, got {s:?}");
        let (h2, w2) = (h / 2, w / 2);
        let x = self.data();
        let mut idx = Vec::with_capacity(planes * h2 * w2);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..h2 {
                for ox in 0..w2 {
                    let cands = [
                        base + 2 * oy * w + 2 * ox,
                        base + 2 * oy * w + 2 * ox + 1,
                        base + (2 * oy + 1) * w + 2 * ox,
                        base + (2 * oy + 1) * w + 2 * ox + 1,
                    ];
                    let mut best = cands[0];
                    for &c in &cands[1..] {
                        if x[c] > x[best] {
                            best = c;
                        }
                    }
                    idx.push(best as u32);
                }
            }
        }
        let out_shape = [s[0], s[1], h2, w2];
        let idx = Rc::new(idx);
        let data = idx.iter().map(|&i| x[i as usize]).collect();
        Tensor::from_op(
            data,
            out_shape.to_vec(),
            vec![self.clone()],
            Gather { idx, src_shape: s.to_vec() },
        )
    }

    /// Bilinear ×2 upsampling (aligned corners).
    pub fn upsample2x(&self) -> Tensor<T> {
        let s = self.shape();
        assert_eq!(s.len(), 4, "upsample2x expects [B, C, H, W]");
        let data = upsample_kernel(self.data(), s[0] * s[1], s[2], s[3]);
        Tensor::from_op(data, vec![s[0], s[1], 2 * s[2], 2 * s[3]], vec![self.clone()], Upsample)
    }

    fn upsample2x_adjoint(&self) -> Tensor<T> {
        let s = self.shape();
        let (h, w) = (s[2] / 2, s[3] / 2);
        let data = upsample_adjoint_kernel(self.data(), s[0] * s[1], h, w);
        Tensor::from_op(data, vec![s[0], s[1], h, w], vec![self.clone()], UpsampleAdjoint)
    }
}
