use std::rc::Rc;

use super::graph::{numel, Backward};
use super::{Scalar, Tensor};

// ---------------------------------------------------------------------------
// Broadcasting helpers

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| -> usize {
        let off = rank - s.len();
        if i < off {
            1
        } else {
            s[i - off]
        }
    };
    (0..rank)
        .map(|i| {
            let (x, y) = (pad(a, i), pad(b, i));
            match (x, y) {
                _ if x == y => x,
                (1, _) => y,
                (_, 1) => x,
                _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
            }
        })
        .collect()
}

fn padded(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut s = vec![1; rank - shape.len()];
    s.extend_from_slice(shape);
    s
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

/// Walks `big` in row-major order calling `f(big_offset, small_offset, run)`
/// on maximal runs along the last axis. `small` has the same rank with size-1
/// axes where `big` is broadcast.
fn walk_broadcast(small: &[usize], big: &[usize], mut f: impl FnMut(usize, usize, usize, bool)) {
    let rank = big.len();
    if rank == 0 {
        f(0, 0, 1, false);
        return;
    }
    let sst = strides(small);
    let bst = strides(big);
    let last = rank - 1;
    let run = big[last];
    let inner_bcast = small[last] == 1 && big[last] != 1;
    let outer: usize = big[..last].iter().product();
    let mut idx = vec![0usize; last];
    for _ in 0..outer {
        let mut boff = 0;
        let mut soff = 0;
        for d in 0..last {
            boff += idx[d] * bst[d];
            if small[d] != 1 {
                soff += idx[d] * sst[d];
            }
        }
        f(boff, soff, run, inner_bcast);
        for d in (0..last).rev() {
            idx[d] += 1;
            if idx[d] < big[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn expand_kernel<T: Scalar>(src: &[T], src_shape: &[usize], dst_shape: &[usize]) -> Vec<T> {
    let small = padded(src_shape, dst_shape.len());
    let mut out = vec![T::zero(); numel(dst_shape)];
    walk_broadcast(&small, dst_shape, |b, s, run, bc| {
        if bc {
            out[b..b + run].fill(src[s]);
        } else {
            out[b..b + run].copy_from_slice(&src[s..s + run]);
        }
    });
    out
}

fn reduce_kernel<T: Scalar>(src: &[T], src_shape: &[usize], dst_shape: &[usize]) -> Vec<T> {
    let small = padded(dst_shape, src_shape.len());
    let mut out = vec![T::zero(); numel(dst_shape)];
    walk_broadcast(&small, src_shape, |b, s, run, bc| {
        if bc {
            let mut acc = T::zero();
            for &v in &src[b..b + run] {
                acc = acc + v;
            }
            out[s] = out[s] + acc;
        } else {
            for (o, &v) in out[s..s + run].iter_mut().zip(&src[b..b + run]) {
                *o = *o + v;
            }
        }
    });
    out
}

struct Expand {
    from: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Expand {
    fn name(&self) -> &'static str {
        "expand"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.sum_to(&self.from))]
    }
}

struct SumTo {
    from: Vec<usize>,
}

impl<T: Scalar> Backward<T> for SumTo {
    fn name(&self) -> &'static str {
        "sum_to"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.expand(&self.from))]
    }
}

// ---------------------------------------------------------------------------
// Elementwise binary

#[derive(Clone, Copy)]
enum Bin {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary(Bin);

impl<T: Scalar> Backward<T> for Binary {
    fn name(&self) -> &'static str {
        match self.0 {
            Bin::Add => "add",
            Bin::Sub => "sub",
            Bin::Mul => "mul",
            Bin::Div => "div",
        }
    }
    fn backward(&self, p: &[Tensor<T>], g: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (&p[0], &p[1]);
        match self.0 {
            Bin::Add => vec![Some(g.clone()), Some(g.clone())],
            Bin::Sub => vec![Some(g.clone()), n[1].then(|| g.neg())],
            Bin::Mul => vec![n[0].then(|| g.mul(b)), n[1].then(|| g.mul(a))],
            Bin::Div => {
                let ga = g.div(b);
                let gb = n[1].then(|| ga.mul(a).div(b).neg());
                vec![Some(ga), gb]
            }
        }
    }
}

fn binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: Bin) -> Tensor<T> {
    if a.shape() != b.shape() {
        let shape = broadcast_shape(a.shape(), b.shape());
        let a2 = if a.shape() == shape.as_slice() { a.clone() } else { a.expand(&shape) };
        let b2 = if b.shape() == shape.as_slice() { b.clone() } else { b.expand(&shape) };
        return binary(&a2, &b2, kind);
    }
    let (x, y) = (a.data(), b.data());
    let data: Vec<T> = match kind {
        Bin::Add => x.iter().zip(y).map(|(&u, &v)| u + v).collect(),
        Bin::Sub => x.iter().zip(y).map(|(&u, &v)| u - v).collect(),
        Bin::Mul => x.iter().zip(y).map(|(&u, &v)| u * v).collect(),
        Bin::Div => x.iter().zip(y).map(|(&u, &v)| u / v).collect(),
    };
    Tensor::from_op(data, a.shape().to_vec(), vec![a.clone(), b.clone()], Binary(kind))
}

// ---------------------------------------------------------------------------
// Elementwise unary

#[derive(Clone, Copy)]
enum Un {
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Ln,
    Sqrt,
    Square,
    Powf(f64),
    Tanh,
    Sigmoid,
}

struct Unary(Un);

impl<T: Scalar> Backward<T> for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            Un::Neg => "neg",
            Un::Scale(_) => "scale",
            Un::AddScalar(_) => "add_scalar",
            Un::Exp => "exp",
            Un::Ln => "ln",
            Un::Sqrt => "sqrt",
            Un::Square => "square",
            Un::Powf(_) => "powf",
            Un::Tanh => "tanh",
            Un::Sigmoid => "sigmoid",
        }
    }
    fn backward(&self, p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let x = &p[0];
        let gx = match self.0 {
            Un::Neg => g.neg(),
            Un::Scale(c) => g.scale(c),
            Un::AddScalar(_) => g.clone(),
            Un::Exp => g.mul(&x.exp()),
            Un::Ln => g.div(x),
            Un::Sqrt => g.div(&x.sqrt()).scale(0.5),
            Un::Square => g.mul(x).scale(2.0),
            Un::Powf(c) => g.mul(&x.powf(c - 1.0)).scale(c),
            Un::Tanh => {
                let t = x.tanh();
                g.mul(&t.square().neg().add_scalar(1.0))
            }
            Un::Sigmoid => {
                let s = x.sigmoid();
                g.mul(&s).mul(&s.neg().add_scalar(1.0))
            }
        };
        vec![Some(gx)]
    }
}

fn unary<T: Scalar>(x: &Tensor<T>, kind: Un) -> Tensor<T> {
    let d = x.data();
    let data: Vec<T> = match kind {
        Un::Neg => d.iter().map(|&v| -v).collect(),
        Un::Scale(c) => {
            let c = T::c(c);
            d.iter().map(|&v| v * c).collect()
        }
        Un::AddScalar(c) => {
            let c = T::c(c);
            d.iter().map(|&v| v + c).collect()
        }
        Un::Exp => d.iter().map(|&v| v.exp()).collect(),
        Un::Ln => d.iter().map(|&v| v.ln()).collect(),
        Un::Sqrt => d.iter().map(|&v| v.sqrt()).collect(),
        Un::Square => d.iter().map(|&v| v * v).collect(),
        Un::Powf(c) => {
            let c = T::c(c);
            d.iter().map(|&v| v.powf(c)).collect()
        }
        Un::Tanh => d.iter().map(|&v| v.tanh()).collect(),
        Un::Sigmoid => d.iter().map(|&v| sigmoid(v)).collect(),
    };
    Tensor::from_op(data, x.shape().to_vec(), vec![x.clone()], Unary(kind))
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Multiplication by a constant (non-differentiable) mask; used for the
/// piecewise-linear activations and `abs`, whose second derivatives vanish.
struct MaskMul {
    mask: Rc<Vec<f32>>,
}

impl<T: Scalar> Backward<T> for MaskMul {
    fn name(&self) -> &'static str {
        "mask_mul"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(mask_mul(g, &self.mask))]
    }
}

fn mask_mul<T: Scalar>(x: &Tensor<T>, mask: &Rc<Vec<f32>>) -> Tensor<T> {
    let data = x.data().iter().zip(mask.iter()).map(|(&v, &m)| v * T::c(m as f64)).collect();
    Tensor::from_op(data, x.shape().to_vec(), vec![x.clone()], MaskMul { mask: Rc::clone(mask) })
}

// ---------------------------------------------------------------------------
// Shape ops

struct Reshape {
    from: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.reshape(&self.from))]
    }
}

/// Views `[outer, axis, inner]` of a shape around `dim`.
fn split_at_dim(shape: &[usize], dim: usize) -> (usize, usize, usize) {
    let outer = shape[..dim].iter().product();
    let inner = shape[dim + 1..].iter().product();
    (outer, shape[dim], inner)
}

struct Narrow {
    dim: usize,
    start: usize,
    total: usize,
}

impl<T: Scalar> Backward<T> for Narrow {
    fn name(&self) -> &'static str {
        "narrow"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.embed(self.dim, self.start, self.total))]
    }
}

struct Embed {
    dim: usize,
    start: usize,
    len: usize,
}

impl<T: Scalar> Backward<T> for Embed {
    fn name(&self) -> &'static str {
        "embed"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, _n: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.narrow(self.dim, self.start, self.len))]
    }
}

struct Concat {
    dim: usize,
    sizes: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn backward(&self, _p: &[Tensor<T>], g: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let mut start = 0;
        self.sizes
            .iter()
            .zip(n)
            .map(|(&len, &need)| {
                let r = need.then(|| g.narrow(self.dim, start, len));
                start += len;
                r
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Matrix product

struct MatMul {
    ta: bool,
    tb: bool,
}

impl<T: Scalar> Backward<T> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn backward(&self, p: &[Tensor<T>], g: &Tensor<T>, n: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (&p[0], &p[1]);
        let ga = n[0].then(|| {
            if self.ta {
                b.matmul_t(g, self.tb, true)
            } else {
                g.matmul_t(b, false, !self.tb)
            }
        });
        let gb = n[1].then(|| {
            if self.tb {
                g.matmul_t(a, true, self.ta)
            } else {
                a.matmul_t(g, !self.ta, false)
            }
        });
        vec![ga, gb]
    }
}

// ---------------------------------------------------------------------------
// Public surface

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, o: &Tensor<T>) -> Tensor<T> {
        binary(self, o, Bin::Add)
    }
    pub fn sub(&self, o: &Tensor<T>) -> Tensor<T> {
        binary(self, o, Bin::Sub)
    }
    pub fn mul(&self, o: &Tensor<T>) -> Tensor<T> {
        binary(self, o, Bin::Mul)
    }
    pub fn div(&self, o: &Tensor<T>) -> Tensor<T> {
        binary(self, o, Bin::Div)
    }
    pub fn neg(&self) -> Tensor<T> {
        unary(self, Un::Neg)
    }
    pub fn scale(&self, c: f64) -> Tensor<T> {
        unary(self, Un::Scale(c))
    }
    pub fn add_scalar(&self, c: f64) -> Tensor<T> {
        unary(self, Un::AddScalar(c))
    }
    pub fn exp(&self) -> Tensor<T> {
        unary(self, Un::Exp)
    }
    pub fn ln(&self) -> Tensor<T> {
        unary(self, Un::Ln)
    }
    pub fn sqrt(&self) -> Tensor<T> {
        unary(self, Un::Sqrt)
    }
    pub fn square(&self) -> Tensor<T> {
        unary(self, Un::Square)
    }
    pub fn powf(&self, c: f64) -> Tensor<T> {
        unary(self, Un::Powf(c))
    }
    pub fn tanh(&self) -> Tensor<T> {
        unary(self, Un::Tanh)
    }
    pub fn sigmoid(&self) -> Tensor<T> {
        unary(self, Un::Sigmoid)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        let s = slope as f32;
        let mask: Vec<f32> = self.data().iter().map(|&v| if v > T::zero() { 1.0 } else { s }).collect();
        mask_mul(self, &Rc::new(mask))
    }

    pub fn relu(&self) -> Tensor<T> {
        self.leaky_relu(0.0)
    }

    pub fn abs(&self) -> Tensor<T> {
        let mask: Vec<f32> = self
            .data()
            .iter()
            .map(|&v| match v.partial_cmp(&T::zero()) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            })
            .collect();
        mask_mul(self, &Rc::new(mask))
    }

    /// Product with a constant mask, e.g. a dropout pattern.
    pub fn mul_mask(&self, mask: &Rc<Vec<f32>>) -> Tensor<T> {
        assert_eq!(mask.len(), self.numel());
        mask_mul(self, mask)
    }

    /// Numpy-style broadcast to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Tensor<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let check = broadcast_shape(self.shape(), shape);
        assert_eq!(check, shape, "cannot expand {:?} to {:?}", self.shape(), shape);
        let data = expand_kernel(self.data(), &padded(self.shape(), shape.len()), shape);
        Tensor::from_op(data, shape.to_vec(), vec![self.clone()], Expand { from: self.shape().to_vec() })
    }

    /// Sums broadcast axes away so the result has `shape` (adjoint of [`expand`](Self::expand)).
    pub fn sum_to(&self, shape: &[usize]) -> Tensor<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let check = broadcast_shape(shape, self.shape());
        assert_eq!(check, self.shape(), "cannot sum {:?} to {:?}", self.shape(), shape);
        let data = reduce_kernel(self.data(), self.shape(), &padded(shape, self.rank()));
        Tensor::from_op(data, shape.to_vec(), vec![self.clone()], SumTo { from: self.shape().to_vec() })
    }

    pub fn sum(&self) -> Tensor<T> {
        self.sum_to(&[])
    }

    pub fn mean(&self) -> Tensor<T> {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        assert_eq!(numel(shape), self.numel(), "cannot reshape {:?} to {:?}", self.shape(), shape);
        Tensor::from_op_shared(
            Rc::clone(self.buffer()),
            shape.to_vec(),
            vec![self.clone()],
            Reshape { from: self.shape().to_vec() },
        )
    }

    /// Sub-range `start..start+len` along `dim`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Tensor<T> {
        let (outer, axis, inner) = split_at_dim(self.shape(), dim);
        assert!(start + len <= axis, "narrow out of range");
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[dim] = len;
        Tensor::from_op(data, shape, vec![self.clone()], Narrow { dim, start, total: axis })
    }

    /// Zero-padded placement of `self` at `start` inside an axis of size `total`.
    pub fn embed(&self, dim: usize, start: usize, total: usize) -> Tensor<T> {
        let (outer, len, inner) = split_at_dim(self.shape(), dim);
        assert!(start + len <= total);
        let src = self.data();
        let mut data = vec![T::zero(); outer * total * inner];
        for o in 0..outer {
            let dst = (o * total + start) * inner;
            data[dst..dst + len * inner].copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[dim] = total;
        Tensor::from_op(data, shape, vec![self.clone()], Embed { dim, start, len })
    }

    pub fn concat(parts: &[&Tensor<T>], dim: usize) -> Tensor<T> {
        assert!(!parts.is_empty());
        let base = parts[0].shape();
        for p in parts {
            assert_eq!(p.rank(), base.len());
            for d in 0..base.len() {
                assert!(d == dim || p.shape()[d] == base[d], "concat shape mismatch");
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[dim]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = split_at_dim(base, dim);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&sizes) {
                let chunk = len * inner;
                data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base.to_vec();
        shape[dim] = total;
        Tensor::from_op(data, shape, parts.iter().map(|p| (*p).clone()).collect(), Concat { dim, sizes })
    }

    pub fn matmul(&self, o: &Tensor<T>) -> Tensor<T> {
        self.matmul_t(o, false, false)
    }

    /// `op(self) · op(o)` where `op` transposes when the flag is set. Both 2-D.
    pub fn matmul_t(&self, o: &Tensor<T>, ta: bool, tb: bool) -> Tensor<T> {
        assert!(self.rank() == 2 && o.rank() == 2, "matmul needs 2-D operands");
        let (ar, ac) = (self.shape()[0], self.shape()[1]);
        let (br, bc) = (o.shape()[0], o.shape()[1]);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dims {:?} x {:?}", self.shape(), o.shape());
        let mut out = vec![T::zero(); m * n];
        let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
        if m > 0 && n > 0 && k > 0 {
            unsafe {
                T::gemm(
                    m,
                    k,
                    n,
                    T::one(),
                    self.data().as_ptr(),
                    rsa,
                    csa,
                    o.data().as_ptr(),
                    rsb,
                    csb,
                    T::zero(),
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Tensor::from_op(out, vec![m, n], vec![self.clone(), o.clone()], MatMul { ta, tb })
    }

    pub fn transpose2(&self) -> Tensor<T> {
        // Identity product avoids a dedicated op; only used on small matrices.
        let r = self.shape()[0];
        let mut eye = vec![T::zero(); r * r];
        for i in 0..r {
            eye[i * r + i] = T::one();
        }
        self.matmul_t(&Tensor::new(eye, &[r, r]), true, false)
    }

    /// Sum of squares per leading index: `[B, ...] -> [B]`.
    pub fn sq_norm_rows(&self) -> Tensor<T> {
        let b = self.shape()[0];
        self.square().reshape(&[b, self.numel() / b]).sum_to(&[b, 1]).reshape(&[b])
    }

    pub fn max_abs(&self) -> T {
        self.data().iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[1, 3, 1, 1], &[2, 3, 4, 4]), vec![2, 3, 4, 4]);
        assert_eq!(broadcast_shape(&[4], &[2, 1]), vec![2, 4]);
        assert_eq!(broadcast_shape(&[], &[2, 2]), vec![2, 2]);
    }

    #[test]
    fn expand_and_sum_are_adjoint() {
        let x = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0], &[1, 3, 1]);
        let e = x.expand(&[2, 3, 2]);
        assert_eq!(e.to_vec(), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let s = e.sum_to(&[1, 3, 1]);
        assert_eq!(s.to_vec(), vec![4.0, 8.0, 12.0]);
        assert_eq!(e.sum().item(), 24.0);
    }

    #[test]
    fn narrow_embed_concat() {
        let a = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::<f64>::from_f64(&[5.0, 6.0], &[2, 1]);
        let c = Tensor::concat(&[&a, &b], 1);
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.narrow(1, 2, 1).to_vec(), vec![5.0, 6.0]);
        assert_eq!(b.embed(1, 1, 3).to_vec(), vec![0.0, 5.0, 0.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn matmul_transposes() {
        let a = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = Tensor::<f64>::from_f64(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[3, 2]);
        assert_eq!(a.matmul(&b).to_vec(), vec![4.0, 5.0, 10.0, 11.0]);
        // aᵀ a
        assert_eq!(a.matmul_t(&a, true, false).to_vec(), vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        assert_eq!(a.transpose2().to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }
}
