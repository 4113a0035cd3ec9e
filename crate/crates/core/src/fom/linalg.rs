//! Sparse assembly and a banded LU with partial pivoting.

use crate::error::{Error, Result};

/// Row-compressed sparse matrix built from triplets (duplicates summed).
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

/// LU factors of a row- and column-equilibrated banded matrix, stored in the
/// column-major band layout with `kl` extra rows for pivot fill.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl BandLu {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.n;
        let (kl, ku) = a.bandwidths();
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut row_scale = vec![0.0; n];
        for (i, s) in row_scale.iter_mut().enumerate() {
            let m = a.row(i).fold(0.0, |m: f64, (_, v)| m.max(v.abs()));
            if m == 0.0 {
                return Err(Error::numerical(format!("matrix row {i} is empty (singular system)")));
            }
            *s = 1.0 / m;
        }
        let mut col_max = vec![0.0f64; n];
        for i in 0..n {
            for (c, v) in a.row(i) {
                col_max[c] = col_max[c].max((v * row_scale[i]).abs());
            }
        }
        if let Some(c) = col_max.iter().position(|&m| m == 0.0) {
            return Err(Error::numerical(format!("matrix column {c} is empty (singular system)")));
        }
        let col_scale: Vec<f64> = col_max.iter().map(|m| 1.0 / m).collect();
        let mut ab = vec![0.0; ld * n];
        for i in 0..n {
            for (c, v) in a.row(i) {
                ab[kv + i - c + c * ld] = v * row_scale[i] * col_scale[c];
            }
        }
        let mut piv = vec![0; n];
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for r in 1..=km {
                let v = ab[col + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            piv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::numerical(format!("zero pivot in column {j} (singular system)")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ld + kv - c;
                    ab.swap(base + j, base + j + jp);
                }
            }
            let inv = 1.0 / ab[col];
            for r in 1..=km {
                ab[col + r] *= inv;
            }
            if km == 0 {
                continue;
            }
            let (head, tail) = ab.split_at_mut((j + 1) * ld);
            let l = &head[col + 1..col + 1 + km];
            for c in j + 1..=ju {
                let base = (c - j - 1) * ld + kv + j - c;
                let f = tail[base];
                if f != 0.0 {
                    let dst = &mut tail[base + 1..base + 1 + km];
                    for (d, &lv) in dst.iter_mut().zip(l) {
                        *d -= lv * f;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ld, ab, piv, row_scale, col_scale })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ld) = (self.n, self.kl, self.ld);
        let kv = kl + self.ku;
        let mut x: Vec<f64> = b.iter().zip(&self.row_scale).map(|(b, s)| b * s).collect();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            if xj != 0.0 {
                let col = j * ld + kv;
                for r in 1..=km {
                    x[j + r] -= self.ab[col + r] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ld + kv;
            x[j] /= self.ab[col];
            let xj = x[j];
            let top = j.saturating_sub(kv);
            for i in top..j {
                x[i] -= self.ab[col + i - j] * xj;
            }
        }
        x.iter_mut().zip(&self.col_scale).for_each(|(v, s)| *v *= s);
        x
    }

    pub fn row_scale(&self) -> &[f64] {
        &self.row_scale
    }
}

/// Relative residual `‖D(b − Ax)‖ / ‖D b‖` with the row equilibration `D`.
pub fn scaled_residual(a: &Csr, x: &[f64], b: &[f64], row_scale: &[f64], rows: impl Iterator<Item = usize> + Clone) -> f64 {
    let ax = a.matvec(x);
    let num: f64 = rows.clone().map(|i| ((b[i] - ax[i]) * row_scale[i]).powi(2)).sum();
    let den: f64 = rows.map(|i| (b[i] * row_scale[i]).powi(2)).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Direct solve with up to `max_refine` steps of iterative refinement until the
/// scaled residual drops below `tol`.
pub fn solve_refined(a: &Csr, lu: &BandLu, b: &[f64], tol: f64, max_refine: usize) -> Result<(Vec<f64>, f64)> {
    let mut x = lu.solve(b);
    let mut history = Vec::new();
    for _ in 0..=max_refine {
        let res = scaled_residual(a, &x, b, lu.row_scale(), 0..a.n);
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res < tol {
            return Ok((x, res));
        }
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    Err(Error::numerical(format!("linear solve did not reach relative residual {tol:e}; refinement history {history:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> Csr {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // Small diagonal forces pivoting.
                let v = if i == j { 1e-3 * rng.random::<f64>() } else { rng.random_range(-1.0..1.0) };
                t.push((i, j, v));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn band_lu_solves_pivoting_systems() {
        for (n, kl, ku) in [(1, 0, 0), (7, 2, 1), (40, 5, 9), (60, 11, 3)] {
            let a = random_banded(n, kl, ku, n as u64);
            assert_eq!(a.bandwidths(), (kl.min(n - 1), ku.min(n - 1)));
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let b = a.matvec(&x_true);
            let lu = BandLu::factor(&a).unwrap();
            let (x, res) = solve_refined(&a, &lu, &b, 1e-12, 3).unwrap();
            assert!(res < 1e-12);
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Csr::from_triplets(3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0), (1, 1, 0.0)]);
        assert!(matches!(BandLu::factor(&a), Err(Error::Numerical(_))));
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 2.0)]);
        assert!(matches!(BandLu::factor(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (1, 0, -1.0)]);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![3.0, 3.0]);
    }
}
