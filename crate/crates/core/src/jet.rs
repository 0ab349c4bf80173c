//! Truncated Taylor series in the independent variables `z` and `z̄`.
//!
//! Every invariant in this crate is a rational or logarithmic expression in
//! mixed derivatives `∂^a ∂̄^b K`. Rather than expanding the chain and
//! quotient rules by hand for each quantity, those expressions are evaluated
//! in the algebra of polynomials in `(h, k) = (z - z0, z̄ - z̄0)` truncated
//! at bidegree `(p, q)`. Truncation by bidegree is compatible with products
//! and with `∂/∂z_j` (which lowers `p` by one), so every derivative read off
//! a result is exact up to floating-point rounding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;
use once_cell::sync::Lazy;

/// All multi-indices in `n` variables with total degree at most `max`,
/// ordered by total degree. Tables with smaller `max` are prefixes of
/// tables with larger `max`.
#[derive(Debug)]
pub struct MultiIndexTable {
    pub n: usize,
    pub max: usize,
    pub list: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    add: Vec<Vec<Option<usize>>>,
}

impl MultiIndexTable {
    fn build(n: usize, max: usize) -> Self {
        let mut list = Vec::new();
        for deg in 0..=max {
            let mut cur = vec![0usize; n];
            push_degree(n, deg, 0, &mut cur, &mut list);
        }
        let lookup: HashMap<_, _> = list.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let add = list
            .iter()
            .map(|a| {
                list.iter()
                    .map(|b| {
                        let s: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        lookup.get(&s).copied()
                    })
                    .collect()
            })
            .collect();
        Self { n, max, list, lookup, add }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn index_of(&self, a: &[usize]) -> Option<usize> {
        self.lookup.get(a).copied()
    }

    /// Multi-index `e_j`.
    pub fn unit(&self, j: usize) -> usize {
        let mut a = vec![0; self.n];
        a[j] = 1;
        self.lookup[&a]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.list[i].iter().sum()
    }
}

fn push_degree(n: usize, remaining: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        push_degree(n, remaining - k, pos + 1, cur, out);
    }
}

static TABLES: Lazy<Mutex<HashMap<(usize, usize), Arc<MultiIndexTable>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared multi-index table for `n` variables up to degree `max`.
pub fn table(n: usize, max: usize) -> Arc<MultiIndexTable> {
    assert!(n >= 1, "multi-index tables need at least one variable");
    let mut guard = TABLES.lock().expect("multi-index table cache poisoned");
    guard.entry((n, max)).or_insert_with(|| Arc::new(MultiIndexTable::build(n, max))).clone()
}

pub fn factorial(a: &[usize]) -> f64 {
    a.iter().map(|&k| (1..=k).map(|x| x as f64).product::<f64>()).product()
}

/// Truncated series `Σ c[a,b] h^a k^b` with `|a| ≤ p`, `|b| ≤ q`.
#[derive(Debug, Clone)]
pub struct Series {
    zt: Arc<MultiIndexTable>,
    wt: Arc<MultiIndexTable>,
    c: Vec<C64>,
}

impl Series {
    pub fn zeros(n: usize, p: usize, q: usize) -> Self {
        let zt = table(n, p);
        let wt = table(n, q);
        let c = vec![C64::new(0.0, 0.0); zt.len() * wt.len()];
        Self { zt, wt, c }
    }

    pub fn constant(n: usize, p: usize, q: usize, v: C64) -> Self {
        let mut s = Self::zeros(n, p, q);
        s.c[0] = v;
        s
    }

    /// The coordinate function `z_j` expanded at `z0_j`.
    pub fn z_var(n: usize, p: usize, q: usize, j: usize, z0: C64) -> Self {
        let mut s = Self::constant(n, p, q, z0);
        if p >= 1 {
            let i = s.zt.unit(j);
            s.c[i * s.wt.len()] = C64::new(1.0, 0.0);
        }
        s
    }

    /// The conjugate coordinate `z̄_j` expanded at `conj(z0_j)`.
    pub fn zbar_var(n: usize, p: usize, q: usize, j: usize, z0: C64) -> Self {
        let mut s = Self::constant(n, p, q, z0.conj());
        if q >= 1 {
            let k = s.wt.unit(j);
            s.c[k] = C64::new(1.0, 0.0);
        }
        s
    }

    /// Builds a series from a table of derivatives `∂^a ∂̄^b f(z0)`.
    pub fn from_derivatives(n: usize, p: usize, q: usize, mut f: impl FnMut(&[usize], &[usize]) -> C64) -> Self {
        let mut s = Self::zeros(n, p, q);
        let (zt, wt) = (s.zt.clone(), s.wt.clone());
        for (i, a) in zt.list.iter().enumerate() {
            for (j, b) in wt.list.iter().enumerate() {
                s.c[i * wt.len() + j] = f(a, b) / (factorial(a) * factorial(b));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.zt.n
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.zt.max, self.wt.max)
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn coeff(&self, a: &[usize], b: &[usize]) -> C64 {
        match (self.zt.index_of(a), self.wt.index_of(b)) {
            (Some(i), Some(j)) => self.c[i * self.wt.len() + j],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// `∂^a ∂̄^b` of the represented function at the expansion point.
    pub fn derivative(&self, a: &[usize], b: &[usize]) -> C64 {
        self.coeff(a, b) * (factorial(a) * factorial(b))
    }

    fn same_shape(&self, other: &Series) -> bool {
        Arc::ptr_eq(&self.zt, &other.zt) && Arc::ptr_eq(&self.wt, &other.wt)
    }

    pub fn truncate(&self, p: usize, q: usize) -> Series {
        assert!(p <= self.zt.max && q <= self.wt.max, "truncate can only lower orders");
        let mut out = Series::zeros(self.dim(), p, q);
        let (ow, sw) = (out.wt.len(), self.wt.len());
        for i in 0..out.zt.len() {
            for j in 0..ow {
                out.c[i * ow + j] = self.c[i * sw + j];
            }
        }
        out
    }

    /// Truncates both operands to the smaller common bidegree.
    pub fn common(a: &Series, b: &Series) -> (Series, Series) {
        let (pa, qa) = a.orders();
        let (pb, qb) = b.orders();
        let (p, q) = (pa.min(pb), qa.min(qb));
        let ta = if (pa, qa) == (p, q) { a.clone() } else { a.truncate(p, q) };
        let tb = if (pb, qb) == (p, q) { b.clone() } else { b.truncate(p, q) };
        (ta, tb)
    }

    pub fn add(&self, other: &Series) -> Series {
        let (mut a, b) = Series::common(self, other);
        a.c.iter_mut().zip(&b.c).for_each(|(x, y)| *x += y);
        a
    }

    pub fn sub(&self, other: &Series) -> Series {
        let (mut a, b) = Series::common(self, other);
        a.c.iter_mut().zip(&b.c).for_each(|(x, y)| *x -= y);
        a
    }

    pub fn scale(&self, s: C64) -> Series {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn scale_re(&self, s: f64) -> Series {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add_const(&self, v: C64) -> Series {
        let mut out = self.clone();
        out.c[0] += v;
        out
    }

    pub fn mul(&self, other: &Series) -> Series {
        if !self.same_shape(other) {
            let (a, b) = Series::common(self, other);
            return a.mul(&b);
        }
        let nz = self.zt.len();
        let nw = self.wt.len();
        let mut out = vec![C64::new(0.0, 0.0); nz * nw];
        for i1 in 0..nz {
            for j1 in 0..nw {
                let x = self.c[i1 * nw + j1];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                for i2 in 0..nz {
                    let Some(i) = self.zt.add[i1][i2] else { continue };
                    for j2 in 0..nw {
                        let Some(j) = self.wt.add[j1][j2] else { continue };
                        out[i * nw + j] += x * other.c[i2 * nw + j2];
                    }
                }
            }
        }
        Series { zt: self.zt.clone(), wt: self.wt.clone(), c: out }
    }

    /// Applies an analytic function given its Taylor coefficients
    /// `f(c0 + h) = Σ taylor[k] h^k`; the nilpotent part vanishes past `p + q`.
    fn compose(&self, taylor: &[C64]) -> Series {
        let mut h = self.clone();
        h.c[0] = C64::new(0.0, 0.0);
        let mut out = Series::constant(self.dim(), self.zt.max, self.wt.max, taylor[0]);
        let mut power = Series::constant(self.dim(), self.zt.max, self.wt.max, C64::new(1.0, 0.0));
        for t in taylor.iter().skip(1) {
            power = power.mul(&h);
            out.c.iter_mut().zip(&power.c).for_each(|(o, p)| *o += t * p);
        }
        out
    }

    fn nil_order(&self) -> usize {
        self.zt.max + self.wt.max
    }

    pub fn recip(&self) -> Series {
        let c0 = self.c[0];
        let taylor: Vec<C64> = (0..=self.nil_order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / c0.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&taylor)
    }

    pub fn div(&self, other: &Series) -> Series {
        self.mul(&other.recip())
    }

    pub fn ln(&self) -> Series {
        let c0 = self.c[0];
        let mut taylor = vec![c0.ln()];
        for k in 1..=self.nil_order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            taylor.push(sign / (k as f64 * c0.powi(k as i32)));
        }
        self.compose(&taylor)
    }

    /// Real power `f^e` using the principal branch at the expansion point.
    pub fn powf(&self, e: f64) -> Series {
        let c0 = self.c[0];
        let mut taylor = Vec::new();
        let mut binom = 1.0;
        for k in 0..=self.nil_order() {
            if k > 0 {
                binom *= (e - (k as f64 - 1.0)) / k as f64;
            }
            taylor.push(c0.powf(e - k as f64) * binom);
        }
        self.compose(&taylor)
    }

    /// `∂/∂z_j`, lowering the `z` order by one.
    pub fn dz(&self, j: usize) -> Series {
        let p = self.zt.max;
        assert!(p >= 1, "cannot differentiate a series of z-order 0");
        let mut out = Series::zeros(self.dim(), p - 1, self.wt.max);
        let nw = self.wt.len();
        for (i, a) in out.zt.list.iter().enumerate() {
            let mut up = a.clone();
            up[j] += 1;
            let src = self.zt.index_of(&up).expect("shifted index within order");
            let f = up[j] as f64;
            for k in 0..nw {
                out.c[i * nw + k] = self.c[src * nw + k] * f;
            }
        }
        out
    }

    /// `∂/∂z̄_j`, lowering the `z̄` order by one.
    pub fn dzbar(&self, j: usize) -> Series {
        let q = self.wt.max;
        assert!(q >= 1, "cannot differentiate a series of zbar-order 0");
        let mut out = Series::zeros(self.dim(), self.zt.max, q - 1);
        let (nw_out, nw) = (out.wt.len(), self.wt.len());
        let wt_out = out.wt.clone();
        for i in 0..out.zt.len() {
            for (k, b) in wt_out.list.iter().enumerate() {
                let mut up = b.clone();
                up[j] += 1;
                let src = self.wt.index_of(&up).expect("shifted index within order");
                out.c[i * nw_out + k] = self.c[i * nw + src] * up[j] as f64;
            }
        }
        out
    }
}

/// Determinant of a square matrix of series by elimination without pivoting.
/// Leading principal minors of a positive-definite tensor are nonzero, which
/// is the only case used here.
pub fn det(m: &[Vec<Series>]) -> Series {
    let n = m.len();
    let mut a: Vec<Vec<Series>> = m.to_vec();
    let mut d = a[0][0].clone();
    for k in 0..n {
        if k > 0 {
            d = d.mul(&a[k][k]);
        }
        let piv_inv = a[k][k].recip();
        for i in (k + 1)..n {
            let f = a[i][k].mul(&piv_inv);
            for j in (k + 1)..n {
                let t = f.mul(&a[k][j]);
                a[i][j] = a[i][j].sub(&t);
            }
        }
    }
    d
}
