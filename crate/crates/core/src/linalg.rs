//! Small dense linear-algebra helpers shared across modules.

use nalgebra::SVD;

use crate::{Matrix, Real};

/// Thin SVD with singular values sorted in non-increasing order.
pub(crate) struct SortedSvd<T: Real> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v_t: Matrix<T>,
}

pub(crate) fn sorted_svd<T: Real>(a: &Matrix<T>) -> SortedSvd<T> {
    let (n, d) = a.shape();
    let p = n.min(d);
    if p == 0 {
        return SortedSvd {
            u: Matrix::zeros(n, 0),
            sigma: Vec::new(),
            v_t: Matrix::zeros(0, d),
        };
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut su = Matrix::zeros(n, p);
    let mut sv = Matrix::zeros(p, d);
    let mut sigma = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_row(dst, &v_t.row(src));
        sigma.push(svd.singular_values[src]);
    }
    SortedSvd { u: su, sigma, v_t: sv }
}

pub(crate) fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Numerical rank with the usual `max(n, d) * eps * sigma_max` cutoff.
pub(crate) fn numerical_rank<T: Real>(a: &Matrix<T>) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    let scale = T::lit(a.nrows().max(a.ncols()) as f64) * T::default_epsilon() * top;
    s.iter().filter(|&&x| x > scale).count()
}

/// Sum of outer products `Σ y_j y_jᵀ` over the given columns of `y`.
pub(crate) fn gram_of_columns<T: Real>(y: &Matrix<T>, cols: &[usize]) -> Matrix<T> {
    let k = y.nrows();
    let mut g = Matrix::zeros(k, k);
    for &j in cols {
        let c = y.column(j);
        g.ger(T::one(), &c, &c, T::one());
    }
    g
}

pub(crate) fn select_columns<T: Real>(y: &Matrix<T>, cols: &[usize]) -> Matrix<T> {
    Matrix::from_fn(y.nrows(), cols.len(), |r, c| y[(r, cols[c])])
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn euclidean_norm<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
