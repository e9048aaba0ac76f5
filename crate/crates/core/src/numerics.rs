//! Small numerical kernels shared by the estimators: compensated summation,
//! stable logistic helpers, and dense solvers for the tiny systems the
//! M-steps and the null fit produce.

use crate::scalar::Scalar;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Scalar> KahanSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

impl<T: Scalar> FromIterator<T> for KahanSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn ksum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<KahanSum<T>>().value()
}

/// `ln(1 + exp(t))` without overflow.
#[inline]
pub fn softplus<T: Scalar>(t: T) -> T {
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn l1_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + x.abs())
}

#[inline]
pub fn soft_threshold<T: Scalar>(z: T, thr: T) -> T {
    if z > thr {
        z - thr
    } else if z < -thr {
        z + thr
    } else {
        T::zero()
    }
}

/// Solves the symmetric positive-definite system `a x = b` in place via
/// Cholesky. `a` is row-major `k x k`. Returns `None` when a pivot falls
/// below `rel_tol` times the largest diagonal entry.
pub fn cholesky_solve<T: Scalar>(a: &[T], b: &[T], rel_tol: T) -> Option<Vec<T>> {
    let k = b.len();
    debug_assert_eq!(a.len(), k * k);
    let mut l = vec![T::zero(); k * k];
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(T::zero(), T::max);
    if scale <= T::zero() || !scale.is_finite() {
        return None;
    }
    for j in 0..k {
        let mut diag = a[j * k + j];
        for p in 0..j {
            diag -= l[j * k + p] * l[j * k + p];
        }
        if diag <= rel_tol * scale {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * k + j] = ljj;
        for i in (j + 1)..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = s / ljj;
        }
    }
    let mut x = b.to_vec();
    for i in 0..k {
        let mut s = x[i];
        for p in 0..i {
            s -= l[i * k + p] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = x[i];
        for p in (i + 1)..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}

/// Lower Cholesky factor of a row-major SPD matrix, or `None` if not PD.
pub fn cholesky_lower<T: Scalar>(a: &[T], k: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); k * k];
    for j in 0..k {
        let mut diag = a[j * k + j];
        for p in 0..j {
            diag -= l[j * k + p] * l[j * k + p];
        }
        if !(diag > T::zero()) {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * k + j] = ljj;
        for i in (j + 1)..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = s / ljj;
        }
    }
    Some(l)
}

/// Least squares via Householder QR with column pivoting.
///
/// `a` is row-major `m x k` with `m >= k`. Rank deficiency is declared when
/// `|R_jj| <= rel_tol * |R_00|` for some `j`; in that case `None` is returned.
pub fn lstsq_qr<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], rel_tol: T) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m);
    if m < k || k == 0 {
        return None;
    }
    // column-major working copy
    let mut q: Vec<Vec<T>> = (0..k).map(|j| (0..m).map(|i| a[i * k + j]).collect()).collect();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut norms: Vec<T> = q.iter().map(|c| ksum(c.iter().map(|&v| v * v))).collect();
    let mut r00 = T::zero();

    for j in 0..k {
        // pivot: largest remaining column norm
        let (piv, _) = norms[j..]
            .iter()
            .enumerate()
            .fold((j, T::neg_infinity()), |best, (o, &v)| {
                if v > best.1 {
                    (j + o, v)
                } else {
                    best
                }
            });
        q.swap(j, piv);
        norms.swap(j, piv);
        perm.swap(j, piv);

        let col = &q[j];
        let alpha = ksum(col[j..].iter().map(|&v| v * v)).sqrt();
        if j == 0 {
            r00 = alpha;
            if r00 <= T::zero() {
                return None;
            }
        }
        if alpha <= rel_tol * r00 {
            return None;
        }
        let sign = if col[j] >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = col[j..].to_vec();
        v[0] += sign * alpha;
        let vnorm2 = ksum(v.iter().map(|&x| x * x));
        let two = T::c(2.0);
        for c in q.iter_mut().skip(j) {
            let proj = dot(&v, &c[j..]) * two / vnorm2;
            for (ci, &vi) in c[j..].iter_mut().zip(&v) {
                *ci -= proj * vi;
            }
        }
        let proj = dot(&v, &rhs[j..]) * two / vnorm2;
        for (ri, &vi) in rhs[j..].iter_mut().zip(&v) {
            *ri -= proj * vi;
        }
        for (jj, c) in q.iter().enumerate().skip(j + 1) {
            norms[jj] = ksum(c[j + 1..].iter().map(|&x| x * x));
        }
    }

    // back substitution on R (upper triangle stored in q columns)
    let mut z = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in (i + 1)..k {
            s -= q[p][i] * z[p];
        }
        z[i] = s / q[i][i];
    }
    let mut x = vec![T::zero(); k];
    for (j, &pj) in perm.iter().enumerate() {
        x[pj] = z[j];
    }
    Some(x)
}

/// Sample mean and standard deviation with divisor `n - 1`.
pub fn mean_sd<T: Scalar>(v: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(v.len());
    let mean = ksum(v.iter().copied()) / n;
    let ss = ksum(v.iter().map(|&x| (x - mean) * (x - mean)));
    let sd = if v.len() > 1 {
        (ss / (n - T::one())).sqrt()
    } else {
        T::zero()
    };
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kahan_recovers_cancelled_terms() {
        let vals = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(ksum(vals.iter().copied()), 2.0);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_abs_diff_eq!(softplus(800.0_f64), 800.0, epsilon = 1e-12);
        assert!(softplus(-800.0_f64) >= 0.0);
        assert_abs_diff_eq!(softplus(0.0_f64), 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0], 1e-12).unwrap();
        assert_abs_diff_eq!(4.0 * x[0] + 2.0 * x[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(2.0 * x[0] + 3.0 * x[1], 1.0, epsilon = 1e-12);
        assert!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], 1e-10).is_none());
    }

    #[test]
    fn qr_matches_exact_fit_and_detects_rank_loss() {
        // y = 1 + 2 t on four points
        let a = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let b = [1.0, 3.0, 5.0, 7.0];
        let x = lstsq_qr(&a, 4, 2, &b, 1e-10).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);

        let dup = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!(lstsq_qr(&dup, 3, 2, &[1.0, 2.0, 3.0], 1e-10).is_none());
    }

    #[test]
    fn soft_threshold_zeroes_inside_band() {
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }
}
