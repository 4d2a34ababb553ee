//! Smith normal form of an integer matrix.
//!
//! `smith_normal_form(a)` produces unimodular `u`, `v` and diagonal `s`
//! with `u * a * v = s`, nonnegative diagonal entries, and each entry
//! dividing the next (zeros trailing). The pivot strategy picks the entry
//! of smallest nonzero absolute value in the remaining block; intermediate
//! entries can still grow, which is why the analysis pipeline runs this
//! over arbitrary-precision integers.
//!
//! `v_inv` is carried along under the inverse column operations; the
//! isomorphism synthesis in the parent module needs both change-of-basis
//! directions.

use super::matrix::{Mat, Scalar};

#[derive(Clone, Debug)]
pub struct SmithNormalForm<T> {
    /// Diagonal form with the divisibility chain.
    pub s: Mat<T>,
    /// Unimodular row transform.
    pub u: Mat<T>,
    /// Unimodular column transform.
    pub v: Mat<T>,
    /// Inverse of `v`.
    pub v_inv: Mat<T>,
}

impl<T: Scalar> SmithNormalForm<T> {
    /// The certificate: `u * a * v == s`, with `s` diagonal, entries
    /// nonnegative, and the divisibility chain in place.
    pub fn verify(&self, a: &Mat<T>) -> bool {
        if self.u.mul(a).mul(&self.v) != self.s {
            return false;
        }
        if !self.s.is_diagonal() {
            return false;
        }
        let d = self.s.diagonal();
        for w in d.windows(2) {
            if w[0].is_negative() || (w[0].is_zero() && !w[1].is_zero()) {
                return false;
            }
            if !w[0].is_zero() && !w[1].is_zero() && !w[1].is_multiple_of(&w[0]) {
                return false;
            }
        }
        if let Some(last) = d.last() {
            if last.is_negative() {
                return false;
            }
        }
        self.v.mul(&self.v_inv) == Mat::identity(self.v.rows())
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.s.diagonal()
    }

    /// Number of nonzero diagonal entries.
    pub fn rank(&self) -> usize {
        self.diagonal().iter().filter(|d| !d.is_zero()).count()
    }
}

pub fn smith_normal_form<T: Scalar>(a: &Mat<T>) -> SmithNormalForm<T> {
    let (m, n) = (a.rows(), a.cols());
    let mut s = a.clone();
    let mut u = Mat::identity(m);
    let mut v = Mat::identity(n);
    let mut v_inv = Mat::identity(n);

    // Mirrored elementary column operation `col[dst] += c * col[src]`,
    // applied to `s` and `v`; its inverse acts on `v_inv` from the left as
    // `row[src] -= c * row[dst]`. Column swaps invert to row swaps below.
    macro_rules! col_add {
        ($dst:expr, $src:expr, $c:expr) => {{
            let c = $c;
            s.add_col_multiple($dst, $src, &c);
            v.add_col_multiple($dst, $src, &c);
            v_inv.add_row_multiple($src, $dst, &(-c));
        }};
    }

    for t in 0..m.min(n) {
        loop {
            // Smallest nonzero pivot in the remaining block.
            let mut pivot: Option<(usize, usize)> = None;
            for i in t..m {
                for j in t..n {
                    if s[(i, j)].is_zero() {
                        continue;
                    }
                    let better = match pivot {
                        None => true,
                        Some((pi, pj)) => s[(i, j)].abs() < s[(pi, pj)].abs(),
                    };
                    if better {
                        pivot = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = pivot else {
                // Remaining block is all zero; the diagonal is complete.
                return SmithNormalForm { s, u, v, v_inv };
            };
            s.swap_rows(t, pi);
            u.swap_rows(t, pi);
            s.swap_cols(t, pj);
            v.swap_cols(t, pj);
            v_inv.swap_rows(t, pj);
            if s[(t, t)].is_negative() {
                s.negate_row(t);
                u.negate_row(t);
            }

            let mut clean = true;
            for i in t + 1..m {
                let q = s[(i, t)].clone().div_floor(&s[(t, t)]);
                if !q.is_zero() {
                    s.add_row_multiple(i, t, &-q.clone());
                    u.add_row_multiple(i, t, &-q);
                }
                if !s[(i, t)].is_zero() {
                    clean = false;
                }
            }
            for j in t + 1..n {
                let q = s[(t, j)].clone().div_floor(&s[(t, t)]);
                col_add!(j, t, -q);
                if !s[(t, j)].is_zero() {
                    clean = false;
                }
            }
            if !clean {
                // Leftover remainders are strictly smaller than the pivot;
                // loop to re-pivot on one of them.
                continue;
            }

            // Pivot row and column are clear. Make the pivot divide the
            // whole remaining block before moving on.
            let offender = (t + 1..m)
                .flat_map(|i| (t + 1..n).map(move |j| (i, j)))
                .find(|&(i, j)| !s[(i, j)].is_multiple_of(&s[(t, t)]));
            match offender {
                Some((i, _)) => {
                    s.add_row_multiple(t, i, &T::one());
                    u.add_row_multiple(t, i, &T::one());
                }
                None => break,
            }
        }
    }
    SmithNormalForm { s, u, v, v_inv }
}
