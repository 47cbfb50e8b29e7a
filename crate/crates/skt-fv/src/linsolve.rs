//! Direct and iterative linear solvers used by the implicit steppers:
//! dense LU, cyclic (periodic) tridiagonal solves via the Sherman-Morrison
//! correction, periodic block-tridiagonal solves with additional low-rank
//! corrections through the Woodbury identity, and restarted GMRES.

use crate::error::{Error, Result};

/// Dense LU factorization with partial pivoting, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve(format!(
                    "singular pivot in dense LU at column {k}"
                )));
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let m = a[r * n + k] / pivot;
                a[r * n + k] = m;
                if m != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= m * a[k * n + c];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // rows were swapped in full during factorization, so the whole
        // permutation must be applied before the triangular sweeps
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..n {
                    b[r] -= self.lu[r * n + k] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu[k * n + k];
            let bk = b[k];
            if bk != 0.0 {
                for r in 0..k {
                    b[r] -= self.lu[r * n + k] * bk;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Periodic (cyclic) tridiagonal matrix stored by row with wrap semantics:
/// `lower[i] = A[i][i-1 mod n]`, `diag[i] = A[i][i]`,
/// `upper[i] = A[i][i+1 mod n]`. Requires `n >= 3` so the corner entries are
/// distinct from the inner bands.
#[derive(Debug, Clone)]
pub struct PeriodicTridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PeriodicTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                self.lower[i] * x[(i + n - 1) % n]
                    + self.diag[i] * x[i]
                    + self.upper[i] * x[(i + 1) % n]
            })
            .collect()
    }

    /// Transposed system matrix (also periodic tridiagonal).
    pub fn transpose(&self) -> PeriodicTridiag {
        let n = self.n();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            // (A^T)[i][i+1] = A[i+1][i] = lower[i+1]
            upper[i] = self.lower[(i + 1) % n];
            lower[i] = self.upper[(i + n - 1) % n];
        }
        PeriodicTridiag { lower, diag: self.diag.clone(), upper }
    }

    /// Thomas algorithm on the corner-free part plus a rank-one
    /// Sherman-Morrison correction for the two periodic corner entries.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if n < 3 {
            return Err(Error::LinearSolve(
                "cyclic tridiagonal solve needs at least 3 unknowns".into(),
            ));
        }
        let alpha = self.lower[0]; // A[0][n-1]
        let beta = self.upper[n - 1]; // A[n-1][0]
        let gamma = -self.diag[0];
        let mut b = self.diag.clone();
        b[0] -= gamma;
        b[n - 1] -= alpha * beta / gamma;

        let thomas = |b: &[f64], r: &[f64]| -> Result<Vec<f64>> {
            let mut gam = vec![0.0; n];
            let mut x = vec![0.0; n];
            let mut bet = b[0];
            if bet == 0.0 {
                return Err(Error::LinearSolve("zero pivot in Thomas sweep".into()));
            }
            x[0] = r[0] / bet;
            for j in 1..n {
                gam[j] = self.upper[j - 1] / bet;
                bet = b[j] - self.lower[j] * gam[j];
                if bet == 0.0 || !bet.is_finite() {
                    return Err(Error::LinearSolve("zero pivot in Thomas sweep".into()));
                }
                x[j] = (r[j] - self.lower[j] * x[j - 1]) / bet;
            }
            for j in (0..n - 1).rev() {
                x[j] -= gam[j + 1] * x[j + 1];
            }
            Ok(x)
        };

        let x = thomas(&b, rhs)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = beta;
        let z = thomas(&b, &u)?;
        let denom = 1.0 + z[0] + alpha * z[n - 1] / gamma;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearSolve("singular cyclic correction".into()));
        }
        let fact = (x[0] + alpha * x[n - 1] / gamma) / denom;
        Ok(x.iter().zip(z.iter()).map(|(xi, zi)| xi - fact * zi).collect())
    }
}

/// 2x2 block stored row-major.
pub type Block2 = [f64; 4];

#[inline]
pub fn block_mul(a: &Block2, b: &Block2) -> Block2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

#[inline]
pub fn block_sub(a: &Block2, b: &Block2) -> Block2 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

#[inline]
pub fn block_inv(a: &Block2) -> Result<Block2> {
    let det = a[0] * a[3] - a[1] * a[2];
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-300 + 1e-14 * scale * scale * f64::EPSILON {
        return Err(Error::LinearSolve("singular 2x2 pivot block".into()));
    }
    let inv = 1.0 / det;
    Ok([a[3] * inv, -a[1] * inv, -a[2] * inv, a[0] * inv])
}

#[inline]
pub fn block_vec(a: &Block2, x: f64, y: f64) -> (f64, f64) {
    (a[0] * x + a[1] * y, a[2] * x + a[3] * y)
}

/// Periodic block-tridiagonal matrix with 2x2 blocks, row-wrap storage as in
/// [`PeriodicTridiag`]: `lower[0]` and `upper[n-1]` are the periodic corner
/// blocks.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    pub lower: Vec<Block2>,
    pub diag: Vec<Block2>,
    pub upper: Vec<Block2>,
}

impl BlockTridiag {
    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_blocks();
        let mut y = vec![0.0; 2 * n];
        for i in 0..n {
            let im = (i + n - 1) % n;
            let ip = (i + 1) % n;
            let (a, b) = block_vec(&self.lower[i], x[2 * im], x[2 * im + 1]);
            let (c, d) = block_vec(&self.diag[i], x[2 * i], x[2 * i + 1]);
            let (e, f) = block_vec(&self.upper[i], x[2 * ip], x[2 * ip + 1]);
            y[2 * i] = a + c + e;
            y[2 * i + 1] = b + d + f;
        }
        y
    }
}

/// Block-Thomas factorization of the corner-free block tridiagonal part.
struct BlockThomasFactor {
    n: usize,
    inv_d: Vec<Block2>,
    l: Vec<Block2>,
    upper: Vec<Block2>,
}

impl BlockThomasFactor {
    fn factor(m: &BlockTridiag) -> Result<Self> {
        let n = m.n_blocks();
        let mut inv_d = Vec::with_capacity(n);
        let mut l = vec![[0.0; 4]; n];
        let mut d_prev = m.diag[0];
        inv_d.push(block_inv(&d_prev)?);
        for i in 1..n {
            let li = block_mul(&m.lower[i], &inv_d[i - 1]);
            let di = block_sub(&m.diag[i], &block_mul(&li, &m.upper[i - 1]));
            inv_d.push(block_inv(&di)?);
            l[i] = li;
            d_prev = di;
        }
        let _ = d_prev;
        Ok(BlockThomasFactor { n, inv_d, l, upper: m.upper.clone() })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 1..n {
            let (a, c) = block_vec(&self.l[i], y[2 * (i - 1)], y[2 * (i - 1) + 1]);
            y[2 * i] -= a;
            y[2 * i + 1] -= c;
        }
        let mut x = vec![0.0; 2 * n];
        let (a, c) = block_vec(&self.inv_d[n - 1], y[2 * (n - 1)], y[2 * (n - 1) + 1]);
        x[2 * (n - 1)] = a;
        x[2 * (n - 1) + 1] = c;
        for i in (0..n - 1).rev() {
            let (ua, uc) = block_vec(&self.upper[i], x[2 * (i + 1)], x[2 * (i + 1) + 1]);
            let (a, c) = block_vec(&self.inv_d[i], y[2 * i] - ua, y[2 * i + 1] - uc);
            x[2 * i] = a;
            x[2 * i + 1] = c;
        }
        x
    }
}

/// Direct solver for `(B + sum_r u_r v_r^T) x = b` where `B` is a periodic
/// block tridiagonal matrix. The periodic corner blocks and any caller
/// supplied rank-one terms are folded into a single Woodbury correction on
/// top of the corner-free block-Thomas factorization.
pub struct BandedLowRank {
    factor: BlockThomasFactor,
    vt_rows: Vec<Vec<f64>>,
    z_cols: Vec<Vec<f64>>,
    cap_lu: Option<DenseLu>,
}

impl BandedLowRank {
    /// `extra` holds additional rank-one corrections `(u, v)` with
    /// `correction = u v^T`, each vector of length `2 * n_blocks`.
    pub fn new(matrix: &BlockTridiag, extra: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let n = matrix.n_blocks();
        if n < 3 {
            return Err(Error::LinearSolve(
                "periodic block solve needs at least 3 cells".into(),
            ));
        }
        let dim = 2 * n;
        let factor = BlockThomasFactor::factor(matrix)?;

        // periodic corners as four rank-one pairs
        let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(4 + extra.len());
        let mut vt_rows: Vec<Vec<f64>> = Vec::with_capacity(4 + extra.len());
        let corner = matrix.lower[0]; // block (0, n-1)
        for r in 0..2 {
            let mut u = vec![0.0; dim];
            u[r] = 1.0;
            let mut v = vec![0.0; dim];
            v[2 * (n - 1)] = corner[2 * r];
            v[2 * (n - 1) + 1] = corner[2 * r + 1];
            u_cols.push(u);
            vt_rows.push(v);
        }
        let corner = matrix.upper[n - 1]; // block (n-1, 0)
        for r in 0..2 {
            let mut u = vec![0.0; dim];
            u[2 * (n - 1) + r] = 1.0;
            let mut v = vec![0.0; dim];
            v[0] = corner[2 * r];
            v[1] = corner[2 * r + 1];
            u_cols.push(u);
            vt_rows.push(v);
        }
        for (u, v) in extra {
            debug_assert_eq!(u.len(), dim);
            debug_assert_eq!(v.len(), dim);
            u_cols.push(u.clone());
            vt_rows.push(v.clone());
        }

        let q = u_cols.len();
        let z_cols: Vec<Vec<f64>> = u_cols.iter().map(|u| factor.solve(u)).collect();
        let mut cap = vec![0.0; q * q];
        for (r, vt) in vt_rows.iter().enumerate() {
            for (c, z) in z_cols.iter().enumerate() {
                let dot: f64 = vt.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
                cap[r * q + c] = dot + if r == c { 1.0 } else { 0.0 };
            }
        }
        let cap_lu = Some(DenseLu::factor(cap, q)?);
        Ok(BandedLowRank { factor, vt_rows, z_cols, cap_lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.factor.solve(b);
        let q = self.vt_rows.len();
        if q == 0 {
            return x;
        }
        let mut w: Vec<f64> = self
            .vt_rows
            .iter()
            .map(|vt| vt.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
            .collect();
        self.cap_lu.as_ref().unwrap().solve_in_place(&mut w);
        for (z, wi) in self.z_cols.iter().zip(w.iter()) {
            for (xi, zi) in x.iter_mut().zip(z.iter()) {
                *xi -= wi * zi;
            }
        }
        x
    }
}

/// Restarted GMRES configuration.
#[derive(Debug, Clone, Copy)]
pub struct GmresParams {
    pub restart: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GmresParams {
    fn default() -> Self {
        GmresParams { restart: 60, tol: 1e-8, max_iters: 600 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`: the Krylov space is
/// built for `A M^-1` and the solution recovered as `M^-1 y`, so the
/// reported residual is the true one.
pub fn gmres<A, M>(apply: A, precond: M, b: &[f64], params: &GmresParams) -> Result<GmresOutcome>
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let m = params.restart.max(1);
    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;
    let mut scratch = vec![0.0; n];
    let mut rel = 1.0;

    while total_iters < params.max_iters {
        // residual r = b - A x
        apply(&x, &mut scratch);
        let mut r: Vec<f64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= params.tol {
            return Ok(GmresOutcome {
                x,
                iterations: total_iters,
                relative_residual: rel,
                converged: true,
            });
        }
        for ri in r.iter_mut() {
            *ri /= beta;
        }
        let mut v: Vec<Vec<f64>> = vec![r];
        let mut h = vec![0.0; (m + 1) * m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0usize;

        for k in 0..m {
            if total_iters >= params.max_iters {
                break;
            }
            total_iters += 1;
            // w = A M^-1 v_k
            precond(&v[k], &mut scratch);
            let mut w = vec![0.0; n];
            apply(&scratch, &mut w);
            // modified Gram-Schmidt
            for j in 0..=k {
                let dot: f64 = w.iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                h[j * m + k] = dot;
                for (wi, vj) in w.iter_mut().zip(&v[j]) {
                    *wi -= dot * vj;
                }
            }
            let wn = norm(&w);
            h[(k + 1) * m + k] = wn;
            if !wn.is_finite() {
                return Err(Error::LinearSolve("GMRES produced a non-finite vector".into()));
            }
            // apply accumulated Givens rotations to the new column
            for j in 0..k {
                let t = cs[j] * h[j * m + k] + sn[j] * h[(j + 1) * m + k];
                h[(j + 1) * m + k] = -sn[j] * h[j * m + k] + cs[j] * h[(j + 1) * m + k];
                h[j * m + k] = t;
            }
            let denom = (h[k * m + k] * h[k * m + k] + wn * wn).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k * m + k] / denom;
            sn[k] = wn / denom;
            h[k * m + k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / b_norm;
            if wn > 0.0 {
                for wi in w.iter_mut() {
                    *wi /= wn;
                }
                v.push(w);
            }
            if rel <= params.tol || wn == 0.0 {
                break;
            }
        }

        if k_used > 0 {
            // back substitution for the small least squares problem
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in i + 1..k_used {
                    s -= h[i * m + j] * y[j];
                }
                y[i] = s / h[i * m + i];
            }
            let mut update = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                for (ui, vj) in update.iter_mut().zip(&v[j]) {
                    *ui += yj * vj;
                }
            }
            precond(&update, &mut scratch);
            for (xi, si) in x.iter_mut().zip(&scratch) {
                *xi += si;
            }
        }
        if rel <= params.tol {
            return Ok(GmresOutcome {
                x,
                iterations: total_iters,
                relative_residual: rel,
                converged: true,
            });
        }
    }
    Ok(GmresOutcome { x, iterations: total_iters, relative_residual: rel, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve_oracle(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
        // plain Gaussian elimination with partial pivoting, written locally
        let mut m = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let mut p = k;
            for r in k + 1..n {
                if m[r * n + k].abs() > m[p * n + k].abs() {
                    p = r;
                }
            }
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
            for r in k + 1..n {
                let f = m[r * n + k] / m[k * n + k];
                for c in k..n {
                    m[r * n + c] -= f * m[k * n + c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for c in k + 1..n {
                x[k] -= m[k * n + c] * x[c];
            }
            x[k] /= m[k * n + k];
        }
        x
    }

    #[test]
    fn dense_lu_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 17;
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a_dd = a.clone();
        for i in 0..n {
            a_dd[i * n + i] += 5.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = DenseLu::factor(a_dd.clone(), n).unwrap();
        let x = lu.solve(&b);
        let y = dense_solve_oracle(&a_dd, n, &b);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-11);
        }
    }

    #[test]
    fn dense_lu_handles_row_pivoting() {
        // not diagonally dominant: every column forces an interchange
        let n = 3usize;
        let a = vec![0.0, 2.0, 1.0, 1.0, 0.0, 3.0, 2.0, 1.0, 0.0];
        let b = vec![5.0, 10.0, 4.0];
        let lu = DenseLu::factor(a.clone(), n).unwrap();
        let x = lu.solve(&b);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12, "row {i}: {ax} vs {}", b[i]);
        }
        // and a larger random zero-diagonal system against the oracle
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 24usize;
        let mut a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for i in 0..m {
            a[i * m + i] = 0.0;
        }
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = DenseLu::factor(a.clone(), m).unwrap();
        let x = lu.solve(&b);
        let y = dense_solve_oracle(&a, m, &b);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-9);
        }
    }

    #[test]
    fn cyclic_tridiag_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [3usize, 5, 16, 33] {
            let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(3.0..5.0)).collect();
            let m = PeriodicTridiag { lower, diag, upper };
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = m.solve(&b).unwrap();
            // dense reconstruction
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                dense[i * n + (i + n - 1) % n] += m.lower[i];
                dense[i * n + i] += m.diag[i];
                dense[i * n + (i + 1) % n] += m.upper[i];
            }
            let y = dense_solve_oracle(&dense, n, &b);
            for (xi, yi) in x.iter().zip(&y) {
                assert!((xi - yi).abs() < 1e-11, "n = {n}");
            }
            // and the residual is small
            let ax = m.matvec(&x);
            for (a, bb) in ax.iter().zip(&b) {
                assert!((a - bb).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn block_tridiag_low_rank_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12usize;
        let dim = 2 * n;
        let rand_block = |rng: &mut ChaCha8Rng, scale: f64| -> Block2 {
            [
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
            ]
        };
        let mut diag: Vec<Block2> = (0..n).map(|_| rand_block(&mut rng, 0.5)).collect();
        for d in diag.iter_mut() {
            d[0] += 6.0;
            d[3] += 6.0;
        }
        let lower: Vec<Block2> = (0..n).map(|_| rand_block(&mut rng, 0.8)).collect();
        let upper: Vec<Block2> = (0..n).map(|_| rand_block(&mut rng, 0.8)).collect();
        let m = BlockTridiag { lower, diag, upper };
        let extra: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|_| {
                (
                    (0..dim).map(|_| rng.gen_range(-0.4..0.4)).collect(),
                    (0..dim).map(|_| rng.gen_range(-0.4..0.4)).collect(),
                )
            })
            .collect();
        let solver = BandedLowRank::new(&m, &extra).unwrap();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solver.solve(&b);

        // dense reconstruction of B + sum u v^T
        let mut dense = vec![0.0; dim * dim];
        for i in 0..n {
            let put = |dense: &mut Vec<f64>, bi: usize, bj: usize, blk: &Block2| {
                for r in 0..2 {
                    for c in 0..2 {
                        dense[(2 * bi + r) * dim + 2 * bj + c] += blk[2 * r + c];
                    }
                }
            };
            put(&mut dense, i, (i + n - 1) % n, &m.lower[i]);
            put(&mut dense, i, i, &m.diag[i]);
            put(&mut dense, i, (i + 1) % n, &m.upper[i]);
        }
        for (u, v) in &extra {
            for r in 0..dim {
                for c in 0..dim {
                    dense[r * dim + c] += u[r] * v[c];
                }
            }
        }
        let y = dense_solve_oracle(&dense, dim, &b);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_solves_preconditioned_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40usize;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = rng.gen_range(-0.3..0.3);
            }
            a[i * n + i] += 4.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            }
        };
        // Jacobi preconditioner
        let precond = |r: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = r[i] / a[i * n + i];
            }
        };
        let params = GmresParams { restart: 25, tol: 1e-12, max_iters: 400 };
        let out = gmres(apply, precond, &b, &params).unwrap();
        assert!(out.converged, "rel = {}", out.relative_residual);
        let mut ax = vec![0.0; n];
        apply(&out.x, &mut ax);
        for (axi, bi) in ax.iter().zip(&b) {
            assert!((axi - bi).abs() < 1e-10);
        }
    }
}
