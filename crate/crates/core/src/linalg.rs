//! Krylov eigensolvers for large sparse operators given as mat-vec closures.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Independent lanes let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalises `w` against `basis` by classical Gram–Schmidt, repeated
/// once when cancellation is severe; returns the projection coefficients.
fn cgs2(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut h = vec![0.0; basis.len()];
    let mut before = norm(w);
    for _ in 0..2 {
        let c: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
        for (q, ci) in basis.iter().zip(&c) {
            axpy(-ci, q, w);
        }
        for (hi, ci) in h.iter_mut().zip(&c) {
            *hi += ci;
        }
        let after = norm(w);
        if after > 0.7 * before {
            break;
        }
        before = after;
    }
    h
}

#[derive(Clone, Debug)]
pub struct DominantPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `‖Av − θv‖/(scale·‖v‖)`.
    pub residual: f64,
    pub matvecs: usize,
}

/// Rightmost eigenpair by thick-restarted (Krylov–Schur style) Arnoldi.
///
/// On restart the Ritz vectors of the rightmost half of the Ritz values are
/// kept together with the last Arnoldi vector. `scale` normalises the
/// residual (typically a norm estimate of `A`).
pub fn arnoldi_rightmost<F>(
    apply: F,
    start: &[f64],
    krylov: usize,
    scale: f64,
    tol: f64,
    max_matvecs: usize,
) -> Result<DominantPair>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = start.len();
    let k = krylov.clamp(4, n.max(4)).min(n);
    let v0n = norm(start);
    if !(v0n > 0.0 && v0n.is_finite()) {
        return Err(Error::InvalidParameter("start vector must be finite and nonzero".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / v0n).collect()];
    // Projected matrix, (k+1) × k; rows past the current size are zero.
    let mut h = DMatrix::<f64>::zeros(k + 1, k);
    let mut matvecs = 0;
    let mut best: Option<DominantPair> = None;
    let mut av = vec![0.0; n];
    loop {
        let mut m = k;
        for j in basis.len() - 1..k {
            apply(&basis[j], &mut av);
            matvecs += 1;
            let mut w = av.clone();
            let coef = cgs2(&basis, &mut w);
            for (i, c) in coef.iter().enumerate() {
                h[(i, j)] = *c;
            }
            let beta = norm(&w);
            h[(j + 1, j)] = beta;
            if beta <= 1e-14 * scale {
                m = j + 1;
                break;
            }
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
        }
        let hm = h.view((0, 0), (m, m)).into_owned();
        let mut eig: Vec<Complex<f64>> = hm.clone().complex_eigenvalues().iter().cloned().collect();
        eig.sort_by(|a, b| b.re.total_cmp(&a.re));
        let theta = eig.iter().find(|z| z.im.abs() <= 1e-10 * (1.0 + z.re.abs())).map(|z| z.re).unwrap_or(eig[0].re);
        let y = null_vector(&hm, theta);
        let mut u = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut u);
        }
        apply(&u, &mut av);
        matvecs += 1;
        let mut r = av.clone();
        axpy(-theta, &u, &mut r);
        let res = norm(&r) / (scale * norm(&u));
        if best.as_ref().is_none_or(|b| res < b.residual) {
            best = Some(DominantPair { value: theta, vector: u.clone(), residual: res, matvecs });
        }
        if res <= tol || m < k {
            let mut b = best.unwrap();
            b.matvecs = matvecs;
            return Ok(b);
        }
        if matvecs >= max_matvecs {
            return Err(Error::NonConvergence { iterations: matvecs, residual: best.map(|b| b.residual).unwrap_or(res) });
        }

        // Real basis of the invariant subspace of the kept Ritz values.
        let keep_target = (k / 2).max(1);
        let mut cols: Vec<DVector<f64>> = vec![y];
        for z in eig.iter() {
            if cols.len() >= keep_target {
                break;
            }
            if (z.re - theta).abs() <= 1e-12 * (1.0 + theta.abs()) && z.im == 0.0 {
                continue;
            }
            if z.im < 0.0 {
                continue;
            }
            if z.im.abs() <= 1e-10 * (1.0 + z.re.abs()) {
                cols.push(null_vector(&hm, z.re));
            } else {
                let c = complex_null_vector(&hm, *z);
                cols.push(c.map(|v| v.re));
                cols.push(c.map(|v| v.im));
            }
        }
        let zmat = DMatrix::from_columns(&cols);
        let q = zmat.qr().q();
        let keep = q.ncols();
        let t = q.transpose() * &hm * &q;
        let f = h.row(m).columns(0, m).into_owned() * &q;
        let mut new_basis = Vec::with_capacity(k + 1);
        for c in 0..keep {
            let mut v = vec![0.0; n];
            for j in 0..m {
                axpy(q[(j, c)], &basis[j], &mut v);
            }
            new_basis.push(v);
        }
        new_basis.push(basis.swap_remove(m));
        basis = new_basis;
        h.fill(0.0);
        h.view_mut((0, 0), (keep, keep)).copy_from(&t);
        for c in 0..keep {
            h[(keep, c)] = f[c];
        }
    }
}

/// Unit vector `y` with `(H − θ) y ≈ 0`, by inverse iteration.
fn null_vector(h: &DMatrix<f64>, theta: f64) -> DVector<f64> {
    let m = h.nrows();
    let hn = h.norm().max(1e-300);
    let mut shifted = h.clone();
    for i in 0..m {
        shifted[(i, i)] -= theta + 1e-13 * hn;
    }
    let lu = shifted.lu();
    let mut y = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(z) if z.iter().all(|v| v.is_finite()) && z.norm() > 0.0 => {
                y = &z / z.norm();
            }
            _ => break,
        }
    }
    y
}

fn complex_null_vector(h: &DMatrix<f64>, theta: Complex<f64>) -> DVector<Complex<f64>> {
    let m = h.nrows();
    let hn = h.norm().max(1e-300);
    let mut shifted: DMatrix<Complex<f64>> = h.map(|v| Complex::new(v, 0.0));
    for i in 0..m {
        shifted[(i, i)] -= theta + Complex::new(1e-13 * hn, 0.0);
    }
    let lu = shifted.lu();
    let mut y = DVector::from_element(m, Complex::new(1.0 / (m as f64).sqrt(), 0.0));
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(z) if z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && z.norm() > 0.0 => {
                let nz = z.norm();
                y = z.map(|v| v / nz);
            }
            _ => break,
        }
    }
    y
}

#[derive(Clone, Debug)]
pub struct TopK {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

/// Largest `k` eigenvalues of a symmetric operator by Chebyshev-filtered
/// subspace iteration.
///
/// `scale` must bound the spectral radius (e.g. the ∞-norm). Each sweep
/// applies a degree-`degree` Chebyshev polynomial that damps `[−scale, cut]`,
/// where `cut` is the lowest Ritz value of the block, followed by
/// Rayleigh–Ritz extraction.
pub fn symmetric_top_k<F>(apply: F, n: usize, k: usize, degree: usize, scale: f64, tol: f64, max_sweeps: usize) -> Result<TopK>
where
    F: Fn(&[f64], &mut [f64]),
{
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot extract {k} eigenvalues from dimension {n}")));
    }
    let p = (k + 5).min(n);
    let degree = degree.max(1);
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..n).map(|i| (((i * 7919 + c * 104_729) % 1009) as f64 / 1009.0) - 0.5 + if c == 0 { 1.0 } else { 0.0 }).collect())
        .collect();
    let lower = -scale;
    let mut cut = -0.01 * scale;
    let mut matvecs = 0;
    let mut tmp = vec![0.0; n];
    let mut last = None;
    for sweep in 0..max_sweeps {
        // Filter (skipped on the first sweep so the first cut comes from Ritz values).
        if sweep > 0 {
            let e = 0.5 * (cut - lower);
            let c = 0.5 * (cut + lower);
            for v in x.iter_mut() {
                let mut prev = v.clone();
                apply(&prev, &mut tmp);
                matvecs += 1;
                let mut cur: Vec<f64> = tmp.iter().zip(&prev).map(|(a, b)| (a - c * b) / e).collect();
                for _ in 1..degree {
                    apply(&cur, &mut tmp);
                    matvecs += 1;
                    let next: Vec<f64> = tmp.iter().zip(&cur).zip(&prev).map(|((a, y), z)| 2.0 * (a - c * y) / e - z).collect();
                    prev = cur;
                    cur = next;
                    let nc = norm(&cur);
                    if nc > 1e100 {
                        cur.iter_mut().for_each(|v| *v /= nc);
                        prev.iter_mut().for_each(|v| *v /= nc);
                    }
                }
                *v = cur;
            }
        }
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
        for (c, mut v) in x.drain(..).enumerate() {
            cgs2(&q, &mut v);
            let mut nv = norm(&v);
            if !(nv > 1e-200) || !nv.is_finite() {
                v = (0..n).map(|i| (((i * 31 + c * 7 + sweep * 13) % 101) as f64) - 50.0).collect();
                cgs2(&q, &mut v);
                nv = norm(&v);
            }
            v.iter_mut().for_each(|t| *t /= nv);
            q.push(v);
        }
        let aq: Vec<Vec<f64>> = q
            .iter()
            .map(|v| {
                let mut out = vec![0.0; n];
                apply(v, &mut out);
                out
            })
            .collect();
        matvecs += p;
        let mut h = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut values = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        for (rank, &c) in order.iter().enumerate() {
            let y = eig.eigenvectors.column(c);
            let mut u = vec![0.0; n];
            let mut au = vec![0.0; n];
            for j in 0..p {
                axpy(y[j], &q[j], &mut u);
                axpy(y[j], &aq[j], &mut au);
            }
            let theta = eig.eigenvalues[c];
            if rank < k {
                axpy(-theta, &u, &mut au);
                values.push(theta);
                residuals.push(norm(&au) / (scale * norm(&u)));
            }
            x.push(u);
        }
        cut = eig.eigenvalues[order[p - 1]].max(lower + 1e-6 * scale);
        let done = residuals.iter().all(|r| *r <= tol);
        last = Some(TopK { values, residuals, matvecs });
        if done {
            return Ok(last.unwrap());
        }
    }
    let r = last.unwrap();
    Err(Error::NonConvergence { iterations: r.matvecs, residual: r.residuals.iter().cloned().fold(0.0, f64::max) })
}
