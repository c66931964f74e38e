//! One-sided Jacobi SVD.
//!
//! Used for rank and subspace diagnostics. nalgebra's bidiagonal SVD can
//! return inaccurate factors for exactly rank-deficient inputs, which is the
//! common case here (band-limited matrices of small rank).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(sigma) V^T`, singular values descending.
///
/// Columns of `u` belonging to zero singular values are left as zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub sigma: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            sigma: t.sigma,
            u: t.v,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = (m as f64).sqrt() * f64::EPSILON;
    // Columns below round-off level of the whole matrix carry no signal.
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.column(p);
                    let wq = w.column(q);
                    (wp.norm_squared(), wq.norm_squared(), wp.dot(&wq))
                };
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s, m);
                rotate(&mut v, p, q, c, s, n);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!("Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")));
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut u = DMatrix::zeros(m, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        if s > 0.0 {
            u.set_column(dst, &(w.column(src) / s));
        }
        v_sorted.set_column(dst, &v.column(src));
        sigma.push(s);
    }
    Ok(Svd { sigma, u, v: v_sorted })
}

fn rotate(x: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64, rows: usize) {
    let data = x.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xa, xb) = (*a, *b);
        *a = c * xa - s * xb;
        *b = s * xa + c * xb;
    }
}
