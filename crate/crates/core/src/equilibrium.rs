//! Friedkin-Johnsen equilibrium and the polarization / disagreement metrics.
//!
//! The expressed opinions solve `(I + L) z = s`. `I + L` is symmetric with
//! every eigenvalue at least one, so Jacobi-preconditioned conjugate
//! gradients converge quickly, and a warm start from the previous timestep
//! usually needs only a handful of iterations. All metrics come from that one
//! solve: `P = |z|^2`, `D = z^T L z`, `PD = s . z`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::synthesis::OpinionVector;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Largest graph accepted by [`dense_pd_oracle`].
pub const DENSE_MAX_NODES: usize = 500;

/// A certified solution of `(I + L) x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSolve {
    pub x: Vec<f64>,
    /// `|b - (I + L) x| / |b|`, recomputed from scratch after the last
    /// iteration (zero when `b = 0`).
    pub relative_residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Iteration cap used when none is given: ten sweeps per node.
pub fn default_max_iterations(n: usize) -> usize {
    10 * n.max(2)
}

pub fn solve_shifted(
    g: &Graph,
    b: &[f64],
    tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<ShiftedSolve> {
    solve_shifted_capped(
        g,
        b,
        tol,
        warm_start,
        default_max_iterations(g.node_count()),
    )
}

pub fn solve_shifted_capped(
    g: &Graph,
    b: &[f64],
    tol: f64,
    warm_start: Option<&[f64]>,
    max_iterations: usize,
) -> Result<ShiftedSolve> {
    let n = g.node_count();
    g.check_len(b)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "solver tolerance must be > 0, got {tol}"
        )));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(ShiftedSolve {
            x: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    let mut x = match warm_start {
        Some(w) => {
            g.check_len(w)?;
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + g.degree(i) as f64)).collect();
    let target = tol * b_norm;

    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // Outer loop restarts from the true residual whenever the recurrence has
    // drifted below the target while the true residual has not.
    loop {
        g.shifted_laplacian_mul(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let true_residual = norm(&r);
        if true_residual <= target {
            return Ok(ShiftedSolve {
                x,
                relative_residual: true_residual / b_norm,
                iterations,
            });
        }
        if iterations >= max_iterations {
            return Err(Error::NotConverged {
                iterations,
                residual: true_residual / b_norm,
            });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iterations {
            g.shifted_laplacian_mul(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Equilibrium expressed opinions `z = (I + L)^{-1} s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressedOpinions {
    values: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
}

impl ExpressedOpinions {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Relative residual certificate of the solve that produced these values.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn solve_expressed(
    g: &Graph,
    s: &OpinionVector,
    tol: f64,
    warm_start: Option<&ExpressedOpinions>,
) -> Result<ExpressedOpinions> {
    let solve = solve_shifted(g, s.values(), tol, warm_start.map(|z| z.values()))?;
    Ok(ExpressedOpinions {
        values: solve.x,
        residual_norm: solve.relative_residual,
        iterations: solve.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub polarization_raw: f64,
    pub disagreement_raw: f64,
    pub pd_raw: f64,
    pub polarization_per_node: f64,
    pub disagreement_per_edge: f64,
    pub mse: f64,
}

/// Metrics for a certified `z`. Polarization is `|z|^2`, which equals the
/// variance form only because `s` is mean-centered.
pub fn compute_metrics(
    g: &Graph,
    s: &OpinionVector,
    z: &ExpressedOpinions,
) -> Result<MetricsRecord> {
    let (s, z) = (s.values(), z.values());
    g.check_len(s)?;
    g.check_len(z)?;
    let n = g.node_count() as f64;
    let e = g.edge_count();
    let polarization_raw = dot(z, z);
    let disagreement_raw = g.laplacian_quad(z)?;
    let pd_raw = dot(s, z);
    let mse = z.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    Ok(MetricsRecord {
        polarization_raw,
        disagreement_raw,
        pd_raw,
        polarization_per_node: polarization_raw / n,
        disagreement_per_edge: if e == 0 {
            0.0
        } else {
            disagreement_raw / e as f64
        },
        mse,
    })
}

/// PD of the subgraph holding only the fixed edges: an upper bound on the
/// polarization of any graph containing them.
pub fn fixed_graph_pd(g: &Graph, s: &OpinionVector, tol: f64) -> Result<f64> {
    let fixed = g.fixed_subgraph();
    let z = solve_expressed(&fixed, s, tol, None)?;
    Ok(dot(s.values(), z.values()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensePd {
    pub polarization: f64,
    pub disagreement: f64,
    pub pd: f64,
}

pub fn dense_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        let (u, v) = e.endpoints();
        l[(u, u)] += 1.0;
        l[(v, v)] += 1.0;
        l[(u, v)] -= 1.0;
        l[(v, u)] -= 1.0;
    }
    l
}

/// Dense inverse of `I + L` by Cholesky factorization.
pub fn dense_shifted_inverse(g: &Graph) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    if n > DENSE_MAX_NODES {
        return Err(Error::TooLargeForDense {
            n,
            max: DENSE_MAX_NODES,
        });
    }
    let a = DMatrix::identity(n, n) + dense_laplacian(g);
    let chol = a
        .cholesky()
        .expect("I + L is positive definite for any graph Laplacian");
    Ok(chol.inverse())
}

/// `s^T (I + L)^{-1} s` through a dense Cholesky solve, without forming the
/// inverse.
pub fn dense_pd(g: &Graph, s: &OpinionVector) -> Result<f64> {
    let n = g.node_count();
    g.check_len(s.values())?;
    if n > DENSE_MAX_NODES {
        return Err(Error::TooLargeForDense {
            n,
            max: DENSE_MAX_NODES,
        });
    }
    let a = DMatrix::identity(n, n) + dense_laplacian(g);
    let chol = a
        .cholesky()
        .expect("I + L is positive definite for any graph Laplacian");
    let s = DVector::from_column_slice(s.values());
    Ok(s.dot(&chol.solve(&s)))
}

/// Evaluates the three quadratic forms literally from a dense inverse:
/// `s^T M^2 s`, `s^T M L M s`, `s^T M s` with `M = (I + L)^{-1}`.
pub fn dense_pd_oracle(g: &Graph, s: &OpinionVector) -> Result<DensePd> {
    g.check_len(s.values())?;
    let m = dense_shifted_inverse(g)?;
    let l = dense_laplacian(g);
    let s = DVector::from_column_slice(s.values());
    let quad = |q: &DMatrix<f64>| (s.transpose() * q * &s)[(0, 0)];
    Ok(DensePd {
        polarization: quad(&(&m * &m)),
        disagreement: quad(&(&m * &l * &m)),
        pd: quad(&m),
    })
}
