//! Independent oracles used to cross-check the main numerical paths:
//! finite differences, a Nyström eigen-solve, and the exactly solvable
//! one-point model.

use serde::Serialize;
use std::time::Instant;

use crate::ensemble::{Ensemble, Trace, TraceMeta, TraceRow};
use crate::error::{Error, Result};
use crate::quadrature::{gl8, piecewise_integral_cuts, uniform_cuts};
use crate::spectral::{ktilde_eigenpair, ktilde_kernel, r_eigenpair, k_applied_numeric};
use crate::spline_model::{GroundTruth, Model, Weight};

/// Central differences `(F(w + εe_i) − F(w − εe_i)) / 2ε`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "eps must be positive");
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            x[i] = w[i] + eps;
            let up = f(&x);
            x[i] = w[i] - eps;
            let down = f(&x);
            x[i] = w[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Midpoint discretization of a symmetric kernel on `[0, 1]²`.
pub struct NystromProblem<K: Fn(f64, f64) -> f64> {
    kernel: K,
    n: usize,
}

impl<K: Fn(f64, f64) -> f64> NystromProblem<K> {
    pub fn new(kernel: K, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::Input(format!("Nystrom grid needs n >= 16, got {n}")));
        }
        let probes = [0.03, 0.21, 0.5, 0.77, 0.98];
        for &x in &probes {
            for &y in &probes {
                let (a, b) = (kernel(x, y), kernel(y, x));
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::Input(format!("kernel is not symmetric at ({x}, {y})")));
                }
            }
        }
        Ok(Self { kernel, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    /// Row-major `K(x_i, x_j)/n`.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = (self.kernel)(self.node(i), self.node(j)) / n as f64;
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        m
    }
}

/// All eigenvalues of a symmetric row-major matrix by cyclic Jacobi
/// rotations, in descending order.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&a) <= 1e-12 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Trace left over when the pivoted Cholesky compression stops; bounds the
/// eigenvalue error of the compressed problem.
pub const COMPRESSION_TOL: f64 = 1e-10;
/// Below this size the full matrix goes straight to Jacobi.
const DIRECT_LIMIT: usize = 200;

/// Pivoted Cholesky factor `L` (n×r, column-major) with `A ≈ LLᵀ`, or
/// `None` if `A` is detectably indefinite.
fn pivoted_cholesky(a: &[f64], n: usize, tol: f64) -> Option<(Vec<Vec<f64>>, usize)> {
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let rest: f64 = d.iter().sum();
        if rest <= tol || cols.len() == n {
            return Some((cols, n));
        }
        let (piv, &dp) = d.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
        if dp <= 0.0 || d.iter().any(|&v| v < -1e-12) {
            return None;
        }
        let root = dp.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            let mut v = a[i * n + piv];
            for l in &cols {
                v -= l[i] * l[piv];
            }
            col[i] = v / root;
        }
        for i in 0..n {
            d[i] -= col[i] * col[i];
        }
        d[piv] = 0.0;
        cols.push(col);
    }
}

/// Top `count` eigenvalues of the Nyström matrix, descending.
pub fn nystrom_eigen<K: Fn(f64, f64) -> f64>(prob: &NystromProblem<K>, count: usize) -> Result<Vec<f64>> {
    let n = prob.n;
    if count > n {
        return Err(Error::Input(format!("requested {count} eigenvalues from a {n}-point grid")));
    }
    let a = prob.matrix();
    let compressed = if n > DIRECT_LIMIT { pivoted_cholesky(&a, n, COMPRESSION_TOL) } else { None };
    let mut eig = match compressed {
        Some((cols, _)) => {
            // nonzero spectrum of LLᵀ equals that of the r×r Gram matrix LᵀL
            let r = cols.len();
            let mut g = vec![0.0; r * r];
            for i in 0..r {
                for j in 0..=i {
                    let v: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
                    g[i * r + j] = v;
                    g[j * r + i] = v;
                }
            }
            let mut e = jacobi_eigenvalues(g, r);
            e.resize(n, 0.0);
            e
        }
        None => jacobi_eigenvalues(a, n),
    };
    eig.truncate(count);
    Ok(eig)
}

/// Observed convergence order from eigenvalues at `n`, `2n`, `4n`.
pub fn richardson_order(coarse: f64, mid: f64, fine: f64) -> f64 {
    ((coarse - mid).abs() / (mid - fine).abs()).log2()
}

/// Initial density of the one-point model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OnePointInit {
    Uniform { lo: f64, hi: f64 },
    Atom { w: f64 },
}

impl OnePointInit {
    pub fn mean(&self) -> f64 {
        match *self {
            OnePointInit::Uniform { lo, hi } => 0.5 * (lo + hi),
            OnePointInit::Atom { w } => w,
        }
    }

    /// Deterministic quantile sample of size `n`.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        match *self {
            OnePointInit::Uniform { lo, hi } => (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect(),
            OnePointInit::Atom { w } => vec![w; n],
        }
    }

    /// `∫ w dp′(w)` from the boundary terms of the density's derivative.
    fn derivative_first_moment(&self) -> f64 {
        match *self {
            // p′ = (δ_lo − δ_hi)/(hi − lo)
            OnePointInit::Uniform { lo, hi } => (lo - hi) / (hi - lo),
            // p′ = −δ′_w
            OnePointInit::Atom { .. } => -1.0,
        }
    }
}

/// Closed-form solution of the one-point model `φ(w, 0) = w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OnePointExact {
    pub loss: f64,
    /// `p(w, t) = p₀(w + shift)`.
    pub shift: f64,
    pub mean: f64,
}

pub fn one_point_exact(p0: &OnePointInit, y: f64, t: f64) -> OnePointExact {
    let y0 = p0.mean();
    let decay = (-t).exp();
    OnePointExact {
        loss: (y - y0).powi(2) / 2.0 * decay * decay,
        shift: (y - y0) * (-t).exp_m1(),
        mean: y + (y0 - y) * decay,
    }
}

/// Loss predicted by the single-mode linear expansion around the limit.
pub fn one_point_linearized(p0: &OnePointInit, y: f64, t: f64) -> f64 {
    let q = p0.derivative_first_moment();
    let y0 = p0.mean();
    // ⟨K q, q⟩ = (∫ w q)² with K(w, w') = ww'; eigenvalue −1
    let kqq = q * q;
    let proj = (y - y0) * kqq;
    0.5 * proj * proj / kqq * (-2.0 * t).exp()
}

/// Particle flow `ẇ_n = −(w̄ − y)` integrated with RK4.
pub fn one_point_simulate(p0: &OnePointInit, y: f64, n: usize, dt: f64, t_end: f64) -> Result<Trace> {
    if n == 0 || !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Input("need n >= 1, dt > 0, t_end >= 0".into()));
    }
    let mut w = p0.sample(n);
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(TraceRow { t: 0.0, loss: 0.5 * (mean(&w) - y).powi(2), weights: None });
    for k in 1..=steps {
        // every particle shares the velocity, so the stages only move the mean
        let m = mean(&w);
        let v = |m: f64| -(m - y);
        let k1 = v(m);
        let k2 = v(m + 0.5 * dt * k1);
        let k3 = v(m + 0.5 * dt * k2);
        let k4 = v(m + dt * k3);
        let dw = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        w.iter_mut().for_each(|x| *x += dw);
        rows.push(TraceRow { t: k as f64 * dt, loss: 0.5 * (mean(&w) - y).powi(2), weights: None });
    }
    Ok(Trace {
        rows,
        meta: TraceMeta { scenario: "one-point".into(), seed: 0, n, dt, t_end, ground_truth: None, dt_halvings: 0 },
    })
}

/// One entry of the oracle report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub pass: bool,
    pub wall_time_s: f64,
}

/// Published reference values of the small-`c` kernel's leading eigenvalues.
pub const REFERENCE_ZETA: [f64; 3] = [0.08089, 0.002059, 0.0002627];

fn fd_spline_check() -> f64 {
    let f = GroundTruth::sine(0.7, 1);
    let start = [(0.3, 0.12), (-0.8, 0.37), (1.1, 0.55), (0.4, 0.81), (-0.2, -0.15)];
    let flat: Vec<f64> = start.iter().flat_map(|&(c, h)| [c, h]).collect();
    let loss_at = |w: &[f64]| {
        let ws = w.chunks(2).map(|p| Weight::new(p[0], p[1])).collect();
        Ensemble::new(ws, Model::Full).unwrap().loss(&f)
    };
    let ens = Ensemble::new(start.iter().map(|&(c, h)| Weight::new(c, h)).collect(), Model::Full).unwrap();
    let n = ens.len() as f64;
    let analytic: Vec<f64> = ens.velocities(&f).into_iter().flat_map(|(dc, dh)| [-dc / n, -dh / n]).collect();
    let fd = fd_gradient(loss_at, &flat, 1e-6);
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    fd.iter().zip(&analytic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn quadrature_refinement_check() -> f64 {
    let f = GroundTruth::sine(1.3, 3);
    let mut worst = 0.0f64;
    for (a, b) in [(0.0, 1.0), (0.17, 0.64)] {
        for j in 0..2 {
            let closed = f.moment(a, b, j);
            let coarse = piecewise_integral_cuts(|x| x.powi(j as i32) * f.eval(x), &uniform_cuts(a, b, 16)).unwrap();
            let fine = piecewise_integral_cuts(|x| x.powi(j as i32) * f.eval(x), &uniform_cuts(a, b, 32)).unwrap();
            worst = worst.max((closed - fine).abs()).max((coarse - fine).abs());
        }
    }
    worst
}

fn loss_rate_check() -> f64 {
    let f = GroundTruth::x_squared();
    let ws = (0..7).map(|i| Weight::new(0.3 - 0.1 * i as f64, 0.05 + 0.13 * i as f64)).collect();
    let (lhs, rhs) = Ensemble::new(ws, Model::Full).unwrap().loss_rate_check(&f);
    (lhs - rhs).abs() / rhs.abs().max(1e-300)
}

fn kernel_application_check() -> f64 {
    let mut worst = 0.0f64;
    for k in [0, 3, 7] {
        let p = r_eigenpair(k);
        for h in [0.0, 0.4, 0.9] {
            worst = worst.max((p.k_applied(h) - k_applied_numeric(&p, h)).abs());
        }
    }
    // the eigenfunction identity K̃ s = ζ s at one point, by plain quadrature
    let s = ktilde_eigenpair(1);
    let h = 0.35;
    let ks = gl8(0.0, h, |x| ktilde_kernel(h, x) * s.eval(x))
        + piecewise_integral_cuts(|x| ktilde_kernel(h, x) * s.eval(x), &uniform_cuts(h, 1.0, 16)).unwrap();
    worst.max((ks - s.zeta * s.eval(h)).abs())
}

/// Run every oracle and collect a pass/fail report.
pub fn run_oracle_suite() -> Result<OracleReport> {
    let start = Instant::now();
    let mut checks = vec![
        OracleCheck::new("quadrature_refinement", quadrature_refinement_check(), 1e-12),
        OracleCheck::new("fd_gradient_spline_loss", fd_spline_check(), 1e-6),
        OracleCheck::new("loss_rate_identity", loss_rate_check(), 1e-10),
        OracleCheck::new("kernel_application", kernel_application_check(), 1e-12),
    ];

    let mut top = Vec::new();
    for n in [500, 1000, 2000] {
        top.push(nystrom_eigen(&NystromProblem::new(ktilde_kernel, n)?, 6)?);
    }
    let fine = &top[2];
    let vs_reference = fine
        .iter()
        .zip(REFERENCE_ZETA)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(OracleCheck::new("nystrom_vs_reference", vs_reference, 1e-6));
    let vs_closed = (0..6)
        .map(|k| (fine[k] - ktilde_eigenpair(k).zeta).abs())
        .fold(0.0, f64::max);
    checks.push(OracleCheck::new("nystrom_vs_closed_form", vs_closed, 1e-6));
    // the kernel is positive definite, so the null-space term of the
    // small-c expansion is dropped; check it on a grid small enough to
    // resolve the whole spectrum
    let small = NystromProblem::new(ktilde_kernel, 64)?;
    let min_eig = *jacobi_eigenvalues(small.matrix(), 64).last().unwrap();
    checks.push(OracleCheck::new("kernel_positive_definite", (-min_eig).max(0.0) + if min_eig > 0.0 { 0.0 } else { 1.0 }, 0.0));
    let order = (0..3)
        .map(|k| richardson_order(top[0][k], top[1][k], top[2][k]))
        .fold(f64::INFINITY, f64::min);
    // residual: shortfall below order 2
    checks.push(OracleCheck::new("nystrom_order", (2.0 - order).max(0.0), 0.1));

    let p0 = OnePointInit::Uniform { lo: 0.0, hi: 0.6 };
    let trace = one_point_simulate(&p0, 1.0, 200, 1e-3, 5.0)?;
    let sim_err = trace
        .rows
        .iter()
        .map(|r| {
            let exact = one_point_exact(&p0, 1.0, r.t).loss;
            (r.loss - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    checks.push(OracleCheck::new("one_point_simulation", sim_err, 1e-3));
    let lin_err = (0..=50)
        .map(|i| {
            let t = 0.1 * i as f64;
            let exact = one_point_exact(&p0, 1.0, t).loss;
            (one_point_linearized(&p0, 1.0, t) - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    checks.push(OracleCheck::new("one_point_linearized", lin_err, 1e-14));

    let pass = checks.iter().all(|c| c.pass);
    Ok(OracleReport { checks, pass, wall_time_s: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_on_quadratic_is_exact() {
        let f = |w: &[f64]| 3.0 * w[0] * w[0] - w[0] * w[1] + 0.5 * w[1] * w[1];
        for eps in [1e-1, 1e-3, 1e-5] {
            let g = fd_gradient(f, &[0.7, -1.2], eps);
            assert!((g[0] - (6.0 * 0.7 + 1.2)).abs() < 1e-9);
            assert!((g[1] - (-0.7 - 1.2)).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_matches_spline_gradient() {
        assert!(fd_spline_check() < 1e-6);
    }

    #[test]
    fn jacobi_small() {
        let e = jacobi_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2);
        assert!((e[0] - 3.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nystrom_trivial_kernels() {
        let e = nystrom_eigen(&NystromProblem::new(|_, _| 1.0, 32).unwrap(), 3).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12 && e[1].abs() < 1e-12 && e[2].abs() < 1e-12);
        let n = 64;
        let e = nystrom_eigen(&NystromProblem::new(|x, y| x * y, n).unwrap(), 1).unwrap();
        assert!((e[0] - (1.0 / 3.0 - 1.0 / (12.0 * (n * n) as f64))).abs() < 1e-12);
        assert!(NystromProblem::new(|x, _| x, 32).is_err());
        assert!(NystromProblem::new(|_, _| 1.0, 8).is_err());
        assert!(nystrom_eigen(&NystromProblem::new(|_, _| 1.0, 16).unwrap(), 17).is_err());
    }

    #[test]
    fn compression_agrees_with_full_jacobi() {
        let prob = NystromProblem::new(ktilde_kernel, 240).unwrap();
        let compressed = nystrom_eigen(&prob, 4).unwrap();
        let full = jacobi_eigenvalues(prob.matrix(), 240);
        for k in 0..4 {
            assert!((compressed[k] - full[k]).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn one_point_examples() {
        let p0 = OnePointInit::Uniform { lo: 0.0, hi: 0.6 };
        assert!((one_point_exact(&p0, 1.0, 0.0).loss - 0.245).abs() < 1e-15);
        assert!((one_point_exact(&p0, 1.0, 1.0).loss - 0.033_157_14).abs() < 1e-8);
        assert_eq!(one_point_exact(&p0, 0.3, 2.0).loss, 0.0);
        let flat = one_point_simulate(&OnePointInit::Atom { w: 0.4 }, 0.4, 5, 1e-2, 1.0).unwrap();
        assert!(flat.losses().iter().all(|&l| l == 0.0));
        let tr = one_point_simulate(&p0, 1.0, 100, 1e-3, 5.0).unwrap();
        for r in &tr.rows {
            let e = one_point_exact(&p0, 1.0, r.t).loss;
            assert!((r.loss - e).abs() / e < 1e-3);
            assert!((one_point_linearized(&p0, 1.0, r.t) - e).abs() <= 1e-15 * e.max(1e-300) * 10.0);
        }
    }
}
#[cfg(test)]
mod suite {
    #[test]
    fn oracle_suite_passes() {
        let rep = super::run_oracle_suite().unwrap();
        assert!(rep.pass);
    }
}
