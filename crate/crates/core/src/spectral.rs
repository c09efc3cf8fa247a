//! Closed-form spectral theory of the spline model.
//!
//! * the small-`c` kernel `K̃(h, h') = ∫₀¹ (x − h)₊ (x − h')₊ dx` on `[0, 1]`,
//!   with eigenvalues `ζ_k = ξ_k⁻⁴` where `cosh ξ cos ξ = −1`;
//! * the linearized generator around the knot-only minimizer `p∞ = 1[0,1]`
//!   for `f = x²/2`, with eigenvalues `−μ_k⁻²`, `μ_k = π/2 + kπ`, and modes
//!   `sin(μ_k h) − δ(h)/μ_k`;
//! * the loss expansions built from both.

use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use crate::error::{Error, Result};
use crate::meanfield::MixedDensity;
use crate::poly::Polynomial;
use crate::quadrature::{gl8_on, pairwise_sum, piecewise_integral_cuts, uniform_cuts};
use crate::spline_model::GroundTruth;

/// `cos ξ + sech ξ`, the overflow-free form of `cosh ξ cos ξ + 1` (divided by `cosh ξ`).
pub fn xi_equation(xi: f64) -> f64 {
    xi.cos() + 1.0 / xi.cosh()
}

fn xi_equation_derivative(xi: f64) -> f64 {
    -xi.sin() - xi.tanh() / xi.cosh()
}

/// k-th positive root of `cosh ξ cos ξ = −1`.
pub fn solve_xi(k: usize) -> f64 {
    let center = FRAC_PI_2 + k as f64 * PI;
    let (mut lo, mut hi) = (center - 0.5, center + 0.5);
    let (glo, ghi) = (xi_equation(lo), xi_equation(hi));
    assert!(glo * ghi < 0.0, "root bracket for k={k} has no sign change");
    let rising = ghi > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (xi_equation(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut xi = 0.5 * (lo + hi);
    for _ in 0..3 {
        let step = xi_equation(xi) / xi_equation_derivative(xi);
        if !step.is_finite() || step == 0.0 {
            break;
        }
        let next = xi - step;
        if (next - center).abs() > 0.5 {
            break;
        }
        xi = next;
    }
    xi
}

/// Eigenpair of the small-`c` kernel operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenPairK {
    pub k: usize,
    pub xi: f64,
    pub zeta: f64,
    /// `(cosh ξ + cos ξ)/(sinh ξ + sin ξ)`
    sigma: f64,
    /// coefficient of `e^{ξ(h−1)}` in the stable form
    edge: f64,
}

pub fn ktilde_eigenpair(k: usize) -> EigenPairK {
    let xi = solve_xi(k);
    let e1 = (-xi).exp();
    let denom = 1.0 - e1 * e1 + 2.0 * e1 * xi.sin();
    let sigma = (1.0 + e1 * e1 + 2.0 * e1 * xi.cos()) / denom;
    let edge = (xi.sin() - xi.cos() - e1) / denom;
    EigenPairK { k, xi, zeta: xi.powi(-4), sigma, edge }
}

impl EigenPairK {
    /// `s_k(h) = cosh ξh + cos ξh − σ(sinh ξh + sin ξh)`, rewritten as
    /// `cos ξh − σ sin ξh + ½(1+σ)e^{−ξh} + edge·e^{ξ(h−1)}` so that no
    /// exponential grows.
    pub fn eval(&self, h: f64) -> f64 {
        self.derivative(h, 0)
    }

    /// `n`-th derivative of `s_k` at `h`, same stable form.
    pub fn derivative(&self, h: f64, n: u32) -> f64 {
        let xi = self.xi;
        let phase = xi * h + n as f64 * FRAC_PI_2;
        let scale = xi.powi(n as i32);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        scale
            * (phase.cos() - self.sigma * phase.sin()
                + sign * 0.5 * (1.0 + self.sigma) * (-xi * h).exp()
                + self.edge * (xi * (h - 1.0)).exp())
    }

    /// The textbook hyperbolic formula; only usable for small `k`.
    pub fn eval_direct(&self, h: f64) -> f64 {
        let xi = self.xi;
        let ratio = (xi.cosh() + xi.cos()) / (xi.sinh() + xi.sin());
        (xi * h).cosh() + (xi * h).cos() - ratio * ((xi * h).sinh() + (xi * h).sin())
    }
}

/// Closed form of the small-`c` kernel.
pub fn ktilde_kernel(h: f64, hp: f64) -> f64 {
    let m = h.max(hp).max(0.0);
    if m >= 1.0 {
        return 0.0;
    }
    (1.0 - m.powi(3)) / 3.0 - (h + hp) * (1.0 - m * m) / 2.0 + h * hp * (1.0 - m)
}

/// `Φ̃*b(h) = ∫₀¹ (x − h)₊ b(x) dx` for a ground truth `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiStar {
    b: GroundTruth,
}

pub fn phi_star(b: &GroundTruth) -> PhiStar {
    PhiStar { b: b.clone() }
}

impl PhiStar {
    pub fn eval(&self, h: f64) -> f64 {
        if h >= 1.0 {
            return 0.0;
        }
        let m = h.max(0.0);
        self.b.moment(m, 1.0, 1) - h * self.b.moment(m, 1.0, 0)
    }
}

/// Panels used for inner products on `[0, 1]`.
const INNER_PANELS: usize = 64;

fn inner(f: impl Fn(f64) -> f64) -> f64 {
    piecewise_integral_cuts(f, &uniform_cuts(0.0, 1.0, INNER_PANELS)).expect("nonempty grid")
}

/// Shift field of the small-`c` dynamics started from `δ(c)·1[0,1](h)`,
/// expanded over the first `truncation` kernel eigenfunctions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallCState {
    pub t: f64,
    pub truncation: usize,
    pub pairs: Vec<EigenPairK>,
    /// `⟨s_k, Φ̃*z⟩`
    pub projections: Vec<f64>,
    /// `⟨s_k, s_k⟩`
    pub norms: Vec<f64>,
    /// Null-space component; zero because the kernel is positive definite.
    pub nullspace: f64,
}

impl SmallCState {
    /// Expansion coefficients for `z = −f`, at `t = 0`.
    pub fn new(f: &GroundTruth, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::Input("truncation must be at least 1".into()));
        }
        let ps = phi_star(f);
        let pairs: Vec<EigenPairK> = (0..truncation).map(ktilde_eigenpair).collect();
        let projections = pairs.iter().map(|s| -inner(|h| s.eval(h) * ps.eval(h))).collect();
        let norms = pairs.iter().map(|s| inner(|h| s.eval(h).powi(2))).collect();
        Ok(Self { t: 0.0, truncation, pairs, projections, norms, nullspace: 0.0 })
    }

    pub fn at(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    /// Coefficient of `s_k` in `s(·, t)`.
    pub fn coefficient(&self, k: usize) -> f64 {
        let zeta = self.pairs[k].zeta;
        -(-self.t * zeta).exp_m1() / zeta * self.projections[k] / self.norms[k]
    }

    /// `s(h, t)`.
    pub fn shift(&self, h: f64) -> f64 {
        let terms: Vec<f64> = (0..self.truncation)
            .map(|k| self.coefficient(k) * self.pairs[k].eval(h))
            .collect();
        self.t * self.nullspace + pairwise_sum(&terms)
    }

    /// Output weight of the particle with knot `h`: the density moved from
    /// `c = 0` to `c = −s(h, t)`.
    pub fn predicted_c(&self, h: f64) -> f64 {
        -self.shift(h)
    }

    /// `½Σ ⟨s_k, Φ̃*z⟩²/⟨s_k, s_k⟩ · e^{−2tζ_k}/ζ_k`.
    pub fn loss(&self) -> f64 {
        let terms: Vec<f64> = (0..self.truncation)
            .map(|k| {
                let zeta = self.pairs[k].zeta;
                0.5 * self.projections[k].powi(2) / self.norms[k] * (-2.0 * self.t * zeta).exp() / zeta
            })
            .collect();
        pairwise_sum(&terms)
    }
}

pub fn smallc_solution(f: &GroundTruth, t: f64, truncation: usize) -> Result<SmallCState> {
    if !(t >= 0.0) {
        return Err(Error::Input(format!("t must be >= 0, got {t}")));
    }
    Ok(SmallCState::new(f, truncation)?.at(t))
}

pub fn smallc_loss(f: &GroundTruth, t: f64, truncation: usize) -> Result<f64> {
    Ok(smallc_solution(f, t, truncation)?.loss())
}

/// Relative part of `½‖f‖²` not captured by the truncated expansion at
/// `t = 0`; the constant (range-orthogonal) loss term must be negligible for
/// the small-`c` loss formula to apply.
pub fn smallc_range_defect(f: &GroundTruth, truncation: usize) -> Result<f64> {
    let total = 0.5 * f.square_integral(0.0, 1.0);
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((total - smallc_loss(f, 0.0, truncation)?) / total)
}

/// Eigenpair of the linearized generator around `p∞ = 1[0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenPairR {
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
}

pub fn r_eigenpair(k: usize) -> EigenPairR {
    let mu = FRAC_PI_2 + k as f64 * PI;
    EigenPairR { k, mu, lambda: -1.0 / (mu * mu) }
}

impl EigenPairR {
    /// Regular part `sin(μh)` of the mode on `[0, 1]`.
    pub fn regular(&self, h: f64) -> f64 {
        if (0.0..=1.0).contains(&h) {
            (self.mu * h).sin()
        } else {
            0.0
        }
    }

    /// Mass of the atom at `h = 0`.
    pub fn atom_mass(&self) -> f64 {
        -1.0 / self.mu
    }

    /// Closed form `𝒦p_k(h) = (sin(μh) − (−1)^k)/μ⁴` on `[0, 1]`.
    pub fn k_applied(&self, h: f64) -> f64 {
        let sign = if self.k % 2 == 0 { 1.0 } else { -1.0 };
        ((self.mu * h).sin() - sign) / self.mu.powi(4)
    }
}

/// `∫_a^b q(h) sin(μh) dh` by repeated integration by parts.
pub fn sine_moment(q: &Polynomial, mu: f64, a: f64, b: f64) -> f64 {
    let anti = |h: f64| {
        let (s, c) = (mu * h).sin_cos();
        // sin(μh − mπ/2) for m = 1, 2, 3, 4 cycles through −cos, −sin, cos, sin
        let cycle = [-c, -s, c, s];
        let mut d = q.clone();
        let mut acc = 0.0;
        let mut j = 0usize;
        while !d.is_zero() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * d.eval(h) * cycle[j % 4] / mu.powi(j as i32 + 1);
            d = d.derivative();
            j += 1;
        }
        acc
    };
    anti(b) - anti(a)
}

/// `∫₀¹ sin(μ_k h) δp(h) dh` for a knot-only signed measure.
pub fn mode_coefficient(dp: &MixedDensity, mu: f64) -> f64 {
    let smooth: f64 = dp.pieces.iter().map(|p| sine_moment(&p.density, mu, p.lo, p.hi)).sum();
    let atoms: f64 = dp.atoms.iter().map(|a| a.mass * (mu * a.h).sin()).sum();
    smooth + atoms
}

/// Linearized loss near the knot-only minimizer:
/// `Σ_k (∫ sin(μ_k h) δp(h, 0) dh)² e^{−2t/μ_k²}/μ_k⁴`, truncated at `truncation` terms.
pub fn linearized_loss(dp0: &MixedDensity, t: f64, truncation: usize) -> Result<f64> {
    Ok(linearized_loss_curve(dp0, &[t], truncation)?[0])
}

/// [`linearized_loss`] on many times, sharing the coefficients.
pub fn linearized_loss_curve(dp0: &MixedDensity, ts: &[f64], truncation: usize) -> Result<Vec<f64>> {
    let mass = dp0.total_mass();
    if mass.abs() > 1e-10 {
        return Err(Error::Input(format!("perturbation must have zero total mass, got {mass:e}")));
    }
    let outside = dp0.pieces.iter().any(|p| p.lo < 0.0 || p.hi > 1.0)
        || dp0.atoms.iter().any(|a| !(0.0..=1.0).contains(&a.h));
    if outside {
        return Err(Error::Input("perturbation must be supported on [0, 1]".into()));
    }
    let weights: Vec<(f64, f64)> = (0..truncation)
        .map(|k| {
            let mu = r_eigenpair(k).mu;
            (mode_coefficient(dp0, mu).powi(2) / mu.powi(4), -2.0 / (mu * mu))
        })
        .collect();
    Ok(ts
        .iter()
        .map(|&t| {
            let terms: Vec<f64> = weights.iter().map(|&(w, rate)| w * (rate * t).exp()).collect();
            pairwise_sum(&terms)
        })
        .collect())
}

/// `∫₀¹ g(h) dh` for a function with a kink at `split`.
fn split_integral(g: impl Fn(f64) -> f64, split: f64, panels: usize) -> f64 {
    let mut total = 0.0;
    for (a, b) in [(0.0, split), (split, 1.0)] {
        if b > a {
            let cuts = uniform_cuts(a, b, panels);
            total += piecewise_integral_cuts(&g, &cuts).expect("nonempty");
        }
    }
    total
}

/// `𝒦p_k(h)` by quadrature of the kernel against the mode (regular part plus
/// the atom at 0). Independent of [`EigenPairR::k_applied`].
pub fn k_applied_numeric(pair: &EigenPairR, h: f64) -> f64 {
    let regular = split_integral(|hp| ktilde_kernel(h, hp) * pair.regular(hp), h.clamp(0.0, 1.0), 32);
    regular + pair.atom_mass() * ktilde_kernel(h, 0.0)
}

/// `⟨𝒦p_k, p_n⟩` by nested quadrature.
pub fn k_inner_numeric(pk: &EigenPairR, pn: &EigenPairR) -> f64 {
    let cuts = uniform_cuts(0.0, 1.0, 32);
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let terms: Vec<f64> = gl8_on(w[0], w[1])
            .into_iter()
            .map(|(h, wt)| wt * k_applied_numeric(pk, h) * pn.regular(h))
            .collect();
        pieces.push(pairwise_sum(&terms));
    }
    pairwise_sum(&pieces) + pn.atom_mass() * k_applied_numeric(pk, 0.0)
}

/// One row of the spectral table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralRow {
    pub k: usize,
    pub xi: f64,
    pub zeta: f64,
    pub mu: f64,
    pub lambda: f64,
}

pub fn spectral_table(count: usize) -> Vec<SpectralRow> {
    (0..count)
        .map(|k| {
            let kp = ktilde_eigenpair(k);
            let rp = r_eigenpair(k);
            SpectralRow { k, xi: kp.xi, zeta: kp.zeta, mu: rp.mu, lambda: rp.lambda }
        })
        .collect()
}

/// CSV `k,xi,zeta,mu,lambda`.
pub fn write_spectral_csv(rows: &[SpectralRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "k,xi,zeta,mu,lambda")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.k, r.xi, r.zeta, r.mu, r.lambda)?;
    }
    Ok(())
}
