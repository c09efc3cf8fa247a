//! Localized Gaussian closure: a tight cloud of particles around a center `b`
//! with covariance `A` evolves as `ḃ = drift(b)`, `Ȧ = AH + HA`.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::spline_model::{u_and_grad, GroundTruth, Weight};

/// Symmetric 2×2 matrix in `(c, h)` coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Sym2 {
    pub cc: f64,
    pub ch: f64,
    pub hh: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { cc: 0.0, ch: 0.0, hh: 0.0 };

    pub fn diag(cc: f64, hh: f64) -> Self {
        Self { cc, ch: 0.0, hh }
    }

    /// Eigenvalues `(min, max)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.cc + self.hh);
        let rad = (0.5 * (self.cc - self.hh)).hypot(self.ch);
        (mean - rad, mean + rad)
    }

    fn axpy(&self, s: f64, o: &Sym2) -> Sym2 {
        Sym2 { cc: self.cc + s * o.cc, ch: self.ch + s * o.ch, hh: self.hh + s * o.hh }
    }

    /// `AH + HA` for symmetric `A`, `H`; symmetric by construction.
    fn anticommutator(a: &Sym2, h: &Sym2) -> Sym2 {
        let cc = 2.0 * (a.cc * h.cc + a.ch * h.ch);
        let hh = 2.0 * (a.ch * h.ch + a.hh * h.hh);
        let ch = a.cc * h.ch + a.ch * h.hh + h.cc * a.ch + h.ch * a.hh;
        Sym2 { cc, ch, hh }
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.cc, self.ch], [self.ch, self.hh]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianState {
    pub b: Weight,
    pub a: Sym2,
    pub t: f64,
}

impl GaussianState {
    pub fn new(b: Weight, a: Sym2) -> Self {
        Self { b, a, t: 0.0 }
    }

    /// Isotropic start `σ²I`.
    pub fn isotropic(b: Weight, sigma: f64) -> Self {
        Self::new(b, Sym2::diag(sigma * sigma, sigma * sigma))
    }
}

/// Gradient-descent velocity of a single particle fitting `f` alone.
pub fn drift(b: Weight, f: &GroundTruth) -> (f64, f64) {
    let g = u_and_grad(&b, b, f);
    (-g.grad_c, -g.grad_h)
}

/// `H = −∫ (φ(b,·) − f) D²φ(b,·)`, with the distributional `h`-`h` entry
/// evaluated as a point value of the residual.
pub fn matrix_h(b: Weight, f: &GroundTruth) -> Sym2 {
    if b.h > 1.0 {
        return Sym2::ZERO;
    }
    let ch = residual_tail(b, f, b.h.max(0.0));
    // D_hh φ = c·δ(x − h) and φ(b, h) = 0, so the entry is c·f(h) inside the domain
    let hh = if b.h >= 0.0 { b.c * f.eval(b.h) } else { 0.0 };
    Sym2 { cc: 0.0, ch, hh }
}

/// `∫_lo¹ (φ(b,x) − f(x)) dx` in closed form.
fn residual_tail(b: Weight, f: &GroundTruth, lo: f64) -> f64 {
    if lo >= 1.0 {
        return 0.0;
    }
    let fhat = b.c * ((1.0 - b.h).powi(2) - (lo - b.h).max(0.0).powi(2)) / 2.0;
    fhat - f.moment(lo, 1.0, 0)
}

/// Minimum eigenvalue below which `A` counts as indefinite.
pub const PSD_TOL: f64 = 1e-9;

fn rhs(b: Weight, a: &Sym2, f: &GroundTruth) -> ((f64, f64), Sym2) {
    (drift(b, f), Sym2::anticommutator(a, &matrix_h(b, f)))
}

/// RK4 on the coupled `(b, A)` system. Returns every state, `t = 0` first.
pub fn evolve(g: GaussianState, f: &GroundTruth, dt: f64, t_end: f64) -> Result<Vec<GaussianState>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Input(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Input(format!("t_end must be >= 0, got {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let t0 = g.t;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(g);
    let mut cur = g;
    for k in 1..=steps {
        let shift = |b: Weight, d: (f64, f64), s: f64| Weight::new(b.c + s * d.0, b.h + s * d.1);
        let (k1b, k1a) = rhs(cur.b, &cur.a, f);
        let (k2b, k2a) = rhs(shift(cur.b, k1b, dt / 2.0), &cur.a.axpy(dt / 2.0, &k1a), f);
        let (k3b, k3a) = rhs(shift(cur.b, k2b, dt / 2.0), &cur.a.axpy(dt / 2.0, &k2a), f);
        let (k4b, k4a) = rhs(shift(cur.b, k3b, dt), &cur.a.axpy(dt, &k3a), f);
        let b = Weight::new(
            cur.b.c + dt / 6.0 * (k1b.0 + 2.0 * k2b.0 + 2.0 * k3b.0 + k4b.0),
            cur.b.h + dt / 6.0 * (k1b.1 + 2.0 * k2b.1 + 2.0 * k3b.1 + k4b.1),
        );
        let a = cur
            .a
            .axpy(dt / 6.0, &k1a)
            .axpy(dt / 3.0, &k2a)
            .axpy(dt / 3.0, &k3a)
            .axpy(dt / 6.0, &k4a);
        let t = t0 + k as f64 * dt;
        if !b.is_finite() || !(a.cc.is_finite() && a.ch.is_finite() && a.hh.is_finite()) {
            return Err(Error::Numerical(format!("gaussian closure diverged at t={t}")));
        }
        let (min_eig, _) = a.eigenvalues();
        if min_eig < -PSD_TOL {
            return Err(Error::Covariance { t, min_eig });
        }
        cur = GaussianState { b, a, t };
        out.push(cur);
    }
    Ok(out)
}

/// CSV `t,b_c,b_h,A_cc,A_ch,A_hh`.
pub fn write_trajectory_csv(traj: &[GaussianState], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "t,b_c,b_h,A_cc,A_ch,A_hh")?;
    for g in traj {
        writeln!(out, "{},{},{},{},{},{}", g.t, g.b.c, g.b.h, g.a.cc, g.a.ch, g.a.hh)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub h: [[f64; 2]; 2],
    pub eigenvalues: (f64, f64),
    pub classification: Stability,
    pub block_form_residual: f64,
    pub drift_norm: f64,
}

/// `|drift|` allowed at a point passed to [`classify`].
pub const STATIONARY_TOL: f64 = 1e-8;
/// Eigenvalue magnitude treated as zero.
pub const EIG_TOL: f64 = 1e-10;

pub fn classify(b: Weight, f: &GroundTruth) -> Result<StabilityVerdict> {
    let (dc, dh) = drift(b, f);
    let drift_norm = dc.hypot(dh);
    if !(drift_norm <= STATIONARY_TOL) {
        return Err(Error::NotStationary { what: format!("center ({}, {}) is not stationary", b.c, b.h), drift: drift_norm });
    }
    let h = matrix_h(b, f);
    let eigenvalues = h.eigenvalues();
    let classification = if eigenvalues.1 > EIG_TOL {
        Stability::Unstable
    } else if eigenvalues.0 < -EIG_TOL {
        Stability::Stable
    } else {
        Stability::Neutral
    };
    Ok(StabilityVerdict {
        h: h.to_rows(),
        eigenvalues,
        classification,
        block_form_residual: h.cc.abs() + h.ch.abs(),
        drift_norm,
    })
}
