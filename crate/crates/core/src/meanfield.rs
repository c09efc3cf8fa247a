//! Distribution-level quantities: the mean-field prediction and loss of a
//! weight density, stationarity certificates and the global-minimizer test.

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::spline_model::{GroundTruth, Model, PiecewisePolynomial, Predictor, ResidualProfile, Weight};

/// Smooth part of a density on `[lo, hi]`: knot density `q(h)` with all of
/// its mass at the conditional output coefficient `c = coef(h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub density: Polynomial,
    pub coef: Polynomial,
}

impl DensityPiece {
    /// `q(h)·c(h)`, the density of output weight per unit knot.
    pub fn weighted(&self) -> Polynomial {
        self.density.mul(&self.coef)
    }

    pub fn mass(&self) -> f64 {
        self.density.integral(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAtom {
    pub c: f64,
    pub h: f64,
    pub mass: f64,
}

/// A (possibly signed) measure on weight space: piecewise-polynomial knot
/// densities with conditional atoms in `c`, plus point atoms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedDensity {
    pub pieces: Vec<DensityPiece>,
    pub atoms: Vec<PointAtom>,
    #[serde(default)]
    pub model: Model,
}

impl MixedDensity {
    pub fn new(model: Model) -> Self {
        Self { pieces: Vec::new(), atoms: Vec::new(), model }
    }

    /// Knot-only density `height·1[lo, hi]` (`c ≡ 1`).
    pub fn knot_box(lo: f64, hi: f64, height: f64) -> Self {
        Self::new(Model::KnotOnly).with_piece(lo, hi, Polynomial::constant(height), Polynomial::constant(1.0))
    }

    /// `height·1[lo, hi](h)·δ(c − c0)` in the full model.
    pub fn product_box(lo: f64, hi: f64, height: f64, c0: f64) -> Self {
        Self::new(Model::Full).with_piece(lo, hi, Polynomial::constant(height), Polynomial::constant(c0))
    }

    pub fn single_atom(w: Weight) -> Self {
        Self::new(Model::Full).with_atom(w.c, w.h, 1.0)
    }

    /// Empirical measure of an ensemble, mass `1/N` per particle.
    pub fn from_ensemble(e: &Ensemble) -> Self {
        let m = 1.0 / e.len() as f64;
        let mut d = Self::new(e.model());
        d.atoms = e.weights().iter().map(|w| PointAtom { c: w.c, h: w.h, mass: m }).collect();
        d
    }

    pub fn with_piece(mut self, lo: f64, hi: f64, density: Polynomial, coef: Polynomial) -> Self {
        self.pieces.push(DensityPiece { lo, hi, density, coef });
        self
    }

    pub fn with_atom(mut self, c: f64, h: f64, mass: f64) -> Self {
        self.atoms.push(PointAtom { c, h, mass });
        self
    }

    /// Sum of two measures (for building `p∞ + δp`).
    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.pieces.extend(other.pieces.iter().cloned());
        out.atoms.extend(other.atoms.iter().copied());
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.pieces.iter_mut().for_each(|p| p.density = p.density.scale(s));
        out.atoms.iter_mut().for_each(|a| a.mass *= s);
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.pieces.iter().map(DensityPiece::mass).sum::<f64>() + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Structural checks; `probability` additionally requires unit mass.
    pub fn validate(&self, probability: bool) -> Result<()> {
        for p in &self.pieces {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(Error::Input(format!("bad density piece [{}, {}]", p.lo, p.hi)));
            }
        }
        let mut spans: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.lo, p.hi)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if spans.windows(2).any(|w| w[1].0 < w[0].1) && probability {
            return Err(Error::Input("density pieces overlap".into()));
        }
        if probability && (self.total_mass() - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("total mass {} is not 1", self.total_mass())));
        }
        Ok(())
    }

    /// `∫ p(c, x)·c dc` at `x`: the output weight per unit knot of the smooth part.
    pub fn weighted_density(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.lo <= x && x < p.hi)
            .map(|p| p.weighted().eval(x))
            .sum()
    }
}

impl Predictor for MixedDensity {
    fn prediction(&self) -> PiecewisePolynomial {
        let inside = |x: f64| x > 0.0 && x < 1.0;
        let mut cuts: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.h)
            .chain(self.pieces.iter().flat_map(|p| [p.lo, p.hi]))
            .filter(|&x| inside(x))
            .collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        struct Prepared {
            lo: f64,
            hi: f64,
            p0: Polynomial,
            p1: Polynomial,
        }
        let prepared: Vec<Prepared> = self
            .pieces
            .iter()
            .map(|p| {
                let g = p.weighted();
                Prepared { lo: p.lo, hi: p.hi, p0: g.antiderivative(), p1: g.shift_up().antiderivative() }
            })
            .collect();
        let x = Polynomial::monomial(1.0, 1);

        let polys: Vec<Polynomial> = cuts
            .windows(2)
            .map(|seg| {
                let mid = 0.5 * (seg[0] + seg[1]);
                let (mut slope, mut intercept) = (0.0, 0.0);
                for a in self.atoms.iter().filter(|a| a.h < mid) {
                    slope += a.mass * a.c;
                    intercept -= a.mass * a.c * a.h;
                }
                let mut poly = Polynomial::zero();
                for p in &prepared {
                    if p.hi < mid {
                        let g0 = p.p0.eval(p.hi) - p.p0.eval(p.lo);
                        let g1 = p.p1.eval(p.hi) - p.p1.eval(p.lo);
                        slope += g0;
                        intercept -= g1;
                    } else if p.lo < mid {
                        // ∫_lo^x g(h)(x − h) dh = x(P0(x) − P0(lo)) − (P1(x) − P1(lo))
                        slope -= p.p0.eval(p.lo);
                        intercept += p.p1.eval(p.lo);
                        poly = poly.add(&p.p0.mul(&x)).add(&p.p1.scale(-1.0));
                    }
                }
                poly.add(&Polynomial::new(vec![intercept, slope]))
            })
            .collect();
        let stride = polys.iter().map(|p| p.coeffs().len()).max().unwrap_or(1).max(1);
        let mut coeffs = Vec::with_capacity(stride * polys.len());
        for p in &polys {
            coeffs.extend_from_slice(p.coeffs());
            coeffs.extend(std::iter::repeat_n(0.0, stride - p.coeffs().len()));
        }
        PiecewisePolynomial::new(cuts, stride, coeffs)
    }
}

/// `f̂_mf(x) = ∫∫ p(c, h)·c·(x − h)₊ dc dh`.
pub fn mf_prediction(p: &MixedDensity, x: f64) -> f64 {
    p.prediction().eval(x)
}

/// `½∫₀¹ (f̂_mf − f)²`.
pub fn mf_loss(p: &MixedDensity, f: &GroundTruth) -> f64 {
    crate::spline_model::loss(p, f)
}

/// Default number of probes per smooth piece.
pub const DEFAULT_PROBE_GRID: usize = 256;
/// `|∇u|` below which a density counts as stationary.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub c: f64,
    pub h: f64,
    pub grad_c: f64,
    pub grad_h: f64,
}

impl Probe {
    pub fn norm(&self) -> f64 {
        self.grad_c.hypot(self.grad_h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stationary,
    NonStationary,
}

/// Max of `|∇u|` over probes of the support.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub residual: f64,
    pub probes: Vec<Probe>,
    pub verdict: Verdict,
}

impl StationarityReport {
    pub fn worst_probe(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.norm().total_cmp(&b.norm()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "residual": self.residual,
            "verdict": self.verdict,
            "worst_probe": self.worst_probe(),
        })
    }
}

/// Evaluate `|∇u|` on every atom and on `probe_grid` points (plus both
/// endpoints) of every smooth piece.
pub fn stationarity_residual(p: &MixedDensity, f: &GroundTruth, probe_grid: usize) -> StationarityReport {
    stationarity_residual_tol(p, f, probe_grid, STATIONARITY_TOL)
}

pub fn stationarity_residual_tol(p: &MixedDensity, f: &GroundTruth, probe_grid: usize, tol: f64) -> StationarityReport {
    let grid = probe_grid.max(1);
    let pred = p.prediction();
    let profile = ResidualProfile::new(&pred, f, &[]);
    let mut points: Vec<Weight> = p
        .atoms
        .iter()
        .filter(|a| a.mass != 0.0)
        .map(|a| Weight::new(a.c, a.h))
        .collect();
    for piece in &p.pieces {
        let hs = std::iter::once(piece.lo)
            .chain((0..grid).map(|i| piece.lo + (piece.hi - piece.lo) * (i as f64 + 0.5) / grid as f64))
            .chain(std::iter::once(piece.hi));
        points.extend(hs.map(|h| Weight::new(piece.coef.eval(h), h)));
    }
    let probes: Vec<Probe> = points
        .into_iter()
        .map(|w| {
            let (gc, gh) = profile.grad_u(w);
            let grad_c = if p.model == Model::KnotOnly { 0.0 } else { gc };
            Probe { c: w.c, h: w.h, grad_c, grad_h: gh }
        })
        .collect();
    let residual = probes.iter().map(Probe::norm).fold(0.0, f64::max);
    let verdict = if residual <= tol { Verdict::Stationary } else { Verdict::NonStationary };
    StationarityReport { residual, probes, verdict }
}

/// Mismatch of the three global-minimizer conditions: the weighted knot
/// density against `f″` on `(0, 1)`, and the `h ≤ 0` moments against
/// `f(0)` and `f′(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMinResiduals {
    pub d2_residual: f64,
    pub f0_residual: f64,
    pub df0_residual: f64,
}

impl GlobalMinResiduals {
    pub fn max(&self) -> f64 {
        self.d2_residual.max(self.f0_residual).max(self.df0_residual)
    }
}

const CRITERION_GRID: usize = 2048;

pub fn global_min_criterion(p: &MixedDensity, f: &GroundTruth) -> GlobalMinResiduals {
    let mut xs: Vec<f64> = (0..CRITERION_GRID)
        .map(|i| (i as f64 + 0.5) / CRITERION_GRID as f64)
        .collect();
    xs.extend(
        p.pieces
            .iter()
            .map(|q| 0.5 * (q.lo.max(0.0) + q.hi.min(1.0)))
            .filter(|&x| x > 0.0 && x < 1.0),
    );
    let d2_residual = xs
        .iter()
        .map(|&x| (p.weighted_density(x) - f.second_derivative(x)).abs())
        .fold(0.0, f64::max);

    let (mut value0, mut slope0) = (0.0, 0.0);
    for a in p.atoms.iter().filter(|a| a.h <= 0.0) {
        value0 -= a.mass * a.c * a.h;
        slope0 += a.mass * a.c;
    }
    for q in p.pieces.iter().filter(|q| q.lo < 0.0) {
        let g = q.weighted();
        let hi = q.hi.min(0.0);
        value0 -= g.shift_up().integral(q.lo, hi);
        slope0 += g.integral(q.lo, hi);
    }
    GlobalMinResiduals {
        d2_residual,
        f0_residual: (value0 - f.eval(0.0)).abs(),
        df0_residual: (slope0 - f.derivative(0.0)).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom_star() -> Weight {
        let s6 = 6f64.sqrt();
        Weight::new((4.0 + s6) / 5.0, (s6 - 1.0) / 5.0)
    }

    #[test]
    fn prediction_examples() {
        let p_inf = MixedDensity::knot_box(0.0, 1.0, 1.0);
        for x in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!((mf_prediction(&p_inf, x) - 0.5 * x * x).abs() < 1e-15);
        }
        let atom = MixedDensity::single_atom(Weight::new(2.0, 0.5));
        assert!((mf_prediction(&atom, 0.75) - 0.5).abs() < 1e-15);
        let right = MixedDensity::new(Model::Full).with_atom(3.0, 1.0, 0.5).with_atom(-2.0, 1.7, 0.5);
        assert!((0..=10).all(|i| mf_prediction(&right, i as f64 / 10.0) == 0.0));
    }

    #[test]
    fn prediction_with_pieces_straddling_zero() {
        // density 1 on [-0.5, 0.5] with c = 2: f̂(x) = 2∫_{-0.5}^{min(x,0.5)} (x − h) dh
        let p = MixedDensity::product_box(-0.5, 0.5, 1.0, 2.0);
        let exact = |x: f64| {
            let top = x.min(0.5);
            2.0 * (x * (top + 0.5) - 0.5 * (top * top - 0.25))
        };
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((mf_prediction(&p, x) - exact(x)).abs() < 1e-14, "{x}");
        }
    }

    #[test]
    fn loss_examples() {
        assert!(mf_loss(&MixedDensity::knot_box(0.0, 1.0, 1.0), &GroundTruth::half_x_squared()) < 1e-30);
        let empty = MixedDensity::product_box(0.0, 1.0, 1.0, 0.0);
        assert!((mf_loss(&empty, &GroundTruth::x_squared()) - 0.1).abs() < 1e-15);
        let shifted = MixedDensity::knot_box(0.3, 0.8, 2.0);
        assert!(mf_loss(&shifted, &GroundTruth::half_x_squared()) > 0.0);
    }

    #[test]
    fn empirical_measure_matches_ensemble() {
        use crate::ensemble::{init, InitKind, InitSpec};
        let e = init(&InitSpec::new(InitKind::UniformBox { c_lo: -1.0, c_hi: 1.0, h_lo: -0.2, h_hi: 1.2 }, 4), 25).unwrap();
        let d = MixedDensity::from_ensemble(&e);
        let (a, b) = (e.prediction(), d.prediction());
        for i in 0..=40 {
            let x = i as f64 / 40.0;
            assert!((a.eval(x) - b.eval(x)).abs() <= 1e-15 * (1.0 + a.eval(x).abs()));
        }
    }

    #[test]
    fn stationarity_examples() {
        let f = GroundTruth::x_squared();
        let right = MixedDensity::new(Model::Full)
            .with_atom(3.0, 1.0, 0.5)
            .with_piece(1.2, 2.0, Polynomial::constant(0.625), Polynomial::new(vec![0.0, 1.0]));
        assert_eq!(stationarity_residual(&right, &f, 16).residual, 0.0);

        let star = stationarity_residual(&MixedDensity::single_atom(atom_star()), &f, 16);
        assert!(star.residual <= 1e-10 && star.verdict == Verdict::Stationary);

        let off = stationarity_residual(&MixedDensity::single_atom(Weight::new(1.0, 0.5)), &f, 16);
        assert!(off.residual > 0.01 && off.verdict == Verdict::NonStationary);
        let json = off.to_json();
        assert!(json["worst_probe"]["grad_c"].is_number());
        assert_eq!(json["verdict"], "non-stationary");
    }

    #[test]
    fn global_min_examples() {
        let r = global_min_criterion(&MixedDensity::knot_box(0.0, 1.0, 1.0), &GroundTruth::half_x_squared());
        assert!(r.max() < 1e-15);
        let r = global_min_criterion(&MixedDensity::single_atom(atom_star()), &GroundTruth::x_squared());
        assert_eq!(r.d2_residual, 2.0);
        let r = global_min_criterion(&MixedDensity::knot_box(0.3, 0.8, 2.0), &GroundTruth::half_x_squared());
        assert!((r.d2_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn signed_masses() {
        let dp = MixedDensity::knot_box(0.3, 0.8, 2.0).plus(&MixedDensity::knot_box(0.0, 1.0, -1.0));
        assert!(dp.total_mass().abs() < 1e-15);
        assert!(dp.validate(false).is_ok());
        assert!(dp.validate(true).is_err());
        assert!(MixedDensity::knot_box(0.0, 1.0, 1.0).validate(true).is_ok());
    }
}
