//! Stationary distributions for `f(x) = x²`: the equidistant atom families
//! and a support-based classifier.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{
    global_min_criterion, mf_loss, mf_prediction, stationarity_residual, MixedDensity, Verdict, DEFAULT_PROBE_GRID,
};
use crate::spline_model::{GroundTruth, Model};

/// `M` atoms at `h_i = 1 − iΔh` with mass `1/M` each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomFamily {
    pub m: usize,
    pub delta_h: f64,
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

pub fn spacing(m: usize) -> f64 {
    let mf = m as f64;
    (6.0 * mf - 6f64.sqrt()) / (6.0 * mf * mf - 1.0)
}

pub fn equidistant_family(m: usize) -> Result<AtomFamily> {
    if m == 0 {
        return Err(Error::Input("atom count must be at least 1".into()));
    }
    let dh = spacing(m);
    let knots: Vec<f64> = (1..=m).map(|i| 1.0 - i as f64 * dh).collect();
    let mf = m as f64;
    // the prediction's slope on [h_j, h_{j-1}] must be h_j + h_{j-1}; each
    // atom contributes the jump in slope at its knot
    let coefficients = (0..m)
        .map(|i| {
            let weighted = if i + 1 < m {
                2.0 * dh
            } else {
                let prev = if m == 1 { 1.0 } else { knots[m - 2] };
                knots[m - 1] + prev
            };
            weighted * mf
        })
        .collect();
    Ok(AtomFamily { m, delta_h: dh, knots, coefficients })
}

impl AtomFamily {
    pub fn mass(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn to_density(&self) -> MixedDensity {
        let mass = self.mass();
        self.knots
            .iter()
            .zip(&self.coefficients)
            .fold(MixedDensity::new(Model::Full), |p, (&h, &c)| p.with_atom(c, h, mass))
    }

    /// `f(h_i) − f̂_mf(h_i)` at every knot.
    pub fn residual_at_knots(&self) -> Vec<f64> {
        let p = self.to_density();
        self.knots.iter().map(|&h| h * h - mf_prediction(&p, h)).collect()
    }

    /// `f(1) − f̂_mf(1)`.
    pub fn residual_at_one(&self) -> f64 {
        1.0 - mf_prediction(&self.to_density(), 1.0)
    }

    pub fn table_row(&self) -> serde_json::Value {
        let p = self.to_density();
        let f = GroundTruth::x_squared();
        serde_json::json!({
            "M": self.m,
            "delta_h": self.delta_h,
            "knots": self.knots,
            "coefficients": self.coefficients,
            "residual": stationarity_residual(&p, &f, DEFAULT_PROBE_GRID).residual,
            "mf_loss": mf_loss(&p, &f),
        })
    }
}

/// JSON table for `M = 1..=max_m`.
pub fn family_table(max_m: usize) -> Result<serde_json::Value> {
    let rows = (1..=max_m)
        .map(|m| Ok(equidistant_family(m)?.table_row()))
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::Value::Array(rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportClass {
    /// Knot marginal covers `[0, 1]` and the prediction equals `f`.
    GlobalMin,
    /// Finitely many atoms inside `[0, 1)`.
    FiniteAtoms,
    /// No mass with knot below 1: the prediction vanishes.
    RightOfOne,
    NonStationary,
}

/// Tolerance on the global-minimizer conditions.
const GLOBAL_MIN_TOL: f64 = 1e-8;

pub fn classify_support(p: &MixedDensity, f: &GroundTruth) -> Result<SupportClass> {
    if !f.is_x_squared() {
        return Err(Error::Unsupported("support classification is only available for f(x) = x^2".into()));
    }
    if stationarity_residual(p, f, DEFAULT_PROBE_GRID).verdict == Verdict::NonStationary {
        return Ok(SupportClass::NonStationary);
    }
    let smooth_inside = p.pieces.iter().any(|q| q.lo < 1.0 && q.mass() != 0.0);
    let atoms_inside = p.atoms.iter().any(|a| a.h < 1.0 && a.mass != 0.0);
    if !smooth_inside && !atoms_inside {
        return Ok(SupportClass::RightOfOne);
    }
    if global_min_criterion(p, f).max() <= GLOBAL_MIN_TOL {
        return Ok(SupportClass::GlobalMin);
    }
    if !smooth_inside {
        return Ok(SupportClass::FiniteAtoms);
    }
    // stationary on its support but matching neither support class:
    // only possible through discretization error in the probes
    Ok(SupportClass::NonStationary)
}
