use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HypothesisReport, NashVariant};
use crate::error::{Error, Result};
use crate::functionals::ProductVariant;
use crate::space::MetricSource;

/// The inequalities whose constants can be evaluated from a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// Ahlfors regular in the resistance metric at all scales.
    Resistance,
    /// Ahlfors regular for `r < C0`; bounds `Var (E + 1)`.
    BoundedResistance,
    /// Ahlfors regular for `r > C0`; bounds `(Var + 1) E`.
    GraphResistance,
    Poincare,
    ModifiedPoincare,
    /// Poincaré and reverse doubling for `r < C0`; bounds `Var (E + 1)`.
    BoundedPoincare,
    Nash,
    MomentNash,
    LocalNash,
    LocalMomentNash,
    /// The real line with Lebesgue measure, `Var E >= 1/8`.
    HeisenbergLine,
}

impl Theorem {
    pub const ALL: [Theorem; 11] = [
        Theorem::Resistance,
        Theorem::BoundedResistance,
        Theorem::GraphResistance,
        Theorem::Poincare,
        Theorem::ModifiedPoincare,
        Theorem::BoundedPoincare,
        Theorem::Nash,
        Theorem::MomentNash,
        Theorem::LocalNash,
        Theorem::LocalMomentNash,
        Theorem::HeisenbergLine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Theorem::Resistance => "resistance",
            Theorem::BoundedResistance => "bounded-resistance",
            Theorem::GraphResistance => "graph-resistance",
            Theorem::Poincare => "poincare",
            Theorem::ModifiedPoincare => "modified-poincare",
            Theorem::BoundedPoincare => "bounded-poincare",
            Theorem::Nash => "nash",
            Theorem::MomentNash => "moment-nash",
            Theorem::LocalNash => "local-nash",
            Theorem::LocalMomentNash => "local-moment-nash",
            Theorem::HeisenbergLine => "heisenberg-line",
        }
    }

    /// The product the theorem bounds.
    pub fn variant(&self) -> ProductVariant {
        match self {
            Theorem::BoundedResistance
            | Theorem::BoundedPoincare
            | Theorem::LocalNash
            | Theorem::LocalMomentNash => ProductVariant::BoundedEnergy,
            Theorem::GraphResistance => ProductVariant::BoundedVariance,
            _ => ProductVariant::Unbounded,
        }
    }

    pub fn requires_resistance_metric(&self) -> bool {
        matches!(
            self,
            Theorem::Resistance | Theorem::BoundedResistance | Theorem::GraphResistance
        )
    }

    pub fn nash_variant(&self) -> Option<NashVariant> {
        match self {
            Theorem::Nash => Some(NashVariant::Global),
            Theorem::MomentNash => Some(NashVariant::Moment),
            Theorem::LocalNash => Some(NashVariant::Local),
            Theorem::LocalMomentNash => Some(NashVariant::LocalMoment),
            _ => None,
        }
    }

    pub fn uses_poincare(&self) -> bool {
        matches!(
            self,
            Theorem::Poincare | Theorem::ModifiedPoincare | Theorem::BoundedPoincare
        )
    }

    /// Exponent of the variance the theorem is stated for: `b + 1` for the
    /// resistance family, the Poincaré exponent, `2b / theta` for Nash.
    pub fn gamma(&self, report: &HypothesisReport, theta: Option<f64>) -> Result<f64> {
        if self.requires_resistance_metric() {
            return Ok(report.b + 1.0);
        }
        if self.uses_poincare() {
            return report
                .poincare
                .map(|p| p.gamma)
                .ok_or_else(|| incomplete(*self, "poincare"));
        }
        if self.nash_variant().is_some() {
            let theta = theta.ok_or_else(|| incomplete(*self, "theta"))?;
            return Ok(2.0 * report.b / theta);
        }
        Ok(2.0)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('_', "-");
        Theorem::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| Error::Domain(format!("unknown theorem '{s}'")))
    }
}

/// Auxiliary inputs: the scale `C0` separating small and large radii, and
/// the Nash dimension parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    /// Defaults to the top of the fit window for the bounded theorems and
    /// to its bottom for the graph theorem.
    pub c0: Option<f64>,
    pub theta: Option<f64>,
}

fn incomplete(t: Theorem, field: &str) -> Error {
    Error::IncompleteReport(format!("{t} needs '{field}'"))
}

/// `C1^{1/b} / (16 C2^{1+1/b} 9^{1/b})`.
fn resistance_constant(b: f64, c1: f64, c2: f64) -> f64 {
    c1.powf(1.0 / b) / (16.0 * c2.powf(1.0 + 1.0 / b) * 9f64.powf(1.0 / b))
}

/// `c` with `mu(B_{cr}) > 8 C2 r^b`: `c^b = 9 C2 / C1`.
fn resistance_dilation(b: f64, c1: f64, c2: f64) -> f64 {
    (9.0 * c2 / c1).powf(1.0 / b)
}

/// `(9 - 4 sqrt 2) / (32 C1 c^gamma)` with `c = scale * k^{n+1}` and
/// `n = floor(4 log 2 / log C2) + 1`.
fn poincare_constant(c1_p: f64, c2_rd: f64, k: f64, gamma: f64, scale: f64) -> f64 {
    (9.0 - 4.0 * 2f64.sqrt()) / (32.0 * c1_p * poincare_dilation(c2_rd, k, scale).powf(gamma))
}

fn poincare_dilation(c2_rd: f64, k: f64, scale: f64) -> f64 {
    let n = (4.0 * 2f64.ln() / c2_rd.ln()).floor() + 1.0;
    scale * k.powf(n + 1.0)
}

/// When the hypotheses hold only for `r < C0`: either `c r < C0` and the
/// unbounded argument goes through, or `r >= C0 / c` and already
/// `Var >= r^gamma / 2 >= (C0 / c)^gamma / 2`.
fn bounded_constant(unbounded: f64, c0: f64, c: f64, gamma: f64) -> f64 {
    unbounded.min((c0 / c).powf(gamma) / 2.0)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// The explicit constant `C` in `product >= C` that the theorem's proof
/// gives from the constants in `report`.
pub fn theorem_lower_bound(report: &HypothesisReport, theorem: Theorem, params: &TheoremParams) -> Result<f64> {
    if theorem.requires_resistance_metric() && report.metric_source != MetricSource::EffectiveResistance {
        return Err(Error::UnsupportedMetric(format!(
            "{theorem} is stated for the effective resistance metric, report uses {}",
            report.metric_source.as_str()
        )));
    }
    let b = positive("b", report.b)?;
    let (c1, c2) = (positive("C1", report.c1_growth)?, positive("C2", report.c2_growth)?);
    let c0 = |default: f64| positive("C0", params.c0.unwrap_or(default));

    let value = match theorem {
        Theorem::HeisenbergLine => 0.125,
        Theorem::Resistance => resistance_constant(b, c1, c2),
        Theorem::BoundedResistance => {
            let c = resistance_dilation(b, c1, c2);
            bounded_constant(resistance_constant(b, c1, c2), c0(report.radius_range.1)?, c, b + 1.0)
        }
        Theorem::GraphResistance => {
            // radii below C0 are replaced by C0 itself: E >= C / C0^{b+1}
            let c0 = c0(report.radius_range.0)?;
            resistance_constant(b, c1, c2) * 1f64.min(c0.powf(-(b + 1.0)))
        }
        Theorem::Poincare | Theorem::ModifiedPoincare | Theorem::BoundedPoincare => {
            let p = report.poincare.ok_or_else(|| incomplete(theorem, "poincare"))?;
            let rd = report
                .reverse_doubling
                .ok_or_else(|| incomplete(theorem, "reverse_doubling"))?;
            if !rd.holds() {
                return Err(Error::HypothesisViolation(format!(
                    "reverse doubling constant {} is not > 1",
                    rd.c2_rd
                )));
            }
            let c1_p = positive("Poincare C1", p.c1_p)?;
            let scale = if theorem == Theorem::ModifiedPoincare { 2.0 } else { 1.0 };
            let unbounded = poincare_constant(c1_p, rd.c2_rd, rd.k, p.gamma, scale);
            if theorem == Theorem::BoundedPoincare {
                let c = poincare_dilation(rd.c2_rd, rd.k, scale);
                bounded_constant(unbounded, c0(report.radius_range.1)?, c, p.gamma)
            } else {
                unbounded
            }
        }
        Theorem::Nash | Theorem::LocalNash | Theorem::MomentNash | Theorem::LocalMomentNash => {
            let theta = params.theta.ok_or_else(|| incomplete(theorem, "theta"))?;
            let theta = positive("theta", theta)?;
            let variant = theorem.nash_variant().expect("Nash theorem");
            let est = report
                .nash_estimate(theta, variant)
                .ok_or_else(|| incomplete(theorem, &format!("nash[{variant}, theta={theta}]")))?;
            let nash_c2 = positive("Nash C2", est.c2_n)?;
            // the Nash theorems use only the upper growth constant
            let upper = c2;
            let gamma = 2.0 * b / theta;
            if variant.is_moment() {
                let p = 1.0 + 2.0 / theta;
                2f64.powf(-p - 1.0 - 2.0 * b / (theta * gamma)) / (nash_c2 * upper.powf(2.0 / theta))
            } else {
                if theta >= 2.0 {
                    return Err(Error::HypothesisViolation(format!(
                        "{theorem} needs theta < 2, got {theta}"
                    )));
                }
                let a = upper.sqrt() * 2f64.powf(b / 2.0) / (1.0 - 2f64.powf(b - gamma)).sqrt()
                    * (2.0 * gamma - b)
                    / (gamma - b)
                    * ((gamma - b) / b).powf(b / gamma);
                1.0 / (nash_c2 * a.powf(4.0 / theta))
            }
        }
    };
    positive("theorem constant", value)
}
