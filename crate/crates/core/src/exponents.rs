//! Exact exponent arithmetic for the embeddings of `W^{k,p}_{X,0}`.

use alloc::format;
use alloc::string::String;
use core::fmt;

use num_traits::{One, ToPrimitive, Zero};

use crate::expr::Rational;

/// Serializes a rational as its `n/d` string.
#[cfg(feature = "serde")]
pub fn ser_rational<S: serde::Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

fn r(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn floor(x: Rational) -> i64 {
    x.floor().to_integer()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Alpha {
    Exact(#[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))] Rational),
    /// `ν̃/p` is an integer: every exponent in `(0, 1)` is admissible.
    AnyInOpenUnit,
}

impl Alpha {
    /// A concrete representative; `default` is used in the integer case.
    pub fn value_or(self, default: f64) -> f64 {
        match self {
            Alpha::Exact(a) => a.to_f64().unwrap_or(default),
            Alpha::AnyInOpenUnit => default,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Embedding {
    /// `kp < ν̃`: `1/q = 1/p − k/ν̃`.
    Subcritical {
        #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
        q: Rational,
    },
    /// `kp = ν̃`: every finite `q`.
    Critical,
    /// `kp > ν̃`: Hölder continuity of the given order and exponent.
    Supercritical { order: i64, alpha: Alpha },
}

impl Embedding {
    pub fn regime(&self) -> &'static str {
        match self {
            Embedding::Subcritical { .. } => "subcritical",
            Embedding::Critical => "critical",
            Embedding::Supercritical { .. } => "supercritical",
        }
    }
}

impl fmt::Display for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Embedding::Subcritical { q } => write!(f, "subcritical: q = {q}"),
            Embedding::Critical => f.write_str("critical: every q < inf"),
            Embedding::Supercritical { order, alpha: Alpha::Exact(a) } => {
                write!(f, "supercritical: Hoelder order {order}, alpha = {a}")
            }
            Embedding::Supercritical { order, alpha: Alpha::AnyInOpenUnit } => {
                write!(f, "supercritical: Hoelder order {order}, any alpha in (0,1)")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExponentError {
    InvalidParameters(String),
    /// A regime precondition failed; the text names the requirement.
    Regime(String),
    /// A parameter identity failed; the text is the identity with both sides.
    Relation(String),
}

impl fmt::Display for ExponentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentError::InvalidParameters(s) => write!(f, "invalid parameters: {s}"),
            ExponentError::Regime(s) => write!(f, "regime precondition violated: {s}"),
            ExponentError::Relation(s) => write!(f, "parameter relation violated: {s}"),
        }
    }
}

impl core::error::Error for ExponentError {}

/// Embedding descriptor for `(ν̃, k, p)`.
pub fn critical_exponents(nu_tilde: u32, k: u32, p: Rational) -> Result<Embedding, ExponentError> {
    if nu_tilde < 2 {
        return Err(ExponentError::InvalidParameters(format!("nu_tilde = {nu_tilde} < 2")));
    }
    if k < 1 {
        return Err(ExponentError::InvalidParameters("k must be at least 1".into()));
    }
    if p < Rational::one() {
        return Err(ExponentError::InvalidParameters(format!("p = {p} < 1")));
    }
    let nu = r(i64::from(nu_tilde));
    let kp = r(i64::from(k)) * p;
    if kp < nu {
        Ok(Embedding::Subcritical { q: p * nu / (nu - kp) })
    } else if kp == nu {
        Ok(Embedding::Critical)
    } else {
        let ratio = nu / p;
        let fl = floor(ratio);
        let alpha = if ratio.is_integer() {
            Alpha::AnyInOpenUnit
        } else {
            Alpha::Exact(r(fl) + Rational::one() - ratio)
        };
        Ok(Embedding::Supercritical { order: i64::from(k) - fl - 1, alpha })
    }
}

/// Best rational approximation used to pass user reals into the exact layer.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::approximate_float(x)
}

/// Parameters of the two-norm interpolation inequality
/// `‖u‖_{s2}^{b s2} ≤ C Σ_{|J|=k} ‖X^J u‖_p^p ‖u‖_{s1}^{a s1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GnParams {
    pub nu_tilde: u32,
    pub k: u32,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
    pub p: Rational,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
    pub s1: Rational,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
    pub s2: Rational,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
    pub a: Rational,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser_rational"))]
    pub b: Rational,
}

impl GnParams {
    /// Checks `1 ≤ s1 < s2 < pν̃/(ν̃−kp)`, `b − a = (ν̃−kp)/ν̃` and `b s2 − a s1 = p`.
    pub fn validate(&self) -> Result<(), ExponentError> {
        let nu = r(i64::from(self.nu_tilde));
        let kp = r(i64::from(self.k)) * self.p;
        if self.p < Rational::one() {
            return Err(ExponentError::InvalidParameters(format!("p = {} < 1", self.p)));
        }
        if kp >= nu {
            return Err(ExponentError::Regime(format!(
                "requires kp < nu_tilde (kp = {kp}, nu_tilde = {nu})"
            )));
        }
        if self.a <= Rational::zero() || self.b <= Rational::zero() {
            return Err(ExponentError::InvalidParameters("a and b must be positive".into()));
        }
        let q = self.p * nu / (nu - kp);
        if !(Rational::one() <= self.s1 && self.s1 < self.s2 && self.s2 < q) {
            return Err(ExponentError::Relation(format!(
                "1 <= s1 < s2 < p*nu/(nu-kp): s1 = {}, s2 = {}, bound = {q}",
                self.s1, self.s2
            )));
        }
        let lhs = self.b - self.a;
        let rhs = (nu - kp) / nu;
        if lhs != rhs {
            return Err(ExponentError::Relation(format!("b - a = (nu-kp)/nu: {lhs} != {rhs}")));
        }
        let lhs = self.b * self.s2 - self.a * self.s1;
        if lhs != self.p {
            return Err(ExponentError::Relation(format!("b*s2 - a*s1 = p: {lhs} != {}", self.p)));
        }
        Ok(())
    }

    /// The `p = 2, k = 1, s1 = 1, s2 = 2` case.
    pub fn nash(nu_tilde: u32) -> Result<GnParams, ExponentError> {
        if nu_tilde <= 2 {
            return Err(ExponentError::Regime(format!("Nash requires nu_tilde > 2 (got {nu_tilde})")));
        }
        let nu = r(i64::from(nu_tilde));
        let params = GnParams {
            nu_tilde,
            k: 1,
            p: r(2),
            s1: r(1),
            s2: r(2),
            a: r(4) / nu,
            b: r(1) + r(2) / nu,
        };
        params.validate()?;
        Ok(params)
    }

    /// The `p = 2, k = 1, s1 = 2, s2 = 2 + 4/ν̃` case.
    pub fn moser(nu_tilde: u32) -> Result<GnParams, ExponentError> {
        if nu_tilde <= 2 {
            return Err(ExponentError::Regime(format!("Moser requires nu_tilde > 2 (got {nu_tilde})")));
        }
        let nu = r(i64::from(nu_tilde));
        let params = GnParams {
            nu_tilde,
            k: 1,
            p: r(2),
            s1: r(2),
            s2: r(2) + r(4) / nu,
            a: r(2) / nu,
            b: r(1),
        };
        params.validate()?;
        Ok(params)
    }

    /// Interpolation form: `θ` is solved from
    /// `1/s2 = (1−θ)/s1 + θ(1/p − k/ν̃)`, then `b = p/(θ s2)` and
    /// `a = p(1−θ)/(s1 θ)`.
    pub fn gagliardo_nirenberg(
        nu_tilde: u32,
        k: u32,
        p: Rational,
        s1: Rational,
        s2: Rational,
    ) -> Result<(GnParams, Rational), ExponentError> {
        if s1 < Rational::one() {
            return Err(ExponentError::Relation(format!("s1 >= 1: s1 = {s1}")));
        }
        let nu = r(i64::from(nu_tilde));
        let kp = r(i64::from(k)) * p;
        if kp >= nu {
            return Err(ExponentError::Regime(format!(
                "requires kp < nu_tilde (kp = {kp}, nu_tilde = {nu})"
            )));
        }
        let inv_q = p.recip() - r(i64::from(k)) / nu;
        let denom = inv_q - s1.recip();
        if denom.is_zero() {
            return Err(ExponentError::Relation("theta is undetermined (1/q = 1/s1)".into()));
        }
        let theta = (s2.recip() - s1.recip()) / denom;
        if !(theta > Rational::zero() && theta <= Rational::one()) {
            return Err(ExponentError::Relation(format!("theta in (0,1]: theta = {theta}")));
        }
        let b = p / (theta * s2);
        let a = p * (Rational::one() - theta) / (s1 * theta);
        // Re-check the interpolation identity itself.
        let lhs = s2.recip();
        let rhs = (Rational::one() - theta) / s1 + theta * inv_q;
        if lhs != rhs {
            return Err(ExponentError::Relation(format!("1/s2 = (1-theta)/s1 + theta/q: {lhs} != {rhs}")));
        }
        let params = GnParams { nu_tilde, k, p, s1, s2, a, b };
        params.validate()?;
        Ok((params, theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_regimes() {
        assert_eq!(critical_exponents(3, 1, r(2)).unwrap(), Embedding::Subcritical { q: r(6) });
        assert_eq!(critical_exponents(4, 2, r(2)).unwrap(), Embedding::Critical);
        assert_eq!(
            critical_exponents(3, 1, r(6)).unwrap(),
            Embedding::Supercritical { order: 0, alpha: Alpha::Exact(Rational::new(1, 2)) }
        );
        assert_eq!(
            critical_exponents(2, 1, r(2)).unwrap(),
            Embedding::Critical
        );
        assert_eq!(
            critical_exponents(4, 1, r(2)).unwrap(),
            Embedding::Subcritical { q: r(4) }
        );
        assert!(critical_exponents(1, 1, r(2)).is_err());
    }

    #[test]
    fn nash_rejects_dimension_two() {
        assert!(matches!(GnParams::nash(2), Err(ExponentError::Regime(_))));
        let p = GnParams::nash(4).unwrap();
        assert_eq!((p.a, p.b), (r(1), Rational::new(3, 2)));
    }

    #[test]
    fn validator_names_the_failed_identity() {
        let mut p = GnParams::moser(3).unwrap();
        p.b = r(2);
        match p.validate() {
            Err(ExponentError::Relation(s)) => assert!(s.starts_with("b - a")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
