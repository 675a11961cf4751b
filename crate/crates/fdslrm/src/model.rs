//! Model structure: deterministic trend terms, random harmonic components and
//! the realized design matrices F (n x k) and V (n x l) over t = 1..n.
//!
//! Frequencies built from harmonics are stored exactly as the integer pair
//! (harmonic, n), so discrete trigonometric orthogonality of a design is
//! decided structurally first; raw-frequency and polynomial terms fall back
//! to a numerical test.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_value_extremes;
use crate::scalar::{count, dot, real, Scalar};

/// Rank deficiency is declared when sigma_min/sigma_max of [F V] falls below
/// this threshold.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// An off-diagonal inner product counts as zero when it is below this factor
/// times the norms of the columns involved.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

/// Angular frequency of a trigonometric term, in radians per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    /// Exact Fourier frequency 2*pi*h/n for the model length n.
    Harmonic(u32),
    /// Arbitrary frequency in radians per step.
    Radians(f64),
}

/// One basis function of the trend or of the random component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermSpec {
    /// f(t) = 1
    Constant,
    /// f(t) = cos(freq * t)
    Cosine(Frequency),
    /// f(t) = sin(freq * t)
    Sine(Frequency),
    /// f(t) = t^power
    Power(u32),
}

/// Structural identity of a harmonic term; `None` for terms that need the
/// numerical orthogonality test. The constant is harmonic zero of the cosine
/// family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum HarmonicKey {
    Cos(u32),
    Sin(u32),
}

impl TermSpec {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            TermSpec::Constant | TermSpec::Power(_) => Ok(()),
            TermSpec::Cosine(Frequency::Harmonic(h)) => {
                if h == 0 || 2 * h as usize > n {
                    Err(Error::InvalidTerm(format!(
                        "cosine harmonic {h} out of range 1..={} for n = {n}",
                        n / 2
                    )))
                } else {
                    Ok(())
                }
            }
            TermSpec::Sine(Frequency::Harmonic(h)) => {
                if h == 0 || 2 * h as usize >= n {
                    Err(Error::InvalidTerm(format!(
                        "sine harmonic {h} out of range 1..{} for n = {n} \
                         (sine at frequency pi vanishes on integer t)",
                        (n + 1) / 2
                    )))
                } else {
                    Ok(())
                }
            }
            TermSpec::Cosine(Frequency::Radians(w)) => {
                if w > 0.0 && w <= PI {
                    Ok(())
                } else {
                    Err(Error::InvalidTerm(format!(
                        "cosine frequency {w} outside (0, pi]"
                    )))
                }
            }
            TermSpec::Sine(Frequency::Radians(w)) => {
                if w > 0.0 && w < PI {
                    Ok(())
                } else {
                    Err(Error::InvalidTerm(format!(
                        "sine frequency {w} outside (0, pi)"
                    )))
                }
            }
        }
    }

    fn harmonic_key(&self) -> Option<HarmonicKey> {
        match *self {
            TermSpec::Constant => Some(HarmonicKey::Cos(0)),
            TermSpec::Cosine(Frequency::Harmonic(h)) => Some(HarmonicKey::Cos(h)),
            TermSpec::Sine(Frequency::Harmonic(h)) => Some(HarmonicKey::Sin(h)),
            _ => None,
        }
    }

    /// Evaluates the term at time t (1-based) for a model of length n.
    fn evaluate<F: Scalar>(&self, t: usize, n: usize) -> F {
        match *self {
            TermSpec::Constant => F::one(),
            TermSpec::Cosine(Frequency::Harmonic(h)) => {
                real::<F>(harmonic_angle(h as u64, t, n)).cos()
            }
            TermSpec::Sine(Frequency::Harmonic(h)) => {
                real::<F>(harmonic_angle(h as u64, t, n)).sin()
            }
            TermSpec::Cosine(Frequency::Radians(w)) => real::<F>(w * t as f64).cos(),
            TermSpec::Sine(Frequency::Radians(w)) => real::<F>(w * t as f64).sin(),
            TermSpec::Power(p) => count::<F>(t).powi(p as i32),
        }
    }

    /// Exact squared column norm over t = 1..n for harmonic terms.
    fn structural_norm_sq(&self, n: usize) -> Option<f64> {
        match self.harmonic_key()? {
            HarmonicKey::Cos(0) => Some(n as f64),
            HarmonicKey::Cos(h) if 2 * h as usize == n => Some(n as f64),
            _ => Some(n as f64 / 2.0),
        }
    }
}

/// Angle 2*pi*h*t/n with the product reduced mod n first, so large t costs no
/// precision.
fn harmonic_angle(h: u64, t: usize, n: usize) -> f64 {
    let r = (h.wrapping_mul(t as u64)) % n as u64;
    2.0 * PI * (r as f64) / (n as f64)
}

/// Symbolic description of the model: length, trend terms and random terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    n: usize,
    trend: Vec<TermSpec>,
    random: Vec<TermSpec>,
}

impl ModelSpec {
    pub fn new(n: usize, trend: Vec<TermSpec>, random: Vec<TermSpec>) -> Result<Self> {
        let (k, l) = (trend.len(), random.len());
        if n <= k + l {
            return Err(Error::TooFewObservations { n, k, l });
        }
        for term in trend.iter().chain(random.iter()) {
            term.validate(n)?;
        }
        Ok(ModelSpec { n, trend, random })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.trend.len()
    }

    pub fn l(&self) -> usize {
        self.random.len()
    }

    pub fn trend_terms(&self) -> &[TermSpec] {
        &self.trend
    }

    pub fn random_terms(&self) -> &[TermSpec] {
        &self.random
    }

    /// Realizes the design matrices over t = 1..n and verifies rank,
    /// orthogonality and column norms.
    pub fn realize<F: Scalar>(&self) -> Result<DesignSet<F>> {
        let n = self.n;
        let f_cols: Vec<Vec<F>> = self.trend.iter().map(|term| column(term, n)).collect();
        let v_cols: Vec<Vec<F>> = self.random.iter().map(|term| column(term, n)).collect();

        let keys: Option<Vec<HarmonicKey>> = self
            .trend
            .iter()
            .chain(self.random.iter())
            .map(TermSpec::harmonic_key)
            .collect();

        if let Some(keys) = keys {
            // Structural decision: distinct harmonic terms are exactly
            // orthogonal on t = 1..n, duplicated ones are exactly collinear.
            let mut sorted = keys.clone();
            sorted.sort_unstable_by_key(|key| match *key {
                HarmonicKey::Cos(h) => (0u8, h),
                HarmonicKey::Sin(h) => (1u8, h),
            });
            sorted.dedup();
            if sorted.len() < keys.len() {
                return Err(Error::RankDeficient { ratio: 0.0 });
            }
            let norms = self
                .random
                .iter()
                .map(|term| real(term.structural_norm_sq(n).expect("harmonic term")))
                .collect();
            return Ok(DesignSet { n, f_cols, v_cols, is_orthogonal: true, column_norms_sq: norms });
        }

        DesignSet::from_columns(f_cols, v_cols)
    }
}

fn column<F: Scalar>(term: &TermSpec, n: usize) -> Vec<F> {
    (1..=n).map(|t| term.evaluate(t, n)).collect()
}

/// Realized design matrices with the orthogonality flag and the squared
/// column norms of V.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet<F> {
    n: usize,
    f_cols: Vec<Vec<F>>,
    v_cols: Vec<Vec<F>>,
    is_orthogonal: bool,
    column_norms_sq: Vec<F>,
}

impl<F: Scalar> DesignSet<F> {
    /// Builds a design from raw columns, checking identifiability, rank and
    /// orthogonality numerically.
    pub fn from_columns(f_cols: Vec<Vec<F>>, v_cols: Vec<Vec<F>>) -> Result<Self> {
        let n = f_cols
            .first()
            .or_else(|| v_cols.first())
            .map_or(0, Vec::len);
        if f_cols.iter().chain(v_cols.iter()).any(|c| c.len() != n) {
            return Err(Error::InvalidInput("design columns have unequal lengths".into()));
        }
        let (k, l) = (f_cols.len(), v_cols.len());
        if n <= k + l {
            return Err(Error::TooFewObservations { n, k, l });
        }

        let column_norms_sq: Vec<F> = v_cols.iter().map(|c| dot(c, c)).collect();
        let largest = column_norms_sq
            .iter()
            .fold(F::zero(), |acc, &x| acc.max(x));
        for (j, &nsq) in column_norms_sq.iter().enumerate() {
            if nsq <= real::<F>(1e-12) * largest.max(F::one() * F::epsilon()) || nsq == F::zero() {
                return Err(Error::DegenerateColumn { index: j });
            }
        }

        if k + l > 0 {
            let all: Vec<Vec<F>> = f_cols.iter().chain(v_cols.iter()).cloned().collect();
            let (smin, smax) = singular_value_extremes(&all);
            if smax == F::zero() || smin / smax < real(RANK_TOLERANCE) {
                let ratio = if smax == F::zero() {
                    0.0
                } else {
                    (smin / smax).to_f64().unwrap_or(0.0)
                };
                return Err(Error::RankDeficient { ratio });
            }
        }

        let is_orthogonal = numeric_orthogonality(&f_cols, &v_cols);
        Ok(DesignSet { n, f_cols, v_cols, is_orthogonal, column_norms_sq })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.f_cols.len()
    }

    pub fn l(&self) -> usize {
        self.v_cols.len()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.is_orthogonal
    }

    /// Squared norms |v_j|^2, exact for harmonic designs.
    pub fn column_norms_sq(&self) -> &[F] {
        &self.column_norms_sq
    }

    pub fn f_cols(&self) -> &[Vec<F>] {
        &self.f_cols
    }

    pub fn v_cols(&self) -> &[Vec<F>] {
        &self.v_cols
    }
}

fn numeric_orthogonality<F: Scalar>(f_cols: &[Vec<F>], v_cols: &[Vec<F>]) -> bool {
    let tol = real::<F>(ORTHOGONALITY_TOLERANCE);
    let norm = |c: &Vec<F>| dot(c, c).sqrt();
    for f in f_cols {
        for v in v_cols {
            if dot(f, v).abs() > tol * norm(f) * norm(v) {
                return false;
            }
        }
    }
    for i in 0..v_cols.len() {
        for j in i + 1..v_cols.len() {
            if dot(&v_cols[i], &v_cols[j]).abs() > tol * norm(&v_cols[i]) * norm(&v_cols[j]) {
                return false;
            }
        }
    }
    true
}

/// One periodogram ordinate at the Fourier frequency 2*pi*h/n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodogramOrdinate<F> {
    pub harmonic: usize,
    pub frequency: F,
    pub power: F,
}

/// Periodogram I(w_h) = (1/n) * |sum_t x(t) e^{-i w_h t}|^2 at the Fourier
/// frequencies w_h = 2*pi*h/n, h = 1..floor(n/2).
pub fn periodogram<F: Scalar>(series: &[F]) -> Result<Vec<PeriodogramOrdinate<F>>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { min: 2, actual: n });
    }
    let inv_n = F::one() / count::<F>(n);
    (1..=n / 2)
        .map(|h| {
            let mut re = F::zero();
            let mut im = F::zero();
            for (idx, &x) in series.iter().enumerate() {
                let angle = real::<F>(harmonic_angle(h as u64, idx + 1, n));
                re += x * angle.cos();
                im -= x * angle.sin();
            }
            Ok(PeriodogramOrdinate {
                harmonic: h,
                frequency: real::<F>(2.0 * PI) * count::<F>(h) * inv_n,
                power: (re * re + im * im) * inv_n,
            })
        })
        .collect()
}

/// Sorts ordinates by descending power.
pub fn sort_by_power<F: Scalar>(mut ordinates: Vec<PeriodogramOrdinate<F>>) -> Vec<PeriodogramOrdinate<F>> {
    ordinates.sort_by(|a, b| b.power.partial_cmp(&a.power).unwrap_or(std::cmp::Ordering::Equal));
    ordinates
}

// ---------------------------------------------------------------------------
// JSON model configuration
// ---------------------------------------------------------------------------

/// On-disk model description:
/// `{ "n": int, "trend": [term...], "random": [term...] }` with
/// `term = {"kind": "const"|"cos"|"sin"|"poly", "harmonic": int, "power": int}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub trend: Vec<TermConfig>,
    pub random: Vec<TermConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<u32>,
}

impl TermConfig {
    fn to_term(&self) -> Result<TermSpec> {
        let plain = |cfg: &TermConfig, what: &str| -> Result<()> {
            if cfg.harmonic.is_some() || cfg.power.is_some() {
                match what {
                    "const" => Err(Error::InvalidTerm(
                        "\"const\" terms take no \"harmonic\" or \"power\" field".into(),
                    )),
                    _ => Ok(()),
                }
            } else {
                Ok(())
            }
        };
        match self.kind.as_str() {
            "const" => {
                plain(self, "const")?;
                Ok(TermSpec::Constant)
            }
            "cos" | "sin" => {
                if self.power.is_some() {
                    return Err(Error::InvalidTerm(format!(
                        "\"{}\" terms take no \"power\" field",
                        self.kind
                    )));
                }
                let h = self.harmonic.ok_or_else(|| {
                    Error::InvalidTerm(format!("\"{}\" terms need a \"harmonic\" field", self.kind))
                })?;
                if self.kind == "cos" {
                    Ok(TermSpec::Cosine(Frequency::Harmonic(h)))
                } else {
                    Ok(TermSpec::Sine(Frequency::Harmonic(h)))
                }
            }
            "poly" => {
                if self.harmonic.is_some() {
                    return Err(Error::InvalidTerm(
                        "\"poly\" terms take no \"harmonic\" field".into(),
                    ));
                }
                let p = self
                    .power
                    .ok_or_else(|| Error::InvalidTerm("\"poly\" terms need a \"power\" field".into()))?;
                Ok(TermSpec::Power(p))
            }
            other => Err(Error::InvalidTerm(format!("unknown term kind \"{other}\""))),
        }
    }

    fn from_term(term: &TermSpec) -> Result<TermConfig> {
        let cfg = |kind: &str, harmonic, power| TermConfig { kind: kind.to_string(), harmonic, power };
        match *term {
            TermSpec::Constant => Ok(cfg("const", None, None)),
            TermSpec::Cosine(Frequency::Harmonic(h)) => Ok(cfg("cos", Some(h), None)),
            TermSpec::Sine(Frequency::Harmonic(h)) => Ok(cfg("sin", Some(h), None)),
            TermSpec::Power(p) => Ok(cfg("poly", None, Some(p))),
            TermSpec::Cosine(Frequency::Radians(_)) | TermSpec::Sine(Frequency::Radians(_)) => {
                Err(Error::InvalidTerm(
                    "raw-frequency terms have no file representation".into(),
                ))
            }
        }
    }
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let trend = self.trend.iter().map(TermConfig::to_term).collect::<Result<_>>()?;
        let random = self.random.iter().map(TermConfig::to_term).collect::<Result<_>>()?;
        ModelSpec::new(self.n, trend, random)
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(ModelConfig {
            n: spec.n(),
            trend: spec.trend_terms().iter().map(TermConfig::from_term).collect::<Result<_>>()?,
            random: spec.random_terms().iter().map(TermConfig::from_term).collect::<Result<_>>()?,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidInput(format!("model config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes")
    }
}

/// Parses a JSON model configuration into a validated [`ModelSpec`].
pub fn parse_model_config(json: &str) -> Result<ModelSpec> {
    ModelConfig::from_json(json)?.to_spec()
}
