//! Scare functions: the radial speed profile with which points flee the
//! repelling agent, and the classification of a profile against the
//! controllability conditions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::GaussRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScareError {
    #[error("scare function evaluated at r = {0}; r must be positive and finite")]
    Domain(f64),
    #[error("invalid scare function: {0}")]
    Invalid(String),
}

/// Radial repulsion profile `phi(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScareSpec", into = "ScareSpec")]
pub enum ScareFunction {
    /// `phi(r) = c * r^(-p)`.
    PowerLaw { p: f64, c: f64 },
    /// Monotone table interpolated linearly in log-log coordinates.
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    samples: Vec<[f64; 2]>,
    log_r: Vec<f64>,
    log_phi: Vec<f64>,
    slopes: Vec<f64>,
}

impl Table {
    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    fn segment(&self, lr: f64) -> usize {
        let n = self.log_r.len();
        match self.log_r.partition_point(|&x| x <= lr) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn eval(&self, r: f64) -> (f64, f64) {
        let lr = r.ln();
        let k = self.segment(lr);
        let m = self.slopes[k];
        let v = (self.log_phi[k] + m * (lr - self.log_r[k])).exp();
        (v, m * v / r)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ScareSpec {
    PowerLaw {
        p: f64,
        #[serde(default = "unit_scale")]
        c: f64,
    },
    Tabulated {
        samples: Vec<[f64; 2]>,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<ScareSpec> for ScareFunction {
    type Error = ScareError;
    fn try_from(spec: ScareSpec) -> Result<Self, Self::Error> {
        match spec {
            ScareSpec::PowerLaw { p, c } => ScareFunction::power_law(p, c),
            ScareSpec::Tabulated { samples } => ScareFunction::tabulated(samples),
        }
    }
}

impl From<ScareFunction> for ScareSpec {
    fn from(f: ScareFunction) -> Self {
        match f {
            ScareFunction::PowerLaw { p, c } => ScareSpec::PowerLaw { p, c },
            ScareFunction::Tabulated(t) => ScareSpec::Tabulated { samples: t.samples },
        }
    }
}

impl ScareFunction {
    /// `c * r^(-p)`. `p = 0` is accepted (a constant profile) so that the
    /// degenerate member of the family can still be integrated; it fails (A1).
    pub fn power_law(p: f64, c: f64) -> Result<Self, ScareError> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(ScareError::Invalid(format!(
                "exponent p = {p} must be >= 0"
            )));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(ScareError::Invalid(format!("scale c = {c} must be > 0")));
        }
        Ok(ScareFunction::PowerLaw { p, c })
    }

    pub fn tabulated(mut samples: Vec<[f64; 2]>) -> Result<Self, ScareError> {
        if samples.len() < 2 {
            return Err(ScareError::Invalid(
                "a table needs at least two samples".into(),
            ));
        }
        samples.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for w in samples.windows(2) {
            let ([r0, f0], [r1, f1]) = (w[0], w[1]);
            if !(r0 > 0.0 && f0 > 0.0 && r1.is_finite() && f1 > 0.0) {
                return Err(ScareError::Invalid("table entries must be positive".into()));
            }
            if r1 <= r0 {
                return Err(ScareError::Invalid(format!(
                    "duplicate radius {r1} in table"
                )));
            }
            if f1 >= f0 {
                return Err(ScareError::Invalid(format!(
                    "table is not strictly decreasing between r = {r0} and r = {r1}"
                )));
            }
        }
        let log_r: Vec<f64> = samples.iter().map(|s| s[0].ln()).collect();
        let log_phi: Vec<f64> = samples.iter().map(|s| s[1].ln()).collect();
        let slopes = log_r
            .windows(2)
            .zip(log_phi.windows(2))
            .map(|(r, f)| (f[1] - f[0]) / (r[1] - r[0]))
            .collect();
        Ok(ScareFunction::Tabulated(Table {
            samples,
            log_r,
            log_phi,
            slopes,
        }))
    }

    /// `phi(r)` without the domain check; callers guarantee `r > 0`.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match self {
            ScareFunction::PowerLaw { p, c } => c * inv_pow(r, *p),
            ScareFunction::Tabulated(t) => t.eval(r).0,
        }
    }

    /// `phi'(r)`, for `r > 0`.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            ScareFunction::PowerLaw { p, c } => -p * c * inv_pow(r, *p) / r,
            ScareFunction::Tabulated(t) => t.eval(r).1,
        }
    }

    /// Checked evaluation of `phi(r)`.
    pub fn phi_eval(&self, r: f64) -> Result<f64, ScareError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(ScareError::Domain(r));
        }
        Ok(self.value(r))
    }

    /// Divergence of the single-agent field at distance `r` in dimension `d`:
    /// `phi'(r) + (d - 1) phi(r) / r`.
    pub fn field_divergence(&self, r: f64, d: u32) -> f64 {
        self.derivative(r) + (d as f64 - 1.0) * self.value(r) / r
    }

    pub fn exponent(&self) -> Option<f64> {
        match self {
            ScareFunction::PowerLaw { p, .. } => Some(*p),
            ScareFunction::Tabulated(_) => None,
        }
    }
}

#[inline]
fn inv_pow(r: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < 32.0 {
        1.0 / r.powi(p as i32)
    } else {
        r.powf(-p)
    }
}

impl fmt::Display for ScareFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScareFunction::PowerLaw { p, c } if *c == 1.0 => write!(f, "power:{p}"),
            ScareFunction::PowerLaw { p, c } => write!(f, "power:{p}:{c}"),
            ScareFunction::Tabulated(t) => write!(f, "tabulated[{}]", t.samples.len()),
        }
    }
}

/// Parses the command-line shorthand `power:<p>` or `power:<p>:<c>`.
impl FromStr for ScareFunction {
    type Err = ScareError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let bad = || ScareError::Invalid(format!("cannot parse scare function '{s}'"));
        if parts.next() != Some("power") {
            return Err(bad());
        }
        let p = parts
            .next()
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?;
        let c = match parts.next() {
            Some(c) => c.parse::<f64>().map_err(|_| bad())?,
            None => 1.0,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        ScareFunction::power_law(p, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    NumericLimit,
}

/// Outcome of checking a scare function against every condition.
///
/// `None` means the numeric limit test was inconclusive and the
/// classifier abstained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub a1: bool,
    pub a2: Option<bool>,
    pub a2prime: Option<bool>,
    /// Exponent `b` in (1/2, 1) for which the (A2') limit vanishes.
    pub a2prime_witness: Option<f64>,
    pub necessary_integral_diverges: Option<bool>,
    pub ec2_limsup_infinite: Option<bool>,
    pub ndiv_nonpositive_near_zero: Option<bool>,
    pub method: Method,
    pub dimension: u32,
}

impl ConditionReport {
    pub fn abstained(&self) -> bool {
        [
            self.a2,
            self.a2prime,
            self.necessary_integral_diverges,
            self.ec2_limsup_infinite,
            self.ndiv_nonpositive_near_zero,
        ]
        .iter()
        .any(Option::is_none)
    }
}

const A2PRIME_WITNESS: f64 = 0.75;

pub fn classify(f: &ScareFunction, d: u32) -> ConditionReport {
    assert!(d >= 2, "dimension must be at least 2");
    let df = d as f64;
    match f {
        ScareFunction::PowerLaw { p, .. } => {
            let p = *p;
            let a2 = p > df;
            ConditionReport {
                a1: p > 0.0,
                a2: Some(a2),
                a2prime: Some(a2),
                a2prime_witness: a2.then_some(A2PRIME_WITNESS),
                necessary_integral_diverges: Some(p >= df - 1.0),
                ec2_limsup_infinite: Some(p > df - 1.0),
                ndiv_nonpositive_near_zero: Some(p >= df - 1.0),
                method: Method::Analytic,
                dimension: d,
            }
        }
        ScareFunction::Tabulated(_) => {
            let a2 = [0.5, 1.0, 2.0]
                .iter()
                .all(|&kappa| {
                    limit_vanishes(|r| {
                        (r.powf(df / 2.0) * f.value(kappa * r.sqrt()) + 1.0)
                            / (r.powf(df) * f.value(r))
                    })
                })
                .then_some(true);
            let witness = [0.55, 0.65, 0.75, 0.85, 0.95].into_iter().find(|&b| {
                limit_vanishes(|r| {
                    let rb = r.powf(b);
                    (rb.powf(df) * f.value(rb) + 1.0) / (r.powf(df) * f.value(r))
                })
            });
            let diverges = matches!(necessary_integral(f, d), NecessaryIntegral::Diverges);
            ConditionReport {
                a1: true,
                a2,
                a2prime: witness.map(|_| true),
                a2prime_witness: witness,
                necessary_integral_diverges: Some(diverges),
                ec2_limsup_infinite: monotone_trend(|r| r.powf(df - 1.0) * f.value(r)),
                ndiv_nonpositive_near_zero: sign_near_zero(|r| f.field_divergence(r, d)),
                method: Method::NumericLimit,
                dimension: d,
            }
        }
    }
}

/// Ratio sampled at `r = 2^-k`, k = 4..=20; the limit is declared zero when
/// the last three samples decrease and sit below 1e-3.
fn limit_vanishes<F: Fn(f64) -> f64>(ratio: F) -> bool {
    let vals: Vec<f64> = (4..=20).map(|k| ratio(2f64.powi(-k))).collect();
    let tail = &vals[vals.len() - 3..];
    tail.iter().all(|v| v.is_finite() && *v < 1e-3) && tail[0] > tail[1] && tail[1] > tail[2]
}

/// `Some(true)` if `g(2^-k)` increases strictly for k = 20..=40 (limsup is
/// infinite), `Some(false)` if it never increases there, otherwise `None`.
fn monotone_trend<F: Fn(f64) -> f64>(g: F) -> Option<bool> {
    let vals: Vec<f64> = (20..=40).map(|k| g(2f64.powi(-k))).collect();
    let rel = |a: f64, b: f64| b - a > 1e-9 * a.abs().max(b.abs());
    if vals.windows(2).all(|w| rel(w[0], w[1])) {
        Some(true)
    } else if vals.windows(2).all(|w| !rel(w[0], w[1])) {
        Some(false)
    } else {
        None
    }
}

fn sign_near_zero<F: Fn(f64) -> f64>(h: F) -> Option<bool> {
    let vals: Vec<f64> = (10..=40).map(|k| h(2f64.powi(-k))).collect();
    if vals.iter().all(|v| *v <= 0.0) {
        Some(true)
    } else if vals.iter().all(|v| *v > 0.0) {
        Some(false)
    } else {
        None
    }
}

/// `M = integral_0^1 r^(d-2) phi(r) dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NecessaryIntegral {
    Finite(f64),
    Diverges,
}

impl NecessaryIntegral {
    pub fn finite(self) -> Option<f64> {
        match self {
            NecessaryIntegral::Finite(m) => Some(m),
            NecessaryIntegral::Diverges => None,
        }
    }
}

pub fn necessary_integral(f: &ScareFunction, d: u32) -> NecessaryIntegral {
    assert!(d >= 2, "dimension must be at least 2");
    let df = d as f64;
    match f {
        ScareFunction::PowerLaw { p, c } => {
            if *p < df - 1.0 {
                NecessaryIntegral::Finite(c / (df - 1.0 - p))
            } else {
                NecessaryIntegral::Diverges
            }
        }
        ScareFunction::Tabulated(_) => dyadic_integral(|r| r.powf(df - 2.0) * f.value(r)),
    }
}

/// Sums the integrals over the dyadic shells `[2^-(k+1), 2^-k]`. Five
/// consecutive non-decreasing shells mean divergence; otherwise the tail is
/// closed with a geometric estimate once the shells become negligible.
fn dyadic_integral<F: Fn(f64) -> f64>(g: F) -> NecessaryIntegral {
    let rule = GaussRule::new(16);
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    let mut last_ratio = 0.0;
    for k in 0..400 {
        let hi = 2f64.powi(-k);
        let part = rule.integrate(&g, 0.5 * hi, hi);
        total += part;
        if part >= prev * (1.0 - 1e-9) {
            rising += 1;
            if rising >= 5 {
                return NecessaryIntegral::Diverges;
            }
        } else {
            rising = 0;
        }
        if part < 1e-15 * total && k > 8 {
            let q = part / prev;
            return NecessaryIntegral::Finite(total + part * q / (1.0 - q));
        }
        last_ratio = part / prev;
        prev = part;
    }
    if last_ratio >= 1.0 - 1e-6 {
        NecessaryIntegral::Diverges
    } else {
        NecessaryIntegral::Finite(total + prev * last_ratio / (1.0 - last_ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(p: f64) -> ScareFunction {
        ScareFunction::power_law(p, 1.0).unwrap()
    }

    fn table_of(p: f64) -> ScareFunction {
        let samples = (0..=60)
            .map(|k| {
                let r = 10f64.powf(-3.0 + 4.0 * k as f64 / 60.0);
                [r, r.powf(-p)]
            })
            .collect();
        ScareFunction::tabulated(samples).unwrap()
    }

    #[test]
    fn power_law_values() {
        assert_eq!(pl(3.0).phi_eval(1.0).unwrap(), 1.0);
        assert_eq!(pl(3.0).phi_eval(2.0).unwrap(), 0.125);
        assert!(matches!(pl(3.0).phi_eval(0.0), Err(ScareError::Domain(_))));
        assert!(pl(3.0).phi_eval(-1.0).is_err());
    }

    #[test]
    fn tabulated_matches_direct_power() {
        let t = table_of(3.0);
        let direct = 1.5f64.powi(-3);
        assert!((t.phi_eval(1.5).unwrap() - direct).abs() < 1e-6);
        // log-log extrapolation keeps the power law outside the table
        assert!((t.value(1e-5) / 1e15 - 1.0).abs() < 1e-9);
        assert!((t.derivative(0.7) - (-3.0 * 0.7f64.powi(-4))).abs() < 1e-8);
    }

    #[test]
    fn table_must_decrease() {
        assert!(ScareFunction::tabulated(vec![[1.0, 1.0], [2.0, 1.0]]).is_err());
        assert!(ScareFunction::tabulated(vec![[1.0, 1.0]]).is_err());
        assert!(ScareFunction::power_law(-1.0, 1.0).is_err());
        assert!(ScareFunction::power_law(2.0, 0.0).is_err());
    }

    #[test]
    fn classify_examples() {
        let r = classify(&pl(3.0), 2);
        assert_eq!(r.a2, Some(true));
        assert_eq!(r.a2prime, Some(true));
        assert_eq!(r.necessary_integral_diverges, Some(true));
        let w = r.a2prime_witness.unwrap();
        assert!(w > 0.5 && w < 1.0);

        assert_eq!(
            classify(&pl(0.5), 2).necessary_integral_diverges,
            Some(false)
        );
        assert_eq!(classify(&pl(2.0), 2).a2, Some(false));
    }

    #[test]
    fn necessary_integral_examples() {
        assert_eq!(
            necessary_integral(&pl(0.5), 2),
            NecessaryIntegral::Finite(2.0)
        );
        assert_eq!(necessary_integral(&pl(3.0), 2), NecessaryIntegral::Diverges);
        assert_eq!(
            necessary_integral(&pl(0.0), 3),
            NecessaryIntegral::Finite(0.5)
        );
    }

    #[test]
    fn tabulated_integral_and_divergence_detection() {
        match necessary_integral(&table_of(0.5), 2) {
            NecessaryIntegral::Finite(m) => assert!((m - 2.0).abs() < 1e-6, "M = {m}"),
            other => panic!("expected finite, got {other:?}"),
        }
        assert_eq!(
            necessary_integral(&table_of(1.0), 2),
            NecessaryIntegral::Diverges
        );
        assert_eq!(
            necessary_integral(&table_of(3.0), 2),
            NecessaryIntegral::Diverges
        );
    }

    #[test]
    fn tabulated_classification_never_contradicts_analytic() {
        for p in [0.5, 1.5, 3.0, 5.0] {
            let truth = classify(&pl(p), 2);
            let numeric = classify(&table_of(p), 2);
            assert_eq!(numeric.method, Method::NumericLimit);
            for (n, t) in [
                (numeric.a2, truth.a2),
                (numeric.a2prime, truth.a2prime),
                (
                    numeric.necessary_integral_diverges,
                    truth.necessary_integral_diverges,
                ),
                (numeric.ec2_limsup_infinite, truth.ec2_limsup_infinite),
                (
                    numeric.ndiv_nonpositive_near_zero,
                    truth.ndiv_nonpositive_near_zero,
                ),
            ] {
                if let Some(n) = n {
                    assert_eq!(Some(n), t, "p = {p}");
                }
            }
        }
        // steep tables are decided, not abstained
        let steep = classify(&table_of(5.0), 2);
        assert_eq!(steep.a2, Some(true));
        assert_eq!(steep.necessary_integral_diverges, Some(true));
    }

    #[test]
    fn json_shapes() {
        let f: ScareFunction =
            serde_json::from_str(r#"{"kind":"power-law","p":3.0,"c":1.0}"#).unwrap();
        assert_eq!(f, pl(3.0));
        let g: ScareFunction =
            serde_json::from_str(r#"{"kind":"tabulated","samples":[[1.0,1.0],[2.0,0.125]]}"#)
                .unwrap();
        assert!((g.value(1.5) - 1.5f64.powi(-3)).abs() < 1e-12);
        assert!(serde_json::from_str::<ScareFunction>(r#"{"kind":"power-law","p":-2}"#).is_err());
        let back = serde_json::to_string(&f).unwrap();
        assert_eq!(back, r#"{"kind":"power-law","p":3.0,"c":1.0}"#);
    }

    #[test]
    fn shorthand_parsing() {
        assert_eq!("power:3".parse::<ScareFunction>().unwrap(), pl(3.0));
        assert_eq!(
            "power:0.5:2".parse::<ScareFunction>().unwrap(),
            ScareFunction::power_law(0.5, 2.0).unwrap()
        );
        assert!("cubic:3".parse::<ScareFunction>().is_err());
        assert!("power:x".parse::<ScareFunction>().is_err());
    }
}
