//! Five-class severity scale, CVSS scores and per-class histograms.

use std::fmt;
use std::ops::{Add, AddAssign, Index};
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Severity classes, ordered `Negligible < Low < Medium < High < Critical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityClass {
    Negligible,
    Low,
    Medium,
    High,
    Critical,
}

impl SeverityClass {
    /// Table column order: C, H, M, L, N.
    pub const DESCENDING: [SeverityClass; 5] = [
        SeverityClass::Critical,
        SeverityClass::High,
        SeverityClass::Medium,
        SeverityClass::Low,
        SeverityClass::Negligible,
    ];

    pub fn letter(self) -> char {
        match self {
            SeverityClass::Critical => 'C',
            SeverityClass::High => 'H',
            SeverityClass::Medium => 'M',
            SeverityClass::Low => 'L',
            SeverityClass::Negligible => 'N',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityClass::Critical => "critical",
            SeverityClass::High => "high",
            SeverityClass::Medium => "medium",
            SeverityClass::Low => "low",
            SeverityClass::Negligible => "negligible",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown severity class `{0}` (expected critical, high, medium, low or negligible)")]
pub struct UnknownSeverity(pub String);

impl FromStr for SeverityClass {
    type Err = UnknownSeverity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "critical" | "c" => Ok(SeverityClass::Critical),
            "high" | "h" => Ok(SeverityClass::High),
            "medium" | "moderate" | "m" => Ok(SeverityClass::Medium),
            "low" | "l" => Ok(SeverityClass::Low),
            "negligible" | "none" | "n" => Ok(SeverityClass::Negligible),
            _ => Err(UnknownSeverity(s.to_string())),
        }
    }
}

/// A CVSS base score held as an integer number of tenths (0..=100).
///
/// Scores carry exactly one decimal, so storing tenths keeps bucket
/// boundaries exact and the serialized form stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cvss(u8);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CvssError {
    #[error("cvss score {0} is outside [0.0, 10.0]")]
    OutOfRange(f64),
    #[error("cvss score {0} does not have exactly one decimal place")]
    NotOneDecimal(f64),
}

impl Cvss {
    pub const MAX: Cvss = Cvss(100);

    pub fn from_tenths(tenths: u8) -> Option<Self> {
        (tenths <= 100).then_some(Cvss(tenths))
    }

    pub fn from_f64(score: f64) -> Result<Self, CvssError> {
        if !score.is_finite() || !(0.0..=10.0).contains(&score) {
            return Err(CvssError::OutOfRange(score));
        }
        let scaled = score * 10.0;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-6 {
            return Err(CvssError::NotOneDecimal(score));
        }
        Ok(Cvss(rounded as u8))
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl fmt::Display for Cvss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl Serialize for Cvss {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Cvss {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = f64::deserialize(deserializer)?;
        Cvss::from_f64(raw).map_err(D::Error::custom)
    }
}

/// Resolve a severity class from an optional CVSS score and an optional
/// vendor-assigned class. A vendor class always wins; otherwise the score
/// is bucketed on half-open intervals:
/// `[9.0,10.0]` Critical, `[7.0,9.0)` High, `[4.0,7.0)` Medium,
/// `(0.0,4.0)` Low, and `0.0` or no score Negligible.
pub fn classify_severity(cvss: Option<Cvss>, vendor: Option<SeverityClass>) -> SeverityClass {
    if let Some(vendor) = vendor {
        return vendor;
    }
    match cvss.map(Cvss::tenths) {
        Some(90..) => SeverityClass::Critical,
        Some(70..=89) => SeverityClass::High,
        Some(40..=69) => SeverityClass::Medium,
        Some(1..=39) => SeverityClass::Low,
        Some(0) | None => SeverityClass::Negligible,
    }
}

/// Zero-filled count per severity class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SeverityHistogram([u64; 5]);

impl SeverityHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from counts in table order (C, H, M, L, N).
    pub fn from_chmln(counts: [u64; 5]) -> Self {
        let mut h = Self::default();
        for (class, count) in SeverityClass::DESCENDING.iter().zip(counts) {
            h.0[class.slot()] = count;
        }
        h
    }

    pub fn record(&mut self, class: SeverityClass) {
        self.0[class.slot()] += 1;
    }

    pub fn get(&self, class: SeverityClass) -> u64 {
        self.0[class.slot()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Counts in table order (C, H, M, L, N).
    pub fn chmln(&self) -> [u64; 5] {
        SeverityClass::DESCENDING.map(|c| self.get(c))
    }

    /// Number of entries at or above `threshold`.
    pub fn at_or_above(&self, threshold: SeverityClass) -> u64 {
        SeverityClass::DESCENDING
            .iter()
            .filter(|c| **c >= threshold)
            .map(|c| self.get(*c))
            .sum()
    }
}

impl FromIterator<SeverityClass> for SeverityHistogram {
    fn from_iter<I: IntoIterator<Item = SeverityClass>>(iter: I) -> Self {
        let mut h = Self::default();
        for class in iter {
            h.record(class);
        }
        h
    }
}

impl Index<SeverityClass> for SeverityHistogram {
    type Output = u64;

    fn index(&self, class: SeverityClass) -> &u64 {
        &self.0[class.slot()]
    }
}

impl AddAssign for SeverityHistogram {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Add for SeverityHistogram {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl fmt::Display for SeverityHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c, h, m, l, n] = self.chmln();
        write!(f, "{{C:{c},H:{h},M:{m},L:{l},N:{n}}}")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramRepr {
    critical: u64,
    high: u64,
    medium: u64,
    low: u64,
    negligible: u64,
}

impl Serialize for SeverityHistogram {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let [critical, high, medium, low, negligible] = self.chmln();
        HistogramRepr {
            critical,
            high,
            medium,
            low,
            negligible,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SeverityHistogram {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = HistogramRepr::deserialize(deserializer)?;
        Ok(Self::from_chmln([r.critical, r.high, r.medium, r.low, r.negligible]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(s: f64) -> Option<Cvss> {
        Some(Cvss::from_f64(s).unwrap())
    }

    #[test]
    fn ordering_is_fixed() {
        use SeverityClass::*;
        assert!(Critical > High && High > Medium && Medium > Low && Low > Negligible);
        assert_eq!(SeverityClass::DESCENDING.len(), 5);
    }

    #[test]
    fn bucket_examples() {
        use SeverityClass::*;
        assert_eq!(classify_severity(score(9.8), None), Critical);
        assert_eq!(classify_severity(None, Some(High)), High);
        assert_eq!(classify_severity(score(6.9), None), Medium);
        assert_eq!(classify_severity(score(7.0), None), High);
        assert_eq!(classify_severity(score(8.9), None), High);
        assert_eq!(classify_severity(score(9.0), None), Critical);
        assert_eq!(classify_severity(score(4.0), None), Medium);
        assert_eq!(classify_severity(score(3.9), None), Low);
        assert_eq!(classify_severity(score(0.1), None), Low);
        assert_eq!(classify_severity(score(0.0), None), Negligible);
        assert_eq!(classify_severity(None, None), Negligible);
        // vendor wins even against a critical score
        assert_eq!(classify_severity(score(9.8), Some(Low)), Low);
    }

    #[test]
    fn cvss_parsing_rejects_bad_scores() {
        assert_eq!(Cvss::from_f64(11.0), Err(CvssError::OutOfRange(11.0)));
        assert!(matches!(Cvss::from_f64(-0.1), Err(CvssError::OutOfRange(_))));
        assert!(matches!(Cvss::from_f64(f64::NAN), Err(CvssError::OutOfRange(_))));
        assert!(matches!(Cvss::from_f64(7.25), Err(CvssError::NotOneDecimal(_))));
        assert_eq!(Cvss::from_f64(8.8).unwrap().tenths(), 88);
        assert_eq!(Cvss::from_f64(8.8).unwrap().to_string(), "8.8");
        assert_eq!(Cvss::from_f64(10.0).unwrap().to_string(), "10.0");
    }

    #[test]
    fn severity_parses_case_insensitively() {
        assert_eq!("HIGH".parse::<SeverityClass>().unwrap(), SeverityClass::High);
        assert_eq!("Negligible".parse::<SeverityClass>().unwrap(), SeverityClass::Negligible);
        assert!("severe".parse::<SeverityClass>().is_err());
    }

    #[test]
    fn histogram_counts_and_threshold() {
        let h = SeverityHistogram::from_chmln([0, 1, 3, 9, 0]);
        assert_eq!(h.total(), 13);
        assert_eq!(h.at_or_above(SeverityClass::High), 1);
        assert_eq!(h.at_or_above(SeverityClass::Low), 13);
        assert_eq!(h.to_string(), "{C:0,H:1,M:3,L:9,N:0}");
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"critical":0,"high":1,"medium":3,"low":9,"negligible":0}"#);
        let back: SeverityHistogram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
    }
}
