use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Which good-cluster points may be silver-labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilverScope {
    None,
    /// Every point of a good cluster; confidence threshold forced to 0.
    GoodClustersAll,
    /// Good-cluster points with confidence at least the threshold.
    GoodClustersHighConf,
}

/// Where the remaining gold budget is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldScope {
    None,
    /// Arbitrary (seeded random) points of bad clusters.
    AnyPointBad,
    /// Least-confident points, round-robin over every cluster.
    LowConfAny,
    /// Least-confident points of bad clusters; nothing if none exist.
    LowConfBad,
    /// Least-confident points of bad clusters, or of good clusters when no
    /// bad cluster exists.
    LowConfBadWithFallback,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("strategy variant must be in 1..=9, got {0}")]
pub struct InvalidVariant(pub u8);

/// The nine silver/gold combinations, MNID-1 … MNID-9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyVariant(u8);

impl StrategyVariant {
    pub const FULL: StrategyVariant = StrategyVariant(9);

    pub fn new(n: u8) -> Result<Self, InvalidVariant> {
        if (1..=9).contains(&n) {
            Ok(Self(n))
        } else {
            Err(InvalidVariant(n))
        }
    }

    pub fn all() -> impl Iterator<Item = StrategyVariant> {
        (1..=9).map(StrategyVariant)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn silver(self) -> SilverScope {
        match self.0 {
            1 | 2 | 6 | 8 => SilverScope::GoodClustersAll,
            4 | 5 | 9 => SilverScope::GoodClustersHighConf,
            _ => SilverScope::None,
        }
    }

    pub fn gold(self) -> GoldScope {
        match self.0 {
            1 | 4 => GoldScope::None,
            2 => GoldScope::AnyPointBad,
            3 | 5 => GoldScope::LowConfAny,
            6 => GoldScope::LowConfBad,
            _ => GoldScope::LowConfBadWithFallback,
        }
    }

    /// Confidence threshold actually applied by the silver gate.
    pub fn effective_threshold(self, th: f64) -> f64 {
        match self.silver() {
            SilverScope::GoodClustersAll => 0.0,
            _ => th,
        }
    }
}

impl Default for StrategyVariant {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for StrategyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MNID-{}", self.0)
    }
}

impl Serialize for StrategyVariant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for StrategyVariant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        StrategyVariant::new(n).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use GoldScope as G;
    use SilverScope as S;

    #[test]
    fn table_rows() {
        let expected = [
            (S::GoodClustersAll, G::None),
            (S::GoodClustersAll, G::AnyPointBad),
            (S::None, G::LowConfAny),
            (S::GoodClustersHighConf, G::None),
            (S::GoodClustersHighConf, G::LowConfAny),
            (S::GoodClustersAll, G::LowConfBad),
            (S::None, G::LowConfBadWithFallback),
            (S::GoodClustersAll, G::LowConfBadWithFallback),
            (S::GoodClustersHighConf, G::LowConfBadWithFallback),
        ];
        for (v, want) in StrategyVariant::all().zip(expected) {
            assert_eq!((v.silver(), v.gold()), want, "{v}");
        }
    }

    #[test]
    fn dagger_variants_zero_the_threshold() {
        for n in [1, 2, 6, 8] {
            assert_eq!(StrategyVariant::new(n).unwrap().effective_threshold(0.5), 0.0);
        }
        assert_eq!(StrategyVariant::FULL.effective_threshold(0.5), 0.5);
    }

    #[test]
    fn range_checked() {
        assert_eq!(StrategyVariant::new(0), Err(InvalidVariant(0)));
        assert_eq!(StrategyVariant::new(10), Err(InvalidVariant(10)));
        assert!(serde_json::from_str::<StrategyVariant>("12").is_err());
        assert_eq!(serde_json::from_str::<StrategyVariant>("7").unwrap().number(), 7);
        assert_eq!(StrategyVariant::default().to_string(), "MNID-9");
    }
}
