use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::agentproto::UsageStats;

/// Token prices in currency units per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    #[serde(with = "rust_decimal::serde::str")]
    pub input_per_million: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub output_per_million: Decimal,
}

impl Rates {
    pub fn new(input_per_million: Decimal, output_per_million: Decimal) -> Self {
        Self { input_per_million, output_per_million }
    }
}

impl Default for Rates {
    fn default() -> Self {
        Rates::new(Decimal::from(3), Decimal::from(12))
    }
}

/// `in × in_rate / 10⁶ + out × out_rate / 10⁶`, rounded half-even to four
/// decimal places.
pub fn compute_cost(usage: UsageStats, rates: Rates) -> Decimal {
    let million = Decimal::from(1_000_000u32);
    let raw = Decimal::from(usage.input_tokens) * rates.input_per_million / million
        + Decimal::from(usage.output_tokens) * rates.output_per_million / million;
    raw.round_dp_with_strategy(4, RoundingStrategy::MidpointNearestEven)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn input_only_cost() {
        let c = compute_cost(UsageStats::new(189_700, 0), Rates::new(d("3"), d("12")));
        assert_eq!(c, d("0.5691"));
    }

    #[test]
    fn zero_usage_costs_nothing() {
        assert_eq!(compute_cost(UsageStats::default(), Rates::default()), Decimal::ZERO);
        assert_eq!(compute_cost(UsageStats::default(), Rates::default()).round_dp(4).to_string(), "0");
    }

    #[test]
    fn combined_cost() {
        // 0.6894 + 0.028728
        assert_eq!(compute_cost(UsageStats::new(229_800, 2_394), Rates::default()), d("0.7181"));
    }

    #[test]
    fn rounds_half_to_even() {
        // 50 tokens at $1/M = 0.00005 -> 0.0000; 150 tokens -> 0.00015 -> 0.0002
        let r = Rates::new(d("1"), d("0"));
        assert_eq!(compute_cost(UsageStats::new(50, 0), r), d("0.0000"));
        assert_eq!(compute_cost(UsageStats::new(150, 0), r), d("0.0002"));
        assert_eq!(compute_cost(UsageStats::new(250, 0), r), d("0.0002"));
    }
}
