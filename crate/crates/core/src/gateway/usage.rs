use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::model::TokenRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Distill,
    Synthesize,
    Score,
    Embed,
    GenerateSynthetic,
    CoverageMatch,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Distill => "distill",
            Tier::Synthesize => "synthesize",
            Tier::Score => "score",
            Tier::Embed => "embed",
            Tier::GenerateSynthetic => "generate_synthetic",
            Tier::CoverageMatch => "coverage_match",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generation,
    Scoring,
    Eval,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generation => "generation",
            Stage::Scoring => "scoring",
            Stage::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub tier: Tier,
    pub stage: Stage,
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    pub wall_time_ms: u64,
}

impl UsageRecord {
    pub fn priced(
        tier: Tier,
        stage: Stage,
        model: &str,
        input_tokens: u64,
        output_tokens: u64,
        rate: Option<&TokenRate>,
        wall_time_ms: u64,
    ) -> Self {
        let cost = rate.map_or(0.0, |r| {
            input_tokens as f64 / 1000.0 * r.input_per_1k + output_tokens as f64 / 1000.0 * r.output_per_1k
        });
        UsageRecord { tier, stage, model: model.to_string(), input_tokens, output_tokens, cost, wall_time_ms }
    }

    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    pub wall_time_ms: u64,
}

impl UsageTotals {
    fn add(&mut self, r: &UsageRecord) {
        self.calls += 1;
        self.input_tokens += r.input_tokens;
        self.output_tokens += r.output_tokens;
        self.cost += r.cost;
        self.wall_time_ms += r.wall_time_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShare {
    pub totals: UsageTotals,
    /// Percent of total cost, 0–100.
    pub cost_share: f64,
    /// Percent of total wall time, 0–100.
    pub time_share: f64,
    /// Percent of total tokens, 0–100.
    pub token_share: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageReport {
    pub totals: UsageTotals,
    pub by_stage: IndexMap<Stage, StageShare>,
    pub by_tier: IndexMap<Tier, UsageTotals>,
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

/// Totals plus per-stage and per-tier breakdowns; stages and tiers appear in
/// first-seen order.
pub fn usage_report(ledger: &[UsageRecord]) -> UsageReport {
    let mut report = UsageReport::default();
    let mut stages: IndexMap<Stage, UsageTotals> = IndexMap::new();
    for r in ledger {
        report.totals.add(r);
        stages.entry(r.stage).or_default().add(r);
        report.by_tier.entry(r.tier).or_default().add(r);
    }
    let t = &report.totals;
    let total_tokens = (t.input_tokens + t.output_tokens) as f64;
    report.by_stage = stages
        .into_iter()
        .map(|(stage, s)| {
            let share = StageShare {
                cost_share: pct(s.cost, t.cost),
                time_share: pct(s.wall_time_ms as f64, t.wall_time_ms as f64),
                token_share: pct((s.input_tokens + s.output_tokens) as f64, total_tokens),
                totals: s,
            };
            (stage, share)
        })
        .collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(stage: Stage, cost: f64) -> UsageRecord {
        UsageRecord { tier: Tier::Score, stage, model: "m".into(), input_tokens: 10, output_tokens: 5, cost, wall_time_ms: 1 }
    }

    #[test]
    fn scoring_share_seventy_percent() {
        let r = usage_report(&[rec(Stage::Generation, 0.30), rec(Stage::Scoring, 0.70)]);
        assert!((r.by_stage[&Stage::Scoring].cost_share - 70.0).abs() < 1e-9);
        assert!((r.totals.cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger() {
        let r = usage_report(&[]);
        assert_eq!(r.totals, UsageTotals::default());
        assert!(r.by_stage.is_empty());
    }

    #[test]
    fn pricing_per_thousand_tokens() {
        let rate = TokenRate { input_per_1k: 0.5, output_per_1k: 1.5 };
        let r = UsageRecord::priced(Tier::Distill, Stage::Generation, "m", 2000, 1000, Some(&rate), 0);
        assert!((r.cost - 2.5).abs() < 1e-12);
        assert_eq!(UsageRecord::priced(Tier::Distill, Stage::Generation, "m", 2000, 1000, None, 0).cost, 0.0);
    }

    proptest! {
        #[test]
        fn totals_equal_record_sums(costs in proptest::collection::vec((0u8..3, 0.0f64..5.0, 0u64..5000), 1..60)) {
            let ledger: Vec<UsageRecord> = costs.iter().map(|(s, c, tok)| UsageRecord {
                tier: Tier::Score,
                stage: [Stage::Generation, Stage::Scoring, Stage::Eval][*s as usize],
                model: "m".into(), input_tokens: *tok, output_tokens: tok / 2, cost: *c, wall_time_ms: *tok,
            }).collect();
            let r = usage_report(&ledger);
            let cost: f64 = ledger.iter().map(|x| x.cost).sum();
            prop_assert!((r.totals.cost - cost).abs() < 1e-9);
            prop_assert_eq!(r.totals.input_tokens, ledger.iter().map(|x| x.input_tokens).sum::<u64>());
            if cost > 0.0 {
                let share: f64 = r.by_stage.values().map(|s| s.cost_share).sum();
                prop_assert!((share - 100.0).abs() < 0.1);
            }
        }
    }
}
