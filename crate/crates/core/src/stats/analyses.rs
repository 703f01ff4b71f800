//! Report assemblers pairing samples with the kernels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cost::{CostReport, SizeClass};
use super::kernels::{
    ccdf, chi_square_2x2, chi_square_independence, cliffs_delta, mann_whitney_one_tailed, spearman, CcdfRow,
    ChiSquare2x2, ChiSquareTest, EffectSize, MannWhitney,
};
use crate::classify::{ProxyClass, Purpose};
use crate::context::{ActivitySamples, UsageContext};
use crate::lineage::{ChainOutcome, DeploymentStyle, OFF_CHAIN_SIGNATURE};
use crate::model::Address;

/// Patterns compared individually in the per-pattern analyses.
pub const TOP_PATTERNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Activity,
    ContextSize,
    SizeStyle,
    PurposePattern,
    GasCost,
    Bytecode,
}

impl Analysis {
    pub const ALL: [Analysis; 6] = [
        Analysis::Activity,
        Analysis::ContextSize,
        Analysis::SizeStyle,
        Analysis::PurposePattern,
        Analysis::GasCost,
        Analysis::Bytecode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Analysis::Activity => "activity",
            Analysis::ContextSize => "context-size",
            Analysis::SizeStyle => "size-style",
            Analysis::PurposePattern => "purpose-pattern",
            Analysis::GasCost => "gas-cost",
            Analysis::Bytecode => "bytecode",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown analysis {s:?}; expected one of {}", Self::names()))
    }
}

impl Analysis {
    pub fn names() -> String {
        Analysis::ALL.map(|a| a.as_str()).join(", ")
    }
}

/// One-tailed comparison of `a` over `b`. Kernel failures (such as an empty
/// side) are reported in `note` and leave the statistics absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mann_whitney: Option<MannWhitney>,
    pub cliffs_delta: Option<EffectSize>,
    pub ccdf_a: Vec<CcdfRow>,
    pub ccdf_b: Vec<CcdfRow>,
    pub note: Option<String>,
}

pub fn compare(a_label: &str, a: &[f64], b_label: &str, b: &[f64]) -> Comparison {
    let tests = mann_whitney_one_tailed(a, b).and_then(|mw| Ok((mw, cliffs_delta(a, b)?)));
    let (mann_whitney, cliffs, note) = match tests {
        Ok((mw, d)) => (Some(mw), Some(d), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Comparison {
        a: a_label.to_owned(),
        b: b_label.to_owned(),
        n_a: a.len(),
        n_b: b.len(),
        mann_whitney,
        cliffs_delta: cliffs,
        ccdf_a: ccdf(a).unwrap_or_default(),
        ccdf_b: ccdf(b).unwrap_or_default(),
        note,
    }
}

pub fn activity_report(samples: &ActivitySamples) -> Comparison {
    compare("proxy", &samples.proxy_counts(), "non-proxy", &samples.other_counts())
}

/// Creational-pattern signature of each context, read from its
/// representative's complete chain.
pub fn context_patterns(contexts: &[UsageContext], chains: &[ChainOutcome]) -> HashMap<String, String> {
    let signature: HashMap<Address, String> = chains
        .iter()
        .filter_map(|o| o.complete().map(|c| (c.proxy, c.signature())))
        .collect();
    contexts
        .iter()
        .filter_map(|c| signature.get(&c.representative).map(|s| (c.id.clone(), s.clone())))
        .collect()
}

/// Patterns ranked by proxies across their contexts, descending, then by signature.
fn ranked_patterns<'a>(
    contexts: &'a [UsageContext],
    patterns: &'a HashMap<String, String>,
    style: Option<DeploymentStyle>,
) -> Vec<(String, Vec<&'a UsageContext>)> {
    let mut by_pattern: BTreeMap<String, Vec<&UsageContext>> = BTreeMap::new();
    for ctx in contexts {
        if let Some(sig) = patterns.get(&ctx.id) {
            if style.map_or(true, |s| ctx.style == Some(s)) {
                by_pattern.entry(sig.clone()).or_default().push(ctx);
            }
        }
    }
    let mut ranked: Vec<_> = by_pattern.into_iter().collect();
    ranked.sort_by(|(sa, ca), (sb, cb)| {
        let (na, nb) = (ca.iter().map(|c| c.size).sum::<usize>(), cb.iter().map(|c| c.size).sum::<usize>());
        nb.cmp(&na).then_with(|| sa.cmp(sb))
    });
    ranked
}

fn sizes<'a>(contexts: impl IntoIterator<Item = &'a UsageContext>) -> Vec<f64> {
    contexts.into_iter().map(|c| c.size as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSizeReport {
    /// On-chain over off-chain context sizes.
    pub by_style: Comparison,
    /// Each of the top on-chain patterns over the off-chain pattern.
    pub by_pattern: Vec<Comparison>,
    pub unknown_style: usize,
}

pub fn context_size_report(contexts: &[UsageContext], chains: &[ChainOutcome]) -> ContextSizeReport {
    let on = sizes(contexts.iter().filter(|c| c.style == Some(DeploymentStyle::OnChain)));
    let off = sizes(contexts.iter().filter(|c| c.style == Some(DeploymentStyle::OffChain)));
    let patterns = context_patterns(contexts, chains);
    let off_pattern = sizes(
        contexts
            .iter()
            .filter(|c| patterns.get(&c.id).map(String::as_str) == Some(OFF_CHAIN_SIGNATURE)),
    );
    let by_pattern = ranked_patterns(contexts, &patterns, Some(DeploymentStyle::OnChain))
        .into_iter()
        .take(TOP_PATTERNS)
        .map(|(sig, ctxs)| compare(&sig, &sizes(ctxs), OFF_CHAIN_SIGNATURE, &off_pattern))
        .collect();
    ContextSizeReport {
        by_style: compare("on-chain", &on, "off-chain", &off),
        by_pattern,
        unknown_style: contexts.iter().filter(|c| c.style.is_none()).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStyleReport {
    /// Rows on-chain, off-chain; columns N>1, N=1.
    pub table: [[u64; 2]; 2],
    pub multi_share_on_chain: Option<f64>,
    pub multi_share_off_chain: Option<f64>,
    pub test: Option<ChiSquare2x2>,
    pub note: Option<String>,
}

pub fn size_style_report(contexts: &[UsageContext]) -> SizeStyleReport {
    let count = |style, class| {
        contexts
            .iter()
            .filter(|c| c.style == Some(style) && SizeClass::of(c.size) == class)
            .count() as u64
    };
    let table = [
        [count(DeploymentStyle::OnChain, SizeClass::Multi), count(DeploymentStyle::OnChain, SizeClass::Singleton)],
        [count(DeploymentStyle::OffChain, SizeClass::Multi), count(DeploymentStyle::OffChain, SizeClass::Singleton)],
    ];
    let share = |row: [u64; 2]| (row[0] + row[1] > 0).then(|| row[0] as f64 / (row[0] + row[1]) as f64);
    let (test, note) = match chi_square_2x2(table) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SizeStyleReport {
        table,
        multi_share_on_chain: share(table[0]),
        multi_share_off_chain: share(table[1]),
        test,
        note,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternPurpose {
    pub signature: String,
    pub upgradeability: u64,
    pub forwarder: u64,
    pub upgradeability_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurposePatternReport {
    pub rows: Vec<PatternPurpose>,
    pub test: Option<ChiSquareTest>,
    pub note: Option<String>,
    /// Contexts whose representative has no decisive purpose.
    pub undecided_contexts: usize,
}

/// Contexts of the top patterns cross-tabulated by their representative's purpose.
pub fn purpose_pattern_report(
    contexts: &[UsageContext],
    chains: &[ChainOutcome],
    classes: &[ProxyClass],
) -> PurposePatternReport {
    let purpose: HashMap<Address, Purpose> = classes
        .iter()
        .filter_map(|c| c.purpose.as_ref().map(|p| (c.proxy, p.purpose)))
        .collect();
    let patterns = context_patterns(contexts, chains);
    let mut undecided = 0;
    let mut rows = Vec::new();
    for (signature, ctxs) in ranked_patterns(contexts, &patterns, None).into_iter().take(TOP_PATTERNS) {
        let (mut up, mut fw) = (0, 0);
        for ctx in ctxs {
            match purpose.get(&ctx.representative) {
                Some(Purpose::Upgradeability) => up += 1,
                Some(Purpose::Forwarder) => fw += 1,
                _ => undecided += 1,
            }
        }
        rows.push(PatternPurpose {
            signature,
            upgradeability: up,
            forwarder: fw,
            upgradeability_share: (up + fw > 0).then(|| up as f64 / (up + fw) as f64),
        });
    }
    let table: Vec<Vec<u64>> = rows.iter().map(|r| vec![r.upgradeability, r.forwarder]).collect();
    let (test, note) = match chi_square_independence(&table) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    PurposePatternReport {
        rows,
        test,
        note,
        undecided_contexts: undecided,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasCostReport {
    /// On-chain N=1 over off-chain N=1 average gas.
    pub singleton: Comparison,
    /// Off-chain N=1 over on-chain N=1 with factory gas left out.
    pub singleton_excluding_factories: Comparison,
    pub multi: Comparison,
    pub costs: CostReport,
}

pub fn gas_cost_report(costs: CostReport) -> GasCostReport {
    let gas = |style, class, exclude: bool| -> Vec<f64> {
        costs
            .select(style, Some(class))
            .map(|r| if exclude { r.avg_gas_excluding_factories } else { r.avg_gas })
            .collect()
    };
    use DeploymentStyle::{OffChain, OnChain};
    GasCostReport {
        singleton: compare(
            "on-chain N=1",
            &gas(OnChain, SizeClass::Singleton, false),
            "off-chain N=1",
            &gas(OffChain, SizeClass::Singleton, false),
        ),
        singleton_excluding_factories: compare(
            "off-chain N=1",
            &gas(OffChain, SizeClass::Singleton, true),
            "on-chain N=1 excluding factories",
            &gas(OnChain, SizeClass::Singleton, true),
        ),
        multi: compare(
            "on-chain N>1",
            &gas(OnChain, SizeClass::Multi, false),
            "off-chain N>1",
            &gas(OffChain, SizeClass::Multi, false),
        ),
        costs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BytecodeReport {
    /// Off-chain over on-chain average proxy bytecode length.
    pub by_style: Comparison,
    pub by_size_class: Vec<Comparison>,
    /// Spearman between context size and average bytecode length.
    pub size_correlation: Option<f64>,
    pub note: Option<String>,
}

pub fn bytecode_report(costs: &CostReport) -> BytecodeReport {
    let lens = |style, class: Option<SizeClass>| -> Vec<f64> {
        costs.select(style, class).filter_map(|r| r.avg_bytecode_len).collect()
    };
    use DeploymentStyle::{OffChain, OnChain};
    let by_size_class = [SizeClass::Singleton, SizeClass::Multi]
        .into_iter()
        .map(|class| {
            let tag = if class == SizeClass::Singleton { "N=1" } else { "N>1" };
            compare(
                &format!("off-chain {tag}"),
                &lens(OffChain, Some(class)),
                &format!("on-chain {tag}"),
                &lens(OnChain, Some(class)),
            )
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = costs
        .records
        .iter()
        .filter_map(|r| r.avg_bytecode_len.map(|l| (r.size as f64, l)))
        .unzip();
    let (size_correlation, note) = match spearman(&x, &y) {
        Ok(rho) => (Some(rho), None),
        Err(e) => (None, Some(format!("spearman: {e}"))),
    };
    BytecodeReport {
        by_style: compare("off-chain", &lens(OffChain, None), "on-chain", &lens(OnChain, None)),
        by_size_class,
        size_correlation,
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ClusterKey;
    use crate::fixture::builder::addr;
    use crate::model::B256;
    use std::collections::BTreeSet;

    fn ctx(id: &str, size: usize, style: Option<DeploymentStyle>) -> UsageContext {
        let members: BTreeSet<Address> = (0..size).map(|i| addr(&format!("{id}-{i}"))).collect();
        UsageContext {
            id: id.into(),
            cluster_key: ClusterKey {
                bytecode_digest: B256::ZERO,
                deployer: None,
            },
            representative: *members.iter().next().unwrap(),
            members,
            logics: BTreeSet::new(),
            started_at: None,
            style,
            size,
        }
    }

    #[test]
    fn analysis_names_round_trip() {
        for a in Analysis::ALL {
            assert_eq!(a.as_str().parse::<Analysis>(), Ok(a));
        }
        assert!("nope".parse::<Analysis>().is_err());
    }

    #[test]
    fn compare_reports_empty_side() {
        let c = compare("a", &[1.0], "b", &[]);
        assert!(c.mann_whitney.is_none());
        assert!(c.note.is_some());
        assert_eq!(c.ccdf_a.len(), 1);
    }

    #[test]
    fn size_style_table_orientation() {
        use DeploymentStyle::*;
        let contexts = vec![
            ctx("a", 3, Some(OnChain)),
            ctx("b", 1, Some(OnChain)),
            ctx("c", 1, Some(OffChain)),
            ctx("d", 2, Some(OffChain)),
            ctx("e", 1, Some(OffChain)),
            ctx("f", 1, None),
        ];
        let r = size_style_report(&contexts);
        assert_eq!(r.table, [[1, 1], [1, 2]]);
        assert_eq!(r.multi_share_on_chain, Some(0.5));
        assert!(r.test.is_some());

        let s = context_size_report(&contexts, &[]);
        assert_eq!((s.by_style.n_a, s.by_style.n_b, s.unknown_style), (2, 3, 1));
    }
}
