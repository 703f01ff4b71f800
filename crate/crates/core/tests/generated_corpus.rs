use std::collections::{BTreeMap, BTreeSet};

use proxyprobe::classify::classify_all;
use proxyprobe::context::cluster_contexts;
use proxyprobe::detector::{detect_corpus, proxy_set, score};
use proxyprobe::fixture::{generate, FixtureSpec};
use proxyprobe::ingest::Corpus;
use proxyprobe::lineage::{build_chains, CreationIndex};

#[test]
fn bundled_corpus_plants_are_recovered() {
    let c = generate(&FixtureSpec::bundled()).unwrap();
    let plant = c.plant.clone();
    let (corpus, quarantined) = Corpus::from_records(c.traces, c.contracts);
    assert!(quarantined.is_empty(), "{quarantined:?}");
    let findings = detect_corpus(&corpus);
    let report = score(&findings, &c.ground_truth, &corpus.contracts);
    assert_eq!(report.confusion.false_positive, 0);
    let found: BTreeSet<_> = findings.keys().copied().collect();
    let active: BTreeSet<_> = plant.active_proxies.iter().copied().collect();
    assert_eq!(found, active);
    assert_eq!(report.confusion.false_negative as usize, plant.inactive_proxies.len());

    let proxies = proxy_set(&findings);
    let creations = CreationIndex::build(&corpus);
    let chains = build_chains(&proxies, &creations, &corpus.contracts);
    let signature: BTreeMap<_, _> = chains
        .iter()
        .filter_map(|o| o.complete().map(|ch| (ch.proxy, ch.signature())))
        .collect();
    for p in &plant.patterns {
        for proxy in &p.proxies {
            assert_eq!(signature.get(proxy), Some(&p.signature), "{proxy}");
        }
    }

    let contexts = cluster_contexts(&findings, &corpus.contracts, &creations, &chains);
    for p in plant.patterns.iter().filter(|p| p.proxies.len() > 1) {
        let ctx = contexts.contexts.iter().find(|c| c.members.contains(&p.proxies[0])).unwrap();
        assert_eq!(ctx.members, p.proxies.iter().copied().collect(), "{}", p.signature);
        assert_eq!(ctx.style, Some(p.style));
    }

    let classes = classify_all(&findings, &corpus.contracts, &c.state);
    for k in &plant.impl_kinds {
        let class = classes.iter().find(|x| x.proxy == k.proxy).unwrap();
        assert_eq!(class.impl_kind.as_ref().map(|f| f.kind), Some(k.kind), "{}", k.kind);
        let purpose = class.purpose.as_ref().map(|v| v.purpose);
        assert_eq!(purpose, Some(k.purpose), "{} {:?}", k.kind, class.purpose);
    }
}
