use triage_core::cnlp::TermType;
use triage_core::features::Featurizer;
use triage_core::synth::{generate, generate_detailed, site_a_distribution, verified_distribution, GeneratorConfig};

#[test]
fn distribution_matches_site_a_targets() {
    let cfg = GeneratorConfig { n_records: 10_000, seed: 21, ..Default::default() };
    let corpus = generate(&cfg).unwrap();
    let mut counts = [0usize; 5];
    for enc in &corpus {
        counts[enc.gold_esi.unwrap().class()] += 1;
    }
    for (c, target) in site_a_distribution().iter().enumerate() {
        let got = counts[c] as f64 / corpus.len() as f64;
        assert!((got - target).abs() <= 0.015, "ESI {}: {got:.4} vs {target:.4}", c + 1);
    }
}

#[test]
fn planted_concepts_are_recovered() {
    let records = generate_detailed(&GeneratorConfig { n_records: 3000, seed: 8, ..Default::default() }).unwrap();
    let pipeline = Featurizer::bundled().pipeline;
    let (mut planted, mut found) = (0usize, 0usize);
    for rec in &records {
        let tags = pipeline.extract(&rec.encounter.reason_for_visit, Some(TermType::ReasonForVisit)).tags;
        for (cui, negated) in &rec.planted {
            planted += 1;
            if tags.iter().any(|t| &t.cui == cui && t.negated == *negated) {
                found += 1;
            } else if planted - found <= 10 {
                eprintln!("missed {cui} negated={negated}: {:?}", rec.encounter.reason_for_visit);
            }
        }
    }
    let recall = found as f64 / planted as f64;
    assert!(recall >= 0.99, "recall {recall:.4}");
}

#[test]
fn nurse_agreement_under_verified_marginal() {
    let cfg = GeneratorConfig { n_records: 20_000, seed: 3, esi_distribution: verified_distribution(), ..Default::default() };
    let corpus = generate(&cfg).unwrap();
    let agree = corpus.iter().filter(|e| e.nurse_esi == e.gold_esi).count() as f64 / corpus.len() as f64;
    assert!((agree - 0.40).abs() <= 0.02, "agreement {agree:.4}");
}

#[test]
fn oracle_rejection_rarely_falls_back() {
    let records = generate_detailed(&GeneratorConfig { n_records: 4000, seed: 2, ..Default::default() }).unwrap();
    let mut by_rule = std::collections::BTreeMap::new();
    for r in &records {
        *by_rule.entry(r.oracle.rule_id.clone()).or_insert(0usize) += 1;
    }
    assert!(by_rule.len() >= 10, "{by_rule:?}");
}
