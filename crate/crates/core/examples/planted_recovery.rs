//! Plant three classes in a synthetic taxonomy and recover them.

use domain_scope::synthetic::{generate, recovery_jaccard, PlantSpec};
use domain_scope::{search_model, MockRule, OracleConfig, OracleHandle, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let planted = generate(&PlantSpec::sibling_groups(3, 21))?;
    let oracle = OracleHandle::new(MockRule::Planted(planted.rule.clone()), OracleConfig::default())?;
    let cfg = SearchConfig::for_corpus(&planted.corpus);
    let reports = search_model(&oracle, &planted.corpus, &cfg)?;

    for (r, truth) in reports.iter().zip(&planted.truth) {
        match &r.score_card {
            Some(card) => println!(
                "class {}: chosen {:?} truth {:?} jaccard {:.2} functional {:.4} semantic {:.4}",
                r.class_index,
                r.chosen_nodes,
                truth,
                recovery_jaccard(r, truth),
                card.functional,
                card.semantic
            ),
            None => println!("class {}: not found", r.class_index),
        }
    }
    println!("oracle queries: {}", oracle.query_count());
    Ok(())
}
