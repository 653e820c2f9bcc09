//! A class the corpus never covers comes back as not found.

use domain_scope::synthetic::{generate, PlantSpec};
use domain_scope::{search_class, MockRule, OracleConfig, OracleHandle, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let planted = generate(&PlantSpec::sibling_groups(2, 8))?;
    let t = &planted.corpus;
    let cfg = SearchConfig::for_corpus(t);

    // Ten classes with labels spread at random: no leaf reaches theta for any.
    let uniform = OracleHandle::new(MockRule::UniformRandom { num_classes: 10, seed: 3 }, OracleConfig::default())?;
    let r = search_class(&uniform, t, 4, &cfg)?;
    let best = r.leaf_scores.iter().map(|l| l.score).fold(0.0, f64::max);
    println!("uniform oracle, class 4: {:?} (best leaf score {best:.3})", r.status);

    // Everything is labeled 0, so class 1 never appears.
    let constant = OracleHandle::new(MockRule::Constant { num_classes: 2, label: 0 }, OracleConfig::default())?;
    for class in 0..2 {
        let r = search_class(&constant, t, class, &cfg)?;
        println!("constant oracle, class {class}: {:?}, {} survivors", r.status, r.survivors.len());
    }
    Ok(())
}
