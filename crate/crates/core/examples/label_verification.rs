//! Compare recovered node labels with a class-name guess using word vectors.

use domain_scope::labels::{phrase_similarity, verify_report, EmbeddingTable};
use domain_scope::{search_class, CorpusBuilder, MockRule, OracleConfig, OracleHandle, SampleSet, SearchConfig};

const VECTORS: &str = "\
6 3
cat 0.9 0.1 0.0
kitten 0.85 0.2 0.05
siamese 0.8 0.3 0.1
persian 0.75 0.25 0.2
dog 0.1 0.9 0.1
beagle 0.15 0.85 0.2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tab = EmbeddingTable::parse(VECTORS)?;
    println!("sim(cat, kitten) = {:.4}", phrase_similarity(&tab, "cat", "kitten")?);
    println!("sim(cat, beagle) = {:.4}", phrase_similarity(&tab, "cat", "beagle")?);

    let mut b = CorpusBuilder::new("pets");
    let cats = b.add_child(0, "cats");
    let dogs = b.add_child(0, "dogs");
    let siamese = b.add_child(cats, "Siamese cat");
    let persian = b.add_child(cats, "Persian cat");
    let beagle = b.add_child(dogs, "Beagle");
    // Low values for cats, high for dogs; the mean rule splits them.
    for (leaf, base) in [(siamese, 0.1f32), (persian, 0.2), (beagle, 0.8)] {
        let data = (0..20 * 4).map(|i| base + (i % 5) as f32 * 0.01).collect();
        b.set_samples(leaf, SampleSet::new(vec![4], data)?);
    }
    let t = b.build()?;
    let oracle = OracleHandle::new(MockRule::MeanThreshold { num_classes: 2 }, OracleConfig::default())?;
    let report = search_class(&oracle, &t, 0, &SearchConfig::for_corpus(&t))?;

    for guess in ["kitten", "dog"] {
        let s = verify_report(&tab, &t, &report, guess)?;
        println!("class 0 vs {guess:?}: mean {:.4}", s.mean.unwrap_or(f64::NAN));
        for n in &s.nodes {
            println!("  {} {:?} {:?}", n.node, n.label, n.similarity.map(|v| (v * 1e4).round() / 1e4));
        }
    }
    Ok(())
}
