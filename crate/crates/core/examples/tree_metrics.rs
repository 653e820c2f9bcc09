//! Distances and closeness on a small hand-built taxonomy.

use domain_scope::{semantic_score, CorpusBuilder, SampleRef, SampleSet, Selection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut b = CorpusBuilder::new("animal");
    let cat = b.add_child(0, "cat");
    let dog = b.add_child(0, "dog");
    let siamese = b.add_child(cat, "siamese cat");
    let persian = b.add_child(cat, "persian cat");
    let beagle = b.add_child(dog, "beagle");
    for leaf in [siamese, persian, beagle] {
        b.set_samples(leaf, SampleSet::new(vec![2], vec![0.1, 0.2, 0.3, 0.4])?);
    }
    let t = b.build()?;

    for (a, c) in [(siamese, persian), (siamese, beagle), (cat, beagle)] {
        println!(
            "{:>12} - {:<12} lca {:<8} distance {} closeness {:.4}",
            t.label(a)?,
            t.label(c)?,
            t.label(t.lca(a, c)?)?,
            t.tree_distance(a, c)?,
            t.closeness(a, c)?
        );
    }

    let cats = Selection::whole_leaves(&t, 0, &[siamese, persian])?;
    let mixed = Selection::from_members(0, [SampleRef::new(siamese, 0), SampleRef::new(beagle, 0)]);
    println!("semantic(cats)  {:.4}", semantic_score(&t, &cats)?);
    println!("semantic(mixed) {:.4}", semantic_score(&t, &mixed)?);
    Ok(())
}
