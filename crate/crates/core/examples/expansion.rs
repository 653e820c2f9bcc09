//! Expand a small image set with every transform family and with noise only.

use domain_scope::expand::{expand, ExpansionConfig, Suite};
use domain_scope::SampleSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (h, w) = (8, 8);
    let mut data = Vec::new();
    for i in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data.push(((x + y + i) % 4) as f32 / 3.0);
            }
        }
    }
    let images = SampleSet::new(vec![h, w, 1], data)?;

    for suite in [Suite::FullGeometric, Suite::PerturbOnly] {
        let cfg = ExpansionConfig {
            suite,
            variants_per_sample: 4,
            seed: 11,
            ..ExpansionConfig::default()
        };
        let out = expand(&images, &cfg)?;
        let (lo, hi) = out
            .data()
            .iter()
            .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        println!(
            "{suite}: {} originals -> {} samples (expected {}), values in [{lo:.3}, {hi:.3}]",
            images.len(),
            out.len(),
            cfg.expanded_len(images.len())
        );
    }

    let again = expand(&images, &ExpansionConfig { seed: 11, ..ExpansionConfig::default() })?;
    let twice = expand(&images, &ExpansionConfig { seed: 11, ..ExpansionConfig::default() })?;
    println!("same seed, same output: {}", again == twice);
    Ok(())
}
