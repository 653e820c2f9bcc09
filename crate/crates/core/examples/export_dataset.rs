//! Run a search, write the report, and export the recovered samples.

use domain_scope::report::{export_dataset, load_dataset, CorpusInfo, OracleInfo};
use domain_scope::synthetic::{generate, PlantSpec};
use domain_scope::{search_model, MockRule, OracleConfig, OracleHandle, RunReport, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let planted = generate(&PlantSpec {
        noise_rate: 0.2,
        ..PlantSpec::sibling_groups(2, 5)
    })?;
    let t = &planted.corpus;
    let oracle = OracleHandle::new(MockRule::Planted(planted.rule.clone()), OracleConfig::default())?;
    let cfg = SearchConfig::for_corpus(t);
    let classes = search_model(&oracle, t, &cfg)?;
    let report = RunReport::new(cfg, OracleInfo::of(&oracle), CorpusInfo::of(t, "<memory>"), classes, oracle.query_count())?;

    let dir = std::env::temp_dir().join(format!("domain-scope-export-{}", std::process::id()));
    report.write(dir.join("report.json"))?;
    let manifest = export_dataset(&report, t, dir.join("data"))?;
    for c in &report.classes {
        println!(
            "class {}: {} chosen samples, {} kept after filtering",
            c.class_index, c.pre_filter_count, c.post_filter_count
        );
    }
    for (class, set) in load_dataset(dir.join("data"))? {
        let agree = oracle.classify_batch(&set)?.iter().all(|&l| l == class);
        println!("exported class {class}: {} samples, all re-labeled {class}: {agree}", set.len());
    }
    println!("{} files under {}", manifest.classes.len() + 1, dir.join("data").display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
