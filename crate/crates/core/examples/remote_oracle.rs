//! Serve a classifier over HTTP and query it through the wire protocol.

use std::time::Duration;

use domain_scope::oracle::{MockServer, RemoteClassifier, RetryPolicy};
use domain_scope::synthetic::{generate, PlantSpec};
use domain_scope::{search_model, MockRule, OracleConfig, OracleHandle, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let planted = generate(&PlantSpec::sibling_groups(2, 13))?;
    let server = MockServer::start(MockRule::Planted(planted.rule.clone()))?;
    println!("serving on {}", server.url());

    let remote = RemoteClassifier::new(&server.url(), RetryPolicy::default(), Duration::from_secs(10));
    let oracle = OracleHandle::new(
        remote,
        OracleConfig {
            batch_size: 32,
            workers: 4,
            ..OracleConfig::default()
        },
    )?;
    println!("remote reports {} classes", oracle.num_classes());

    let reports = search_model(&oracle, &planted.corpus, &SearchConfig::for_corpus(&planted.corpus))?;
    // Unplanted cells carry arbitrary labels, so extra leaves can join a class.
    for (r, truth) in reports.iter().zip(&planted.truth) {
        println!("class {}: {:?} chosen {:?} planted {truth:?}", r.class_index, r.status, r.chosen_nodes);
    }
    println!(
        "{} distinct samples in {} requests",
        oracle.query_count(),
        oracle.request_count()
    );
    Ok(())
}
