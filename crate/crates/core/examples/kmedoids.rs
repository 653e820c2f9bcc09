//! Cluster leaves by tree distance, pick k by silhouette, then merge.

use domain_scope::kmedoids::{select_k, silhouette};
use domain_scope::synthetic::{generate, PlantSpec};
use domain_scope::{brute_force_medoids, merge_clusters, pam, DistanceMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let planted = generate(&PlantSpec::sibling_groups(3, 4))?;
    let t = &planted.corpus;
    let mut leaves: Vec<usize> = planted.truth.iter().flatten().copied().collect();
    leaves.sort_unstable();
    let dm = DistanceMatrix::from_tree(t, &leaves)?;

    for k in 1..=4 {
        let c = pam(&dm, k)?;
        let best = brute_force_medoids(&dm, k)?;
        println!(
            "k={k} pam cost {} optimum {} silhouette {:.4}",
            c.cost,
            best.cost,
            silhouette(&dm, &c)
        );
    }

    let chosen = select_k(&dm, 5)?;
    println!("silhouette picks k={}", chosen.k());
    for (medoid, members) in chosen.clusters() {
        println!("  medoid {medoid}: {members:?}");
    }
    let merged = merge_clusters(t, &chosen, 4)?;
    println!("after merging medoids within 4 edges: k={}", merged.k());
    Ok(())
}
