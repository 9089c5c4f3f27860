//! Graph partitioning by GW transport onto a small template graph. Uses a planted
//! partition graph with dense blocks and sparse cross edges.
//!
//! Run with `cargo run --release --example graph_partition -- [blocks] [runs]`.

use frlc::datasets::parse_graph;
use frlc::metrics::adjusted_mutual_info;
use frlc::partition::{partition_graph, GraphCost, PartitionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let blocks: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(12);
    let runs: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let size = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut text = String::new();
    for i in 0..blocks * size {
        for j in i + 1..blocks * size {
            let p = if i / size == j / size { 0.3 } else { 0.02 };
            if rng.random_bool(p) {
                text.push_str(&format!("{i} {j}\n"));
            }
        }
    }
    let graph = parse_graph(&text)?;
    let truth: Vec<usize> = (0..graph.n).map(|i| i / size).collect();

    for cost in [GraphCost::Adjacency, GraphCost::Heat { t: 10.0 }] {
        let cfg = PartitionConfig { runs, ..PartitionConfig::new(blocks, cost) };
        let part = partition_graph(&graph, &cfg)?;
        let ami = adjusted_mutual_info(&truth, &part.labels)?;
        println!("{cost:?}: objective {:.4} (seed {}), AMI {ami:.3}", part.objective, part.seed);
    }
    Ok(())
}
