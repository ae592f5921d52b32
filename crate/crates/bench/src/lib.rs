//! Shared workloads for the criterion benches.

use hrc_core::gen::random_coloring;
use hrc_core::model::complete_graph_coloring;
use hrc_core::CspInstance;

/// Named instances, smallest first.
pub fn workloads() -> Vec<(&'static str, CspInstance)> {
    vec![
        ("k3_2colors", complete_graph_coloring(3, 2)),
        ("k4_3colors", complete_graph_coloring(4, 3)),
        ("k4_4colors", complete_graph_coloring(4, 4)),
        ("gnp6_3colors", random_coloring(6, 3, 0.5, 7)),
    ]
}
