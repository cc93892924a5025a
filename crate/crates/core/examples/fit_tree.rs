//! Fits an agreement tree to simulated data with a nested subgroup structure.

use coat::scenario::{generate, Scenario, ScenarioSpec};
use coat::{fit, Design, FitConfig};

fn main() {
    let (data, truth) = generate(&ScenarioSpec::new(Scenario::Tree, Design::Paired, 300, 1));
    let tree = fit(&data, &FitConfig::default()).expect("fit");
    print!("{}", tree.to_text());
    let ari = coat::evaluation::adjusted_rand_index(&truth.labels, &tree.leaf_labels(&data)).unwrap();
    println!("ARI against the true subgroups: {ari:.3}");
}
