//! Rejection rate of the root test under the null scenario.

use coat::evaluation::{run_replications, summarize, GridCell, HarnessConfig, Model};
use coat::scenario::Scenario;
use coat::scenario::Spread;
use coat::{Design, FitConfig};

fn main() {
    let cells: Vec<GridCell> = [Design::Unpaired, Design::Paired]
        .into_iter()
        .map(|design| GridCell { scenario: Scenario::Null, design, n: 100, m: 3 })
        .collect();
    let config = HarnessConfig {
        fit: FitConfig::default(),
        reps: 200,
        models: vec![Model::Coat, Model::CtreeMean],
        seed: 42,
        threads: 0,
        spread: Spread::default(),
    };
    let (rows, _) = run_replications(&cells, &config).expect("harness");
    print!("{}", summarize(&rows));
}
