//! Draws one data set per scenario and prints the empirical subgroup moments.

use coat::agreement::{estimate, subject_summaries};
use coat::scenario::{generate, Scenario, ScenarioSpec};
use coat::{Design, VarianceMode};

fn main() {
    for scenario in [Scenario::Null, Scenario::StumpBias, Scenario::StumpLoa, Scenario::Tree] {
        let (data, truth) = generate(&ScenarioSpec::new(scenario, Design::Paired, 3000, 5));
        let summaries = subject_summaries(&data);
        let mut labels = truth.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        for label in labels {
            let idx: Vec<usize> = (0..data.n_subjects()).filter(|&i| truth.labels[i] == label).collect();
            let group: Vec<_> = idx.iter().map(|&i| summaries[i].clone()).collect();
            let e = estimate(&group, VarianceMode::Msb).unwrap();
            println!(
                "{scenario} group {label}: n={} bias {:.2} (true {}) var {:.1} (true {})",
                idx.len(),
                e.bias,
                truth.true_bias[idx[0]],
                e.var_total,
                truth.true_var[idx[0]]
            );
        }
    }
}
