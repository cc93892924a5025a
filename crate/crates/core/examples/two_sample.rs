//! Two-sample test of equal agreement between the groups of a binary covariate.

use coat::scenario::{generate, Scenario, ScenarioSpec};
use coat::tree::two_sample_ba_test;
use coat::data::{CovariateKind, CovariateSpec, CovariateValue};
use coat::{Design, FitConfig};

fn main() {
    let (mut data, _) = generate(&ScenarioSpec::new(Scenario::StumpBias, Design::Unpaired, 150, 3));
    // dichotomise X1 at the true threshold into a named group
    let j = data.covariate_index("X1").unwrap();
    for s in &mut data.subjects {
        let low = s.covariates[j].as_f64() <= 20.0;
        s.covariates.push(CovariateValue::Level(usize::from(!low)));
    }
    data.covariate_schema.push(CovariateSpec::categorical("young", CovariateKind::Binary, &["yes", "no"]));
    let r = two_sample_ba_test(&data, "young", &FitConfig::default()).expect("test");
    for (level, e) in &r.groups {
        println!("young={level}: n={} bias {:.2} sd {:.2}", e.n_subjects, e.bias, e.sd());
    }
    println!("statistic {:.2} df {} p {:.3e}", r.test.statistic, r.test.df, r.test.p_value);
}
