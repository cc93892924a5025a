//! Bland-Altman estimates for a small paired and unpaired data set.

use coat::{estimate_dataset, parse_long_csv, Design, VarianceMode};

const CSV: &str = "subject,method,replicate,value
s1,A,1,10.2
s1,A,2,10.6
s1,B,1,9.8
s1,B,2,10.1
s2,A,1,12.0
s2,A,2,11.4
s2,B,1,11.2
s2,B,2,11.5
s3,A,1,8.9
s3,A,2,9.3
s3,B,1,8.1
s3,B,2,8.8
s4,A,1,14.1
s4,A,2,13.6
s4,B,1,13.9
s4,B,2,12.8
";

fn main() {
    for design in [Design::Unpaired, Design::Paired] {
        let data = parse_long_csv(CSV.as_bytes(), design, &[]).expect("valid csv");
        let modes: &[VarianceMode] = match design {
            Design::Unpaired => &[VarianceMode::Msb],
            Design::Paired => &[VarianceMode::Msb, VarianceMode::Literal],
        };
        for &mode in modes {
            let e = estimate_dataset(&data, mode).expect("estimable");
            println!(
                "{design} {mode:?}: bias {:.3}, sd {:.3}, LoA [{:.3}, {:.3}]",
                e.bias,
                e.sd(),
                e.loa_lower(),
                e.loa_upper()
            );
        }
    }
}
