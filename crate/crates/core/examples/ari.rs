//! Adjusted Rand index between two labelings.

use coat::evaluation::adjusted_rand_index;

fn main() {
    let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2];
    let merged = [0, 0, 0, 0, 0, 0, 1, 1, 1];
    let relabeled = ["c", "c", "c", "a", "a", "a", "b", "b", "b"];
    println!("identical up to labels: {}", adjusted_rand_index(&truth, &relabeled).unwrap());
    println!("two groups merged:      {:.3}", adjusted_rand_index(&truth, &merged).unwrap());
}
