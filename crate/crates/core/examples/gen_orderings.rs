//! Regenerates the shipped ordering pairs under `data/orderings/`.
//!
//! cargo run -p star-core --example gen_orderings

use std::fs;
use std::path::Path;

use star_core::hubbard::staircase_orderings;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/orderings");
    for n in [4, 6, 8, 10] {
        let pair = staircase_orderings(n).expect("staircase construction");
        let path = dir.join(format!("n{n}.json"));
        fs::write(&path, pair.to_json()).expect("write ordering file");
        println!("{}", path.display());
    }
}
