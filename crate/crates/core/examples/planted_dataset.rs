//! Writes a synthetic angle dataset with a known signal.
//!
//! cargo run -p airway-core --example planted_dataset -- out.csv [seed] [gen34|gen1to4]

use airway_core::bifurcation::code::{pool_gen1to4, pool_gen34};
use airway_core::ml::PlantedSpec;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "angles.csv".into());
    let seed = args.next().map(|s| s.parse().expect("seed is an integer")).unwrap_or(1);
    let mut spec = PlantedSpec::standard_cohort(seed);
    if args.next().as_deref() == Some("gen1to4") {
        let informative = spec.informative.iter().map(|&j| spec.features[j].clone()).collect::<Vec<_>>();
        spec.features = pool_gen1to4();
        spec.informative = informative
            .iter()
            .map(|c| spec.features.iter().position(|f| f == c).expect("gen-3/4 code in gen 1-4 pool"))
            .collect();
    } else {
        spec.features = pool_gen34();
    }
    let ds = spec.generate().expect("valid spec");
    ds.save_csv(&out).expect("writable output");
    let names: Vec<String> = spec.informative.iter().map(|&j| spec.features[j].to_string()).collect();
    println!("{} subjects, {} angles, informative: {}", ds.n(), ds.m(), names.join(", "));
}
