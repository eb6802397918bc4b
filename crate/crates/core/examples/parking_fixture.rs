//! Writes the synthetic parking-lot bundle (plan, scenario, config, offline
//! tiles) into a directory so the CLI can be tried without network access.
//!
//! cargo run -p lmpath-core --example parking_fixture -- demo/

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "parking-demo".into()));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    match lmpath_core::synthetic::write_bundle(&dir, seed) {
        Ok(_) => println!(
            "wrote {0}/parking.plan, {0}/scenario.json, {0}/lmpath.conf and {0}/tiles\n\
             try: lmpath --config {0}/lmpath.conf plan {0}/parking.plan",
            dir.display()
        ),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
