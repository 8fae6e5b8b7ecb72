//! Write the bundled fixture: `cargo run --example gen_fixture [dir] [seed]`.

use std::path::PathBuf;

use agricaf::fixture::{write_fixture, DEFAULT_SEED};

fn main() -> agricaf::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map_or_else(|| PathBuf::from("fixtures/maize"), PathBuf::from);
    let seed = args
        .next()
        .map(|s| s.parse().expect("seed must be an unsigned integer"))
        .unwrap_or(DEFAULT_SEED);
    let cfg = write_fixture(&dir, seed)?;
    println!("{}", cfg.display());
    Ok(())
}
