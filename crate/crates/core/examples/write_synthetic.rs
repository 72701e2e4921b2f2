//! Writes the synthetic test images as 8-bit PGM files.
//!
//! `cargo run --example write_synthetic -- <out-dir> [size]`

use std::path::PathBuf;

use minsurf::io::write_pgm;
use minsurf::synthetic::{generate, Pattern};

fn main() -> minsurf::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let size: usize = args
        .next()
        .map_or(Ok(128), |s| s.parse())
        .expect("size must be an integer");
    std::fs::create_dir_all(&dir)?;
    for (name, pattern) in [
        ("shapes", Pattern::Shapes),
        ("ramp", Pattern::Ramp),
        ("texture", Pattern::Texture),
    ] {
        let path = dir.join(format!("{name}-{size}.pgm"));
        write_pgm(&path, &generate(pattern, size, size)?)?;
        println!("{}", path.display());
    }
    Ok(())
}
