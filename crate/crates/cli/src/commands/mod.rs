pub mod capacity;
pub mod coral;
pub mod evaluate;
pub mod pca;
pub mod sample;
pub mod search;
pub mod train;
pub mod vmf;

use std::io::Write;
use std::path::Path;

/// Write a text artifact deterministically (same input, same bytes).
pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
