pub mod audit;
pub mod compose;
pub mod evaluate;
pub mod refine;
pub mod trimask;

use std::path::{Path, PathBuf};

/// `root/<sub>` when it exists, otherwise `root` itself.
pub(crate) fn prefer_sub(root: &Path, sub: &str) -> PathBuf {
    let nested = root.join(sub);
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}
