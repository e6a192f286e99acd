//! Library side of the `dsolocate` binary: run configuration and one function per
//! subcommand, so the whole workflow can be driven from tests.
//!
//! Exit codes: `0` success, `2` bad configuration or usage, `3` file I/O or
//! unreadable input, `4` runtime failure (domain errors, diverged training).

mod args;
mod bench;
pub mod config;
mod detect;
mod evaluate;
mod generate;
mod train;

use std::path::Path;

use serde::Serialize;

use dsolocate::Error;

pub use args::{run, Cli};
pub use bench::{cmd_bench, BenchReport, BenchRow};
pub use config::{GenerateConfig, Paths, ProfileChoice, RunConfig};
pub use detect::{cmd_detect, DetectOutput};
pub use evaluate::cmd_evaluate;
pub use generate::{
    cmd_generate, load_manifest, Manifest, ManifestPatch, ManifestScene, SplitCounts,
};
pub use train::{cmd_train, load_split, training_echo, TrainOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Image { .. } | Error::Format { .. } => EXIT_IO,
        Error::Domain(_) | Error::Training { .. } => EXIT_RUNTIME,
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> dsolocate::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output types serialize");
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create_dir(path: &Path) -> dsolocate::Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `path` relative to `base` with forward slashes.
pub(crate) fn relative(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}
