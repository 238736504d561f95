//! Run manifest: every artifact-producing command drops a `manifest.tsv`
//! beside its outputs recording the exact command line, seed, dataset hash,
//! and code version. The timestamp row is informational only; determinism
//! checks compare manifests with that row stripped.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use pgrec_core::{Error, Result};

pub struct Manifest {
    /// Full argv, shell-quoted only as far as joining with spaces.
    pub command: String,
    pub seed: Option<u64>,
    pub dataset_hash: Option<String>,
}

impl Manifest {
    pub fn new(argv: &[String], seed: Option<u64>, dataset_hash: Option<String>) -> Manifest {
        Manifest {
            command: argv.join(" "),
            seed,
            dataset_hash,
        }
    }

    /// Write `manifest.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let seed = match self.seed {
            Some(s) => s.to_string(),
            None => "-".to_string(),
        };
        let hash = self.dataset_hash.as_deref().unwrap_or("-");
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let body = format!(
            "key\tvalue\ncommand\t{}\nseed\t{seed}\ndataset_hash\t{hash}\ncode_version\t{}\ntimestamp\t{timestamp}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
        );
        let path = dir.join("manifest.tsv");
        std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e })
    }
}
