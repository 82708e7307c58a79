use super::{write_atomic, CliError, Meta};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub(crate) const MANIFEST_FILE: &str = "manifest.json";

/// One file written into an output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub path: String,
    /// Volatile files hold wall-clock measurements and differ between
    /// otherwise identical runs. Their size and digest are not recorded.
    pub volatile: bool,
    pub bytes: Option<u64>,
    pub sha256: Option<String>,
}

/// Index of an output directory, written last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<BundleFile>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(&path, e.to_string()))
    }

    pub fn stable_files(&self) -> impl Iterator<Item = &BundleFile> {
        self.files.iter().filter(|f| !f.volatile)
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: T,
}

pub(crate) struct BundleWriter {
    dir: PathBuf,
    meta: Meta,
    command: String,
    files: Vec<BundleFile>,
}

impl BundleWriter {
    pub(crate) fn new(dir: &Path, meta: Meta, command: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(BundleWriter {
            dir: dir.to_owned(),
            meta,
            command: command.to_owned(),
            files: Vec::new(),
        })
    }

    pub(crate) fn meta(&self) -> &Meta {
        &self.meta
    }

    pub(crate) fn write(
        &mut self,
        name: &str,
        bytes: &[u8],
        volatile: bool,
    ) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        let (size, digest) = if volatile {
            (None, None)
        } else {
            (
                Some(bytes.len() as u64),
                Some(hex::encode(Sha256::digest(bytes))),
            )
        };
        self.files.retain(|f| f.path != name);
        self.files.push(BundleFile {
            path: name.to_owned(),
            volatile,
            bytes: size,
            sha256: digest,
        });
        Ok(())
    }

    /// Writes a CSV whose first line is the provenance comment.
    pub(crate) fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
        volatile: bool,
    ) -> Result<(), CliError> {
        let mut w = super::artifacts::csv_writer();
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        let mut text = self.meta.csv_comment();
        text.push_str(&super::artifacts::finish(w));
        self.write(name, text.as_bytes(), volatile)
    }

    /// Writes `{"meta": .., key: value}`.
    pub(crate) fn json<T: Serialize>(
        &mut self,
        name: &str,
        key: &str,
        value: &T,
        volatile: bool,
    ) -> Result<(), CliError> {
        let mut body = serde_json::Map::new();
        body.insert(
            key.to_owned(),
            serde_json::to_value(value).expect("serialisable value"),
        );
        let stamped = Stamped {
            meta: &self.meta,
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped).expect("serialisable value");
        text.push('\n');
        self.write(name, text.as_bytes(), volatile)
    }

    /// Writes the raw text as-is (SVG, echoed configuration).
    pub(crate) fn text(&mut self, name: &str, text: &str, volatile: bool) -> Result<(), CliError> {
        self.write(name, text.as_bytes(), volatile)
    }

    pub(crate) fn finish(mut self) -> Result<Manifest, CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "critlink".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: self.meta.config_hash.clone(),
            seed: self.meta.seed,
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

/// Formats a float for CSV output with enough digits to round-trip.
pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}
