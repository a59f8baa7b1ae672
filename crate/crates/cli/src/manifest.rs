//! Run manifests: the metadata needed to reproduce a command's outputs
//! byte-for-byte, written as flat `key = value` text next to the primary
//! output.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use reqsense_core::io::atomic_write;
use reqsense_core::Result;
use sha2::{Digest, Sha256};

/// Everything recorded about one invocation: command name, tool version,
/// the effective seed, the configuration file and every data input (each
/// with a SHA-256 content digest), the output paths, and any extra values
/// a command wants to pin (for example the feature normalization
/// constant). Deliberately contains no timestamps or host details, so a
/// repeat run yields an identical manifest.
pub struct RunManifest {
    command: &'static str,
    seed: Option<u64>,
    config: Option<(PathBuf, String)>,
    inputs: Vec<(&'static str, PathBuf, String)>,
    outputs: Vec<(&'static str, PathBuf)>,
    extras: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            command,
            seed: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extras: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Records the configuration file with its content digest.
    ///
    /// # Errors
    /// I/O error if the file cannot be read back for digesting.
    pub fn config(&mut self, path: &Path) -> Result<&mut Self> {
        self.config = Some((path.to_path_buf(), file_digest(path)?));
        Ok(self)
    }

    /// Records a data input with its content digest.
    ///
    /// # Errors
    /// I/O error if the file cannot be read back for digesting.
    pub fn input(&mut self, role: &'static str, path: &Path) -> Result<&mut Self> {
        self.inputs.push((role, path.to_path_buf(), file_digest(path)?));
        Ok(self)
    }

    pub fn output(&mut self, role: &'static str, path: &Path) -> &mut Self {
        self.outputs.push((role, path.to_path_buf()));
        self
    }

    pub fn extra(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.extras.push((key.to_string(), value.to_string()));
        self
    }

    /// Writes the manifest atomically.
    ///
    /// # Errors
    /// I/O error if the file cannot be written.
    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, |out| {
            use std::io::Write as _;
            writeln!(out, "command = {}", self.command)?;
            writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
            if let Some(seed) = self.seed {
                writeln!(out, "seed = {seed}")?;
            }
            if let Some((p, digest)) = &self.config {
                writeln!(out, "config = {}", p.display())?;
                writeln!(out, "config.sha256 = {digest}")?;
            }
            for (role, p, digest) in &self.inputs {
                writeln!(out, "input.{role} = {}", p.display())?;
                writeln!(out, "input.{role}.sha256 = {digest}")?;
            }
            for (role, p) in &self.outputs {
                writeln!(out, "output.{role} = {}", p.display())?;
            }
            for (key, value) in &self.extras {
                writeln!(out, "{key} = {value}")?;
            }
            Ok(())
        })
    }
}

/// The manifest path for a primary output: the same name with `.manifest`
/// appended (`data.csv` → `data.csv.manifest`).
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = OsString::from(out.as_os_str());
    name.push(".manifest");
    PathBuf::from(name)
}

/// Lower-hex SHA-256 of a file's bytes.
fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        write!(hex, "{b:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_append_suffix() {
        assert_eq!(
            manifest_path(Path::new("out/data.csv")),
            PathBuf::from("out/data.csv.manifest")
        );
    }

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().expect("tempdir");
        let p = dir.path().join("x.txt");
        fs::write(&p, b"abc").expect("write");
        // SHA-256("abc"), a standard test vector.
        assert_eq!(
            file_digest(&p).expect("digest"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_is_deterministic() {
        let dir = tempfile::tempdir().expect("tempdir");
        let input = dir.path().join("in.csv");
        fs::write(&input, "label,x,y\n").expect("write");
        let write_once = |target: &Path| {
            let mut m = RunManifest::new("gen-toy");
            m.seed(42);
            m.input("dataset", &input).expect("digest input");
            m.output("toy", Path::new("toy.csv"));
            m.extra("n_class0", 100);
            m.write(target).expect("write manifest");
            fs::read(target).expect("read back")
        };
        let a = write_once(&dir.path().join("a.manifest"));
        let b = write_once(&dir.path().join("b.manifest"));
        assert_eq!(a, b);
        let text = String::from_utf8(a).expect("utf-8");
        assert!(text.starts_with("command = gen-toy\n"));
        assert!(text.contains("input.dataset.sha256 = "));
        assert!(!text.contains("time"), "manifests must carry no timestamps");
    }
}
