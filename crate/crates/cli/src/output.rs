//! Shared file plumbing: provenance headers, atomic writes, digests.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "csrg";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance carried by every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub tool: String,
    pub version: String,
    /// File kind and format revision, e.g. `trace/1`.
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str, seed: u64, model: &str) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            kind: kind.into(),
            config_hash: config_hash.into(),
            seed,
            model: model.into(),
        }
    }

    /// `# key: value` lines for CSV files.
    pub fn comment_lines(&self) -> String {
        format!(
            "# tool: {}\n# version: {}\n# kind: {}\n# config_hash: {}\n# seed: {}\n# model: {}\n",
            self.tool, self.version, self.kind, self.config_hash, self.seed, self.model
        )
    }

    /// Inverse of [`Header::comment_lines`]; other `#` lines are returned as `(key, value)` extras.
    pub fn parse_comments(text: &str) -> anyhow::Result<(Self, Vec<(String, String)>)> {
        let mut fields = std::collections::BTreeMap::new();
        let mut extras = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            let (k, v) = body
                .split_once(':')
                .ok_or_else(|| anyhow::anyhow!("malformed header line {line:?}"))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            match k.as_str() {
                "tool" | "version" | "kind" | "config_hash" | "seed" | "model" => {
                    fields.insert(k, v);
                }
                _ => extras.push((k, v)),
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| anyhow::anyhow!("header is missing `{k}`"))
        };
        let header = Header {
            tool: get("tool")?,
            version: get("version")?,
            kind: get("kind")?,
            config_hash: get("config_hash")?,
            seed: get("seed")?.parse()?,
            model: get("model")?,
        };
        Ok((header, extras))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Shortest decimal form that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn parse_f64(s: &str) -> anyhow::Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| anyhow::anyhow!("bad number {s:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = Header::new("trace/1", "abc123", 42, "scalar");
        let text = format!("{}# extra: 7\nstep\n", h.comment_lines());
        let (back, extras) = Header::parse_comments(&text).unwrap();
        assert_eq!(back, h);
        assert_eq!(extras, vec![("extra".to_string(), "7".to_string())]);
    }

    #[test]
    fn missing_header_field() {
        let err = Header::parse_comments("# tool: csrg\n").unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn float_text_is_exact() {
        for x in [
            0.1,
            -0.0,
            1e-300,
            f64::MAX,
            std::f64::consts::PI / 6.0,
            5e-324,
        ] {
            assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
