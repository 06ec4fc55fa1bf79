//! JSON-lines dataset manifests.
//!
//! One object per line with keys `singing` (required), `speech`,
//! `speech_phones`, `singing_phones` and an optional `id`. Relative paths are
//! resolved against the manifest's directory. A record with `speech` is
//! paired, one without is singing-only.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    /// 1-based line number in the manifest.
    pub line: usize,
    pub id: String,
    pub singing: PathBuf,
    pub speech: Option<PathBuf>,
    pub speech_phones: Option<PathBuf>,
    pub singing_phones: Option<PathBuf>,
}

impl ManifestRecord {
    pub fn is_paired(&self) -> bool {
        self.speech.is_some()
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.singing)
            .chain(self.speech.iter())
            .chain(self.speech_phones.iter())
            .chain(self.singing_phones.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub paired: Vec<ManifestRecord>,
    pub unpaired: Vec<ManifestRecord>,
    /// Records dropped because a referenced file is unreadable.
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: Option<String>,
    singing: Option<String>,
    speech: Option<String>,
    speech_phones: Option<String>,
    singing_phones: Option<String>,
}

pub fn parse_manifest(text: &str, base: &Path, origin: &str) -> Result<Manifest> {
    let mut m = Manifest::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line,
            message: e.to_string(),
        })?;
        let resolve = |p: Option<String>| p.map(|p| base.join(p));
        let singing = resolve(rec.singing)
            .ok_or_else(|| Error::validation(format!("{origin}:{line}: record has no `singing` path")))?;
        let record = ManifestRecord {
            line,
            id: rec.id.unwrap_or_else(|| format!("line{line}")),
            singing,
            speech: resolve(rec.speech),
            speech_phones: resolve(rec.speech_phones),
            singing_phones: resolve(rec.singing_phones),
        };
        if let Some(bad) = record.paths().find(|p| !p.is_file()) {
            m.errors.push(RecordError {
                line,
                id: record.id.clone(),
                message: format!("cannot read {}", bad.display()),
            });
            continue;
        }
        if record.is_paired() {
            m.paired.push(record);
        } else {
            m.unpaired.push(record);
        }
    }
    Ok(m)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let m = parse_manifest(&text, base, &path.display().to_string())?;
    log::info!(
        "{}: {} paired, {} singing-only, {} unreadable",
        path.display(),
        m.paired.len(),
        m.unpaired.len(),
        m.errors.len()
    );
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), b"x").unwrap();
    }

    #[test]
    fn partitions_records() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.wav", "b.wav", "c.wav", "d.wav", "e.wav", "s1.wav", "s2.wav"] {
            touch(dir.path(), f);
        }
        let text = r#"{"speech": "s1.wav", "singing": "a.wav"}
{"speech": "s2.wav", "singing": "b.wav", "id": "two"}

{"singing": "c.wav"}
{"singing": "d.wav"}
{"singing": "e.wav"}
"#;
        let m = parse_manifest(text, dir.path(), "m.jsonl").unwrap();
        assert_eq!((m.paired.len(), m.unpaired.len()), (2, 3));
        assert_eq!(m.paired[1].id, "two");
        assert_eq!(m.unpaired[0].line, 4);
        assert_eq!(m.paired[0].singing, dir.path().join("a.wav"));
    }

    #[test]
    fn empty_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = parse_manifest("", dir.path(), "m").unwrap();
        assert!(m.paired.is_empty() && m.unpaired.is_empty());

        let err = parse_manifest("{\"speech\": \"x\"}\n", dir.path(), "m").unwrap_err();
        assert!(err.to_string().contains("m:1"), "{err}");

        match parse_manifest("\n{not json", dir.path(), "m") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }

        touch(dir.path(), "ok.wav");
        let m = parse_manifest("{\"singing\": \"missing.wav\"}\n{\"singing\": \"ok.wav\"}\n", dir.path(), "m").unwrap();
        assert_eq!(m.unpaired.len(), 1);
        assert_eq!(m.errors.len(), 1);
        assert_eq!(m.errors[0].line, 1);
    }
}
