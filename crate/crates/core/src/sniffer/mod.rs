//! Signature scanner for deep-learning components in application packages.
//!
//! Files are matched by name (extension or exact filename), by magic bytes
//! near the start of the content, and by keywords anywhere in the content.
//! Zip archives are opened one level deep and their entries reported as
//! `archive!/entry`.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

/// Magic bytes are only matched within this many leading bytes.
pub const HEADER_WINDOW: usize = 16;

/// Shortest printable run kept by [`printable_runs`].
pub const MIN_RUN: usize = 4;

const ZIP_MAGIC: &[u8] = b"PK\x03\x04";

#[derive(Debug, thiserror::Error)]
pub enum SnifferError {
    #[error("target not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad signature file {path}: {msg}")]
    Signatures { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, SnifferError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnifferError + '_ {
    move |source| SnifferError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureSet {
    pub extensions: Vec<String>,
    pub filenames: Vec<String>,
    pub magics: Vec<String>,
    pub keywords: Vec<String>,
}

impl Default for SignatureSet {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            extensions: v(&[".tflite", ".lite", ".mlg", ".mlw", ".params"]),
            filenames: v(&["graph.json"]),
            magics: v(&["MLW0", "TFL3"]),
            keywords: v(&["org.tensorflow", "tflite", "libtvm_runtime"]),
        }
    }
}

impl SignatureSet {
    /// Reads a signature file. Missing fields keep their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&text).map_err(|e| SnifferError::Signatures {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    /// Adds every signature of `other` not already present.
    pub fn extend(&mut self, other: &SignatureSet) {
        for (mine, theirs) in [
            (&mut self.extensions, &other.extensions),
            (&mut self.filenames, &other.filenames),
            (&mut self.magics, &other.magics),
            (&mut self.keywords, &other.keywords),
        ] {
            for s in theirs {
                if !mine.contains(s) {
                    mine.push(s.clone());
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingKind {
    Filename,
    Magic,
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    /// Byte offset of a content hit; absent for filename hits.
    pub offset: Option<u64>,
    pub kind: FindingKind,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub target: String,
    pub findings: Vec<Finding>,
    pub files_scanned: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    /// Exit status of the command-line wrapper: 0 clean, 1 findings.
    pub fn exit_code(&self) -> i32 {
        if self.is_clean() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn occurrences<'a>(haystack: &'a [u8], needle: &'a [u8]) -> impl Iterator<Item = usize> + 'a {
    let n = needle.len();
    (0..haystack.len().saturating_sub(n.saturating_sub(1))).filter(move |&i| n > 0 && &haystack[i..i + n] == needle)
}

/// Filename hits for one path (the last component is matched).
pub fn match_name(path: &str, sigs: &SignatureSet, out: &mut Vec<Finding>) {
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    let lower = name.to_ascii_lowercase();
    for ext in &sigs.extensions {
        if lower.ends_with(&ext.to_ascii_lowercase()) {
            out.push(Finding {
                path: path.to_string(),
                offset: None,
                kind: FindingKind::Filename,
                token: ext.clone(),
            });
        }
    }
    for f in &sigs.filenames {
        if lower == f.to_ascii_lowercase() {
            out.push(Finding {
                path: path.to_string(),
                offset: None,
                kind: FindingKind::Filename,
                token: f.clone(),
            });
        }
    }
}

/// Magic and keyword hits in raw content. `base` is added to offsets.
pub fn match_content(path: &str, data: &[u8], base: u64, header: bool, sigs: &SignatureSet, out: &mut Vec<Finding>) {
    if header {
        let window = &data[..data.len().min(HEADER_WINDOW)];
        for magic in &sigs.magics {
            for at in occurrences(window, magic.as_bytes()) {
                if at + magic.len() <= window.len() {
                    out.push(Finding {
                        path: path.to_string(),
                        offset: Some(base + at as u64),
                        kind: FindingKind::Magic,
                        token: magic.clone(),
                    });
                }
            }
        }
    }
    for kw in &sigs.keywords {
        for at in occurrences(data, kw.as_bytes()) {
            out.push(Finding {
                path: path.to_string(),
                offset: Some(base + at as u64),
                kind: FindingKind::Keyword,
                token: kw.clone(),
            });
        }
    }
}

fn scan_zip(path: &str, data: &[u8], sigs: &SignatureSet, out: &mut Vec<Finding>) -> Option<usize> {
    let mut archive = zip::ZipArchive::new(Cursor::new(data)).ok()?;
    let mut scanned = 0;
    for i in 0..archive.len() {
        let Ok(mut entry) = archive.by_index(i) else { continue };
        if entry.is_dir() {
            continue;
        }
        let inner = format!("{path}!/{}", entry.name());
        let mut content = Vec::new();
        if entry.read_to_end(&mut content).is_err() {
            continue;
        }
        match_name(&inner, sigs, out);
        match_content(&inner, &content, 0, true, sigs, out);
        scanned += 1;
    }
    Some(scanned)
}

fn scan_file(display: &str, data: &[u8], sigs: &SignatureSet, out: &mut Vec<Finding>) -> usize {
    match_name(display, sigs, out);
    if data.starts_with(ZIP_MAGIC) {
        if let Some(n) = scan_zip(display, data, sigs, out) {
            return 1 + n;
        }
    }
    match_content(display, data, 0, true, sigs, out);
    1
}

/// Scans a directory tree, a zip archive or a single file.
pub fn scan(target: &Path, sigs: &SignatureSet) -> Result<ScanReport> {
    let start = Instant::now();
    if !target.exists() {
        return Err(SnifferError::NotFound(target.display().to_string()));
    }
    let mut findings = Vec::new();
    let mut files_scanned = 0;
    if target.is_dir() {
        for entry in WalkDir::new(target).sort_by_file_name() {
            let entry = entry.map_err(|e| SnifferError::Io {
                path: e.path().unwrap_or(target).display().to_string(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(target)
                .unwrap_or(entry.path())
                .to_string_lossy()
                .replace('\\', "/");
            let data = fs::read(entry.path()).map_err(io_err(entry.path()))?;
            files_scanned += scan_file(&rel, &data, sigs, &mut findings);
        }
    } else {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| target.display().to_string());
        let data = fs::read(target).map_err(io_err(target))?;
        files_scanned += scan_file(&name, &data, sigs, &mut findings);
    }
    findings.sort();
    findings.dedup();
    Ok(ScanReport {
        target: target.display().to_string(),
        findings,
        files_scanned,
        elapsed: start.elapsed(),
    })
}

/// Printable ASCII runs of at least `min` bytes, with their offsets.
pub fn printable_runs(data: &[u8], min: usize) -> Vec<(usize, &[u8])> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &b) in data.iter().enumerate() {
        let printable = b == b'\t' || (0x20..0x7f).contains(&b);
        match (printable, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min {
                    runs.push((s, &data[s..i]));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if data.len() - s >= min {
            runs.push((s, &data[s..]));
        }
    }
    runs
}

/// Matches magics and keywords against the printable strings of a binary.
pub fn scan_binary_strings(path: &Path, sigs: &SignatureSet) -> Result<ScanReport> {
    let start = Instant::now();
    if !path.exists() {
        return Err(SnifferError::NotFound(path.display().to_string()));
    }
    let data = fs::read(path).map_err(io_err(path))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut findings = Vec::new();
    for (offset, run) in printable_runs(&data, MIN_RUN) {
        match_content(&name, run, offset as u64, false, sigs, &mut findings);
        for magic in &sigs.magics {
            for at in occurrences(run, magic.as_bytes()) {
                findings.push(Finding {
                    path: name.clone(),
                    offset: Some((offset + at) as u64),
                    kind: FindingKind::Magic,
                    token: magic.clone(),
                });
            }
        }
    }
    findings.sort();
    findings.dedup();
    Ok(ScanReport {
        target: path.display().to_string(),
        findings,
        files_scanned: 1,
        elapsed: start.elapsed(),
    })
}
