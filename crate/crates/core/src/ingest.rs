//! JSONL readers and writers for corpora, query sets and training pairs,
//! plus the benchmark manifest and entity match lists.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{BenchmarkManifest, Corpus, Passage, Query, QuerySet, TrainingPair};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Parses one JSON record per non-blank line, reporting 1-based line numbers.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(records, &mut buf)?;
    Ok(buf)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn load_corpus(path: &Path, corpus_id: &str) -> Result<Corpus> {
    let passages: Vec<Passage> = read_jsonl(path)?;
    Corpus::new(corpus_id, passages)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    atomic_write(path, &to_jsonl_bytes(corpus.passages())?)
}

/// Loads queries and validates every relevance reference against `corpora`.
pub fn load_query_set(path: &Path, corpora: &[&Corpus]) -> Result<QuerySet> {
    let queries: Vec<Query> = read_jsonl(path)?;
    let set = QuerySet::new(queries);
    set.validate(corpora)?;
    Ok(set)
}

pub fn write_query_set(set: &QuerySet, path: &Path) -> Result<()> {
    atomic_write(path, &to_jsonl_bytes(&set.queries)?)
}

/// Loads training pairs, checking each positive against the matching corpus.
pub fn load_training_pairs(path: &Path, corpora: &[&Corpus]) -> Result<Vec<TrainingPair>> {
    let pairs: Vec<TrainingPair> = read_jsonl(path)?;
    for p in &pairs {
        let corpus = corpora.iter().find(|c| c.id() == p.corpus_id);
        if !corpus.is_some_and(|c| c.contains(&p.positive_passage_id)) {
            return Err(Error::UnknownPositive {
                corpus: p.corpus_id.clone(),
                passage: p.positive_passage_id.clone(),
            });
        }
    }
    Ok(pairs)
}

pub fn write_training_pairs(pairs: &[TrainingPair], path: &Path) -> Result<()> {
    atomic_write(path, &to_jsonl_bytes(pairs)?)
}

pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let manifest: BenchmarkManifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &BenchmarkManifest, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match manifest_path.parent() {
        Some(dir) => dir.join(p),
        None => p.to_path_buf(),
    }
}

/// Reads a two-column CSV of matched ids (header row required, names free).
pub fn load_matches(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected two columns, found {}", rec.len()),
            });
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}
