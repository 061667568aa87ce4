//! Dataset download with SHA-256 verification.
//!
//! Checksums cover the decoded payload (after gunzip or archive extraction),
//! so mirrors may recompress files freely.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIRROR_ENV: &str = "DENSITOMETER_MIRROR";
pub const DATA_DIR_ENV: &str = "DENSITOMETER_DATA_DIR";
pub const DEFAULT_MNIST_BASE: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";
pub const DEFAULT_CIFAR10_URL: &str = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchEntry {
    /// File name written into the destination directory.
    pub file: String,
    /// `http(s)://`, `file://` or a plain local path.
    pub url: String,
    /// Lowercase hex SHA-256 of the decoded payload.
    pub sha256: Option<String>,
    /// Member to extract when `url` names a `.tar.gz` archive.
    pub archive_member: Option<String>,
}

pub fn mnist_entries(base: &str) -> Vec<FetchEntry> {
    let base = base.trim_end_matches('/');
    [
        (
            "train-images-idx3-ubyte",
            "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
        ),
        (
            "train-labels-idx1-ubyte",
            "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
        ),
        (
            "t10k-images-idx3-ubyte",
            "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
        ),
        (
            "t10k-labels-idx1-ubyte",
            "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
        ),
    ]
    .into_iter()
    .map(|(file, sha)| FetchEntry {
        file: file.to_string(),
        url: format!("{base}/{file}.gz"),
        sha256: Some(sha.to_string()),
        archive_member: None,
    })
    .collect()
}

pub fn cifar10_entries(archive_url: &str) -> Vec<FetchEntry> {
    let mut names: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
    names.push("test_batch.bin".to_string());
    names
        .into_iter()
        .map(|file| FetchEntry {
            archive_member: Some(format!("cifar-10-batches-bin/{file}")),
            file,
            url: archive_url.to_string(),
            sha256: None,
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Replaces the directory part of `url` with the mirror base when one is set.
pub fn resolve_url(url: &str, mirror: Option<&str>) -> String {
    match mirror {
        Some(base) if !base.is_empty() => {
            let name = url.rsplit('/').next().unwrap_or(url);
            format!("{}/{}", base.trim_end_matches('/'), name)
        }
        _ => url.to_string(),
    }
}

fn download(url: &str) -> Result<Vec<u8>> {
    if url.starts_with("http://") || url.starts_with("https://") {
        let err = |e: ureq::Error| Error::Download {
            url: url.to_string(),
            message: e.to_string(),
        };
        let mut response = ureq::get(url).call().map_err(err)?;
        let bytes = response
            .body_mut()
            .with_config()
            .limit(512 * 1024 * 1024)
            .read_to_vec()
            .map_err(err)?;
        Ok(bytes)
    } else {
        let path = url.strip_prefix("file://").unwrap_or(url);
        std::fs::read(path).map_err(|e| Error::Download {
            url: url.to_string(),
            message: e.to_string(),
        })
    }
}

fn gunzip(bytes: &[u8], url: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| Error::Download {
            url: url.to_string(),
            message: format!("gzip: {e}"),
        })?;
    Ok(out)
}

fn extract_member(archive: &[u8], member: &str, url: &str) -> Result<Vec<u8>> {
    let fail = |message: String| Error::Download {
        url: url.to_string(),
        message,
    };
    let mut tar = tar::Archive::new(GzDecoder::new(archive));
    for entry in tar.entries().map_err(|e| fail(format!("tar: {e}")))? {
        let mut entry = entry.map_err(|e| fail(format!("tar: {e}")))?;
        let path = entry.path().map_err(|e| fail(format!("tar: {e}")))?;
        if path.to_string_lossy().ends_with(member) {
            let mut out = Vec::new();
            entry
                .read_to_end(&mut out)
                .map_err(|e| fail(format!("tar: {e}")))?;
            return Ok(out);
        }
    }
    Err(fail(format!("archive has no member {member}")))
}

fn decode(entry: &FetchEntry, url: &str, bytes: Vec<u8>) -> Result<Vec<u8>> {
    if let Some(member) = &entry.archive_member {
        extract_member(&bytes, member, url)
    } else if url.ends_with(".gz") {
        gunzip(&bytes, url)
    } else {
        Ok(bytes)
    }
}

fn verify(entry: &FetchEntry, payload: &[u8]) -> Result<()> {
    if let Some(expected) = &entry.sha256 {
        let actual = sha256_hex(payload);
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(Error::Checksum {
                name: entry.file.clone(),
                expected: expected.clone(),
                actual,
            });
        }
    }
    Ok(())
}

/// Downloads each entry into `dest`, skipping files already present with a
/// matching checksum. Returns the written (or kept) paths.
pub fn fetch_all(
    entries: &[FetchEntry],
    dest: &Path,
    mirror: Option<&str>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dest).map_err(|e| Error::io(dest.display().to_string(), e))?;
    let mut cache: Option<(String, Vec<u8>)> = None;
    let mut written = Vec::new();
    for entry in entries {
        let target = dest.join(&entry.file);
        if let Ok(existing) = std::fs::read(&target) {
            if entry.sha256.is_some() && verify(entry, &existing).is_ok() {
                log::info!("{} already present", target.display());
                written.push(target);
                continue;
            }
        }
        let url = resolve_url(&entry.url, mirror);
        let raw = match &cache {
            Some((cached, bytes)) if *cached == url => bytes.clone(),
            _ => {
                log::info!("downloading {url}");
                let bytes = download(&url)?;
                cache = Some((url.clone(), bytes.clone()));
                bytes
            }
        };
        let payload = decode(entry, &url, raw)?;
        verify(entry, &payload)?;
        if entry.sha256.is_none() {
            log::warn!(
                "{}: no checksum configured, sha256 {}",
                entry.file,
                sha256_hex(&payload)
            );
        }
        let tmp = dest.join(format!(".{}.partial", entry.file));
        std::fs::write(&tmp, &payload).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(target.display().to_string(), e))?;
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn mirror_replaces_directory() {
        assert_eq!(
            resolve_url("https://a.example/mnist/x.gz", Some("file:///m/")),
            "file:///m/x.gz"
        );
        assert_eq!(resolve_url("https://a/x.gz", None), "https://a/x.gz");
    }

    #[test]
    fn fetch_from_local_mirror_verifies_checksum() {
        let src = tempfile::tempdir().unwrap();
        let dst = tempfile::tempdir().unwrap();
        let payload = b"hello idx".to_vec();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&payload).unwrap();
        std::fs::write(src.path().join("f.gz"), enc.finish().unwrap()).unwrap();

        let mut entry = FetchEntry {
            file: "f".into(),
            url: "https://unused.example/f.gz".into(),
            sha256: Some(sha256_hex(&payload)),
            archive_member: None,
        };
        let mirror = format!("file://{}", src.path().display());
        let out = fetch_all(std::slice::from_ref(&entry), dst.path(), Some(&mirror)).unwrap();
        assert_eq!(std::fs::read(&out[0]).unwrap(), payload);

        entry.sha256 = Some("00".repeat(32));
        std::fs::remove_file(&out[0]).unwrap();
        let err = fetch_all(&[entry], dst.path(), Some(&mirror)).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }));
    }
}
