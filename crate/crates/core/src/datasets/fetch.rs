//! Download-and-verify cache for dataset files.
//!
//! Files are written to a temporary name and renamed into place only after
//! their checksum matches, so a reader never sees a partial file. Each file
//! is guarded by a lock file so concurrent invocations serialize.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use log::info;
use sha2::{Digest, Sha256};

use super::{Checksum, DatasetSpec, RemoteFile};
use crate::error::{Error, Result};

/// Environment variable overriding the dataset cache root.
pub const CACHE_ENV: &str = "SNN_DATA_DIR";

pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(dir).join("snn-data");
    }
    std::env::var_os("HOME")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
        .join(".cache")
        .join("snn-data")
}

fn digest_hex(checksum: &Checksum, bytes: &[u8]) -> String {
    match checksum {
        Checksum::Sha256(_) => hex(&Sha256::digest(bytes)),
        Checksum::Md5(_) => hex(&md5::Md5::digest(bytes)),
    }
}

fn expected_hex(checksum: &Checksum) -> &'static str {
    match checksum {
        Checksum::Sha256(h) | Checksum::Md5(h) => h,
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn verify(path: &Path, file: &RemoteFile, bytes: &[u8]) -> Result<()> {
    let actual = digest_hex(&file.checksum, bytes);
    let expected = expected_hex(&file.checksum);
    if actual != expected {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            url: file.url.clone(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

struct FileLock(File);

impl FileLock {
    fn acquire(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(path)?;
        f.lock()?;
        Ok(FileLock(f))
    }
}

impl Drop for FileLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn install(dest: &Path, bytes: &[u8]) -> Result<()> {
    let dir = dest.parent().expect("cache files live in a directory");
    let name = dest.file_name().expect("file name").to_string_lossy();
    let tmp = dir.join(format!(".{name}.partial-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dest)?;
    Ok(())
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

fn http_get(url: &str) -> Result<Vec<u8>> {
    let err = |e: ureq::Error| Error::Download {
        url: url.to_string(),
        message: e.to_string(),
    };
    let mut resp = ureq::get(url).call().map_err(err)?;
    resp.body_mut()
        .with_config()
        .limit(512 * 1024 * 1024)
        .read_to_vec()
        .map_err(err)
}

/// Ensures every file of `spec` is cached and verified, downloading what is
/// missing. Cached files with a good checksum are never re-fetched; a cached
/// file with a bad checksum is reported, not silently replaced.
pub fn fetch(spec: &DatasetSpec) -> Result<Vec<PathBuf>> {
    fetch_with(spec, http_get)
}

pub(crate) fn fetch_with(spec: &DatasetSpec, mut get: impl FnMut(&str) -> Result<Vec<u8>>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&spec.cache_dir)?;
    let mut paths = Vec::with_capacity(spec.files.len());
    for file in &spec.files {
        let dest = spec.path(file);
        let _lock = FileLock::acquire(&spec.cache_dir.join(format!(".{}.lock", file.name)))?;
        if dest.exists() {
            verify(&dest, file, &fs::read(&dest)?)?;
            paths.push(dest);
            continue;
        }
        info!("downloading {}", file.url);
        let body = get(&file.url)?;
        let bytes = if file.gunzip { gunzip(&body, &file.url)? } else { body };
        verify(&dest, file, &bytes)?;
        install(&dest, &bytes)?;
        paths.push(dest);
    }
    Ok(paths)
}

/// Installs dataset files from a local directory instead of the network.
/// Each file may be present under its cache name or with a `.gz` suffix.
pub fn import_local(spec: &DatasetSpec, source: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&spec.cache_dir)?;
    let mut paths = Vec::with_capacity(spec.files.len());
    for file in &spec.files {
        let dest = spec.path(file);
        let _lock = FileLock::acquire(&spec.cache_dir.join(format!(".{}.lock", file.name)))?;
        let plain = source.join(file.name);
        let gz = source.join(format!("{}.gz", file.name));
        let bytes = if plain.exists() {
            fs::read(&plain)?
        } else if gz.exists() {
            let raw = fs::read(&gz)?;
            gunzip(&raw, &gz.display().to_string())?
        } else {
            return Err(Error::Input(format!(
                "{} not found in {}",
                file.name,
                source.display()
            )));
        };
        verify(&dest, file, &bytes)?;
        install(&dest, &bytes)?;
        paths.push(dest);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::super::DatasetName;
    use super::*;
    use std::cell::Cell;

    const HELLO_SHA: &str = "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824";

    fn spec(dir: &Path, gunzip: bool) -> DatasetSpec {
        DatasetSpec {
            name: DatasetName::Digits,
            files: vec![RemoteFile {
                name: "hello.txt",
                url: "http://example.invalid/hello.txt.gz".into(),
                gunzip,
                checksum: Checksum::Sha256(HELLO_SHA),
            }],
            cache_dir: dir.join("digits"),
            i_max: 15,
            classes: 10,
            expected_counts: (1, 0),
        }
    }

    fn gz(bytes: &[u8]) -> Vec<u8> {
        let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        e.write_all(bytes).unwrap();
        e.finish().unwrap()
    }

    #[test]
    fn fresh_fetch_then_cached() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(dir.path(), true);
        let calls = Cell::new(0);
        let get = |_: &str| {
            calls.set(calls.get() + 1);
            Ok(gz(b"hello"))
        };
        let paths = fetch_with(&s, get).unwrap();
        assert_eq!(fs::read(&paths[0]).unwrap(), b"hello");
        assert_eq!(calls.get(), 1);
        let paths2 = fetch_with(&s, |_: &str| -> Result<Vec<u8>> { panic!("network touched") }).unwrap();
        assert_eq!(paths, paths2);
        // no temporary files left behind
        let leftovers: Vec<_> = fs::read_dir(&s.cache_dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains("partial"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn corrupted_cache_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(dir.path(), true);
        fs::create_dir_all(&s.cache_dir).unwrap();
        fs::write(s.cache_dir.join("hello.txt"), b"hellO").unwrap();
        let err = fetch_with(&s, |_: &str| Ok(gz(b"hello"))).unwrap_err();
        match err {
            Error::Checksum { path, url, .. } => {
                assert!(path.ends_with("hello.txt"));
                assert!(url.contains("example.invalid"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_download_is_not_installed() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(dir.path(), false);
        assert!(matches!(fetch_with(&s, |_: &str| Ok(b"nope".to_vec())), Err(Error::Checksum { .. })));
        assert!(!s.cache_dir.join("hello.txt").exists());
        let down = fetch_with(&s, |u: &str| {
            Err(Error::Download {
                url: u.into(),
                message: "offline".into(),
            })
        })
        .unwrap_err();
        assert!(down.to_string().contains("example.invalid"));
    }

    #[test]
    fn import_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        fs::create_dir_all(&src).unwrap();
        fs::write(src.join("hello.txt.gz"), gz(b"hello")).unwrap();
        let s = spec(dir.path(), true);
        let paths = import_local(&s, &src).unwrap();
        assert_eq!(fs::read(&paths[0]).unwrap(), b"hello");
        assert!(import_local(&s, &dir.path().join("missing")).is_err());
    }

    #[test]
    fn md5_checksums() {
        let f = RemoteFile {
            name: "x",
            url: String::new(),
            gunzip: false,
            checksum: Checksum::Md5("5d41402abc4b2a76b9719d911017c592"),
        };
        assert!(verify(Path::new("x"), &f, b"hello").is_ok());
        assert!(verify(Path::new("x"), &f, b"hello!").is_err());
    }
}
