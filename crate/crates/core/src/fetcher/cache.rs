//! On-disk page cache keyed by (canonical URL, optional capture timestamp).
//!
//! Layout: `{root}/{h[0:2]}/{h[2:4]}/{h}.bin`, `h` = hex SHA-256 of the key.
//! Entry: magic, u32 LE header length, JSON header, raw body. Entries are
//! written to a temp file in the same directory and renamed into place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::FetchedPage;
use crate::sampler::canonicalize_url;
use crate::util::write_atomic;

const MAGIC: &[u8; 4] = b"LSC1";

#[derive(Serialize, Deserialize)]
struct EntryHeader {
    key: String,
    request_url: Url,
    final_url: Url,
    status: u16,
    content_type: String,
    fetched_at: DateTime<Utc>,
    truncated: bool,
    body_len: usize,
}

#[derive(Debug, Clone)]
pub struct PageCache {
    root: PathBuf,
}

impl PageCache {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(PageCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// 64-hex content key for a URL and optional timestamp.
    pub fn key(url: &Url, ts: Option<&str>) -> String {
        let canonical = canonicalize_url(url);
        let mut h = Sha256::new();
        h.update(canonical.as_str().as_bytes());
        h.update(b"\n");
        h.update(ts.unwrap_or("-").as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root
            .join(&key[0..2])
            .join(&key[2..4])
            .join(format!("{key}.bin"))
    }

    /// Unreadable or mismatched entries are deleted and reported as a miss.
    pub fn lookup(&self, url: &Url, ts: Option<&str>) -> Option<FetchedPage> {
        let key = Self::key(url, ts);
        let path = self.path_for(&key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => return None,
        };
        match decode_entry(&bytes, &key) {
            Some(page) => Some(page),
            None => {
                log::warn!("evicting corrupt cache entry {}", path.display());
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    pub fn store(&self, page: &FetchedPage, ts: Option<&str>) -> io::Result<()> {
        let key = Self::key(&page.request_url, ts);
        let header = EntryHeader {
            key: key.clone(),
            request_url: page.request_url.clone(),
            final_url: page.final_url.clone(),
            status: page.status,
            content_type: page.content_type.clone(),
            fetched_at: page.fetched_at,
            truncated: page.truncated,
            body_len: page.body.len(),
        };
        let header = serde_json::to_vec(&header).map_err(io::Error::other)?;
        let mut buf = Vec::with_capacity(8 + header.len() + page.body.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&page.body);
        write_atomic(&self.path_for(&key), &buf)
    }
}

fn decode_entry(bytes: &[u8], key: &str) -> Option<FetchedPage> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return None;
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let header_end = 8usize.checked_add(hlen)?;
    let header: EntryHeader = serde_json::from_slice(bytes.get(8..header_end)?).ok()?;
    let body = bytes.get(header_end..)?;
    if header.key != key || body.len() != header.body_len {
        return None;
    }
    Some(FetchedPage {
        request_url: header.request_url,
        final_url: header.final_url,
        status: header.status,
        content_type: header.content_type,
        body: body.to_vec(),
        fetched_at: header.fetched_at,
        from_cache: true,
        truncated: header.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(url: &str, body: &[u8]) -> FetchedPage {
        FetchedPage {
            request_url: Url::parse(url).unwrap(),
            final_url: Url::parse(url).unwrap(),
            status: 200,
            content_type: "text/html".into(),
            body: body.to_vec(),
            fetched_at: Utc::now(),
            from_cache: false,
            truncated: false,
        }
    }

    #[test]
    fn round_trip_and_cold_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path()).unwrap();
        let url = Url::parse("https://Example.com/a#frag").unwrap();
        assert!(cache.lookup(&url, None).is_none());
        cache
            .store(&page("https://example.com/a", b"<p>hi</p>"), None)
            .unwrap();
        let hit = cache.lookup(&url, None).unwrap();
        assert_eq!(hit.body, b"<p>hi</p>");
        assert!(hit.from_cache);
        assert!(cache.lookup(&url, Some("20240101000000")).is_none());
    }

    #[test]
    fn layout_uses_two_level_fanout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path()).unwrap();
        let url = Url::parse("https://example.com/a").unwrap();
        let key = PageCache::key(&url, None);
        assert_eq!(key.len(), 64);
        cache
            .store(&page("https://example.com/a", b"x"), None)
            .unwrap();
        assert!(dir
            .path()
            .join(&key[..2])
            .join(&key[2..4])
            .join(format!("{key}.bin"))
            .is_file());
    }

    #[test]
    fn corrupt_entry_is_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path()).unwrap();
        let url = Url::parse("https://example.com/a").unwrap();
        cache
            .store(&page("https://example.com/a", b"body"), None)
            .unwrap();
        let path = cache.path_for(&PageCache::key(&url, None));
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        fs::write(&path, bytes).unwrap();
        assert!(cache.lookup(&url, None).is_none());
        assert!(!path.exists());
    }
}
