//! A principal and its on-disk directory.
//!
//! Layout: `key` (owner-only secret key file), `roots` (canonical root set)
//! and `blessings` (blessing store). Mutations hold an exclusive lock on the
//! directory's `lock` file and replace files atomically.

use crate::credentials::{self_blessing, BlessError, Root, RootSet};
use crate::crypto::{KeyError, KeyPair, SecretKey};
use crate::encoding::{Decode, DecodeError, Encode};
use crate::pattern::BlessingPattern;
use crate::store::{BlessingStore, StoreError};
use chrono::{DateTime, Utc};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const KEY_FILE: &str = "key";
pub const ROOTS_FILE: &str = "roots";
pub const BLESSINGS_FILE: &str = "blessings";
const LOCK_FILE: &str = "lock";

/// Label of the self-blessing created with a new principal.
pub const SELF_LABEL: &str = "self";

#[derive(Debug, Error)]
pub enum PrincipalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} already holds a principal")]
    Exists(PathBuf),
    #[error("key file: {0}")]
    Key(#[from] KeyError),
    #[error("roots file: {0}")]
    Roots(#[from] DecodeError),
    #[error("blessing store: {0}")]
    Store(#[from] StoreError),
    #[error(transparent)]
    Bless(#[from] BlessError),
    #[error("blessing store belongs to a different key")]
    ForeignStore,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PrincipalError + '_ {
    move |source| PrincipalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `data` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, data: &[u8], owner_only: bool) -> Result<(), PrincipalError> {
    let tmp = path.with_extension("tmp");
    let mut opts = OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    if owner_only {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = owner_only;
    let mut f = opts.open(&tmp).map_err(io_err(&tmp))?;
    f.write_all(data).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug)]
pub struct Principal {
    dir: PathBuf,
    pub keys: KeyPair,
    pub roots: RootSet,
    pub store: BlessingStore,
}

/// Exclusive hold on a principal directory, released on drop.
pub struct DirLock(File);

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, PrincipalError> {
        let path = dir.join(LOCK_FILE);
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.lock().map_err(io_err(&path))?;
        Ok(DirLock(f))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl Principal {
    /// Creates a principal in `dir` with a fresh key, a self-blessing named
    /// `name` presentable to anyone, and its own root recognized.
    pub fn create(dir: &Path, name: &str, now: DateTime<Utc>) -> Result<Self, PrincipalError> {
        Self::create_with_key(dir, name, SecretKey::generate(), now)
    }

    pub fn create_with_key(dir: &Path, name: &str, secret: SecretKey, now: DateTime<Utc>) -> Result<Self, PrincipalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let _lock = DirLock::acquire(dir)?;
        if dir.join(KEY_FILE).exists() {
            return Err(PrincipalError::Exists(dir.to_path_buf()));
        }
        let keys = KeyPair::from_secret(secret);
        let me = self_blessing(&keys, name)?;
        let mut roots = RootSet::new();
        roots.add(me.root());
        let mut store = BlessingStore::new(keys.public);
        store.add(me.clone(), BlessingPattern::universal(), SELF_LABEL, now)?;
        store.set_default(Some(me))?;
        let p = Principal {
            dir: dir.to_path_buf(),
            keys,
            roots,
            store,
        };
        write_atomic(&dir.join(KEY_FILE), &p.keys.secret.to_key_file(), true)?;
        p.write_state()?;
        Ok(p)
    }

    pub fn open(dir: &Path) -> Result<Self, PrincipalError> {
        let key_path = dir.join(KEY_FILE);
        let secret = SecretKey::from_key_file(&fs::read(&key_path).map_err(io_err(&key_path))?)?;
        let keys = KeyPair::from_secret(secret);
        let roots_path = dir.join(ROOTS_FILE);
        let roots = RootSet::from_canonical_bytes(&fs::read(&roots_path).map_err(io_err(&roots_path))?)?;
        let store_path = dir.join(BLESSINGS_FILE);
        let store = BlessingStore::from_bytes(&fs::read(&store_path).map_err(io_err(&store_path))?)?;
        if store.owner() != &keys.public {
            return Err(PrincipalError::ForeignStore);
        }
        Ok(Principal {
            dir: dir.to_path_buf(),
            keys,
            roots,
            store,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_state(&self) -> Result<(), PrincipalError> {
        write_atomic(&self.dir.join(ROOTS_FILE), &self.roots.to_canonical_bytes(), false)?;
        write_atomic(&self.dir.join(BLESSINGS_FILE), &self.store.to_bytes(), false)
    }

    /// Applies `f` to the freshest on-disk state under the directory lock,
    /// persists the result, and refreshes `self`.
    pub fn update<T, F>(&mut self, f: F) -> Result<T, PrincipalError>
    where
        F: FnOnce(&mut Principal) -> Result<T, PrincipalError>,
    {
        let _lock = DirLock::acquire(&self.dir)?;
        let mut fresh = Principal::open(&self.dir)?;
        let out = f(&mut fresh)?;
        fresh.write_state()?;
        *self = fresh;
        Ok(out)
    }

    pub fn add_root(&mut self, root: Root) -> Result<bool, PrincipalError> {
        self.update(|p| Ok(p.roots.add(root)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::bless;

    #[test]
    fn create_open_and_persist() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("alice");
        let now = Utc::now();
        let mut p = Principal::create(&dir, "Alice", now).unwrap();
        assert!(matches!(
            Principal::create(&dir, "Alice", now),
            Err(PrincipalError::Exists(_))
        ));
        let me = p.store.by_label(SELF_LABEL).unwrap().blessing.clone();
        assert_eq!(me.full_name(), "Alice");
        assert!(p.roots.contains(&me.root()));
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = fs::metadata(dir.join(KEY_FILE)).unwrap().permissions().mode();
            assert_eq!(mode & 0o777, 0o600);
        }

        let tv = KeyPair::generate();
        let other = self_blessing(&tv, "TV").unwrap();
        p.add_root(other.root()).unwrap();
        let ext = bless(&p.keys.public, &p.keys.secret, &me, "Laptop", vec![]).unwrap();
        p.update(|p| Ok(p.store.add(ext.clone(), "TV".parse().unwrap(), "laptop", now)?))
            .unwrap();

        let back = Principal::open(&dir).unwrap();
        assert_eq!(back.keys.public, p.keys.public);
        assert_eq!(back.roots, p.roots);
        assert_eq!(back.store, p.store);
        assert_eq!(back.store.entries().len(), 2);
    }
}
