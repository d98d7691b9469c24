//! Directory of capsule files indexed by id.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Capsule, CapsuleError};

#[derive(Debug, Clone)]
pub struct CapsuleStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl CapsuleStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `None` for anything that is not a capsule id.
    pub fn path_for(&self, id: &str) -> Option<PathBuf> {
        valid_id(id).then(|| self.dir.join(format!("{id}.capsule.json")))
    }

    /// Write the capsule; a file already present under the id is left as is.
    pub fn put(&self, capsule: &Capsule) -> Result<PathBuf, CapsuleError> {
        fs::create_dir_all(&self.dir)?;
        let path = self
            .path_for(&capsule.capsule_id)
            .ok_or_else(|| CapsuleError::Malformed(format!("bad capsule id {:?}", capsule.capsule_id)))?;
        if !path.exists() {
            let tmp = self.dir.join(format!(".{}.tmp", capsule.capsule_id));
            fs::write(&tmp, capsule.to_bytes())?;
            fs::rename(&tmp, &path)?;
        }
        Ok(path)
    }

    pub fn get_bytes(&self, id: &str) -> Result<Option<Vec<u8>>, CapsuleError> {
        let Some(path) = self.path_for(id) else {
            return Ok(None);
        };
        match fs::read(path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get(&self, id: &str) -> Result<Option<Capsule>, CapsuleError> {
        self.get_bytes(id)?.map(|b| Capsule::from_bytes(&b)).transpose()
    }

    /// Ids of stored capsules, sorted.
    pub fn list(&self) -> Result<Vec<String>, CapsuleError> {
        let mut ids = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".capsule.json").filter(|id| valid_id(id)) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }
}
