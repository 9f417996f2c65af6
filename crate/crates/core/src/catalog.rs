//! DNN catalog files: a JSON array of [`DnnProfile`] records.
//!
//! ```json
//! [
//!   {
//!     "id": "inc-v1@imagenet",
//!     "param_count": 6.6,
//!     "flops": 13.22,
//!     "batching_points": [[1, 118.66], [32, 125.67]],
//!     "mt_points": [[1, 118.66], [8, 237.28]],
//!     "sigma": 0.05,
//!     "u1": 0.0236
//!   }
//! ]
//! ```
//!
//! `sigma` and `u1` are optional. Unknown fields are rejected.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::domain::DnnProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    profiles: Vec<DnnProfile>,
}

impl Catalog {
    pub fn new(profiles: Vec<DnnProfile>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &profiles {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::InvalidProfile {
                    id: p.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Catalog { profiles })
    }

    pub fn from_json_str(s: &str, origin: &Path) -> Result<Self> {
        let profiles: Vec<DnnProfile> = serde_json::from_str(s).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        Catalog::new(profiles)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Catalog::from_json_str(&text, path)
    }

    pub fn get(&self, id: &str) -> Result<&DnnProfile> {
        self.profiles
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::UnknownDnn(id.to_string()))
    }

    pub fn profiles(&self) -> &[DnnProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.profiles).expect("profiles serialize")
    }
}
