//! Run manifests: what produced an output file and from which inputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensorstore::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every parameter in effect, defaults included.
    pub params: BTreeMap<String, Value>,
    pub inputs: Vec<InputDigest>,
    pub tool_version: String,
    pub format_version: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            params: BTreeMap::new(),
            inputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            format_version: crate::FORMAT_VERSION.into(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            warnings: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.params.insert(key.into(), value.into());
        self
    }

    /// Records an input file together with its content digest. Inputs that
    /// come with a `.meta.json` sidecar get that digested too.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: sha256_file(path)? });
        let side = crate::tensorstore::sidecar_path(path);
        if side != path && side.exists() {
            self.inputs.push(InputDigest { path: side.display().to_string(), sha256: sha256_file(&side)? });
        }
        Ok(self)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    /// `out.csv` → `out.csv.run.json`; a directory gets `run_manifest.json` inside.
    pub fn path_for(output: &Path) -> PathBuf {
        if output.is_dir() {
            output.join("run_manifest.json")
        } else {
            let mut s = output.as_os_str().to_owned();
            s.push(".run.json");
            PathBuf::from(s)
        }
    }

    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        write_json(&path, self)?;
        Ok(path)
    }
}
