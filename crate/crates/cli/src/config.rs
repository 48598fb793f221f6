use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// A `--config` file: a flat JSON object whose keys mirror the subcommand's
/// long flags (with `-` replaced by `_`), plus `threads`.
#[derive(Default)]
pub struct ConfigFile {
    pub threads: Option<usize>,
    keys: Map<String, Value>,
    origin: String,
}

impl ConfigFile {
    pub fn read(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let origin = format!("config {}", path.display());
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {origin}: {e}")))?;
        let mut keys: Map<String, Value> =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        let threads = match keys.remove("threads") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| CliError::Usage(format!("{origin}: threads: {e}")))?),
        };
        Ok(Self { threads, keys, origin })
    }

    /// Deserializes the subcommand's arguments; a key that `T` does not have is an error.
    pub fn args<T: DeserializeOwned + Serialize + Default>(&self) -> Result<T, CliError> {
        let Value::Object(known) = serde_json::to_value(T::default()).expect("args serialize") else {
            unreachable!("args are structs")
        };
        if let Some(bad) = self.keys.keys().find(|k| !known.contains_key(*k)) {
            return Err(CliError::Usage(format!("{}: unknown key '{bad}'", self.origin)));
        }
        serde_json::from_value(Value::Object(self.keys.clone())).map_err(|e| CliError::Usage(format!("{}: {e}", self.origin)))
    }
}

/// Fills every `None` field of `$cli` from `$file`; flags win.
macro_rules! prefer_flags {
    ($cli:ident, $file:ident; $($field:ident),* $(,)?) => {
        $( if $cli.$field.is_none() { $cli.$field = $file.$field; } )*
    };
}
pub(crate) use prefer_flags;
