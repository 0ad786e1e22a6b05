//! Flat `key=value` run manifest.

use std::fmt::Display;
use std::path::Path;

use lienn_core::scenario::log::write_atomic;
use lienn_core::Error;

/// Ordered key/value pairs; values are single-line.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value. Newlines become spaces.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string().replace(['\n', '\r'], " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        write_atomic(path, self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replaces_and_flattens() {
        let mut m = Manifest::new();
        m.set("a", 1);
        m.set("b", "x\ny");
        m.set("a", 2);
        assert_eq!(m.render(), "a=2\nb=x y\n");
    }
}
