//! Reproducibility records written next to every output as `key=value` lines.

use std::fmt::Display;
use std::path::{Path, PathBuf};

#[derive(Debug, Default)]
pub struct RunRecord {
    entries: Vec<(String, String)>,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        let mut record = Self::default();
        record.set("command", command);
        record.set("version", env!("CARGO_PKG_VERSION"));
        record
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn path(&mut self, key: &str, value: &Path) -> &mut Self {
        self.set(key, value.display())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Writes the record to `<output>.run.txt` and returns that path.
    pub fn write_for(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = sidecar_path(output);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".run.txt");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_in_insertion_order_and_overwrites() {
        let mut r = RunRecord::new("sample");
        r.set("seed", 7).set("ratio", 0.25).set("seed", 8);
        let text = r.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "command=sample");
        assert_eq!(&lines[2..], ["seed=8", "ratio=0.25"]);
    }

    #[test]
    fn sidecar_sits_next_to_output() {
        assert_eq!(sidecar_path(Path::new("out/m.bcsm")), PathBuf::from("out/m.bcsm.run.txt"));
    }
}
