//! JSON-lines logs and scenario output directories.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::ScenarioOutput;

/// Reads one JSON value per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{name}:{}: {e}", i + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::json("jsonl output", e))?;
        w.write_all(b"\n").map_err(|e| Error::io("jsonl output", e))?;
    }
    w.flush().map_err(|e| Error::io("jsonl output", e))
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(items, BufWriter::new(file))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(format!("{}: {key}", path.display()), e.into_inner().to_string())
    })
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json("json output", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `truth.jsonl`, `ego.jsonl`, one `<sensor>.jsonl` per sensor and
/// `map.csv` into `dir`.
pub fn write_scenario(out: &ScenarioOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl_file(&dir.join("truth.jsonl"), &out.truth)?;
    write_jsonl_file(&dir.join("ego.jsonl"), &out.ego)?;
    for (sensor, frames) in &out.frames {
        write_jsonl_file(&dir.join(format!("{sensor}.jsonl")), frames)?;
    }
    let map_path = dir.join("map.csv");
    let file = File::create(&map_path).map_err(|e| Error::io(&map_path, e))?;
    out.map.write_csv(BufWriter::new(file))
}
