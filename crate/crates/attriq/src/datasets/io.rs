use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::models::{Instance, Vocabulary};
use crate::tableexec::{Answer, Cell, Program, Table};

use super::{build_vocab, extend_vocab, Dataset, DatasetError, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// One instance JSON object per line.
    Jsonl,
    /// A CSV file with header `id,question,table,answer[,program]`; `table`
    /// names a `.json` or `.csv` table file relative to the CSV's directory
    /// and list answers are separated by `|`.
    CsvTables,
}

/// What happens to tokens missing from a supplied vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TokenPolicy {
    /// Add them (before training).
    #[default]
    Extend,
    /// Keep the vocabulary fixed; models map them to UNK at lookup.
    MapToUnk,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> DatasetError {
    DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Parses newline-delimited JSON, skipping blank lines. `path` only labels
/// errors.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e)))
        .collect()
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    parse_jsonl(&fs::read_to_string(path).map_err(io_err(path))?, path)
}

/// Newline-terminated JSON lines.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String, DatasetError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `items` as JSON lines, creating parent directories.
pub fn save_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), DatasetError> {
    write(path, &to_jsonl(items)?)
}

/// Writes one pretty-printed JSON document, creating parent directories.
pub fn save_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), DatasetError> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Persists reports: JSON lines when `path` ends in `.jsonl`, otherwise a
/// JSON array.
pub fn save_report<T: Serialize>(reports: &[T], path: &Path) -> Result<(), DatasetError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        save_jsonl(reports, path)
    } else {
        save_json(reports, path)
    }
}

fn load_table(path: &Path) -> Result<Table, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(Table::from_csv(text.as_bytes())?)
    } else {
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
    }
}

fn load_csv_tables(path: &Path) -> Result<Vec<Instance>, DatasetError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_c), Some(q_c), Some(t_c), Some(a_c)) = (col("id"), col("question"), col("table"), col("answer"))
    else {
        return Err(parse_err(path, 1, "header must contain id, question, table, answer"));
    };
    let p_c = col("program");
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let answer = field(a_c);
        if answer.is_empty() {
            return Err(parse_err(path, line, "missing gold answer"));
        }
        let table_path: PathBuf = dir.join(field(t_c));
        let table = load_table(&table_path).map_err(|e| parse_err(path, line, e))?;
        let mut inst = Instance::new(
            field(id_c),
            Instance::tokenize(field(q_c)),
            Answer::List(answer.split('|').map(|s| Cell::parse(s.trim())).collect()),
        );
        inst.table = Some(table);
        if let Some(p) = p_c.map(field).filter(|p| !p.is_empty()) {
            let program: Program = serde_json::from_str(p).map_err(|e| parse_err(path, line, e))?;
            inst.gold_program = Some(program);
        }
        out.push(inst);
    }
    Ok(out)
}

/// Loads a dataset. With [`TokenPolicy::Extend`] the vocabulary is `base`
/// (or empty) extended by every new token; with [`TokenPolicy::MapToUnk`] it
/// is `base` unchanged.
pub fn load_dataset(
    path: &Path,
    format: Format,
    policy: TokenPolicy,
    base: Option<&Vocabulary>,
) -> Result<Dataset, DatasetError> {
    let instances: Vec<Instance> = match format {
        Format::Jsonl => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let mut out = Vec::new();
            for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let inst: Instance = serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e))?;
                inst.validate().map_err(|e| parse_err(path, i + 1, e))?;
                out.push(inst);
            }
            out
        }
        Format::CsvTables => load_csv_tables(path)?,
    };
    let vocab = match (policy, base) {
        (TokenPolicy::Extend, Some(b)) => {
            let mut v = b.clone();
            extend_vocab(&mut v, &instances);
            v
        }
        (TokenPolicy::Extend, None) => build_vocab(&instances),
        (TokenPolicy::MapToUnk, Some(b)) => b.clone(),
        (TokenPolicy::MapToUnk, None) => Vocabulary::new(),
    };
    Ok(Dataset {
        instances,
        vocab,
        provenance: Provenance::File {
            path: path.display().to_string(),
        },
    })
}
