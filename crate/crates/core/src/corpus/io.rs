use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnnotatedMessage, Corpus, Dimension, LabelVector};
use crate::error::{Error, Result};
use crate::features::{FeatureName, FeatureVector};

/// On-disk corpus formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::Invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// Corpus metadata lives next to the data file as `<file>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let messages = match format {
        CorpusFormat::Jsonl => parse_jsonl(&raw, &file)?,
        CorpusFormat::Csv => parse_csv(&raw, &file)?,
    };
    let mut corpus = Corpus {
        messages,
        meta: BTreeMap::new(),
    };
    let meta = meta_path(path);
    if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        corpus.meta = serde_json::from_str(&text)?;
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let body = match format {
        CorpusFormat::Jsonl => render_jsonl(corpus)?,
        CorpusFormat::Csv => render_csv(corpus)?,
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    if corpus.meta.is_empty() {
        if meta.exists() {
            fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?;
        }
    } else {
        let text = serde_json::to_string_pretty(&corpus.meta)?;
        fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    }
    Ok(())
}

fn check_record(m: &AnnotatedMessage, seen: &mut HashSet<String>, file: &str, line: usize) -> Result<()> {
    if m.text.trim().is_empty() {
        return Err(Error::parse(file, line, "text is empty"));
    }
    if !seen.insert(m.id.clone()) {
        return Err(Error::DuplicateId(m.id.clone()));
    }
    Ok(())
}

fn parse_jsonl(raw: &str, file: &str) -> Result<Vec<AnnotatedMessage>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: AnnotatedMessage = serde_json::from_str(line).map_err(|e| Error::parse(file, i + 1, e.to_string()))?;
        check_record(&m, &mut seen, file, i + 1)?;
        out.push(m);
    }
    Ok(out)
}

fn render_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for m in &corpus.messages {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    Ok(out)
}

/// Drops spaces that sit outside quoted fields, so rows typed as
/// `Student A, "some text", 1, 0` parse like their tight RFC-4180 form.
fn tighten_csv(raw: &str) -> String {
    #[derive(Clone, Copy)]
    enum State {
        FieldStart,
        Unquoted,
        Quoted,
        QuoteSeen,
    }

    let mut out = String::with_capacity(raw.len());
    let mut pending = String::new();
    let mut state = State::FieldStart;
    for c in raw.chars() {
        state = match state {
            State::FieldStart => match c {
                ' ' | '\t' => State::FieldStart,
                '"' => {
                    out.push(c);
                    State::Quoted
                }
                ',' | '\n' | '\r' => {
                    out.push(c);
                    State::FieldStart
                }
                _ => {
                    out.push(c);
                    State::Unquoted
                }
            },
            State::Unquoted => match c {
                ' ' | '\t' => {
                    pending.push(c);
                    State::Unquoted
                }
                ',' | '\n' | '\r' => {
                    pending.clear();
                    out.push(c);
                    State::FieldStart
                }
                _ => {
                    out.push_str(&pending);
                    pending.clear();
                    out.push(c);
                    State::Unquoted
                }
            },
            State::Quoted => {
                out.push(c);
                if c == '"' {
                    State::QuoteSeen
                } else {
                    State::Quoted
                }
            }
            State::QuoteSeen => match c {
                '"' => {
                    out.push(c);
                    State::Quoted
                }
                ' ' | '\t' => State::QuoteSeen,
                ',' | '\n' | '\r' => {
                    out.push(c);
                    State::FieldStart
                }
                _ => {
                    out.push(c);
                    State::Unquoted
                }
            },
        };
    }
    out
}

fn parse_bit(cell: &str, column: &str, file: &str, line: usize) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::parse(
            file,
            line,
            format!("column {column}: expected 0 or 1, got `{other}`"),
        )),
    }
}

fn parse_csv(raw: &str, file: &str) -> Result<Vec<AnnotatedMessage>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let tight = tighten_csv(raw);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(tight.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(file, 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));

    let text_col = col("text").ok_or_else(|| Error::MissingColumn("text".into()))?;
    let mut label_cols = [0usize; 4];
    for dim in Dimension::ALL {
        label_cols[dim.index()] = col(dim.code()).ok_or_else(|| Error::MissingColumn(dim.code().into()))?;
    }
    let b_cols: Vec<Option<usize>> = Dimension::ALL.iter().map(|d| col(&format!("{}_b", d.code()))).collect();
    let has_b = b_cols.iter().any(Option::is_some);
    if has_b && b_cols.iter().any(Option::is_none) {
        return Err(Error::MissingColumn("second-annotator label column".into()));
    }
    let feature_cols: Vec<Option<usize>> = FeatureName::ALL.iter().map(|f| col(f.code())).collect();
    let has_features = feature_cols.iter().all(Option::is_some);
    let id_col = col("id");
    let team_col = col("team_id");
    let user_col = col("user");

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(row + 2);
            Error::parse(file, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let cell = |i: usize| record.get(i).unwrap_or("");

        let mut bits = [0u8; 4];
        for dim in Dimension::ALL {
            bits[dim.index()] = parse_bit(cell(label_cols[dim.index()]), dim.code(), file, line)?;
        }
        let labels_b = if has_b {
            let cells: Vec<&str> = b_cols.iter().map(|c| cell(c.unwrap()).trim()).collect();
            if cells.iter().all(|c| c.is_empty()) {
                None
            } else {
                let mut b = [0u8; 4];
                for dim in Dimension::ALL {
                    let name = format!("{}_b", dim.code());
                    b[dim.index()] = parse_bit(cells[dim.index()], &name, file, line)?;
                }
                Some(LabelVector::from_bits(b)?)
            }
        } else {
            None
        };
        let features = if has_features {
            let cells: Vec<&str> = feature_cols.iter().map(|c| cell(c.unwrap()).trim()).collect();
            if cells.iter().all(|c| c.is_empty()) {
                None
            } else {
                let mut fv = FeatureVector::default();
                for (f, c) in FeatureName::ALL.iter().zip(&cells) {
                    fv.set(*f, parse_bit(c, f.code(), file, line)? == 1);
                }
                Some(fv)
            }
        } else {
            None
        };

        let m = AnnotatedMessage {
            id: id_col
                .map(|c| cell(c).to_string())
                .unwrap_or_else(|| format!("row-{}", row + 1)),
            team_id: team_col.map(|c| cell(c).to_string()).unwrap_or_default(),
            user: user_col.map(|c| cell(c).to_string()).unwrap_or_default(),
            text: cell(text_col).to_string(),
            labels: LabelVector::from_bits(bits)?,
            labels_b,
            features,
        };
        check_record(&m, &mut seen, file, line)?;
        out.push(m);
    }
    Ok(out)
}

fn render_csv(corpus: &Corpus) -> Result<String> {
    let has_b = corpus.messages.iter().any(|m| m.labels_b.is_some());
    let has_features = corpus.messages.iter().any(|m| m.features.is_some());
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());

    let mut header: Vec<String> = ["id", "team_id", "user", "text"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(Dimension::ALL.iter().map(|d| d.code().to_string()));
    if has_b {
        header.extend(Dimension::ALL.iter().map(|d| format!("{}_b", d.code())));
    }
    if has_features {
        header.extend(FeatureName::ALL.iter().map(|f| f.code().to_string()));
    }
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv write failed: {e}"));
    writer.write_record(&header).map_err(csv_err)?;

    for m in &corpus.messages {
        let mut row = vec![m.id.clone(), m.team_id.clone(), m.user.clone(), m.text.clone()];
        row.extend(m.labels.bits().iter().map(|b| b.to_string()));
        if has_b {
            match m.labels_b {
                Some(b) => row.extend(b.bits().iter().map(|b| b.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        if has_features {
            match m.features {
                Some(fv) => row.extend(FeatureName::ALL.iter().map(|f| u8::from(fv.get(*f)).to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), FeatureName::ALL.len())),
            }
        }
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Invalid(format!("csv write failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}
