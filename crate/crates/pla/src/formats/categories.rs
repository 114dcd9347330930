//! Category partitions (`name<TAB>base|novel`) and entity lexicons (one
//! phrase per line).

use std::path::Path;

use pla_core::association::Lexicon;
use pla_core::text::CategoryList;

use super::{read_text, write_bytes};
use crate::error::{Error, Result};

pub fn parse_partition(path: &Path, text: &str) -> Result<CategoryList> {
    let mut names = Vec::new();
    let mut base = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, kind) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `name<TAB>base|novel`"))?;
        base.push(match kind.trim() {
            "base" => true,
            "novel" => false,
            other => return Err(Error::parse(path, i + 1, format!("unknown partition `{other}`"))),
        });
        names.push(name.trim().to_string());
    }
    CategoryList::new(names, base).map_err(|e| Error::parse(path, 0, e))
}

pub fn load_partition(path: &Path) -> Result<CategoryList> {
    parse_partition(path, &read_text(path)?)
}

pub fn format_partition(categories: &CategoryList) -> String {
    let mut out = String::new();
    for (k, name) in categories.names().iter().enumerate() {
        out.push_str(&format!("{name}\t{}\n", if categories.is_base(k) { "base" } else { "novel" }));
    }
    out
}

pub fn save_partition(path: &Path, categories: &CategoryList) -> Result<()> {
    write_bytes(path, format_partition(categories).as_bytes())
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = read_text(path)?;
    let lexicon = Lexicon::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')));
    if lexicon.is_empty() {
        return Err(Error::parse(path, 0, "lexicon is empty"));
    }
    Ok(lexicon)
}

pub fn save_lexicon(path: &Path, lexicon: &Lexicon) -> Result<()> {
    let mut out: Vec<String> = lexicon.entries().collect();
    out.sort();
    write_bytes(path, (out.join("\n") + "\n").as_bytes())
}
