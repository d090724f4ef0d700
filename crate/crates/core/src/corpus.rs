//! Text inputs: line-delimited JSON records and flat `key=value` files.
//!
//! Records are one JSON object per line; blank lines are skipped. Strings
//! use JSON escaping (`\"`, `\\`, `\n`, `\uXXXX`), so a record never spans
//! more than one line.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paramgen::hash_embed;
use crate::types::{CorpusItem, TokenMatrix};

/// A context/response training or evaluation pair. `id` doubles as the
/// response id when responses are embedded from the same file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub context: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcluster: Option<usize>,
}

/// Parses every non-blank line as a `T`. Errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads corpus items and checks that every item has a payload and ids are unique.
pub fn read_items(reader: impl BufRead) -> Result<Vec<CorpusItem>> {
    let items: Vec<CorpusItem> = read_jsonl(reader)?;
    let mut seen = std::collections::HashSet::new();
    for (i, item) in items.iter().enumerate() {
        item.validate().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::Parse { line: i + 1, msg: format!("duplicate id {:?}", item.id) });
        }
    }
    Ok(items)
}

/// Token matrix for an item: supplied vectors win over hashing the text.
pub fn item_tokens(item: &CorpusItem, dim: usize, hash_seed: u64) -> Result<TokenMatrix> {
    match (item.token_matrix(), &item.text) {
        (Some(tokens), _) => {
            let tokens = tokens?;
            crate::error::check_dim(dim, tokens.dim())?;
            Ok(tokens)
        }
        (None, Some(text)) => hash_embed(text, dim, hash_seed),
        (None, None) => Err(Error::InvalidArgument(format!("item {:?} has no payload", item.id))),
    }
}

/// Hash-embeds both sides of every pair.
pub fn embed_pairs(pairs: &[PairRecord], dim: usize, hash_seed: u64) -> Result<Vec<(TokenMatrix, TokenMatrix)>> {
    pairs
        .iter()
        .map(|p| Ok((hash_embed(&p.context, dim, hash_seed)?, hash_embed(&p.response, dim, hash_seed)?)))
        .collect()
}

/// Parses `key=value` lines. `#` starts a comment; blank lines are ignored;
/// keys and values are trimmed.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_pairs_with_line_numbers() {
        let text = "{\"id\":\"a\",\"context\":\"hi\",\"response\":\"yo\"}\n\n{\"id\":\"b\"}\n";
        match read_jsonl::<PairRecord>(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(matches!(read_jsonl::<PairRecord>("\n\n".as_bytes()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn escaped_strings_round_trip() {
        let recs = vec![PairRecord {
            id: "q\"1".into(),
            context: "line one\nline \\two".into(),
            response: "ok".into(),
            topic: Some(3),
            subcluster: None,
        }];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(read_jsonl::<PairRecord>(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn items_need_unique_ids() {
        let text = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(read_items(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn supplied_tokens_take_precedence() {
        let item = CorpusItem { id: "a".into(), text: Some("ignored".into()), tokens: Some(vec![vec![1.0, 2.0]]) };
        assert_eq!(item_tokens(&item, 2, 0).unwrap().row(0), &[1.0, 2.0]);
        assert!(item_tokens(&item, 3, 0).is_err());
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# header\nlr = 0.01  # inline\n\nk_ctx=all\n").unwrap();
        assert_eq!(kv, vec![("lr".into(), "0.01".into()), ("k_ctx".into(), "all".into())]);
        assert!(matches!(parse_kv("a=1\nbroken\n"), Err(Error::Parse { line: 2, .. })));
    }
}
