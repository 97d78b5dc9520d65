//! Flat-file formats: a small query spec text format and one CSV per relation.
//!
//! A query file looks like
//!
//! ```text
//! # matrix query
//! attributes: A, B, C
//! relations: [A, B], [B, C]
//! output: A, C
//! ```
//!
//! Relation `{A, B}` lives in `A_B.csv`, whose first line names the columns.

use crate::error::{Error, Result};
use crate::model::{Instance, InstanceBuilder, QuerySpec};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

/// File name holding the relation with schema `schema`.
pub fn relation_file_name(schema: &[String]) -> String {
    format!("{}.csv", schema.join("_"))
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn parse_relations(s: &str, file: &str, line: usize) -> Result<Vec<Vec<String>>> {
    let err = |message: String| Error::Parse { file: file.into(), line, message };
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let body = rest.strip_prefix('[').ok_or_else(|| err(format!("expected `[` at `{rest}`")))?;
        let end = body.find(']').ok_or_else(|| err("unclosed `[`".into()))?;
        out.push(split_list(&body[..end]));
        rest = body[end + 1..].trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(out)
}

/// Parses the query spec text format. `file` only labels error messages.
pub fn parse_query(text: &str, file: &str) -> Result<QuerySpec> {
    let (mut attributes, mut relations, mut output) = (None, None, None);
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { file: file.into(), line, message };
        let (key, value) = content.split_once(':').ok_or_else(|| err(format!("expected `key: value`, got `{content}`")))?;
        let slot = match key.trim() {
            "attributes" => &mut attributes,
            "relations" => &mut relations,
            "output" => &mut output,
            other => return Err(err(format!("unknown key `{other}`"))),
        };
        if slot.is_some() {
            return Err(err(format!("key `{}` given twice", key.trim())));
        }
        *slot = Some((line, value.to_string()));
    }
    let missing = |k: &str| Error::Parse { file: file.into(), line: last_line, message: format!("missing key `{k}`") };
    let (rl, rv) = relations.ok_or_else(|| missing("relations"))?;
    let (ol, ov) = output.ok_or_else(|| missing("output"))?;
    let schemas = parse_relations(&rv, file, rl)?;
    let spec = QuerySpec::new(schemas, split_list(&ov))
        .map_err(|e| Error::Parse { file: file.into(), line: ol, message: e.to_string() })?;
    if let Some((al, av)) = attributes {
        let listed: BTreeSet<String> = split_list(&av).into_iter().collect();
        let used: BTreeSet<String> = spec.attributes.iter().cloned().collect();
        if listed != used {
            return Err(Error::Parse {
                file: file.into(),
                line: al,
                message: format!("attributes {listed:?} differ from those used by relations {used:?}"),
            });
        }
    }
    Ok(spec)
}

pub fn render_query(spec: &QuerySpec) -> String {
    let rels: Vec<String> = spec.schemas.iter().map(|e| format!("[{}]", e.join(", "))).collect();
    format!(
        "attributes: {}\nrelations: {}\noutput: {}\n",
        spec.attributes.join(", "),
        rels.join(", "),
        spec.output.join(", ")
    )
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn read_query(path: &Path) -> Result<QuerySpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_query(&text, &path.display().to_string())
}

/// Reads one CSV per relation of `spec` from `dir` and validates the result.
/// With `dedup`, repeated rows are dropped instead of rejected.
pub fn ingest(dir: &Path, spec: &QuerySpec, dedup: bool) -> Result<Instance> {
    let mut ib = InstanceBuilder::new();
    for schema in &spec.schemas {
        let path = dir.join(relation_file_name(schema));
        let reader = csv_builder().from_path(&path).map_err(|e| io_err(&path, e))?;
        read_relation(&mut ib, schema, reader, &path.display().to_string())?;
    }
    finish(ib, spec, dedup)
}

/// Like [`ingest`], but takes the CSV contents directly. Each block must start
/// with a header row; blocks are matched to relations by their attribute set.
pub fn ingest_text(spec: &QuerySpec, blocks: &[&str], dedup: bool) -> Result<Instance> {
    let headers = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut r = csv_builder().from_reader(b.as_bytes());
            let h = r
                .headers()
                .map_err(|e| Error::Parse { file: block_name(i), line: 1, message: e.to_string() })?;
            Ok(h.iter().map(String::from).collect::<BTreeSet<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ib = InstanceBuilder::new();
    for schema in &spec.schemas {
        let want: BTreeSet<String> = schema.iter().cloned().collect();
        let i = headers.iter().position(|h| *h == want).ok_or_else(|| Error::Parse {
            file: relation_file_name(schema),
            line: 1,
            message: format!("no CSV block with header {schema:?}"),
        })?;
        let reader = csv_builder().from_reader(blocks[i].as_bytes());
        read_relation(&mut ib, schema, reader, &block_name(i))?;
    }
    finish(ib, spec, dedup)
}

fn block_name(i: usize) -> String {
    format!("block {}", i + 1)
}

fn csv_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(true).trim(csv::Trim::All);
    b
}

fn read_relation<R: std::io::Read>(
    ib: &mut InstanceBuilder,
    schema: &[String],
    mut reader: csv::Reader<R>,
    file: &str,
) -> Result<()> {
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { file: file.to_string(), line: 1, message: e.to_string() })?
        .iter()
        .map(String::from)
        .collect();
    let same = header.len() == schema.len()
        && header.iter().collect::<BTreeSet<_>>() == schema.iter().collect::<BTreeSet<_>>();
    if !same {
        return Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("header {header:?} does not match schema {schema:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { file: file.to_string(), line, message: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                file: file.to_string(),
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(rec.iter().map(|v| ib.intern(v)).collect());
    }
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    ib.push(&cols, rows);
    Ok(())
}

fn finish(ib: InstanceBuilder, spec: &QuerySpec, dedup: bool) -> Result<Instance> {
    let mut inst = ib.build();
    if dedup {
        let rels = inst.relations().iter().map(|r| r.deduplicated()).collect();
        inst = Instance::new(rels, inst.dictionary().clone());
    }
    crate::model::validate_instance(&inst, spec).map_err(Error::Validation)?;
    Ok(inst)
}

/// Writes `query.txt` plus one CSV per relation into `dir`.
pub fn write_dataset(dir: &Path, spec: &QuerySpec, inst: &Instance) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let qpath = dir.join("query.txt");
    fs::write(&qpath, render_query(spec)).map_err(|e| io_err(&qpath, e))?;
    for rel in inst.relations() {
        let path = dir.join(relation_file_name(rel.schema()));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(rel.schema()).map_err(|e| io_err(&path, e))?;
        for row in rel.rows() {
            w.write_record(row.iter().map(|&v| inst.dictionary().name(v))).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}
