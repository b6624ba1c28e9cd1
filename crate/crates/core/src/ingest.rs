//! Dataset and report files.
//!
//! JSONL: first line `{"dim": N, "factors": {"NAME": ["value", ...], ...}}`,
//! then one record per line, `{"id": 0, "vector": [...], "labels": {...},
//! "text": "..."}`. A string label is a content value, an integer label an
//! occurrence count.
//!
//! CSV: header `id,z0,..,z{N-1},FACTOR,...`; a blank factor cell means the
//! sample is unannotated for that factor.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::dataset::{Factor, FactorSchema, Label, LatentDataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::report::{ConfigEntry, MetricReport, MetricValue, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(DataFormat::Jsonl),
            Some("csv") => Ok(DataFormat::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer format of {}; pass --format",
                path.display()
            ))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            _ => Err(Error::InvalidArgument(format!("unknown data format {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Loads by extension (`.jsonl`/`.json` or `.csv`).
pub fn load_dataset(path: &Path, format: Option<DataFormat>, schema: Option<&FactorSchema>) -> Result<(FactorSchema, LatentDataset)> {
    match format.map_or_else(|| DataFormat::from_path(path), Ok)? {
        DataFormat::Jsonl => load_jsonl(path),
        DataFormat::Csv => match schema {
            Some(s) => load_csv_with_schema(path, s),
            None => load_csv(path),
        },
    }
}

pub fn save_dataset(path: &Path, format: DataFormat, schema: &FactorSchema, ds: &LatentDataset) -> Result<()> {
    match format {
        DataFormat::Jsonl => save_jsonl(path, schema, ds),
        DataFormat::Csv => save_csv(path, schema, ds),
    }
}

fn schema_from_json(v: &Value, line: usize) -> Result<FactorSchema> {
    let obj = v
        .as_object()
        .ok_or_else(|| parse_err(line, "\"factors\" must be an object"))?;
    let mut factors = Vec::new();
    for (name, vals) in obj {
        let vals = vals
            .as_array()
            .ok_or_else(|| parse_err(line, format!("values of factor {name} must be an array")))?;
        let vals: Vec<String> = vals
            .iter()
            .map(|x| {
                x.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(line, format!("values of factor {name} must be strings")))
            })
            .collect::<Result<_>>()?;
        factors.push(Factor::new(name.clone(), vals));
    }
    FactorSchema::new(factors)
}

fn schema_to_json(schema: &FactorSchema) -> Value {
    let mut m = Map::new();
    for f in schema.factors() {
        m.insert(f.name.clone(), json!(f.values));
    }
    Value::Object(m)
}

/// Reads a standalone schema: either a JSON object `{"factors": {...}}` or a
/// JSONL dataset whose header is used.
pub fn load_schema(path: &Path) -> Result<FactorSchema> {
    let mut first = String::new();
    BufReader::new(open(path)?)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let text = if path.extension().is_some_and(|e| e == "jsonl") {
        first
    } else {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| parse_err(1, e.to_string()))?;
    let factors = v.get("factors").ok_or_else(|| parse_err(1, "missing \"factors\""))?;
    schema_from_json(factors, 1)
}

pub fn save_schema(path: &Path, schema: &FactorSchema) -> Result<()> {
    let mut w = create(path)?;
    let v = json!({ "factors": schema_to_json(schema) });
    writeln!(w, "{}", serde_json::to_string_pretty(&v).expect("json value")).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_label(v: &Value, line: usize, factor: &str) -> Result<Label> {
    match v {
        Value::String(s) => Ok(Label::Value(s.clone())),
        Value::Number(n) => n
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .map(Label::Count)
            .ok_or_else(|| parse_err(line, format!("count for {factor} must be a non-negative integer"))),
        _ => Err(parse_err(line, format!("label for {factor} must be a string or a count"))),
    }
}

pub fn load_jsonl(path: &Path) -> Result<(FactorSchema, LatentDataset)> {
    let reader = BufReader::new(open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let header: Value = serde_json::from_str(&header).map_err(|e| parse_err(1, e.to_string()))?;
    let dim = header
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| parse_err(1, "header needs a positive integer \"dim\""))? as usize;
    let schema = schema_from_json(
        header.get("factors").ok_or_else(|| parse_err(1, "header needs \"factors\""))?,
        1,
    )?;

    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let id = rec
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err(lineno, "record needs a non-negative integer \"id\""))?;
        let vector: Vec<f64> = rec
            .get("vector")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(lineno, "record needs a \"vector\" array"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| parse_err(lineno, "vector components must be numbers")))
            .collect::<Result<_>>()?;
        if vector.len() != dim {
            return Err(parse_err(
                lineno,
                format!("vector has {} components, header declares dim {dim}", vector.len()),
            ));
        }
        let mut sample = Sample::new(id, vector);
        if let Some(labels) = rec.get("labels") {
            let labels = labels
                .as_object()
                .ok_or_else(|| parse_err(lineno, "\"labels\" must be an object"))?;
            for (k, v) in labels {
                let label = parse_label(v, lineno, k)?;
                check_label(&schema, k, &label).map_err(|m| parse_err(lineno, m))?;
                sample.labels.insert(k.clone(), label);
            }
        }
        match rec.get("text") {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => sample.text = Some(s.clone()),
            Some(_) => return Err(parse_err(lineno, "\"text\" must be a string")),
        }
        samples.push(sample);
    }
    let ds = LatentDataset::new(&schema, dim, samples)?;
    Ok((schema, ds))
}

fn check_label(schema: &FactorSchema, factor: &str, label: &Label) -> std::result::Result<(), String> {
    let f = schema
        .factor(factor)
        .ok_or_else(|| format!("label for unknown factor {factor}"))?;
    if let Label::Value(v) = label {
        if f.value_index(v).is_none() {
            return Err(format!("value {v:?} is not in the vocabulary of {factor}"));
        }
    }
    Ok(())
}

fn label_json(l: &Label) -> Value {
    match l {
        Label::Value(s) => json!(s),
        Label::Count(n) => json!(n),
    }
}

pub fn save_jsonl(path: &Path, schema: &FactorSchema, ds: &LatentDataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let header = json!({ "dim": ds.dim(), "factors": schema_to_json(schema) });
    writeln!(w, "{header}").map_err(io)?;
    for s in ds.samples() {
        let mut rec = Map::new();
        rec.insert("id".into(), json!(s.id));
        rec.insert("vector".into(), json!(s.vector));
        let labels: Map<String, Value> = s.labels.iter().map(|(k, l)| (k.clone(), label_json(l))).collect();
        rec.insert("labels".into(), Value::Object(labels));
        if let Some(t) = &s.text {
            rec.insert("text".into(), json!(t));
        }
        writeln!(w, "{}", Value::Object(rec)).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct CsvTable {
    dim: usize,
    factors: Vec<String>,
    /// (line, id, vector, raw factor cells)
    rows: Vec<(usize, u64, Vec<f64>, Vec<String>)>,
}

fn read_csv_table(path: &Path) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(open(path)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(parse_err(1, "first column must be \"id\""));
    }
    let dim = header[1..]
        .iter()
        .enumerate()
        .take_while(|(i, h)| **h == format!("z{i}"))
        .count();
    if dim == 0 {
        return Err(parse_err(1, "no latent columns z0..z{dim-1}"));
    }
    let factors = header[1 + dim..].to_vec();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("row has {} cells, header has {}", rec.len(), header.len()),
            ));
        }
        let id: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("id {:?} is not a non-negative integer", &rec[0])))?;
        let vector: Vec<f64> = (1..=dim)
            .map(|c| {
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(line, format!("latent cell {:?} is not numeric", &rec[c])))
            })
            .collect::<Result<_>>()?;
        let cells = (1 + dim..rec.len()).map(|c| rec[c].to_string()).collect();
        rows.push((line, id, vector, cells));
    }
    Ok(CsvTable { dim, factors, rows })
}

/// Loads a CSV dataset, inferring the schema: a factor column whose non-blank
/// cells are all non-negative integers holds counts; otherwise its vocabulary
/// is the distinct values in order of first appearance.
pub fn load_csv(path: &Path) -> Result<(FactorSchema, LatentDataset)> {
    let table = read_csv_table(path)?;
    let mut factors = Vec::new();
    for (k, name) in table.factors.iter().enumerate() {
        let cells: Vec<&str> = table
            .rows
            .iter()
            .map(|r| r.3[k].as_str())
            .filter(|c| !c.is_empty())
            .collect();
        let counts = !cells.is_empty() && cells.iter().all(|c| c.parse::<u32>().is_ok());
        let mut values: Vec<String> = Vec::new();
        if counts {
            values.push("present".into());
        } else {
            for c in cells {
                if !values.iter().any(|v| v == c) {
                    values.push(c.to_string());
                }
            }
            if values.is_empty() {
                values.push("present".into());
            }
        }
        factors.push(Factor::new(name.clone(), values));
    }
    let schema = FactorSchema::new(factors)?;
    let ds = csv_to_dataset(table, &schema)?;
    Ok((schema, ds))
}

/// Loads a CSV dataset against a known schema: a cell in the factor's
/// vocabulary is a content value, an integer cell outside it a count.
pub fn load_csv_with_schema(path: &Path, schema: &FactorSchema) -> Result<(FactorSchema, LatentDataset)> {
    let table = read_csv_table(path)?;
    let ds = csv_to_dataset(table, schema)?;
    Ok((schema.clone(), ds))
}


fn csv_to_dataset(table: CsvTable, schema: &FactorSchema) -> Result<LatentDataset> {
    for name in &table.factors {
        if schema.factor(name).is_none() {
            return Err(Error::Schema(format!("column {name} is not a factor of the schema")));
        }
    }
    let mut samples = Vec::with_capacity(table.rows.len());
    for (line, id, vector, cells) in table.rows {
        let mut s = Sample::new(id, vector);
        for (name, cell) in table.factors.iter().zip(cells) {
            if cell.is_empty() {
                continue;
            }
            let f = schema.factor(name).expect("checked above");
            let label = if f.value_index(&cell).is_some() {
                Label::Value(cell)
            } else if let Ok(n) = cell.parse::<u32>() {
                Label::Count(n)
            } else {
                return Err(parse_err(line, format!("value {cell:?} is not in the vocabulary of {name}")));
            };
            s.labels.insert(name.clone(), label);
        }
        samples.push(s);
    }
    LatentDataset::new(schema, table.dim, samples)
}

/// Writes CSV; sample text is not representable and is dropped. Counts are
/// written as integers, which only reload as counts if they are not also
/// vocabulary entries.
pub fn save_csv(path: &Path, schema: &FactorSchema, ds: &LatentDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::Data(format!("writing {}: {e}", path.display()));
    let mut header = vec!["id".to_string()];
    header.extend((0..ds.dim()).map(|d| format!("z{d}")));
    header.extend(schema.names().map(str::to_string));
    w.write_record(&header).map_err(csv_err)?;
    for s in ds.samples() {
        let mut row = vec![s.id.to_string()];
        row.extend(s.vector.iter().map(|x| format!("{x:?}")));
        for name in schema.names() {
            row.push(match s.labels.get(name) {
                None => String::new(),
                Some(Label::Value(v)) => v.clone(),
                Some(Label::Count(n)) => n.to_string(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rounds to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn rounded(report: &MetricReport) -> MetricReport {
    let mut r = report.clone();
    r.metrics.iter_mut().for_each(|m| m.value = round6(m.value));
    r.tables
        .iter_mut()
        .flat_map(|t| t.values.iter_mut().flatten())
        .for_each(|v| *v = round6(*v));
    r
}

/// JSON or CSV with values rounded to 6 significant digits. Field order is
/// insertion order, which the metric pipeline fixes.
pub fn save_report(report: &MetricReport, path: &Path, format: ReportFormat) -> Result<()> {
    report.validate()?;
    let text = render_report(report, format);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn render_report(report: &MetricReport, format: ReportFormat) -> String {
    let r = rounded(report);
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut put = |cells: [&str; 5]| w.write_record(cells).expect("in-memory write");
            put(["section", "name", "row", "column", "value"]);
            for m in &r.metrics {
                put(["metric", &m.name, "", "", &m.value.to_string()]);
            }
            for t in &r.tables {
                for (rl, row) in t.row_labels.iter().zip(&t.values) {
                    for (cl, v) in t.column_labels.iter().zip(row) {
                        put(["table", &t.name, rl, cl, &v.to_string()]);
                    }
                }
            }
            for c in &r.config {
                put(["config", &c.key, "", "", &c.value]);
            }
            for m in &r.warnings {
                put(["warning", "", "", "", m]);
            }
            for m in &r.notes {
                put(["note", "", "", "", m]);
            }
            drop(put);
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
        }
    }
}

pub fn load_report(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match ReportFormat::from_path(path) {
        ReportFormat::Json => serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string())),
        ReportFormat::Csv => parse_report_csv(&text),
    }
}

fn parse_report_csv(text: &str) -> Result<MetricReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut report = MetricReport::new();
    // table name -> (row labels, column labels, cells)
    let mut tables: Vec<(String, Vec<String>, Vec<String>, BTreeMap<(usize, usize), f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 5 {
            return Err(parse_err(line, "report rows have 5 cells"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(line, format!("{s:?} is not numeric")));
        match &rec[0] {
            "metric" => report.metrics.push(MetricValue {
                name: rec[1].to_string(),
                value: num(&rec[4])?,
            }),
            "table" => {
                if tables.last().is_none_or(|t| t.0 != rec[1]) {
                    tables.push((rec[1].to_string(), Vec::new(), Vec::new(), BTreeMap::new()));
                }
                let t = tables.last_mut().expect("just pushed");
                let r = t.1.iter().position(|x| x == &rec[2]).unwrap_or_else(|| {
                    t.1.push(rec[2].to_string());
                    t.1.len() - 1
                });
                let c = t.2.iter().position(|x| x == &rec[3]).unwrap_or_else(|| {
                    t.2.push(rec[3].to_string());
                    t.2.len() - 1
                });
                t.3.insert((r, c), num(&rec[4])?);
            }
            "config" => report.config.push(ConfigEntry {
                key: rec[1].to_string(),
                value: rec[4].to_string(),
            }),
            "warning" => report.warnings.push(rec[4].to_string()),
            "note" => report.notes.push(rec[4].to_string()),
            other => return Err(parse_err(line, format!("unknown section {other:?}"))),
        }
    }
    for (name, rows, cols, cells) in tables {
        let values = (0..rows.len())
            .map(|r| {
                (0..cols.len())
                    .map(|c| {
                        cells
                            .get(&(r, c))
                            .copied()
                            .ok_or_else(|| Error::Data(format!("table {name} is missing cell ({r}, {c})")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        report.tables.push(Table {
            name,
            row_labels: rows,
            column_labels: cols,
            values,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.jsonl",
            "{\"dim\":2, \"factors\":{\"V\":[\"is\",\"causes\"]}}\n{\"id\":0,\"vector\":[0.5,-1],\"labels\":{\"V\":\"is\"}}\n",
        );
        let (schema, ds) = load_jsonl(&p).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 2);
        assert_eq!(schema.factor("V").unwrap().values, vec!["is", "causes"]);
    }

    #[test]
    fn wrong_length_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.jsonl",
            "{\"dim\":2,\"factors\":{\"V\":[\"is\"]}}\n{\"id\":0,\"vector\":[1,2]}\n{\"id\":1,\"vector\":[1,2,3]}\n",
        );
        match load_jsonl(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsonl_rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let head = "{\"dim\":1,\"factors\":{\"V\":[\"is\"]}}\n";
        for bad in [
            "{\"id\":0,\"vector\":[1],\"labels\":{\"V\":\"was\"}}",
            "{\"id\":0,\"vector\":[1],\"labels\":{\"W\":\"is\"}}",
            "{\"id\":0,\"vector\":[1e999]}",
            "{\"id\":0,\"vector\":[1]",
        ] {
            let p = write(&dir, "b.jsonl", &format!("{head}{bad}\n"));
            assert!(load_jsonl(&p).is_err(), "{bad}");
        }
    }

    #[test]
    fn csv_blank_cell_is_unannotated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "id,z0,z1,V\n0,1,2,is\n1,3,4,\n2,5,6,causes\n");
        let (schema, ds) = load_csv(&p).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.samples()[1].labels.is_empty());
        let sub = crate::dataset::subset_by_factor(&ds, &schema, "V", "is").unwrap();
        assert_eq!(sub.ids(), vec![0]);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write(&dir, "r.csv", "id,z0,V\n0,1,is,extra\n");
        assert!(matches!(load_csv(&ragged), Err(Error::Parse { line: 2, .. })));
        let nonnum = write(&dir, "n.csv", "id,z0,V\n0,abc,is\n");
        assert!(matches!(load_csv(&nonnum), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_counts_inferred() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "id,z0,ARG0\n0,1,2\n1,3,0\n");
        let (_, ds) = load_csv(&p).unwrap();
        assert_eq!(ds.samples()[0].labels["ARG0"], Label::Count(2));
    }

    #[test]
    fn report_contains_name_and_value() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = MetricReport::new();
        r.set_metric("MIG", 0.5);
        for fmt in [ReportFormat::Json, ReportFormat::Csv] {
            let p = dir.path().join(if fmt == ReportFormat::Json { "r.json" } else { "r.csv" });
            save_report(&r, &p, fmt).unwrap();
            let text = std::fs::read_to_string(&p).unwrap();
            assert!(text.contains("MIG") && text.contains("0.5"));
        }
    }

    #[test]
    fn empty_report_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["e.json", "e.csv"] {
            let p = dir.path().join(name);
            save_report(&MetricReport::new(), &p, ReportFormat::from_path(&p)).unwrap();
            assert!(load_report(&p).unwrap().metrics.is_empty());
        }
    }

    #[test]
    fn round6_keeps_six_digits() {
        assert_eq!(round6(0.123456789), 0.123457);
        assert_eq!(round6(-98765.4321), -98765.4);
        assert_eq!(round6(0.0), 0.0);
    }
}
