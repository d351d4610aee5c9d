//! Output formats.
//!
//! JSON files are an envelope `{"metadata": .., "data": ..}`. CSV files start
//! with one `# metadata: <json>` line followed by a header row. Floats are
//! written in shortest round-trip form, so reading a file back reproduces the
//! values bit for bit. No timestamps are written, which keeps repeated runs
//! byte-identical.

use std::collections::BTreeMap;
use std::io::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::continuation::{BranchCurve, NodeClass};
use crate::error::{Error, Result};
use crate::singular_limit::FlowTrace;
use crate::solve::ZeroSetSection;
use crate::transversality::Tolerances;

pub const TOOL_NAME: &str = "foldcert";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const META_PREFIX: &str = "# metadata: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub problem: String,
    pub problem_hash: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Conventions and settings specific to the command.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(command: &str, problem: &str, problem_hash: &str, seed: u64, tolerances: Tolerances) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            problem: problem.into(),
            problem_hash: problem_hash.into(),
            seed,
            tolerances,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.into(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub metadata: Metadata,
    pub data: T,
}

fn schema_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    Error::SchemaViolation { path, message: e.into_inner().to_string() }
}

/// Parses JSON into `T`, reporting the path of the first offending field.
pub fn from_json_str<T: DeserializeOwned>(s: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(schema_error)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize, W: Write>(w: &mut W, metadata: &Metadata, data: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        metadata: &'a Metadata,
        data: &'a T,
    }
    w.write_all(to_json_string(&Out { metadata, data })?.as_bytes())?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(s: &str) -> Result<Envelope<T>> {
    from_json_str(s)
}

struct Table {
    metadata: Metadata,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn write_table<W: Write>(w: &mut W, metadata: &Metadata, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let meta = serde_json::to_string(metadata).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w, "{META_PREFIX}{meta}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

fn read_table(text: &str) -> Result<Table> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let meta_json = first
        .strip_prefix(META_PREFIX)
        .ok_or_else(|| Error::SchemaViolation { path: "line 1".into(), message: "missing metadata line".into() })?;
    let metadata: Metadata = from_json_str(meta_json)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(Table { metadata, header, rows })
}

fn num(s: &str, row: usize, col: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::SchemaViolation { path: format!("row {row}, column {col}"), message: format!("not a number: '{s}'") })
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn x_columns(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("x{i}"))
}

fn check_header(t: &Table, expected: &[String]) -> Result<()> {
    if t.header != expected {
        return Err(Error::SchemaViolation {
            path: "header".into(),
            message: format!("expected [{}], got [{}]", expected.join(","), t.header.join(",")),
        });
    }
    Ok(())
}

fn state_dim(t: &Table, fixed: usize) -> Result<usize> {
    t.header
        .len()
        .checked_sub(fixed)
        .ok_or_else(|| Error::SchemaViolation { path: "header".into(), message: "too few columns".into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub arclength: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub tangent_t: f64,
    pub classification: NodeClass,
}

pub fn curve_rows(curve: &BranchCurve) -> Vec<CurveRow> {
    (0..curve.len())
        .map(|i| CurveRow {
            arclength: curve.arclength[i],
            t: curve.nodes[i].t,
            x: curve.nodes[i].x.iter().copied().collect(),
            tangent_t: curve.tangent_t(i),
            classification: curve.classifications[i],
        })
        .collect()
}

fn curve_header(n: usize) -> Vec<String> {
    let mut h = vec!["arclength".to_string(), "t".to_string()];
    h.extend(x_columns(n));
    h.push("tangent_t".into());
    h.push("classification".into());
    h
}

/// Columns `arclength, t, x1..xn, tangent_t, classification`.
pub fn write_curve_csv<W: Write>(w: &mut W, metadata: &Metadata, dim: usize, rows: &[CurveRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![fmt(r.arclength), fmt(r.t)];
            v.extend(r.x.iter().map(|&x| fmt(x)));
            v.push(fmt(r.tangent_t));
            v.push(format!("{:?}", r.classification));
            v
        })
        .collect();
    write_table(w, metadata, &curve_header(dim), &body)
}

pub fn read_curve_csv(text: &str) -> Result<(Metadata, Vec<CurveRow>)> {
    let t = read_table(text)?;
    let n = state_dim(&t, 4)?;
    check_header(&t, &curve_header(n))?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        let classification = match r[n + 3].as_str() {
            "Regular" => NodeClass::Regular,
            "NearSingular" => NodeClass::NearSingular,
            other => {
                return Err(Error::SchemaViolation {
                    path: format!("row {}, column classification", i + 1),
                    message: format!("unknown class '{other}'"),
                })
            }
        };
        let x = (0..n).map(|k| num(&r[2 + k], i + 1, &t.header[2 + k])).collect::<Result<_>>()?;
        out.push(CurveRow {
            arclength: num(&r[0], i + 1, "arclength")?,
            t: num(&r[1], i + 1, "t")?,
            x,
            tangent_t: num(&r[n + 2], i + 1, "tangent_t")?,
            classification,
        });
    }
    Ok((t.metadata, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionRow {
    pub t: f64,
    pub root: usize,
    pub x: Vec<f64>,
    pub residual: f64,
}

pub fn section_rows(sections: &[ZeroSetSection]) -> Vec<SectionRow> {
    sections
        .iter()
        .flat_map(|s| {
            s.zeros.iter().zip(&s.residuals).enumerate().map(move |(k, (z, r))| SectionRow {
                t: s.t,
                root: k,
                x: z.iter().copied().collect(),
                residual: *r,
            })
        })
        .collect()
}

fn section_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "root".to_string()];
    h.extend(x_columns(n));
    h.push("residual".into());
    h
}

/// Columns `t, root, x1..xn, residual`.
pub fn write_section_csv<W: Write>(w: &mut W, metadata: &Metadata, dim: usize, rows: &[SectionRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![fmt(r.t), r.root.to_string()];
            v.extend(r.x.iter().map(|&x| fmt(x)));
            v.push(fmt(r.residual));
            v
        })
        .collect();
    write_table(w, metadata, &section_header(dim), &body)
}

pub fn read_section_csv(text: &str) -> Result<(Metadata, Vec<SectionRow>)> {
    let t = read_table(text)?;
    let n = state_dim(&t, 3)?;
    check_header(&t, &section_header(n))?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        let root = r[1].parse().map_err(|_| Error::SchemaViolation {
            path: format!("row {}, column root", i + 1),
            message: format!("not an index: '{}'", r[1]),
        })?;
        let x = (0..n).map(|k| num(&r[2 + k], i + 1, &t.header[2 + k])).collect::<Result<_>>()?;
        out.push(SectionRow { t: num(&r[0], i + 1, "t")?, root, x, residual: num(&r[n + 2], i + 1, "residual")? });
    }
    Ok((t.metadata, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
}

pub fn trace_rows(trace: &FlowTrace) -> Vec<TraceRow> {
    trace.times.iter().zip(&trace.states).map(|(t, x)| TraceRow { t: *t, x: x.iter().copied().collect() }).collect()
}

fn trace_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain(x_columns(n)).collect()
}

/// Columns `t, x1..xn`.
pub fn write_trace_csv<W: Write>(w: &mut W, metadata: &Metadata, dim: usize, rows: &[TraceRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| std::iter::once(fmt(r.t)).chain(r.x.iter().map(|&x| fmt(x))).collect())
        .collect();
    write_table(w, metadata, &trace_header(dim), &body)
}

pub fn read_trace_csv(text: &str) -> Result<(Metadata, Vec<TraceRow>)> {
    let t = read_table(text)?;
    let n = state_dim(&t, 1)?;
    check_header(&t, &trace_header(n))?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        let x = (0..n).map(|k| num(&r[1 + k], i + 1, &t.header[1 + k])).collect::<Result<_>>()?;
        out.push(TraceRow { t: num(&r[0], i + 1, "t")?, x });
    }
    Ok((t.metadata, out))
}

/// Columns `position, u1..uk`: one spatial grid and `k` states on it.
pub fn write_grid_csv<W: Write>(w: &mut W, metadata: &Metadata, positions: &[f64], states: &[Vec<f64>]) -> Result<()> {
    if let Some(bad) = states.iter().find(|s| s.len() != positions.len()) {
        return Err(Error::DimensionMismatch { expected: positions.len(), got: bad.len() });
    }
    let header: Vec<String> =
        std::iter::once("position".to_string()).chain((1..=states.len()).map(|k| format!("u{k}"))).collect();
    let body: Vec<Vec<String>> = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| std::iter::once(fmt(p)).chain(states.iter().map(|s| fmt(s[i]))).collect())
        .collect();
    write_table(w, metadata, &header, &body)
}

pub fn read_grid_csv(text: &str) -> Result<(Metadata, Vec<f64>, Vec<Vec<f64>>)> {
    let t = read_table(text)?;
    let k = state_dim(&t, 1)?;
    let mut positions = Vec::with_capacity(t.rows.len());
    let mut states = vec![Vec::with_capacity(t.rows.len()); k];
    for (i, r) in t.rows.iter().enumerate() {
        positions.push(num(&r[0], i + 1, "position")?);
        for (j, s) in states.iter_mut().enumerate() {
            s.push(num(&r[1 + j], i + 1, &t.header[1 + j])?);
        }
    }
    Ok((t.metadata, positions, states))
}

/// Replaces every leaf of a JSON value by its type name.
pub fn shape_of(v: &Value) -> Value {
    match v {
        Value::Null => Value::String("null".into()),
        Value::Bool(_) => Value::String("boolean".into()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Value::String("integer".into()),
        Value::Number(_) => Value::String("number".into()),
        Value::String(_) => Value::String("string".into()),
        Value::Array(a) => Value::Array(a.first().map(shape_of).into_iter().collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), shape_of(v))).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{trace_branch, StepConfig};
    use crate::problem_model::{lookup, Point};
    use crate::transversality::{certify, TransversalityCertificate};
    use crate::Vector;

    fn meta() -> Metadata {
        Metadata::new("test", "fold1d", "abc", 7, Tolerances::default()).with("norm", "product")
    }

    fn curve10() -> BranchCurve {
        let p = lookup("fold1d").unwrap();
        let cfg = StepConfig { max_nodes: 10, ..StepConfig::default() };
        let c = trace_branch(&p, &Point::from_slice(&[-1.0], 1.0), 1, &cfg).unwrap();
        assert_eq!(c.len(), 10);
        c
    }

    #[test]
    fn certificate_round_trip() {
        let p = lookup("fold1d").unwrap();
        let c = certify(&p, &Point::from_slice(&[0.0], 0.0), &Tolerances::default()).unwrap();
        let mut buf = Vec::new();
        write_json(&mut buf, &meta(), &c).unwrap();
        let back: Envelope<TransversalityCertificate> = read_json(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.data, c);
        assert_eq!(back.metadata, meta());
    }

    #[test]
    fn branch_curve_round_trip() {
        let c = curve10();
        let s = to_json_string(&c).unwrap();
        let back: BranchCurve = from_json_str(&s).unwrap();
        assert_eq!(back, c);
        let rows = curve_rows(&c);
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &meta(), 1, &rows).unwrap();
        let (m, back) = read_curve_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(m, meta());
        assert_eq!(back, rows);
    }

    #[test]
    fn section_and_trace_round_trip() {
        let sec = ZeroSetSection {
            t: 0.25,
            zeros: vec![Vector::from_vec(vec![-0.5, 1.0 / 3.0]), Vector::from_vec(vec![0.5, 2e-300])],
            residuals: vec![1e-17, 0.0],
            min_pairwise_separation: Some(1.0),
            multistart_count: 9,
            failed_starts: 0,
        };
        let rows = section_rows(&[sec]);
        let mut buf = Vec::new();
        write_section_csv(&mut buf, &meta(), 2, &rows).unwrap();
        let (_, back) = read_section_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rows);

        let rows = vec![TraceRow { t: 0.1, x: vec![std::f64::consts::PI] }, TraceRow { t: 0.2, x: vec![-1e-12] }];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &meta(), 1, &rows).unwrap();
        let (_, back) = read_trace_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rows);

        let pos = vec![0.5, 1.0, 1.5];
        let states = vec![vec![0.1, -0.2, 0.3], vec![1.0 / 7.0, 2.0, -3.0]];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &meta(), &pos, &states).unwrap();
        let (_, p2, s2) = read_grid_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!((p2, s2), (pos, states));
    }

    #[test]
    fn malformed_json_names_field() {
        let p = lookup("fold1d").unwrap();
        let c = certify(&p, &Point::from_slice(&[0.0], 0.0), &Tolerances::default()).unwrap();
        let mut v = serde_json::to_value(&c).unwrap();
        v["tolerances"]["zero_tol"] = Value::String("small".into());
        match from_json_str::<TransversalityCertificate>(&v.to_string()) {
            Err(Error::SchemaViolation { path, .. }) => assert!(path.contains("zero_tol"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"metadata": {"tool": "foldcert"}, "data": 1}"#;
        assert!(matches!(read_json::<f64>(bad), Err(Error::SchemaViolation { .. })));
        let extra = serde_json::json!({"metadata": meta(), "data": 1.0, "surplus": 0});
        match read_json::<f64>(&extra.to_string()) {
            Err(Error::SchemaViolation { message, .. }) => assert!(message.contains("surplus")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_csv_cells_are_located() {
        let rows = vec![TraceRow { t: 0.1, x: vec![1.0] }];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &meta(), 1, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\n0.1,1.0", "\n0.1,one");
        match read_trace_csv(&text) {
            Err(Error::SchemaViolation { path, .. }) => assert_eq!(path, "row 1, column x1"),
            other => panic!("{other:?}"),
        }
        assert!(read_trace_csv("t,x1\n0,0\n").is_err());
    }

    #[test]
    fn writes_are_deterministic() {
        let c = curve10();
        let render = || {
            let mut a = Vec::new();
            write_curve_csv(&mut a, &meta(), 1, &curve_rows(&c)).unwrap();
            write_json(&mut a, &meta(), &c).unwrap();
            a
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn shapes() {
        let v = serde_json::json!({"a": [1.5, 2.0], "b": {"c": "x", "d": null, "e": 3}});
        assert_eq!(shape_of(&v), serde_json::json!({"a": ["number"], "b": {"c": "string", "d": "null", "e": "integer"}}));
    }
}
