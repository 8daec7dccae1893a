//! File formats: space JSON, one-column function CSV, resistance matrices
//! as CSV or a packed lower triangle, residual tables, and JSON output with
//! fixed 17-significant-digit floats.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::resistance::ResistanceMatrix;
use crate::space::{DistanceMatrix, Edge, FunctionOnSpace, Metadata, MetricMeasureSpace, MetricSource, SpaceParts};
use crate::verifier::ResidualRow;

pub const EFRM_MAGIC: &[u8; 4] = b"EFRM";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpaceFile {
    vertices: usize,
    measure: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<usize>>,
    metric_source: MetricSource,
    #[serde(default)]
    metadata: Metadata,
    /// Full matrix, only for precomputed metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<Vec<Vec<f64>>>,
}

pub fn space_to_value(space: &MetricMeasureSpace) -> Result<Value> {
    let parts = space.to_parts();
    let file = SpaceFile {
        vertices: space.len(),
        measure: parts.measure,
        edges: parts.edges.iter().map(|e| (e.a, e.b, e.conductance)).collect(),
        coordinates: parts.coordinates,
        boundary: (!parts.boundary.is_empty()).then_some(parts.boundary),
        metric_source: parts.metric_source,
        metadata: parts.metadata,
        distance: parts.distance.map(|d| d.rows().map(|r| r.to_vec()).collect()),
    };
    Ok(serde_json::to_value(file)?)
}

pub fn space_from_json(text: &str) -> Result<MetricMeasureSpace> {
    let file: SpaceFile = serde_json::from_str(text)?;
    if file.vertices != file.measure.len() {
        return Err(Error::InvalidSpace(format!(
            "'vertices' is {} but 'measure' has {} entries",
            file.vertices,
            file.measure.len()
        )));
    }
    let mut parts = SpaceParts::new(
        file.measure,
        file.edges.into_iter().map(|(a, b, c)| Edge::new(a, b, c)).collect(),
        file.metric_source,
    );
    parts.coordinates = file.coordinates;
    parts.boundary = file.boundary.unwrap_or_default();
    parts.metadata = file.metadata;
    parts.distance = file.distance.map(DistanceMatrix::from_rows).transpose()?;
    MetricMeasureSpace::new(parts)
}

pub fn read_space(path: &Path) -> Result<MetricMeasureSpace> {
    space_from_json(&fs::read_to_string(path)?)
}

pub fn write_space(path: &Path, space: &MetricMeasureSpace) -> Result<()> {
    fs::write(path, to_json_string(&space_to_value(space)?))?;
    Ok(())
}

/// Reads a one-column CSV of vertex values. A non-numeric first line is
/// taken as a header.
pub fn read_function_csv(path: &Path) -> Result<FunctionOnSpace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::Domain(format!("line {}: expected one column, got {}", i + 1, rec.len())));
        }
        match rec[0].parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Domain(format!("line {}: '{}' is not a number", i + 1, &rec[0]))),
        }
    }
    FunctionOnSpace::new(values)
}

pub fn write_function_csv(path: &Path, u: &FunctionOnSpace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["u"])?;
    for v in u.values() {
        w.write_record([fmt_float(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with vertex ids as the header row and first column.
pub fn write_resistance_csv<W: Write>(out: W, m: &ResistanceMatrix) -> Result<()> {
    let n = m.n();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once(String::new()).chain((0..n).map(|j| j.to_string())))?;
    for i in 0..n {
        w.write_record(std::iter::once(i.to_string()).chain((0..n).map(|j| fmt_float(m.get(i, j)))))?;
    }
    w.flush()?;
    Ok(())
}

/// `"EFRM"`, `u32` n, `u64` reserved (0), then `R(i, j)` for `i` in `1..n`,
/// `j` in `0..i`, all little endian.
pub fn write_resistance_binary<W: Write>(mut out: W, m: &ResistanceMatrix) -> Result<()> {
    let n = u32::try_from(m.n()).map_err(|_| Error::Domain("matrix too large for the binary format".into()))?;
    out.write_all(EFRM_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&0u64.to_le_bytes())?;
    for i in 1..m.n() {
        for j in 0..i {
            out.write_all(&m.get(i, j).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_resistance_binary<R: Read>(mut input: R) -> Result<DistanceMatrix> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != EFRM_MAGIC {
        return Err(Error::Domain("not an EFRM file".into()));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let mut lower = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut buf = [0u8; 8];
    for v in lower.iter_mut() {
        input.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    // row i of the triangle starts at i (i - 1) / 2
    Ok(DistanceMatrix::from_fn(n, |i, j| {
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        lower[hi * (hi - 1) / 2 + lo]
    }))
}

pub fn write_residuals_csv<W: Write>(out: W, rows: &[ResidualRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["center", "r", "mu_ball", "ratio"])?;
    for row in rows {
        w.write_record([
            row.center.to_string(),
            fmt_float(row.r),
            fmt_float(row.mu_ball),
            fmt_float(row.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Pretty JSON with every float printed by [`fmt_float`]. Object keys come
/// out sorted, so equal values give byte-identical text. Non-finite floats
/// become `null`.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n("  ", n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64");
                out.push_str(&fmt_float(f));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // numeric arrays stay on one line
            if items.iter().all(|i| i.is_number()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_sg;
    use crate::resistance::resistance_matrix;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(2.0), "2.0000000000000000e0");
        let text = to_json_string(&serde_json::json!({"b": 1.0 / 3.0, "a": [1, 2.5], "c": null}));
        assert_eq!(
            text,
            "{\n  \"a\": [1, 2.5000000000000000e0],\n  \"b\": 3.3333333333333331e-1,\n  \"c\": null\n}\n"
        );
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn space_json_preserves_everything() {
        let s = build_sg(2).unwrap().with_boundary(vec![0, 1]).unwrap();
        let text = to_json_string(&space_to_value(&s).unwrap());
        let t = space_from_json(&text).unwrap();
        assert_eq!(t.len(), s.len());
        assert_eq!(t.measure(), s.measure());
        assert_eq!(t.edges(), s.edges());
        assert_eq!(t.boundary(), s.boundary());
        assert_eq!(t.coordinates(), s.coordinates());
        assert_eq!(t.metadata(), s.metadata());
    }

    #[test]
    fn vertex_count_must_match() {
        let bad = r#"{"vertices": 3, "measure": [1, 1], "edges": [[0, 1, 1]], "metric_source": "effective_resistance"}"#;
        assert!(matches!(space_from_json(bad), Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn binary_layout() {
        let s = build_sg(1).unwrap();
        let m = resistance_matrix(&s).unwrap();
        let mut buf = Vec::new();
        write_resistance_binary(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 6 * 5 / 2);
        assert_eq!(&buf[..4], b"EFRM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 0);
        // first entry is R(1, 0), third is R(2, 1)
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), m.get(1, 0));
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), m.get(2, 1));
        let back = read_resistance_binary(buf.as_slice()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(back.get(i, j), m.get(i, j));
            }
        }
        assert!(read_resistance_binary(&b"NOPE\0\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
