//! Artifact writers. Every float goes out with 17 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use stablelab::gof::fmt17;
use stablelab::simulate::DecomposedSum;

use crate::RunError;

/// Pretty JSON whose floats are written as `{:.16e}`.
struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, to_json(value)).map_err(RunError::io(format!("writing {}", path.display())))
}

pub fn create(dir: &Path, name: &str) -> Result<fs::File, RunError> {
    let path = dir.join(name);
    fs::File::create(&path).map_err(RunError::io(format!("creating {}", path.display())))
}

/// `replica,total,part_S,part_M,part_L`, each part scaled by `n^{-1/α}`.
pub fn write_samples_csv<W: Write>(out: W, sums: &[DecomposedSum], scale: f64) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "total", "part_S", "part_M", "part_L"])?;
    for s in sums {
        w.write_record([
            s.replica.to_string(),
            fmt17(s.total * scale),
            fmt17(s.part_small * scale),
            fmt17(s.part_medium * scale),
            fmt17(s.part_large * scale),
        ])?;
    }
    w.flush()
}

/// One column of a CSV with a header row.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| RunError::Input(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| RunError::Input(format!("{}: no column {column:?}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| RunError::Input(e.to_string()))?;
        let v: f64 = rec
            .get(idx)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| RunError::Input(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        out.push(v);
    }
    Ok(out)
}
