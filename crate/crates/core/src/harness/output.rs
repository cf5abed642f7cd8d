use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::levelset::EvolutionTrace;

/// Column layout of `trace.csv`; bump when the columns change.
pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "step,t,residual,area,perimeter";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Grey levels 0..=255, linear in the value, `y` increasing upwards.
pub fn pgm_bytes(field: &ScalarField) -> Vec<u8> {
    let s = field.spec();
    let (lo, hi) = (field.min(), field.max());
    let mut out = format!("P5\n# min={lo:e} max={hi:e}\n{} {}\n255\n", s.nx(), s.ny()).into_bytes();
    let range = hi - lo;
    for j in (0..s.ny()).rev() {
        for i in 0..s.nx() {
            let g = if range > 0.0 {
                (255.0 * (field.at(i, j) - lo) / range).round()
            } else {
                0.0
            };
            out.push(g as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&pgm_bytes(field))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn trace_csv(trace: &EvolutionTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in trace.all() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.t, r.residual, r.area, r.perimeter
        ));
    }
    s
}

pub fn write_trace(path: &Path, trace: &EvolutionTrace) -> Result<()> {
    std::fs::write(path, trace_csv(trace)).map_err(|e| Error::io(path, e))
}

/// One row per node: `i,j,x,y,value`.
pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let s = *field.spec();
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        writeln!(w, "i,j,x,y,value")?;
        for j in 0..s.ny() {
            for i in 0..s.nx() {
                writeln!(w, "{i},{j},{},{},{}", s.x(i), s.y(j), field.at(i, j))?;
            }
        }
        w.flush()
    })();
    body.map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
