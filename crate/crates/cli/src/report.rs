//! Artifact serialization. All floating-point output is written with 17
//! significant digits so values round-trip exactly and reruns are
//! byte-comparable.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Sci17;

impl Formatter for Sci17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to JSON bytes with the 17-digit float convention and a
/// trailing newline. Field order follows struct declaration order, so the
/// bytes are stable across runs.
pub fn to_json17<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

/// A CSV built row by row; commas and newlines are the only structure, so
/// fields must not contain either.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Csv {
        let mut buf = String::with_capacity(256);
        buf.push_str(header);
        buf.push('\n');
        Csv { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}
