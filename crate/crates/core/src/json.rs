//! JSON output with a floor on printed precision.
//!
//! Floats are written in their shortest round-trip form, zero-padded to at
//! least [`MIN_SIGNIFICANT_DIGITS`] significant digits, so `0.6` appears as
//! `0.600000000000` and still parses back to the same value.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;

pub const MIN_SIGNIFICANT_DIGITS: usize = 12;

struct PaddedFloats<'a>(PrettyFormatter<'a>);

pub(crate) fn pad_float(value: f64) -> String {
    let mut s = format!("{value}");
    if !value.is_finite() {
        return s;
    }
    if value == 0.0 {
        return "0.0".to_string();
    }
    let digits: String = s.chars().filter(char::is_ascii_digit).collect();
    let significant = digits.trim_start_matches('0').len();
    if significant < MIN_SIGNIFICANT_DIGITS {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', MIN_SIGNIFICANT_DIGITS - significant));
    }
    s
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            #[inline]
            fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for PaddedFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(pad_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        // widen through the shortest decimal so 0.1f32 prints as 0.1
        let widened: f64 = format!("{value}").parse().unwrap_or(value as f64);
        self.write_f64(writer, widened)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Pretty JSON with padded floats, terminated by a newline.
pub fn to_string_pretty<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PaddedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Writes `value` to `path` through a `.partial` sibling that is renamed on success.
pub fn write_atomic(path: &std::path::Path, contents: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = std::path::PathBuf::from(partial);
    std::fs::write(&partial, contents)?;
    std::fs::rename(&partial, path)?;
    Ok(())
}
