use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::NoiseTrace;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "time_s,freq_offset_hz";

/// Format like C's `%.17g`: 17 significant digits, trailing zeros stripped,
/// scientific notation when the exponent is < -4 or >= 17.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if !(-4..17).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        strip_zeros(&mut m);
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{m}e{esign}{:02}", exp.abs());
    }
    let mut s = if exp >= 0 {
        let int_len = exp as usize + 1;
        format!("{}.{}", &digits[..int_len], &digits[int_len..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    strip_zeros(&mut s);
    format!("{sign}{s}")
}

fn strip_zeros(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

pub fn write_trace<W: Write>(trace: &NoiseTrace, mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for (i, v) in trace.values.iter().enumerate() {
        writeln!(w, "{},{}", fmt_g17(trace.time_at(i)), fmt_g17(*v))?;
    }
    Ok(())
}

pub fn save_trace(trace: &NoiseTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(trace.len() * 40);
    write_trace(trace, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<NoiseTrace> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let mut trace = read_trace(BufReader::new(file))?;
    trace.label = path.display().to_string();
    Ok(trace)
}

/// Parse the two-column CSV trace format. Rows are numbered from 1 with the
/// header as row 1. Sampling must be uniform to 1e-6 relative jitter.
pub fn read_trace<R: Read>(r: R) -> Result<NoiseTrace> {
    let reader = BufReader::new(r);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if idx == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Format { row, msg: format!("expected header `{TRACE_HEADER}`") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Format { row, msg: "expected two columns".into() });
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            let x: f64 =
                s.trim().parse().map_err(|_| Error::Format { row, msg: format!("cannot parse {what} `{s}`") })?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Format { row, msg: format!("non-finite {what}") })
            }
        };
        let t = parse(t, "time")?;
        let v = parse(v, "value")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Format { row, msg: "time is not strictly increasing".into() });
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(Error::Format { row: 1, msg: "no samples".into() });
    }
    let t0 = times[0];
    // a single row cannot carry a step; 1 s is as good as any
    let dt = if times.len() > 1 { exact_step(&times) } else { 1.0 };
    for (i, &t) in times.iter().enumerate().skip(2) {
        let expected = t0 + i as f64 * dt;
        if ((t - expected) / dt).abs() > 1e-6 * i as f64 {
            return Err(Error::Format {
                row: i + 2,
                msg: format!("non-uniform sampling: t = {t}, expected {expected}"),
            });
        }
    }
    NoiseTrace::new(dt, t0, values, "")
}

/// The step that reproduces every time stamp as `t0 + i·dt` exactly, so a
/// written trace reads back with the same `dt_s`. Searches a few ulps around
/// the first difference and the mean step; external files with jitter fall
/// back to the first difference.
fn exact_step(times: &[f64]) -> f64 {
    let (t0, n) = (times[0], times.len());
    let first = times[1] - t0;
    let mean = (times[n - 1] - t0) / (n - 1) as f64;
    let reproduces = |dt: f64| times.iter().enumerate().all(|(i, &t)| t0 + i as f64 * dt == t);
    for base in [first, mean] {
        for k in 0..=8i64 {
            for dir in [1i64, -1] {
                let bits = base.to_bits() as i64 + dir * k;
                let dt = f64::from_bits(bits as u64);
                if dt > 0.0 && reproduces(dt) {
                    return dt;
                }
            }
        }
    }
    first
}
