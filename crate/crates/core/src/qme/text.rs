//! Plain-text spec files.
//!
//! ```text
//! # comments start with '#'
//! dim 2
//! channels 1
//! mask 0 2            # optional: half-open range of constrained basis states
//! A
//! 0,0 0,0
//! 0,0 -0.5,0
//! C 1
//! 0,0 0.7071067811865476,0
//! 0,0 0,0
//! E 1
//! ...
//! ```
//!
//! Each operator block is a header line followed by `dim` rows of `dim`
//! whitespace-separated `re,im` pairs. Blocks may come in any order, but `A`
//! and every `C k`/`E k` for `k = 1..=channels` must appear exactly once.

use std::fmt::Write as _;

use super::{Channel, QmeSpec};
use crate::error::{Error, Result};
use crate::linalg::{c, Complex64, ComplexMat};

pub fn write_spec(spec: &QmeSpec) -> String {
    let mut out = String::new();
    writeln!(out, "dim {}", spec.dim()).unwrap();
    writeln!(out, "channels {}", spec.n_channels()).unwrap();
    if let Some(mask) = spec.constraint_mask() {
        writeln!(out, "mask {} {}", mask.start, mask.end).unwrap();
    }
    write_block(&mut out, "A", spec.a());
    for (k, ch) in spec.channels().iter().enumerate() {
        write_block(&mut out, &format!("C {}", k + 1), &ch.c);
        write_block(&mut out, &format!("E {}", k + 1), &ch.e);
    }
    out
}

fn write_block(out: &mut String, header: &str, m: &ComplexMat) {
    out.push_str(header);
    out.push('\n');
    for i in 0..m.dim() {
        let row: Vec<String> = m.row(i).iter().map(|z| format!("{},{}", z.re, z.im)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

enum Block {
    A,
    C(usize),
    E(usize),
}

pub fn parse_spec(text: &str) -> Result<QmeSpec> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let mut dim = None;
    let mut n_channels = None;
    let mut mask = None;
    let mut a = None;
    let mut cs: Vec<Option<ComplexMat>> = Vec::new();
    let mut es: Vec<Option<ComplexMat>> = Vec::new();

    while let Some((line_no, line)) = lines.next() {
        let mut words = line.split_whitespace();
        let head = words.next().unwrap_or("");
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let block = match head {
            "dim" => {
                dim = Some(parse_usize(words.next(), line_no, "dim")?);
                continue;
            }
            "channels" => {
                let m = parse_usize(words.next(), line_no, "channels")?;
                n_channels = Some(m);
                cs = vec![None; m];
                es = vec![None; m];
                continue;
            }
            "mask" => {
                let lo = parse_usize(words.next(), line_no, "mask start")?;
                let hi = parse_usize(words.next(), line_no, "mask end")?;
                mask = Some(lo..hi);
                continue;
            }
            "A" => Block::A,
            "C" | "E" => {
                let k = parse_usize(words.next(), line_no, "channel index")?;
                let m = n_channels.ok_or_else(|| err("'channels' must precede operator blocks".into()))?;
                if k == 0 || k > m {
                    return Err(err(format!("channel index {k} outside 1..={m}")));
                }
                if head == "C" {
                    Block::C(k - 1)
                } else {
                    Block::E(k - 1)
                }
            }
            other => return Err(err(format!("unexpected '{other}'"))),
        };
        let n = dim.ok_or_else(|| err("'dim' must precede operator blocks".into()))?;
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (row_no, row) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("block '{line}' truncated") })?;
            let entries: Vec<&str> = row.split_whitespace().collect();
            if entries.len() != n {
                return Err(Error::Parse {
                    line: row_no,
                    msg: format!("expected {n} entries, found {}", entries.len()),
                });
            }
            for e in entries {
                data.push(parse_complex(e, row_no)?);
            }
        }
        let m = ComplexMat::from_row_major(n, data).map_err(|e| err(e.to_string()))?;
        let slot = match block {
            Block::A => &mut a,
            Block::C(k) => &mut cs[k],
            Block::E(k) => &mut es[k],
        };
        if slot.replace(m).is_some() {
            return Err(err(format!("duplicate block '{line}'")));
        }
    }

    let a = a.ok_or(Error::Parse { line: 0, msg: "missing 'A' block".into() })?;
    let mut channels = Vec::with_capacity(cs.len());
    for (k, (c_op, e_op)) in cs.into_iter().zip(es).enumerate() {
        let missing = |name: &str| Error::Parse { line: 0, msg: format!("missing '{name} {}' block", k + 1) };
        channels.push(Channel::new(c_op.ok_or_else(|| missing("C"))?, e_op.ok_or_else(|| missing("E"))?)?);
    }
    let spec = QmeSpec::new(a, channels)?;
    match mask {
        Some(m) => spec.with_constraint_mask(m),
        None => Ok(spec),
    }
}

fn parse_usize(word: Option<&str>, line: usize, what: &str) -> Result<usize> {
    word.and_then(|w| w.parse().ok())
        .ok_or_else(|| Error::Parse { line, msg: format!("expected a non-negative integer for {what}") })
}

fn parse_complex(s: &str, line: usize) -> Result<Complex64> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| Error::Parse { line, msg: format!("expected 're,im', found '{s}'") })?;
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse { line, msg: format!("invalid number '{x}'") })
    };
    Ok(c(parse(re)?, parse(im)?))
}
