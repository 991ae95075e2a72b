//! On-disk timestamp formats.
//!
//! * text: one `channel_id,time_ps` per line, `#` starts a comment;
//!   channel 0 = trigger, 1 = rising edge, 2 = falling edge.
//! * binary: packed little-endian records of `u8` channel + `i64` time.
//! * channel-mapped text: the generic time-tagger export (`channel<sep>time`
//!   with arbitrary instrument channel numbers), mapped onto the three
//!   logical channels. This is the adapter used for recorded datasets; the
//!   mapping is configuration, not code.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::histogram::{Channel, TimestampRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimestampFormat {
    Text,
    Binary,
    ChannelMapped(ChannelMap),
}

impl TimestampFormat {
    /// `.bin` → binary, anything else → text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => TimestampFormat::Binary,
            _ => TimestampFormat::Text,
        }
    }
}

/// Instrument channel numbers for the three logical channels. Time values
/// are multiplied by `time_scale` to obtain picoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub trigger: i64,
    pub rising: i64,
    #[serde(default)]
    pub falling: Option<i64>,
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Re-sort records by time after reading (exports are sometimes written
    /// per channel).
    #[serde(default)]
    pub sort: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for ChannelMap {
    fn default() -> Self {
        // Common time-tagger convention: positive number = rising edge of
        // that input, negative number = falling edge.
        Self {
            trigger: 1,
            rising: 2,
            falling: Some(-2),
            time_scale: 1.0,
            sort: false,
        }
    }
}

pub fn write_text<W: Write>(mut w: W, records: &[TimestampRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{},{}", r.channel.id(), r.time)?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<Vec<TimestampRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            Error::data(format!(
                "line {}: expected `channel,time_ps`, got {line:?}",
                lineno + 1
            ))
        };
        let (c, t) = line.split_once(',').ok_or_else(bad)?;
        let id: u8 = c.trim().parse().map_err(|_| bad())?;
        let channel = Channel::from_id(id)
            .ok_or_else(|| Error::data(format!("line {}: unknown channel id {id}", lineno + 1)))?;
        let time: i64 = t.trim().parse().map_err(|_| bad())?;
        out.push(TimestampRecord { channel, time });
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, records: &[TimestampRecord]) -> Result<()> {
    for r in records {
        w.write_all(&[r.channel.id()])?;
        w.write_all(&r.time.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<TimestampRecord>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 9 != 0 {
        return Err(Error::data(format!(
            "binary timestamp file length {} is not a multiple of 9",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(9)
        .enumerate()
        .map(|(i, c)| {
            let channel = Channel::from_id(c[0])
                .ok_or_else(|| Error::data(format!("record {i}: unknown channel id {}", c[0])))?;
            let time = i64::from_le_bytes(c[1..9].try_into().expect("8 bytes"));
            Ok(TimestampRecord { channel, time })
        })
        .collect()
}

/// Read a channel-mapped export. Accepts `,`, `;`, tab or whitespace as the
/// separator; lines that do not start with a number are treated as headers.
/// Records on unmapped channels are skipped.
pub fn read_channel_mapped<R: BufRead>(r: R, map: &ChannelMap) -> Result<Vec<TimestampRecord>> {
    let mut lookup = HashMap::new();
    lookup.insert(map.trigger, Channel::Trigger);
    lookup.insert(map.rising, Channel::Rising);
    if let Some(f) = map.falling {
        lookup.insert(f, Channel::Falling);
    }
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let mut fields = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let (Some(c), Some(t)) = (fields.next(), fields.next()) else {
            continue;
        };
        let Ok(ch) = c.parse::<i64>() else {
            if out.is_empty() {
                continue;
            }
            return Err(Error::data(format!(
                "line {}: bad channel {c:?}",
                lineno + 1
            )));
        };
        let time: f64 = t
            .parse()
            .map_err(|_| Error::data(format!("line {}: bad time {t:?}", lineno + 1)))?;
        if let Some(&channel) = lookup.get(&ch) {
            out.push(TimestampRecord {
                channel,
                time: (time * map.time_scale).round() as i64,
            });
        }
    }
    if map.sort {
        out.sort_by_key(|r| r.time);
    }
    Ok(out)
}

pub fn load(path: &Path, format: &TimestampFormat) -> Result<Vec<TimestampRecord>> {
    let f = File::open(path)?;
    match format {
        TimestampFormat::Text => read_text(BufReader::new(f)),
        TimestampFormat::Binary => read_binary(BufReader::new(f)),
        TimestampFormat::ChannelMapped(m) => read_channel_mapped(BufReader::new(f), m),
    }
}

pub fn save(path: &Path, format: &TimestampFormat, records: &[TimestampRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        TimestampFormat::Text => write_text(&mut w, records)?,
        TimestampFormat::Binary => write_binary(&mut w, records)?,
        TimestampFormat::ChannelMapped(_) => {
            return Err(Error::arg("channel-mapped format is read-only"));
        }
    }
    w.flush()?;
    Ok(())
}
