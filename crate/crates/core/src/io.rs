//! CSV readers and writers for the three measurement formats:
//! `wavelength_nm,intensity` spectra, `delay_ns,coincidences` g² traces and
//! `thickness_nm,q_loaded` thickness studies.
//!
//! Spectrum files may carry `# key: value` comment lines before the header;
//! they are kept as metadata, and a `channel` entry sets the channel tag.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitdata::{G2Trace, ThicknessPoint};
use crate::spectra::{Channel, Spectrum};

pub const SPECTRUM_HEADER: [&str; 2] = ["wavelength_nm", "intensity"];
pub const G2_HEADER: [&str; 2] = ["delay_ns", "coincidences"];
pub const THICKNESS_HEADER: [&str; 2] = ["thickness_nm", "q_loaded"];

struct Table {
    metadata: BTreeMap<String, String>,
    columns: [Vec<f64>; 2],
}

fn read_table<R: Read>(mut reader: R, header: [&str; 2]) -> Result<Table> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut metadata = BTreeMap::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        match line.trim_start().strip_prefix('#') {
            Some(comment) => {
                if let Some((k, v)) = comment.split_once(':') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let found: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::data(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.join(",")
        )));
    }
    let mut columns = [Vec::new(), Vec::new()];
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::data(format!("row {}: expected 2 fields", row + 1)));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::data(format!("row {}: `{field}` is not a number", row + 1)))?;
            columns[col].push(v);
        }
    }
    Ok(Table { metadata, columns })
}

/// Reads a spectrum; `default_channel` applies when the file carries no
/// `# channel:` line.
pub fn read_spectrum<R: Read>(reader: R, default_channel: Channel) -> Result<Spectrum> {
    let Table { metadata, columns } = read_table(reader, SPECTRUM_HEADER)?;
    let channel = match metadata.get("channel") {
        Some(c) => c.parse()?,
        None => default_channel,
    };
    let [wl, values] = columns;
    let mut s = Spectrum::new(wl, values, channel)?;
    for (k, v) in metadata {
        if k != "channel" {
            s.metadata_mut().insert(k, v);
        }
    }
    Ok(s)
}

pub fn read_spectrum_file(path: &Path, default_channel: Channel) -> Result<Spectrum> {
    read_spectrum(fs::File::open(path)?, default_channel)
}

pub fn write_spectrum<W: Write>(spectrum: &Spectrum, mut writer: W) -> Result<()> {
    writeln!(writer, "# channel: {}", spectrum.channel())?;
    for (k, v) in spectrum.metadata() {
        writeln!(writer, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SPECTRUM_HEADER)?;
    for (l, v) in spectrum.wavelengths().iter().zip(spectrum.intensities()) {
        w.write_record([l.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_file(spectrum: &Spectrum, path: &Path) -> Result<()> {
    write_spectrum(spectrum, fs::File::create(path)?)
}

/// Reads a g² histogram. The bin width comes from a `# bin_width_ns:` line
/// or, failing that, the median delay spacing.
pub fn read_g2<R: Read>(reader: R) -> Result<G2Trace> {
    let Table { metadata, columns } = read_table(reader, G2_HEADER)?;
    let [delays, counts] = columns;
    match metadata.get("bin_width_ns") {
        Some(b) => {
            let bin = b
                .parse()
                .map_err(|_| Error::data(format!("bin_width_ns `{b}` is not a number")))?;
            G2Trace::new(delays, counts, bin)
        }
        None => G2Trace::from_samples(delays, counts),
    }
}

pub fn read_g2_file(path: &Path) -> Result<G2Trace> {
    read_g2(fs::File::open(path)?)
}

pub fn write_g2<W: Write>(trace: &G2Trace, mut writer: W) -> Result<()> {
    writeln!(writer, "# bin_width_ns: {}", trace.bin_width())?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(G2_HEADER)?;
    for (t, c) in trace.delays().iter().zip(trace.coincidences()) {
        w.write_record([t.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_thickness<R: Read>(reader: R) -> Result<Vec<ThicknessPoint>> {
    let Table { columns, .. } = read_table(reader, THICKNESS_HEADER)?;
    let [t, q] = columns;
    Ok(t.into_iter()
        .zip(q)
        .map(|(thickness, q_loaded)| ThicknessPoint {
            thickness,
            q_loaded,
        })
        .collect())
}

pub fn read_thickness_file(path: &Path) -> Result<Vec<ThicknessPoint>> {
    read_thickness(fs::File::open(path)?)
}

pub fn write_thickness<W: Write>(points: &[ThicknessPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(THICKNESS_HEADER)?;
    for p in points {
        w.write_record([p.thickness.to_string(), p.q_loaded.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
