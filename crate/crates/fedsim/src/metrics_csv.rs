//! Metrics CSV: fixed header, LF endings, floats with 6 significant digits.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use fedsim_core::config::{LinkMode, Protocol};
use fedsim_core::metrics::{MetricsRecord, Scope};

use crate::error::{Error, Result};

pub const HEADER: [&str; 12] = [
    "iteration",
    "protocol",
    "uplink",
    "downlink",
    "T",
    "pu_db",
    "pd_db",
    "seed",
    "scope",
    "accuracy",
    "bits_up",
    "bits_down",
];

/// `printf("%g")` with 6 significant digits.
pub fn format_g(x: f64) -> String {
    const P: i32 = 6;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // the exponent after rounding to P digits decides the style
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..P).contains(&exp) {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn scope_str(s: Scope) -> String {
    match s {
        Scope::Average => "avg".into(),
        Scope::Device(k) => k.to_string(),
    }
}

pub fn write_records<W: Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.protocol.to_string(),
            r.uplink.to_string(),
            r.downlink.to_string(),
            r.channel_uses.to_string(),
            format_g(r.pu_db),
            format_g(r.pd_db),
            r.seed.to_string(),
            scope_str(r.scope),
            format_g(r.accuracy),
            format_g(r.bits_up),
            format_g(r.bits_down),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = io::BufWriter::new(file);
    write_records(records, &mut buf)?;
    buf.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Csv(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Csv(e.to_string()))?;
        let line = n + 2;
        let bad = |field: &str| Error::Csv(format!("line {line}: bad `{field}`"));
        let f = |i: usize| -> Result<f64> { row[i].parse().map_err(|_| bad(HEADER[i])) };
        let scope = match &row[8] {
            "avg" => Scope::Average,
            s => Scope::Device(s.parse().map_err(|_| bad("scope"))?),
        };
        out.push(MetricsRecord {
            iteration: row[0].parse().map_err(|_| bad("iteration"))?,
            protocol: row[1].parse::<Protocol>().map_err(|_| bad("protocol"))?,
            uplink: row[2].parse::<LinkMode>().map_err(|_| bad("uplink"))?,
            downlink: row[3].parse::<LinkMode>().map_err(|_| bad("downlink"))?,
            channel_uses: row[4].parse().map_err(|_| bad("T"))?,
            pu_db: f(5)?,
            pd_db: f(6)?,
            seed: row[7].parse().map_err(|_| bad("seed"))?,
            scope,
            accuracy: f(9)?,
            bits_up: f(10)?,
            bits_down: f(11)?,
        });
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    read_records(File::open(path).map_err(|e| Error::io(path, e))?)
}
