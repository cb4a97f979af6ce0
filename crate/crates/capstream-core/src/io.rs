//! Text formats: the element stream, sample files, pass summaries, and the
//! multi-objective sample.
//!
//! Stream lines are `key[<TAB>weight]` with a missing weight meaning 1.0;
//! keys are arbitrary byte strings without tabs or newlines and are
//! canonicalized to 64-bit identifiers at ingest.

use crate::continuous::ContinuousSample;
use crate::discrete::DiscreteSample;
use crate::error::{Error, Result};
use crate::multiobjective::{CapSet, MultiSample, MultiSampleEntry};
use crate::twopass::{PassOneSummary, PassTwoSummary, Scheme, SummaryMode};
use crate::types::{Element, Ell, Key, Threshold};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Parse one stream line into an element, canonicalizing the key.
pub fn parse_stream_line(line: &str, hasher: &crate::random::KeyHasher) -> Result<Element> {
    let (key, weight) = match line.split_once('\t') {
        Some((k, w)) => {
            let weight: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad weight in line: {line}")))?;
            (k, weight)
        }
        None => (line, 1.0),
    };
    Element::new(hasher.canonicalize(key.as_bytes()), weight)
}

/// Read a whole element stream, skipping blank lines.
pub fn read_stream<R: BufRead>(
    reader: R,
    hasher: &crate::random::KeyHasher,
) -> Result<Vec<Element>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(parse_stream_line(&line, hasher)?);
    }
    Ok(out)
}

fn parse_fields(header: &str, expect: &str) -> Result<BTreeMap<String, String>> {
    let mut parts = header.split_whitespace();
    let tag = parts.next().unwrap_or("");
    if tag != expect {
        return Err(Error::Parse(format!("expected header {expect}, got {tag}")));
    }
    let mut fields = BTreeMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field: {part}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    Ok(fields)
}

fn field<'a>(fields: &'a BTreeMap<String, String>, name: &str) -> Result<&'a str> {
    fields
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse(format!("missing header field {name}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse()
        .map_err(|_| Error::Parse(format!("bad float: {s}")))
}

fn parse_ell(s: &str) -> Result<Ell> {
    if s == "inf" {
        Ok(Ell::Infinite)
    } else {
        s.parse()
            .map(Ell::Finite)
            .map_err(|_| Error::Parse(format!("bad ell: {s}")))
    }
}

fn parse_threshold(s: &str) -> Result<Threshold> {
    if s == "inf" {
        Ok(Threshold::Infinite)
    } else {
        parse_f64(s).map(Threshold::Finite)
    }
}

/// `#shl-discrete ell=<int|inf> mode=<tau|k> tau=<float> k=<int>` followed by
/// `key<TAB>count` lines.  k=0 under fixed-threshold mode.
pub fn write_discrete_sample<W: Write>(sample: &DiscreteSample, out: &mut W) -> Result<()> {
    let mode = if sample.k.is_some() { "k" } else { "tau" };
    writeln!(
        out,
        "#shl-discrete ell={} mode={mode} tau={} k={}",
        sample.ell,
        sample.tau,
        sample.k.unwrap_or(0)
    )?;
    for (key, count) in &sample.entries {
        writeln!(out, "{key}\t{count}")?;
    }
    Ok(())
}

pub fn read_discrete_sample<R: BufRead>(reader: R) -> Result<DiscreteSample> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sample file".into()))??;
    let fields = parse_fields(&header, "#shl-discrete")?;
    let ell = parse_ell(field(&fields, "ell")?)?;
    let tau = parse_f64(field(&fields, "tau")?)?;
    let k: usize = field(&fields, "k")?
        .parse()
        .map_err(|_| Error::Parse("bad k".into()))?;
    let mode = field(&fields, "mode")?;
    let mut entries = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (key, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("bad sample line: {line}")))?;
        let key: Key = key.parse().map_err(|_| Error::Parse("bad key".into()))?;
        let count: u64 = count
            .parse()
            .map_err(|_| Error::Parse("bad count".into()))?;
        entries.insert(key, count);
    }
    Ok(DiscreteSample {
        ell,
        tau,
        k: if mode == "k" { Some(k) } else { None },
        entries,
    })
}

/// `#shl-continuous ell=<float> mode=<tau|k> tau=<float|inf> k=<int>`
/// followed by `key<TAB>count` lines with counts at 17 significant digits.
pub fn write_continuous_sample<W: Write>(sample: &ContinuousSample, out: &mut W) -> Result<()> {
    let mode = if sample.k.is_some() { "k" } else { "tau" };
    writeln!(
        out,
        "#shl-continuous ell={} mode={mode} tau={} k={}",
        sample.ell,
        sample.tau,
        sample.k.unwrap_or(0)
    )?;
    for (key, count) in &sample.entries {
        writeln!(out, "{key}\t{count:.16e}")?;
    }
    Ok(())
}

pub fn read_continuous_sample<R: BufRead>(reader: R) -> Result<ContinuousSample> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sample file".into()))??;
    let fields = parse_fields(&header, "#shl-continuous")?;
    let ell = parse_f64(field(&fields, "ell")?)?;
    let tau = parse_threshold(field(&fields, "tau")?)?;
    let k: usize = field(&fields, "k")?
        .parse()
        .map_err(|_| Error::Parse("bad k".into()))?;
    let mode = field(&fields, "mode")?;
    let mut entries = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (key, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("bad sample line: {line}")))?;
        let key: Key = key.parse().map_err(|_| Error::Parse("bad key".into()))?;
        entries.insert(key, parse_f64(count)?);
    }
    Ok(ContinuousSample {
        ell,
        tau,
        k: if mode == "k" { Some(k) } else { None },
        entries,
    })
}

/// `#pass1 scheme=<d|c> ell=<..> mode=<tau|k> k=<..> tau=<..> hashseed=<u64>`
/// followed by `key<TAB>seed` lines.
pub fn write_pass_one<W: Write>(summary: &PassOneSummary, out: &mut W) -> Result<()> {
    let (scheme, ell) = match summary.scheme {
        Scheme::Discrete(ell) => ("d", ell.to_string()),
        Scheme::Continuous(ell) => ("c", ell.to_string()),
    };
    match summary.mode {
        SummaryMode::FixedThreshold(tau) => writeln!(
            out,
            "#pass1 scheme={scheme} ell={ell} mode=tau tau={tau} hashseed={}",
            summary.hash_seed
        )?,
        SummaryMode::FixedSize(k) => writeln!(
            out,
            "#pass1 scheme={scheme} ell={ell} mode=k k={k} tau={} hashseed={}",
            summary.tau, summary.hash_seed
        )?,
    }
    for (key, seed) in &summary.entries {
        writeln!(out, "{key}\t{seed:.16e}")?;
    }
    Ok(())
}

pub fn read_pass_one<R: BufRead>(reader: R) -> Result<PassOneSummary> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty summary file".into()))??;
    let fields = parse_fields(&header, "#pass1")?;
    let ell_text = field(&fields, "ell")?;
    let scheme = match field(&fields, "scheme")? {
        "d" => Scheme::Discrete(parse_ell(ell_text)?),
        "c" => Scheme::Continuous(parse_f64(ell_text)?),
        other => return Err(Error::Parse(format!("bad scheme: {other}"))),
    };
    let (mode, tau) = match field(&fields, "mode")? {
        "tau" => {
            let tau = parse_f64(field(&fields, "tau")?)?;
            (SummaryMode::FixedThreshold(tau), Threshold::Finite(tau))
        }
        "k" => {
            let k: usize = field(&fields, "k")?
                .parse()
                .map_err(|_| Error::Parse("bad k".into()))?;
            (
                SummaryMode::FixedSize(k),
                parse_threshold(field(&fields, "tau")?)?,
            )
        }
        other => return Err(Error::Parse(format!("bad mode: {other}"))),
    };
    let hash_seed: u64 = field(&fields, "hashseed")?
        .parse()
        .map_err(|_| Error::Parse("bad hashseed".into()))?;
    let mut entries = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (key, seed) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("bad summary line: {line}")))?;
        let key: Key = key.parse().map_err(|_| Error::Parse("bad key".into()))?;
        entries.insert(key, parse_f64(seed)?);
    }
    Ok(PassOneSummary {
        scheme,
        mode,
        hash_seed,
        entries,
        tau,
    })
}

/// Pass-II summary: `key<TAB>weight` lines.
pub fn write_pass_two<W: Write>(summary: &PassTwoSummary, out: &mut W) -> Result<()> {
    for (key, weight) in &summary.weights {
        writeln!(out, "{key}\t{weight:.16e}")?;
    }
    Ok(())
}

pub fn read_pass_two<R: BufRead>(reader: R) -> Result<PassTwoSummary> {
    let mut weights = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (key, w) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("bad weights line: {line}")))?;
        let key: Key = key.parse().map_err(|_| Error::Parse("bad key".into()))?;
        weights.insert(key, parse_f64(w)?);
    }
    Ok(PassTwoSummary { weights })
}

/// `#shl-mo k=<int> L=<comma list|interval>` followed by
/// `key<TAB>weight<TAB>phi` lines.
pub fn write_multi_sample<W: Write>(sample: &MultiSample, out: &mut W) -> Result<()> {
    writeln!(out, "#shl-mo k={} L={}", sample.k, sample.caps)?;
    for (key, e) in &sample.entries {
        writeln!(out, "{key}\t{:.16e}\t{:.16e}", e.weight, e.phi)?;
    }
    Ok(())
}

pub fn read_multi_sample<R: BufRead>(reader: R) -> Result<MultiSample> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sample file".into()))??;
    let fields = parse_fields(&header, "#shl-mo")?;
    let k: usize = field(&fields, "k")?
        .parse()
        .map_err(|_| Error::Parse("bad k".into()))?;
    let caps = match field(&fields, "L")? {
        "interval" => CapSet::AllPositive,
        list => CapSet::Grid(
            list.split(',')
                .map(parse_f64)
                .collect::<Result<Vec<f64>>>()?,
        ),
    };
    let mut entries = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let key: Key = parts
            .next()
            .ok_or_else(|| Error::Parse("missing key".into()))?
            .parse()
            .map_err(|_| Error::Parse("bad key".into()))?;
        let weight = parse_f64(
            parts
                .next()
                .ok_or_else(|| Error::Parse("missing weight".into()))?,
        )?;
        let phi = parse_f64(
            parts
                .next()
                .ok_or_else(|| Error::Parse("missing phi".into()))?,
        )?;
        entries.insert(key, MultiSampleEntry { weight, phi });
    }
    Ok(MultiSample {
        k,
        caps,
        entries,
        grid: Vec::new(),
    })
}
