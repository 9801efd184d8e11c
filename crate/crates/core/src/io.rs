//! CSV and JSON readers and writers for every artifact of the pipeline.
//!
//! Months are written as `YYYY-MM`. Row errors carry the 1-based line number
//! of the file; in lenient mode they are collected instead of aborting.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::StepReport;
use crate::error::{Error, Result};
use crate::esri::{EsriProfile, EsriResult, EssentialnessTable, InputClass};
use crate::graph::{FirmId, NetworkState, SectorId};
use crate::linkfilter::{LinkInterval, Timeline, TransactionRecord};
use crate::month::Month;
use crate::params::NACE_SECTIONS;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub issues: Vec<ParseIssue>,
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let map: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        for r in required {
            if !map.contains_key(*r) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing column `{r}`"),
                });
            }
        }
        Ok(Self(map))
    }

    fn get<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> Option<&'a str> {
        self.0.get(name).and_then(|&i| rec.get(i)).map(str::trim)
    }

    fn req<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> std::result::Result<&'a str, String> {
        match self.get(rec, name) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(format!("empty `{name}`")),
        }
    }
}

fn read_rows<R: Read, T>(
    reader: R,
    required: &[&str],
    lenient: bool,
    mut parse: impl FnMut(&Columns, &csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Parsed<T>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = Columns::new(rdr.headers()?, required)?;
    let mut out = Parsed {
        rows: Vec::new(),
        issues: Vec::new(),
    };
    for rec in rdr.records() {
        let (line, parsed) = match rec {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                (line, parse(&cols, &rec))
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                (line, Err(e.to_string()))
            }
        };
        match parsed {
            Ok(v) => out.rows.push(v),
            Err(message) if lenient => out.issues.push(ParseIssue { line, message }),
            Err(message) => return Err(Error::Parse { line, message }),
        }
    }
    Ok(out)
}

fn firm(s: &str) -> std::result::Result<FirmId, String> {
    s.parse::<u64>().map(FirmId).map_err(|_| format!("invalid firm id `{s}`"))
}

fn month(s: &str) -> std::result::Result<i64, String> {
    s.parse::<Month>().map(|m| m.0)
}

fn fmt_month(m: i64) -> String {
    Month(m).to_string()
}

/// Transaction CSV `supplier_id,buyer_id,month,amount`; the amount column
/// is optional and may be empty.
pub fn read_transactions<R: Read>(reader: R, lenient: bool) -> Result<Parsed<TransactionRecord>> {
    read_rows(reader, &["supplier_id", "buyer_id", "month"], lenient, |c, r| {
        let amount = match c.get(r, "amount") {
            None | Some("") => None,
            Some(a) => Some(a.parse::<f64>().map_err(|_| format!("invalid amount `{a}`"))?),
        };
        Ok(TransactionRecord {
            supplier: firm(c.req(r, "supplier_id")?)?,
            buyer: firm(c.req(r, "buyer_id")?)?,
            month: month(c.req(r, "month")?)?,
            amount,
        })
    })
}

pub fn write_transactions<W: Write>(writer: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["supplier_id", "buyer_id", "month", "amount"])?;
    for t in records {
        let amount = t.amount.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([t.supplier.to_string(), t.buyer.to_string(), fmt_month(t.month), amount])?;
    }
    w.flush()?;
    Ok(())
}

/// Interval CSV `supplier_id,buyer_id,entry_month,exit_month`, exit exclusive.
pub fn read_intervals<R: Read>(reader: R, lenient: bool) -> Result<Parsed<LinkInterval>> {
    read_rows(reader, &["supplier_id", "buyer_id", "entry_month", "exit_month"], lenient, |c, r| {
        let iv = LinkInterval {
            supplier: firm(c.req(r, "supplier_id")?)?,
            buyer: firm(c.req(r, "buyer_id")?)?,
            entry_month: month(c.req(r, "entry_month")?)?,
            exit_month: month(c.req(r, "exit_month")?)?,
        };
        if iv.exit_month <= iv.entry_month {
            return Err("exit_month must be after entry_month".into());
        }
        Ok(iv)
    })
}

pub fn write_intervals<W: Write>(writer: W, intervals: &[LinkInterval]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["supplier_id", "buyer_id", "entry_month", "exit_month"])?;
    for iv in intervals {
        w.write_record([
            iv.supplier.to_string(),
            iv.buyer.to_string(),
            fmt_month(iv.entry_month),
            fmt_month(iv.exit_month),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeline<W: Write>(writer: W, t: &Timeline) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["month", "links", "firms"])?;
    for i in 0..t.months.len() {
        w.write_record([fmt_month(t.months[i]), t.links[i].to_string(), t.firms[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeline<R: Read>(reader: R) -> Result<Timeline> {
    let rows = read_rows(reader, &["month", "links", "firms"], false, |c, r| {
        let n = |k: &str| c.req(r, k)?.parse::<usize>().map_err(|_| format!("invalid `{k}`"));
        Ok((month(c.req(r, "month")?)?, n("links")?, n("firms")?))
    })?;
    Ok(Timeline {
        months: rows.rows.iter().map(|r| r.0).collect(),
        links: rows.rows.iter().map(|r| r.1).collect(),
        firms: rows.rows.iter().map(|r| r.2).collect(),
    })
}

/// Firm table `firm_id,sector` with sector labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FirmTable {
    pub firms: Vec<(FirmId, SectorId)>,
    pub labels: Vec<String>,
}

impl FirmTable {
    pub fn sector_map(&self) -> HashMap<FirmId, SectorId> {
        self.firms.iter().copied().collect()
    }
}

/// Reads a firm table. Without `labels`, the sector list is the NACE
/// section list when every label is a section, otherwise the sorted set of
/// labels found.
pub fn read_firm_table<R: Read>(reader: R, labels: Option<&[String]>) -> Result<FirmTable> {
    let raw = read_rows(reader, &["firm_id", "sector"], false, |c, r| {
        Ok((firm(c.req(r, "firm_id")?)?, c.req(r, "sector")?.to_string(), r.position().map(|p| p.line() as usize).unwrap_or(0)))
    })?;
    let labels: Vec<String> = match labels {
        Some(l) => l.to_vec(),
        None => {
            let found: BTreeSet<&str> = raw.rows.iter().map(|r| r.1.as_str()).collect();
            if found.iter().all(|l| NACE_SECTIONS.contains(l)) {
                NACE_SECTIONS.iter().map(|s| s.to_string()).collect()
            } else {
                found.into_iter().map(String::from).collect()
            }
        }
    };
    let index: HashMap<&str, u16> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u16)).collect();
    let mut seen = BTreeSet::new();
    let mut firms = Vec::with_capacity(raw.rows.len());
    for (id, label, line) in &raw.rows {
        let s = *index.get(label.as_str()).ok_or_else(|| Error::Parse {
            line: *line,
            message: format!("unknown sector `{label}`"),
        })?;
        if !seen.insert(*id) {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate firm id {id}"),
            });
        }
        firms.push((*id, SectorId(s)));
    }
    Ok(FirmTable { firms, labels })
}

pub fn write_firm_table<W: Write>(writer: W, state: &NetworkState, labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["firm_id", "sector"])?;
    for id in state.firm_ids() {
        let s = state.sector(id)?;
        let label = labels.get(s.index()).ok_or(Error::SectorOutOfRange {
            sector: s.index(),
            count: labels.len(),
        })?;
        w.write_record([id.to_string(), label.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Edge list `supplier_id,buyer_id`.
pub fn read_edges<R: Read>(reader: R, lenient: bool) -> Result<Parsed<(FirmId, FirmId)>> {
    read_rows(reader, &["supplier_id", "buyer_id"], lenient, |c, r| {
        let s = firm(c.req(r, "supplier_id")?)?;
        let b = firm(c.req(r, "buyer_id")?)?;
        if s == b {
            return Err(format!("self-loop on firm {s}"));
        }
        Ok((s, b))
    })
}

pub fn write_edges<W: Write>(writer: W, state: &NetworkState) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["supplier_id", "buyer_id"])?;
    for (s, b) in state.edges() {
        w.write_record([s.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// A network loaded from an edge list and optional firm table.
#[derive(Clone, Debug)]
pub struct LoadedNetwork {
    pub state: NetworkState,
    pub labels: Vec<String>,
}

/// Builds a network from edges and a firm table. Without a table, every
/// firm on an edge goes into one sector labelled `ALL`. Firms in the table
/// without edges are kept.
pub fn build_network(edges: &[(FirmId, FirmId)], firms: Option<&FirmTable>) -> Result<LoadedNetwork> {
    let (labels, table): (Vec<String>, Vec<(FirmId, SectorId)>) = match firms {
        Some(t) => (t.labels.clone(), t.firms.clone()),
        None => {
            let ids: BTreeSet<FirmId> = edges.iter().flat_map(|&(s, b)| [s, b]).collect();
            (vec!["ALL".to_string()], ids.into_iter().map(|f| (f, SectorId(0))).collect())
        }
    };
    let mut state = NetworkState::new(labels.len());
    for &(f, s) in &table {
        state.insert_firm(f, s)?;
    }
    for (i, &(s, b)) in edges.iter().enumerate() {
        let added = state.add_edge(s, b).map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        if !added {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("duplicate edge {s} -> {b}"),
            });
        }
    }
    Ok(LoadedNetwork { state, labels })
}

pub fn read_network(edges: &Path, firms: Option<&Path>) -> Result<LoadedNetwork> {
    let e = read_edges(open(edges)?, false)?.rows;
    let t = firms.map(|p| read_firm_table(open(p)?, None)).transpose()?;
    build_network(&e, t.as_ref())
}

/// Writes `<stem>_edges.csv` and `<stem>_firms.csv` into `dir`.
pub fn write_network(dir: &Path, stem: &str, state: &NetworkState, labels: &[String]) -> Result<()> {
    write_edges(create(&dir.join(format!("{stem}_edges.csv")))?, state)?;
    write_firm_table(create(&dir.join(format!("{stem}_firms.csv")))?, state, labels)
}

pub fn write_step_reports<W: Write>(writer: W, reports: &[StepReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(r)?;
    }
    if reports.is_empty() {
        w.write_record([
            "step", "N", "L", "firms_in", "firms_out", "links_in", "links_out", "isolated_removed", "month",
            "links_terminated", "stubs", "discarded_stubs", "extra_links",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_step_reports<R: Read>(reader: R) -> Result<Vec<StepReport>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e: csv::Error| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Essentialness CSV `input_sector,firm_sector,class`. Every sector pair
/// must be listed exactly once.
pub fn read_essentialness<R: Read>(reader: R, labels: &[String]) -> Result<EssentialnessTable> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let rows = read_rows(reader, &["input_sector", "firm_sector", "class"], false, |c, r| {
        let sector = |k: &str| -> std::result::Result<usize, String> {
            let v = c.req(r, k)?;
            index.get(v).copied().ok_or_else(|| format!("unknown sector `{v}`"))
        };
        let class: InputClass = c.req(r, "class")?.parse().map_err(|e: Error| e.to_string())?;
        Ok((sector("input_sector")?, sector("firm_sector")?, class, r.position().map(|p| p.line() as usize).unwrap_or(0)))
    })?;
    let n = labels.len();
    let mut seen = vec![vec![false; n]; n];
    let mut table = EssentialnessTable::uniform(labels, InputClass::NotUsed);
    for (i, f, class, line) in rows.rows {
        if seen[i][f] {
            return Err(Error::Parse {
                line,
                message: format!("duplicate entry {} -> {}", labels[i], labels[f]),
            });
        }
        seen[i][f] = true;
        table.set(i, f, class);
    }
    let missing = seen.iter().flatten().filter(|s| !**s).count();
    if missing > 0 {
        return Err(Error::Inconsistent(format!("essentialness table misses {missing} of {} sector pairs", n * n)));
    }
    Ok(table)
}

pub fn write_essentialness<W: Write>(writer: W, table: &EssentialnessTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["input_sector", "firm_sector", "class"])?;
    for (i, a) in table.labels.iter().enumerate() {
        for (f, b) in table.labels.iter().enumerate() {
            w.write_record([a.as_str(), b.as_str(), table.get(i, f).as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// ESRI CSV `firm_id,esri,rank`, rank 1 = most risky.
pub fn write_esri<W: Write>(writer: W, result: &EsriResult) -> Result<()> {
    let p = result.profile();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["firm_id", "esri", "rank"])?;
    for (r, (f, v)) in p.firms.iter().zip(&p.values).enumerate() {
        w.write_record([f.to_string(), v.to_string(), (r + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_esri<R: Read>(reader: R) -> Result<EsriProfile> {
    let rows = read_rows(reader, &["firm_id", "esri", "rank"], false, |c, r| {
        let v = c.req(r, "esri")?;
        let rank = c.req(r, "rank")?;
        Ok((
            rank.parse::<usize>().map_err(|_| format!("invalid rank `{rank}`"))?,
            firm(c.req(r, "firm_id")?)?,
            v.parse::<f64>().map_err(|_| format!("invalid esri `{v}`"))?,
        ))
    })?;
    let mut rows = rows.rows;
    rows.sort_by_key(|r| r.0);
    Ok(EsriProfile {
        firms: rows.iter().map(|r| r.1).collect(),
        values: rows.iter().map(|r| r.2).collect(),
    })
}

/// Two-column curve CSV.
pub fn write_curve<W: Write>(writer: W, header: [&str; 2], points: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (a, b) in points {
        w.write_record([a, b])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub inputs: Vec<String>,
    pub config: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

impl RunManifest {
    pub fn start(command: &str, inputs: &[&Path], config: Option<&Path>, seed: u64, out: &Path) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config: config.map(|p| p.display().to_string()),
            seed,
            output_dir: out.display().to_string(),
            started: now(),
            finished: 0,
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished = now();
        write_json(&dir.join("manifest.json"), &self)
    }
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
