//! CSV formats for decision logs, outcomes and tidy summaries.
//!
//! Files written here start with a `# stoplab <schema> v<N>` comment line.
//! Readers skip `#` lines, so files produced elsewhere without the marker are
//! accepted as long as the header row matches.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::{DecisionRecord, OutcomeRecord};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const DECISION_COLUMNS: [&str; 8] = [
    "player_id",
    "game_number",
    "box_index",
    "nondominated_count",
    "box_value",
    "percentile",
    "stopped",
    "forced",
];

pub const OUTCOME_COLUMNS: [&str; 7] = [
    "player_id",
    "game_number",
    "won",
    "error_type",
    "stop_index",
    "max_index",
    "depth",
];

/// Writes `rows` as CSV under a schema marker, checking that the header
/// produced by serialization is exactly `columns`.
pub fn write_csv<W: Write, T: Serialize>(
    mut out: W,
    schema: &str,
    columns: &[&str],
    rows: &[T],
) -> Result<()> {
    if let Some(first) = rows.first() {
        let mut probe = csv::Writer::from_writer(Vec::new());
        probe.serialize(first)?;
        let bytes = probe.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let header = String::from_utf8_lossy(&bytes);
        let header = header.lines().next().unwrap_or_default();
        if header != columns.join(",") {
            return Err(Error::Schema(format!(
                "{schema}: rows serialize as [{header}], declared [{}]",
                columns.join(",")
            )));
        }
    }
    writeln!(out, "# stoplab {schema} v{SCHEMA_VERSION}")?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(columns)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a numeric table whose columns are only known at run time.
pub fn write_matrix<W: Write>(
    mut out: W,
    schema: &str,
    columns: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
        return Err(Error::Schema(format!(
            "{schema}: row {} has {} values for {} columns",
            bad + 1,
            rows[bad].len(),
            columns.len()
        )));
    }
    writeln!(out, "# stoplab {schema} v{SCHEMA_VERSION}")?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(columns)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read, T: DeserializeOwned>(input: R, columns: &[&str]) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(Error::Schema(format!(
            "expected columns [{}], found [{}]",
            columns.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(row, r)| r.map_err(|e| Error::MalformedRecord(format!("row {}: {e}", row + 1))))
        .collect()
}

pub fn write_decisions<W: Write>(out: W, records: &[DecisionRecord]) -> Result<()> {
    write_csv(out, "decision-log", &DECISION_COLUMNS, records)
}

pub fn read_decisions<R: Read>(input: R) -> Result<Vec<DecisionRecord>> {
    let records: Vec<DecisionRecord> = read_csv(input, &DECISION_COLUMNS)?;
    for (row, r) in records.iter().enumerate() {
        validate_decision(r)
            .map_err(|e| Error::MalformedRecord(format!("row {}: {e}", row + 1)))?;
    }
    Ok(records)
}

fn validate_decision(r: &DecisionRecord) -> std::result::Result<(), String> {
    if r.game_number < 1 || r.box_index < 1 {
        return Err("game_number and box_index are 1-based".into());
    }
    if r.nondominated_count < 1 || r.nondominated_count > r.box_index {
        return Err(format!(
            "nondominated_count {} outside 1..={}",
            r.nondominated_count, r.box_index
        ));
    }
    if !(0.0..=1.0).contains(&r.percentile) {
        return Err(format!("percentile {} outside [0, 1]", r.percentile));
    }
    if r.forced && !r.stopped {
        return Err("forced decisions must be stops".into());
    }
    Ok(())
}

pub fn write_outcomes<W: Write>(out: W, records: &[OutcomeRecord]) -> Result<()> {
    write_csv(out, "outcomes", &OUTCOME_COLUMNS, records)
}

pub fn read_outcomes<R: Read>(input: R) -> Result<Vec<OutcomeRecord>> {
    read_csv(input, &OUTCOME_COLUMNS)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn read_decisions_file(path: &Path) -> Result<Vec<DecisionRecord>> {
    read_decisions(open(path)?)
}

pub fn read_outcomes_file(path: &Path) -> Result<Vec<OutcomeRecord>> {
    read_outcomes(open(path)?)
}
