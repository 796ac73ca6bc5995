//! Per-sample rollout traces.
//!
//! A trace is a flat list of records, one per generated sample, carrying the
//! global training step, prompt and response lengths in tokens and the task
//! label. Traces carry no arrival timestamps: every sample of a step is
//! treated as arriving at the same instant, in file order.
//!
//! Two on-disk formats are supported. CSV has a mandatory header
//! `step,input_len,output_len,type` followed by any of the optional columns
//! `prompt_id,sample_id,turn_count,tool_latencies_ms,filtered`; tool
//! latencies are `;`-joined inside one cell. JSONL uses the same keys, one
//! object per line. Optional fields that no record carries are omitted on
//! write, and an absent field is never encoded as a sentinel number.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskType {
    Mathematics,
    Programming,
    Searching,
    VideoUnderstanding,
    ImageUnderstanding,
    ToolUse,
    Other(String),
}

impl TaskType {
    pub const KNOWN: [TaskType; 6] = [
        TaskType::Mathematics,
        TaskType::Programming,
        TaskType::Searching,
        TaskType::VideoUnderstanding,
        TaskType::ImageUnderstanding,
        TaskType::ToolUse,
    ];

    /// Maps a label onto a known task type, falling back to `Other`.
    /// Matching ignores case and treats `-` and spaces as `_`.
    pub fn from_label(label: &str) -> TaskType {
        if let Some(t) = Self::KNOWN.iter().find(|t| t.as_str() == label) {
            return t.clone();
        }
        let norm: String = label
            .trim()
            .chars()
            .map(|c| match c {
                '-' | ' ' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        match norm.as_str() {
            "mathematics" | "math" => TaskType::Mathematics,
            "programming" | "coding" => TaskType::Programming,
            "searching" | "search" => TaskType::Searching,
            "video_understanding" => TaskType::VideoUnderstanding,
            "image_understanding" => TaskType::ImageUnderstanding,
            "tool_use" => TaskType::ToolUse,
            _ => TaskType::Other(label.trim().to_string()),
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, TaskType::Other(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            TaskType::Mathematics => "mathematics",
            TaskType::Programming => "programming",
            TaskType::Searching => "searching",
            TaskType::VideoUnderstanding => "video_understanding",
            TaskType::ImageUnderstanding => "image_understanding",
            TaskType::ToolUse => "tool_use",
            TaskType::Other(name) => name,
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(TaskType::from_label(s))
    }
}

impl Serialize for TaskType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TaskType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(TaskType::from_label(&s))
    }
}

/// One rollout sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub input_len: u64,
    pub output_len: u64,
    #[serde(rename = "type")]
    pub task_type: TaskType,
    /// Groups the samples drawn from one prompt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn_count: Option<u32>,
    /// One entry per tool call made by this sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_latencies_ms: Option<Vec<f64>>,
    /// Removed by the quality filter after rollout.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub filtered: bool,
}

impl TraceRecord {
    pub fn new(step: u64, input_len: u64, output_len: u64, task_type: TaskType) -> Self {
        TraceRecord {
            step,
            input_len,
            output_len,
            task_type,
            prompt_id: None,
            sample_id: None,
            turn_count: None,
            tool_latencies_ms: None,
            filtered: false,
        }
    }

    pub fn with_prompt(mut self, prompt_id: impl Into<String>, sample_id: Option<u32>) -> Self {
        self.prompt_id = Some(prompt_id.into());
        self.sample_id = sample_id;
        self
    }

    pub fn total_len(&self) -> u64 {
        self.input_len + self.output_len
    }

    /// Sum of this sample's tool-call latencies, in seconds.
    pub fn tool_time_s(&self) -> f64 {
        self.tool_latencies_ms
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / 1000.0)
            .unwrap_or(0.0)
    }

    /// Checks the record-level invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sample_id.is_some() && self.prompt_id.is_none() {
            return Err("sample_id present without prompt_id".into());
        }
        if matches!(&self.prompt_id, Some(p) if p.is_empty()) {
            return Err("prompt_id must not be empty".into());
        }
        if self.turn_count == Some(0) {
            return Err("turn_count must be at least 1".into());
        }
        if let Some(lat) = &self.tool_latencies_ms {
            if let Some(bad) = lat.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(format!("tool latency {bad} is not a finite non-negative value"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub source_name: String,
    pub token_unit: String,
}

impl Trace {
    pub fn new(source_name: impl Into<String>, records: Vec<TraceRecord>) -> Self {
        Trace {
            records,
            source_name: source_name.into(),
            token_unit: "tokens".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps only the records of one task type.
    pub fn filter_task(&self, task: &TaskType) -> Trace {
        Trace::new(
            self.source_name.clone(),
            self.records
                .iter()
                .filter(|r| &r.task_type == task)
                .cloned()
                .collect(),
        )
    }

    pub fn task_types(&self) -> Vec<TaskType> {
        let mut seen: Vec<TaskType> = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.task_type) {
                seen.push(r.task_type.clone());
            }
        }
        seen
    }
}

/// The requests of one global step, in arrival (file) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadStep {
    pub step: u64,
    pub requests: Vec<TraceRecord>,
}

impl WorkloadStep {
    pub fn new(step: u64, requests: Vec<TraceRecord>) -> Self {
        debug_assert!(requests.iter().all(|r| r.step == step));
        WorkloadStep { step, requests }
    }

    pub fn total_tokens(&self) -> u64 {
        self.requests.iter().map(TraceRecord::total_len).sum()
    }
}

/// Partitions a trace by step. Steps come out ascending and each step keeps
/// the file order of its records.
pub fn group_by_step(trace: &Trace) -> Vec<WorkloadStep> {
    let mut groups: BTreeMap<u64, Vec<TraceRecord>> = BTreeMap::new();
    for r in &trace.records {
        groups.entry(r.step).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(step, requests)| WorkloadStep { step, requests })
        .collect()
}

/// Flattens steps back into a trace.
pub fn steps_to_trace(name: &str, steps: &[WorkloadStep]) -> Trace {
    Trace::new(
        name,
        steps.iter().flat_map(|s| s.requests.iter().cloned()).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    /// Guesses the format from a file extension; anything but `.jsonl`/`.json`
    /// is read as CSV.
    pub fn from_path(path: &Path) -> TraceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonl => "jsonl",
        }
    }
}

/// Non-fatal findings from parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseWarnings {
    pub unknown_columns: Vec<String>,
    pub unknown_task_types: BTreeMap<String, usize>,
}

impl ParseWarnings {
    pub fn count(&self) -> usize {
        self.unknown_columns.len() + self.unknown_task_types.values().sum::<usize>()
    }

    fn note_task(&mut self, task: &TaskType) {
        if let TaskType::Other(name) = task {
            *self.unknown_task_types.entry(name.clone()).or_default() += 1;
        }
    }

    fn log(&self, source: &str) {
        if !self.unknown_columns.is_empty() {
            log::warn!("{source}: ignoring unknown columns {:?}", self.unknown_columns);
        }
        for (name, n) in &self.unknown_task_types {
            log::warn!("{source}: {n} record(s) with unrecognised task type `{name}`");
        }
    }
}

pub fn parse_trace(path: &Path, format: TraceFormat) -> Result<Trace> {
    parse_trace_with_warnings(path, format).map(|(t, _)| t)
}

pub fn parse_trace_with_warnings(path: &Path, format: TraceFormat) -> Result<(Trace, ParseWarnings)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (records, warnings) = match format {
        TraceFormat::Csv => read_csv(file)?,
        TraceFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    warnings.log(&path.display().to_string());
    Ok((Trace::new(name, records), warnings))
}

const REQUIRED: [&str; 4] = ["step", "input_len", "output_len", "type"];
const OPTIONAL: [&str; 5] = [
    "prompt_id",
    "sample_id",
    "turn_count",
    "tool_latencies_ms",
    "filtered",
];

fn canonical_column(name: &str) -> &str {
    match name {
        "task_type" => "type",
        other => other,
    }
}

fn parse_len(line: u64, field: &str, raw: &str) -> Result<u64> {
    let v: i64 = raw.trim().parse().map_err(|e| Error::Malformed {
        line,
        field: field.into(),
        message: format!("`{raw}`: {e}"),
    })?;
    if v < 0 {
        return Err(Error::Validation {
            line,
            message: format!("{field} = {v} is negative"),
        });
    }
    Ok(v as u64)
}

fn parse_num<T: FromStr>(line: u64, field: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| Error::Malformed {
        line,
        field: field.into(),
        message: format!("`{raw}`: {e}"),
    })
}

fn parse_bool(line: u64, field: &str, raw: &str) -> Result<bool> {
    let raw_t = raw.trim();
    match raw_t {
        "" | "0" => Ok(false),
        "1" => Ok(true),
        t if t.eq_ignore_ascii_case("false") => Ok(false),
        t if t.eq_ignore_ascii_case("true") => Ok(true),
        _ => Err(Error::Malformed {
            line,
            field: field.into(),
            message: format!("`{raw}` is not a boolean"),
        }),
    }
}

// In CSV an absent latency list is an empty cell; a present-but-empty list is `[]`.
fn parse_latency_cell(line: u64, raw: &str) -> Result<Option<Vec<f64>>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    if raw == "[]" {
        return Ok(Some(Vec::new()));
    }
    raw.split(';')
        .map(|x| parse_num::<f64>(line, "tool_latencies_ms", x))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn format_latency_cell(lat: &Option<Vec<f64>>) -> String {
    match lat {
        None => String::new(),
        Some(v) if v.is_empty() => "[]".into(),
        Some(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    }
}

fn finish_record(line: u64, rec: TraceRecord, warnings: &mut ParseWarnings) -> Result<TraceRecord> {
    rec.validate()
        .map_err(|message| Error::Validation { line, message })?;
    warnings.note_task(&rec.task_type);
    Ok(rec)
}

/// Reads CSV records from any reader.
pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<TraceRecord>, ParseWarnings)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, "header"))?.clone();
    let mut warnings = ParseWarnings::default();
    let mut cols: HashMap<&'static str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim().to_ascii_lowercase();
        let canon = canonical_column(&h);
        match REQUIRED.iter().chain(OPTIONAL.iter()).find(|c| **c == canon) {
            Some(c) => {
                cols.insert(c, i);
            }
            None if h.is_empty() => {}
            None => warnings.unknown_columns.push(h.to_string()),
        }
    }
    for req in REQUIRED {
        if !cols.contains_key(req) {
            return Err(Error::MissingColumn(req.into()));
        }
    }

    let col = |name: &str| cols.get(name).copied();
    let [c_step, c_input, c_output, c_type] = REQUIRED.map(col);
    let [c_prompt, c_sample, c_turns, c_latency, c_filtered] = OPTIONAL.map(col);

    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e, "row")),
        }
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |c: Option<usize>| c.and_then(|i| row.get(i)).unwrap_or("").trim();
        let opt = |c: Option<usize>| Some(cell(c)).filter(|s| !s.is_empty());
        let rec = TraceRecord {
            step: parse_len(line, "step", cell(c_step))?,
            input_len: parse_len(line, "input_len", cell(c_input))?,
            output_len: parse_len(line, "output_len", cell(c_output))?,
            task_type: TaskType::from_label(cell(c_type)),
            prompt_id: opt(c_prompt).map(str::to_string),
            sample_id: opt(c_sample)
                .map(|s| parse_num(line, "sample_id", s))
                .transpose()?,
            turn_count: opt(c_turns)
                .map(|s| parse_num(line, "turn_count", s))
                .transpose()?,
            tool_latencies_ms: parse_latency_cell(line, cell(c_latency))?,
            filtered: parse_bool(line, "filtered", cell(c_filtered))?,
        };
        records.push(finish_record(line, rec, &mut warnings)?);
    }
    Ok((records, warnings))
}

fn csv_error(e: csv::Error, what: &str) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Malformed {
        line,
        field: what.into(),
        message: e.to_string(),
    }
}

const FIELDS: [&str; 9] = [
    "step",
    "input_len",
    "output_len",
    "type",
    "prompt_id",
    "sample_id",
    "turn_count",
    "tool_latencies_ms",
    "filtered",
];

/// A JSONL object key: the slot of a known field, or an unknown name.
enum JsonKey {
    Known { slot: usize, alias: bool },
    Unknown(String),
}

impl<'de> Deserialize<'de> for JsonKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = JsonKey;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a field name")
            }
            fn visit_str<E: de::Error>(self, key: &str) -> std::result::Result<JsonKey, E> {
                let canon = canonical_column(key);
                Ok(match FIELDS.iter().position(|f| *f == canon) {
                    Some(slot) => JsonKey::Known {
                        slot,
                        alias: canon != key,
                    },
                    None => JsonKey::Unknown(key.to_string()),
                })
            }
        }
        d.deserialize_str(V)
    }
}

/// The known fields of one JSONL object, plus the names of unknown ones.
#[derive(Default)]
struct JsonFields {
    values: [Option<Value>; 9],
    unknown: Vec<String>,
}

impl JsonFields {
    fn get(&self, key: &str) -> Option<&Value> {
        let slot = FIELDS.iter().position(|f| *f == key)?;
        self.values[slot].as_ref()
    }
}

impl<'de> Deserialize<'de> for JsonFields {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = JsonFields;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<JsonFields, A::Error> {
                let mut out = JsonFields::default();
                while let Some(key) = map.next_key::<JsonKey>()? {
                    match key {
                        JsonKey::Known { slot, alias } => {
                            let v: Value = map.next_value()?;
                            // the canonical name wins over its alias
                            if !alias || out.values[slot].is_none() {
                                out.values[slot] = Some(v);
                            }
                        }
                        JsonKey::Unknown(name) => {
                            map.next_value::<de::IgnoredAny>()?;
                            out.unknown.push(name);
                        }
                    }
                }
                Ok(out)
            }
        }
        d.deserialize_map(V)
    }
}

fn json_len(line: u64, obj: &JsonFields, key: &str) -> Result<u64> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(Error::Malformed {
            line,
            field: key.into(),
            message: "missing".into(),
        }),
        Some(Value::Number(n)) => {
            if let Some(v) = n.as_u64() {
                Ok(v)
            } else if n.as_i64().is_some() || n.as_f64().is_some_and(|f| f < 0.0) {
                Err(Error::Validation {
                    line,
                    message: format!("{key} = {n} is negative"),
                })
            } else {
                Err(Error::Malformed {
                    line,
                    field: key.into(),
                    message: format!("{n} is not an integer"),
                })
            }
        }
        Some(Value::String(s)) => parse_len(line, key, s),
        Some(other) => Err(Error::Malformed {
            line,
            field: key.into(),
            message: format!("unexpected {other}"),
        }),
    }
}

fn json_opt_u32(line: u64, obj: &JsonFields, key: &str) -> Result<Option<u32>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .map(Some)
            .ok_or_else(|| Error::Malformed {
                line,
                field: key.into(),
                message: format!("{n} is not a non-negative 32-bit integer"),
            }),
        Some(other) => Err(Error::Malformed {
            line,
            field: key.into(),
            message: format!("unexpected {other}"),
        }),
    }
}

/// Reads JSONL records from any buffered reader. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<(Vec<TraceRecord>, ParseWarnings)> {
    let mut warnings = ParseWarnings::default();
    let mut unknown: Vec<String> = Vec::new();
    let mut records = Vec::new();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx as u64 + 1;
        let text = text.map_err(|e| Error::Malformed {
            line,
            field: "line".into(),
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let obj: JsonFields = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            line,
            field: "json".into(),
            message: e.to_string(),
        })?;
        for key in &obj.unknown {
            if !unknown.contains(key) {
                unknown.push(key.clone());
            }
        }
        let task_type = match obj.get("type") {
            Some(Value::String(s)) => TaskType::from_label(s),
            _ => {
                return Err(Error::Malformed {
                    line,
                    field: "type".into(),
                    message: "missing or not a string".into(),
                })
            }
        };
        let prompt_id = match obj.get("prompt_id") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(other) => {
                return Err(Error::Malformed {
                    line,
                    field: "prompt_id".into(),
                    message: format!("unexpected {other}"),
                })
            }
        };
        let tool_latencies_ms = match obj.get("tool_latencies_ms") {
            None | Some(Value::Null) => None,
            Some(Value::Array(xs)) => Some(
                xs.iter()
                    .map(|x| {
                        x.as_f64().ok_or_else(|| Error::Malformed {
                            line,
                            field: "tool_latencies_ms".into(),
                            message: format!("{x} is not a number"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            Some(other) => {
                return Err(Error::Malformed {
                    line,
                    field: "tool_latencies_ms".into(),
                    message: format!("expected an array, got {other}"),
                })
            }
        };
        let filtered = match obj.get("filtered") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(other) => {
                return Err(Error::Malformed {
                    line,
                    field: "filtered".into(),
                    message: format!("expected a boolean, got {other}"),
                })
            }
        };
        let rec = TraceRecord {
            step: json_len(line, &obj, "step")?,
            input_len: json_len(line, &obj, "input_len")?,
            output_len: json_len(line, &obj, "output_len")?,
            task_type,
            prompt_id,
            sample_id: json_opt_u32(line, &obj, "sample_id")?,
            turn_count: json_opt_u32(line, &obj, "turn_count")?,
            tool_latencies_ms,
            filtered,
        };
        records.push(finish_record(line, rec, &mut warnings)?);
    }
    warnings.unknown_columns = unknown;
    Ok((records, warnings))
}

pub fn write_trace(trace: &Trace, path: &Path, format: TraceFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        TraceFormat::Csv => write_csv(&trace.records, &mut w),
        TraceFormat::Jsonl => write_jsonl(&trace.records, &mut w),
    }
    .and_then(|_| w.flush().map_err(|e| Error::io(path, e)))
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Writes CSV, emitting only the optional columns some record uses.
pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let has_prompt = records.iter().any(|r| r.prompt_id.is_some());
    let has_sample = records.iter().any(|r| r.sample_id.is_some());
    let has_turns = records.iter().any(|r| r.turn_count.is_some());
    let has_tools = records.iter().any(|r| r.tool_latencies_ms.is_some());
    let has_filtered = records.iter().any(|r| r.filtered);

    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    for (present, name) in [
        (has_prompt, "prompt_id"),
        (has_sample, "sample_id"),
        (has_turns, "turn_count"),
        (has_tools, "tool_latencies_ms"),
        (has_filtered, "filtered"),
    ] {
        if present {
            header.push(name);
        }
    }
    w.write_record(&header).map_err(csv_write_error)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        row.clear();
        row.push(r.step.to_string());
        row.push(r.input_len.to_string());
        row.push(r.output_len.to_string());
        row.push(r.task_type.to_string());
        if has_prompt {
            row.push(r.prompt_id.clone().unwrap_or_default());
        }
        if has_sample {
            row.push(r.sample_id.map(|v| v.to_string()).unwrap_or_default());
        }
        if has_turns {
            row.push(r.turn_count.map(|v| v.to_string()).unwrap_or_default());
        }
        if has_tools {
            row.push(format_latency_cell(&r.tool_latencies_ms));
        }
        if has_filtered {
            row.push(r.filtered.to_string());
        }
        w.write_record(&row).map_err(csv_write_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::Simulation(format!("csv write failed: {other:?}")),
    }
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}
