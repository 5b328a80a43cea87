//! Format-specific decoding into the canonical [`PageHistory`].

use std::collections::HashSet;
use std::io::Write;

use chrono::DateTime;
use quick_xml::events::Event;
use serde::Deserialize;

use super::{classify_bot, BotPolicy, IngestError, PageHistory, Revision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryFormat {
    ApiJson,
    DumpXml,
    FixtureCsv,
}

impl std::str::FromStr for HistoryFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api-json" => Ok(Self::ApiJson),
            "dump-xml" => Ok(Self::DumpXml),
            "fixture-csv" => Ok(Self::FixtureCsv),
            other => Err(format!("unknown history format: {other}")),
        }
    }
}

/// Decode raw bytes in the declared format. Unordered input is accepted and
/// re-sorted; the result is canonical regardless of source format.
pub fn parse_history(
    raw: &[u8],
    format: HistoryFormat,
    policy: &BotPolicy,
) -> Result<PageHistory, IngestError> {
    parse_history_with_meta(raw, format, policy, 0, "")
}

/// Like [`parse_history`], with page id and title supplied for formats that
/// do not carry them (fixture CSV). Formats that do carry them win.
pub fn parse_history_with_meta(
    raw: &[u8],
    format: HistoryFormat,
    policy: &BotPolicy,
    page_id: u64,
    title: &str,
) -> Result<PageHistory, IngestError> {
    match format {
        HistoryFormat::ApiJson => parse_api_json(raw, policy),
        HistoryFormat::DumpXml => parse_dump_xml(raw, policy),
        HistoryFormat::FixtureCsv => parse_fixture_csv(raw, policy, page_id, title),
    }
}

fn parse_timestamp(ts: &str, locus: &str) -> Result<i64, IngestError> {
    // canonical fixtures carry epoch seconds, API/dump carry ISO 8601
    if let Ok(v) = ts.parse::<i64>() {
        return Ok(v);
    }
    DateTime::parse_from_rfc3339(ts)
        .map(|t| t.timestamp())
        .map_err(|e| IngestError::parse(format!("{locus}.timestamp"), e.to_string()))
}

/// Derive per-revision deltas from sizes once the order is canonical.
fn fill_deltas(revisions: &mut [Revision]) {
    revisions.sort_by_key(|r| (r.timestamp, r.rev_id));
    for i in (1..revisions.len()).rev() {
        revisions[i].size_delta = revisions[i].byte_size as i64 - revisions[i - 1].byte_size as i64;
    }
    if let Some(first) = revisions.first_mut() {
        first.size_delta = first.byte_size as i64;
    }
}

pub(super) fn fill_deltas_and_bots(revisions: &mut [Revision], policy: &BotPolicy) {
    fill_deltas(revisions);
    resolve_bots(revisions, policy);
}

fn resolve_bots(revisions: &mut [Revision], policy: &BotPolicy) {
    for r in revisions {
        let flags: HashSet<String> = r.tags.iter().cloned().collect();
        r.is_bot = classify_bot(&r.user_key, &flags, policy);
    }
}

// ---------------------------------------------------------------- api-json

#[derive(Deserialize)]
struct ApiResponse {
    query: Option<ApiQuery>,
    #[serde(rename = "continue")]
    cont: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ApiQuery {
    pages: Vec<ApiPage>,
}

#[derive(Deserialize)]
struct ApiPage {
    pageid: Option<u64>,
    title: Option<String>,
    #[serde(default)]
    missing: bool,
    #[serde(default)]
    revisions: Vec<ApiRevision>,
}

#[derive(Deserialize)]
struct ApiRevision {
    revid: u64,
    parentid: Option<u64>,
    timestamp: String,
    user: Option<String>,
    sha1: Option<String>,
    size: Option<u64>,
    comment: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    minor: bool,
}

/// Continuation token of an API payload, if any.
pub(super) fn api_continue_token(raw: &[u8]) -> Option<String> {
    let resp: ApiResponse = serde_json::from_slice(raw).ok()?;
    resp.cont
        .and_then(|c| c.get("rvcontinue").and_then(|v| v.as_str().map(str::to_string)))
}

pub(super) fn parse_api_page(raw: &[u8]) -> Result<(u64, String, Vec<Revision>), IngestError> {
    let resp: ApiResponse = serde_json::from_slice(raw)
        .map_err(|e| IngestError::parse("api-json", e.to_string()))?;
    let query = resp
        .query
        .ok_or_else(|| IngestError::parse("api-json", "missing field `query`"))?;
    let page = query
        .pages
        .into_iter()
        .next()
        .ok_or_else(|| IngestError::parse("api-json.query.pages", "no pages in response"))?;
    let title = page.title.clone().unwrap_or_default();
    if page.missing {
        return Err(IngestError::NotFound(title));
    }
    let page_id = page
        .pageid
        .ok_or_else(|| IngestError::parse("api-json.query.pages[0]", "missing field `pageid`"))?;
    let mut revisions = Vec::with_capacity(page.revisions.len());
    for (i, r) in page.revisions.into_iter().enumerate() {
        let locus = format!("api-json.revisions[{i}]");
        revisions.push(Revision {
            rev_id: r.revid,
            parent_id: r.parentid.filter(|&p| p != 0),
            timestamp: parse_timestamp(&r.timestamp, &locus)?,
            user_key: r
                .user
                .ok_or_else(|| IngestError::parse(format!("{locus}.user"), "missing field"))?,
            content_hash: r.sha1.unwrap_or_default(),
            byte_size: r
                .size
                .ok_or_else(|| IngestError::parse(format!("{locus}.size"), "missing field"))?,
            size_delta: 0,
            comment: r.comment.unwrap_or_default(),
            tags: r.tags,
            is_minor: r.minor,
            is_bot: false,
        });
    }
    Ok((page_id, title, revisions))
}

fn parse_api_json(raw: &[u8], policy: &BotPolicy) -> Result<PageHistory, IngestError> {
    let (page_id, title, mut revisions) = parse_api_page(raw)?;
    fill_deltas(&mut revisions);
    resolve_bots(&mut revisions, policy);
    PageHistory::canonicalize(page_id, title, revisions)
}

// ---------------------------------------------------------------- dump-xml

fn parse_dump_xml(raw: &[u8], policy: &BotPolicy) -> Result<PageHistory, IngestError> {
    let mut reader = quick_xml::Reader::from_reader(raw);
    reader.config_mut().trim_text(true);

    let mut path: Vec<String> = Vec::new();
    let mut page_id = 0u64;
    let mut title = String::new();
    let mut revisions: Vec<Revision> = Vec::new();
    let mut cur: Option<Revision> = None;
    let mut buf = Vec::new();

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| IngestError::parse("dump-xml", e.to_string()))?;
        match event {
            Event::Start(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).to_string();
                if name == "revision" {
                    cur = Some(Revision {
                        rev_id: 0,
                        parent_id: None,
                        timestamp: 0,
                        user_key: String::new(),
                        content_hash: String::new(),
                        byte_size: 0,
                        size_delta: 0,
                        comment: String::new(),
                        tags: vec![],
                        is_minor: false,
                        is_bot: false,
                    });
                }
                if name == "text" {
                    if let Some(rev) = cur.as_mut() {
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref() == b"bytes" {
                                let v = String::from_utf8_lossy(&attr.value).to_string();
                                rev.byte_size = v.parse().map_err(|_| {
                                    IngestError::parse("dump-xml.text.bytes", "not an integer")
                                })?;
                            }
                        }
                    }
                }
                path.push(name);
            }
            Event::Empty(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).to_string();
                if let Some(rev) = cur.as_mut() {
                    if name == "minor" {
                        rev.is_minor = true;
                    }
                    if name == "text" {
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref() == b"bytes" {
                                let v = String::from_utf8_lossy(&attr.value).to_string();
                                rev.byte_size = v.parse().map_err(|_| {
                                    IngestError::parse("dump-xml.text.bytes", "not an integer")
                                })?;
                            }
                        }
                    }
                }
            }
            Event::Text(ref t) => {
                let text = t
                    .unescape()
                    .map_err(|e| IngestError::parse("dump-xml", e.to_string()))?
                    .to_string();
                let at = |suffix: &[&str]| path.len() >= suffix.len() && path.ends_with(
                    &suffix.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                );
                if at(&["page", "title"]) {
                    title = text;
                } else if at(&["page", "id"]) {
                    page_id = text
                        .parse()
                        .map_err(|_| IngestError::parse("dump-xml.page.id", "not an integer"))?;
                } else if let Some(rev) = cur.as_mut() {
                    if at(&["revision", "id"]) {
                        rev.rev_id = text.parse().map_err(|_| {
                            IngestError::parse("dump-xml.revision.id", "not an integer")
                        })?;
                    } else if at(&["revision", "parentid"]) {
                        rev.parent_id = text.parse().ok();
                    } else if at(&["revision", "timestamp"]) {
                        rev.timestamp = parse_timestamp(&text, "dump-xml.revision")?;
                    } else if at(&["contributor", "username"]) || at(&["contributor", "ip"]) {
                        rev.user_key = text;
                    } else if at(&["revision", "comment"]) {
                        rev.comment = text;
                    } else if at(&["revision", "sha1"]) {
                        rev.content_hash = text;
                    }
                }
            }
            Event::End(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).to_string();
                if name == "revision" {
                    if let Some(rev) = cur.take() {
                        revisions.push(rev);
                    }
                }
                while let Some(last) = path.pop() {
                    if last == name {
                        break;
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    fill_deltas(&mut revisions);
    resolve_bots(&mut revisions, policy);
    PageHistory::canonicalize(page_id, title, revisions)
}

// ------------------------------------------------------------- fixture-csv

pub const FIXTURE_CSV_HEADER: &str =
    "rev_id,parent_id,timestamp,user_key,content_hash,byte_size,size_delta,comment,tags,is_minor";

fn parse_fixture_csv(
    raw: &[u8],
    policy: &BotPolicy,
    page_id: u64,
    title: &str,
) -> Result<PageHistory, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw);
    let mut revisions = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let locus = format!("fixture-csv row {}", i + 2);
        let record = record.map_err(|e| IngestError::parse(&locus, e.to_string()))?;
        if record.len() != 10 {
            return Err(IngestError::parse(&locus, format!("expected 10 fields, got {}", record.len())));
        }
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let parse_int = |idx: usize, name: &str| -> Result<i64, IngestError> {
            field(idx)
                .parse::<i64>()
                .map_err(|_| IngestError::parse(format!("{locus}.{name}"), "not an integer"))
        };
        let tags: Vec<String> = field(8)
            .split(';')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        revisions.push(Revision {
            rev_id: parse_int(0, "rev_id")? as u64,
            parent_id: if field(1).is_empty() {
                None
            } else {
                Some(parse_int(1, "parent_id")? as u64)
            },
            timestamp: parse_timestamp(field(2), &locus)?,
            user_key: field(3).to_string(),
            content_hash: field(4).to_string(),
            byte_size: parse_int(5, "byte_size")? as u64,
            size_delta: parse_int(6, "size_delta")?,
            comment: field(7).to_string(),
            tags,
            is_minor: field(9) == "1" || field(9).eq_ignore_ascii_case("true"),
            is_bot: false,
        });
    }
    resolve_bots(&mut revisions, policy);
    PageHistory::canonicalize(page_id, title.to_string(), revisions)
}

/// Serialize a canonical history back to the fixture CSV format.
pub fn write_fixture_csv<W: Write>(history: &PageHistory, writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FIXTURE_CSV_HEADER.split(','))
        .map_err(|e| IngestError::parse("fixture-csv", e.to_string()))?;
    for r in &history.revisions {
        w.write_record([
            r.rev_id.to_string(),
            r.parent_id.map(|p| p.to_string()).unwrap_or_default(),
            r.timestamp.to_string(),
            r.user_key.clone(),
            r.content_hash.clone(),
            r.byte_size.to_string(),
            r.size_delta.to_string(),
            r.comment.clone(),
            r.tags.join(";"),
            if r.is_minor { "1".into() } else { "0".into() },
        ])
        .map_err(|e| IngestError::parse("fixture-csv", e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV_12: &str = include_str!("../../tests/data/page12.csv");
    const JSON_12: &str = include_str!("../../tests/data/page12.json");
    const XML_12: &str = include_str!("../../tests/data/page12.xml");

    fn policy() -> BotPolicy {
        BotPolicy::default()
    }

    #[test]
    fn csv_out_of_order_is_sorted() {
        let raw = format!(
            "{FIXTURE_CSV_HEADER}\n\
             3,2,300,A,h3,30,10,,,0\n\
             1,,100,A,h1,10,10,,,0\n\
             2,1,200,B,h2,20,10,,,0\n"
        );
        let h = parse_history(raw.as_bytes(), HistoryFormat::FixtureCsv, &policy()).unwrap();
        let ids: Vec<u64> = h.revisions.iter().map(|r| r.rev_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn empty_revision_list_is_error() {
        let raw = format!("{FIXTURE_CSV_HEADER}\n");
        let err = parse_history(raw.as_bytes(), HistoryFormat::FixtureCsv, &policy()).unwrap_err();
        assert!(matches!(err, IngestError::EmptyHistory));
    }

    #[test]
    fn schema_violation_names_locus() {
        let raw = format!("{FIXTURE_CSV_HEADER}\n1,,not_a_time,A,h1,10,10,,,0\n");
        let err = parse_history(raw.as_bytes(), HistoryFormat::FixtureCsv, &policy()).unwrap_err();
        match err {
            IngestError::Parse { locus, .. } => assert!(locus.contains("row 2"), "{locus}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn cross_format_equivalence() {
        let from_json = parse_history(JSON_12.as_bytes(), HistoryFormat::ApiJson, &policy()).unwrap();
        let from_xml = parse_history(XML_12.as_bytes(), HistoryFormat::DumpXml, &policy()).unwrap();
        let from_csv = parse_history_with_meta(
            CSV_12.as_bytes(),
            HistoryFormat::FixtureCsv,
            &policy(),
            from_json.page_id,
            &from_json.title,
        )
        .unwrap();
        assert_eq!(from_json.len(), 12);
        assert_eq!(from_json, from_csv);
        assert_eq!(from_json, from_xml);
    }

    #[test]
    fn parse_is_idempotent() {
        let a = parse_history(JSON_12.as_bytes(), HistoryFormat::ApiJson, &policy()).unwrap();
        let b = parse_history(JSON_12.as_bytes(), HistoryFormat::ApiJson, &policy()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let h = parse_history(JSON_12.as_bytes(), HistoryFormat::ApiJson, &policy()).unwrap();
        let mut out = Vec::new();
        write_fixture_csv(&h, &mut out).unwrap();
        let back = parse_history_with_meta(
            &out,
            HistoryFormat::FixtureCsv,
            &policy(),
            h.page_id,
            &h.title,
        )
        .unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn missing_page_is_not_found() {
        let raw = br#"{"query":{"pages":[{"title":"Nope","missing":true}]}}"#;
        let err = parse_history(raw, HistoryFormat::ApiJson, &policy()).unwrap_err();
        assert!(matches!(err, IngestError::NotFound(_)));
    }

    #[test]
    fn malformed_json_names_field() {
        let raw = br#"{"query":{"pages":[{"pageid":7,"title":"T","revisions":[{"revid":1,"timestamp":"2020-01-01T00:00:00Z","size":10}]}]}}"#;
        let err = parse_history(raw, HistoryFormat::ApiJson, &policy()).unwrap_err();
        match err {
            IngestError::Parse { locus, .. } => assert!(locus.contains("user"), "{locus}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
