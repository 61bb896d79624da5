use serde_json::Value;

use super::{clamp_model_score, ModelResponse, ResponseSchema};
use crate::error::{Error, Result};
use crate::types::{parse_label, Score};

/// Parses raw model output under `schema`.
///
/// Accepts either the single-line `SCORE | REPORT` / `LABEL | REPORT` form or
/// a JSON object with `score`, `report`, `label` or `hypotheses` keys. Scores
/// outside `[-1, 1]` are clamped.
pub fn parse_structured(raw: &str, schema: ResponseSchema) -> Result<ModelResponse> {
    let text = strip_code_fence(raw.trim());
    if text.is_empty() {
        return Err(Error::Protocol("empty model output".into()));
    }
    if text.starts_with('{') || text.starts_with('[') {
        if let Ok(json) = serde_json::from_str::<Value>(text) {
            return from_json(&json, schema);
        }
    }
    from_text(text, schema)
}

fn strip_code_fence(s: &str) -> &str {
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn parse_score(s: &str) -> Result<Score> {
    let t = s.trim();
    let t = t
        .strip_prefix("SCORE")
        .or_else(|| t.strip_prefix("Score"))
        .or_else(|| t.strip_prefix("score"))
        .map(|r| r.trim_start_matches([':', '=', ' ']))
        .unwrap_or(t);
    let v: f64 = t
        .trim()
        .parse()
        .map_err(|_| Error::Protocol(format!("cannot parse score from {s:?}")))?;
    clamp_model_score(v)
}

fn non_empty(s: &str, what: &str) -> Result<String> {
    let t = s.trim();
    if t.is_empty() {
        Err(Error::Protocol(format!("{what} is empty")))
    } else {
        Ok(t.to_string())
    }
}

/// Splits `head | tail`, falling back to first line / remaining lines.
fn split_pair(text: &str) -> (&str, Option<&str>) {
    if let Some((a, b)) = text.split_once('|') {
        return (a, Some(b));
    }
    match text.split_once('\n') {
        Some((a, b)) => (a, Some(b)),
        None => (text, None),
    }
}

fn from_text(text: &str, schema: ResponseSchema) -> Result<ModelResponse> {
    let mut out = ModelResponse::default();
    match schema {
        ResponseSchema::ScoreOnly => {
            let first = text.lines().next().unwrap_or_default();
            let head = first.split('|').next().unwrap_or_default();
            out.score = Some(parse_score(head)?);
        }
        ResponseSchema::ScoreAndReport => {
            let (head, tail) = split_pair(text);
            out.score = Some(parse_score(head)?);
            out.report = Some(non_empty(tail.unwrap_or_default(), "report")?);
        }
        ResponseSchema::ReportOnly => {
            out.report = Some(non_empty(text, "report")?);
        }
        ResponseSchema::LabelAndReport => {
            let (head, tail) = split_pair(text);
            let head = head.trim().trim_start_matches("LABEL").trim_start_matches([':', ' ']);
            out.label = Some(parse_label(head).map_err(|e| Error::Protocol(e.to_string()))?);
            out.report = Some(tail.map(str::trim).unwrap_or_default().to_string());
        }
        ResponseSchema::Hypotheses => {
            let items: Vec<String> = text
                .lines()
                .map(|l| strip_bullet(l.trim()))
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            if items.is_empty() {
                return Err(Error::Protocol("no hypotheses in output".into()));
            }
            out.hypotheses = Some(items);
        }
    }
    Ok(out)
}

fn strip_bullet(line: &str) -> &str {
    let l = line.trim_start_matches(['-', '*', '•']).trim_start();
    // numbered lists: "1. foo" / "2) foo"
    let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    l.trim()
}

fn from_json(json: &Value, schema: ResponseSchema) -> Result<ModelResponse> {
    let get = |k: &str| json.get(k);
    let report = || -> Result<String> {
        match get("report").or_else(|| get("justification")) {
            Some(Value::String(s)) => Ok(s.trim().to_string()),
            _ => Err(Error::Protocol("JSON output lacks a string \"report\"".into())),
        }
    };
    let score = || -> Result<Score> {
        match get("score") {
            Some(v) => match v.as_f64() {
                Some(f) => clamp_model_score(f),
                None => parse_score(v.as_str().unwrap_or_default()),
            },
            None => Err(Error::Protocol("JSON output lacks \"score\"".into())),
        }
    };

    let mut out = ModelResponse::default();
    match schema {
        ResponseSchema::ScoreOnly => out.score = Some(score()?),
        ResponseSchema::ScoreAndReport => {
            out.score = Some(score()?);
            out.report = Some(non_empty(&report()?, "report")?);
        }
        ResponseSchema::ReportOnly => out.report = Some(non_empty(&report()?, "report")?),
        ResponseSchema::LabelAndReport => {
            let label = get("label")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Protocol("JSON output lacks a string \"label\"".into()))?;
            out.label = Some(parse_label(label).map_err(|e| Error::Protocol(e.to_string()))?);
            out.report = Some(report().unwrap_or_default());
        }
        ResponseSchema::Hypotheses => {
            let arr = match json {
                Value::Array(a) => a,
                _ => get("hypotheses")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Protocol("JSON output lacks \"hypotheses\"".into()))?,
            };
            let items: Vec<String> = arr
                .iter()
                .filter_map(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if items.is_empty() {
                return Err(Error::Protocol("no hypotheses in output".into()));
            }
            out.hypotheses = Some(items);
        }
    }
    Ok(out)
}
