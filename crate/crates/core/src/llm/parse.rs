//! Strict parsers for LLM replies. Structure violations are errors carrying
//! the raw reply; whitespace, quoting and list markers are normalized.

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::concept_tree::Grounding;
use crate::retriever::tokenize;

fn parse_error(kind: &'static str, message: impl Into<String>, raw: &str) -> LlmError {
    LlmError::Parse {
        kind,
        message: message.into(),
        raw: raw.to_owned(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreChoice {
    /// 1-based cluster indices, best first.
    pub best: Vec<usize>,
    /// 1-based cluster indices, worst first.
    pub worst: Vec<usize>,
}

fn parse_index_list(line: &str, limit: usize, n_clusters: usize, raw: &str) -> Result<Vec<usize>, LlmError> {
    let mut out: Vec<usize> = Vec::new();
    for token in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let idx: usize = token
            .parse()
            .map_err(|_| parse_error("explore", format!("non-integer index {token:?}"), raw))?;
        if idx == 0 || idx > n_clusters {
            return Err(parse_error(
                "explore",
                format!("index {idx} outside 1..={n_clusters}"),
                raw,
            ));
        }
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    out.truncate(limit);
    Ok(out)
}

/// The first line is the best list (possibly blank); the next non-blank line
/// is the worst list. Any further non-blank line is an error.
pub fn parse_explore_response(text: &str, pbf: usize, dbf: usize, n_clusters: usize) -> Result<ExploreChoice, LlmError> {
    let mut lines = text.lines();
    let best_line = lines.next().unwrap_or("");
    let mut rest = lines.filter(|l| !l.trim().is_empty());
    let worst_line = rest.next().unwrap_or("");
    if let Some(extra) = rest.next() {
        return Err(parse_error(
            "explore",
            format!("expected two lists, found extra line {:?}", extra.trim()),
            text,
        ));
    }
    Ok(ExploreChoice {
        best: parse_index_list(best_line, pbf, n_clusters, text)?,
        worst: parse_index_list(worst_line, dbf, n_clusters, text)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvisionedCategory {
    pub name: String,
    pub posts: Vec<String>,
}

const OPEN_QUOTES: [&str; 6] = ["'''", "\"\"\"", "\"", "\u{201c}", "'", "\u{2018}"];
const CLOSE_QUOTES: [&str; 6] = ["'''", "\"\"\"", "\"", "\u{201d}", "'", "\u{2019}"];

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    if matches!(line, "-" | "*" | "+" | "\u{2022}") {
        return "";
    }
    for bullet in ["- ", "* ", "\u{2022} ", "+ "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let after = &line[digits..];
        if let Some(rest) = after.strip_prefix(". ").or_else(|| after.strip_prefix(") ")) {
            return rest.trim_start();
        }
    }
    line
}

/// The text inside surrounding quotes, or `None` when the line is unquoted.
fn unquote(line: &str) -> Option<&str> {
    let line = strip_list_marker(line);
    let open = OPEN_QUOTES.iter().find(|q| line.starts_with(**q))?;
    let mut inner = &line[open.len()..];
    if let Some(close) = CLOSE_QUOTES.iter().find(|q| inner.ends_with(**q)) {
        inner = &inner[..inner.len() - close.len()];
    }
    Some(inner.trim())
}

fn is_example_posts_marker(line: &str) -> bool {
    let l = line.trim().trim_matches('*').trim();
    l.eq_ignore_ascii_case("example posts:") || l.eq_ignore_ascii_case("example posts")
}

fn clean_category_name(line: &str) -> String {
    let l = strip_list_marker(line).trim_start_matches('#').trim();
    let l = l.trim_matches('*').trim();
    let l = l.strip_prefix('<').unwrap_or(l);
    let l = l.strip_suffix('>').unwrap_or(l);
    l.trim().trim_end_matches(':').trim().to_owned()
}

/// Blocks are a header line, an `Example Posts:` line, then quoted posts.
/// The first non-blank unquoted line ends a block; text outside blocks is
/// ignored. At most `ebf` categories with at most `n` posts each are kept.
pub fn parse_envision_response(text: &str, ebf: usize, n: usize) -> Result<Vec<EnvisionedCategory>, LlmError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < lines.len() && out.len() < ebf {
        if lines[i].trim().is_empty() || !is_example_posts_marker(lines[i + 1]) {
            i += 1;
            continue;
        }
        let name = clean_category_name(lines[i]);
        let mut posts = Vec::new();
        let mut j = i + 2;
        while j < lines.len() {
            let line = lines[j].trim();
            if line.is_empty() || line == "..." {
                j += 1;
                continue;
            }
            match unquote(line) {
                Some(post) => {
                    if !post.is_empty() && posts.len() < n {
                        posts.push(post.to_owned());
                    }
                    j += 1;
                }
                None => break,
            }
        }
        if !posts.is_empty() && !name.is_empty() {
            out.push(EnvisionedCategory { name, posts });
        }
        i = j;
    }
    if out.is_empty() {
        return Err(parse_error("envision", "no category blocks found", text));
    }
    Ok(out)
}

fn is_header(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

/// One property per non-blank line; markdown headers and list markers are
/// dropped.
pub fn parse_properties_response(text: &str) -> Result<Vec<String>, LlmError> {
    let props: Vec<String> = text
        .lines()
        .filter(|l| !is_header(l))
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    if props.is_empty() {
        return Err(parse_error("properties", "no properties found", text));
    }
    Ok(props)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGroundings {
    pub groundings: Vec<Grounding>,
    /// Fewer than the requested number arrived.
    pub shortfall: bool,
}

/// One grounding per non-blank line, clipped to `gamma`. Header lines, list
/// markers and surrounding quotes are removed.
pub fn parse_groundings_response(text: &str, gamma: usize) -> Result<ParsedGroundings, LlmError> {
    let mut groundings: Vec<Grounding> = text
        .lines()
        .filter(|l| !is_header(l))
        .filter_map(|l| Grounding::new(unquote(l).unwrap_or_else(|| strip_list_marker(l))))
        .collect();
    if groundings.is_empty() {
        return Err(parse_error("groundings", "no groundings found", text));
    }
    let shortfall = groundings.len() < gamma;
    groundings.truncate(gamma);
    Ok(ParsedGroundings { groundings, shortfall })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Evidence,
    NotEvidence,
}

/// The first of the words `yes` / `no` (case-insensitive) decides.
pub fn parse_label(text: &str) -> Result<Label, LlmError> {
    for token in tokenize(text) {
        match token.as_str() {
            "yes" => return Ok(Label::Evidence),
            "no" => return Ok(Label::NotEvidence),
            _ => {}
        }
    }
    Err(parse_error("label", "answer contains neither yes nor no", text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityAxis {
    pub axis: String,
    pub score_a: f64,
    pub score_b: f64,
}

fn parse_score(field: &str, raw: &str) -> Result<f64, LlmError> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error("compare", format!("non-numeric score {:?}", field.trim()), raw))?;
    if !(0.0..=10.0).contains(&value) {
        return Err(parse_error("compare", format!("score {value} outside 0..=10"), raw));
    }
    Ok(value)
}

/// Lines of the form `axis | score_a | score_b`; lines without `|` are
/// ignored.
pub fn parse_compare_response(text: &str) -> Result<Vec<PolarityAxis>, LlmError> {
    let mut axes = Vec::new();
    for line in text.lines().filter(|l| l.contains('|')) {
        let fields: Vec<&str> = strip_list_marker(line).split('|').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                "compare",
                format!("expected 3 fields, found {} in {:?}", fields.len(), line.trim()),
                text,
            ));
        }
        let axis = fields[0].trim();
        if axis.is_empty() {
            return Err(parse_error("compare", "empty axis name", text));
        }
        axes.push(PolarityAxis {
            axis: axis.to_owned(),
            score_a: parse_score(fields[1], text)?,
            score_b: parse_score(fields[2], text)?,
        });
    }
    if axes.is_empty() {
        return Err(parse_error("compare", "no axes found", text));
    }
    Ok(axes)
}
