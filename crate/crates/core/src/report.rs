//! Markdown report model: sections, sentences, bracket citations and the
//! reference list, plus the citation distributions derived from them.
//!
//! Parsing never fails. Anything that cannot be interpreted becomes a
//! [`ReportDiagnostic`] on the returned [`Report`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Deepest heading level that starts a new section; deeper headings are
    /// read as body text. `None` means every heading level counts.
    pub section_depth: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReferenceEntry {
    pub index: u32,
    pub url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sentence {
    /// Sentence text as written, citation marks included.
    pub text: String,
    pub marks: Vec<u32>,
    /// Byte range of the sentence in the source document.
    pub span: Range<usize>,
}

impl Sentence {
    /// Text with citation marks removed.
    pub fn plain_text(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('[') {
            out.push_str(&rest[..open]);
            match parse_mark(&rest[open..]) {
                Some((_, len)) => rest = &rest[open + len..],
                None => {
                    out.push('[');
                    rest = &rest[open + 1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Section {
    /// 1-based position among content sections.
    pub ordinal: usize,
    /// Heading depth; 0 for the untitled preamble.
    pub level: u8,
    pub heading: String,
    pub sentences: Vec<Sentence>,
    /// Every citation mark in the section with its multiplicity.
    pub citation_marks: BTreeMap<u32, usize>,
    /// Byte range from the heading line to the start of the next section.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportDiagnostic {
    UnresolvedCitation {
        index: u32,
    },
    UnparseableReference {
        line: usize,
        text: String,
    },
    DuplicateReference {
        index: u32,
    },
    /// A reference list exists but no bracket citation was found.
    MissingCitationMarks {
        references: usize,
    },
}

impl fmt::Display for ReportDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportDiagnostic::UnresolvedCitation { index } => {
                write!(f, "citation [{index}] has no reference entry")
            }
            ReportDiagnostic::UnparseableReference { line, text } => {
                write!(f, "line {line}: unparseable reference `{text}`")
            }
            ReportDiagnostic::DuplicateReference { index } => {
                write!(f, "reference [{index}] listed more than once; first entry kept")
            }
            ReportDiagnostic::MissingCitationMarks { references } => write!(
                f,
                "{references} references listed but no bracket citations found (unsupported citation style?)"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub title: Option<String>,
    pub sections: Vec<Section>,
    pub references: Vec<ReferenceEntry>,
    pub diagnostics: Vec<ReportDiagnostic>,
    #[serde(skip)]
    source: String,
    #[serde(skip)]
    options: ParseOptions,
}

/// Citation volume per resolved source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitationDistribution {
    pub counts: BTreeMap<u32, usize>,
    pub total: usize,
}

impl CitationDistribution {
    pub fn unique_sources(&self) -> usize {
        self.counts.len()
    }

    /// `(source, p_i)` in source order.
    pub fn proportions(&self) -> Vec<(u32, f64)> {
        self.counts
            .iter()
            .map(|(&i, &c)| (i, c as f64 / self.total as f64))
            .collect()
    }
}

/// Number of content sections citing each resolved source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectionPresence {
    pub per_source: BTreeMap<u32, usize>,
    pub total_sections: usize,
}

impl SectionPresence {
    pub fn sections_citing(&self, source: u32) -> usize {
        self.per_source.get(&source).copied().unwrap_or(0)
    }
}

pub fn parse_report(markdown: &str) -> Report {
    parse_report_with(markdown, ParseOptions::default())
}

pub fn parse_report_with(markdown: &str, options: ParseOptions) -> Report {
    Parser::new(markdown, options).run()
}

pub fn citation_distribution(report: &Report) -> CitationDistribution {
    report.citation_distribution()
}

pub fn section_presence(report: &Report) -> SectionPresence {
    report.section_presence()
}

impl Report {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn options(&self) -> ParseOptions {
        self.options
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections.iter().flat_map(|s| s.sentences.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.sentences().next().is_none()
    }

    pub fn reference_indices(&self) -> BTreeSet<u32> {
        self.references.iter().map(|r| r.index).collect()
    }

    pub fn citation_distribution(&self) -> CitationDistribution {
        let known = self.reference_indices();
        let mut counts = BTreeMap::new();
        for section in &self.sections {
            for (&idx, &n) in &section.citation_marks {
                if known.contains(&idx) {
                    *counts.entry(idx).or_insert(0) += n;
                }
            }
        }
        let total = counts.values().sum();
        CitationDistribution { counts, total }
    }

    pub fn section_presence(&self) -> SectionPresence {
        let known = self.reference_indices();
        let mut per_source = BTreeMap::new();
        for section in &self.sections {
            for idx in section.citation_marks.keys().filter(|i| known.contains(i)) {
                *per_source.entry(*idx).or_insert(0) += 1;
            }
        }
        SectionPresence {
            per_source,
            total_sections: self.sections.len(),
        }
    }

    /// Canonical markdown: one paragraph per sentence and a trailing
    /// `## References` list.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(title) = &self.title {
            if !self.sections.iter().any(|s| s.level == 1 && &s.heading == title) {
                out.push_str(&format!("# {title}\n\n"));
            }
        }
        for section in &self.sections {
            if section.level > 0 {
                out.push_str(&"#".repeat(section.level as usize));
                if !section.heading.is_empty() {
                    out.push(' ');
                    out.push_str(&section.heading);
                }
                out.push_str("\n\n");
            }
            for sentence in &section.sentences {
                out.push_str(&sentence.text);
                out.push_str("\n\n");
            }
        }
        if !self.references.is_empty() {
            out.push_str("## References\n\n");
            for r in &self.references {
                match &r.title {
                    Some(t) if looks_like_url(&r.url) => out.push_str(&format!("[{}] {} {}\n", r.index, t, r.url)),
                    _ => out.push_str(&format!("[{}] {}\n", r.index, r.url)),
                }
            }
        }
        out
    }

    /// Serialized form of the parsed report for debugging dumps.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Line<'a> {
    start: usize,
    text: &'a str,
    code: bool,
    number: usize,
}

struct RawSection<'a> {
    level: u8,
    heading: String,
    start: usize,
    end: usize,
    lines: Vec<Line<'a>>,
}

fn is_blank(lines: &[Line<'_>]) -> bool {
    lines.iter().all(|l| l.text.trim().is_empty())
}

struct Parser<'a> {
    source: &'a str,
    options: ParseOptions,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str, options: ParseOptions) -> Self {
        Self { source, options }
    }

    fn run(self) -> Report {
        let raw = self.raw_sections();
        let title = raw
            .iter()
            .find(|r| r.level == 1 && !is_references_heading(&r.heading))
            .map(|r| r.heading.clone());
        // A leading level-1 heading with no body is the document title.
        let title_line = raw
            .iter()
            .position(|r| r.level > 0)
            .filter(|&i| raw[i].level == 1 && is_blank(&raw[i].lines) && !is_references_heading(&raw[i].heading));

        let mut diagnostics = Vec::new();
        let mut references: Vec<ReferenceEntry> = Vec::new();
        let mut sections = Vec::new();
        for (i, r) in raw.iter().enumerate() {
            if Some(i) == title_line {
                continue;
            }
            if r.level > 0 && is_references_heading(&r.heading) {
                parse_reference_lines(&r.lines, &mut references, &mut diagnostics);
                continue;
            }
            if r.level == 0 && is_blank(&r.lines) {
                continue;
            }
            let sentences = sentences_of(self.source, &r.lines);
            let mut citation_marks = BTreeMap::new();
            for m in sentences.iter().flat_map(|s| s.marks.iter()) {
                *citation_marks.entry(*m).or_insert(0) += 1;
            }
            sections.push(Section {
                ordinal: sections.len() + 1,
                level: r.level,
                heading: r.heading.clone(),
                sentences,
                citation_marks,
                span: r.start..r.end,
            });
        }
        if sections.is_empty() {
            sections.push(Section {
                ordinal: 1,
                level: 0,
                heading: String::new(),
                sentences: Vec::new(),
                citation_marks: BTreeMap::new(),
                span: 0..self.source.len(),
            });
        }

        let known: BTreeSet<u32> = references.iter().map(|r| r.index).collect();
        let cited: BTreeSet<u32> = sections.iter().flat_map(|s| s.citation_marks.keys().copied()).collect();
        for idx in cited.difference(&known) {
            diagnostics.push(ReportDiagnostic::UnresolvedCitation { index: *idx });
        }
        if cited.is_empty() && !references.is_empty() {
            diagnostics.push(ReportDiagnostic::MissingCitationMarks {
                references: references.len(),
            });
        }

        Report {
            title,
            sections,
            references,
            diagnostics,
            source: self.source.to_string(),
            options: self.options,
        }
    }

    fn raw_sections(&self) -> Vec<RawSection<'a>> {
        let mut out = vec![RawSection {
            level: 0,
            heading: String::new(),
            start: 0,
            end: self.source.len(),
            lines: Vec::new(),
        }];
        let mut fence: Option<(char, usize)> = None;
        let mut offset = 0;
        for (number, raw_line) in self.source.split_inclusive('\n').enumerate() {
            let start = offset;
            offset += raw_line.len();
            let text = raw_line.trim_end_matches(['\n', '\r']);

            if let Some(marker) = fence_marker(text) {
                match fence {
                    None => fence = Some(marker),
                    Some((ch, len)) if marker.0 == ch && marker.1 >= len => fence = None,
                    Some(_) => {}
                }
                push_line(&mut out, start, text, true, number + 1);
                continue;
            }
            if fence.is_some() {
                push_line(&mut out, start, text, true, number + 1);
                continue;
            }
            match heading_of(text) {
                Some((level, heading)) if self.options.section_depth.is_none_or(|d| level <= d) => {
                    if let Some(last) = out.last_mut() {
                        last.end = start;
                    }
                    out.push(RawSection {
                        level,
                        heading,
                        start,
                        end: self.source.len(),
                        lines: Vec::new(),
                    });
                }
                _ => push_line(&mut out, start, text, false, number + 1),
            }
        }
        out
    }
}

fn push_line<'a>(out: &mut [RawSection<'a>], start: usize, text: &'a str, code: bool, number: usize) {
    out.last_mut().expect("preamble always present").lines.push(Line {
        start,
        text,
        code,
        number,
    });
}

fn fence_marker(line: &str) -> Option<(char, usize)> {
    let t = strip_indent(line)?;
    let ch = t.chars().next()?;
    if ch != '`' && ch != '~' {
        return None;
    }
    let len = t.chars().take_while(|&c| c == ch).count();
    (len >= 3).then_some((ch, len))
}

fn strip_indent(line: &str) -> Option<&str> {
    let spaces = line.len() - line.trim_start_matches(' ').len();
    (spaces <= 3).then(|| &line[spaces..])
}

fn heading_of(line: &str) -> Option<(u8, String)> {
    let t = strip_indent(line)?;
    let hashes = t.len() - t.trim_start_matches('#').len();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &t[hashes..];
    if !(rest.is_empty() || rest.starts_with([' ', '\t'])) {
        return None;
    }
    let mut heading = rest.trim();
    // Optional closing sequence: "## Title ##"
    let stripped = heading.trim_end_matches('#');
    if stripped.is_empty() || stripped.ends_with([' ', '\t']) {
        heading = stripped.trim_end();
    }
    Some((hashes as u8, heading.to_string()))
}

fn is_references_heading(heading: &str) -> bool {
    let norm = crate::text::normalize(heading);
    let words: Vec<&str> = norm
        .split(' ')
        .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
        .collect();
    words == ["references"]
}

fn is_thematic_break(t: &str) -> bool {
    let compact: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    compact.len() >= 3 && ['-', '*', '_', '='].iter().any(|&m| compact.chars().all(|c| c == m))
}

/// Length of a leading list marker (`- `, `* `, `+ `, `12. `, `3) `), if any.
fn list_marker_len(t: &str) -> Option<usize> {
    let bytes = t.as_bytes();
    match bytes.first()? {
        b'-' | b'*' | b'+' if bytes.get(1).is_some_and(|b| *b == b' ' || *b == b'\t') => Some(2),
        b'0'..=b'9' => {
            let digits = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
            if digits > 9 {
                return None;
            }
            match (bytes.get(digits), bytes.get(digits + 1)) {
                (Some(b'.' | b')'), Some(b' ' | b'\t')) => Some(digits + 2),
                (Some(b'.' | b')'), None) => Some(digits + 1),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Split section body lines into blocks, then blocks into sentences.
fn sentences_of(source: &str, lines: &[Line<'_>]) -> Vec<Sentence> {
    // Each block is a list of (source offset, char).
    let mut blocks: Vec<Vec<(usize, char)>> = Vec::new();
    let mut current: Vec<(usize, char)> = Vec::new();
    let flush = |current: &mut Vec<(usize, char)>, blocks: &mut Vec<Vec<(usize, char)>>| {
        if !current.is_empty() {
            blocks.push(std::mem::take(current));
        }
    };
    for line in lines {
        let trimmed = line.text.trim_start();
        if line.code || trimmed.trim().is_empty() || is_thematic_break(trimmed) {
            flush(&mut current, &mut blocks);
            continue;
        }
        let mut content_start = line.text.len() - trimmed.len();
        let mut body = trimmed;
        while let Some(rest) = body.strip_prefix('>') {
            let next = rest.trim_start();
            content_start += body.len() - next.len();
            body = next;
        }
        let starts_block = body.starts_with('|') || list_marker_len(body).is_some();
        if let Some(n) = list_marker_len(body) {
            let next = body[n..].trim_start();
            content_start += body.len() - next.len();
            body = next;
        }
        if starts_block {
            flush(&mut current, &mut blocks);
        }
        if let Some(&(prev_offset, _)) = current.last() {
            // Soft line break inside a paragraph reads as a space.
            current.push((prev_offset, ' '));
        }
        let base = line.start + content_start;
        current.extend(body.char_indices().map(|(i, c)| (base + i, c)));
        if body.starts_with('|') {
            flush(&mut current, &mut blocks);
        }
    }
    flush(&mut current, &mut blocks);

    let mut out = Vec::new();
    for block in &blocks {
        for range in split_block(block) {
            let chars = &block[range];
            let first = chars.first().expect("non-empty sentence");
            let last = chars.last().expect("non-empty sentence");
            if !chars.iter().any(|(_, c)| c.is_alphanumeric()) {
                continue;
            }
            let text: String = chars.iter().map(|(_, c)| *c).collect();
            let span = first.0..last.0 + last.1.len_utf8();
            debug_assert!(source.is_char_boundary(span.start) && source.is_char_boundary(span.end));
            let marks = marks_in(&text);
            out.push(Sentence { text, marks, span });
        }
    }
    out
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | '*' | '_' | ')')
}

/// Sentence ranges (trimmed, non-empty) within one block.
fn split_block(block: &[(usize, char)]) -> Vec<Range<usize>> {
    let chars: Vec<char> = block.iter().map(|(_, c)| *c).collect();
    let n = chars.len();
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut depth: usize = 0;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if depth == 0 && is_terminal(c) {
            let mut end = i + 1;
            while end < n && (is_terminal(chars[end]) || (is_closing(chars[end]) && chars[end] != ')')) {
                end += 1;
            }
            if end == n || chars[end].is_whitespace() {
                // Citation runs placed after the punctuation belong to this sentence.
                let mut j = end;
                while j < n && chars[j].is_whitespace() {
                    j += 1;
                }
                let mut k = j;
                while k < n {
                    let tail: String = chars[k..n.min(k + 12)].iter().collect();
                    match parse_mark(&tail) {
                        Some((_, len)) => k += tail[..len].chars().count(),
                        None => break,
                    }
                }
                if k > j && (k == n || chars[k].is_whitespace()) {
                    end = k;
                }
                push_trimmed(&chars, start, end, &mut ranges);
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&chars, start, n, &mut ranges);
    ranges
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, out: &mut Vec<Range<usize>>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        out.push(start..end);
    }
}

/// Parse a `[n]` mark at the start of `s`; returns the index and byte length.
fn parse_mark(s: &str) -> Option<(u32, usize)> {
    let rest = s.strip_prefix('[')?;
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 9 || rest.as_bytes().get(digits) != Some(&b']') {
        return None;
    }
    let n: u32 = rest[..digits].parse().ok()?;
    (n > 0).then_some((n, digits + 2))
}

fn marks_in(text: &str) -> Vec<u32> {
    let mut marks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        match parse_mark(&rest[open..]) {
            Some((n, len)) => {
                // `[3](http://...)` is a link, not a citation.
                let after = &rest[open + len..];
                if !after.starts_with('(') {
                    marks.push(n);
                }
                rest = after;
            }
            None => rest = &rest[open + 1..],
        }
    }
    marks
}

fn looks_like_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

fn parse_reference_lines(
    lines: &[Line<'_>],
    references: &mut Vec<ReferenceEntry>,
    diagnostics: &mut Vec<ReportDiagnostic>,
) {
    for line in lines {
        let t = line.text.trim();
        if t.is_empty() || line.code || is_thematic_break(t) {
            continue;
        }
        match parse_reference_line(t) {
            Some(entry) => {
                if references.iter().any(|r| r.index == entry.index) {
                    diagnostics.push(ReportDiagnostic::DuplicateReference { index: entry.index });
                } else {
                    references.push(entry);
                }
            }
            None => diagnostics.push(ReportDiagnostic::UnparseableReference {
                line: line.number,
                text: t.to_string(),
            }),
        }
    }
}

/// `[n] rest`, `n. rest` or `n) rest`, optionally behind a `-`/`*` bullet.
fn parse_reference_line(line: &str) -> Option<ReferenceEntry> {
    let mut t = line;
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        t = rest.trim_start();
    }
    let (index, rest) = if let Some((n, len)) = parse_mark(t) {
        (n, &t[len..])
    } else {
        let digits = t.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 || digits > 9 {
            return None;
        }
        let n: u32 = t[..digits].parse().ok().filter(|n| *n > 0)?;
        let after = &t[digits..];
        let rest = after.strip_prefix('.').or_else(|| after.strip_prefix(')'))?;
        if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
            return None;
        }
        (n, rest)
    };
    let rest = rest.trim_start_matches([':', ' ', '\t']).trim();
    if rest.is_empty() {
        return None;
    }
    let (url, title) = split_url_and_title(rest);
    Some(ReferenceEntry { index, url, title })
}

fn split_url_and_title(rest: &str) -> (String, Option<String>) {
    // Markdown link: [title](url)
    if let Some(inner) = rest.strip_prefix('[') {
        if let Some(close) = inner.find("](") {
            let title = inner[..close].trim();
            let after = &inner[close + 2..];
            if let Some(end) = after.find(')') {
                let url = after[..end].trim().to_string();
                let trailing = after[end + 1..].trim();
                let title = [title, trailing]
                    .iter()
                    .filter(|s| !s.is_empty())
                    .copied()
                    .collect::<Vec<_>>()
                    .join(" ");
                return (url, (!title.is_empty()).then_some(title));
            }
        }
    }
    let separators: &[char] = &[' ', '-', '–', '—', ':', ',', '|', '<', '>', '(', ')', '.'];
    let url_token = rest
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c| matches!(c, '<' | '>' | '(' | ')' | ',' | ';' | '.')))
        .find(|tok| looks_like_url(tok));
    match url_token {
        Some(url) => {
            let url = url.to_string();
            let title = rest.replacen(url.as_str(), " ", 1);
            let title = title.trim_matches(separators).trim();
            (url, (!title.is_empty()).then(|| title.to_string()))
        }
        None => (rest.to_string(), None),
    }
}
