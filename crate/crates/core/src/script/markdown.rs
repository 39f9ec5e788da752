use std::fmt::Write as _;

use super::{Dialogue, Script, ScriptError, ScriptPage, ScriptPanel, SpeakerId};

const SOUND: &str = "### SOUND";
const CAPTION: &str = "### CAPTION";
const DIALOGUE: &str = "### DIALOGUE";
const DESCRIPTION: &str = "### DESCRIPTION";

/// The SOUND / CAPTION / DIALOGUE sections of one panel, without a trailing
/// newline. This is also the script extract given to the description chain.
pub fn serialize_panel_sections(panel: &ScriptPanel) -> String {
    let mut lines: Vec<String> = Vec::new();
    lines.push(SOUND.into());
    lines.extend(panel.sounds.iter().cloned());
    lines.push(CAPTION.into());
    lines.extend(panel.captions.iter().cloned());
    lines.push(DIALOGUE.into());
    lines.extend(panel.dialogues.iter().map(|d| format!("{}: {}", d.speaker, d.text)));
    lines.join("\n")
}

fn page_header(page: &ScriptPage) -> String {
    let n = page.panels.len();
    let plural = if n == 1 { "" } else { "S" };
    format!("# PAGE {} - {n} PANEL{plural}:", page.page_index)
}

/// Render the script. Every line ends with `\n`; an empty script renders
/// as the empty string.
///
/// Text is written verbatim. Units must be single-line and must not start
/// with `#` for the output to parse back to the same tree.
pub fn serialize_markdown(script: &Script) -> String {
    let mut out = String::new();
    for page in &script.pages {
        out.push_str(&page_header(page));
        out.push('\n');
        for panel in &page.panels {
            let _ = writeln!(out, "## PANEL {}", panel.panel_index);
            out.push_str(&serialize_panel_sections(panel));
            out.push('\n');
            if let Some(desc) = &panel.description {
                out.push_str(DESCRIPTION);
                out.push('\n');
                out.push_str(desc);
                out.push('\n');
            }
        }
    }
    out
}

#[derive(Debug, PartialEq)]
enum Header {
    Page { index: u32, panels: usize },
    Panel(u32),
    Section(&'static str),
}

fn is_header_like(line: &str) -> bool {
    matches!(line, "#" | "##" | "###") || line.starts_with("# ") || line.starts_with("## ") || line.starts_with("### ")
}

fn parse_header(line: &str, lineno: usize) -> Result<Header, ScriptError> {
    let bad = |expected: &str| ScriptError::Parse {
        line: lineno,
        expected: expected.to_string(),
        found: line.to_string(),
    };
    if let Some(rest) = line.strip_prefix("### ") {
        return match rest {
            "SOUND" => Ok(Header::Section(SOUND)),
            "CAPTION" => Ok(Header::Section(CAPTION)),
            "DIALOGUE" => Ok(Header::Section(DIALOGUE)),
            "DESCRIPTION" => Ok(Header::Section(DESCRIPTION)),
            _ => Err(bad("### SOUND | CAPTION | DIALOGUE | DESCRIPTION")),
        };
    }
    if let Some(rest) = line.strip_prefix("## PANEL ") {
        return parse_number(rest).map(Header::Panel).ok_or_else(|| bad("## PANEL {k}"));
    }
    if let Some(rest) = line.strip_prefix("# PAGE ") {
        let expected = "# PAGE {p} - {n} PANEL{S}:";
        let (index, rest) = rest.split_once(" - ").ok_or_else(|| bad(expected))?;
        let index = parse_number(index).ok_or_else(|| bad(expected))?;
        let (count, word) = rest.split_once(' ').ok_or_else(|| bad(expected))?;
        let count = parse_number(count).ok_or_else(|| bad(expected))? as usize;
        let want = if count == 1 { "PANEL:" } else { "PANELS:" };
        if word != want {
            return Err(bad(expected));
        }
        return Ok(Header::Page { index, panels: count });
    }
    Err(bad("a page, panel or section header"))
}

fn parse_number(s: &str) -> Option<u32> {
    let canonical = !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'));
    canonical.then(|| s.parse().ok()).flatten()
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn lineno(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, expected: &str) -> ScriptError {
        ScriptError::Parse {
            line: self.lineno(),
            expected: expected.to_string(),
            found: self.peek().unwrap_or("end of input").to_string(),
        }
    }

    fn expect_section(&mut self, name: &'static str) -> Result<(), ScriptError> {
        match self.peek() {
            Some(l) if l == name => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(name)),
        }
    }

    /// Body lines up to the next header-like line.
    fn body(&mut self) -> Vec<&'a str> {
        let start = self.pos;
        while let Some(l) = self.peek() {
            if is_header_like(l) {
                break;
            }
            self.pos += 1;
        }
        self.lines[start..self.pos].to_vec()
    }
}

/// Parse the Markdown form produced by [`serialize_markdown`].
pub fn parse_markdown(text: &str) -> Result<Script, ScriptError> {
    if text.is_empty() {
        return Ok(Script::default());
    }
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() != Some(&"") {
        return Err(ScriptError::Parse {
            line: lines.len(),
            expected: "newline at end of file".into(),
            found: lines.last().copied().unwrap_or_default().into(),
        });
    }
    lines.pop();
    let mut cur = Cursor { lines, pos: 0 };
    let mut script = Script::default();

    while let Some(line) = cur.peek() {
        let header_line = cur.lineno();
        let (index, announced) = match parse_header(line, header_line)? {
            Header::Page { index, panels } => (index, panels),
            _ => return Err(cur.err("# PAGE {p} - {n} PANEL{S}:")),
        };
        cur.pos += 1;
        let mut page = ScriptPage { page_index: index, panels: Vec::new() };
        while let Some(line) = cur.peek() {
            if line.starts_with("# ") {
                break;
            }
            let panel_index = match parse_header(line, cur.lineno())? {
                Header::Panel(k) => k,
                _ => return Err(cur.err("## PANEL {k}")),
            };
            cur.pos += 1;
            page.panels.push(parse_panel(&mut cur, panel_index)?);
        }
        if page.panels.len() != announced {
            return Err(ScriptError::PanelCount {
                line: header_line,
                announced,
                found: page.panels.len(),
            });
        }
        script.pages.push(page);
    }
    Ok(script)
}

fn parse_panel(cur: &mut Cursor<'_>, panel_index: u32) -> Result<ScriptPanel, ScriptError> {
    let mut panel = ScriptPanel { panel_index, ..Default::default() };
    cur.expect_section(SOUND)?;
    panel.sounds = cur.body().into_iter().map(str::to_string).collect();
    cur.expect_section(CAPTION)?;
    panel.captions = cur.body().into_iter().map(str::to_string).collect();
    cur.expect_section(DIALOGUE)?;
    let start = cur.pos;
    for (offset, line) in cur.body().into_iter().enumerate() {
        let lineno = start + offset + 1;
        let (speaker, text) = line.split_once(": ").ok_or_else(|| ScriptError::Parse {
            line: lineno,
            expected: "{speaker}: {text}".into(),
            found: line.to_string(),
        })?;
        let speaker: SpeakerId = speaker.parse().map_err(|_| ScriptError::Parse {
            line: lineno,
            expected: "speaker `c{k}`, `?` or a name".into(),
            found: line.to_string(),
        })?;
        panel.dialogues.push(Dialogue { speaker, text: text.to_string() });
    }
    if cur.peek() == Some(DESCRIPTION) {
        cur.pos += 1;
        panel.description = Some(cur.body().join("\n"));
    }
    Ok(panel)
}
