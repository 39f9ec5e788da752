//! Character name inference from the script through a four-prompt chain.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::llm::{ChatMessage, LlmClient, LlmError};
use crate::script::{is_valid_name, serialize_markdown, Script, SpeakerId};

pub const PROMPT_SCRIPT: &str = r#"This is the script of a comic book: """{SCRIPT}""""#;
pub const PROMPT_NAMES: &str = "Please list all character's names.";
pub const PROMPT_IDENTIFIERS: &str = "Please list all corresponding unique identifiers. Itemize.";
pub const PROMPT_RELATIONSHIPS: &str = "What are their relationship? Explain your reasoning step-by-step.";

/// Index of the identifier-listing turn in the chain.
const IDENTIFIER_TURN: usize = 2;

#[derive(Debug, Error)]
pub enum NamingError {
    #[error("the script is empty")]
    EmptyScript,
    #[error("the script has no dialogue to infer names from")]
    NoDialogue,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameEntry {
    pub name: String,
    pub evidence: String,
}

/// A cluster mentioned under more than one name. `names[0]` is the name
/// that was bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameConflict {
    pub id: SpeakerId,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NameMap {
    pub entries: BTreeMap<u32, NameEntry>,
    pub conflicts: Vec<NameConflict>,
    /// Parser notes; not serialized.
    pub diagnostics: Vec<String>,
}

impl NameMap {
    pub fn name_of(&self, cluster: u32) -> Option<&str> {
        self.entries.get(&cluster).map(|e| e.name.as_str())
    }

    /// Keep only the first word of every name.
    pub fn first_names_only(mut self) -> Self {
        for e in self.entries.values_mut() {
            if let Some(first) = e.name.split_whitespace().next() {
                if is_valid_name(first) {
                    e.name = first.to_string();
                }
            }
        }
        self
    }
}

// names.json: {"c0": "Curt", ..., "conflicts": [...], "evidence": {"c0": "..."}}
impl Serialize for NameMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = Map::new();
        let mut evidence = Map::new();
        for (k, e) in &self.entries {
            m.insert(format!("c{k}"), Value::String(e.name.clone()));
            evidence.insert(format!("c{k}"), Value::String(e.evidence.clone()));
        }
        m.insert("conflicts".into(), serde_json::to_value(&self.conflicts).map_err(serde::ser::Error::custom)?);
        m.insert("evidence".into(), Value::Object(evidence));
        Value::Object(m).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NameMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut m = Map::deserialize(d)?;
        let conflicts = match m.remove("conflicts") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => Vec::new(),
        };
        let evidence = match m.remove("evidence") {
            Some(Value::Object(e)) => e,
            Some(_) => return Err(D::Error::custom("`evidence` must be an object")),
            None => Map::new(),
        };
        let mut entries = BTreeMap::new();
        for (key, value) in m {
            let Ok(SpeakerId::Cluster(k)) = key.parse::<SpeakerId>() else {
                return Err(D::Error::custom(format!("unexpected key {key:?}")));
            };
            let name = value.as_str().ok_or_else(|| D::Error::custom(format!("name of {key} must be a string")))?;
            if !is_valid_name(name) {
                return Err(D::Error::custom(format!("invalid name {name:?} for {key}")));
            }
            let evidence = evidence.get(&key).and_then(Value::as_str).unwrap_or_default().to_string();
            entries.insert(k, NameEntry { name: name.to_string(), evidence });
        }
        Ok(NameMap { entries, conflicts, diagnostics: Vec::new() })
    }
}

fn escape_delimiters(text: &str) -> String {
    text.replace(r#"""""#, "'''")
}

/// The four user prompts, with the script interpolated into the first.
pub fn naming_chain(script_text: &str) -> Result<Vec<ChatMessage>, NamingError> {
    if script_text.trim().is_empty() {
        return Err(NamingError::EmptyScript);
    }
    Ok(vec![
        ChatMessage::user(PROMPT_SCRIPT.replace("{SCRIPT}", &escape_delimiters(script_text))),
        ChatMessage::user(PROMPT_NAMES),
        ChatMessage::user(PROMPT_IDENTIFIERS),
        ChatMessage::user(PROMPT_RELATIONSHIPS),
    ])
}

struct ParsedEntry {
    name: String,
    ids: Vec<SpeakerId>,
    description: String,
}

fn entry_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+[.)]\s+(.+?)\s*\(([^()]*)\)\s*(?:[-:\u{2013}\u{2014}]\s*(.*))?$").unwrap())
}

fn numbered_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+[.)]\s").unwrap())
}

fn parse_entries(text: &str, diagnostics: &mut Vec<String>) -> Vec<ParsedEntry> {
    let mut out: Vec<ParsedEntry> = Vec::new();
    let mut in_entry = false;
    for line in text.lines() {
        if let Some(c) = entry_regex().captures(line) {
            let name = c[1].trim().trim_matches(|ch| ch == '*' || ch == '"').trim().to_string();
            let mut ids = Vec::new();
            let mut ok = true;
            for tok in c[2].split(',').map(str::trim).filter(|t| !t.is_empty()) {
                match tok.parse::<SpeakerId>() {
                    Ok(id @ (SpeakerId::Cluster(_) | SpeakerId::Unknown)) => ids.push(id),
                    _ => ok = false,
                }
            }
            if !ok || ids.is_empty() {
                diagnostics.push(format!("skipped entry with unrecognised identifiers: {}", line.trim()));
                in_entry = false;
                continue;
            }
            let description = c.get(3).map_or("", |m| m.as_str()).trim().to_string();
            out.push(ParsedEntry { name, ids, description });
            in_entry = true;
        } else if numbered_regex().is_match(line) || line.trim().is_empty() {
            in_entry = false;
        } else if in_entry {
            let e = out.last_mut().expect("in_entry implies an entry");
            if !e.description.is_empty() {
                e.description.push(' ');
            }
            e.description.push_str(line.trim());
        }
    }
    out
}

/// Extract `N. Name (ids) - description` entries into a name map.
///
/// Entries with a single cluster id bind it; the first such binding wins.
/// Multi-id entries never bind. Any id seen under more than one name is
/// reported in `conflicts` with the bound name first. `?` is ignored.
pub fn parse_name_list(assistant_text: &str) -> NameMap {
    let mut map = NameMap::default();
    let entries = parse_entries(assistant_text, &mut map.diagnostics);
    if entries.is_empty() {
        map.diagnostics.push("no numbered `N. Name (ids)` entries found".into());
        return map;
    }
    let mut mentions: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for e in &entries {
        let clusters: Vec<u32> = e
            .ids
            .iter()
            .filter_map(|id| match id {
                SpeakerId::Cluster(k) => Some(*k),
                _ => None,
            })
            .collect();
        if clusters.len() == 1 && e.ids.len() == 1 {
            let k = clusters[0];
            if !is_valid_name(&e.name) {
                map.diagnostics.push(format!("c{k}: unusable name {:?}", e.name));
                continue;
            }
            if map.entries.contains_key(&k) {
                map.diagnostics.push(format!("c{k}: later binding {:?} ignored", e.name));
            } else {
                map.entries.insert(k, NameEntry { name: e.name.clone(), evidence: e.description.clone() });
            }
        } else if clusters.len() > 1 {
            map.diagnostics.push(format!("{:?} lists several identifiers; not bound", e.name));
        }
        for k in clusters {
            mentions.entry(k).or_default().push(e.name.clone());
        }
    }
    for (k, names) in mentions {
        if names.len() < 2 {
            continue;
        }
        let mut ordered: Vec<String> = Vec::new();
        if let Some(bound) = map.entries.get(&k) {
            ordered.push(bound.name.clone());
        }
        for n in names {
            if !ordered.contains(&n) {
                ordered.push(n);
            }
        }
        if ordered.len() > 1 {
            map.conflicts.push(NameConflict { id: SpeakerId::Cluster(k), names: ordered });
        }
    }
    map
}

#[derive(Debug, Clone, Default)]
pub struct NamingOptions {
    pub use_first_name_only: bool,
}

#[derive(Debug, Clone)]
pub struct NamingOutcome {
    pub names: NameMap,
    /// Prompts and replies in conversation order.
    pub transcript: Vec<ChatMessage>,
    /// 1-based turn the names were parsed from, if any.
    pub parsed_turn: Option<usize>,
}

/// Run the naming chain on the script and parse the reply listing the
/// identifiers, falling back to the last reply that has entries.
pub fn infer_names(script: &Script, client: &LlmClient, options: &NamingOptions) -> Result<NamingOutcome, NamingError> {
    if script.dialogue_count() == 0 {
        return Err(NamingError::NoDialogue);
    }
    let prompts = naming_chain(&serialize_markdown(script))?;
    let replies = client.run_chain(&prompts)?;
    let has_entries = |m: &ChatMessage| !parse_entries(&m.content, &mut Vec::new()).is_empty();
    let turn = if has_entries(&replies[IDENTIFIER_TURN]) {
        Some(IDENTIFIER_TURN)
    } else {
        replies.iter().rposition(has_entries)
    };
    let mut names = match turn {
        Some(t) => parse_name_list(&replies[t].content),
        None => {
            let mut m = NameMap::default();
            m.diagnostics.push("no reply contained a parseable name list; keeping cluster ids".into());
            m
        }
    };
    if names.entries.is_empty() {
        tracing::warn!("name inference produced no names; the script keeps cluster ids");
    }
    if options.use_first_name_only {
        names = names.first_names_only();
    }
    let transcript = prompts.into_iter().zip(replies).flat_map(|(p, r)| [p, r]).collect();
    Ok(NamingOutcome { names, transcript, parsed_turn: turn.map(|t| t + 1) })
}

/// Plain-text rendering of a conversation, one `ROLE:` block per turn.
pub fn render_transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            crate::llm::Role::System => "SYSTEM",
            crate::llm::Role::User => "USER",
            crate::llm::Role::Assistant => "ASSISTANT",
        };
        out.push_str(role);
        out.push_str(":\n");
        out.push_str(&m.content);
        out.push_str("\n\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ESCAPE_OUTPUT: &str = "\
    1. Cynthia Allen (c2) - The protagonist of the story, a young
    woman from a wealthy family who is struggling to break free
    from her parents' expectations.
    2. Bill Patterson (c1) - The gardener who Cynthia meets and
    falls in love with. He is initially portrayed as out of place
    in his job, but later reveals his own dreams and struggles.
    3. Curt (c0) - Cynthia's boyfriend, who represents the life
    she is expected to lead by her parents.
    4. Cynthia's parents (c4, c3) - They are not named, but are
    referred to as Cynthia's parents. They want Cynthia to stay
    in Carleton and lead a comfortable, privileged life.
    5. Gloria (c3) - A character who hosts gatherings where
    Cynthia and Bill first meet. She is portrayed as snobbish
    and dismissive towards Bill.
    6. The unnamed character (?) - There are a few instances where
    an unnamed character is referenced, likely representing the
    other guests at Gloria's gatherings.
";

    #[test]
    fn escape_output() {
        let m = parse_name_list(ESCAPE_OUTPUT);
        let names: BTreeMap<u32, &str> = m.entries.iter().map(|(k, e)| (*k, e.name.as_str())).collect();
        assert_eq!(
            names,
            BTreeMap::from([(0, "Curt"), (1, "Bill Patterson"), (2, "Cynthia Allen"), (3, "Gloria")])
        );
        assert_eq!(
            m.conflicts,
            [NameConflict { id: SpeakerId::Cluster(3), names: vec!["Gloria".into(), "Cynthia's parents".into()] }]
        );
        assert!(m.name_of(4).is_none());
        assert!(m.entries[&0].evidence.starts_with("Cynthia's boyfriend, who represents the life she is"));
    }

    #[test]
    fn single_entry() {
        let m = parse_name_list("1. Ada (c0) - pilot");
        assert_eq!(m.name_of(0), Some("Ada"));
        assert!(m.conflicts.is_empty());
    }

    #[test]
    fn no_list_gives_diagnostic() {
        let m = parse_name_list("I could not find any names in this script.");
        assert!(m.entries.is_empty());
        assert!(!m.diagnostics.is_empty());
    }

    #[test]
    fn numbering_gaps_and_whitespace() {
        let m = parse_name_list("\n\n   7. Ada (c0) - pilot\n\n12. Bob (c1)\n   ");
        assert_eq!(m.name_of(0), Some("Ada"));
        assert_eq!(m.name_of(1), Some("Bob"));
    }

    #[test]
    fn two_single_bindings_conflict() {
        let m = parse_name_list("1. Ada (c0) - x\n2. Eve (c0) - y");
        assert_eq!(m.name_of(0), Some("Ada"));
        assert_eq!(m.conflicts[0].names, ["Ada", "Eve"]);
    }

    #[test]
    fn first_names() {
        let m = parse_name_list(ESCAPE_OUTPUT).first_names_only();
        assert_eq!(m.name_of(1), Some("Bill"));
        assert_eq!(m.name_of(2), Some("Cynthia"));
    }

    #[test]
    fn chain_prompts_verbatim() {
        let p = naming_chain("# PAGE 1 - 1 PANEL:\n").unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].content, "This is the script of a comic book: \"\"\"# PAGE 1 - 1 PANEL:\n\"\"\"");
        assert_eq!(p[1].content, "Please list all character's names.");
        assert_eq!(p[2].content, "Please list all corresponding unique identifiers. Itemize.");
        assert_eq!(p[3].content, "What are their relationship? Explain your reasoning step-by-step.");
        assert!(matches!(naming_chain(""), Err(NamingError::EmptyScript)));
    }

    #[test]
    fn delimiter_escaped() {
        let p = naming_chain("c0: he said \"\"\"hi\"\"\"").unwrap();
        assert_eq!(p[0].content.matches("\"\"\"").count(), 2);
        assert!(p[0].content.contains("'''hi'''"));
    }

    #[test]
    fn names_json_round_trip() {
        let m = parse_name_list(ESCAPE_OUTPUT);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["c0"], "Curt");
        assert_eq!(json["conflicts"][0]["id"], "c3");
        let back: NameMap = serde_json::from_value(json).unwrap();
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.conflicts, m.conflicts);
    }
}
