//! Panel descriptions: label characters on the panel image, then run the
//! two-prompt description chain with the panel's script extract.

mod overlay;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::annotations::{panels_in_reading_order, BookAnnotation, CharacterInstance, PageAnnotation, Panel};
use crate::imaging::{self, ImageError};
use crate::llm::{ChatMessage, LlmClient, LlmError};
use crate::naming::NameMap;
use crate::parallel::bounded_map;
use crate::script::{insert_description, serialize_panel_sections, Script, ScriptError, ScriptPanel, SpeakerId};

pub use overlay::{glyph_size, overlay_labels, LabelOverlay, PlacedLabel};

pub const PROMPT_DESCRIBE: &str =
    "Please describe this comic book panel using character's names written in white rectangles.";
pub const PROMPT_REPHRASE: &str = r#"Please rephrase considering character's settings and interaction only, naming characters and citing all text from the following script extract: """{SCRIPT}""""#;

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("page {page} panel {panel}: {source}")]
    Llm {
        page: u32,
        panel: u32,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("cannot write {path}: {detail}")]
    Write { path: PathBuf, detail: String },
}

impl DescribeError {
    pub fn llm_error(&self) -> Option<&LlmError> {
        match self {
            DescribeError::Llm { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// The two user prompts; the labeled panel image rides on the first.
pub fn description_chain(labeled_png: Vec<u8>, script_extract: &str) -> Vec<ChatMessage> {
    let extract = script_extract.replace(r#"""""#, "'''");
    vec![
        ChatMessage::user(PROMPT_DESCRIBE).with_image(labeled_png),
        ChatMessage::user(PROMPT_REPHRASE.replace("{SCRIPT}", &extract)),
    ]
}

/// Speaker of every character with cluster ids replaced by inferred names.
pub fn named_speakers(speakers: &BTreeMap<String, SpeakerId>, names: &NameMap) -> BTreeMap<String, SpeakerId> {
    speakers
        .iter()
        .map(|(id, s)| {
            let s = match s {
                SpeakerId::Cluster(k) => names.name_of(*k).map_or(s.clone(), |n| SpeakerId::Named(n.to_string())),
                other => other.clone(),
            };
            (id.clone(), s)
        })
        .collect()
}

fn panel_characters<'a>(page: &'a PageAnnotation, panel: &Panel) -> Vec<&'a CharacterInstance> {
    let mut chars: Vec<&CharacterInstance> = page.characters.iter().filter(|c| c.panel_id == panel.id).collect();
    chars.sort_by(|a, b| (a.body_bbox.x, a.body_bbox.y, &a.id).cmp(&(b.body_bbox.x, b.body_bbox.y, &b.id)));
    chars
}

/// Labeled PNG of one panel cropped from its page image. A panel without
/// characters is returned as the plain crop.
pub fn labeled_panel_png(
    page_image: &image::RgbImage,
    page: &PageAnnotation,
    panel: &Panel,
    speakers: &BTreeMap<String, SpeakerId>,
) -> Result<Vec<u8>, ImageError> {
    let crop = imaging::crop(page_image, &panel.bbox)?;
    let labels: Vec<(String, (f64, f64))> = panel_characters(page, panel)
        .into_iter()
        .map(|c| {
            let text = speakers.get(&c.id).unwrap_or(&SpeakerId::Unknown).to_string();
            let (cx, cy) = c.body_bbox.center();
            (text, (cx - panel.bbox.x as f64, cy - panel.bbox.y as f64))
        })
        .collect();
    if labels.is_empty() {
        return imaging::encode_png(&crop);
    }
    imaging::encode_png(&overlay_labels(&crop, &labels).image)
}

/// Overlay labels on an encoded panel image. With no labels the input
/// bytes are returned unchanged.
pub fn overlay_png(panel_png: &[u8], labels: &[(String, (f64, f64))]) -> Result<Vec<u8>, ImageError> {
    if labels.is_empty() {
        return Ok(panel_png.to_vec());
    }
    let img = imaging::decode_png(panel_png)?;
    imaging::encode_png(&overlay_labels(&img, labels).image)
}

#[derive(Debug, Clone)]
pub struct PanelDescription {
    pub page_index: u32,
    pub panel_index: u32,
    pub description: String,
    pub overlay_png: Vec<u8>,
}

/// Run the chain for one panel and return the second reply.
pub fn describe_panel(
    labeled_png: Vec<u8>,
    script_panel: &ScriptPanel,
    client: &LlmClient,
) -> Result<String, LlmError> {
    let prompts = description_chain(labeled_png, &serialize_panel_sections(script_panel));
    let replies = client.run_chain(&prompts)?;
    Ok(replies[1].content.clone())
}

#[derive(Debug, Clone)]
pub struct DescribeOptions {
    pub images_dir: PathBuf,
    /// Where labeled panel images are written, if anywhere.
    pub overlays_dir: Option<PathBuf>,
    pub max_in_flight: usize,
}

pub fn overlay_file_name(page_index: u32, panel_index: u32) -> String {
    format!("page-{page_index}-panel-{panel_index}.png")
}

/// Describe every panel of the book and insert the descriptions into
/// `script`. Nothing is inserted unless every panel succeeds.
pub fn describe_script(
    book: &BookAnnotation,
    script: &Script,
    speakers: &BTreeMap<String, SpeakerId>,
    client: &LlmClient,
    options: &DescribeOptions,
) -> Result<(Script, Vec<PanelDescription>), DescribeError> {
    let mut jobs: Vec<(u32, u32, Vec<u8>, ScriptPanel)> = Vec::new();
    for page in &book.pages {
        let img = imaging::load_page(&options.images_dir, page.index)?;
        for panel in panels_in_reading_order(page) {
            let script_panel = script
                .panel(page.index, panel.reading_order)
                .ok_or(ScriptError::UnknownPanel { page: page.index, panel: panel.reading_order })?;
            let png = labeled_panel_png(&img, page, panel, speakers)?;
            jobs.push((page.index, panel.reading_order, png, script_panel.clone()));
        }
    }
    if let Some(dir) = &options.overlays_dir {
        write_overlays(dir, &jobs)?;
    }
    let results = bounded_map(&jobs, options.max_in_flight, |(page, panel, png, sp)| {
        describe_panel(png.clone(), sp, client).map_err(|source| DescribeError::Llm { page: *page, panel: *panel, source })
    });
    let mut out = script.clone();
    let mut described = Vec::with_capacity(jobs.len());
    let texts: Vec<String> = results.into_iter().collect::<Result<_, _>>()?;
    for ((page, panel, png, _), text) in jobs.into_iter().zip(texts) {
        out = insert_description(&out, page, panel, &text)?;
        described.push(PanelDescription { page_index: page, panel_index: panel, description: text, overlay_png: png });
    }
    Ok((out, described))
}

fn write_overlays(dir: &Path, jobs: &[(u32, u32, Vec<u8>, ScriptPanel)]) -> Result<(), DescribeError> {
    let err = |path: &Path, e: std::io::Error| DescribeError::Write { path: path.to_path_buf(), detail: e.to_string() };
    fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
    for (page, panel, png, _) in jobs {
        let path = dir.join(overlay_file_name(*page, *panel));
        fs::write(&path, png).map_err(|e| err(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::Dialogue;

    #[test]
    fn prompts_verbatim() {
        let panel = ScriptPanel {
            panel_index: 5,
            dialogues: vec![Dialogue { speaker: SpeakerId::Named("Cynthia".into()), text: "HI, KIDS! WHAT'S UP?".into() }],
            ..Default::default()
        };
        let extract = serialize_panel_sections(&panel);
        let p = description_chain(vec![1, 2], &extract);
        assert_eq!(p.len(), 2);
        assert!(p[0].image.is_some() && p[1].image.is_none());
        assert_eq!(
            p[0].content,
            "Please describe this comic book panel using character's names written in white rectangles."
        );
        assert_eq!(
            p[1].content,
            format!("Please rephrase considering character's settings and interaction only, naming characters and citing all text from the following script extract: \"\"\"{extract}\"\"\"")
        );
    }

    #[test]
    fn empty_extract_allowed() {
        let p = description_chain(vec![1], "");
        assert!(p[1].content.ends_with("script extract: \"\"\"\"\"\""));
    }

    #[test]
    fn extract_delimiters_escaped() {
        let p = description_chain(vec![1], "c0: \"\"\"");
        assert!(p[1].content.ends_with("c0: '''\"\"\""));
    }

    #[test]
    fn zero_labels_identity() {
        let img = image::RgbImage::from_pixel(20, 20, image::Rgb([1, 2, 3]));
        let png = imaging::encode_png(&img).unwrap();
        assert_eq!(overlay_png(&png, &[]).unwrap(), png);
    }

    #[test]
    fn named_speakers_apply_names() {
        let mut names = NameMap::default();
        names.entries.insert(0, crate::naming::NameEntry { name: "Curt".into(), evidence: String::new() });
        let s = BTreeMap::from([
            ("a".to_string(), SpeakerId::Cluster(0)),
            ("b".to_string(), SpeakerId::Cluster(1)),
            ("c".to_string(), SpeakerId::Unknown),
        ]);
        let n = named_speakers(&s, &names);
        assert_eq!(n["a"], SpeakerId::Named("Curt".into()));
        assert_eq!(n["b"], SpeakerId::Cluster(1));
        assert_eq!(n["c"], SpeakerId::Unknown);
    }
}
