//! Re-record the fixture book cassettes with a scripted stand-in provider.
//!
//! Run from the workspace root:
//!     cargo run -p comicscript-core --example record_fixture
//!
//! Image embeddings come from `vectors.json`, keyed by crop hash. Chat
//! replies are canned per turn; text embeddings are hashed bags of words.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use comicscript::clustering::{character_crops, load_vectors};
use comicscript::describe::PROMPT_DESCRIBE;
use comicscript::llm::{CassetteMode, ChatRequest, EmbedInput, EmbedRequest, LlmError, Role, Transport};
use comicscript::pipeline::{self, PipelineConfig};
use sha2::{Digest, Sha256};

const TEXT_DIMS: usize = 64;

struct Scripted {
    crops: BTreeMap<String, Vec<f32>>,
    naming_reply: String,
    panel_description: String,
}

impl Scripted {
    fn naming(&self, turn: usize) -> String {
        match turn {
            1 => "I have read the script. It follows a young woman torn between her family and a new acquaintance.".into(),
            2 => "1. Cynthia Allen\n2. Bill Patterson\n3. Curt\n4. Gloria".into(),
            3 => self.naming_reply.clone(),
            _ => "Cynthia and Curt are a couple at the start. Cynthia meets Bill at Gloria's party \
                  and grows closer to him, which strains her relationship with Curt."
                .into(),
        }
    }

    fn describe(&self, turn: usize, last: &str) -> String {
        if turn == 1 {
            return "The panel shows several people in a room with a window and a door.".into();
        }
        let extract = last.split("\"\"\"").nth(1).unwrap_or_default();
        if extract.contains("HI, KIDS!") {
            return self.panel_description.clone();
        }
        let dialogue: Vec<&str> = section(extract, "DIALOGUE");
        let captions: Vec<&str> = section(extract, "CAPTION");
        let mut speakers: Vec<&str> = dialogue.iter().filter_map(|l| l.split_once(": ").map(|(s, _)| s)).collect();
        speakers.dedup();
        let mut out = if speakers.is_empty() {
            "The panel shows the scene without dialogue.".to_string()
        } else {
            format!("The scene shows {}.", speakers.join(", "))
        };
        if !captions.is_empty() {
            out.push_str(&format!(" The caption reads: {}", captions.join(" ")));
        }
        if !dialogue.is_empty() {
            out.push_str("\nThe dialogue goes as follows:\n");
            out.push_str(&dialogue.join("\n"));
        }
        out
    }
}

/// Lines under `### {name}` up to the next header.
fn section<'a>(extract: &'a str, name: &str) -> Vec<&'a str> {
    let header = format!("### {name}");
    extract
        .lines()
        .skip_while(|l| l.trim() != header)
        .skip(1)
        .take_while(|l| !l.starts_with('#'))
        .filter(|l| !l.trim().is_empty())
        .collect()
}

fn bag_of_words(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; TEXT_DIMS];
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        let h = Sha256::digest(word.to_lowercase().as_bytes());
        v[h[0] as usize % TEXT_DIMS] += 1.0;
    }
    v
}

impl Transport for Scripted {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let turn = req.messages.iter().filter(|m| m.role == Role::User).count();
        let first = &req.messages[0].content;
        let last = &req.messages.last().expect("non-empty conversation").content;
        if first.starts_with("This is the script of a comic book") {
            Ok(self.naming(turn))
        } else if first == PROMPT_DESCRIBE {
            Ok(self.describe(turn, last))
        } else {
            Err(LlmError::Transport(format!("unscripted conversation: {first:.40}")))
        }
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<f32>, LlmError> {
        match &req.input {
            EmbedInput::Text(t) => Ok(bag_of_words(t)),
            EmbedInput::Image(img) => self
                .crops
                .get(&img.sha256())
                .cloned()
                .ok_or_else(|| LlmError::Transport("unknown crop".into())),
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/book");
    let mut cfg = PipelineConfig::load(&dir.join("pipeline.toml"))?;
    cfg.cassette_mode = CassetteMode::Record;
    let scratch = std::env::temp_dir().join("comicscript-record");
    let _ = std::fs::remove_dir_all(&scratch);
    cfg.output = scratch.clone();

    for c in [&cfg.naming_cassette, &cfg.describe_cassette, &cfg.embedding_cassette, &cfg.similarity_cassette] {
        let _ = std::fs::remove_file(c);
    }

    let book = pipeline::load_book(&cfg.annotations)?;
    let vectors = load_vectors(&dir.join("vectors.json"))?;
    let mut crops = BTreeMap::new();
    for (id, png) in character_crops(&book, &cfg.images)? {
        let key = hex::encode(Sha256::digest(&png));
        if crops.insert(key, vectors[&id].clone()).is_some() {
            return Err(format!("crop of {id} is not unique").into());
        }
    }
    let transport = Scripted {
        crops,
        naming_reply: std::fs::read_to_string(dir.join("naming_reply.txt"))?.trim_end().to_string(),
        panel_description: std::fs::read_to_string(dir.join("panel_description.txt"))?.trim_end().to_string(),
    };
    let summary = pipeline::run(&cfg, Arc::new(transport), None)?;
    if let Some(report) = &summary.report {
        println!("{}", comicscript::eval::render_text(report));
    }
    let written: Vec<PathBuf> = summary.written;
    println!("{} artifacts in {}", written.len(), scratch.display());
    Ok(())
}
