#![allow(dead_code)]

use std::path::{Path, PathBuf};

use comicscript::annotations::BookAnnotation;
use comicscript::pipeline::{self, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn fixture_json<T: serde::de::DeserializeOwned>(rel: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(fixture(rel)).unwrap()).unwrap()
}

pub fn book() -> BookAnnotation {
    pipeline::load_book(&fixture("book/book.json")).unwrap()
}

/// The bundled configuration with output redirected to `out`.
pub fn config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture("book/pipeline.toml")).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

/// Three blobs of 20 points, spread 0.1, centres at least 10 apart.
pub fn three_blobs() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let mut pts = Vec::new();
    for c in centers {
        for _ in 0..20 {
            pts.push(vec![c[0] + 0.1 * normal(&mut rng), c[1] + 0.1 * normal(&mut rng)]);
        }
    }
    pts
}

/// Standard normal sample (Box-Muller).
pub fn normal(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub mod strategies {
    use comicscript::script::{Dialogue, Script, ScriptPage, ScriptPanel, SpeakerId};
    use proptest::prelude::*;

    pub fn text() -> impl Strategy<Value = String> {
        "[^#\n\r][^\n\r]{0,30}|"
    }

    pub fn speaker() -> impl Strategy<Value = SpeakerId> {
        prop_oneof![
            (0u32..50).prop_map(SpeakerId::Cluster),
            Just(SpeakerId::Unknown),
            "[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8})?".prop_map(SpeakerId::Named),
        ]
    }

    prop_compose! {
        pub fn panel()(
            panel_index in 1u32..40,
            sounds in prop::collection::vec(text(), 0..3),
            captions in prop::collection::vec(text(), 0..3),
            dialogues in prop::collection::vec((speaker(), text()), 0..5),
            description in prop::option::of(prop::collection::vec("[^#\n\r][^\n\r]{0,40}", 1..4)),
        ) -> ScriptPanel {
            ScriptPanel {
                panel_index,
                sounds,
                captions,
                dialogues: dialogues.into_iter().map(|(speaker, text)| Dialogue { speaker, text }).collect(),
                description: description.map(|lines| lines.join("\n")),
            }
        }
    }

    pub fn script() -> impl Strategy<Value = Script> {
        prop::collection::vec((1u32..500, prop::collection::vec(panel(), 0..5)), 0..5).prop_map(|pages| Script {
            pages: pages.into_iter().map(|(page_index, panels)| ScriptPage { page_index, panels }).collect(),
        })
    }
}

/// Synthetic page for the text-role rules: one single-line block per unit,
/// each in one of four balloon contexts.
pub mod role_corpus {
    use comicscript::annotations::{Association, Balloon, CharacterInstance, PageAnnotation, Panel, TextBlock, TextLine};
    use comicscript::geometry::{PixelPoint, Rect};
    use comicscript::TextRole;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const PAGE_WIDTH: u32 = 1000;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum Context {
        Free,
        /// Tailed balloon with a speaker.
        Spoken,
        /// Tailed balloon nobody is linked to.
        Orphan,
        /// Speaker link but no tail.
        Tailless,
    }

    #[derive(Debug, Clone, Copy)]
    pub struct Unit {
        pub height: i64,
        pub slope: f64,
        pub context: Context,
    }

    /// `n` units with heights in [min_h/2, 2 min_h] and slopes in
    /// [0.05, 0.2]; every fifth unit sits exactly on a threshold.
    pub fn units(n: usize, min_h: i64, min_slope: f64, seed: u64) -> Vec<Unit> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let contexts = [Context::Free, Context::Spoken, Context::Orphan, Context::Tailless];
        (0..n)
            .map(|i| {
                let mut height = rng.gen_range(min_h / 2..=2 * min_h);
                let mut slope = rng.gen_range(0.05..=0.2);
                match i % 10 {
                    0 => height = min_h,
                    5 => slope = min_slope,
                    _ => {}
                }
                Unit { height, slope, context: contexts[rng.gen_range(0..4)] }
            })
            .collect()
    }

    /// The rule written out directly.
    pub fn oracle(u: &Unit, min_height_ratio: f64, min_slope: f64) -> TextRole {
        if u.context == Context::Spoken {
            return TextRole::Dialogue;
        }
        let min_h = min_height_ratio * PAGE_WIDTH as f64;
        if u.height as f64 >= min_h || u.slope >= min_slope {
            TextRole::Sound
        } else {
            TextRole::Caption
        }
    }

    pub fn block_id(i: usize) -> String {
        format!("t{i}")
    }

    pub fn page(units: &[Unit]) -> PageAnnotation {
        let rows = units.len().div_ceil(10) as u32;
        let mut page = PageAnnotation {
            index: 1,
            width: PAGE_WIDTH,
            height: rows * 120 + 20,
            panels: vec![Panel {
                id: "p1".into(),
                bbox: Rect::new(0, 0, PAGE_WIDTH as i64, (rows * 120 + 20) as i64),
                reading_order: 1,
                description_gt: None,
            }],
            text_blocks: Vec::new(),
            balloons: Vec::new(),
            characters: Vec::new(),
            associations: Vec::new(),
            associations_gt: None,
        };
        for (i, u) in units.iter().enumerate() {
            let bbox = Rect::new(10 + (i as i64 % 10) * 98, 10 + (i as i64 / 10) * 120, 80, u.height);
            let mut block = TextBlock {
                id: block_id(i),
                bbox,
                lines: vec![TextLine { text: format!("LINE {i}"), bbox, baseline_slope: u.slope }],
                transcription: format!("LINE {i}"),
                containing_balloon_id: None,
                panel: Some("p1".into()),
                role_gt: None,
            };
            if u.context != Context::Free {
                let b = format!("b{i}");
                let (x0, y0, x1, y1) = (bbox.x - 4, bbox.y - 4, bbox.right() + 4, bbox.bottom() + 4);
                let tail = matches!(u.context, Context::Spoken | Context::Orphan).then(|| PixelPoint::new(x0, y1 + 10));
                page.balloons.push(Balloon {
                    id: b.clone(),
                    contour: vec![PixelPoint::new(x0, y0), PixelPoint::new(x1, y0), PixelPoint::new(x1, y1), PixelPoint::new(x0, y1)],
                    tail_tip: tail,
                    contained_text_block_ids: vec![block.id.clone()],
                });
                block.containing_balloon_id = Some(b.clone());
                if u.context != Context::Orphan {
                    let c = format!("ch{i}");
                    page.characters.push(CharacterInstance {
                        id: c.clone(),
                        panel_id: "p1".into(),
                        body_bbox: Rect::new(bbox.x, bbox.bottom() + 12, 20, 20),
                        reference_identity: None,
                        excluded: false,
                    });
                    page.associations.push(Association { balloon: b, character: c });
                }
            }
            page.text_blocks.push(block);
        }
        page
    }
}

/// Transport that counts calls and refuses all of them.
#[derive(Default)]
pub struct CountingTransport {
    pub calls: std::sync::atomic::AtomicUsize,
}

impl CountingTransport {
    pub fn count(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl comicscript::llm::Transport for CountingTransport {
    fn chat(&self, _: &comicscript::llm::ChatRequest) -> Result<String, comicscript::llm::LlmError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Err(comicscript::llm::LlmError::Transport("offline test".into()))
    }

    fn embed(&self, _: &comicscript::llm::EmbedRequest) -> Result<Vec<f32>, comicscript::llm::LlmError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Err(comicscript::llm::LlmError::Transport("offline test".into()))
    }
}

/// Replay the bundled configuration into `out`; returns the summary and
/// the number of transport calls made.
pub fn replay_fixture(out: &Path) -> (pipeline::RunSummary, usize) {
    let transport = std::sync::Arc::new(CountingTransport::default());
    let summary = pipeline::run(&config(out), transport.clone(), None).unwrap();
    (summary, transport.count())
}

/// Cassette entries of a fixture cassette file.
pub fn cassette_entries(name: &str) -> Vec<comicscript::llm::CassetteEntry> {
    std::fs::read_to_string(fixture(&format!("book/cassettes/{name}")))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Runs of whitespace collapsed to one space.
pub fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
