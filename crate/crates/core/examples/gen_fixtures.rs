//! Regenerates the miniature replay fixtures under `tests/fixtures/cases`.
//!
//! Each case gets synthetic frames, a ground-truth annotation, one scripted
//! transcript per method and the golden predictions those transcripts yield.
//! Region ids in the DiffF transcripts come from running the localizer on
//! the generated frames.
//!
//!     cargo run -p deskact-core --example gen_fixtures

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use deskact::action::Method;
use deskact::config::{ProviderKind, RunConfig};
use deskact::extract::{build_gateway, extract, load_frames};
use deskact::gateway::ScriptedProvider;
use deskact::ingest::frame_file_name;
use deskact::localizer::{localize_sequence, regions_to_json, ChangeRegion};
use deskact::par::Exec;
use image::{Rgb, RgbImage};
use serde_json::{json, Value};

const W: u32 = 320;
const H: u32 = 240;
const BG: Rgb<u8> = Rgb([236, 236, 236]);

fn fill(img: &mut RgbImage, r0: u32, c0: u32, r1: u32, c1: u32, color: Rgb<u8>) {
    for r in r0..r1.min(img.height()) {
        for c in c0..c1.min(img.width()) {
            img.put_pixel(c, r, color);
        }
    }
}

fn cursor(img: &mut RgbImage, row: u32, col: u32) {
    for r in 0..12 {
        for c in 0..=r.min(7) {
            img.put_pixel(col + c, row + r, Rgb([10, 10, 10]));
        }
    }
}

fn window(title: Rgb<u8>) -> RgbImage {
    let mut img = RgbImage::from_pixel(W, H, BG);
    fill(&mut img, 0, 0, 18, W, title);
    img
}

fn click_scenes() -> Vec<RgbImage> {
    let base = || {
        let mut img = window(Rgb([40, 70, 140]));
        fill(&mut img, 30, 10, 170, 310, Rgb([255, 255, 255]));
        img
    };
    let button = |img: &mut RgbImage, color| fill(img, 185, 230, 210, 300, color);
    let mut s0 = base();
    button(&mut s0, Rgb([200, 200, 200]));
    cursor(&mut s0, 90, 80);
    let mut s1 = base();
    button(&mut s1, Rgb([200, 200, 200]));
    cursor(&mut s1, 192, 262);
    let mut s2 = base();
    button(&mut s2, Rgb([60, 120, 220]));
    cursor(&mut s2, 192, 262);
    vec![s0, s1, s2.clone(), s2]
}

fn scroll_scenes() -> Vec<RgbImage> {
    let scene = |offset: u32| {
        let mut img = window(Rgb([90, 90, 90]));
        for r in 40..220 {
            let band = ((r - 40 + offset) / 20) % 2;
            let color = if band == 0 { Rgb([250, 250, 250]) } else { Rgb([200, 210, 225]) };
            fill(&mut img, r, 20, r + 1, 300, color);
        }
        img
    };
    let (s2, s3) = (scene(40), scene(40));
    vec![scene(0), scene(20), s2, s3]
}

fn type_scenes() -> Vec<RgbImage> {
    let scene = |chars: u32| {
        let mut img = window(Rgb([30, 110, 60]));
        fill(&mut img, 60, 40, 86, 280, Rgb([120, 120, 120]));
        fill(&mut img, 62, 42, 84, 278, Rgb([255, 255, 255]));
        for i in 0..chars {
            let c = 48 + i * 9;
            fill(&mut img, 66, c, 80, c + 6, Rgb([20, 20, 20]));
        }
        img
    };
    vec![scene(0), scene(3), scene(6), scene(9)]
}

fn df_op(category: &str, id_category: &str, identifier: &str, app: &str, info: &str, frames: [u32; 2]) -> Value {
    json!({
        "frame_idx": frames,
        "thoughts": format!("The {identifier} changes in the frames."),
        "operation_category": category,
        "target_object": {"category": id_category, "identifier": identifier},
        "application": {"category": app, "identifier": ""},
        "additional_info": info,
        "abstract": format!("User performed {category} on {identifier} in {app}")
    })
}

fn fenced(thoughts: &str, value: &Value) -> String {
    format!("{thoughts}\n\n```json\n{}\n```", serde_json::to_string_pretty(value).unwrap())
}

fn descriptor(subject: &str, kind: &str, old: &str, new: &str, cursor: Option<&str>) -> String {
    serde_json::to_string_pretty(&json!({
        "global_description": "A single application window.",
        "description": format!("The region contains the {subject}."),
        "changed": true,
        "old_cursor_shape": cursor,
        "new_cursor_shape": cursor,
        "changes": [{"subject": subject, "type": kind, "old": old, "new": new, "message": format!("the {subject} changed")}]
    }))
    .unwrap()
}

fn difff_action(app: &str, element: &str, verb: &str, region: &str, evidences: &[&str]) -> Value {
    let ev: Vec<Value> = evidences.iter().map(|id| json!([id, format!("change in region {id}")])).collect();
    json!({"app": app, "element": element, "action": verb, "region": region, "evidences": ev})
}

fn ids(regions: &[ChangeRegion]) -> Vec<String> {
    regions.iter().map(|r| r.id().to_string()).collect()
}

struct Case {
    name: &'static str,
    domain: &'static str,
    gt: Value,
    scenes: Vec<RgbImage>,
    df: BTreeMap<String, String>,
    difff: Box<dyn Fn(&[String]) -> BTreeMap<String, String>>,
}

fn cases() -> Vec<Case> {
    let mut out = Vec::new();

    let click = df_op("click", "button", "Save button", "Notepad", "", [1, 2]);
    out.push(Case {
        name: "click",
        domain: "click",
        gt: json!([{"operation": "click", "detail": "Save button", "context": "Notepad"}]),
        scenes: click_scenes(),
        df: BTreeMap::from([
            ("df.proposer.w0".into(), fenced("The cursor moves to the button, which turns blue.", &json!({"user_operations": [click]}))),
            ("df.corrector.w0".into(), fenced("No redundant operations.", &json!({"user_operations": [click]}))),
        ]),
        difff: Box::new(|ids| {
            let mut t = BTreeMap::new();
            t.insert(format!("difff.descriptor.{}", ids[0]), descriptor("cursor", "move", "upper left", "over the button", Some("normal")));
            t.insert(format!("difff.descriptor.{}", ids[1]), descriptor("Save button", "style_change", "grey", "blue", Some("normal")));
            let proposal = json!([difff_action("Notepad", "Save button", "click", &ids[1], &[&ids[0], &ids[1]])]);
            t.insert("difff.proposer".into(), fenced("The cursor reaches the button and it is pressed.", &proposal));
            t.insert("difff.corrector".into(), fenced("<TASK 1> ... <TASK 8>: nothing to merge.", &proposal));
            t
        }),
    });

    let scroll = df_op("scroll", "list", "file list", "File Explorer", "down", [0, 2]);
    out.push(Case {
        name: "scroll",
        domain: "scroll",
        gt: json!([{"operation": "scroll", "detail": "file list", "context": "File Explorer"}]),
        scenes: scroll_scenes(),
        df: BTreeMap::from([
            ("df.proposer.w0".into(), fenced("The rows move up twice.", &json!({"user_operations": [scroll]}))),
            ("df.corrector.w0".into(), fenced("One continuous scroll.", &json!({"user_operations": [scroll]}))),
        ]),
        difff: Box::new(|ids| {
            let mut t = BTreeMap::new();
            for id in ids {
                t.insert(format!("difff.descriptor.{id}"), descriptor("file list rows", "move", "rows at rest", "rows shifted up", None));
            }
            let proposal = json!([
                difff_action("File Explorer", "file list", "scroll", &ids[0], &[&ids[0]]),
                difff_action("File Explorer", "file list", "scroll", &ids[1], &[&ids[1]]),
                difff_action("File Explorer", "file list", "click", &ids[0], &[&ids[0]]),
            ]);
            let corrected = json!([
                difff_action("File Explorer", "file list", "scroll", &ids[0], &[&ids[0], &ids[1]]),
                difff_action("File Explorer", "file list", "click", &ids[0], &[&ids[0]]),
            ]);
            t.insert("difff.proposer".into(), fenced("Rows move in two consecutive frames.", &proposal));
            t.insert("difff.corrector".into(), fenced("<TASK 8>: the two scrolls are one action.", &corrected));
            t
        }),
    });

    let type_a = df_op("type", "text field", "search box", "Web Browser", "hel", [1, 1]);
    let type_b = df_op("type", "text field", "search box", "Web Browser", "hello wor", [2, 3]);
    let merged = df_op("type", "text field", "search box", "Web Browser", "hello wor", [1, 3]);
    out.push(Case {
        name: "type",
        domain: "type",
        gt: json!([{"operation": "type", "detail": "search box", "context": "Web Browser"}]),
        scenes: type_scenes(),
        df: BTreeMap::from([
            ("df.proposer.w0".into(), fenced("Text appears in the box.", &json!({"user_operations": [type_a, type_b]}))),
            ("df.corrector.w0".into(), fenced("Adjacent type operations on the same box merge.", &json!({"user_operations": [merged]}))),
        ]),
        difff: Box::new(|ids| {
            let mut t = BTreeMap::new();
            let texts = ["hel", "hello ", "hello wor"];
            for (i, id) in ids.iter().enumerate() {
                let old = if i == 0 { "" } else { texts[i - 1] };
                t.insert(format!("difff.descriptor.{id}"), descriptor("search box text", "text_content_change", old, texts[i], None));
            }
            let proposal: Vec<Value> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| difff_action("Web Browser", texts[i], "type", id, &[id]))
                .collect();
            let corrected = json!([difff_action("Web Browser", "search box", "type", &ids[0], &ids.iter().map(String::as_str).collect::<Vec<_>>())]);
            t.insert("difff.proposer".into(), fenced("Three text changes.", &json!(proposal)));
            t.insert("difff.corrector".into(), fenced("<TASK 8>: earlier texts are prefixes of later ones.", &corrected));
            t
        }),
    });
    out
}

fn write_json(path: &Path, value: &Value) {
    let mut s = serde_json::to_string_pretty(value).unwrap();
    s.push('\n');
    fs::write(path, s).unwrap();
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cases");
    let mut index = Vec::new();
    for case in cases() {
        let dir = root.join(case.name);
        let frames_dir = dir.join("frames");
        if frames_dir.exists() {
            fs::remove_dir_all(&frames_dir).unwrap();
        }
        fs::create_dir_all(&frames_dir).unwrap();
        // two raw frames per scene at 2 fps, sampled at 1 fps
        for (i, scene) in case.scenes.iter().flat_map(|s| [s, s]).enumerate() {
            scene.save(frames_dir.join(frame_file_name(i))).unwrap();
        }
        write_json(&frames_dir.join("meta.json"), &json!({"source_fps": 2, "width": W, "height": H}));
        write_json(
            &dir.join("case.json"),
            &json!({
                "video_id": case.name,
                "domain": case.domain,
                "source_fps": 2,
                "frame_dir": "frames",
                "actions": case.gt,
            }),
        );

        let mut cfg = RunConfig {
            provider: ProviderKind::Scripted,
            ..RunConfig::default()
        };
        let seq = load_frames(&frames_dir, &cfg).unwrap();
        let regions: Vec<ChangeRegion> = localize_sequence(&seq.frames, &cfg.localizer, Exec::default())
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        println!("{}: {} samples, regions {:?}", case.name, seq.len(), ids(&regions));
        let first_pair: Vec<ChangeRegion> = regions.iter().filter(|r| r.frame == 1).cloned().collect();
        fs::write(dir.join("expected_regions_1.json"), regions_to_json(&first_pair)).unwrap();

        let transcripts = [
            (Method::Df, "transcript_df.json", case.df.clone()),
            (Method::Difff, "transcript_difff.json", (case.difff)(&ids(&regions))),
        ];
        for (method, file, responses) in transcripts {
            write_json(&dir.join(file), &json!({ "responses": responses }));
            let cache = tempfile::tempdir().unwrap();
            cfg.method = method;
            cfg.cache_dir = cache.path().to_path_buf();
            cfg.transcript = Some(dir.join(file));
            let gw = build_gateway(&cfg, Box::new(ScriptedProvider::new(responses))).unwrap();
            let out = extract(&gw, &cfg, case.name, &seq);
            let pred = out.prediction.unwrap_or_else(|| panic!("{} {method}: {:?}", case.name, out.error));
            fs::write(dir.join(format!("expected_{method}.json")), pred.to_json()).unwrap();
        }
        index.push(json!({"path": format!("{}/case.json", case.name), "domain": case.domain}));
    }
    write_json(&root.join("index.json"), &json!({"name": "fixture", "cases": index}));
}
