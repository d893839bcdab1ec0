use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use decipher::decomposer::{connected_components, rle_decode, MaskFile};
use decipher::glyph_data::{load_glyph_bitmap, DEFAULT_THRESHOLD};

fn decipher(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decipher"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = decipher(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ids_parse_prints_tree() {
    let out = ok(&["ids", "parse", "⿱宀女"]);
    assert!(out.contains("TopBottom"));
    assert_eq!(out.lines().last(), Some("⿱宀女"));
    assert_eq!(decipher(&["ids", "parse", "⿱宀"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(decipher(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(decipher(&["holdout"]).status.code(), Some(2));
    assert_eq!(
        decipher(&["stats", "--k", "0", "--manifest", "m.jsonl"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "neighbours = 3\n").unwrap();
    assert_eq!(decipher(&["stats", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn version_lists_schemas() {
    let out = ok(&["--version"]);
    assert!(out.starts_with("decipher "));
    assert!(out.contains("predictions.jsonl\tv1"));
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("c");
    ok(&[
        "compose",
        "--out",
        s(&corpus),
        "--seed",
        "4",
        "--radicals",
        "8",
        "--compounds",
        "24",
    ]);
    let manifest = corpus.join("manifest.jsonl");
    let dict = corpus.join("dict.tsv");
    let plan = d.join("h.json");
    ok(&[
        "holdout",
        "--manifest",
        s(&manifest),
        "--n",
        "6",
        "--seed",
        "4",
        "--out",
        s(&plan),
    ]);
    let store = d.join("s.jsonl");
    let common = ["--dict", s(&dict), "--manifest", s(&manifest)];
    ok(&[&["annotate", "--plan", s(&plan), "--out", s(&store)][..], &common].concat());

    let mut preds = Vec::new();
    for jobs in ["1", "3"] {
        let p = d.join(format!("p{jobs}.jsonl"));
        ok(&[
            &[
                "predict",
                "--jobs",
                jobs,
                "--plan",
                s(&plan),
                "--store",
                s(&store),
                "--out",
                s(&p),
            ][..],
            &common,
        ]
        .concat());
        preds.push(fs::read(&p).unwrap());
    }
    assert_eq!(preds[0], preds[1]);
    let ids: Vec<String> = String::from_utf8(preds[0].clone())
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["glyph_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    let report = ok(&[
        &["score", "--pred", s(&d.join("p1.jsonl")), "--plan", s(&plan)][..],
        &common,
    ]
    .concat());
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["periods"]["OBI"]["undeciphered"], 6);
    assert_eq!(
        report,
        ok(&[
            &["score", "--pred", s(&d.join("p3.jsonl")), "--plan", s(&plan)][..],
            &common
        ]
        .concat())
    );
}

#[test]
fn segment_merge_dist_zero_gives_components() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    ok(&[
        "compose",
        "--out",
        s(&corpus),
        "--radicals",
        "4",
        "--compounds",
        "6",
        "--periods",
        "OBI",
    ]);
    for entry in fs::read_dir(&corpus).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "pgm") {
            continue;
        }
        let file: MaskFile = serde_json::from_str(&ok(&["segment", "--in", s(&path), "--merge-dist", "0"])).unwrap();
        let bitmap = load_glyph_bitmap(&path, DEFAULT_THRESHOLD).unwrap();
        let mut got: Vec<_> = file.masks.iter().map(|m| rle_decode(&m.rle, 64, 64).unwrap()).collect();
        let mut want = connected_components(&bitmap);
        got.sort_by_key(|b| b.data().to_vec());
        want.sort_by_key(|b| b.data().to_vec());
        assert_eq!(got, want, "{}", path.display());
    }
}
