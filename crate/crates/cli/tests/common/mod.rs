#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::json;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn bookcbr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bookcbr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run bookcbr")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub const TOKENS: [(&str, &str); 3] = [("ana", "tok-ana"), ("bea", "tok-bea"), ("carlos", "tok-carlos")];

pub fn write_config(dir: &Path) -> PathBuf {
    let experts: Vec<String> = TOKENS
        .iter()
        .map(|(id, tok)| format!("{{ id = \"{id}\", token = \"{tok}\" }}"))
        .collect();
    let body = format!(
        "store_dir = \"{}\"\nsimilarity.metric = \"jaccard\"\nthreshold = 0.5\nlisten = \"127.0.0.1:0\"\nexperts = [{}]\n",
        dir.join("store").display(),
        experts.join(", ")
    );
    let path = dir.join("bookcbr.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// A running `bookcbr serve`; killed on drop.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    pub fn start(config: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_bookcbr"))
            .args(["serve", "--config"])
            .arg(config)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner {line:?}"));
        Server { base: format!("http://{addr}"), child }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Planted composition of the 100-record ingestion dump.
pub struct Planted {
    pub lines: Vec<String>,
    pub missing_text: usize,
    pub outside_spain: usize,
    pub duplicate: usize,
    pub too_short: usize,
    pub accepted: usize,
    pub readers: usize,
}

fn words(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}palabra{i}")).collect::<Vec<_>>().join(" ")
}

/// 10 missing text, 15 outside Spain, 12 duplicates, 13 at exactly 20
/// words, 50 accepted (21 words or more) from 7 authors.
pub fn planted_dump() -> Planted {
    let mut lines = Vec::new();
    let mut push = |author: usize, text: Option<String>, country: Option<&str>| {
        let mut rec = json!({
            "tweet_id": format!("t{}", lines.len() + 1),
            "author_id": format!("u{author}"),
            "lang": "es",
            "created_at": format!("2022-04-{:02}T10:00:00Z", lines.len() % 28 + 1),
        });
        if let Some(t) = text {
            rec["text"] = json!(t);
        }
        if let Some(c) = country {
            rec["country"] = json!(c);
        }
        lines.push(rec.to_string());
    };

    let accepted: Vec<String> = (0..50)
        .map(|i| format!("{} {}", words(&format!("a{i}"), 21), "extra ".repeat(i % 3)).trim().to_owned())
        .collect();
    for (i, text) in accepted.iter().enumerate() {
        push(i % 7, Some(text.clone()), Some("ES"));
    }
    // stage 1: absent, empty, blank and punctuation-only text
    for i in 0..10 {
        let text = match i % 4 {
            0 => None,
            1 => Some(String::new()),
            2 => Some("   ".into()),
            _ => Some("¡¡ ... !!".into()),
        };
        push(i, text, Some("ES"));
    }
    // stage 2: other countries and no country at all
    for i in 0..15 {
        let country = if i < 5 { None } else { Some("MX") };
        push(i, Some(words(&format!("x{i}"), 25)), country);
    }
    // stage 3: same cleaned text as an accepted record, written differently
    for (i, original) in accepted.iter().take(12).enumerate() {
        let text = match i % 3 {
            0 => original.clone(),
            1 => original.to_uppercase(),
            _ => format!("{original} https://t.co/abc @lector"),
        };
        push(i, Some(text), Some("es"));
    }
    // stage 4: exactly 20 tokens once mentions and links are stripped
    for i in 0..13 {
        push(i, Some(format!("@amigo {} http://x.es/{i}", words(&format!("s{i}"), 20))), Some("ES"));
    }
    Planted { lines, missing_text: 10, outside_spain: 15, duplicate: 12, too_short: 13, accepted: 50, readers: 7 }
}
