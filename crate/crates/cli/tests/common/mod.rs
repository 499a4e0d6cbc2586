#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use prefadapt::dataio::save_embeddings;
use prefadapt::{Embedding, EmbeddingTable, RowMeta};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prefadapt"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn prefadapt")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// `x=(1,0)`, `y1=(0,1)`, `y2=(1,0)` as ids `x`, `y1`, `y2`, plus `pairs.jsonl` holding `y1 ≻ y2`.
pub fn write_worked_example(dir: &Path) {
    let rows = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]
        .iter()
        .map(|r| Embedding::new(r.to_vec()).unwrap())
        .collect();
    let table = EmbeddingTable::new(2, vec!["x".into(), "y1".into(), "y2".into()], rows).unwrap();
    save_embeddings(&table, dir.join("w.pemb"), dir.join("w.jsonl")).unwrap();
    std::fs::write(dir.join("w_pairs.jsonl"), "{\"winner\":\"y1\",\"loser\":\"y2\"}\n").unwrap();
}

/// Table whose rows carry scores `0, 1, …, n-1`.
pub fn write_scored(dir: &Path, n: usize) {
    let rows = (0..n)
        .map(|i| {
            let a = i as f64 * 0.37;
            Embedding::new(vec![a.cos(), a.sin(), 0.5]).unwrap()
        })
        .collect();
    let meta = (0..n)
        .map(|i| RowMeta {
            uri: Some(format!("img/{i}.png")),
            score: Some(i as f64),
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i:03}")).collect();
    let table = EmbeddingTable::with_meta(3, ids, rows, meta).unwrap();
    save_embeddings(&table, dir.join("scored.pemb"), dir.join("scored.jsonl")).unwrap();
}

/// A running `prefadapt serve`; killed with SIGKILL on drop.
pub struct Server {
    pub child: Child,
    pub addr: SocketAddr,
}

impl Server {
    pub fn start(args: &[&str]) -> Server {
        Self::start_with_env(args, &[])
    }

    pub fn start_with_env(args: &[&str], env: &[(&str, &str)]) -> Server {
        let mut child = bin()
            .arg("serve")
            .envs(env.iter().copied())
            .args(["--listen", "127.0.0.1:0"])
            .args(args)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .parse()
            .unwrap();
        Server { child, addr }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn get(&self, path: &str) -> serde_json::Value {
        ureq::get(&self.url(path))
            .call()
            .unwrap()
            .body_mut()
            .read_json()
            .unwrap()
    }

    pub fn post(&self, path: &str, body: serde_json::Value) -> serde_json::Value {
        ureq::post(&self.url(path))
            .send_json(body)
            .unwrap()
            .body_mut()
            .read_json()
            .unwrap()
    }

    /// Status and JSON body without treating 4xx/5xx as transport errors.
    pub fn post_raw(&self, path: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let mut resp = agent.post(&self.url(path)).send_json(body).unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_json().unwrap())
    }

    pub fn kill(mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}
