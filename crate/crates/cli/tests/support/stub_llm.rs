//! OpenAI-compatible chat stub on a local port, plus helpers to drive the
//! `asasf` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

/// (system text, user text) of one chat request.
pub type Prompt = (String, String);

pub struct StubLlm {
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
    pub url: String,
    pub prompts: Arc<Mutex<Vec<Prompt>>>,
}

impl StubLlm {
    pub fn start(respond: impl Fn(&str, &str) -> String + Send + 'static) -> StubLlm {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip address"));
        let prompts = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let (server, prompts) = (server.clone(), prompts.clone());
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let v: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                    let system = v["messages"][0]["content"].as_str().unwrap_or("").to_string();
                    let user = v["messages"][1]["content"].as_str().unwrap_or("").to_string();
                    let content = respond(&system, &user);
                    prompts.lock().unwrap().push((system, user));
                    let reply = json!({"choices": [{"message": {"role": "assistant", "content": content}}]});
                    let _ = req.respond(tiny_http::Response::from_string(reply.to_string()));
                }
            })
        };
        StubLlm {
            server,
            worker: Some(worker),
            url,
            prompts,
        }
    }

    pub fn take_prompts(&self) -> Vec<Prompt> {
        std::mem::take(&mut *self.prompts.lock().unwrap())
    }
}

impl Drop for StubLlm {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_asasf"))
}

pub fn asasf(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .env_remove("ASASF_API_KEY")
        .output()
        .expect("run asasf")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Write `rows` as a JSONL corpus file.
pub fn write_corpus(path: &Path, rows: &[(asasf_core::AnswerRecord, asasf_core::Split)]) {
    let corpus = asasf_core::Corpus::new(rows.to_vec()).expect("valid corpus");
    corpus
        .save(path, asasf_core::CorpusFormat::Jsonl)
        .expect("write corpus");
}

/// Manifest JSON with the creation timestamp removed.
pub fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_at");
    v
}
