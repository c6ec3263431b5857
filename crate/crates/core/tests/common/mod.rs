#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use logreason::model::{LogSample, Split, SubTask};

pub fn sample(id: &str, task: SubTask, domain: &str, log: &str, answer: &str) -> LogSample {
    LogSample {
        id: id.into(),
        task,
        domain: domain.into(),
        instruction: format!("{} instruction", task.label()),
        log: log.into(),
        answer: answer.into(),
        reasoning: None,
        template_id: None,
        split: Split::Train,
    }
}

/// Per-(task, domain) sample counts and mean reasoning lengths of the full corpus.
pub const CORPUS_SHAPE: [(SubTask, &str, usize, f64); 12] = [
    (SubTask::Lp, "HDFS", 200, 128.97),
    (SubTask::Lp, "Hadoop", 200, 105.70),
    (SubTask::Lp, "Zookeeper", 200, 83.14),
    (SubTask::Lp, "BGL", 200, 61.66),
    (SubTask::Lp, "HPC", 200, 80.41),
    (SubTask::Lp, "Linux", 200, 114.80),
    (SubTask::Lp, "Proxifier", 200, 124.64),
    (SubTask::Ad, "BGL", 194, 98.28),
    (SubTask::Ad, "Spirit", 138, 102.98),
    (SubTask::Li, "Apache", 300, 257.47),
    (SubTask::Rc, "Apache", 300, 320.97),
    (SubTask::Sr, "Apache", 300, 344.76),
];

fn words(n: usize) -> String {
    (0..n)
        .map(|i| format!("w{}", i % 97))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A corpus with the reference composition (2632 samples) whose reasoning lengths reproduce the per-group means.
pub fn reference_corpus() -> Vec<LogSample> {
    let mut out = Vec::new();
    for (task, domain, n, mean) in CORPUS_SHAPE {
        let total = (mean * n as f64).round() as usize;
        let (base, extra) = (total / n, total % n);
        for i in 0..n {
            let (log, answer) = match task {
                SubTask::Lp => (
                    format!("event {i} from node{}", i % 13),
                    format!("event {i} from <*>"),
                ),
                SubTask::Ad => (
                    format!("status {i}"),
                    if i % 3 == 0 { "abnormal" } else { "normal" }.to_string(),
                ),
                _ => (
                    format!("issue {i} on worker"),
                    format!("explanation number {i} for the worker issue"),
                ),
            };
            let mut s = sample(
                &format!("{}-{domain}-{i}", task.label()),
                task,
                domain,
                &log,
                &answer,
            );
            s.reasoning = Some(words(base + usize::from(i < extra)));
            out.push(s);
        }
    }
    out
}

pub const MONOLOGUE: &str = "Step 1: Read the log and note the component that wrote it.\n\
Step 2: Separate fixed wording from runtime values such as ids and addresses.\n\
Step 3: Relate the event to the normal behaviour of that component.\n\
Step 4: Summarise what the evidence says about the event.";

/// The reply a stub gives to one request.
#[derive(Debug, Clone)]
pub enum Reply {
    Status(u16, String),
    /// Sleep, then answer.
    Delayed(Duration, Box<Reply>),
}

pub fn ok_json(body: String) -> Reply {
    Reply::Status(200, body)
}

/// Chat-completions response body carrying `texts` as choices.
pub fn chat_body(texts: &[&str]) -> String {
    let choices: Vec<_> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| serde_json::json!({"index": i, "message": {"role": "assistant", "content": t}, "finish_reason": "stop"}))
        .collect();
    serde_json::json!({"id": "stub", "object": "chat.completion", "choices": choices}).to_string()
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn prompt(&self) -> &str {
        self.body
            .pointer("/messages/0/content")
            .and_then(|v| v.as_str())
            .unwrap_or("")
    }
}

type Handler = dyn Fn(&Captured, usize) -> Reply + Send + Sync;

/// Minimal HTTP/1.1 server on localhost answering every request through `handler`.
/// The second handler argument counts requests from 0.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Captured>>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&Captured, usize) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let counter = Arc::new(AtomicUsize::new(0));
        let reqs = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (handler, counter, reqs) = (handler.clone(), counter.clone(), reqs.clone());
                thread::spawn(move || serve(stream, &*handler, &counter, &reqs));
            }
        });
        StubServer { url, requests }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn serve(stream: TcpStream, handler: &Handler, counter: &AtomicUsize, reqs: &Mutex<Vec<Captured>>) {
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let mut headers = Vec::new();
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let len: usize = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or(0);
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let captured = Captured {
            path,
            headers,
            body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
        };
        let k = counter.fetch_add(1, Ordering::SeqCst);
        reqs.lock().unwrap().push(captured.clone());
        let mut reply = handler(&captured, k);
        while let Reply::Delayed(d, inner) = reply {
            thread::sleep(d);
            reply = *inner;
        }
        let Reply::Status(code, text) = reply else {
            unreachable!()
        };
        let head = format!(
            "HTTP/1.1 {code} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: keep-alive\r\n\r\n",
            text.len()
        );
        if writer
            .write_all(head.as_bytes())
            .and_then(|_| writer.write_all(text.as_bytes()))
            .is_err()
        {
            return;
        }
    }
}

pub fn write_jsonl(path: &std::path::Path, samples: &[LogSample]) {
    logreason::model::save_dataset(path, samples).unwrap();
}
