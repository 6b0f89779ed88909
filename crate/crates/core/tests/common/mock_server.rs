//! Tiny HTTP/1.1 server for the remote backend contract. One request per
//! connection; every request is counted and its JSON body kept.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

#[derive(Clone)]
pub enum Reply {
    /// `/chat` answers with this text, `/embed` with a `dim`-vector.
    Ok { text: String, dim: usize },
    Status(u16),
}

pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<(String, Value, Option<String>)>>>,
}

impl MockServer {
    pub fn start(reply: Reply) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                handle(stream, &reply, &log);
            }
        });
        Self { url, requests }
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    /// `(path, body, authorization header)` of every request so far.
    pub fn requests(&self) -> Vec<(String, Value, Option<String>)> {
        self.requests.lock().unwrap().clone()
    }
}

fn handle(stream: TcpStream, reply: &Reply, log: &Mutex<Vec<(String, Value, Option<String>)>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut len = 0usize;
    let mut auth = None;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            match k.to_ascii_lowercase().as_str() {
                "content-length" => len = v.trim().parse().unwrap(),
                "authorization" => auth = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    log.lock().unwrap().push((path.clone(), body, auth));

    let (status, payload) = match reply {
        Reply::Status(code) => (*code, json!({"error": "mock failure"})),
        Reply::Ok { dim, .. } if path.ends_with("/embed") => {
            let v: Vec<f64> = (0..*dim).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            (200, json!({ "embedding": v }))
        }
        Reply::Ok { text, .. } => (200, json!({"choices": [{"message": {"role": "assistant", "content": text}}]})),
    };
    let payload = payload.to_string();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}
