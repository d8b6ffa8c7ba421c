use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub delay: Duration,
}

impl Reply {
    pub fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        Reply {
            status,
            headers: vec![("Content-Type".into(), content_type.into())],
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn html(body: impl Into<String>) -> Self {
        Reply::new(200, "text/html; charset=utf-8", body.into())
    }

    pub fn text(body: impl Into<String>) -> Self {
        Reply::new(200, "text/plain", body.into())
    }

    pub fn xml(body: impl Into<Vec<u8>>) -> Self {
        Reply::new(200, "application/xml", body)
    }

    pub fn json(status: u16, body: impl Into<String>) -> Self {
        Reply::new(status, "application/json", body.into())
    }

    pub fn not_found() -> Self {
        Reply::new(404, "text/plain", "not found")
    }

    pub fn redirect(status: u16, location: &str) -> Self {
        Reply::new(status, "text/plain", "").with_header("Location", location)
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    /// Path and query, as sent.
    pub path: String,
    pub body: Vec<u8>,
    pub at: Instant,
}

type Handler = dyn Fn(&RecordedRequest) -> Reply + Send + Sync;

/// HTTP/1.1 server on an ephemeral local port. Every request is recorded
/// and answered on its own thread by the handler.
pub struct TestServer {
    server: Arc<Server>,
    port: u16,
    log: Arc<Mutex<Vec<RecordedRequest>>>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(handler: impl Fn(&RecordedRequest) -> Reply + Send + Sync + 'static) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind local port"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let (server, log, stop) = (server.clone(), log.clone(), stop.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let mut req = match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(r)) => r,
                        Ok(None) => continue,
                        Err(_) => break,
                    };
                    let (log, handler) = (log.clone(), handler.clone());
                    std::thread::spawn(move || {
                        let mut body = Vec::new();
                        let _ = req.as_reader().read_to_end(&mut body);
                        let rec = RecordedRequest {
                            method: req.method().to_string(),
                            path: req.url().to_string(),
                            body,
                            at: Instant::now(),
                        };
                        log.lock().unwrap().push(rec.clone());
                        let reply = handler(&rec);
                        if !reply.delay.is_zero() {
                            std::thread::sleep(reply.delay);
                        }
                        let mut resp =
                            Response::from_data(reply.body).with_status_code(reply.status);
                        for (k, v) in &reply.headers {
                            if let Ok(h) = Header::from_bytes(k.as_bytes(), v.as_bytes()) {
                                resp = resp.with_header(h);
                            }
                        }
                        let _ = req.respond(resp);
                    });
                }
            })
        };
        TestServer {
            server,
            port,
            log,
            stop,
            thread: Some(thread),
        }
    }

    /// Serves a fixed path table; anything else is a 404.
    pub fn routes(routes: HashMap<String, Reply>) -> Self {
        TestServer::start(move |req| {
            routes
                .get(&req.path)
                .or_else(|| routes.get(req.path.split('?').next().unwrap_or("")))
                .cloned()
                .unwrap_or_else(Reply::not_found)
        })
    }

    /// Answers each path with its scripted replies in turn, repeating the
    /// last one once the script runs out.
    pub fn scripted(scripts: HashMap<String, Vec<Reply>>) -> Self {
        let state: Mutex<HashMap<String, (Vec<Reply>, usize)>> =
            Mutex::new(scripts.into_iter().map(|(k, v)| (k, (v, 0))).collect());
        TestServer::start(move |req| {
            let mut state = state.lock().unwrap();
            match state.get_mut(&req.path) {
                Some((replies, i)) if !replies.is_empty() => {
                    let r = replies[(*i).min(replies.len() - 1)].clone();
                    *i += 1;
                    r
                }
                _ => Reply::not_found(),
            }
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    /// `127.0.0.1:<port>`, usable as a site host.
    pub fn host(&self) -> String {
        format!("127.0.0.1:{}", self.port)
    }

    pub fn base_url(&self) -> url::Url {
        url::Url::parse(&format!("http://{}/", self.host())).unwrap()
    }

    pub fn url(&self, path: &str) -> url::Url {
        self.base_url().join(path).unwrap()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn hits(&self, path: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.path == path)
            .count()
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
