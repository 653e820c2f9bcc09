use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Response, Server};

use super::protocol::{ClassifyRequest, ClassifyResponse, InfoResponse, CLASSIFY_PATH, INFO_PATH};
use super::Classifier;

type Handler = dyn Fn(&str, &str, &str) -> (u16, String) + Send + Sync;

/// A local HTTP endpoint speaking the classification protocol.
///
/// Binds an ephemeral port on 127.0.0.1 and serves on a background thread
/// until dropped. Useful for exercising remote oracles without a real model.
pub struct MockServer {
    server: Arc<Server>,
    addr: SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Serves `classifier` under the standard protocol paths.
    pub fn start(classifier: impl Classifier + 'static) -> std::io::Result<Self> {
        let classifier = Arc::new(classifier);
        Self::start_raw(move |method, path, body| protocol_response(&*classifier, method, path, body))
    }

    /// Serves an arbitrary `(method, path, body) -> (status, body)` handler.
    pub fn start_raw(
        handler: impl Fn(&str, &str, &str) -> (u16, String) + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = server.clone();
        let thread = std::thread::spawn(move || {
            for mut request in worker.incoming_requests() {
                let mut body = String::new();
                let (status, text) = match request.as_reader().read_to_string(&mut body) {
                    Ok(_) => handler(request.method().as_str(), request.url(), &body),
                    Err(e) => (400, format!("{{\"error\":\"{e}\"}}")),
                };
                let header = Header::from_bytes("Content-Type", "application/json")
                    .expect("static header is valid");
                let _ = request.respond(
                    Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header),
                );
            }
        });
        Ok(Self {
            server,
            addr,
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn error_body(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

fn protocol_response(classifier: &dyn Classifier, method: &str, path: &str, body: &str) -> (u16, String) {
    match (method, path) {
        (m, INFO_PATH) if m == Method::Get.as_str() => match classifier.num_classes() {
            Ok(n) => (
                200,
                serde_json::to_string(&InfoResponse {
                    num_classes: n as i64,
                })
                .expect("serializable"),
            ),
            Err(e) => (500, error_body(e)),
        },
        (m, CLASSIFY_PATH) if m == Method::Post.as_str() => {
            let req: ClassifyRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return (400, error_body(e)),
            };
            let len: usize = req.shape.iter().product();
            if req.shape.is_empty() || req.samples.iter().any(|s| s.len() != len) {
                return (400, error_body("sample length does not match shape"));
            }
            let rows: Vec<&[f32]> = req.samples.iter().map(Vec::as_slice).collect();
            match classifier.classify(&req.shape, &rows) {
                Ok(labels) => (
                    200,
                    serde_json::to_string(&ClassifyResponse { labels }).expect("serializable"),
                ),
                Err(e) => (400, error_body(e)),
            }
        }
        _ => (404, error_body("not found")),
    }
}
