use crate::{b64_decode, b64_encode};
use clicksim_core::codec::{decode_image_png, encode_mask_png};
use clicksim_core::records::{ActRequest, ActResponse, PredictCandidate, PredictRequest, PredictResponse};
use clicksim_core::segment::{PriorHandle, PromptSet, Segmenter};
use std::sync::Arc;
use std::thread::JoinHandle;
use thiserror::Error;
use tiny_http::{Header, Method, Response, Server};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind mock server: {0}")]
    Bind(String),
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid");
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn error_body(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn read_body(request: &mut tiny_http::Request) -> Result<String, (u16, String)> {
    let mut body = String::new();
    request
        .as_reader()
        .read_to_string(&mut body)
        .map_err(|e| (400, format!("unreadable body: {e}")))?;
    Ok(body)
}

fn handle_predict(inner: &dyn Segmenter, body: &str) -> Result<String, (u16, String)> {
    let req: PredictRequest =
        serde_json::from_str(body).map_err(|e| (400, format!("bad request: {e}")))?;
    let image_bytes =
        b64_decode(&req.image_png_b64).map_err(|e| (400, format!("image is not base64: {e}")))?;
    let image =
        decode_image_png(&image_bytes).map_err(|e| (400, format!("image PNG: {e}")))?;
    // The wire carries no prior tag; incoming priors are re-tagged for the
    // wrapped segmenter, which originated them on the previous call.
    let prior = match &req.prior_b64 {
        Some(b64) => Some(PriorHandle {
            tag: inner.kind().to_string(),
            payload: b64_decode(b64).map_err(|e| (400, format!("prior is not base64: {e}")))?,
        }),
        None => None,
    };
    let prompts = PromptSet { clicks: req.clicks, prior };
    let result =
        inner.predict(&image, &prompts).map_err(|e| (422, format!("segmenter: {e}")))?;
    let resp = PredictResponse {
        candidates: result
            .candidates
            .iter()
            .map(|c| PredictCandidate {
                mask_png_b64: b64_encode(&encode_mask_png(&c.mask)),
                score: c.score,
            })
            .collect(),
        prior_b64: b64_encode(&result.prior.payload),
    };
    Ok(serde_json::to_string(&resp).expect("response serializes"))
}

fn spawn_route<F>(server: Arc<Server>, route: &'static str, mut handle: F) -> JoinHandle<()>
where
    F: FnMut(&str) -> Result<String, (u16, String)> + Send + 'static,
{
    std::thread::spawn(move || {
        for mut request in server.incoming_requests() {
            let outcome = if *request.method() != Method::Post {
                Err((405, "POST only".to_string()))
            } else if request.url() != route {
                Err((404, format!("no route {}", request.url())))
            } else {
                read_body(&mut request).and_then(|body| handle(&body))
            };
            let response = match outcome {
                Ok(body) => json_response(200, body),
                Err((status, message)) => json_response(status, error_body(&message)),
            };
            // A client that hung up mid-response is its own problem.
            let _ = request.respond(response);
        }
    })
}

fn bind() -> Result<(Arc<Server>, String), ServeError> {
    bind_port(0)
}

fn bind_port(port: u16) -> Result<(Arc<Server>, String), ServeError> {
    let server =
        Server::http(("127.0.0.1", port)).map_err(|e| ServeError::Bind(e.to_string()))?;
    let addr = server.server_addr().to_ip().expect("tcp listener has an ip");
    Ok((Arc::new(server), format!("http://{addr}")))
}

/// Serves any in-process segmenter at POST /predict on a loopback port.
/// Dropping the handle stops the server; `serve_forever` keeps it running
/// for CLI use.
pub struct MockSegmenterServer {
    server: Arc<Server>,
    url: String,
    worker: Option<JoinHandle<()>>,
}

impl MockSegmenterServer {
    /// Port 0 binds an ephemeral port; read the result from `url()`.
    pub fn start(
        inner: Box<dyn Segmenter + Send + Sync>,
        port: u16,
    ) -> Result<Self, ServeError> {
        let (server, url) = bind_port(port)?;
        let worker = spawn_route(server.clone(), "/predict", move |body| {
            handle_predict(inner.as_ref(), body)
        });
        Ok(MockSegmenterServer { server, url, worker: Some(worker) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks until the server thread exits, which it does not do on its
    /// own; this is the tail call of the serve subcommand.
    pub fn serve_forever(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockSegmenterServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Serves a turn-producing function at POST /act: the loopback stand-in for
/// a model server driving the environment remotely.
pub struct MockPolicyServer {
    server: Arc<Server>,
    url: String,
    worker: Option<JoinHandle<()>>,
}

impl MockPolicyServer {
    pub fn start<F>(mut produce: F) -> Result<Self, ServeError>
    where
        F: FnMut(&ActRequest) -> String + Send + 'static,
    {
        let (server, url) = bind()?;
        let worker = spawn_route(server.clone(), "/act", move |body| {
            let req: ActRequest =
                serde_json::from_str(body).map_err(|e| (400, format!("bad request: {e}")))?;
            let resp = ActResponse { output: produce(&req) };
            Ok(serde_json::to_string(&resp).expect("response serializes"))
        });
        Ok(MockPolicyServer { server, url, worker: Some(worker) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for MockPolicyServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
