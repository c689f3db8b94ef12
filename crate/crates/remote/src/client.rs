use crate::{b64_decode, b64_encode};
use clicksim_core::codec::{decode_mask_png, encode_image_png};
use clicksim_core::image::{overlay, Image, PALETTE};
use clicksim_core::policy::{Policy, PolicyError, PolicyView};
use clicksim_core::records::{ActRequest, ActResponse, ActTurn, PredictRequest, PredictResponse};
use clicksim_core::segment::{
    Candidate, PriorHandle, PromptSet, SegResult, Segmenter, SegmenterError,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::time::Duration;

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_secs(5))
        .timeout(Duration::from_secs(60))
        .build()
}

enum CallError {
    /// Could not reach the endpoint or read its bytes.
    Transport(String),
    /// Reached it, but the exchange broke the protocol.
    Protocol { message: String, payload: Option<String> },
}

fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    req: &Req,
) -> Result<Resp, CallError> {
    let response = match agent.post(url).send_json(req) {
        Ok(r) => r,
        // A served non-200 is a protocol error; only unreachable/unreadable
        // endpoints are transport errors.
        Err(ureq::Error::Status(code, resp)) => {
            return Err(CallError::Protocol {
                message: format!("HTTP status {code} from {url}"),
                payload: resp.into_string().ok(),
            })
        }
        Err(ureq::Error::Transport(t)) => return Err(CallError::Transport(t.to_string())),
    };
    let body = response
        .into_string()
        .map_err(|e| CallError::Transport(format!("reading response body: {e}")))?;
    serde_json::from_str(&body).map_err(|e| CallError::Protocol {
        message: format!("malformed response: {e}"),
        payload: Some(body),
    })
}

/// Client side of POST {endpoint}/predict. The prior handle it returns is
/// tagged with this client's kind; the payload inside is the server's,
/// verbatim, and goes back out untouched on the next call.
pub struct RemoteSegmenter {
    predict_url: String,
    agent: ureq::Agent,
}

impl RemoteSegmenter {
    pub fn new(endpoint: &str) -> Self {
        let base = endpoint.trim_end_matches('/');
        RemoteSegmenter { predict_url: format!("{base}/predict"), agent: agent() }
    }
}

fn protocol(message: String, payload: Option<String>) -> SegmenterError {
    SegmenterError::Protocol { message, payload }
}

impl Segmenter for RemoteSegmenter {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn predict(&self, image: &Image, prompts: &PromptSet) -> Result<SegResult, SegmenterError> {
        let req = PredictRequest {
            image_png_b64: b64_encode(&encode_image_png(image)),
            clicks: prompts.clicks.clone(),
            prior_b64: prompts.prior.as_ref().map(|p| b64_encode(&p.payload)),
        };
        let resp: PredictResponse =
            post_json(&self.agent, &self.predict_url, &req).map_err(|e| match e {
                CallError::Transport(message) => SegmenterError::Transport { message, payload: None },
                CallError::Protocol { message, payload } => protocol(message, payload),
            })?;
        if resp.candidates.is_empty() {
            return Err(SegmenterError::NoCandidates);
        }
        let candidates = resp
            .candidates
            .iter()
            .map(|c| {
                let bytes = b64_decode(&c.mask_png_b64)
                    .map_err(|e| protocol(format!("candidate mask is not base64: {e}"), None))?;
                let mask = decode_mask_png(&bytes)
                    .map_err(|e| protocol(format!("candidate mask PNG: {e}"), None))?;
                if mask.width() != image.width() || mask.height() != image.height() {
                    return Err(protocol(
                        format!(
                            "candidate mask is {}x{}, image is {}x{}",
                            mask.width(),
                            mask.height(),
                            image.width(),
                            image.height()
                        ),
                        None,
                    ));
                }
                Ok(Candidate { mask, score: c.score })
            })
            .collect::<Result<Vec<_>, SegmenterError>>()?;
        let payload = b64_decode(&resp.prior_b64)
            .map_err(|e| protocol(format!("prior is not base64: {e}"), None))?;
        Ok(SegResult { candidates, prior: PriorHandle { tag: self.kind().to_string(), payload } })
    }
}

/// Client side of POST {endpoint}/act: ships the question, the transcript
/// so far, and the current observation; returns the server's raw turn text
/// unparsed (the environment is the validator).
pub struct RemotePolicy {
    act_url: String,
    overlay_alpha: f64,
    agent: ureq::Agent,
}

impl RemotePolicy {
    pub fn new(endpoint: &str, overlay_alpha: f64) -> Self {
        let base = endpoint.trim_end_matches('/');
        RemotePolicy { act_url: format!("{base}/act"), overlay_alpha, agent: agent() }
    }
}

impl Policy for RemotePolicy {
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError> {
        // Past observations are not stored on steps; re-blend them from the
        // recorded masks. Single-target episodes only, which is all the
        // built-in flows produce.
        let base = view.image.promote_rgb();
        let transcript = view
            .steps
            .iter()
            .map(|s| {
                let obs = overlay(&base, &s.mask, self.overlay_alpha, PALETTE[0])
                    .map_err(|e| PolicyError(format!("rebuilding observation: {e}")))?;
                Ok(ActTurn {
                    think: s.think.clone(),
                    action_raw: s.raw.clone(),
                    observation_png_b64: b64_encode(&encode_image_png(&obs)),
                })
            })
            .collect::<Result<Vec<_>, PolicyError>>()?;
        let req = ActRequest {
            question: view.question.to_string(),
            transcript,
            observation_png_b64: b64_encode(&encode_image_png(view.observation)),
        };
        let resp: ActResponse = post_json(&self.agent, &self.act_url, &req).map_err(|e| match e {
            CallError::Transport(m) => PolicyError(format!("transport: {m}")),
            CallError::Protocol { message, .. } => PolicyError(message),
        })?;
        Ok(resp.output)
    }
}
