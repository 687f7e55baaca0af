use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CandidateDistribution, RoleDistribution, Scorer, ScorerError};
use crate::instances::{BioLabel, MarkedInstance, TaggingInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub batch_size: usize,
    /// Total attempts per batch, including the first.
    pub max_attempts: u32,
    /// Delay before the first retry; doubled on every further retry.
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080".to_string(),
            timeout_ms: 30_000,
            batch_size: 32,
            max_attempts: 4,
            backoff_ms: 200,
        }
    }
}

/// Client for the `/v1/tag`, `/v1/role` and `/v1/candidate` endpoints.
/// The underlying agent pools connections and is shared across threads.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    config: RemoteConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireInstance<'a> {
    id: &'a str,
    tokens: &'a [String],
}

#[derive(Serialize)]
struct WireRequest<'a> {
    instances: Vec<WireInstance<'a>>,
}

#[derive(Deserialize)]
struct WireResponse<T> {
    results: Vec<T>,
}

#[derive(Deserialize)]
struct TagResult {
    id: String,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct ProbResult<P> {
    id: String,
    probs: P,
}

#[derive(Deserialize)]
struct WireError {
    error: String,
}

enum Failure {
    Retry(String),
    Fatal(ScorerError),
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self, String> {
        if config.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if config.max_attempts == 0 {
            return Err("max_attempts must be positive".into());
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteScorer { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn attempt<T: DeserializeOwned>(&self, url: &str, body: &str) -> Result<WireResponse<T>, Failure> {
        let mut response = self
            .agent
            .post(url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Failure::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| {
                Failure::Fatal(ScorerError::ProtocolViolation(format!("malformed response: {e}")))
            }),
            400 => {
                let reason = serde_json::from_str::<WireError>(&text)
                    .map(|e| e.error)
                    .unwrap_or(text);
                Err(Failure::Fatal(ScorerError::ProtocolViolation(format!(
                    "request rejected: {reason}"
                ))))
            }
            408 | 429 | 500..=599 => Err(Failure::Retry(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(ScorerError::ProtocolViolation(format!(
                "unexpected HTTP status {status}"
            )))),
        }
    }

    /// Posts one batch, retrying transport failures with exponential backoff.
    fn post<T: DeserializeOwned>(
        &self,
        path: &str,
        batch: &[(&str, &[String])],
    ) -> Result<Vec<T>, ScorerError> {
        let request = WireRequest {
            instances: batch
                .iter()
                .map(|(id, tokens)| WireInstance { id, tokens })
                .collect(),
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let url = self.url(path);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt::<T>(&url, &body) {
                Ok(response) => return Ok(response.results),
                Err(Failure::Fatal(err)) => return Err(err),
                Err(Failure::Retry(reason)) => {
                    log::warn!("scorer retry url={url} attempt={attempt} reason={reason:?}");
                    last = reason;
                    if attempt < self.config.max_attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(ScorerError::Unavailable {
            endpoint: url,
            attempts: self.config.max_attempts,
            reason: last,
        })
    }

    fn run<T: DeserializeOwned, R>(
        &self,
        path: &str,
        items: &[(&str, &[String])],
        mut convert: impl FnMut(usize, T) -> Result<(String, R), ScorerError>,
    ) -> Result<Vec<R>, ScorerError> {
        let mut out = Vec::with_capacity(items.len());
        for (b, chunk) in items.chunks(self.config.batch_size).enumerate() {
            let results: Vec<T> = self.post(path, chunk)?;
            if results.len() != chunk.len() {
                return Err(ScorerError::ProtocolViolation(format!(
                    "{path}: {} results for {} instances",
                    results.len(),
                    chunk.len()
                )));
            }
            for (k, (result, (id, _))) in results.into_iter().zip(chunk).enumerate() {
                let (got, value) = convert(b * self.config.batch_size + k, result)?;
                if got != *id {
                    return Err(ScorerError::ProtocolViolation(format!(
                        "{path}: expected id {id:?}, got {got:?}"
                    )));
                }
                out.push(value);
            }
        }
        Ok(out)
    }
}

fn marked_items(instances: &[MarkedInstance]) -> Vec<(&str, &[String])> {
    instances
        .iter()
        .map(|i| (i.id.as_str(), i.tokens.as_slice()))
        .collect()
}

impl Scorer for RemoteScorer {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
        let items: Vec<(&str, &[String])> = instances
            .iter()
            .map(|i| (i.id.as_str(), i.tokens.as_slice()))
            .collect();
        self.run("/v1/tag", &items, |i, r: TagResult| {
            let expected = instances[i].tokens.len();
            if r.labels.len() != expected {
                return Err(ScorerError::ProtocolViolation(format!(
                    "/v1/tag: {} labels for {expected} tokens in {}",
                    r.labels.len(),
                    r.id
                )));
            }
            let labels = r
                .labels
                .iter()
                .map(|l| l.parse::<BioLabel>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ScorerError::ProtocolViolation(format!("/v1/tag: {e}")))?;
            Ok((r.id, labels))
        })
    }

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
        self.run(
            "/v1/role",
            &marked_items(instances),
            |_, r: ProbResult<RoleDistribution>| {
                r.probs.validate()?;
                Ok((r.id, r.probs))
            },
        )
    }

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError> {
        self.run(
            "/v1/candidate",
            &marked_items(instances),
            |_, r: ProbResult<CandidateDistribution>| {
                r.probs.validate()?;
                Ok((r.id, r.probs))
            },
        )
    }
}


#[cfg(test)]
mod tests {
    use std::sync::atomic::Ordering;

    use super::stub::{echo_probs, serve};
    use super::*;
    use crate::instances::{Anchor, AnchorKind, InstanceKind, Provenance, RoleLabel};
    use crate::standoff::Span;

    fn instance(id: &str) -> MarkedInstance {
        let anchor = |id: &str| Anchor {
            id: id.into(),
            kind: AnchorKind::Entity,
            span: Span::new(0, 1),
        };
        MarkedInstance {
            id: id.to_string(),
            kind: InstanceKind::Role,
            doc_id: "d".into(),
            tokens: vec!["#".into(), "binds".into(), "#".into()],
            markers: Vec::new(),
            label: None,
            provenance: Provenance {
                trigger: anchor("T1"),
                participants: vec![anchor("T2")],
                non_participants: Vec::new(),
            },
        }
    }

    fn scorer(url: &str, batch_size: usize, max_attempts: u32) -> RemoteScorer {
        RemoteScorer::new(RemoteConfig {
            endpoint: url.to_string(),
            timeout_ms: 2_000,
            batch_size,
            max_attempts,
            backoff_ms: 1,
        })
        .unwrap()
    }

    #[test]
    fn healthy_service_batches_in_order() {
        let stub = serve(|_, path, body| {
            assert_eq!(path, "/v1/role");
            (200, echo_probs(body, r#"{"Theme":0.7,"Cause":0.2,"None":0.1}"#))
        });
        let s = scorer(&stub.url, 2, 1);
        let instances: Vec<_> = (0..5).map(|i| instance(&format!("i{i}"))).collect();
        let out = s.classify_roles(&instances).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|d| d.decide() == RoleLabel::Theme));
        assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unnormalized_response_is_a_protocol_violation() {
        let stub = serve(|_, _, body| (200, echo_probs(body, r#"{"valid":0.4,"invalid":0.4}"#)));
        let err = scorer(&stub.url, 8, 3)
            .classify_candidates(&[instance("a")])
            .unwrap_err();
        assert!(matches!(err, ScorerError::ProtocolViolation(_)), "{err}");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transient_failures_are_retried() {
        let stub = serve(|n, _, body| {
            if n < 3 {
                (503, "{}".to_string())
            } else {
                (200, echo_probs(body, r#"{"valid":0.9,"invalid":0.1}"#))
            }
        });
        let out = scorer(&stub.url, 8, 4)
            .classify_candidates(&[instance("a")])
            .unwrap();
        assert_eq!(out[0].valid, 0.9);
        assert_eq!(stub.hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn exhausted_retries_report_unavailable() {
        let stub = serve(|_, _, _| (500, "{}".to_string()));
        let err = scorer(&stub.url, 8, 3)
            .classify_candidates(&[instance("a")])
            .unwrap_err();
        assert!(
            matches!(err, ScorerError::Unavailable { attempts: 3, .. }),
            "{err}"
        );
        assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn bad_request_is_not_retried() {
        let stub = serve(|_, _, _| (400, r#"{"error":"tokens missing"}"#.to_string()));
        let err = scorer(&stub.url, 8, 4)
            .classify_roles(&[instance("a")])
            .unwrap_err();
        assert!(err.to_string().contains("tokens missing"), "{err}");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn mismatched_ids_and_bad_labels_are_rejected() {
        let stub = serve(|_, _, _| {
            (
                200,
                r#"{"results":[{"id":"zzz","probs":{"valid":1,"invalid":0}}]}"#.into(),
            )
        });
        let err = scorer(&stub.url, 8, 1)
            .classify_candidates(&[instance("a")])
            .unwrap_err();
        assert!(matches!(err, ScorerError::ProtocolViolation(_)));

        let stub = serve(|_, _, _| {
            (
                200,
                r#"{"results":[{"id":"d:s0","labels":["O","B-Nope"]}]}"#.into(),
            )
        });
        let tagging = TaggingInstance {
            id: "d:s0".into(),
            doc_id: "d".into(),
            sentence: 0,
            tokens: vec!["a".into(), "b".into()],
            offsets: vec![Span::new(0, 1), Span::new(2, 3)],
            masked: vec![false, false],
            labels: None,
        };
        assert!(scorer(&stub.url, 8, 1).tag(&[tagging]).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        let err = scorer(&url, 8, 2).classify_roles(&[instance("a")]).unwrap_err();
        assert!(matches!(err, ScorerError::Unavailable { .. }), "{err}");
    }
}
