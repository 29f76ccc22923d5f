//! Backend selection shared by the CLI and the HTTP service.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use screencoder_core::backend::HttpEndpoint;
use screencoder_core::generation::{GenerationBackend, HttpGenerationBackend, MockGenerationBackend};
use screencoder_core::grounding::{GroundingBackend, HttpGroundingBackend, MockGroundingBackend};
use screencoder_core::pipeline::Backends;
use thiserror::Error;

pub const GROUNDING_URL_VAR: &str = "SCREENCODER_GROUNDING_URL";
pub const GROUNDING_KEY_VAR: &str = "SCREENCODER_GROUNDING_API_KEY";
pub const GENERATION_URL_VAR: &str = "SCREENCODER_GENERATION_URL";
pub const GENERATION_KEY_VAR: &str = "SCREENCODER_GENERATION_API_KEY";
pub const TIMEOUT_VAR: &str = "SCREENCODER_TIMEOUT_SECS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum BackendKind {
    /// Fixture-driven; labels and nodes without fixtures get empty answers
    /// and template fragments.
    #[default]
    Mock,
    /// Remote JSON endpoints configured through environment variables.
    Http,
}

#[derive(Debug, Clone, Default)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub grounding_fixture: Option<PathBuf>,
    pub generation_fixture: Option<PathBuf>,
    pub grounding_url: Option<String>,
    pub grounding_key: Option<String>,
    pub generation_url: Option<String>,
    pub generation_key: Option<String>,
    pub timeout: Option<Duration>,
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{0} must be set for the http backend")]
    MissingVar(&'static str),
    #[error("{var}: {message}")]
    InvalidVar { var: &'static str, message: String },
    #[error(transparent)]
    Fixture(#[from] screencoder_core::backend::BackendError),
}

impl BackendSettings {
    /// Fills the endpoint fields from the process environment.
    pub fn with_env(mut self) -> Result<Self, SetupError> {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        self.grounding_url = self.grounding_url.or_else(|| var(GROUNDING_URL_VAR));
        self.grounding_key = self.grounding_key.or_else(|| var(GROUNDING_KEY_VAR));
        self.generation_url = self.generation_url.or_else(|| var(GENERATION_URL_VAR));
        self.generation_key = self.generation_key.or_else(|| var(GENERATION_KEY_VAR));
        if self.timeout.is_none() {
            if let Some(v) = var(TIMEOUT_VAR) {
                let secs: u64 = v.parse().map_err(|e: std::num::ParseIntError| SetupError::InvalidVar {
                    var: TIMEOUT_VAR,
                    message: e.to_string(),
                })?;
                self.timeout = Some(Duration::from_secs(secs));
            }
        }
        Ok(self)
    }
}

/// Owned backend pair; `borrow` gives the pipeline view.
#[derive(Clone)]
pub struct BackendSet {
    pub grounding: Arc<dyn GroundingBackend>,
    pub generation: Arc<dyn GenerationBackend>,
}

impl BackendSet {
    pub fn borrow(&self) -> Backends<'_> {
        Backends {
            grounding: self.grounding.as_ref(),
            generation: self.generation.as_ref(),
        }
    }
}

pub fn build(settings: &BackendSettings) -> Result<BackendSet, SetupError> {
    match settings.kind {
        BackendKind::Mock => {
            let grounding = match &settings.grounding_fixture {
                Some(p) => MockGroundingBackend::load(p)?,
                None => MockGroundingBackend::new(),
            };
            let generation = match &settings.generation_fixture {
                Some(p) => MockGenerationBackend::load(p)?,
                None => MockGenerationBackend::new(),
            };
            Ok(BackendSet {
                grounding: Arc::new(grounding),
                generation: Arc::new(generation),
            })
        }
        BackendKind::Http => {
            let endpoint = |url: &Option<String>, key: &Option<String>, var| {
                let url = url.clone().ok_or(SetupError::MissingVar(var))?;
                let mut e = HttpEndpoint::new(url).with_api_key(key.clone());
                if let Some(t) = settings.timeout {
                    e.timeout = t;
                }
                Ok::<_, SetupError>(e)
            };
            Ok(BackendSet {
                grounding: Arc::new(HttpGroundingBackend::new(endpoint(
                    &settings.grounding_url,
                    &settings.grounding_key,
                    GROUNDING_URL_VAR,
                )?)),
                generation: Arc::new(HttpGenerationBackend::new(endpoint(
                    &settings.generation_url,
                    &settings.generation_key,
                    GENERATION_URL_VAR,
                )?)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_requires_endpoints() {
        let s = BackendSettings {
            kind: BackendKind::Http,
            grounding_url: Some("http://127.0.0.1:9/g".into()),
            ..BackendSettings::default()
        };
        assert!(matches!(build(&s), Err(SetupError::MissingVar(GENERATION_URL_VAR))));
        let s = BackendSettings {
            generation_url: Some("http://127.0.0.1:9/c".into()),
            ..s
        };
        let set = build(&s).unwrap();
        assert_eq!(set.grounding.id(), "http:http://127.0.0.1:9/g");
    }

    #[test]
    fn mock_without_fixtures() {
        let set = build(&BackendSettings::default()).unwrap();
        assert_eq!((set.grounding.id(), set.generation.id()), ("mock".into(), "mock".into()));
    }
}
