//! Typed client for the prediction service.

use alimony_core::api::{
    ApiError, CoefficientsResponse, HealthResponse, ImportancesResponse, PredictRequest, PredictResponse,
    SchemaDocument,
};
use alimony_core::forest::ImportanceMethod;
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with its structured error body.
    #[error("service returned {status}: {}", body.message)]
    Api { status: u16, body: ApiError },
    #[error("service returned {status} with an unreadable body")]
    Unexpected { status: u16, body: String },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Transport(e) => e.status().map(|s| s.as_u16()),
            ClientError::Api { status, .. } | ClientError::Unexpected { status, .. } => Some(*status),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlimonyClient {
    base: String,
    http: reqwest::Client,
}

impl AlimonyClient {
    /// `base_url` like `http://127.0.0.1:8080`; a trailing slash is ignored.
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base = base_url.into();
        while base.ends_with('/') {
            base.pop();
        }
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(response: Response) -> Result<T, ClientError> {
        let status = response.status();
        let bytes = response.bytes().await?;
        if status == StatusCode::OK {
            return serde_json::from_slice(&bytes).map_err(|_| ClientError::Unexpected {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        match serde_json::from_slice::<ApiError>(&bytes) {
            Ok(body) => Err(ClientError::Api {
                status: status.as_u16(),
                body,
            }),
            Err(_) => Err(ClientError::Unexpected {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    pub async fn health(&self) -> Result<HealthResponse, ClientError> {
        self.get("/health").await
    }

    pub async fn schema(&self) -> Result<SchemaDocument, ClientError> {
        self.get("/schema").await
    }

    pub async fn coefficients(&self) -> Result<CoefficientsResponse, ClientError> {
        self.get("/coefficients").await
    }

    pub async fn importances(&self, method: ImportanceMethod, top_n: usize) -> Result<ImportancesResponse, ClientError> {
        self.get(&format!("/importances?method={method}&top_n={top_n}")).await
    }

    pub async fn predict(&self, request: &PredictRequest) -> Result<PredictResponse, ClientError> {
        Self::decode(self.http.post(self.url("/predict")).json(request).send().await?).await
    }

    /// GETs `path` and returns the status and raw response bytes.
    pub async fn get_raw(&self, path: &str) -> Result<(u16, Vec<u8>), ClientError> {
        let response = self.http.get(self.url(path)).send().await?;
        let status = response.status().as_u16();
        Ok((status, response.bytes().await?.to_vec()))
    }

    /// Posts `body` verbatim and returns the status and raw response bytes.
    pub async fn predict_raw(&self, body: Vec<u8>) -> Result<(u16, Vec<u8>), ClientError> {
        let response = self
            .http
            .post(self.url("/predict"))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await?;
        let status = response.status().as_u16();
        Ok((status, response.bytes().await?.to_vec()))
    }
}
