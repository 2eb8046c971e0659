//! HTTP service that hands stratified-sample posts to annotators one at a
//! time, journals their labels, and reports live inter-annotator agreement.
//!
//! Annotators authenticate with bearer tokens listed in the config file. An
//! annotator only ever sees posts and their own progress; agreement results
//! name conflicting posts without their labels, and the labeled export
//! requires an admin token.

mod api;
mod error;
mod service;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use error::{ServiceError, ServiceResult};
pub use service::{
    AgreementView, AnnotationService, AnnotatorConfig, Conflict, NextPost, Principal, Sample, SamplePost,
    SampleSource, ServiceConfig, WriteAck,
};
pub use store::{Store, WriteOutcome};

/// Loads everything named in `config` and serves until the process stops.
pub async fn serve(config: ServiceConfig) -> ServiceResult<()> {
    let service = Arc::new(AnnotationService::from_config(&config)?);
    let app = router(service, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, app).await?;
    Ok(())
}
