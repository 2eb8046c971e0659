//! Classifier inputs: document composition, preprocessing, tf-idf
//! vectorization and minority-class oversampling.

mod preprocess;
mod smote;
mod tfidf;

pub use preprocess::{preprocess, Preprocessor};
pub use smote::{oversample, Oversampled, SyntheticOrigin};
pub use tfidf::{fit_transform, FeatureMatrix, SparseRow, TfidfConfig, VectorSpace};

use serde::{Deserialize, Serialize};

/// Classifier input text for one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub post_id: String,
    pub text: String,
    pub label: Option<usize>,
}

impl Document {
    /// Joins post content, thread title and board title with single spaces,
    /// in that order.
    pub fn compose(
        post_id: impl Into<String>,
        content: &str,
        thread_title: &str,
        board_title: &str,
        label: Option<usize>,
    ) -> Self {
        Document {
            post_id: post_id.into(),
            text: [content, thread_title, board_title].join(" "),
            label,
        }
    }
}
