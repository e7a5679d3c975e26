// SPDX-License-Identifier: Apache-2.0

//! Embedding cosine similarity and LLM-judged similarity scores.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use netreason_llm::{ChatMessage, LlmClient};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::text::tokenize;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// TF-IDF weights fitted on a document collection.
#[derive(Debug, Clone, Default)]
pub struct TfIdf {
    docs: usize,
    df: BTreeMap<String, usize>,
}

impl TfIdf {
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut t = TfIdf::default();
        for doc in corpus {
            t.docs += 1;
            for tok in tokenize(doc).into_iter().collect::<BTreeSet<_>>() {
                *t.df.entry(tok).or_insert(0) += 1;
            }
        }
        t
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1.0 + self.docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            *tf.entry(tok).or_insert(0.0) += 1.0;
        }
        tf.into_iter()
            .map(|(t, c)| {
                let w = c * self.idf(&t);
                (t, w)
            })
            .collect()
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let keys: BTreeSet<&String> = va.keys().chain(vb.keys()).collect();
        let x: Vec<f64> = keys
            .iter()
            .map(|k| va.get(*k).copied().unwrap_or(0.0))
            .collect();
        let y: Vec<f64> = keys
            .iter()
            .map(|k| vb.get(*k).copied().unwrap_or(0.0))
            .collect();
        cosine(&x, &y)
    }
}

pub enum EmbeddingProvider<'a> {
    LocalTfIdf(TfIdf),
    Remote(&'a LlmClient),
}

pub fn embed_similarity(a: &str, b: &str, provider: &EmbeddingProvider<'_>) -> Result<f64> {
    match provider {
        EmbeddingProvider::LocalTfIdf(t) => Ok(t.similarity(a, b)),
        EmbeddingProvider::Remote(client) => {
            let v = client
                .embed(&[a.to_string(), b.to_string()])
                .map_err(|e| EvalError::ProviderUnavailable(e.to_string()))?;
            match v.as_slice() {
                [x, y] if x.len() == y.len() => Ok(cosine(x, y)),
                _ => Err(EvalError::ProviderUnavailable(
                    "embedding reply has the wrong shape".into(),
                )),
            }
        }
    }
}

/// Judge prompt; `{reference}` and `{generated}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeTemplate {
    pub system: String,
    pub user: String,
}

impl Default for JudgeTemplate {
    fn default() -> Self {
        JudgeTemplate {
            system: "You are an expert hardware engineer grading circuit descriptions.".into(),
            user: "Compare the generated description of a circuit with the reference description. \
Judge how well the generated text matches the reference in interface, purpose, functionality and constraints. \
Assign a similarity score between 0 and 1, where 1 means equivalent and 0 means unrelated. \
Reply with the number only.\n\n\
Reference:\n{reference}\n\nGenerated:\n{generated}\n"
                .into(),
        }
    }
}

impl JudgeTemplate {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn messages(&self, generated: &str, reference: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(self.system.clone()),
            ChatMessage::user(
                self.user
                    .replace("{reference}", reference)
                    .replace("{generated}", generated),
            ),
        ]
    }
}

/// First decimal number in `reply`, clamped to [0, 1].
pub fn parse_score(reply: &str) -> Result<f64> {
    let bytes = reply.as_bytes();
    let start = bytes
        .iter()
        .enumerate()
        .position(|(i, b)| {
            b.is_ascii_digit() || (*b == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        })
        .ok_or_else(|| EvalError::UnparseableJudgment(reply.to_string()))?;
    let negative = start > 0 && bytes[start - 1] == b'-';
    let mut end = start;
    let mut dot = false;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || (bytes[end] == b'.' && !dot)) {
        dot |= bytes[end] == b'.';
        end += 1;
    }
    let v: f64 = reply[start..end]
        .trim_end_matches('.')
        .parse()
        .map_err(|_| EvalError::UnparseableJudgment(reply.to_string()))?;
    Ok(if negative { 0.0 } else { v.clamp(0.0, 1.0) })
}

pub fn gpt_score(
    generated: &str,
    reference: &str,
    client: &LlmClient,
    template: &JudgeTemplate,
) -> Result<f64> {
    parse_score(&client.complete(&template.messages(generated, reference))?)
}
