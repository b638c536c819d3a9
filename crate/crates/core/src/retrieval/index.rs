//! In-memory BM25 inverted index for desk-scale corpora.
//!
//! Tokenization is deliberately plain: lowercase, split on any run of
//! non-alphanumeric characters, no stemming, no stopwords. Equal inputs index
//! identically everywhere, which keeps searches byte-reproducible.

use std::collections::HashMap;

use crate::types::Document;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercased alphanumeric tokens in document order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate doc_id: {0}")]
    DuplicateDocId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Postings entry: which document and how often the term occurs there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_index: usize,
    pub term_frequency: u32,
}

/// Immutable after build; concurrent searches need no locks.
#[derive(Debug)]
pub struct InvertedIndex {
    /// term → postings sorted by doc_index.
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    doc_count: usize,
    doc_table: Vec<Document>,
    id_to_index: HashMap<String, usize>,
}

/// Builds the index in a single pass over the corpus stream.
pub fn build_index(
    corpus: impl IntoIterator<Item = Document>,
) -> Result<InvertedIndex, IndexError> {
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::new();
    let mut doc_table = Vec::new();
    let mut id_to_index = HashMap::new();

    for document in corpus {
        let doc_index = doc_table.len();
        if id_to_index
            .insert(document.doc_id.clone(), doc_index)
            .is_some()
        {
            return Err(IndexError::DuplicateDocId(document.doc_id));
        }
        let tokens = tokenize(&document.text);
        doc_lengths.push(tokens.len());

        let mut counts: HashMap<String, u32> = HashMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        // Documents arrive in index order, so each postings list stays sorted.
        for (term, term_frequency) in counts {
            postings.entry(term).or_default().push(Posting {
                doc_index,
                term_frequency,
            });
        }
        doc_table.push(document);
    }

    let doc_count = doc_table.len();
    if doc_count == 0 {
        return Err(IndexError::EmptyCorpus);
    }
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_count as f64;

    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        doc_count,
        doc_table,
        id_to_index,
    })
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn distinct_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn total_postings(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    pub fn document(&self, doc_index: usize) -> &Document {
        &self.doc_table[doc_index]
    }

    pub fn document_by_id(&self, doc_id: &str) -> Option<&Document> {
        self.id_to_index.get(doc_id).map(|&i| &self.doc_table[i])
    }

    /// Term frequency of `term` in document `doc_index`, 0 when absent.
    pub fn term_frequency(&self, term: &str, doc_index: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&doc_index, |p| p.doc_index)
                    .ok()
                    .map(|i| list[i].term_frequency)
            })
            .unwrap_or(0)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Okapi BM25 for one (query, document) pair: the sum over unique query
    /// terms of idf(term) · tf-normalization, with k1 = 1.2, b = 0.75 and
    /// idf = ln((D − df + 0.5)/(df + 0.5) + 1).
    pub fn bm25_score(&self, query_terms: &[String], doc_index: usize) -> f64 {
        let unique = unique_sorted(query_terms);
        let mut score = 0.0;
        for term in unique {
            let tf = self.term_frequency(term, doc_index);
            if tf == 0 {
                continue;
            }
            let df = self.document_frequency(term);
            score += self.idf(df) * self.tf_factor(tf, self.doc_lengths[doc_index]);
        }
        score
    }

    fn idf(&self, df: usize) -> f64 {
        let d = self.doc_count as f64;
        let df = df as f64;
        ((d - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn tf_factor(&self, tf: u32, doc_length: usize) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - BM25_B + BM25_B * doc_length as f64 / self.avg_doc_length;
        tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
    }

    /// Top-k documents for a query: scores non-increasing, ties broken by
    /// ascending doc_id, zero-score documents excluded.
    pub fn search_top_k(&self, query_text: &str, k: usize) -> Vec<(usize, f64)> {
        let terms = tokenize(query_text);
        let unique = unique_sorted(&terms);
        let mut scores: HashMap<usize, f64> = HashMap::new();
        // Unique terms in sorted order keep per-document float accumulation
        // order fixed, so scores are bit-for-bit reproducible.
        for term in unique {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for posting in list {
                let contribution =
                    idf * self.tf_factor(posting.term_frequency, self.doc_lengths[posting.doc_index]);
                *scores.entry(posting.doc_index).or_insert(0.0) += contribution;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.doc_table[a.0].doc_id.cmp(&self.doc_table[b.0].doc_id))
        });
        ranked.truncate(k);
        ranked
    }
}

fn unique_sorted(terms: &[String]) -> Vec<&String> {
    let mut unique: Vec<&String> = terms.iter().collect();
    unique.sort();
    unique.dedup();
    unique
}
