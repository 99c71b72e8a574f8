use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A chat-style completion backend.
pub trait Provider {
    /// Stable label; part of the rating cache key.
    fn id(&self) -> String;
    fn complete(&self, system: &str, user: &str) -> Result<String>;
}

/// First run of ASCII digits in `reply`, required to lie in 1..=5.
pub fn parse_score(reply: &str) -> Result<u8> {
    let start = reply
        .find(|c: char| c.is_ascii_digit())
        .ok_or_else(|| Error::UnparseableRating(reply.to_string()))?;
    let digits: String = reply[start..].chars().take_while(char::is_ascii_digit).collect();
    match digits.parse::<i64>() {
        Ok(v @ 1..=5) => Ok(v as u8),
        Ok(v) => Err(Error::RatingOutOfRange(v)),
        Err(_) => Err(Error::RatingOutOfRange(i64::MAX)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityRule {
    pub keyword: String,
    pub weight: i32,
}

/// Offline scorer: finds context sentences naming the prompt's period and
/// adds the weights of the keywords they contain to a base score of 1.
/// The most severe sentence wins.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct MockProvider {
    pub rules: Vec<SeverityRule>,
    /// Returned verbatim instead of scoring; used to exercise parse failures.
    pub fixed_response: Option<String>,
    #[serde(skip)]
    calls: AtomicUsize,
}

impl Clone for MockProvider {
    fn clone(&self) -> Self {
        Self { rules: self.rules.clone(), fixed_response: self.fixed_response.clone(), calls: AtomicUsize::new(0) }
    }
}

impl MockProvider {
    pub fn new(rules: Vec<SeverityRule>) -> Self {
        Self { rules, fixed_response: None, calls: AtomicUsize::new(0) }
    }

    pub fn default_rules() -> Vec<SeverityRule> {
        ["heatwave", "storm", "bushfire", "drought", "flooding"]
            .iter()
            .map(|k| SeverityRule { keyword: k.to_string(), weight: 1 })
            .collect()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockProvider {
    fn id(&self) -> String {
        let mut rules: Vec<String> = self.rules.iter().map(|r| alloc::format!("{}:{}", r.keyword, r.weight)).collect();
        rules.sort();
        alloc::format!("offline-mock[{}]", rules.join(","))
    }

    fn complete(&self, _system: &str, user: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(r) = &self.fixed_response {
            return Ok(r.clone());
        }
        let period = user
            .lines()
            .find_map(|l| l.strip_prefix("Period:"))
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Provider("prompt has no period line".into()))?;
        let context = user.split_once("Context:").map_or("", |(_, c)| c);
        let mut best: (i32, Vec<&str>) = (0, Vec::new());
        for sentence in context.split(['.', '\n']) {
            if !sentence.contains(period) {
                continue;
            }
            let lower = sentence.to_lowercase();
            let matched: Vec<&str> = self
                .rules
                .iter()
                .filter(|r| lower.contains(r.keyword.as_str()))
                .map(|r| r.keyword.as_str())
                .collect();
            let score: i32 = self.rules.iter().filter(|r| matched.contains(&r.keyword.as_str())).map(|r| r.weight).sum();
            if score > best.0 {
                best = (score, matched);
            }
        }
        let score = (1 + best.0).clamp(1, 5);
        let why = if best.1.is_empty() {
            String::from("no severe weather reported")
        } else {
            alloc::format!("reported {}", best.1.join(", "))
        };
        Ok(alloc::format!("Rating: {score} — {why} in {period}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_score("Rating: 4 — heatwave risk elevated").unwrap(), 4);
        assert!(matches!(parse_score("7/5, extreme!"), Err(Error::RatingOutOfRange(7))));
        assert!(matches!(parse_score("0"), Err(Error::RatingOutOfRange(0))));
        assert!(matches!(parse_score("severe"), Err(Error::UnparseableRating(_))));
        assert!(matches!(parse_score("99999999999999999999999"), Err(Error::RatingOutOfRange(_))));
    }

    #[test]
    fn mock_scores_sentences_for_the_period() {
        let m = MockProvider::new(MockProvider::default_rules());
        let prompt = "Period: March 2013\nQuestion: q\nContext:\n[a#0] In March 2013 a heatwave and a storm hit. \
                      In April 2013 flooding and drought and bushfire.\n";
        let reply = m.complete("", prompt).unwrap();
        assert_eq!(parse_score(&reply).unwrap(), 3);
        assert_eq!(m.calls(), 1);
        assert!(m.complete("", "no period").is_err());
    }
}
