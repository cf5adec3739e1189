//! Per-evaluation search log, serialised as line-delimited JSON.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub key: String,
    /// `None` for failed evaluations.
    pub fitness: Option<f64>,
    pub generation: u32,
    pub elapsed_s: f64,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchLog {
    pub entries: Vec<LogEntry>,
}

impl SearchLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialise"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(SearchLog { entries })
    }

    /// Best fitness so far after each entry; failures count as `+inf`.
    pub fn incumbents(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.entries
            .iter()
            .map(|e| {
                best = best.min(e.fitness.unwrap_or(f64::INFINITY));
                best
            })
            .collect()
    }

    pub fn best(&self) -> Option<&LogEntry> {
        self.entries
            .iter()
            .filter(|e| e.fitness.is_some())
            .min_by(|a, b| a.fitness.unwrap().total_cmp(&b.fitness.unwrap()).then_with(|| a.key.cmp(&b.key)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_failure() {
        let log = SearchLog {
            entries: vec![
                LogEntry { key: "{1}".into(), fitness: Some(3.5), generation: 0, elapsed_s: 1.0, strategy: "mf".into(), diagnostic: None },
                LogEntry {
                    key: "{2}".into(),
                    fitness: None,
                    generation: 1,
                    elapsed_s: 2.0,
                    strategy: "mf".into(),
                    diagnostic: Some("compile failure: x".into()),
                },
            ],
        };
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"fitness\":3.5"));
        assert!(text.lines().nth(1).unwrap().contains("\"fitness\":null"));
        assert_eq!(SearchLog::from_jsonl(&text).unwrap(), log);
        assert_eq!(log.incumbents(), [3.5, 3.5]);
    }
}
